//! Dense row-major images.

use crate::{Error, Result};

/// A dense row-major image. Pixel `(x, y)` lives at index `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Intensity, depth, and coordinate images.
pub type ScalarImage = Image<f64>;
/// Mask images.
pub type BoolImage = Image<bool>;

impl<T: Clone> Image<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Image {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    /// Wraps an existing row-major buffer. Fails if the length is not `width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image buffer has {} elements, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn map<U: Clone>(&self, mut f: impl FnMut(&T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| f(v)).collect(),
        }
    }
}

impl<T> Image<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        debug_assert!(x < self.width && y < self.height);
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_size<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Errors unless `other` matches this image's dimensions.
    pub fn expect_same_size<U>(&self, other: &Image<U>, what: &'static str) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected_width: self.width,
                expected_height: self.height,
                width: other.width,
                height: other.height,
            })
        }
    }

    /// Iterates `(x, y, &value)` in row-major order.
    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % w, i / w, v))
    }
}

impl ScalarImage {
    /// Constant image of zeros.
    pub fn zeros(width: usize, height: usize) -> Self {
        Image::new(width, height, 0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl BoolImage {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &BoolImage) -> BoolImage {
        assert!(self.same_size(other));
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn or(&self, other: &BoolImage) -> BoolImage {
        assert!(self.same_size(other));
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    pub fn not(&self) -> BoolImage {
        self.map(|&b| !b)
    }
}

/// Summed-area table over `f(pixel)`, padded by one row/column of zeros, so
/// box sums over inclusive pixel rectangles are four lookups.
pub(crate) struct IntegralImage {
    width: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn build<T>(img: &Image<T>, mut f: impl FnMut(&T) -> f64) -> Self {
        let (w, h) = (img.width, img.height);
        let mut table = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0.0;
            for x in 0..w {
                row_sum += f(&img.data[y * w + x]);
                table[(y + 1) * (w + 1) + (x + 1)] = table[y * (w + 1) + (x + 1)] + row_sum;
            }
        }
        IntegralImage { width: w, table }
    }

    /// Sum over the inclusive rectangle `[x0, x1] x [y0, y1]`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let w1 = self.width + 1;
        self.table[(y1 + 1) * w1 + (x1 + 1)] + self.table[y0 * w1 + x0]
            - self.table[y0 * w1 + (x1 + 1)]
            - self.table[(y1 + 1) * w1 + x0]
    }
}

/// Deterministic fixed-order pairwise summation. Identical results regardless
/// of how the values were produced (serially or by pixel-parallel workers),
/// since the reduction tree depends only on the slice layout.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const CHUNK: usize = 64;
    if values.len() <= CHUNK {
        let mut s = 0.0;
        for &v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
