pub mod calibrate;
pub mod decode;
pub mod eval;
pub mod loss;
pub mod masks;
pub mod render;
pub mod shared;
pub mod warp;
