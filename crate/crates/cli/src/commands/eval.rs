//! `gatedsim eval`: depth metrics against ground truth, JSON and CSV.

use crate::commands::shared::{emit_json, load_depth_map};
use crate::runctx::{CliError, CliResult};
use gatedsim_core::io::{points_from_depth_image, read_pfm, read_points};
use gatedsim_core::metrics::{
    binned_metrics, compute_metrics, default_bin_edges, BinnedReport, DeltaConvention,
    MetricsReport,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Predicted depth PFM.
    #[arg(long, value_name = "PFM")]
    pub pred: PathBuf,
    #[arg(long, value_name = "PGM")]
    pub validity: Option<PathBuf>,
    /// Ground truth: `x y depth` text or dense PFM (non-positive = missing).
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Evaluation range in metres.
    #[arg(long, num_args = 2, default_values_t = [3.0, 80.0])]
    pub range: Vec<f64>,
    /// Also produce the distance-binned report (7 m bins by default).
    #[arg(long)]
    pub binned: bool,
    /// Custom bin edges, overriding the defaults.
    #[arg(long, num_args = 2.., value_name = "M")]
    pub edges: Option<Vec<f64>>,
    /// δᵢ convention: power (1.25^i) or multiple (1.25·i).
    #[arg(long, default_value = "power")]
    pub delta_convention: String,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub csv: Option<PathBuf>,
}

fn load_gt(path: &Path) -> Result<Vec<gatedsim_core::metrics::GroundTruthPoint>, CliError> {
    let is_pfm = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("pfm"))
        .unwrap_or(false);
    if is_pfm {
        Ok(points_from_depth_image(&read_pfm(path)?))
    } else {
        Ok(read_points(path)?)
    }
}

fn csv_row(out: &mut String, label: &str, r: &MetricsReport) {
    writeln!(
        out,
        "{label},{},{},{},{},{},{},{},{}",
        r.rmse_m, r.mae_m, r.ard, r.delta1, r.delta2, r.delta3, r.completeness, r.n_points
    )
    .unwrap();
}

fn write_csv_single(path: &Path, r: &MetricsReport) -> CliResult {
    let mut out = String::from("bin,rmse_m,mae_m,ard,delta1,delta2,delta3,completeness,n_points\n");
    csv_row(&mut out, "all", r);
    std::fs::write(path, out).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn write_csv_binned(path: &Path, report: &BinnedReport) -> CliResult {
    let mut out = String::from("bin,rmse_m,mae_m,ard,delta1,delta2,delta3,completeness,n_points\n");
    for (j, bin) in report.per_bin.iter().enumerate() {
        let label = format!(
            "[{},{})",
            report.bin_edges_m[j],
            report.bin_edges_m[j + 1]
        );
        match bin {
            Some(r) => csv_row(&mut out, &label, r),
            None => writeln!(out, "{label},,,,,,,,0").unwrap(),
        }
    }
    csv_row(&mut out, "aggregate", &report.aggregate);
    std::fs::write(path, out).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn run(args: &EvalArgs) -> CliResult {
    let pred = load_depth_map(&args.pred, args.validity.as_deref())?;
    let gt = load_gt(&args.gt)?;
    let convention = match args.delta_convention.as_str() {
        "power" => DeltaConvention::PowerOfBase,
        "multiple" => DeltaConvention::MultipleOfBase,
        other => {
            return Err(CliError::config(format!(
                "unknown delta convention '{other}' (expected 'power' or 'multiple')"
            )))
        }
    };
    let range = (args.range[0], args.range[1]);

    if args.binned {
        let edges = args.edges.clone().unwrap_or_else(default_bin_edges);
        let report = binned_metrics(&pred, &gt, &edges, convention)?;
        if let Some(csv) = &args.csv {
            write_csv_binned(csv, &report)?;
        }
        emit_json(&report, args.out.as_deref())
    } else {
        let report = compute_metrics(&pred, &gt, range, convention)?;
        if let Some(csv) = &args.csv {
            write_csv_single(csv, &report)?;
        }
        emit_json(&report, args.out.as_deref())
    }
}
