//! Resolved experiment configuration.
//!
//! Values are layered: built-in defaults, then the `--config` file, then
//! command-line flags. The fully resolved value is echoed with every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sskg::protocol::{ProtocolMode, DEFAULT_DELTA};
use sskg::sources::{Fade, DEFAULT_BINS};

use crate::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub bounds: Option<BoundsParams>,
    pub degrade: Option<DegradeParams>,
    pub order: Option<OrderParams>,
    pub satellite: Option<SatelliteParams>,
    pub simulate: Option<SimulateParams>,
    pub budget: Option<BudgetCfg>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Resolved<P> {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub params: P,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct BoundsParams {
    pub dist_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct DegradeParams {
    pub dist_file: Option<PathBuf>,
    pub tol: f64,
    pub markov_tol: f64,
}

impl Default for DegradeParams {
    fn default() -> Self {
        DegradeParams {
            dist_file: None,
            tol: sskg::degrade::DEFAULT_LP_TOL,
            markov_tol: sskg::degrade::DEFAULT_MARKOV_TOL,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct OrderParams {
    pub mx: Option<f64>,
    pub wx: Option<f64>,
    pub mz: Option<f64>,
    pub wz: Option<f64>,
    /// Explicit evaluation points; the quantile grid of both laws otherwise.
    pub grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct SatelliteParams {
    pub source_variance: f64,
    pub fade_x: Fade,
    pub fade_z: Fade,
    pub n: usize,
    pub bins: usize,
    /// Disjoint sample batches used for the Monte Carlo error.
    pub batches: usize,
    pub raw_csv: Option<PathBuf>,
}

impl Default for SatelliteParams {
    fn default() -> Self {
        SatelliteParams {
            source_variance: 1.0,
            fade_x: Fade::Constant(1.0),
            fade_z: Fade::Constant(1.0),
            n: 100_000,
            bins: DEFAULT_BINS,
            batches: 10,
            raw_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct SimulateParams {
    /// Distribution file of the source triple.
    pub source: Option<PathBuf>,
    /// `[p, q]` of a binary symmetric cascade, used when `source` is absent.
    pub cascade: Option<[f64; 2]>,
    pub n: Vec<usize>,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "R1")]
    pub r1: Vec<f64>,
    /// `R1` values are offsets from the confusion threshold, clamped at 0.
    pub r1_relative: bool,
    pub codebooks: usize,
    pub mode: ProtocolMode,
    pub trials: u64,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub sweep_csv: Option<PathBuf>,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            source: None,
            cascade: None,
            n: vec![2],
            r: 0.5,
            r1: vec![0.5],
            r1_relative: false,
            codebooks: 1,
            mode: ProtocolMode::Exact,
            trials: 10_000,
            delta: DEFAULT_DELTA,
            epsilon: None,
            sweep_csv: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct BudgetCfg {
    pub source: Option<PathBuf>,
    pub cascade: Option<[f64; 2]>,
    pub dz: Option<f64>,
    pub dy: Option<f64>,
    pub xi: Option<f64>,
    pub n: Option<u64>,
    pub omega: Option<f64>,
    pub c: f64,
    pub per_block: bool,
}

/// Overwrites each listed field of `$dst` with the flag value when given.
macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if let Some(v) = $src.$f.clone() { $dst.$f = v; } )*
    };
}
pub(crate) use overlay;

/// Like [`overlay`] for fields that are themselves optional.
macro_rules! overlay_opt {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}
pub(crate) use overlay_opt;

/// `name:args` fade syntax: `nakagami:M,W` or `constant:A`.
pub fn parse_fade(s: &str) -> Result<Fade, String> {
    let (kind, args) = s
        .split_once(':')
        .ok_or_else(|| format!("fade {s:?} is not of the form nakagami:M,W or constant:A"))?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("fade {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match (kind.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
        ("nakagami", [m, w]) => sskg::special::NakagamiSpec::new(*m, *w)
            .map(Fade::Nakagami)
            .map_err(|e| e.to_string()),
        ("constant", [a]) => Ok(Fade::Constant(*a)),
        _ => Err(format!(
            "fade {s:?} is not of the form nakagami:M,W or constant:A"
        )),
    }
}
