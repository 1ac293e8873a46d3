//! Stealthy secret-key capacity bounds, the covert key budget and the
//! two-phase key schedule.

use serde::{Deserialize, Serialize};

use crate::degrade::{markov_test, DEFAULT_MARKOV_TOL};
use crate::error::{Error, Result};
use crate::probcore::{conditional_mutual_information, entropy, mutual_information, CmiPattern, JointDist3};

/// All four bound components. `lower` is the larger difference term and
/// `upper` the smaller information term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SkBounds {
    /// `I(X;Y) − I(X;Z)`.
    #[serde(rename = "lowerXY")]
    pub lower_xy: f64,
    /// `I(Y;X) − I(Y;Z)`.
    #[serde(rename = "lowerYX")]
    pub lower_yx: f64,
    /// `I(X;Y)`.
    #[serde(rename = "upperMI")]
    pub upper_mi: f64,
    /// `I(X;Y|Z)`.
    #[serde(rename = "upperCMI")]
    pub upper_cmi: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn sk_bounds(j: &JointDist3) -> SkBounds {
    let ixy = mutual_information(&j.marginal_xy());
    let ixz = mutual_information(&j.marginal_xz());
    let iyz = mutual_information(&j.marginal_yz());
    let cmi = conditional_mutual_information(j, CmiPattern::XYGivenZ);
    let lower_xy = ixy - ixz;
    let lower_yx = ixy - iyz;
    SkBounds {
        lower_xy,
        lower_yx,
        upper_mi: ixy,
        upper_cmi: cmi,
        lower: lower_xy.max(lower_yx),
        upper: ixy.min(cmi),
    }
}

/// `I(X;Y) − I(X;Z)` for a triple with `X - Y - Z` Markov.
///
/// Refuses (precondition error) when the Markov test fails at `tol`, and
/// reports a numeric error if the bound endpoints disagree by more than
/// `1e-9`.
pub fn markov_capacity(j: &JointDist3, tol: f64) -> Result<f64> {
    if !markov_test(j, tol) {
        return Err(Error::Precondition(format!(
            "X - Y - Z is not Markov (I(X;Z|Y) = {:e} > {tol:e})",
            conditional_mutual_information(j, CmiPattern::XZGivenY)
        )));
    }
    let b = sk_bounds(j);
    if (b.lower - b.lower_xy).abs() > 1e-9 || (b.upper - b.lower_xy).abs() > 1e-9 {
        return Err(Error::Numeric(format!(
            "Markov bounds do not collapse: lower {} upper {} capacity {}",
            b.lower, b.upper, b.lower_xy
        )));
    }
    Ok(b.lower_xy)
}

pub fn markov_capacity_default(j: &JointDist3) -> Result<f64> {
    markov_capacity(j, DEFAULT_MARKOV_TOL)
}

/// Blocklength, slack `ξ` and the scaling value `ω_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub struct BudgetParams {
    n: u64,
    xi: f64,
    omega_n: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct BudgetRepr {
    n: u64,
    xi: f64,
    omega_n: f64,
}

impl TryFrom<BudgetRepr> for BudgetParams {
    type Error = Error;
    fn try_from(r: BudgetRepr) -> Result<Self> {
        BudgetParams::new(r.n, r.xi, r.omega_n)
    }
}

impl From<BudgetParams> for BudgetRepr {
    fn from(p: BudgetParams) -> Self {
        BudgetRepr {
            n: p.n,
            xi: p.xi,
            omega_n: p.omega_n,
        }
    }
}

impl BudgetParams {
    pub fn new(n: u64, xi: f64, omega_n: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("blocklength n must be >= 1".into()));
        }
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::Domain(format!("xi must lie in (0, 1), got {xi}")));
        }
        if !(omega_n > 0.0) || !omega_n.is_finite() {
            return Err(Error::Domain(format!("omega_n must be > 0, got {omega_n}")));
        }
        Ok(BudgetParams { n, xi, omega_n })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }

    /// Set when `ω_n √n >= n`, i.e. `ω_n` is not small at this blocklength.
    pub fn regime_warning(&self) -> Option<String> {
        let n = self.n as f64;
        (self.omega_n * n.sqrt() >= n).then(|| {
            format!(
                "omega_n * sqrt(n) = {} >= n = {}; omega_n is not in its vanishing regime",
                self.omega_n * n.sqrt(),
                self.n
            )
        })
    }
}

/// Key bits `ω_n √n [(1+ξ) dZ − (1−ξ) dY]⁺`.
pub fn covert_key_budget(d_z: f64, d_y: f64, p: &BudgetParams) -> Result<f64> {
    for (name, d) in [("dZ", d_z), ("dY", d_y)] {
        if !(d >= 0.0) {
            return Err(Error::Domain(format!(
                "{name} must be a divergence >= 0, got {d}"
            )));
        }
    }
    let gap = (1.0 + p.xi) * d_z - (1.0 - p.xi) * d_y;
    Ok(if gap > 0.0 {
        p.omega_n * (p.n as f64).sqrt() * gap
    } else {
        0.0
    })
}

/// `R_SSK = 1 + c/√n`; `c` stands in for the unspecified vanishing term.
pub fn sskg_rate_sufficient(n: u64, c: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("blocklength n must be >= 1".into()));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("c must be >= 0, got {c}")));
    }
    Ok(1.0 + c / (n as f64).sqrt())
}

/// How many key bits the stealth phase consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SpendMode {
    /// One indicator bit per discussion symbol.
    #[default]
    PerSymbol,
    /// One bit per block. Not the standard accounting; opt-in only.
    PerBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KeySchedule {
    pub phase1_key_bits: f64,
    pub phase2_key_bits: f64,
    pub total_generated_bits: f64,
    pub feasible: bool,
    pub mode: SpendMode,
}

/// Key demand of both phases against `n` times the achievable lower bound.
pub fn key_schedule(
    j: &JointDist3,
    p: &BudgetParams,
    d_z: f64,
    d_y: f64,
    mode: SpendMode,
) -> Result<KeySchedule> {
    let phase1 = match mode {
        SpendMode::PerSymbol => p.n as f64,
        SpendMode::PerBlock => 1.0,
    };
    let phase2 = covert_key_budget(d_z, d_y, p)?;
    let total = p.n as f64 * sk_bounds(j).lower.max(0.0);
    Ok(KeySchedule {
        phase1_key_bits: phase1,
        phase2_key_bits: phase2,
        total_generated_bits: total,
        feasible: total >= phase1 + phase2,
        mode,
    })
}

fn check_hu(j: &JointDist3, h_u: f64) -> Result<()> {
    let expected = (j.dims().0 as f64).log2();
    if (h_u - expected).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "H(U) = {h_u} but a uniform U over the X alphabet has {expected}"
        )));
    }
    Ok(())
}

/// `H(U) − H(X|Z)`: the per-symbol confusion rate must exceed this.
pub fn confusion_rate_threshold(j: &JointDist3, h_u: f64) -> Result<f64> {
    check_hu(j, h_u)?;
    let xz = j.marginal_xz();
    Ok(h_u - (entropy(&j.marginal_x()) - mutual_information(&xz)))
}

/// `H(U) − H(X|Y)`: cap on the per-symbol sum rate `R + R1`.
pub fn total_rate_bound(j: &JointDist3, h_u: f64) -> Result<f64> {
    check_hu(j, h_u)?;
    let xy = j.marginal_xy();
    Ok(h_u - (entropy(&j.marginal_x()) - mutual_information(&xy)))
}
