//! Gamma functions and the Nakagami-m fading law in the power domain.
//!
//! A Nakagami-m magnitude `A` with shape `m` and spread `w` has a squared
//! gain `A²` that is Gamma distributed with shape `m` and scale `w / m`, so
//! `P(A² ≤ x) = γ(m, m x / w) / Γ(m)`. Everything here works with `A²`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const SERIES_EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_TERMS: usize = 10_000;

/// Bisection cap for [`power_inverse_cdf`].
pub const INVERSE_MAX_ITER: usize = 200;
/// Relative interval width at which bisection stops.
pub const INVERSE_TOL: f64 = 1e-12;

fn lanczos_sum(s: f64) -> (f64, f64) {
    // Γ(s) for s ≥ 0.5 via Γ(s) = √(2π) t^(s-1/2) e^(-t) A(s), t = s + g - 1/2
    let z = s - 1.0;
    let mut a = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    (z + LANCZOS_G + 0.5, a)
}

/// Natural log of `Γ(s)` for `s > 0`.
pub fn ln_gamma(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("gamma function needs s > 0, got {s}")));
    }
    if s < 0.5 {
        // Γ(s) = Γ(s + 1) / s
        return Ok(ln_gamma(s + 1.0)? - s.ln());
    }
    let (t, a) = lanczos_sum(s);
    Ok(0.5 * (2.0 * std::f64::consts::PI).ln() + (s - 0.5) * t.ln() - t + a.ln())
}

/// `Γ(s) = ∫_0^∞ t^(s-1) e^(-t) dt` for `s > 0`.
pub fn gamma_fn(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("gamma function needs s > 0, got {s}")));
    }
    if s < 0.5 {
        return Ok(gamma_fn(s + 1.0)? / s);
    }
    if s > 140.0 {
        return Ok(ln_gamma(s)?.exp());
    }
    let (t, a) = lanczos_sum(s);
    Ok((2.0 * std::f64::consts::PI).sqrt() * t.powf(s - 0.5) * (-t).exp() * a)
}

fn check_incomplete(s: f64, x: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("incomplete gamma needs s > 0, got {s}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    Ok(())
}

/// Series part: `Σ x^k / (s (s+1) ... (s+k))`, so that
/// `γ(s, x) = e^(-x) x^s · series`.
fn gamma_series(s: f64, x: f64) -> Result<f64> {
    let mut ap = s;
    let mut del = 1.0 / s;
    let mut sum = del;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * SERIES_EPS {
            return Ok(sum);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete gamma series did not converge (s={s}, x={x})"
    )))
}

/// Modified Lentz continued fraction: `Γ(s, x) = e^(-x) x^s · fraction`.
fn gamma_fraction(s: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_TERMS {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < SERIES_EPS {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete gamma fraction did not converge (s={s}, x={x})"
    )))
}

/// Regularized lower incomplete gamma `P(s, x) = γ(s, x) / Γ(s)`.
pub fn regularized_lower_gamma(s: f64, x: f64) -> Result<f64> {
    check_incomplete(s, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let log_prefix = -x + s * x.ln() - ln_gamma(s)?;
    if x < s + 1.0 {
        Ok((gamma_series(s, x)? * log_prefix.exp()).min(1.0))
    } else {
        Ok((1.0 - gamma_fraction(s, x)? * log_prefix.exp()).max(0.0))
    }
}

/// Regularized upper incomplete gamma `Q(s, x) = 1 − P(s, x)`, accurate in
/// the far tail.
pub fn regularized_upper_gamma(s: f64, x: f64) -> Result<f64> {
    check_incomplete(s, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefix = -x + s * x.ln() - ln_gamma(s)?;
    if x < s + 1.0 {
        Ok((1.0 - gamma_series(s, x)? * log_prefix.exp()).max(0.0))
    } else {
        Ok((gamma_fraction(s, x)? * log_prefix.exp()).min(1.0))
    }
}

/// Lower incomplete gamma `γ(s, x) = ∫_0^x t^(s-1) e^(-t) dt`.
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    check_incomplete(s, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < s + 1.0 {
        Ok(gamma_series(s, x)? * (-x + s * x.ln()).exp())
    } else {
        let upper = if x.is_infinite() {
            0.0
        } else {
            gamma_fraction(s, x)? * (-x + s * x.ln()).exp()
        };
        Ok(gamma_fn(s)? - upper)
    }
}

/// Shape and spread of a Nakagami-m magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NakagamiRepr", into = "NakagamiRepr")]
pub struct NakagamiSpec {
    m: f64,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct NakagamiRepr {
    m: f64,
    w: f64,
}

impl TryFrom<NakagamiRepr> for NakagamiSpec {
    type Error = Error;
    fn try_from(r: NakagamiRepr) -> Result<Self> {
        NakagamiSpec::new(r.m, r.w)
    }
}

impl From<NakagamiSpec> for NakagamiRepr {
    fn from(s: NakagamiSpec) -> Self {
        NakagamiRepr { m: s.m, w: s.w }
    }
}

impl NakagamiSpec {
    pub fn new(m: f64, w: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Domain(format!("Nakagami shape must be > 0, got {m}")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!("Nakagami spread must be > 0, got {w}")));
        }
        Ok(NakagamiSpec { m, w })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn w(&self) -> f64 {
        self.w
    }
}

/// `P(A² ≤ x)`.
pub fn nakagami_power_cdf(spec: &NakagamiSpec, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    regularized_lower_gamma(spec.m, spec.m * x / spec.w).expect("validated Nakagami spec")
}

/// `P(A² > x) = 1 − γ(m, m x / w) / Γ(m)`.
pub fn nakagami_power_ccdf(spec: &NakagamiSpec, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    regularized_upper_gamma(spec.m, spec.m * x / spec.w).expect("validated Nakagami spec")
}

/// Quantile of `A²` by bracketing bisection on the CDF.
pub fn power_inverse_cdf(spec: &NakagamiSpec, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!(
            "quantile level must lie in [0, 1), got {u}"
        )));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = spec.w;
    while nakagami_power_cdf(spec, hi) < u {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numeric(format!("cannot bracket quantile {u}")));
        }
    }
    for _ in 0..INVERSE_MAX_ITER {
        if hi - lo <= INVERSE_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if nakagami_power_cdf(spec, mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One draw of `A²` by inverse transform.
pub fn sample_power<R: Rng + ?Sized>(spec: &NakagamiSpec, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    power_inverse_cdf(spec, u).expect("u drawn from [0, 1)")
}

/// A CCDF tabulated on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCcdf {
    xs: Vec<f64>,
    vals: Vec<f64>,
}

impl GridCcdf {
    pub fn new(xs: Vec<f64>, vals: Vec<f64>) -> Result<Self> {
        if xs.len() != vals.len() || xs.is_empty() {
            return Err(Error::ShapeMismatch {
                what: "CCDF grid".into(),
                expected: xs.len(),
                found: vals.len(),
            });
        }
        if xs.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(
                "CCDF grid points must be finite and nonnegative".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("CCDF grid must be strictly increasing".into()));
        }
        if vals.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("CCDF values must lie in [0, 1]".into()));
        }
        if vals.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Domain("CCDF values must be nonincreasing".into()));
        }
        Ok(GridCcdf { xs, vals })
    }

    /// Tabulates the squared-gain CCDF of `spec` at `xs`.
    pub fn nakagami(spec: &NakagamiSpec, xs: Vec<f64>) -> Result<Self> {
        let vals = xs.iter().map(|&x| nakagami_power_ccdf(spec, x)).collect();
        Self::new(xs, vals)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// `cdf`. Sorts `samples` in place.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}
