//! Degradedness of common-randomness triples.
//!
//! Three relations are decided here: physical degradedness (`X - Y - Z`
//! Markov), stochastic degradedness (`P_{Z|X} = P_{Y|X} W` for some
//! channel `W`), and the usual stochastic order between fading powers,
//! which yields stochastic degradedness of the fading source.

pub mod lp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{
    conditional_mutual_information, index_labels, Channel, CmiPattern, FiniteDist, JointDist3,
};
use crate::special::{power_inverse_cdf, GridCcdf, NakagamiSpec, INVERSE_TOL};
use lp::{minimize, LpOutcome};

pub const DEFAULT_MARKOV_TOL: f64 = 1e-10;
pub const DEFAULT_LP_TOL: f64 = 1e-8;
/// Tail mass beyond the largest point of the default order grid.
pub const ORDER_TAIL_MASS: f64 = 1e-6;
/// Quantile levels per law in the default order grid.
pub const ORDER_QUANTILES: usize = 256;
/// Slack allowed when comparing CCDF values.
pub const ORDER_SLACK: f64 = 1e-12;

/// `I(X;Z|Y) <= tol`.
pub fn markov_test(j: &JointDist3, tol: f64) -> bool {
    conditional_mutual_information(j, CmiPattern::XZGivenY) <= tol
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    Physical,
    Stochastic,
    None,
}

/// Outcome of a degradedness test.
///
/// `witness` is present for `Physical` and `Stochastic`. `residual` is the
/// largest per-input L1 factorization error of the witness, or the optimal
/// total slack of the feasibility program when no witness was accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VerdictRepr", into = "VerdictRepr")]
pub struct DegradednessVerdict {
    pub kind: VerdictKind,
    pub witness: Option<Channel>,
    pub residual: f64,
    pub tol: f64,
}

#[derive(Serialize, Deserialize)]
struct VerdictRepr {
    kind: VerdictKind,
    witness: Option<Vec<Vec<f64>>>,
    residual: f64,
    tol: f64,
}

impl TryFrom<VerdictRepr> for DegradednessVerdict {
    type Error = Error;
    fn try_from(r: VerdictRepr) -> Result<Self> {
        Ok(DegradednessVerdict {
            kind: r.kind,
            witness: r.witness.map(Channel::from_rows).transpose()?,
            residual: r.residual,
            tol: r.tol,
        })
    }
}

impl From<DegradednessVerdict> for VerdictRepr {
    fn from(v: DegradednessVerdict) -> Self {
        VerdictRepr {
            kind: v.kind,
            witness: v.witness.map(|w| w.to_rows()),
            residual: v.residual,
            tol: v.tol,
        }
    }
}

type Rows = Vec<Vec<f64>>;

/// Conditionals `P_{Y|X}` and `P_{Z|X}` restricted to inputs of positive mass.
fn positive_conditionals(j: &JointDist3) -> Result<(Rows, Rows)> {
    let (px, py_x, pz_x) = (j.marginal_x(), j.marginal_xy(), j.marginal_xz());
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    for x in 0..px.len() {
        let m = px.prob(x);
        if m > 0.0 {
            ys.push(py_x.row(x).iter().map(|p| p / m).collect());
            zs.push(pz_x.row(x).iter().map(|p| p / m).collect());
        }
    }
    if ys.is_empty() {
        return Err(Error::DegenerateMarginal("P_X has no positive mass".into()));
    }
    Ok((ys, zs))
}

/// `max_x Σ_z |P_{Z|X}(z|x) − Σ_y P_{Y|X}(y|x) W(z|y)|` over inputs of
/// positive mass.
pub fn factorization_residual(j: &JointDist3, w: &Channel) -> Result<f64> {
    let (_, ny, nz) = j.dims();
    if w.in_size() != ny || w.out_size() != nz {
        return Err(Error::ShapeMismatch {
            what: "witness channel".into(),
            expected: ny * nz,
            found: w.in_size() * w.out_size(),
        });
    }
    let (py, pz) = positive_conditionals(j)?;
    Ok(py
        .iter()
        .zip(&pz)
        .map(|(yr, zr)| {
            (0..nz)
                .map(|z| (zr[z] - (0..ny).map(|y| yr[y] * w.get(y, z)).sum::<f64>()).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max))
}

/// Searches for a channel `W` with `P_{Z|X} = P_{Y|X} W`.
///
/// Solves `min Σ (s⁺ + s⁻)` subject to `P_{Y|X} W + s⁺ − s⁻ = P_{Z|X}`,
/// rows of `W` summing to one, all variables nonnegative. Inputs with zero
/// mass are dropped. The verdict is `Stochastic` only if the extracted
/// witness itself factorizes within `tol`.
pub fn stochastic_degradedness_test(j: &JointDist3, tol: f64) -> Result<DegradednessVerdict> {
    let (py, pz) = positive_conditionals(j)?;
    let (_, ny, nz) = j.dims();
    let nx = py.len();
    let nw = ny * nz;
    let ns = nx * nz;
    let nvars = nw + 2 * ns;
    let mut a = Vec::with_capacity(ns + ny);
    let mut b = Vec::with_capacity(ns + ny);
    for x in 0..nx {
        for z in 0..nz {
            let mut row = vec![0.0; nvars];
            for y in 0..ny {
                row[y * nz + z] = py[x][y];
            }
            row[nw + x * nz + z] = 1.0;
            row[nw + ns + x * nz + z] = -1.0;
            a.push(row);
            b.push(pz[x][z]);
        }
    }
    for y in 0..ny {
        let mut row = vec![0.0; nvars];
        row[y * nz..(y + 1) * nz].iter_mut().for_each(|v| *v = 1.0);
        a.push(row);
        b.push(1.0);
    }
    let mut c = vec![0.0; nvars];
    c[nw..].iter_mut().for_each(|v| *v = 1.0);

    let sol = match minimize(&c, &a, &b, 1e-9)? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible(r) => {
            return Err(Error::Numeric(format!(
                "row-stochastic constraints reported infeasible (mass {r})"
            )))
        }
    };
    let rows: Vec<Vec<f64>> = (0..ny)
        .map(|y| {
            let r = &sol.x[y * nz..(y + 1) * nz];
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect();
    let witness = Channel::new(j.labels_y().to_vec(), j.labels_z().to_vec(), rows)?;
    let residual = factorization_residual(j, &witness)?;
    Ok(if residual <= tol {
        DegradednessVerdict {
            kind: VerdictKind::Stochastic,
            witness: Some(witness),
            residual,
            tol,
        }
    } else {
        DegradednessVerdict {
            kind: VerdictKind::None,
            witness: None,
            residual: sol.objective,
            tol,
        }
    })
}

/// `P_{Z|Y}`, with a uniform row for outputs of zero mass.
pub fn physical_witness(j: &JointDist3) -> Result<Channel> {
    let yz = j.marginal_yz();
    let nz = yz.size_b();
    let rows = (0..yz.size_a())
        .map(|y| {
            let m: f64 = yz.row(y).iter().sum();
            if m > 0.0 {
                yz.row(y).iter().map(|p| p / m).collect()
            } else {
                vec![1.0 / nz as f64; nz]
            }
        })
        .collect();
    Channel::new(j.labels_y().to_vec(), j.labels_z().to_vec(), rows)
}

/// Physical if Markov within `markov_tol`, else the stochastic test.
pub fn classify(j: &JointDist3, markov_tol: f64, lp_tol: f64) -> Result<DegradednessVerdict> {
    if markov_test(j, markov_tol) {
        let w = physical_witness(j)?;
        let residual = factorization_residual(j, &w)?;
        return Ok(DegradednessVerdict {
            kind: VerdictKind::Physical,
            witness: Some(w),
            residual,
            tol: markov_tol,
        });
    }
    stochastic_degradedness_test(j, lp_tol)
}

/// A grid point where the claimed order fails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrderViolation {
    pub x: f64,
    pub ccdf_dominated: f64,
    pub ccdf_dominating: f64,
}

/// First grid point where `b`'s CCDF falls below `a`'s.
pub fn first_order_violation(a: &GridCcdf, b: &GridCcdf) -> Result<Option<OrderViolation>> {
    if a.xs() != b.xs() {
        return Err(Error::Domain("CCDFs are tabulated on different grids".into()));
    }
    Ok(a.xs()
        .iter()
        .zip(a.vals().iter().zip(b.vals()))
        .find(|(_, (va, vb))| **vb < **va - ORDER_SLACK)
        .map(|(&x, (&va, &vb))| OrderViolation {
            x,
            ccdf_dominated: va,
            ccdf_dominating: vb,
        }))
}

/// `A <=_st B` on the grid: `B`'s CCDF is at least `A`'s everywhere.
pub fn usual_order_check(a: &GridCcdf, b: &GridCcdf) -> Result<bool> {
    Ok(first_order_violation(a, b)?.is_none())
}

/// Quantile points of both power laws, plus 0 and the point beyond which
/// both laws have at most [`ORDER_TAIL_MASS`] left.
pub fn default_order_grid(spec_x: &NakagamiSpec, spec_z: &NakagamiSpec) -> Result<Vec<f64>> {
    let mut grid = vec![0.0];
    let mut x_max: f64 = 0.0;
    for spec in [spec_x, spec_z] {
        for k in 1..=ORDER_QUANTILES {
            grid.push(power_inverse_cdf(spec, k as f64 / (ORDER_QUANTILES + 1) as f64)?);
        }
        x_max = x_max.max(power_inverse_cdf(spec, 1.0 - ORDER_TAIL_MASS)?);
    }
    grid.push(x_max);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Result of comparing two Nakagami power laws on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrderReport {
    pub holds: bool,
    pub grid_points: usize,
    pub first_violation: Option<OrderViolation>,
}

/// Whether the X-power CCDF dominates the Z-power CCDF on `grid`.
pub fn nakagami_order_report(
    spec_x: &NakagamiSpec,
    spec_z: &NakagamiSpec,
    grid: &[f64],
) -> Result<OrderReport> {
    let gx = GridCcdf::nakagami(spec_x, grid.to_vec())?;
    let gz = GridCcdf::nakagami(spec_z, grid.to_vec())?;
    let first_violation = first_order_violation(&gz, &gx)?;
    Ok(OrderReport {
        holds: first_violation.is_none(),
        grid_points: grid.len(),
        first_violation,
    })
}

pub fn nakagami_order_check(spec_x: &NakagamiSpec, spec_z: &NakagamiSpec, grid: &[f64]) -> Result<bool> {
    Ok(nakagami_order_report(spec_x, spec_z, grid)?.holds)
}

/// Powers `(F_X^{-1}(u), F_Z^{-1}(u))` drawn from a common uniform `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingPair {
    pub seed: u64,
    pub pairs: Vec<(f64, f64)>,
}

impl CouplingPair {
    pub fn dominated_fraction(&self) -> f64 {
        let d = self.pairs.iter().filter(|(ax, az)| ax >= az).count();
        d as f64 / self.pairs.len() as f64
    }
}

/// The comonotone pair at level `u`.
///
/// Under the order the exact quantiles satisfy `ax >= az`; a reversal no
/// larger than the bisection tolerance is resolved by clamping `az`.
pub fn coupled_powers(spec_x: &NakagamiSpec, spec_z: &NakagamiSpec, u: f64) -> Result<(f64, f64)> {
    let ax = power_inverse_cdf(spec_x, u)?;
    let az = power_inverse_cdf(spec_z, u)?;
    if az <= ax {
        Ok((ax, az))
    } else if az - ax <= 4.0 * INVERSE_TOL * az {
        Ok((ax, ax))
    } else {
        Err(Error::Precondition(format!(
            "quantiles at u={u} are not ordered ({ax} < {az})"
        )))
    }
}

/// `n` coupled power pairs. Requires the order on the default grid.
pub fn construct_coupling(
    spec_x: &NakagamiSpec,
    spec_z: &NakagamiSpec,
    n: usize,
    seed: u64,
) -> Result<CouplingPair> {
    if n == 0 {
        return Err(Error::Domain("coupling needs at least one pair".into()));
    }
    let report = nakagami_order_report(spec_x, spec_z, &default_order_grid(spec_x, spec_z)?)?;
    if let Some(v) = report.first_violation {
        return Err(Error::Precondition(format!(
            "X power does not dominate Z power: CCDF {} < {} at x={}",
            v.ccdf_dominating, v.ccdf_dominated, v.x
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n)
        .map(|_| coupled_powers(spec_x, spec_z, rng.random::<f64>()))
        .collect::<Result<_>>()?;
    Ok(CouplingPair { seed, pairs })
}

/// Joint law of `(U, Y', Z')` with `Y' = (Y, U⊕X)` and `Z' = (Z, U⊕X)`,
/// `⊕` being addition modulo `|X|`.
///
/// The `Y'` index is `y·|X| + f` and the `Z'` index is `z·|X| + f`.
pub fn cwtc_build(j: &JointDist3, u_dist: &FiniteDist) -> Result<JointDist3> {
    let (nx, ny, nz) = j.dims();
    if u_dist.len() != nx {
        return Err(Error::AlphabetMismatch(format!(
            "U has {} symbols but X has {nx}",
            u_dist.len()
        )));
    }
    if !u_dist.is_uniform(1e-12) {
        return Err(Error::Precondition(
            "U must be uniform over the X alphabet".into(),
        ));
    }
    let (nyp, nzp) = (ny * nx, nz * nx);
    let mut probs = vec![0.0; nx * nyp * nzp];
    for u in 0..nx {
        let pu = u_dist.prob(u);
        for x in 0..nx {
            let f = (u + x) % nx;
            for y in 0..ny {
                for z in 0..nz {
                    probs[(u * nyp + y * nx + f) * nzp + z * nx + f] += pu * j.get(x, y, z);
                }
            }
        }
    }
    let pair = |outer: &[String], k: usize| -> Vec<String> {
        outer
            .iter()
            .flat_map(|o| (0..k).map(move |f| format!("({o},{f})")))
            .collect()
    };
    JointDist3::new(
        index_labels(nx),
        pair(j.labels_y(), nx),
        pair(j.labels_z(), nx),
        probs,
    )
}

/// `I(U;Z'|Y') <= tol`.
pub fn cwtc_degraded_check(cwtc: &JointDist3, tol: f64) -> bool {
    conditional_mutual_information(cwtc, CmiPattern::XZGivenY) <= tol
}
