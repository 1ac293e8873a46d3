//! Finite-alphabet distributions and exact information measures.
//!
//! Every quantity is in bits. Distributions are validated when they are
//! built: entries must be finite and nonnegative and sum to one within
//! [`PROB_TOL`]. Nothing is renormalized behind the caller's back; use
//! [`FiniteDist::normalized`] when a renormalization is intended.
//!
//! Divergences follow the usual conventions: `0 log 0 = 0`, and a positive
//! mass against a zero reference yields `f64::INFINITY`.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};

/// Normalization tolerance applied at construction.
pub const PROB_TOL: f64 = 1e-12;

/// Largest alphabet produced by [`FiniteDist::iid_extend`] and
/// [`Channel::iid_extend`].
pub const MAX_EXTENDED_SIZE: usize = 1 << 24;

/// Default labels `"0", "1", ...`.
pub fn index_labels(k: usize) -> Vec<String> {
    (0..k).map(|i| i.to_string()).collect()
}

fn check_probs(what: &str, probs: &[f64]) -> Result<()> {
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidProbability {
                what: what.to_string(),
                index,
                value,
            });
        }
    }
    let sum = compensated_sum(probs);
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::NotNormalized {
            what: what.to_string(),
            sum,
            tol: PROB_TOL,
        });
    }
    Ok(())
}

/// Neumaier summation; large tensors of exact ratios must still sum to 1.
pub(crate) fn compensated_sum(v: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in v {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn check_labels(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            what: what.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Entropy of a probability vector in bits.
pub(crate) fn entropy_bits(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// `D(p || q)` in bits for vectors of equal length.
pub(crate) fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            d += pi * (pi / qi).log2();
        }
    }
    d
}

/// Distribution over a finite labelled alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FiniteDistRepr", into = "FiniteDistRepr")]
pub struct FiniteDist {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(labels: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        check_len("distribution labels", probs.len(), labels.len())?;
        if probs.is_empty() {
            return Err(Error::Domain("distribution needs at least one symbol".into()));
        }
        check_labels(&labels)?;
        check_probs("distribution", &probs)?;
        Ok(FiniteDist { labels, probs })
    }

    /// Distribution with index labels.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::new(index_labels(probs.len()), probs)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("uniform distribution over zero symbols".into()));
        }
        Self::from_probs(vec![1.0 / k as f64; k])
    }

    pub fn point_mass(k: usize, at: usize) -> Result<Self> {
        if at >= k {
            return Err(Error::Domain(format!(
                "point mass at {at} outside alphabet of size {k}"
            )));
        }
        let mut probs = vec![0.0; k];
        probs[at] = 1.0;
        Self::from_probs(probs)
    }

    /// Builds a distribution from nonnegative weights by explicit
    /// renormalization.
    pub fn normalized(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Domain(format!(
                "cannot normalize weights summing to {total}"
            )));
        }
        Self::new(labels, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Smallest positive mass.
    pub fn min_positive(&self) -> f64 {
        self.probs
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_uniform(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.probs.iter().all(|&p| (p - u).abs() <= tol)
    }

    /// Product distribution over length-`n` strings, first symbol most
    /// significant.
    pub fn iid_extend(&self, n: usize) -> Result<FiniteDist> {
        let size = checked_power(self.len(), n, "i.i.d. extension")?;
        let k = self.len();
        let sep = if self.labels.iter().all(|l| l.chars().count() == 1) {
            ""
        } else {
            ","
        };
        let mut labels = Vec::with_capacity(size);
        let mut probs = Vec::with_capacity(size);
        let mut digits = vec![0usize; n];
        for _ in 0..size {
            let mut p = 1.0;
            let mut label = String::new();
            for (pos, &d) in digits.iter().enumerate() {
                p *= self.probs[d];
                if pos > 0 {
                    label.push_str(sep);
                }
                label.push_str(&self.labels[d]);
            }
            labels.push(label);
            probs.push(p);
            increment(&mut digits, k);
        }
        if n == 0 {
            labels = vec![String::new()];
            probs = vec![1.0];
        }
        FiniteDist::new(labels, probs)
    }
}

/// `base^n`, refusing anything above [`MAX_EXTENDED_SIZE`].
pub(crate) fn checked_power(base: usize, n: usize, what: &str) -> Result<usize> {
    let mut size: u128 = 1;
    for _ in 0..n {
        size *= base as u128;
        if size > MAX_EXTENDED_SIZE as u128 {
            return Err(Error::SizeGuard {
                what: what.to_string(),
                requested: (base as u128).saturating_pow(n as u32),
                limit: MAX_EXTENDED_SIZE as u128,
            });
        }
    }
    Ok(size as usize)
}

/// Odometer increment, last digit fastest.
pub(crate) fn increment(digits: &mut [usize], base: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return;
        }
        *d = 0;
    }
}

/// Joint distribution of two variables, row-major in `(a, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointDist2Repr", into = "JointDist2Repr")]
pub struct JointDist2 {
    labels_a: Vec<String>,
    labels_b: Vec<String>,
    probs: Vec<f64>,
}

impl JointDist2 {
    pub fn new(labels_a: Vec<String>, labels_b: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        check_len("joint distribution", labels_a.len() * labels_b.len(), probs.len())?;
        if probs.is_empty() {
            return Err(Error::Domain("joint distribution needs at least one cell".into()));
        }
        check_labels(&labels_a)?;
        check_labels(&labels_b)?;
        check_probs("joint distribution", &probs)?;
        Ok(JointDist2 {
            labels_a,
            labels_b,
            probs,
        })
    }

    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let na = rows.len();
        let nb = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(na * nb);
        for row in rows {
            check_len("joint distribution row", nb, row.len())?;
            flat.extend(row);
        }
        Self::new(index_labels(na), index_labels(nb), flat)
    }

    /// Independent pair `P_A × P_B`.
    pub fn product(a: &FiniteDist, b: &FiniteDist) -> Result<Self> {
        let probs = a
            .probs
            .iter()
            .flat_map(|&pa| b.probs.iter().map(move |&pb| pa * pb))
            .collect();
        Self::new(a.labels.clone(), b.labels.clone(), probs)
    }

    pub fn size_a(&self) -> usize {
        self.labels_a.len()
    }

    pub fn size_b(&self) -> usize {
        self.labels_b.len()
    }

    pub fn labels_a(&self) -> &[String] {
        &self.labels_a
    }

    pub fn labels_b(&self) -> &[String] {
        &self.labels_b
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.size_b() + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let nb = self.size_b();
        &self.probs[a * nb..(a + 1) * nb]
    }

    pub fn marginal_a(&self) -> FiniteDist {
        let probs = (0..self.size_a()).map(|a| self.row(a).iter().sum()).collect();
        FiniteDist {
            labels: self.labels_a.clone(),
            probs,
        }
    }

    pub fn marginal_b(&self) -> FiniteDist {
        let mut probs = vec![0.0; self.size_b()];
        for a in 0..self.size_a() {
            for (acc, &p) in probs.iter_mut().zip(self.row(a)) {
                *acc += p;
            }
        }
        FiniteDist {
            labels: self.labels_b.clone(),
            probs,
        }
    }

    pub fn transpose(&self) -> JointDist2 {
        let (na, nb) = (self.size_a(), self.size_b());
        let mut probs = vec![0.0; na * nb];
        for a in 0..na {
            for b in 0..nb {
                probs[b * na + a] = self.get(a, b);
            }
        }
        JointDist2 {
            labels_a: self.labels_b.clone(),
            labels_b: self.labels_a.clone(),
            probs,
        }
    }

    /// `P_{B|A}` by Bayes' rule. Fails when some `a` has zero mass.
    pub fn conditional_b_given_a(&self) -> Result<Channel> {
        let pa = self.marginal_a();
        let mut rows = Vec::with_capacity(self.size_a());
        for (a, &mass) in pa.probs.iter().enumerate() {
            if mass <= 0.0 {
                return Err(Error::DegenerateMarginal(format!(
                    "symbol {:?} has zero mass",
                    self.labels_a[a]
                )));
            }
            rows.push(self.row(a).iter().map(|&p| p / mass).collect());
        }
        Channel::new(self.labels_a.clone(), self.labels_b.clone(), rows)
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.size_a()).map(|a| self.row(a).to_vec()).collect()
    }
}

/// Which variable conditions in [`conditional_mutual_information`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmiPattern {
    /// `I(X;Y|Z)`
    XYGivenZ,
    /// `I(X;Z|Y)`
    XZGivenY,
    /// `I(Y;Z|X)`
    YZGivenX,
}

/// Joint distribution of three variables, row-major `X → Y → Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointDist3Repr", into = "JointDist3Repr")]
pub struct JointDist3 {
    labels_x: Vec<String>,
    labels_y: Vec<String>,
    labels_z: Vec<String>,
    probs: Vec<f64>,
}

impl JointDist3 {
    pub fn new(
        labels_x: Vec<String>,
        labels_y: Vec<String>,
        labels_z: Vec<String>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        check_len(
            "joint tensor",
            labels_x.len() * labels_y.len() * labels_z.len(),
            probs.len(),
        )?;
        if probs.is_empty() {
            return Err(Error::Domain("joint tensor needs at least one cell".into()));
        }
        check_labels(&labels_x)?;
        check_labels(&labels_y)?;
        check_labels(&labels_z)?;
        check_probs("joint tensor", &probs)?;
        Ok(JointDist3 {
            labels_x,
            labels_y,
            labels_z,
            probs,
        })
    }

    /// Dense tensor with index labels and flat row-major entries.
    pub fn from_flat(dims: (usize, usize, usize), probs: Vec<f64>) -> Result<Self> {
        Self::new(
            index_labels(dims.0),
            index_labels(dims.1),
            index_labels(dims.2),
            probs,
        )
    }

    /// `P_X(x) P_{Y|X}(y|x) P_{Z|Y}(z|y)`: a Markov chain `X − Y − Z`.
    pub fn markov_chain(px: &FiniteDist, y_given_x: &Channel, z_given_y: &Channel) -> Result<Self> {
        if y_given_x.in_size() != px.len() || z_given_y.in_size() != y_given_x.out_size() {
            return Err(Error::AlphabetMismatch(
                "Markov chain channel shapes do not compose".into(),
            ));
        }
        let (nx, ny, nz) = (px.len(), y_given_x.out_size(), z_given_y.out_size());
        let mut probs = Vec::with_capacity(nx * ny * nz);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    probs.push(px.probs[x] * y_given_x.get(x, y) * z_given_y.get(y, z));
                }
            }
        }
        Self::new(
            px.labels.clone(),
            y_given_x.out_labels.clone(),
            z_given_y.out_labels.clone(),
            probs,
        )
    }

    /// `P_X(x) P_{Y|X}(y|x) P_{Z|X}(z|x)`: `Y` and `Z` conditionally
    /// independent given `X`.
    pub fn from_conditionals(px: &FiniteDist, y_given_x: &Channel, z_given_x: &Channel) -> Result<Self> {
        if y_given_x.in_size() != px.len() || z_given_x.in_size() != px.len() {
            return Err(Error::AlphabetMismatch(
                "channel inputs must match the X alphabet".into(),
            ));
        }
        let (nx, ny, nz) = (px.len(), y_given_x.out_size(), z_given_x.out_size());
        let mut probs = Vec::with_capacity(nx * ny * nz);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    probs.push(px.probs[x] * y_given_x.get(x, y) * z_given_x.get(x, z));
                }
            }
        }
        Self::new(
            px.labels.clone(),
            y_given_x.out_labels.clone(),
            z_given_x.out_labels.clone(),
            probs,
        )
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.labels_x.len(), self.labels_y.len(), self.labels_z.len())
    }

    pub fn labels_x(&self) -> &[String] {
        &self.labels_x
    }

    pub fn labels_y(&self) -> &[String] {
        &self.labels_y
    }

    pub fn labels_z(&self) -> &[String] {
        &self.labels_z
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        let (_, ny, nz) = self.dims();
        self.probs[(x * ny + y) * nz + z]
    }

    fn marginal2(&self, keep: (usize, usize)) -> JointDist2 {
        let (nx, ny, nz) = self.dims();
        let sizes = [nx, ny, nz];
        let labels = [&self.labels_x, &self.labels_y, &self.labels_z];
        let nb = sizes[keep.1];
        let mut probs = vec![0.0; sizes[keep.0] * nb];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let idx = [x, y, z];
                    probs[idx[keep.0] * nb + idx[keep.1]] += self.get(x, y, z);
                }
            }
        }
        JointDist2 {
            labels_a: labels[keep.0].clone(),
            labels_b: labels[keep.1].clone(),
            probs,
        }
    }

    pub fn marginal_xy(&self) -> JointDist2 {
        self.marginal2((0, 1))
    }

    pub fn marginal_xz(&self) -> JointDist2 {
        self.marginal2((0, 2))
    }

    pub fn marginal_yz(&self) -> JointDist2 {
        self.marginal2((1, 2))
    }

    pub fn marginal_x(&self) -> FiniteDist {
        self.marginal_xy().marginal_a()
    }

    pub fn marginal_y(&self) -> FiniteDist {
        self.marginal_xy().marginal_b()
    }

    pub fn marginal_z(&self) -> FiniteDist {
        self.marginal_xz().marginal_b()
    }

    /// Distribution of `(X, Z)` given `Y = y`.
    pub fn condition_on_y(&self, y: usize) -> Result<JointDist2> {
        let (nx, ny, nz) = self.dims();
        if y >= ny {
            return Err(Error::Domain(format!(
                "Y index {y} outside alphabet of size {ny}"
            )));
        }
        let mass = self.marginal_y().probs[y];
        if mass <= 0.0 {
            return Err(Error::DegenerateMarginal(format!(
                "cannot condition on zero-mass Y = {:?}",
                self.labels_y[y]
            )));
        }
        let mut probs = Vec::with_capacity(nx * nz);
        for x in 0..nx {
            for z in 0..nz {
                probs.push(self.get(x, y, z) / mass);
            }
        }
        JointDist2::new(self.labels_x.clone(), self.labels_z.clone(), probs)
    }

    /// Same source with the roles of `Y` and `Z` exchanged.
    pub fn swap_yz(&self) -> JointDist3 {
        let (nx, ny, nz) = self.dims();
        let mut probs = vec![0.0; nx * ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    probs[(x * nz + z) * ny + y] = self.get(x, y, z);
                }
            }
        }
        JointDist3 {
            labels_x: self.labels_x.clone(),
            labels_y: self.labels_z.clone(),
            labels_z: self.labels_y.clone(),
            probs,
        }
    }

    /// Same source with the roles of `X` and `Y` exchanged.
    pub fn swap_xy(&self) -> JointDist3 {
        let (nx, ny, nz) = self.dims();
        let mut probs = vec![0.0; nx * ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    probs[(y * nx + x) * nz + z] = self.get(x, y, z);
                }
            }
        }
        JointDist3 {
            labels_x: self.labels_y.clone(),
            labels_y: self.labels_x.clone(),
            labels_z: self.labels_z.clone(),
            probs,
        }
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let (nx, ny, nz) = self.dims();
        (0..nx)
            .map(|x| {
                (0..ny)
                    .map(|y| (0..nz).map(|z| self.get(x, y, z)).collect())
                    .collect()
            })
            .collect()
    }
}

/// Row-stochastic conditional distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelRepr", into = "ChannelRepr")]
pub struct Channel {
    in_labels: Vec<String>,
    out_labels: Vec<String>,
    rows: Vec<f64>,
}

impl Channel {
    pub fn new(in_labels: Vec<String>, out_labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        check_len("channel rows", in_labels.len(), rows.len())?;
        if in_labels.is_empty() || out_labels.is_empty() {
            return Err(Error::Domain(
                "channel needs nonempty input and output alphabets".into(),
            ));
        }
        check_labels(&in_labels)?;
        check_labels(&out_labels)?;
        let mut flat = Vec::with_capacity(in_labels.len() * out_labels.len());
        for (i, row) in rows.into_iter().enumerate() {
            check_len("channel row", out_labels.len(), row.len())?;
            check_probs(&format!("channel row {i}"), &row)?;
            flat.extend(row);
        }
        Ok(Channel {
            in_labels,
            out_labels,
            rows: flat,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nin = rows.len();
        let nout = rows.first().map_or(0, Vec::len);
        Self::new(index_labels(nin), index_labels(nout), rows)
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("crossover {p} outside [0, 1]")));
        }
        Self::from_rows(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::from_rows(
            (0..k)
                .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn in_size(&self) -> usize {
        self.in_labels.len()
    }

    pub fn out_size(&self) -> usize {
        self.out_labels.len()
    }

    pub fn in_labels(&self) -> &[String] {
        &self.in_labels
    }

    pub fn out_labels(&self) -> &[String] {
        &self.out_labels
    }

    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.rows[input * self.out_size() + output]
    }

    pub fn row(&self, input: usize) -> &[f64] {
        let n = self.out_size();
        &self.rows[input * n..(input + 1) * n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.in_size()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_dist(&self, input: usize) -> FiniteDist {
        FiniteDist {
            labels: self.out_labels.clone(),
            probs: self.row(input).to_vec(),
        }
    }

    /// Cascade `self` then `next`.
    pub fn compose(&self, next: &Channel) -> Result<Channel> {
        if self.out_size() != next.in_size() {
            return Err(Error::AlphabetMismatch(format!(
                "cannot compose channel with {} outputs into one with {} inputs",
                self.out_size(),
                next.in_size()
            )));
        }
        let rows = (0..self.in_size())
            .map(|i| {
                (0..next.out_size())
                    .map(|k| {
                        (0..self.out_size())
                            .map(|j| self.get(i, j) * next.get(j, k))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Channel::new(self.in_labels.clone(), next.out_labels.clone(), rows)
    }

    /// Output distribution for input law `input`.
    pub fn apply(&self, input: &FiniteDist) -> Result<FiniteDist> {
        if input.len() != self.in_size() {
            return Err(Error::AlphabetMismatch(
                "input law does not match channel inputs".into(),
            ));
        }
        let mut probs = vec![0.0; self.out_size()];
        for (i, &p) in input.probs.iter().enumerate() {
            for (acc, &w) in probs.iter_mut().zip(self.row(i)) {
                *acc += p * w;
            }
        }
        Ok(FiniteDist {
            labels: self.out_labels.clone(),
            probs,
        })
    }

    /// Joint `P_A(a) W(b|a)`.
    pub fn joint_with(&self, input: &FiniteDist) -> Result<JointDist2> {
        if input.len() != self.in_size() {
            return Err(Error::AlphabetMismatch(
                "input law does not match channel inputs".into(),
            ));
        }
        let probs = (0..self.in_size())
            .flat_map(|i| self.row(i).iter().map(move |&w| input.probs[i] * w))
            .collect();
        JointDist2::new(self.in_labels.clone(), self.out_labels.clone(), probs)
    }

    /// Memoryless extension to blocks of length `n`.
    pub fn iid_extend(&self, n: usize) -> Result<Channel> {
        let nin = checked_power(self.in_size(), n, "channel input extension")?;
        let nout = checked_power(self.out_size(), n, "channel output extension")?;
        checked_power(nin.max(nout), 2, "channel extension matrix")?;
        let ins = seq_labels(&self.in_labels, n);
        let outs = seq_labels(&self.out_labels, n);
        let mut rows = Vec::with_capacity(nin);
        let mut di = vec![0usize; n];
        for _ in 0..nin {
            let mut row = Vec::with_capacity(nout);
            let mut dout = vec![0usize; n];
            for _ in 0..nout {
                row.push(di.iter().zip(&dout).map(|(&a, &b)| self.get(a, b)).product());
                increment(&mut dout, self.out_size());
            }
            rows.push(row);
            increment(&mut di, self.in_size());
        }
        Channel::new(ins, outs, rows)
    }
}

fn seq_labels(labels: &[String], n: usize) -> Vec<String> {
    let size = labels.len().pow(n as u32);
    let mut out = Vec::with_capacity(size);
    let mut digits = vec![0usize; n];
    for _ in 0..size {
        out.push(
            digits
                .iter()
                .map(|&d| labels[d].as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        increment(&mut digits, labels.len());
    }
    out
}

/// Shannon entropy `H(P)`.
pub fn entropy(p: &FiniteDist) -> f64 {
    entropy_bits(&p.probs)
}

/// `I(A;B) = H(A) + H(B) − H(A,B)`.
pub fn mutual_information(j: &JointDist2) -> f64 {
    entropy(&j.marginal_a()) + entropy(&j.marginal_b()) - entropy_bits(&j.probs)
}

/// `I(A;B|C) = Σ_c P(c) I(A;B | C=c)`, evaluated cell by cell.
/// Maps `(a, b, c)` axis indices back to `(x, y, z)`.
type Permute = fn(usize, usize, usize) -> (usize, usize, usize);

pub fn conditional_mutual_information(j: &JointDist3, pattern: CmiPattern) -> f64 {
    let (nx, ny, nz) = j.dims();
    // axis order (a, b, c)
    let (sizes, to_xyz): ([usize; 3], Permute) = match pattern {
        CmiPattern::XYGivenZ => ([nx, ny, nz], |a, b, c| (a, b, c)),
        CmiPattern::XZGivenY => ([nx, nz, ny], |a, b, c| (a, c, b)),
        CmiPattern::YZGivenX => ([ny, nz, nx], |a, b, c| (c, a, b)),
    };
    let [na, nb, nc] = sizes;
    let mut total = 0.0;
    for c in 0..nc {
        let mut pc = 0.0;
        let mut pac = vec![0.0; na];
        let mut pbc = vec![0.0; nb];
        for a in 0..na {
            for b in 0..nb {
                let (x, y, z) = to_xyz(a, b, c);
                let p = j.get(x, y, z);
                pc += p;
                pac[a] += p;
                pbc[b] += p;
            }
        }
        if pc <= 0.0 {
            continue;
        }
        for a in 0..na {
            for b in 0..nb {
                let (x, y, z) = to_xyz(a, b, c);
                let p = j.get(x, y, z);
                if p > 0.0 {
                    total += p * (p * pc / (pac[a] * pbc[b])).log2();
                }
            }
        }
    }
    total
}

/// `D(P || Q)`; `f64::INFINITY` on a support violation.
pub fn kl_divergence(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    if p.labels != q.labels {
        return Err(Error::AlphabetMismatch(format!(
            "divergence between alphabets of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_bits(&p.probs, &q.probs))
}

/// `D(P_{B|A} || Q_B | P_A) = Σ_a P_A(a) D(P_{B|A=a} || Q_B)`.
pub fn conditional_kl(p_cond: &Channel, q: &FiniteDist, weight: &FiniteDist) -> Result<f64> {
    if p_cond.out_size() != q.len() || p_cond.in_size() != weight.len() {
        return Err(Error::AlphabetMismatch(
            "conditional divergence shapes are incompatible".into(),
        ));
    }
    let mut d = 0.0;
    for (a, &w) in weight.probs.iter().enumerate() {
        if w > 0.0 {
            d += w * kl_bits(p_cond.row(a), &q.probs);
        }
    }
    Ok(d)
}

// ---- JSON representations ----

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LabelRepr {
    Text(String),
    Int(i64),
    Float(f64),
}

impl From<LabelRepr> for String {
    fn from(l: LabelRepr) -> String {
        match l {
            LabelRepr::Text(s) => s,
            LabelRepr::Int(i) => i.to_string(),
            LabelRepr::Float(f) => f.to_string(),
        }
    }
}

fn into_labels(v: Vec<LabelRepr>) -> Vec<String> {
    v.into_iter().map(String::from).collect()
}

fn from_labels(v: Vec<String>) -> Vec<LabelRepr> {
    v.into_iter().map(LabelRepr::Text).collect()
}

#[derive(Serialize, Deserialize)]
struct FiniteDistRepr {
    labels: Vec<LabelRepr>,
    probs: Vec<f64>,
}

impl TryFrom<FiniteDistRepr> for FiniteDist {
    type Error = Error;
    fn try_from(r: FiniteDistRepr) -> Result<Self> {
        FiniteDist::new(into_labels(r.labels), r.probs)
    }
}

impl From<FiniteDist> for FiniteDistRepr {
    fn from(d: FiniteDist) -> Self {
        FiniteDistRepr {
            labels: from_labels(d.labels),
            probs: d.probs,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JointDist2Repr {
    #[serde(rename = "labelsA")]
    labels_a: Vec<LabelRepr>,
    #[serde(rename = "labelsB")]
    labels_b: Vec<LabelRepr>,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<JointDist2Repr> for JointDist2 {
    type Error = Error;
    fn try_from(r: JointDist2Repr) -> Result<Self> {
        let (la, lb) = (into_labels(r.labels_a), into_labels(r.labels_b));
        check_len("joint distribution rows", la.len(), r.probs.len())?;
        let mut flat = Vec::new();
        for row in r.probs {
            check_len("joint distribution row", lb.len(), row.len())?;
            flat.extend(row);
        }
        JointDist2::new(la, lb, flat)
    }
}

impl From<JointDist2> for JointDist2Repr {
    fn from(j: JointDist2) -> Self {
        let probs = j.to_matrix();
        JointDist2Repr {
            labels_a: from_labels(j.labels_a),
            labels_b: from_labels(j.labels_b),
            probs,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JointDist3Repr {
    #[serde(rename = "labelsX")]
    labels_x: Vec<LabelRepr>,
    #[serde(rename = "labelsY")]
    labels_y: Vec<LabelRepr>,
    #[serde(rename = "labelsZ")]
    labels_z: Vec<LabelRepr>,
    probs: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<JointDist3Repr> for JointDist3 {
    type Error = Error;
    fn try_from(r: JointDist3Repr) -> Result<Self> {
        let (lx, ly, lz) = (
            into_labels(r.labels_x),
            into_labels(r.labels_y),
            into_labels(r.labels_z),
        );
        check_len("tensor X dimension", lx.len(), r.probs.len())?;
        let mut flat = Vec::new();
        for plane in r.probs {
            check_len("tensor Y dimension", ly.len(), plane.len())?;
            for row in plane {
                check_len("tensor Z dimension", lz.len(), row.len())?;
                flat.extend(row);
            }
        }
        JointDist3::new(lx, ly, lz, flat)
    }
}

impl From<JointDist3> for JointDist3Repr {
    fn from(j: JointDist3) -> Self {
        let probs = j.to_nested();
        JointDist3Repr {
            labels_x: from_labels(j.labels_x),
            labels_y: from_labels(j.labels_y),
            labels_z: from_labels(j.labels_z),
            probs,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelRepr {
    #[serde(rename = "inLabels")]
    in_labels: Vec<LabelRepr>,
    #[serde(rename = "outLabels")]
    out_labels: Vec<LabelRepr>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<ChannelRepr> for Channel {
    type Error = Error;
    fn try_from(r: ChannelRepr) -> Result<Self> {
        Channel::new(into_labels(r.in_labels), into_labels(r.out_labels), r.rows)
    }
}

impl From<Channel> for ChannelRepr {
    fn from(c: Channel) -> Self {
        let rows = c.to_rows();
        ChannelRepr {
            in_labels: from_labels(c.in_labels),
            out_labels: from_labels(c.out_labels),
            rows,
        }
    }
}
