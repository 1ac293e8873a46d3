//! Sources of common randomness.
//!
//! Discrete fixtures are exact tensors. The fading satellite model is
//! sampled and turned into a discrete source by quantization; its
//! information measures are plug-in estimates of the observed samples,
//! without conditioning on the fade realizations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::probcore::{index_labels, Channel, FiniteDist, JointDist3};
use crate::special::{sample_power, NakagamiSpec};

/// Symbols generated per independently seeded stream.
pub const SAMPLE_CHUNK: usize = 1 << 16;

/// Default bins per coordinate for [`QuantizerSpec::gaussian_equiprobable`].
pub const DEFAULT_BINS: usize = 16;

/// Uniform binary `X`, `Y` = `X` through a crossover-`p` channel, `Z` = `Y`
/// through a crossover-`q` channel.
pub fn bsc_cascade(p: f64, q: f64) -> Result<JointDist3> {
    JointDist3::markov_chain(&FiniteDist::uniform(2)?, &Channel::bsc(p)?, &Channel::bsc(q)?)
}

/// Fading applied to the common source on one link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fade {
    /// Nakagami-m magnitude, redrawn every symbol.
    Nakagami(NakagamiSpec),
    /// Deterministic amplitude.
    Constant(f64),
}

impl Fade {
    fn amplitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Fade::Nakagami(spec) => sample_power(spec, rng).sqrt(),
            Fade::Constant(a) => *a,
        }
    }
}

/// `X = A_X S`, `Y = X + N_Y`, `Z = A_Z S + N_Z` with unit-variance noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatelliteSpec {
    pub source_variance: f64,
    pub fade_x: Fade,
    pub fade_z: Fade,
}

impl SatelliteSpec {
    pub fn new(source_variance: f64, fade_x: Fade, fade_z: Fade) -> Result<Self> {
        if !(source_variance > 0.0) || !source_variance.is_finite() {
            return Err(Error::Domain(format!(
                "source variance must be > 0, got {source_variance}"
            )));
        }
        for f in [fade_x, fade_z] {
            if let Fade::Constant(a) = f {
                if !a.is_finite() {
                    return Err(Error::Domain(format!("constant fade must be finite, got {a}")));
                }
            }
        }
        Ok(SatelliteSpec {
            source_variance,
            fade_x,
            fade_z,
        })
    }
}

/// Observations of Alice, Bob and Willie.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
}

impl SampleSet {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, zs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Domain("sample set needs at least one sample".into()));
        }
        if ys.len() != xs.len() || zs.len() != xs.len() {
            return Err(Error::ShapeMismatch {
                what: "sample set coordinates".into(),
                expected: xs.len(),
                found: ys.len().min(zs.len()),
            });
        }
        Ok(SampleSet { xs, ys, zs })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Splits into `k` contiguous batches of near-equal size.
    pub fn batches(&self, k: usize) -> Vec<SampleSet> {
        let k = k.clamp(1, self.len());
        let base = self.len() / k;
        let extra = self.len() % k;
        let mut out = Vec::with_capacity(k);
        let mut start = 0;
        for b in 0..k {
            let end = start + base + usize::from(b < extra);
            out.push(SampleSet {
                xs: self.xs[start..end].to_vec(),
                ys: self.ys[start..end].to_vec(),
                zs: self.zs[start..end].to_vec(),
            });
            start = end;
        }
        out
    }

    /// CSV with header `x,y,z`, one row per symbol.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "z"])?;
        for i in 0..self.len() {
            w.serialize((self.xs[i], self.ys[i], self.zs[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n` i.i.d. symbols of the satellite model.
///
/// Symbols are produced in chunks of [`SAMPLE_CHUNK`]; chunk `c` uses its
/// own ChaCha stream `c` under `seed`, so the result does not depend on how
/// chunks are scheduled across threads.
pub fn satellite_sample(spec: &SatelliteSpec, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    let sd = spec.source_variance.sqrt();
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            let (mut xs, mut ys, mut zs) = (
                Vec::with_capacity(len),
                Vec::with_capacity(len),
                Vec::with_capacity(len),
            );
            for _ in 0..len {
                let s = sd * rng.sample::<f64, _>(StandardNormal);
                let ax = spec.fade_x.amplitude(&mut rng);
                let az = spec.fade_z.amplitude(&mut rng);
                let ny: f64 = rng.sample(StandardNormal);
                let nz: f64 = rng.sample(StandardNormal);
                let x = ax * s;
                xs.push(x);
                ys.push(x + ny);
                zs.push(az * s + nz);
            }
            (xs, ys, zs)
        })
        .collect();
    let (mut xs, mut ys, mut zs) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (x, y, z) in parts {
        xs.extend(x);
        ys.extend(y);
        zs.extend(z);
    }
    SampleSet::new(xs, ys, zs)
}

/// Interior bin boundaries for each coordinate. `k` edges make `k + 1`
/// bins; values beyond the outer edges fall in the end bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    edges: [Vec<f64>; 3],
}

impl QuantizerSpec {
    pub fn new(edges_x: Vec<f64>, edges_y: Vec<f64>, edges_z: Vec<f64>) -> Result<Self> {
        for (name, e) in [("x", &edges_x), ("y", &edges_y), ("z", &edges_z)] {
            if e.is_empty() {
                return Err(Error::Domain(format!("{name} quantizer needs at least two bins")));
            }
            if e.iter().any(|v| !v.is_finite()) || e.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Domain(format!(
                    "{name} quantizer edges must be finite and strictly increasing"
                )));
            }
        }
        Ok(QuantizerSpec {
            edges: [edges_x, edges_y, edges_z],
        })
    }

    /// The same edges on every coordinate.
    pub fn uniform_edges(edges: Vec<f64>) -> Result<Self> {
        Self::new(edges.clone(), edges.clone(), edges)
    }

    /// Edges at the `k / bins` quantiles of a Gaussian fitted to each
    /// coordinate's sample mean and standard deviation.
    pub fn gaussian_equiprobable(samples: &SampleSet, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Domain(format!("need at least two bins, got {bins}")));
        }
        let edges_for = |v: &[f64]| -> Result<Vec<f64>> {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            let normal = Normal::new(mean, sd).map_err(|e| Error::Numeric(e.to_string()))?;
            Ok((1..bins)
                .map(|k| normal.inverse_cdf(k as f64 / bins as f64))
                .collect())
        };
        Self::new(
            edges_for(&samples.xs)?,
            edges_for(&samples.ys)?,
            edges_for(&samples.zs)?,
        )
    }

    pub fn bin_counts(&self) -> (usize, usize, usize) {
        (
            self.edges[0].len() + 1,
            self.edges[1].len() + 1,
            self.edges[2].len() + 1,
        )
    }

    pub fn edges(&self, coord: usize) -> &[f64] {
        &self.edges[coord]
    }

    fn bin(&self, coord: usize, v: f64) -> usize {
        self.edges[coord].partition_point(|&e| e <= v)
    }
}

/// Normalized joint histogram of the bin indices.
pub fn quantize(samples: &SampleSet, q: &QuantizerSpec) -> Result<JointDist3> {
    let (bx, by, bz) = q.bin_counts();
    let cells = bx * by * bz;
    let counts = samples
        .xs
        .par_chunks(SAMPLE_CHUNK)
        .zip(samples.ys.par_chunks(SAMPLE_CHUNK))
        .zip(samples.zs.par_chunks(SAMPLE_CHUNK))
        .map(|((xs, ys), zs)| {
            let mut c = vec![0u64; cells];
            for i in 0..xs.len() {
                let (a, b, d) = (q.bin(0, xs[i]), q.bin(1, ys[i]), q.bin(2, zs[i]));
                c[(a * by + b) * bz + d] += 1;
            }
            c
        })
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let n = samples.len() as f64;
    JointDist3::new(
        index_labels(bx),
        index_labels(by),
        index_labels(bz),
        counts.into_iter().map(|c| c as f64 / n).collect(),
    )
}

/// Relative frequencies over the distinct observed symbols, sorted.
pub fn empirical_dist<T: Ord + ToString>(samples: &[T]) -> Result<FiniteDist> {
    if samples.is_empty() {
        return Err(Error::Domain("empirical distribution of an empty sample".into()));
    }
    let mut counts: BTreeMap<&T, u64> = BTreeMap::new();
    for s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let n = samples.len() as f64;
    let (labels, probs) = counts
        .into_iter()
        .map(|(s, c)| (s.to_string(), c as f64 / n))
        .unzip();
    FiniteDist::new(labels, probs)
}

/// Relative frequencies over the full alphabet `0..k`.
pub fn empirical_dist_indexed(samples: &[usize], k: usize) -> Result<FiniteDist> {
    if samples.is_empty() {
        return Err(Error::Domain("empirical distribution of an empty sample".into()));
    }
    let mut counts = vec![0u64; k];
    for &s in samples {
        if s >= k {
            return Err(Error::Domain(format!("symbol {s} outside alphabet of size {k}")));
        }
        counts[s] += 1;
    }
    let n = samples.len() as f64;
    FiniteDist::from_probs(counts.into_iter().map(|c| c as f64 / n).collect())
}
