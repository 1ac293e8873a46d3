//! Small-blocklength simulation of the key generation scheme.
//!
//! A codebook of `L·L1` words `u^n(m, w)` is drawn i.i.d. from `P_U`.
//! Alice publishes `F^n = u^n(m, w) ⊕ X^n`; Bob decodes `(m, w)` from
//! `(Y^n, F^n)` by maximum likelihood and the key is the bin index `m`.
//! Willie observes `(Z^n, F^n)`. Exact mode enumerates every outcome;
//! Monte Carlo mode samples trials and reports plug-in divergences.
//!
//! Output sequences are indexed base `|alphabet|` with the last symbol
//! varying fastest. A pair letter `(z, f)` has index `z·|X| + f`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::probcore::{
    checked_power, conditional_kl, entropy, index_labels, kl_divergence, mutual_information, Channel,
    FiniteDist, JointDist2, JointDist3,
};

/// Limit on elementary probability evaluations in exact mode.
pub const EXACT_GUARD: u128 = 1 << 30;
/// Limit on stored codeword symbols.
pub const MAX_CODEBOOK_SYMBOLS: u128 = 1 << 26;
/// Relative gap below which two likelihoods count as tied.
pub const TIE_TOL: f64 = 1e-12;
/// Default robustness parameter for desk-scale blocklengths.
pub const DEFAULT_DELTA: f64 = 0.2;

const CHUNK: usize = 4096;
const MC_CHUNK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CodebookSpec {
    pub n: usize,
    pub r: f64,
    pub r1: f64,
    pub alphabet_size: usize,
    pub seed: u64,
}

/// `⌈n·rate⌉`, ignoring float noise just above an integer.
fn index_bits(n: usize, rate: f64) -> u32 {
    let v = (n as f64 * rate - 1e-9).ceil().max(0.0);
    v as u32
}

impl CodebookSpec {
    pub fn new(n: usize, r: f64, r1: f64, alphabet_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("blocklength n must be >= 1".into()));
        }
        for (name, v) in [("R", r), ("R1", r1)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if alphabet_size < 2 {
            return Err(Error::Domain(format!(
                "alphabet size must be >= 2, got {alphabet_size}"
            )));
        }
        let spec = CodebookSpec {
            n,
            r,
            r1,
            alphabet_size,
            seed,
        };
        let (kb, cb) = (spec.key_bits(), spec.confusion_bits());
        if kb + cb >= 64 {
            return Err(Error::SizeGuard {
                what: "codebook index".into(),
                requested: 1u128 << (kb + cb).min(127),
                limit: 1 << 63,
            });
        }
        Ok(spec)
    }

    /// `⌈nR⌉`, so that `L = 2^key_bits`.
    pub fn key_bits(&self) -> u32 {
        index_bits(self.n, self.r)
    }

    /// `⌈nR1⌉`, so that `L1 = 2^confusion_bits`.
    pub fn confusion_bits(&self) -> u32 {
        index_bits(self.n, self.r1)
    }

    pub fn l(&self) -> usize {
        1usize << self.key_bits()
    }

    pub fn l1(&self) -> usize {
        1usize << self.confusion_bits()
    }

    /// `L·L1·(|X||Y||Z|)^n <= EXACT_GUARD`.
    pub fn exact_guard(&self, dims: (usize, usize, usize)) -> Result<()> {
        check_exact_guard((self.l() as u128) * (self.l1() as u128), dims, self.n)
    }
}

fn check_exact_guard(words: u128, dims: (usize, usize, usize), n: usize) -> Result<()> {
    let per = (dims.0 * dims.1 * dims.2) as u128;
    let need = (0..n).fold(words, |acc, _| acc.saturating_mul(per));
    if need > EXACT_GUARD {
        return Err(Error::SizeGuard {
            what: "exact enumeration".into(),
            requested: need,
            limit: EXACT_GUARD,
        });
    }
    Ok(())
}

/// Words indexed by `c = m·L1 + w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    l: usize,
    l1: usize,
    alphabet_size: usize,
    words: Vec<Vec<usize>>,
}

impl Codebook {
    pub fn from_words(l: usize, l1: usize, alphabet_size: usize, words: Vec<Vec<usize>>) -> Result<Self> {
        if l == 0 || l1 == 0 || words.len() != l * l1 {
            return Err(Error::ShapeMismatch {
                what: "codebook words".into(),
                expected: l * l1,
                found: words.len(),
            });
        }
        let n = words[0].len();
        if n == 0 {
            return Err(Error::Domain("codewords must be nonempty".into()));
        }
        for w in &words {
            if w.len() != n {
                return Err(Error::ShapeMismatch {
                    what: "codeword length".into(),
                    expected: n,
                    found: w.len(),
                });
            }
            if let Some(&s) = w.iter().find(|&&s| s >= alphabet_size) {
                return Err(Error::Domain(format!(
                    "codeword symbol {s} outside alphabet of size {alphabet_size}"
                )));
            }
        }
        Ok(Codebook {
            l,
            l1,
            alphabet_size,
            words,
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn l1(&self) -> usize {
        self.l1
    }

    pub fn n(&self) -> usize {
        self.words[0].len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn words(&self) -> &[Vec<usize>] {
        &self.words
    }

    pub fn word(&self, m: usize, w: usize) -> &[usize] {
        &self.words[m * self.l1 + w]
    }
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Draws every symbol i.i.d. from `p_u` under `spec.seed`.
pub fn generate_codebook(spec: &CodebookSpec, p_u: &FiniteDist) -> Result<Codebook> {
    if p_u.len() != spec.alphabet_size {
        return Err(Error::AlphabetMismatch(format!(
            "P_U has {} symbols, codebook alphabet has {}",
            p_u.len(),
            spec.alphabet_size
        )));
    }
    let symbols = (spec.l() as u128) * (spec.l1() as u128) * spec.n as u128;
    if symbols > MAX_CODEBOOK_SYMBOLS {
        return Err(Error::SizeGuard {
            what: "codebook storage".into(),
            requested: symbols,
            limit: MAX_CODEBOOK_SYMBOLS,
        });
    }
    let cdf = cumulative(p_u.probs());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words = (0..spec.l() * spec.l1())
        .map(|_| (0..spec.n).map(|_| sample_index(&cdf, &mut rng)).collect())
        .collect();
    Codebook::from_words(spec.l(), spec.l1(), spec.alphabet_size, words)
}

fn pair_channel(pair: &JointDist2, other_labels: &[String], x_labels: &[String]) -> Result<Channel> {
    let q = pair.size_a();
    let no = pair.size_b();
    let rows = (0..q)
        .map(|u| {
            let mut row = vec![0.0; no * q];
            for o in 0..no {
                for f in 0..q {
                    row[o * q + f] = pair.get((f + q - u) % q, o);
                }
            }
            row
        })
        .collect();
    let out = other_labels
        .iter()
        .flat_map(|o| x_labels.iter().map(move |f| format!("({o},{f})")))
        .collect();
    Channel::new(x_labels.to_vec(), out, rows)
}

/// `W((z, f) | u) = P_XZ(f ⊖ u, z)`.
pub fn willie_channel(j: &JointDist3) -> Result<Channel> {
    pair_channel(&j.marginal_xz(), j.labels_z(), j.labels_x())
}

/// `W((y, f) | u) = P_XY(f ⊖ u, y)`.
pub fn bob_channel(j: &JointDist3) -> Result<Channel> {
    pair_channel(&j.marginal_xy(), j.labels_y(), j.labels_x())
}

fn digits_of(mut idx: usize, base: usize, out: &mut [usize]) {
    for d in out.iter_mut().rev() {
        *d = idx % base;
        idx /= base;
    }
}

/// `W^n(·|u)` over all output sequences.
fn sequence_likelihoods(w: &Channel, u: &[usize]) -> Vec<f64> {
    let mut v = vec![1.0];
    for &s in u {
        let row = w.row(s);
        let mut next = Vec::with_capacity(v.len() * row.len());
        for &a in &v {
            next.extend(row.iter().map(|b| a * b));
        }
        v = next;
    }
    v
}

fn output_space(w: &Channel, n: usize) -> Result<usize> {
    checked_power(w.out_size(), n, "output sequence space")
}

/// Codebook-average output law `(1/(L L1)) Σ_c W^n(·|u_c)`.
pub fn induced_output_dist(cb: &Codebook, w: &Channel) -> Result<FiniteDist> {
    if w.in_size() != cb.alphabet_size() {
        return Err(Error::AlphabetMismatch(
            "channel input differs from codebook alphabet".into(),
        ));
    }
    let size = output_space(w, cb.n())?;
    let scale = 1.0 / cb.words().len() as f64;
    let mut p = vec![0.0; size];
    for u in cb.words() {
        for (acc, v) in p.iter_mut().zip(sequence_likelihoods(w, u)) {
            *acc += scale * v;
        }
    }
    let labels = w.row_dist(0).iid_extend(cb.n())?.labels().to_vec();
    FiniteDist::new(labels, p)
}

/// `(P_U W)^{⊗n}`.
pub fn target_output_dist(p_u: &FiniteDist, w: &Channel, n: usize) -> Result<FiniteDist> {
    w.apply(p_u)?.iid_extend(n)
}

/// Splits a law over pair-letter sequences into a joint over `(F^n, Z^n)`,
/// where pair letters are `(z, f)` with `z < nz`, `f < q`.
pub fn split_fz(p: &FiniteDist, q: usize, nz: usize, n: usize) -> Result<JointDist2> {
    let pair_base = q * nz;
    let expected = checked_power(pair_base, n, "pair sequences")?;
    if p.len() != expected {
        return Err(Error::ShapeMismatch {
            what: "pair-letter sequence law".into(),
            expected,
            found: p.len(),
        });
    }
    let size_f = checked_power(q, n, "F sequences")?;
    let size_z = checked_power(nz, n, "Z sequences")?;
    let mut m = vec![0.0; size_f * size_z];
    let mut d = vec![0; n];
    for (s, &v) in p.probs().iter().enumerate() {
        digits_of(s, pair_base, &mut d);
        let (mut f, mut z) = (0, 0);
        for &dd in &d {
            f = f * q + dd % q;
            z = z * nz + dd / q;
        }
        m[f * size_z + z] += v;
    }
    JointDist2::new(index_labels(size_f), index_labels(size_z), m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StealthDecomposition {
    pub d_f: f64,
    pub d_z_given_f: f64,
    pub total: f64,
}

/// `D(P_ZF‖Q_ZF) = D(P_F‖Q_F) + D(P_{Z|F}‖Q_{Z|F} | P_F)` on joints over
/// `(F, Z)`; each side evaluated separately.
pub fn stealth_decomposition_check(
    induced: &JointDist2,
    target: &JointDist2,
) -> Result<StealthDecomposition> {
    let flat = |j: &JointDist2| FiniteDist::from_probs(j.probs().to_vec());
    let total = kl_divergence(&flat(induced)?, &flat(target)?)?;
    let pf = induced.marginal_a();
    let d_f = kl_divergence(&pf, &target.marginal_a())?;
    let cond_rows: Vec<Vec<f64>> = (0..induced.size_a())
        .map(|f| {
            let m = pf.prob(f);
            if m > 0.0 {
                induced.row(f).iter().map(|v| v / m).collect()
            } else {
                target_row(target, f)
            }
        })
        .collect();
    let p_cond = Channel::from_rows(cond_rows)?;
    let mut d_z_given_f = 0.0;
    for f in 0..induced.size_a() {
        if pf.prob(f) == 0.0 {
            continue;
        }
        let weight = FiniteDist::point_mass(induced.size_a(), f)?;
        let qf = FiniteDist::from_probs(target_row(target, f))?;
        d_z_given_f += pf.prob(f) * conditional_kl(&p_cond, &qf, &weight)?;
    }
    Ok(StealthDecomposition {
        d_f,
        d_z_given_f,
        total,
    })
}

fn target_row(target: &JointDist2, f: usize) -> Vec<f64> {
    let r = target.row(f);
    let m: f64 = r.iter().sum();
    if m > 0.0 {
        r.iter().map(|v| v / m).collect()
    } else {
        vec![1.0 / r.len() as f64; r.len()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtocolReport {
    pub mode: ProtocolMode,
    pub n: usize,
    pub l: usize,
    pub l1: usize,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    /// `P(K̂ ≠ K)`.
    pub pe: f64,
    pub pe_std_error: Option<f64>,
    /// `P((m̂, ŵ) ≠ (m, w))`.
    pub pe_block: f64,
    /// `log2 L − H(K)`.
    pub uniformity_gap: f64,
    /// `D(P_{K Z^n F} ‖ P_K Q_{Z^n F})`.
    pub eff_secrecy: f64,
    pub eff_secrecy_per_symbol: f64,
    /// `I(K; Z^n F)`.
    pub non_confusion: f64,
    /// `D(P_{Z^n F} ‖ Q_{Z^n F})`.
    pub non_stealth: f64,
    /// `D(P_{K Z^n F} ‖ Unif_K Q_{Z^n F})`.
    pub combined_metric: f64,
    pub d_f: Option<f64>,
    pub d_z_given_f: Option<f64>,
    /// `max_f |P_F(f) − |X|^{-n}|`.
    pub f_uniformity_error: Option<f64>,
    /// Divergences are plug-in estimates from samples.
    pub plug_in: bool,
    /// Too few trials for any estimate to be meaningful.
    pub degenerate: bool,
}

#[derive(Default, Clone, Copy)]
struct Terms {
    eff: f64,
    non_confusion: f64,
    non_stealth: f64,
    combined: f64,
}

impl Terms {
    fn add(mut self, o: Terms) -> Terms {
        self.eff += o.eff;
        self.non_confusion += o.non_confusion;
        self.non_stealth += o.non_stealth;
        self.combined += o.combined;
        self
    }
}

/// Divergence contributions of one Willie observation `s` with joint
/// masses `(k, P(k, s))`, key marginal `p_k`, and `log2 Q(s)`.
fn point_terms(pks: &[(usize, f64)], p_k: &[f64], log_l: f64, log_q: f64) -> (Terms, f64) {
    let pzf: f64 = pks.iter().map(|(_, p)| p).sum();
    if pzf <= 0.0 {
        return (Terms::default(), 0.0);
    }
    let log_pzf = pzf.log2();
    let mut t = Terms {
        non_stealth: pzf * (log_pzf - log_q),
        ..Terms::default()
    };
    for &(k, p) in pks {
        if p > 0.0 {
            let lp = p.log2();
            let lk = p_k[k].log2();
            t.eff += p * (lp - lk - log_q);
            t.non_confusion += p * (lp - lk - log_pzf);
            t.combined += p * (lp + log_l - log_q);
        }
    }
    (t, pzf)
}

struct Setup {
    q: usize,
    n: usize,
    willie: Channel,
    bob: Channel,
    log_q1: Vec<f64>,
}

fn setup(j: &JointDist3, cb: &Codebook) -> Result<Setup> {
    let q = j.dims().0;
    if cb.alphabet_size() != q {
        return Err(Error::AlphabetMismatch(format!(
            "codebook alphabet {} differs from X alphabet {q}",
            cb.alphabet_size()
        )));
    }
    let willie = willie_channel(j)?;
    let bob = bob_channel(j)?;
    let p_u = FiniteDist::uniform(q)?;
    let q1 = willie.apply(&p_u)?;
    let log_q1 = q1.probs().iter().map(|p| p.log2()).collect();
    Ok(Setup {
        q,
        n: cb.n(),
        willie,
        bob,
        log_q1,
    })
}

/// Index of the most likely codeword; the smallest index wins ties.
fn ml_decode(likelihoods: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = likelihoods[0];
    for (c, &v) in likelihoods.iter().enumerate().skip(1) {
        if v > best_val && v - best_val > TIE_TOL * best_val {
            best = c;
            best_val = v;
        }
    }
    best
}

fn word_likelihood(w: &Channel, u: &[usize], out: &[usize]) -> f64 {
    u.iter().zip(out).map(|(&a, &o)| w.get(a, o)).product()
}

/// Exact error probabilities `(key, block)` of ML decoding at Bob.
fn exact_error(cb: &Codebook, st: &Setup) -> Result<(f64, f64)> {
    let size = output_space(&st.bob, st.n)?;
    let words = cb.words();
    let scale = 1.0 / words.len() as f64;
    let parts: Vec<(f64, f64)> = (0..size.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut d = vec![0; st.n];
            let mut lik = vec![0.0; words.len()];
            let (mut key, mut block) = (0.0, 0.0);
            for t in chunk * CHUNK..((chunk + 1) * CHUNK).min(size) {
                digits_of(t, st.bob.out_size(), &mut d);
                for (c, u) in words.iter().enumerate() {
                    lik[c] = word_likelihood(&st.bob, u, &d);
                }
                let hat = ml_decode(&lik);
                let m_hat = hat / cb.l1();
                for (c, &v) in lik.iter().enumerate() {
                    if c != hat {
                        block += scale * v;
                        if c / cb.l1() != m_hat {
                            key += scale * v;
                        }
                    }
                }
            }
            (key, block)
        })
        .collect();
    let (key, block) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((key.clamp(0.0, 1.0), block.clamp(0.0, 1.0)))
}

/// Exact evaluation of all constraints for one codebook.
pub fn run_protocol_exact(j: &JointDist3, cb: &Codebook) -> Result<ProtocolReport> {
    let st = setup(j, cb)?;
    let l = cb.l();
    check_exact_guard(cb.words().len() as u128, j.dims(), st.n)?;
    let (pe, pe_block) = exact_error(cb, &st)?;

    let size = output_space(&st.willie, st.n)?;
    let base = st.willie.out_size();
    let p_k = vec![1.0 / l as f64; l];
    let log_l = (l as f64).log2();
    let scale = 1.0 / cb.words().len() as f64;
    let parts: Vec<(Terms, Vec<f64>, Vec<f64>)> = (0..size.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut dig = vec![0; st.n];
            let mut pks = vec![(0usize, 0.0f64); l];
            let mut acc = Terms::default();
            let range = chunk * CHUNK..((chunk + 1) * CHUNK).min(size);
            let mut pzf = Vec::with_capacity(range.len());
            let mut logq = Vec::with_capacity(range.len());
            for s in range {
                digits_of(s, base, &mut dig);
                let log_q: f64 = dig.iter().map(|&o| st.log_q1[o]).sum();
                for (k, slot) in pks.iter_mut().enumerate() {
                    let mut p = 0.0;
                    for w in 0..cb.l1() {
                        p += word_likelihood(&st.willie, cb.word(k, w), &dig);
                    }
                    *slot = (k, p * scale);
                }
                let (t, m) = point_terms(&pks, &p_k, log_l, log_q);
                acc = acc.add(t);
                pzf.push(m);
                logq.push(log_q);
            }
            (acc, pzf, logq)
        })
        .collect();
    let mut terms = Terms::default();
    let mut pzf = Vec::with_capacity(size);
    let mut logq = Vec::with_capacity(size);
    for (t, p, lq) in parts {
        terms = terms.add(t);
        pzf.extend(p);
        logq.extend(lq);
    }

    // Chain rule over F: marginals by digit decomposition.
    let nf = checked_power(st.q, st.n, "F sequences")?;
    let f_of = |s: usize, dig: &mut [usize]| -> usize {
        digits_of(s, base, dig);
        dig.iter().fold(0, |f, &o| f * st.q + o % st.q)
    };
    let mut dig = vec![0; st.n];
    let mut p_f = vec![0.0; nf];
    let mut q_f = vec![0.0; nf];
    for s in 0..size {
        let f = f_of(s, &mut dig);
        p_f[f] += pzf[s];
        q_f[f] += logq[s].exp2();
    }
    let mut d_f = 0.0;
    for f in 0..nf {
        if p_f[f] > 0.0 {
            d_f += p_f[f] * (p_f[f] / q_f[f]).log2();
        }
    }
    let mut d_zf = 0.0;
    for s in 0..size {
        if pzf[s] > 0.0 {
            let f = f_of(s, &mut dig);
            d_zf += pzf[s] * ((pzf[s] / p_f[f]) / (logq[s].exp2() / q_f[f])).log2();
        }
    }
    let uniform = 1.0 / nf as f64;
    let f_err = p_f.iter().map(|p| (p - uniform).abs()).fold(0.0, f64::max);

    Ok(ProtocolReport {
        mode: ProtocolMode::Exact,
        n: st.n,
        l,
        l1: cb.l1(),
        trials: None,
        seed: None,
        pe,
        pe_std_error: None,
        pe_block,
        uniformity_gap: 0.0,
        eff_secrecy: terms.eff.max(0.0),
        eff_secrecy_per_symbol: terms.eff.max(0.0) / st.n as f64,
        non_confusion: terms.non_confusion.max(0.0),
        non_stealth: terms.non_stealth.max(0.0),
        combined_metric: terms.combined.max(0.0),
        d_f: Some(d_f.max(0.0)),
        d_z_given_f: Some(d_zf.max(0.0)),
        f_uniformity_error: Some(f_err),
        plug_in: false,
        degenerate: false,
    })
}

struct Trial {
    key: usize,
    key_error: bool,
    block_error: bool,
    willie: Vec<u32>,
}

/// Sampled evaluation over `trials` independent rounds.
///
/// Trials are drawn in blocks of 4096, block `b` using ChaCha stream `b`
/// under `seed`. Bob decodes each trial by exact ML over the codebook.
pub fn run_protocol_mc(j: &JointDist3, cb: &Codebook, trials: u64, seed: u64) -> Result<ProtocolReport> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    let st = setup(j, cb)?;
    let (nx, ny, nz) = j.dims();
    let cdf = cumulative(j.probs());
    let words = cb.words();
    let blocks = trials.div_ceil(MC_CHUNK);
    let results: Vec<Vec<Trial>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let len = MC_CHUNK.min(trials - b * MC_CHUNK);
            let mut out = Vec::with_capacity(len as usize);
            let mut bob_obs = vec![0; st.n];
            let mut lik = vec![0.0; words.len()];
            for _ in 0..len {
                let c = rng.random_range(0..words.len());
                let u = &words[c];
                let mut willie = Vec::with_capacity(st.n);
                for i in 0..st.n {
                    let cell = sample_index(&cdf, &mut rng);
                    let (x, y, z) = (cell / (ny * nz), (cell / nz) % ny, cell % nz);
                    let f = (u[i] + x) % nx;
                    bob_obs[i] = y * nx + f;
                    willie.push((z * nx + f) as u32);
                }
                for (cc, w) in words.iter().enumerate() {
                    lik[cc] = word_likelihood(&st.bob, w, &bob_obs);
                }
                let hat = ml_decode(&lik);
                out.push(Trial {
                    key: c / cb.l1(),
                    key_error: hat / cb.l1() != c / cb.l1(),
                    block_error: hat != c,
                    willie,
                });
            }
            out
        })
        .collect();
    let trials_f = trials as f64;
    let mut key_err = 0u64;
    let mut block_err = 0u64;
    let mut key_counts = vec![0u64; cb.l()];
    let mut groups: HashMap<Vec<u32>, Vec<u64>> = HashMap::new();
    for t in results.iter().flatten() {
        key_err += u64::from(t.key_error);
        block_err += u64::from(t.block_error);
        key_counts[t.key] += 1;
    }
    for t in results.into_iter().flatten() {
        let entry = groups.entry(t.willie).or_default();
        entry.push(t.key as u64);
    }
    let p_k: Vec<f64> = key_counts.iter().map(|&c| c as f64 / trials_f).collect();
    let log_l = (cb.l() as f64).log2();
    let mut keys: Vec<_> = groups.into_iter().collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0));
    let mut terms = Terms::default();
    for (s, ks) in keys {
        let log_q: f64 = s.iter().map(|&o| st.log_q1[o as usize]).sum();
        let mut counts: Vec<(usize, f64)> = Vec::new();
        let mut sorted = ks;
        sorted.sort_unstable();
        for k in sorted {
            match counts.last_mut() {
                Some((kk, c)) if *kk == k as usize => *c += 1.0,
                _ => counts.push((k as usize, 1.0)),
            }
        }
        counts.iter_mut().for_each(|(_, c)| *c /= trials_f);
        terms = terms.add(point_terms(&counts, &p_k, log_l, log_q).0);
    }
    let pe = key_err as f64 / trials_f;
    let h_k = entropy(&FiniteDist::from_probs(p_k.clone())?);
    Ok(ProtocolReport {
        mode: ProtocolMode::MonteCarlo,
        n: st.n,
        l: cb.l(),
        l1: cb.l1(),
        trials: Some(trials),
        seed: Some(seed),
        pe,
        pe_std_error: Some((pe * (1.0 - pe) / trials_f).sqrt()),
        pe_block: block_err as f64 / trials_f,
        uniformity_gap: (log_l - h_k).max(0.0),
        eff_secrecy: terms.eff.max(0.0),
        eff_secrecy_per_symbol: terms.eff.max(0.0) / st.n as f64,
        non_confusion: terms.non_confusion.max(0.0),
        non_stealth: terms.non_stealth.max(0.0),
        combined_metric: terms.combined.max(0.0),
        d_f: None,
        d_z_given_f: None,
        f_uniformity_error: None,
        plug_in: true,
        degenerate: trials < 2,
    })
}

/// Exact law of `(F^n, X^n)` when `U^n ~ P_U^n` independently of `X^n`:
/// returns `(max_f |P_F(f) − |X|^{-n}|, max_{f,x} |P(f,x) − P_F(f) P_X(x)|)`.
pub fn crypto_lemma_check(p_x: &FiniteDist, p_u: &FiniteDist, n: usize) -> Result<(f64, f64)> {
    let q = p_x.len();
    if p_u.len() != q {
        return Err(Error::AlphabetMismatch("U and X alphabets differ".into()));
    }
    let size = checked_power(q, n, "X sequences")?;
    checked_power(size, 2, "(F, X) sequence pairs")?;
    let px = p_x.iid_extend(n)?;
    let pu = p_u.iid_extend(n)?;
    let (mut du, mut dx) = (vec![0; n], vec![0; n]);
    let mut joint = vec![0.0; size * size];
    for u in 0..size {
        digits_of(u, q, &mut du);
        for x in 0..size {
            digits_of(x, q, &mut dx);
            let f = du.iter().zip(&dx).fold(0, |acc, (a, b)| acc * q + (a + b) % q);
            joint[f * size + x] += pu.prob(u) * px.prob(x);
        }
    }
    let pf: Vec<f64> = (0..size)
        .map(|f| joint[f * size..(f + 1) * size].iter().sum())
        .collect();
    let uniform = 1.0 / size as f64;
    let f_err = pf.iter().map(|p| (p - uniform).abs()).fold(0.0, f64::max);
    let mut indep: f64 = 0.0;
    for f in 0..size {
        for x in 0..size {
            indep = indep.max((joint[f * size + x] - pf[f] * px.prob(x)).abs());
        }
    }
    Ok((f_err, indep))
}

/// `δ` and the typicality `ε` entering `ε' = ε(1 + H(U))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TypicalityParams {
    pub delta: f64,
    /// Defaults to `delta`.
    pub epsilon: Option<f64>,
}

impl TypicalityParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("delta must be > 0, got {delta}")));
        }
        Ok(TypicalityParams { delta, epsilon: None })
    }

    pub fn with_epsilon(delta: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(TypicalityParams {
            epsilon: Some(epsilon),
            ..Self::new(delta)?
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(self.delta)
    }

    pub fn eps_prime(&self, h_u: f64) -> f64 {
        self.epsilon() * (1.0 + h_u)
    }
}

impl Default for TypicalityParams {
    fn default() -> Self {
        TypicalityParams {
            delta: DEFAULT_DELTA,
            epsilon: None,
        }
    }
}

/// `|N(a|seq)/n − P(a)| <= δ P(a)` for every symbol. Empty sequences are
/// not typical.
pub fn robust_typical(seq: &[usize], p: &FiniteDist, delta: f64) -> bool {
    if seq.is_empty() {
        return false;
    }
    let mut counts = vec![0usize; p.len()];
    for &s in seq {
        match counts.get_mut(s) {
            Some(c) => *c += 1,
            None => return false,
        }
    }
    typical_counts(&counts, p.probs(), seq.len(), delta)
}

fn typical_counts(counts: &[usize], p: &[f64], n: usize, delta: f64) -> bool {
    let n = n as f64;
    counts
        .iter()
        .zip(p)
        .all(|(&c, &pa)| (c as f64 / n - pa).abs() <= delta * pa)
}

/// `e^{−δ² P(a) n / 3}`.
pub fn chernoff_single_bound(p: &FiniteDist, a: usize, delta: f64, n: usize) -> Result<f64> {
    let pa = p.probs().get(a).copied().unwrap_or(0.0);
    if pa <= 0.0 {
        return Err(Error::Domain(format!("symbol {a} has zero probability")));
    }
    Ok((-delta * delta * pa * n as f64 / 3.0).exp())
}

/// `2 |S| e^{−δ² μ n / 3}`.
pub fn nontypical_prob_bound(support_size: usize, mu: f64, delta: f64, n: usize) -> f64 {
    2.0 * support_size as f64 * (-delta * delta * mu * n as f64 / 3.0).exp()
}

/// `log2(2^e + 1)` without overflow.
fn log2_one_plus_exp2(e: f64) -> f64 {
    if e > 0.0 {
        e + (-e).exp2().ln_1p() / std::f64::consts::LN_2
    } else {
        e.exp2().ln_1p() / std::f64::consts::LN_2
    }
}

/// `log2(2^{−n(R1 − i − ε')} + 1)`.
pub fn analytic_d1_bound(r1: f64, i_fuz: f64, eps_prime: f64, n: usize) -> f64 {
    log2_one_plus_exp2(-(n as f64) * (r1 - i_fuz - eps_prime))
}

/// `log2(1/μ_f + 1)`: what every term of the resolvability sum is below.
pub fn d2_vacuous_cap(mu_f: f64) -> f64 {
    (1.0 / mu_f + 1.0).log2()
}

/// `2 |S| e^{−δ² μ n / 3} · log2(1/μ_f + 1)`.
pub fn analytic_d2_bound(support_size: usize, mu: f64, mu_f: f64, delta: f64, n: usize) -> f64 {
    nontypical_prob_bound(support_size, mu, delta, n) * d2_vacuous_cap(mu_f)
}

/// `I(F; Z U)` per symbol for uniform `U`, which equals `log2|X| − H(X|Z)`.
pub fn i_fuz(j: &JointDist3) -> f64 {
    let h_x_given_z = entropy(&j.marginal_x()) - mutual_information(&j.marginal_xz());
    (j.dims().0 as f64).log2() - h_x_given_z
}

/// Single-letter law `P(u, o) = P_U(u) W(o|u)` as a flat list.
pub fn single_letter_joint(p_u: &FiniteDist, w: &Channel) -> Result<FiniteDist> {
    FiniteDist::from_probs(w.joint_with(p_u)?.probs().to_vec())
}

fn check_resolvability_inputs(p_u: &FiniteDist, w: &Channel, l1: f64) -> Result<()> {
    if p_u.len() != w.in_size() {
        return Err(Error::AlphabetMismatch("P_U and channel input differ".into()));
    }
    if !(l1 >= 1.0) {
        return Err(Error::Domain(format!("L1 must be >= 1, got {l1}")));
    }
    Ok(())
}

fn resolvability_guard(q: usize, base: usize, n: usize) -> Result<(usize, usize)> {
    let nu = checked_power(q, n, "codeword sequences")?;
    let no = checked_power(base, n, "output sequences")?;
    let need = (nu as u128) * (no as u128) * n as u128;
    if need > EXACT_GUARD {
        return Err(Error::SizeGuard {
            what: "resolvability enumeration".into(),
            requested: need,
            limit: EXACT_GUARD,
        });
    }
    Ok((nu, no))
}

/// `E[log2(W^n(O|U) / (L1 Q^n(O)) + 1)]` under `U^n ~ P_U^n`, `O ~ W^n(·|U)`.
pub fn resolvability_rhs_exact(p_u: &FiniteDist, w: &Channel, l1: f64, n: usize) -> Result<f64> {
    check_resolvability_inputs(p_u, w, l1)?;
    let (nu, _) = resolvability_guard(p_u.len(), w.out_size(), n)?;
    let target = w.apply(p_u)?;
    let q_n = sequence_likelihoods(&Channel::from_rows(vec![target.probs().to_vec()])?, &vec![0; n]);
    let pu_n = p_u.iid_extend(n)?;
    let parts: Vec<f64> = (0..nu)
        .into_par_iter()
        .map(|u| {
            let pu = pu_n.prob(u);
            if pu == 0.0 {
                return 0.0;
            }
            let mut d = vec![0; n];
            digits_of(u, p_u.len(), &mut d);
            sequence_likelihoods(w, &d)
                .iter()
                .zip(&q_n)
                .filter(|(wv, _)| **wv > 0.0)
                .map(|(wv, qv)| pu * wv * (wv / (l1 * qv) + 1.0).log2())
                .sum()
        })
        .collect();
    Ok(parts.iter().sum())
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// Sampled version of [`resolvability_rhs_exact`].
pub fn resolvability_rhs_mc(
    p_u: &FiniteDist,
    w: &Channel,
    l1: f64,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<Estimate> {
    check_resolvability_inputs(p_u, w, l1)?;
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    let target = w.apply(p_u)?;
    let log_q1: Vec<f64> = target.probs().iter().map(|p| p.log2()).collect();
    let cdf_u = cumulative(p_u.probs());
    let cdf_rows: Vec<Vec<f64>> = (0..w.in_size()).map(|u| cumulative(w.row(u))).collect();
    let log_l1 = l1.log2();
    let blocks = trials.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let len = MC_CHUNK.min(trials - b * MC_CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let mut lr = -log_l1;
                for _ in 0..n {
                    let u = sample_index(&cdf_u, &mut rng);
                    let o = sample_index(&cdf_rows[u], &mut rng);
                    lr += w.get(u, o).log2() - log_q1[o];
                }
                let v = log2_one_plus_exp2(lr);
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let t = trials as f64;
    let mean = s1 / t;
    let var = if trials > 1 {
        ((s2 - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate {
        mean,
        std_error: (var / t).sqrt(),
        trials,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct D1D2 {
    /// Contribution of robustly typical `(u^n, o^n)`.
    pub d1: f64,
    pub d2: f64,
    pub total: f64,
    /// Probability that `(u^n, o^n)` is not robustly typical.
    pub nontypical_prob: f64,
}

/// Splits the resolvability expectation by δ-robust typicality of the
/// joint sequence of letters `(u_i, o_i)` under `P_U(u) W(o|u)`.
pub fn d1_d2_split(
    p_u: &FiniteDist,
    w: &Channel,
    l1: f64,
    n: usize,
    params: &TypicalityParams,
) -> Result<D1D2> {
    check_resolvability_inputs(p_u, w, l1)?;
    let q = p_u.len();
    let base = w.out_size();
    let (nu, no) = resolvability_guard(q, base, n)?;
    let target = w.apply(p_u)?;
    let joint = single_letter_joint(p_u, w)?;
    let delta = params.delta;
    let parts: Vec<(f64, f64, f64, f64)> = (0..nu)
        .into_par_iter()
        .map(|u| {
            let mut du = vec![0; n];
            let mut dout = vec![0; n];
            let mut counts = vec![0usize; q * base];
            digits_of(u, q, &mut du);
            let pu: f64 = du.iter().map(|&a| p_u.prob(a)).product();
            let (mut d1, mut d2, mut total, mut nontyp) = (0.0, 0.0, 0.0, 0.0);
            if pu == 0.0 {
                return (d1, d2, total, nontyp);
            }
            for o in 0..no {
                digits_of(o, base, &mut dout);
                let mut wv = 1.0;
                let mut qv = 1.0;
                counts.iter_mut().for_each(|c| *c = 0);
                for i in 0..n {
                    wv *= w.get(du[i], dout[i]);
                    qv *= target.prob(dout[i]);
                    counts[du[i] * base + dout[i]] += 1;
                }
                if wv == 0.0 {
                    continue;
                }
                let mass = pu * wv;
                let term = mass * (wv / (l1 * qv) + 1.0).log2();
                total += term;
                if typical_counts(&counts, joint.probs(), n, delta) {
                    d1 += term;
                } else {
                    d2 += term;
                    nontyp += mass;
                }
            }
            (d1, d2, total, nontyp)
        })
        .collect();
    let sum = parts.iter().fold((0.0, 0.0, 0.0, 0.0), |a, b| {
        (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3)
    });
    Ok(D1D2 {
        d1: sum.0,
        d2: sum.1,
        total: sum.2,
        nontypical_prob: sum.3,
    })
}

/// One line of a blocklength / rate sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    pub codebook: usize,
    pub seed: u64,
    pub pe: f64,
    #[serde(rename = "effSecrecy")]
    pub eff_secrecy: f64,
    #[serde(rename = "effSecrecyPerSymbol")]
    pub eff_secrecy_per_symbol: f64,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    #[serde(rename = "d1Bound")]
    pub d1_bound: Option<f64>,
    #[serde(rename = "d2Bound")]
    pub d2_bound: Option<f64>,
    #[serde(rename = "skLower")]
    pub sk_lower: f64,
    #[serde(rename = "skUpper")]
    pub sk_upper: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
