//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sskg::bounds::{confusion_rate_threshold, covert_key_budget, sk_bounds, BudgetParams};
use sskg::degrade::{
    construct_coupling, cwtc_build, cwtc_degraded_check, default_order_grid, factorization_residual,
    markov_test, nakagami_order_report, stochastic_degradedness_test, VerdictKind, DEFAULT_LP_TOL,
    DEFAULT_MARKOV_TOL,
};
use sskg::protocol::{
    analytic_d2_bound, crypto_lemma_check, d1_d2_split, d2_vacuous_cap, generate_codebook,
    induced_output_dist, resolvability_rhs_exact, run_protocol_exact, single_letter_joint, split_fz,
    stealth_decomposition_check, target_output_dist, willie_channel, CodebookSpec, TypicalityParams,
};
use sskg::sources::{bsc_cascade, quantize, satellite_sample, Fade, QuantizerSpec, SatelliteSpec};
use sskg::special::{ks_distance, nakagami_power_cdf, NakagamiSpec};
use sskg::{conditional_mutual_information, Channel, CmiPattern, FiniteDist, JointDist3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn cascade() -> JointDist3 {
    bsc_cascade(0.1, 0.2).unwrap()
}

fn uniform2() -> FiniteDist {
    FiniteDist::uniform(2).unwrap()
}

fn random_dist<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn random_joint<R: Rng>(rng: &mut R) -> JointDist3 {
    let dims = (
        rng.random_range(2..=4),
        rng.random_range(2..=4),
        rng.random_range(2..=4),
    );
    // Sparse cells keep zero-mass edge cases in the mix.
    let mut w: Vec<f64> = (0..dims.0 * dims.1 * dims.2)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    let s: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.into_iter().map(|v| v / s).collect();
    let t: f64 = p.iter().sum();
    let i = p.iter().position(|&v| v > 0.0).unwrap();
    p[i] += 1.0 - t;
    JointDist3::from_flat(dims, p).unwrap()
}

fn markov_fixtures() -> Vec<(String, JointDist3)> {
    let mut v: Vec<(String, JointDist3)> = [(0.1, 0.2), (0.0, 0.0), (0.5, 0.3), (0.05, 0.4), (0.3, 0.0)]
        .iter()
        .map(|&(p, q)| (format!("cascade({p},{q})"), bsc_cascade(p, q).unwrap()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for k in 0..3 {
        let px = FiniteDist::from_probs(random_dist(3, &mut rng)).unwrap();
        let yx = Channel::from_rows((0..3).map(|_| random_dist(3, &mut rng)).collect()).unwrap();
        let zy = Channel::from_rows((0..3).map(|_| random_dist(2, &mut rng)).collect()).unwrap();
        v.push((
            format!("ternary chain {k}"),
            JointDist3::markov_chain(&px, &yx, &zy).unwrap(),
        ));
    }
    v
}

fn c1_markov_collapse() -> Outcome {
    let b = sk_bounds(&cascade());
    let oracle = (1.0 - h2(0.1)) - (1.0 - h2(0.1 * 0.8 + 0.9 * 0.2));
    let pass = (b.lower - oracle).abs() <= 1e-9
        && (b.upper - oracle).abs() <= 1e-9
        && (b.lower_xy - oracle).abs() <= 1e-9
        && (oracle - 0.357753).abs() < 5e-6;
    Outcome {
        pass,
        detail: format!("lower {:.9} upper {:.9} oracle {:.9}", b.lower, b.upper, oracle),
    }
}

fn c2_bound_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let b = sk_bounds(&random_joint(&mut rng));
        worst = worst.max(b.lower - b.upper);
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("10000 instances, max(lower - upper) = {worst:.3e}"),
    }
}

/// Exact runs at n ∈ {1,2,3}, 20 codebooks each, on the cascade.
fn identity_runs() -> Vec<(
    usize,
    u64,
    sskg::protocol::Codebook,
    sskg::protocol::ProtocolReport,
)> {
    let j = cascade();
    let mut out = Vec::new();
    for n in 1..=3 {
        for k in 0..20u64 {
            let seed = 100 * n as u64 + k;
            let spec = CodebookSpec::new(n, 0.5, 0.5, 2, seed).unwrap();
            let cb = generate_codebook(&spec, &uniform2()).unwrap();
            let r = run_protocol_exact(&j, &cb).unwrap();
            out.push((n, seed, cb, r));
        }
    }
    out
}

fn c3_effective_secrecy(
    runs: &[(
        usize,
        u64,
        sskg::protocol::Codebook,
        sskg::protocol::ProtocolReport,
    )],
) -> Outcome {
    let mut worst_split: f64 = 0.0;
    let mut worst_comb: f64 = 0.0;
    let mut worst_nonneg: f64 = 0.0;
    for (_, _, _, r) in runs {
        worst_split = worst_split.max((r.non_confusion + r.non_stealth - r.eff_secrecy).abs());
        worst_comb = worst_comb.max((r.combined_metric - r.eff_secrecy - r.uniformity_gap).abs());
        worst_nonneg = worst_nonneg.min(r.non_confusion.min(r.non_stealth));
    }
    Outcome {
        pass: worst_split <= 1e-12 && worst_comb <= 1e-12 && worst_nonneg >= 0.0,
        detail: format!(
            "{} runs, max |I + D - Deff| = {worst_split:.2e}, max |combined - Deff - gap| = {worst_comb:.2e}",
            runs.len()
        ),
    }
}

fn c4_chain_decomposition(
    runs: &[(
        usize,
        u64,
        sskg::protocol::Codebook,
        sskg::protocol::ProtocolReport,
    )],
) -> Outcome {
    let j = cascade();
    let w = willie_channel(&j).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_cross: f64 = 0.0;
    for (n, _, cb, r) in runs {
        let target = split_fz(&target_output_dist(&uniform2(), &w, *n).unwrap(), 2, 2, *n).unwrap();
        let induced = split_fz(&induced_output_dist(cb, &w).unwrap(), 2, 2, *n).unwrap();
        let d = stealth_decomposition_check(&induced, &target).unwrap();
        worst = worst.max((d.total - d.d_f - d.d_z_given_f).abs());
        worst = worst.max((r.non_stealth - r.d_f.unwrap() - r.d_z_given_f.unwrap()).abs());
        worst_cross = worst_cross.max((d.total - r.non_stealth).abs());
    }
    Outcome {
        pass: worst <= 1e-12 && worst_cross <= 1e-12,
        detail: format!("max |total - dF - dZ|F| = {worst:.2e}, library vs simulator {worst_cross:.2e}"),
    }
}

fn c5_resolvability_partition() -> Outcome {
    let j = cascade();
    let w = willie_channel(&j).unwrap();
    let thr = confusion_rate_threshold(&j, 1.0).unwrap();
    let joint = single_letter_joint(&uniform2(), &w).unwrap();
    let (support, mu) = (joint.support_size(), joint.min_positive());
    let mut worst: f64 = 0.0;
    let mut bound_ok = true;
    let mut checked = 0;
    let mut tested = 0;
    for n in [2, 4] {
        let spec = CodebookSpec::new(n, 0.25, thr + 0.25, 2, 0).unwrap();
        let l1 = spec.l1() as f64;
        let total = resolvability_rhs_exact(&uniform2(), &w, l1, n).unwrap();
        let mu_f = 2f64.powi(-(n as i32));
        let cap = d2_vacuous_cap(mu_f);
        for delta in [0.1, 0.2, 0.5] {
            let s = d1_d2_split(&uniform2(), &w, l1, n, &TypicalityParams::new(delta).unwrap()).unwrap();
            worst = worst.max((s.d1 + s.d2 - total).abs());
            tested += 1;
            // Every term is at most the cap, so this holds with or without
            // the concentration bound being informative.
            bound_ok &= s.d2 <= s.nontypical_prob * cap + 1e-12;
            let bound = analytic_d2_bound(support, mu, mu_f, delta, n);
            if bound < cap {
                checked += 1;
                bound_ok &= s.d2 <= bound + 1e-12;
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12 && bound_ok,
        detail: format!(
            "{tested} (n, delta) points, max |d1 + d2 - total| = {worst:.2e}; analytic d2 bound below its cap at {checked} points"
        ),
    }
}

fn c6_threshold_trend() -> Outcome {
    let j = cascade();
    let thr = confusion_rate_threshold(&j, 1.0).unwrap();
    let mean_at = |n: usize, r1: f64| -> f64 {
        let total: f64 = (0..32u64)
            .map(|k| {
                let spec = CodebookSpec::new(n, 0.25, r1, 2, 10_000 * n as u64 + k).unwrap();
                let cb = generate_codebook(&spec, &uniform2()).unwrap();
                run_protocol_exact(&j, &cb).unwrap().eff_secrecy_per_symbol
            })
            .sum();
        total / 32.0
    };
    let above: Vec<f64> = [2, 4, 6, 8].iter().map(|&n| mean_at(n, thr + 0.25)).collect();
    let below: Vec<f64> = [2, 4, 6, 8]
        .iter()
        .map(|&n| mean_at(n, (thr - 0.25).max(0.0)))
        .collect();
    let pass = above[3] < above[0] && below[3] >= below[0] - 1e-9;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    Outcome {
        pass,
        detail: format!("n=2,4,6,8 above: {} | below: {}", fmt(&above), fmt(&below)),
    }
}

fn c7_cwtc() -> Outcome {
    let u = uniform2();
    let mut worst: f64 = 0.0;
    let mut all_markov = true;
    for (_, j) in markov_fixtures().iter().filter(|(_, j)| j.dims().0 == 2) {
        all_markov &= markov_test(j, DEFAULT_MARKOV_TOL);
        let c = cwtc_build(j, &u).unwrap();
        worst = worst.max(conditional_mutual_information(&c, CmiPattern::XZGivenY));
        all_markov &= cwtc_degraded_check(&c, 1e-10);
    }
    let u3 = FiniteDist::uniform(3).unwrap();
    for (_, j) in markov_fixtures().iter().filter(|(_, j)| j.dims().0 == 3) {
        let c = cwtc_build(j, &u3).unwrap();
        worst = worst.max(conditional_mutual_information(&c, CmiPattern::XZGivenY));
    }
    let copy = JointDist3::from_flat((2, 2, 2), vec![0.25, 0.0, 0.25, 0.0, 0.0, 0.25, 0.0, 0.25]).unwrap();
    let counter = conditional_mutual_information(&cwtc_build(&copy, &u).unwrap(), CmiPattern::XZGivenY);
    Outcome {
        pass: all_markov && worst <= 1e-10 && counter > 0.01,
        detail: format!("Markov fixtures max I(U;Z'|Y') = {worst:.2e}; counterexample {counter:.4}"),
    }
}

fn c8_lp_witness() -> Outcome {
    let mut worst_res: f64 = 0.0;
    let mut witnesses_ok = true;
    for (_, j) in markov_fixtures() {
        let v = stochastic_degradedness_test(&j, DEFAULT_LP_TOL).unwrap();
        if v.kind != VerdictKind::Stochastic {
            witnesses_ok = false;
            continue;
        }
        let w = v.witness.unwrap();
        let rows_ok = (0..w.in_size()).all(|y| {
            let r = w.row(y);
            r.iter().all(|&p| p >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() <= 1e-12
        });
        let res = factorization_residual(&j, &w).unwrap();
        witnesses_ok &= rows_ok && res <= DEFAULT_LP_TOL;
        worst_res = worst_res.max(res);
    }

    let rev = cascade().swap_yz();
    let verdict = stochastic_degradedness_test(&rev, 1e-6).unwrap();
    let (px, pyx, pzx) = (rev.marginal_x(), rev.marginal_xy(), rev.marginal_xz());
    let cond = |x: usize, row: &[f64]| -> Vec<f64> { row.iter().map(|p| p / px.prob(x)).collect() };
    let py: Vec<Vec<f64>> = (0..2).map(|x| cond(x, pyx.row(x))).collect();
    let pz: Vec<Vec<f64>> = (0..2).map(|x| cond(x, pzx.row(x))).collect();
    let h = 1e-3;
    let steps = 1000;
    let mut grid_min = f64::INFINITY;
    for ia in 0..=steps {
        let a = ia as f64 * h;
        for ib in 0..=steps {
            let b = ib as f64 * h;
            let w = [[1.0 - a, a], [b, 1.0 - b]];
            let mut r = 0.0;
            for x in 0..2 {
                for z in 0..2 {
                    r += (pz[x][z] - (py[x][0] * w[0][z] + py[x][1] * w[1][z])).abs();
                }
            }
            grid_min = grid_min.min(r);
        }
    }
    // Each factorized entry moves by at most |Δa| + |Δb| <= h between a
    // point and its nearest grid neighbour; four entries give 4h.
    let certified = grid_min - 4.0 * h;
    let rev_ok =
        verdict.kind == VerdictKind::None && certified > 1e-6 && verdict.residual >= certified - 1e-12;
    Outcome {
        pass: witnesses_ok && worst_res <= 1e-8 && rev_ok,
        detail: format!(
            "physical fixtures max residual {worst_res:.2e}; reversed cascade LP residual {:.4}, grid lower bound {certified:.4}",
            verdict.residual
        ),
    }
}

fn c9_nakagami_order() -> Outcome {
    let (s13, s12) = (
        NakagamiSpec::new(1.0, 3.0).unwrap(),
        NakagamiSpec::new(1.0, 2.0).unwrap(),
    );
    let grid = default_order_grid(&s13, &s12).unwrap();
    let fwd = nakagami_order_report(&s13, &s12, &grid).unwrap();
    let rev = nakagami_order_report(&s12, &s13, &grid).unwrap();
    let violation = rev.first_violation.map(|v| v.x);
    Outcome {
        pass: grid.len() == 514 && fwd.holds && !rev.holds && violation.is_some(),
        detail: format!(
            "{} grid points, (1,3) vs (1,2) holds: {}; reversed holds: {}, first violation at x = {:.4}",
            grid.len(),
            fwd.holds,
            rev.holds,
            violation.unwrap_or(f64::NAN)
        ),
    }
}

fn c10_coupling() -> Outcome {
    let (s13, s12) = (
        NakagamiSpec::new(1.0, 3.0).unwrap(),
        NakagamiSpec::new(1.0, 2.0).unwrap(),
    );
    let c = construct_coupling(&s13, &s12, 100_000, 10).unwrap();
    let frac = c.dominated_fraction();
    let mut xs: Vec<f64> = c.pairs.iter().map(|p| p.0).collect();
    let mut zs: Vec<f64> = c.pairs.iter().map(|p| p.1).collect();
    let kx = ks_distance(&mut xs, |x| nakagami_power_cdf(&s13, x));
    let kz = ks_distance(&mut zs, |x| nakagami_power_cdf(&s12, x));
    Outcome {
        pass: frac == 1.0 && kx <= 0.01 && kz <= 0.01,
        detail: format!("dominated fraction {frac}, KS X {kx:.4}, KS Z {kz:.4}"),
    }
}

fn c11_crypto_lemma(
    runs: &[(
        usize,
        u64,
        sskg::protocol::Codebook,
        sskg::protocol::ProtocolReport,
    )],
) -> Outcome {
    let worst_f = runs
        .iter()
        .map(|r| r.3.f_uniformity_error.unwrap())
        .fold(0.0, f64::max);
    let mut worst_ind: f64 = 0.0;
    for n in 1..=3 {
        let (fu, ind) = crypto_lemma_check(&cascade().marginal_x(), &uniform2(), n).unwrap();
        worst_ind = worst_ind.max(ind).max(fu);
    }
    Outcome {
        pass: worst_f <= 1e-12 && worst_ind <= 1e-12,
        detail: format!(
            "max |P_F - uniform| over runs {worst_f:.2e}; F-X dependence under U^n ~ P_U^n {worst_ind:.2e}"
        ),
    }
}

fn c12_budget() -> Outcome {
    let p = BudgetParams::new(10_000, 0.1, 0.05).unwrap();
    let worked = covert_key_budget(0.1, 0.02, &p).unwrap();
    let oracle = 0.05 * (10_000f64).sqrt() * (1.1 * 0.1 - 0.9 * 0.02);
    let clamped = [(0.0, 0.0), (0.05, 0.2), (0.09, 0.11), (0.0, 1.0)]
        .iter()
        .all(|&(dz, dy)| covert_key_budget(dz, dy, &p).unwrap() == 0.0);
    Outcome {
        pass: clamped && (worked - oracle).abs() <= 1e-12 && (worked - 0.46).abs() <= 1e-12,
        detail: format!("worked case {worked:.15} bits, clamp region exact zero: {clamped}"),
    }
}

fn c13_satellite() -> Outcome {
    let sym = SatelliteSpec::new(1.0, Fade::Constant(1.0), Fade::Constant(1.0)).unwrap();
    let s = satellite_sample(&sym, 1_000_000, 13).unwrap();
    let q16 = QuantizerSpec::gaussian_equiprobable(&s, 16).unwrap();
    let b = sk_bounds(&quantize(&s, &q16).unwrap());
    let q64 = QuantizerSpec::gaussian_equiprobable(&s, 64).unwrap();
    let j64 = quantize(&s, &q64).unwrap();
    let mi = sskg::mutual_information(&j64.marginal_xy());
    let oracle = 0.5 * (1.0f64 + 1.0).log2();
    Outcome {
        pass: b.lower_xy.abs() <= 0.02 && (mi - oracle).abs() <= 0.02,
        detail: format!(
            "16 bins: I(X;Y) - I(X;Z) = {:+.4} (other difference term {:.4}); 64 bins: I(X;Y) = {mi:.4} vs {oracle}",
            b.lower_xy, b.lower_yx
        ),
    }
}

fn main() {
    let runs = identity_runs();
    type Check<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);
    let checks: Vec<Check> = vec![
        ("Markov collapse", Box::new(c1_markov_collapse)),
        ("bound ordering", Box::new(c2_bound_ordering)),
        (
            "effective-secrecy identities",
            Box::new(|| c3_effective_secrecy(&runs)),
        ),
        (
            "divergence chain decomposition",
            Box::new(|| c4_chain_decomposition(&runs)),
        ),
        ("resolvability partition", Box::new(c5_resolvability_partition)),
        ("threshold trend", Box::new(c6_threshold_trend)),
        ("conceptual wiretap degradedness", Box::new(c7_cwtc)),
        ("stochastic degradedness witness", Box::new(c8_lp_witness)),
        ("Nakagami order example", Box::new(c9_nakagami_order)),
        ("coupling", Box::new(c10_coupling)),
        ("crypto lemma", Box::new(|| c11_crypto_lemma(&runs))),
        ("budget algebra", Box::new(c12_budget)),
        ("satellite symmetry", Box::new(c13_satellite)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!(
            "{tag} {:>2} {name}: {} [{:.2}s]",
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
