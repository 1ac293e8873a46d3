//! Subcommand handlers: resolve parameters, validate, compute, emit.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sskg::bounds::{
    confusion_rate_threshold, covert_key_budget, key_schedule, sk_bounds, sskg_rate_sufficient,
    total_rate_bound, BudgetParams, KeySchedule, SkBounds, SpendMode,
};
use sskg::degrade::{classify, default_order_grid, nakagami_order_report, DegradednessVerdict, OrderReport};
use sskg::protocol::{
    analytic_d1_bound, analytic_d2_bound, d1_d2_split, generate_codebook, i_fuz, run_protocol_exact,
    run_protocol_mc, single_letter_joint, willie_channel, write_sweep_csv, CodebookSpec, ProtocolMode,
    ProtocolReport, SweepRow, TypicalityParams, D1D2,
};
use sskg::sources::{bsc_cascade, quantize, satellite_sample, QuantizerSpec, SatelliteSpec};
use sskg::special::NakagamiSpec;
use sskg::{Error, FiniteDist, JointDist3};

use crate::config::{
    overlay, overlay_opt, BoundsParams, BudgetCfg, ConfigFile, DegradeParams, OrderParams, Resolved,
    SatelliteParams, SimulateParams,
};
use crate::output::{csv_text, emit, write_file};
use crate::{Cli, Command, Failure};

fn with_globals<P>(cli: &Cli, file: &ConfigFile, params: P) -> Resolved<P> {
    Resolved {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        output: cli.output.clone().or_else(|| file.output.clone()),
        format: cli.format.or(file.format).unwrap_or_default(),
        params,
    }
}

pub fn dispatch(cli: &Cli, file: ConfigFile) -> Result<(), Failure> {
    match &cli.command {
        Command::Bounds(a) => {
            let mut p = file.bounds.clone().unwrap_or_default();
            overlay_opt!(p, a; dist_file);
            bounds(&with_globals(cli, &file, p))
        }
        Command::Degrade(a) => {
            let mut p = file.degrade.clone().unwrap_or_default();
            overlay_opt!(p, a; dist_file);
            overlay!(p, a; tol, markov_tol);
            degrade(&with_globals(cli, &file, p))
        }
        Command::Order(a) => {
            let mut p = file.order.clone().unwrap_or_default();
            overlay_opt!(p, a; mx, wx, mz, wz, grid);
            order(&with_globals(cli, &file, p))
        }
        Command::Satellite(a) => {
            let mut p = file.satellite.clone().unwrap_or_default();
            overlay!(p, a; source_variance, fade_x, fade_z, n, bins, batches);
            overlay_opt!(p, a; raw_csv);
            satellite(&with_globals(cli, &file, p))
        }
        Command::Simulate(a) => {
            let mut p = file.simulate.clone().unwrap_or_default();
            overlay_opt!(p, a; source, epsilon, sweep_csv);
            overlay!(p, a; n, r, r1, codebooks, delta, trials);
            if let Some(c) = &a.cascade {
                p.cascade = Some(pair(c)?);
            }
            if let Some(m) = a.mode {
                p.mode = m.into();
            }
            p.r1_relative |= a.r1_relative;
            simulate(&with_globals(cli, &file, p))
        }
        Command::Budget(a) => {
            let mut p = file.budget.clone().unwrap_or_default();
            overlay_opt!(p, a; source, dz, dy, xi, n, omega);
            overlay!(p, a; c);
            if let Some(c) = &a.cascade {
                p.cascade = Some(pair(c)?);
            }
            p.per_block |= a.per_block;
            budget(&with_globals(cli, &file, p))
        }
    }
}

fn pair(v: &[f64]) -> Result<[f64; 2], Failure> {
    match v {
        [p, q] => Ok([*p, *q]),
        _ => Err(Failure::Validation(format!(
            "--cascade takes p,q; got {} values",
            v.len()
        ))),
    }
}

fn required<T: Copy>(v: Option<T>, name: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Validation(format!("missing required parameter {name}")))
}

/// Reads a joint distribution; parse errors carry line and column.
fn load_joint(path: &Path) -> Result<JointDist3, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn load_source(source: &Option<PathBuf>, cascade: Option<[f64; 2]>) -> Result<Option<JointDist3>, Failure> {
    match (source, cascade) {
        (Some(_), Some(_)) => Err(Failure::Validation(
            "give either a source file or a cascade, not both".into(),
        )),
        (Some(p), None) => load_joint(p).map(Some),
        (None, Some([p, q])) => Ok(Some(bsc_cascade(p, q)?)),
        (None, None) => Ok(None),
    }
}

fn bounds(cfg: &Resolved<BoundsParams>) -> Result<(), Failure> {
    let path = cfg
        .params
        .dist_file
        .as_deref()
        .ok_or_else(|| Failure::Validation("missing distribution file".into()))?;
    let b = sk_bounds(&load_joint(path)?);
    emit("bounds", cfg, &b, || csv_text(&[b]), &[])
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct VerdictRow {
    kind: sskg::degrade::VerdictKind,
    residual: f64,
    tol: f64,
}

fn degrade(cfg: &Resolved<DegradeParams>) -> Result<(), Failure> {
    let p = &cfg.params;
    let path = p
        .dist_file
        .as_deref()
        .ok_or_else(|| Failure::Validation("missing distribution file".into()))?;
    for (name, t) in [("tol", p.tol), ("markov-tol", p.markov_tol)] {
        if t.is_nan() || t < 0.0 {
            return Err(Failure::Validation(format!("{name} must be >= 0, got {t}")));
        }
    }
    let v: DegradednessVerdict = classify(&load_joint(path)?, p.markov_tol, p.tol)?;
    let row = VerdictRow {
        kind: v.kind,
        residual: v.residual,
        tol: v.tol,
    };
    emit("degrade", cfg, &v, || csv_text(&[row]), &[])
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct OrderRow {
    holds: bool,
    grid_points: usize,
    violation_x: Option<f64>,
    ccdf_dominated: Option<f64>,
    ccdf_dominating: Option<f64>,
}

fn order(cfg: &Resolved<OrderParams>) -> Result<(), Failure> {
    let p = &cfg.params;
    let x = NakagamiSpec::new(required(p.mx, "mx")?, required(p.wx, "wx")?)?;
    let z = NakagamiSpec::new(required(p.mz, "mz")?, required(p.wz, "wz")?)?;
    let grid = match &p.grid {
        Some(g) if g.is_empty() => return Err(Failure::Validation("grid must not be empty".into())),
        Some(g) => g.clone(),
        None => default_order_grid(&x, &z)?,
    };
    let r: OrderReport = nakagami_order_report(&x, &z, &grid)?;
    let fv = r.first_violation.as_ref();
    let row = OrderRow {
        holds: r.holds,
        grid_points: r.grid_points,
        violation_x: fv.map(|v| v.x),
        ccdf_dominated: fv.map(|v| v.ccdf_dominated),
        ccdf_dominating: fv.map(|v| v.ccdf_dominating),
    };
    emit("order", cfg, &r, || csv_text(&[row]), &[])
}

/// Standard errors of the bound components across sample batches.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct BoundsError {
    #[serde(rename = "lowerXY")]
    lower_xy: f64,
    #[serde(rename = "lowerYX")]
    lower_yx: f64,
    #[serde(rename = "upperMI")]
    upper_mi: f64,
    #[serde(rename = "upperCMI")]
    upper_cmi: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SatelliteReport {
    samples: usize,
    bins: usize,
    batches: usize,
    bounds: SkBounds,
    std_error: BoundsError,
    raw_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct SatelliteRow {
    samples: usize,
    bins: usize,
    #[serde(rename = "lowerXY")]
    lower_xy: f64,
    #[serde(rename = "lowerYX")]
    lower_yx: f64,
    #[serde(rename = "upperMI")]
    upper_mi: f64,
    #[serde(rename = "upperCMI")]
    upper_cmi: f64,
    lower: f64,
    upper: f64,
    #[serde(rename = "lowerStdError")]
    lower_se: f64,
    #[serde(rename = "upperStdError")]
    upper_se: f64,
}

fn std_error(v: &[f64]) -> f64 {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

fn satellite(cfg: &Resolved<SatelliteParams>) -> Result<(), Failure> {
    let p = &cfg.params;
    let spec = SatelliteSpec::new(p.source_variance, p.fade_x, p.fade_z)?;
    if p.bins < 2 {
        return Err(Failure::Validation(format!("bins must be >= 2, got {}", p.bins)));
    }
    if p.batches < 2 || p.n < p.batches * p.bins {
        return Err(Failure::Validation(format!(
            "need batches >= 2 and n >= batches * bins, got n = {}, batches = {}, bins = {}",
            p.n, p.batches, p.bins
        )));
    }
    let samples = satellite_sample(&spec, p.n, cfg.seed)?;
    if let Some(path) = &p.raw_csv {
        let f = std::fs::File::create(path)
            .map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))?;
        samples.write_csv(std::io::BufWriter::new(f))?;
    }
    let q = QuantizerSpec::gaussian_equiprobable(&samples, p.bins)?;
    let b = sk_bounds(&quantize(&samples, &q)?);
    let parts: Vec<SkBounds> = samples
        .batches(p.batches)
        .iter()
        .map(|s| quantize(s, &q).map(|j| sk_bounds(&j)))
        .collect::<Result<_, Error>>()?;
    let se = |f: fn(&SkBounds) -> f64| std_error(&parts.iter().map(f).collect::<Vec<_>>());
    let std_error = BoundsError {
        lower_xy: se(|b| b.lower_xy),
        lower_yx: se(|b| b.lower_yx),
        upper_mi: se(|b| b.upper_mi),
        upper_cmi: se(|b| b.upper_cmi),
        lower: se(|b| b.lower),
        upper: se(|b| b.upper),
    };
    let report = SatelliteReport {
        samples: p.n,
        bins: p.bins,
        batches: p.batches,
        bounds: b,
        std_error,
        raw_csv: p.raw_csv.clone(),
    };
    let row = SatelliteRow {
        samples: p.n,
        bins: p.bins,
        lower_xy: b.lower_xy,
        lower_yx: b.lower_yx,
        upper_mi: b.upper_mi,
        upper_cmi: b.upper_cmi,
        lower: b.lower,
        upper: b.upper,
        lower_se: std_error.lower,
        upper_se: std_error.upper,
    };
    emit("satellite", cfg, &report, || csv_text(&[row]), &[])
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Run {
    n: usize,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "R1")]
    r1: f64,
    codebook: usize,
    seed: u64,
    requested_mode: ProtocolMode,
    report: ProtocolReport,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Resolvability {
    n: usize,
    #[serde(rename = "R1")]
    r1: f64,
    l1: usize,
    split: Option<D1D2>,
    d1_bound: f64,
    d2_bound: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SimulateReport {
    sk: SkBounds,
    confusion_threshold: f64,
    total_rate_bound: f64,
    runs: Vec<Run>,
    means: Vec<CodebookMean>,
    resolvability: Vec<Resolvability>,
}

/// Averages over the random codebooks of one `(n, R1)` point.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CodebookMean {
    n: usize,
    #[serde(rename = "R1")]
    r1: f64,
    codebooks: usize,
    pe: f64,
    eff_secrecy: f64,
    eff_secrecy_per_symbol: f64,
}

fn codebook_means(rows: &[SweepRow]) -> Vec<CodebookMean> {
    let mut out: Vec<CodebookMean> = Vec::new();
    for r in rows {
        let pos = out
            .iter()
            .position(|m| m.n == r.n && m.r1.to_bits() == r.r1.to_bits());
        let m = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push(CodebookMean {
                    n: r.n,
                    r1: r.r1,
                    codebooks: 0,
                    pe: 0.0,
                    eff_secrecy: 0.0,
                    eff_secrecy_per_symbol: 0.0,
                });
                out.last_mut().unwrap()
            }
        };
        m.codebooks += 1;
        m.pe += r.pe;
        m.eff_secrecy += r.eff_secrecy;
        m.eff_secrecy_per_symbol += r.eff_secrecy_per_symbol;
    }
    for m in &mut out {
        let k = m.codebooks as f64;
        m.pe /= k;
        m.eff_secrecy /= k;
        m.eff_secrecy_per_symbol /= k;
    }
    out
}

fn simulate(cfg: &Resolved<SimulateParams>) -> Result<(), Failure> {
    let p = &cfg.params;
    let j = load_source(&p.source, p.cascade)?
        .ok_or_else(|| Failure::Validation("simulate needs --source or --cascade".into()))?;
    if p.n.is_empty() || p.r1.is_empty() {
        return Err(Failure::Validation("n and R1 lists must not be empty".into()));
    }
    if p.codebooks == 0 {
        return Err(Failure::Validation("codebooks must be >= 1".into()));
    }
    if p.trials == 0 {
        return Err(Failure::Validation("trials must be >= 1".into()));
    }
    let typ = match p.epsilon {
        Some(e) => TypicalityParams::with_epsilon(p.delta, e)?,
        None => TypicalityParams::new(p.delta)?,
    };
    let q = j.dims().0;
    let h_u = (q as f64).log2();
    let p_u = FiniteDist::uniform(q)?;
    let sk = sk_bounds(&j);
    let threshold = confusion_rate_threshold(&j, h_u)?;
    let rate_cap = total_rate_bound(&j, h_u)?;
    let r1s: Vec<f64> =
        p.r1.iter()
            .map(|&r1| {
                if p.r1_relative {
                    (threshold + r1).max(0.0)
                } else {
                    r1
                }
            })
            .collect();

    // Validate every codebook before any work is done.
    let mut specs = Vec::new();
    for &n in &p.n {
        for &r1 in &r1s {
            for k in 0..p.codebooks {
                let seed = cfg.seed.wrapping_add(k as u64);
                specs.push((k, CodebookSpec::new(n, p.r, r1, q, seed)?));
            }
        }
    }

    let mut warnings = Vec::new();
    if p.r + r1s.iter().cloned().fold(f64::MIN, f64::max) > rate_cap {
        warnings.push(format!(
            "R + R1 exceeds H(U) - H(X|Y) = {rate_cap:.6} for some runs; Bob cannot decode reliably"
        ));
    }
    let w = willie_channel(&j)?;
    let joint = single_letter_joint(&p_u, &w)?;
    let (support, mu) = (joint.support_size(), joint.min_positive());
    let mut runs = Vec::with_capacity(specs.len());
    let mut rows = Vec::with_capacity(specs.len());
    let mut resolvability = Vec::new();
    let mut split_cache: Vec<((usize, u64), Option<D1D2>)> = Vec::new();
    for (k, spec) in specs {
        let n = spec.n;
        let mu_f = (q as f64).powi(-(n as i32));
        let d1_bound = analytic_d1_bound(spec.r1, i_fuz(&j), typ.eps_prime(h_u), n);
        let d2_bound = analytic_d2_bound(support, mu, mu_f, typ.delta, n);
        let key = (n, spec.r1.to_bits());
        let split = match split_cache.iter().find(|(k, _)| *k == key) {
            Some((_, s)) => *s,
            None => {
                let s = match d1_d2_split(&p_u, &w, spec.l1() as f64, n, &typ) {
                    Ok(s) => Some(s),
                    Err(e) if e.is_infeasible() => {
                        warnings.push(format!(
                            "n = {n}, R1 = {}: resolvability split skipped: {e}",
                            spec.r1
                        ));
                        None
                    }
                    Err(e) => return Err(e.into()),
                };
                split_cache.push((key, s));
                resolvability.push(Resolvability {
                    n,
                    r1: spec.r1,
                    l1: spec.l1(),
                    split: s,
                    d1_bound,
                    d2_bound,
                });
                s
            }
        };

        let cb = generate_codebook(&spec, &p_u)?;
        let mc_seed = !spec.seed;
        let report = match p.mode {
            ProtocolMode::MonteCarlo => run_protocol_mc(&j, &cb, p.trials, mc_seed)?,
            ProtocolMode::Exact => match spec
                .exact_guard(j.dims())
                .and_then(|_| run_protocol_exact(&j, &cb))
            {
                Ok(r) => r,
                Err(e @ Error::SizeGuard { .. }) => {
                    warnings.push(format!(
                        "n = {n}, R1 = {}, codebook {k}: {e}; switched to Monte Carlo with {} trials, divergences are plug-in estimates",
                        spec.r1, p.trials
                    ));
                    run_protocol_mc(&j, &cb, p.trials, mc_seed)?
                }
                Err(e) => return Err(e.into()),
            },
        };
        rows.push(SweepRow {
            n,
            r: spec.r,
            r1: spec.r1,
            codebook: k,
            seed: spec.seed,
            pe: report.pe,
            eff_secrecy: report.eff_secrecy,
            eff_secrecy_per_symbol: report.eff_secrecy_per_symbol,
            d1: split.map(|s| s.d1),
            d2: split.map(|s| s.d2),
            d1_bound: Some(d1_bound),
            d2_bound: Some(d2_bound),
            sk_lower: sk.lower,
            sk_upper: sk.upper,
        });
        runs.push(Run {
            n,
            r: spec.r,
            r1: spec.r1,
            codebook: k,
            seed: spec.seed,
            requested_mode: p.mode,
            report,
        });
    }

    let sweep = || -> Result<String, Failure> {
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf)?;
        String::from_utf8(buf).map_err(|e| Failure::Numeric(e.to_string()))
    };
    if let Some(path) = &p.sweep_csv {
        write_file(path, &sweep()?)?;
    }
    let report = SimulateReport {
        sk,
        confusion_threshold: threshold,
        total_rate_bound: rate_cap,
        means: codebook_means(&rows),
        runs,
        resolvability,
    };
    emit("simulate", cfg, &report, sweep, &warnings)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BudgetReport {
    params: BudgetParams,
    budget_bits: f64,
    r_ssk: f64,
    schedule: Option<KeySchedule>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BudgetRow {
    budget_bits: f64,
    r_ssk: f64,
    phase1_key_bits: Option<f64>,
    phase2_key_bits: Option<f64>,
    total_generated_bits: Option<f64>,
    feasible: Option<bool>,
}

fn budget(cfg: &Resolved<BudgetCfg>) -> Result<(), Failure> {
    let p = &cfg.params;
    let params = BudgetParams::new(
        required(p.n, "n")?,
        required(p.xi, "xi")?,
        required(p.omega, "omega")?,
    )?;
    let (dz, dy) = (required(p.dz, "dz")?, required(p.dy, "dy")?);
    let budget_bits = covert_key_budget(dz, dy, &params)?;
    let r_ssk = sskg_rate_sufficient(params.n(), p.c)?;
    let mode = if p.per_block {
        SpendMode::PerBlock
    } else {
        SpendMode::PerSymbol
    };
    let schedule = load_source(&p.source, p.cascade)?
        .map(|j| key_schedule(&j, &params, dz, dy, mode))
        .transpose()?;
    let warnings: Vec<String> = params.regime_warning().into_iter().collect();
    let row = BudgetRow {
        budget_bits,
        r_ssk,
        phase1_key_bits: schedule.map(|s| s.phase1_key_bits),
        phase2_key_bits: schedule.map(|s| s.phase2_key_bits),
        total_generated_bits: schedule.map(|s| s.total_generated_bits),
        feasible: schedule.map(|s| s.feasible),
    };
    let report = BudgetReport {
        params,
        budget_bits,
        r_ssk,
        schedule,
    };
    emit("budget", cfg, &report, || csv_text(&[row]), &warnings)
}
