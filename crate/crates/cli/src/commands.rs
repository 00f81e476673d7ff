use crate::config::ExperimentConfig;
use crate::CliError;
use clap::Args;
use fragqite::bounds::{largest_parity_length, solve_lower_bound};
use fragqite::funcapprox::{gamma_opt, q1_bound};
use fragqite::hamiltonians::{diagonalize, gen_ensemble, rescale_to_unit, success_prob};
use fragqite::kinds::even_ceil;
use fragqite::parity::{parity_via_qite, ParityPrimitive};
use fragqite::schedules::{
    beta_crit_empirical, first_fragment_ratio, fit_beta_crit, fit_power_law, histogram as bin_values, optimize_schedule,
    scan_point,
};
use fragqite::simulator::{build_p1, build_p2, post_select};
use fragqite::{Error, HamiltonianClass, InputState, Primitive, Spectrum, Strategy};
use rayon::prelude::*;
use serde::Serialize;
use std::fs::File;
use std::io::Write;
use std::path::Path;

type Csv = csv::Writer<File>;

fn csv_out(cfg: &ExperimentConfig, name: &str) -> Result<Csv, CliError> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(csv::Writer::from_path(cfg.out.join(name))?)
}

fn write_rows<T: Serialize>(w: &mut Csv, rows: &[T]) -> Result<(), CliError> {
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Rescaled instance and its spectrum for a maximally mixed input.
fn load_instance(class: HamiltonianClass, n: usize, seed: u64) -> Result<Spectrum, CliError> {
    let h = rescale_to_unit(&gen_ensemble(class, n, seed)?)?;
    Ok(diagonalize(&h, &InputState::MaximallyMixed)?)
}

/// (class, N, eps) cells in a fixed order.
fn cells(cfg: &ExperimentConfig) -> Vec<(HamiltonianClass, usize, f64)> {
    let mut out = Vec::new();
    for &c in &cfg.classes {
        for &n in &cfg.n {
            for &e in &cfg.eps {
                out.push((c, n, e));
            }
        }
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v.sqrt())
}

#[derive(Debug, Serialize)]
struct ScanRow {
    #[serde(rename = "N")]
    n: usize,
    class: HamiltonianClass,
    seed: u64,
    eps: f64,
    beta: f64,
    best_r: usize,
    best_a: f64,
    #[serde(rename = "Q_frag")]
    q_frag: f64,
    #[serde(rename = "Q_prob")]
    q_prob: f64,
    #[serde(rename = "Q_coh")]
    q_coh: f64,
    #[serde(rename = "Q_uniform")]
    q_uniform: f64,
    uniform_r: usize,
    depth_frag: u64,
    depth_prob: u64,
    depth_coh: u64,
    depth_uniform: u64,
}

#[derive(Debug, Serialize)]
struct ScanSummary {
    #[serde(rename = "N")]
    n: usize,
    class: HamiltonianClass,
    eps: f64,
    beta: f64,
    mean_q_prob: f64,
    std_q_prob: f64,
    mean_q_coh: f64,
    std_q_coh: f64,
    mean_q_uniform: f64,
    std_q_uniform: f64,
    mean_q_frag: f64,
    std_q_frag: f64,
    mean_depth_prob: f64,
    mean_depth_frag: f64,
}

pub fn complexity_scan(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let grid = cfg.beta_grid();
    let mut rows_out = csv_out(cfg, "complexity_scan.csv")?;
    let mut summary_out = csv_out(cfg, "complexity_summary.csv")?;
    for (class, n, eps) in cells(cfg) {
        let rows: Vec<Vec<ScanRow>> = (0..cfg.instances)
            .into_par_iter()
            .map(|i| {
                let seed = cfg.instance_seed(class, n, i);
                let s = load_instance(class, n, seed)?;
                grid.iter()
                    .map(|&beta| {
                        let p = scan_point(&s, beta, eps, cfg.primitive, cfg.r_max, cfg.mode)?;
                        Ok(ScanRow {
                            n,
                            class,
                            seed,
                            eps,
                            beta,
                            best_r: p.best.params.r,
                            best_a: p.best.params.a,
                            q_frag: p.q_frag,
                            q_prob: p.q_prob,
                            q_coh: p.q_coh,
                            q_uniform: p.q_uniform,
                            uniform_r: p.uniform_r,
                            depth_frag: p.depth_frag,
                            depth_prob: p.depth_prob,
                            depth_coh: p.depth_coh,
                            depth_uniform: p.depth_uniform,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .collect::<Result<_, _>>()?;
        for inst in &rows {
            write_rows(&mut rows_out, inst)?;
        }
        let summaries: Vec<ScanSummary> = grid
            .iter()
            .enumerate()
            .map(|(k, &beta)| {
                let col = |f: fn(&ScanRow) -> f64| mean_std(&rows.iter().map(|r| f(&r[k])).collect::<Vec<_>>());
                let (mp, sp) = col(|r| r.q_prob);
                let (mc, sc) = col(|r| r.q_coh);
                let (mu, su) = col(|r| r.q_uniform);
                let (mf, sf) = col(|r| r.q_frag);
                ScanSummary {
                    n,
                    class,
                    eps,
                    beta,
                    mean_q_prob: mp,
                    std_q_prob: sp,
                    mean_q_coh: mc,
                    std_q_coh: sc,
                    mean_q_uniform: mu,
                    std_q_uniform: su,
                    mean_q_frag: mf,
                    std_q_frag: sf,
                    mean_depth_prob: col(|r| r.depth_prob as f64).0,
                    mean_depth_frag: col(|r| r.depth_frag as f64).0,
                }
            })
            .collect();
        write_rows(&mut summary_out, &summaries)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BetaCritRow {
    #[serde(rename = "N")]
    n: usize,
    class: HamiltonianClass,
    seed: u64,
    eps: f64,
    beta_c: Option<f64>,
    found: bool,
}

#[derive(Debug, Serialize)]
struct FitRecord<T: Serialize> {
    class: HamiltonianClass,
    eps: f64,
    points: Vec<(f64, f64)>,
    fit: Option<T>,
    error: Option<String>,
}

pub fn beta_crit(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let grid = cfg.beta_grid();
    let mut out = csv_out(cfg, "beta_crit.csv")?;
    let mut fits = Vec::new();
    for &class in &cfg.classes {
        for &eps in &cfg.eps {
            let mut points = Vec::new();
            for &n in &cfg.n {
                let rows: Vec<BetaCritRow> = (0..cfg.instances)
                    .into_par_iter()
                    .map(|i| {
                        let seed = cfg.instance_seed(class, n, i);
                        let s = load_instance(class, n, seed)?;
                        let bc = match beta_crit_empirical(&s, eps, cfg.primitive, &grid, cfg.mode, cfg.r_max) {
                            Ok(b) => Some(b),
                            Err(Error::NoCrossing { .. }) => None,
                            Err(e) => return Err(e.into()),
                        };
                        Ok(BetaCritRow { n, class, seed, eps, beta_c: bc, found: bc.is_some() })
                    })
                    .collect::<Result<_, CliError>>()?;
                write_rows(&mut out, &rows)?;
                let found: Vec<f64> = rows.iter().filter_map(|r| r.beta_c).collect();
                if !found.is_empty() {
                    points.push((n as f64, mean_std(&found).0));
                }
            }
            let (fit, error) = match fit_beta_crit(&points) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            fits.push(FitRecord { class, eps, points, fit, error });
        }
    }
    write_json(&cfg.out.join("beta_crit_fit.json"), &fits)
}

#[derive(Debug, Serialize)]
struct ScheduleRow {
    #[serde(rename = "N")]
    n: usize,
    class: HamiltonianClass,
    seed: u64,
    eps: f64,
    beta: f64,
    best_r: usize,
    best_a: f64,
    uniform_r: usize,
}

#[derive(Debug, Serialize)]
struct ScheduleFits<T: Serialize> {
    uniform_r: FitRecord<T>,
    best_a: FitRecord<T>,
}

fn power_fit(class: HamiltonianClass, eps: f64, points: Vec<(f64, f64)>) -> FitRecord<fragqite::schedules::PowerLawFit> {
    let (fit, error) = match fit_power_law(&points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    FitRecord { class, eps, points, fit, error }
}

pub fn schedule_scan(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let grid = cfg.beta_grid();
    let mut out = csv_out(cfg, "schedule_scan.csv")?;
    let mut fits = Vec::new();
    for &class in &cfg.classes {
        for &eps in &cfg.eps {
            let mut all: Vec<ScheduleRow> = Vec::new();
            for &n in &cfg.n {
                let rows: Vec<Vec<ScheduleRow>> = (0..cfg.instances)
                    .into_par_iter()
                    .map(|i| {
                        let seed = cfg.instance_seed(class, n, i);
                        let s = load_instance(class, n, seed)?;
                        grid.iter()
                            .map(|&beta| {
                                let p = scan_point(&s, beta, eps, cfg.primitive, cfg.r_max, cfg.mode)?;
                                Ok(ScheduleRow {
                                    n,
                                    class,
                                    seed,
                                    eps,
                                    beta,
                                    best_r: p.best.params.r,
                                    best_a: p.best.params.a,
                                    uniform_r: p.uniform_r,
                                })
                            })
                            .collect::<Result<Vec<_>, CliError>>()
                    })
                    .collect::<Result<_, _>>()?;
                for inst in rows {
                    write_rows(&mut out, &inst)?;
                    all.extend(inst);
                }
            }
            let means = |f: fn(&ScheduleRow) -> f64| -> Vec<(f64, f64)> {
                grid.iter()
                    .map(|&b| {
                        let v: Vec<f64> = all.iter().filter(|r| r.beta == b).map(f).collect();
                        (b, mean_std(&v).0)
                    })
                    .collect()
            };
            fits.push(ScheduleFits {
                uniform_r: power_fit(class, eps, means(|r| r.uniform_r as f64)),
                best_a: power_fit(class, eps, means(|r| r.best_a)),
            });
        }
    }
    write_json(&cfg.out.join("schedule_fits.json"), &fits)
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_prime: f64,
    #[arg(long, default_value = "p1")]
    pub primitive: String,
    #[arg(long, default_value = "sk_heisenberg")]
    pub class: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    n: usize,
    class: HamiltonianClass,
    seed: u64,
    primitive: Primitive,
    beta: f64,
    eps_prime: f64,
    alpha: f64,
    query_count: u64,
    block_error: f64,
    post_selection_prob: f64,
    trace_distance: f64,
    /// `1.5 ε` with ε the error implied by `ε' = εα√p/2`.
    trace_bound: f64,
    ok: bool,
}

pub fn validate_primitive(a: &ValidateArgs) -> Result<(), CliError> {
    let class: HamiltonianClass = a.class.parse().map_err(|e: Error| CliError::Config(e.to_string()))?;
    let primitive: Primitive = a.primitive.parse().map_err(|e: Error| CliError::Config(e.to_string()))?;
    if !(a.beta >= 0.0) || !(a.eps_prime > 0.0 && a.eps_prime < 1.0) {
        return Err(CliError::Config("need beta >= 0 and eps' in (0, 1)".into()));
    }
    if class == HamiltonianClass::Custom || !(2..=fragqite::hamiltonians::MAX_QUBITS).contains(&a.n) {
        return Err(CliError::Config("need a generated class and 2 <= n <= 15".into()));
    }
    let s = load_instance(class, a.n, a.seed)?;
    let (enc, q) = match primitive {
        Primitive::P1 => build_p1(&s, a.beta, a.eps_prime)?,
        Primitive::P2 => {
            let (e, q, _) = build_p2(&s, a.beta, a.eps_prime, gamma_opt(a.beta, Strategy::Prob))?;
            (e, q)
        }
    };
    let block_error = enc.block_error()?;
    let sim = post_select(&enc, &InputState::MaximallyMixed)?;
    let p = success_prob(&s, a.beta)?;
    let implied_eps = 2.0 * a.eps_prime / (enc.alpha * p.sqrt());
    let trace_bound = 1.5 * implied_eps;
    let ok = block_error <= a.eps_prime && sim.trace_distance_to_ideal <= trace_bound;
    let report = ValidationReport {
        n: a.n,
        class,
        seed: a.seed,
        primitive,
        beta: a.beta,
        eps_prime: a.eps_prime,
        alpha: enc.alpha,
        query_count: q,
        block_error,
        post_selection_prob: sim.post_selection_prob,
        trace_distance: sim.trace_distance_to_ideal,
        trace_bound,
        ok,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if ok {
        Ok(())
    } else {
        Err(CliError::Assertion(format!("block error {block_error:.3e} or trace distance exceeds its bound")))
    }
}

#[derive(Debug, Serialize)]
struct LowerBoundRow {
    beta: f64,
    eps: f64,
    alpha: f64,
    q_tilde: f64,
    q1: u64,
    ratio: f64,
}

pub fn lower_bound(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut out = csv_out(cfg, "lower_bound.csv")?;
    for &eps in &cfg.eps {
        let rows: Vec<LowerBoundRow> = cfg
            .beta_grid()
            .into_iter()
            .map(|beta| {
                let lb = solve_lower_bound(beta, eps, 1.0)?;
                let q1 = even_ceil(q1_bound(beta, eps));
                Ok(LowerBoundRow { beta, eps, alpha: 1.0, q_tilde: lb.q_tilde, q1, ratio: q1 as f64 / lb.q_tilde })
            })
            .collect::<Result<_, CliError>>()?;
        write_rows(&mut out, &rows)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ParityRow {
    #[serde(rename = "N")]
    n: usize,
    beta: f64,
    eps: f64,
    alpha: f64,
    overlap: f64,
    /// Worst case over all strings of length N.
    success_prob: f64,
    condition_holds: bool,
    predicted_q_tilde: f64,
    largest_n: usize,
}

/// Every string of length `n`, least significant bit first.
fn all_strings(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u64 << n).map(move |m| (0..n).map(|k| ((m >> k) & 1) as u8).collect())
}

pub fn parity_demo(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut out = csv_out(cfg, "parity_demo.csv")?;
    let alpha = 1.0;
    for &n in &cfg.n {
        let mut rows = Vec::new();
        for beta in cfg.beta_grid() {
            for &eps in &cfg.eps {
                let prim = ParityPrimitive::Adversarial { alpha, eps };
                let outcomes: Vec<_> = all_strings(n)
                    .collect::<Vec<_>>()
                    .par_iter()
                    .map(|x| parity_via_qite(x, beta, prim))
                    .collect::<Result<_, _>>()?;
                let worst = outcomes.iter().map(|o| o.success_prob).fold(f64::INFINITY, f64::min);
                let holds = outcomes[0].condition_holds;
                if holds && worst <= 0.5 {
                    return Err(CliError::Assertion(format!("parity success {worst} <= 1/2 at N = {n}, beta = {beta}")));
                }
                let (q, largest) = match solve_lower_bound(beta, eps, alpha) {
                    Ok(lb) => (lb.q_tilde, largest_parity_length(beta, eps, alpha)?),
                    Err(_) => (f64::NAN, 0),
                };
                rows.push(ParityRow {
                    n,
                    beta,
                    eps,
                    alpha,
                    overlap: outcomes[0].overlap,
                    success_prob: worst,
                    condition_holds: holds,
                    predicted_q_tilde: q,
                    largest_n: largest,
                });
            }
        }
        write_rows(&mut out, &rows)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RatioRow {
    #[serde(rename = "N")]
    n: usize,
    class: HamiltonianClass,
    seed: u64,
    eps: f64,
    beta: f64,
    r: usize,
    a: f64,
    first_fragment: f64,
    eps_first: f64,
    ratio: f64,
}

pub fn histogram(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let grid = cfg.beta_grid();
    let mut out = csv_out(cfg, "first_fragment_ratios.csv")?;
    let mut bins_out = csv_out(cfg, "first_fragment_histogram.csv")?;
    for (class, n, eps) in cells(cfg) {
        let rows: Vec<Vec<RatioRow>> = (0..cfg.instances)
            .into_par_iter()
            .map(|i| {
                let seed = cfg.instance_seed(class, n, i);
                let s = load_instance(class, n, seed)?;
                grid.iter()
                    .map(|&beta| {
                        let o = optimize_schedule(&s, beta, eps, cfg.primitive, cfg.r_max, cfg.mode)?;
                        Ok(RatioRow {
                            n,
                            class,
                            seed,
                            eps,
                            beta,
                            r: o.params.r,
                            a: o.params.a,
                            first_fragment: o.schedule.fragments[0],
                            eps_first: o.report.eps_l[0],
                            ratio: first_fragment_ratio(&o.schedule, &o.report),
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .collect::<Result<_, _>>()?;
        let ratios: Vec<f64> = rows.iter().flatten().map(|r| r.ratio).collect();
        for inst in &rows {
            write_rows(&mut out, inst)?;
        }
        #[derive(Serialize)]
        struct Bin {
            #[serde(rename = "N")]
            n: usize,
            class: HamiltonianClass,
            eps: f64,
            lo: f64,
            hi: f64,
            count: usize,
        }
        let bins: Vec<Bin> = bin_values(&ratios, 20)
            .into_iter()
            .map(|b| Bin { n, class, eps, lo: b.lo, hi: b.hi, count: b.count })
            .collect();
        write_rows(&mut bins_out, &bins)?;
    }
    Ok(())
}
