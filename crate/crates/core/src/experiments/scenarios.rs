use rand::Rng;
use rayon::prelude::*;

use super::config::{dbm_to_mw, mw_to_dbm, ExperimentConfig, Scenario};
use super::results::ResultTable;
use super::{realization_rng, LinkOracle, Stream};
use crate::additive_bo::{run_bo, BlackBox, BoConfig};
use crate::error::{Error, Result};
use crate::known_csi::solve_known_csi;
use crate::parametrization::Layout;
use crate::system_model::{
    exact_sum_mse, per_user_mse_all, sample_channels, C64, ChannelRealization, Design, Objective, SystemConfig,
};

/// `(x_axis, metric, value)` samples of one realization, in emission order.
pub type Samples = Vec<(f64, String, f64)>;

/// Queried points and observed values of one optimization run.
struct Evaluations {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl Evaluations {
    /// Index of the smallest observation among the first `n`, first on ties.
    fn running_argmin(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.ys.len());
        let mut best = 0;
        for (i, y) in self.ys.iter().enumerate() {
            if *y < self.ys[best] {
                best = i;
            }
            out.push(best);
        }
        out
    }
}

/// What a finished run reports.
struct RunSummary {
    best: Design,
    last: Design,
    /// Exact objective at the best observed design after each evaluation.
    curve: Vec<f64>,
    init_mean: f64,
}

fn summarize(evals: &Evaluations, oracle: &LinkOracle, init_count: usize) -> Result<RunSummary> {
    if evals.ys.is_empty() {
        return Err(Error::EmptyInput("run produced no evaluations"));
    }
    let argmin = evals.running_argmin();
    let exact = oracle.exact_values();
    let curve = argmin.iter().map(|&i| exact[i]).collect();
    let n_init = init_count.min(exact.len()).max(1);
    let init_mean = exact[..n_init].iter().sum::<f64>() / n_init as f64;
    Ok(RunSummary {
        best: oracle.decode(&evals.xs[*argmin.last().expect("nonempty")])?,
        last: oracle.decode(evals.xs.last().expect("nonempty"))?,
        curve,
        init_mean,
    })
}

fn run_bo_on(oracle: &mut LinkOracle, bo: &BoConfig, base: u64, r: usize) -> Result<Evaluations> {
    let mut rng = realization_rng(base, r, Stream::Optimizer);
    let trace = run_bo(oracle, bo, &mut rng)?;
    Ok(Evaluations {
        xs: trace.records.iter().map(|rec| rec.x.clone()).collect(),
        ys: trace.records.iter().map(|rec| rec.y).collect(),
    })
}

fn run_random_search(oracle: &mut LinkOracle, budget: usize, base: u64, r: usize) -> Result<Evaluations> {
    let mut rng = realization_rng(base, r, Stream::Optimizer);
    let dim = oracle.dim();
    let mut evals = Evaluations {
        xs: Vec::with_capacity(budget),
        ys: Vec::with_capacity(budget),
    };
    for _ in 0..budget {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let y = oracle.evaluate(&x)?;
        evals.xs.push(x);
        evals.ys.push(y);
    }
    Ok(evals)
}

/// Evaluation counts at which convergence rows are reported: end of the
/// initialization, end of partition selection, every 25 updates, and the
/// final evaluation.
pub fn checkpoints(bo: &BoConfig, dim: usize) -> Vec<usize> {
    let (w, q, t) = (bo.window, bo.partition_count(dim), bo.iterations);
    let mut c = vec![w, w + q];
    c.extend((1..=t).filter(|i| i % 25 == 0).map(|i| w + q + i));
    c.push(w + q + t);
    c.dedup();
    c
}

fn sum_mse_oracle(sys: &SystemConfig, ch: ChannelRealization, cfg: &ExperimentConfig, r: usize) -> LinkOracle {
    LinkOracle::new(
        Layout::new(sys),
        Objective::SumMse,
        sys.clone(),
        ch,
        realization_rng(cfg.seed, r, Stream::Pilots),
    )
}

fn push_curve(out: &mut Samples, x: f64, prefix: &str, curve: &[f64], at: &[usize]) {
    for &i in at {
        out.push((x, format!("{prefix}@{i}"), curve[i - 1]));
    }
}

/// Runs realization `r` (1-based) of the configured scenario.
pub fn run_realization(cfg: &ExperimentConfig, r: usize) -> Result<Samples> {
    let mut out = Samples::new();
    let base = cfg.seed;
    let sc = cfg.scenario;
    match sc {
        Scenario::SumMseBo | Scenario::ConvergenceTrace | Scenario::RandomSearchBaseline | Scenario::SlowFading => {
            let bo = cfg.bo()?;
            let ch = sample_channels(&cfg.system.at_snr(0.0), None, &mut realization_rng(base, r, Stream::Channel));
            for &snr in &cfg.snr_db {
                let sys = cfg.system.at_snr(snr);
                let mut oracle = sum_mse_oracle(&sys, ch.clone(), cfg, r);
                let dim = oracle.dim();
                let budget = bo.budget(dim);
                let evals = match sc {
                    Scenario::RandomSearchBaseline => run_random_search(&mut oracle, budget, base, r)?,
                    Scenario::SlowFading => {
                        let nu = cfg.slow_fading.as_ref().map_or(0.0, |s| s.nu);
                        let mut static_oracle = oracle.clone();
                        let evals = run_bo_on(&mut static_oracle, bo, base, r)?;
                        let s = summarize(&evals, &static_oracle, bo.window)?;
                        out.push((snr, "static_final_sum_mse".into(), static_oracle.exact(&s.best)?));
                        oracle = oracle.with_drift(nu, realization_rng(base, r, Stream::Drift));
                        run_bo_on(&mut oracle, bo, base, r)?
                    }
                    _ => run_bo_on(&mut oracle, bo, base, r)?,
                };
                let s = summarize(&evals, &oracle, bo.window)?;
                out.push((snr, "final_sum_mse".into(), oracle.exact(&s.best)?));
                out.push((snr, "last_sum_mse".into(), oracle.exact(&s.last)?));
                out.push((snr, "init_sum_mse".into(), s.init_mean));
                let at: Vec<usize> = if sc == Scenario::ConvergenceTrace {
                    (1..=budget).collect()
                } else {
                    checkpoints(bo, dim)
                };
                push_curve(&mut out, snr, "sum_mse", &s.curve, &at);
            }
        }
        Scenario::SumMseKnownCsi => {
            let baseline = cfg.baseline()?;
            let ch = sample_channels(&cfg.system.at_snr(0.0), None, &mut realization_rng(base, r, Stream::Channel));
            for &snr in &cfg.snr_db {
                let sys = cfg.system.at_snr(snr);
                let sol = solve_known_csi(&ch, baseline, sys.noise_var, sys.power)?;
                out.push((snr, "final_sum_mse".into(), sol.final_mse()));
                out.push((snr, "init_sum_mse".into(), sol.trace[0]));
                out.push((snr, "outer_iterations".into(), (sol.trace.len() - 1) as f64));
            }
        }
        Scenario::MinmaxMse => {
            let bo = cfg.bo()?;
            let eta = cfg.objective.eta;
            let ch = sample_channels(&cfg.system.at_snr(0.0), None, &mut realization_rng(base, r, Stream::Channel));
            for &snr in &cfg.snr_db {
                let sys = cfg.system.at_snr(snr);
                let mut oracle = LinkOracle::new(
                    Layout::new(&sys),
                    Objective::MinMaxMse { eta },
                    sys.clone(),
                    ch.clone(),
                    realization_rng(base, r, Stream::Pilots),
                );
                let evals = run_bo_on(&mut oracle, bo, base, r)?;
                let s = summarize(&evals, &oracle, bo.window)?;
                let per_user = per_user_mse_all(&s.best, &ch, sys.noise_var)?;
                let max = per_user.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                out.push((snr, "final_max_mse".into(), max));
                out.push((snr, "final_smooth_max_mse".into(), oracle.exact(&s.best)?));
                out.push((snr, "final_sum_mse".into(), exact_sum_mse(&s.best, &ch, sys.noise_var)?));
                out.push((snr, "init_smooth_max_mse".into(), s.init_mean));
            }
        }
        Scenario::PowerTransferTotal | Scenario::PowerTransferMinmax => {
            let bo = cfg.bo()?;
            let pt = cfg.power_transfer.as_ref().ok_or_else(|| Error::Config("missing [power_transfer]".into()))?;
            let ls = cfg.large_scale.as_ref().ok_or_else(|| Error::Config("missing [large_scale]".into()))?;
            let noise = dbm_to_mw(pt.noise_dbm);
            let mut sys = cfg.system.at_snr(0.0);
            sys.noise_var = noise;
            let ch = sample_channels(&sys, Some(ls), &mut realization_rng(base, r, Stream::Channel));
            let objective = match sc {
                Scenario::PowerTransferTotal => Objective::PowerTotal,
                _ => Objective::PowerMinMax { eta: cfg.objective.eta },
            };
            for &dbm in &pt.transmit_dbm {
                sys.power = dbm_to_mw(dbm);
                let layout = Layout::new(&sys).without_filter();
                let mut oracle = LinkOracle::new(layout, objective, sys.clone(), ch.clone(), realization_rng(base, r, Stream::Pilots));
                let evals = run_bo_on(&mut oracle, bo, base, r)?;
                let s = summarize(&evals, &oracle, bo.window)?;
                let per_user = crate::system_model::harvested_power_per_user(&s.best, &ch, noise)?;
                let total: f64 = per_user.iter().sum();
                let min = per_user.iter().copied().fold(f64::INFINITY, f64::min);
                out.push((dbm, "received_power_mw".into(), total));
                out.push((dbm, "received_power_dbm".into(), mw_to_dbm(total)));
                out.push((dbm, "min_user_power_mw".into(), min));
                out.push((dbm, "init_power_mw".into(), s.init_mean));
                if sys.users == 1 && sys.elements == 2 && pt.oracle_grid > 0 {
                    let best = matched_beamforming_oracle(&ch, sys.power, noise, pt.oracle_grid)?;
                    out.push((dbm, "oracle_power_mw".into(), best));
                    out.push((dbm, "oracle_power_dbm".into(), mw_to_dbm(best)));
                }
            }
        }
        Scenario::PilotStudy => {
            let bo = cfg.bo()?;
            let ps = cfg.pilot_study.as_ref().ok_or_else(|| Error::Config("missing [pilot_study]".into()))?;
            let ch = sample_channels(&cfg.system.at_snr(0.0), None, &mut realization_rng(base, r, Stream::Channel));
            for &kappa in &ps.pilot_counts {
                let mut sys = cfg.system.at_snr(ps.snr_db);
                sys.pilot_count = kappa;
                let mut oracle = sum_mse_oracle(&sys, ch.clone(), cfg, r);
                let evals = run_bo_on(&mut oracle, bo, base, r)?;
                let s = summarize(&evals, &oracle, bo.window)?;
                out.push((kappa as f64, "final_sum_mse".into(), oracle.exact(&s.best)?));
                out.push((kappa as f64, "last_sum_mse".into(), oracle.exact(&s.last)?));
            }
        }
        Scenario::ElementSweep => {
            let bo = cfg.bo()?;
            let baseline = cfg.baseline()?;
            let es = cfg.element_sweep.as_ref().ok_or_else(|| Error::Config("missing [element_sweep]".into()))?;
            for &n in &es.elements {
                let mut sys = cfg.system.at_snr(es.snr_db);
                sys.elements = n;
                let ch = sample_channels(&sys, None, &mut realization_rng(base, r, Stream::Channel));
                let mut oracle = sum_mse_oracle(&sys, ch.clone(), cfg, r);
                let evals = run_bo_on(&mut oracle, bo, base, r)?;
                let s = summarize(&evals, &oracle, bo.window)?;
                out.push((n as f64, "final_sum_mse".into(), oracle.exact(&s.best)?));
                out.push((n as f64, "last_sum_mse".into(), oracle.exact(&s.last)?));
                let sol = solve_known_csi(&ch, baseline, sys.noise_var, sys.power)?;
                out.push((n as f64, "known_csi_sum_mse".into(), sol.final_mse()));
            }
        }
    }
    Ok(out)
}

/// Best single-user harvested power over a grid of relative phases with
/// matched beamforming, `P ‖f Φ H‖² + γ²`. Two-element RIS only; the common
/// phase of `φ` does not change the received power.
pub fn matched_beamforming_oracle(ch: &ChannelRealization, power: f64, noise_var: f64, grid: usize) -> Result<f64> {
    if ch.users() != 1 || ch.elements() != 2 {
        return Err(Error::InvalidArgument("oracle needs K = 1 and N = 2".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..grid.max(1) {
        let delta = std::f64::consts::TAU * i as f64 / grid as f64;
        let phi = nalgebra::DVector::from_vec(vec![C64::from(1.0), C64::from_polar(1.0, delta)]);
        let g = ch.cascade(&phi)?;
        best = best.max(power * g.norm_squared() + noise_var);
    }
    Ok(best)
}

/// Runs every realization (in parallel) and averages each metric over them.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    log::info!("scenario {} with {} realizations, seed {}", cfg.scenario, cfg.realizations, cfg.seed);
    let per_real: Vec<Samples> = (1..=cfg.realizations)
        .into_par_iter()
        .map(|r| {
            let s = run_realization(cfg, r);
            log::debug!("realization {r} done");
            s
        })
        .collect::<Result<_>>()?;
    let first = &per_real[0];
    let mut table = ResultTable::new();
    for (j, (x, metric, _)) in first.iter().enumerate() {
        let mut values = Vec::with_capacity(per_real.len());
        for s in &per_real {
            let (sx, sm, v) = s.get(j).ok_or_else(|| Error::Degenerate("realizations disagree on row count".into()))?;
            if sx != x || sm != metric {
                return Err(Error::Degenerate("realizations disagree on row layout".into()));
            }
            values.push(*v);
        }
        table.push_summary(cfg.scenario.name(), *x, metric.clone(), &values, cfg.seed);
    }
    table.validate()?;
    Ok(table)
}
