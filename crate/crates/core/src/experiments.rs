//! Simulation drivers: long trajectories, iteration-count studies over
//! channel draws, and tradeoff sweeps over V and the SINR target.

use rayon::prelude::*;

use crate::controller::{advance_queues, frame_decision, FrameRecord, Solver};
use crate::error::{Error, Result};
use crate::feasibility::{min_power_beamforming, zf_feasible};
use crate::model::{EnergyPriceState, QueueState, SystemConfig};
use crate::sabf::{initial_point, sabf_run};
use crate::stochastic::{draw_arrivals, draw_channel, streams, RngStream, Schedule};
use crate::zfbf::{zf_matrix, zfbf_run, ZfInner};

/// Runs `frames` frames from empty queues. Channels, arrivals and fallback
/// beams each draw from their own stream of `seed`, so two runs that differ
/// only in V, the targets or the solver see the same channels and arrivals.
pub fn run_trajectory(
    cfg: &SystemConfig<f64>,
    schedule: &Schedule<f64>,
    solver: Solver,
    seed: u64,
    frames: usize,
) -> Result<Vec<FrameRecord>> {
    if frames == 0 {
        return Err(Error::Config("a trajectory needs at least one frame".into()));
    }
    cfg.validate()?;
    let mut ch_rng = RngStream::new(seed, streams::CHANNEL);
    let mut arr_rng = RngStream::new(seed, streams::ARRIVALS);
    let mut fb_rng = RngStream::new(seed, streams::FALLBACK);
    let mut q = QueueState::filled(cfg.n_links(), 0.0);
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let e = schedule.at(t);
        let ch = draw_channel(cfg, &mut ch_rng);
        let (_, mut rec) = frame_decision(cfg, &ch, &e, &q, solver, &mut fb_rng)?;
        let arrivals = draw_arrivals(cfg, &mut arr_rng);
        q = advance_queues(&q, &rec.departure, &arrivals)?;
        rec.frame = t;
        rec.arrivals = arrivals;
        out.push(rec);
    }
    Ok(out)
}

/// Time averages of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffRecord {
    pub v: f64,
    /// Common SINR target when the sweep varies it.
    pub sinr_target_db: Option<f64>,
    pub solver: Solver,
    pub avg_grid_cost: f64,
    pub avg_backlog: Vec<f64>,
    /// Average backlog over the mean arrival rate (Little's law), in frames.
    pub delay: Vec<f64>,
    pub final_backlog: Vec<f64>,
    pub frames: usize,
    pub seed: u64,
}

pub fn summarize(
    cfg: &SystemConfig<f64>,
    records: &[FrameRecord],
    solver: Solver,
    seed: u64,
    sinr_target_db: Option<f64>,
) -> Result<TradeoffRecord> {
    let last = records.last().ok_or_else(|| Error::Config("no frames to summarize".into()))?;
    let t = records.len() as f64;
    let avg_grid_cost = records.iter().map(|r| r.grid_cost).sum::<f64>() / t;
    let avg_backlog: Vec<f64> =
        (0..cfg.n_links()).map(|n| records.iter().map(|r| r.q[n]).sum::<f64>() / t).collect();
    let delay = avg_backlog.iter().zip(&cfg.links).map(|(b, l)| b / l.arrival_mean).collect();
    Ok(TradeoffRecord {
        v: cfg.control_v,
        sinr_target_db,
        solver,
        avg_grid_cost,
        avg_backlog,
        delay,
        final_backlog: last.q_next(),
        frames: records.len(),
        seed,
    })
}

/// Worker pool sized by `HUT_THREADS` (all cores when unset or invalid).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var("HUT_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn run_points(
    points: Vec<(SystemConfig<f64>, Solver, Option<f64>)>,
    schedule: &Schedule<f64>,
    seed: u64,
    frames: usize,
) -> Result<Vec<TradeoffRecord>> {
    worker_pool()?.install(|| {
        points
            .into_par_iter()
            .map(|(cfg, solver, db)| {
                let recs = run_trajectory(&cfg, schedule, solver, seed, frames)?;
                summarize(&cfg, &recs, solver, seed, db)
            })
            .collect()
    })
}

/// One trajectory per `(V, solver)`, ordered by V then solver.
pub fn v_sweep(
    cfg: &SystemConfig<f64>,
    schedule: &Schedule<f64>,
    v_grid: &[f64],
    solvers: &[Solver],
    seed: u64,
    frames: usize,
) -> Result<Vec<TradeoffRecord>> {
    if v_grid.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config("V values must be positive".into()));
    }
    let points = v_grid
        .iter()
        .flat_map(|&v| {
            solvers.iter().map(move |&s| {
                let mut c = cfg.clone();
                c.control_v = v;
                (c, s, None)
            })
        })
        .collect();
    run_points(points, schedule, seed, frames)
}

/// One trajectory per `(target, solver)` with every link's target set to the
/// grid value, ordered by target then solver.
pub fn gamma_sweep(
    cfg: &SystemConfig<f64>,
    schedule: &Schedule<f64>,
    gamma_grid_db: &[f64],
    solvers: &[Solver],
    seed: u64,
    frames: usize,
) -> Result<Vec<TradeoffRecord>> {
    let points = gamma_grid_db
        .iter()
        .flat_map(|&db| {
            solvers.iter().map(move |&s| {
                let mut c = cfg.clone();
                c.set_sinr_target_db(db);
                (c, s, Some(db))
            })
        })
        .collect();
    run_points(points, schedule, seed, frames)
}

/// Outer iteration counts of both algorithms on one channel draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub seed: u64,
    /// Both ZF and the general targets fit under the cap; otherwise the
    /// counts are zero and the instance is skipped in statistics.
    pub feasible: bool,
    pub zfbf_iterations: usize,
    pub zfbf_converged: bool,
    pub sabf_iterations: usize,
    /// ZFBF iterations spent producing the SABF starting point.
    pub sabf_warm_iterations: usize,
    pub sabf_converged: bool,
}

impl ConvergenceRecord {
    /// SABF count including the warm start.
    pub fn sabf_total(&self) -> usize {
        self.sabf_iterations + self.sabf_warm_iterations
    }
}

/// One instance per seed: channel from `(seed, CHANNEL)`, all backlogs `q0`.
pub fn convergence_study(
    cfg: &SystemConfig<f64>,
    e: &EnergyPriceState<f64>,
    seeds: &[u64],
    v: f64,
    q0: f64,
) -> Result<Vec<ConvergenceRecord>> {
    let mut cfg = cfg.clone();
    cfg.control_v = v;
    cfg.validate()?;
    let q = QueueState::filled(cfg.n_links(), q0);
    worker_pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let ch = draw_channel(&cfg, &mut RngStream::new(seed, streams::CHANNEL));
                let mut rec = ConvergenceRecord {
                    seed,
                    feasible: false,
                    zfbf_iterations: 0,
                    zfbf_converged: false,
                    sabf_iterations: 0,
                    sabf_warm_iterations: 0,
                    sabf_converged: false,
                };
                let zf_ok = zf_matrix(&ch).map(|w| zf_feasible(&cfg, &w)).unwrap_or(false);
                let general_ok = min_power_beamforming(&cfg, &ch).map(|(_, p)| p <= cfg.max_tx_power).unwrap_or(false);
                if !(zf_ok && general_ok) {
                    return Ok(rec);
                }
                let zr = zfbf_run(&cfg, &ch, e, &q, ZfInner::Conic)?;
                let (w0, warm) = initial_point(&cfg, &ch, e, &q)?;
                let sr = sabf_run(&cfg, &ch, e, &q, w0)?;
                rec.feasible = true;
                rec.zfbf_iterations = zr.state.iteration;
                rec.zfbf_converged = zr.converged;
                rec.sabf_iterations = sr.state.iteration;
                rec.sabf_warm_iterations = warm;
                rec.sabf_converged = sr.converged;
                Ok(rec)
            })
            .collect()
    })
}

pub fn median(xs: &[usize]) -> Option<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2] as f64),
        _ => Some((v[n / 2 - 1] + v[n / 2]) as f64 / 2.0),
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_frame_trajectory() {
        let cfg = SystemConfig::<f64>::standard();
        let recs = run_trajectory(&cfg, &Schedule::default_segments(), Solver::Zfbf, 1, 1).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].q, vec![0.0; 3]);
        assert!(run_trajectory(&cfg, &Schedule::default_segments(), Solver::Zfbf, 1, 0).is_err());
    }

    #[test]
    fn trajectories_are_reproducible() {
        let cfg = SystemConfig::<f64>::standard();
        let s = Schedule::default_segments();
        for solver in Solver::ALL {
            let a = run_trajectory(&cfg, &s, solver, 21, 25).unwrap();
            let b = run_trajectory(&cfg, &s, solver, 21, 25).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn swept_parameter_leaves_random_streams_alone() {
        let mut cfg = SystemConfig::<f64>::standard();
        let s = Schedule::default_segments();
        let a = run_trajectory(&cfg, &s, Solver::Zfbf, 5, 30).unwrap();
        cfg.control_v = 0.007;
        let b = run_trajectory(&cfg, &s, Solver::Sabf, 5, 30).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.arrivals, y.arrivals);
        }
    }

    #[test]
    fn queues_chain_through_records() {
        let cfg = SystemConfig::<f64>::standard();
        let recs = run_trajectory(&cfg, &Schedule::default_segments(), Solver::Zfbf, 8, 40).unwrap();
        for pair in recs.windows(2) {
            assert_eq!(pair[0].q_next(), pair[1].q);
        }
        assert!(recs.iter().all(|r| r.q.iter().all(|&q| q >= 0.0)));
    }

    #[test]
    fn summary_is_a_pure_aggregate() {
        let cfg = SystemConfig::<f64>::standard();
        let recs = run_trajectory(&cfg, &Schedule::default_segments(), Solver::Zfbf, 3, 50).unwrap();
        let s = summarize(&cfg, &recs, Solver::Zfbf, 3, None).unwrap();
        let g = recs.iter().map(|r| r.grid_cost).sum::<f64>() / 50.0;
        assert_eq!(s.avg_grid_cost, g);
        for n in 0..3 {
            let b = recs.iter().map(|r| r.q[n]).sum::<f64>() / 50.0;
            assert_eq!(s.avg_backlog[n], b);
            assert_eq!(s.delay[n], b / cfg.links[n].arrival_mean);
        }
        assert_eq!(s.final_backlog, recs[49].q_next());
    }

    #[test]
    fn sweeps_order_points() {
        let cfg = SystemConfig::<f64>::standard();
        let s = Schedule::default_segments();
        let r = v_sweep(&cfg, &s, &[0.001, 0.004], &Solver::ALL, 2, 3).unwrap();
        let keys: Vec<(f64, Solver)> = r.iter().map(|x| (x.v, x.solver)).collect();
        assert_eq!(keys, vec![(0.001, Solver::Sabf), (0.001, Solver::Zfbf), (0.004, Solver::Sabf), (0.004, Solver::Zfbf)]);
        let g = gamma_sweep(&cfg, &s, &[6.0], &[Solver::Zfbf], 2, 3).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].sinr_target_db, Some(6.0));
        assert!(v_sweep(&cfg, &s, &[0.0], &Solver::ALL, 2, 3).is_err());
    }

    #[test]
    fn convergence_counts_are_deterministic_and_capped() {
        let cfg = SystemConfig::<f64>::standard();
        let e = Schedule::<f64>::default_segments().at(0);
        let a = convergence_study(&cfg, &e, &[1, 2, 3], 0.001, 5.0).unwrap();
        let b = convergence_study(&cfg, &e, &[1, 2, 3], 0.001, 5.0).unwrap();
        assert_eq!(a, b);
        for r in a.iter().filter(|r| r.feasible) {
            assert!(r.zfbf_iterations <= cfg.sabf_max_iter);
            assert!(r.sabf_iterations <= cfg.sabf_max_iter);
        }
    }

    #[test]
    fn statistics_helpers() {
        assert_eq!(median(&[5, 1, 3]), Some(3.0));
        assert_eq!(median(&[4, 1, 3, 2]), Some(2.5));
        assert_eq!(median(&[]), None);
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!((ols_slope(&x, &y) - 3.0).abs() < 1e-12);
    }
}
