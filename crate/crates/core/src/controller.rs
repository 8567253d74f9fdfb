//! Per-frame control loop: pick beamformers for the observed channel, energy
//! price and backlogs, fall back to random beams when the targets cannot be
//! met, then advance the traffic queues.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::feasibility::{min_power_beamforming, zf_feasible};
use crate::model::{
    gewpr_objective, grid_cost, packet_departure, queue_step, sinrs, total_power, transmit_power,
    BeamformingSolution, ChannelState, EnergyPriceState, QueueState, SolveStatus, SystemConfig,
};
use crate::sabf::sabf_solve_auto;
use crate::stochastic::{complex_gaussian, RngStream};
use crate::zfbf::{zf_matrix, zfbf_solve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Solver {
    Sabf,
    Zfbf,
}

impl Solver {
    pub const ALL: [Solver; 2] = [Solver::Sabf, Solver::Zfbf];

    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Sabf => "sabf",
            Solver::Zfbf => "zfbf",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sabf" => Ok(Solver::Sabf),
            "zfbf" => Ok(Solver::Zfbf),
            other => Err(Error::Config(format!("unknown solver `{other}` (expected sabf or zfbf)"))),
        }
    }
}

/// What happened in one frame. `q` is the backlog the decision saw,
/// `arrivals` what joined the queues at the end of the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub grid_cost: f64,
    pub total_power: f64,
    pub transmit_power: f64,
    pub objective: f64,
    pub sinr: Vec<f64>,
    pub departure: Vec<f64>,
    pub q: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl FrameRecord {
    /// Backlogs after this frame's departures and arrivals.
    pub fn q_next(&self) -> Vec<f64> {
        self.q
            .iter()
            .zip(&self.departure)
            .zip(&self.arrivals)
            .map(|((&q, &u), &a)| queue_step(q, u, a))
            .collect()
    }
}

/// Random directions scaled so the total transmit power is exactly `P^max`.
pub fn fallback_beamformers(cfg: &SystemConfig<f64>, rng: &mut RngStream) -> BeamformingSolution<f64> {
    let mut w: Vec<Vec<Complex64>> = (0..cfg.n_links())
        .map(|_| (0..cfg.n_antennas).map(|_| complex_gaussian(rng, 1.0)).collect())
        .collect();
    let p = transmit_power(&w);
    if p > 0.0 {
        let k = (cfg.max_tx_power / p).sqrt();
        w.iter_mut().flatten().for_each(|z| *z *= k);
    }
    BeamformingSolution::new(w, SolveStatus::Fallback)
}

pub fn advance_queues(q: &QueueState<f64>, u_dep: &[f64], u_arr: &[f64]) -> Result<QueueState<f64>> {
    if u_dep.len() != q.q.len() || u_arr.len() != q.q.len() {
        return Err(Error::Dimension("departure or arrival vector length differs from queue count".into()));
    }
    let q = q
        .q
        .iter()
        .zip(u_dep)
        .zip(u_arr)
        .map(|((&q, &d), &a)| queue_step(q, d, a))
        .collect();
    Ok(QueueState { q })
}

fn solve(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
    solver: Solver,
) -> Option<BeamformingSolution<f64>> {
    // no reward on any link: the cost is increasing in power, so the
    // cheapest point meeting the targets is optimal
    let idle = q.q.iter().all(|&x| x == 0.0);
    match solver {
        Solver::Sabf => {
            let (min, p_min) = min_power_beamforming(cfg, ch).ok()?;
            if p_min > cfg.max_tx_power {
                return None;
            }
            if idle {
                return Some(min);
            }
            sabf_solve_auto(cfg, ch, e, q).ok()
        }
        Solver::Zfbf => {
            let w_zf = zf_matrix(ch).ok()?;
            if !zf_feasible(cfg, &w_zf) {
                return None;
            }
            if idle {
                let w = cfg
                    .links
                    .iter()
                    .zip(&w_zf)
                    .map(|(l, d)| {
                        let s = (l.sinr_target * l.noise_power).sqrt();
                        d.iter().map(|z| z * s).collect()
                    })
                    .collect();
                return Some(BeamformingSolution::new(w, SolveStatus::Solved));
            }
            zfbf_solve(cfg, ch, e, q).ok()
        }
    }
}

/// One frame of the dynamic beamforming loop. Infeasible frames and solver
/// errors both end in random beams at full power.
pub fn frame_decision(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
    solver: Solver,
    rng: &mut RngStream,
) -> Result<(BeamformingSolution<f64>, FrameRecord)> {
    cfg.validate()?;
    ch.check(cfg)?;
    e.validate()?;
    if q.q.len() != cfg.n_links() {
        return Err(Error::Dimension("queue vector length differs from link count".into()));
    }
    let mut sol = solve(cfg, ch, e, q, solver).unwrap_or_else(|| fallback_beamformers(cfg, rng));
    let sinr = sinrs(cfg, ch, &sol.w)?;
    let departure: Vec<f64> = cfg
        .links
        .iter()
        .zip(&sinr)
        .map(|(l, &s)| packet_departure(s, l.mcs_b, l.mcs_c))
        .collect();
    let p_tot = total_power(cfg, &sol.w);
    sol.objective = gewpr_objective(cfg, ch, e, &sol.w, q)?;
    let record = FrameRecord {
        frame: 0,
        grid_cost: grid_cost(p_tot, e),
        total_power: p_tot,
        transmit_power: transmit_power(&sol.w),
        objective: sol.objective,
        sinr,
        departure,
        q: q.q.clone(),
        arrivals: vec![0.0; cfg.n_links()],
        status: sol.status,
        iterations: sol.total_iterations(),
    };
    Ok((sol, record))
}
