//! Brute-force references shared by the integration and acceptance suites.
#![allow(dead_code)]

use hutbeam::model::{grid_cost, norm_sqr, signal_processing_power, EnergyPriceState, QueueState, SystemConfig};
use hutbeam::stochastic::{draw_channel, streams, RngStream};
use hutbeam::zfbf::{zf_matrix, ZfState};
use rand::RngExt;

/// ZF power objective written directly in the dB form of the sigmoid tail.
pub fn zf_objective(cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, zf: &ZfState, p: &[f64]) -> f64 {
    let reward: f64 = cfg
        .links
        .iter()
        .enumerate()
        .map(|(n, l)| {
            let db = 10.0 * (p[n] / l.noise_power).log10();
            zf.varpi[n] * zf.gamma[n] * (-l.mcs_c * (db - l.mcs_b)).exp()
        })
        .sum();
    let tx: f64 = p.iter().zip(&zf.w_zf).map(|(p, w)| p * norm_sqr(w)).sum();
    reward + cfg.control_v * grid_cost(tx / cfg.pa_efficiency + signal_processing_power(cfg), e)
}

/// Exhaustive search over the two-user grid of radiated powers
/// `t_n = p_n ||w_zf,n||^2 = t_lo,n + k_n step` under the cap.
///
/// The box is cut where no point can beat the minimal one: the grid cost
/// rises at least at `a_s / psi` per radiated mW and the reward part is
/// nonnegative, so any excess `sum (t_n - t_lo,n) > psi R / (V a_s)`, with
/// `R` the reward part at the minimal point, costs more than it can save.
pub fn zf_grid_search(cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, zf: &ZfState, step: f64) -> (f64, [f64; 2]) {
    assert_eq!(cfg.n_links(), 2);
    let g: Vec<f64> = zf.w_zf.iter().map(|w| norm_sqr(w)).collect();
    let t_lo: Vec<f64> = cfg.links.iter().zip(&g).map(|(l, g)| l.sinr_target * l.noise_power * g).collect();
    let reward = |n: usize, t: f64| {
        let l = &cfg.links[n];
        let db = 10.0 * (t / g[n] / l.noise_power).log10();
        zf.varpi[n] * zf.gamma[n] * (-l.mcs_c * (db - l.mcs_b)).exp()
    };
    let r_lo = reward(0, t_lo[0]) + reward(1, t_lo[1]);
    let headroom = cfg.max_tx_power - t_lo[0] - t_lo[1];
    let excess = if cfg.control_v > 0.0 {
        headroom.min(cfg.pa_efficiency * r_lo / (cfg.control_v * e.sell_price))
    } else {
        headroom
    };
    let k_max = (excess / step).floor() as usize;
    let r: Vec<Vec<f64>> = (0..2).map(|n| (0..=k_max).map(|k| reward(n, t_lo[n] + k as f64 * step)).collect()).collect();
    let base = t_lo[0] + t_lo[1];
    let cost: Vec<f64> = (0..=2 * k_max)
        .map(|k| cfg.control_v * grid_cost((base + k as f64 * step) / cfg.pa_efficiency + signal_processing_power(cfg), e))
        .collect();
    let mut best = (f64::INFINITY, [0usize, 0usize]);
    for i in 0..=k_max {
        for j in 0..=k_max {
            if t_lo[0] + i as f64 * step + t_lo[1] + j as f64 * step > cfg.max_tx_power {
                break;
            }
            let f = r[0][i] + r[1][j] + cost[i + j];
            if f < best.0 {
                best = (f, [i, j]);
            }
        }
    }
    let [i, j] = best.1;
    let p = [(t_lo[0] + i as f64 * step) / g[0], (t_lo[1] + j as f64 * step) / g[1]];
    (zf_objective(cfg, e, zf, &p), p)
}

/// A random two-user ZF instance at the state the outer loop starts from.
pub fn two_user_instance(rng: &mut RngStream) -> (SystemConfig<f64>, EnergyPriceState<f64>, ZfState) {
    let mut cfg = SystemConfig::<f64>::standard_with(2, 4);
    cfg.control_v = [1e-3, 4e-3, 7e-3][rng.random_range(0..3)];
    let e = EnergyPriceState {
        harvest: [100.0, 150.0, 200.0, 300.0][rng.random_range(0..4)],
        buy_price: rng.random_range(1.1..1.9),
        sell_price: 1.0,
    };
    let q = QueueState { q: vec![rng.random_range(0.5..20.0), rng.random_range(0.5..20.0)] };
    let mut ch_rng = RngStream::new(rng.random(), streams::CHANNEL);
    loop {
        let ch = draw_channel(&cfg, &mut ch_rng);
        if let Ok(w) = zf_matrix(&ch) {
            if hutbeam::feasibility::zf_feasible(&cfg, &w) {
                return (cfg.clone(), e, ZfState::initial(&cfg, w, &q.q));
            }
        }
    }
}
