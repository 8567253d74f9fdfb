//! Successive convex approximation beamforming.
//!
//! Each iteration fixes the parametric weights `(gamma, varpi)` and an
//! expansion point `(w_ref, alpha_ref)`, and solves a conic program in
//! `(w, alpha, beta, r, g)`:
//!
//! ```text
//! min  V g + sum_n varpi_n gamma_n e^{c_n b_n} alpha_n^-kappa_n
//! s.t. sum_n ||w_n||^2 <= r <= P^max,   g >= a (r/psi + P_sp - E) for a in {a_b, a_s}
//!      Re(h_n^H w_n) >= sqrt(Gamma_n) beta_n,   Im(h_n^H w_n) = 0
//!      beta_n^2 <= Psi_n(w, alpha_n)                 (linearized |h^H w|^2 / alpha)
//!      ||(sigma_n, h_n^H W_-n)|| <= beta_n
//! ```
//!
//! Channels are whitened (`h_n / sigma_n`) before the problem is built, so
//! `beta_n` is measured in noise units.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::conic::{self, Affine, ConicProblem, ConicStatus, SolveOptions};
use crate::embedding::{phase_normalize, whitened, BeamVars};
use crate::error::{Error, Result};
use crate::feasibility::{min_power_beamforming, zf_feasible};
use crate::model::{
    grid_cost, inner, packet_departure, sigmoid_tail, signal_processing_power, sinrs, total_power,
    transmit_power, BeamformingSolution, CVec, ChannelState, EnergyPriceState, QueueState, SolveStatus, SystemConfig,
};
use crate::zfbf::{kappa, rel_change, transform_weights, zf_matrix, zfbf_run, ZfInner};

#[derive(Clone, Debug, PartialEq)]
pub struct SabfState {
    pub w: Vec<CVec<f64>>,
    pub alpha: Vec<f64>,
    /// Interference-plus-noise amplitude in noise units.
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub varpi: Vec<f64>,
    pub iteration: usize,
    /// `V G(w) - sum_n q_n U_n(alpha_n)` at every accepted iterate.
    pub trace: Vec<f64>,
}

fn whitened_channels(cfg: &SystemConfig<f64>, ch: &ChannelState<f64>) -> Vec<CVec<f64>> {
    whitened(&ch.h, cfg.links.iter().map(|l| l.noise_power))
}

/// `1 + sum_{m != n} |g_n^H w_m|^2` for whitened `g_n`.
fn interference(g: &[CVec<f64>], w: &[CVec<f64>], n: usize) -> f64 {
    1.0 + w
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != n)
        .map(|(_, wm)| inner(&g[n], wm).norm_sqr())
        .sum::<f64>()
}

/// `V G(w) - sum_n q_n U_n(alpha_n)`
pub fn surrogate_gewpr(cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, w: &[CVec<f64>], alpha: &[f64], q: &[f64]) -> f64 {
    let reward: f64 = cfg
        .links
        .iter()
        .zip(alpha.iter().zip(q))
        .map(|(l, (a, q))| q * packet_departure(*a, l.mcs_b, l.mcs_c))
        .sum();
    cfg.control_v * grid_cost(total_power(cfg, w), e) - reward
}

impl SabfState {
    /// State at a feasible beamformer: `alpha = SINR(w)`, `beta` at the
    /// interference floor, weights from `alpha`.
    pub fn at_point(cfg: &SystemConfig<f64>, ch: &ChannelState<f64>, e: &EnergyPriceState<f64>, q: &[f64], mut w: Vec<CVec<f64>>) -> Result<Self> {
        phase_normalize(&ch.h, &mut w);
        let alpha = sinrs(cfg, ch, &w)?;
        let g = whitened_channels(cfg, ch);
        let beta = (0..w.len()).map(|n| interference(&g, &w, n).sqrt()).collect();
        let (gamma, varpi) = transform_weights(cfg, q, &alpha);
        let trace = vec![surrogate_gewpr(cfg, e, &w, &alpha, q)];
        Ok(Self { w, alpha, beta, gamma, varpi, iteration: 0, trace })
    }
}

/// `||w - w_old||_F / ||w_old||_F`.
fn beam_change(w: &[CVec<f64>], w_old: &[CVec<f64>]) -> f64 {
    let num: f64 = w.iter().flatten().zip(w_old.iter().flatten()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = w_old.iter().flatten().map(|b| b.norm_sqr()).sum();
    if num == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// First-order expansion of `|h^H w|^2 / alpha` around `(w_ref, alpha_ref)`:
/// `2 Re(w_ref^H h h^H w) / alpha_ref - (|h^H w_ref| / alpha_ref)^2 alpha`.
/// A global lower bound, tight at the expansion point.
pub fn psi_linearization(h: &[Complex64], w_ref: &[Complex64], alpha_ref: f64, w: &[Complex64], alpha: f64) -> f64 {
    let z_ref = inner(h, w_ref);
    let z = inner(h, w);
    2.0 * (z_ref.conj() * z).re / alpha_ref - (z_ref.norm() / alpha_ref).powi(2) * alpha
}

/// Variable layout of a built subproblem.
#[derive(Clone, Debug)]
pub struct SubproblemVars {
    pub beams: BeamVars,
    /// `alpha_n / alpha_ref,n`
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub epigraph: Vec<Option<usize>>,
    pub power: usize,
    pub grid: Option<usize>,
    pub alpha_ref: Vec<f64>,
}

impl SubproblemVars {
    /// A decision vector placing the subproblem at `state`'s point.
    pub fn point(&self, p: &ConicProblem, cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, state: &SabfState) -> Vec<f64> {
        let mut x = vec![0.0; p.n_vars()];
        self.beams.store(&state.w, &mut x);
        for n in 0..self.alpha.len() {
            x[self.alpha[n]] = state.alpha[n] / self.alpha_ref[n];
            x[self.beta[n]] = state.beta[n];
            if let Some(t) = self.epigraph[n] {
                x[t] = x[self.alpha[n]].powf(-kappa(cfg.links[n].mcs_c));
            }
        }
        let r = transmit_power(&state.w);
        x[self.power] = r;
        if let Some(g) = self.grid {
            x[g] = grid_cost(r / cfg.pa_efficiency + signal_processing_power(cfg), e);
        }
        x
    }
}

/// Builds the convexified problem around `state`. `state.w` must be phase
/// normalized so that `h_n^H w_n` is real.
pub fn build_subproblem(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    _q: &[f64],
    state: &SabfState,
) -> (ConicProblem, SubproblemVars) {
    let n_links = cfg.n_links();
    let g = whitened_channels(cfg, ch);
    let mut p = ConicProblem::new();
    let beams = BeamVars::new(&mut p, n_links, cfg.n_antennas);
    let alpha = p.add_vars(n_links);
    let beta = p.add_vars(n_links);
    let power = p.add_var();
    let p_max = cfg.max_tx_power;

    // sum ||w||^2 <= r <= P^max
    let s = p_max.sqrt();
    let head = Affine::var(power).scaled(1.0 / s).plus(s);
    let mut tail = vec![Affine::var(power).scaled(1.0 / s).plus(-s)];
    tail.extend(beams.coordinates(2.0));
    p.second_order(head, tail);
    p.nonnegative(Affine::constant(1.0).term(power, -1.0 / p_max));

    let grid = (cfg.control_v > 0.0).then(|| {
        let gv = p.add_var();
        p.set_cost(gv, cfg.control_v);
        let offset = signal_processing_power(cfg) - e.harvest;
        for price in [e.buy_price, e.sell_price] {
            // g / price - (r / psi + P_sp - E) >= 0, in units of P^max
            p.nonnegative(
                Affine::default()
                    .term(gv, 1.0 / (price * p_max))
                    .term(power, -1.0 / (cfg.pa_efficiency * p_max))
                    .plus(-offset / p_max),
            );
        }
        gv
    });

    let mut epigraph = Vec::with_capacity(n_links);
    let mut alpha_ref = Vec::with_capacity(n_links);
    for n in 0..n_links {
        let l = &cfg.links[n];
        let a_ref = state.alpha[n];
        alpha_ref.push(a_ref);
        let (re, im) = beams.inner(&g[n], n);
        p.equal_zero(im);
        p.nonnegative(re.clone().term(beta[n], -l.sinr_target.sqrt()));

        // beta^2 <= L with L = 2 rho_ref Re(g^H w) / alpha_ref - rho_ref^2 alpha_hat / alpha_ref
        let rho_ref = inner(&g[n], &state.w[n]).re;
        let lin = re.scaled(2.0 * rho_ref / a_ref).term(alpha[n], -rho_ref * rho_ref / a_ref);
        let sc = state.beta[n].max(1e-6);
        p.second_order(
            lin.clone().scaled(1.0 / sc).plus(sc),
            vec![lin.scaled(1.0 / sc).plus(-sc), Affine::default().term(beta[n], 2.0)],
        );

        let mut tail = vec![Affine::constant(1.0)];
        for m in (0..n_links).filter(|&m| m != n) {
            let (r, i) = beams.inner(&g[n], m);
            tail.push(r);
            tail.push(i);
        }
        p.second_order(Affine::var(beta[n]), tail);

        let kap = kappa(l.mcs_c);
        let coeff = state.varpi[n] * state.gamma[n] * (l.mcs_c * l.mcs_b).exp() * a_ref.powf(-kap);
        epigraph.push((coeff > 0.0).then(|| {
            let t = p.add_var();
            p.set_cost(t, coeff);
            p.power(Affine::var(t), Affine::var(alpha[n]), Affine::constant(1.0), 1.0 / (1.0 + kap));
            t
        }));
        if epigraph[n].is_none() {
            // no reward term: pin alpha so the program stays bounded
            p.nonnegative(Affine::var(alpha[n]).plus(-l.sinr_target / a_ref));
        }
    }
    let vars = SubproblemVars { beams, alpha, beta, epigraph, power, grid, alpha_ref };
    (p, vars)
}

/// Initial point: the ZFBF output when zero forcing is feasible (its outer
/// iterations are returned as the warm-start count), otherwise the
/// minimum-power beamformer scaled by a common factor to use the full cap.
pub fn initial_point(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
) -> Result<(Vec<CVec<f64>>, usize)> {
    if let Ok(w_zf) = zf_matrix(ch) {
        if zf_feasible(cfg, &w_zf) {
            let run = zfbf_run(cfg, ch, e, q, ZfInner::Conic)?;
            return Ok((run.solution.w, run.state.iteration));
        }
    }
    let (sol, p_min) = min_power_beamforming(cfg, ch)?;
    if p_min > cfg.max_tx_power {
        return Err(Error::Infeasible(format!("minimum power {p_min} exceeds the cap")));
    }
    let k = (cfg.max_tx_power / p_min).sqrt();
    let w = sol.w.iter().map(|wn| wn.iter().map(|z| z * k).collect()).collect();
    Ok((w, 0))
}

#[derive(Clone, Debug)]
pub struct SabfRun {
    pub state: SabfState,
    pub converged: bool,
    pub solution: BeamformingSolution<f64>,
}

/// Runs the SCA loop from a feasible `w_init`.
pub fn sabf_run(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
    w_init: Vec<CVec<f64>>,
) -> Result<SabfRun> {
    cfg.validate()?;
    ch.check(cfg)?;
    e.validate()?;
    if q.q.len() != cfg.n_links() || w_init.len() != cfg.n_links() {
        return Err(Error::Dimension("queue or beamformer count differs from link count".into()));
    }
    let g = whitened_channels(cfg, ch);
    let mut state = SabfState::at_point(cfg, ch, e, &q.q, w_init)?;
    let mut converged = false;
    let mut failed = false;
    while state.iteration < cfg.sabf_max_iter {
        let (prob, vars) = build_subproblem(cfg, ch, e, &q.q, &state);
        let sol = match conic::solve(&prob, &SolveOptions::default()) {
            Ok(s) if s.status == ConicStatus::Optimal => s,
            _ => {
                failed = true;
                break;
            }
        };
        let mut w = vars.beams.extract(&sol.x);
        phase_normalize(&ch.h, &mut w);
        let tx = transmit_power(&w);
        if tx > cfg.max_tx_power {
            let k = (cfg.max_tx_power / tx).sqrt();
            w.iter_mut().flatten().for_each(|z| *z *= k);
        }
        // re-expand at the tight point alpha = SINR(w); beta keeps the
        // solver's value, clipped to the interference floor
        let alpha = sinrs(cfg, ch, &w)?;
        let beta: Vec<f64> = (0..alpha.len())
            .map(|n| sol.x[vars.beta[n]].max(interference(&g, &w, n).sqrt()))
            .collect();
        let obj = surrogate_gewpr(cfg, e, &w, &alpha, &q.q);
        let prev = *state.trace.last().expect("nonempty");
        if obj > prev {
            // only solver tolerance can undo the descent; keep the last iterate
            converged = true;
            break;
        }
        let (gamma, varpi) = transform_weights(cfg, &q.q, &alpha);
        // gamma and varpi freeze while every link sits at its target even
        // though w is still moving, so the beamformers must settle too
        let done = rel_change(&gamma, &state.gamma) <= cfg.sabf_tol
            && rel_change(&varpi, &state.varpi) <= cfg.sabf_tol
            && beam_change(&w, &state.w) <= cfg.sabf_tol;
        state.w = w;
        state.alpha = alpha;
        state.beta = beta;
        state.gamma = gamma;
        state.varpi = varpi;
        state.iteration += 1;
        state.trace.push(obj);
        if done {
            converged = true;
            break;
        }
    }
    let status = if failed { SolveStatus::Fallback } else { SolveStatus::Solved };
    let mut solution = BeamformingSolution::new(state.w.clone(), status);
    solution.iterations = state.iteration;
    solution.objective = *state.trace.last().expect("nonempty");
    Ok(SabfRun { state, converged, solution })
}

/// SABF from a given feasible start.
pub fn sabf_solve(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
    w_init: Vec<CVec<f64>>,
) -> Result<BeamformingSolution<f64>> {
    sabf_run(cfg, ch, e, q, w_init).map(|r| r.solution)
}

/// SABF with its standard initialization; the warm-start iterations are
/// reported in `warm_iterations`.
pub fn sabf_solve_auto(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
) -> Result<BeamformingSolution<f64>> {
    let (w0, warm) = initial_point(cfg, ch, e, q)?;
    let mut sol = sabf_solve(cfg, ch, e, q, w0)?;
    sol.warm_iterations = warm;
    Ok(sol)
}

/// Stacks complex per-link gradient blocks into one real vector.
fn flatten(blocks: &[CVec<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        blocks.iter().map(|b| 2 * b.len()).sum(),
        blocks.iter().flatten().flat_map(|z| [z.re, z.im]),
    )
}

/// KKT residual of `min V G - sum q U(alpha)` s.t. power cap, SINR targets
/// and `SINR >= alpha`, at `state`. The multipliers of `SINR >= alpha` follow
/// from alpha-stationarity, `zeta_n = varpi_n gamma_n kappa_n E_n / alpha_n`;
/// the remaining ones (power cap, SINR targets, and the grid-price slope at
/// the buy/sell kink) are fitted by least squares over all active sets.
/// Returns the maximum of the normalized stationarity, complementarity,
/// primal feasibility, and weight-consistency residuals.
pub fn kkt_residual(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
    state: &SabfState,
) -> f64 {
    let n = cfg.n_links();
    let g = whitened_channels(cfg, ch);
    let w = &state.w;
    let sinr: Vec<f64> = (0..n).map(|i| inner(&g[i], &w[i]).norm_sqr() / interference(&g, w, i)).collect();

    // gradient of SINR_i with respect to all beamformers
    let grad_sinr: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let ii = interference(&g, w, i);
            let s = inner(&g[i], &w[i]).norm_sqr();
            let blocks: Vec<CVec<f64>> = (0..n)
                .map(|k| {
                    let z = inner(&g[i], &w[k]);
                    let f = if k == i { 2.0 * z / ii } else { -2.0 * s / (ii * ii) * z };
                    g[i].iter().map(|gk| gk * f).collect()
                })
                .collect();
            flatten(&blocks)
        })
        .collect();
    let grad_power = flatten(w).scale(2.0);

    let zeta: Vec<f64> = cfg
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let a = state.alpha[i];
            state.varpi[i] * state.gamma[i] * kappa(l.mcs_c) * sigmoid_tail(a, l.mcs_b, l.mcs_c) / a
        })
        .collect();
    let mut reward_grad = DVector::zeros(grad_power.len());
    let mut scale = 0.0;
    for i in 0..n {
        let gi = grad_sinr[i].scale(zeta[i]);
        scale += gi.norm();
        reward_grad += gi;
    }

    let p_tx = transmit_power(w);
    let p_tot = total_power(cfg, w);
    let kink_scale = p_tot.max(e.harvest).max(1e-12);
    let cost_dir = grad_power.scale(cfg.control_v / cfg.pa_efficiency);
    scale += cost_dir.norm() * e.buy_price;
    let scale = scale.max(1e-300);

    let mut best = f64::INFINITY;
    // slope variants: 0 = sell price, 1 = buy price, 2 = free slope on the kink
    for variant in 0..3 {
        let kink = match variant {
            0 => (p_tot - e.harvest).max(0.0) / kink_scale,
            1 => (e.harvest - p_tot).max(0.0) / kink_scale,
            _ => (p_tot - e.harvest).abs() / kink_scale,
        };
        if kink >= best {
            continue;
        }
        let fixed_slope = match variant {
            0 => e.sell_price,
            1 => e.buy_price,
            _ => 0.0,
        };
        let rhs = reward_grad.clone() - cost_dir.scale(fixed_slope);
        for mask in 0..(1usize << (n + 1)) {
            // columns: power cap, SINR targets, optional free slope
            let mut cols: Vec<(usize, DVector<f64>)> = Vec::new();
            if mask & 1 != 0 {
                cols.push((0, grad_power.clone()));
            }
            for i in 0..n {
                if mask & (1 << (i + 1)) != 0 {
                    cols.push((i + 1, -grad_sinr[i].clone()));
                }
            }
            if variant == 2 {
                cols.push((n + 1, cost_dir.clone()));
            }
            let coef = if cols.is_empty() {
                DVector::zeros(0)
            } else {
                let a = DMatrix::from_columns(&cols.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
                match a.clone().svd(true, true).solve(&rhs, 1e-12) {
                    Ok(c) => c,
                    Err(_) => continue,
                }
            };
            let mut coef = coef;
            if variant == 2 {
                let last = coef.len() - 1;
                coef[last] = coef[last].clamp(e.sell_price, e.buy_price);
            }
            if cols.iter().zip(coef.iter()).any(|(c, &v)| c.0 <= n && v < 0.0) {
                continue;
            }
            let mut r = -rhs.clone();
            for (c, v) in cols.iter().zip(coef.iter()) {
                r += c.1.scale(*v);
            }
            let mut worst = r.norm() / scale;
            worst = worst.max(kink);
            for (c, v) in cols.iter().zip(coef.iter()) {
                let weight = c.1.norm() * v / scale;
                let slack = match c.0 {
                    0 => (cfg.max_tx_power - p_tx).abs() / cfg.max_tx_power,
                    i if i <= n => (sinr[i - 1] - cfg.links[i - 1].sinr_target).abs() / cfg.links[i - 1].sinr_target,
                    _ => 0.0,
                };
                worst = worst.max(weight * slack);
            }
            best = best.min(worst);
        }
    }

    let mut res = best;
    for i in 0..n {
        let l = &cfg.links[i];
        let zn = grad_sinr[i].norm() * zeta[i] / scale;
        res = res.max(zn * (sinr[i] - state.alpha[i]).abs() / state.alpha[i]);
        res = res.max((l.sinr_target - sinr[i]).max(0.0) / l.sinr_target);
        res = res.max((state.alpha[i] - sinr[i]).max(0.0) / state.alpha[i]);
        let u = packet_departure(state.alpha[i], l.mcs_b, l.mcs_c);
        res = res.max((state.gamma[i] - u).abs() / u.max(1e-300));
        res = res.max((state.varpi[i] - q.q[i] * state.gamma[i]).abs() / (q.q[i] * state.gamma[i]).max(1e-300));
    }
    res.max((p_tx - cfg.max_tx_power).max(0.0) / cfg.max_tx_power)
}
