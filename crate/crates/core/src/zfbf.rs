//! Zero-forcing beamforming: pseudo-inverse directions plus an iterated
//! convex power allocation.
//!
//! With `H^H W_ZF = I` the SINR of link `n` is `p_n / sigma_n^2`, so each
//! outer iteration only has to place `N` powers. The sigmoid reward is
//! handled by the parametric transformation `(gamma, varpi)`; each inner
//! problem is convex and is solved either as a conic program or by
//! bisection on the multiplier of the total transmit power.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::conic::{self, Affine, ConicProblem, ConicStatus, SolveOptions};
use crate::error::{Error, Result};
use crate::feasibility::zf_feasible;
use crate::model::{
    grid_cost, norm_sqr, packet_departure, signal_processing_power, BeamformingSolution, CVec, ChannelState,
    EnergyPriceState, QueueState, SolveStatus, SystemConfig,
};

/// `kappa = 10 c / ln 10`, so that `exp(-c (10 log10 x - b)) = e^{cb} x^-kappa`.
pub fn kappa(c: f64) -> f64 {
    10.0 * c / std::f64::consts::LN_10
}

/// Columns of `W_ZF = H (H^H H)^-1`, computed from a thin SVD `H = U S V^H`
/// as `U S^-1 V^H`.
pub fn zf_matrix(ch: &ChannelState<f64>) -> Result<Vec<CVec<f64>>> {
    let n = ch.h.len();
    let nt = ch.h.first().map_or(0, Vec::len);
    if n == 0 {
        return Ok(Vec::new());
    }
    if nt < n {
        return Err(Error::RankDeficient { rank: nt, links: n });
    }
    let h = DMatrix::from_fn(nt, n, |k, j| ch.h[j][k]);
    let svd = h.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let rank = s.iter().filter(|&&x| x > 1e-10 * smax).count();
    if rank < n || !(smax > 0.0) {
        return Err(Error::RankDeficient { rank, links: n });
    }
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let sinv = DMatrix::from_diagonal(&s.map(|x| Complex64::from(1.0 / x)));
    let w = u * sinv * vt;
    Ok((0..n).map(|j| w.column(j).iter().copied().collect()).collect())
}

/// `gamma_n = U_n(x_n)` and `varpi_n = q_n gamma_n` at linear SINRs `x`.
pub fn transform_weights(cfg: &SystemConfig<f64>, q: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gamma: Vec<f64> = cfg
        .links
        .iter()
        .zip(x)
        .map(|(l, &s)| packet_departure(s, l.mcs_b, l.mcs_c))
        .collect();
    let varpi = gamma.iter().zip(q).map(|(g, q)| q * g).collect();
    (gamma, varpi)
}

/// `||a - b|| / ||b||`, with `0/0` read as no change.
pub(crate) fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let num = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den = old.iter().map(|b| b * b).sum::<f64>().sqrt();
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Inner solver choice for the power subproblem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZfInner {
    #[default]
    Conic,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZfState {
    pub w_zf: Vec<CVec<f64>>,
    pub p: Vec<f64>,
    pub gamma: Vec<f64>,
    pub varpi: Vec<f64>,
    pub iteration: usize,
}

impl ZfState {
    /// Starts from the minimal feasible point `p_n = Gamma_n sigma_n^2`.
    pub fn initial(cfg: &SystemConfig<f64>, w_zf: Vec<CVec<f64>>, q: &[f64]) -> Self {
        let p: Vec<f64> = cfg.links.iter().map(|l| l.sinr_target * l.noise_power).collect();
        let mut s = Self { w_zf, p, gamma: Vec::new(), varpi: Vec::new(), iteration: 0 };
        s.refresh_weights(cfg, q);
        s
    }

    pub fn snr(&self, cfg: &SystemConfig<f64>) -> Vec<f64> {
        self.p.iter().zip(&cfg.links).map(|(p, l)| p / l.noise_power).collect()
    }

    pub fn refresh_weights(&mut self, cfg: &SystemConfig<f64>, q: &[f64]) {
        let (g, v) = transform_weights(cfg, q, &self.snr(cfg));
        self.gamma = g;
        self.varpi = v;
    }

    pub fn beamformers(&self) -> Vec<CVec<f64>> {
        self.w_zf
            .iter()
            .zip(&self.p)
            .map(|(w, p)| {
                let s = p.sqrt();
                w.iter().map(|z| z * s).collect()
            })
            .collect()
    }
}

/// Data of the power subproblem in SNR units `x_n = p_n / sigma_n^2`:
/// minimize `sum_n a_n x_n^-kappa_n + V G(sum_n e_n x_n)` subject to
/// `sum_n e_n x_n <= P^max` and `x_n >= Gamma_n`.
struct PowerData {
    a: Vec<f64>,
    kap: Vec<f64>,
    e: Vec<f64>,
    lo: Vec<f64>,
    sigma2: Vec<f64>,
    v: f64,
    psi: f64,
    p_sp: f64,
    p_max: f64,
    price: EnergyPriceState<f64>,
}

impl PowerData {
    fn new(cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, zf: &ZfState) -> Self {
        let l = &cfg.links;
        Self {
            a: l.iter()
                .zip(zf.gamma.iter().zip(&zf.varpi))
                .map(|(l, (g, v))| v * g * (l.mcs_c * l.mcs_b).exp())
                .collect(),
            kap: l.iter().map(|l| kappa(l.mcs_c)).collect(),
            e: l.iter().zip(&zf.w_zf).map(|(l, w)| l.noise_power * norm_sqr(w)).collect(),
            lo: l.iter().map(|l| l.sinr_target).collect(),
            sigma2: l.iter().map(|l| l.noise_power).collect(),
            v: cfg.control_v,
            psi: cfg.pa_efficiency,
            p_sp: signal_processing_power(cfg),
            p_max: cfg.max_tx_power,
            price: *e,
        }
    }

    fn tx(&self, x: &[f64]) -> f64 {
        self.e.iter().zip(x).map(|(e, x)| e * x).sum()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let reward: f64 = (0..x.len()).map(|n| self.a[n] * x[n].powf(-self.kap[n])).sum();
        reward + self.v * grid_cost(self.tx(x) / self.psi + self.p_sp, &self.price)
    }

    fn powers(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.sigma2).map(|(x, s)| x * s).collect()
    }

    /// Pulls `x` back into the feasible set: lower bounds first, then shrink
    /// the part above the lower bounds until the cap holds.
    fn repair(&self, x: &mut [f64]) {
        for (xn, lo) in x.iter_mut().zip(&self.lo) {
            *xn = xn.max(*lo);
        }
        let base = self.tx(&self.lo);
        let total = self.tx(x);
        if total > self.p_max && total > base {
            let th = ((self.p_max - base) / (total - base)).clamp(0.0, 1.0);
            for (xn, lo) in x.iter_mut().zip(&self.lo) {
                *xn = lo + th * (*xn - lo);
            }
        }
    }
}

/// Value of the subproblem objective (`(gamma, varpi)` fixed) at powers `p`.
pub fn subproblem_objective(cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, zf: &ZfState, p: &[f64]) -> f64 {
    let d = PowerData::new(cfg, e, zf);
    let x: Vec<f64> = p.iter().zip(&d.sigma2).map(|(p, s)| p / s).collect();
    d.objective(&x)
}

fn check_feasible(cfg: &SystemConfig<f64>, zf: &ZfState) -> Result<()> {
    if zf_feasible(cfg, &zf.w_zf) {
        Ok(())
    } else {
        Err(Error::Infeasible("zero-forcing targets exceed the power cap".into()))
    }
}

/// Solves the power subproblem as a conic program: power cones for the
/// `x^-kappa` terms (in units `x / Gamma`), two cuts for the grid cost.
pub fn power_subproblem(cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, zf: &ZfState) -> Result<Vec<f64>> {
    check_feasible(cfg, zf)?;
    let d = PowerData::new(cfg, e, zf);
    let n = d.a.len();
    let mut p = ConicProblem::new();
    let xh = p.add_vars(n);
    // tx(x) / P^max
    let mut load = Affine::default();
    for i in 0..n {
        load = load.term(xh[i], d.e[i] * d.lo[i] / d.p_max);
        p.nonnegative(Affine::var(xh[i]).plus(-1.0));
        if d.a[i] > 0.0 {
            let t = p.add_var();
            p.set_cost(t, d.a[i] * d.lo[i].powf(-d.kap[i]));
            p.power(Affine::var(t), Affine::var(xh[i]), Affine::constant(1.0), 1.0 / (1.0 + d.kap[i]));
        }
    }
    p.nonnegative(Affine::constant(1.0).add(&load, -1.0));
    if d.v > 0.0 {
        let g = p.add_var();
        p.set_cost(g, d.v);
        // net draw from the grid in units of P^max
        let net = load.clone().scaled(1.0 / d.psi).plus((d.p_sp - d.price.harvest) / d.p_max);
        for price in [d.price.buy_price, d.price.sell_price] {
            p.nonnegative(Affine::var(g).scaled(1.0 / (price * d.p_max)).add(&net, -1.0));
        }
    }
    let sol = conic::solve(&p, &SolveOptions::default())?;
    if sol.status != ConicStatus::Optimal {
        return Err(Error::Solver(format!("power subproblem ended with {:?}", sol.status)));
    }
    let mut x: Vec<f64> = (0..n).map(|i| sol.x[xh[i]] * d.lo[i]).collect();
    d.repair(&mut x);
    Ok(d.powers(&x))
}

/// Independent solution of the power subproblem: for a total-power
/// multiplier `nu`, each `x_n(nu) = max(Gamma_n, (kappa_n a_n / (nu e_n))^{1/(1+kappa_n)})`;
/// `nu` is found by bisection so that it lies in the subdifferential of
/// `V G` plus the normal cone of the cap at `r = sum e_n x_n(nu)`.
pub fn power_subproblem_closed_form(
    cfg: &SystemConfig<f64>,
    e: &EnergyPriceState<f64>,
    zf: &ZfState,
) -> Result<Vec<f64>> {
    check_feasible(cfg, zf)?;
    let d = PowerData::new(cfg, e, zf);
    let n = d.a.len();
    let x_at = |nu: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if d.a[i] <= 0.0 {
                    d.lo[i]
                } else {
                    (d.kap[i] * d.a[i] / (nu * d.e[i])).powf(1.0 / (1.0 + d.kap[i])).max(d.lo[i])
                }
            })
            .collect()
    };
    let kink = d.psi * (d.price.harvest - d.p_sp);
    let classify = |nu: f64| -> Ordering {
        let r = d.tx(&x_at(nu));
        if r > d.p_max {
            return Ordering::Less;
        }
        let scale = d.v / d.psi;
        let (lo, mut hi) = match r.partial_cmp(&kink) {
            Some(Ordering::Less) => (d.price.sell_price * scale, d.price.sell_price * scale),
            Some(Ordering::Greater) => (d.price.buy_price * scale, d.price.buy_price * scale),
            _ => (d.price.sell_price * scale, d.price.buy_price * scale),
        };
        if r >= d.p_max {
            hi = f64::INFINITY;
        }
        if nu < lo {
            Ordering::Less
        } else if nu > hi {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    };

    // at and above nu_max every x_n sits at its lower bound
    let nu_max = (0..n)
        .filter(|&i| d.a[i] > 0.0)
        .map(|i| d.kap[i] * d.a[i] / (d.e[i] * d.lo[i].powf(1.0 + d.kap[i])))
        .fold(0.0, f64::max);
    if nu_max == 0.0 || classify(nu_max) != Ordering::Greater {
        return Ok(d.powers(&d.lo));
    }
    let mut hi = nu_max;
    let mut lo = nu_max;
    loop {
        lo *= 1e-3;
        match classify(lo) {
            Ordering::Less => break,
            Ordering::Greater => hi = lo,
            Ordering::Equal => {
                let mut x = x_at(lo);
                d.repair(&mut x);
                return Ok(d.powers(&x));
            }
        }
    }
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        match classify(mid) {
            Ordering::Less => lo = mid,
            Ordering::Greater => hi = mid,
            Ordering::Equal => {
                hi = mid;
                break;
            }
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let mut x = x_at(hi);
    d.repair(&mut x);
    Ok(d.powers(&x))
}

/// Full record of one ZFBF run.
#[derive(Clone, Debug)]
pub struct ZfRun {
    pub state: ZfState,
    /// GEWPR objective at the initial point and after every iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub solution: BeamformingSolution<f64>,
}

/// `V G - sum_n q_n U_n` at ZF powers `p`.
pub fn zf_gewpr(cfg: &SystemConfig<f64>, e: &EnergyPriceState<f64>, zf: &ZfState, q: &[f64]) -> f64 {
    let d = PowerData::new(cfg, e, zf);
    let snr = zf.snr(cfg);
    let (gamma, _) = transform_weights(cfg, q, &snr);
    let reward: f64 = gamma.iter().zip(q).map(|(g, q)| g * q).sum();
    d.v * grid_cost(d.tx(&snr) / d.psi + d.p_sp, &d.price) - reward
}

pub fn zfbf_run(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
    inner: ZfInner,
) -> Result<ZfRun> {
    cfg.validate()?;
    ch.check(cfg)?;
    e.validate()?;
    if q.q.len() != cfg.n_links() {
        return Err(Error::Dimension("queue vector length differs from link count".into()));
    }
    let w_zf = zf_matrix(ch)?;
    if !zf_feasible(cfg, &w_zf) {
        return Err(Error::Infeasible("zero-forcing targets exceed the power cap".into()));
    }
    let mut state = ZfState::initial(cfg, w_zf, &q.q);
    let mut trace = vec![zf_gewpr(cfg, e, &state, &q.q)];
    let mut converged = false;
    while state.iteration < cfg.sabf_max_iter {
        state.iteration += 1;
        state.p = match inner {
            ZfInner::Conic => power_subproblem(cfg, e, &state)?,
            ZfInner::ClosedForm => power_subproblem_closed_form(cfg, e, &state)?,
        };
        let (old_g, old_v) = (state.gamma.clone(), state.varpi.clone());
        state.refresh_weights(cfg, &q.q);
        trace.push(zf_gewpr(cfg, e, &state, &q.q));
        if rel_change(&state.gamma, &old_g) <= cfg.sabf_tol && rel_change(&state.varpi, &old_v) <= cfg.sabf_tol {
            converged = true;
            break;
        }
    }
    let mut solution = BeamformingSolution::new(state.beamformers(), SolveStatus::Solved);
    solution.iterations = state.iteration;
    solution.objective = *trace.last().expect("nonempty");
    Ok(ZfRun { state, trace, converged, solution })
}

/// ZFBF with the conic inner solver.
pub fn zfbf_solve(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    e: &EnergyPriceState<f64>,
    q: &QueueState<f64>,
) -> Result<BeamformingSolution<f64>> {
    zfbf_run(cfg, ch, e, q, ZfInner::Conic).map(|r| r.solution)
}
