//! Domain types and the closed-form system model: SINR, power draw, grid
//! expenditure under harvest-use-trade, the sigmoid packet departure rate,
//! the traffic queue recursion and the per-frame GEWPR objective.
//!
//! Units: powers in mW, prices in cents/mW, beamformer amplitudes in √mW.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{db_to_linear, Scalar};

/// A complex column vector of length `N_T`.
pub type CVec<T> = Vec<Complex<T>>;

/// How per-frame normalized packet arrivals are drawn. Both have support in
/// `[0, 1]` and mean `u_req`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ArrivalModel {
    #[default]
    Bernoulli,
    /// Uniform on `[0, 2u]` for `u <= 1/2`, on `[2u - 1, 1]` otherwise.
    Uniform,
}

/// Per-link parameters. `sinr_target` is stored linear.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkParams<T> {
    pub noise_power: T,
    pub sinr_target: T,
    pub mcs_b: T,
    pub mcs_c: T,
    pub distance: T,
    pub arrival_mean: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig<T> {
    pub n_antennas: usize,
    pub links: Vec<LinkParams<T>>,
    pub pa_efficiency: T,
    pub sp_base_power: T,
    pub max_tx_power: T,
    pub pathloss_exp: T,
    pub control_v: T,
    pub sabf_tol: T,
    pub sabf_max_iter: usize,
    pub arrivals: ArrivalModel,
}

impl<T: Scalar> SystemConfig<T> {
    /// Three links, four antennas, and the default simulation parameters.
    /// The power-amplifier efficiency defaults to 1.
    pub fn standard() -> Self {
        Self::standard_with(3, 4)
    }

    pub fn standard_with(n_links: usize, n_antennas: usize) -> Self {
        let link = LinkParams {
            noise_power: T::lit(1e-3),
            sinr_target: db_to_linear(T::lit(2.0)),
            mcs_b: T::lit(20.0),
            mcs_c: T::lit(0.451),
            distance: T::lit(10.0),
            arrival_mean: T::lit(0.3),
        };
        Self {
            n_antennas,
            links: vec![link; n_links],
            pa_efficiency: T::one(),
            sp_base_power: T::lit(115.0),
            max_tx_power: T::lit(200.0),
            pathloss_exp: T::lit(3.0),
            control_v: T::lit(1e-3),
            sabf_tol: T::lit(1e-4),
            sabf_max_iter: 50,
            arrivals: ArrivalModel::Bernoulli,
        }
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Sets every link's SINR target from a dB value.
    pub fn set_sinr_target_db(&mut self, db: T) {
        let lin = db_to_linear(db);
        for l in &mut self.links {
            l.sinr_target = lin;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.links.is_empty() {
            return bad("at least one link is required");
        }
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1");
        }
        if !(self.pa_efficiency > T::zero() && self.pa_efficiency <= T::one()) {
            return bad("pa_efficiency must lie in (0, 1]");
        }
        if !(self.sp_base_power > T::zero()) {
            return bad("signal-processing base power must be positive");
        }
        if !(self.max_tx_power >= T::zero()) || !self.max_tx_power.is_finite() {
            return bad("max transmit power must be finite and nonnegative");
        }
        if !(self.control_v > T::zero()) {
            return bad("control parameter V must be positive");
        }
        if !(self.sabf_tol > T::zero()) || self.sabf_max_iter == 0 {
            return bad("stop threshold and iteration cap must be positive");
        }
        for (n, l) in self.links.iter().enumerate() {
            if !(l.noise_power > T::zero()) {
                return Err(Error::Config(format!("link {n}: noise power must be positive")));
            }
            if !(l.sinr_target >= T::zero()) {
                return Err(Error::Config(format!("link {n}: SINR target must be nonnegative")));
            }
            if !(l.mcs_c > T::zero()) {
                return Err(Error::Config(format!("link {n}: mcs_c must be positive")));
            }
            if !(l.distance > T::zero()) {
                return Err(Error::Config(format!("link {n}: distance must be positive")));
            }
            if !(l.arrival_mean >= T::zero() && l.arrival_mean <= T::one()) {
                return Err(Error::Config(format!("link {n}: arrival mean must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Channel vectors `h_n` for one frame, one per link.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelState<T> {
    pub h: Vec<CVec<T>>,
}

impl<T: Scalar> ChannelState<T> {
    pub fn check(&self, cfg: &SystemConfig<T>) -> Result<()> {
        if self.h.len() != cfg.n_links() {
            return Err(Error::Dimension(format!(
                "{} channel vectors for {} links",
                self.h.len(),
                cfg.n_links()
            )));
        }
        for (n, h) in self.h.iter().enumerate() {
            if h.len() != cfg.n_antennas {
                return Err(Error::Dimension(format!(
                    "channel {n} has {} entries, expected {}",
                    h.len(),
                    cfg.n_antennas
                )));
            }
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Dimension(format!("channel {n} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Harvested power and grid prices in effect for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyPriceState<T> {
    pub harvest: T,
    pub buy_price: T,
    pub sell_price: T,
}

impl<T: Scalar> EnergyPriceState<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sell_price > T::zero() && self.buy_price >= self.sell_price) {
            return Err(Error::Config("prices must satisfy buy >= sell > 0".into()));
        }
        if !(self.harvest >= T::zero()) {
            return Err(Error::Config("harvested power must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    Infeasible,
    Fallback,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Solved => "solved",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Fallback => "fallback",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BeamformingSolution<T> {
    pub w: Vec<CVec<T>>,
    pub status: SolveStatus,
    /// Iterations of the solver that produced `w`.
    pub iterations: usize,
    /// Iterations spent producing the warm start (ZFBF iterations ahead of SABF).
    pub warm_iterations: usize,
    /// GEWPR value of `w`; NaN until evaluated.
    pub objective: T,
}

impl<T: Scalar> BeamformingSolution<T> {
    pub fn new(w: Vec<CVec<T>>, status: SolveStatus) -> Self {
        Self { w, status, iterations: 0, warm_iterations: 0, objective: T::nan() }
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations + self.warm_iterations
    }
}

/// Normalized traffic backlogs.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueState<T> {
    pub q: Vec<T>,
}

impl<T: Scalar> QueueState<T> {
    pub fn filled(n: usize, value: T) -> Self {
        Self { q: vec![value; n] }
    }
}

/// `h^H w`
pub fn inner<T: Scalar>(h: &[Complex<T>], w: &[Complex<T>]) -> Complex<T> {
    h.iter().zip(w).fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
}

pub fn norm_sqr<T: Scalar>(w: &[Complex<T>]) -> T {
    w.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

fn check_beams<T: Scalar>(cfg: &SystemConfig<T>, w: &[CVec<T>]) -> Result<()> {
    if w.len() != cfg.n_links() || w.iter().any(|v| v.len() != cfg.n_antennas) {
        return Err(Error::Dimension(format!(
            "beamformers must be {} vectors of length {}",
            cfg.n_links(),
            cfg.n_antennas
        )));
    }
    Ok(())
}

/// Interference-plus-noise power seen by link `n`.
pub fn interference_plus_noise<T: Scalar>(
    cfg: &SystemConfig<T>,
    ch: &ChannelState<T>,
    w: &[CVec<T>],
    n: usize,
) -> T {
    let h = &ch.h[n];
    w.iter()
        .enumerate()
        .filter(|&(m, _)| m != n)
        .fold(cfg.links[n].noise_power, |acc, (_, wm)| acc + inner(h, wm).norm_sqr())
}

/// Linear SINR of link `n`.
pub fn sinr<T: Scalar>(
    cfg: &SystemConfig<T>,
    ch: &ChannelState<T>,
    w: &[CVec<T>],
    n: usize,
) -> Result<T> {
    ch.check(cfg)?;
    check_beams(cfg, w)?;
    if n >= cfg.n_links() {
        return Err(Error::Dimension(format!("link index {n} out of range")));
    }
    let signal = inner(&ch.h[n], &w[n]).norm_sqr();
    Ok(signal / interference_plus_noise(cfg, ch, w, n))
}

pub fn sinrs<T: Scalar>(cfg: &SystemConfig<T>, ch: &ChannelState<T>, w: &[CVec<T>]) -> Result<Vec<T>> {
    (0..cfg.n_links()).map(|n| sinr(cfg, ch, w, n)).collect()
}

/// `P_sp = P_sp,b (0.87 + 0.1 N_T + 0.03 N_T^2)`
pub fn signal_processing_power<T: Scalar>(cfg: &SystemConfig<T>) -> T {
    let nt = T::from_usize(cfg.n_antennas).expect("antenna count fits scalar");
    cfg.sp_base_power * (T::lit(0.87) + T::lit(0.1) * nt + T::lit(0.03) * nt * nt)
}

/// Radiated power `sum_n ||w_n||^2`.
pub fn transmit_power<T: Scalar>(w: &[CVec<T>]) -> T {
    w.iter().fold(T::zero(), |acc, v| acc + norm_sqr(v))
}

pub fn total_power<T: Scalar>(cfg: &SystemConfig<T>, w: &[CVec<T>]) -> T {
    transmit_power(w) / cfg.pa_efficiency + signal_processing_power(cfg)
}

/// Grid expenditure: buy the deficit at `a_b`, sell the surplus at `a_s`.
pub fn grid_cost<T: Scalar>(p_tot: T, e: &EnergyPriceState<T>) -> T {
    e.buy_price * (p_tot - e.harvest).pos() - e.sell_price * (e.harvest - p_tot).pos()
}

/// The same expenditure written as a sum of a hinge and a linear term, which
/// is convex whenever `a_b >= a_s`.
pub fn grid_cost_convex<T: Scalar>(p_tot: T, e: &EnergyPriceState<T>) -> T {
    (e.buy_price - e.sell_price) * (p_tot - e.harvest).pos() + e.sell_price * (p_tot - e.harvest)
}

/// `exp(-c (10 log10 x - b))`, the tail term of the sigmoid.
pub fn sigmoid_tail<T: Scalar>(x: T, b: T, c: T) -> T {
    (-c * (T::lit(10.0) * x.log10() - b)).exp()
}

/// Normalized packet departure rate at linear SINR `x`. Defined as the limit
/// 0 for `x <= 0` so that nulled links are representable.
pub fn packet_departure<T: Scalar>(x: T, b: T, c: T) -> T {
    if !(x > T::zero()) {
        return T::zero();
    }
    T::one() / (T::one() + sigmoid_tail(x, b, c))
}

/// One step of the backlog recursion `[q - u_dep]^+ + u_arr`.
pub fn queue_step<T: Scalar>(q: T, u_dep: T, u_arr: T) -> T {
    (q - u_dep).pos() + u_arr
}

/// `V G(w) - sum_n q_n U_n(w)`
pub fn gewpr_objective<T: Scalar>(
    cfg: &SystemConfig<T>,
    ch: &ChannelState<T>,
    e: &EnergyPriceState<T>,
    w: &[CVec<T>],
    q: &QueueState<T>,
) -> Result<T> {
    if q.q.len() != cfg.n_links() {
        return Err(Error::Dimension("queue vector length differs from link count".into()));
    }
    let g = grid_cost(total_power(cfg, w), e);
    let gamma = sinrs(cfg, ch, w)?;
    let reward = cfg
        .links
        .iter()
        .zip(&gamma)
        .zip(&q.q)
        .fold(T::zero(), |acc, ((l, &s), &qn)| acc + qn * packet_departure(s, l.mcs_b, l.mcs_c));
    Ok(cfg.control_v * g - reward)
}

/// Checks `([a - b]^+ + c)^2 <= a^2 + b^2 + c^2 + 2a(c - b)` for `a >= 0`,
/// `b, c` in `[0, 1]`, allowing a few ulps of rounding on the right side.
pub fn drift_bound_terms<T: Scalar>(a: T, b: T, c: T) -> bool {
    let lhs = ((a - b).pos() + c).powi(2);
    let rhs = a * a + b * b + c * c + T::lit(2.0) * a * (c - b);
    let scale = a * a + b * b + c * c + T::lit(2.0) * a * (b + c);
    lhs <= rhs + T::lit(8.0) * T::epsilon() * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg1() -> SystemConfig<f64> {
        SystemConfig::standard_with(1, 4)
    }

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn sinr_single_link_aligned_beam() {
        let cfg = cfg1();
        let h = vec![c(0.1, -0.2), c(0.05, 0.3), c(-0.4, 0.0), c(0.2, 0.1)];
        let hn = norm_sqr(&h).sqrt();
        let p: f64 = 3.5;
        let w: CVec<f64> = h.iter().map(|z| z * (p.sqrt() / hn)).collect();
        let ch = ChannelState { h: vec![h.clone()] };
        let s = sinr(&cfg, &ch, &[w], 0).unwrap();
        assert_relative_eq!(s, p * hn * hn / 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn sinr_zero_beams_is_zero() {
        let cfg = SystemConfig::<f64>::standard();
        let ch = ChannelState { h: vec![vec![c(1.0, 1.0); 4]; 3] };
        let w = vec![vec![c(0.0, 0.0); 4]; 3];
        for n in 0..3 {
            assert_eq!(sinr(&cfg, &ch, &w, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn sinr_rejects_bad_dimensions() {
        let cfg = SystemConfig::<f64>::standard();
        let ch = ChannelState { h: vec![vec![c(1.0, 0.0); 4]; 3] };
        let w = vec![vec![c(0.0, 0.0); 3]; 3];
        assert!(matches!(sinr(&cfg, &ch, &w, 0), Err(Error::Dimension(_))));
        let w = vec![vec![c(0.0, 0.0); 4]; 2];
        assert!(matches!(sinr(&cfg, &ch, &w, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn signal_processing_power_values() {
        let mut cfg = SystemConfig::<f64>::standard();
        assert_eq!(signal_processing_power(&cfg), 201.25);
        cfg.n_antennas = 1;
        assert_relative_eq!(signal_processing_power(&cfg), 115.0, max_relative = 1e-15);
        cfg.n_antennas = 2;
        cfg.sp_base_power = 100.0;
        assert_relative_eq!(signal_processing_power(&cfg), 119.0, max_relative = 1e-15);
    }

    #[test]
    fn total_power_values() {
        let mut cfg = SystemConfig::<f64>::standard();
        let zero = vec![vec![c(0.0, 0.0); 4]; 3];
        assert_eq!(total_power(&cfg, &zero), 201.25);
        // sum ||w||^2 = 100
        let mut w = zero.clone();
        w[0][0] = c(6.0, 8.0);
        assert_relative_eq!(total_power(&cfg, &w), 301.25, max_relative = 1e-15);
        cfg.pa_efficiency = 0.5;
        assert_relative_eq!(total_power(&cfg, &w), 401.25, max_relative = 1e-15);
    }

    fn prices(harvest: f64) -> EnergyPriceState<f64> {
        EnergyPriceState { harvest, buy_price: 1.2, sell_price: 1.0 }
    }

    #[test]
    fn grid_cost_values() {
        assert_relative_eq!(grid_cost(300.0, &prices(200.0)), 120.0, max_relative = 1e-14);
        assert_relative_eq!(grid_cost(150.0, &prices(200.0)), -50.0, max_relative = 1e-14);
        assert_eq!(grid_cost(200.0, &prices(200.0)), 0.0);
        assert_relative_eq!(grid_cost_convex(300.0, &prices(200.0)), 120.0, max_relative = 1e-14);
        assert_relative_eq!(grid_cost_convex(150.0, &prices(200.0)), -50.0, max_relative = 1e-14);
        assert_eq!(grid_cost_convex(200.0, &prices(200.0)), 0.0);
    }

    #[test]
    fn departure_values() {
        assert_eq!(packet_departure(100.0_f64, 20.0, 0.451), 0.5);
        // 30 dB: 1 / (1 + e^{-4.51})
        assert_relative_eq!(packet_departure(1e3_f64, 20.0, 0.451), 0.989_121_189_982_926, max_relative = 1e-13);
        assert_eq!(packet_departure(0.0_f64, 20.0, 0.451), 0.0);
        assert_eq!(packet_departure(-1.0_f64, 20.0, 0.451), 0.0);
        assert!(packet_departure(1e12_f64, 20.0, 0.451) > 0.999_999);
    }

    #[test]
    fn queue_step_values() {
        assert_relative_eq!(queue_step(5.0, 0.3, 0.2), 4.9, max_relative = 1e-15);
        assert_eq!(queue_step(0.1, 0.3, 0.0), 0.0);
        assert_eq!(queue_step(0.0, 0.0, 1.0), 1.0);
    }

    #[test]
    fn gewpr_without_backlog_is_scaled_grid_cost() {
        let cfg = SystemConfig::<f64>::standard();
        let ch = ChannelState { h: vec![vec![c(0.03, 0.01); 4]; 3] };
        let w = vec![vec![c(0.0, 0.0); 4]; 3];
        let q = QueueState::filled(3, 0.0);
        let e = prices(200.0);
        let obj = gewpr_objective(&cfg, &ch, &e, &w, &q).unwrap();
        assert_relative_eq!(obj, 1e-3 * grid_cost(201.25, &e), max_relative = 1e-14);
    }

    #[test]
    fn drift_inequality_examples() {
        assert!(drift_bound_terms(5.0, 0.3, 0.2));
        assert!(drift_bound_terms(0.0, 1.0, 1.0));
        assert!(drift_bound_terms(0.0_f32, 0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SystemConfig::<f64>::standard();
        assert!(cfg.validate().is_ok());
        cfg.links[1].arrival_mean = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::<f64>::standard();
        cfg.control_v = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::<f64>::standard();
        cfg.links[0].mcs_c = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn standard_target_is_linear() {
        let cfg = SystemConfig::<f64>::standard();
        assert_relative_eq!(cfg.links[0].sinr_target, 10f64.powf(0.2), max_relative = 1e-15);
    }
}
