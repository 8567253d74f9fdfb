//! Per-frame feasibility: minimum transmit power meeting every SINR target,
//! computed both as an SOCP and by the uplink-downlink duality fixed point,
//! and the linear check that applies under zero-forcing.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::conic::{self, Affine, ConicProblem, ConicStatus, SolveOptions};
use crate::embedding::{phase_normalize, whitened, BeamVars};
use crate::error::{Error, Result};
use crate::model::{inner, norm_sqr, transmit_power, BeamformingSolution, CVec, ChannelState, SolveStatus, SystemConfig};

fn normalized_channels(cfg: &SystemConfig<f64>, ch: &ChannelState<f64>) -> Vec<CVec<f64>> {
    whitened(&ch.h, cfg.links.iter().map(|l| l.noise_power))
}

/// Powers along the directions of `u` that meet every target with equality
/// (unit noise): `A p = 1` with `A_nn = |g_n^H u_n|^2 / Gamma_n`,
/// `A_nm = -|g_n^H u_m|^2` for unit-norm `u_m`. `None` if no positive
/// solution exists.
pub fn equalizing_powers(g: &[CVec<f64>], u: &[CVec<f64>], targets: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let c = inner(&g[i], &u[j]).norm_sqr() / norm_sqr(&u[j]);
        if i == j {
            c / targets[i]
        } else {
            -c
        }
    });
    let p = a.lu().solve(&DVector::from_element(n, 1.0))?;
    if p.iter().all(|&x| x.is_finite() && x > 0.0) {
        Some(p.iter().copied().collect())
    } else {
        None
    }
}

fn scale_directions(u: &[CVec<f64>], p: &[f64]) -> Vec<CVec<f64>> {
    u.iter()
        .zip(p)
        .map(|(un, &pn)| {
            let s = (pn / norm_sqr(un)).sqrt();
            un.iter().map(|z| z * s).collect()
        })
        .collect()
}

/// Solves `min sum ||w_n||^2 s.t. SINR_n >= Gamma_n` as an SOCP. The power
/// cap is not imposed; the frame is feasible iff the returned power is at
/// most `P^max`. Powers along the optimal directions are re-solved so that
/// every SINR constraint holds with equality to machine precision.
pub fn min_power_beamforming(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
) -> Result<(BeamformingSolution<f64>, f64)> {
    cfg.validate()?;
    ch.check(cfg)?;
    if cfg.links.iter().any(|l| l.sinr_target <= 0.0) {
        return min_power_active_links(cfg, ch);
    }
    let n = cfg.n_links();
    let g = normalized_channels(cfg, ch);
    let targets: Vec<f64> = cfg.links.iter().map(|l| l.sinr_target).collect();

    let mut p = ConicProblem::new();
    let t = p.add_var();
    p.set_cost(t, 1.0);
    let bv = BeamVars::new(&mut p, n, cfg.n_antennas);
    p.second_order(Affine::var(t), bv.coordinates(1.0));
    for (i, gi) in g.iter().enumerate() {
        let (re, im) = bv.inner(gi, i);
        p.equal_zero(im);
        let mut tail = vec![Affine::constant(1.0)];
        for m in (0..n).filter(|&m| m != i) {
            let (r, s) = bv.inner(gi, m);
            tail.push(r);
            tail.push(s);
        }
        p.second_order(re.scaled(1.0 / targets[i].sqrt()), tail);
    }
    let sol = conic::solve(&p, &SolveOptions::default())?;
    match sol.status {
        ConicStatus::Optimal => {}
        ConicStatus::Infeasible => return Err(Error::Infeasible("SINR targets unreachable at any power".into())),
        s => return Err(Error::Solver(format!("min-power SOCP ended with {s:?}"))),
    }
    let mut w = bv.extract(&sol.x);
    if let Some(pw) = equalizing_powers(&g, &w, &targets) {
        w = scale_directions(&w, &pw);
    }
    phase_normalize(&ch.h, &mut w);
    let p_min = transmit_power(&w);
    let mut out = BeamformingSolution::new(w, SolveStatus::Solved);
    out.iterations = sol.iterations as usize;
    out.objective = p_min;
    Ok((out, p_min))
}

/// Links without a target get `w_n = 0`; they neither need power nor
/// interfere, so the rest is solved on its own.
fn min_power_active_links(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
) -> Result<(BeamformingSolution<f64>, f64)> {
    let active: Vec<usize> = (0..cfg.n_links()).filter(|&i| cfg.links[i].sinr_target > 0.0).collect();
    let mut w = vec![vec![Complex64::new(0.0, 0.0); cfg.n_antennas]; cfg.n_links()];
    let mut iterations = 0;
    if !active.is_empty() {
        let mut sub = cfg.clone();
        sub.links = active.iter().map(|&i| cfg.links[i].clone()).collect();
        let sub_ch = ChannelState { h: active.iter().map(|&i| ch.h[i].clone()).collect() };
        let (sol, _) = min_power_beamforming(&sub, &sub_ch)?;
        iterations = sol.iterations;
        for (&i, wi) in active.iter().zip(sol.w) {
            w[i] = wi;
        }
    }
    let p_min = transmit_power(&w);
    let mut out = BeamformingSolution::new(w, SolveStatus::Solved);
    out.iterations = iterations;
    out.objective = p_min;
    Ok((out, p_min))
}

/// Uplink-downlink duality: iterates
/// `lambda_n <- Gamma_n / ((1 + Gamma_n) g_n^H (I + sum_m lambda_m g_m g_m^H)^-1 g_n)`
/// on noise-normalized channels from `lambda = 0`. At the fixed point
/// `sum lambda_n` is the minimum power and the MMSE receivers are the optimal
/// downlink directions.
pub fn duality_fixed_point(
    cfg: &SystemConfig<f64>,
    ch: &ChannelState<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(BeamformingSolution<f64>, f64)> {
    cfg.validate()?;
    ch.check(cfg)?;
    let n = cfg.n_links();
    let nt = cfg.n_antennas;
    let g = normalized_channels(cfg, ch);
    let gv: Vec<DVector<Complex64>> = g.iter().map(|x| DVector::from_column_slice(x)).collect();
    let targets: Vec<f64> = cfg.links.iter().map(|l| l.sinr_target).collect();

    let covariance = |lambda: &[f64]| {
        let mut s = DMatrix::<Complex64>::identity(nt, nt);
        for (gm, &l) in gv.iter().zip(lambda) {
            s += gm * gm.adjoint() * Complex64::from(l);
        }
        s
    };

    let mut lambda = vec![0.0; n];
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(Error::NotConverged(max_iter));
        }
        iterations += 1;
        let chol = covariance(&lambda)
            .cholesky()
            .ok_or_else(|| Error::Solver("covariance not positive definite".into()))?;
        let next: Vec<f64> = gv
            .iter()
            .zip(&targets)
            .map(|(gn, &gam)| {
                let q = gn.dotc(&chol.solve(gn)).re;
                gam / ((1.0 + gam) * q)
            })
            .collect();
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Infeasible("duality iteration diverged".into()));
        }
        let change = next
            .iter()
            .zip(&lambda)
            .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        lambda = next;
        if change <= tol {
            break;
        }
    }

    let chol = covariance(&lambda).cholesky().expect("checked above");
    let u: Vec<CVec<f64>> = gv
        .iter()
        .map(|gn| {
            let v = chol.solve(gn);
            let s = v.norm();
            v.iter().map(|z| z / s).collect()
        })
        .collect();
    let p = equalizing_powers(&g, &u, &targets)
        .ok_or_else(|| Error::Infeasible("no nonnegative downlink power allocation".into()))?;
    let mut w = scale_directions(&u, &p);
    phase_normalize(&ch.h, &mut w);
    let p_min = transmit_power(&w);
    let mut out = BeamformingSolution::new(w, SolveStatus::Solved);
    out.iterations = iterations;
    out.objective = p_min;
    Ok((out, p_min))
}

/// ZF feasibility: the minimal point `p_n = Gamma_n sigma_n^2` fits under the cap.
pub fn zf_feasible(cfg: &SystemConfig<f64>, zf: &[CVec<f64>]) -> bool {
    let need: f64 = cfg
        .links
        .iter()
        .zip(zf)
        .map(|(l, w)| l.sinr_target * l.noise_power * norm_sqr(w))
        .sum();
    need.is_finite() && need <= cfg.max_tx_power
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sinrs;
    use crate::stochastic::{draw_channel, streams, RngStream};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_user_is_matched_filter() {
        let cfg = SystemConfig::<f64>::standard_with(1, 3);
        let ch = ChannelState { h: vec![vec![c(0.02, -0.01), c(0.0, 0.03), c(-0.015, 0.005)]] };
        let l = &cfg.links[0];
        let expect = l.sinr_target * l.noise_power / norm_sqr(&ch.h[0]);
        let (sol, p) = min_power_beamforming(&cfg, &ch).unwrap();
        assert_relative_eq!(p, expect, max_relative = 1e-6);
        let (_, p2) = duality_fixed_point(&cfg, &ch, 1e-8, 500).unwrap();
        assert_relative_eq!(p2, expect, max_relative = 1e-10);
        // aligned with h
        let cos = inner(&ch.h[0], &sol.w[0]).norm() / (norm_sqr(&ch.h[0]) * norm_sqr(&sol.w[0])).sqrt();
        assert_relative_eq!(cos, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn orthogonal_channels_decouple() {
        let mut cfg = SystemConfig::<f64>::standard_with(2, 3);
        cfg.links[1].sinr_target = 4.0;
        cfg.links[1].noise_power = 2e-3;
        let ch = ChannelState {
            h: vec![vec![c(0.05, 0.0), c(0.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.02), c(0.01, 0.0)]],
        };
        let expect: f64 = cfg
            .links
            .iter()
            .zip(&ch.h)
            .map(|(l, h)| l.sinr_target * l.noise_power / norm_sqr(h))
            .sum();
        let (_, p) = min_power_beamforming(&cfg, &ch).unwrap();
        assert_relative_eq!(p, expect, max_relative = 1e-6);
        let (_, p2) = duality_fixed_point(&cfg, &ch, 1e-10, 500).unwrap();
        assert_relative_eq!(p2, expect, max_relative = 1e-9);
    }

    #[test]
    fn random_instances_agree_and_meet_targets() {
        let cfg = SystemConfig::<f64>::standard_with(2, 2);
        let mut rng = RngStream::new(5, streams::CHANNEL);
        for _ in 0..10 {
            let ch = draw_channel(&cfg, &mut rng);
            let (a, pa) = min_power_beamforming(&cfg, &ch).unwrap();
            let (b, pb) = duality_fixed_point(&cfg, &ch, 1e-8, 500).unwrap();
            assert_relative_eq!(pa, pb, max_relative = 1e-5);
            for sol in [&a, &b] {
                for (s, l) in sinrs(&cfg, &ch, &sol.w).unwrap().iter().zip(&cfg.links) {
                    assert_relative_eq!(*s, l.sinr_target, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn unreachable_targets_are_infeasible() {
        // two users sharing one antenna cannot both exceed 0 dB
        let mut cfg = SystemConfig::<f64>::standard_with(2, 1);
        cfg.set_sinr_target_db(3.0);
        let ch = ChannelState { h: vec![vec![c(0.03, 0.0)], vec![c(0.0, 0.02)]] };
        assert!(matches!(min_power_beamforming(&cfg, &ch), Err(Error::Infeasible(_))));
        assert!(duality_fixed_point(&cfg, &ch, 1e-8, 500).is_err());
    }

    #[test]
    fn links_without_target_get_no_power() {
        let mut cfg = SystemConfig::<f64>::standard_with(2, 2);
        cfg.links[0].sinr_target = 0.0;
        let ch = ChannelState { h: vec![vec![c(0.03, 0.0), c(0.0, 0.01)], vec![c(0.0, 0.02), c(0.01, 0.0)]] };
        let (sol, p) = min_power_beamforming(&cfg, &ch).unwrap();
        assert_eq!(norm_sqr(&sol.w[0]), 0.0);
        let l = &cfg.links[1];
        assert_relative_eq!(p, l.sinr_target * l.noise_power / norm_sqr(&ch.h[1]), max_relative = 1e-6);
        cfg.links[1].sinr_target = 0.0;
        assert_eq!(min_power_beamforming(&cfg, &ch).unwrap().1, 0.0);
    }

    #[test]
    fn zf_feasibility_linear_check() {
        let cfg = SystemConfig::<f64>::standard_with(3, 3);
        let eye: Vec<CVec<f64>> =
            (0..3).map(|i| (0..3).map(|k| c(if i == k { 1.0 } else { 0.0 }, 0.0)).collect()).collect();
        let lhs: f64 = cfg.links.iter().map(|l| l.sinr_target * l.noise_power).sum();
        assert_relative_eq!(lhs, 4.754_679_577_383_339e-3, max_relative = 1e-12);
        assert!(zf_feasible(&cfg, &eye));
        let mut capped = cfg.clone();
        capped.max_tx_power = 0.0;
        assert!(!zf_feasible(&capped, &eye));
        let mut huge = cfg.clone();
        huge.set_sinr_target_db(400.0);
        assert!(!zf_feasible(&huge, &eye));
    }
}
