//! Real embedding of complex beamformers for the conic formulations, plus a
//! few complex helpers shared by the solvers.

use num_complex::Complex64;

use crate::conic::{Affine, ConicProblem};
use crate::model::{inner, CVec};

/// Decision variables `w_m in C^{N_T}`, stored as interleaved (re, im) reals.
#[derive(Clone, Copy, Debug)]
pub struct BeamVars {
    base: usize,
    n_links: usize,
    n_ant: usize,
}

impl BeamVars {
    pub fn new(p: &mut ConicProblem, n_links: usize, n_ant: usize) -> Self {
        let vars = p.add_vars(2 * n_links * n_ant);
        Self { base: vars.first().copied().unwrap_or(p.n_vars()), n_links, n_ant }
    }

    pub fn re(&self, m: usize, k: usize) -> usize {
        self.base + 2 * (m * self.n_ant + k)
    }

    pub fn im(&self, m: usize, k: usize) -> usize {
        self.re(m, k) + 1
    }

    /// `(Re, Im)` of `g^H w_m`: with `g = a + ib`, `w = x + iy` this is
    /// `(a.x + b.y, a.y - b.x)`.
    pub fn inner(&self, g: &[Complex64], m: usize) -> (Affine, Affine) {
        let (mut re, mut im) = (Affine::default(), Affine::default());
        for (k, gk) in g.iter().enumerate() {
            re = re.term(self.re(m, k), gk.re).term(self.im(m, k), gk.im);
            im = im.term(self.im(m, k), gk.re).term(self.re(m, k), -gk.im);
        }
        (re, im)
    }

    /// Every real coordinate, scaled by `k`.
    pub fn coordinates(&self, k: f64) -> Vec<Affine> {
        (0..2 * self.n_links * self.n_ant)
            .map(|i| Affine::default().term(self.base + i, k))
            .collect()
    }

    pub fn extract(&self, x: &[f64]) -> Vec<CVec<f64>> {
        (0..self.n_links)
            .map(|m| {
                (0..self.n_ant)
                    .map(|k| Complex64::new(x[self.re(m, k)], x[self.im(m, k)]))
                    .collect()
            })
            .collect()
    }

    /// Writes `w` into a full decision vector.
    pub fn store(&self, w: &[CVec<f64>], x: &mut [f64]) {
        for (m, wm) in w.iter().enumerate() {
            for (k, z) in wm.iter().enumerate() {
                x[self.re(m, k)] = z.re;
                x[self.im(m, k)] = z.im;
            }
        }
    }
}

/// Channels scaled to unit noise, `g_n = h_n / sigma_n`. SINR is unchanged.
pub fn whitened(h: &[CVec<f64>], noise: impl Iterator<Item = f64>) -> Vec<CVec<f64>> {
    h.iter()
        .zip(noise)
        .map(|(hn, s2)| {
            let s = s2.sqrt();
            hn.iter().map(|z| z / s).collect()
        })
        .collect()
}

/// Rotates each `w_n` so that `h_n^H w_n` is real and nonnegative.
pub fn phase_normalize(h: &[CVec<f64>], w: &mut [CVec<f64>]) {
    for (hn, wn) in h.iter().zip(w.iter_mut()) {
        let z = inner(hn, wn);
        let r = z.norm();
        if r > 0.0 {
            let rot = z.conj() / r;
            wn.iter_mut().for_each(|x| *x *= rot);
        }
    }
}
