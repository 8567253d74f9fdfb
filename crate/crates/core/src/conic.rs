//! Linear objective over affine constraints in a product of cones: zero,
//! nonnegative orthant, second-order cones and 3-d power cones.
//!
//! A problem is assembled row block by row block from affine expressions
//! `e(x) = a^T x + c`; each block states `(e_1(x), ..., e_k(x)) in K`.
//! Solving is delegated to the Clarabel interior-point solver.
//!
//! Reusable epigraph patterns (all used by the beamforming solvers):
//! - `beta^2 <= L` with `L` affine: `(L/s + s, L/s - s, 2 beta)` in SOC for any scale `s > 0`;
//! - `r >= ||w||^2`: `(r/s + s, r/s - s, 2w)` in SOC;
//! - grid cost epigraph `g`: two linear cuts `g >= a_b (P - E)` and `g >= a_s (P - E)`;
//! - `t >= x^-k`: `(t, x, 1)` in the power cone with exponent `1/(1+k)`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cone {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
    /// `{(x, y, z) : x^theta y^(1-theta) >= |z|, x, y >= 0}`
    Power(f64),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::Nonnegative(n) | Cone::SecondOrder(n) => n,
            Cone::Power(_) => 3,
        }
    }
}

/// An affine function `sum_i a_i x_i + c` of the decision vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize) -> Self {
        Self { terms: vec![(i, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, i: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((i, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.1 *= k);
        self.constant *= k;
        self
    }

    /// `self + k * other`
    pub fn add(mut self, other: &Affine, k: f64) -> Self {
        self.terms.extend(other.terms.iter().map(|&(i, a)| (i, a * k)));
        self.constant += k * other.constant;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(i, a)| acc + a * x[i])
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConicProblem {
    n_vars: usize,
    cost: Vec<f64>,
    rows: Vec<Affine>,
    cones: Vec<Cone>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.cost.push(0.0);
        self.n_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.add_var()).collect()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn set_cost(&mut self, var: usize, c: f64) {
        self.cost[var] = c;
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    fn push(&mut self, cone: Cone, rows: Vec<Affine>) {
        debug_assert_eq!(cone.dim(), rows.len());
        self.rows.extend(rows);
        self.cones.push(cone);
    }

    /// `e(x) = 0`
    pub fn equal_zero(&mut self, e: Affine) {
        self.push(Cone::Zero(1), vec![e]);
    }

    /// `e(x) >= 0`
    pub fn nonnegative(&mut self, e: Affine) {
        self.push(Cone::Nonnegative(1), vec![e]);
    }

    /// `||(e_1, ..., e_k)|| <= head`
    pub fn second_order(&mut self, head: Affine, tail: Vec<Affine>) {
        let mut rows = Vec::with_capacity(tail.len() + 1);
        rows.push(head);
        rows.extend(tail);
        self.push(Cone::SecondOrder(rows.len()), rows);
    }

    /// `x^theta y^(1-theta) >= |z|`
    pub fn power(&mut self, x: Affine, y: Affine, z: Affine, theta: f64) {
        self.push(Cone::Power(theta), vec![x, y, z]);
    }

    pub fn validate(&self) -> Result<()> {
        let dims: usize = self.cones.iter().map(Cone::dim).sum();
        if dims != self.rows.len() {
            return Err(Error::Dimension(format!("cones span {dims} rows, problem has {}", self.rows.len())));
        }
        for r in &self.rows {
            if let Some(&(i, _)) = r.terms.iter().find(|&&(i, _)| i >= self.n_vars) {
                return Err(Error::Dimension(format!("variable index {i} out of range")));
            }
            if !r.constant.is_finite() || r.terms.iter().any(|t| !t.1.is_finite()) {
                return Err(Error::Dimension("non-finite constraint data".into()));
            }
        }
        for c in &self.cones {
            match *c {
                Cone::Power(theta) if !(theta > 0.0 && theta < 1.0) => {
                    return Err(Error::Dimension(format!("power-cone exponent {theta} outside (0, 1)")))
                }
                Cone::SecondOrder(0) => return Err(Error::Dimension("empty second-order cone".into())),
                _ => {}
            }
        }
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::Dimension("non-finite objective".into()));
        }
        Ok(())
    }

    /// Values of all constraint rows at `x`, in cone order.
    pub fn row_values(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.eval(x)).collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Relative duality gap.
    pub gap_tol: f64,
    /// Gap the solver iterates toward, absolute and relative. Clarabel
    /// measures relative gaps against `max(1, |cost|)`, so small objectives
    /// need a target well below `gap_tol`. A solve that stalls before the
    /// target still counts as optimal when `gap_tol` and `feas_tol` hold.
    pub target_gap: f64,
    pub feas_tol: f64,
    pub max_iter: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-7, target_gap: 1e-10, feas_tol: 1e-7, max_iter: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// No convergence: iteration limit or numerical stall.
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    /// Dual variables, one per constraint row.
    pub dual: Vec<f64>,
    /// Cone slacks `s = e(x)`, one per row.
    pub slack: Vec<f64>,
    pub status: ConicStatus,
    pub objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
}

fn to_clarabel(c: &Cone) -> SupportedConeT<f64> {
    match *c {
        Cone::Zero(n) => SupportedConeT::ZeroConeT(n),
        Cone::Nonnegative(n) => SupportedConeT::NonnegativeConeT(n),
        Cone::SecondOrder(n) => SupportedConeT::SecondOrderConeT(n),
        Cone::Power(theta) => SupportedConeT::PowerConeT(theta),
    }
}

pub fn solve(p: &ConicProblem, opts: &SolveOptions) -> Result<ConicSolution> {
    p.validate()?;
    let first = solve_once(p, opts, opts.target_gap)?;
    if first.status != ConicStatus::MaxIter || opts.target_gap >= opts.gap_tol {
        return Ok(first);
    }
    // chasing the tight gap can stall with a degraded residual; retry at the
    // acceptance gap
    let second = solve_once(p, opts, opts.gap_tol)?;
    Ok(if second.status == ConicStatus::MaxIter { first } else { second })
}

fn solve_once(p: &ConicProblem, opts: &SolveOptions, target_gap: f64) -> Result<ConicSolution> {
    let n = p.n_vars;
    let m = p.rows.len();
    // Ax + s = b with s = e(x): A = -a, b = c
    let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for (row, e) in p.rows.iter().enumerate() {
        for &(col, a) in &e.terms {
            ri.push(row);
            ci.push(col);
            vals.push(-a);
        }
    }
    let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
    let b: Vec<f64> = p.rows.iter().map(|e| e.constant).collect();
    let pmat = CscMatrix::zeros((n, n));
    let cones: Vec<_> = p.cones.iter().map(to_clarabel).collect();
    let settings = DefaultSettings {
        verbose: false,
        max_iter: opts.max_iter,
        tol_gap_abs: target_gap,
        tol_gap_rel: target_gap,
        tol_feas: opts.feas_tol,
        tol_infeas_abs: opts.feas_tol,
        tol_infeas_rel: opts.feas_tol,
        presolve_enable: false,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&pmat, &p.cost, &a, &b, &cones, settings)
        .map_err(|e| Error::Solver(e.to_string()))?;
    solver.solve();
    let info = &solver.info;
    let sol = &solver.solution;
    let within_tol = info.gap_rel <= opts.gap_tol && info.res_primal <= opts.feas_tol && info.res_dual <= opts.feas_tol;
    let status = match sol.status {
        SolverStatus::Solved => ConicStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConicStatus::Unbounded,
        _ if within_tol && sol.x.iter().all(|v| v.is_finite()) => ConicStatus::Optimal,
        _ => ConicStatus::MaxIter,
    };
    Ok(ConicSolution {
        x: sol.x.clone(),
        dual: sol.z.clone(),
        slack: sol.s.clone(),
        status,
        objective: sol.obj_val,
        gap: info.gap_rel.min(info.gap_abs),
        primal_residual: info.res_primal,
        dual_residual: info.res_dual,
        iterations: sol.iterations,
    })
}
