//! Generic linear-program interface used by dispatch and nucleolus code.
//!
//! Problems are `minimize c'z` subject to ranged rows `lo <= a'z <= hi` and
//! per-variable bounds. Solving is delegated to the Clarabel interior-point
//! solver; infeasible and unbounded outcomes are reported as statuses, not
//! errors. Solves are reentrant and deterministic for identical input.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use thiserror::Error;

pub const INF: f64 = f64::INFINITY;

/// One constraint row: sparse coefficients plus a `[lo, hi]` range.
/// `lo == hi` is an equality; an infinite side leaves that side unconstrained.
#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl LpRow {
    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        LpRow {
            coeffs,
            lo: rhs,
            hi: rhs,
        }
    }

    pub fn le(coeffs: Vec<(usize, f64)>, hi: f64) -> Self {
        LpRow {
            coeffs,
            lo: -INF,
            hi,
        }
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, lo: f64) -> Self {
        LpRow {
            coeffs,
            lo,
            hi: INF,
        }
    }

    pub fn range(coeffs: Vec<(usize, f64)>, lo: f64, hi: f64) -> Self {
        LpRow { coeffs, lo, hi }
    }
}

/// `minimize objective' z` subject to rows and variable bounds.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    /// Problem with `n` variables, zero objective and free variables.
    pub fn new(n: usize) -> Self {
        LpProblem {
            n_vars: n,
            objective: vec![0.0; n],
            var_lower: vec![-INF; n],
            var_upper: vec![INF; n],
            rows: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Row activity `a'z` at the given point.
    pub fn row_activity(&self, row: usize, z: &[f64]) -> f64 {
        self.rows[row]
            .coeffs
            .iter()
            .map(|&(j, a)| a * z[j])
            .sum()
    }

    fn check_finite(&self) -> Result<(), LpError> {
        let all_coeffs_finite = self
            .rows
            .iter()
            .flat_map(|r| r.coeffs.iter())
            .all(|&(j, a)| j < self.n_vars && a.is_finite());
        let bounds_ok = self
            .rows
            .iter()
            .all(|r| !r.lo.is_nan() && !r.hi.is_nan() && r.lo <= r.hi);
        if self.objective.len() != self.n_vars
            || self.var_lower.len() != self.n_vars
            || self.var_upper.len() != self.n_vars
            || !self.objective.iter().all(|c| c.is_finite())
            || !all_coeffs_finite
            || !bounds_ok
        {
            return Err(LpError::Malformed);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. For `Optimal` status the primal point is feasible within
/// the solver tolerance and `objective` is the exact inner product `c'z`
/// recomputed at that point.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Signed multiplier per problem row, satisfying stationarity
    /// `c + sum_r dual_r * a_r + (bound terms) = 0`. Positive duals sit on
    /// binding upper sides (`a'z = hi`), negative on binding lower sides.
    pub row_duals: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed problem: non-finite data or inconsistent dimensions")]
    Malformed,
    #[error("solver failed with status {0:?}")]
    Numerical(SolverStatus),
}

/// Knobs forwarded to the interior-point backend.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            max_iter: 200,
        }
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_with(problem, SolveOptions::default())
}

pub fn solve_lp_with(problem: &LpProblem, opts: SolveOptions) -> Result<LpSolution, LpError> {
    problem.check_finite()?;
    let n = problem.n_vars;

    // Assemble Clarabel's `A z + s = b, s in K` form: equality rows first
    // (zero cone), then every finite one-sided row as `a'z <= b` (nonnegative
    // cone). Ranged rows and two-sided variable bounds become two rows.
    // `cone_rows[r]` remembers where problem row `r` landed: (upper-side
    // index, lower-side index).
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut cone_rows: Vec<(Option<usize>, Option<usize>)> = vec![(None, None); problem.rows.len()];
    let mut next = 0usize;

    for (r, row) in problem.rows.iter().enumerate() {
        if row.lo == row.hi {
            for &(j, a) in &row.coeffs {
                triplets.push((next, j, a));
            }
            b.push(row.lo);
            cone_rows[r] = (Some(next), None);
            next += 1;
        }
    }
    let n_eq = next;

    for (r, row) in problem.rows.iter().enumerate() {
        if row.lo == row.hi {
            continue;
        }
        if row.hi.is_finite() {
            for &(j, a) in &row.coeffs {
                triplets.push((next, j, a));
            }
            b.push(row.hi);
            cone_rows[r].0 = Some(next);
            next += 1;
        }
        if row.lo.is_finite() {
            for &(j, a) in &row.coeffs {
                triplets.push((next, j, -a));
            }
            b.push(-row.lo);
            cone_rows[r].1 = Some(next);
            next += 1;
        }
    }
    for j in 0..n {
        if problem.var_upper[j].is_finite() {
            triplets.push((next, j, 1.0));
            b.push(problem.var_upper[j]);
            next += 1;
        }
        if problem.var_lower[j].is_finite() {
            triplets.push((next, j, -1.0));
            b.push(-problem.var_lower[j]);
            next += 1;
        }
    }

    let a_mat = csc_from_triplets(next, n, &triplets);
    let p_mat = CscMatrix::<f64>::zeros((n, n));
    let cones = [
        SupportedConeT::ZeroConeT(n_eq),
        SupportedConeT::NonnegativeConeT(next - n_eq),
    ];

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.max_iter)
        .tol_feas(opts.feas_tol)
        .tol_gap_abs(opts.gap_tol)
        .tol_gap_rel(opts.gap_tol)
        .build()
        .expect("static settings");

    let mut solver = DefaultSolver::new(&p_mat, &problem.objective, &a_mat, &b, &cones, settings);
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => LpStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            LpStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => LpStatus::Unbounded,
        other => return Err(LpError::Numerical(other)),
    };

    if status != LpStatus::Optimal {
        return Ok(LpSolution {
            status,
            primal: vec![0.0; n],
            objective: 0.0,
            row_duals: vec![0.0; problem.rows.len()],
        });
    }

    let primal = sol.x.clone();
    let objective = problem
        .objective
        .iter()
        .zip(primal.iter())
        .map(|(c, x)| c * x)
        .sum();
    // Net signed dual per problem row: upper-side multiplier minus
    // lower-side multiplier (both nonnegative in cone form).
    let row_duals = cone_rows
        .iter()
        .map(|&(up, lo)| {
            let zu = up.map_or(0.0, |i| sol.z[i]);
            let zl = lo.map_or(0.0, |i| sol.z[i]);
            zu - zl
        })
        .collect();

    Ok(LpSolution {
        status,
        primal,
        objective,
        row_duals,
    })
}

fn csc_from_triplets(m: usize, n: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.sort_by_key(|&idx| {
        let (r, c, _) = triplets[idx];
        (c, r)
    });

    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    for &idx in &order {
        let (r, c, v) = triplets[idx];
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}
