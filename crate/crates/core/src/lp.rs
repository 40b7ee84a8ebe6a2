//! Bounded-variable primal simplex returning primal and dual optimal solutions.
//!
//! Problems are stated as
//!
//! ```text
//! maximize    c'x
//! subject to  A x <= b
//!             l <= x <= u,   0 <= l, u may be +inf
//! ```
//!
//! The solver keeps an explicit dense basis inverse, refactorized periodically.
//! Entering variables are chosen by largest reduced cost with the smallest
//! index breaking ties; after a run of degenerate pivots it switches to
//! Bland's rule until progress resumes, which rules out cycling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VarId = usize;
pub type RowId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
}

/// Sparse `<=` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(VarId, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, objective: f64, lower: f64, upper: f64) -> VarId {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(VarId, f64)>, rhs: f64) -> RowId {
        self.rows.push(Row { coeffs, rhs });
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row_activity(&self, row: RowId, x: &[f64]) -> f64 {
        self.rows[row].coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::InvalidModel("bound vectors differ in length".into()));
        }
        for j in 0..n {
            let (c, l, u) = (self.objective[j], self.lower[j], self.upper[j]);
            if !c.is_finite() {
                return Err(LpError::InvalidModel(format!("objective of var {j} not finite")));
            }
            if !(l.is_finite() && l >= 0.0) {
                return Err(LpError::InvalidModel(format!("lower bound of var {j} must be finite and >= 0")));
            }
            if u.is_nan() || u < l {
                return Err(LpError::InvalidModel(format!("var {j} has upper {u} < lower {l}")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::InvalidModel(format!("rhs of row {i} not finite")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::InvalidModel(format!("row {i} references var {j}")));
                }
                if !a.is_finite() {
                    return Err(LpError::InvalidModel(format!("row {i} has non-finite coefficient")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One nonnegative multiplier per row.
    pub row_duals: Vec<f64>,
    /// Multipliers of binding finite upper bounds.
    pub bound_duals: Vec<f64>,
    /// Multipliers of binding lower bounds (reduced costs of variables at lower).
    pub lower_bound_duals: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    /// Final basis over structurals then slacks, when it has no artificials.
    #[serde(skip)]
    pub basis: Option<Basis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Status of every structural and slack variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis(pub Vec<BasisStatus>);

impl LpSolution {
    fn empty(status: LpStatus, lp: &LinearProgram, iterations: usize) -> Self {
        Self {
            status,
            primal: vec![0.0; lp.num_vars()],
            row_duals: vec![0.0; lp.num_rows()],
            bound_duals: vec![0.0; lp.num_vars()],
            lower_bound_duals: vec![0.0; lp.num_vars()],
            objective_value: if status == LpStatus::Unbounded {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            iterations,
            basis: None,
        }
    }

    /// `b'y + u'delta - l'lambda`.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let rows: f64 = lp.rows.iter().zip(&self.row_duals).map(|(r, y)| r.rhs * y).sum();
        let bounds: f64 = (0..lp.num_vars())
            .map(|j| {
                let up = if self.bound_duals[j] != 0.0 {
                    lp.upper[j] * self.bound_duals[j]
                } else {
                    0.0
                };
                up - lp.lower[j] * self.lower_bound_duals[j]
            })
            .sum();
        rows + bounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Absolute primal/dual feasibility tolerance.
    pub tol_feas: f64,
    /// Relative primal-dual objective gap tolerance.
    pub tol_gap: f64,
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-9,
            tol_gap: 1e-7,
            max_iterations: None,
            refactor_every: 256,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &LpOptions::default())
}

/// Solves `lp` starting from `start`, typically the optimal basis of a problem
/// that differs only in variable bounds. Bounds changes keep that basis dual
/// feasible, so a dual simplex pass restores primal feasibility. Falls back to
/// [`solve_lp`] whenever the warm start cannot be used.
pub fn solve_lp_from(lp: &LinearProgram, start: &Basis) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let opts = LpOptions::default();
    let warm = Simplex::from_basis(lp, &opts, start);
    if warm.is_none() {
        log::trace!("warm start basis unusable");
    }
    if let Some(mut s) = warm {
        match s.run_dual() {
            Ok(Some(sol)) => {
                log::trace!("warm start ok after {} iterations", sol.iterations);
                return Ok(sol);
            }
            Ok(None) => log::trace!("warm start declined"),
            Err(e) => log::trace!("warm start abandoned: {e}"),
        }
    }
    solve_lp_with(lp, &opts)
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut last_err = None;
    // Second attempt refactorizes more often and stays in Bland mode.
    for attempt in 0..2 {
        let mut s = Simplex::new(lp, opts, attempt > 0);
        match s.run() {
            Ok(sol) => return Ok(sol),
            Err(e @ LpError::NumericalFailure(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("attempt loop ran"))
}

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const DEGENERATE_RUN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    opts: &'a LpOptions,
    m: usize,
    n: usize,
    /// Structural columns in compressed form.
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    /// Row owning each artificial, indexed from `n + m`.
    art_rows: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    cost: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
    always_bland: bool,
    max_iterations: usize,
}

/// Column-major copy of the constraint matrix.
fn compress(lp: &LinearProgram) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let n = lp.num_vars();
    let mut counts = vec![0usize; n + 1];
    for row in &lp.rows {
        for &(j, _) in &row.coeffs {
            counts[j + 1] += 1;
        }
    }
    for j in 0..n {
        counts[j + 1] += counts[j];
    }
    let col_start = counts.clone();
    let mut fill = counts;
    let nnz = col_start[n];
    let mut col_rows = vec![0; nnz];
    let mut col_vals = vec![0.0; nnz];
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            col_rows[fill[j]] = i;
            col_vals[fill[j]] = a;
            fill[j] += 1;
        }
    }
    (col_start, col_rows, col_vals)
}

impl<'a> Simplex<'a> {
    /// Phase-two start from a given basis; `None` if it is not a usable basis.
    fn from_basis(lp: &'a LinearProgram, opts: &'a LpOptions, start: &Basis) -> Option<Self> {
        let m = lp.num_rows();
        let n = lp.num_vars();
        if start.0.len() != n + m {
            return None;
        }
        let (col_start, col_rows, col_vals) = compress(lp);
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut x = vec![0.0; n + m];
        let mut state = vec![VarState::AtLower; n + m];
        let mut basis = Vec::with_capacity(m);
        for (j, st) in start.0.iter().enumerate() {
            match st {
                BasisStatus::Basic => {
                    state[j] = VarState::Basic(basis.len());
                    basis.push(j);
                }
                BasisStatus::AtUpper if hi[j].is_finite() => {
                    state[j] = VarState::AtUpper;
                    x[j] = hi[j];
                }
                _ => x[j] = lo[j],
            }
        }
        if basis.len() != m {
            return None;
        }
        let mut cost = lp.objective.clone();
        cost.extend(std::iter::repeat_n(0.0, m));
        let max_iterations = opts.max_iterations.unwrap_or(50_000 + 50 * (m + n));
        let mut s = Self {
            lp,
            opts,
            m,
            n,
            col_start,
            col_rows,
            col_vals,
            art_rows: Vec::new(),
            lo,
            hi,
            x,
            state,
            basis,
            binv: Vec::new(),
            cost,
            iterations: 0,
            since_refactor: 0,
            degenerate_run: 0,
            bland: false,
            always_bland: false,
            max_iterations,
        };
        s.refactor().ok()?;
        Some(s)
    }

    fn basis_snapshot(&self) -> Option<Basis> {
        let nm = self.n + self.m;
        if self.basis.iter().any(|&v| v >= nm) {
            return None;
        }
        Some(Basis(
            self.state[..nm]
                .iter()
                .map(|st| match st {
                    VarState::Basic(_) => BasisStatus::Basic,
                    VarState::AtLower => BasisStatus::AtLower,
                    VarState::AtUpper => BasisStatus::AtUpper,
                })
                .collect(),
        ))
    }

    /// Dual simplex from a dual feasible basis, then a primal clean-up pass.
    /// `Ok(None)` means the warm start should be abandoned.
    fn run_dual(&mut self) -> Result<Option<LpSolution>, LpError> {
        let total = self.total_vars();
        let feas_tol = self.opts.tol_feas * self.rhs_scale();
        let dual_tol = 1e-7 * self.cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let y = self.duals();
        for j in 0..total {
            if matches!(self.state[j], VarState::Basic(_)) || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            let wrong = match self.state[j] {
                VarState::AtLower => d > dual_tol,
                VarState::AtUpper => d < -dual_tol,
                VarState::Basic(_) => false,
            };
            if wrong {
                return Ok(None);
            }
        }
        let limit = 1000 + 10 * (self.m + self.n);
        let m = self.m;
        for _ in 0..limit {
            let mut leave: Option<(usize, f64)> = None;
            for pos in 0..m {
                let var = self.basis[pos];
                let v = self.x[var];
                let infeas = (self.lo[var] - v).max(v - self.hi[var]);
                if infeas > feas_tol && leave.is_none_or(|(_, w)| infeas > w) {
                    leave = Some((pos, infeas));
                }
            }
            let Some((r, _)) = leave else {
                log::trace!("dual phase done after {} iterations", self.iterations);
                self.bland = false;
                self.degenerate_run = 0;
                if let Step::Unbounded = self.optimize()? {
                    return Ok(None);
                }
                return self.extract(feas_tol).map(Some);
            };
            let out = self.basis[r];
            let below = self.x[out] < self.lo[out];
            let mut slope = (self.lo[out] - self.x[out]).max(self.x[out] - self.hi[out]);
            let rho = self.binv[r * m..(r + 1) * m].to_vec();
            let y = self.duals();
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            let mut tiny = false;
            for j in 0..total {
                let st = self.state[j];
                if matches!(st, VarState::Basic(_)) || self.lo[j] == self.hi[j] {
                    continue;
                }
                let mut a = 0.0;
                self.for_each_in_col(j, |i, v| a += rho[i] * v);
                if a.abs() <= PIVOT_TOL {
                    tiny |= a != 0.0;
                    continue;
                }
                // x_out moves by -a per unit increase of x_j
                let up = st == VarState::AtLower;
                let raises = (a < 0.0) == up;
                if raises != below {
                    continue;
                }
                cands.push((j, self.reduced_cost(j, &y).abs() / a.abs(), a));
            }
            cands.sort_by(|p, q| p.1.total_cmp(&q.1).then(q.2.abs().total_cmp(&p.2.abs())).then(p.0.cmp(&q.0)));
            // bound flipping: pass over breakpoints whose full flip leaves x_out infeasible
            let mut flips = Vec::new();
            let mut entering = None;
            for &(j, _, a) in &cands {
                let range = self.hi[j] - self.lo[j];
                if range.is_finite() && slope - a.abs() * range > feas_tol {
                    slope -= a.abs() * range;
                    flips.push(j);
                } else {
                    entering = Some((j, a));
                    break;
                }
            }
            let Some((q, a)) = entering else {
                if tiny {
                    return Ok(None);
                }
                return Ok(Some(LpSolution::empty(LpStatus::Infeasible, self.lp, self.iterations)));
            };
            if !flips.is_empty() {
                let mut w = vec![0.0; m];
                for &j in &flips {
                    let delta = if self.state[j] == VarState::AtLower {
                        self.state[j] = VarState::AtUpper;
                        self.x[j] = self.hi[j];
                        self.hi[j] - self.lo[j]
                    } else {
                        self.state[j] = VarState::AtLower;
                        self.x[j] = self.lo[j];
                        self.lo[j] - self.hi[j]
                    };
                    self.for_each_in_col(j, |i, v| w[i] += v * delta);
                }
                for pos in 0..m {
                    let row = &self.binv[pos * m..(pos + 1) * m];
                    let dv: f64 = row.iter().zip(&w).map(|(b, wi)| b * wi).sum();
                    let var = self.basis[pos];
                    self.x[var] -= dv;
                }
            }
            let alpha = self.ftran(q);
            if (alpha[r] - a).abs() > 1e-7 * (1.0 + a.abs()) {
                return Ok(None);
            }
            let target = if below { self.lo[out] } else { self.hi[out] };
            let t = (self.x[out] - target) / alpha[r];
            for pos in 0..m {
                let var = self.basis[pos];
                self.x[var] -= alpha[pos] * t;
            }
            self.x[q] += t;
            self.x[out] = target;
            self.state[out] = if below { VarState::AtLower } else { VarState::AtUpper };
            self.basis[r] = q;
            self.state[q] = VarState::Basic(r);
            self.pivot(r, &alpha);
            self.iterations += 1;
            self.since_refactor += 1;
            if self.since_refactor >= self.refactor_period() {
                self.refactor()?;
            }
        }
        Ok(None)
    }

    fn new(lp: &'a LinearProgram, opts: &'a LpOptions, always_bland: bool) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let (col_start, col_rows, col_vals) = compress(lp);

        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        let mut x = lp.lower.clone();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m));

        // residual at the all-lower starting point decides slack vs artificial
        let mut residual: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        for j in 0..n {
            if lp.lower[j] != 0.0 {
                for k in col_start[j]..col_start[j + 1] {
                    residual[col_rows[k]] -= col_vals[k] * lp.lower[j];
                }
            }
        }
        let mut state = vec![VarState::AtLower; n];
        let mut basis = vec![0; m];
        let mut binv = vec![0.0; m * m];
        let mut art_rows = Vec::new();
        let mut slack_x = vec![0.0; m];
        let mut slack_state = vec![VarState::AtLower; m];
        let mut art_x = Vec::new();
        let mut art_state = Vec::new();
        for i in 0..m {
            if residual[i] >= 0.0 {
                basis[i] = n + i;
                slack_x[i] = residual[i];
                slack_state[i] = VarState::Basic(i);
                binv[i * m + i] = 1.0;
            } else {
                let k = art_rows.len();
                art_rows.push(i);
                basis[i] = n + m + k;
                art_x.push(-residual[i]);
                art_state.push(VarState::Basic(i));
                binv[i * m + i] = -1.0;
            }
        }
        x.extend(slack_x);
        x.extend(art_x);
        state.extend(slack_state);
        state.extend(art_state);
        let na = art_rows.len();
        lo.extend(std::iter::repeat_n(0.0, na));
        hi.extend(std::iter::repeat_n(f64::INFINITY, na));

        let max_iterations = opts
            .max_iterations
            .unwrap_or(50_000 + 50 * (m + n));
        Self {
            lp,
            opts,
            m,
            n,
            col_start,
            col_rows,
            col_vals,
            art_rows,
            lo,
            hi,
            x,
            state,
            basis,
            binv,
            cost: Vec::new(),
            iterations: 0,
            since_refactor: 0,
            degenerate_run: 0,
            bland: always_bland,
            always_bland,
            max_iterations,
        }
    }

    fn total_vars(&self) -> usize {
        self.n + self.m + self.art_rows.len()
    }

    fn for_each_in_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_rows[k], self.col_vals[k]);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            f(self.art_rows[j - self.n - self.m], -1.0);
        }
    }

    fn rhs_scale(&self) -> f64 {
        self.lp
            .rows
            .iter()
            .map(|r| r.rhs.abs())
            .fold(1.0, f64::max)
    }

    /// Rebuilds the basis inverse and basic values from scratch.
    ///
    /// Slack and artificial columns are unit vectors, so only the block of
    /// structural columns restricted to rows without a basic unit column needs
    /// a dense inverse.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let singular = || LpError::NumericalFailure("singular basis".into());
        // unit[i] = (position, sign) of the basic unit column on row i
        let mut unit: Vec<Option<(usize, f64)>> = vec![None; m];
        let mut structural = Vec::new();
        for (pos, &var) in self.basis.iter().enumerate() {
            if var < self.n {
                structural.push(pos);
            } else {
                let (row, sign) = if var < self.n + self.m {
                    (var - self.n, 1.0)
                } else {
                    (self.art_rows[var - self.n - self.m], -1.0)
                };
                if unit[row].is_some() {
                    return Err(singular());
                }
                unit[row] = Some((pos, sign));
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&i| unit[i].is_none()).collect();
        let k = structural.len();
        if free_rows.len() != k {
            return Err(singular());
        }
        let mut local = vec![usize::MAX; m];
        for (t, &i) in free_rows.iter().enumerate() {
            local[i] = t;
        }
        // a = structural columns on free rows, inverted in place into g
        let mut a = vec![0.0; k * k];
        for (c, &pos) in structural.iter().enumerate() {
            let j = self.basis[pos];
            for q in self.col_start[j]..self.col_start[j + 1] {
                let t = local[self.col_rows[q]];
                if t != usize::MAX {
                    a[t * k + c] = self.col_vals[q];
                }
            }
        }
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            g[i * k + i] = 1.0;
        }
        for c in 0..k {
            let mut piv = c;
            let mut best = a[c * k + c].abs();
            for r in c + 1..k {
                let v = a[r * k + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(singular());
            }
            if piv != c {
                for q in 0..k {
                    a.swap(c * k + q, piv * k + q);
                    g.swap(c * k + q, piv * k + q);
                }
            }
            let p = a[c * k + c];
            for q in 0..k {
                a[c * k + q] /= p;
                g[c * k + q] /= p;
            }
            for r in 0..k {
                if r == c {
                    continue;
                }
                let f = a[r * k + c];
                if f != 0.0 {
                    for q in 0..k {
                        a[r * k + q] -= f * a[c * k + q];
                        g[r * k + q] -= f * g[c * k + q];
                    }
                }
            }
        }
        // rows of g: structural basics in `structural` order; columns: free rows
        let mut inv = vec![0.0; m * m];
        for (c, &pos) in structural.iter().enumerate() {
            for (t, &i) in free_rows.iter().enumerate() {
                inv[pos * m + i] = g[c * k + t];
            }
        }
        // a unit row i reads x_unit = sign * (b_i - sum over structurals of A_ij x_j)
        for i in 0..m {
            let Some((pos, sign)) = unit[i] else { continue };
            inv[pos * m + i] = sign;
        }
        for (c, &spos) in structural.iter().enumerate() {
            let j = self.basis[spos];
            for q in self.col_start[j]..self.col_start[j + 1] {
                let i = self.col_rows[q];
                if let Some((pos, sign)) = unit[i] {
                    let aij = self.col_vals[q];
                    for (t, &fr) in free_rows.iter().enumerate() {
                        inv[pos * m + fr] -= sign * aij * g[c * k + t];
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basics();
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs: Vec<f64> = self.lp.rows.iter().map(|r| r.rhs).collect();
        for j in 0..self.total_vars() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                let mut col = Vec::new();
                self.for_each_in_col(j, |i, v| col.push((i, v)));
                for (i, v) in col {
                    rhs[i] -= v * xj;
                }
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..(pos + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[pos]] = v;
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for pos in 0..m {
            let cb = self.cost[self.basis[pos]];
            if cb != 0.0 {
                let row = &self.binv[pos * m..(pos + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += cb * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.cost[j];
        self.for_each_in_col(j, |i, v| d -= y[i] * v);
        d
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut col = Vec::new();
        self.for_each_in_col(j, |i, v| col.push((i, v)));
        (0..m)
            .map(|pos| {
                col.iter()
                    .map(|&(i, v)| self.binv[pos * m + i] * v)
                    .sum()
            })
            .collect()
    }

    fn choose_entering(&self, y: &[f64], tol: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.total_vars() {
            let st = self.state[j];
            if matches!(st, VarState::Basic(_)) || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let improving = match st {
                VarState::AtLower => d > tol,
                VarState::AtUpper => d < -tol,
                VarState::Basic(_) => false,
            };
            if !improving {
                continue;
            }
            if self.bland {
                return Some((j, d));
            }
            match best {
                Some((_, bd)) if bd.abs() >= d.abs() => {}
                _ => best = Some((j, d)),
            }
        }
        best
    }

    fn step(&mut self, tol: f64) -> Result<Step, LpError> {
        let y = self.duals();
        let Some((q, d)) = self.choose_entering(&y, tol) else {
            return Ok(Step::Optimal);
        };
        let dir = if d > 0.0 { 1.0 } else { -1.0 };
        let alpha = self.ftran(q);

        // ratio test; basic var at `pos` moves by -dir * alpha[pos] * theta
        let mut cands: Vec<(usize, f64, bool)> = Vec::new();
        for pos in 0..self.m {
            let a = alpha[pos];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let var = self.basis[pos];
            let rate = -dir * a;
            if rate < 0.0 {
                cands.push((pos, (self.x[var] - self.lo[var]).max(0.0) / -rate, false));
            } else if self.hi[var].is_finite() {
                cands.push((pos, (self.hi[var] - self.x[var]).max(0.0) / rate, true));
            }
        }
        let flip = self.hi[q] - self.lo[q];
        let min_limit = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        // Harris pass: widen the tie set by the feasibility tolerance and take the largest pivot
        let relaxed = if self.bland {
            min_limit
        } else {
            cands
                .iter()
                .map(|c| {
                    let a = alpha[c.0].abs();
                    c.1 + self.opts.tol_feas / a
                })
                .fold(f64::INFINITY, f64::min)
        };
        let (theta, leave) = if flip <= min_limit {
            (flip, None)
        } else {
            let cutoff = relaxed.max(min_limit + 1e-12 * (1.0 + min_limit));
            let chosen = cands
                .iter()
                .filter(|c| c.1 <= cutoff)
                .min_by(|a, b| {
                    let (va, vb) = (self.basis[a.0], self.basis[b.0]);
                    if self.bland {
                        va.cmp(&vb)
                    } else {
                        alpha[b.0]
                            .abs()
                            .total_cmp(&alpha[a.0].abs())
                            .then(va.cmp(&vb))
                    }
                })
                .map(|c| (c.0, c.2, c.1));
            (chosen.map_or(min_limit, |c| c.2), chosen.map(|c| (c.0, c.1)))
        };
        if !theta.is_finite() {
            return Ok(Step::Unbounded);
        }
        self.iterations += 1;
        if theta <= DEGENERATE_STEP {
            self.degenerate_run += 1;
            if self.degenerate_run >= DEGENERATE_RUN {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = self.always_bland;
        }

        for pos in 0..self.m {
            let var = self.basis[pos];
            self.x[var] -= dir * theta * alpha[pos];
        }
        match leave {
            None => {
                // bound flip
                self.state[q] = if dir > 0.0 {
                    self.x[q] = self.hi[q];
                    VarState::AtUpper
                } else {
                    self.x[q] = self.lo[q];
                    VarState::AtLower
                };
            }
            Some((r, to_upper)) => {
                let out = self.basis[r];
                self.x[q] += dir * theta;
                if to_upper {
                    self.x[out] = self.hi[out];
                    self.state[out] = VarState::AtUpper;
                } else {
                    self.x[out] = self.lo[out];
                    self.state[out] = VarState::AtLower;
                }
                self.basis[r] = q;
                self.state[q] = VarState::Basic(r);
                self.pivot(r, &alpha);
                self.since_refactor += 1;
                if self.since_refactor >= self.refactor_period() {
                    self.refactor()?;
                }
            }
        }
        Ok(Step::Moved)
    }

    fn refactor_period(&self) -> usize {
        if self.always_bland {
            8
        } else {
            self.opts.refactor_every.max(1)
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= ar;
        }
        for (pos, chunk) in head.chunks_mut(m).enumerate() {
            let f = alpha[pos];
            if f != 0.0 {
                for (a, b) in chunk.iter_mut().zip(prow.iter()) {
                    *a -= f * b;
                }
            }
        }
        for (k, chunk) in tail.chunks_mut(m).enumerate() {
            let f = alpha[r + 1 + k];
            if f != 0.0 {
                for (a, b) in chunk.iter_mut().zip(prow.iter()) {
                    *a -= f * b;
                }
            }
        }
    }

    /// Iterates until no improving column remains under freshly factorized values.
    fn optimize(&mut self) -> Result<Step, LpError> {
        let tol = self.opts.tol_feas;
        loop {
            loop {
                if self.iterations >= self.max_iterations {
                    return Err(LpError::IterationLimit(self.iterations));
                }
                match self.step(tol)? {
                    Step::Moved => {}
                    Step::Optimal => break,
                    Step::Unbounded => return Ok(Step::Unbounded),
                }
            }
            if self.since_refactor == 0 {
                return Ok(Step::Optimal);
            }
            self.refactor()?;
        }
    }

    fn run(&mut self) -> Result<LpSolution, LpError> {
        let (n, m) = (self.n, self.m);
        let total = self.total_vars();
        let feas_tol = self.opts.tol_feas * self.rhs_scale();
        if !self.art_rows.is_empty() {
            self.cost = vec![0.0; total];
            for j in n + m..total {
                self.cost[j] = -1.0;
            }
            match self.optimize()? {
                Step::Optimal => {}
                _ => return Err(LpError::NumericalFailure("phase one unbounded".into())),
            }
            let infeas: f64 = (n + m..total).map(|j| self.x[j]).sum();
            if infeas > feas_tol {
                return Ok(LpSolution::empty(LpStatus::Infeasible, self.lp, self.iterations));
            }
            for j in n + m..total {
                self.hi[j] = 0.0;
                if !matches!(self.state[j], VarState::Basic(_)) {
                    self.x[j] = 0.0;
                    self.state[j] = VarState::AtLower;
                }
            }
        }
        self.cost = vec![0.0; total];
        self.cost[..n].copy_from_slice(&self.lp.objective);
        self.bland = self.always_bland;
        self.degenerate_run = 0;
        if let Step::Unbounded = self.optimize()? {
            return Ok(LpSolution::empty(LpStatus::Unbounded, self.lp, self.iterations));
        }
        // optimize() only reports optimality right after a refactorization
        self.extract(feas_tol)
    }

    fn extract(&self, feas_tol: f64) -> Result<LpSolution, LpError> {
        let (n, m) = (self.n, self.m);
        for j in 0..self.total_vars() {
            let v = self.x[j];
            if v < self.lo[j] - feas_tol || v > self.hi[j] + feas_tol {
                return Err(LpError::NumericalFailure(format!(
                    "variable {j} = {v} outside [{}, {}]",
                    self.lo[j], self.hi[j]
                )));
            }
        }
        let y = self.duals();
        let dual_tol = self.opts.tol_feas * self.cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let mut row_duals = vec![0.0; m];
        for i in 0..m {
            if y[i] < -dual_tol {
                return Err(LpError::NumericalFailure(format!("row dual {i} = {}", y[i])));
            }
            row_duals[i] = y[i].max(0.0);
        }
        let mut primal = vec![0.0; n];
        let mut bound_duals = vec![0.0; n];
        let mut lower_bound_duals = vec![0.0; n];
        for j in 0..n {
            primal[j] = self.x[j].clamp(self.lo[j], self.hi[j]);
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            if d > 0.0 {
                if self.hi[j].is_finite() && self.state[j] == VarState::AtUpper
                    || self.lo[j] == self.hi[j]
                {
                    bound_duals[j] = d;
                } else if d > dual_tol {
                    return Err(LpError::NumericalFailure(format!("reduced cost of var {j} = {d}")));
                }
            } else if d < 0.0 {
                if self.state[j] == VarState::AtLower || self.lo[j] == self.hi[j] {
                    lower_bound_duals[j] = -d;
                } else if d < -dual_tol {
                    return Err(LpError::NumericalFailure(format!("reduced cost of var {j} = {d}")));
                }
            }
        }
        let mut sol = LpSolution {
            status: LpStatus::Optimal,
            objective_value: self.lp.objective_value(&primal),
            primal,
            row_duals,
            bound_duals,
            lower_bound_duals,
            iterations: self.iterations,
            basis: self.basis_snapshot(),
        };
        // snap tiny primal residue so reported duals and slacks agree
        for (i, row) in self.lp.rows.iter().enumerate() {
            let act = self.lp.row_activity(i, &sol.primal);
            if act > row.rhs + feas_tol * 10.0 {
                return Err(LpError::NumericalFailure(format!("row {i} violated by {}", act - row.rhs)));
            }
        }
        let dual_obj = sol.dual_objective(self.lp);
        let gap = (sol.objective_value - dual_obj).abs();
        if gap > self.opts.tol_gap * (1.0 + sol.objective_value.abs()) {
            return Err(LpError::NumericalFailure(format!(
                "duality gap {gap} (primal {}, dual {dual_obj})",
                sol.objective_value
            )));
        }
        sol.objective_value = self.lp.objective_value(&sol.primal);
        Ok(sol)
    }
}
