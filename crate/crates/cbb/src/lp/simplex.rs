//! Dense two-phase primal simplex.
//!
//! All variables are nonnegative; rows may be `<=`, `=`, or `>=`. The
//! tableau is dense row-major storage. Entering-variable selection is
//! Dantzig's rule until the objective stalls, after which Bland's rule
//! takes over so cycling cannot occur.

use thiserror::Error;

pub const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

/// Maximize `objective . x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values; zeros unless status is `Optimal`.
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    RowWidth {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite coefficient in constraint {row}")]
    NonFinite { row: usize },
}

struct Tableau {
    ncols: usize, // total columns excluding rhs
    nrows: usize,
    /// Row-major; each row has ncols + 1 entries, rhs last.
    rows: Vec<f64>,
    /// z-row: entries are reduced costs (z_j - c_j); rhs is the objective value.
    zrow: Vec<f64>,
    basis: Vec<usize>,
    app_art_start: usize,
}

impl Tableau {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let w = self.ncols + 1;
        &self.rows[i * w..(i + 1) * w]
    }

    #[inline]
    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.ncols + 1;
        let piv = self.rows[row * w + col];
        let inv = 1.0 / piv;
        for v in &mut self.rows[row * w..(row + 1) * w] {
            *v *= inv;
        }
        // Use a scratch copy of the pivot row to avoid aliasing in the loop.
        let prow: Vec<f64> = self.rows[row * w..(row + 1) * w].to_vec();
        for i in 0..self.nrows {
            if i == row {
                continue;
            }
            let factor = self.rows[i * w + col];
            if factor.abs() <= PIVOT_TOL * 1e-3 {
                continue;
            }
            let dst = &mut self.rows[i * w..(i + 1) * w];
            for (d, &p) in dst.iter_mut().zip(&prow) {
                *d -= factor * p;
            }
            dst[col] = 0.0;
        }
        let factor = self.zrow[col];
        if factor.abs() > 0.0 {
            for (d, &p) in self.zrow.iter_mut().zip(&prow) {
                *d -= factor * p;
            }
            self.zrow[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Run the simplex loop until optimal or unbounded. `allowed` masks the
    /// columns eligible to enter.
    fn optimize(&mut self, allowed: &[bool]) -> LpStatus {
        let w = self.ncols + 1;
        let mut bland = false;
        let mut stall = 0usize;
        let stall_limit = 4 * (self.nrows + self.ncols) + 64;
        let mut last_obj = self.zrow[self.ncols];
        loop {
            // Entering column.
            let mut enter = None;
            if bland {
                for j in 0..self.ncols {
                    if allowed[j] && self.zrow[j] < -PIVOT_TOL {
                        enter = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -PIVOT_TOL;
                for j in 0..self.ncols {
                    if allowed[j] && self.zrow[j] < best {
                        best = self.zrow[j];
                        enter = Some(j);
                    }
                }
            }
            let Some(col) = enter else {
                return LpStatus::Optimal;
            };

            // Ratio test; ties broken by smallest basis variable (Bland-safe).
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.nrows {
                let a = self.rows[i * w + col];
                if a > PIVOT_TOL {
                    let ratio = self.rows[i * w + self.ncols] / a;
                    let better = ratio < best_ratio - PIVOT_TOL
                        || (ratio < best_ratio + PIVOT_TOL
                            && leave.is_some_and(|l| self.basis[i] < self.basis[l]));
                    if better || leave.is_none() {
                        best_ratio = ratio.min(best_ratio);
                        leave = Some(i);
                    }
                }
            }
            let Some(row) = leave else {
                return LpStatus::Unbounded;
            };
            self.pivot(row, col);

            let obj = self.zrow[self.ncols];
            if obj > last_obj + PIVOT_TOL {
                stall = 0;
                last_obj = obj;
            } else {
                stall += 1;
                if stall > stall_limit {
                    bland = true;
                }
            }
        }
    }
}

/// Solve a linear program with the two-phase primal simplex.
///
/// `Optimal` solutions are primal feasible within `1e-8`. Infeasible and
/// unbounded programs are reported via the status field.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    for (row, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::RowWidth {
                row,
                got: c.coeffs.len(),
                expected: n,
            });
        }
        if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
            return Err(LpError::NonFinite { row });
        }
    }

    let m = lp.constraints.len();
    // Count auxiliary columns on the sign-normalized rows.
    let mut n_slack = 0usize;
    let mut n_art = 0usize;
    let mut norm: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
    for c in &lp.constraints {
        let (coeffs, rel, rhs) = if c.rhs < 0.0 {
            let flipped: Vec<f64> = c.coeffs.iter().map(|v| -v).collect();
            let rel = match c.rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            (flipped, rel, -c.rhs)
        } else {
            (c.coeffs.clone(), c.rel, c.rhs)
        };
        match rel {
            Relation::Le => n_slack += 1,
            Relation::Ge => {
                n_slack += 1;
                n_art += 1;
            }
            Relation::Eq => n_art += 1,
        }
        norm.push((coeffs, rel, rhs));
    }

    let ncols = n + n_slack + n_art;
    let w = ncols + 1;
    let mut rows = vec![0.0; m * w];
    let mut basis = vec![0usize; m];
    let art_start = n + n_slack;
    let mut slack_idx = n;
    let mut art_idx = art_start;
    let mut art_rows: Vec<usize> = Vec::new();
    for (i, (coeffs, rel, rhs)) in norm.iter().enumerate() {
        rows[i * w..i * w + n].copy_from_slice(coeffs);
        rows[i * w + ncols] = *rhs;
        match rel {
            Relation::Le => {
                rows[i * w + slack_idx] = 1.0;
                basis[i] = slack_idx;
                slack_idx += 1;
            }
            Relation::Ge => {
                rows[i * w + slack_idx] = -1.0;
                slack_idx += 1;
                rows[i * w + art_idx] = 1.0;
                basis[i] = art_idx;
                art_idx += 1;
                art_rows.push(i);
            }
            Relation::Eq => {
                rows[i * w + art_idx] = 1.0;
                basis[i] = art_idx;
                art_idx += 1;
                art_rows.push(i);
            }
        }
    }

    let mut tab = Tableau {
        ncols,
        nrows: m,
        rows,
        zrow: vec![0.0; w],
        basis,
        app_art_start: art_start,
    };

    // Phase 1: maximize -(sum of artificials). With artificial basics the
    // z-row is the negated sum of their rows (plus +1 on artificial columns,
    // which cancels to 0).
    if n_art > 0 {
        for &i in &art_rows {
            let src: Vec<f64> = tab.row(i).to_vec();
            for (z, &v) in tab.zrow.iter_mut().zip(&src) {
                *z -= v;
            }
        }
        for j in art_start..ncols {
            tab.zrow[j] = 0.0;
        }
        let allowed = vec![true; ncols];
        tab.optimize(&allowed);
        if tab.zrow[ncols] < -FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective: 0.0,
            });
        }
        // Drive remaining artificials out of the basis.
        for i in 0..tab.nrows {
            if tab.basis[i] >= art_start {
                let row: Vec<f64> = tab.row(i).to_vec();
                if let Some(col) = (0..art_start).find(|&j| row[j].abs() > PIVOT_TOL) {
                    tab.pivot(i, col);
                } else {
                    // Redundant row: zero it so it never participates again.
                    let wi = tab.ncols + 1;
                    for v in &mut tab.rows[i * wi..(i + 1) * wi] {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    // Phase 2: rebuild the z-row for the real objective over the current basis.
    let mut zrow = vec![0.0; w];
    for j in 0..n {
        zrow[j] = -lp.objective[j];
    }
    for i in 0..m {
        let b = tab.basis[i];
        if b < n {
            let cb = lp.objective[b];
            if cb != 0.0 {
                let src: Vec<f64> = tab.row(i).to_vec();
                for (z, &v) in zrow.iter_mut().zip(&src) {
                    *z += cb * v;
                }
            }
        }
    }
    for i in 0..m {
        zrow[tab.basis[i]] = 0.0;
    }
    tab.zrow = zrow;

    let mut allowed = vec![true; ncols];
    for a in &mut allowed[tab.app_art_start..] {
        *a = false;
    }
    let status = tab.optimize(&allowed);
    if status == LpStatus::Unbounded {
        return Ok(LpSolution {
            status,
            x: vec![0.0; n],
            objective: f64::INFINITY,
        });
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        let b = tab.basis[i];
        if b < n {
            x[b] = tab.row(i)[ncols].max(0.0);
        }
    }
    let objective: f64 = x.iter().zip(&lp.objective).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_optimum_face() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], Relation::Le, 1.0);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 0.3);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_reported() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        lp.add_row(vec![1.0], Relation::Ge, 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_reported() {
        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_row(vec![0.0, 1.0], Relation::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows() {
        let mut lp = LinearProgram::new(vec![2.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 0.4);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.4).abs() < 1e-8, "{}", sol.objective);
        assert!((sol.x[0] - 0.4).abs() < 1e-8);
        assert!((sol.x[1] - 0.6).abs() < 1e-8);
    }

    #[test]
    fn row_width_rejected() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        assert!(solve_lp(&lp).is_err());
    }

    // Independent oracle: enumerate all vertices (intersections of n active
    // constraints drawn from rows plus nonnegativity bounds), keep the
    // feasible ones, and take the best objective value.
    fn brute_force(lp: &LinearProgram) -> Option<f64> {
        let n = lp.num_vars();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for c in &lp.constraints {
            rows.push((c.coeffs.clone(), c.rhs));
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e, 0.0));
        }
        let total = rows.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            if let Some(x) = solve_square(&rows, &idx, n) {
                if feasible(lp, &x) {
                    let obj: f64 = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
                    best = Some(best.map_or(obj, |b: f64| b.max(obj)));
                }
            }
            // Next combination.
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] + (n - i) < total {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn solve_square(rows: &[(Vec<f64>, f64)], idx: &[usize], n: usize) -> Option<Vec<f64>> {
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for (r, &ri) in idx.iter().enumerate() {
            a[r * n..(r + 1) * n].copy_from_slice(&rows[ri].0);
            b[r] = rows[ri].1;
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..n {
            let (pr, pv) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))?;
            if pv < 1e-10 {
                return None;
            }
            if pr != col {
                for j in 0..n {
                    a.swap(col * n + j, pr * n + j);
                }
                b.swap(col, pr);
            }
            for r in col + 1..n {
                let f = a[r * n + col] / a[col * n + col];
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for col in (0..n).rev() {
            let mut s = b[col];
            for j in col + 1..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Some(x)
    }

    fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
        if x.iter().any(|&v| v < -1e-7) {
            return false;
        }
        lp.constraints.iter().all(|c| {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            match c.rel {
                Relation::Le => lhs <= c.rhs + 1e-7,
                Relation::Ge => lhs >= c.rhs - 1e-7,
                Relation::Eq => (lhs - c.rhs).abs() <= 1e-7,
            }
        })
    }

    pub(crate) fn random_program(rng: &mut ChaCha8Rng) -> LinearProgram {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=6);
        let mut lp = LinearProgram::new((0..n).map(|_| rng.gen_range(-0.5..1.0)).collect());
        for _ in 0..m {
            let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            lp.add_row(coeffs, Relation::Le, rng.gen_range(0.5..2.0));
        }
        // Occasionally mix in an extra >= or = row.
        if rng.gen_bool(0.4) {
            let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let rel = if rng.gen_bool(0.5) {
                Relation::Ge
            } else {
                Relation::Eq
            };
            lp.add_row(coeffs, rel, rng.gen_range(0.0..0.4));
        }
        lp
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..50 {
            let lp = random_program(&mut rng);
            let sol = solve_lp(&lp).unwrap();
            match brute_force(&lp) {
                Some(best) => {
                    assert_eq!(sol.status, LpStatus::Optimal, "trial {trial}");
                    assert!(
                        (sol.objective - best).abs() < 1e-7,
                        "trial {trial}: simplex {} vs oracle {best}",
                        sol.objective
                    );
                }
                None => assert_eq!(sol.status, LpStatus::Infeasible, "trial {trial}"),
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lp = random_program(&mut rng);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective, b.objective);
    }
}
