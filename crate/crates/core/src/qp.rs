//! Small dense convex quadratic programs by a primal active-set method.
//!
//! minimize (1/2) xᵀQx + cᵀx subject to aᵀx = b (equalities) and aᵀx ≤ b
//! (inequalities), with Q positive definite on the feasible subspace. The
//! problems here are tiny — tens of variables, dozens of constraints — so
//! a dense LU factorization of the KKT system each iteration is the
//! simplest reliable choice. The caller supplies a feasible start.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Problem data: quadratic term, linear term, and constraint rows.
pub struct Qp {
    pub q: RMat,
    pub lin: RVec,
    /// aᵀx = b rows.
    pub eq: Vec<(RVec, f64)>,
    /// aᵀx ≤ b rows.
    pub ineq: Vec<(RVec, f64)>,
}

pub struct QpSolution {
    pub x: RVec,
    /// Max-norm of the stationarity residual plus primal violation.
    pub kkt_residual: f64,
    pub iterations: usize,
}

fn feasible(problem: &Qp, x: &RVec, tol: f64) -> bool {
    problem.eq.iter().all(|(a, b)| (a.dot(x) - b).abs() <= tol)
        && problem.ineq.iter().all(|(a, b)| a.dot(x) - b <= tol)
}

/// Stationarity + feasibility residual given multipliers for the equality
/// rows and the active inequality rows (in that order).
fn kkt_residual(problem: &Qp, x: &RVec, active: &[usize], mults: &[f64]) -> f64 {
    let mut grad = &problem.q * x + &problem.lin;
    let me = problem.eq.len();
    for (j, (a, _)) in problem.eq.iter().enumerate() {
        grad += a * mults[j];
    }
    for (j, &i) in active.iter().enumerate() {
        grad += &problem.ineq[i].0 * mults[me + j];
    }
    let stationarity = grad.amax();
    let primal = problem
        .ineq
        .iter()
        .map(|(a, b)| (a.dot(x) - b).max(0.0))
        .chain(problem.eq.iter().map(|(a, b)| (a.dot(x) - b).abs()))
        .fold(0.0, f64::max);
    stationarity + primal
}

/// Solves the QP from a feasible starting point.
pub fn solve(problem: &Qp, x0: &RVec, tol: f64, max_iter: usize) -> Result<QpSolution> {
    let n = problem.q.nrows();
    if problem.q.ncols() != n || problem.lin.len() != n || x0.len() != n {
        return Err(Error::Dimension("QP blocks disagree on the variable count".into()));
    }
    if !feasible(problem, x0, 1e-8) {
        return Err(Error::Solver("QP starting point is infeasible".into()));
    }

    // unconstrained problems collapse to one linear solve
    if problem.eq.is_empty() && problem.ineq.is_empty() {
        let x = problem
            .q
            .clone()
            .lu()
            .solve(&(-&problem.lin))
            .ok_or_else(|| Error::Solver("singular unconstrained QP".into()))?;
        let res = (&problem.q * &x + &problem.lin).amax();
        return Ok(QpSolution { x, kkt_residual: res, iterations: 1 });
    }

    let me = problem.eq.len();
    let mut x = x0.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut last_mults: Vec<f64> = vec![0.0; me];

    for iter in 1..=max_iter {
        // equality-constrained step: [Q Aᵀ; A 0] [d; w] = [-(Qx + c); 0]
        let m = me + active.len();
        let mut kkt = RMat::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.q);
        let rows: Vec<&RVec> = problem
            .eq
            .iter()
            .map(|(a, _)| a)
            .chain(active.iter().map(|&i| &problem.ineq[i].0))
            .collect();
        for (j, a) in rows.iter().enumerate() {
            for k in 0..n {
                kkt[(n + j, k)] = a[k];
                kkt[(k, n + j)] = a[k];
            }
        }
        let mut rhs = RVec::zeros(n + m);
        let grad = &problem.q * &x + &problem.lin;
        for k in 0..n {
            rhs[k] = -grad[k];
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular KKT system (degenerate active set)".into()))?;
        let d = sol.rows(0, n).into_owned();
        let mults: Vec<f64> = (0..m).map(|j| sol[n + j]).collect();

        if d.amax() <= tol * (1.0 + x.amax()) {
            // stationary on the current face: check inequality multipliers
            let worst = active
                .iter()
                .enumerate()
                .min_by(|a, b| mults[me + a.0].total_cmp(&mults[me + b.0]))
                .map(|(j, _)| j);
            match worst {
                Some(j) if mults[me + j] < -tol => {
                    active.remove(j);
                    continue;
                }
                _ => {
                    last_mults = mults;
                    let res = kkt_residual(problem, &x, &active, &last_mults);
                    return Ok(QpSolution { x, kkt_residual: res, iterations: iter });
                }
            }
        }

        // longest feasible step along d; add the blocking row if cut short
        let mut alpha = 1.0f64;
        let mut blocker = None;
        for (i, (a, b)) in problem.ineq.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let ad = a.dot(&d);
            if ad > tol {
                let room = ((b - a.dot(&x)) / ad).max(0.0);
                if room < alpha {
                    alpha = room;
                    blocker = Some(i);
                }
            }
        }
        x += &d * alpha;
        if let Some(i) = blocker {
            active.push(i);
        }
    }
    Err(Error::Solver(format!("QP did not converge in {max_iter} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn vecn(v: &[f64]) -> RVec {
        RVec::from_column_slice(v)
    }

    // --- basics -----------------------------------------------------------

    #[test]
    fn unconstrained_matches_direct_solve() {
        let q = RMat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let lin = vecn(&[-1.0, -2.0]);
        let p = Qp { q: q.clone(), lin: lin.clone(), eq: vec![], ineq: vec![] };
        let sol = solve(&p, &vecn(&[0.0, 0.0]), 1e-12, 100).unwrap();
        let direct = q.lu().solve(&(-lin)).unwrap();
        assert!((sol.x - direct).amax() < 1e-12);
        assert!(sol.kkt_residual < 1e-10);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn active_bound_clamps_the_minimizer() {
        // min (x-2)^2 s.t. x <= 1
        let p = Qp {
            q: RMat::from_row_slice(1, 1, &[2.0]),
            lin: vecn(&[-4.0]),
            eq: vec![],
            ineq: vec![(vecn(&[1.0]), 1.0)],
        };
        let sol = solve(&p, &vecn(&[0.0]), 1e-12, 100).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn inactive_bound_leaves_the_minimizer_alone() {
        // min (x-2)^2 s.t. x <= 5
        let p = Qp {
            q: RMat::from_row_slice(1, 1, &[2.0]),
            lin: vecn(&[-4.0]),
            eq: vec![],
            ineq: vec![(vecn(&[1.0]), 5.0)],
        };
        let sol = solve(&p, &vecn(&[0.0]), 1e-12, 100).unwrap();
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn equality_constraint_spreads_mass_uniformly() {
        // min ||x||^2 s.t. sum x = 1 -> x = 1/3 each
        let n = 3;
        let p = Qp {
            q: RMat::identity(n, n) * 2.0,
            lin: RVec::zeros(n),
            eq: vec![(vecn(&[1.0, 1.0, 1.0]), 1.0)],
            ineq: vec![],
        };
        let start = vecn(&[1.0, 0.0, 0.0]);
        let sol = solve(&p, &start, 1e-12, 100).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(sol.x[i], 1.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn simplex_projection_as_a_qp() {
        // project y onto {x >= 0, sum x = 1}
        let y = [0.8, 0.4, -0.2];
        let n = 3;
        let mut ineq = Vec::new();
        for i in 0..n {
            let mut a = RVec::zeros(n);
            a[i] = -1.0;
            ineq.push((a, 0.0));
        }
        let p = Qp {
            q: RMat::identity(n, n) * 2.0,
            lin: vecn(&y).map(|v| -2.0 * v),
            eq: vec![(vecn(&[1.0; 3]), 1.0)],
            ineq,
        };
        let start = vecn(&[1.0 / 3.0; 3]);
        let sol = solve(&p, &start, 1e-12, 200).unwrap();
        // analytic shift: drop the negative entry, shift the rest by -0.1
        assert_abs_diff_eq!(sol.x[0], 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[2], 0.0, epsilon = 1e-9);
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let p = Qp {
            q: RMat::identity(1, 1),
            lin: RVec::zeros(1),
            eq: vec![],
            ineq: vec![(vecn(&[1.0]), -1.0)],
        };
        assert!(solve(&p, &vecn(&[0.0]), 1e-10, 10).is_err());
    }
}
