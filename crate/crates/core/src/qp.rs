//! Dense primal active-set method for small convex quadratic programs
//!
//! ```text
//! minimize   0.5 x'Gx + c'x
//! subject to a_i'x  = b_i   (equality rows)
//!            a_i'x >= b_i   (inequality rows)
//! ```
//!
//! `G` only has to be positive semidefinite. Directions of zero curvature
//! are followed as rays until a constraint blocks them, so the feasible set
//! must keep the objective bounded below along those rays.
//!
//! The working set is kept linearly independent: a blocking row always has
//! a nonzero product with the current step, which all working rows
//! annihilate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const MULT_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
    pub equality: bool,
}

impl LinearConstraint {
    pub fn ge(coeffs: DVector<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            rhs,
            equality: false,
        }
    }

    pub fn eq(coeffs: DVector<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            rhs,
            equality: true,
        }
    }

    /// `a'x - b`; nonnegative when an inequality holds.
    fn slack(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.dot(x) - self.rhs
    }
}

#[derive(Debug, Clone)]
pub struct ConvexQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: Vec<LinearConstraint>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint, zero for rows outside the final working set.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

enum Direction {
    /// Newton step onto the minimizer of the working-set subproblem.
    Newton(DVector<f64>),
    /// Descent direction with zero curvature; only constraints bound the step.
    Ray(DVector<f64>),
}

impl ConvexQp {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x + &self.linear
    }

    /// Runs the active-set iteration from the feasible point `start`.
    pub fn solve(&self, start: DVector<f64>, max_iter: usize) -> Result<QpSolution> {
        let n = self.dim();
        if start.len() != n {
            return Err(Error::LengthMismatch {
                what: "qp start",
                expected: n,
                got: start.len(),
            });
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let s = c.slack(&start);
            if (c.equality && s.abs() > FEAS_TOL) || (!c.equality && s < -FEAS_TOL) {
                return Err(Error::InvalidInput(format!(
                    "qp start violates constraint {i} by {s:e}"
                )));
            }
        }

        let mut x = start;
        let mut working: Vec<usize> = Vec::new();
        for (i, c) in self.constraints.iter().enumerate() {
            if c.equality {
                working.push(i);
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.equality && c.slack(&x).abs() <= FEAS_TOL {
                let mut trial = working.clone();
                trial.push(i);
                if self.rows_independent(&trial) {
                    working = trial;
                }
            }
        }

        for iter in 0..max_iter {
            let g = self.gradient(&x);
            let direction = self.direction(&working, &g);
            let (p, max_step) = match direction {
                Direction::Newton(p) => (p, Some(1.0)),
                Direction::Ray(p) => (p, None),
            };

            if p.amax() <= STEP_TOL * (1.0 + x.amax()) {
                let lambda = self.working_multipliers(&working, &g);
                let mut drop: Option<(usize, f64)> = None;
                for (k, &row) in working.iter().enumerate() {
                    if self.constraints[row].equality {
                        continue;
                    }
                    if lambda[k] < -MULT_TOL && drop.is_none_or(|(_, m)| lambda[k] < m) {
                        drop = Some((k, lambda[k]));
                    }
                }
                match drop {
                    Some((k, _)) => {
                        working.remove(k);
                    }
                    None => {
                        let mut multipliers = vec![0.0; self.constraints.len()];
                        for (k, &row) in working.iter().enumerate() {
                            multipliers[row] = lambda[k];
                        }
                        let kkt_residual = self.kkt_residual(&x, &multipliers);
                        return Ok(QpSolution {
                            x,
                            multipliers,
                            iterations: iter + 1,
                            kkt_residual,
                        });
                    }
                }
                continue;
            }

            // Ratio test over rows outside the working set.
            let mut step = max_step.unwrap_or(f64::INFINITY);
            let mut blocking = None;
            for (i, c) in self.constraints.iter().enumerate() {
                if c.equality || working.contains(&i) {
                    continue;
                }
                let ap = c.coeffs.dot(&p);
                if ap < -STEP_TOL {
                    let alpha = c.slack(&x).max(0.0) / -ap;
                    if alpha < step {
                        step = alpha;
                        blocking = Some(i);
                    }
                }
            }
            if !step.is_finite() {
                return Err(Error::UnboundedSubproblem);
            }
            x += &p * step;
            if let Some(i) = blocking {
                working.push(i);
            }
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
        })
    }

    fn working_matrix(&self, working: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(working.len(), n, |r, c| {
            self.constraints[working[r]].coeffs[c]
        })
    }

    fn rows_independent(&self, rows: &[usize]) -> bool {
        if rows.len() > self.dim() {
            return false;
        }
        let a = self.working_matrix(rows);
        let sv = a.singular_values();
        let largest = sv.max();
        sv.iter().all(|&s| s > 1e-9 * largest.max(1.0))
    }

    fn null_space(&self, working: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        if working.is_empty() {
            return DMatrix::identity(n, n);
        }
        let k = n - working.len();
        if k == 0 {
            return DMatrix::zeros(n, 0);
        }
        let a = self.working_matrix(working);
        let gram = a.transpose() * &a;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])])
    }

    fn direction(&self, working: &[usize], g: &DVector<f64>) -> Direction {
        let z = self.null_space(working);
        if z.ncols() == 0 {
            return Direction::Newton(DVector::zeros(self.dim()));
        }
        let reduced_h = z.transpose() * &self.hessian * &z;
        let reduced_g = z.transpose() * g;
        let eig = SymmetricEigen::new(reduced_h);
        let curv_tol = 1e-10 * self.hessian.amax().max(1.0);
        let grad_tol = 1e-10 * (1.0 + g.amax());

        let mut ray = DVector::zeros(z.ncols());
        let mut newton = DVector::zeros(z.ncols());
        let mut has_ray = false;
        for i in 0..z.ncols() {
            let u = eig.eigenvectors.column(i);
            let coeff = u.dot(&reduced_g);
            let mu = eig.eigenvalues[i];
            if mu <= curv_tol {
                if coeff.abs() > grad_tol {
                    has_ray = true;
                    ray -= u * coeff;
                }
            } else {
                newton -= u * (coeff / mu);
            }
        }
        if has_ray {
            Direction::Ray(&z * ray)
        } else {
            Direction::Newton(&z * newton)
        }
    }

    /// Least-squares solve of `A_W' lambda = g`.
    fn working_multipliers(&self, working: &[usize], g: &DVector<f64>) -> DVector<f64> {
        if working.is_empty() {
            return DVector::zeros(0);
        }
        let a = self.working_matrix(working);
        let normal = &a * a.transpose();
        let rhs = &a * g;
        match normal.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => normal
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(working.len())),
        }
    }

    /// Largest violation among stationarity, primal feasibility, dual sign,
    /// and complementary slackness.
    pub fn kkt_residual(&self, x: &DVector<f64>, multipliers: &[f64]) -> f64 {
        let mut stationarity = self.gradient(x);
        let mut worst: f64 = 0.0;
        for (c, &lambda) in self.constraints.iter().zip(multipliers) {
            stationarity -= &c.coeffs * lambda;
            let s = c.slack(x);
            if c.equality {
                worst = worst.max(s.abs());
            } else {
                worst = worst.max((-s).max(0.0));
                worst = worst.max((-lambda).max(0.0));
                worst = worst.max((lambda * s).abs());
            }
        }
        worst.max(stationarity.amax())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize, i: usize, v: f64) -> DVector<f64> {
        let mut e = DVector::zeros(n);
        e[i] = v;
        e
    }

    #[test]
    fn box_constrained_quadratic() {
        // min (x0 - 2)^2 + (x1 + 1)^2 on [0, 1]^2 -> (1, 0).
        let qp = ConvexQp {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0])),
            linear: DVector::from_vec(vec![-4.0, 2.0]),
            constraints: vec![
                LinearConstraint::ge(unit(2, 0, 1.0), 0.0),
                LinearConstraint::ge(unit(2, 1, 1.0), 0.0),
                LinearConstraint::ge(unit(2, 0, -1.0), -1.0),
                LinearConstraint::ge(unit(2, 1, -1.0), -1.0),
            ],
        };
        let sol = qp.solve(DVector::from_vec(vec![0.5, 0.5]), 50).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!(sol.x[1].abs() < 1e-12);
        assert!(sol.kkt_residual < 1e-10);
        assert!((sol.multipliers[2] - 2.0).abs() < 1e-10);
        assert!((sol.multipliers[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn linear_direction_is_followed_to_the_boundary() {
        // min x0^2 - x1 s.t. x0 + x1 <= 3, x1 >= 0: zero curvature in x1.
        let qp = ConvexQp {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0])),
            linear: DVector::from_vec(vec![0.0, -1.0]),
            constraints: vec![
                LinearConstraint::ge(DVector::from_vec(vec![-1.0, -1.0]), -3.0),
                LinearConstraint::ge(unit(2, 1, 1.0), 0.0),
            ],
        };
        let sol = qp.solve(DVector::from_vec(vec![0.0, 0.0]), 50).unwrap();
        // Stationarity: 2 x0 = -lambda, -1 = -lambda -> x0 = -0.5, x1 = 3.5.
        assert!((sol.x[0] + 0.5).abs() < 1e-10, "{}", sol.x);
        assert!((sol.x[1] - 3.5).abs() < 1e-10, "{}", sol.x);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn equality_constraints_are_respected() {
        // min x0^2 + x1^2 s.t. x0 + x1 = 2.
        let qp = ConvexQp {
            hessian: DMatrix::identity(2, 2) * 2.0,
            linear: DVector::zeros(2),
            constraints: vec![LinearConstraint::eq(DVector::from_vec(vec![1.0, 1.0]), 2.0)],
        };
        let sol = qp.solve(DVector::from_vec(vec![2.0, 0.0]), 10).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_ray_is_reported() {
        let qp = ConvexQp {
            hessian: DMatrix::zeros(1, 1),
            linear: DVector::from_vec(vec![-1.0]),
            constraints: vec![LinearConstraint::ge(unit(1, 0, 1.0), 0.0)],
        };
        let r = qp.solve(DVector::zeros(1), 10);
        assert!(matches!(r, Err(Error::UnboundedSubproblem)));
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let qp = ConvexQp {
            hessian: DMatrix::identity(1, 1),
            linear: DVector::zeros(1),
            constraints: vec![LinearConstraint::ge(unit(1, 0, 1.0), 1.0)],
        };
        assert!(qp.solve(DVector::zeros(1), 10).is_err());
    }

    #[test]
    fn iteration_cap_is_signalled() {
        let qp = ConvexQp {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::from_vec(vec![-1.0, -1.0]),
            constraints: vec![
                LinearConstraint::ge(unit(2, 0, 1.0), 0.0),
                LinearConstraint::ge(unit(2, 1, 1.0), 0.0),
            ],
        };
        assert!(matches!(
            qp.solve(DVector::zeros(2), 1),
            Err(Error::NonConvergence { iterations: 1 })
        ));
    }
}
