//! Small dense linear programming by randomized incremental construction.
//!
//! Dimensions here are tiny (at most 10 variables) while constraint counts
//! reach a few thousand, which is exactly the regime where Seidel's
//! algorithm shines: expected O(d! n) time, no tableau, no external solver.
//!
//! All variables are implicitly boxed to `[-BOX_BOUND, BOX_BOUND]`; an
//! optimum pinned to that box is reported as `Unbounded`. Problems in this
//! crate live well inside the box, so the clamp never binds for legitimate
//! input. The internal shuffle uses a fixed seed, making every solve
//! deterministic across runs and platforms.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Halfspace, Vector};
use crate::error::{Error, Result};
use crate::tol;

/// Optimal point and objective value of a maximization LP.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub point: Vector,
    pub value: f64,
}

const BOX_BOUND: f64 = 1e7;
const ZERO_ROW: f64 = 1e-13;

/// Maximizes `objective · x` over the intersection of `constraints`.
///
/// # Errors
///
/// `Infeasible` when the constraints have empty intersection, `Unbounded`
/// when the optimum escapes the implicit variable box.
pub fn solve_lp(objective: &Vector, constraints: &[Halfspace]) -> Result<LpSolution> {
    let k = objective.len();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(constraints.len());
    for h in constraints {
        if h.dim() != k {
            return Err(Error::DimensionMismatch { expected: k, got: h.dim() });
        }
        rows.push((h.normal().as_slice().to_vec(), h.offset()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1b01);
    let point = match solve_rec(objective.as_slice(), &rows, &mut rng) {
        Ok(x) => x,
        Err(LpErr::Infeasible) => return Err(Error::Infeasible),
    };
    if point.iter().any(|x| x.abs() >= 0.999 * BOX_BOUND) {
        return Err(Error::Unbounded);
    }
    let point = Vector::from_vec(point);
    let value = objective.dot(&point);
    Ok(LpSolution { point, value })
}

/// Finds any point satisfying all constraints, or `None` if infeasible.
pub fn feasible_point(dim: usize, constraints: &[Halfspace]) -> Result<Option<Vector>> {
    match solve_lp(&Vector::zeros(dim), constraints) {
        Ok(sol) => Ok(Some(sol.point)),
        Err(Error::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

enum LpErr {
    Infeasible,
}

fn feas_margin(b: f64) -> f64 {
    tol::lp_feas(b)
}

/// Recursive Seidel step over normalized rows `(a, b)` meaning `a · x <= b`.
/// Returns the maximizer of `obj · x` over the rows intersected with the
/// implicit box.
fn solve_rec(obj: &[f64], rows: &[(Vec<f64>, f64)], rng: &mut ChaCha8Rng) -> std::result::Result<Vec<f64>, LpErr> {
    let k = obj.len();
    if k == 1 {
        return solve_1d(obj[0], rows);
    }

    // start at the box corner maximizing the objective
    let mut x: Vec<f64> = obj
        .iter()
        .map(|&c| {
            if c > 0.0 {
                BOX_BOUND
            } else if c < 0.0 {
                -BOX_BOUND
            } else {
                0.0
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);

    for pos in 0..order.len() {
        let (a, b) = &rows[order[pos]];
        let lhs: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
        if lhs <= *b + feas_margin(*b) {
            continue;
        }

        // new optimum lies on this hyperplane; eliminate the variable with
        // the largest coefficient for numerical stability
        let (p, ap) = a
            .iter()
            .enumerate()
            .max_by(|l, r| l.1.abs().partial_cmp(&r.1.abs()).unwrap())
            .map(|(i, v)| (i, *v))
            .unwrap();
        if ap.abs() < ZERO_ROW {
            // an (almost) empty row is violated only if its bound is negative
            return Err(LpErr::Infeasible);
        }

        // project objective and the already-processed rows onto the
        // hyperplane a · x = b via x_p = (b - sum_{j != p} a_j x_j) / a_p
        let keep: Vec<usize> = (0..k).filter(|&j| j != p).collect();
        let sub_obj: Vec<f64> = keep.iter().map(|&j| obj[j] - obj[p] * a[j] / ap).collect();
        let mut sub_rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(pos + 2);
        let project = |alpha: &[f64], beta: f64, out: &mut Vec<(Vec<f64>, f64)>| -> std::result::Result<(), LpErr> {
            let mut row: Vec<f64> = keep.iter().map(|&j| alpha[j] - alpha[p] * a[j] / ap).collect();
            let beta2 = beta - alpha[p] * b / ap;
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < ZERO_ROW {
                if beta2 < -feas_margin(beta2) {
                    return Err(LpErr::Infeasible);
                }
                return Ok(());
            }
            for v in &mut row {
                *v /= norm;
            }
            out.push((row, beta2 / norm));
            Ok(())
        };
        for &ri in &order[..pos] {
            let (alpha, beta) = &rows[ri];
            project(alpha, *beta, &mut sub_rows)?;
        }
        // the eliminated variable's box bounds become ordinary rows
        let mut ep = vec![0.0; k];
        ep[p] = 1.0;
        project(&ep, BOX_BOUND, &mut sub_rows)?;
        ep[p] = -1.0;
        project(&ep, BOX_BOUND, &mut sub_rows)?;

        let y = solve_rec(&sub_obj, &sub_rows, rng)?;
        let mut lifted = vec![0.0; k];
        let mut acc = 0.0;
        for (t, &j) in keep.iter().enumerate() {
            lifted[j] = y[t];
            acc += a[j] * y[t];
        }
        lifted[p] = (b - acc) / ap;
        x = lifted;
    }
    Ok(x)
}

fn solve_1d(c: f64, rows: &[(Vec<f64>, f64)]) -> std::result::Result<Vec<f64>, LpErr> {
    let mut lo = -BOX_BOUND;
    let mut hi = BOX_BOUND;
    for (a, b) in rows {
        let a = a[0];
        if a > ZERO_ROW {
            hi = hi.min(b / a);
        } else if a < -ZERO_ROW {
            lo = lo.max(b / a);
        } else if *b < -feas_margin(*b) {
            return Err(LpErr::Infeasible);
        }
    }
    if lo > hi + feas_margin(lo.abs().max(hi.abs())) {
        return Err(LpErr::Infeasible);
    }
    let hi = hi.max(lo);
    let x = if c > 0.0 {
        hi
    } else if c < 0.0 {
        lo
    } else {
        0.0_f64.clamp(lo, hi)
    };
    Ok(vec![x])
}
