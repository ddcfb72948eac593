//! Non-negative least squares by the Lawson-Hanson active-set method.
//!
//! Termination uses a dual (gradient) tolerance relative to the scale
//! ||A' b||_inf: coordinates enter the passive set only while their dual
//! value exceeds `rel_tol * scale`. The certificate at exit is therefore
//! * active coordinates (x_i = 0): (A'(b - Ax))_i <= rel_tol * scale
//! * passive coordinates (x_i > 0): the least-squares optimality of the
//!   passive subproblem, i.e. |(A'(b - Ax))_i| at rounding level.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};

/// Solve min ||A x - b||^2 subject to x >= 0.
pub fn nnls(a: ArrayView2<'_, f64>, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let (m, n) = a.dim();
    assert_eq!(m, b.len(), "rhs length must match row count");
    let mut x = vec![0.0; n];
    if n == 0 || m == 0 {
        return Ok(x);
    }

    // Dual scale fixed at the origin.
    let scale = (0..n)
        .map(|k| column_dot(&a, k, b).abs())
        .fold(0.0, f64::max);
    if scale <= 0.0 {
        return Ok(x);
    }
    let threshold = rel_tol * scale;

    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; n];
    let mut rejected = vec![false; n];
    let mut residual: Vec<f64> = b.to_vec();
    let mut iterations = 0usize;

    loop {
        // Select the steepest admissible coordinate.
        let mut best: Option<(usize, f64)> = None;
        for k in 0..n {
            if in_passive[k] || rejected[k] {
                continue;
            }
            let w = column_dot(&a, k, &residual);
            if w > threshold && best.map_or(true, |(_, bw)| w > bw) {
                best = Some((k, w));
            }
        }
        let Some((entering, _)) = best else {
            return Ok(x);
        };

        passive.push(entering);
        in_passive[entering] = true;

        // Inner loop: solve the unconstrained subproblem on the passive set and
        // walk back onto the feasible region while any coefficient is negative.
        loop {
            iterations += 1;
            if iterations > max_iter {
                let objective = objective_value(&a, b, &x);
                return Err(Error::NnlsIterationLimit {
                    limit: max_iter,
                    objective,
                    best: x,
                });
            }
            match ls_solve(&a, b, &passive) {
                None => {
                    // Dependent column: drop the entering candidate and bar it
                    // until the passive set changes again.
                    let dropped = passive.pop().expect("passive set not empty");
                    in_passive[dropped] = false;
                    rejected[dropped] = true;
                    break;
                }
                Some(z) => {
                    if z.iter().all(|v| *v > 0.0) {
                        for (idx, &p) in passive.iter().enumerate() {
                            x[p] = z[idx];
                        }
                        rejected.iter_mut().for_each(|r| *r = false);
                        break;
                    }
                    // Interpolate toward z until the first coordinate hits zero.
                    let mut alpha = f64::INFINITY;
                    for (idx, &p) in passive.iter().enumerate() {
                        if z[idx] <= 0.0 {
                            let t = x[p] / (x[p] - z[idx]);
                            if t < alpha {
                                alpha = t;
                            }
                        }
                    }
                    let alpha = alpha.clamp(0.0, 1.0);
                    for (idx, &p) in passive.iter().enumerate() {
                        x[p] += alpha * (z[idx] - x[p]);
                    }
                    // Remove coordinates driven to (numerical) zero.
                    let x_max = passive.iter().map(|&p| x[p]).fold(0.0, f64::max);
                    let cut = 1e-12 * x_max;
                    let mut kept = Vec::with_capacity(passive.len());
                    for &p in &passive {
                        if x[p] > cut {
                            kept.push(p);
                        } else {
                            x[p] = 0.0;
                            in_passive[p] = false;
                        }
                    }
                    passive = kept;
                    if passive.is_empty() {
                        break;
                    }
                }
            }
        }

        // Refresh the residual for the next selection.
        residual.copy_from_slice(b);
        for &p in &passive {
            let xp = x[p];
            if xp != 0.0 {
                for (i, r) in residual.iter_mut().enumerate() {
                    *r -= a[(i, p)] * xp;
                }
            }
        }
    }
}

/// ||A x - b||^2.
pub fn objective_value(a: &ArrayView2<'_, f64>, b: &[f64], x: &[f64]) -> f64 {
    let (m, n) = a.dim();
    let mut acc = 0.0;
    for i in 0..m {
        let mut pred = 0.0;
        for k in 0..n {
            pred += a[(i, k)] * x[k];
        }
        let r = b[i] - pred;
        acc += r * r;
    }
    acc
}

/// Largest violation of the non-negativity KKT conditions, relative to
/// ||A' b||_inf. Zero-valued coordinates may have dual value down to
/// -tol; positive coordinates need dual value of magnitude up to tol.
pub fn kkt_max_violation(a: ArrayView2<'_, f64>, b: &[f64], x: &[f64]) -> f64 {
    let (m, n) = a.dim();
    let mut residual = b.to_vec();
    for i in 0..m {
        for k in 0..n {
            residual[i] -= a[(i, k)] * x[k];
        }
    }
    let scale = (0..n)
        .map(|k| column_dot(&a, k, b).abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut worst = 0.0f64;
    for k in 0..n {
        let w = column_dot(&a, k, &residual);
        let viol = if x[k] > 0.0 { w.abs() } else { w.max(0.0) };
        worst = worst.max(viol / scale);
    }
    worst
}

fn column_dot(a: &ArrayView2<'_, f64>, k: usize, v: &[f64]) -> f64 {
    let m = a.dim().0;
    let mut acc = 0.0;
    for i in 0..m {
        acc += a[(i, k)] * v[i];
    }
    acc
}

/// Dense Householder-QR least squares on the selected columns.
/// Returns `None` when the trailing column is numerically dependent.
fn ls_solve(a: &ArrayView2<'_, f64>, b: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let m = a.dim().0;
    let p = cols.len();
    debug_assert!(p <= m);
    // Work on column copies plus the rhs.
    let mut mat: Vec<Vec<f64>> = cols
        .iter()
        .map(|&k| (0..m).map(|i| a[(i, k)]).collect())
        .collect();
    let mut rhs = b.to_vec();
    let norms: Vec<f64> = mat
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();

    for j in 0..p {
        // Householder vector for column j below row j.
        let alpha = {
            let col = &mat[j];
            let norm = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if col[j] > 0.0 {
                -norm
            } else {
                norm
            }
        };
        if alpha.abs() <= 1e-13 * norms[j].max(f64::MIN_POSITIVE) {
            return None;
        }
        let mut v: Vec<f64> = mat[j][j..].to_vec();
        v[0] -= alpha;
        let v_norm2: f64 = v.iter().map(|x| x * x).sum();
        if v_norm2 > 0.0 {
            for target in mat.iter_mut().skip(j + 1) {
                apply_householder(&v, &mut target[j..], v_norm2);
            }
            apply_householder(&v, &mut rhs[j..], v_norm2);
        }
        mat[j][j] = alpha;
        for r in j + 1..m {
            mat[j][r] = 0.0;
        }
    }

    // Back substitution on the p x p upper triangle.
    let mut z = vec![0.0; p];
    for j in (0..p).rev() {
        let mut acc = rhs[j];
        for k in j + 1..p {
            acc -= mat[k][j] * z[k];
        }
        let diag = mat[j][j];
        if diag.abs() <= 1e-13 * norms[j].max(f64::MIN_POSITIVE) {
            return None;
        }
        z[j] = acc / diag;
    }
    Some(z)
}

fn apply_householder(v: &[f64], target: &mut [f64], v_norm2: f64) {
    let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / v_norm2;
    for (t, vv) in target.iter_mut().zip(v) {
        *t -= f * vv;
    }
}
