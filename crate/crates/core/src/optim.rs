//! Small dense solvers: L-BFGS, Levenberg-Marquardt, Cholesky, pivoted QR
//! least squares and Jacobi eigenvalues.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the gradient infinity norm drops below this.
    pub grad_tol: f64,
    /// Stop when the objective falls below this.
    pub f_target: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iter: 2000, memory: 10, grad_tol: 1e-10, f_target: f64::NEG_INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Limited-memory BFGS with backtracking Armijo line search.
///
/// `fg(x, g)` writes the gradient into `g` and returns the objective; a
/// non-finite value marks `x` as infeasible and shortens the step.
pub fn lbfgs(x0: &[f64], mut fg: impl FnMut(&[f64], &mut [f64]) -> f64, opts: LbfgsOptions) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = alloc::vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut xn = alloc::vec![0.0; n];
    let mut gn = alloc::vec![0.0; n];
    let mut d = alloc::vec![0.0; n];
    for it in 0..opts.max_iter {
        if !f.is_finite() {
            return Minimum { x, f, iterations: it, converged: false };
        }
        if inf_norm(&g) < opts.grad_tol || f < opts.f_target {
            return Minimum { x, f, iterations: it, converged: true };
        }
        // Two-loop recursion.
        d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(d, y)| *d -= a * y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|d| *d *= gamma);
        } else {
            let s = 1.0 / inf_norm(&g).max(1.0);
            d.iter_mut().for_each(|d| *d *= s);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(d, s)| *d += (a - b) * s);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            xn.iter_mut().zip(x.iter().zip(&d)).for_each(|(xn, (x, d))| *xn = x + step * d);
            let fnew = fg(&xn, &mut gn);
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-300 {
                    if hist.len() == opts.memory {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                core::mem::swap(&mut x, &mut xn);
                core::mem::swap(&mut g, &mut gn);
                f = fnew;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if hist.is_empty() {
                return Minimum { x, f, iterations: it, converged: false };
            }
            hist.clear();
        }
    }
    Minimum { x, f, iterations: opts.max_iter, converged: false }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the sum of squared residuals falls below this.
    pub f_target: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iter: 200, f_target: 1e-30 }
    }
}

/// Levenberg-Marquardt on `sum r_i(x)^2`.
///
/// `rj(x, r, jac)` fills residuals and the row-major Jacobian
/// (`r.len() x x.len()`). Steps for which `admissible` fails are rejected.
pub fn levenberg_marquardt(
    x0: &[f64],
    m: usize,
    mut rj: impl FnMut(&[f64], &mut [f64], &mut [f64]),
    admissible: impl Fn(&[f64]) -> bool,
    opts: LmOptions,
) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = alloc::vec![0.0; m];
    let mut jac = alloc::vec![0.0; m * n];
    rj(&x, &mut r, &mut jac);
    let mut f = dot(&r, &r);
    let mut mu = 1e-3;
    let mut rn = alloc::vec![0.0; m];
    let mut jn = alloc::vec![0.0; m * n];
    for it in 0..opts.max_iter {
        if f < opts.f_target {
            return Minimum { x, f, iterations: it, converged: true };
        }
        let mut jtj = alloc::vec![0.0; n * n];
        let mut jtr = alloc::vec![0.0; n];
        for row in 0..m {
            let jr = &jac[row * n..(row + 1) * n];
            for a in 0..n {
                if jr[a] == 0.0 {
                    continue;
                }
                jtr[a] += jr[a] * r[row];
                for b in a..n {
                    jtj[a * n + b] += jr[a] * jr[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[a * n + b] = jtj[b * n + a];
            }
        }
        let scale = (0..n).map(|a| jtj[a * n + a]).fold(0.0, f64::max).max(1e-300);
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[i * n + i] += mu * (jtj[i * n + i] + 1e-12 * scale);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            if let Some(step) = cholesky_solve(&a, &rhs, n) {
                let xn: Vec<f64> = x.iter().zip(&step).map(|(x, s)| x + s).collect();
                if admissible(&xn) {
                    rj(&xn, &mut rn, &mut jn);
                    let fnew = dot(&rn, &rn);
                    if fnew.is_finite() && fnew < f {
                        x = xn;
                        core::mem::swap(&mut r, &mut rn);
                        core::mem::swap(&mut jac, &mut jn);
                        f = fnew;
                        mu = (mu * 0.3).max(1e-15);
                        improved = true;
                        break;
                    }
                }
            }
            mu *= 10.0;
        }
        if !improved {
            return Minimum { x, f, iterations: it, converged: f < opts.f_target };
        }
    }
    Minimum { x, f, iterations: opts.max_iter, converged: f < opts.f_target }
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major `n x n`).
pub fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

/// Least-squares solution of `a x = b` (row-major `m x n`) by Householder QR
/// with column pivoting. Columns beyond the numerical rank get zero.
/// Returns `(x, rank)`.
pub fn lstsq(a: &[f64], b: &[f64], m: usize, n: usize) -> (Vec<f64>, usize) {
    let mut q = a.to_vec();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| (0..m).map(|i| q[i * n + j] * q[i * n + j]).sum()).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let steps = m.min(n);
    let mut rank = 0;
    for k in 0..steps {
        let (p, &best) = norms[k..].iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let p = p + k;
        if best <= 1e-24 * max_norm {
            break;
        }
        if p != k {
            for i in 0..m {
                q.swap(i * n + k, i * n + p);
            }
            norms.swap(k, p);
            perm.swap(k, p);
        }
        let col_norm = math::sqrt((k..m).map(|i| q[i * n + k] * q[i * n + k]).sum::<f64>());
        if col_norm <= 1e-12 * math::sqrt(max_norm) {
            break;
        }
        let alpha = if q[k * n + k] > 0.0 { -col_norm } else { col_norm };
        let mut v: Vec<f64> = (k..m).map(|i| q[i * n + k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * q[i * n + j]).sum::<f64>() * 2.0 / vv;
                for i in k..m {
                    q[i * n + j] -= s * v[i - k];
                }
            }
            let s: f64 = (k..m).map(|i| v[i - k] * rhs[i]).sum::<f64>() * 2.0 / vv;
            for i in k..m {
                rhs[i] -= s * v[i - k];
            }
        }
        for j in k + 1..n {
            norms[j] = (k + 1..m).map(|i| q[i * n + j] * q[i * n + j]).sum();
        }
        rank += 1;
    }
    let mut y = alloc::vec![0.0; n];
    for i in (0..rank).rev() {
        let mut s = rhs[i];
        for j in i + 1..rank {
            s -= q[i * n + j] * y[j];
        }
        y[i] = s / q[i * n + i];
    }
    let mut x = alloc::vec![0.0; n];
    for (i, &p) in perm.iter().enumerate() {
        x[p] = y[i];
    }
    (x, rank)
}

/// Numerical rank of a row-major `m x n` matrix: the number of diagonal
/// entries of its column-pivoted QR factor above `tol` times the largest.
pub fn numerical_rank(a: &[f64], m: usize, n: usize, tol: f64) -> usize {
    let mut q = a.to_vec();
    let mut r00 = 0.0;
    for k in 0..m.min(n) {
        let norm = |q: &[f64], j: usize| (k..m).map(|i| q[i * n + j] * q[i * n + j]).sum::<f64>();
        let (p, best) = (k..n).map(|j| (j, norm(&q, j))).max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let col = math::sqrt(best);
        if k == 0 {
            r00 = col;
        }
        if col <= tol * r00 || col == 0.0 {
            return k;
        }
        for i in 0..m {
            q.swap(i * n + k, i * n + p);
        }
        let alpha = if q[k * n + k] > 0.0 { -col } else { col };
        let mut v: Vec<f64> = (k..m).map(|i| q[i * n + k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * q[i * n + j]).sum::<f64>() * 2.0 / vv;
                for i in k..m {
                    q[i * n + j] -= s * v[i - k];
                }
            }
        }
    }
    m.min(n)
}

/// Eigenvalues of a symmetric matrix (row-major `n x n`) by cyclic Jacobi
/// rotations, ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut a = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j] * a[i * n + j]).sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_rosenbrock() {
        let res = lbfgs(
            &[-1.2, 1.0],
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
            },
            LbfgsOptions::default(),
        );
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lm_reaches_zero_residual() {
        // Circle intersection: |x| = 1, x0 = 0.6.
        let res = levenberg_marquardt(
            &[0.2, 0.3],
            2,
            |x, r, j| {
                r[0] = x[0] * x[0] + x[1] * x[1] - 1.0;
                r[1] = x[0] - 0.6;
                j.copy_from_slice(&[2.0 * x[0], 2.0 * x[1], 1.0, 0.0]);
            },
            |_| true,
            LmOptions::default(),
        );
        assert!(res.f < 1e-26);
        assert!((res.x[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn lstsq_rank_deficient() {
        // Columns 0 and 2 identical.
        let a = [1.0, 2.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let b = [4.0, 1.0, 3.0];
        let (x, rank) = lstsq(&a, &b, 3, 3);
        assert_eq!(rank, 2);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = [2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0];
        let ev = symmetric_eigenvalues(&a, 3);
        assert!((ev[0] - 1.0).abs() < 1e-13 && (ev[1] - 3.0).abs() < 1e-13 && (ev[2] - 5.0).abs() < 1e-13);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0], 2).is_none());
    }
}
