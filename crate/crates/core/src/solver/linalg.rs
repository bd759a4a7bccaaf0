use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for row-major `n x n` `a`, writing the solution to `b`.
/// Returns `false` when `a` is singular.
pub(crate) fn solve(a: &[f64], b: &mut [f64], n: usize) -> bool {
    let m = DMatrix::from_row_slice(n, n, a);
    let rhs = DVector::from_column_slice(b);
    match m.lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => {
            b.copy_from_slice(x.as_slice());
            true
        }
        _ => false,
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Levenberg-Marquardt for a square system `f(x) = 0` with a central
/// difference Jacobian. Returns the best point found and its sup-norm residual.
pub(crate) fn levenberg_marquardt(mut f: impl FnMut(&[f64]) -> Vec<f64>, x0: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let m = fx.len();
    if n == 0 || m == 0 {
        return (x, norm_inf(&fx));
    }
    let mut mu = 1e-9;
    let mut jac = vec![0.0; m * n];
    let mut slow = 0;
    for _ in 0..max_iter {
        if slow >= 8 {
            break;
        }
        if norm_inf(&fx) <= tol {
            break;
        }
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1e-3);
            let mut xp = x.clone();
            xp[j] += h;
            let fp = f(&xp);
            xp[j] = x[j] - h;
            let fm = f(&xp);
            for i in 0..m {
                jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut jtf = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                let ja = jac[i * n + a];
                if ja == 0.0 {
                    continue;
                }
                jtf[a] -= ja * fx[i];
                for b in 0..n {
                    jtj[a * n + b] += ja * jac[i * n + b];
                }
            }
        }
        let base = norm2(&fx);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[d * n + d] += mu * (jtj[d * n + d] + 1e-12);
            }
            let mut step = jtf.clone();
            if solve(&a, &mut step, n) {
                let xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                let fnew = f(&xn);
                if fnew.iter().all(|v| v.is_finite()) && norm2(&fnew) < base {
                    slow = if norm2(&fnew) > 0.999 * base { slow + 1 } else { 0 };
                    x = xn;
                    fx = fnew;
                    mu = (mu / 10.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let r = norm_inf(&fx);
    (x, r)
}

/// Roots of `f` on `[lo, hi]`: sign changes on a grid of width `step`, each
/// refined by safeguarded secant steps until the bracket is below `tol`.
pub(crate) fn grid_roots(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, step: f64, tol: f64) -> Vec<f64> {
    let n = libm_ceil((hi - lo) / step) as usize;
    let at = |i: usize| if i >= n { hi } else { lo + i as f64 * step };
    let mut roots = Vec::new();
    let mut a = at(0);
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for i in 1..=n {
        let b = at(i);
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.is_finite() && fb.is_finite() && (fa < 0.0) != (fb < 0.0) {
            roots.push(refine(&mut f, a, fa, b, fb, tol));
        }
        a = b;
        fa = fb;
    }
    roots
}

fn refine(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mut c = b - fb * (b - a) / (fb - fa);
        let mid = 0.5 * (a + b);
        if !(c > a.min(b) && c < a.max(b)) || !c.is_finite() {
            c = mid;
        }
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
        // Bisect when one end stalls.
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

fn libm_ceil(x: f64) -> f64 {
    num_traits::Float::ceil(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_linear_system() {
        let a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![3.0, 5.0];
        assert!(solve(&a, &mut b, 2));
        assert!((b[0] - 0.8).abs() < 1e-12 && (b[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn finds_nonlinear_root() {
        let (x, r) = levenberg_marquardt(|x| vec![x[0] * x[0] - 2.0, x[0] * x[1] - 1.0], vec![1.0, 1.0], 1e-13, 100);
        assert!(r <= 1e-13);
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_roots_of_cubic() {
        let roots = grid_roots(|x| (x - 0.25) * (x - 0.5) * (x - 0.7071), 0.0, 1.0, 1e-3, 1e-14);
        assert_eq!(roots.len(), 3);
        assert!((roots[2] - 0.7071).abs() < 1e-12);
    }
}
