//! Natural cubic spline interpolation on sorted knots.

use crate::scalar::Real;

/// Evaluates the natural cubic spline through `(xs[j], ys[j])` at every
/// integer abscissa `0..n`, writing into `out`.
///
/// `xs` must be strictly increasing and span `[0, n - 1]`; at least two knots
/// are required (two knots give the straight line through them).
pub fn natural_spline_on_grid<T: Real>(xs: &[T], ys: &[T], out: &mut [T]) {
    let k = xs.len();
    debug_assert!(k >= 2 && ys.len() == k);
    let second = second_derivatives(xs, ys);

    let mut seg = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let x = T::of_usize(i);
        while seg + 2 < k && x > xs[seg + 1] {
            seg += 1;
        }
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let six = T::lit(6.0);
        *o = a * ys[seg]
            + b * ys[seg + 1]
            + ((a * a * a - a) * second[seg] + (b * b * b - b) * second[seg + 1]) * h * h / six;
    }
}

/// Second derivatives at the knots with natural (zero-curvature) ends, via
/// the Thomas algorithm on the tridiagonal system.
fn second_derivatives<T: Real>(xs: &[T], ys: &[T]) -> Vec<T> {
    let k = xs.len();
    let mut m = vec![T::zero(); k];
    if k < 3 {
        return m;
    }
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    // Interior unknowns m[1..k-1]; forward sweep stores modified
    // super-diagonal in `c` and right-hand side in `d`.
    let n = k - 2;
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    for j in 0..n {
        let i = j + 1;
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let diag = two * (h0 + h1);
        let rhs = six * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        let (sub, sup) = (h0, h1);
        if j == 0 {
            c[j] = sup / diag;
            d[j] = rhs / diag;
        } else {
            let denom = diag - sub * c[j - 1];
            c[j] = sup / denom;
            d[j] = (rhs - sub * d[j - 1]) / denom;
        }
    }
    m[n] = d[n - 1];
    for j in (0..n - 1).rev() {
        m[j + 1] = d[j] - c[j] * m[j + 2];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_knots_is_linear() {
        let mut out = vec![0.0f64; 5];
        natural_spline_on_grid(&[0.0, 4.0], &[1.0, 9.0], &mut out);
        assert_eq!(out, vec![1.0, 3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn interpolates_knots_and_reproduces_lines() {
        let xs = [-3.0f64, 0.0, 2.0, 5.0, 9.0, 12.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let mut out = vec![0.0; 10];
        natural_spline_on_grid(&xs, &ys, &mut out);
        for (i, v) in out.iter().enumerate() {
            assert!((v - (2.0 * i as f64 - 1.0)).abs() < 1e-12);
        }
        let ys = [1.0, -2.0, 0.5, 3.0, -1.0, 2.0];
        natural_spline_on_grid(&xs, &ys, &mut out);
        assert!((out[0] + 2.0).abs() < 1e-12);
        assert!((out[2] - 0.5).abs() < 1e-12);
        assert!((out[5] - 3.0).abs() < 1e-12);
        assert!((out[9] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn close_to_smooth_function() {
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 * 5.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 15.0).sin()).collect();
        let mut out = vec![0.0; 101];
        natural_spline_on_grid(&xs, &ys, &mut out);
        for (i, v) in out.iter().enumerate().skip(10).take(80) {
            assert!((v - (i as f64 / 15.0).sin()).abs() < 1e-3, "at {i}");
        }
    }
}
