//! Small numerical kernels shared by the solvers.

/// Four-point Gauss-Legendre rule on [-1, 1].
pub const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
pub const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gauss4<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let s = 0.5 * (b - a);
    GL4_NODES.iter().zip(GL4_WEIGHTS.iter()).map(|(x, w)| w * f(m + s * x)).sum::<f64>() * s
}

/// Uniform grid with `n` nodes on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()
}

/// First derivative, second order: centered inside, one-sided three-point stencils at the ends.
pub fn d1_o2(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 3);
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d
}

/// Second derivative, second order: centered inside, one-sided four-point stencils at the ends.
pub fn d2_o2(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 4);
    let h2 = h * h;
    let mut d = vec![0.0; n];
    d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
    d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    d
}

/// First derivative, fourth order; five-point one-sided stencils near the ends.
pub fn d1_o4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 5);
    let mut d = vec![0.0; n];
    let s = 12.0 * h;
    d[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / s;
    d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / s;
    for i in 2..n - 2 {
        d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / s;
    }
    let m = n - 1;
    d[m] = (25.0 * v[m] - 48.0 * v[m - 1] + 36.0 * v[m - 2] - 16.0 * v[m - 3] + 3.0 * v[m - 4]) / s;
    d[m - 1] = (3.0 * v[m] + 10.0 * v[m - 1] - 18.0 * v[m - 2] + 6.0 * v[m - 3] - v[m - 4]) / s;
    d
}

/// Second derivative, fourth order; six-point one-sided stencils near the ends.
pub fn d2_o4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 6);
    let mut d = vec![0.0; n];
    let s = 12.0 * h * h;
    d[0] = (45.0 * v[0] - 154.0 * v[1] + 214.0 * v[2] - 156.0 * v[3] + 61.0 * v[4] - 10.0 * v[5]) / s;
    d[1] = (10.0 * v[0] - 15.0 * v[1] - 4.0 * v[2] + 14.0 * v[3] - 6.0 * v[4] + v[5]) / s;
    for i in 2..n - 2 {
        d[i] = (-v[i - 2] + 16.0 * v[i - 1] - 30.0 * v[i] + 16.0 * v[i + 1] - v[i + 2]) / s;
    }
    let m = n - 1;
    d[m] = (45.0 * v[m] - 154.0 * v[m - 1] + 214.0 * v[m - 2] - 156.0 * v[m - 3] + 61.0 * v[m - 4]
        - 10.0 * v[m - 5])
        / s;
    d[m - 1] = (10.0 * v[m] - 15.0 * v[m - 1] - 4.0 * v[m - 2] + 14.0 * v[m - 3] - 6.0 * v[m - 4]
        + v[m - 5])
        / s;
    d
}

/// Cumulative integral `I_i = int_{x_0}^{x_i} v` on a uniform grid, fourth order.
pub fn cumulative_o4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 4);
    let mut out = vec![0.0; n];
    for i in 0..n - 1 {
        // cubic through four neighbouring nodes, integrated over [x_i, x_{i+1}]
        let piece = if i == 0 {
            h / 24.0 * (9.0 * v[0] + 19.0 * v[1] - 5.0 * v[2] + v[3])
        } else if i == n - 2 {
            h / 24.0 * (9.0 * v[n - 1] + 19.0 * v[n - 2] - 5.0 * v[n - 3] + v[n - 4])
        } else {
            h / 24.0 * (-v[i - 1] + 13.0 * v[i] + 13.0 * v[i + 1] - v[i + 2])
        };
        out[i + 1] = out[i] + piece;
    }
    out
}

/// Composite trapezoid weights times values on a uniform grid.
pub fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

/// Index of the first node of the four-point stencil around `x` on a uniform grid.
pub fn stencil_start(x0: f64, h: f64, n: usize, x: f64) -> usize {
    let k = ((x - x0) / h).floor() as isize - 1;
    k.clamp(0, n as isize - 4) as usize
}

/// Cubic Lagrange weights and derivative weights for nodes `x0 + (s..s+4) h` at `x`.
pub fn cubic_weights(x0: f64, h: f64, s: usize, x: f64) -> ([f64; 4], [f64; 4]) {
    let t = (x - x0) / h - s as f64;
    let nodes = [0.0, 1.0, 2.0, 3.0];
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for j in 0..4 {
        let mut p = 1.0;
        let mut denom = 1.0;
        for m in 0..4 {
            if m != j {
                p *= t - nodes[m];
                denom *= nodes[j] - nodes[m];
            }
        }
        w[j] = p / denom;
        let mut dsum = 0.0;
        for skip in 0..4 {
            if skip == j {
                continue;
            }
            let mut q = 1.0;
            for m in 0..4 {
                if m != j && m != skip {
                    q *= t - nodes[m];
                }
            }
            dsum += q;
        }
        dw[j] = dsum / denom / h;
    }
    (w, dw)
}

/// Solves a tridiagonal system in place (Thomas algorithm); `lower[0]` and `upper[n-1]` are unused.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Smooth bump `amp * exp(1 - 1/(1 - s^2))`, `s = (x - center)/width`, exactly zero for `|s| >= 1`.
pub fn bump(x: f64, amp: f64, center: f64, width: f64) -> f64 {
    let s = (x - center) / width;
    if s.abs() >= 1.0 {
        0.0
    } else {
        amp * (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Least-squares slope of `ln(err)` against `ln(h)` between consecutive refinements.
pub fn observed_order(err_coarse: f64, err_fine: f64, refinement: f64) -> f64 {
    (err_coarse / err_fine).ln() / refinement.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_orders() {
        let errs: Vec<(f64, f64, f64, f64)> = [21usize, 41, 81]
            .iter()
            .map(|&n| {
                let x = linspace(0.0, 1.0, n);
                let h = x[1] - x[0];
                let v: Vec<f64> = x.iter().map(|t| (2.0 * t).sin()).collect();
                let e = |d: Vec<f64>, exact: &dyn Fn(f64) -> f64| {
                    max_abs(d.iter().zip(&x).map(|(a, t)| a - exact(*t)))
                };
                (
                    e(d1_o2(&v, h), &|t| 2.0 * (2.0 * t).cos()),
                    e(d2_o2(&v, h), &|t| -4.0 * (2.0 * t).sin()),
                    e(d1_o4(&v, h), &|t| 2.0 * (2.0 * t).cos()),
                    e(d2_o4(&v, h), &|t| -4.0 * (2.0 * t).sin()),
                )
            })
            .collect();
        let o = |a: f64, b: f64| observed_order(a, b, 2.0);
        assert!((o(errs[1].0, errs[2].0) - 2.0).abs() < 0.2);
        assert!((o(errs[1].1, errs[2].1) - 2.0).abs() < 0.3);
        assert!((o(errs[1].2, errs[2].2) - 4.0).abs() < 0.3);
        assert!((o(errs[1].3, errs[2].3) - 4.0).abs() < 0.4);
    }

    #[test]
    fn cumulative_integral_fourth_order() {
        let err = |n| {
            let x = linspace(0.0, 2.0, n);
            let v: Vec<f64> = x.iter().map(|t| t.exp()).collect();
            let c = cumulative_o4(&v, x[1] - x[0]);
            max_abs(c.iter().zip(&x).map(|(a, t)| a - (t.exp() - 1.0)))
        };
        let o = observed_order(err(41), err(81), 2.0);
        assert!(o > 3.7, "order {o}");
    }

    #[test]
    fn cubic_interpolation_exact_for_cubics() {
        let x0 = 0.5;
        let h = 0.1;
        let f = |x: f64| 1.0 - 2.0 * x + 0.3 * x * x * x;
        let df = |x: f64| -2.0 + 0.9 * x * x;
        let vals: Vec<f64> = (0..10).map(|i| f(x0 + h * i as f64)).collect();
        for &x in &[0.52, 0.77, 1.31, 1.4] {
            let s = stencil_start(x0, h, 10, x);
            let (w, dw) = cubic_weights(x0, h, s, x);
            let v: f64 = (0..4).map(|j| w[j] * vals[s + j]).sum();
            let d: f64 = (0..4).map(|j| dw[j] * vals[s + j]).sum();
            assert!((v - f(x)).abs() < 1e-13);
            assert!((d - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let lower = [0.0, 1.0, 2.0, -1.0];
        let diag = [4.0, 5.0, 6.0, 7.0];
        let upper = [1.0, -2.0, 0.5, 0.0];
        let x = [1.0, -1.0, 2.0, 0.5];
        let mut b = [0.0; 4];
        for i in 0..4 {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += lower[i] * x[i - 1];
            }
            if i < 3 {
                b[i] += upper[i] * x[i + 1];
            }
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut b);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn bump_has_compact_support() {
        assert_eq!(bump(1.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(bump(-3.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(bump(0.0, 2.0, 0.0, 1.0), 2.0);
        assert!(bump(0.99, 1.0, 0.0, 1.0) > 0.0);
    }
}
