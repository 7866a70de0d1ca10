//! Periodic spectral operations on uniform grids of `[0, 2pi)` and the type-I sine transform.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// FFT-backed operator set for one periodic grid size.
#[derive(Clone)]
pub struct Periodic {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Periodic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Periodic").field("n", &self.n).finish()
    }
}

impl Periodic {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "periodic grid needs at least two points");
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| k as f64 * self.step()).collect()
    }

    /// Signed wavenumber of FFT slot `k`; the Nyquist slot reports `+n/2`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        if 2 * k <= self.n {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }

    fn is_nyquist(&self, k: usize) -> bool {
        self.n.is_multiple_of(2) && 2 * k == self.n
    }

    /// Normalized spectrum `c_k = (1/n) sum_j v_j exp(-i k theta_j)`.
    pub fn spectrum(&self, v: &[f64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Inverse of [`Periodic::spectrum`], keeping the real part.
    pub fn synthesize(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }

    fn apply(&self, v: &[f64], mult: impl Fn(usize, f64, bool) -> Complex64) -> Vec<f64> {
        let mut c = self.spectrum(v);
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= mult(k, self.wavenumber(k), self.is_nyquist(k));
        }
        self.synthesize(c)
    }

    /// `order`-th derivative; the Nyquist mode is dropped for odd orders.
    pub fn derivative(&self, v: &[f64], order: u32) -> Vec<f64> {
        self.apply(v, |_, m, nyq| {
            if nyq && order % 2 == 1 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, m).powu(order)
            }
        })
    }

    /// Samples of `v(theta + s)` for the trigonometric interpolant of `v`.
    pub fn shift(&self, v: &[f64], s: f64) -> Vec<f64> {
        self.apply(v, |_, m, nyq| {
            if nyq {
                Complex64::new((m * s).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, m * s)
            }
        })
    }

    /// Zero-mean antiderivative of `v - mean(v)`, together with `mean(v)`.
    pub fn antiderivative(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let mut c = self.spectrum(v);
        let mean = c[0].re;
        c[0] = Complex64::new(0.0, 0.0);
        for k in 1..self.n {
            if self.is_nyquist(k) {
                c[k] = Complex64::new(0.0, 0.0);
            } else {
                c[k] /= Complex64::new(0.0, self.wavenumber(k));
            }
        }
        (self.synthesize(c), mean)
    }

    /// Evaluates the trigonometric interpolant with spectrum `c` at an arbitrary angle.
    pub fn eval(&self, c: &[Complex64], theta: f64) -> f64 {
        let mut s = c[0].re;
        for (k, ck) in c.iter().enumerate().skip(1) {
            let m = self.wavenumber(k);
            if self.is_nyquist(k) {
                s += ck.re * (m * theta).cos();
            } else {
                s += (ck * Complex64::from_polar(1.0, m * theta)).re;
            }
        }
        s
    }

    /// Interpolant value and derivative at an arbitrary angle.
    pub fn eval_with_derivative(&self, c: &[Complex64], theta: f64) -> (f64, f64) {
        let (mut s, mut d) = (c[0].re, 0.0);
        for (k, ck) in c.iter().enumerate().skip(1) {
            let m = self.wavenumber(k);
            if self.is_nyquist(k) {
                s += ck.re * (m * theta).cos();
                d -= m * ck.re * (m * theta).sin();
            } else {
                let z = ck * Complex64::from_polar(1.0, m * theta);
                s += z.re;
                d -= m * z.im;
            }
        }
        (s, d)
    }

    /// Real cosine/sine amplitudes: `v = a0 + sum_m (a_m cos m t + b_m sin m t)`, `m = 1..=n/2`.
    pub fn real_modes(&self, v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let c = self.spectrum(v);
        let half = self.n / 2;
        let mut a = vec![0.0; half];
        let mut b = vec![0.0; half];
        for m in 1..=half {
            if self.is_nyquist(m) {
                a[m - 1] = c[m].re;
            } else {
                a[m - 1] = 2.0 * c[m].re;
                b[m - 1] = -2.0 * c[m].im;
            }
        }
        (c[0].re, a, b)
    }
}

/// Type-I discrete sine transform of length `n`: `S_k = sum_j v_j sin(pi j k / (n+1))`.
#[derive(Clone)]
pub struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dst1 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dst1").field("n", &self.n).finish()
    }
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let size = 2 * (self.n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (j, &x) in v.iter().enumerate() {
            buf[j + 1] = Complex64::new(x, 0.0);
            buf[size - 1 - j] = Complex64::new(-x, 0.0);
        }
        self.fft.process(&mut buf);
        (1..=self.n).map(|k| -0.5 * buf[k].im).collect()
    }

    pub fn inverse(&self, s: &[f64]) -> Vec<f64> {
        let scale = 2.0 / (self.n + 1) as f64;
        self.forward(s).into_iter().map(|x| x * scale).collect()
    }
}

/// Fails if the angular grid cannot resolve products of modes up to `n_modes` without aliasing.
pub fn check_dealiasing(n_theta: usize, n_modes: usize) -> Result<()> {
    if n_theta < 4 * n_modes + 4 {
        return Err(Error::Parameter(format!(
            "angular grid of {n_theta} points aliases Galerkin products with N = {n_modes}; need at least {}",
            4 * n_modes + 4
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        Periodic::new(n).nodes().into_iter().map(f).collect()
    }

    #[test]
    fn derivative_of_trig_polynomial() {
        let p = Periodic::new(32);
        let v = sample(32, |t| (3.0 * t).sin() + 0.5 * (t).cos());
        let d = p.derivative(&v, 1);
        let ex = sample(32, |t| 3.0 * (3.0 * t).cos() - 0.5 * t.sin());
        for (a, b) in d.iter().zip(&ex) {
            assert!((a - b).abs() < 1e-12);
        }
        let d2 = p.derivative(&v, 2);
        let ex2 = sample(32, |t| -9.0 * (3.0 * t).sin() - 0.5 * t.cos());
        for (a, b) in d2.iter().zip(&ex2) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn shift_and_eval() {
        let p = Periodic::new(24);
        let v = sample(24, |t| (2.0 * t).cos() + 0.3);
        let s = p.shift(&v, 0.7);
        let ex = sample(24, |t| (2.0 * (t + 0.7)).cos() + 0.3);
        for (a, b) in s.iter().zip(&ex) {
            assert!((a - b).abs() < 1e-13);
        }
        let c = p.spectrum(&v);
        let (val, der) = p.eval_with_derivative(&c, 1.234);
        assert!((val - ((2.0f64 * 1.234).cos() + 0.3)).abs() < 1e-13);
        assert!((der + 2.0 * (2.0f64 * 1.234).sin()).abs() < 1e-12);
    }

    #[test]
    fn antiderivative_removes_mean() {
        let p = Periodic::new(16);
        let v = sample(16, |t| 2.0 + t.cos());
        let (g, mean) = p.antiderivative(&v);
        assert!((mean - 2.0).abs() < 1e-14);
        let ex = sample(16, |t| t.sin());
        for (a, b) in g.iter().zip(&ex) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn real_modes_recover_amplitudes() {
        let p = Periodic::new(16);
        let v = sample(16, |t| 1.0 + 2.0 * (3.0 * t).cos() - 0.5 * (5.0 * t).sin());
        let (a0, a, b) = p.real_modes(&v);
        assert!((a0 - 1.0).abs() < 1e-14);
        assert!((a[2] - 2.0).abs() < 1e-14);
        assert!((b[4] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn dst_matches_direct_sum_and_inverts() {
        let n = 7;
        let t = Dst1::new(n);
        let v: Vec<f64> = (0..n).map(|j| (j as f64 * 0.37).sin() + 0.1 * j as f64).collect();
        let s = t.forward(&v);
        for k in 1..=n {
            let direct: f64 = (1..=n)
                .map(|j| v[j - 1] * (PI * (j * k) as f64 / (n + 1) as f64).sin())
                .sum();
            assert!((s[k - 1] - direct).abs() < 1e-12);
        }
        let back = t.inverse(&s);
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn aliasing_guard() {
        assert!(check_dealiasing(132, 32).is_ok());
        assert!(check_dealiasing(100, 32).is_err());
    }
}
