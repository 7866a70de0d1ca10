//! Flow fields on the annulus grid `r_grid x theta` and their diagnostics.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::background::BackgroundProfile;
use crate::error::{Error, Result};
use crate::gas::{density_from_bernoulli, GasParams};
use crate::fourier::Periodic;
use crate::io::Csv;
use crate::numerics::{cubic_weights, stencil_start};
use crate::spectral::{angular_derivative, l2_norm, radial_derivative_o4};

/// Velocities, Bernoulli and entropy functions on `nr x nt`.
#[derive(Debug, Clone)]
pub struct EulerField2D {
    pub gamma: f64,
    pub r_grid: Vec<f64>,
    pub u1: Array2<f64>,
    pub u2: Array2<f64>,
    pub b: Array2<f64>,
    pub a: Array2<f64>,
}

pub fn theta_grid(nt: usize) -> Vec<f64> {
    (0..nt).map(|k| 2.0 * PI * k as f64 / nt as f64).collect()
}

impl EulerField2D {
    /// The background flow repeated in angle.
    pub fn background(bg: &BackgroundProfile, nt: usize) -> Self {
        let nr = bg.len();
        Self {
            gamma: bg.gas.gamma,
            r_grid: bg.r_grid.clone(),
            u1: Array2::from_shape_fn((nr, nt), |(i, _)| bg.u_b1[i]),
            u2: Array2::from_shape_fn((nr, nt), |(i, _)| bg.u_b2[i]),
            b: Array2::from_elem((nr, nt), bg.gas.b0),
            a: Array2::from_elem((nr, nt), bg.gas.a0),
        }
    }

    pub fn nr(&self) -> usize {
        self.r_grid.len()
    }

    pub fn nt(&self) -> usize {
        self.u1.ncols()
    }

    pub fn h(&self) -> f64 {
        self.r_grid[1] - self.r_grid[0]
    }

    pub fn speed_sq(&self, i: usize, k: usize) -> f64 {
        let (u, v) = (self.u1[[i, k]], self.u2[[i, k]]);
        u * u + v * v
    }

    /// `c^2 = (gamma - 1)(B - |U|^2/2)`.
    pub fn c_sq(&self, i: usize, k: usize) -> Result<f64> {
        let c2 = (self.gamma - 1.0) * (self.b[[i, k]] - 0.5 * self.speed_sq(i, k));
        if c2 > 0.0 {
            Ok(c2)
        } else {
            Err(Error::Vacuum(format!("B - |U|^2/2 <= 0 at r = {}", self.r_grid[i])))
        }
    }

    pub fn density(&self) -> Result<Array2<f64>> {
        let mut rho = Array2::zeros(self.u1.dim());
        for ((i, k), v) in rho.indexed_iter_mut() {
            *v = density_from_bernoulli(self.speed_sq(i, k), self.b[[i, k]], self.a[[i, k]], self.gamma)?;
        }
        Ok(rho)
    }

    pub fn mach_sq(&self) -> Result<Array2<f64>> {
        let mut m = Array2::zeros(self.u1.dim());
        for ((i, k), v) in m.indexed_iter_mut() {
            *v = self.speed_sq(i, k) / self.c_sq(i, k)?;
        }
        Ok(m)
    }

    /// `max |U - U_b|` over both components.
    pub fn max_velocity_deviation(&self, bg: &BackgroundProfile) -> f64 {
        let mut d = 0.0f64;
        for ((i, k), &u) in self.u1.indexed_iter() {
            d = d.max((u - bg.u_b1[i]).abs()).max((self.u2[[i, k]] - bg.u_b2[i]).abs());
        }
        d
    }

    /// Columns `r, theta, U1, U2, B, A, rho, |M|^2, omega`.
    pub fn to_csv(&self) -> Result<String> {
        let rho = self.density()?;
        let m2 = self.mach_sq()?;
        let w = vorticity_2d(self);
        let th = theta_grid(self.nt());
        let mut c = Csv::new(&["r", "theta", "U1", "U2", "B", "A", "rho", "mach_sq", "vorticity"]);
        for i in 0..self.nr() {
            for k in 0..self.nt() {
                c.row(&[
                    self.r_grid[i],
                    th[k],
                    self.u1[[i, k]],
                    self.u2[[i, k]],
                    self.b[[i, k]],
                    self.a[[i, k]],
                    rho[[i, k]],
                    m2[[i, k]],
                    w[[i, k]],
                ]);
            }
        }
        Ok(c.finish())
    }
}

/// `omega = (d_r(r U2) - d_theta U1) / r`; fourth-order differences in `r` (matching
/// the velocity recovery from the potential), spectral in `theta`.
pub fn vorticity_2d(f: &EulerField2D) -> Array2<f64> {
    let ru2 = Array2::from_shape_fn(f.u2.dim(), |(i, k)| f.r_grid[i] * f.u2[[i, k]]);
    let d = radial_derivative_o4(&ru2, f.h());
    let t = angular_derivative(&f.u1, 1);
    Array2::from_shape_fn(f.u1.dim(), |(i, k)| (d[[i, k]] - t[[i, k]]) / f.r_grid[i])
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualNorms {
    pub mass_max: f64,
    pub mass_l2: f64,
    pub curl_max: f64,
    pub curl_l2: f64,
}

fn residual_arrays(f: &EulerField2D) -> Result<(Array2<f64>, Array2<f64>)> {
    let rho = f.density()?;
    let h = f.h();
    let m1 = Array2::from_shape_fn(rho.dim(), |(i, k)| f.r_grid[i] * rho[[i, k]] * f.u1[[i, k]]);
    let m2 = Array2::from_shape_fn(rho.dim(), |(i, k)| rho[[i, k]] * f.u2[[i, k]]);
    let mass = radial_derivative_o4(&m1, h) + angular_derivative(&m2, 1);
    let curl = vorticity_2d(f) * Array2::from_shape_fn(rho.dim(), |(i, _)| f.r_grid[i]);
    Ok((mass, curl))
}

fn norms(mass: &Array2<f64>, curl: &Array2<f64>, h: f64) -> ResidualNorms {
    let mx = |a: &Array2<f64>| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ResidualNorms { mass_max: mx(mass), mass_l2: l2_norm(mass, h), curl_max: mx(curl), curl_l2: l2_norm(curl, h) }
}

/// Residuals of `d_r(r rho U1) + d_theta(rho U2) = 0` and `d_r(r U2) - d_theta U1 = 0`.
pub fn euler_residual_2d(f: &EulerField2D) -> Result<ResidualNorms> {
    let (m, c) = residual_arrays(f)?;
    Ok(norms(&m, &c, f.h()))
}

/// Residuals of `f` minus those of a reference field on the same grid. With the background
/// as reference this removes the floor left by the background integrator.
pub fn euler_residual_excess(f: &EulerField2D, reference: &EulerField2D) -> Result<ResidualNorms> {
    let (m, c) = residual_arrays(f)?;
    let (m0, c0) = residual_arrays(reference)?;
    Ok(norms(&(m - m0), &(c - c0), f.h()))
}

/// Max of `U2 (d_theta U1 - d_r(r U2)) / r + d_r B - (B - |U|^2/2) / (A gamma) d_r A`, the
/// algebraic vorticity relation satisfied by steady rotational flows.
pub fn vorticity_relation_residual(f: &EulerField2D) -> f64 {
    let w = vorticity_2d(f);
    let h = f.h();
    let (br, ar) = (radial_derivative_o4(&f.b, h), radial_derivative_o4(&f.a, h));
    let mut m = 0.0f64;
    for ((i, k), &wv) in w.indexed_iter() {
        let head = f.b[[i, k]] - 0.5 * f.speed_sq(i, k);
        let v = -f.u2[[i, k]] * wv + br[[i, k]] - head / (f.a[[i, k]] * f.gamma) * ar[[i, k]];
        m = m.max(v.abs());
    }
    m
}

/// Cubic-in-radius, trigonometric-in-angle interpolant of a grid function.
pub struct FieldInterp {
    r0: f64,
    h: f64,
    nr: usize,
    per: Periodic,
    rows: Vec<Vec<Complex64>>,
}

impl FieldInterp {
    pub fn new(g: &Array2<f64>, r_grid: &[f64]) -> Self {
        let per = Periodic::new(g.ncols());
        let rows = g.rows().into_iter().map(|r| per.spectrum(&r.to_vec())).collect();
        Self { r0: r_grid[0], h: r_grid[1] - r_grid[0], nr: r_grid.len(), per, rows }
    }

    pub fn eval(&self, r: f64, theta: f64) -> f64 {
        let s = stencil_start(self.r0, self.h, self.nr, r);
        let (w, _) = cubic_weights(self.r0, self.h, s, r);
        (0..4).map(|j| w[j] * self.per.eval(&self.rows[s + j], theta)).sum()
    }

    /// Value and `(d_r, d_theta)` derivatives.
    pub fn eval_grad(&self, r: f64, theta: f64) -> (f64, f64, f64) {
        let s = stencil_start(self.r0, self.h, self.nr, r);
        let (w, dw) = cubic_weights(self.r0, self.h, s, r);
        let (mut v, mut dr, mut dt) = (0.0, 0.0, 0.0);
        for j in 0..4 {
            let (a, da) = self.per.eval_with_derivative(&self.rows[s + j], theta);
            v += w[j] * a;
            dr += dw[j] * a;
            dt += w[j] * da;
        }
        (v, dr, dt)
    }
}

/// Background state of the gas, used to check that `B` and `A` reduce to constants.
pub fn constant_state_defect(f: &EulerField2D, gas: &GasParams) -> (f64, f64) {
    let db = f.b.iter().fold(0.0f64, |m, v| m.max((v - gas.b0).abs()));
    let da = f.a.iter().fold(0.0f64, |m, v| m.max((v - gas.a0).abs()));
    (db, da)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::*;

    fn field(nr: usize, nt: usize, u1: impl Fn(f64, f64) -> f64, u2: impl Fn(f64, f64) -> f64) -> EulerField2D {
        let r: Vec<f64> = (0..nr).map(|i| 1.0 + i as f64 / (nr - 1) as f64).collect();
        let th = theta_grid(nt);
        EulerField2D {
            gamma: 1.4,
            r_grid: r.clone(),
            u1: Array2::from_shape_fn((nr, nt), |(i, k)| u1(r[i], th[k])),
            u2: Array2::from_shape_fn((nr, nt), |(i, k)| u2(r[i], th[k])),
            b: Array2::from_elem((nr, nt), 10.0),
            a: Array2::from_elem((nr, nt), 1.0),
        }
    }

    #[test]
    fn rigid_rotation_and_vortex() {
        let f = field(41, 16, |_, _| 0.0, |r, _| 0.7 * r);
        assert!(vorticity_2d(&f).iter().all(|w| (w - 1.4).abs() < 1e-12));
        let f = field(41, 16, |_, _| 0.0, |r, _| 0.9 / r);
        let w = vorticity_2d(&f);
        assert!(w.iter().all(|w| w.abs() < 1e-12));
    }

    #[test]
    fn background_is_irrotational_and_conservative() {
        let bg = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, 257).unwrap();
        let f = EulerField2D::background(&bg, 8);
        let res = euler_residual_2d(&f).unwrap();
        // r rho U1 and r U2 are constants of the background, so only the ODE error remains
        assert!(res.curl_max < 1e-6, "{res:?}");
        assert!(res.mass_max < 1e-6, "{res:?}");
        assert_eq!(f.max_velocity_deviation(&bg), 0.0);
    }

    #[test]
    fn noise_gives_order_one_residual() {
        let f = field(41, 16, |r, t| (r * 1e3).sin() * (t * 7.0).cos(), |r, t| (r * 777.0).cos() + (3.0 * t).sin());
        let res = euler_residual_2d(&f).unwrap();
        assert!(res.mass_max > 0.1 && res.curl_max > 0.1);
    }
}
