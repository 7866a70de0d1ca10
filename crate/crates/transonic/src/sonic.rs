//! Sonic curve `r = s(theta)` of planar fields and sonic surface `r = chi(x3)` of
//! axisymmetric fields.

use rayon::prelude::*;
use serde::Serialize;

use crate::axisym::AxisymField;
use crate::background::BackgroundProfile;
use crate::error::{Error, Result};
use crate::field2d::{theta_grid, EulerField2D, FieldInterp};
use crate::io::Csv;
use crate::numerics::{cubic_weights, d1_o4, stencil_start};

/// Roots are polished until the Newton step falls below this.
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct SonicCurve {
    pub theta_grid: Vec<f64>,
    pub s: Vec<f64>,
    pub s_prime: Vec<f64>,
    /// Reference radius the deviations are measured from.
    pub r_ref: f64,
    pub max_dev: f64,
    pub max_dev_prime: f64,
    /// `max (|s - r_ref| + |s'|)` over the nodes.
    pub c1_deviation: f64,
    pub max_root_residual: f64,
    /// Max gap between `s'` and a centered difference of `s`.
    pub derivative_consistency: f64,
    /// `min |U . t| / |U|` at the sonic nodes, `t` the unit tangent of the curve.
    pub nonexceptional_margin: f64,
}

impl SonicCurve {
    pub fn to_csv(&self) -> String {
        let mut c = Csv::new(&["theta", "s", "s_prime"]);
        for k in 0..self.s.len() {
            c.row(&[self.theta_grid[k], self.s[k], self.s_prime[k]]);
        }
        c.finish()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SonicSurface {
    pub x3_grid: Vec<f64>,
    pub chi: Vec<f64>,
    pub chi_prime: Vec<f64>,
    /// Reference radius the deviations are measured from.
    pub r_ref: f64,
    pub max_dev: f64,
    /// `max |chi - r_ref|` at `x3 = +-L/2` and at `x3 = +-L`.
    pub dev_half: f64,
    pub dev_end: f64,
    /// `max |chi - r_ref|` over `|x3| >= L/2`.
    pub tail_dev: f64,
    pub max_root_residual: f64,
    /// `min |U_tangential| / |U|` at the sonic nodes (swirl plus meridional tangential part).
    pub nonexceptional_margin: f64,
}

impl SonicSurface {
    pub fn to_csv(&self) -> String {
        let mut c = Csv::new(&["x3", "chi"]);
        for k in 0..self.chi.len() {
            c.row(&[self.x3_grid[k], self.chi[k]]);
        }
        c.finish()
    }
}

/// Mach number squared and its gradient from velocity, Bernoulli function and their gradients.
/// Each entry is `(value, d_a, d_b)`.
fn mach_sq_grad(u: &[(f64, f64, f64)], b: (f64, f64, f64), gamma: f64) -> Result<(f64, f64, f64)> {
    let q = u.iter().map(|v| v.0 * v.0).sum::<f64>();
    let qa = 2.0 * u.iter().map(|v| v.0 * v.1).sum::<f64>();
    let qb = 2.0 * u.iter().map(|v| v.0 * v.2).sum::<f64>();
    let c2 = (gamma - 1.0) * (b.0 - 0.5 * q);
    if !(c2 > 0.0) {
        return Err(Error::Vacuum("B - |U|^2/2 <= 0 while locating the sonic set".into()));
    }
    let ca = (gamma - 1.0) * (b.1 - 0.5 * qa);
    let cb = (gamma - 1.0) * (b.2 - 0.5 * qb);
    Ok((q / c2, (qa * c2 - q * ca) / (c2 * c2), (qb * c2 - q * cb) / (c2 * c2)))
}

/// Unique root of `|M|^2 - 1` on a column where `|M|^2` decreases through 1. `m` returns
/// `(|M|^2, d_r |M|^2)`; `at` names the column in errors.
fn column_root(m: impl Fn(f64) -> Result<(f64, f64)>, nodes: &[f64], at: &str) -> Result<(f64, f64)> {
    let vals: Vec<(f64, f64)> = nodes.iter().map(|&r| m(r)).collect::<Result<_>>()?;
    let (first, last) = (vals[0].0 - 1.0, vals[vals.len() - 1].0 - 1.0);
    if !(first > 0.0 && last < 0.0) {
        return Err(Error::Geometry(format!(
            "no sonic bracket at {at}: |M|^2 - 1 = {first:e} at r0 and {last:e} at r1"
        )));
    }
    if let Some(i) = (0..nodes.len()).find(|&i| !(vals[i].1 < 0.0)) {
        return Err(Error::Geometry(format!(
            "|M|^2 is not decreasing in r at {at}, r = {} (d_r |M|^2 = {:e})",
            nodes[i], vals[i].1
        )));
    }
    let i = (0..nodes.len() - 1).find(|&i| vals[i + 1].0 <= 1.0).unwrap();
    let (mut lo, mut hi) = (nodes[i], nodes[i + 1]);
    while hi - lo > 1e-9 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if m(mid)?.0 > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..20 {
        let (v, d) = m(r)?;
        let step = (v - 1.0) / d;
        r = (r - step).clamp(nodes[i], nodes[i + 1]);
        if step.abs() <= ROOT_TOL {
            break;
        }
    }
    Ok((r, (m(r)?.0 - 1.0).abs()))
}

/// Sonic curve of a planar field, deviations taken from `r_ref`: per angular node, bisection plus Newton polish on the
/// cubic-in-r, trigonometric-in-theta interpolant of `|M|^2`.
pub fn locate_sonic_2d(f: &EulerField2D, r_ref: f64) -> Result<SonicCurve> {
    let (iu1, iu2, ib) = (FieldInterp::new(&f.u1, &f.r_grid), FieldInterp::new(&f.u2, &f.r_grid), FieldInterp::new(&f.b, &f.r_grid));
    let gamma = f.gamma;
    let m = |r: f64, t: f64| mach_sq_grad(&[iu1.eval_grad(r, t), iu2.eval_grad(r, t)], ib.eval_grad(r, t), gamma);
    let th = theta_grid(f.nt());
    let cols: Vec<(f64, f64, f64, f64)> = th
        .par_iter()
        .map(|&t| {
            let (s, res) = column_root(|r| m(r, t).map(|v| (v.0, v.1)), &f.r_grid, &format!("theta = {t}"))?;
            let (_, mr, mt) = m(s, t)?;
            let sp = -mt / mr;
            let (u1, u2) = (iu1.eval(s, t), iu2.eval(s, t));
            let tangential = (u1 * sp + u2 * s).abs() / (sp * sp + s * s).sqrt();
            Ok((s, sp, res, tangential / (u1 * u1 + u2 * u2).sqrt()))
        })
        .collect::<Result<_>>()?;
    let s: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let s_prime: Vec<f64> = cols.iter().map(|c| c.1).collect();
    let n = s.len();
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let derivative_consistency = (0..n)
        .map(|k| ((s[(k + 1) % n] - s[(k + n - 1) % n]) / (2.0 * h) - s_prime[k]).abs())
        .fold(0.0, f64::max);
    let max_dev = s.iter().map(|v| (v - r_ref).abs()).fold(0.0, f64::max);
    Ok(SonicCurve {
        max_dev,
        max_dev_prime: s_prime.iter().map(|v| v.abs()).fold(0.0, f64::max),
        c1_deviation: (0..n).map(|k| (s[k] - r_ref).abs() + s_prime[k].abs()).fold(0.0, f64::max),
        max_root_residual: cols.iter().map(|c| c.2).fold(0.0, f64::max),
        derivative_consistency,
        nonexceptional_margin: cols.iter().map(|c| c.3).fold(f64::INFINITY, f64::min),
        theta_grid: th,
        s,
        s_prime,
        r_ref,
    })
}

/// Cubic Lagrange value and derivative of a column sampled on a uniform grid.
fn column_eval(v: &[f64], r0: f64, h: f64, r: f64) -> (f64, f64) {
    let s = stencil_start(r0, h, v.len(), r);
    let (w, dw) = cubic_weights(r0, h, s, r);
    (0..4).fold((0.0, 0.0), |(a, b), j| (a + w[j] * v[s + j], b + dw[j] * v[s + j]))
}

/// Sonic radius of the sampled background under the same cubic interpolation used for the
/// fields. Deviations measured against it are free of the grid floor `|r_c(grid) - r_c|`.
pub fn discrete_sonic_radius(bg: &BackgroundProfile) -> Result<f64> {
    let (r0, h) = (bg.r0, bg.h());
    let b = vec![bg.gas.b0; bg.len()];
    let ev = |v: &[f64], r: f64| {
        let (a, d) = column_eval(v, r0, h, r);
        (a, d, 0.0)
    };
    let m = |r: f64| mach_sq_grad(&[ev(&bg.u_b1, r), ev(&bg.u_b2, r)], ev(&b, r), bg.gas.gamma).map(|v| (v.0, v.1));
    Ok(column_root(m, &bg.r_grid, "the background")?.0)
}

/// Sonic surface of an axisymmetric field, one root per axial node; deviations are taken
/// from `r_ref`.
pub fn locate_sonic_axisym(f: &AxisymField, r_ref: f64) -> Result<SonicSurface> {
    let (r0, h) = (f.r_grid[0], f.hr());
    let cols: Vec<(f64, f64, (f64, f64, f64))> = (0..f.nx())
        .into_par_iter()
        .map(|k| {
            let col = |a: &ndarray::Array2<f64>| a.column(k).to_vec();
            let (u1, u2, u3, b) = (col(&f.u1), col(&f.u2), col(&f.u3), col(&f.b));
            let ev = |v: &[f64], r: f64| {
                let (a, d) = column_eval(v, r0, h, r);
                (a, d, 0.0)
            };
            let m = |r: f64| {
                mach_sq_grad(&[ev(&u1, r), ev(&u2, r), ev(&u3, r)], ev(&b, r), f.gamma).map(|v| (v.0, v.1))
            };
            let (chi, res) = column_root(m, &f.r_grid, &format!("x3 = {}", f.x_grid[k]))?;
            let (v1, v2, v3) = (ev(&u1, chi).0, ev(&u2, chi).0, ev(&u3, chi).0);
            Ok((chi, res, (v1, v2, v3)))
        })
        .collect::<Result<_>>()?;
    let chi: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let chi_prime = d1_o4(&chi, f.hx());
    let margin = cols
        .iter()
        .zip(&chi_prime)
        .map(|((_, _, (v1, v2, v3)), cp)| {
            // meridional tangent (chi', 1) in (r, x3)
            let along = (v1 * cp + v3) / (cp * cp + 1.0).sqrt();
            (v2 * v2 + along * along).sqrt() / (v1 * v1 + v2 * v2 + v3 * v3).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    let l = f.half_length();
    let nx = f.nx();
    let dev: Vec<f64> = chi.iter().map(|c| (c - r_ref).abs()).collect();
    let col = |x: f64| ((x + l) / f.hx()).round() as usize;
    let at = |x: f64| dev[col(x)].max(dev[col(-x)]);
    Ok(SonicSurface {
        max_dev: dev.iter().cloned().fold(0.0, f64::max),
        dev_half: at(0.5 * l),
        dev_end: dev[0].max(dev[nx - 1]),
        tail_dev: f.x_grid.iter().zip(&dev).filter(|(x, _)| x.abs() >= 0.5 * l - 1e-12).map(|(_, d)| *d).fold(0.0, f64::max),
        max_root_residual: cols.iter().map(|c| c.1).fold(0.0, f64::max),
        nonexceptional_margin: margin,
        x3_grid: f.x_grid.clone(),
        chi,
        chi_prime,
        r_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::*;

    fn asset(n: usize) -> BackgroundProfile {
        solve_background(&asset_gas(), ASSET_R0, ASSET_R1, n).unwrap()
    }

    #[test]
    fn background_curve_is_the_sonic_circle() {
        let bg = asset(257);
        let c = locate_sonic_2d(&EulerField2D::background(&bg, 16), bg.r_c).unwrap();
        assert!(c.max_dev < 1e-9, "{}", c.max_dev);
        assert!(c.max_dev_prime < 1e-12);
        assert!(c.max_root_residual <= 1e-12);
        // purely radial flow would be exceptional; the swirl keeps the velocity off the normal
        assert!(c.nonexceptional_margin > 0.5);
    }

    #[test]
    fn tilted_curve_and_its_slope_are_recovered() {
        // impose |M|^2 = 1 on r = r_c + a cos(theta) by rescaling the speed with a known factor
        let bg = asset(257);
        let nt = 32;
        let a = 0.01;
        let mut f = EulerField2D::background(&bg, nt);
        let th = theta_grid(nt);
        let gm = bg.gas.gamma;
        for i in 0..bg.len() {
            for k in 0..nt {
                let r = bg.r_grid[i];
                // target |M|^2 = exp(-(r - r_c - a cos theta)), sets the speed at fixed B
                let m2 = (-(r - bg.r_c - a * th[k].cos())).exp();
                let q = 2.0 * (gm - 1.0) * bg.gas.b0 * m2 / (2.0 + (gm - 1.0) * m2);
                let scale = (q / (bg.u_b1[i].powi(2) + bg.u_b2[i].powi(2))).sqrt();
                f.u1[[i, k]] = bg.u_b1[i] * scale;
                f.u2[[i, k]] = bg.u_b2[i] * scale;
            }
        }
        let c = locate_sonic_2d(&f, bg.r_c).unwrap();
        for k in 0..nt {
            assert!((c.s[k] - bg.r_c - a * th[k].cos()).abs() < 1e-8);
            assert!((c.s_prime[k] + a * th[k].sin()).abs() < 1e-7);
        }
        // centered differences of a cos(theta) are off by a h^2 / 6
        let h = 2.0 * std::f64::consts::PI / nt as f64;
        assert!(c.derivative_consistency < 0.2 * a * h * h, "{}", c.derivative_consistency);
        let csv = c.to_csv();
        assert!(csv.starts_with("theta,s,s_prime\n"));
        assert_eq!(csv.lines().count(), nt + 1);
    }

    #[test]
    fn subsonic_field_has_no_bracket() {
        let bg = asset(65);
        let mut f = EulerField2D::background(&bg, 8);
        f.u1.mapv_inplace(|v| 0.3 * v);
        f.u2.mapv_inplace(|v| 0.3 * v);
        let e = locate_sonic_2d(&f, bg.r_c).unwrap_err();
        assert!(matches!(e, Error::Geometry(_)), "{e}");
        assert!(e.to_string().contains("theta"));
    }

    #[test]
    fn non_monotone_column_is_rejected() {
        let bg = asset(65);
        let mut f = EulerField2D::background(&bg, 8);
        let n = bg.len();
        // reverse the trend near r1 only, keeping the bracket
        for k in 0..8 {
            f.u2[[n - 3, k]] *= 0.9;
        }
        let e = locate_sonic_2d(&f, bg.r_c).unwrap_err();
        assert!(matches!(e, Error::Geometry(_)), "{e}");
    }

    #[test]
    fn axisymmetric_background_surface_is_the_cylinder() {
        let bg = asset(129);
        let x: Vec<f64> = (0..33).map(|k| -4.0 + 0.25 * k as f64).collect();
        let f = AxisymField::background(&bg, &x);
        let s = locate_sonic_axisym(&f, bg.r_c).unwrap();
        assert!(s.max_dev < 1e-8, "{}", s.max_dev);
        let rd = discrete_sonic_radius(&bg).unwrap();
        assert!((rd - bg.r_c).abs() < 1e-8);
        assert!(locate_sonic_axisym(&f, rd).unwrap().max_dev < 1e-14);
        assert!(s.dev_end <= s.max_dev && s.tail_dev <= s.max_dev);
        assert!(s.chi_prime.iter().all(|v| v.abs() < 1e-9));
        assert!(s.nonexceptional_margin > 0.5);
        assert_eq!(s.to_csv().lines().count(), 34);
    }
}
