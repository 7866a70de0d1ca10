//! Nonlinear irrotational transonic flows: Picard iteration on the perturbation potential.
//!
//! With `U = U_b + (d_r phi, (d_theta phi - d0)/r)` the flow is irrotational by construction
//! and mass conservation becomes a quasilinear mixed-type equation for the periodic `phi`.
//! Each step freezes the coefficients at the previous iterate and calls the spectral solver.

use ndarray::Array2;
use serde::Serialize;

use crate::background::{BackgroundProfile, BgPoint};
use crate::coeffs::{check_l0, CoeffProfile, MultiplierSet};
use crate::error::{Error, Result};
use crate::field2d::{theta_grid, EulerField2D};
use crate::fourier::Periodic;
use crate::numerics::d1_o4;
use crate::profile::Profile;
use crate::spectral::{
    angular_derivative, discrete_sobolev_norm, energy_diagnostic, from_characteristic_coords, solve_linearized,
    EnergyReport, LinearizedProblem, PhysicalOperator, SolveStats,
};

/// Boundary perturbation of size `epsilon` on the two circles. `b1`, `a1` perturb the
/// Bernoulli and entropy functions at `r1` and are only used by the rotational solver.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryPerturbation2D {
    pub epsilon: f64,
    pub g0: Profile,
    pub g1: Profile,
    pub b1: Profile,
    pub a1: Profile,
}

impl BoundaryPerturbation2D {
    pub fn irrotational(epsilon: f64, g0: Profile, g1: Profile) -> Self {
        Self { epsilon, g0, g1, b1: Profile::zero(), a1: Profile::zero() }
    }

    pub fn scaled(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Parameter(format!("epsilon must be a finite nonnegative number, got {}", self.epsilon)));
        }
        for (name, p) in [("g0", &self.g0), ("g1", &self.g1), ("B1", &self.b1), ("A1", &self.a1)] {
            if !p.is_periodic() {
                return Err(Error::Parameter(format!("{name} = {p} is not 2pi-periodic")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialControls {
    pub l0: f64,
    pub n_modes: usize,
    pub n_theta: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Trust radius is `trust_scale * sqrt(epsilon)` in the discrete `H^3` norm of `phi`.
    pub trust_scale: f64,
    pub max_continuation: usize,
}

impl PotentialControls {
    pub fn new(l0: f64, n_modes: usize) -> Self {
        Self { l0, n_modes, n_theta: 4 * n_modes + 4, max_iter: 100, tol: 1e-10, trust_scale: 10.0, max_continuation: 8 }
    }
}

/// Current potential together with the velocities it induces.
#[derive(Debug, Clone)]
pub struct PotentialIterate {
    pub r_grid: Vec<f64>,
    pub phi: Array2<f64>,
    pub u1: Array2<f64>,
    pub u2: Array2<f64>,
    pub d0: f64,
    pub iteration: usize,
    pub history: Vec<f64>,
}

impl PotentialIterate {
    pub fn to_field(&self, gas_b0: f64, gas_a0: f64, gamma: f64) -> EulerField2D {
        EulerField2D {
            gamma,
            r_grid: self.r_grid.clone(),
            u1: self.u1.clone(),
            u2: self.u2.clone(),
            b: Array2::from_elem(self.u1.dim(), gas_b0),
            a: Array2::from_elem(self.u1.dim(), gas_a0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// `H^1` norms of successive differences.
    pub increments: Vec<f64>,
    pub contraction_factors: Vec<f64>,
    pub max_contraction: f64,
    pub fixed_point_residual: f64,
    pub trust_radius: f64,
    pub max_h3_norm: f64,
    /// Epsilon values visited by continuation, ending with the requested one.
    pub continuation: Vec<f64>,
    pub last_solve: Option<SolveStats>,
    pub energy: Option<EnergyReport>,
    pub coefficient_deviation: [f64; 4],
    pub source_norm: f64,
}

/// `d0 = -epsilon r1 mean(g1)` on the angular grid.
pub fn circulation_correction(bc: &BoundaryPerturbation2D, r1: f64, nt: usize) -> f64 {
    let th = theta_grid(nt);
    let mean = bc.g1.sample(&th).iter().sum::<f64>() / nt as f64;
    -bc.epsilon * r1 * mean
}

/// Velocities induced by `phi`: spectral in angle, fourth-order differences in radius.
pub fn velocities_from_potential(phi: &Array2<f64>, bg: &BackgroundProfile, d0: f64) -> (Array2<f64>, Array2<f64>) {
    let (nr, nt) = phi.dim();
    let h = bg.h();
    let mut u1 = Array2::zeros((nr, nt));
    for k in 0..nt {
        let col: Vec<f64> = phi.column(k).to_vec();
        for (i, v) in d1_o4(&col, h).into_iter().enumerate() {
            u1[[i, k]] = bg.u_b1[i] + v;
        }
    }
    let pt = angular_derivative(phi, 1);
    let u2 = Array2::from_shape_fn((nr, nt), |(i, k)| bg.u_b2[i] + (pt[[i, k]] - d0) / bg.r_grid[i]);
    (u1, u2)
}

/// Boundary data `g2(y2)`, `g3(y2)` in characteristic coordinates.
pub fn boundary_data(c: &CoeffProfile, bc: &BoundaryPerturbation2D, l0: f64, d0: f64, nt: usize) -> (Vec<f64>, Vec<f64>) {
    let y = theta_grid(nt);
    let (r0, r1) = (c.r0(), c.r1());
    let f_r1 = *c.f.last().unwrap();
    let g2 = y.iter().map(|&t| r0 * bc.epsilon * bc.g0.eval(t) - l0 * d0).collect();
    let g3 = y.iter().map(|&t| d0 + r1 * bc.epsilon * bc.g1.eval(t - f_r1)).collect();
    (g2, g3)
}

/// Frozen-coefficient problem at velocities `(u1, u2)`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_nonlinear(
    u1: &Array2<f64>,
    u2: &Array2<f64>,
    d0: f64,
    bg: &BackgroundProfile,
    c: &CoeffProfile,
    l0: f64,
    g2: Vec<f64>,
    g3: Vec<f64>,
) -> Result<LinearizedProblem> {
    let (nr, nt) = u1.dim();
    let gamma = bg.gas.gamma;
    let b0 = bg.gas.b0;
    let pts: Vec<BgPoint> = bg.points();
    let mut a11 = Array2::zeros((nr, nt));
    let mut a12 = Array2::zeros((nr, nt));
    let mut a22 = Array2::zeros((nr, nt));
    let mut src = Array2::zeros((nr, nt));
    for i in 0..nr {
        let p = &pts[i];
        let r = p.r;
        let cb2 = p.c2;
        for k in 0..nt {
            let (v1, v2) = (u1[[i, k]], u2[[i, k]]);
            let c2 = (gamma - 1.0) * (b0 - 0.5 * (v1 * v1 + v2 * v2));
            if !(c2 > 0.0) {
                return Err(Error::Vacuum(format!("frozen state reaches vacuum at r = {r}")));
            }
            let (w1, w2) = (v1 - p.u1, v2 - p.u2);
            a11[[i, k]] = c2 - v1 * v1;
            a12[[i, k]] = -v1 * v2 / r;
            a22[[i, k]] = (c2 - v2 * v2) / (r * r);
            src[[i, k]] = c.e2[i] * d0
                + (0.5 * (gamma + 1.0) * p.du1 + 0.5 * (gamma - 1.0) / r * p.u1) * w1 * w1
                + (0.5 * (gamma - 1.0) * p.du1 + 0.5 * (gamma - 3.0) / r * p.u1) * w2 * w2
                - (c2 + v2 * v2 - cb2 - p.u2 * p.u2) / r * w1;
        }
    }
    let e_theta = Array2::from_shape_fn((nr, nt), |(i, _)| c.e2[i]);
    let op = PhysicalOperator { a11: &a11, a12: &a12, a22: &a22, e_theta: &e_theta, source: &src };
    LinearizedProblem::from_physical(c, l0, &op, g2, g3)
}

/// Rejects backgrounds outside the regime `4 - (3 - gamma)|M_b(r0)|^2 > 0`.
pub fn check_incoming(c: &CoeffProfile) -> Result<()> {
    let m0 = c.mtot_sq(0);
    if 4.0 - (3.0 - c.gamma) * m0 <= 0.0 {
        return Err(Error::Regime(format!("|M_b(r0)|^2 = {m0} violates 4 - (3 - gamma)|M_b(r0)|^2 > 0")));
    }
    Ok(())
}

/// Result of one application of the frozen-coefficient map.
pub struct MapStep {
    pub phi: Array2<f64>,
    pub problem: LinearizedProblem,
    pub field: crate::spectral::SpectralField,
    pub stats: SolveStats,
}

/// `phi_bar -> phi`: assemble at the velocities of `phi_bar`, solve, return `phi` on the polar grid.
pub fn apply_map(
    phi_bar: &Array2<f64>,
    bg: &BackgroundProfile,
    c: &CoeffProfile,
    bc: &BoundaryPerturbation2D,
    ctl: &PotentialControls,
    d0: f64,
) -> Result<MapStep> {
    let (u1, u2) = velocities_from_potential(phi_bar, bg, d0);
    let (g2, g3) = boundary_data(c, bc, ctl.l0, d0, ctl.n_theta);
    let problem = assemble_nonlinear(&u1, &u2, d0, bg, c, ctl.l0, g2, g3)?;
    let (field, stats) = solve_linearized(&problem, ctl.n_modes)?;
    let phi = from_characteristic_coords(&field.to_grid(ctl.n_theta), &c.f);
    Ok(MapStep { phi, problem, field, stats })
}

fn validate_inputs(bg: &BackgroundProfile, c: &CoeffProfile, bc: &BoundaryPerturbation2D, ctl: &PotentialControls) -> Result<()> {
    bc.validate()?;
    if bg.len() != c.len() {
        return Err(Error::Parameter("background and coefficient grids differ".into()));
    }
    if ctl.max_iter == 0 || !(ctl.tol > 0.0) {
        return Err(Error::Parameter("max_iter must be positive and tol > 0".into()));
    }
    check_incoming(c)?;
    check_l0(c, ctl.l0)
}

/// Picard iteration from `phi_start`; no continuation.
fn iterate(
    bg: &BackgroundProfile,
    c: &CoeffProfile,
    bc: &BoundaryPerturbation2D,
    ctl: &PotentialControls,
    phi_start: Array2<f64>,
) -> Result<(Array2<f64>, MapStep, Vec<f64>, f64)> {
    let d0 = circulation_correction(bc, c.r1(), ctl.n_theta);
    let h = bg.h();
    let radius = ctl.trust_scale * bc.epsilon.sqrt();
    let mut phi = phi_start;
    let mut incs: Vec<f64> = Vec::new();
    let mut max_h3 = 0.0f64;
    let mut rising = 0;
    for it in 0..ctl.max_iter {
        let step = apply_map(&phi, bg, c, bc, ctl, d0)?;
        let h3 = discrete_sobolev_norm(&step.phi, h, 3)?;
        max_h3 = max_h3.max(h3);
        if h3 > radius && bc.epsilon > 0.0 {
            return Err(Error::NonConvergence {
                message: format!("iterate left the trust region: |phi|_3 = {h3:e} > {radius:e}"),
                history: incs,
            });
        }
        let inc = discrete_sobolev_norm(&(&step.phi - &phi), h, 1)?;
        if let Some(&prev) = incs.last() {
            if prev > 0.0 && inc >= prev {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        incs.push(inc);
        if !inc.is_finite() || rising >= 3 {
            return Err(Error::NonConvergence {
                message: format!("Picard increments stopped contracting at iteration {}", it + 1),
                history: incs,
            });
        }
        let done = inc <= ctl.tol;
        phi = step.phi.clone();
        if done {
            return Ok((phi, step, incs, max_h3));
        }
    }
    Err(Error::NonConvergence { message: format!("no convergence in {} iterations", ctl.max_iter), history: incs })
}

/// Solves the irrotational problem. When the iterate leaves the trust region the data are
/// halved, the smaller problem is solved, and its solution (scaled back) seeds the full one.
pub fn solve_irrotational(
    bg: &BackgroundProfile,
    c: &CoeffProfile,
    mult: Option<&MultiplierSet>,
    bc: &BoundaryPerturbation2D,
    ctl: &PotentialControls,
) -> Result<(PotentialIterate, ConvergenceReport)> {
    validate_inputs(bg, c, bc, ctl)?;
    let zero = Array2::zeros((bg.len(), ctl.n_theta));
    let mut path = Vec::new();
    let (phi, step, incs, max_h3) = continuation(bg, c, bc, ctl, zero, 0, &mut path)?;
    let d0 = circulation_correction(bc, c.r1(), ctl.n_theta);
    let (u1, u2) = velocities_from_potential(&phi, bg, d0);
    let factors: Vec<f64> = incs.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
    let energy = match mult {
        Some(m) if m.l1.len() == bg.len() => Some(energy_diagnostic(&step.problem, &step.field, m)?),
        _ => None,
    };
    let report = ConvergenceReport {
        iterations: incs.len(),
        converged: true,
        max_contraction: factors.iter().cloned().fold(0.0, f64::max),
        contraction_factors: factors,
        fixed_point_residual: *incs.last().unwrap_or(&0.0),
        increments: incs.clone(),
        trust_radius: ctl.trust_scale * bc.epsilon.sqrt(),
        max_h3_norm: max_h3,
        continuation: path,
        last_solve: Some(step.stats),
        energy,
        coefficient_deviation: step.problem.deviation_from_background(c),
        source_norm: crate::spectral::l2_norm(&step.problem.f_hat, bg.h()),
    };
    let it = PotentialIterate { r_grid: bg.r_grid.clone(), phi, u1, u2, d0, iteration: incs.len(), history: incs };
    Ok((it, report))
}

type IterOut = (Array2<f64>, MapStep, Vec<f64>, f64);

fn continuation(
    bg: &BackgroundProfile,
    c: &CoeffProfile,
    bc: &BoundaryPerturbation2D,
    ctl: &PotentialControls,
    start: Array2<f64>,
    depth: usize,
    path: &mut Vec<f64>,
) -> Result<IterOut> {
    match iterate(bg, c, bc, ctl, start) {
        Ok(out) => {
            path.push(bc.epsilon);
            Ok(out)
        }
        Err(Error::NonConvergence { message, history }) if message.contains("trust region") => {
            if depth >= ctl.max_continuation {
                return Err(Error::NonConvergence { message, history });
            }
            let half = bc.scaled(0.5 * bc.epsilon);
            let zero = Array2::zeros((bg.len(), ctl.n_theta));
            let (phi_half, ..) = continuation(bg, c, &half, ctl, zero, depth + 1, path)?;
            let out = iterate(bg, c, bc, ctl, phi_half * 2.0)?;
            path.push(bc.epsilon);
            Ok(out)
        }
        Err(e) => Err(e),
    }
}

/// Largest harmonic content of the boundary data, used to size the angular grid.
pub fn data_bandwidth(bc: &BoundaryPerturbation2D) -> usize {
    let nt = 64;
    let p = Periodic::new(nt);
    let mut top = 0;
    for prof in [&bc.g0, &bc.g1, &bc.b1, &bc.a1] {
        let (_, a, b) = p.real_modes(&prof.sample(&theta_grid(nt)));
        for m in 0..a.len() {
            if a[m].abs() > 1e-12 || b[m].abs() > 1e-12 {
                top = top.max(m + 1);
            }
        }
    }
    top
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::*;
    use crate::coeffs::*;
    use crate::field2d::{euler_residual_2d, vorticity_2d};

    fn setup(n: usize) -> (BackgroundProfile, CoeffProfile, f64) {
        let bg = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, n).unwrap();
        let c = compute_coeffs(&bg);
        let (_, hi) = admissible_l0_interval(&c).unwrap();
        (bg, c, hi + 2.0)
    }

    #[test]
    fn zero_epsilon_returns_background_in_one_step() {
        let (bg, c, l0) = setup(65);
        let bc = BoundaryPerturbation2D::irrotational(0.0, Profile::cos(1.0), Profile::sin(1.0));
        let (it, rep) = solve_irrotational(&bg, &c, None, &bc, &PotentialControls::new(l0, 4)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(it.phi.iter().all(|v| *v == 0.0));
        assert!(it.to_field(bg.gas.b0, bg.gas.a0, 1.4).max_velocity_deviation(&bg) == 0.0);
    }

    #[test]
    fn background_assembly_reduces_to_background_coefficients() {
        let (bg, c, l0) = setup(65);
        let nt = 20;
        let u1 = Array2::from_shape_fn((bg.len(), nt), |(i, _)| bg.u_b1[i]);
        let u2 = Array2::from_shape_fn((bg.len(), nt), |(i, _)| bg.u_b2[i]);
        let p = assemble_nonlinear(&u1, &u2, 0.0, &bg, &c, l0, vec![0.0; nt], vec![0.0; nt]).unwrap();
        let d = p.deviation_from_background(&c);
        assert!(d[0] < 1e-10 && d[1] < 1e-10 && d[2] < 1e-10 && d[3] < 1e-8, "{d:?}");
        assert!(p.f_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn source_is_quadratic_in_the_perturbation() {
        // with d0 = 0 every source term carries two factors of U - U_b
        let (bg, c, l0) = setup(65);
        let nt = 20;
        let th = theta_grid(nt);
        let src = |delta: f64| {
            let u1 = Array2::from_shape_fn((bg.len(), nt), |(i, k)| bg.u_b1[i] + delta * th[k].cos());
            let u2 = Array2::from_shape_fn((bg.len(), nt), |(i, k)| bg.u_b2[i] + delta * (2.0 * th[k]).sin());
            let p = assemble_nonlinear(&u1, &u2, 0.0, &bg, &c, l0, vec![0.0; nt], vec![0.0; nt]).unwrap();
            p.f_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let ratio = src(2e-3) / src(1e-3);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn small_perturbation_converges_and_satisfies_boundary_conditions() {
        let (bg, c, l0) = setup(129);
        let eps = 1e-3;
        let bc = BoundaryPerturbation2D::irrotational(eps, Profile::cos(1.0), Profile::sin(1.0));
        let ctl = PotentialControls::new(l0, 6);
        let m = build_multipliers_auto(&c, l0).unwrap();
        let (it, rep) = solve_irrotational(&bg, &c, Some(&m), &bc, &ctl).unwrap();
        assert!(rep.max_contraction <= 0.5, "{:?}", rep.contraction_factors);
        let f = it.to_field(bg.gas.b0, bg.gas.a0, bg.gas.gamma);
        let dev = f.max_velocity_deviation(&bg);
        assert!(dev > 0.0 && dev < 20.0 * eps, "{dev}");
        let th = theta_grid(ctl.n_theta);
        let a0 = bg.u_b1[0] - l0 * bg.u_b2[0];
        let n = bg.len() - 1;
        for k in 0..ctl.n_theta {
            let r0 = it.u1[[0, k]] - l0 * it.u2[[0, k]] - a0 - eps * th[k].cos();
            let r1 = it.u2[[n, k]] - bg.gas.u20 - eps * th[k].sin();
            assert!(r0.abs() < 1e-3 * eps, "{r0}");
            assert!(r1.abs() < 1e-12, "{r1}");
        }
        assert!(vorticity_2d(&f).iter().all(|w| w.abs() < 1e-8));
        let res = euler_residual_2d(&f).unwrap();
        assert!(res.mass_max < 1e-4, "{res:?}");
        assert!(rep.energy.unwrap().bound_respected);
    }
}
