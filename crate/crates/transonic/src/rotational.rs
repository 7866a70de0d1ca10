//! Rotational transonic flows in the annulus: a two-layer fixed point.
//!
//! The inner layer freezes `(B, A)` and solves the first-order mixed system for the velocity
//! by splitting it into a curl part (a Poisson problem for `phi1`) and a potential part (the
//! mixed-type problem for `phi2`). The outer layer transports `B` and `A` along streamlines
//! by composing the boundary data with the inverse of the stream function trace at `r1`.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::background::{BackgroundProfile, BgPoint};
use crate::coeffs::{CoeffProfile, MultiplierSet};
use crate::error::{Error, Result};
use crate::field2d::{theta_grid, vorticity_2d, vorticity_relation_residual, EulerField2D, FieldInterp};
use crate::fourier::Periodic;
use crate::numerics::{cumulative_o4, solve_tridiagonal};
use crate::potential::{check_incoming, BoundaryPerturbation2D, PotentialControls};
use crate::spectral::{
    angular_derivative, discrete_sobolev_norm, energy_diagnostic, from_characteristic_coords, l2_norm,
    radial_derivative_o4, solve_linearized, EnergyReport, LinearizedProblem, PhysicalOperator, SolveStats,
};

/// Solves `(d_rr + d_r / r + d_tt / r^2) phi = f` with `phi = 0` at both circles; Fourier in
/// angle, second-order differences in radius. Returns the field and the max discrete residual.
pub fn poisson_annulus(f: &Array2<f64>, r_grid: &[f64]) -> Result<(Array2<f64>, f64)> {
    let (nr, nt) = f.dim();
    if nr < 3 || r_grid.len() != nr {
        return Err(Error::Parameter("Poisson solve needs at least 3 radial nodes".into()));
    }
    let h = r_grid[1] - r_grid[0];
    let per = Periodic::new(nt);
    let spec: Vec<Vec<Complex64>> = f.rows().into_iter().map(|r| per.spectrum(&r.to_vec())).collect();
    let mut out_spec = vec![vec![Complex64::new(0.0, 0.0); nt]; nr];
    let n = nr - 2;
    for k in 0..nt {
        let m = per.wavenumber(k);
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..n {
            let r = r_grid[j + 1];
            lower[j] = 1.0 / (h * h) - 1.0 / (2.0 * h * r);
            upper[j] = 1.0 / (h * h) + 1.0 / (2.0 * h * r);
            diag[j] = -2.0 / (h * h) - m * m / (r * r);
        }
        let mut re: Vec<f64> = (0..n).map(|j| spec[j + 1][k].re).collect();
        let mut im: Vec<f64> = (0..n).map(|j| spec[j + 1][k].im).collect();
        solve_tridiagonal(&lower, &diag, &upper, &mut re);
        solve_tridiagonal(&lower, &diag, &upper, &mut im);
        for j in 0..n {
            out_spec[j + 1][k] = Complex64::new(re[j], im[j]);
        }
    }
    let mut phi = Array2::zeros((nr, nt));
    for i in 1..nr - 1 {
        let row = per.synthesize(out_spec[i].clone());
        phi.row_mut(i).iter_mut().zip(row).for_each(|(a, b)| *a = b);
    }
    let ptt = angular_derivative(&phi, 2);
    let mut res = 0.0f64;
    for i in 1..nr - 1 {
        let r = r_grid[i];
        for k in 0..nt {
            let lap = (phi[[i + 1, k]] - 2.0 * phi[[i, k]] + phi[[i - 1, k]]) / (h * h)
                + (phi[[i + 1, k]] - phi[[i - 1, k]]) / (2.0 * h * r)
                + ptt[[i, k]] / (r * r);
            res = res.max((lap - f[[i, k]]).abs());
        }
    }
    Ok((phi, res))
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationalControls {
    pub potential: PotentialControls,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Number of streamlines traced for the transport check.
    pub streamlines: usize,
}

impl RotationalControls {
    pub fn new(l0: f64, n_modes: usize) -> Self {
        Self { potential: PotentialControls::new(l0, n_modes), outer_tol: 1e-9, max_outer: 50, streamlines: 20 }
    }
}

/// Diagnostics of one application of the inner map.
#[derive(Debug, Clone, Serialize)]
pub struct InnerDiagnostics {
    pub f1_norm: f64,
    pub f2_norm: f64,
    pub poisson_residual: f64,
    /// `max |curl(U_hat) - F2|` of the output with `F2` frozen at the input.
    pub curl_consistency: f64,
    pub r1_d0: f64,
    pub solve: SolveStats,
}

struct InnerStep {
    field: EulerField2D,
    diag: InnerDiagnostics,
    problem: LinearizedProblem,
    spectral: crate::spectral::SpectralField,
}

fn inner_step(
    ubar: &EulerField2D,
    pts: &[BgPoint],
    c: &CoeffProfile,
    bc: &BoundaryPerturbation2D,
    ctl: &PotentialControls,
) -> Result<InnerStep> {
    let (nr, nt) = ubar.u1.dim();
    let h = ubar.h();
    let gamma = ubar.gamma;
    let r = &ubar.r_grid;
    let (db_r, db_t) = (radial_derivative_o4(&ubar.b, h), angular_derivative(&ubar.b, 1));
    let (da_r, da_t) = (radial_derivative_o4(&ubar.a, h), angular_derivative(&ubar.a, 1));
    let mut a11 = Array2::zeros((nr, nt));
    let mut a12 = Array2::zeros((nr, nt));
    let mut a22 = Array2::zeros((nr, nt));
    let mut f1 = Array2::zeros((nr, nt));
    let mut f2 = Array2::zeros((nr, nt));
    for i in 0..nr {
        let p = &pts[i];
        let ri = r[i];
        for k in 0..nt {
            let (v1, v2) = (ubar.u1[[i, k]], ubar.u2[[i, k]]);
            let (b, a) = (ubar.b[[i, k]], ubar.a[[i, k]]);
            let head = b - 0.5 * (v1 * v1 + v2 * v2);
            let c2 = (gamma - 1.0) * head;
            if !(c2 > 0.0) || !(a > 0.0) {
                return Err(Error::Vacuum(format!("frozen state reaches vacuum at r = {ri}")));
            }
            if v2 == 0.0 {
                return Err(Error::Regime(format!("angular velocity vanishes at r = {ri}")));
            }
            a11[[i, k]] = c2 - v1 * v1;
            a12[[i, k]] = -v1 * v2 / ri;
            a22[[i, k]] = (c2 - v2 * v2) / (ri * ri);
            let transport_b = v1 * db_r[[i, k]] + v2 / ri * db_t[[i, k]];
            let transport_a = v1 * da_r[[i, k]] + v2 / ri * da_t[[i, k]];
            f1[[i, k]] = c.e1[i] * (v1 - p.u1) + c.e2_tilde[i] * (v2 - p.u2)
                - a11[[i, k]] * p.du1
                - ri * a12[[i, k]] * p.du2
                - c2 * v1 / ri
                - transport_b
                + c2 / ((gamma - 1.0) * a) * transport_a;
            f2[[i, k]] = (head / (a * gamma) * da_r[[i, k]] - db_r[[i, k]]) / v2;
        }
    }
    let (phi1, poisson_residual) = poisson_annulus(&f2, r)?;
    let p1_r = radial_derivative_o4(&phi1, h);
    let p1_t = angular_derivative(&phi1, 1);
    let w1 = Array2::from_shape_fn((nr, nt), |(i, k)| p1_t[[i, k]] / r[i]);
    let w2 = -&p1_r;
    let (w1_r, w1_t) = (radial_derivative_o4(&w1, h), angular_derivative(&w1, 1));
    let (w2_r, w2_t) = (radial_derivative_o4(&w2, h), angular_derivative(&w2, 1));

    let per = Periodic::new(nt);
    let th = theta_grid(nt);
    let q: Vec<f64> = (0..nt).map(|k| bc.epsilon * bc.g1.eval(th[k]) + p1_r[[nr - 1, k]]).collect();
    let r1 = r[nr - 1];
    let r1_d0 = -r1 * q.iter().sum::<f64>() / nt as f64;

    let mut e_theta = Array2::zeros((nr, nt));
    let mut f4 = Array2::zeros((nr, nt));
    for i in 0..nr {
        let ri = r[i];
        for k in 0..nt {
            let lw = a11[[i, k]] * w1_r[[i, k]]
                + ri * a22[[i, k]] * w2_t[[i, k]]
                + ri * a12[[i, k]] * w2_r[[i, k]]
                + a12[[i, k]] * w1_t[[i, k]]
                + c.e1[i] * w1[[i, k]]
                + c.e2_tilde[i] * w2[[i, k]];
            let e2 = (c.e2_tilde[i] - a12[[i, k]]) / ri;
            e_theta[[i, k]] = e2;
            f4[[i, k]] = f1[[i, k]] - lw + e2 * r1_d0;
        }
    }
    let l0 = ctl.l0;
    let r0 = r[0];
    let g2: Vec<f64> = (0..nt)
        .map(|k| r0 * (bc.epsilon * bc.g0.eval(th[k]) - w1[[0, k]] + l0 * w2[[0, k]]) - l0 * r1_d0)
        .collect();
    let g1t: Vec<f64> = q.iter().map(|v| r1 * v + r1_d0).collect();
    let g3 = per.shift(&g1t, -*c.f.last().unwrap());
    let op = PhysicalOperator { a11: &a11, a12: &a12, a22: &a22, e_theta: &e_theta, source: &f4 };
    let problem = LinearizedProblem::from_physical(c, l0, &op, g2, g3)?;
    let (spectral, solve) = solve_linearized(&problem, ctl.n_modes)?;
    let phi2 = from_characteristic_coords(&spectral.to_grid(nt), &c.f);
    let p2_r = radial_derivative_o4(&phi2, h);
    let p2_t = angular_derivative(&phi2, 1);
    let mut out = ubar.clone();
    for i in 0..nr {
        for k in 0..nt {
            out.u1[[i, k]] = pts[i].u1 + p2_r[[i, k]] + w1[[i, k]];
            out.u2[[i, k]] = pts[i].u2 + (p2_t[[i, k]] - r1_d0) / r[i] + w2[[i, k]];
        }
    }
    let w = vorticity_2d(&out);
    let curl_consistency = w.iter().zip(f2.iter()).fold(0.0f64, |m, (w, f)| m.max((w + f).abs()));
    let diag = InnerDiagnostics {
        f1_norm: l2_norm(&f1, h),
        f2_norm: l2_norm(&f2, h),
        poisson_residual,
        curl_consistency,
        r1_d0,
        solve,
    };
    Ok(InnerStep { field: out, diag, problem, spectral })
}

fn velocity_h1(a: &EulerField2D, b: &EulerField2D) -> Result<f64> {
    let h = a.h();
    Ok(discrete_sobolev_norm(&(&a.u1 - &b.u1), h, 1)? + discrete_sobolev_norm(&(&a.u2 - &b.u2), h, 1)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct InnerReport {
    pub iterations: usize,
    pub increments: Vec<f64>,
    pub max_contraction: f64,
    pub last: InnerDiagnostics,
}

type LinearStep = (LinearizedProblem, crate::spectral::SpectralField);

/// Inner fixed point `U_bar -> U` with `(B, A)` frozen at `start.b`, `start.a`.
pub fn velocity_map(
    start: &EulerField2D,
    bg: &BackgroundProfile,
    c: &CoeffProfile,
    bc: &BoundaryPerturbation2D,
    ctl: &PotentialControls,
) -> Result<(EulerField2D, InnerReport, Option<LinearStep>)> {
    let pts = bg.points();
    let mut cur = start.clone();
    let mut incs = Vec::new();
    let mut rising = 0;
    for _ in 0..ctl.max_iter {
        let step = inner_step(&cur, &pts, c, bc, ctl)?;
        let inc = velocity_h1(&step.field, &cur)?;
        if let Some(&prev) = incs.last() {
            rising = if prev > 0.0 && inc >= prev { rising + 1 } else { 0 };
        }
        incs.push(inc);
        if !inc.is_finite() || rising >= 3 {
            return Err(Error::NonConvergence { message: "inner velocity iteration diverged".into(), history: incs });
        }
        cur = step.field;
        if inc <= ctl.tol {
            let factors: Vec<f64> = incs.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
            let report = InnerReport {
                iterations: incs.len(),
                max_contraction: factors.iter().cloned().fold(0.0, f64::max),
                increments: incs,
                last: step.diag,
            };
            return Ok((cur, report, Some((step.problem, step.spectral))));
        }
    }
    Err(Error::NonConvergence { message: format!("inner iteration exceeded {} steps", ctl.max_iter), history: incs })
}

/// Stream function `psi` with `d_r psi = -rho U2`, `d_theta psi = r rho U1`, normalized by
/// `psi(r1, 0) = 0`. The trace at `r1` is stored as `slope * theta + periodic part`.
#[derive(Debug, Clone)]
pub struct StreamFunction {
    pub r_grid: Vec<f64>,
    pub psi: Array2<f64>,
    /// Mass flux through one period, `psi(r, theta + 2 pi) - psi(r, theta)`.
    pub period: f64,
    trace: Vec<Complex64>,
    trace_rate: Vec<Complex64>,
    trace_offset: f64,
    trace_bound: f64,
    per: Periodic,
    /// `max |d_theta psi - r rho U1|` relative to `max |r rho U1|`.
    pub closure_defect: f64,
}

impl StreamFunction {
    /// Trace value `psi(r1, theta)` for any real `theta`.
    pub fn trace(&self, theta: f64) -> f64 {
        self.period / (2.0 * std::f64::consts::PI) * theta + self.per.eval(&self.trace, theta) - self.trace_offset
    }

    fn trace_with_derivative(&self, theta: f64) -> (f64, f64) {
        let (g, _) = self.per.eval_with_derivative(&self.trace, theta);
        let rate = self.per.eval(&self.trace_rate, theta);
        (self.period / (2.0 * std::f64::consts::PI) * theta + g - self.trace_offset, rate)
    }

    /// Inverse trace: the `theta` with `trace(theta) = psi`, by safeguarded Newton.
    pub fn inverse_trace(&self, psi: f64) -> f64 {
        let slope = self.period / (2.0 * std::f64::consts::PI);
        let guess = (psi + self.trace_offset) / slope;
        let span = 2.0 * self.trace_bound / slope.abs() + 1e-12;
        let (mut lo, mut hi) = (guess - span, guess + span);
        let inc = slope > 0.0;
        let mut x = guess;
        for _ in 0..200 {
            let (t, dt) = self.trace_with_derivative(x);
            let g = t - psi;
            if (g > 0.0) == inc {
                hi = x;
            } else {
                lo = x;
            }
            let mut nx = x - g / dt;
            if !(nx > lo && nx < hi) {
                nx = 0.5 * (lo + hi);
            }
            if (nx - x).abs() <= 1e-14 * (1.0 + x.abs()) {
                return nx;
            }
            x = nx;
        }
        x
    }
}

/// Builds the stream function of a field whose mass flux is (discretely) divergence free.
pub fn build_stream_function(f: &EulerField2D) -> Result<StreamFunction> {
    let (nr, nt) = f.u1.dim();
    let h = f.h();
    let rho = f.density()?;
    let r1 = f.r_grid[nr - 1];
    let m1: Vec<f64> = (0..nt).map(|k| r1 * rho[[nr - 1, k]] * f.u1[[nr - 1, k]]).collect();
    let sign = m1[0].signum();
    if sign == 0.0 || m1.iter().any(|v| v.signum() != sign) {
        return Err(Error::Geometry("radial mass flux at r1 changes sign: stream function trace is not monotone".into()));
    }
    let per = Periodic::new(nt);
    let (g, mean) = per.antiderivative(&m1);
    let trace = per.spectrum(&g);
    let trace_rate = per.spectrum(&m1);
    let trace_offset = per.eval(&trace, 0.0);
    let trace_bound = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 1.5 + 1e-300;
    let period = 2.0 * std::f64::consts::PI * mean;
    let th = theta_grid(nt);
    let mut psi = Array2::zeros((nr, nt));
    for k in 0..nt {
        let col: Vec<f64> = (0..nr).map(|i| rho[[i, k]] * f.u2[[i, k]]).collect();
        let cum = cumulative_o4(&col, h);
        let t = mean * th[k] + g[k] - trace_offset;
        for i in 0..nr {
            psi[[i, k]] = t + (cum[nr - 1] - cum[i]);
        }
    }
    let periodic = Array2::from_shape_fn((nr, nt), |(i, k)| psi[[i, k]] - mean * th[k]);
    let dpsi = angular_derivative(&periodic, 1) + mean;
    let mut defect = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..nr {
        for k in 0..nt {
            let m = f.r_grid[i] * rho[[i, k]] * f.u1[[i, k]];
            scale = scale.max(m.abs());
            defect = defect.max((dpsi[[i, k]] - m).abs());
        }
    }
    let closure_defect = defect / scale;
    if closure_defect > 1e-3 {
        return Err(Error::Consistency(format!("mass flux is not divergence free: stream closure defect {closure_defect:e}")));
    }
    Ok(StreamFunction {
        r_grid: f.r_grid.clone(),
        psi,
        period,
        trace,
        trace_rate,
        trace_offset,
        trace_bound,
        per,
        closure_defect,
    })
}

/// `B = B0 + eps B1(trace^{-1}(psi))`, `A = A0 + eps A1(...)` on the grid, plus the
/// periodicity defect measured by transporting from `theta + 2 pi`.
pub fn transport_ba(
    s: &StreamFunction,
    bc: &BoundaryPerturbation2D,
    b0: f64,
    a0: f64,
) -> (Array2<f64>, Array2<f64>, f64) {
    let dim = s.psi.dim();
    let mut b = Array2::zeros(dim);
    let mut a = Array2::zeros(dim);
    let mut defect = 0.0f64;
    for ((i, k), &p) in s.psi.indexed_iter() {
        let t = s.inverse_trace(p);
        let t2 = s.inverse_trace(p + s.period);
        let (bv, av) = (bc.b1.eval(t), bc.a1.eval(t));
        defect = defect.max((bc.b1.eval(t2) - bv).abs()).max((bc.a1.eval(t2) - av).abs());
        b[[i, k]] = b0 + bc.epsilon * bv;
        a[[i, k]] = a0 + bc.epsilon * av;
    }
    (b, a, bc.epsilon * defect)
}

/// One sample on a traced streamline.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StreamlineSample {
    pub seed: usize,
    pub r: f64,
    pub theta: f64,
    pub b: f64,
    pub a: f64,
}

/// Traces `count` streamlines from equispaced seeds on `r1` inward by RK4 on
/// `d theta / dr = U2 / (r U1)`, sampling the interpolated `B` and `A`.
pub fn trace_streamlines(f: &EulerField2D, count: usize, steps: usize) -> Vec<StreamlineSample> {
    let iu1 = FieldInterp::new(&f.u1, &f.r_grid);
    let iu2 = FieldInterp::new(&f.u2, &f.r_grid);
    let ib = FieldInterp::new(&f.b, &f.r_grid);
    let ia = FieldInterp::new(&f.a, &f.r_grid);
    let (r0, r1) = (f.r_grid[0], *f.r_grid.last().unwrap());
    let rhs = |r: f64, t: f64| iu2.eval(r, t) / (r * iu1.eval(r, t));
    let dr = (r0 - r1) / steps as f64;
    let mut out = Vec::with_capacity(count * (steps + 1));
    for j in 0..count {
        let mut t = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
        out.push(StreamlineSample { seed: j, r: r1, theta: t, b: ib.eval(r1, t), a: ia.eval(r1, t) });
        for s in 0..steps {
            let r = r1 + s as f64 * dr;
            let k1 = rhs(r, t);
            let k2 = rhs(r + 0.5 * dr, t + 0.5 * dr * k1);
            let k3 = rhs(r + 0.5 * dr, t + 0.5 * dr * k2);
            let k4 = rhs(r + dr, t + dr * k3);
            t += dr / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let rn = if s + 1 == steps { r0 } else { r + dr };
            out.push(StreamlineSample { seed: j, r: rn, theta: t, b: ib.eval(rn, t), a: ia.eval(rn, t) });
        }
    }
    out
}

/// Max variation of `B` and `A` along the traced streamlines.
pub fn streamline_invariance(samples: &[StreamlineSample]) -> (f64, f64) {
    let (mut db, mut da) = (0.0f64, 0.0f64);
    let mut start = samples.first().copied();
    for s in samples {
        let s0 = match start {
            Some(p) if p.seed == s.seed => p,
            _ => *s,
        };
        start = Some(s0);
        db = db.max((s.b - s0.b).abs());
        da = da.max((s.a - s0.a).abs());
    }
    (db, da)
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationalReport {
    pub outer_iterations: usize,
    pub outer_increments: Vec<f64>,
    pub outer_contraction: Vec<f64>,
    pub max_outer_contraction: f64,
    pub inner_iterations: Vec<usize>,
    pub inner_max_contraction: f64,
    pub last_inner: InnerDiagnostics,
    pub delta0: f64,
    pub delta1: f64,
    pub velocity_h2: f64,
    pub ba_h3: f64,
    pub within_trust_region: bool,
    pub stream_closure_defect: f64,
    pub stream_period: f64,
    pub periodicity_defect: f64,
    pub streamline_dev_b: f64,
    pub streamline_dev_a: f64,
    pub vorticity_sup: f64,
    pub vorticity_relation_residual: f64,
    pub energy: Option<EnergyReport>,
}

/// Outer iteration on `(B, A)`; requires a strictly nonzero radial background velocity.
pub fn solve_rotational(
    bg: &BackgroundProfile,
    c: &CoeffProfile,
    mult: Option<&MultiplierSet>,
    bc: &BoundaryPerturbation2D,
    ctl: &RotationalControls,
) -> Result<(EulerField2D, RotationalReport)> {
    bc.validate()?;
    if bg.u_b1.iter().any(|&u| !(u < 0.0)) {
        return Err(Error::Regime("rotational solver needs U_b1 < 0 throughout (U10 = 0 is excluded)".into()));
    }
    check_incoming(c)?;
    crate::coeffs::check_l0(c, ctl.potential.l0)?;
    let nt = ctl.potential.n_theta;
    let (b0, a0) = (bg.gas.b0, bg.gas.a0);
    let mut cur = EulerField2D::background(bg, nt);
    let mut incs = Vec::new();
    let mut inner_its = Vec::new();
    let mut inner_k = 0.0f64;
    let h = bg.h();
    for _ in 0..ctl.max_outer {
        let (u, inner, last) = velocity_map(&cur, bg, c, bc, &ctl.potential)?;
        inner_its.push(inner.iterations);
        inner_k = inner_k.max(inner.max_contraction);
        let stream = build_stream_function(&u)?;
        let (b, a, periodicity) = transport_ba(&stream, bc, b0, a0);
        let inc = discrete_sobolev_norm(&(&b - &cur.b), h, 1)? + discrete_sobolev_norm(&(&a - &cur.a), h, 1)?;
        incs.push(inc);
        let mut next = u;
        next.b = b;
        next.a = a;
        if !inc.is_finite() {
            return Err(Error::NonConvergence { message: "outer iteration produced non-finite data".into(), history: incs });
        }
        let done = inc <= ctl.outer_tol;
        cur = next;
        if done {
            let outer_contraction: Vec<f64> = incs.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
            let delta1 = bc.epsilon.sqrt();
            let delta0 = (bc.epsilon + delta1).sqrt();
            let uh = |x: &Array2<f64>, bgv: &[f64]| Array2::from_shape_fn(x.dim(), |(i, k)| x[[i, k]] - bgv[i]);
            let velocity_h2 = discrete_sobolev_norm(&uh(&cur.u1, &bg.u_b1), h, 2)?
                + discrete_sobolev_norm(&uh(&cur.u2, &bg.u_b2), h, 2)?;
            let ba_h3 = discrete_sobolev_norm(&cur.b.mapv(|v| v - b0), h, 3)?
                + discrete_sobolev_norm(&cur.a.mapv(|v| v - a0), h, 3)?;
            let scale = ctl.potential.trust_scale;
            let (db, da) = streamline_invariance(&trace_streamlines(&cur, ctl.streamlines, 4 * bg.len()));
            let energy = match (mult, last) {
                (Some(m), Some((p, s))) if m.l1.len() == bg.len() => Some(energy_diagnostic(&p, &s, m)?),
                _ => None,
            };
            let report = RotationalReport {
                outer_iterations: incs.len(),
                max_outer_contraction: outer_contraction.iter().cloned().fold(0.0, f64::max),
                outer_contraction,
                outer_increments: incs,
                inner_iterations: inner_its,
                inner_max_contraction: inner_k,
                last_inner: inner.last,
                delta0,
                delta1,
                velocity_h2,
                ba_h3,
                within_trust_region: velocity_h2 <= scale * delta0 && ba_h3 <= scale * delta1,
                stream_closure_defect: stream.closure_defect,
                stream_period: stream.period,
                periodicity_defect: periodicity,
                streamline_dev_b: db,
                streamline_dev_a: da,
                vorticity_sup: vorticity_2d(&cur).iter().fold(0.0f64, |m, v| m.max(v.abs())),
                vorticity_relation_residual: vorticity_relation_residual(&cur),
                energy,
            };
            return Ok((cur, report));
        }
    }
    Err(Error::NonConvergence { message: format!("outer iteration exceeded {} steps", ctl.max_outer), history: incs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::*;
    use crate::coeffs::*;
    use crate::profile::Profile;
    use std::f64::consts::PI;

    #[test]
    fn poisson_zero_and_manufactured() {
        let nr = 65;
        let nt = 16;
        let r: Vec<f64> = (0..nr).map(|i| 1.0 + i as f64 / (nr - 1) as f64).collect();
        let (z, _) = poisson_annulus(&Array2::zeros((nr, nt)), &r).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        let th = theta_grid(nt);
        let mut errs = Vec::new();
        for n in [33usize, 65, 129] {
            let r: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / (n - 1) as f64).collect();
            let ex = |r: f64, t: f64| (PI * (r - 1.0)).sin() * t.cos();
            let f = Array2::from_shape_fn((n, nt), |(i, k)| {
                let (ri, t) = (r[i], th[k]);
                let s = (PI * (ri - 1.0)).sin();
                let cc = (PI * (ri - 1.0)).cos();
                (-PI * PI * s + PI * cc / ri - s / (ri * ri)) * t.cos()
            });
            let (phi, res) = poisson_annulus(&f, &r).unwrap();
            assert!(res < 1e-10, "{res}");
            let e = phi.indexed_iter().fold(0.0f64, |m, ((i, k), v)| m.max((v - ex(r[i], th[k])).abs()));
            errs.push(e);
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!((1.8..2.2).contains(&o1) && (1.8..2.2).contains(&o2), "{errs:?}");
    }

    #[test]
    fn poisson_mean_mode_is_radial_two_point_problem() {
        let n = 41;
        let r: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / (n - 1) as f64).collect();
        let f = Array2::from_shape_fn((n, 8), |(i, _)| r[i]);
        let (phi, _) = poisson_annulus(&f, &r).unwrap();
        let h = r[1] - r[0];
        let m = n - 2;
        let lower: Vec<f64> = (0..m).map(|j| 1.0 / (h * h) - 1.0 / (2.0 * h * r[j + 1])).collect();
        let upper: Vec<f64> = (0..m).map(|j| 1.0 / (h * h) + 1.0 / (2.0 * h * r[j + 1])).collect();
        let diag = vec![-2.0 / (h * h); m];
        let mut rhs: Vec<f64> = (0..m).map(|j| r[j + 1]).collect();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        for j in 0..m {
            for k in 0..8 {
                assert!((phi[[j + 1, k]] - rhs[j]).abs() < 1e-13);
            }
        }
    }

    fn asset(n: usize) -> (BackgroundProfile, CoeffProfile, f64) {
        let bg = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, n).unwrap();
        let c = compute_coeffs(&bg);
        let (_, hi) = admissible_l0_interval(&c).unwrap();
        (bg, c, hi + 2.0)
    }

    #[test]
    fn background_stream_function_is_linear_trace() {
        let (bg, _, _) = asset(129);
        let f = EulerField2D::background(&bg, 16);
        let s = build_stream_function(&f).unwrap();
        let k1 = bg.kappa1;
        assert!((s.period - 2.0 * PI * k1).abs() < 1e-9 * k1.abs());
        assert!(s.period < 0.0);
        for t in [0.0, 1.0, 4.0, 9.0] {
            assert!((s.trace(t) - k1 * t).abs() < 1e-9);
            assert!((s.inverse_trace(k1 * t) - t).abs() < 1e-9);
        }
        for k in 0..16 {
            let d = s.psi[[5, (k + 1) % 16]] - s.psi[[5, k]];
            let expect = if k == 15 { -15.0 } else { 1.0 } * k1 * 2.0 * PI / 16.0;
            assert!((d - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn background_transport_is_shift_by_radial_integral() {
        let (bg, _, _) = asset(257);
        let nt = 16;
        let f = EulerField2D::background(&bg, nt);
        let s = build_stream_function(&f).unwrap();
        let bc = BoundaryPerturbation2D { b1: Profile::cos(1.0), ..BoundaryPerturbation2D::irrotational(1e-3, Profile::zero(), Profile::zero()) };
        let (b, _, defect) = transport_ba(&s, &bc, 0.0, 0.0);
        assert!(defect <= 1e-9);
        // characteristics: d theta / dr = U2 / (r U1) integrated by the background solution
        let sol = &bg.solution;
        let th = theta_grid(nt);
        for i in [0usize, 64, 200] {
            let r = bg.r_grid[i];
            let shift = crate::numerics::gauss4(|x| { let p = sol.point(x); p.u2 / (x * p.u1) }, r, bg.r1);
            for k in 0..nt {
                let expect = 1e-3 * (th[k] + shift).cos();
                assert!((b[[i, k]] - expect).abs() < 1e-4 * 1e-3, "{i} {k}");
            }
        }
    }

    #[test]
    fn constant_data_transports_constant() {
        let (bg, _, _) = asset(65);
        let s = build_stream_function(&EulerField2D::background(&bg, 16)).unwrap();
        let bc = BoundaryPerturbation2D { b1: Profile::constant(2.0), ..BoundaryPerturbation2D::irrotational(1e-3, Profile::zero(), Profile::zero()) };
        let (b, _, _) = transport_ba(&s, &bc, 1.0, 0.0);
        assert!(b.iter().all(|v| (v - 1.002).abs() < 1e-15));
    }

    #[test]
    fn frozen_constant_ba_gives_zero_curl_source() {
        let (bg, c, l0) = asset(65);
        let ctl = PotentialControls::new(l0, 4);
        let bc = BoundaryPerturbation2D::irrotational(1e-3, Profile::cos(1.0), Profile::sin(1.0));
        let step = inner_step(&EulerField2D::background(&bg, ctl.n_theta), &bg.points(), &c, &bc, &ctl).unwrap();
        assert!(step.diag.f2_norm < 1e-12);
    }

    #[test]
    fn rejects_purely_circulatory_background() {
        let bg = solve_background(&circulatory_gas(), CIRC_R0, CIRC_R1, 65).unwrap();
        let c = compute_coeffs(&bg);
        let bc = BoundaryPerturbation2D::irrotational(1e-3, Profile::cos(1.0), Profile::sin(1.0));
        let err = solve_rotational(&bg, &c, None, &bc, &RotationalControls::new(5.0, 4)).unwrap_err();
        assert!(matches!(err, Error::Regime(_)));
    }
}
