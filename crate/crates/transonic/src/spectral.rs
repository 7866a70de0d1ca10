//! Fourier-Galerkin solver for the linearized mixed-type equation in characteristic
//! coordinates `(y1, y2) = (r, f(r) + theta)`:
//!
//! ```text
//! phi_11 + 2 k12 phi_12 + k22 phi_22 + k1 phi_1 + k2 phi_2 = F
//! r0 phi_1 + (r0 f'(r0) - l0) phi_2 = g2      at y1 = r0
//! phi_2 = g3,  phi(r1, f(r1)) = 0             at y1 = r1
//! ```
//!
//! The angular dependence is expanded in the orthonormal trigonometric basis and the
//! resulting block two-point problem is discretized with centered differences.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::banded::{solve_refined, BandMatrix};
use crate::coeffs::{CoeffProfile, MultiplierSet};
use crate::error::{Error, Result};
use crate::fourier::{check_dealiasing, Periodic};
use crate::io::Csv;
use crate::numerics::{d1_o2, d1_o4, trapezoid};

/// Coefficients, source and boundary data of one linear solve, sampled on the tensor grid
/// `r_grid x [0, 2pi)` in characteristic coordinates. Rows index radius, columns angle.
#[derive(Debug, Clone)]
pub struct LinearizedProblem {
    pub r_grid: Vec<f64>,
    pub nt: usize,
    pub k12: Array2<f64>,
    pub k22: Array2<f64>,
    pub k1: Array2<f64>,
    pub k2: Array2<f64>,
    pub f_hat: Array2<f64>,
    pub g2: Vec<f64>,
    pub g3: Vec<f64>,
    pub l0: f64,
    /// `r0 f'(r0) - l0`.
    pub robin: f64,
    /// `f(r1)`, the anchor of the Dirichlet normalization.
    pub f_r1: f64,
}

/// Coefficients of the physical equation `A11 phi_rr + 2 A12 phi_rt + A22 phi_tt + e1 phi_r + E phi_t = F`
/// on the polar grid `r_grid x theta`.
pub struct PhysicalOperator<'a> {
    pub a11: &'a Array2<f64>,
    pub a12: &'a Array2<f64>,
    pub a22: &'a Array2<f64>,
    pub e_theta: &'a Array2<f64>,
    pub source: &'a Array2<f64>,
}

fn periodic_nodes(nt: usize) -> Vec<f64> {
    (0..nt).map(|k| 2.0 * PI * k as f64 / nt as f64).collect()
}

impl LinearizedProblem {
    /// Background coefficients with zero data.
    pub fn background(c: &CoeffProfile, nt: usize, l0: f64) -> Self {
        let nr = c.len();
        let col = |v: &Vec<f64>| Array2::from_shape_fn((nr, nt), |(i, _)| v[i]);
        Self {
            r_grid: c.r_grid.clone(),
            nt,
            k12: Array2::zeros((nr, nt)),
            k22: col(&c.k_b22),
            k1: col(&c.k_b1),
            k2: col(&c.k_b2),
            f_hat: Array2::zeros((nr, nt)),
            g2: vec![0.0; nt],
            g3: vec![0.0; nt],
            l0,
            robin: c.r0() * c.f_prime[0] - l0,
            f_r1: *c.f.last().unwrap(),
        }
    }

    /// Normalizes a physical operator by `A11`, moves it to characteristic coordinates and
    /// attaches boundary data given as samples in `y2`.
    pub fn from_physical(c: &CoeffProfile, l0: f64, op: &PhysicalOperator<'_>, g2: Vec<f64>, g3: Vec<f64>) -> Result<Self> {
        let (nr, nt) = op.a11.dim();
        if nr != c.len() || g2.len() != nt || g3.len() != nt {
            return Err(Error::Parameter("grid mismatch in linearized problem".into()));
        }
        if op.a11.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Regime("A11 is not positive: radial Mach number reached one".into()));
        }
        let mut k12 = Array2::zeros((nr, nt));
        let mut k22 = Array2::zeros((nr, nt));
        let mut k1 = Array2::zeros((nr, nt));
        let mut k2 = Array2::zeros((nr, nt));
        let mut fh = Array2::zeros((nr, nt));
        for i in 0..nr {
            let (fp, fpp, e1) = (c.f_prime[i], c.f_second[i], c.e1[i]);
            for k in 0..nt {
                let a11 = op.a11[[i, k]];
                let a12 = op.a12[[i, k]];
                k12[[i, k]] = (a12 + a11 * fp) / a11;
                k22[[i, k]] = (op.a22[[i, k]] + 2.0 * a12 * fp) / a11 + fp * fp;
                k1[[i, k]] = e1 / a11;
                k2[[i, k]] = fpp + (e1 * fp + op.e_theta[[i, k]]) / a11;
                fh[[i, k]] = op.source[[i, k]] / a11;
            }
        }
        let p = Periodic::new(nt);
        let mut prob = Self::background(c, nt, l0);
        for (i, &f) in c.f.iter().enumerate() {
            for (arr, src) in [(&mut prob.k12, &k12), (&mut prob.k22, &k22), (&mut prob.k1, &k1), (&mut prob.k2, &k2), (&mut prob.f_hat, &fh)] {
                let row = p.shift(src.row(i).as_slice().unwrap(), -f);
                arr.row_mut(i).iter_mut().zip(row).for_each(|(a, b)| *a = b);
            }
        }
        prob.g2 = g2;
        prob.g3 = g3;
        Ok(prob)
    }

    pub fn nr(&self) -> usize {
        self.r_grid.len()
    }

    pub fn h(&self) -> f64 {
        self.r_grid[1] - self.r_grid[0]
    }

    pub fn y2_grid(&self) -> Vec<f64> {
        periodic_nodes(self.nt)
    }

    /// Largest deviations `(|k12|, |k22 - k_b22|, |k1 - k_b1|, |k2|)` from the background.
    pub fn deviation_from_background(&self, c: &CoeffProfile) -> [f64; 4] {
        let mut d = [0.0f64; 4];
        for ((i, _), &v) in self.k12.indexed_iter() {
            d[0] = d[0].max(v.abs());
            d[1] = d[1].max((self.k22[[i, 0]] - c.k_b22[i]).abs());
        }
        for ((i, k), &v) in self.k22.indexed_iter() {
            d[1] = d[1].max((v - c.k_b22[i]).abs());
            d[2] = d[2].max((self.k1[[i, k]] - c.k_b1[i]).abs());
            d[3] = d[3].max(self.k2[[i, k]].abs());
        }
        d
    }
}

/// Orthonormal trigonometric basis sampled on the angular grid.
#[derive(Debug, Clone)]
pub struct Basis {
    pub n_modes: usize,
    pub nt: usize,
    /// `h[j][k]`, `dh[j][k]`: basis function `j` and its derivative at node `k`.
    pub h: Vec<Vec<f64>>,
    pub dh: Vec<Vec<f64>>,
    periodic: Periodic,
}

/// Harmonic number of basis index `j` (0 for the constant).
pub fn harmonic(j: usize) -> usize {
    j.div_ceil(2)
}

impl Basis {
    pub fn new(n_modes: usize, nt: usize) -> Self {
        let m_tot = 2 * n_modes + 1;
        let y = periodic_nodes(nt);
        let mut h = vec![vec![0.0; nt]; m_tot];
        let mut dh = vec![vec![0.0; nt]; m_tot];
        let (c0, c1) = (1.0 / (2.0 * PI).sqrt(), 1.0 / PI.sqrt());
        for k in 0..nt {
            h[0][k] = c0;
            for m in 1..=n_modes {
                let (s, c) = (m as f64 * y[k]).sin_cos();
                let mf = m as f64;
                h[2 * m - 1][k] = c1 * s;
                dh[2 * m - 1][k] = c1 * mf * c;
                h[2 * m][k] = c1 * c;
                dh[2 * m][k] = -c1 * mf * s;
            }
        }
        Self { n_modes, nt, h, dh, periodic: Periodic::new(nt) }
    }

    pub fn len(&self) -> usize {
        2 * self.n_modes + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `int_0^{2pi} u h_m dy` for every basis index, exact for trigonometric polynomials of
    /// degree below `nt - n_modes`.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let (a0, a, b) = self.periodic.real_modes(u);
        let mut out = vec![0.0; self.len()];
        out[0] = (2.0 * PI).sqrt() * a0;
        let sp = PI.sqrt();
        for m in 1..=self.n_modes {
            out[2 * m - 1] = sp * b[m - 1];
            out[2 * m] = sp * a[m - 1];
        }
        out
    }

    /// Samples of `sum_j coef_j h_j`.
    pub fn synthesize(&self, coef: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.nt];
        for (j, &a) in coef.iter().enumerate() {
            if a != 0.0 {
                v.iter_mut().zip(&self.h[j]).for_each(|(x, hj)| *x += a * hj);
            }
        }
        v
    }

    /// Derivative coupling `c[m][j] = int h_j' h_m`.
    pub fn derivative_coupling(&self) -> Array2<f64> {
        let m_tot = self.len();
        let mut c = Array2::zeros((m_tot, m_tot));
        for m in 1..=self.n_modes {
            c[[2 * m, 2 * m - 1]] = m as f64;
            c[[2 * m - 1, 2 * m]] = -(m as f64);
        }
        c
    }

    /// Gram matrix of the sampled basis under the quadrature used by [`Basis::project`].
    pub fn gram(&self) -> Array2<f64> {
        let m_tot = self.len();
        let mut g = Array2::zeros((m_tot, m_tot));
        for j in 0..m_tot {
            let p = self.project(&self.h[j]);
            for m in 0..m_tot {
                g[[m, j]] = p[m];
            }
        }
        g
    }
}

/// Projected block two-point problem `A'' + a A' + b A = F`.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub n_modes: usize,
    pub r_grid: Vec<f64>,
    /// Per radial node, `a[m][j]` multiplies `A_j'` in equation `m`.
    pub a: Vec<Array2<f64>>,
    /// Per radial node, `b[m][j]` multiplies `A_j`.
    pub b: Vec<Array2<f64>>,
    pub c: Array2<f64>,
    /// Projected source, `nr x (2N+1)`.
    pub f: Array2<f64>,
    pub g2: Vec<f64>,
    pub robin: f64,
    pub r0: f64,
    /// Coefficients of the `g3` lift, added back after the solve.
    pub lift: Vec<f64>,
}

/// Projects the problem onto `2N+1` modes after removing the Dirichlet lift built from `g3`.
pub fn assemble_galerkin(prob: &LinearizedProblem, n_modes: usize) -> Result<GalerkinSystem> {
    if n_modes < 1 {
        return Err(Error::Parameter("Galerkin truncation N must be at least 1".into()));
    }
    check_dealiasing(prob.nt, n_modes)?;
    let nr = prob.nr();
    if nr < 4 {
        return Err(Error::Parameter("need at least 4 radial nodes".into()));
    }
    let basis = Basis::new(n_modes, prob.nt);
    let per = Periodic::new(prob.nt);
    let (gint, mean) = per.antiderivative(&prob.g3);
    let scale = prob.g3.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if mean.abs() > 1e-9 * scale {
        return Err(Error::Consistency(format!("g3 must have zero mean, got {mean:e}")));
    }
    let g3: Vec<f64> = prob.g3.iter().map(|v| v - mean).collect();
    let anchor = per.eval(&per.spectrum(&gint), prob.f_r1);
    let lift_vals: Vec<f64> = gint.iter().map(|g| g - anchor).collect();
    let lift = basis.project(&lift_vals);
    let dg3 = per.derivative(&g3, 1);
    let m_tot = basis.len();

    let rows: Vec<(Array2<f64>, Array2<f64>, Vec<f64>)> = (0..nr)
        .into_par_iter()
        .map(|i| {
            let k12 = prob.k12.row(i);
            let k22 = prob.k22.row(i);
            let k1 = prob.k1.row(i);
            let k2 = prob.k2.row(i);
            let mut a = Array2::zeros((m_tot, m_tot));
            let mut b = Array2::zeros((m_tot, m_tot));
            let mut u = vec![0.0; prob.nt];
            for j in 0..m_tot {
                let mj2 = (harmonic(j) * harmonic(j)) as f64;
                for k in 0..prob.nt {
                    u[k] = 2.0 * k12[k] * basis.dh[j][k] + k1[k] * basis.h[j][k];
                }
                for (m, v) in basis.project(&u).into_iter().enumerate() {
                    a[[m, j]] = v;
                }
                for k in 0..prob.nt {
                    u[k] = -mj2 * k22[k] * basis.h[j][k] + k2[k] * basis.dh[j][k];
                }
                for (m, v) in basis.project(&u).into_iter().enumerate() {
                    b[[m, j]] = v;
                }
            }
            for k in 0..prob.nt {
                u[k] = prob.f_hat[[i, k]] - k22[k] * dg3[k] - k2[k] * g3[k];
            }
            (a, b, basis.project(&u))
        })
        .collect();
    let mut f = Array2::zeros((nr, m_tot));
    let mut a = Vec::with_capacity(nr);
    let mut b = Vec::with_capacity(nr);
    for (i, (ai, bi, fi)) in rows.into_iter().enumerate() {
        a.push(ai);
        b.push(bi);
        for m in 0..m_tot {
            f[[i, m]] = fi[m];
        }
    }
    let g2_red: Vec<f64> = prob.g2.iter().zip(&g3).map(|(g2, g3)| g2 - prob.robin * g3).collect();
    Ok(GalerkinSystem {
        n_modes,
        r_grid: prob.r_grid.clone(),
        a,
        b,
        c: basis.derivative_coupling(),
        f,
        g2: basis.project(&g2_red),
        robin: prob.robin,
        r0: prob.r_grid[0],
        lift,
    })
}

/// Radial coefficient functions `A_j(y1)` of the truncated expansion.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralField {
    pub n_modes: usize,
    pub r_grid: Vec<f64>,
    /// `nr x (2N+1)`, row-major by radius.
    #[serde(skip)]
    pub coeffs: Array2<f64>,
}

impl SpectralField {
    pub fn zeros(n_modes: usize, r_grid: Vec<f64>) -> Self {
        let nr = r_grid.len();
        Self { n_modes, r_grid, coeffs: Array2::zeros((nr, 2 * n_modes + 1)) }
    }

    /// Projects every row of an `nr x nt` grid function onto the first `2N+1` basis functions.
    pub fn from_grid(g: &Array2<f64>, n_modes: usize, r_grid: Vec<f64>) -> Self {
        let basis = Basis::new(n_modes, g.ncols());
        let mut out = Self::zeros(n_modes, r_grid);
        for (i, row) in g.rows().into_iter().enumerate() {
            let p = basis.project(&row.to_vec());
            out.coeffs.row_mut(i).iter_mut().zip(p).for_each(|(a, b)| *a = b);
        }
        out
    }

    /// Value at radial node `i` and arbitrary angle `y2`.
    pub fn eval(&self, i: usize, y2: f64) -> f64 {
        let row = self.coeffs.row(i);
        let mut s = row[0] / (2.0 * PI).sqrt();
        let c1 = 1.0 / PI.sqrt();
        for m in 1..=self.n_modes {
            let (sn, cs) = (m as f64 * y2).sin_cos();
            s += c1 * (row[2 * m - 1] * sn + row[2 * m] * cs);
        }
        s
    }

    /// Samples on `nr x nt`.
    pub fn to_grid(&self, nt: usize) -> Array2<f64> {
        let basis = Basis::new(self.n_modes, nt);
        let nr = self.r_grid.len();
        let mut out = Array2::zeros((nr, nt));
        for i in 0..nr {
            let v = basis.synthesize(self.coeffs.row(i).as_slice().unwrap());
            out.row_mut(i).iter_mut().zip(v).for_each(|(a, b)| *a = b);
        }
        out
    }

    /// `max_y1 |A_j|` for every basis index.
    pub fn spectrum(&self) -> Vec<f64> {
        self.coeffs
            .axis_iter(Axis(1))
            .map(|col| col.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }

    pub fn spectrum_csv(&self) -> String {
        let mut c = Csv::new(&["j", "max_abs_A"]);
        for (j, v) in self.spectrum().into_iter().enumerate() {
            c.row(&[(j + 1) as f64, v]);
        }
        c.finish()
    }

    /// CSV with `y1, y2, phi, d1 phi, d2 phi` on an `nt`-point angular grid.
    pub fn field_csv(&self, nt: usize) -> String {
        let g = self.to_grid(nt);
        let h = self.r_grid[1] - self.r_grid[0];
        let d1 = radial_derivative(&g, h);
        let d2 = angular_derivative(&g, 1);
        let y = periodic_nodes(nt);
        let mut c = Csv::new(&["y1", "y2", "phi", "d1_phi", "d2_phi"]);
        for i in 0..self.r_grid.len() {
            for k in 0..nt {
                c.row(&[self.r_grid[i], y[k], g[[i, k]], d1[[i, k]], d2[[i, k]]]);
            }
        }
        c.finish()
    }
}

/// Diagnostics of one banded solve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveStats {
    pub unknowns: usize,
    pub relative_residual: f64,
    pub min_pivot: f64,
}

/// Discretizes the block problem with centered differences and solves it with banded LU.
pub fn solve_bvp(sys: &GalerkinSystem) -> Result<(SpectralField, SolveStats)> {
    let nr = sys.r_grid.len();
    let m_tot = 2 * sys.n_modes + 1;
    let h = sys.r_grid[1] - sys.r_grid[0];
    let n = nr * m_tot;
    let mut mat = BandMatrix::zeros(n, 2 * m_tot - 1, 2 * m_tot);
    let mut rhs = vec![0.0; n];
    let idx = |i: usize, j: usize| i * m_tot + j;
    for m in 0..m_tot {
        let row = idx(0, m);
        mat.add(row, idx(0, m), -3.0 * sys.r0);
        mat.add(row, idx(1, m), 4.0 * sys.r0);
        mat.add(row, idx(2, m), -sys.r0);
        for j in 0..m_tot {
            let c = sys.c[[m, j]];
            if c != 0.0 {
                mat.add(row, idx(0, j), 2.0 * h * sys.robin * c);
            }
        }
        rhs[row] = 2.0 * h * sys.g2[m];
    }
    for i in 1..nr - 1 {
        let (a, b) = (&sys.a[i], &sys.b[i]);
        for m in 0..m_tot {
            let row = idx(i, m);
            mat.add(row, idx(i - 1, m), 1.0);
            mat.add(row, idx(i, m), -2.0);
            mat.add(row, idx(i + 1, m), 1.0);
            for j in 0..m_tot {
                let (ajm, bjm) = (a[[m, j]], b[[m, j]]);
                if ajm != 0.0 {
                    mat.add(row, idx(i + 1, j), 0.5 * h * ajm);
                    mat.add(row, idx(i - 1, j), -0.5 * h * ajm);
                }
                if bjm != 0.0 {
                    mat.add(row, idx(i, j), h * h * bjm);
                }
            }
            rhs[row] = h * h * sys.f[[i, m]];
        }
    }
    for m in 0..m_tot {
        let row = idx(nr - 1, m);
        mat.add(row, row, 1.0);
    }
    let (x, lu, rel) = solve_refined(&mat, &rhs)?;
    if rel > 1e-8 {
        return Err(Error::Singular { pivot: lu.min_pivot, row: lu.min_pivot_row });
    }
    let mut coeffs = Array2::zeros((nr, m_tot));
    for i in 0..nr {
        for j in 0..m_tot {
            coeffs[[i, j]] = x[idx(i, j)] + sys.lift[j];
        }
    }
    Ok((
        SpectralField { n_modes: sys.n_modes, r_grid: sys.r_grid.clone(), coeffs },
        SolveStats { unknowns: n, relative_residual: rel, min_pivot: lu.min_pivot },
    ))
}

/// Assembles and solves in one call.
pub fn solve_linearized(prob: &LinearizedProblem, n_modes: usize) -> Result<(SpectralField, SolveStats)> {
    solve_bvp(&assemble_galerkin(prob, n_modes)?)
}

/// Second-order radial derivative of every column.
pub fn radial_derivative(g: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut out = Array2::zeros(g.dim());
    for k in 0..g.ncols() {
        let col: Vec<f64> = g.column(k).to_vec();
        for (i, v) in d1_o2(&col, h).into_iter().enumerate() {
            out[[i, k]] = v;
        }
    }
    out
}

/// Fourth-order radial derivative of every column.
pub fn radial_derivative_o4(g: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut out = Array2::zeros(g.dim());
    for k in 0..g.ncols() {
        let col: Vec<f64> = g.column(k).to_vec();
        for (i, v) in d1_o4(&col, h).into_iter().enumerate() {
            out[[i, k]] = v;
        }
    }
    out
}

/// Spectral angular derivative of every row.
pub fn angular_derivative(g: &Array2<f64>, order: u32) -> Array2<f64> {
    let p = Periodic::new(g.ncols());
    let mut out = Array2::zeros(g.dim());
    for i in 0..g.nrows() {
        let d = p.derivative(g.row(i).as_slice().unwrap(), order);
        out.row_mut(i).iter_mut().zip(d).for_each(|(a, b)| *a = b);
    }
    out
}

/// Shifts every row `i` by `s[i]` in angle: `out(i, t) = g(i, t + s[i])`.
pub fn shift_rows(g: &Array2<f64>, s: &[f64]) -> Array2<f64> {
    let p = Periodic::new(g.ncols());
    let mut out = Array2::zeros(g.dim());
    for i in 0..g.nrows() {
        let d = p.shift(g.row(i).as_slice().unwrap(), s[i]);
        out.row_mut(i).iter_mut().zip(d).for_each(|(a, b)| *a = b);
    }
    out
}

/// `(r, theta)` samples to characteristic coordinates: `out(y1, y2) = field(y1, y2 - f(y1))`.
pub fn to_characteristic_coords(field: &Array2<f64>, f: &[f64]) -> Array2<f64> {
    let s: Vec<f64> = f.iter().map(|v| -v).collect();
    shift_rows(field, &s)
}

/// Inverse of [`to_characteristic_coords`].
pub fn from_characteristic_coords(field: &Array2<f64>, f: &[f64]) -> Array2<f64> {
    shift_rows(field, f)
}

/// L2 norm over `[r0, r1] x [0, 2pi)`: trapezoid in radius, rectangle rule in angle.
pub fn l2_norm(g: &Array2<f64>, h: f64) -> f64 {
    let dt = 2.0 * PI / g.ncols() as f64;
    let rows: Vec<f64> = g.rows().into_iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() * dt).collect();
    trapezoid(&rows, h).max(0.0).sqrt()
}

/// Discrete `H^k` norm, `k <= 4`: spectral angular and centered radial derivatives.
pub fn discrete_sobolev_norm(g: &Array2<f64>, h: f64, k: u32) -> Result<f64> {
    if k > 4 {
        return Err(Error::Parameter(format!("Sobolev order {k} is not supported (max 4)")));
    }
    let mut radial = vec![g.clone()];
    for a in 1..=k as usize {
        radial.push(radial_derivative(&radial[a - 1], h));
    }
    let mut total = 0.0;
    for (a, ra) in radial.iter().enumerate() {
        for b in 0..=(k as usize - a) {
            let d = if b == 0 { ra.clone() } else { angular_derivative(ra, b as u32) };
            let n = l2_norm(&d, h);
            total += n * n;
        }
    }
    Ok(total.sqrt())
}

/// Both sides of the multiplier energy identity plus the resulting a priori bound.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub lhs: f64,
    pub boundary: f64,
    pub volume: f64,
    pub imbalance: f64,
    pub relative_imbalance: f64,
    pub min_v11: f64,
    pub min_v22: f64,
    pub max_abs_v12: f64,
    /// `min(V11, V22) - max|V12|/2`; the bound below needs it positive.
    pub coercivity: f64,
    pub h1_norm: f64,
    pub data_norm: f64,
    pub bound: f64,
    /// `bound / data_norm`, the realized analogue of `C*/sigma*`.
    pub bound_constant: f64,
    /// `h1_norm / data_norm`.
    pub realized_ratio: f64,
    pub bound_respected: bool,
}

/// Evaluates the energy identity for the solved field with multipliers `(l1, l2)`.
pub fn energy_diagnostic(prob: &LinearizedProblem, field: &SpectralField, mult: &MultiplierSet) -> Result<EnergyReport> {
    let nr = prob.nr();
    let nt = prob.nt;
    if mult.l1.len() != nr {
        return Err(Error::Parameter("multipliers live on a different radial grid".into()));
    }
    let h = prob.h();
    let dt = 2.0 * PI / nt as f64;
    let phi = field.to_grid(nt);
    let p1 = radial_derivative(&phi, h);
    let p2 = angular_derivative(&phi, 1);
    let (l1, l2) = (&mult.l1, &mult.l2);
    let dl1 = d1_o2(l1, h);
    let dl2 = d1_o2(l2, h);
    let l1k22: Array2<f64> = Array2::from_shape_fn((nr, nt), |(i, k)| l1[i] * prob.k22[[i, k]]);
    let l2k12: Array2<f64> = Array2::from_shape_fn((nr, nt), |(i, k)| l2[i] * prob.k12[[i, k]]);
    let d1_l1k22 = radial_derivative(&l1k22, h);
    let d1_l2k12 = radial_derivative(&l2k12, h);
    let d2_k12 = angular_derivative(&prob.k12, 1);
    let d2_k22 = angular_derivative(&prob.k22, 1);

    let mut lhs_rows = vec![0.0; nr];
    let mut vol_rows = vec![0.0; nr];
    let (mut min11, mut min22, mut max12) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for i in 0..nr {
        let (mut sl, mut sv) = (0.0, 0.0);
        for k in 0..nt {
            let (a, b) = (p1[[i, k]], p2[[i, k]]);
            sl += prob.f_hat[[i, k]] * (l1[i] * a + l2[i] * b);
            let v11 = l1[i] * prob.k1[[i, k]] - 0.5 * dl1[i] - l1[i] * d2_k12[[i, k]];
            let v12 = prob.k1[[i, k]] * l2[i] - dl2[i] + l1[i] * prob.k2[[i, k]] - l1[i] * d2_k22[[i, k]];
            let v22 = 0.5 * d1_l1k22[[i, k]] - 0.5 * l2[i] * d2_k22[[i, k]] - d1_l2k12[[i, k]]
                + l2[i] * prob.k2[[i, k]];
            min11 = min11.min(v11);
            min22 = min22.min(v22);
            max12 = max12.max(v12.abs());
            sv += v11 * a * a + v12 * a * b + v22 * b * b;
        }
        lhs_rows[i] = sl * dt;
        vol_rows[i] = sv * dt;
    }
    let lhs = trapezoid(&lhs_rows, h);
    let volume = trapezoid(&vol_rows, h);
    let bterm = |i: usize| -> f64 {
        let sq = l1[i].sqrt();
        let mut s = 0.0;
        for k in 0..nt {
            let (a, b) = (p1[[i, k]], p2[[i, k]]);
            let t = sq * a + l2[i] / sq * b;
            let q = -prob.k22[[i, k]] * l1[i] + 2.0 * prob.k12[[i, k]] * l2[i] - l2[i] * l2[i] / l1[i];
            s += t * t + q * b * b;
        }
        0.5 * s * dt
    };
    let boundary = bterm(nr - 1) - bterm(0);
    let imbalance = lhs - boundary - volume;
    let scale = lhs.abs().max(boundary.abs()).max(volume.abs());
    let relative_imbalance = if scale > 0.0 { imbalance.abs() / scale } else { 0.0 };

    let coercivity = min11.min(min22) - 0.5 * max12;
    let fnorm = l2_norm(&prob.f_hat, h);
    let g2n = (prob.g2.iter().map(|v| v * v).sum::<f64>() * dt).sqrt();
    let g3n = (prob.g3.iter().map(|v| v * v).sum::<f64>() * dt).sqrt();
    let lmax = l1.iter().chain(l2.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let q1 = (0..nt)
        .map(|k| {
            let i = nr - 1;
            prob.k22[[i, k]] * l1[i] + l2[i] * l2[i] / l1[i] - 2.0 * prob.k12[[i, k]] * l2[i]
        })
        .fold(0.0f64, f64::max);
    let q0 = l1[0] / (prob.r_grid[0] * prob.r_grid[0]);
    let width = prob.r_grid[nr - 1] - prob.r_grid[0];
    let bound = if coercivity > 0.0 {
        let e = 2f64.sqrt() * lmax * fnorm / coercivity
            + (q1 / (2.0 * coercivity)).sqrt() * g3n
            + (q0 / (2.0 * coercivity)).sqrt() * g2n;
        (1.0 + width) * e + 2.0 * PI * width.sqrt() * g3n
    } else {
        f64::INFINITY
    };
    let h1_norm = discrete_sobolev_norm(&phi, h, 1)?;
    let data_norm = fnorm + g2n + g3n;
    let (bound_constant, realized_ratio) =
        if data_norm > 0.0 { (bound / data_norm, h1_norm / data_norm) } else { (0.0, 0.0) };
    Ok(EnergyReport {
        lhs,
        boundary,
        volume,
        imbalance,
        relative_imbalance,
        min_v11: min11,
        min_v22: min22,
        max_abs_v12: max12,
        coercivity,
        h1_norm,
        data_norm,
        bound,
        bound_constant,
        realized_ratio,
        bound_respected: h1_norm <= bound * (1.0 + 1e-9),
    })
}

/// Manufactured data for `phi = u(y1) cos(2 y2)` on background coefficients, where `u`
/// and its first two derivatives are supplied. Returns the problem with exact source and
/// boundary data attached.
pub fn manufactured_problem(
    c: &CoeffProfile,
    nt: usize,
    l0: f64,
    u: impl Fn(f64) -> [f64; 3],
) -> LinearizedProblem {
    let mut prob = LinearizedProblem::background(c, nt, l0);
    let y = periodic_nodes(nt);
    for i in 0..c.len() {
        let [v, dv, d2v] = u(c.r_grid[i]);
        for k in 0..nt {
            let cs = (2.0 * y[k]).cos();
            prob.f_hat[[i, k]] = (d2v - 4.0 * c.k_b22[i] * v + c.k_b1[i] * dv) * cs
                - 2.0 * c.k_b2[i] * v * (2.0 * y[k]).sin();
        }
    }
    let r0 = c.r0();
    let [v0, dv0, _] = u(r0);
    for k in 0..nt {
        prob.g2[k] = r0 * dv0 * (2.0 * y[k]).cos() - prob.robin * 2.0 * v0 * (2.0 * y[k]).sin();
    }
    prob
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::*;
    use crate::coeffs::*;

    fn asset(n: usize) -> CoeffProfile {
        compute_coeffs(&solve_background(&asset_gas(), ASSET_R0, ASSET_R1, n).unwrap())
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = Basis::new(6, 28);
        let g = b.gram();
        for m in 0..b.len() {
            for j in 0..b.len() {
                let ex = if m == j { 1.0 } else { 0.0 };
                assert!((g[[m, j]] - ex).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn background_blocks_are_diagonal_in_harmonic() {
        let c = asset(33);
        let prob = LinearizedProblem::background(&c, 36, 3.0);
        let sys = assemble_galerkin(&prob, 8).unwrap();
        for i in [0, 10, 32] {
            for m in 0..17 {
                for j in 0..17 {
                    let expect_b = if m == j { -((harmonic(j) * harmonic(j)) as f64) * c.k_b22[i] } else { 0.0 };
                    let expect_a = if m == j { c.k_b1[i] } else { 0.0 };
                    assert!((sys.b[i][[m, j]] - expect_b).abs() < 1e-10 * (1.0 + expect_b.abs()));
                    assert!((sys.a[i][[m, j]] - expect_a).abs() < 1e-12 * (1.0 + expect_a.abs()));
                }
            }
        }
        let c2 = sys.c;
        assert_eq!(c2[[2, 1]], 1.0);
        assert_eq!(c2[[1, 2]], -1.0);
        assert_eq!(c2[[4, 3]], 2.0);
    }

    #[test]
    fn zero_convection_gives_zero_a() {
        let c = asset(17);
        let mut prob = LinearizedProblem::background(&c, 20, 3.0);
        prob.k1.fill(0.0);
        let sys = assemble_galerkin(&prob, 4).unwrap();
        assert!(sys.a.iter().all(|a| a.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn aliasing_rejected() {
        let c = asset(17);
        let prob = LinearizedProblem::background(&c, 20, 3.0);
        assert!(assemble_galerkin(&prob, 8).is_err());
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let c = asset(65);
        let prob = LinearizedProblem::background(&c, 36, 3.0);
        let (f, st) = solve_linearized(&prob, 8).unwrap();
        assert!(f.coeffs.iter().all(|v| v.abs() <= 1e-12));
        assert!(st.relative_residual <= 1e-10);
    }

    #[test]
    fn quadratic_profile_is_reproduced_exactly() {
        // second differences are exact on quadratics; the one-sided Robin stencil too
        let c = asset(65);
        let r1 = c.r1();
        let prob = manufactured_problem(&c, 36, 3.0, |y| {
            let d = y - r1;
            [d * d, 2.0 * d, 2.0]
        });
        let (f, _) = solve_linearized(&prob, 8).unwrap();
        for i in 0..c.len() {
            let d = c.r_grid[i] - r1;
            let ex = d * d * PI.sqrt();
            assert!((f.coeffs[[i, 4]] - ex).abs() < 1e-10, "{i}");
        }
    }

    #[test]
    fn characteristic_coordinates_round_trip() {
        let c = asset(17);
        let nt = 32;
        let y = periodic_nodes(nt);
        let g = Array2::from_shape_fn((c.len(), nt), |(i, k)| (3.0 * y[k]).sin() * c.r_grid[i]);
        let fwd = to_characteristic_coords(&g, &c.f);
        let back = from_characteristic_coords(&fwd, &c.f);
        for (a, b) in g.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
        let zero = vec![0.0; c.len()];
        assert_eq!(to_characteristic_coords(&g, &zero).iter().zip(g.iter()).filter(|(a, b)| (*a - *b).abs() > 1e-14).count(), 0);
    }

    #[test]
    fn sobolev_norms_of_simple_fields() {
        let nr = 101;
        let h = 1.0 / (nr - 1) as f64;
        let nt = 32;
        let y = periodic_nodes(nt);
        let area = 2.0 * PI;
        let cst = Array2::from_elem((nr, nt), 3.0);
        assert!((discrete_sobolev_norm(&cst, h, 0).unwrap() - 3.0 * area.sqrt()).abs() < 1e-12);
        assert!((discrete_sobolev_norm(&cst, h, 2).unwrap() - 3.0 * area.sqrt()).abs() < 1e-12);
        let s = Array2::from_shape_fn((nr, nt), |(_, k)| y[k].sin());
        let n0 = discrete_sobolev_norm(&s, h, 0).unwrap();
        let n1 = discrete_sobolev_norm(&s, h, 1).unwrap();
        assert!(((n1 * n1 - n0 * n0) - area / 2.0).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 0..=4 {
            let v = discrete_sobolev_norm(&s, h, k).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(discrete_sobolev_norm(&s, h, 5).is_err());
    }

    #[test]
    fn energy_identity_balances_under_refinement() {
        let mut imb = Vec::new();
        for n in [65, 129, 257] {
            let c = asset(n);
            let (_, hi) = admissible_l0_interval(&c).unwrap();
            let l0 = hi + 2.0;
            let r1 = c.r1();
            let prob = manufactured_problem(&c, 36, l0, |y| {
                let d = 2.0 * (y - r1);
                [d.sin(), 2.0 * d.cos(), -4.0 * d.sin()]
            });
            let (f, _) = solve_linearized(&prob, 8).unwrap();
            let m = build_multipliers_auto(&c, l0).unwrap();
            let e = energy_diagnostic(&prob, &f, &m).unwrap();
            assert!(e.coercivity > 0.0);
            assert!(e.bound_respected, "{e:?}");
            imb.push(e.relative_imbalance);
        }
        assert!(imb[2] < imb[1] && imb[1] < imb[0], "{imb:?}");
        assert!(imb[2] < 1e-3, "{imb:?}");
    }
}
