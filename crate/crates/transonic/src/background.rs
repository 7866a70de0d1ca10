//! Radial transonic spiral background flow.
//!
//! The state `(rho, U1, U2)` is integrated inward from the outer circle with an adaptive
//! Dormand-Prince scheme; the continuous output is kept so that every downstream module can
//! evaluate the background exactly at arbitrary radii.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gas::{bernoulli, GasParams};
use crate::numerics::linspace;
use crate::ode::{integrate, DenseSolution, Stop, Tolerances};

/// Closed-form sonic data of the background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SonicConstants {
    pub r_c: f64,
    pub rho_c: f64,
    /// Only available in closed form for purely circulatory flows.
    pub r_sharp: Option<f64>,
}

/// `r_c`, `rho_c` and, for `kappa1 = 0`, `r_sharp = |kappa2| / sqrt(2 B0)`.
pub fn sonic_radius_closed_form(gas: &GasParams, kappa1: f64, kappa2: f64) -> SonicConstants {
    let g = gas.gamma;
    let rho_c = (2.0 * (g - 1.0) * gas.b0 / ((g + 1.0) * g * gas.a0)).powf(1.0 / (g - 1.0));
    let r_c = ((g + 1.0) * (kappa1 * kappa1 + kappa2 * kappa2 * rho_c * rho_c)
        / (2.0 * (g - 1.0) * gas.b0 * rho_c * rho_c))
        .sqrt();
    let r_sharp = (kappa1 == 0.0).then(|| kappa2.abs() / (2.0 * gas.b0).sqrt());
    SonicConstants { r_c, rho_c, r_sharp }
}

/// Pointwise background quantities and radial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgPoint {
    pub r: f64,
    pub rho: f64,
    pub u1: f64,
    pub u2: f64,
    pub c2: f64,
    pub m1sq: f64,
    pub m2sq: f64,
    pub drho: f64,
    pub du1: f64,
    pub du2: f64,
}

impl BgPoint {
    pub fn mtot_sq(&self) -> f64 {
        self.m1sq + self.m2sq
    }

    /// `d|M|^2/dr = |M|^2 (2 + (gamma-1)|M|^2) / (r (M1^2 - 1))`.
    pub fn dmtot_sq(&self, gamma: f64) -> f64 {
        let m = self.mtot_sq();
        m * (2.0 + (gamma - 1.0) * m) / (self.r * (self.m1sq - 1.0))
    }

    /// `d(c^2)/dr = (gamma-1) c^2 rho'/rho`.
    pub fn dc2(&self, gamma: f64) -> f64 {
        (gamma - 1.0) * self.c2 * self.drho / self.rho
    }
}

fn rhs(gas: &GasParams, r: f64, y: &[f64; 3]) -> Option<[f64; 3]> {
    let [rho, u1, u2] = *y;
    if !(rho > 0.0) || !rho.is_finite() {
        return None;
    }
    let c2 = gas.a0 * gas.gamma * rho.powf(gas.gamma - 1.0);
    let m1 = u1 * u1 / c2;
    let m2 = u2 * u2 / c2;
    if !(m1 < 1.0) {
        return None;
    }
    let den = r * (1.0 - m1);
    Some([(m1 + m2) / den * rho, -(1.0 + m2) / den * u1, -u2 / r])
}

/// The integrated background, valid on `[r_limit, r1]`.
#[derive(Debug)]
pub struct BackgroundSolution {
    pub gas: GasParams,
    pub r1: f64,
    /// Innermost radius reached before the radial Mach number approached one or the density
    /// approached vacuum.
    pub r_limit: f64,
    pub limit_reason: &'static str,
    dense: DenseSolution<3>,
}

impl BackgroundSolution {
    pub fn integrate(gas: &GasParams, r1: f64, tol: Tolerances) -> Result<Self> {
        if !(r1 > 0.0) {
            return Err(Error::Domain(format!("r1 = {r1} must be positive")));
        }
        let y0 = [gas.rho0, gas.u10, gas.u20];
        let rho_floor = 1e-9 * gas.rho0;
        let mut reason = "minimum radius";
        let out = integrate(
            |r, y| rhs(gas, r, y),
            r1,
            y0,
            1e-3 * r1,
            tol,
            |r, y| {
                let c2 = gas.a0 * gas.gamma * y[0].powf(gas.gamma - 1.0);
                let m1 = y[1] * y[1] / c2;
                r <= 0.0 || m1 > 1.0 - 1e-6 || y[0] < rho_floor
            },
        );
        let (_, r_limit) = out.dense.span();
        if out.stop == Stop::Breakdown || out.stop == Stop::Event {
            let y = out.dense.eval(r_limit);
            let c2 = gas.a0 * gas.gamma * y[0].max(0.0).powf(gas.gamma - 1.0);
            reason = if y[0] < 1e-6 * gas.rho0 {
                "vacuum"
            } else if y[1] * y[1] / c2 > 0.99 {
                "radial Mach number reached one"
            } else {
                "step size collapse"
            };
        }
        if out.stop == Stop::TooManySteps {
            return Err(Error::NonConvergence {
                message: "background integration exceeded the step budget".into(),
                history: vec![],
            });
        }
        Ok(Self { gas: *gas, r1, r_limit, limit_reason: reason, dense: out.dense })
    }

    pub fn kappa1(&self) -> f64 {
        self.r1 * self.gas.rho0 * self.gas.u10
    }

    pub fn kappa2(&self) -> f64 {
        self.r1 * self.gas.u20
    }

    pub fn point(&self, r: f64) -> BgPoint {
        let y = self.dense.eval(r);
        let [rho, u1, u2] = y;
        let g = &self.gas;
        let c2 = g.a0 * g.gamma * rho.powf(g.gamma - 1.0);
        let m1sq = u1 * u1 / c2;
        let m2sq = u2 * u2 / c2;
        let d = rhs(g, r, &y).unwrap_or([f64::NAN; 3]);
        BgPoint { r, rho, u1, u2, c2, m1sq, m2sq, drho: d[0], du1: d[1], du2: d[2] }
    }

    /// Sonic radius located by bisection on `|M|^2 - 1` over the continuous output.
    pub fn sonic_radius_numeric(&self, lo: f64, hi: f64) -> Option<f64> {
        let f = |r: f64| self.point(r).mtot_sq() - 1.0;
        let (mut a, mut b) = (lo, hi);
        let (fa, fb) = (f(a), f(b));
        if fa * fb > 0.0 {
            return None;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (b - a) <= 1e-13 * b.abs() {
                break;
            }
            if f(m) * fa > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

/// Background sampled on a uniform grid of `[r0, r1]`.
#[derive(Debug, Clone, Serialize)]
pub struct BackgroundProfile {
    pub gas: GasParams,
    pub r0: f64,
    pub r1: f64,
    pub r_grid: Vec<f64>,
    pub u_b1: Vec<f64>,
    pub u_b2: Vec<f64>,
    pub rho_b: Vec<f64>,
    pub m_b1_sq: Vec<f64>,
    pub m_b2_sq: Vec<f64>,
    pub m_tot_sq: Vec<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub r_c: f64,
    pub rho_c: f64,
    /// Closed form for circulatory flows, otherwise the detected inner limit of the
    /// integration (not claimed to coincide with the sharp constant).
    pub r_sharp: f64,
    pub r_sharp_is_closed_form: bool,
    /// Sonic radius found by bisection on the numerical solution.
    pub r_c_numeric: f64,
    #[serde(skip)]
    pub solution: Arc<BackgroundSolution>,
}

#[derive(Debug, Clone, Copy)]
pub struct BackgroundOptions {
    pub tol: Tolerances,
}

impl Default for BackgroundOptions {
    fn default() -> Self {
        Self { tol: Tolerances { rtol: 1e-12, atol: 1e-12, hmax: f64::INFINITY } }
    }
}

/// Integrates the background and samples it on `grid_size` uniform nodes of `[r0, r1]`.
pub fn solve_background(gas: &GasParams, r0: f64, r1: f64, grid_size: usize) -> Result<BackgroundProfile> {
    solve_background_with(gas, r0, r1, grid_size, BackgroundOptions::default())
}

pub fn solve_background_with(
    gas: &GasParams,
    r0: f64,
    r1: f64,
    grid_size: usize,
    opts: BackgroundOptions,
) -> Result<BackgroundProfile> {
    if !(r0 > 0.0 && r0 < r1) {
        return Err(Error::Domain(format!("need 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")));
    }
    if grid_size < 8 {
        return Err(Error::Parameter(format!("grid size {grid_size} is too small")));
    }
    let kappa1 = r1 * gas.rho0 * gas.u10;
    let kappa2 = r1 * gas.u20;
    let closed = sonic_radius_closed_form(gas, kappa1, kappa2);
    if let Some(rs) = closed.r_sharp {
        if r0 <= rs {
            return Err(Error::Domain(format!("r0 = {r0} must exceed r_sharp = {rs}")));
        }
    }
    let sol = BackgroundSolution::integrate(gas, r1, opts.tol)?;
    if sol.r_limit >= r0 {
        return Err(Error::Regime(format!(
            "background breaks down at r = {} ({}) before reaching r0 = {r0}",
            sol.r_limit, sol.limit_reason
        )));
    }
    if !(closed.r_c > r0 && closed.r_c < r1) {
        return Err(Error::Domain(format!(
            "sonic radius r_c = {} must lie strictly inside ({r0}, {r1})",
            closed.r_c
        )));
    }
    let r_c_numeric = sol.sonic_radius_numeric(r0, r1).unwrap_or(f64::NAN);
    let (r_sharp, is_closed) = match closed.r_sharp {
        Some(v) => (v, true),
        None => (sol.r_limit, false),
    };
    let solution = Arc::new(sol);
    let mut p = BackgroundProfile {
        gas: *gas,
        r0,
        r1,
        r_grid: vec![],
        u_b1: vec![],
        u_b2: vec![],
        rho_b: vec![],
        m_b1_sq: vec![],
        m_b2_sq: vec![],
        m_tot_sq: vec![],
        kappa1,
        kappa2,
        r_c: closed.r_c,
        rho_c: closed.rho_c,
        r_sharp,
        r_sharp_is_closed_form: is_closed,
        r_c_numeric,
        solution,
    };
    p.fill(linspace(r0, r1, grid_size));
    Ok(p)
}

impl BackgroundProfile {
    fn fill(&mut self, r_grid: Vec<f64>) {
        let pts: Vec<BgPoint> = r_grid.iter().map(|&r| self.solution.point(r)).collect();
        self.u_b1 = pts.iter().map(|p| p.u1).collect();
        self.u_b2 = pts.iter().map(|p| p.u2).collect();
        self.rho_b = pts.iter().map(|p| p.rho).collect();
        self.m_b1_sq = pts.iter().map(|p| p.m1sq).collect();
        self.m_b2_sq = pts.iter().map(|p| p.m2sq).collect();
        self.m_tot_sq = pts.iter().map(|p| p.mtot_sq()).collect();
        self.r_grid = r_grid;
    }

    /// Same background on a different uniform grid, without re-integrating.
    pub fn resampled(&self, grid_size: usize) -> Self {
        let mut p = self.clone();
        p.fill(linspace(self.r0, self.r1, grid_size));
        p
    }

    pub fn len(&self) -> usize {
        self.r_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_grid.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.r_grid[1] - self.r_grid[0]
    }

    pub fn point(&self, r: f64) -> BgPoint {
        self.solution.point(r)
    }

    pub fn points(&self) -> Vec<BgPoint> {
        self.r_grid.iter().map(|&r| self.point(r)).collect()
    }

    pub fn c2_b(&self, i: usize) -> f64 {
        let g = &self.gas;
        g.a0 * g.gamma * self.rho_b[i].powf(g.gamma - 1.0)
    }

    /// CSV with columns `r, U_b1, U_b2, rho_b, M1sq, M2sq, Mtotsq`.
    pub fn to_csv(&self) -> String {
        use crate::io::fmt_num;
        let mut s = String::from("r,U_b1,U_b2,rho_b,M1sq,M2sq,Mtotsq\n");
        for i in 0..self.len() {
            let row = [
                self.r_grid[i],
                self.u_b1[i],
                self.u_b2[i],
                self.rho_b[i],
                self.m_b1_sq[i],
                self.m_b2_sq[i],
                self.m_tot_sq[i],
            ];
            s.push_str(&row.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

/// Structural checks on a sampled background.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InvariantReport {
    pub radial_mach_below_one: bool,
    pub total_mach_decreasing: bool,
    pub sonic_crossings: usize,
    pub single_sonic_crossing: bool,
    pub crossing_brackets_r_c: bool,
    pub nondegenerate_at_sonic_node: bool,
    pub max_rel_defect_kappa1: f64,
    pub max_rel_defect_kappa2: f64,
    pub max_rel_defect_bernoulli: f64,
    pub conservation_ok: bool,
    pub passed: bool,
}

pub fn validate_invariants(p: &BackgroundProfile) -> InvariantReport {
    let n = p.len();
    let radial_mach_below_one = p.m_b1_sq.iter().all(|&m| m < 1.0);
    let total_mach_decreasing = p.m_tot_sq.windows(2).all(|w| w[1] < w[0]);
    let crossings: Vec<usize> =
        (0..n - 1).filter(|&i| (p.m_tot_sq[i] - 1.0) * (p.m_tot_sq[i + 1] - 1.0) <= 0.0).collect();
    let sonic_crossings = crossings.len();
    let crossing_brackets_r_c = crossings
        .first()
        .map(|&i| p.r_grid[i] <= p.r_c && p.r_c <= p.r_grid[i + 1])
        .unwrap_or(false);
    let nondegenerate_at_sonic_node = crossings
        .first()
        .map(|&i| (p.m_tot_sq[i + 1] - p.m_tot_sq[i]) / (p.r_grid[i + 1] - p.r_grid[i]) < 0.0)
        .unwrap_or(false);
    let g = &p.gas;
    let (mut dk1, mut dk2, mut db) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let r = p.r_grid[i];
        if p.kappa1 != 0.0 {
            dk1 = dk1.max(((r * p.rho_b[i] * p.u_b1[i] - p.kappa1) / p.kappa1).abs());
        } else {
            dk1 = dk1.max((r * p.rho_b[i] * p.u_b1[i]).abs());
        }
        dk2 = dk2.max(((r * p.u_b2[i] - p.kappa2) / p.kappa2).abs());
        let q = p.u_b1[i] * p.u_b1[i] + p.u_b2[i] * p.u_b2[i];
        db = db.max(((bernoulli(q, p.rho_b[i], g.a0, g.gamma) - g.b0) / g.b0).abs());
    }
    let conservation_ok = dk1 <= 1e-9 && dk2 <= 1e-9 && db <= 1e-9;
    let single = sonic_crossings == 1;
    let passed = radial_mach_below_one
        && total_mach_decreasing
        && single
        && crossing_brackets_r_c
        && nondegenerate_at_sonic_node
        && conservation_ok;
    InvariantReport {
        radial_mach_below_one,
        total_mach_decreasing,
        sonic_crossings,
        single_sonic_crossing: single,
        crossing_brackets_r_c,
        nondegenerate_at_sonic_node,
        max_rel_defect_kappa1: dk1,
        max_rel_defect_kappa2: dk2,
        max_rel_defect_bernoulli: db,
        conservation_ok,
        passed,
    }
}

/// Test asset: gamma = 1.4 transonic spiral with inward radial velocity.
pub fn asset_gas() -> GasParams {
    GasParams::new(1.4, 1.0 / 1.4, 1.0, -0.2, 0.7).expect("asset parameters are valid")
}

pub const ASSET_R0: f64 = 1.35;
pub const ASSET_R1: f64 = 2.0;

/// Test asset: purely circulatory flow with gamma = 2, A0 = 1/2, B0 = 1, kappa2 = 1.
pub fn circulatory_gas() -> GasParams {
    GasParams::new(2.0, 0.5, 0.875, 0.0, 0.5).expect("circulatory parameters are valid")
}

pub const CIRC_R0: f64 = 1.0;
pub const CIRC_R1: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circulatory_constants() {
        let g = circulatory_gas();
        assert!((g.b0 - 1.0).abs() < 1e-15);
        let s = sonic_radius_closed_form(&g, 0.0, 1.0);
        assert!((s.rho_c - 2.0 / 3.0).abs() < 1e-14);
        assert!((s.r_c - 1.5f64.sqrt()).abs() < 1e-14);
        assert!((s.r_sharp.unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn circulatory_profile_matches_closed_form() {
        let p = solve_background(&circulatory_gas(), CIRC_R0, CIRC_R1, 257).unwrap();
        for i in 0..p.len() {
            let r = p.r_grid[i];
            assert!((p.rho_b[i] - (1.0 - 0.5 / (r * r))).abs() < 1e-8);
            assert_eq!(p.u_b1[i], 0.0);
        }
        assert!((p.r_c_numeric - p.r_c).abs() < 1e-10);
        assert!(validate_invariants(&p).passed);
    }

    #[test]
    fn kappa_limit_of_sonic_radius() {
        let g = asset_gas();
        let k1 = -0.4;
        let s = sonic_radius_closed_form(&g, k1, 1e-9);
        let gm = g.gamma;
        let lim = (gm + 1.0) * k1 * k1 / (2.0 * (gm - 1.0) * g.b0 * s.rho_c * s.rho_c);
        assert!((s.r_c * s.r_c - lim).abs() < 1e-12);
    }

    #[test]
    fn asset_profile_is_valid() {
        let p = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, 1025).unwrap();
        let rep = validate_invariants(&p);
        assert!(rep.passed, "{rep:?}");
        assert!(!p.r_sharp_is_closed_form);
        assert!(p.r_sharp < ASSET_R0);
        assert!((p.r_c_numeric - p.r_c).abs() < 1e-9);
    }

    #[test]
    fn subsonic_truncation_has_no_crossing() {
        let p = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, 129).unwrap();
        let mut q = p.clone();
        let keep: Vec<usize> = (0..p.len()).filter(|&i| p.r_grid[i] > p.r_c).collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        q.r_grid = pick(&p.r_grid);
        q.m_tot_sq = pick(&p.m_tot_sq);
        q.m_b1_sq = pick(&p.m_b1_sq);
        q.m_b2_sq = pick(&p.m_b2_sq);
        q.u_b1 = pick(&p.u_b1);
        q.u_b2 = pick(&p.u_b2);
        q.rho_b = pick(&p.rho_b);
        let rep = validate_invariants(&q);
        assert_eq!(rep.sonic_crossings, 0);
        assert!(!rep.passed);
    }

    #[test]
    fn tampered_profile_fails_conservation() {
        let mut p = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, 129).unwrap();
        let mid = p.len() / 2;
        p.u_b2[mid] = 0.0;
        let rep = validate_invariants(&p);
        assert!(!rep.conservation_ok);
    }

    #[test]
    fn inner_radius_below_sharp_is_rejected() {
        let g = circulatory_gas();
        assert!(matches!(solve_background(&g, 0.7, 2.0, 64), Err(Error::Domain(_))));
    }
}
