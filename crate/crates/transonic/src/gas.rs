//! Polytropic gas closure: sound speed, Bernoulli inversion and Mach numbers.

use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest admissible value of `B - |U|^2/2`; anything below counts as vacuum.
pub const VACUUM_MARGIN: f64 = 1e-14;

/// Gas constants together with the inflow state prescribed on the outer circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GasParams {
    pub gamma: f64,
    pub a0: f64,
    pub b0: f64,
    pub rho0: f64,
    pub u10: f64,
    pub u20: f64,
}

impl GasParams {
    /// Builds the parameter set and derives the Bernoulli constant from the inflow state.
    pub fn new(gamma: f64, a0: f64, rho0: f64, u10: f64, u20: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 3.0) {
            return Err(Error::Domain(format!("gamma = {gamma} must lie in (1, 3)")));
        }
        if !(a0 > 0.0) {
            return Err(Error::Domain(format!("A0 = {a0} must be positive")));
        }
        if !(rho0 > 0.0) {
            return Err(Error::Domain(format!("rho0 = {rho0} must be positive")));
        }
        if !u10.is_finite() || u10 > 0.0 {
            return Err(Error::Domain(format!("U10 = {u10} must be non-positive")));
        }
        if !u20.is_finite() || u20 == 0.0 {
            return Err(Error::Domain("U20 must be nonzero".into()));
        }
        let c0sq = a0 * gamma * rho0.powf(gamma - 1.0);
        if c0sq <= u10 * u10 + u20 * u20 {
            return Err(Error::Regime(format!(
                "inflow is not subsonic: c0^2 = {c0sq} <= |U0|^2 = {}",
                u10 * u10 + u20 * u20
            )));
        }
        let b0 = 0.5 * (u10 * u10 + u20 * u20) + gamma / (gamma - 1.0) * a0 * rho0.powf(gamma - 1.0);
        Ok(Self { gamma, a0, b0, rho0, u10, u20 })
    }

    /// Sound speed squared at the inflow state.
    pub fn c0_sq(&self) -> f64 {
        self.a0 * self.gamma * self.rho0.powf(self.gamma - 1.0)
    }

    /// Sound speed squared from the Bernoulli relation with the reference constant `B0`.
    pub fn c_sq_from_speed(&self, speed_sq: f64) -> Result<f64> {
        c_sq_from_bernoulli(speed_sq, self.b0, self.gamma)
    }
}

/// Local state of the flow; `u3` is zero for planar problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
}

impl FlowState {
    pub fn speed_sq(&self) -> f64 {
        self.u1 * self.u1 + self.u2 * self.u2 + self.u3 * self.u3
    }
}

/// `c^2 = A gamma rho^(gamma-1)`.
pub fn sound_speed_sq(rho: f64, a: f64, gamma: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("density {rho} must be positive")));
    }
    if !(a > 0.0) {
        return Err(Error::Domain(format!("entropy constant {a} must be positive")));
    }
    Ok(a * gamma * rho.powf(gamma - 1.0))
}

fn enthalpy_gap(speed_sq: f64, b: f64) -> Result<f64> {
    let gap = b - 0.5 * speed_sq;
    if !(gap > VACUUM_MARGIN) {
        return Err(Error::Vacuum(format!("B - |U|^2/2 = {gap:e} is not positive")));
    }
    Ok(gap)
}

/// Inverts Bernoulli's law: `rho = ((gamma-1)/(A gamma) (B - |U|^2/2))^(1/(gamma-1))`.
pub fn density_from_bernoulli(speed_sq: f64, b: f64, a: f64, gamma: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("entropy constant {a} must be positive")));
    }
    let gap = enthalpy_gap(speed_sq, b)?;
    Ok(((gamma - 1.0) / (a * gamma) * gap).powf(1.0 / (gamma - 1.0)))
}

/// `c^2 = (gamma-1)(B - |U|^2/2)`, independent of the entropy.
pub fn c_sq_from_bernoulli(speed_sq: f64, b: f64, gamma: f64) -> Result<f64> {
    Ok((gamma - 1.0) * enthalpy_gap(speed_sq, b)?)
}

/// Bernoulli function of a state with given density.
pub fn bernoulli(speed_sq: f64, rho: f64, a: f64, gamma: f64) -> f64 {
    0.5 * speed_sq + gamma / (gamma - 1.0) * a * rho.powf(gamma - 1.0)
}

/// Component Mach numbers `(M1, M2, M3)`; the sound speed comes from the state's density.
pub fn mach_numbers(state: &FlowState, gamma: f64) -> Result<[f64; 3]> {
    enthalpy_gap(state.speed_sq(), state.b)?;
    let c = sound_speed_sq(state.rho, state.a, gamma)?.sqrt();
    Ok([state.u1 / c, state.u2 / c, state.u3 / c])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sound_speed_examples() {
        assert_eq!(sound_speed_sq(1.0, 1.0, 2.0).unwrap(), 2.0);
        let c2 = sound_speed_sq(2.0 / 3.0, 0.5, 2.0).unwrap();
        assert!((c2 - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(sound_speed_sq(0.0, 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn bernoulli_inversion_examples() {
        // gamma = 2, A = 1, rho = 1 at rest: B = gamma/(gamma-1) A rho^(gamma-1) = 2
        let b = bernoulli(0.0, 1.0, 1.0, 2.0);
        assert_eq!(b, 2.0);
        assert!((density_from_bernoulli(0.0, b, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        // circulatory flow at r^2 = 3/2: |U|^2 = 1/r^2
        let rho = density_from_bernoulli(1.0 / 1.5, 1.0, 0.5, 2.0).unwrap();
        assert!((rho - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(density_from_bernoulli(2.0, 1.0, 0.5, 2.0), Err(Error::Vacuum(_))));
    }

    #[test]
    fn mach_examples() {
        let rest = FlowState { u1: 0.0, u2: 0.0, u3: 0.0, rho: 1.0, a: 1.0, b: 2.0 };
        assert_eq!(mach_numbers(&rest, 2.0).unwrap(), [0.0, 0.0, 0.0]);
        let sonic = FlowState { u1: 0.0, u2: (2.0f64 / 3.0).sqrt(), u3: 0.0, rho: 2.0 / 3.0, a: 0.5, b: 1.0 };
        let m = mach_numbers(&sonic, 2.0).unwrap();
        assert!((m[0] * m[0] + m[1] * m[1] - 1.0).abs() < 1e-14);
        let c = 2.0f64.sqrt();
        let s = FlowState { u1: c, u2: 0.0, u3: 0.0, rho: 1.0, a: 1.0, b: 10.0 };
        let m = mach_numbers(&s, 2.0).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15 && m[1] == 0.0);
    }

    #[test]
    fn gas_params_validation() {
        let g = GasParams::new(1.4, 1.0 / 1.4, 1.0, -0.2, 0.7).unwrap();
        let expect = 0.5 * (0.04 + 0.49) + 1.4 / 0.4 / 1.4;
        assert!((g.b0 - expect).abs() < 1e-14);
        assert!(GasParams::new(3.5, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(GasParams::new(1.4, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(matches!(GasParams::new(1.4, 1.0 / 1.4, 1.0, -0.9, 0.9), Err(Error::Regime(_))));
    }
}
