//! Dormand-Prince 5(4) integrator with continuous (dense) output.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed step magnitude.
    pub hmax: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-11, hmax: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
struct Segment<const N: usize> {
    x0: f64,
    h: f64,
    rc: [[f64; N]; 5],
}

/// Piecewise quartic interpolant built from accepted steps.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    segments: Vec<Segment<N>>,
    x_start: f64,
    x_end: f64,
}

/// Why the integration stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    Reached,
    /// The state left the admissible set (the callback rejected it) and the step size collapsed.
    Breakdown,
    /// The user stop predicate fired after an accepted step.
    Event,
    TooManySteps,
}

#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub dense: DenseSolution<N>,
    pub stop: Stop,
    pub accepted: usize,
    pub rejected: usize,
}

impl<const N: usize> DenseSolution<N> {
    /// End points in integration order.
    pub fn span(&self) -> (f64, f64) {
        (self.x_start, self.x_end)
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = if self.x_start <= self.x_end {
            (self.x_start, self.x_end)
        } else {
            (self.x_end, self.x_start)
        };
        x >= lo - 1e-14 * hi.abs().max(1.0) && x <= hi + 1e-14 * hi.abs().max(1.0)
    }

    pub fn eval(&self, x: f64) -> [f64; N] {
        let forward = self.x_end >= self.x_start;
        // segments are ordered along the integration direction
        let idx = self.segments.partition_point(|s| {
            let end = s.x0 + s.h;
            if forward {
                end < x
            } else {
                end > x
            }
        });
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        let t = (x - seg.x0) / seg.h;
        let t1 = 1.0 - t;
        let mut y = [0.0; N];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = seg.rc[0][i]
                + t * (seg.rc[1][i] + t1 * (seg.rc[2][i] + t * (seg.rc[3][i] + t1 * seg.rc[4][i])));
        }
        y
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction).
///
/// `f` returns `None` when the state is outside its domain; the step is then retried
/// with a smaller size. `stop` is checked after each accepted step.
pub fn integrate<const N: usize, F, S>(
    mut f: F,
    x0: f64,
    y0: [f64; N],
    x1: f64,
    tol: Tolerances,
    mut stop: S,
) -> Outcome<N>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    S: FnMut(f64, &[f64; N]) -> bool,
{
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let span = (x1 - x0).abs();
    let hmin = 1e-13 * span.max(x0.abs()).max(1e-300);
    let mut h = (1e-3 * span).min(tol.hmax);
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y).expect("initial state must be admissible");
    let mut segments = Vec::new();
    let mut accepted = 0;
    let mut rejected = 0;
    let mut outcome = Stop::Reached;

    loop {
        if (x1 - x) * dir <= 1e-15 * span {
            break;
        }
        if accepted + rejected > 2_000_000 {
            outcome = Stop::TooManySteps;
            break;
        }
        if h < hmin {
            outcome = Stop::Breakdown;
            break;
        }
        let hs = dir * h.min((x1 - x).abs());
        let attempt = (|| {
            let k2 = f(x + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]))?;
            let k3 = f(x + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(x + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(
                x + C5 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = f(
                x + hs,
                &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )?;
            let ynew = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(x + hs, &ynew)?;
            Some((k2, k3, k4, k5, k6, k7, ynew))
        })();
        let Some((_k2, k3, k4, k5, k6, k7, ynew)) = attempt else {
            rejected += 1;
            h *= 0.25;
            continue;
        };
        let mut err = 0.0;
        for i in 0..N {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / N as f64).sqrt();
        if err <= 1.0 {
            let mut rc = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = ynew[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                rc[0][i] = y[i];
                rc[1][i] = ydiff;
                rc[2][i] = bspl;
                rc[3][i] = ydiff - hs * k7[i] - bspl;
                rc[4][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            segments.push(Segment { x0: x, h: hs, rc });
            x += hs;
            y = ynew;
            k1 = k7;
            accepted += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(tol.hmax);
            if stop(x, &y) {
                outcome = Stop::Event;
                break;
            }
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Outcome { dense: DenseSolution { segments, x_start: x0, x_end: x }, stop: outcome, accepted, rejected }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_backward() {
        // y' = y on [0, -2], y(0) = 1
        let out = integrate(|_, y: &[f64; 1]| Some([y[0]]), 0.0, [1.0], -2.0, Tolerances::default(), |_, _| false);
        assert_eq!(out.stop, Stop::Reached);
        for &x in &[-0.3, -1.0, -1.77, -2.0] {
            let y = out.dense.eval(x)[0];
            assert!((y - f64::exp(x)).abs() < 1e-10, "x={x} y={y}");
        }
    }

    #[test]
    fn order_five_under_step_refinement() {
        let tol = |h| Tolerances { rtol: 1.0, atol: 1.0, hmax: h };
        let err = |h: f64| {
            let out = integrate(|x, _y: &[f64; 1]| Some([x.cos()]), 0.0, [0.0], 3.0, tol(h), |_, _| false);
            (out.dense.eval(3.0)[0] - 3f64.sin()).abs()
        };
        let ratio = err(0.2) / err(0.1);
        assert!(ratio > 20.0, "ratio {ratio}");
    }

    #[test]
    fn breakdown_when_domain_is_left() {
        // y' = -1/(2y): y = sqrt(1 - x), undefined beyond x = 1
        let out = integrate(
            |_, y: &[f64; 1]| if y[0] > 1e-6 { Some([-0.5 / y[0]]) } else { None },
            0.0,
            [1.0],
            2.0,
            Tolerances::default(),
            |_, _| false,
        );
        assert_eq!(out.stop, Stop::Breakdown);
        let (_, end) = out.dense.span();
        assert!(end > 0.99 && end < 1.0 + 1e-6, "end {end}");
    }
}
