use proptest::prelude::*;
use transonic::background::*;
use transonic::coeffs::*;
use transonic::spectral::*;

fn coeffs(n: usize) -> CoeffProfile {
    compute_coeffs(&solve_background(&asset_gas(), ASSET_R0, ASSET_R1, n).unwrap())
}

fn sine(r1: f64, k: f64) -> impl Fn(f64) -> [f64; 3] {
    move |y| {
        let d = k * (y - r1);
        [d.sin(), k * d.cos(), -k * k * d.sin()]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solution_is_linear_in_the_data(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let c = coeffs(65);
        let l0 = admissible_l0_interval(&c).unwrap().1 + 2.0;
        let nt = 36;
        let p1 = manufactured_problem(&c, nt, l0, sine(c.r1(), 2.0));
        let p2 = manufactured_problem(&c, nt, l0, sine(c.r1(), 3.0));
        let mut mix = p1.clone();
        mix.f_hat = &p1.f_hat * a + &p2.f_hat * b;
        mix.g2 = p1.g2.iter().zip(&p2.g2).map(|(x, y)| a * x + b * y).collect();
        let (s1, _) = solve_linearized(&p1, 8).unwrap();
        let (s2, _) = solve_linearized(&p2, 8).unwrap();
        let (sm, _) = solve_linearized(&mix, 8).unwrap();
        let expect = &s1.coeffs * a + &s2.coeffs * b;
        let scale = expect.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in sm.coeffs.iter().zip(expect.iter()) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn manufactured_error_is_second_order() {
    let mut errs = Vec::new();
    for n in [65, 129, 257] {
        let c = coeffs(n);
        let l0 = admissible_l0_interval(&c).unwrap().1 + 2.0;
        let u = sine(c.r1(), 2.0);
        let (f, st) = solve_linearized(&manufactured_problem(&c, 36, l0, &u), 8).unwrap();
        assert!(st.relative_residual < 1e-10);
        let e = (0..c.len()).map(|i| (f.coeffs[[i, 4]] - u(c.r_grid[i])[0] * std::f64::consts::PI.sqrt()).abs()).fold(0.0, f64::max);
        errs.push(e);
    }
    for w in errs.windows(2) {
        let p = (w[0] / w[1]).log2();
        assert!((p - 2.0).abs() < 0.2, "{errs:?}");
    }
}

#[test]
fn spectrum_of_a_single_harmonic_is_sparse() {
    let c = coeffs(33);
    let l0 = admissible_l0_interval(&c).unwrap().1 + 2.0;
    let (f, _) = solve_linearized(&manufactured_problem(&c, 36, l0, sine(c.r1(), 2.0)), 8).unwrap();
    let s = f.spectrum();
    assert_eq!(s.len(), 17);
    let peak = s[4];
    assert!(s.iter().enumerate().all(|(j, v)| j == 4 || j == 3 || *v < 1e-6 * peak), "{s:?}");
    let back = SpectralField::from_grid(&f.to_grid(36), 8, f.r_grid.clone());
    for (x, y) in back.coeffs.iter().zip(f.coeffs.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
    assert_eq!(f.spectrum_csv().lines().count(), 18);
}
