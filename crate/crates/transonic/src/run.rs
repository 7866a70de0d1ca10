//! Run orchestration: builds the solvers from a [`RunConfig`], evaluates the mode's checks
//! and writes the artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::axisym::{solve_axisym, AxisymControls, AxisymData, AxisymField, AxisymReport};
use crate::background::{solve_background, validate_invariants, BackgroundProfile, InvariantReport};
use crate::coeffs::{admissible_l0_interval, build_multipliers_auto, check_l0, compute_coeffs, verify_identities, CoeffProfile, MultiplierSet, IdentityReport};
use crate::config::{Mode, RunConfig};
use crate::error::Result;
use crate::field2d::{euler_residual_excess, vorticity_2d, EulerField2D, ResidualNorms};
use crate::io::{fmt_num, Csv};
use crate::potential::{solve_irrotational, BoundaryPerturbation2D, ConvergenceReport, PotentialControls};
use crate::probes;
use crate::report::{BackgroundSummary, Check, ProbeOutcome, RunReport};
use crate::rotational::{solve_rotational, RotationalControls, RotationalReport};
use crate::sonic::{locate_sonic_2d, locate_sonic_axisym, SonicCurve, SonicSurface};
use crate::spectral::SpectralField;

/// Background, coefficients and the multiplier set for the configured `l0`.
pub struct Setup {
    pub bg: BackgroundProfile,
    pub coeffs: CoeffProfile,
    pub l0: f64,
    pub forbidden: (f64, f64),
    pub mult: MultiplierSet,
}

pub fn background_of(cfg: &RunConfig) -> Result<BackgroundProfile> {
    solve_background(&cfg.gas()?, cfg.r0, cfg.r1, cfg.nr)
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let bg = background_of(cfg)?;
    let coeffs = compute_coeffs(&bg);
    let forbidden = admissible_l0_interval(&coeffs)?;
    let l0 = cfg.l0.unwrap_or(forbidden.1 + 2.0);
    check_l0(&coeffs, l0)?;
    let mult = build_multipliers_auto(&coeffs, l0)?;
    Ok(Setup { bg, coeffs, l0, forbidden, mult })
}

pub fn potential_controls(cfg: &RunConfig, l0: f64) -> PotentialControls {
    PotentialControls {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        trust_scale: cfg.trust_scale,
        max_continuation: cfg.max_continuation,
        ..PotentialControls::new(l0, cfg.n_modes)
    }
}

pub fn rotational_controls(cfg: &RunConfig, l0: f64) -> RotationalControls {
    RotationalControls {
        potential: potential_controls(cfg, l0),
        outer_tol: cfg.outer_tol,
        max_outer: cfg.max_outer,
        streamlines: cfg.streamlines,
    }
}

pub fn axisym_controls(cfg: &RunConfig) -> AxisymControls {
    AxisymControls {
        max_iter: cfg.max_iter,
        tol: cfg.axisym_tol,
        characteristics: cfg.characteristics,
        ..AxisymControls::new(cfg.half_length, cfg.n_axial)
    }
}

pub fn perturbation(cfg: &RunConfig, with_transport: bool) -> BoundaryPerturbation2D {
    let mut bc = BoundaryPerturbation2D::irrotational(cfg.epsilon(), cfg.g0.clone(), cfg.g1.clone());
    if with_transport {
        bc.b1 = cfg.b1.clone();
        bc.a1 = cfg.a1.clone();
    }
    bc
}

pub fn axisym_data(cfg: &RunConfig) -> AxisymData {
    AxisymData {
        epsilon: cfg.epsilon(),
        q1: cfg.q1.clone(),
        q2: cfg.q2.clone(),
        q3: cfg.q3.clone(),
        b1: cfg.axial_b1.clone(),
        a1: cfg.axial_a1.clone(),
    }
}

pub struct BackgroundRun {
    pub setup: Setup,
    pub conservation: InvariantReport,
    pub identities: IdentityReport,
}

pub fn run_background(cfg: &RunConfig) -> Result<BackgroundRun> {
    let setup = setup(cfg)?;
    let conservation = validate_invariants(&setup.bg);
    let identities = verify_identities(&setup.bg)?;
    Ok(BackgroundRun { setup, conservation, identities })
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Solve2D {
    Irrotational(ConvergenceReport),
    Rotational(RotationalReport),
}

pub struct FieldRun2D {
    pub setup: Setup,
    pub field: EulerField2D,
    pub solve: Solve2D,
    pub residual: ResidualNorms,
    pub vorticity_sup: f64,
    pub deviation: f64,
    pub sonic: SonicCurve,
    /// Angular spectrum of `U1 - U_b1`.
    pub spectrum: SpectralField,
}

fn sup(a: &ndarray::Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn finish_2d(setup: Setup, field: EulerField2D, solve: Solve2D, n_modes: usize) -> Result<FieldRun2D> {
    let reference = EulerField2D::background(&setup.bg, field.nt());
    let residual = euler_residual_excess(&field, &reference)?;
    let vorticity_sup = sup(&vorticity_2d(&field));
    let deviation = field.max_velocity_deviation(&setup.bg);
    let sonic = locate_sonic_2d(&field, setup.bg.r_c)?;
    let spectrum = SpectralField::from_grid(&(&field.u1 - &reference.u1), n_modes, field.r_grid.clone());
    Ok(FieldRun2D { setup, field, solve, residual, vorticity_sup, deviation, sonic, spectrum })
}

pub fn run_irrotational(cfg: &RunConfig) -> Result<FieldRun2D> {
    let s = setup(cfg)?;
    let ctl = potential_controls(cfg, s.l0);
    let (it, rep) = solve_irrotational(&s.bg, &s.coeffs, Some(&s.mult), &perturbation(cfg, false), &ctl)?;
    let field = it.to_field(s.bg.gas.b0, s.bg.gas.a0, s.bg.gas.gamma);
    finish_2d(s, field, Solve2D::Irrotational(rep), cfg.n_modes)
}

pub fn run_rotational(cfg: &RunConfig) -> Result<FieldRun2D> {
    let s = setup(cfg)?;
    let ctl = rotational_controls(cfg, s.l0);
    let (field, rep) = solve_rotational(&s.bg, &s.coeffs, Some(&s.mult), &perturbation(cfg, true), &ctl)?;
    finish_2d(s, field, Solve2D::Rotational(rep), cfg.n_modes)
}

pub struct AxisymRun {
    pub bg: BackgroundProfile,
    pub field: AxisymField,
    pub report: AxisymReport,
    pub sonic: SonicSurface,
}

pub fn run_axisym(cfg: &RunConfig) -> Result<AxisymRun> {
    let bg = background_of(cfg)?;
    let (field, report) = solve_axisym(&bg, &axisym_data(cfg), &axisym_controls(cfg))?;
    let sonic = locate_sonic_axisym(&field, bg.r_c)?;
    Ok(AxisymRun { bg, field, report, sonic })
}

fn multiplier_summary(s: &Setup) -> Value {
    let m = &s.mult;
    json!({
        "l0": s.l0,
        "forbidden_l0": [s.forbidden.0, s.forbidden.1],
        "sigma1": m.sigma1,
        "sigma2": m.sigma2,
        "sigma3": m.sigma3,
        "sigma_star": m.sigma_star,
        "boundary_q_r0": m.boundary_q_r0,
        "boundary_q_r1": m.boundary_q_r1,
        "ledger_holds": m.ledger_holds(),
    })
}

fn wanted(cfg: &RunConfig, mode: Mode, name: &str) -> bool {
    if cfg.probes.is_empty() {
        probes::mode_probes(mode).contains(&name)
    } else {
        cfg.probes.iter().any(|p| p == name)
    }
}

fn select(cfg: &RunConfig, mode: Mode, all: Vec<ProbeOutcome>) -> Vec<ProbeOutcome> {
    all.into_iter().filter(|p| wanted(cfg, mode, &p.name)).collect()
}

fn background_probes(r: &BackgroundRun) -> Vec<ProbeOutcome> {
    let c = &r.conservation;
    let id = &r.identities;
    let m = &r.setup.mult;
    vec![
        ProbeOutcome::new(
            "conservation",
            "flux, angular momentum and Bernoulli invariants of the background",
            vec![
                Check::le("kappa1_rel_defect", c.max_rel_defect_kappa1, 1e-9),
                Check::le("kappa2_rel_defect", c.max_rel_defect_kappa2, 1e-9),
                Check::le("bernoulli_rel_defect", c.max_rel_defect_bernoulli, 1e-9),
                Check::flag("single_sonic_crossing", c.single_sonic_crossing),
            ],
        ),
        ProbeOutcome::new(
            "identities",
            "vanishing cross coefficient and second order convergence of the coefficient identities",
            vec![
                Check::le("kb2_ratio", id.kb2_ratio, 1e-7),
                Check::flag("rhs33_positive", id.rhs33_positive),
                Check::flag("orders_near_two", id.passed),
            ],
        ),
        ProbeOutcome::new(
            "multipliers",
            "positivity ledger of the multiplier pair at the configured l0",
            vec![
                Check::gt("sigma_star", m.sigma_star, 0.0),
                Check::gt("boundary_q_r0", m.boundary_q_r0, 0.0),
                Check::gt("boundary_q_r1", m.boundary_q_r1, 0.0),
                Check::flag("ledger_holds", m.ledger_holds()),
            ],
        ),
    ]
}

fn sonic_curve_probe(s: &SonicCurve) -> ProbeOutcome {
    ProbeOutcome::new(
        "sonic",
        "sonic curve located in every angular column",
        vec![Check::le("root_residual", s.max_root_residual, 1e-12), Check::gt("nonexceptional_margin", s.nonexceptional_margin, 0.0)],
    )
}

fn field2d_probes(r: &FieldRun2D) -> Vec<ProbeOutcome> {
    let mut out = Vec::new();
    match &r.solve {
        Solve2D::Irrotational(rep) => {
            out.push(ProbeOutcome::new(
                "convergence",
                "contraction of the potential iteration",
                vec![
                    Check::flag("converged", rep.converged),
                    Check::le("max_contraction", rep.max_contraction, 0.5),
                    Check::le("fixed_point_residual", rep.fixed_point_residual, 1e-9),
                ],
            ));
            out.push(ProbeOutcome::new("irrotational", "curl free velocity", vec![Check::le("vorticity_sup", r.vorticity_sup, 1e-8)]));
        }
        Solve2D::Rotational(rep) => {
            out.push(ProbeOutcome::new(
                "convergence",
                "contraction of the transport and potential iterations",
                vec![
                    Check::le("max_outer_contraction", rep.max_outer_contraction, 0.5),
                    Check::le("inner_max_contraction", rep.inner_max_contraction, 0.5),
                    Check::flag("within_trust_region", rep.within_trust_region),
                ],
            ));
            out.push(ProbeOutcome::new(
                "streamlines",
                "Bernoulli and entropy functions constant along sampled streamlines",
                vec![Check::le("deviation_b", rep.streamline_dev_b, 1e-6), Check::le("deviation_a", rep.streamline_dev_a, 1e-6)],
            ));
            out.push(ProbeOutcome::new(
                "periodicity",
                "transported Bernoulli and entropy functions are periodic",
                vec![Check::le("periodicity_defect", rep.periodicity_defect, 1e-9)],
            ));
        }
    }
    out.push(sonic_curve_probe(&r.sonic));
    out
}

fn axisym_probes(r: &AxisymRun) -> Vec<ProbeOutcome> {
    let rep = &r.report;
    let ch = rep.characteristics.reevaluated;
    vec![
        ProbeOutcome::new("convergence", "contraction of the axisymmetric iteration", vec![Check::le("max_contraction", rep.max_contraction, 0.5)]),
        ProbeOutcome::new(
            "characteristics",
            "swirl, Bernoulli and entropy functions constant along characteristics",
            vec![Check::le("r_u2", ch[0], 1e-8), Check::le("bernoulli", ch[1], 1e-8), Check::le("entropy", ch[2], 1e-8)],
        ),
        ProbeOutcome::new("tail", "far field deviation decays along the strip", vec![Check::lt("tail_end_minus_half", rep.tail_end - rep.tail_half, 0.0)]),
        ProbeOutcome::new(
            "barrier",
            "maximum principle bound with the constructed barrier",
            vec![Check::flag("bound_respected", rep.barrier.bound_respected), Check::le("max_principle_gap", rep.barrier.max_principle_gap, 0.0)],
        ),
        ProbeOutcome::new(
            "sonic-tail",
            "sonic surface returns to the background sonic radius at the strip ends",
            vec![Check::le("dev_end", r.sonic.dev_end, 1e-4), Check::le("root_residual", r.sonic.max_root_residual, 1e-12)],
        ),
    ]
}

/// Wall-clock record written next to the report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub stages: Vec<(String, f64)>,
}

/// What a single (non-sweep) run contributes to a sweep table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub deviation: f64,
    pub sonic_deviation: f64,
    pub contraction: f64,
}

struct Outcome {
    report: RunReport,
    timing: Timing,
    point: Option<SweepPoint>,
}

fn write(dir: &Path, name: &str, text: &str, report: &mut RunReport) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    report.artifacts.push(name.to_string());
    Ok(())
}

fn execute_mode(cfg: &RunConfig, mode: Mode, dir: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(dir)?;
    let start = Instant::now();
    let mut report = RunReport::new(mode.name(), cfg.echo());
    let mut timing = Timing::default();
    let mut point = None;
    match mode {
        Mode::Background => {
            let r = run_background(cfg)?;
            report.background = Some(BackgroundSummary::of(&r.setup.bg));
            report.results = json!({
                "conservation": r.conservation,
                "identities": r.identities,
                "multipliers": multiplier_summary(&r.setup),
            });
            report.sonic = Some(json!({ "r_c": r.setup.bg.r_c, "r_c_numeric": r.setup.bg.r_c_numeric }));
            report.probes = select(cfg, mode, background_probes(&r));
            write(dir, "fields.csv", &r.setup.bg.to_csv(), &mut report)?;
            write(dir, "coefficients.csv", &r.setup.coeffs.to_csv(), &mut report)?;
        }
        Mode::Irrotational | Mode::Rotational => {
            let r = if mode == Mode::Irrotational { run_irrotational(cfg)? } else { run_rotational(cfg)? };
            report.background = Some(BackgroundSummary::of(&r.setup.bg));
            report.results = json!({
                "solver": r.solve,
                "multipliers": multiplier_summary(&r.setup),
                "euler_residual": r.residual,
                "vorticity_sup": r.vorticity_sup,
                "max_velocity_deviation": r.deviation,
            });
            report.sonic = Some(json!({
                "r_ref": r.sonic.r_ref,
                "max_dev": r.sonic.max_dev,
                "max_dev_prime": r.sonic.max_dev_prime,
                "c1_deviation": r.sonic.c1_deviation,
                "max_root_residual": r.sonic.max_root_residual,
                "nonexceptional_margin": r.sonic.nonexceptional_margin,
            }));
            report.probes = select(cfg, mode, field2d_probes(&r));
            let contraction = match &r.solve {
                Solve2D::Irrotational(rep) => rep.max_contraction,
                Solve2D::Rotational(rep) => rep.max_outer_contraction,
            };
            point = Some(SweepPoint { epsilon: cfg.epsilon(), deviation: r.deviation, sonic_deviation: r.sonic.c1_deviation, contraction });
            write(dir, "fields.csv", &r.field.to_csv()?, &mut report)?;
            write(dir, "sonic.csv", &r.sonic.to_csv(), &mut report)?;
            write(dir, "spectrum.csv", &r.spectrum.spectrum_csv(), &mut report)?;
        }
        Mode::Axisym => {
            let r = run_axisym(cfg)?;
            report.background = Some(BackgroundSummary::of(&r.bg));
            report.results = serde_json::to_value(&r.report).expect("report serializes");
            report.sonic = Some(json!({
                "r_ref": r.sonic.r_ref,
                "max_dev": r.sonic.max_dev,
                "dev_half": r.sonic.dev_half,
                "dev_end": r.sonic.dev_end,
                "tail_dev": r.sonic.tail_dev,
                "max_root_residual": r.sonic.max_root_residual,
                "nonexceptional_margin": r.sonic.nonexceptional_margin,
            }));
            report.probes = select(cfg, mode, axisym_probes(&r));
            point = Some(SweepPoint {
                epsilon: cfg.epsilon(),
                deviation: r.report.max_deviation,
                sonic_deviation: r.sonic.max_dev,
                contraction: r.report.max_contraction,
            });
            write(dir, "fields.csv", &r.field.to_csv()?, &mut report)?;
            write(dir, "sonic.csv", &r.sonic.to_csv(), &mut report)?;
        }
        Mode::Sweep => return execute_sweep(cfg, dir),
        Mode::Verify => {
            let names: Vec<&str> = if cfg.probes.is_empty() {
                probes::ACCEPTANCE.iter().map(|(n, _)| *n).collect()
            } else {
                cfg.probes.iter().map(String::as_str).collect()
            };
            for name in names {
                let t = Instant::now();
                report.probes.push(probes::acceptance(name)?);
                timing.stages.push((name.to_string(), t.elapsed().as_secs_f64()));
            }
        }
    }
    report.finalize();
    report.artifacts.push("report.json".into());
    report.write_to(&dir.join("report.json"))?;
    timing.total_seconds = start.elapsed().as_secs_f64();
    std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n")?;
    Ok(Outcome { report, timing, point })
}

/// Linearity of the sweep table: each quantity grows like epsilon within `tol`.
pub fn linearity_checks(points: &[SweepPoint], tol: f64) -> Vec<Check> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let ratio = w[1].epsilon / w[0].epsilon;
        let tag = format!("{}->{}", fmt_num(w[0].epsilon), fmt_num(w[1].epsilon));
        out.push(Check::near(&format!("deviation_ratio_{tag}"), w[1].deviation / w[0].deviation / ratio, 1.0, tol));
        out.push(Check::near(&format!("sonic_ratio_{tag}"), w[1].sonic_deviation / w[0].sonic_deviation / ratio, 1.0, tol));
    }
    out
}

fn execute_sweep(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let start = Instant::now();
    let mut report = RunReport::new(Mode::Sweep.name(), cfg.echo());
    let mut timing = Timing::default();
    let mut points = Vec::new();
    let mut table = Csv::new(&["epsilon", "deviation", "sonic_deviation", "contraction"]);
    for &eps in &cfg.epsilon {
        let mut child = cfg.clone();
        child.mode = cfg.sweep_base;
        child.epsilon = vec![eps];
        child.probes.clear();
        let sub = format!("eps-{}", fmt_num(eps));
        let out = execute_mode(&child, cfg.sweep_base, &dir.join(&sub))?;
        let p = out.point.expect("field modes produce a sweep point");
        table.row(&[p.epsilon, p.deviation, p.sonic_deviation, p.contraction]);
        points.push(p);
        for mut probe in out.report.probes {
            probe.name = format!("{sub}/{}", probe.name);
            report.probes.push(probe);
        }
        report.artifacts.extend(out.report.artifacts.iter().map(|a| format!("{sub}/{a}")));
        if report.background.is_none() {
            report.background = out.report.background;
        }
        timing.stages.push((sub, out.timing.total_seconds));
    }
    report.results = json!({ "base": cfg.sweep_base.name(), "points": points });
    if wanted(cfg, Mode::Sweep, "linearity") {
        report.probes.push(ProbeOutcome::new("linearity", "deviation from the background scales linearly in epsilon", linearity_checks(&points, 0.25)));
    }
    write(dir, "sweep.csv", &table.finish(), &mut report)?;
    report.finalize();
    report.artifacts.push("report.json".into());
    report.write_to(&dir.join("report.json"))?;
    timing.total_seconds = start.elapsed().as_secs_f64();
    std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n")?;
    Ok(Outcome { report, timing, point: None })
}

/// Runs the configured mode into `dir` and returns the report that was written there.
pub fn execute_in(cfg: &RunConfig, dir: &Path) -> Result<RunReport> {
    Ok(execute_mode(cfg, cfg.mode, dir)?.report)
}

/// Runs into the configured output directory.
pub fn execute(cfg: &RunConfig) -> Result<RunReport> {
    execute_in(cfg, &PathBuf::from(&cfg.out_dir))
}
