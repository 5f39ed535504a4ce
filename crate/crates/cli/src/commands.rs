//! The four subcommands. Each returns its summary record and writes its files into `out`.

use std::path::Path;

use kpo_core::dynamics::{evolve_in_frames, Carried, FrameConfig, IntegratorConfig, Monitors};
use kpo_core::fock::{FockSpace, Operator};
use kpo_core::model::{lindblad_ops, KpoHamiltonians, KpoParams, LabFrameParams};
use kpo_core::oracle::{
    adiabatic_metric_from, eigensystem, parity_labels_of, rabi_frequency_analytic, rwa_equivalence_check, suggest_level,
    AdiabaticMetric, EigenSystem, TwoPhotonLine,
};
use kpo_core::spectroscopy::{
    band_around, check_nyquist, estimate_condition, extract_rabi, linspace, power_spectrum, sweep, Experiment, Spectrum,
    SweepOutput,
};
use serde::Serialize;

use crate::config::{RunConfig, METADATA_FORMAT};
use crate::output::{ensure_dir, signal_csv, spectrum_csv, write_json, write_text};
use crate::CliError;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exact spectrum of `H_QA(s1)` and the quantities derived from it.
pub struct Analysis {
    pub params: KpoParams,
    pub space: FockSpace,
    pub hams: KpoHamiltonians,
    pub h1: Operator,
    pub eig: EigenSystem,
    /// `H_P - H_D`.
    pub hdot: Operator,
    pub parity: Option<Vec<i32>>,
    pub metric: AdiabaticMetric,
}

impl Analysis {
    pub fn new(cfg: &RunConfig, space: &FockSpace) -> Result<Self, CliError> {
        let params = cfg.params()?;
        let hams = KpoHamiltonians::build(&params, space)?;
        let schedule = cfg.schedule(0.0, 0.0);
        let h1 = hams.interpolate(schedule.a_of_s(schedule.s1));
        let eig = eigensystem(&h1)?;
        let hdot = hams.conventional_derivative();
        let parity = if params.conserves_parity() { Some(parity_labels_of(&eig)?) } else { None };
        let level = match cfg.level {
            Some(m) => m,
            None => suggest_level(&eig, &hdot, parity.as_deref())
                .ok_or_else(|| CliError::Config("no excited level couples to the ground level".into()))?,
        };
        if level >= eig.len() {
            return Err(CliError::Config(format!("level {level} exceeds the {} retained levels", eig.len())));
        }
        let metric = adiabatic_metric_from(&eig, &hdot, level, schedule.s1)?;
        Ok(Self { params, space: space.clone(), hams, h1, eig, hdot, parity, metric })
    }

    pub fn target_line(&self, lambda: f64) -> LineSummary {
        LineSummary { levels: [0, self.metric.level], coupling: lambda.abs() * self.metric.numerator, center: self.metric.gap }
    }

    pub fn pair_line(&self, lambda: f64, pair: [usize; 2]) -> Result<LineSummary, CliError> {
        let [n, m] = pair;
        if n >= self.eig.len() || m >= self.eig.len() {
            return Err(CliError::Config(format!("overlays.pair ({n}, {m}) out of range")));
        }
        let element = self.eig.element(&self.hdot, m, n).norm();
        Ok(LineSummary { levels: pair, coupling: lambda.abs() * element, center: self.eig.energies[m] - self.eig.energies[0] })
    }

    pub fn two_photon_line(&self, lambda: f64, pair: [usize; 2]) -> Result<TwoPhotonSummary, CliError> {
        let [n, k] = pair;
        let line = TwoPhotonLine::new(&self.eig, &self.hams.generator, (n, k))?;
        // The coupling falls off as 1/omega; record it at omega = 1.
        let at_one = line.at(lambda, 1.0)?;
        Ok(TwoPhotonSummary {
            levels: pair,
            g: lambda.abs(),
            splitting: self.eig.energies[k] - self.eig.energies[n],
            coefficient: at_one.element.norm(),
        })
    }
}

/// `Omega(omega) = sqrt(coupling^2 + (omega - center)^2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LineSummary {
    pub levels: [usize; 2],
    pub coupling: f64,
    pub center: f64,
}

impl LineSummary {
    pub fn at(&self, omega: f64) -> f64 {
        rabi_frequency_analytic(omega, 1.0, self.coupling, self.center)
    }
}

/// `Omega(omega) = sqrt((splitting - 2 omega)^2 + (coefficient / omega)^2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoPhotonSummary {
    pub levels: [usize; 2],
    pub g: f64,
    pub splitting: f64,
    pub coefficient: f64,
}

impl TwoPhotonSummary {
    pub fn at(&self, omega: f64) -> f64 {
        (self.splitting - 2.0 * omega).hypot(self.coefficient / omega)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lines {
    pub target: LineSummary,
    pub pair: Option<LineSummary>,
    pub two_photon: Option<TwoPhotonSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curves {
    pub omega: Vec<f64>,
    pub target: Vec<f64>,
    pub pair: Option<Vec<f64>>,
    pub two_photon: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSummary {
    pub format: String,
    pub version: String,
    pub name: String,
    pub s1: f64,
    pub a_s1: f64,
    pub lambda: f64,
    pub level: usize,
    pub energies: Vec<f64>,
    pub parity: Option<Vec<i32>>,
    pub gap: f64,
    pub transition_element: f64,
    pub value_exact: f64,
    pub lines: Lines,
    pub curves: Curves,
    pub config: RunConfig,
}

fn lines_for(cfg: &RunConfig, an: &Analysis) -> Result<Lines, CliError> {
    let lambda = cfg.schedule.lambda;
    Ok(Lines {
        target: an.target_line(lambda),
        pair: cfg.overlays.pair.map(|p| an.pair_line(lambda, p)).transpose()?,
        two_photon: cfg.overlays.two_photon.map(|p| an.two_photon_line(lambda, p)).transpose()?,
    })
}

fn curves_for(lines: &Lines, omega: &[f64]) -> Curves {
    Curves {
        omega: omega.to_vec(),
        target: omega.iter().map(|&w| lines.target.at(w)).collect(),
        pair: lines.pair.as_ref().map(|l| omega.iter().map(|&w| l.at(w)).collect()),
        two_photon: lines.two_photon.as_ref().map(|l| omega.iter().map(|&w| l.at(w)).collect()),
    }
}

/// Exact spectrum, gap, transition element, metric and analytic lines; writes `summary.json`.
pub fn run_oracle(cfg: &RunConfig, out: &Path) -> Result<OracleSummary, CliError> {
    cfg.validate()?;
    let space = cfg.space()?;
    let an = Analysis::new(cfg, &space)?;
    let lines = lines_for(cfg, &an)?;
    let omega = cfg.omega_grid(an.metric.gap);
    let summary = OracleSummary {
        format: "kpoqa-oracle".into(),
        version: VERSION.into(),
        name: cfg.name.clone(),
        s1: cfg.schedule.s1,
        a_s1: 1.0 - cfg.schedule.s1,
        lambda: cfg.schedule.lambda,
        level: an.metric.level,
        energies: an.eig.energies.clone(),
        parity: an.parity.clone(),
        gap: an.metric.gap,
        transition_element: an.metric.numerator,
        value_exact: an.metric.value,
        curves: curves_for(&lines, &omega),
        lines,
        config: cfg.clone(),
    };
    ensure_dir(out)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorReport {
    pub drift: f64,
    pub min_eigenvalue: f64,
    pub hermiticity: f64,
    pub parity_drift: f64,
    pub truncation_loss: f64,
    pub steps: usize,
}

impl From<&Monitors> for MonitorReport {
    fn from(m: &Monitors) -> Self {
        Self {
            drift: m.drift,
            min_eigenvalue: m.min_eigenvalue,
            hermiticity: m.hermiticity,
            parity_drift: m.parity_drift,
            truncation_loss: m.truncation_loss,
            steps: m.steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridReport {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub window: String,
    pub mean_subtract: bool,
    pub pad: usize,
    pub bin_width: f64,
    pub spacing: f64,
    pub max_frequency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub level: usize,
    pub gap: f64,
    pub omega: GridReport,
    pub tau: GridReport,
    pub spectrum: Option<SpectrumReport>,
    pub anneal: MonitorReport,
    pub dwell: MonitorReport,
    pub dt: f64,
    pub dwell_levels: usize,
    pub ground_fidelity: f64,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub format: String,
    pub version: String,
    pub config: RunConfig,
    pub run: RunReport,
}

/// Sweep results shared by `sweep` and `estimate`.
pub struct SweepRun {
    pub analysis: Analysis,
    pub lines: Lines,
    pub output: SweepOutput,
    pub spectrum: Option<Spectrum>,
    pub metadata: Metadata,
}

fn grid_report(v: &[f64]) -> GridReport {
    GridReport { start: v[0], stop: v[v.len() - 1], points: v.len() }
}

fn sweep_run(cfg: &RunConfig, out: &Path, command: &str) -> Result<SweepRun, CliError> {
    cfg.validate()?;
    let space = cfg.space()?;
    let an = Analysis::new(cfg, &space)?;
    let lines = lines_for(cfg, &an)?;
    let omega = cfg.omega_grid(an.metric.gap);
    let taus = cfg.tau_grid();
    let predicted: Vec<f64> = omega.iter().map(|&w| lines.target.at(w)).collect();
    check_nyquist(&taus, &predicted)?;
    let observable = cfg.observable(&space)?;
    let schedule = cfg.schedule(0.0, taus[taus.len() - 1]);
    let exp = Experiment::new(&an.params, &space, &schedule, &observable, &cfg.settings())?;
    let output = sweep(&exp, &omega, &taus, &cfg.observable_name(), cfg.threads)?;
    let spectrum = if taus.len() >= 2 { Some(power_spectrum(&output.grid, &cfg.spectrum_options())?) } else { None };

    ensure_dir(out)?;
    write_text(&out.join("signal.csv"), &signal_csv(&output.grid))?;
    let spec_text = match &spectrum {
        Some(s) => spectrum_csv(s, cfg.spectrum.max_frequency),
        None => "omega,Omega,power\n".to_string(),
    };
    write_text(&out.join("spectrum.csv"), &spec_text)?;
    let metadata = Metadata {
        format: METADATA_FORMAT.into(),
        version: VERSION.into(),
        config: cfg.clone(),
        run: RunReport {
            command: command.into(),
            level: an.metric.level,
            gap: an.metric.gap,
            omega: grid_report(&omega),
            tau: grid_report(&taus),
            spectrum: spectrum.as_ref().map(|s| SpectrumReport {
                window: format!("{:?}", cfg.spectrum.window).to_lowercase(),
                mean_subtract: cfg.spectrum.mean_subtract,
                pad: s.pad,
                bin_width: s.bin_width,
                spacing: s.spacing(),
                max_frequency: cfg.spectrum.max_frequency,
            }),
            anneal: (&output.anneal).into(),
            dwell: (&output.dwell).into(),
            dt: output.dt,
            dwell_levels: output.dwell_levels,
            ground_fidelity: output.ground_fidelity,
            files: vec!["signal.csv".into(), "spectrum.csv".into()],
        },
    };
    write_json(&out.join("metadata.json"), &metadata)?;
    Ok(SweepRun { analysis: an, lines, output, spectrum, metadata })
}

/// Runs the `(omega, tau)` sweep; writes `signal.csv`, `spectrum.csv` and `metadata.json`.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<SweepRun, CliError> {
    sweep_run(cfg, out, "sweep")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub format: String,
    pub version: String,
    pub status: String,
    pub message: Option<String>,
    pub level: usize,
    pub lambda: f64,
    pub value_est: Option<f64>,
    pub numerator_est: Option<f64>,
    pub gap_est: Option<f64>,
    pub value_exact: f64,
    pub numerator_exact: f64,
    pub gap_exact: f64,
    pub relative_error: Option<f64>,
    pub bin_width: f64,
    pub band_half_width: Option<f64>,
    /// Largest `|Omega_exp - Omega_ana|` over the drive grid, in natural bins.
    pub max_deviation_bins: f64,
    pub omega: Vec<f64>,
    pub omega_exp: Vec<f64>,
    pub omega_ana: Vec<f64>,
    pub config: RunConfig,
}

/// Sweep together with its estimate record.
pub struct EstimateRun {
    pub sweep: SweepRun,
    pub summary: EstimateSummary,
}

/// Sweep, banded peak extraction and hyperbola-minimum estimate; writes
/// `estimate.json` next to the sweep files. An inconclusive estimate is
/// reported through `summary.status`.
pub fn estimate_run(cfg: &RunConfig, out: &Path) -> Result<EstimateRun, CliError> {
    cfg.validate()?;
    if cfg.sweep.omega.points < 3 || cfg.sweep.tau.points < 2 {
        return Err(CliError::Config("estimate needs at least three drive frequencies and two dwell times".into()));
    }
    let run = sweep_run(cfg, out, "estimate")?;
    let spec = run.spectrum.as_ref().expect("spectrum exists for two or more dwell times");
    let omega = run.output.grid.omega.clone();
    let omega_ana: Vec<f64> = omega.iter().map(|&w| run.lines.target.at(w)).collect();
    let half = cfg.estimate.band_bins.map(|b| b * spec.bin_width);
    let band = half.map(|h| band_around(&omega_ana, h));
    let omega_exp = extract_rabi(spec, band.as_deref())?;
    let max_deviation_bins =
        omega_exp.iter().zip(&omega_ana).map(|(e, a)| (e - a).abs() / spec.bin_width).fold(0.0, f64::max);
    let exact = run.analysis.metric.clone();
    let mut summary = EstimateSummary {
        format: "kpoqa-estimate".into(),
        version: VERSION.into(),
        status: "ok".into(),
        message: None,
        level: exact.level,
        lambda: cfg.schedule.lambda,
        value_est: None,
        numerator_est: None,
        gap_est: None,
        value_exact: exact.value,
        numerator_exact: exact.numerator,
        gap_exact: exact.gap,
        relative_error: None,
        bin_width: spec.bin_width,
        band_half_width: half,
        max_deviation_bins,
        omega: omega.clone(),
        omega_exp: omega_exp.clone(),
        omega_ana,
        config: cfg.clone(),
    };
    match estimate_condition(&omega, &omega_exp, cfg.schedule.lambda).map(|e| e.with_exact(exact)) {
        Ok(est) => {
            summary.value_est = Some(est.value);
            summary.numerator_est = Some(est.numerator);
            summary.gap_est = Some(est.gap);
            summary.relative_error = est.relative_error();
        }
        Err(e) => {
            let err = CliError::from(e);
            summary.status = match &err {
                CliError::Inconclusive(_) => "inconclusive".into(),
                _ => "error".into(),
            };
            summary.message = Some(match err {
                CliError::Inconclusive(m) => m,
                other => other.to_string(),
            });
        }
    }
    write_json(&out.join("estimate.json"), &summary)?;
    Ok(EstimateRun { sweep: run, summary })
}

/// `estimate_run` with an inconclusive or failed estimate turned into an error.
pub fn run_estimate(cfg: &RunConfig, out: &Path) -> Result<EstimateSummary, CliError> {
    let run = estimate_run(cfg, out)?;
    let s = run.summary;
    match s.status.as_str() {
        "ok" => Ok(s),
        "inconclusive" => Err(CliError::Inconclusive(s.message.unwrap_or_default())),
        _ => Err(CliError::Runtime(s.message.unwrap_or_default())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
    pub note: Option<String>,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value <= limit, note: None }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value >= limit, note: None }
    }

    fn failed(name: &str, err: &dyn std::fmt::Display) -> Self {
        Self { name: name.into(), value: f64::NAN, limit: f64::NAN, pass: false, note: Some(err.to_string()) }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self { name: name.into(), value: 0.0, limit: 0.0, pass: true, note: Some(format!("skipped: {why}")) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidateReport {
    pub format: String,
    pub version: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub config: RunConfig,
}

/// Dwell length and sample count of the short conservation runs.
const CHECK_DWELL: f64 = 20.0;
const CHECK_SAMPLES: usize = 41;

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn push_result(checks: &mut Vec<Check>, name: &str, r: Result<Vec<Check>, CliError>) {
    match r {
        Ok(c) => checks.extend(c),
        Err(e) => checks.push(Check::failed(name, &e)),
    }
}

fn structural_checks(an: &Analysis) -> Vec<Check> {
    let mut checks = Vec::new();
    let scale = an.h1.max_abs().max(1.0);
    let herm = [&an.hams.driver, &an.hams.problem, &an.hams.generator]
        .iter()
        .map(|h| h.hermiticity_error())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("hamiltonian_hermiticity", herm, 1e-12 * scale));
    if an.params.conserves_parity() {
        let pi = Operator::parity_total(&an.space);
        let comm = [&an.h1, &an.hams.generator]
            .iter()
            .map(|h| h.commutator(&pi).map(|c| c.max_abs()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        checks.push(Check::at_most("parity_commutator", comm, 1e-10 * scale));
    } else {
        checks.push(Check::skipped("parity_commutator", "coherent drive breaks parity"));
    }
    let h = an.h1.matrix();
    let residual = (0..an.eig.len())
        .map(|m| {
            let v = an.eig.vectors.column(m);
            (h * v - v * kpo_core::C64::new(an.eig.energies[m], 0.0)).norm()
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("eigen_residual", residual, 1e-9 * scale));
    checks
}

fn convergence_checks(cfg: &RunConfig, an: &Analysis) -> Result<Vec<Check>, CliError> {
    let big = Analysis::new(&RunConfig { level: Some(an.metric.level), ..cfg.clone() }, &cfg.space_with_extra(4)?)?;
    let (a, b) = (&an.metric, &big.metric);
    Ok(vec![
        Check::at_most("cutoff_convergence_gap", relative_change(a.gap, b.gap), 1e-5),
        Check::at_most("cutoff_convergence_element", relative_change(a.numerator, b.numerator), 1e-5),
        Check::at_most("cutoff_convergence_value", relative_change(a.value, b.value), 1e-5),
    ])
}

fn dwell_checks(cfg: &RunConfig, an: &Analysis, open: bool) -> Result<Vec<Check>, CliError> {
    let mut settings = cfg.settings();
    settings.open_system = open;
    let observable = cfg.observable(&an.space)?;
    let taus = linspace(0.0, CHECK_DWELL, CHECK_SAMPLES);
    let schedule = cfg.schedule(0.0, CHECK_DWELL);
    let exp = Experiment::new(&an.params, &an.space, &schedule, &observable, &settings)?;
    let prepared = exp.prepare_exact(&an.eig.state(0))?;
    let series = exp.dwell(&prepared, an.metric.gap, &taus)?;
    let m = &series.monitors;
    let mut checks = Vec::new();
    if open {
        checks.push(Check::at_most("open_trace_drift", m.drift, 1e-8));
        checks.push(Check::at_least("open_min_eigenvalue", m.min_eigenvalue, -1e-8));
        checks.push(Check::at_most("open_hermiticity", m.hermiticity, 1e-10));
    } else {
        checks.push(Check::at_most("closed_norm_drift", m.drift, 1e-8));
        if an.params.conserves_parity() {
            checks.push(Check::at_most("closed_parity_drift", m.parity_drift, 1e-6));
        } else {
            checks.push(Check::skipped("closed_parity_drift", "coherent drive breaks parity"));
        }
    }
    Ok(checks)
}

fn lossless_open_check(cfg: &RunConfig, an: &Analysis) -> Result<Vec<Check>, CliError> {
    let params = KpoParams { gamma: 0.0, ..an.params.clone() };
    let schedule = cfg.schedule(an.metric.gap, CHECK_DWELL);
    let h = an.hams.dwell(&schedule);
    let lindblad = lindblad_ops(&params, &an.space)?;
    let frames = FrameConfig { window: cfg.numerics.dwell_window, segment: CHECK_DWELL };
    let integrator: IntegratorConfig = cfg.integrator();
    let psi = an.eig.state(0).amplitudes().clone();
    let (t0, t1) = (schedule.t1(), schedule.t1() + CHECK_DWELL);
    let (closed, _) = evolve_in_frames(&h, &[], &Carried::Pure(psi.clone()), t0, t1, &frames, &integrator, None)?;
    let rho0 = &psi * psi.adjoint();
    let (open, _) = evolve_in_frames(&h, &lindblad, &Carried::Mixed(rho0), t0, t1, &frames, &integrator, None)?;
    let fidelity = match (closed, open) {
        // Both runs discard the same out-of-window weight; compare what is kept.
        (Carried::Pure(v), Carried::Mixed(r)) => v.dotc(&(&r * &v)).re / (v.norm_squared() * r.trace().re),
        _ => return Err(CliError::Runtime("unexpected state representation".into())),
    };
    Ok(vec![Check::at_least("lossless_open_matches_closed", fidelity, 1.0 - 1e-8)])
}

fn rwa_check(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let lp = LabFrameParams { omega_lab: 50.0, chi: cfg.network.chi[0], pump: 0.0, pump_side: 0.0, omega_pump: 100.0, delta: 0.1 };
    let integrator = IntegratorConfig { norm_target: 0.01, ..IntegratorConfig::default() };
    let inf = rwa_equivalence_check(&lp, 10.0, 8, &integrator)?;
    Ok(vec![Check::at_most("rwa_without_pump", inf, 1e-8)])
}

fn two_photon_check(cfg: &RunConfig, an: &Analysis) -> Result<Vec<Check>, CliError> {
    let [n, k] = cfg.overlays.two_photon.unwrap_or([0, an.metric.level]);
    let line = match TwoPhotonLine::new(&an.eig, &an.hams.generator, (n, k)) {
        Ok(l) => l,
        Err(kpo_core::Error::Singular(m)) => return Ok(vec![Check::skipped("two_photon_g2_scaling", &m)]),
        Err(e) => return Err(e.into()),
    };
    let g = cfg.schedule.lambda;
    let omega = an.metric.gap;
    let small = line.at(g, omega)?.element.norm();
    let large = line.at(2.0 * g, omega)?.element.norm();
    if small == 0.0 {
        return Ok(vec![Check::skipped("two_photon_g2_scaling", "vanishing two-photon element")]);
    }
    Ok(vec![Check::at_most("two_photon_g2_scaling", (large / small / 4.0 - 1.0).abs(), 1e-10)])
}

/// Invariant suite for one configuration; writes `validate.json`.
pub fn validate_report(cfg: &RunConfig, out: &Path) -> Result<ValidateReport, CliError> {
    cfg.validate()?;
    let space = cfg.space()?;
    let an = Analysis::new(cfg, &space)?;
    let mut checks = structural_checks(&an);
    push_result(&mut checks, "cutoff_convergence", convergence_checks(cfg, &an));
    push_result(&mut checks, "closed_dwell", dwell_checks(cfg, &an, false));
    push_result(&mut checks, "open_dwell", dwell_checks(cfg, &an, true));
    push_result(&mut checks, "lossless_open_matches_closed", lossless_open_check(cfg, &an));
    push_result(&mut checks, "rwa_without_pump", rwa_check(cfg));
    push_result(&mut checks, "two_photon_g2_scaling", two_photon_check(cfg, &an));
    let pass = checks.iter().all(|c| c.pass);
    let report = ValidateReport { format: "kpoqa-validate".into(), version: VERSION.into(), pass, checks, config: cfg.clone() };
    ensure_dir(out)?;
    write_json(&out.join("validate.json"), &report)?;
    Ok(report)
}

/// `validate_report` with any failed check turned into `Invariant`.
pub fn run_validate(cfg: &RunConfig, out: &Path) -> Result<ValidateReport, CliError> {
    let report = validate_report(cfg, out)?;
    if report.pass {
        Ok(report)
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::Invariant(format!("failed checks: {}", failed.join(", "))))
    }
}
