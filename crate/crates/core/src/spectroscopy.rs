//! The drive-and-measure protocol: anneal to `s1`, freeze the schedule, drive
//! the pump amplitudes at frequency `omega` for a dwell `tau`, then read out an
//! observable. Sweeping `(omega, tau)` and Fourier transforming over `tau`
//! exposes the Rabi dispersion, whose minimum gives the adiabatic condition.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::dynamics::{evolve_in_frames, propagate_density, propagate_vector, Carried, FrameConfig, Generator, IntegratorConfig, Monitors, ReducedBasis};
use crate::error::{Error, Result};
use crate::fock::{hermitian_extremes, FockSpace, Operator, StateVector};
use crate::model::{lindblad_ops, Coefficient, KpoHamiltonians, KpoParams, Schedule, F_DOT};
use crate::oracle::{eigensystem, parity_labels_of, AdiabaticMetric};
use crate::C64;

/// Numerical options of the protocol runner.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSettings {
    pub open_system: bool,
    /// Basis handling during the anneal.
    pub anneal_frames: FrameConfig,
    /// Energy window of the frozen eigenbasis used during the dwell; `None` keeps all levels.
    pub dwell_window: Option<f64>,
    pub integrator: IntegratorConfig,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            open_system: false,
            anneal_frames: FrameConfig { window: None, segment: 1.0 },
            dwell_window: None,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// State at the end of the anneal, shared by every drive setting.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub state: Carried,
    pub monitors: Monitors,
    /// Overlap of the prepared state with the target level of `H_QA(s1)`.
    pub ground_fidelity: f64,
    /// Number of levels kept in the dwell basis.
    pub dwell_levels: usize,
    basis: ReducedBasis,
    initial_parity: f64,
}

/// Observable time series for one drive frequency.
#[derive(Clone, Debug)]
pub struct PointSeries {
    pub values: Vec<f64>,
    pub monitors: Monitors,
    pub dt: f64,
}

/// Everything needed to run the protocol for one network and schedule.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub params: KpoParams,
    pub space: FockSpace,
    pub schedule: Schedule,
    pub hams: KpoHamiltonians,
    pub observable: Operator,
    pub settings: ProtocolSettings,
    lindblad: Vec<Operator>,
    parity: Option<Operator>,
}

impl Experiment {
    pub fn new(params: &KpoParams, space: &FockSpace, schedule: &Schedule, observable: &Operator, settings: &ProtocolSettings) -> Result<Self> {
        params.validate()?;
        schedule.validate()?;
        if observable.space() != space {
            return Err(Error::SpaceMismatch);
        }
        let hams = KpoHamiltonians::build(params, space)?;
        let lindblad = if settings.open_system { lindblad_ops(params, space)? } else { Vec::new() };
        let parity = params.conserves_parity().then(|| Operator::parity_total(space));
        Ok(Self {
            params: params.clone(),
            space: space.clone(),
            schedule: schedule.clone(),
            hams,
            observable: observable.clone(),
            settings: settings.clone(),
            lindblad,
            parity,
        })
    }

    /// Ground state of `H_D`, restricted to the vacuum's parity sector when parity is conserved.
    pub fn initial_state(&self) -> Result<StateVector> {
        let eig = eigensystem(&self.hams.driver)?;
        let level = match &self.parity {
            Some(_) => {
                let labels = parity_labels_of(&eig)?;
                labels.iter().position(|&p| p == 1).ok_or_else(|| Error::Singular("no even level".into()))?
            }
            None => 0,
        };
        Ok(eig.state(level))
    }

    fn dwell_hamiltonian_at_s1(&self) -> Operator {
        self.hams.interpolate(self.schedule.a_of_s(self.schedule.s1))
    }

    /// Anneals from the initial state to `t1`.
    pub fn prepare(&self) -> Result<Prepared> {
        let psi0 = self.initial_state()?;
        let initial = if self.settings.open_system {
            Carried::Mixed(psi0.amplitudes() * psi0.amplitudes().adjoint())
        } else {
            Carried::Pure(psi0.amplitudes().clone())
        };
        let initial_parity = match &self.parity {
            Some(p) => crate::fock::expectation(p, &psi0)?.re,
            None => 0.0,
        };
        let anneal = self.hams.anneal(&self.schedule);
        let (state, monitors) = evolve_in_frames(
            &anneal,
            &self.lindblad,
            &initial,
            0.0,
            self.schedule.t1(),
            &self.settings.anneal_frames,
            &self.settings.integrator,
            self.parity.as_ref(),
        )?;
        self.prepared_from(state, monitors, initial_parity)
    }

    /// Dwell-ready state from an arbitrary state at `t1`, skipping the anneal.
    pub fn prepare_exact(&self, state: &StateVector) -> Result<Prepared> {
        if state.space() != &self.space {
            return Err(Error::SpaceMismatch);
        }
        let carried = if self.settings.open_system {
            Carried::Mixed(state.amplitudes() * state.amplitudes().adjoint())
        } else {
            Carried::Pure(state.amplitudes().clone())
        };
        let initial_parity = match &self.parity {
            Some(p) => crate::fock::expectation(p, state)?.re,
            None => 0.0,
        };
        self.prepared_from(carried, Monitors::default(), initial_parity)
    }

    fn prepared_from(&self, state: Carried, monitors: Monitors, initial_parity: f64) -> Result<Prepared> {
        let h1 = self.dwell_hamiltonian_at_s1();
        let basis = ReducedBasis::from_operator(&h1, self.settings.dwell_window)?;
        let target = self.target_level(&h1)?;
        let eig = eigensystem(&h1)?;
        let ground = eig.vectors.column(target).into_owned();
        let ground_op = &ground * ground.adjoint();
        let ground_fidelity = state.expect(&ground_op);
        Ok(Prepared { state, monitors, ground_fidelity, dwell_levels: basis.len(), basis, initial_parity })
    }

    /// Lowest level of `h` in the prepared state's parity sector.
    fn target_level(&self, h: &Operator) -> Result<usize> {
        let eig = eigensystem(h)?;
        match &self.parity {
            Some(_) => {
                let labels = parity_labels_of(&eig)?;
                labels.iter().position(|&p| p == 1).ok_or_else(|| Error::Singular("no even level".into()))
            }
            None => Ok(0),
        }
    }

    /// Drives at `omega` and records `<O>` at each dwell time in the uniform grid `taus`.
    pub fn dwell(&self, prepared: &Prepared, omega: f64, taus: &[f64]) -> Result<PointSeries> {
        check_uniform(taus)?;
        let basis = &prepared.basis;
        let t1 = self.schedule.t1();
        let drive = Coefficient::Cosine { amplitude: self.schedule.lambda * F_DOT, omega, t_ref: t1 };
        let gen = Generator::diagonal(&basis.energies, vec![(drive, basis.project(self.hams.generator.matrix()))]);
        let obs = basis.project(self.observable.matrix());
        let parity = self.parity.as_ref().map(|p| basis.project(p.matrix()));
        let overlap = basis.vectors.adjoint();
        let mut state = match &prepared.state {
            Carried::Pure(v) => Carried::Pure(&overlap * v),
            Carried::Mixed(m) => Carried::Mixed(&overlap * m * overlap.adjoint()),
        };
        let weight = |s: &Carried| match s {
            Carried::Pure(v) => v.norm_squared(),
            Carried::Mixed(m) => m.trace().re,
        };
        let full_weight = match &prepared.state {
            Carried::Pure(v) => v.norm_squared(),
            Carried::Mixed(m) => m.trace().re,
        };
        let mut monitors = Monitors { truncation_loss: (full_weight - weight(&state)).max(0.0), ..Default::default() };
        let w0 = weight(&state);
        let jumps: Vec<DMatrix<C64>> = self.lindblad.iter().map(|l| basis.project(l.matrix())).collect();

        // Advance to the first requested dwell time without recording.
        let tau0 = taus[0];
        let mut dt_used = 0.0;
        if tau0 > 0.0 {
            let cfg = self.settings.integrator.with_samples(1);
            dt_used = match &mut state {
                Carried::Pure(v) => propagate_vector(&gen, v, t1, t1 + tau0, &cfg, |_, _, _| Ok(()))?,
                Carried::Mixed(m) => propagate_density(&gen, &jumps, m, t1, t1 + tau0, &cfg, |_, _, _| Ok(()))?,
            };
        }
        let mut values = vec![0.0; taus.len()];
        let t_start = t1 + tau0;
        let t_end = t1 + taus[taus.len() - 1];
        let cfg = self.settings.integrator.with_samples(taus.len().saturating_sub(1));
        let initial_parity = prepared.initial_parity;
        let mut observe = |k: usize, y: &Carried| {
            values[k] = y.expect(&obs);
            monitors.drift = monitors.drift.max((weight(y) - w0).abs());
            if let Some(p) = &parity {
                monitors.parity_drift = monitors.parity_drift.max((y.expect(p) - initial_parity * weight(y)).abs());
            }
            if let Carried::Mixed(m) = y {
                let her = (m - m.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
                monitors.hermiticity = monitors.hermiticity.max(her);
                monitors.min_eigenvalue = monitors.min_eigenvalue.min(hermitian_extremes(m).0);
            }
        };
        if taus.len() == 1 {
            observe(0, &state);
        } else {
            let dt = match &mut state {
                Carried::Pure(v) => propagate_vector(&gen, v, t_start, t_end, &cfg, |k, _, y| {
                    observe(k, &Carried::Pure(y.clone()));
                    Ok(())
                })?,
                Carried::Mixed(m) => propagate_density(&gen, &jumps, m, t_start, t_end, &cfg, |k, _, y| {
                    observe(k, &Carried::Mixed(y.clone()));
                    Ok(())
                })?,
            };
            dt_used = dt_used.max(dt);
        }
        let span = taus[taus.len() - 1];
        monitors.steps = if dt_used > 0.0 { (span / dt_used).round() as usize } else { 0 };
        Ok(PointSeries { values, monitors, dt: dt_used })
    }
}

fn check_uniform(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidGrid("empty dwell grid".into()));
    }
    if taus[0] < 0.0 {
        return Err(Error::InvalidGrid("dwell times must be non-negative".into()));
    }
    if taus.len() > 2 {
        let d = taus[1] - taus[0];
        let span = taus[taus.len() - 1] - taus[0];
        for (j, w) in taus.windows(2).enumerate() {
            if (w[1] - w[0] - d).abs() > 1e-9 * span.max(1.0) || w[1] <= w[0] {
                return Err(Error::InvalidGrid(format!("dwell grid is not uniform at index {}", j + 1)));
            }
        }
    } else if taus.len() == 2 && taus[1] <= taus[0] {
        return Err(Error::InvalidGrid("dwell grid must be ascending".into()));
    }
    Ok(())
}

/// `n` equally spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `<O>` after annealing to `s1` and driving at `omega` for a dwell `tau`.
pub fn run_point(
    params: &KpoParams,
    space: &FockSpace,
    schedule: &Schedule,
    omega: f64,
    tau: f64,
    observable: &Operator,
    settings: &ProtocolSettings,
) -> Result<f64> {
    let exp = Experiment::new(params, space, schedule, observable, settings)?;
    let prepared = exp.prepare()?;
    Ok(exp.dwell(&prepared, omega, &[tau])?.values[0])
}

/// Measured surface `<O>(omega, s1, tau)`; rows are drive frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalGrid {
    pub omega: Vec<f64>,
    pub tau: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub s1: f64,
    pub observable: String,
    pub open_system: bool,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub grid: SignalGrid,
    pub anneal: Monitors,
    pub dwell: Monitors,
    pub ground_fidelity: f64,
    pub dwell_levels: usize,
    pub dt: f64,
}

/// Runs the dwell for every drive frequency, reusing one prepared state.
pub fn sweep(exp: &Experiment, omega_grid: &[f64], tau_grid: &[f64], observable_name: &str, threads: usize) -> Result<SweepOutput> {
    if omega_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::InvalidGrid("sweep grids must be nonempty".into()));
    }
    check_uniform(tau_grid)?;
    let prepared = exp.prepare()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<Result<PointSeries>> =
        pool.install(|| omega_grid.par_iter().map(|&w| exp.dwell(&prepared, w, tau_grid)).collect());
    let mut failures = Vec::new();
    let mut values = Vec::with_capacity(omega_grid.len());
    let mut dwell = Monitors::default();
    let mut dt: f64 = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(series) => {
                dwell.merge(&series.monitors);
                dt = dt.max(series.dt);
                values.push(series.values);
            }
            Err(e) => failures.push((i, Box::new(e))),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Sweep { failures });
    }
    Ok(SweepOutput {
        grid: SignalGrid {
            omega: omega_grid.to_vec(),
            tau: tau_grid.to_vec(),
            values,
            s1: exp.schedule.s1,
            observable: observable_name.to_string(),
            open_system: exp.settings.open_system,
        },
        anneal: prepared.monitors.clone(),
        dwell,
        ground_fidelity: prepared.ground_fidelity,
        dwell_levels: prepared.dwell_levels,
        dt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumOptions {
    pub mean_subtract: bool,
    pub window: Window,
    /// Frequency bins per natural bin `2 pi / (tau_max - tau_min)`.
    pub pad: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { mean_subtract: true, window: Window::Hann, pad: 4 }
    }
}

/// Per-frequency DFT magnitude over the dwell axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    /// Ascending, symmetric about zero.
    pub big_omega: Vec<f64>,
    /// `power[i][k]` for drive frequency `i` and DFT frequency `k`.
    pub power: Vec<Vec<f64>>,
    /// Natural resolution `2 pi / (tau_max - tau_min)`.
    pub bin_width: f64,
    pub pad: usize,
}

impl Spectrum {
    /// Grid spacing of `big_omega`.
    pub fn spacing(&self) -> f64 {
        self.bin_width / self.pad as f64
    }
}

/// DFT of each dwell series at frequencies `k * bin_width / pad`.
///
/// Evaluated exactly by folding the samples modulo `pad * (n - 1)` and using an FFT.
pub fn power_spectrum(grid: &SignalGrid, opts: &SpectrumOptions) -> Result<Spectrum> {
    check_uniform(&grid.tau)?;
    let n = grid.tau.len();
    if n < 2 {
        return Err(Error::InvalidGrid("at least two dwell samples are required".into()));
    }
    if opts.pad == 0 {
        return Err(Error::InvalidParameter("pad must be at least 1".into()));
    }
    let m = opts.pad * (n - 1);
    let bin_width = 2.0 * std::f64::consts::PI / (grid.tau[n - 1] - grid.tau[0]);
    let spacing = bin_width / opts.pad as f64;
    let window: Vec<f64> = match opts.window {
        Window::Rectangular => vec![1.0; n],
        Window::Hann => (0..n).map(|j| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * j as f64 / (n - 1) as f64).cos()).collect(),
    };
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    // Ascending order: indices m - floor((m-1)/2) .. m-1 are negative frequencies.
    let neg = (m - 1) / 2;
    let order: Vec<usize> = (m - neg..m).chain(0..m - neg).collect();
    let big_omega: Vec<f64> = order.iter().map(|&k| if k >= m - neg { (k as f64 - m as f64) * spacing } else { k as f64 * spacing }).collect();
    let mut power = Vec::with_capacity(grid.values.len());
    for row in &grid.values {
        if row.len() != n {
            return Err(Error::InvalidGrid("row length differs from dwell grid".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite signal value".into()));
        }
        let mean = if opts.mean_subtract { row.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let mut buf = vec![C64::new(0.0, 0.0); m];
        for (j, (&v, &w)) in row.iter().zip(&window).enumerate() {
            buf[j % m] += C64::new(w * (v - mean), 0.0);
        }
        fft.process(&mut buf);
        power.push(order.iter().map(|&k| buf[k].norm()).collect());
    }
    Ok(Spectrum { omega: grid.omega.clone(), big_omega, power, bin_width, pad: opts.pad })
}

/// Refined location of the strongest bin of row `row` with `lo <= Omega <= hi`
/// and `Omega > 0`. Quadratic interpolation through the neighbouring bins.
pub fn peak_in_band(spec: &Spectrum, row: usize, lo: f64, hi: f64) -> Option<f64> {
    let p = &spec.power[row];
    let mut best: Option<usize> = None;
    for (k, &w) in spec.big_omega.iter().enumerate() {
        if w > 0.0 && w >= lo && w <= hi && best.map_or(true, |b| p[k] > p[b]) {
            best = Some(k);
        }
    }
    let k = best?;
    let mut shift = 0.0;
    if k > 0 && k + 1 < p.len() {
        let (a, b, c) = (p[k - 1], p[k], p[k + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            shift = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
        }
    }
    Some(spec.big_omega[k] + shift * spec.spacing())
}

/// Peak positive frequency per drive frequency, optionally within `band[i] = (lo, hi)`.
pub fn extract_rabi(spec: &Spectrum, band: Option<&[(f64, f64)]>) -> Result<Vec<f64>> {
    if let Some(b) = band {
        if b.len() != spec.omega.len() {
            return Err(Error::InvalidGrid("band length differs from drive grid".into()));
        }
    }
    (0..spec.omega.len())
        .map(|i| {
            let (lo, hi) = band.map_or((0.0, f64::INFINITY), |b| b[i]);
            peak_in_band(spec, i, lo, hi)
                .ok_or_else(|| Error::InvalidGrid(format!("empty positive-frequency band at drive index {i}")))
        })
        .collect()
}

/// Bands of half-width `half_width` around predicted ridge positions.
pub fn band_around(prediction: &[f64], half_width: f64) -> Vec<(f64, f64)> {
    prediction.iter().map(|&c| (c - half_width, c + half_width)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdiabaticEstimate {
    pub omega: Vec<f64>,
    pub omega_exp: Vec<f64>,
    /// `min Omega_exp / lambda`.
    pub numerator: f64,
    /// Drive frequency of the minimum.
    pub gap: f64,
    /// `numerator / gap^2`.
    pub value: f64,
    pub exact: Option<AdiabaticMetric>,
}

impl AdiabaticEstimate {
    pub fn with_exact(mut self, exact: AdiabaticMetric) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn relative_error(&self) -> Option<f64> {
        self.exact.as_ref().map(|e| self.value / e.value - 1.0)
    }
}

/// Minimum of the dispersion curve, refined by a parabola through the lowest
/// grid point and its neighbours.
pub fn estimate_condition(omega: &[f64], omega_exp: &[f64], lambda: f64) -> Result<AdiabaticEstimate> {
    if omega.len() != omega_exp.len() || omega.len() < 3 {
        return Err(Error::InvalidGrid("need at least three matching points".into()));
    }
    if lambda == 0.0 {
        return Err(Error::InvalidParameter("lambda must be nonzero".into()));
    }
    let (i, _) = omega_exp
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
    if i == 0 || i + 1 == omega.len() {
        return Err(Error::Inconclusive(format!("dispersion minimum at grid boundary omega = {}", omega[i])));
    }
    let (x0, x1, x2) = (omega[i - 1], omega[i], omega[i + 1]);
    let (y0, y1, y2) = (omega_exp[i - 1], omega_exp[i], omega_exp[i + 1]);
    // Newton form of the interpolating parabola.
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    let (gap, min_val) = if curv > 0.0 {
        let xv = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
        let yv = y0 + d01 * (xv - x0) + curv * (xv - x0) * (xv - x1);
        if xv >= x0 && xv <= x2 && yv > 0.0 {
            (xv, yv)
        } else {
            (x1, y1)
        }
    } else {
        (x1, y1)
    };
    let numerator = min_val / lambda.abs();
    Ok(AdiabaticEstimate {
        omega: omega.to_vec(),
        omega_exp: omega_exp.to_vec(),
        numerator,
        gap,
        value: numerator / (gap * gap),
        exact: None,
    })
}

/// Nyquist check: the dwell sampling must cover three times the largest predicted frequency.
pub fn check_nyquist(tau: &[f64], predicted: &[f64]) -> Result<()> {
    if tau.len() < 2 {
        return Ok(());
    }
    let dtau = (tau[tau.len() - 1] - tau[0]) / (tau.len() - 1) as f64;
    let nyquist = std::f64::consts::PI / dtau;
    let top = predicted.iter().cloned().fold(0.0, f64::max);
    if nyquist < 3.0 * top {
        return Err(Error::InvalidGrid(format!(
            "dwell step {dtau} gives Nyquist frequency {nyquist:.4}, below 3x the predicted maximum {top:.4}"
        )));
    }
    Ok(())
}
