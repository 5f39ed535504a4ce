//! Run configuration: JSON document, unknown keys rejected.

use std::path::Path;

use kpo_core::dynamics::{FrameConfig, IntegratorConfig};
use kpo_core::fock::{FockSpace, Operator};
use kpo_core::model::{KpoParams, Schedule};
use kpo_core::spectroscopy::{linspace, ProtocolSettings, SpectrumOptions, Window};
use kpo_core::C64;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Marker of metadata sidecars, which embed a full config under `config`.
pub const METADATA_FORMAT: &str = "kpoqa-metadata";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub network: NetworkConfig,
    /// Fock cutoff per mode.
    pub cutoffs: Vec<usize>,
    pub schedule: ScheduleConfig,
    /// Excited level of the metric; suggested from the spectrum when absent.
    #[serde(default)]
    pub level: Option<usize>,
    pub observable: ObservableConfig,
    #[serde(default)]
    pub open_system: bool,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub overlays: OverlayConfig,
    #[serde(default = "one")]
    pub threads: usize,
    /// Reserved; every computation is deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub chi: Vec<f64>,
    pub detuning: Vec<f64>,
    pub pump: Vec<f64>,
    pub coherent_drive: Vec<f64>,
    /// Entries `J_{jk}`; the Hermitian partner is filled in.
    #[serde(default)]
    pub coupling: Vec<CouplingEntry>,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub j: usize,
    pub k: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub t_ann: f64,
    pub s1: f64,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    X,
    P,
    N,
    NTotal,
    Parity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub kind: ObservableKind,
    /// Zero-based mode index; ignored by `n_total` and `parity`.
    #[serde(default)]
    pub mode: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaUnit {
    /// Multiples of the exact gap `E_m - E_0`.
    Gap,
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub unit: OmegaUnit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub omega: OmegaGrid,
    pub tau: TauGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Energy window of the instantaneous frames during the anneal.
    pub anneal_window: Option<f64>,
    /// Length of each frozen frame during the anneal.
    pub anneal_segment: f64,
    /// Energy window of the dwell basis.
    pub dwell_window: Option<f64>,
    pub dt: Option<f64>,
    pub norm_target: f64,
    pub steps_per_period: f64,
    pub drift_tolerance: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let i = IntegratorConfig::default();
        Self {
            anneal_window: None,
            anneal_segment: 1.0,
            dwell_window: None,
            dt: i.dt,
            norm_target: i.norm_target,
            steps_per_period: i.steps_per_period,
            drift_tolerance: i.drift_tolerance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub mean_subtract: bool,
    pub window: WindowKind,
    pub pad: usize,
    /// Only bins with `|Omega|` up to this value are written to `spectrum.csv`.
    pub max_frequency: Option<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { mean_subtract: true, window: WindowKind::Hann, pad: 4, max_frequency: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Half-width, in natural bins, of the band around the predicted line; `null` disables banding.
    pub band_bins: Option<f64>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { band_bins: Some(4.0) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlayConfig {
    /// Excited pair `(n, m)` of the secondary Rabi line.
    pub pair: Option<[usize; 2]>,
    /// Level pair `(n, k)` of the two-photon line.
    pub two_photon: Option<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    #[serde(default)]
    #[allow(dead_code)]
    version: Option<String>,
    config: RunConfig,
    #[serde(default)]
    #[allow(dead_code)]
    run: serde_json::Value,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses a config, or the config embedded in a metadata sidecar.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let is_sidecar = value.get("format").and_then(|f| f.as_str()) == Some(METADATA_FORMAT);
        let cfg = if is_sidecar {
            serde_json::from_str::<Sidecar>(text).map_err(|e| CliError::Config(e.to_string()))?.config
        } else {
            serde_json::from_str::<RunConfig>(text).map_err(|e| CliError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let k = self.network.chi.len();
        if self.cutoffs.len() != k {
            return bad(format!("cutoffs: {} entries for {k} modes", self.cutoffs.len()));
        }
        for (j, c) in self.network.coupling.iter().enumerate() {
            if c.j >= k || c.k >= k || c.j == c.k {
                return bad(format!("network.coupling[{j}]: invalid mode pair ({}, {})", c.j, c.k));
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return bad(format!("network.coupling[{j}]: non-finite value"));
            }
        }
        self.params()?.validate().map_err(|e| CliError::Config(format!("network: {e}")))?;
        self.schedule(0.0, 0.0).validate().map_err(|e| CliError::Config(format!("schedule: {e}")))?;
        if self.schedule.lambda == 0.0 {
            return bad("schedule.lambda must be nonzero".into());
        }
        if self.observable.mode >= k {
            return bad(format!("observable.mode {} out of range for {k} modes", self.observable.mode));
        }
        let o = &self.sweep.omega;
        if o.points == 0 || !o.start.is_finite() || !o.stop.is_finite() || o.stop < o.start || (o.points > 1 && o.stop == o.start) {
            return bad("sweep.omega: need finite ascending bounds and at least one point".into());
        }
        let t = &self.sweep.tau;
        if t.points == 0 || !(t.start >= 0.0) || !t.stop.is_finite() || t.stop < t.start || (t.points > 1 && t.stop == t.start) {
            return bad("sweep.tau: need non-negative ascending bounds and at least one point".into());
        }
        let n = &self.numerics;
        if !(n.anneal_segment > 0.0) || !(n.norm_target > 0.0) || !(n.steps_per_period > 0.0) || !(n.drift_tolerance > 0.0) {
            return bad("numerics: segment, norm_target, steps_per_period and drift_tolerance must be positive".into());
        }
        if n.dt.is_some_and(|d| !(d > 0.0)) || n.anneal_window.is_some_and(|w| !(w > 0.0)) || n.dwell_window.is_some_and(|w| !(w > 0.0)) {
            return bad("numerics: dt and windows must be positive when given".into());
        }
        if self.spectrum.pad == 0 {
            return bad("spectrum.pad must be at least 1".into());
        }
        if self.spectrum.max_frequency.is_some_and(|f| !(f > 0.0)) || self.estimate.band_bins.is_some_and(|b| !(b > 0.0)) {
            return bad("spectrum.max_frequency and estimate.band_bins must be positive when given".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.level == Some(0) {
            return bad("level must be an excited level (>= 1)".into());
        }
        Ok(())
    }

    pub fn params(&self) -> Result<KpoParams, CliError> {
        let k = self.network.chi.len();
        let mut coupling = DMatrix::from_element(k, k, C64::new(0.0, 0.0));
        for c in &self.network.coupling {
            if c.j < k && c.k < k {
                coupling[(c.j, c.k)] = C64::new(c.re, c.im);
                coupling[(c.k, c.j)] = C64::new(c.re, -c.im);
            }
        }
        Ok(KpoParams {
            chi: self.network.chi.clone(),
            detuning: self.network.detuning.clone(),
            pump: self.network.pump.clone(),
            coherent_drive: self.network.coherent_drive.clone(),
            coupling,
            gamma: self.network.gamma,
        })
    }

    pub fn space(&self) -> Result<FockSpace, CliError> {
        self.space_with_extra(0)
    }

    /// Fock space with every cutoff raised by `extra`.
    pub fn space_with_extra(&self, extra: usize) -> Result<FockSpace, CliError> {
        let cut: Vec<usize> = self.cutoffs.iter().map(|c| c + extra).collect();
        FockSpace::new(&cut).map_err(|e| CliError::Config(format!("cutoffs: {e}")))
    }

    pub fn schedule(&self, omega: f64, tau_max: f64) -> Schedule {
        Schedule { t_ann: self.schedule.t_ann, s1: self.schedule.s1, lambda: self.schedule.lambda, omega, tau_max }
    }

    pub fn observable(&self, space: &FockSpace) -> Result<Operator, CliError> {
        let mode = self.observable.mode;
        let op = match self.observable.kind {
            ObservableKind::X => Operator::quad_x(space, mode),
            ObservableKind::P => Operator::quad_p(space, mode),
            ObservableKind::N => Operator::number(space, mode),
            ObservableKind::NTotal => Ok(Operator::total_number(space)),
            ObservableKind::Parity => Ok(Operator::parity_total(space)),
        };
        op.map_err(|e| CliError::Config(format!("observable: {e}")))
    }

    pub fn observable_name(&self) -> String {
        match self.observable.kind {
            ObservableKind::X => format!("x{}", self.observable.mode),
            ObservableKind::P => format!("p{}", self.observable.mode),
            ObservableKind::N => format!("n{}", self.observable.mode),
            ObservableKind::NTotal => "n_total".into(),
            ObservableKind::Parity => "parity".into(),
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let n = &self.numerics;
        IntegratorConfig {
            dt: n.dt,
            norm_target: n.norm_target,
            steps_per_period: n.steps_per_period,
            drift_tolerance: n.drift_tolerance,
            ..IntegratorConfig::default()
        }
    }

    pub fn settings(&self) -> ProtocolSettings {
        ProtocolSettings {
            open_system: self.open_system,
            anneal_frames: FrameConfig { window: self.numerics.anneal_window, segment: self.numerics.anneal_segment },
            dwell_window: self.numerics.dwell_window,
            integrator: self.integrator(),
        }
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        SpectrumOptions {
            mean_subtract: self.spectrum.mean_subtract,
            window: match self.spectrum.window {
                WindowKind::Hann => Window::Hann,
                WindowKind::Rectangular => Window::Rectangular,
            },
            pad: self.spectrum.pad,
        }
    }

    /// Drive frequencies, scaled by `gap` when given in gap units.
    pub fn omega_grid(&self, gap: f64) -> Vec<f64> {
        let o = &self.sweep.omega;
        let scale = match o.unit {
            OmegaUnit::Gap => gap,
            OmegaUnit::Absolute => 1.0,
        };
        linspace(o.start * scale, o.stop * scale, o.points)
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        let t = &self.sweep.tau;
        linspace(t.start, t.stop, t.points)
    }
}
