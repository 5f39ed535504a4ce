//! Fixed-step RK4 propagation of state vectors and density matrices.
//!
//! The engine works on raw matrices so the same code drives Fock-basis
//! evolution and evolution in a (possibly truncated) eigenbasis. State vectors
//! are integrated with the Hamiltonian shifted by the initial energy, which
//! keeps the populated components slow; the dropped global phase is restored
//! on output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fock::{hermitian_extremes, DensityMatrix, FockSpace, Operator, StateVector};
use crate::model::{Coefficient, TimeDependentHamiltonian};
use crate::oracle::eigensystem;
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// Fixed step; `None` picks the largest step allowed by `norm_target`.
    pub dt: Option<f64>,
    /// Automatic steps satisfy `dt * |H - c| <= norm_target`.
    pub norm_target: f64,
    /// A requested `dt` with `dt * |H - c|` above this is rejected.
    pub guard_limit: f64,
    /// Minimum steps per period of any oscillating coefficient.
    pub steps_per_period: f64,
    /// Number of equal sampling intervals recorded between `t0` and `t1`.
    pub samples: usize,
    /// Maximum tolerated norm or trace drift.
    pub drift_tolerance: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: None, norm_target: 0.05, guard_limit: 0.1, steps_per_period: 50.0, samples: 1, drift_tolerance: 1e-8 }
    }
}

impl IntegratorConfig {
    pub fn with_samples(&self, samples: usize) -> Self {
        Self { samples, ..self.clone() }
    }

    pub fn halved(&self, dt: f64) -> Self {
        Self { dt: Some(dt / 2.0), ..self.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    /// Step actually used.
    pub dt: f64,
}

/// `H(t) = C + sum_k c_k(t) M_k` on a raw basis.
#[derive(Clone, Debug)]
pub(crate) struct Generator {
    constant: DMatrix<C64>,
    /// Real diagonal of `constant` when it is diagonal, used as a fast path.
    diagonal: Option<Vec<f64>>,
    terms: Vec<(Coefficient, DMatrix<C64>)>,
}

impl Generator {
    pub(crate) fn new(constant: DMatrix<C64>, terms: Vec<(Coefficient, DMatrix<C64>)>) -> Self {
        let n = constant.nrows();
        let is_diag = (0..n).all(|j| (0..n).all(|i| i == j || constant[(i, j)] == ZERO));
        let diagonal = is_diag.then(|| (0..n).map(|i| constant[(i, i)].re).collect());
        Self { constant, diagonal, terms }
    }

    pub(crate) fn diagonal(energies: &[f64], terms: Vec<(Coefficient, DMatrix<C64>)>) -> Self {
        let d = DVector::from_iterator(energies.len(), energies.iter().map(|&e| C64::new(e, 0.0)));
        Self { constant: DMatrix::from_diagonal(&d), diagonal: Some(energies.to_vec()), terms }
    }

    fn from_hamiltonian(h: &TimeDependentHamiltonian) -> Self {
        Self::new(
            h.constant_part().matrix().clone(),
            h.terms().iter().map(|(c, op)| (c.clone(), op.matrix().clone())).collect(),
        )
    }

    fn dim(&self) -> usize {
        self.constant.nrows()
    }

    fn constant_extremes(&self) -> (f64, f64) {
        match &self.diagonal {
            Some(d) => (
                d.iter().cloned().fold(f64::INFINITY, f64::min),
                d.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
            None => hermitian_extremes(&self.constant),
        }
    }

    /// Bound on `|H(t) - shift|` over `[t0, t1]`.
    fn norm_bound(&self, shift: f64, t0: f64, t1: f64) -> f64 {
        let (lo, hi) = self.constant_extremes();
        let mut b = (hi - shift).abs().max((lo - shift).abs());
        for (c, m) in &self.terms {
            let amp = c.max_abs(t0, t1);
            if amp > 0.0 {
                b += amp * crate::fock::hermitian_spectral_radius(m);
            }
        }
        b
    }

    fn max_frequency(&self) -> f64 {
        fn walk(c: &Coefficient) -> f64 {
            match c {
                Coefficient::Cosine { omega, .. } | Coefficient::Drive { omega, .. } => omega.abs(),
                Coefficient::Sum(parts) => parts.iter().map(walk).fold(0.0, f64::max),
                _ => 0.0,
            }
        }
        self.terms.iter().map(|(c, _)| walk(c)).fold(0.0, f64::max)
    }

    fn expectation(&self, t: f64, psi: &DVector<C64>) -> f64 {
        let mut hv = &self.constant * psi;
        for (c, m) in &self.terms {
            hv.gemv(C64::new(c.at(t), 0.0), m, psi, ONE);
        }
        psi.dotc(&hv).re
    }
}

/// Chooses the step for an interval of length `span` given the stiffness bound.
fn choose_step(cfg: &IntegratorConfig, bound: f64, max_freq: f64, interval: f64) -> Result<(f64, usize)> {
    let mut dt_limit = if bound > 0.0 { cfg.norm_target / bound } else { f64::INFINITY };
    if max_freq > 0.0 {
        dt_limit = dt_limit.min(2.0 * std::f64::consts::PI / max_freq / cfg.steps_per_period);
    }
    let dt_req = match cfg.dt {
        Some(dt) => {
            if !(dt > 0.0) {
                return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
            }
            if dt * bound > cfg.guard_limit {
                return Err(Error::StepGuard(dt * bound));
            }
            dt
        }
        None => dt_limit,
    };
    if interval <= 0.0 {
        return Ok((0.0, 0));
    }
    let n = (interval / dt_req).ceil().max(1.0) as usize;
    Ok((interval / n as f64, n))
}

/// Shared RK4 driver over equal sampling intervals.
///
/// `rhs(t, y, out)` writes `dy/dt`. `observe(k, t, y)` is called at each of
/// the `intervals + 1` sample points.
fn rk4_sampled<Y, R, O>(
    y: &mut Y,
    t0: f64,
    interval: f64,
    intervals: usize,
    substeps: usize,
    mut rhs: R,
    mut observe: O,
) -> Result<()>
where
    Y: Rk4Buffer,
    R: FnMut(f64, &Y, &mut Y),
    O: FnMut(usize, f64, &Y) -> Result<()>,
{
    let h = if substeps > 0 { interval / substeps as f64 } else { 0.0 };
    let mut k = y.zeros_like();
    let mut acc = y.zeros_like();
    let mut tmp = y.zeros_like();
    observe(0, t0, y)?;
    for s in 0..intervals {
        let ts = t0 + s as f64 * interval;
        for j in 0..substeps {
            let t = ts + j as f64 * h;
            acc.copy_from_buf(y);
            rhs(t, y, &mut k);
            acc.axpy_buf(h / 6.0, &k);
            tmp.copy_from_buf(y);
            tmp.axpy_buf(h / 2.0, &k);
            rhs(t + h / 2.0, &tmp, &mut k);
            acc.axpy_buf(h / 3.0, &k);
            tmp.copy_from_buf(y);
            tmp.axpy_buf(h / 2.0, &k);
            rhs(t + h / 2.0, &tmp, &mut k);
            acc.axpy_buf(h / 3.0, &k);
            tmp.copy_from_buf(y);
            tmp.axpy_buf(h, &k);
            rhs(t + h, &tmp, &mut k);
            acc.axpy_buf(h / 6.0, &k);
            std::mem::swap(y, &mut acc);
        }
        let t_end = t0 + (s + 1) as f64 * interval;
        if !y.all_finite() {
            return Err(Error::NonFinite(t_end));
        }
        observe(s + 1, t_end, y)?;
    }
    Ok(())
}

trait Rk4Buffer {
    fn zeros_like(&self) -> Self;
    fn copy_from_buf(&mut self, other: &Self);
    fn axpy_buf(&mut self, a: f64, x: &Self);
    fn all_finite(&self) -> bool;
}

impl Rk4Buffer for DVector<C64> {
    fn zeros_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn copy_from_buf(&mut self, other: &Self) {
        self.copy_from(other);
    }
    fn axpy_buf(&mut self, a: f64, x: &Self) {
        self.axpy(C64::new(a, 0.0), x, ONE);
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Rk4Buffer for DMatrix<C64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn copy_from_buf(&mut self, other: &Self) {
        self.copy_from(other);
    }
    fn axpy_buf(&mut self, a: f64, x: &Self) {
        self.zip_apply(x, |s, v| *s += v * a);
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Closed-system evolution of a raw vector. Returns the step used.
pub(crate) fn propagate_vector<O>(
    gen: &Generator,
    psi: &mut DVector<C64>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    mut observe: O,
) -> Result<f64>
where
    O: FnMut(usize, f64, &DVector<C64>) -> Result<()>,
{
    let intervals = cfg.samples.max(1);
    let shift = gen.expectation(t0, psi) / psi.norm_squared().max(f64::MIN_POSITIVE);
    let bound = gen.norm_bound(shift, t0, t1);
    let interval = (t1 - t0) / intervals as f64;
    let (h, substeps) = choose_step(cfg, bound, gen.max_frequency(), interval)?;
    if let Some(d) = &gen.diagonal {
        // Interaction picture with respect to the diagonal part: y = exp(i D (t - t0)) psi.
        let phases = |t: f64| -> Vec<C64> { d.iter().map(|&e| C64::from_polar(1.0, -e * (t - t0))).collect() };
        let mut u = DVector::<C64>::zeros(psi.len());
        let rhs = |t: f64, y: &DVector<C64>, out: &mut DVector<C64>| {
            let a = phases(t);
            for i in 0..y.len() {
                u[i] = y[i] * a[i];
            }
            out.fill(ZERO);
            for (c, m) in &gen.terms {
                let v = c.at(t);
                if v != 0.0 {
                    out.gemv(C64::new(0.0, -v), m, &u, ONE);
                }
            }
            for i in 0..y.len() {
                out[i] *= a[i].conj();
            }
        };
        let mut restored = psi.clone();
        rk4_sampled(psi, t0, interval, intervals, substeps, rhs, |k, t, y| {
            for (r, (z, a)) in restored.iter_mut().zip(y.iter().zip(phases(t))) {
                *r = z * a;
            }
            observe(k, t, &restored)
        })?;
        for (z, a) in psi.iter_mut().zip(phases(t1)) {
            *z *= a;
        }
        return Ok(h);
    }
    let minus_i = -I;
    let rhs = |t: f64, y: &DVector<C64>, out: &mut DVector<C64>| {
        out.gemv(minus_i, &gen.constant, y, ZERO);
        out.axpy(C64::new(0.0, shift), y, ONE);
        for (c, m) in &gen.terms {
            let v = c.at(t);
            if v != 0.0 {
                out.gemv(C64::new(0.0, -v), m, y, ONE);
            }
        }
    };
    // Samples are handed out with the shift phase restored.
    let mut restored = psi.clone();
    rk4_sampled(psi, t0, interval, intervals, substeps, rhs, |k, t, y| {
        let phase = C64::from_polar(1.0, -shift * (t - t0));
        restored.copy_from(y);
        restored *= phase;
        observe(k, t, &restored)
    })?;
    let phase = C64::from_polar(1.0, -shift * (t1 - t0));
    *psi *= phase;
    Ok(h)
}

/// Open-system evolution of a raw density matrix. Returns the step used.
pub(crate) fn propagate_density<O>(
    gen: &Generator,
    jumps: &[DMatrix<C64>],
    rho: &mut DMatrix<C64>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    observe: O,
) -> Result<f64>
where
    O: FnMut(usize, f64, &DMatrix<C64>) -> Result<()>,
{
    let n = gen.dim();
    let intervals = cfg.samples.max(1);
    let (lo, hi) = gen.constant_extremes();
    let mut bound = gen.norm_bound(0.5 * (lo + hi), t0, t1);
    let mut k_total = DMatrix::<C64>::zeros(n, n);
    for l in jumps {
        k_total += l.adjoint() * l;
    }
    bound += 0.5 * crate::fock::hermitian_spectral_radius(&k_total);
    let interval = (t1 - t0) / intervals as f64;
    let (h, substeps) = choose_step(cfg, bound, gen.max_frequency(), interval)?;

    // B(t) = -i H(t) - K/2, so that d rho = B rho + (B rho)^dagger + sum L rho L^dagger.
    // A diagonal constant part is removed by the interaction picture
    // rho_I = exp(i D (t - t0)) rho exp(-i D (t - t0)).
    let diagonal = gen.diagonal.as_deref();
    let b_const = match diagonal {
        Some(_) => &k_total * C64::new(-0.5, 0.0),
        None => &gen.constant * (-I) - &k_total * C64::new(0.5, 0.0),
    };
    let jumps_active: Vec<(DMatrix<C64>, DMatrix<C64>)> = jumps
        .iter()
        .filter(|l| l.iter().any(|z| *z != ZERO))
        .map(|l| (l.clone(), l.adjoint()))
        .collect();
    let phases = |t: f64| -> Option<Vec<C64>> { diagonal.map(|d| d.iter().map(|&e| C64::from_polar(1.0, -e * (t - t0))).collect()) };
    // rho_ij * a_i * conj(a_j), or its inverse.
    let rotate = |m: &mut DMatrix<C64>, a: &[C64], inverse: bool| {
        for j in 0..n {
            for i in 0..n {
                let f = a[i] * a[j].conj();
                m[(i, j)] *= if inverse { f.conj() } else { f };
            }
        }
    };
    let mut b = b_const.clone();
    let mut tmp = DMatrix::<C64>::zeros(n, n);
    let mut lab = DMatrix::<C64>::zeros(n, n);
    let rhs = |t: f64, y: &DMatrix<C64>, out: &mut DMatrix<C64>| {
        b.copy_from(&b_const);
        for (c, m) in &gen.terms {
            let v = c.at(t);
            if v != 0.0 {
                b.zip_apply(m, |s, x| *s += x * C64::new(0.0, -v));
            }
        }
        let a = phases(t);
        lab.copy_from(y);
        if let Some(a) = &a {
            rotate(&mut lab, a, false);
        }
        tmp.gemm(ONE, &b, &lab, ZERO);
        for j in 0..n {
            for i in 0..=j {
                let v = tmp[(i, j)] + tmp[(j, i)].conj();
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        for (l, ld) in &jumps_active {
            tmp.gemm(ONE, l, &lab, ZERO);
            out.gemm(ONE, &tmp, ld, ONE);
        }
        if let Some(a) = &a {
            rotate(out, a, true);
        }
    };
    let mut observe = observe;
    let mut restored = rho.clone();
    rk4_sampled(rho, t0, interval, intervals, substeps, rhs, |k, t, y| match phases(t) {
        Some(a) => {
            restored.copy_from(y);
            rotate(&mut restored, &a, false);
            observe(k, t, &restored)
        }
        None => observe(k, t, y),
    })?;
    if let Some(a) = phases(t1) {
        rotate(rho, &a, false);
    }
    Ok(h)
}

/// Solves `i d psi/dt = H(t) psi` and records `cfg.samples + 1` snapshots.
pub fn evolve_state(
    h: &TimeDependentHamiltonian,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<StateVector>> {
    if h.space() != psi0.space() {
        return Err(Error::SpaceMismatch);
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let gen = Generator::from_hamiltonian(h);
    let space = psi0.space().clone();
    let norm0 = psi0.norm();
    let mut psi = psi0.amplitudes().clone();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let dt = propagate_vector(&gen, &mut psi, t0, t1, cfg, |_, t, y| {
        times.push(t);
        states.push(StateVector::new(space.clone(), y.clone())?);
        Ok(())
    })?;
    let drift = (psi.norm() - norm0).abs();
    if drift > cfg.drift_tolerance {
        return Err(Error::Drift(drift));
    }
    Ok(Trajectory { times, states, dt })
}

/// Solves the Lindblad equation with jump operators `lindblad`.
pub fn evolve_density(
    h: &TimeDependentHamiltonian,
    lindblad: &[Operator],
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<DensityMatrix>> {
    if h.space() != rho0.space() || lindblad.iter().any(|l| l.space() != rho0.space()) {
        return Err(Error::SpaceMismatch);
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let gen = Generator::from_hamiltonian(h);
    let jumps: Vec<_> = lindblad.iter().map(|l| l.matrix().clone()).collect();
    let space = rho0.space().clone();
    let trace0 = rho0.trace().re;
    let mut rho = rho0.matrix().clone();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let dt = propagate_density(&gen, &jumps, &mut rho, t0, t1, cfg, |_, t, y| {
        let snap = DensityMatrix::new(space.clone(), y.clone())?;
        let min_ev = snap.min_eigenvalue();
        if min_ev < -1e-8 {
            return Err(Error::Positivity(min_ev));
        }
        times.push(t);
        states.push(snap);
        Ok(())
    })?;
    let drift = (rho.trace().re - trace0).abs();
    if drift > cfg.drift_tolerance {
        return Err(Error::Drift(drift));
    }
    Ok(Trajectory { times, states, dt })
}

/// Real part of `<O>` at every snapshot.
pub fn expectation_series<S: crate::fock::QuantumState>(traj: &Trajectory<S>, op: &Operator) -> Result<Vec<(f64, f64)>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| Ok((t, crate::fock::expectation(op, s)?.re)))
        .collect()
}

/// Low-lying eigenvectors of a Hermitian operator used as a propagation basis.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    /// Columns are eigenvectors, `dim x L`.
    pub vectors: DMatrix<C64>,
    pub energies: Vec<f64>,
}

impl ReducedBasis {
    /// Levels with `E - E_0 <= window`, extended so that no degenerate cluster is split.
    /// `None` keeps the full spectrum.
    pub fn from_operator(h: &Operator, window: Option<f64>) -> Result<Self> {
        let es = eigensystem(h)?;
        let n_all = es.energies.len();
        let keep = match window {
            None => n_all,
            Some(w) => {
                let e0 = es.energies[0];
                let scale = 1e-9 * (1.0 + es.energies[n_all - 1].abs().max(e0.abs()));
                let mut l = es.energies.iter().take_while(|&&e| e - e0 <= w).count().max(1);
                while l < n_all && es.energies[l] - es.energies[l - 1] <= scale {
                    l += 1;
                }
                l
            }
        };
        Ok(Self { vectors: es.vectors.columns(0, keep).into_owned(), energies: es.energies[..keep].to_vec() })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// `V^dagger M V`.
    pub fn project(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        self.vectors.adjoint() * m * &self.vectors
    }
}

/// Options for propagation in a sequence of instantaneous eigenbases.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameConfig {
    /// Energy window above the instantaneous ground level; `None` keeps all levels.
    pub window: Option<f64>,
    /// Length of each frozen-basis segment.
    pub segment: f64,
}

/// Running monitors accumulated during a reduced-basis propagation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Monitors {
    /// Largest |norm - 1| (closed) or |trace - 1| (open) seen.
    pub drift: f64,
    /// Most negative eigenvalue seen (open only).
    pub min_eigenvalue: f64,
    /// Largest `|rho - rho^dagger|` entry seen (open only).
    pub hermiticity: f64,
    /// Largest `|<Pi> - Pi_0 w|` with `w` the retained weight, when parity is
    /// tracked. Discarded weight does not count as parity change.
    pub parity_drift: f64,
    /// Probability discarded by truncating to the kept levels.
    pub truncation_loss: f64,
    pub steps: usize,
}

impl Monitors {
    pub fn merge(&mut self, other: &Self) {
        self.drift = self.drift.max(other.drift);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.hermiticity = self.hermiticity.max(other.hermiticity);
        self.parity_drift = self.parity_drift.max(other.parity_drift);
        self.truncation_loss += other.truncation_loss;
        self.steps += other.steps;
    }
}

/// State carried through reduced-basis propagation.
#[derive(Clone, Debug)]
pub enum Carried {
    Pure(DVector<C64>),
    Mixed(DMatrix<C64>),
}

impl Carried {
    fn to_basis(&self, w: &DMatrix<C64>) -> Self {
        match self {
            Self::Pure(v) => Self::Pure(w * v),
            Self::Mixed(m) => Self::Mixed(w * m * w.adjoint()),
        }
    }

    fn weight(&self) -> f64 {
        match self {
            Self::Pure(v) => v.norm_squared(),
            Self::Mixed(m) => m.trace().re,
        }
    }

    pub(crate) fn expect(&self, op: &DMatrix<C64>) -> f64 {
        match self {
            Self::Pure(v) => v.dotc(&(op * v)).re,
            Self::Mixed(m) => crate::fock::trace_product(op, m).re,
        }
    }
}

/// Propagates through `[t0, t1]` in segments, each expressed in the windowed
/// eigenbasis of `H` at the segment midpoint. Returns the final state in the
/// full Fock basis.
pub fn evolve_in_frames(
    h: &TimeDependentHamiltonian,
    lindblad: &[Operator],
    initial: &Carried,
    t0: f64,
    t1: f64,
    frames: &FrameConfig,
    cfg: &IntegratorConfig,
    parity: Option<&Operator>,
) -> Result<(Carried, Monitors)> {
    if !(frames.segment > 0.0) {
        return Err(Error::InvalidParameter("segment length must be positive".into()));
    }
    let space: &FockSpace = h.space();
    let n_seg = ((t1 - t0) / frames.segment).ceil().max(1.0) as usize;
    let seg_len = (t1 - t0) / n_seg as f64;
    let mut mon = Monitors::default();
    let weight0 = initial.weight();
    let parity0 = parity.map(|p| initial.expect(p.matrix()));
    // Current state in the current basis; the initial "basis" is the identity.
    let mut basis: DMatrix<C64> = DMatrix::identity(space.dim(), space.dim());
    let mut state = initial.clone();
    for seg in 0..n_seg {
        let ta = t0 + seg as f64 * seg_len;
        let tb = ta + seg_len;
        let tm = 0.5 * (ta + tb);
        let frame = ReducedBasis::from_operator(&h.at(tm), frames.window)?;
        let overlap = frame.vectors.adjoint() * &basis;
        let before = state.weight();
        state = state.to_basis(&overlap);
        mon.truncation_loss += (before - state.weight()).max(0.0);
        basis = frame.vectors.clone();
        let terms: Vec<(Coefficient, DMatrix<C64>)> = h
            .terms()
            .iter()
            .map(|(c, op)| {
                let shifted = Coefficient::Sum(vec![c.clone(), Coefficient::Constant(-c.at(tm))]);
                (shifted, frame.project(op.matrix()))
            })
            .collect();
        let gen = Generator::diagonal(&frame.energies, terms);
        let parity_e = parity.map(|p| frame.project(p.matrix()));
        let seg_cfg = cfg.with_samples(1);
        let steps = match &mut state {
            Carried::Pure(v) => {
                let dt = propagate_vector(&gen, v, ta, tb, &seg_cfg, |_, _, _| Ok(()))?;
                if dt > 0.0 { (seg_len / dt).round() as usize } else { 0 }
            }
            Carried::Mixed(m) => {
                let jumps: Vec<_> = lindblad.iter().map(|l| frame.project(l.matrix())).collect();
                let dt = propagate_density(&gen, &jumps, m, ta, tb, &seg_cfg, |_, _, y| {
                    let her = (y - y.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
                    mon.hermiticity = mon.hermiticity.max(her);
                    mon.min_eigenvalue = mon.min_eigenvalue.min(hermitian_extremes(y).0);
                    Ok(())
                })?;
                if dt > 0.0 { (seg_len / dt).round() as usize } else { 0 }
            }
        };
        mon.steps += steps;
        let w = state.weight();
        mon.drift = mon.drift.max((w + mon.truncation_loss - weight0).abs());
        if let (Some(pe), Some(p0)) = (&parity_e, parity0) {
            mon.parity_drift = mon.parity_drift.max((state.expect(pe) - p0 * w / weight0).abs());
        }
    }
    let full = state.to_basis(&basis);
    Ok((full, mon))
}
