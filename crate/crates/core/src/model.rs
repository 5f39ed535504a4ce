//! KPO network Hamiltonians, the annealing schedule and the pump-modulation drive.
//!
//! The annealing function is `f(s) = 1 - s`. During the dwell the schedule is
//! frozen at `A(s1)` and the pump amplitudes are modulated by
//! `lambda * f'(s1) * cos(omega (t - t1)) * (H_D - H_P)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{FockSpace, Operator};
use crate::C64;

/// Derivative of the annealing function `f(s) = 1 - s`.
pub const F_DOT: f64 = -1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct KpoParams {
    pub chi: Vec<f64>,
    pub detuning: Vec<f64>,
    pub pump: Vec<f64>,
    pub coherent_drive: Vec<f64>,
    /// `coupling[(j, j')] = J_{jj'}`; Hermitian with zero diagonal.
    pub coupling: DMatrix<C64>,
    pub gamma: f64,
}

impl KpoParams {
    pub fn single(chi: f64, detuning: f64, pump: f64, coherent_drive: f64) -> Self {
        Self {
            chi: vec![chi],
            detuning: vec![detuning],
            pump: vec![pump],
            coherent_drive: vec![coherent_drive],
            coupling: DMatrix::zeros(1, 1),
            gamma: 0.0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.chi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_modes();
        if k == 0 {
            return Err(Error::InvalidParameter("no modes".into()));
        }
        for (name, v) in [
            ("detuning", &self.detuning),
            ("pump", &self.pump),
            ("coherent_drive", &self.coherent_drive),
        ] {
            if v.len() != k {
                return Err(Error::InvalidParameter(format!("{name} has {} entries, expected {k}", v.len())));
            }
        }
        let all = self.chi.iter().chain(&self.detuning).chain(&self.pump).chain(&self.coherent_drive);
        if all.clone().any(|x| !x.is_finite()) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        if let Some(c) = self.chi.iter().find(|&&c| c <= 0.0) {
            return Err(Error::InvalidParameter(format!("Kerr coefficient must be positive, got {c}")));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParameter(format!("negative decay rate {}", self.gamma)));
        }
        if self.coupling.nrows() != k || self.coupling.ncols() != k {
            return Err(Error::InvalidParameter("coupling matrix shape".into()));
        }
        for i in 0..k {
            if self.coupling[(i, i)].norm() > 0.0 {
                return Err(Error::InvalidParameter("coupling diagonal must be zero".into()));
            }
            for j in 0..k {
                let d = (self.coupling[(i, j)] - self.coupling[(j, i)].conj()).norm();
                if d > 1e-12 || !self.coupling[(i, j)].re.is_finite() || !self.coupling[(i, j)].im.is_finite() {
                    return Err(Error::NonHermitian(d));
                }
            }
        }
        Ok(())
    }

    /// Parity is conserved when no coherent drive is applied.
    pub fn conserves_parity(&self) -> bool {
        self.coherent_drive.iter().all(|&r| r == 0.0)
    }

    fn check_space(&self, space: &FockSpace) -> Result<()> {
        self.validate()?;
        if space.n_modes() != self.n_modes() {
            return Err(Error::InvalidParameter(format!(
                "space has {} modes, parameters have {}",
                space.n_modes(),
                self.n_modes()
            )));
        }
        Ok(())
    }
}

/// Annealing and drive program. Times are physical, `t = s * t_ann`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub t_ann: f64,
    pub s1: f64,
    pub lambda: f64,
    pub omega: f64,
    pub tau_max: f64,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_ann > 0.0 && self.t_ann.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_ann must be positive, got {}", self.t_ann)));
        }
        if !(self.s1 > 0.0 && self.s1 < 1.0) {
            return Err(Error::InvalidParameter(format!("s1 must lie in (0, 1), got {}", self.s1)));
        }
        if !self.lambda.is_finite() || !self.omega.is_finite() {
            return Err(Error::InvalidParameter("non-finite drive parameter".into()));
        }
        if !(self.tau_max >= 0.0 && self.tau_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau_max must be non-negative, got {}", self.tau_max)));
        }
        Ok(())
    }

    pub fn with_drive(&self, omega: f64, tau_max: f64) -> Self {
        Self { omega, tau_max, ..self.clone() }
    }

    pub fn t1(&self) -> f64 {
        self.s1 * self.t_ann
    }

    /// End of the drive window in `s`.
    pub fn s_end(&self) -> f64 {
        self.s1 + self.tau_max / self.t_ann
    }

    /// `A(s) = f(s)` up to `s1`, frozen at `f(s1)` afterwards.
    pub fn a_of_s(&self, s: f64) -> f64 {
        1.0 - s.min(self.s1)
    }

    pub fn lambda_at(&self, s: f64) -> f64 {
        if s > self.s1 && s <= self.s_end() {
            self.lambda
        } else {
            0.0
        }
    }
}

/// Scalar time profiles multiplying operator terms.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `offset + slope * t`.
    Linear { offset: f64, slope: f64 },
    /// `amplitude * cos(omega * (t - t_ref))`.
    Cosine { amplitude: f64, omega: f64, t_ref: f64 },
    /// `A(t / t_ann)` of a [`Schedule`]: linear ramp frozen after `t1`.
    Anneal { t_ann: f64, t1: f64 },
    /// `amplitude * cos(omega (t - t1))` for `t1 < t <= t_end`, zero elsewhere.
    Drive { amplitude: f64, omega: f64, t1: f64, t_end: f64 },
    Sum(Vec<Coefficient>),
}

impl Coefficient {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Linear { offset, slope } => offset + slope * t,
            Self::Cosine { amplitude, omega, t_ref } => amplitude * (omega * (t - t_ref)).cos(),
            Self::Anneal { t_ann, t1 } => 1.0 - t.min(*t1) / t_ann,
            Self::Drive { amplitude, omega, t1, t_end } => {
                if t > *t1 && t <= *t_end {
                    amplitude * (omega * (t - t1)).cos()
                } else {
                    0.0
                }
            }
            Self::Sum(parts) => parts.iter().map(|p| p.at(t)).sum(),
        }
    }

    /// Upper bound of `|c(t)|` on `[t0, t1]`.
    pub fn max_abs(&self, t0: f64, t1: f64) -> f64 {
        match self {
            Self::Constant(c) => c.abs(),
            Self::Linear { .. } | Self::Anneal { .. } => self.at(t0).abs().max(self.at(t1).abs()),
            Self::Cosine { amplitude, .. } | Self::Drive { amplitude, .. } => amplitude.abs(),
            Self::Sum(parts) => parts.iter().map(|p| p.max_abs(t0, t1)).sum(),
        }
    }
}

/// `H(t) = H_c + sum_k c_k(t) H_k`.
#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    constant: Operator,
    terms: Vec<(Coefficient, Operator)>,
}

impl TimeDependentHamiltonian {
    pub fn constant(op: Operator) -> Self {
        Self { constant: op, terms: Vec::new() }
    }

    pub fn new(constant: Operator, terms: Vec<(Coefficient, Operator)>) -> Result<Self> {
        if terms.iter().any(|(_, op)| op.space() != constant.space()) {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self { constant, terms })
    }

    pub fn space(&self) -> &FockSpace {
        self.constant.space()
    }

    pub fn constant_part(&self) -> &Operator {
        &self.constant
    }

    pub fn terms(&self) -> &[(Coefficient, Operator)] {
        &self.terms
    }

    pub fn at(&self, t: f64) -> Operator {
        let mut m = self.constant.matrix().clone();
        for (c, op) in &self.terms {
            m += op.matrix() * C64::new(c.at(t), 0.0);
        }
        Operator::new(self.space().clone(), m).expect("shapes agree by construction")
    }
}

fn local_ladder(n: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    let ad = a.adjoint();
    (a, ad)
}

/// Product of two sparse matrices, visiting only nonzero entries.
fn sparse_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let zero = C64::new(0.0, 0.0);
    let rows_b: Vec<Vec<(usize, C64)>> =
        (0..n).map(|k| (0..b.ncols()).filter(|&j| b[(k, j)] != zero).map(|j| (j, b[(k, j)])).collect()).collect();
    let mut out = DMatrix::zeros(n, b.ncols());
    for k in 0..a.ncols() {
        for i in 0..n {
            let v = a[(i, k)];
            if v != zero {
                for &(j, w) in &rows_b[k] {
                    out[(i, j)] += v * w;
                }
            }
        }
    }
    out
}

/// Parts of the network Hamiltonian sharing the Kerr, detuning, drive and coupling terms.
fn network_terms(params: &KpoParams, space: &FockSpace, with_pump: bool) -> Result<Operator> {
    params.check_space(space)?;
    let dim = space.dim();
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let mut ladders = Vec::with_capacity(params.n_modes());
    for j in 0..params.n_modes() {
        let (a, ad) = local_ladder(space.cutoffs()[j]);
        let a2 = &a * &a;
        let ad2 = &ad * &ad;
        let mut local = &ad2 * &a2 * C64::new(params.chi[j], 0.0) + &ad * &a * C64::new(params.detuning[j], 0.0);
        if with_pump {
            local -= (&a2 + &ad2) * C64::new(params.pump[j], 0.0);
        }
        local += (&a + &ad) * C64::new(params.coherent_drive[j], 0.0);
        h += space.embed(j, &local);
        ladders.push((space.embed(j, &a), space.embed(j, &ad)));
    }
    for j in 0..params.n_modes() {
        for jp in 0..j {
            let coupling = params.coupling[(j, jp)];
            if coupling == C64::new(0.0, 0.0) {
                continue;
            }
            let hop = sparse_product(&ladders[j].1, &ladders[jp].0) * coupling;
            h += &hop + hop.adjoint();
        }
    }
    Operator::new(space.clone(), h)
}

/// `H_P = sum_j (chi a^2dag a^2 + Delta n - p (a^2 + a^2dag) + r (a + adag)) + couplings`.
pub fn build_problem_hamiltonian(params: &KpoParams, space: &FockSpace) -> Result<Operator> {
    network_terms(params, space, true)
}

/// `H_D`: the problem Hamiltonian with all pump terms removed.
pub fn build_driver_hamiltonian(params: &KpoParams, space: &FockSpace) -> Result<Operator> {
    network_terms(params, space, false)
}

/// Single-oscillator form `chi a^2dag a^2 + Delta n - p (a^2 + a^2dag) + r (a + adag)`.
pub fn single_kpo_hamiltonian(chi: f64, detuning: f64, pump: f64, r: f64, cutoff: usize) -> Result<Operator> {
    let space = FockSpace::new(&[cutoff])?;
    let (a, ad) = local_ladder(cutoff);
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    let h = &ad2 * &a2 * C64::new(chi, 0.0) + &ad * &a * C64::new(detuning, 0.0) - (&a2 + &ad2) * C64::new(pump, 0.0)
        + (&a + &ad) * C64::new(r, 0.0);
    Operator::new(space, h)
}

/// Driver, problem and drive-generator operators for one network.
#[derive(Clone, Debug)]
pub struct KpoHamiltonians {
    pub driver: Operator,
    pub problem: Operator,
    /// `H_D - H_P`, the operator modulated by the drive.
    pub generator: Operator,
}

impl KpoHamiltonians {
    pub fn build(params: &KpoParams, space: &FockSpace) -> Result<Self> {
        let driver = build_driver_hamiltonian(params, space)?;
        let problem = build_problem_hamiltonian(params, space)?;
        let generator = driver.sub(&problem)?;
        Ok(Self { driver, problem, generator })
    }

    pub fn space(&self) -> &FockSpace {
        self.driver.space()
    }

    /// `A H_D + (1 - A) H_P`.
    pub fn interpolate(&self, a: f64) -> Operator {
        let m = self.driver.matrix() * C64::new(a, 0.0) + self.problem.matrix() * C64::new(1.0 - a, 0.0);
        Operator::new(self.space().clone(), m).expect("same space")
    }

    /// `H_P - H_D`, the derivative of the annealing Hamiltonian with respect to `f`.
    pub fn conventional_derivative(&self) -> Operator {
        self.generator.scale(-1.0)
    }

    /// Annealing Hamiltonian followed by the frozen, driven dwell.
    ///
    /// The drive switches on discontinuously at `t1`; fixed-step integrators
    /// keep their order only when run on [`Self::anneal`] and [`Self::dwell`] separately.
    pub fn protocol(&self, schedule: &Schedule) -> TimeDependentHamiltonian {
        let coefficient = Coefficient::Sum(vec![
            Coefficient::Anneal { t_ann: schedule.t_ann, t1: schedule.t1() },
            Coefficient::Drive {
                amplitude: schedule.lambda * F_DOT,
                omega: schedule.omega,
                t1: schedule.t1(),
                t_end: schedule.t1() + schedule.tau_max,
            },
        ]);
        TimeDependentHamiltonian { constant: self.problem.clone(), terms: vec![(coefficient, self.generator.clone())] }
    }

    /// Annealing stage only, valid for `t <= t1`.
    pub fn anneal(&self, schedule: &Schedule) -> TimeDependentHamiltonian {
        let coefficient = Coefficient::Anneal { t_ann: schedule.t_ann, t1: schedule.t1() };
        TimeDependentHamiltonian { constant: self.problem.clone(), terms: vec![(coefficient, self.generator.clone())] }
    }

    /// Frozen `H_QA(s1)` plus the cosine drive, valid for `t > t1`.
    pub fn dwell(&self, schedule: &Schedule) -> TimeDependentHamiltonian {
        let coefficient = Coefficient::Cosine { amplitude: schedule.lambda * F_DOT, omega: schedule.omega, t_ref: schedule.t1() };
        TimeDependentHamiltonian {
            constant: self.interpolate(schedule.a_of_s(schedule.s1)),
            terms: vec![(coefficient, self.generator.clone())],
        }
    }
}

/// `H_QA(s) = A(s) H_D + (1 - A(s)) H_P`.
pub fn qa_hamiltonian_at(params: &KpoParams, space: &FockSpace, schedule: &Schedule, s: f64) -> Result<Operator> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange(format!("s = {s} outside [0, 1]")));
    }
    let h = KpoHamiltonians::build(params, space)?;
    Ok(h.interpolate(schedule.a_of_s(s)))
}

/// External drive at annealing time `s`; zero outside the drive window.
pub fn drive_hamiltonian_at(params: &KpoParams, space: &FockSpace, schedule: &Schedule, s: f64) -> Result<Operator> {
    let h = KpoHamiltonians::build(params, space)?;
    let lambda = schedule.lambda_at(s);
    if lambda == 0.0 {
        return Ok(Operator::zeros(space));
    }
    let phase = schedule.omega * schedule.t_ann * (s - schedule.s1);
    Ok(h.generator.scale(lambda * F_DOT * phase.cos()))
}

/// Decay operators `sqrt(gamma) a_j`.
pub fn lindblad_ops(params: &KpoParams, space: &FockSpace) -> Result<Vec<Operator>> {
    params.check_space(space)?;
    (0..params.n_modes())
        .map(|j| Ok(Operator::annihilation(space, j)?.scale(params.gamma.sqrt())))
        .collect()
}

/// Single KPO in the laboratory frame with a two-tone pump.
#[derive(Clone, Debug, PartialEq)]
pub struct LabFrameParams {
    pub omega_lab: f64,
    pub chi: f64,
    pub pump: f64,
    pub pump_side: f64,
    pub omega_pump: f64,
    pub delta: f64,
}

fn pump_quadrature(space: &FockSpace) -> Result<Operator> {
    if space.n_modes() != 1 {
        return Err(Error::InvalidParameter("lab-frame model is single-mode".into()));
    }
    let (a, ad) = local_ladder(space.cutoffs()[0]);
    Operator::new(space.clone(), &a * &a + &ad * &ad)
}

/// `omega_lab n + chi n^2 + p'(a^2 + a^2dag)[cos((w'+d)t) + cos((w'-d)t)] + 2p(a^2 + a^2dag) cos(w't)`.
pub fn build_labframe_hamiltonian(lp: &LabFrameParams, space: &FockSpace) -> Result<TimeDependentHamiltonian> {
    let x2 = pump_quadrature(space)?;
    let n = Operator::number(space, 0)?;
    let constant = n.scale(lp.omega_lab).add(&n.compose(&n)?.scale(lp.chi))?;
    let coefficient = Coefficient::Sum(vec![
        Coefficient::Cosine { amplitude: lp.pump_side, omega: lp.omega_pump + lp.delta, t_ref: 0.0 },
        Coefficient::Cosine { amplitude: lp.pump_side, omega: lp.omega_pump - lp.delta, t_ref: 0.0 },
        Coefficient::Cosine { amplitude: 2.0 * lp.pump, omega: lp.omega_pump, t_ref: 0.0 },
    ]);
    TimeDependentHamiltonian::new(constant, vec![(coefficient, x2)])
}

/// Rotating-wave Hamiltonian in the frame `U = exp(i (w'/2) t n)`:
/// `(omega_lab - w'/2) n + chi n^2 + p (a^2 + a^2dag) + p' (a^2 + a^2dag) cos(d t)`.
pub fn rotating_frame_hamiltonian(lp: &LabFrameParams, space: &FockSpace) -> Result<TimeDependentHamiltonian> {
    let x2 = pump_quadrature(space)?;
    let n = Operator::number(space, 0)?;
    let constant = n
        .scale(lp.omega_lab - lp.omega_pump / 2.0)
        .add(&n.compose(&n)?.scale(lp.chi))?
        .add(&x2.scale(lp.pump))?;
    let coefficient = Coefficient::Cosine { amplitude: lp.pump_side, omega: lp.delta, t_ref: 0.0 };
    TimeDependentHamiltonian::new(constant, vec![(coefficient, x2)])
}
