//! Acceptance suite: one PASS/FAIL line per criterion, followed by indented
//! diagnostics. Always exits 0 so that unmet criteria are reported, not hidden
//! behind a harness failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use kpo_cli::commands::{validate_report, Analysis, EstimateRun, LineSummary, TwoPhotonSummary};
use kpo_cli::{estimate_run, run_oracle, CliError, RunConfig};
use kpo_core::dynamics::{evolve_density, evolve_state, IntegratorConfig};
use kpo_core::fock::{expectation, DensityMatrix, FockSpace, Operator, StateVector};
use kpo_core::model::{single_kpo_hamiltonian, LabFrameParams, TimeDependentHamiltonian};
use kpo_core::oracle::{adiabatic_metric_from, eigensystem, rwa_equivalence_check, TwoPhotonLine};
use kpo_core::spectroscopy::Spectrum;
use kpo_core::C64;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, details: &[String]) {
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
        for d in details {
            println!("    {d}");
        }
        if !pass {
            self.failures += 1;
        }
    }
}

fn bundled(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).expect("bundled config")
}

fn scratch(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

struct Benchmarks {
    one: EstimateRun,
    one_secs: f64,
    two: EstimateRun,
    two_secs: f64,
}

fn run_benchmarks(dir: &Path) -> Result<Benchmarks, CliError> {
    let t = Instant::now();
    let one = estimate_run(&bundled("one_kpo.json"), &scratch(dir, "one_kpo"))?;
    let one_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let two = estimate_run(&bundled("two_kpo.json"), &scratch(dir, "two_kpo"))?;
    let two_secs = t.elapsed().as_secs_f64();
    Ok(Benchmarks { one, one_secs, two, two_secs })
}

fn one_kpo_exact(r: &mut Report, dir: &Path) {
    let cfg = bundled("one_kpo.json");
    let t = Instant::now();
    let s = run_oracle(&cfg, &scratch(dir, "oracle_one")).expect("oracle");
    let secs = t.elapsed().as_secs_f64();
    let coarse = Analysis::new(&cfg, &FockSpace::new(&[5]).unwrap()).expect("coarse analysis").metric;
    let pass = (s.value_exact - 0.096).abs() <= 0.002 && secs <= 1.0;
    r.record(
        "1-KPO exact metric = 0.096 +/- 0.002, runtime <= 1 s",
        pass,
        &[
            format!("value_exact {:.6} at N = {} (gap {:.6}, element {:.6}), runtime {secs:.3} s", s.value_exact, cfg.cutoffs[0], s.gap, s.transition_element),
            format!("same model truncated at N = 5 gives {:.6}; the converged value differs from the target", coarse.value),
        ],
    );
}

fn one_kpo_estimate(r: &mut Report, b: &Benchmarks) {
    let s = &b.one.summary;
    let v = s.value_est.unwrap_or(f64::NAN);
    let pass = (0.085..=0.097).contains(&v) && b.one_secs <= 600.0;
    r.record(
        "1-KPO spectroscopic estimate in [0.085, 0.097], runtime <= 10 min",
        pass,
        &[
            format!("value_est {v:.6} (numerator {:.6}, gap {:.6}), status {}", s.numerator_est.unwrap_or(f64::NAN), s.gap_est.unwrap_or(f64::NAN), s.status),
            format!("value_exact {:.6}, relative error {:+.4}, runtime {:.1} s", s.value_exact, s.relative_error.unwrap_or(f64::NAN), b.one_secs),
        ],
    );
}

fn two_kpo_benchmark(r: &mut Report, b: &Benchmarks) {
    let cfg = bundled("two_kpo.json");
    let an = Analysis::new(&cfg, &cfg.space().unwrap()).expect("analysis");
    let stated = adiabatic_metric_from(&an.eig, &an.hdot, 3, cfg.schedule.s1);
    let s = &b.two.summary;
    let v = s.value_est.unwrap_or(f64::NAN);
    let stated_value = stated.as_ref().map(|m| m.value).unwrap_or(f64::NAN);
    let pass = (stated_value - 0.00816).abs() <= 0.0002 && (0.0075..=0.0087).contains(&v) && b.two_secs <= 3600.0;
    let parity = an.parity.as_ref().map(|p| format!("{:?}", &p[..4])).unwrap_or_default();
    r.record(
        "2-KPO open-system benchmark: exact 0.00816 +/- 0.0002 (m = 3), estimate in [0.0075, 0.0087], runtime <= 60 min",
        pass,
        &[
            format!("level 3: value {stated_value:.6} (parity labels of levels 0..3: {parity}; level 3 is not reachable from the even ground level)"),
            format!("level {} (lowest coupled excited level): exact {:.6}, estimate {v:.6}, relative error {:+.4}", s.level, s.value_exact, s.relative_error.unwrap_or(f64::NAN)),
            format!("runtime {:.1} s", b.two_secs),
        ],
    );
}

fn dispersion(r: &mut Report, b: &Benchmarks) {
    let one = &b.one.summary;
    let two = &b.two.summary;
    let worst = |s: &kpo_cli::commands::EstimateSummary| {
        s.omega
            .iter()
            .zip(s.omega_exp.iter().zip(&s.omega_ana))
            .map(|(w, (e, a))| ((e - a).abs() / s.bin_width, w / s.gap_exact))
            .fold((0.0, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc })
    };
    let (d1, w1) = worst(one);
    let (d2, w2) = worst(two);
    let over: Vec<String> = one
        .omega
        .iter()
        .zip(one.omega_exp.iter().zip(&one.omega_ana))
        .filter(|(_, (e, a))| (*e - *a).abs() > 2.0 * one.bin_width)
        .map(|(w, (e, a))| format!("{:.3}:{:+.2}", w / one.gap_exact, (e - a) / one.bin_width))
        .collect();
    r.record(
        "Rabi dispersion within 2 DFT bins of the analytic line at every drive frequency",
        d1 <= 2.0 && d2 <= 2.0,
        &[
            format!("1-KPO: max deviation {d1:.2} bins at omega/gap {w1:.3}; points over 2 bins (omega/gap:bins) {}", over.join(" ")),
            format!("2-KPO: max deviation {d2:.2} bins at omega/gap {w2:.3}"),
            format!("bin = 2 pi / tau_span: {:.6} (1-KPO), {:.6} (2-KPO)", one.bin_width, two.bin_width),
        ],
    );
}

/// Fraction of drive frequencies where row `i` has a local spectral maximum within
/// `tol` natural bins of `line(omega_i)`, among frequencies where the line is resolvable.
fn ridge_match(spec: &Spectrum, line: impl Fn(f64) -> f64, others: &[Vec<f64>], tol: f64, gap: f64) -> (usize, usize, f64, Vec<String>) {
    let bw = spec.bin_width;
    let (mut hit, mut total, mut worst) = (0, 0, 0.0f64);
    let mut missed = Vec::new();
    let top = spec.big_omega[spec.big_omega.len() - 1];
    for (i, &w) in spec.omega.iter().enumerate() {
        let c = line(w);
        // Unresolvable: too close to zero frequency, beyond the band, or on top of another ridge.
        if c < 4.0 * bw || c > top - 4.0 * bw || others.iter().any(|o| (o[i] - c).abs() < 4.0 * bw) {
            continue;
        }
        total += 1;
        let p = &spec.power[i];
        let ks: Vec<usize> = (0..spec.big_omega.len()).filter(|&k| (spec.big_omega[k] - c).abs() <= tol * bw).collect();
        let best = ks.iter().copied().max_by(|&a, &b| p[a].total_cmp(&p[b]));
        let mut positive: Vec<f64> = spec.big_omega.iter().zip(p).filter(|(o, _)| **o > 0.0).map(|(_, v)| *v).collect();
        positive.sort_by(f64::total_cmp);
        let floor = positive[positive.len() / 2];
        if let Some(k) = best {
            let local = k > 0 && k + 1 < p.len() && p[k] >= p[k - 1] && p[k] >= p[k + 1];
            if local && p[k] > 10.0 * floor {
                hit += 1;
                worst = worst.max((spec.big_omega[k] - c).abs() / bw);
                continue;
            }
        }
        missed.push(format!("{:.3}", w / gap));
    }
    (hit, total, worst, missed)
}

fn spurious_lines(r: &mut Report, b: &Benchmarks) {
    let run = &b.one.sweep;
    let spec = run.spectrum.as_ref().expect("spectrum");
    let target: Vec<f64> = spec.omega.iter().map(|&w| run.lines.target.at(w)).collect();
    let pair: &LineSummary = run.lines.pair.as_ref().expect("pair overlay configured");
    let tp: &TwoPhotonSummary = run.lines.two_photon.as_ref().expect("two-photon overlay configured");
    let pair_curve: Vec<f64> = spec.omega.iter().map(|&w| pair.at(w)).collect();
    let tp_curve: Vec<f64> = spec.omega.iter().map(|&w| tp.at(w)).collect();
    let gap = run.analysis.metric.gap;
    let (ph, pt, pw, pm) = ridge_match(spec, |w| pair.at(w), &[target.clone(), tp_curve], 2.0, gap);
    let (th, tt, tw, tm) = ridge_match(spec, |w| tp.at(w), &[target, pair_curve], 2.0, gap);
    let pass = pt > 0 && tt > 0 && ph == pt && th == tt;
    r.record(
        "1-KPO spectrum shows excited-pair and two-photon ridges within 2 bins of their analytic lines",
        pass,
        &[
            format!("excited pair {:?}: matched {ph}/{pt} resolvable drive frequencies, worst matched offset {pw:.2} bins; missed at omega/gap {}", pair.levels, pm.join(" ")),
            format!("two-photon {:?}: matched {th}/{tt} resolvable drive frequencies, worst matched offset {tw:.2} bins; missed at omega/gap {}", tp.levels, tm.join(" ")),
            "a match is a local maximum above 10x the row's median power".to_string(),
        ],
    );
}

fn conservation(r: &mut Report, b: &Benchmarks, dir: &Path) {
    let one = &b.one.sweep.output;
    let two = &b.two.sweep.output;
    let closed_drift = one.anneal.drift.max(one.dwell.drift);
    let open_drift = two.anneal.drift.max(two.dwell.drift);
    let open_min = two.anneal.min_eigenvalue.min(two.dwell.min_eigenvalue);
    let open_parity = two.anneal.parity_drift.max(two.dwell.parity_drift);
    let report = validate_report(&bundled("two_kpo.json"), &scratch(dir, "validate_two")).expect("validate").checks;
    let check = |n: &str| report.iter().find(|c| c.name == n).map(|c| c.value).unwrap_or(f64::NAN);
    let closed_parity = check("closed_parity_drift");
    let lossless = check("lossless_open_matches_closed");
    let pass = closed_drift <= 1e-8
        && open_drift <= 1e-8
        && open_min >= -1e-8
        && open_parity <= 1e-6
        && closed_parity <= 1e-6
        && lossless >= 1.0 - 1e-8;
    r.record(
        "Conservation: norm/trace drift <= 1e-8, min eigenvalue >= -1e-8, parity drift <= 1e-6 (r = 0), lossless open = closed to 1e-8",
        pass,
        &[
            format!("closed norm drift (1-KPO sweep) {closed_drift:.3e}"),
            format!("open trace drift {open_drift:.3e}, min eigenvalue {open_min:.3e} (2-KPO sweep)"),
            format!("parity drift: closed 2-KPO dwell {closed_parity:.3e}; open 2-KPO sweep {open_parity:.3e} (photon loss flips parity)"),
            format!("lossless open vs closed fidelity {lossless:.12}"),
        ],
    );
}

fn analytic_oracles(r: &mut Report) {
    let mut lines = Vec::new();
    let mut ok = true;

    // Cat doublet at -p^2/chi.
    let (chi, p) = (1.0, 1.0);
    let eig = eigensystem(&single_kpo_hamiltonian(chi, 0.0, p, 0.0, 30).unwrap()).unwrap();
    let cat = (eig.energies[0] + p * p / chi).abs().max((eig.energies[1] + p * p / chi).abs());
    ok &= cat <= 1e-4;
    lines.push(format!("cat doublet deviation {cat:.3e} (limit 1e-4)"));

    // Damped cavity.
    let space = FockSpace::new(&[8]).unwrap();
    let gamma: f64 = 0.3;
    let h = TimeDependentHamiltonian::constant(Operator::number(&space, 0).unwrap());
    let l = Operator::annihilation(&space, 0).unwrap().scale(gamma.sqrt());
    let rho0 = DensityMatrix::from_pure(&StateVector::fock(&space, &[3]).unwrap());
    let cfg = IntegratorConfig { samples: 20, ..IntegratorConfig::default() };
    let traj = evolve_density(&h, &[l], &rho0, 0.0, 5.0, &cfg).unwrap();
    let n = Operator::number(&space, 0).unwrap();
    let damp = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| (expectation(&n, s).unwrap().re - 3.0 * (-gamma * t).exp()).abs())
        .fold(0.0, f64::max);
    ok &= damp <= 1e-6;
    lines.push(format!("damped cavity max |<n> - n0 exp(-gamma t)| {damp:.3e} (limit 1e-6)"));

    // Time-independent propagation against the spectral exponential.
    let hq = single_kpo_hamiltonian(1.0, 1.0, 1.0, 1.0, 10).unwrap();
    let space = hq.space().clone();
    let psi0 = StateVector::vacuum(&space);
    let t = 5.0;
    let traj = evolve_state(&TimeDependentHamiltonian::constant(hq.clone()), &psi0, 0.0, t, &IntegratorConfig::default()).unwrap();
    let e = eigensystem(&hq).unwrap();
    let coeffs = e.vectors.adjoint() * psi0.amplitudes();
    let phased = coeffs.iter().zip(&e.energies).map(|(c, en)| c * C64::from_polar(1.0, -en * t));
    let exact = &e.vectors * nalgebra::DVector::from_iterator(coeffs.len(), phased);
    let spectral = (traj.states.last().unwrap().amplitudes() - exact).norm();
    ok &= spectral <= 1e-8;
    lines.push(format!("propagation vs spectral exponential {spectral:.3e} (limit 1e-8)"));

    // Rotating-wave approximation at omega' = 100 chi.
    let lp = LabFrameParams { omega_lab: 50.0, chi: 1.0, pump: 1.0, pump_side: 1.0, omega_pump: 100.0, delta: 0.1 };
    let rwa = rwa_equivalence_check(&lp, 10.0, 14, &IntegratorConfig { norm_target: 0.02, ..IntegratorConfig::default() }).unwrap();
    ok &= rwa <= 0.01;
    lines.push(format!("RWA infidelity at omega' = 100 chi over t = 10: {rwa:.4e} (limit 1e-2)"));

    // Two-photon element scales as g^2.
    let h0 = single_kpo_hamiltonian(1.0, 1.0, 1.0, 1.0, 12).unwrap();
    let hp = Operator::annihilation(h0.space(), 0).unwrap().compose(&Operator::annihilation(h0.space(), 0).unwrap()).unwrap();
    let hp = hp.add(&hp.adjoint()).unwrap();
    let line = TwoPhotonLine::new(&eigensystem(&h0).unwrap(), &hp, (0, 2)).unwrap();
    let (a, b) = (line.at(0.05, 2.0).unwrap().element.norm(), line.at(0.1, 2.0).unwrap().element.norm());
    let scaling = (b / a / 4.0 - 1.0).abs();
    ok &= scaling <= 1e-10;
    lines.push(format!("two-photon g^2 scaling error {scaling:.3e} (limit 1e-10)"));

    r.record("Analytic oracles: cat doublet, damped cavity, spectral exponential, RWA, two-photon scaling", ok, &lines);
}

fn cutoff_convergence(r: &mut Report, b: &Benchmarks, dir: &Path) {
    let mut lines = Vec::new();
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    for name in ["one_kpo.json", "two_kpo.json"] {
        let cfg = bundled(name);
        let base = Analysis::new(&cfg, &cfg.space().unwrap()).unwrap().metric;
        let big = Analysis::new(&cfg, &cfg.space_with_extra(4).unwrap()).unwrap().metric;
        let d = rel(base.gap, big.gap).max(rel(base.numerator, big.numerator)).max(rel(base.value, big.value));
        worst = worst.max(d);
        lines.push(format!("{name}: exact gap/element/value max relative change {d:.3e}"));
    }
    for (name, base) in [("one_kpo.json", &b.one.summary), ("two_kpo.json", &b.two.summary)] {
        let mut cfg = bundled(name);
        cfg.cutoffs = cfg.cutoffs.iter().map(|c| c + 4).collect();
        match estimate_run(&cfg, &scratch(dir, &format!("{name}.plus4"))) {
            Ok(run) => {
                let (x, y) = (base.value_est.unwrap_or(f64::NAN), run.summary.value_est.unwrap_or(f64::NAN));
                let d = rel(x, y);
                worst = worst.max(d);
                lines.push(format!("{name}: spectroscopic estimate {x:.8} -> {y:.8}, relative change {d:.3e}"));
            }
            Err(e) => {
                worst = f64::INFINITY;
                lines.push(format!("{name} at N + 4 failed: {e}"));
            }
        }
    }
    r.record("Cutoff convergence: N -> N + 4 changes reported quantities by <= 1e-5 relative", worst <= 1e-5, &lines);
}

fn main() {
    // Respect the libtest filter convention loosely: `cargo test -- <other test>` skips this suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let dir = tempfile::tempdir().expect("scratch dir");
    let mut r = Report { failures: 0 };
    one_kpo_exact(&mut r, dir.path());
    let bench = match run_benchmarks(dir.path()) {
        Ok(b) => b,
        Err(e) => {
            r.record("benchmark sweeps", false, &[format!("{e}")]);
            println!("acceptance: benchmark sweeps failed; remaining criteria not evaluated");
            return;
        }
    };
    one_kpo_estimate(&mut r, &bench);
    two_kpo_benchmark(&mut r, &bench);
    dispersion(&mut r, &bench);
    spurious_lines(&mut r, &bench);
    conservation(&mut r, &bench, dir.path());
    analytic_oracles(&mut r);
    cutoff_convergence(&mut r, &bench, dir.path());
    println!("acceptance: {} of 8 criteria not met", r.failures);
}
