use kpo_core::fock::{FockSpace, Operator};
use kpo_core::model::*;
use kpo_core::oracle::eigensystem;
use kpo_core::C64;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn two_kpo(gamma: f64) -> KpoParams {
    let j = C64::new(0.1, 0.0);
    KpoParams {
        chi: vec![1.0, 1.23],
        detuning: vec![0.1, 0.1],
        pump: vec![2.0, 2.46],
        coherent_drive: vec![0.0, 0.0],
        coupling: DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), j, j, C64::new(0.0, 0.0)]),
        gamma,
    }
}

fn benchmark_schedule() -> Schedule {
    Schedule { t_ann: 500.0, s1: 0.5, lambda: 0.1, omega: 2.0, tau_max: 100.0 }
}

#[test]
fn cat_doublet_energy() {
    let s = FockSpace::new(&[20]).unwrap();
    let h = build_problem_hamiltonian(&KpoParams::single(1.0, 0.0, 1.0, 0.0), &s).unwrap();
    let eig = eigensystem(&h).unwrap();
    assert!((eig.energies[0] + 1.0).abs() <= 1e-4, "E0 = {}", eig.energies[0]);
    assert!(eig.energies[1] - eig.energies[0] <= 1e-3);
}

#[test]
fn driver_ground_is_vacuum() {
    let s = FockSpace::new(&[10]).unwrap();
    let h = build_driver_hamiltonian(&KpoParams::single(1.0, 1.0, 1.0, 0.0), &s).unwrap();
    let eig = eigensystem(&h).unwrap();
    assert!(eig.energies[0].abs() < 1e-14);
    assert!((eig.vectors[(0, 0)].norm() - 1.0).abs() < 1e-14);
}

#[test]
fn coupled_driver_annihilates_vacuum() {
    let s = FockSpace::uniform(2, 6).unwrap();
    let h = build_driver_hamiltonian(&two_kpo(0.0), &s).unwrap();
    let out = h.matrix().column(0).into_owned();
    assert!(out.norm() < 1e-15);
}

#[test]
fn driver_minus_problem_is_pump_quadrature() {
    let s = FockSpace::uniform(2, 5).unwrap();
    let p = two_kpo(0.0);
    let hams = KpoHamiltonians::build(&p, &s).unwrap();
    let mut expected = Operator::zeros(&s);
    for j in 0..2 {
        let a = Operator::annihilation(&s, j).unwrap();
        let a2 = a.compose(&a).unwrap();
        expected = expected.add(&a2.add(&a2.adjoint()).unwrap().scale(p.pump[j])).unwrap();
    }
    assert!((hams.generator.matrix() - expected.matrix()).norm() < 1e-13);
    assert!((hams.conventional_derivative().matrix() + expected.matrix()).norm() < 1e-13);
}

#[test]
fn qa_endpoints_and_midpoint() {
    let s = FockSpace::new(&[8]).unwrap();
    let p = KpoParams::single(1.0, 1.0, 1.0, 1.0);
    let hams = KpoHamiltonians::build(&p, &s).unwrap();
    let early = Schedule { s1: 0.999, ..benchmark_schedule() };
    let h0 = qa_hamiltonian_at(&p, &s, &early, 0.0).unwrap();
    assert!((h0.matrix() - hams.driver.matrix()).norm() < 1e-14);
    let h_mid = qa_hamiltonian_at(&p, &s, &benchmark_schedule(), 0.5).unwrap();
    let avg = (hams.driver.matrix() + hams.problem.matrix()) * C64::new(0.5, 0.0);
    assert!((h_mid.matrix() - avg).norm() < 1e-13);
    assert!((hams.interpolate(0.0).matrix() - hams.problem.matrix()).norm() < 1e-14);
    assert!(qa_hamiltonian_at(&p, &s, &benchmark_schedule(), 1.5).is_err());
}

#[test]
fn drive_switch_on_value() {
    let s = FockSpace::new(&[8]).unwrap();
    let p = KpoParams::single(1.0, 1.0, 1.0, 1.0);
    let sch = benchmark_schedule();
    let before = drive_hamiltonian_at(&p, &s, &sch, 0.3).unwrap();
    assert_eq!(before.max_abs(), 0.0);
    let on = drive_hamiltonian_at(&p, &s, &sch, sch.s1 + 1e-15).unwrap();
    let a = Operator::annihilation(&s, 0).unwrap();
    let a2 = a.compose(&a).unwrap();
    let expected = a2.add(&a2.adjoint()).unwrap().scale(-0.1);
    assert!((on.matrix() - expected.matrix()).norm() < 1e-12);
}

#[test]
fn single_mode_network_matches_single_form() {
    let s = FockSpace::new(&[9]).unwrap();
    let net = build_problem_hamiltonian(&KpoParams::single(1.3, 0.4, 0.7, 0.2), &s).unwrap();
    let single = single_kpo_hamiltonian(1.3, 0.4, 0.7, 0.2, 9).unwrap();
    assert_eq!(net.matrix(), single.matrix());
}

#[test]
fn lindblad_examples() {
    let s = FockSpace::uniform(2, 4).unwrap();
    let zero = lindblad_ops(&two_kpo(0.0), &s).unwrap();
    assert_eq!(zero.len(), 2);
    assert!(zero.iter().all(|l| l.max_abs() == 0.0));

    let ops = lindblad_ops(&two_kpo(0.00014), &s).unwrap();
    for (j, l) in ops.iter().enumerate() {
        let n = Operator::number(&s, j).unwrap().scale(0.00014);
        let ltl = l.adjoint().compose(l).unwrap();
        assert!((ltl.matrix() - n.matrix()).norm() < 1e-16);
    }
    assert!(lindblad_ops(&two_kpo(-1.0), &s).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    let s = FockSpace::uniform(2, 4).unwrap();
    let mut p = two_kpo(0.0);
    p.coupling[(0, 1)] = C64::new(0.1, 0.2);
    assert!(build_problem_hamiltonian(&p, &s).is_err());
    let mut p = two_kpo(0.0);
    p.chi[1] = 0.0;
    assert!(build_driver_hamiltonian(&p, &s).is_err());
    let one = FockSpace::new(&[4]).unwrap();
    assert!(build_problem_hamiltonian(&two_kpo(0.0), &one).is_err());
}

#[test]
fn labframe_examples() {
    let s = FockSpace::new(&[6]).unwrap();
    let free = LabFrameParams { omega_lab: 10.0, chi: 1.0, pump: 0.0, pump_side: 0.0, omega_pump: 20.0, delta: 0.1 };
    let h = build_labframe_hamiltonian(&free, &s).unwrap();
    let n = Operator::number(&s, 0).unwrap();
    let expected = n.scale(10.0).add(&n.compose(&n).unwrap()).unwrap();
    for t in [0.0, 0.37, 5.0] {
        assert!((h.at(t).matrix() - expected.matrix()).norm() < 1e-13);
    }

    let lp = LabFrameParams { pump: 0.3, pump_side: 0.2, ..free };
    let h = build_labframe_hamiltonian(&lp, &s).unwrap();
    let a = Operator::annihilation(&s, 0).unwrap();
    let a2 = a.compose(&a).unwrap();
    let x2 = a2.add(&a2.adjoint()).unwrap();
    let at_zero = expected.add(&x2.scale(2.0 * 0.2 + 2.0 * 0.3)).unwrap();
    assert!((h.at(0.0).matrix() - at_zero.matrix()).norm() < 1e-13);

    let rot = rotating_frame_hamiltonian(&lp, &s).unwrap();
    let target = n.scale(10.0 - 10.0).add(&n.compose(&n).unwrap()).unwrap().add(&x2.scale(0.3)).unwrap();
    assert!((rot.constant_part().matrix() - target.matrix()).norm() < 1e-13);
}

#[test]
fn coefficients() {
    let sch = benchmark_schedule();
    let anneal = Coefficient::Anneal { t_ann: sch.t_ann, t1: sch.t1() };
    assert_eq!(anneal.at(0.0), 1.0);
    assert_eq!(anneal.at(sch.t1()), 0.5);
    assert_eq!(anneal.at(10.0 * sch.t1()), 0.5);
    let drive = Coefficient::Drive { amplitude: -0.1, omega: 2.0, t1: 1.0, t_end: 3.0 };
    assert_eq!(drive.at(1.0), 0.0);
    assert!((drive.at(1.0 + 1e-12) + 0.1).abs() < 1e-12);
    assert_eq!(drive.at(3.5), 0.0);
    assert_eq!(sch.lambda_at(sch.s1), 0.0);
    assert_eq!(sch.lambda_at(sch.s1 + 0.01), 0.1);
}

fn parity_commutator(op: &Operator) -> f64 {
    let pi = Operator::parity_total(op.space());
    op.commutator(&pi).unwrap().max_abs()
}

proptest! {
    #[test]
    fn builders_are_hermitian(
        chi in 0.1f64..2.0, delta in -1.0f64..1.0, pump in -2.0f64..2.0, r in -1.0f64..1.0,
        jre in -0.5f64..0.5, jim in -0.5f64..0.5, n in 2usize..6,
    ) {
        let j = C64::new(jre, jim);
        let p = KpoParams {
            chi: vec![chi, chi * 1.1],
            detuning: vec![delta, -delta],
            pump: vec![pump, 0.5 * pump],
            coherent_drive: vec![r, 0.0],
            coupling: DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), j.conj(), j, C64::new(0.0, 0.0)]),
            gamma: 0.0,
        };
        let s = FockSpace::uniform(2, n).unwrap();
        let hams = KpoHamiltonians::build(&p, &s).unwrap();
        prop_assert!(hams.driver.hermiticity_error() <= 1e-12);
        prop_assert!(hams.problem.hermiticity_error() <= 1e-12);
        prop_assert!(hams.generator.hermiticity_error() <= 1e-12);
    }

    #[test]
    fn anneal_is_affine_in_s(s_a in 0.0f64..0.5, s_b in 0.0f64..0.5, w in 0.0f64..1.0) {
        let p = two_kpo(0.0);
        let sp = FockSpace::uniform(2, 4).unwrap();
        let sch = Schedule { s1: 0.5, ..benchmark_schedule() };
        let s_c = w * s_a + (1.0 - w) * s_b;
        let ha = qa_hamiltonian_at(&p, &sp, &sch, s_a).unwrap();
        let hb = qa_hamiltonian_at(&p, &sp, &sch, s_b).unwrap();
        let hc = qa_hamiltonian_at(&p, &sp, &sch, s_c).unwrap();
        let combo = ha.matrix() * C64::new(w, 0.0) + hb.matrix() * C64::new(1.0 - w, 0.0);
        prop_assert!((hc.matrix() - combo).norm() <= 1e-12);
    }

    #[test]
    fn parity_is_conserved_without_coherent_drive(s in 0.0f64..1.0, tau_frac in 0.0f64..1.0, n in 2usize..6) {
        let p = two_kpo(0.0);
        let sp = FockSpace::uniform(2, n).unwrap();
        let sch = Schedule { s1: 2.0 / 3.0, lambda: 0.02, omega: 0.5, tau_max: 100.0, t_ann: 500.0 };
        let h = qa_hamiltonian_at(&p, &sp, &sch, s).unwrap();
        prop_assert!(parity_commutator(&h) <= 1e-10);
        let sd = sch.s1 + tau_frac * (sch.s_end() - sch.s1);
        let d = drive_hamiltonian_at(&p, &sp, &sch, sd.min(1.0)).unwrap();
        prop_assert!(parity_commutator(&d) <= 1e-10);
    }
}
