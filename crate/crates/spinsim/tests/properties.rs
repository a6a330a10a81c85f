//! Randomized structural properties of the numerical kernels.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinsim::qspace::pauli_decompose;
use spinsim::dynamics::propagate_sequence;
use spinsim::grape::{self, GrapeProblem};
use spinsim::linalg::{c, cr, herm_eigen, is_hermitian, kron, max_abs_diff, CMat, CVec};
use spinsim::model::{build_dimer, dimer_counters, DimerParams};
use spinsim::pulses::{compile_rotation, decompose_su4, recompose_su4, FrameRule, PlanarRotation};
use spinsim::qspace::paulis;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-16);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| c(gaussian(rng), gaussian(rng)));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { cr(1.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    let mut v = CVec::from_fn(n, |_, _| c(gaussian(rng), gaussian(rng)));
    let norm = (v.adjoint() * &v)[(0, 0)].re.sqrt();
    v /= cr(norm);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pauli_decomposition_reconstructs_qubit_block(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_state(8, &mut rng);
        let rho = &psi * psi.adjoint();
        let dec = pauli_decompose(&rho).unwrap();
        // rho = 1/2 sum_k sigma_k (x) sigma~_k
        let p = paulis();
        let mut rec = CMat::zeros(8, 8);
        for k in 0..4 {
            rec += kron(&p[k], &dec.sigma_tilde[k]).scale(0.5);
        }
        prop_assert!(max_abs_diff(&rec, &rho) < 1e-10);
    }

    #[test]
    fn su4_decomposition_roundtrip(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary(4, &mut rng);
        let dec = decompose_su4(&u).unwrap();
        prop_assert!(max_abs_diff(&recompose_su4(&dec), &u) < 1e-9);
    }

    #[test]
    fn dephased_propagation_preserves_density_structure(
        seed in 0u64..1000,
        b1 in 5.0f64..40.0,
        t2_us in 1.0f64..20.0,
    ) {
        let model = build_dimer(&DimerParams::default()).unwrap();
        let counters = dimer_counters(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // random initial pure state, one compiled rotation, dephasing on
        let psi = random_state(12, &mut rng);
        let rho0 = &psi * psi.adjoint();
        let rot = PlanarRotation {
            x: 11,
            y: 10,
            theta: 0.3 + 2.0 * rng.random::<f64>(),
            phi: 2.0 * std::f64::consts::PI * rng.random::<f64>(),
        };
        let seg = compile_rotation(&model, &rot, b1, "y", 0.0, FrameRule::RoundEnergy).unwrap();
        let lind = spinsim::harness::dimer_lindblad(&model, t2_us * 1e3, 560e3);
        let gamma = lind.dephasing_matrix(12);
        let rho = propagate_sequence(&model, &counters, &[seg], rho0, Some(&gamma), 0.5).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-9);
        prop_assert!(is_hermitian(&rho, 1e-9));
        let (lam, _) = herm_eigen(&rho);
        prop_assert!(lam.iter().all(|&l| l > -1e-9));
    }

    #[test]
    fn grape_fidelity_is_global_phase_invariant(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let evals: Vec<f64> = (0..8).map(|k| k as f64 * 2.0 + rng.random::<f64>()).collect();
        let u = random_unitary(8, &mut rng);
        let herm = {
            let v = random_unitary(8, &mut rng);
            let d = CMat::from_fn(8, 8, |i, j| if i == j { cr(gaussian(&mut rng)) } else { cr(0.0) });
            &v * d * v.adjoint()
        };
        let mut p = GrapeProblem {
            evals,
            control: herm,
            n_segments: 16,
            t_total_ns: 20.0,
            amp_bound_gauss: 5.0,
            target: u.clone(),
            subspace: (0..8).collect(),
        };
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (f1, _) = grape::fidelity_and_gradient(&p, &x).unwrap();
        let phase = c(0.0, 2.0 * std::f64::consts::PI * rng.random::<f64>()).exp();
        p.target = u.map(|z| z * phase);
        let (f2, _) = grape::fidelity_and_gradient(&p, &x).unwrap();
        prop_assert!((f1 - f2).abs() < 1e-10);
    }
}
