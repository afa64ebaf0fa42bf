//! Independent re-derivations checked against the library.

use std::f64::consts::TAU;

use approx::assert_relative_eq;
use donor_backaction::analytics::mixing_parameters;
use donor_backaction::expm::matrix_exponential;
use donor_backaction::lindblad::{propagate, unvectorize, vectorize};
use donor_backaction::pulse::{build_lindblads, classify_eigenstates, embed_eigenvector, Channel};
use donor_backaction::spin::{
    build_combined_hamiltonian, build_donor_hamiltonian, build_spin_operators, BasisLayout, ElectronSpace,
    OperatorMatrix,
};
use donor_backaction::state::{expectation, initial_state, nuclear_projector};
use donor_backaction::{
    eigendecompose, flip_probability, NuclearConfig, PreparedSystem, PulseSchedule, SpinSystemSpec, StateLabel,
};
use ndarray::{linalg::kron, Array2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn dag(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn b14(a: Vec<f64>) -> SpinSystemSpec {
    SpinSystemSpec::new(a, 1.4).unwrap()
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Array2<C64> {
    let a = Array2::from_shape_fn((n, n), |_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&a + &dag(&a)).mapv(|z| z * 0.5)
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> Array2<C64> {
    let a = Array2::from_shape_fn((n, n), |_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let rho = a.dot(&dag(&a));
    let tr: C64 = (0..n).map(|i| rho[[i, i]]).sum();
    rho.mapv(|z| z / tr)
}

#[test]
fn two_donor_hamiltonian_matches_kronecker_sum() {
    let spec = b14(vec![100.0, 50.0]);
    let (we, wn) = (spec.omega_e(), spec.omega_n());
    let a = [100.0 * TAU, 50.0 * TAU];

    let zero = c(0.0, 0.0);
    let sx = Array2::from_shape_vec((2, 2), vec![zero, c(0.5, 0.0), c(0.5, 0.0), zero]).unwrap();
    let sy = Array2::from_shape_vec((2, 2), vec![zero, c(0.0, -0.5), c(0.0, 0.5), zero]).unwrap();
    let sz = Array2::from_shape_vec((2, 2), vec![c(0.5, 0.0), zero, zero, c(-0.5, 0.0)]).unwrap();
    let id: Array2<C64> = Array2::eye(2);
    let emb = |op: &Array2<C64>, slot: usize| {
        let f = |k: usize| if k == slot { op.clone() } else { id.clone() };
        kron(&kron(&f(0), &f(1)), &f(2))
    };

    let mut h = emb(&sz, 2).mapv(|z| z * we);
    for j in 0..2 {
        h = h + emb(&sz, j).mapv(|z| z * wn);
        for s in [&sx, &sy, &sz] {
            h = h + emb(s, j).dot(&emb(s, 2)).mapv(|z| z * a[j]);
        }
    }
    let built = build_donor_hamiltonian(&spec).unwrap();
    assert!(max_abs(&(built.matrix() - &h)) < 1e-9 * max_abs(&h));

    let mine = eigendecompose(&built).unwrap();
    let theirs = eigendecompose(&OperatorMatrix::new(h, built.layout()).unwrap()).unwrap();
    for (x, y) in mine.eigenvalues().iter().zip(theirs.eigenvalues()) {
        assert!((x - y).abs() < 1e-9 * we);
    }
}

#[test]
fn single_donor_matrix_entries() {
    let spec = b14(vec![117.0]);
    let h = build_donor_hamiltonian(&spec).unwrap();
    let (we, wn, a) = (spec.omega_e(), spec.omega_n(), 117.0 * TAU);
    let diag = [we / 2.0 + wn / 2.0 + a / 4.0, -we / 2.0 + wn / 2.0 - a / 4.0, we / 2.0 - wn / 2.0 - a / 4.0, -we / 2.0 - wn / 2.0 + a / 4.0];
    for (i, d) in diag.iter().enumerate() {
        assert_relative_eq!(h.matrix()[[i, i]].re, *d, max_relative = 1e-13);
    }
    assert_relative_eq!(h.matrix()[[1, 2]].re, a / 2.0, max_relative = 1e-13);
    assert_eq!(h.matrix()[[0, 3]], c(0.0, 0.0));

    let full = build_combined_hamiltonian(&spec).unwrap();
    assert_relative_eq!(full.matrix()[[2, 2]].re, wn / 2.0, max_relative = 1e-13);
    assert_relative_eq!(full.matrix()[[5, 5]].re, -wn / 2.0, max_relative = 1e-13);
}

#[test]
fn donor_hamiltonian_conserves_total_z() {
    for a in [vec![117.0], vec![100.0, 50.0], vec![92.0, 50.0, 20.0]] {
        let spec = b14(a);
        let h = build_donor_hamiltonian(&spec).unwrap();
        let ops = build_spin_operators(h.layout());
        let mut total = ops.electron.as_ref().unwrap().z.clone();
        for n in &ops.nuclear {
            total = &total + &n.z;
        }
        let comm = h.commutator(&total).unwrap();
        assert!(max_abs(comm.matrix()) < 1e-10);
    }
}

#[test]
fn combined_hamiltonian_restricts_to_donor_block() {
    let spec = b14(vec![100.0, 50.0]);
    let donor = build_donor_hamiltonian(&spec).unwrap();
    let full = build_combined_hamiltonian(&spec).unwrap();
    let (bound, combined) = (donor.layout(), full.layout());
    for i in 0..bound.dim() {
        let (ni, si) = bound.split(i);
        for j in 0..bound.dim() {
            let (nj, sj) = bound.split(j);
            assert_eq!(donor.matrix()[[i, j]], full.matrix()[[combined.index(ni, si), combined.index(nj, sj)]]);
        }
        for n in NuclearConfig::all(2) {
            assert_eq!(full.matrix()[[combined.index(ni, si), combined.index(n, 2)]], c(0.0, 0.0));
        }
    }
}

#[test]
fn matrix_exponential_matches_spectral_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layout = BasisLayout::new(3, ElectronSpace::Absent);
    for _ in 0..5 {
        let h = random_hermitian(&mut rng, 8);
        let eig = eigendecompose(&OperatorMatrix::new(h.clone(), layout).unwrap()).unwrap();
        let v = eig.eigenvectors();
        let phases = Array2::from_diag(&ndarray::Array1::from_iter(eig.eigenvalues().iter().map(|l| c(0.0, -l).exp())));
        let spectral = v.dot(&phases).dot(&dag(v));
        let direct = matrix_exponential(&h.mapv(|z| z * c(0.0, -1.0))).unwrap();
        assert!(max_abs(&(&direct - &spectral)) < 1e-10);
    }
}

#[test]
fn liouvillian_matches_direct_master_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for pulse in [PulseSchedule::standard_readout(), PulseSchedule::standard_resonant()] {
        let sys = PreparedSystem::new(&b14(vec![117.0]), &pulse).unwrap();
        let lv = sys.liouvillian().unwrap();
        assert_eq!(lv.matrix().nrows(), 36);
        let h = sys.hamiltonian().matrix();
        let rho = random_density(&mut rng, 6);

        let mut direct = (h.dot(&rho) - rho.dot(h)).mapv(|z| z * c(0.0, -1.0));
        for j in sys.jumps().iter() {
            let l = j.operator.matrix();
            let ldl = dag(l).dot(l);
            direct = direct + l.dot(&rho).dot(&dag(l)) - (ldl.dot(&rho) + rho.dot(&ldl)).mapv(|z| z * 0.5);
        }
        let applied = lv.apply(&rho).unwrap();
        assert!(max_abs(&(&applied - &direct)) <= 1e-12 * max_abs(&direct));

        let mixed = Array2::<C64>::eye(6).mapv(|z| z / 6.0);
        let out = lv.apply(&mixed).unwrap();
        let tr: C64 = (0..6).map(|i| out[[i, i]]).sum();
        assert!(tr.norm() < 1e-12);
    }
}

#[test]
fn closed_diagonal_liouvillian_is_diagonal() {
    let spec = b14(vec![0.0]);
    let pulse = PulseSchedule::readout(f64::INFINITY, f64::INFINITY, 10.0).unwrap();
    let sys = PreparedSystem::new(&spec, &pulse).unwrap();
    assert!(sys.jumps().is_empty());
    let lv = sys.liouvillian().unwrap();
    let m = lv.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i == j {
                assert_eq!(m[[i, j]].re, 0.0);
            } else {
                assert_eq!(m[[i, j]], c(0.0, 0.0));
            }
        }
    }
}

/// Dense `exp(L dt)` stepping in the product basis, no splitting. Its trace
/// drifts by ~1e-9 on these generators, so populations are renormalized.
fn dense_populations(sys: &PreparedSystem, label: &str, dt: f64, steps: usize) -> Vec<f64> {
    let lv = sys.liouvillian().unwrap();
    let p = lv.propagator(dt).unwrap();
    let rho = sys.initial_state(&label.parse().unwrap()).unwrap();
    let d = rho.dim();
    let mut v = vectorize(rho.matrix());
    for _ in 0..steps {
        v = p.dot(&v);
    }
    let m = unvectorize(&v, d);
    let layout = rho.layout();
    let pops: Vec<f64> = NuclearConfig::all(layout.num_donors())
        .map(|n| (0..3).map(|s| m[[layout.index(n, s), layout.index(n, s)]].re).sum())
        .collect();
    let total: f64 = pops.iter().sum();
    pops.iter().map(|p| p / total).collect()
}

#[test]
fn split_propagator_matches_dense_exponential() {
    let cases: [(Vec<f64>, &str); 4] = [
        (vec![117.0], "e4"),
        (vec![67.0, 50.0], "~UDu"),
        (vec![92.83, 50.0, 20.0], "~UUUu"),
        (vec![60.0, 60.0], "~UDu"),
    ];
    for (a, label) in cases {
        let pulse = PulseSchedule::standard_resonant().with_duration(200.0).unwrap().with_sample_points(200).unwrap();
        let sys = PreparedSystem::new(&b14(a.clone()), &pulse).unwrap();
        let sim = sys.simulate(&label.parse().unwrap()).unwrap();
        let dense = dense_populations(&sys, label, 1.0, 200);
        for (x, y) in sim.series.last().nuclear.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-10 * y.max(1e-3), "{a:?}: {x} vs {y}");
        }
    }
}

#[test]
fn split_propagator_converges_across_a_stark_sweep() {
    let pulse = PulseSchedule::standard_readout().with_duration(200.0).unwrap().with_sample_points(200).unwrap();
    for d in donor_backaction::analytics::logspace(10.0, 40.0, 4) {
        let a = vec![0.5 * (167.0 + d), 0.5 * (167.0 - d)];
        let sys = PreparedSystem::new(&b14(a.clone()), &pulse).unwrap();
        let sim = sys.simulate(&"~UDu".parse().unwrap()).unwrap();
        let dense = dense_populations(&sys, "~UDu", 1.0, 200);
        for (x, y) in sim.series.last().nuclear.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-10 * y.max(1e-3), "{a:?}: {x} vs {y}");
        }
    }
}

#[test]
fn semigroup_property() {
    let sys = PreparedSystem::new(&b14(vec![117.0]), &PulseSchedule::standard_readout()).unwrap();
    let lv = sys.liouvillian().unwrap();
    let once = lv.propagator(2.0).unwrap();
    let half = lv.propagator(1.0).unwrap();
    assert!(max_abs(&(half.dot(&half) - &once)) < 1e-9);

    let rho = sys.initial_state(&"e4".parse().unwrap()).unwrap();
    let coarse = PulseSchedule::standard_readout().with_duration(40.0).unwrap().with_sample_points(2).unwrap();
    let fine = coarse.clone().with_sample_points(4).unwrap();
    let a = propagate(&rho, &lv, &coarse).unwrap().final_state;
    let b = propagate(&rho, &lv, &fine).unwrap().final_state;
    assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-9);
}

#[test]
fn closed_system_conserves_purity_and_time_averages_to_flip() {
    let spec = b14(vec![117.0]);
    let mix = mixing_parameters(117.0, &spec);
    let period = TAU / (mix.omega_1 - mix.omega_3);
    let n = 96;
    let pulse = PulseSchedule::readout(f64::INFINITY, f64::INFINITY, 3.0 * period)
        .unwrap()
        .with_sample_points(n)
        .unwrap();
    let sys = PreparedSystem::new(&spec, &pulse).unwrap();
    let sim = sys.simulate(&"Ud".parse().unwrap()).unwrap();
    let down = NuclearConfig::from_downs(&[true]).index();
    let trace = sim.series.nuclear_trace(down);
    let mean = trace[..n].iter().sum::<f64>() / n as f64;
    assert_relative_eq!(mean, flip_probability(117.0, &spec), max_relative = 1e-6);
    assert!(trace.iter().cloned().fold(0.0, f64::max) > 1.9 * mean);
    assert!((sim.series.final_state.purity() - 1.0).abs() < 1e-9);
}

#[test]
fn readout_depletes_nuclear_up_monotonically() {
    let sim = donor_backaction::simulate(&b14(vec![117.0]), &PulseSchedule::standard_readout(), &"e4".parse().unwrap()).unwrap();
    let up = sim.series.nuclear_trace(0);
    assert_eq!(up[0], 1.0);
    assert!(up.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!((1.0 - up[up.len() - 1] - 4.46e-6).abs() < 0.05e-6);
    assert!(sim.series.last().electron[1] > 0.99);
}

#[test]
fn two_donor_classification_follows_electron_spin() {
    let spec = b14(vec![100.0, 50.0]);
    let eig = eigendecompose(&build_donor_hamiltonian(&spec).unwrap()).unwrap();
    let class = classify_eigenstates(&eig).unwrap();
    assert_eq!((class.up_like.len(), class.down_like.len()), (4, 4));
    let sz = build_spin_operators(eig.layout()).electron.unwrap().z;
    for k in 0..eig.len() {
        let v = eig.vector(k);
        let s: C64 = v.iter().zip(sz.matrix().dot(&v)).map(|(a, b)| a.conj() * b).sum();
        assert_eq!(s.re > 0.0, class.up_like.contains(&k), "state {k}");
    }
}

#[test]
fn mixed_eigenstate_admixture() {
    let spec = b14(vec![117.0]);
    let eig = eigendecompose(&build_donor_hamiltonian(&spec).unwrap()).unwrap();
    let rho = initial_state(&StateLabel::Eigenstate(3), &eig).unwrap();
    let theta = mixing_parameters(117.0, &spec).theta;
    let p = expectation(&rho, &nuclear_projector(rho.layout(), NuclearConfig::all_up(1))).unwrap();
    assert_relative_eq!(p, (theta / 2.0).sin().powi(2), max_relative = 1e-8);
    assert!((p - 2.23e-6).abs() < 0.01e-6);
}

#[test]
fn single_donor_readout_operators() {
    let spec = b14(vec![117.0]);
    let eig = eigendecompose(&build_donor_hamiltonian(&spec).unwrap()).unwrap();
    let set = build_lindblads(&eig, &PulseSchedule::standard_readout()).unwrap();
    assert_eq!(set.len(), 4);
    let rate = 1.0 / 80.0;
    for k in [2, 3] {
        let branches: f64 = set
            .iter()
            .filter(|j| matches!(j.channel, Channel::TunnelOut { source, .. } if source == k))
            .map(|j| j.amplitude * j.amplitude)
            .sum();
        assert_relative_eq!(branches, rate, max_relative = 1e-12);
    }
    let e3 = embed_eigenvector(&eig, 2);
    let theta = mixing_parameters(117.0, &spec).theta;
    let to_up = set
        .iter()
        .find(|j| matches!(j.channel, Channel::TunnelOut { source: 2, target, .. } if target == NuclearConfig::all_up(1)))
        .unwrap();
    assert_relative_eq!(to_up.amplitude, (theta / 2.0).sin().abs() * rate.sqrt(), max_relative = 1e-8);
    assert_eq!(e3.len(), 6);

    let resonant = build_lindblads(&eig, &PulseSchedule::standard_resonant()).unwrap();
    assert_eq!(resonant.len(), 7);
    let unmixed = b14(vec![0.0]);
    let eig0 = eigendecompose(&build_donor_hamiltonian(&unmixed).unwrap()).unwrap();
    assert_eq!(build_lindblads(&eig0, &PulseSchedule::standard_readout()).unwrap().len(), 3);
}
