//! Reference values checked against independent brute-force computations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qtomo_core::data::{empirical_frequencies, load_dataset, simulate_dataset, Dataset};
use qtomo_core::estimators::{default_lambda, inversion_estimator, loss_dens, loss_prob, thresholding_estimator};
use qtomo_core::gibbs::{run_chain, PriorParams, SamplerConfig};
use qtomo_core::pauli::{
    born_distribution, design_entry, forward_probabilities, gram_extreme_eigenvalues, pauli_coefficient,
    setting_projector, single_qubit_projector,
};
use qtomo_core::states::{approx_rank2, maximally_mixed, project_to_density, random_density, random_pure};
use qtomo_core::{
    mse, Axis, BasisIndex, HermitianMatrix, LossFamily, LossKind, Outcome, ProbabilityTable, Setting, Sign,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn pauli(letter: char) -> DMatrix<C> {
    let z = c(0., 0.);
    let o = c(1., 0.);
    let i = c(0., 1.);
    match letter {
        'i' => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        'x' => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        'y' => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        'z' => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => unreachable!(),
    }
}

/// (I + s sigma) / 2, the eigenprojector of a Pauli matrix.
fn eigenprojector(axis: char, sign: f64) -> DMatrix<C> {
    (pauli('i') + pauli(axis) * c(sign, 0.)) * c(0.5, 0.)
}

fn kron_all(factors: &[DMatrix<C>]) -> DMatrix<C> {
    factors.iter().skip(1).fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

/// Born table by explicit traces, enumerating settings and outcomes with
/// qubit 1 most significant, axes x < y < z and + before -.
fn brute_force_table(rho: &DMatrix<C>, n: usize) -> Vec<f64> {
    let axes = ['x', 'y', 'z'];
    let mut out = Vec::new();
    for a in 0..3usize.pow(n as u32) {
        let letters: Vec<char> = (0..n).map(|q| axes[(a / 3usize.pow((n - 1 - q) as u32)) % 3]).collect();
        for s in 0..(1usize << n) {
            let factors: Vec<DMatrix<C>> = (0..n)
                .map(|q| {
                    let bit = (s >> (n - 1 - q)) & 1;
                    eigenprojector(letters[q], if bit == 0 { 1. } else { -1. })
                })
                .collect();
            out.push((rho * kron_all(&factors)).trace().re);
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn setting(s: &str) -> Setting {
    s.parse().unwrap()
}

fn outcome(s: &str) -> Outcome {
    s.parse().unwrap()
}

#[test]
fn single_qubit_projectors_match_eigenvectors() {
    let h = 0.5;
    let z = single_qubit_projector(Axis::Z, Sign::Plus);
    assert!((z.matrix() - DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)])).norm() < 1e-14);
    let x = single_qubit_projector(Axis::X, Sign::Plus);
    assert!((x.matrix() - DMatrix::from_element(2, 2, c(h, 0.))).norm() < 1e-14);
    // eigenvector (1, -i)/sqrt2 of sigma_y with eigenvalue -1
    let y = single_qubit_projector(Axis::Y, Sign::Minus);
    let expected = DMatrix::from_row_slice(2, 2, &[c(h, 0.), c(0., h), c(0., -h), c(h, 0.)]);
    assert!((y.matrix() - expected).norm() < 1e-14);
}

#[test]
fn two_qubit_projector_is_kronecker_product() {
    let p = setting_projector(&setting("zz"), &outcome("+-")).unwrap();
    let mut expected = DMatrix::zeros(4, 4);
    expected[(1, 1)] = c(1., 0.);
    assert!((p.matrix() - expected).norm() < 1e-14);
    let p = setting_projector(&setting("xy"), &outcome("-+")).unwrap();
    let expected = eigenprojector('x', -1.).kronecker(&eigenprojector('y', 1.));
    assert!((p.matrix() - expected).norm() < 1e-14);
}

#[test]
fn forward_map_matches_brute_force_traces() {
    for n in 1..=3 {
        for seed in 0..20 {
            let rho = random_density(1 << n, &mut rng(100 * n as u64 + seed));
            let table = forward_probabilities(&rho);
            let oracle = brute_force_table(rho.matrix(), n);
            assert!(max_abs_diff(table.values(), &oracle) < 1e-12, "n = {n}, seed = {seed}");
        }
    }
}

#[test]
fn forward_map_examples() {
    let mixed = maximally_mixed(2).unwrap();
    assert!(forward_probabilities(&mixed).values().iter().all(|p| (p - 0.5).abs() < 1e-14));

    // |+><+| (x) |0><0|, setting (x, z)
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let rho = qtomo_core::states::from_pure_vector(&[c(h, 0.), c(0., 0.), c(h, 0.), c(0., 0.)]).unwrap();
    let p = born_distribution(&rho, &setting("xz")).unwrap();
    assert!((p[0] - 1.0).abs() < 1e-14);
    assert!(p[1..].iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn pauli_coefficients_match_explicit_traces() {
    let rho = random_density(8, &mut rng(5));
    for b in BasisIndex::all(3) {
        let letters: Vec<DMatrix<C>> = b.to_string().chars().map(pauli).collect();
        let expected = (rho.matrix() * kron_all(&letters)).trace() / c(8., 0.);
        assert!(expected.im.abs() < 1e-14);
        assert!((pauli_coefficient(&rho, &b).unwrap() - expected.re).abs() < 1e-14, "{b}");
    }
    let up = HermitianMatrix::from_real_diagonal(&[1., 0.]).unwrap();
    assert!((pauli_coefficient(&up, &"z".parse().unwrap()).unwrap() - 0.5).abs() < 1e-15);
    assert!((pauli_coefficient(&up, &"i".parse().unwrap()).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn design_entries() {
    assert_eq!(design_entry(&setting("x"), &outcome("+"), &"i".parse().unwrap()).unwrap(), 1);
    assert_eq!(design_entry(&setting("x"), &outcome("-"), &"x".parse().unwrap()).unwrap(), -1);
    assert_eq!(design_entry(&setting("z"), &outcome("-"), &"x".parse().unwrap()).unwrap(), 0);
    assert_eq!(design_entry(&setting("xz"), &outcome("-+"), &"xi".parse().unwrap()).unwrap(), -1);
}

/// Real design matrix built from explicit traces: column b of the map from
/// Pauli coefficients to probabilities.
fn brute_force_design(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(6usize.pow(n as u32), 4usize.pow(n as u32));
    for (j, b) in BasisIndex::all(n).enumerate() {
        let letters: Vec<DMatrix<C>> = b.to_string().chars().map(pauli).collect();
        let sigma = kron_all(&letters);
        let col = brute_force_table(&sigma, n);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

#[test]
fn gram_spectrum_matches_brute_force() {
    for (n, expected) in [(1, (2.0, 6.0)), (2, (4.0, 36.0)), (3, (8.0, 216.0))] {
        let p = brute_force_design(n);
        let ev = (p.transpose() * &p).symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        assert!((lo - expected.0).abs() < 1e-9 && (hi - expected.1).abs() < 1e-9, "n = {n}: {lo}, {hi}");
        let (a, b) = gram_extreme_eigenvalues(n).unwrap();
        assert!((a - lo).abs() < 1e-9 && (b - hi).abs() < 1e-9);
    }
}

#[test]
fn inversion_equals_least_squares_on_noisy_tables() {
    for n in 1..=2 {
        let d = 1usize << n;
        let p = brute_force_design(n);
        let pinv = p.clone().pseudo_inverse(1e-12).unwrap();
        for seed in 0..5 {
            let rho = random_density(d, &mut rng(seed));
            let data = simulate_dataset(&rho, 37, &mut rng(50 + seed)).unwrap();
            let freqs = empirical_frequencies(&data);
            let coeffs = &pinv * DVector::from_column_slice(freqs.values());
            let mut oracle = DMatrix::<C>::zeros(d, d);
            for (j, b) in BasisIndex::all(n).enumerate() {
                let letters: Vec<DMatrix<C>> = b.to_string().chars().map(pauli).collect();
                oracle += kron_all(&letters) * c(coeffs[j], 0.);
            }
            let est = inversion_estimator(&freqs).unwrap();
            assert!((est.matrix() - oracle).norm() < 1e-10, "n = {n}, seed = {seed}");
            assert!((est.trace() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn inversion_examples() {
    let est = inversion_estimator(&ProbabilityTable::uniform(2)).unwrap();
    assert!(est.frobenius_sq_distance(&HermitianMatrix::identity_over_dim(2)).unwrap() < 1e-28);

    let table = ProbabilityTable::new(1, vec![0.5, 0.5, 0.5, 0.5, 0.9, 0.1]).unwrap();
    let est = inversion_estimator(&table).unwrap();
    let expected = HermitianMatrix::from_real_diagonal(&[0.9, 0.1]).unwrap();
    assert!(est.frobenius_sq_distance(&expected).unwrap() < 1e-28);
}

#[test]
fn loss_examples() {
    let half = HermitianMatrix::identity_over_dim(1);
    let table = ProbabilityTable::new(1, vec![0.5, 0.5, 0.5, 0.5, 1.0, 0.0]).unwrap();
    assert!((loss_prob(&half, &table).unwrap() - 0.5).abs() < 1e-14);
    let up = HermitianMatrix::from_real_diagonal(&[1., 0.]).unwrap();
    assert!((loss_dens(&half, &up).unwrap() - 0.5).abs() < 1e-14);
    let rho = random_density(4, &mut rng(3));
    assert!(loss_prob(&rho, &forward_probabilities(&rho)).unwrap() < 1e-28);
}

#[test]
fn lambda_values() {
    assert_eq!(default_lambda(LossFamily::Prob, 2, 2000, false), 1000.0);
    assert_eq!(default_lambda(LossFamily::Dens, 2, 2000, false), 4500.0);
    assert_eq!(default_lambda(LossFamily::Dens, 2, 2000, true), 180.0);
}

#[test]
fn state_generator_examples() {
    let rho = approx_rank2(8, 0.98, &mut rng(4)).unwrap();
    let ev = rho.sorted_eigenvalues();
    for (i, v) in ev.iter().enumerate() {
        let expected = if i < 2 { 0.4925 } else { 0.0025 };
        assert!((v - expected).abs() < 1e-10, "{ev:?}");
    }
    let psi = random_pure(8, &mut rng(9)).unwrap();
    assert!((psi.sorted_eigenvalues()[0] - 1.0).abs() < 1e-10);
    let up = HermitianMatrix::from_real_diagonal(&[1., 0.]).unwrap();
    assert!((mse(&HermitianMatrix::identity_over_dim(1), &up).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn projection_examples() {
    // the 3x3 clip-and-renormalize example, padded with a zero eigenvalue
    let m = HermitianMatrix::from_real_diagonal(&[0.6, 0.5, -0.1, 0.0]).unwrap();
    let p = project_to_density(&m, 0.0).unwrap();
    let expected = HermitianMatrix::from_real_diagonal(&[6. / 11., 5. / 11., 0., 0.]).unwrap();
    assert!(p.frobenius_sq_distance(&expected).unwrap() < 1e-28);

    let m = HermitianMatrix::from_real_diagonal(&[0.9, 0.1, 0.0, 0.0]).unwrap();
    let p = project_to_density(&m, 0.2).unwrap();
    let expected = HermitianMatrix::from_real_diagonal(&[1., 0., 0., 0.]).unwrap();
    assert!(p.frobenius_sq_distance(&expected).unwrap() < 1e-28);
}

#[test]
fn thresholding_recovers_exact_pure_state() {
    let rho = random_pure(4, &mut rng(8)).unwrap();
    let est = thresholding_estimator(&forward_probabilities(&rho), 0.1).unwrap();
    assert!(est.frobenius_sq_distance(&rho).unwrap() < 1e-18);
}

#[test]
fn fixture_dataset_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/one_qubit.csv");
    let data = load_dataset(path).unwrap();
    assert_eq!(data.qubits(), 1);
    assert_eq!(data.shots_per_setting(), 10);
    assert_eq!(data.count(&setting("z"), &outcome("+")), 7);
    assert_eq!(data.count(&setting("z"), &outcome("-")), 3);
    assert_eq!(data.total_shots(), 30);
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(Dataset::from_csv_str(&text).unwrap(), data);
}

#[test]
fn prior_mean_is_maximally_mixed() {
    let freqs = forward_probabilities(&random_pure(4, &mut rng(1)).unwrap());
    let loss = LossKind::prob(&freqs).unwrap();
    let mut cfg = SamplerConfig::new(0.0);
    cfg.iterations = 20_000;
    cfg.seed = 11;
    let out = run_chain(&loss, &cfg, &PriorParams::symmetric(4, 0.5).unwrap()).unwrap();
    let dist = out.estimate.frobenius_sq_distance(&HermitianMatrix::identity_over_dim(2)).unwrap().sqrt();
    assert!(dist < 5e-2, "{dist}");
    assert!(out.accept_rate_v == 1.0);
}

#[test]
fn prob_estimator_pure_state_decade() {
    // ten replicates of n = 2, pure state, m = 2000, lambda = m/2, T = 1e4
    let mut total = 0.0;
    for rep in 0..10 {
        let truth = random_pure(4, &mut rng(700 + rep)).unwrap();
        let data = simulate_dataset(&truth, 2000, &mut rng(800 + rep)).unwrap();
        let freqs = empirical_frequencies(&data);
        let mut cfg = SamplerConfig::new(1000.0);
        cfg.seed = 900 + rep;
        let out = run_chain(&LossKind::prob(&freqs).unwrap(), &cfg, &PriorParams::symmetric(4, 0.5).unwrap()).unwrap();
        total += mse(&out.estimate, &truth).unwrap();
    }
    let mean = total / 10.0;
    assert!((1e-4..=1e-3).contains(&mean), "{mean}");
}
