//! Linear inversion, the thresholding baseline and the two pseudo-posterior losses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pauli::{coefficients_to_probabilities, probabilities_to_coefficients, HermitianMatrix, ProbabilityTable, Setting};
use crate::states::{project_to_density, DensityMatrix};

/// Per-setting frequency sums must equal one within this tolerance.
const COMPLETE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossFamily {
    /// `||p_nu - p_hat||^2` over all (setting, outcome) pairs.
    Prob,
    /// `||nu - rho_hat||_F^2` against the inversion estimate.
    Dens,
}

impl LossFamily {
    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Prob => "prob",
            LossFamily::Dens => "dens",
        }
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" => Ok(LossFamily::Prob),
            "dens" => Ok(LossFamily::Dens),
            other => Err(Error::Config(format!("unknown loss `{other}` (expected prob or dens)"))),
        }
    }
}

/// A loss functional bound to its data.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    Prob { freqs: ProbabilityTable },
    Dens { rho_hat: HermitianMatrix },
}

impl LossKind {
    pub fn prob(freqs: &ProbabilityTable) -> Result<Self> {
        check_complete(freqs)?;
        Ok(LossKind::Prob { freqs: freqs.clone() })
    }

    /// Caches the inversion estimate of `freqs`.
    pub fn dens(freqs: &ProbabilityTable) -> Result<Self> {
        Ok(LossKind::Dens {
            rho_hat: inversion_estimator(freqs)?,
        })
    }

    /// Inversion estimate of the data behind the loss.
    pub fn pilot_estimate(&self) -> Result<HermitianMatrix> {
        match self {
            LossKind::Prob { freqs } => inversion_estimator(freqs),
            LossKind::Dens { rho_hat } => Ok(rho_hat.clone()),
        }
    }

    pub fn from_family(family: LossFamily, freqs: &ProbabilityTable) -> Result<Self> {
        match family {
            LossFamily::Prob => Self::prob(freqs),
            LossFamily::Dens => Self::dens(freqs),
        }
    }

    pub fn family(&self) -> LossFamily {
        match self {
            LossKind::Prob { .. } => LossFamily::Prob,
            LossKind::Dens { .. } => LossFamily::Dens,
        }
    }

    pub fn qubits(&self) -> usize {
        match self {
            LossKind::Prob { freqs } => freqs.qubits(),
            LossKind::Dens { rho_hat } => rho_hat.qubits(),
        }
    }

    pub fn evaluate(&self, nu: &HermitianMatrix) -> Result<f64> {
        match self {
            LossKind::Prob { freqs } => loss_prob(nu, freqs),
            LossKind::Dens { rho_hat } => loss_dens(nu, rho_hat),
        }
    }
}

fn check_complete(freqs: &ProbabilityTable) -> Result<()> {
    let n = freqs.qubits();
    for ai in 0..Setting::count(n) {
        let total: f64 = freqs.setting(ai).iter().sum();
        if (total - 1.0).abs() > COMPLETE_TOL {
            return Err(Error::MissingSetting(Setting::from_index(n, ai).to_string())
                .context(format!("frequencies sum to {total}")));
        }
    }
    Ok(())
}

/// Linear-inversion estimate `sum_b rho_hat_b sigma_b`; Hermitian with unit
/// trace but not necessarily positive semidefinite.
pub fn inversion_estimator(freqs: &ProbabilityTable) -> Result<HermitianMatrix> {
    check_complete(freqs)?;
    let n = freqs.qubits();
    let coeffs = probabilities_to_coefficients(n, freqs.values());
    HermitianMatrix::from_pauli_coefficients(n, &coeffs)
}

/// `||p_nu - p_hat||^2`.
pub fn loss_prob(nu: &HermitianMatrix, freqs: &ProbabilityTable) -> Result<f64> {
    if nu.qubits() != freqs.qubits() {
        return Err(Error::Dimension {
            expected: freqs.qubits(),
            got: nu.qubits(),
        });
    }
    let p_nu = coefficients_to_probabilities(nu.qubits(), &nu.pauli_coefficients());
    Ok(p_nu
        .iter()
        .zip(freqs.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `||nu - rho_hat||_F^2`.
pub fn loss_dens(nu: &HermitianMatrix, rho_hat: &HermitianMatrix) -> Result<f64> {
    nu.frobenius_sq_distance(rho_hat)
}

/// Default eigenvalue threshold `2 sqrt(log(2d) d / N)`.
pub fn default_tau(n: usize, m: u64) -> f64 {
    let d = (1u64 << n) as f64;
    let big_n = m as f64 * Setting::count(n) as f64;
    2.0 * ((2.0 * d).ln() * d / big_n).sqrt()
}

/// Inversion followed by spectral hard-thresholding at `tau`.
pub fn thresholding_estimator(freqs: &ProbabilityTable, tau: f64) -> Result<DensityMatrix> {
    project_to_density(&inversion_estimator(freqs)?, tau)
}

/// How the inverse temperature is chosen from `(n, m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `m / 2`.
    HalfShots,
    /// `N / 4` with `N = m 3^n`.
    QuarterSampleSize,
    /// `N / (4 * 5^n)`.
    Theoretical,
    Fixed(f64),
}

impl LambdaRule {
    pub fn default_for(family: LossFamily) -> Self {
        match family {
            LossFamily::Prob => LambdaRule::HalfShots,
            LossFamily::Dens => LambdaRule::QuarterSampleSize,
        }
    }

    pub fn evaluate(self, n: usize, m: u64) -> f64 {
        let big_n = m as f64 * Setting::count(n) as f64;
        match self {
            LambdaRule::HalfShots => m as f64 / 2.0,
            LambdaRule::QuarterSampleSize => big_n / 4.0,
            LambdaRule::Theoretical => big_n / (4.0 * 5f64.powi(n as i32)),
            LambdaRule::Fixed(v) => v,
        }
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::HalfShots => f.write_str("m/2"),
            LambdaRule::QuarterSampleSize => f.write_str("N/4"),
            LambdaRule::Theoretical => f.write_str("N/(4*5^n)"),
            LambdaRule::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "m/2" | "m2" | "M2" => Ok(LambdaRule::HalfShots),
            "N/4" | "N4" | "n4" => Ok(LambdaRule::QuarterSampleSize),
            "N/(4*5^n)" | "N4-theory" | "theory" => Ok(LambdaRule::Theoretical),
            other => match other.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaRule::Fixed(v)),
                _ => Err(Error::Config(format!(
                    "invalid lambda rule `{other}` (expected m/2, N/4, N4-theory or a nonnegative number)"
                ))),
            },
        }
    }
}

/// `m/2` for prob, `N/4` for dens; `theoretical` selects `N/(4*5^n)` for dens.
pub fn default_lambda(family: LossFamily, n: usize, m: u64, theoretical: bool) -> f64 {
    match (family, theoretical) {
        (LossFamily::Dens, true) => LambdaRule::Theoretical.evaluate(n, m),
        _ => LambdaRule::default_for(family).evaluate(n, m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{design_matrix, forward_probabilities, BasisIndex, Outcome};
    use crate::states::{self, validate_density};
    use nalgebra::DVector;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(n: usize, rows: &[(&str, &str, f64)]) -> ProbabilityTable {
        let mut t = ProbabilityTable::uniform(n);
        let k = Outcome::count(n);
        for (a, s, v) in rows {
            let a: Setting = a.parse().unwrap();
            let s: Outcome = s.parse().unwrap();
            t.values_mut()[a.index() * k + s.index()] = *v;
        }
        t
    }

    #[test]
    fn inversion_recovers_exact_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=3 {
            for _ in 0..20 {
                let rho = states::random_density(1 << n, &mut rng);
                let est = inversion_estimator(&forward_probabilities(&rho)).unwrap();
                assert!(est.frobenius_sq_distance(&rho).unwrap().sqrt() < 1e-10);
            }
        }
    }

    #[test]
    fn inversion_matches_pseudo_inverse_solve() {
        // Oracle: least-squares solve of p = P c through the SVD pseudo-inverse.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=3 {
            let p = design_matrix(n).unwrap();
            let pinv = p.clone().pseudo_inverse(1e-12).unwrap();
            let k = Outcome::count(n);
            let mut values: Vec<f64> = (0..p.nrows()).map(|_| rng.random::<f64>()).collect();
            for chunk in values.chunks_mut(k) {
                let s: f64 = chunk.iter().sum();
                chunk.iter_mut().for_each(|v| *v /= s);
            }
            let freqs = ProbabilityTable::new(n, values.clone()).unwrap();
            let coeffs = &pinv * DVector::from_vec(values);
            let oracle = HermitianMatrix::from_pauli_coefficients(n, coeffs.as_slice()).unwrap();
            let est = inversion_estimator(&freqs).unwrap();
            assert!(est.frobenius_sq_distance(&oracle).unwrap().sqrt() < 1e-10);
            // normalisation of each coefficient: 1 / (2^n 3^{d(b)})
            for (bi, b) in BasisIndex::all(n).enumerate() {
                let col = p.column(bi);
                let direct: f64 = col.iter().zip(freqs.values()).map(|(x, y)| x * y).sum::<f64>()
                    / ((1 << n) as f64 * 3f64.powi(b.identity_count() as i32));
                assert!((direct - coeffs[bi]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inversion_examples() {
        let flat = inversion_estimator(&ProbabilityTable::uniform(2)).unwrap();
        assert!(flat.frobenius_sq_distance(&HermitianMatrix::identity_over_dim(2)).unwrap() < 1e-28);

        let t = table(1, &[("z", "+", 0.9), ("z", "-", 0.1)]);
        let est = inversion_estimator(&t).unwrap();
        let expected = HermitianMatrix::from_real_diagonal(&[0.9, 0.1]).unwrap();
        assert!(est.frobenius_sq_distance(&expected).unwrap() < 1e-28);
        assert!((est.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inversion_rejects_incomplete_table() {
        let mut t = ProbabilityTable::uniform(1);
        t.values_mut()[2] = 0.0;
        t.values_mut()[3] = 0.0;
        let err = inversion_estimator(&t).unwrap_err();
        assert!(err.to_string().contains("`y`"), "{err}");
    }

    #[test]
    fn inversion_can_be_unphysical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut violations = 0;
        for _ in 0..20 {
            let rho = states::random_pure(4, &mut rng).unwrap();
            let data = crate::data::simulate_dataset(&rho, 5, &mut rng).unwrap();
            let est = inversion_estimator(&crate::data::empirical_frequencies(&data)).unwrap();
            if validate_density(&est).is_err() {
                violations += 1;
            }
        }
        assert!(violations >= 1);
    }

    #[test]
    fn loss_prob_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nu = states::random_density(4, &mut rng);
        assert!(loss_prob(&nu, &forward_probabilities(&nu)).unwrap() < 1e-28);

        let mixed = HermitianMatrix::identity_over_dim(1);
        let t = table(1, &[("z", "+", 1.0), ("z", "-", 0.0)]);
        assert!((loss_prob(&mixed, &t).unwrap() - 0.5).abs() < 1e-15);
        assert!(loss_prob(&HermitianMatrix::identity_over_dim(2), &t).is_err());
    }

    #[test]
    fn loss_prob_matches_projector_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nu = states::random_density(4, &mut rng);
        let freqs = forward_probabilities(&states::random_density(4, &mut rng));
        let mut direct = 0.0;
        for a in Setting::all(2) {
            for s in Outcome::all(2) {
                let proj = crate::pauli::setting_projector(&a, &s).unwrap();
                let p: Complex64 = (nu.matrix() * proj.matrix()).trace();
                direct += (p.re - freqs.get(&a, &s)).powi(2);
            }
        }
        assert!((direct - loss_prob(&nu, &freqs).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn loss_dens_examples() {
        let up = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        let mixed = HermitianMatrix::identity_over_dim(1);
        assert!((loss_dens(&mixed, &up).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(loss_dens(&up, &up).unwrap(), 0.0);
    }

    #[test]
    fn thresholding_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = states::random_pure(8, &mut rng).unwrap();
        let est = thresholding_estimator(&forward_probabilities(&rho), 0.1).unwrap();
        assert!(est.frobenius_sq_distance(&rho).unwrap().sqrt() < 1e-9);
        let flat = thresholding_estimator(&ProbabilityTable::uniform(2), default_tau(2, 100)).unwrap();
        assert!(flat.frobenius_sq_distance(&HermitianMatrix::identity_over_dim(2)).unwrap() < 1e-24);
    }

    #[test]
    fn lambda_rules() {
        assert_eq!(default_lambda(LossFamily::Prob, 2, 2000, false), 1000.0);
        assert_eq!(default_lambda(LossFamily::Dens, 2, 2000, false), 4500.0);
        assert_eq!(default_lambda(LossFamily::Dens, 2, 2000, true), 180.0);
        assert_eq!("N4".parse::<LambdaRule>().unwrap(), LambdaRule::QuarterSampleSize);
        assert_eq!("m/2".parse::<LambdaRule>().unwrap(), LambdaRule::HalfShots);
        assert_eq!("12.5".parse::<LambdaRule>().unwrap(), LambdaRule::Fixed(12.5));
        assert!("-1".parse::<LambdaRule>().is_err());
        for rule in [LambdaRule::HalfShots, LambdaRule::QuarterSampleSize, LambdaRule::Theoretical] {
            assert_eq!(rule.to_string().parse::<LambdaRule>().unwrap(), rule);
        }
    }

    #[test]
    fn default_tau_value() {
        // d = 4, N = 18000
        let expected = 2.0 * (8f64.ln() * 4.0 / 18000.0).sqrt();
        assert!((default_tau(2, 2000) - expected).abs() < 1e-15);
    }
}
