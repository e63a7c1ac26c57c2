//! Density matrices, the benchmark state families and error metrics.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DensityViolation, Error, Result};
use crate::pauli::{hermitian_defect, qubits_for_dim, CMatrix, HermitianMatrix};

pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_EIGEN_TOL: f64 = 1e-9;
pub const DENSITY_TRACE_TOL: f64 = 1e-10;

/// Default mixing weight of the approximately rank-2 family.
pub const DEFAULT_MIXING_WEIGHT: f64 = 0.98;

/// A Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    pub fn new(h: HermitianMatrix) -> Result<Self> {
        check_density_axioms(h.matrix())?;
        Ok(DensityMatrix(h))
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn into_hermitian(self) -> HermitianMatrix {
        self.0
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.matrix().iter().map(|z| z.norm_sqr()).sum()
    }
}

impl Deref for DensityMatrix {
    type Target = HermitianMatrix;

    fn deref(&self) -> &HermitianMatrix {
        &self.0
    }
}

fn check_density_axioms(m: &CMatrix) -> Result<()> {
    let defect = hermitian_defect(m);
    if defect > DENSITY_HERMITIAN_TOL {
        return Err(Error::InvalidDensity {
            violation: DensityViolation::NotHermitian,
            detail: format!("max |M - M^H| = {defect:.3e}"),
        });
    }
    let trace: f64 = m.diagonal().iter().map(|z| z.re).sum();
    if (trace - 1.0).abs() > DENSITY_TRACE_TOL {
        return Err(Error::InvalidDensity {
            violation: DensityViolation::WrongTrace,
            detail: format!("trace = {trace}"),
        });
    }
    let hermitian = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let min = hermitian
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -DENSITY_EIGEN_TOL {
        return Err(Error::InvalidDensity {
            violation: DensityViolation::NegativeEigenvalue,
            detail: format!("smallest eigenvalue = {min:.3e}"),
        });
    }
    Ok(())
}

/// Checks the three density axioms and reports the first that fails.
pub fn validate_density(m: &HermitianMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(m.clone())
}

/// Like [`validate_density`] for an arbitrary square matrix, with the
/// looser Hermiticity tolerance of density matrices.
pub fn validate_density_matrix(m: &CMatrix) -> Result<DensityMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    qubits_for_dim(m.nrows())?;
    check_density_axioms(m)?;
    Ok(DensityMatrix(HermitianMatrix::symmetrized(m.clone())))
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Dimension { expected: 2, got: d });
    }
    qubits_for_dim(d).map(|_| ())
}

/// Uniformly distributed unit vector in `C^d` (normalised complex Gaussian).
pub fn isotropic_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<Complex64> {
    loop {
        let v = DVector::from_fn(d, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let norm = v.norm();
        if norm > 1e-300 {
            return v.unscale(norm);
        }
    }
}

/// `psi psi^H / |psi|^2`.
pub fn from_pure_vector(psi: &[Complex64]) -> Result<DensityMatrix> {
    let v = DVector::from_column_slice(psi);
    let norm2 = v.norm_squared();
    let m = (&v * v.adjoint()).unscale(norm2);
    Ok(DensityMatrix(HermitianMatrix::new(m)?))
}

fn outer(v: &DVector<Complex64>) -> CMatrix {
    v * v.adjoint()
}

pub fn random_pure<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<DensityMatrix> {
    check_dim(d)?;
    let psi = isotropic_unit_vector(d, rng);
    Ok(DensityMatrix(HermitianMatrix::symmetrized(outer(&psi))))
}

fn orthonormal_pair<R: Rng + ?Sized>(d: usize, rng: &mut R) -> (DVector<Complex64>, DVector<Complex64>) {
    let first = isotropic_unit_vector(d, rng);
    loop {
        let candidate = isotropic_unit_vector(d, rng);
        let overlap = first.dotc(&candidate);
        if overlap.norm() > 1.0 - 1e-12 {
            continue;
        }
        let second = &candidate - &first * overlap;
        let norm = second.norm();
        return (first, second.unscale(norm));
    }
}

/// `(psi_1 psi_1^H + psi_2 psi_2^H) / 2` with orthonormal `psi_1, psi_2`.
pub fn rank2_mixture<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<DensityMatrix> {
    approx_rank2(d, 1.0, rng)
}

/// `w rho_rank2 + (1 - w) I/d`.
pub fn approx_rank2<R: Rng + ?Sized>(d: usize, w: f64, rng: &mut R) -> Result<DensityMatrix> {
    check_dim(d)?;
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Config(format!("mixing weight {w} outside [0, 1]")));
    }
    let (a, b) = orthonormal_pair(d, rng);
    let rank2 = (outer(&a) + outer(&b)) * Complex64::new(0.5, 0.0);
    let m = rank2 * Complex64::new(w, 0.0) + CMatrix::identity(d, d) * Complex64::new((1.0 - w) / d as f64, 0.0);
    Ok(DensityMatrix(HermitianMatrix::symmetrized(m)))
}

pub fn maximally_mixed(d: usize) -> Result<DensityMatrix> {
    let n = qubits_for_dim(d)?;
    Ok(DensityMatrix(HermitianMatrix::identity_over_dim(n)))
}

/// A random full-rank density (normalised Wishart / Ginibre draw).
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let w = &g * g.adjoint();
    let tr = w.trace().re;
    DensityMatrix(HermitianMatrix::symmetrized(w.unscale(tr)))
}

/// The four benchmark state families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateScenario {
    Pure,
    Rank2,
    ApproxRank2 { weight: f64 },
    MaximallyMixed,
}

impl StateScenario {
    pub fn generate<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<DensityMatrix> {
        match *self {
            StateScenario::Pure => random_pure(d, rng),
            StateScenario::Rank2 => rank2_mixture(d, rng),
            StateScenario::ApproxRank2 { weight } => approx_rank2(d, weight, rng),
            StateScenario::MaximallyMixed => maximally_mixed(d),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StateScenario::Pure => "pure",
            StateScenario::Rank2 => "rank2",
            StateScenario::ApproxRank2 { .. } => "approx_rank2",
            StateScenario::MaximallyMixed => "maximally_mixed",
        }
    }
}

impl fmt::Display for StateScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StateScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "pure" => Ok(StateScenario::Pure),
            "rank2" | "rank_2" => Ok(StateScenario::Rank2),
            "approx_rank2" | "approx_rank_2" => Ok(StateScenario::ApproxRank2 {
                weight: DEFAULT_MIXING_WEIGHT,
            }),
            "maximally_mixed" | "mixed" => Ok(StateScenario::MaximallyMixed),
            other => Err(Error::Config(format!("unknown state scenario `{other}`"))),
        }
    }
}

/// Squared Frobenius error `||est - truth||_F^2`.
pub fn mse(est: &HermitianMatrix, truth: &HermitianMatrix) -> Result<f64> {
    est.frobenius_sq_distance(truth)
}

pub fn sorted_eigenvalues(m: &HermitianMatrix) -> Vec<f64> {
    m.sorted_eigenvalues()
}

/// Hard-thresholds the spectrum at `tau`, renormalises, and repeats until no
/// further eigenvalue drops, so the result is a fixed point for the same `tau`.
/// Falls back to `I/d` when nothing survives.
pub fn project_to_density(m: &HermitianMatrix, tau: f64) -> Result<DensityMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("threshold must be nonnegative, got {tau}")));
    }
    let d = m.dim();
    let eig = m.matrix().clone().symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    loop {
        let mut changed = false;
        for v in values.iter_mut() {
            if *v != 0.0 && *v <= tau {
                *v = 0.0;
                changed = true;
            }
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return maximally_mixed(d);
        }
        values.iter_mut().for_each(|v| *v /= total);
        if !changed {
            break;
        }
    }
    let vecs = &eig.eigenvectors;
    let mut out = CMatrix::zeros(d, d);
    for (k, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let col = vecs.column(k);
        out += (col * col.adjoint()) * Complex64::new(lam, 0.0);
    }
    // renormalise away the rounding in the reconstruction
    let tr = out.trace().re;
    let h = HermitianMatrix::symmetrized(out.unscale(tr));
    DensityMatrix::new(h)
}

/// JSON form `{"n", "re", "im"}` with optional estimator metadata.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub n: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

impl MatrixJson {
    pub fn from_matrix(m: &HermitianMatrix) -> Self {
        let d = m.dim();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                let z = m.matrix()[(r, c)];
                re.push(z.re);
                im.push(z.im);
            }
        }
        MatrixJson {
            n: m.qubits(),
            re,
            im,
            estimator: None,
            params: None,
        }
    }

    pub fn with_metadata(mut self, estimator: &str, params: serde_json::Value) -> Self {
        self.estimator = Some(estimator.to_string());
        self.params = Some(params);
        self
    }

    pub fn to_cmatrix(&self) -> Result<CMatrix> {
        let d = 1usize << self.n;
        if self.re.len() != d * d || self.im.len() != d * d {
            return Err(Error::Dimension {
                expected: d * d,
                got: self.re.len().min(self.im.len()),
            });
        }
        Ok(CMatrix::from_fn(d, d, |r, c| Complex64::new(self.re[r * d + c], self.im[r * d + c])))
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        validate_density_matrix(&self.to_cmatrix()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn violation(err: Error) -> DensityViolation {
        match err {
            Error::InvalidDensity { violation, .. } => violation,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn validation_reports_each_axiom() {
        assert!(validate_density(&HermitianMatrix::identity_over_dim(2)).is_ok());
        let neg = HermitianMatrix::from_real_diagonal(&[1.5, -0.5]).unwrap();
        assert_eq!(violation(validate_density(&neg).unwrap_err()), DensityViolation::NegativeEigenvalue);
        let trace = HermitianMatrix::from_real_diagonal(&[0.5, 0.6]).unwrap();
        assert_eq!(violation(validate_density(&trace).unwrap_err()), DensityViolation::WrongTrace);
        let mut skew = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        skew[(0, 1)] = Complex64::new(0.1, 0.0);
        assert_eq!(
            violation(validate_density_matrix(&skew).unwrap_err()),
            DensityViolation::NotHermitian
        );
        assert!(matches!(
            validate_density_matrix(&CMatrix::identity(3, 3)),
            Err(Error::NotPowerOfTwo(3))
        ));
    }

    #[test]
    fn pure_states() {
        let rho = random_pure(8, &mut rng(1)).unwrap();
        let ev = sorted_eigenvalues(&rho);
        assert!((ev[0] - 1.0).abs() < 1e-10);
        assert!(ev[1..].iter().all(|v| v.abs() < 1e-10));
        let sq = rho.matrix() * rho.matrix();
        assert!(sq.iter().zip(rho.matrix().iter()).all(|(a, b)| (a - b).norm() < 1e-10));
        assert_eq!(random_pure(8, &mut rng(9)).unwrap(), random_pure(8, &mut rng(9)).unwrap());
        assert!(random_pure(1, &mut rng(1)).is_err());
    }

    #[test]
    fn rank2_states() {
        let rho = rank2_mixture(8, &mut rng(2)).unwrap();
        let ev = sorted_eigenvalues(&rho);
        assert!((ev[0] - 0.5).abs() < 1e-10 && (ev[1] - 0.5).abs() < 1e-10);
        assert_eq!(ev.iter().filter(|v| **v > 1e-9).count(), 2);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn approx_rank2_spectrum() {
        let rho = approx_rank2(8, 0.98, &mut rng(3)).unwrap();
        let ev = sorted_eigenvalues(&rho);
        for (i, v) in ev.iter().enumerate() {
            let expected = if i < 2 { 0.4925 } else { 0.0025 };
            assert!((v - expected).abs() < 1e-10, "{ev:?}");
        }
        let full = approx_rank2(4, 1.0, &mut rng(4)).unwrap();
        assert_eq!(full, rank2_mixture(4, &mut rng(4)).unwrap());
        let flat = approx_rank2(4, 0.0, &mut rng(4)).unwrap();
        assert!(mse(&flat, &maximally_mixed(4).unwrap()).unwrap() < 1e-24);
        assert!(approx_rank2(4, 1.5, &mut rng(4)).is_err());
    }

    #[test]
    fn maximally_mixed_state() {
        let rho = maximally_mixed(4).unwrap();
        assert!(sorted_eigenvalues(&rho).iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!((rho.purity() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mse_examples() {
        let up = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        let mixed = HermitianMatrix::identity_over_dim(1);
        assert!((mse(&mixed, &up).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mse(&up, &up).unwrap(), 0.0);
        assert!(mse(&up, &HermitianMatrix::identity_over_dim(2)).is_err());
    }

    #[test]
    fn mse_parseval() {
        let mut r = rng(5);
        for n in 1..=3 {
            let a = random_density(1 << n, &mut r);
            let b = random_density(1 << n, &mut r);
            let via_coeffs: f64 = a
                .pauli_coefficients()
                .iter()
                .zip(b.pauli_coefficients())
                .map(|(x, y)| (x - y) * (x - y) * (1 << n) as f64)
                .sum();
            assert!((via_coeffs - mse(&a, &b).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_examples() {
        let m = HermitianMatrix::from_real_diagonal(&[0.6, 0.5, -0.1, 0.0]).unwrap();
        let p = project_to_density(&m, 0.0).unwrap();
        let expected = HermitianMatrix::from_real_diagonal(&[6.0 / 11.0, 5.0 / 11.0, 0.0, 0.0]).unwrap();
        assert!(mse(&p, &expected).unwrap() < 1e-24);

        let m = HermitianMatrix::from_real_diagonal(&[0.9, 0.1, 0.0, 0.0]).unwrap();
        let p = project_to_density(&m, 0.2).unwrap();
        let expected = HermitianMatrix::from_real_diagonal(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(mse(&p, &expected).unwrap() < 1e-24);

        let rho = random_density(4, &mut rng(6));
        let p = project_to_density(&rho, 0.0).unwrap();
        assert!(mse(&p, &rho).unwrap() < 1e-20);

        let all_neg = HermitianMatrix::from_real_diagonal(&[-0.1, -0.2]).unwrap();
        assert_eq!(project_to_density(&all_neg, 0.0).unwrap(), maximally_mixed(2).unwrap());
        assert!(project_to_density(&rho, -1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let rho = random_density(4, &mut rng(7));
        let text = serde_json::to_string(&MatrixJson::from_matrix(&rho)).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n, 2);
        assert!(back.to_density().unwrap().frobenius_sq_distance(&rho).unwrap() < 1e-30);
    }

    #[test]
    fn scenario_names_parse() {
        for s in ["pure", "rank2", "approx-rank2", "maximally_mixed"] {
            let parsed: StateScenario = s.parse().unwrap();
            assert_eq!(parsed.name().replace('_', "-"), s.replace('_', "-"));
        }
        assert!("rank3".parse::<StateScenario>().is_err());
    }
}
