//! Pauli algebra on n qubits.
//!
//! Qubit 1 is the most significant position everywhere: in matrix row
//! indices, in setting/outcome enumeration and in Pauli-basis indices.
//! A `+1` outcome is encoded as bit 0, so for an all-Z setting the outcome
//! index coincides with the computational-basis index.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::states::DensityMatrix;

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance used by [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Largest qubit count for which the dense design matrix is built.
pub const MAX_DESIGN_QUBITS: usize = 5;

/// A measured Pauli axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn index(self) -> usize {
        self as usize
    }

    fn as_char(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    /// Rows are the bras of the `+1` and `-1` eigenvectors.
    fn measurement_basis(self) -> [[Complex64; 2]; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Axis::X => [[ONE * h, ONE * h], [ONE * h, -ONE * h]],
            Axis::Y => [[ONE * h, -I * h], [ONE * h, I * h]],
            Axis::Z => [[ONE, ZERO], [ZERO, ONE]],
        }
    }
}

/// Eigenvalue label of a single-qubit measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    fn bit(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

/// Letter of a Pauli-basis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub const ALL: [PauliLetter; 4] = [PauliLetter::I, PauliLetter::X, PauliLetter::Y, PauliLetter::Z];

    fn axis(self) -> Option<Axis> {
        match self {
            PauliLetter::I => None,
            PauliLetter::X => Some(Axis::X),
            PauliLetter::Y => Some(Axis::Y),
            PauliLetter::Z => Some(Axis::Z),
        }
    }

    fn flips(self) -> bool {
        matches!(self, PauliLetter::X | PauliLetter::Y)
    }

    /// Nonzero entry of the 2x2 Pauli matrix in row `row_bit`.
    fn phase(self, row_bit: usize) -> Complex64 {
        match (self, row_bit) {
            (PauliLetter::I, _) | (PauliLetter::X, _) | (PauliLetter::Z, 0) => ONE,
            (PauliLetter::Z, _) => -ONE,
            (PauliLetter::Y, 0) => -I,
            (PauliLetter::Y, _) => I,
        }
    }
}

fn parse_err(message: String) -> Error {
    Error::Parse { line: 0, message }
}

/// One measurement setting: an axis per qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Setting(Vec<Axis>);

impl Setting {
    pub fn new(axes: Vec<Axis>) -> Self {
        Setting(axes)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.0
    }

    pub fn qubits(&self) -> usize {
        self.0.len()
    }

    pub fn count(n: usize) -> usize {
        3usize.pow(n as u32)
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, a| acc * 3 + a.index())
    }

    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut axes = vec![Axis::X; n];
        for slot in axes.iter_mut().rev() {
            *slot = Axis::ALL[index % 3];
            index /= 3;
        }
        Setting(axes)
    }

    /// All 3^n settings in canonical order.
    pub fn all(n: usize) -> impl Iterator<Item = Setting> {
        (0..Self::count(n)).map(move |i| Setting::from_index(n, i))
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|a| write!(f, "{}", a.as_char()))
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                'x' => Ok(Axis::X),
                'y' => Ok(Axis::Y),
                'z' => Ok(Axis::Z),
                other => Err(parse_err(format!("invalid axis `{other}` in setting `{s}`"))),
            })
            .collect::<Result<Vec<_>>>()
            .and_then(|axes| {
                if axes.is_empty() {
                    Err(parse_err("empty setting".into()))
                } else {
                    Ok(Setting(axes))
                }
            })
    }
}

/// One measurement outcome: a sign per qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome(Vec<Sign>);

impl Outcome {
    pub fn new(signs: Vec<Sign>) -> Self {
        Outcome(signs)
    }

    pub fn signs(&self) -> &[Sign] {
        &self.0
    }

    pub fn qubits(&self) -> usize {
        self.0.len()
    }

    pub fn count(n: usize) -> usize {
        1usize << n
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, s| (acc << 1) | s.bit())
    }

    pub fn from_index(n: usize, index: usize) -> Self {
        Outcome(
            (0..n)
                .map(|j| {
                    if (index >> (n - 1 - j)) & 1 == 0 {
                        Sign::Plus
                    } else {
                        Sign::Minus
                    }
                })
                .collect(),
        )
    }

    pub fn all(n: usize) -> impl Iterator<Item = Outcome> {
        (0..Self::count(n)).map(move |i| Outcome::from_index(n, i))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|s| {
            f.write_str(match s {
                Sign::Plus => "+",
                Sign::Minus => "-",
            })
        })
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let signs = s
            .chars()
            .map(|c| match c {
                '+' => Ok(Sign::Plus),
                '-' => Ok(Sign::Minus),
                other => Err(parse_err(format!("invalid sign `{other}` in outcome `{s}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if signs.is_empty() {
            return Err(parse_err("empty outcome".into()));
        }
        Ok(Outcome(signs))
    }
}

/// Index `b` of the Pauli product basis `sigma_b = sigma_{b_1} (x) ... (x) sigma_{b_n}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex(Vec<PauliLetter>);

impl BasisIndex {
    pub fn new(letters: Vec<PauliLetter>) -> Self {
        BasisIndex(letters)
    }

    pub fn identity(n: usize) -> Self {
        BasisIndex(vec![PauliLetter::I; n])
    }

    pub fn letters(&self) -> &[PauliLetter] {
        &self.0
    }

    pub fn qubits(&self) -> usize {
        self.0.len()
    }

    pub fn count(n: usize) -> usize {
        4usize.pow(n as u32)
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, l| acc * 4 + *l as usize)
    }

    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut letters = vec![PauliLetter::I; n];
        for slot in letters.iter_mut().rev() {
            *slot = PauliLetter::ALL[index % 4];
            index /= 4;
        }
        BasisIndex(letters)
    }

    pub fn all(n: usize) -> impl Iterator<Item = BasisIndex> {
        (0..Self::count(n)).map(move |i| BasisIndex::from_index(n, i))
    }

    /// Positions (0-based) holding the identity letter.
    pub fn identity_positions(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == PauliLetter::I)
            .map(|(j, _)| j)
            .collect()
    }

    /// `d(b)`: number of identity letters.
    pub fn identity_count(&self) -> usize {
        self.0.iter().filter(|l| **l == PauliLetter::I).count()
    }

    fn flip_mask(&self) -> usize {
        let n = self.0.len();
        self.0
            .iter()
            .enumerate()
            .filter(|(_, l)| l.flips())
            .fold(0, |m, (j, _)| m | (1 << (n - 1 - j)))
    }

    fn row_phase(&self, row: usize) -> Complex64 {
        let n = self.0.len();
        self.0
            .iter()
            .enumerate()
            .fold(ONE, |acc, (j, l)| acc * l.phase((row >> (n - 1 - j)) & 1))
    }

    /// Dense `sigma_b`.
    pub fn matrix(&self) -> CMatrix {
        let d = 1 << self.0.len();
        let mask = self.flip_mask();
        let mut m = CMatrix::zeros(d, d);
        for r in 0..d {
            m[(r, r ^ mask)] = self.row_phase(r);
        }
        m
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|l| {
            f.write_str(match l {
                PauliLetter::I => "i",
                PauliLetter::X => "x",
                PauliLetter::Y => "y",
                PauliLetter::Z => "z",
            })
        })
    }
}

impl FromStr for BasisIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c {
                'i' => Ok(PauliLetter::I),
                'x' => Ok(PauliLetter::X),
                'y' => Ok(PauliLetter::Y),
                'z' => Ok(PauliLetter::Z),
                other => Err(parse_err(format!("invalid letter `{other}` in basis index `{s}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(parse_err("empty basis index".into()));
        }
        Ok(BasisIndex(letters))
    }
}

/// A Hermitian operator on n qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    qubits: usize,
    data: CMatrix,
}

pub(crate) fn qubits_for_dim(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(d));
    }
    Ok(d.trailing_zeros() as usize)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..d {
        for c in r..d {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

impl HermitianMatrix {
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::Dimension {
                expected: data.nrows(),
                got: data.ncols(),
            });
        }
        let qubits = qubits_for_dim(data.nrows())?;
        let defect = hermitian_defect(&data);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(HermitianMatrix { qubits, data })
    }

    /// Builds `(M + M^H) / 2`; the caller guarantees near-Hermitian input.
    pub(crate) fn symmetrized(data: CMatrix) -> Self {
        let qubits = qubits_for_dim(data.nrows()).expect("power-of-two dimension");
        let data = (&data + data.adjoint()) * Complex64::new(0.5, 0.0);
        HermitianMatrix { qubits, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, v) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(*v, 0.0);
        }
        HermitianMatrix::new(m)
    }

    pub fn identity_over_dim(qubits: usize) -> Self {
        let d = 1 << qubits;
        HermitianMatrix {
            qubits,
            data: CMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0),
        }
    }

    /// `sum_b coeffs[b] sigma_b` with `b` in canonical base-4 order.
    pub fn from_pauli_coefficients(qubits: usize, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != BasisIndex::count(qubits) {
            return Err(Error::Dimension {
                expected: BasisIndex::count(qubits),
                got: coeffs.len(),
            });
        }
        let d = 1 << qubits;
        let mut m = CMatrix::zeros(d, d);
        for (bi, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let b = BasisIndex::from_index(qubits, bi);
            let mask = b.flip_mask();
            for r in 0..d {
                m[(r, r ^ mask)] += b.row_phase(r) * c;
            }
        }
        Ok(HermitianMatrix { qubits, data: m })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.diagonal().iter().map(|z| z.re).sum()
    }

    /// Squared Frobenius norm of `self - other`.
    pub fn frobenius_sq_distance(&self, other: &HermitianMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }

    /// Eigenvalues in non-increasing order.
    pub fn sorted_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.data.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// All Pauli coefficients `Tr(M sigma_b) / 2^n`, canonical order.
    pub fn pauli_coefficients(&self) -> Vec<f64> {
        (0..BasisIndex::count(self.qubits))
            .map(|bi| self.coefficient(&BasisIndex::from_index(self.qubits, bi)))
            .collect()
    }

    fn coefficient(&self, b: &BasisIndex) -> f64 {
        let d = self.dim();
        let mask = b.flip_mask();
        let tr: Complex64 = (0..d).map(|r| b.row_phase(r) * self.data[(r ^ mask, r)]).sum();
        tr.re / d as f64
    }

    /// Born-rule probabilities over all settings; linear in the operator.
    pub fn probabilities(&self) -> ProbabilityTable {
        let coeffs = self.pauli_coefficients();
        ProbabilityTable {
            qubits: self.qubits,
            values: coefficients_to_probabilities(self.qubits, &coeffs),
        }
    }
}

/// Outcome probabilities (or frequencies) for every (setting, outcome) pair.
///
/// Stored flat: entry `setting_index * 2^n + outcome_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    qubits: usize,
    values: Vec<f64>,
}

impl ProbabilityTable {
    pub fn new(qubits: usize, values: Vec<f64>) -> Result<Self> {
        let expected = table_len(qubits);
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: values.len(),
            });
        }
        Ok(ProbabilityTable { qubits, values })
    }

    /// Every setting has the uniform distribution.
    pub fn uniform(qubits: usize) -> Self {
        let p = 1.0 / Outcome::count(qubits) as f64;
        ProbabilityTable {
            qubits,
            values: vec![p; table_len(qubits)],
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, a: &Setting, s: &Outcome) -> f64 {
        self.values[a.index() * Outcome::count(self.qubits) + s.index()]
    }

    pub fn setting(&self, setting_index: usize) -> &[f64] {
        let k = Outcome::count(self.qubits);
        &self.values[setting_index * k..(setting_index + 1) * k]
    }

    /// `||self - other||_F^2` over all entries.
    pub fn squared_distance(&self, other: &ProbabilityTable) -> Result<f64> {
        if self.qubits != other.qubits {
            return Err(Error::Dimension {
                expected: self.qubits,
                got: other.qubits,
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

pub(crate) fn table_len(n: usize) -> usize {
    Setting::count(n) * Outcome::count(n)
}

/// `P^{axis}_{sign}` as a 2x2 matrix.
pub fn single_qubit_projector(axis: Axis, sign: Sign) -> HermitianMatrix {
    let row = axis.measurement_basis()[sign.bit()];
    let mut m = CMatrix::zeros(2, 2);
    for r in 0..2 {
        for c in 0..2 {
            m[(r, c)] = row[r].conj() * row[c];
        }
    }
    HermitianMatrix { qubits: 1, data: m }
}

/// Tensor product of single-qubit projectors, qubit 1 leftmost.
pub fn setting_projector(a: &Setting, s: &Outcome) -> Result<HermitianMatrix> {
    if a.qubits() != s.qubits() {
        return Err(Error::Dimension {
            expected: a.qubits(),
            got: s.qubits(),
        });
    }
    let mut m = CMatrix::from_element(1, 1, ONE);
    for (axis, sign) in a.axes().iter().zip(s.signs()) {
        m = m.kronecker(single_qubit_projector(*axis, *sign).matrix());
    }
    Ok(HermitianMatrix {
        qubits: a.qubits(),
        data: m,
    })
}

/// Unitary whose rows are the product eigenbras of setting `a`.
fn setting_unitary(a: &Setting) -> CMatrix {
    let mut u = CMatrix::from_element(1, 1, ONE);
    for axis in a.axes() {
        let b = axis.measurement_basis();
        let small = CMatrix::from_fn(2, 2, |r, c| b[r][c]);
        u = u.kronecker(&small);
    }
    u
}

/// Born distribution `Tr(rho P^a_s)` over the 2^n outcomes of setting `a`.
pub fn born_distribution(rho: &DensityMatrix, a: &Setting) -> Result<Vec<f64>> {
    born_distribution_of(rho.as_hermitian(), a)
}

pub(crate) fn born_distribution_of(h: &HermitianMatrix, a: &Setting) -> Result<Vec<f64>> {
    if a.qubits() != h.qubits() {
        return Err(Error::Dimension {
            expected: h.qubits(),
            got: a.qubits(),
        });
    }
    let u = setting_unitary(a);
    let rotated = &u * h.matrix() * u.adjoint();
    Ok(rotated.diagonal().iter().map(|z| z.re).collect())
}

/// Full probability table `p_rho` over all 3^n settings.
pub fn forward_probabilities(rho: &DensityMatrix) -> ProbabilityTable {
    rho.as_hermitian().probabilities()
}

/// `rho_b = Tr(rho sigma_b) / 2^n`.
pub fn pauli_coefficient(rho: &HermitianMatrix, b: &BasisIndex) -> Result<f64> {
    if b.qubits() != rho.qubits() {
        return Err(Error::Dimension {
            expected: rho.qubits(),
            got: b.qubits(),
        });
    }
    Ok(rho.coefficient(b))
}

/// Entry `P_{(s,a),b}` of the design matrix: the product of `s_j` over the
/// non-identity positions of `b`, or 0 if `a` disagrees with `b` there.
pub fn design_entry(a: &Setting, s: &Outcome, b: &BasisIndex) -> Result<i8> {
    let n = b.qubits();
    if a.qubits() != n || s.qubits() != n {
        return Err(Error::Dimension {
            expected: n,
            got: if a.qubits() != n { a.qubits() } else { s.qubits() },
        });
    }
    let mut acc = 1i8;
    for ((axis, sign), letter) in a.axes().iter().zip(s.signs()).zip(b.letters()) {
        match letter.axis() {
            None => {}
            Some(ax) if ax == *axis => acc *= sign.value(),
            Some(_) => return Ok(0),
        }
    }
    Ok(acc)
}

/// Dense 6^n x 4^n design matrix, rows in table order.
pub fn design_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n > MAX_DESIGN_QUBITS {
        return Err(Error::Resource(format!(
            "design matrix for n = {n} exceeds the limit of {MAX_DESIGN_QUBITS} qubits"
        )));
    }
    let k = Outcome::count(n);
    let settings: Vec<Setting> = Setting::all(n).collect();
    let outcomes: Vec<Outcome> = Outcome::all(n).collect();
    let bases: Vec<BasisIndex> = BasisIndex::all(n).collect();
    let mut p = DMatrix::zeros(table_len(n), bases.len());
    for (ai, a) in settings.iter().enumerate() {
        for (si, s) in outcomes.iter().enumerate() {
            for (bi, b) in bases.iter().enumerate() {
                p[(ai * k + si, bi)] = design_entry(a, s, b)? as f64;
            }
        }
    }
    Ok(p)
}

/// Extreme eigenvalues of `P^T P`, the Gram operator of the map from Pauli
/// coefficients to outcome probabilities.
pub fn gram_extreme_eigenvalues(n: usize) -> Result<(f64, f64)> {
    let p = design_matrix(n)?;
    let gram = p.transpose() * &p;
    let ev = gram.symmetric_eigenvalues();
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

/// Applies `factor` (row-major `out_dim x in_dim`) along every qubit mode of
/// a tensor whose per-qubit dimension is `in_dim`, qubit 1 outermost.
fn mode_transform(input: &[f64], n: usize, in_dim: usize, out_dim: usize, factor: &[f64]) -> Vec<f64> {
    debug_assert_eq!(factor.len(), in_dim * out_dim);
    let mut cur = input.to_vec();
    for mode in 0..n {
        let left = out_dim.pow(mode as u32);
        let right = in_dim.pow((n - mode - 1) as u32);
        let mut next = vec![0.0; left * out_dim * right];
        for l in 0..left {
            for o in 0..out_dim {
                let dst = &mut next[(l * out_dim + o) * right..(l * out_dim + o + 1) * right];
                for i in 0..in_dim {
                    let f = factor[o * in_dim + i];
                    if f == 0.0 {
                        continue;
                    }
                    let src = &cur[(l * in_dim + i) * right..(l * in_dim + i + 1) * right];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += f * s;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// Maps the per-qubit `(axis, sign)` layout (base 6) to table order.
fn local_to_table(n: usize) -> Vec<usize> {
    let k = Outcome::count(n);
    (0..6usize.pow(n as u32))
        .map(|mut idx| {
            let (mut a, mut s) = (0usize, 0usize);
            let mut a_pow = 1;
            for bit in 0..n {
                let r = idx % 6;
                idx /= 6;
                a += (r / 2) * a_pow;
                s |= (r % 2) << bit;
                a_pow *= 3;
            }
            a * k + s
        })
        .collect()
}

/// Per-qubit design block: rows `(axis, sign)`, columns `I, X, Y, Z`.
fn local_design() -> [f64; 24] {
    let mut m = [0.0; 24];
    for (ai, axis) in Axis::ALL.iter().enumerate() {
        for (si, sign) in [Sign::Plus, Sign::Minus].iter().enumerate() {
            let row = ai * 2 + si;
            m[row * 4] = 1.0;
            m[row * 4 + 1 + axis.index()] = sign.value() as f64;
        }
    }
    m
}

/// `p = P c` evaluated qubit-by-qubit.
pub(crate) fn coefficients_to_probabilities(n: usize, coeffs: &[f64]) -> Vec<f64> {
    let local = mode_transform(coeffs, n, 4, 6, &local_design());
    let map = local_to_table(n);
    let mut out = vec![0.0; local.len()];
    for (i, v) in local.into_iter().enumerate() {
        out[map[i]] = v;
    }
    out
}

/// `c_b = (P^T p)_b / (2^n 3^{d(b)})`, which inverts [`coefficients_to_probabilities`].
pub(crate) fn probabilities_to_coefficients(n: usize, table: &[f64]) -> Vec<f64> {
    let map = local_to_table(n);
    let local: Vec<f64> = map.iter().map(|&t| table[t]).collect();
    let design = local_design();
    let mut scaled = [0.0; 24];
    for b in 0..4 {
        let norm = if b == 0 { 6.0 } else { 2.0 };
        for r in 0..6 {
            scaled[b * 6 + r] = design[r * 4 + b] / norm;
        }
    }
    mode_transform(&local, n, 6, 4, &scaled)
}

/// Outcome probabilities of the pure state `v v^H` for every setting,
/// in table order. `v` need not be normalised; results scale with `|v|^2`.
pub fn rank_one_probabilities(n: usize, v: &[Complex64]) -> Vec<f64> {
    let d = 1 << n;
    assert_eq!(v.len(), d, "vector length must be 2^n");
    let mut out = vec![0.0; table_len(n)];
    let mut levels: Vec<Vec<Complex64>> = vec![v.to_vec(); n + 1];
    rotate_rec(n, 0, 0, &mut levels, &mut out);
    out
}

fn rotate_rec(n: usize, depth: usize, setting_prefix: usize, levels: &mut [Vec<Complex64>], out: &mut [f64]) {
    if depth == n {
        let d = 1 << n;
        let base = setting_prefix * d;
        for (o, z) in out[base..base + d].iter_mut().zip(&levels[n]) {
            *o = z.norm_sqr();
        }
        return;
    }
    let bit = n - 1 - depth;
    let stride = 1 << bit;
    for axis in Axis::ALL {
        let u = axis.measurement_basis();
        let (head, tail) = levels.split_at_mut(depth + 1);
        let src = &head[depth];
        let dst = &mut tail[0];
        for i0 in (0..src.len()).filter(|i| i & stride == 0) {
            let i1 = i0 | stride;
            let (x0, x1) = (src[i0], src[i1]);
            dst[i0] = u[0][0] * x0 + u[0][1] * x1;
            dst[i1] = u[1][0] * x0 + u[1][1] * x1;
        }
        rotate_rec(n, depth + 1, setting_prefix * 3 + axis.index(), levels, out);
    }
}
