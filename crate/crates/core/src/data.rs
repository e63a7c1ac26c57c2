//! Complete Pauli measurement data: simulation, frequencies and CSV I/O.
//!
//! CSV layout:
//!
//! ```text
//! # n=1 m=10
//! setting,outcome,count
//! x,+,5
//! x,-,5
//! ...
//! ```

use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::pauli::{born_distribution, table_len, Outcome, ProbabilityTable, Setting};
use crate::rng;
use crate::states::DensityMatrix;

pub const CSV_HEADER: &str = "setting,outcome,count";

/// Counts `n_{a,s}` for every setting `a` and outcome `s`, `m` shots per setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    qubits: usize,
    shots: u64,
    counts: Vec<u64>,
}

impl Dataset {
    /// Counts in table order (`setting_index * 2^n + outcome_index`).
    pub fn new(qubits: usize, shots: u64, counts: Vec<u64>) -> Result<Self> {
        if shots == 0 {
            return Err(Error::Config("shots per setting must be positive".into()));
        }
        if counts.len() != table_len(qubits) {
            return Err(Error::Dimension {
                expected: table_len(qubits),
                got: counts.len(),
            });
        }
        let k = Outcome::count(qubits);
        for (ai, chunk) in counts.chunks(k).enumerate() {
            let total: u64 = chunk.iter().sum();
            if total != shots {
                return Err(Error::Config(format!(
                    "setting `{}` has {total} shots, expected {shots}",
                    Setting::from_index(qubits, ai)
                )));
            }
        }
        Ok(Dataset { qubits, shots, counts })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn shots_per_setting(&self) -> u64 {
        self.shots
    }

    /// Quantum sample size `N = m 3^n`.
    pub fn total_shots(&self) -> u64 {
        self.shots * Setting::count(self.qubits) as u64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, a: &Setting, s: &Outcome) -> u64 {
        self.counts[a.index() * Outcome::count(self.qubits) + s.index()]
    }

    /// Pools two datasets over the same qubits.
    pub fn merge(&self, other: &Dataset) -> Result<Dataset> {
        if self.qubits != other.qubits {
            return Err(Error::Dimension {
                expected: self.qubits,
                got: other.qubits,
            });
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Dataset::new(self.qubits, self.shots + other.shots, counts)
    }

    pub fn to_csv_string(&self) -> String {
        let n = self.qubits;
        let k = Outcome::count(n);
        let mut out = format!("# n={} m={}\n{CSV_HEADER}\n", n, self.shots);
        for (ai, a) in Setting::all(n).enumerate() {
            for (si, s) in Outcome::all(n).enumerate() {
                let _ = writeln!(out, "{a},{s},{}", self.counts[ai * k + si]);
            }
        }
        out
    }

    /// Parses the CSV format; outcomes absent from the file count as zero.
    pub fn from_csv_str(text: &str) -> Result<Dataset> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (meta_line, meta) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty dataset file".into(),
        })?;
        let (n, m) = parse_metadata(meta).map_err(|message| Error::Parse { line: meta_line, message })?;

        match lines.next() {
            Some((_, h)) if h == CSV_HEADER => {}
            Some((line, h)) => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected header `{CSV_HEADER}`, found `{h}`"),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: meta_line + 1,
                    message: "missing header".into(),
                })
            }
        }

        let k = Outcome::count(n);
        let mut counts = vec![0u64; table_len(n)];
        let mut seen = vec![false; counts.len()];
        let mut first_line = vec![0usize; Setting::count(n)];
        let mut last_line = meta_line + 1;
        for (line, row) in lines {
            last_line = line;
            let err = |message: String| Error::Parse { line, message };
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let a: Setting = fields[0].parse().map_err(|e: Error| err(strip_line(e)))?;
            let s: Outcome = fields[1].parse().map_err(|e: Error| err(strip_line(e)))?;
            if a.qubits() != n || s.qubits() != n {
                return Err(err(format!("row `{row}` does not have {n} qubits")));
            }
            let c: u64 = fields[2]
                .parse()
                .map_err(|_| err(format!("invalid count `{}`", fields[2])))?;
            let idx = a.index() * k + s.index();
            if seen[idx] {
                return Err(err(format!("duplicate row for ({a}, {s})")));
            }
            seen[idx] = true;
            counts[idx] = c;
            if first_line[a.index()] == 0 {
                first_line[a.index()] = line;
            }
        }

        for (ai, chunk) in counts.chunks(k).enumerate() {
            let a = Setting::from_index(n, ai);
            if first_line[ai] == 0 {
                return Err(Error::MissingSetting(a.to_string()).context(format!("line {}", last_line + 1)));
            }
            let total: u64 = chunk.iter().sum();
            if total != m {
                return Err(Error::Parse {
                    line: first_line[ai],
                    message: format!("setting `{a}` has {total} shots, expected m={m}"),
                });
            }
        }
        Dataset::new(n, m, counts)
    }
}

fn strip_line(e: Error) -> String {
    match e {
        Error::Parse { message, .. } => message,
        other => other.to_string(),
    }
}

fn parse_metadata(line: &str) -> std::result::Result<(usize, u64), String> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| format!("expected metadata line `# n=<int> m=<int>`, found `{line}`"))?;
    let (mut n, mut m) = (None, None);
    for token in body.split_whitespace() {
        match token.split_once('=') {
            Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|_| format!("invalid n `{v}`"))?),
            Some(("m", v)) => m = Some(v.parse::<u64>().map_err(|_| format!("invalid m `{v}`"))?),
            _ => return Err(format!("unexpected metadata token `{token}`")),
        }
    }
    match (n, m) {
        (Some(n), Some(m)) if n >= 1 && m >= 1 => Ok((n, m)),
        (Some(_), Some(_)) => Err("n and m must be positive".into()),
        _ => Err("metadata must define both n and m".into()),
    }
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, data.to_csv_string()).map_err(|e| Error::from(e).context(path.display().to_string()))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    Dataset::from_csv_str(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Draws `m` shots per setting from the Born distribution of `rho`.
///
/// Each setting uses its own RNG stream derived from one draw of `rng` and
/// the setting index, so the result does not depend on evaluation order.
pub fn simulate_dataset<R: Rng + ?Sized>(rho: &DensityMatrix, m: u64, rng: &mut R) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::Config("shots per setting must be positive".into()));
    }
    let n = rho.qubits();
    let base: u64 = rng.random();
    let mut counts = Vec::with_capacity(table_len(n));
    for (ai, a) in Setting::all(n).enumerate() {
        let probs = born_distribution(rho, &a)?;
        let mut stream = rng::stream(base, &[ai as u64]);
        counts.extend(multinomial(m, &probs, &mut stream));
    }
    Dataset::new(n, m, counts)
}

/// Multinomial draw as a chain of conditional binomials.
fn multinomial<R: Rng + ?Sized>(trials: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let clipped: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    let mut mass_left: f64 = clipped.iter().sum();
    let mut left = trials;
    let mut out = vec![0u64; probs.len()];
    for (i, &p) in clipped.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == clipped.len() {
            out[i] = left;
            break;
        }
        let q = if mass_left > 0.0 { (p / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out[i] = draw;
        left -= draw;
        mass_left -= p;
    }
    out
}

/// Empirical frequencies `n_{a,s} / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalFrequencies {
    table: ProbabilityTable,
    shots: u64,
}

impl EmpiricalFrequencies {
    /// Wraps an externally supplied table (e.g. exact probabilities).
    /// `shots` is the per-setting sample size the table stands for.
    pub fn from_table(table: ProbabilityTable, shots: u64) -> Self {
        EmpiricalFrequencies { table, shots }
    }

    pub fn table(&self) -> &ProbabilityTable {
        &self.table
    }

    pub fn shots_per_setting(&self) -> u64 {
        self.shots
    }
}

impl Deref for EmpiricalFrequencies {
    type Target = ProbabilityTable;

    fn deref(&self) -> &ProbabilityTable {
        &self.table
    }
}

pub fn empirical_frequencies(data: &Dataset) -> EmpiricalFrequencies {
    let m = data.shots as f64;
    let values = data.counts.iter().map(|&c| c as f64 / m).collect();
    EmpiricalFrequencies {
        table: ProbabilityTable::new(data.qubits, values).expect("dataset has full table"),
        shots: data.shots,
    }
}
