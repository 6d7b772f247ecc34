//! Data-node degree distributions and the cell-side distributions they induce.
//!
//! A degree distribution assigns each key-value pair a number of cells `d`
//! with probability `Lambda_d`. It is stored sparsely as `(degree, prob)`
//! pairs since the distributions of interest have at most a handful of
//! support points. From it we derive the edge-perspective distribution
//! `lambda_d = d * Lambda_d / Lambda'(1)` and the cell-node distribution,
//! which is binomial at finite length and exponential in the asymptotic
//! regime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Degrees above this are rejected; keeps polynomial evaluation cheap.
pub const MAX_DEGREE: u32 = 1 << 16;

/// Input probability mass may deviate from one by at most this much.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("distribution has no entries")]
    Empty,
    #[error("probabilities sum to {sum}, more than {MASS_TOLERANCE} away from 1")]
    NonUnitMass { sum: f64 },
    #[error("degree {degree} is not a positive integer")]
    NonPositiveDegree { degree: u32 },
    #[error("degree {degree} exceeds the cap of {MAX_DEGREE}")]
    DegreeTooLarge { degree: u32 },
    #[error("degree {degree} appears more than once")]
    DuplicateDegree { degree: u32 },
    #[error("degree {degree} has negative probability {prob}")]
    NegativeProbability { degree: u32, prob: f64 },
    #[error("argument {x} is outside [0, 1]")]
    DomainError { x: f64 },
    #[error("load must be positive, got {eta}")]
    NonPositiveLoad { eta: f64 },
}

/// Node-perspective degree distribution `Lambda(x) = sum_d Lambda_d x^d`.
///
/// Entries are sorted by ascending degree, carry no zero-probability terms,
/// and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    entries: Vec<(u32, f64)>,
}

/// Edge-perspective distribution `lambda(x) = sum_d lambda_d x^(d-1)`,
/// derived deterministically from a [`DegreeDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDistribution {
    entries: Vec<(u32, f64)>,
}

/// Cell-node degree distribution, either at finite length (binomial) or in
/// the asymptotic regime (exponential generating function).
#[derive(Debug, Clone, PartialEq)]
pub enum CellDistribution {
    /// `n` pairs hashed into `m` cells: cell degree is Binomial(n, Psi'(1)/n).
    Finite {
        n: u64,
        m: u64,
        avg_cell_degree: f64,
    },
    /// Limit of the finite form: `rho(x) = exp(-eta * avg_data_degree * (1-x))`.
    Asymptotic { eta: f64, avg_data_degree: f64 },
}

impl DegreeDistribution {
    /// Validates a raw `(degree, probability)` list and builds a normalized
    /// distribution. Zero-probability entries are dropped; the remaining mass
    /// must be within [`MASS_TOLERANCE`] of one and is rescaled to exactly one.
    pub fn validate(raw: &[(u32, f64)]) -> Result<Self, DistError> {
        if raw.is_empty() {
            return Err(DistError::Empty);
        }
        for &(d, p) in raw {
            if d < 1 {
                return Err(DistError::NonPositiveDegree { degree: d });
            }
            if d > MAX_DEGREE {
                return Err(DistError::DegreeTooLarge { degree: d });
            }
            if p < 0.0 || !p.is_finite() {
                return Err(DistError::NegativeProbability { degree: d, prob: p });
            }
        }
        let mut entries: Vec<(u32, f64)> = raw.iter().copied().filter(|&(_, p)| p > 0.0).collect();
        entries.sort_by_key(|&(d, _)| d);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DistError::DuplicateDegree { degree: w[0].0 });
            }
        }
        if entries.is_empty() {
            return Err(DistError::Empty);
        }
        let sum: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(DistError::NonUnitMass { sum });
        }
        for e in &mut entries {
            e.1 /= sum;
        }
        Ok(Self { entries })
    }

    /// Rebuilds a distribution from entries that are already normalized,
    /// without rescaling them. Used when deserializing, where the stored
    /// probabilities must round-trip bit-exactly.
    pub(crate) fn from_normalized_entries(entries: Vec<(u32, f64)>) -> Result<Self, DistError> {
        let sum: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DistError::NonUnitMass { sum });
        }
        let dist = Self { entries };
        // Ordering and range checks still apply to foreign bytes.
        for w in dist.entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(DistError::DuplicateDegree { degree: w[1].0 });
            }
        }
        if let Some(&(d, _)) = dist.entries.first() {
            if d < 1 {
                return Err(DistError::NonPositiveDegree { degree: d });
            }
        } else {
            return Err(DistError::Empty);
        }
        if let Some(&(d, _)) = dist.entries.last() {
            if d > MAX_DEGREE {
                return Err(DistError::DegreeTooLarge { degree: d });
            }
        }
        Ok(dist)
    }

    /// A regular distribution `Lambda(x) = x^d`.
    pub fn regular(d: u32) -> Result<Self, DistError> {
        Self::validate(&[(d, 1.0)])
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Probability mass at `degree` (zero when outside the support).
    pub fn prob(&self, degree: u32) -> f64 {
        self.entries
            .iter()
            .find(|&&(d, _)| d == degree)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn min_degree(&self) -> u32 {
        self.entries.first().map(|&(d, _)| d).unwrap_or(0)
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.last().map(|&(d, _)| d).unwrap_or(0)
    }

    /// Average data-node degree `Lambda'(1) = sum_d d * Lambda_d`.
    pub fn avg_degree(&self) -> f64 {
        self.entries.iter().map(|&(d, p)| d as f64 * p).sum()
    }

    /// Evaluates `Lambda(x)` for `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64, DistError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(DistError::DomainError { x });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        self.entries
            .iter()
            .map(|&(d, p)| p * x.powi(d as i32))
            .sum()
    }

    /// Edge-perspective mass `lambda_d = d * Lambda_d / Lambda'(1)`.
    pub fn to_edge_perspective(&self) -> EdgeDistribution {
        let avg = self.avg_degree();
        let entries = self
            .entries
            .iter()
            .map(|&(d, p)| (d, d as f64 * p / avg))
            .collect();
        EdgeDistribution { entries }
    }

    /// Finite-length cell distribution for `n` pairs in `m` cells.
    /// The edge-count identity `n * Lambda'(1) = m * Psi'(1)` fixes the
    /// average cell degree.
    pub fn induced_cell_distribution(&self, n: u64, m: u64) -> CellDistribution {
        assert!(n >= 1 && m >= 1, "pair and cell counts must be positive");
        CellDistribution::Finite {
            n,
            m,
            avg_cell_degree: n as f64 * self.avg_degree() / m as f64,
        }
    }

    /// Asymptotic cell distribution at load `eta`:
    /// `rho(x) = exp(-eta * Lambda'(1) * (1 - x))`.
    pub fn asymptotic_rho(&self, eta: f64) -> Result<CellDistribution, DistError> {
        if eta.is_nan() || eta <= 0.0 {
            return Err(DistError::NonPositiveLoad { eta });
        }
        Ok(CellDistribution::Asymptotic {
            eta,
            avg_data_degree: self.avg_degree(),
        })
    }

    /// Parses the JSON interchange format
    /// `{"terms": [{"degree": 3, "prob": 1.0}]}` and validates it.
    pub fn from_json_str(s: &str) -> Result<Self, DistError> {
        let file: DistFile = serde_json::from_str(s).map_err(|_| DistError::Empty)?;
        let raw: Vec<(u32, f64)> = file
            .terms
            .iter()
            .map(|t| {
                if t.degree < 1 {
                    Err(DistError::NonPositiveDegree { degree: 0 })
                } else if t.degree > MAX_DEGREE as i64 {
                    Err(DistError::DegreeTooLarge { degree: MAX_DEGREE })
                } else {
                    Ok((t.degree as u32, t.prob))
                }
            })
            .collect::<Result<_, _>>()?;
        Self::validate(&raw)
    }

    /// Serializes to the JSON interchange format, degrees ascending.
    pub fn to_json_string(&self) -> String {
        let file = DistFile {
            terms: self
                .entries
                .iter()
                .map(|&(d, p)| DistTerm {
                    degree: d as i64,
                    prob: p,
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("distribution serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct DistFile {
    terms: Vec<DistTerm>,
}

#[derive(Serialize, Deserialize)]
struct DistTerm {
    degree: i64,
    prob: f64,
}

impl EdgeDistribution {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Edge mass `lambda_d` at `degree` (zero outside the support).
    pub fn coeff(&self, degree: u32) -> f64 {
        self.entries
            .iter()
            .find(|&&(d, _)| d == degree)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Evaluates `lambda(x) = sum_d lambda_d x^(d-1)` for `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64, DistError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(DistError::DomainError { x });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        self.entries
            .iter()
            .map(|&(d, p)| p * x.powi(d as i32 - 1))
            .sum()
    }
}

impl CellDistribution {
    /// Average cell degree `Psi'(1)`.
    pub fn psi_prime_1(&self) -> f64 {
        match *self {
            CellDistribution::Finite {
                avg_cell_degree, ..
            } => avg_cell_degree,
            CellDistribution::Asymptotic {
                eta,
                avg_data_degree,
            } => eta * avg_data_degree,
        }
    }

    /// Edge-perspective polynomial `rho(x) = Psi'(x) / Psi'(1)`.
    ///
    /// Finite mode: the binomial generating function gives
    /// `rho(x) = (1 - p + p x)^(n-1)` with `p = Psi'(1)/n`.
    /// Asymptotic mode: `rho(x) = exp(-eta * Lambda'(1) * (1 - x))`.
    pub fn rho(&self, x: f64) -> f64 {
        match *self {
            CellDistribution::Finite {
                n, avg_cell_degree, ..
            } => {
                let p = avg_cell_degree / n as f64;
                (1.0 - p + p * x).powi(n as i32 - 1)
            }
            CellDistribution::Asymptotic {
                eta,
                avg_data_degree,
            } => (-eta * avg_data_degree * (1.0 - x)).exp(),
        }
    }

    /// Finite-mode cell-degree mass `Psi_d = C(n,d) p^d (1-p)^(n-d)`,
    /// computed in log-space so large `n` does not overflow.
    ///
    /// Returns zero for `d > n` and panics in asymptotic mode (use
    /// [`CellDistribution::rho`] there).
    pub fn psi_pmf(&self, d: u64) -> f64 {
        match *self {
            CellDistribution::Finite {
                n, avg_cell_degree, ..
            } => {
                if d > n {
                    return 0.0;
                }
                let p = avg_cell_degree / n as f64;
                if p <= 0.0 {
                    return if d == 0 { 1.0 } else { 0.0 };
                }
                let mut ln = (n as f64 - d as f64) * (-p).ln_1p() + d as f64 * p.ln();
                // ln C(n, d), accumulated termwise: sum ln((n-i)/(i+1)).
                for i in 0..d {
                    ln += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
                }
                ln.exp()
            }
            CellDistribution::Asymptotic { .. } => {
                panic!("psi_pmf is defined for the finite mode only")
            }
        }
    }
}
