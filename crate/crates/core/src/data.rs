use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject's observations, times strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Subject {
    pub fn new(id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::InvalidInput(format!("subject {id} has no observations")));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observations of subject {id}")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "times of subject {id} are not strictly increasing"
            )));
        }
        Ok(Subject { id, times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Ragged longitudinal sample on a compact domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalDataset {
    pub subjects: Vec<Subject>,
    pub domain: (f64, f64),
}

impl LongitudinalDataset {
    /// Dataset on an explicit domain; every time must lie inside it.
    pub fn new(subjects: Vec<Subject>, domain: (f64, f64)) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::InvalidInput("dataset has no subjects".into()));
        }
        let (lo, hi) = domain;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidInput(format!("invalid domain [{lo}, {hi}]")));
        }
        for s in &subjects {
            if let Some(&t) = s.times.iter().find(|&&t| t < lo || t > hi) {
                return Err(Error::TimeOutOfDomain { time: t, lo, hi });
            }
        }
        Ok(LongitudinalDataset { subjects, domain })
    }

    /// Dataset whose domain is the range of observed times.
    pub fn from_subjects(subjects: Vec<Subject>) -> Result<Self> {
        let lo = subjects
            .iter()
            .flat_map(|s| s.times.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let hi = subjects
            .iter()
            .flat_map(|s| s.times.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        LongitudinalDataset::new(subjects, (lo, hi))
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_observations(&self) -> usize {
        self.subjects.iter().map(Subject::len).sum()
    }

    /// `∑ Nᵢ(Nᵢ − 1)`, the number of ordered within-subject pairs.
    pub fn pair_count(&self) -> usize {
        self.subjects.iter().map(|s| s.len() * (s.len() - 1)).sum()
    }

    pub fn ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }
}
