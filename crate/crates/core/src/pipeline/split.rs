//! Patient-aware train/validation/test partitioning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::manifest::Sample;
use crate::error::{Error, Result};
use crate::seed::rng_for;

const SPLIT_STREAM: u64 = 0x5350_4c54;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0)
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidParameter(format!(
                "split fractions {parts:?} must be positive and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub fractions: SplitFractions,
    pub seed: u64,
}

/// Indices into `samples` for train, validation and test.
///
/// Patients are shuffled by `seed` and handed out in order: each split takes
/// whole patients until its sample quota is met, and the test split takes
/// whatever remains.
pub fn split_indices(
    samples: &[Sample],
    fractions: SplitFractions,
    seed: u64,
) -> Result<[Vec<usize>; 3]> {
    fractions.validate()?;
    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_patient.entry(&s.patient_id).or_default().push(i);
    }
    let mut patients: Vec<Vec<usize>> = by_patient.into_values().collect();
    patients.shuffle(&mut rng_for(seed, &[SPLIT_STREAM]));
    let n = samples.len() as f64;
    let quotas = [fractions.train * n, fractions.val * n];
    let mut out: [Vec<usize>; 3] = Default::default();
    let mut current = 0;
    for group in patients {
        while current < 2 && out[current].len() as f64 >= quotas[current] - 1e-9 {
            current += 1;
        }
        out[current].extend(group);
    }
    for (name, part) in ["train", "validation", "test"].iter().zip(&out) {
        if part.is_empty() {
            return Err(Error::TooFewPatients(format!(
                "{name} split is empty with {} samples",
                samples.len()
            )));
        }
    }
    out.iter_mut().for_each(|p| p.sort_unstable());
    Ok(out)
}

pub fn split_patients(
    samples: &[Sample],
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitDataset> {
    let [train, val, test] = split_indices(samples, fractions, seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| samples[i].clone()).collect();
    Ok(SplitDataset {
        train: pick(train),
        val: pick(val),
        test: pick(test),
        fractions,
        seed,
    })
}
