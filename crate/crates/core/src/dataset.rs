//! Training data shared by the denoiser trainers and the environment.
//!
//! Samples are stored normalized; the stats travel with the dataset so
//! trained models can map latents back to raw action space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub cond_mean: Vec<f64>,
    pub cond_std: Vec<f64>,
    pub x0_mean: Vec<f64>,
    pub x0_std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-6;

impl NormStats {
    /// Computes stats over raw rows. Standard deviations are floored so
    /// constant dimensions stay usable.
    pub fn fit(cond: &[Vec<f64>], x0: &[Vec<f64>]) -> Result<Self> {
        if cond.is_empty() || cond.len() != x0.len() {
            return Err(Error::InvalidParameter(
                "need equal, nonzero numbers of cond and x0 rows".into(),
            ));
        }
        let (cm, cs) = column_stats(cond);
        let (xm, xs) = column_stats(x0);
        Ok(NormStats {
            cond_mean: cm,
            cond_std: cs,
            x0_mean: xm,
            x0_std: xs,
        })
    }

    pub fn normalize_cond(&self, raw: &[f64]) -> Vec<f64> {
        standardize(raw, &self.cond_mean, &self.cond_std)
    }

    pub fn normalize_x0(&self, raw: &[f64]) -> Vec<f64> {
        standardize(raw, &self.x0_mean, &self.x0_std)
    }

    pub fn denormalize_x0(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.x0_mean.iter().zip(&self.x0_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for r in rows {
        for (s, (v, m)) in var.iter_mut().zip(r.iter().zip(&mean)) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let std = var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

fn standardize(raw: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    raw.iter()
        .zip(mean.iter().zip(std))
        .map(|(v, (m, s))| (v - m) / s)
        .collect()
}

/// Normalized (conditioning, clean-sample) pairs plus the stats that
/// produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub cond: Vec<Vec<f64>>,
    pub x0: Vec<Vec<f64>>,
    pub norm: NormStats,
    pub seed: u64,
}

impl Dataset {
    /// Builds a normalized dataset from raw rows.
    pub fn from_raw(cond_raw: Vec<Vec<f64>>, x0_raw: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let norm = NormStats::fit(&cond_raw, &x0_raw)?;
        let cond = cond_raw.iter().map(|r| norm.normalize_cond(r)).collect();
        let x0 = x0_raw.iter().map(|r| norm.normalize_x0(r)).collect();
        Ok(Dataset {
            cond,
            x0,
            norm,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    pub fn cond_dim(&self) -> usize {
        self.cond.first().map_or(0, Vec::len)
    }

    pub fn x0_dim(&self) -> usize {
        self.x0.first().map_or(0, Vec::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_columns_have_unit_stats() {
        let cond: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 3.0]).collect();
        let x0: Vec<Vec<f64>> = (0..50).map(|i| vec![10.0 - i as f64]).collect();
        let ds = Dataset::from_raw(cond, x0, 1).unwrap();
        let (m, s) = column_stats(&ds.x0);
        assert!(m[0].abs() < 1e-12);
        assert!((s[0] - 1.0).abs() < 1e-9);
        // constant column: mean removed, std floored instead of dividing by 0
        let (cm, _) = column_stats(&ds.cond);
        assert!(cm[1].abs() < 1e-12);
    }

    #[test]
    fn denormalize_round_trips() {
        let x0: Vec<Vec<f64>> = (0..20).map(|i| vec![0.3 * i as f64, -1.0]).collect();
        let cond: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_raw(cond, x0.clone(), 0).unwrap();
        for (z, raw) in ds.x0.iter().zip(&x0) {
            let back = ds.norm.denormalize_x0(z);
            for (a, b) in back.iter().zip(raw) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        assert!(Dataset::from_raw(vec![vec![1.0]], vec![], 0).is_err());
    }
}
