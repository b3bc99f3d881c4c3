//! Zero-mean, unit-variance scaling of selected (location) dimensions.

use serde::{Deserialize, Serialize};

use crate::data::{layout, BEHAVIOR_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardization {
    pub dim: usize,
    /// Standardized dimensions; all others pass through untouched.
    pub dims: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            dims: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
        }
    }

    /// Fits population mean and std of `dims` over feature rows of width
    /// `dim` (one row per participant per frame).
    pub fn fit<'a>(
        rows: impl IntoIterator<Item = &'a [f64]>,
        dim: usize,
        dims: &[usize],
    ) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::DegenerateStatistics(
                "no training rows to fit".into(),
            ));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d >= dim) {
            return Err(Error::Config(format!(
                "dimension {bad} out of range for width {dim}"
            )));
        }
        let n = rows.len() as f64;
        let mut mean = Vec::with_capacity(dims.len());
        let mut std = Vec::with_capacity(dims.len());
        for &d in dims {
            let m = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - m) * (r[d] - m)).sum::<f64>() / n;
            let s = var.sqrt();
            if !(s > 1e-12) || !s.is_finite() {
                return Err(Error::DegenerateStatistics(format!(
                    "dimension {d} has zero variance in the training data"
                )));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Self {
            dim,
            dims: dims.to_vec(),
            mean,
            std,
        })
    }

    /// Fit on the location dimensions of the behavior layout.
    pub fn fit_behavior<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        Self::fit(rows, BEHAVIOR_DIM, &layout::LOCATION_DIMS)
    }

    fn check(&self, values: &[f64]) -> Result<()> {
        if !values.len().is_multiple_of(self.dim) {
            return Err(Error::Shape(format!(
                "{} values are not rows of width {}",
                values.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn apply(&self, values: &mut [f64]) -> Result<()> {
        self.check(values)?;
        for row in values.chunks_mut(self.dim) {
            for (k, &d) in self.dims.iter().enumerate() {
                row[d] = (row[d] - self.mean[k]) / self.std[k];
            }
        }
        Ok(())
    }

    pub fn invert(&self, values: &mut [f64]) -> Result<()> {
        self.check(values)?;
        for row in values.chunks_mut(self.dim) {
            for (k, &d) in self.dims.iter().enumerate() {
                row[d] = row[d] * self.std[k] + self.mean[k];
            }
        }
        Ok(())
    }

    /// Scales predicted standard deviations by the same factor as the means.
    pub fn invert_std(&self, stds: &mut [f64]) -> Result<()> {
        self.check(stds)?;
        for row in stds.chunks_mut(self.dim) {
            for (k, &d) in self.dims.iter().enumerate() {
                row[d] *= self.std[k];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * 15)
            .map(|i| {
                let d = i % 15;
                if layout::LOCATION_DIMS.contains(&d) {
                    rng.random_range(-50.0..50.0) + shift + d as f64 * 10.0
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect()
    }

    #[test]
    fn standardized_train_has_unit_stats() {
        let raw = random_rows(0, 500, 0.0);
        let st = Standardization::fit_behavior(raw.chunks(15)).unwrap();
        let mut v = raw.clone();
        st.apply(&mut v).unwrap();
        for &d in &layout::LOCATION_DIMS {
            let col: Vec<f64> = v.chunks(15).map(|r| r[d]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let s = (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
        }
        for (a, b) in raw.chunks(15).zip(v.chunks(15)) {
            for d in (3..7).chain(10..15) {
                assert_eq!(a[d].to_bits(), b[d].to_bits());
            }
        }
        st.invert(&mut v).unwrap();
        assert!(raw.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-9));

        let mut test = random_rows(1, 500, 25.0);
        st.apply(&mut test).unwrap();
        let m = test.chunks(15).map(|r| r[0]).sum::<f64>() / 500.0;
        assert!(m.abs() > 0.1);
    }

    #[test]
    fn constant_location_is_degenerate() {
        let rows = vec![[1.0; 15]; 10];
        let err = Standardization::fit_behavior(rows.iter().map(|r| &r[..])).unwrap_err();
        assert!(matches!(err, Error::DegenerateStatistics(_)));
    }

    #[test]
    fn std_scaling() {
        let st = Standardization {
            dim: 2,
            dims: vec![0],
            mean: vec![1.0],
            std: vec![2.0],
        };
        let mut m = vec![0.5, 0.5];
        let mut s = vec![1.0, 1.0];
        st.invert(&mut m).unwrap();
        st.invert_std(&mut s).unwrap();
        assert_eq!(m, vec![2.0, 0.5]);
        assert_eq!(s, vec![2.0, 1.0]);
        let id = Standardization::identity(2);
        let mut v = vec![3.0, 4.0];
        id.invert(&mut v).unwrap();
        assert_eq!(v, vec![3.0, 4.0]);
    }
}
