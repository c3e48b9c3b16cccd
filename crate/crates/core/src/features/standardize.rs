use crate::error::{Error, Result};

/// Per-feature min-max scaling learned from training vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Standardizer {
    pub fn fit<V: AsRef<[f64]>>(train: &[V]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::Eval("cannot fit a standardizer on an empty training set".into()))?
            .as_ref();
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in train {
            let row = row.as_ref();
            if row.len() != min.len() {
                return Err(Error::Dimension {
                    expected: min.len(),
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Standardizer { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform_value(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi == lo {
            0.5
        } else {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    }

    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: values.len(),
            });
        }
        Ok(values
            .iter()
            .enumerate()
            .map(|(j, &v)| self.transform_value(j, v))
            .collect())
    }
}
