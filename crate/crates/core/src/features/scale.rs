use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-slot min-max scaling into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut it = rows.into_iter();
        let first = it.next().ok_or(Error::EmptyDataset)?;
        let mut s = Self {
            min: first.to_vec(),
            max: first.to_vec(),
        };
        for row in it {
            if row.len() != s.min.len() {
                return Err(Error::shape("scaler row", s.min.len(), row.len()));
            }
            for (k, &x) in row.iter().enumerate() {
                s.min[k] = s.min[k].min(x);
                s.max[k] = s.max[k].max(x);
            }
        }
        Ok(s)
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)` clamped into `[0, 1]`; 0 for constant slots.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.min.len() {
            return Err(Error::shape("scaled row", self.min.len(), row.len()));
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let rows = [vec![2.0, 7.0], vec![4.0, 7.0]];
        let s = MinMaxScaler::fit(rows.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(s.apply(&[3.0, 7.0]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(s.apply(&[5.0, 9.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(s.apply(&[-1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(s.apply(&[1.0]).is_err());
        assert!(MinMaxScaler::fit(std::iter::empty()).is_err());
    }

    proptest! {
        #[test]
        fn output_in_unit_interval(
            rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 1..10),
            probe in proptest::collection::vec(-1e7f64..1e7, 3),
        ) {
            let s = MinMaxScaler::fit(rows.iter().map(Vec::as_slice)).unwrap();
            for (lo, hi) in s.min.iter().zip(&s.max) {
                prop_assert!(lo <= hi);
            }
            for v in s.apply(&probe).unwrap() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
