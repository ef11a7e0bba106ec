use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension min-max scaler onto `[0, 1]`.
///
/// Constant dimensions map to 0 and values outside the fitted range are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::data("cannot fit a scaler on zero rows"))?;
        check_finite(first)?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in iter {
            if row.len() != min.len() {
                return Err(Error::DimensionMismatch {
                    expected: min.len(),
                    got: row.len(),
                });
            }
            check_finite(row)?;
            for (k, &x) in row.iter().enumerate() {
                min[k] = min[k].min(x);
                max[k] = max[k].max(x);
            }
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| scale_one(v, lo, hi))
            .collect())
    }
}

pub(crate) fn scale_one(v: f64, lo: f64, hi: f64) -> f64 {
    let range = hi - lo;
    if range <= 0.0 {
        0.0
    } else {
        ((v - lo) / range).clamp(0.0, 1.0)
    }
}

pub(crate) fn check_finite(row: &[f64]) -> Result<()> {
    if row.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("feature vector"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_and_apply() {
        let rows = [[2.0, 3.0], [4.0, 3.0], [6.0, 3.0]];
        let s = MinMaxScaler::fit(rows.iter().map(|r| &r[..])).unwrap();
        let scaled: Vec<_> = rows.iter().map(|r| s.transform(r).unwrap()).collect();
        assert_eq!(scaled, [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]);
        assert_eq!(s.transform(&[8.0, 3.0]).unwrap(), [1.0, 0.0]);
        assert_eq!(s.transform(&[-1.0, 9.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn errors() {
        assert!(MinMaxScaler::fit(std::iter::empty()).is_err());
        let rows = [vec![1.0], vec![1.0, 2.0]];
        assert!(MinMaxScaler::fit(rows.iter().map(|r| &r[..])).is_err());
        let rows = [vec![f64::NAN]];
        assert!(MinMaxScaler::fit(rows.iter().map(|r| &r[..])).is_err());
    }
}
