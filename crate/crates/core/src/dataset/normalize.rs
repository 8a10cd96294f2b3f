//! Z-score normalization with separate price and volume statistics.

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::lob::{LobRecord, TICKS_PER_UNIT};
use crate::scalar::Scalar;

/// Pooled statistics. Prices are in currency units; standard deviations use
/// the population (divide-by-N) convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats<T> {
    pub price_mean: T,
    pub price_std: T,
    pub volume_mean: T,
    pub volume_std: T,
}

fn is_price(position: usize) -> bool {
    position.is_multiple_of(2)
}

fn raw_value<T: Scalar>(position: usize, v: i64) -> T {
    let x = T::from_i64(v).unwrap_or_else(T::nan);
    if is_price(position) {
        x / T::lit(TICKS_PER_UNIT as f64)
    } else {
        x
    }
}

/// Fits price statistics over every price entry and volume statistics over
/// every volume entry of `records`.
pub fn fit_normalization<'a, T, I>(records: I) -> Result<NormalizationStats<T>, DatasetError>
where
    T: Scalar,
    I: IntoIterator<Item = &'a LobRecord> + Clone,
{
    let mut sums = [T::zero(); 2];
    let mut counts = [0usize; 2];
    for r in records.clone() {
        for (i, v) in r.features.iter().enumerate() {
            let fam = usize::from(!is_price(i));
            sums[fam] = sums[fam] + raw_value::<T>(i, *v);
            counts[fam] += 1;
        }
    }
    if counts[0] == 0 {
        return Err(DatasetError::EmptyInput);
    }
    let means = [0, 1].map(|f| sums[f] / T::from_usize_lossy(counts[f]));
    let mut sq = [T::zero(); 2];
    for r in records {
        for (i, v) in r.features.iter().enumerate() {
            let fam = usize::from(!is_price(i));
            let d = raw_value::<T>(i, *v) - means[fam];
            sq[fam] = sq[fam] + d * d;
        }
    }
    let stds = [0, 1].map(|f| (sq[f] / T::from_usize_lossy(counts[f])).sqrt());
    if !(stds[0] > T::zero()) {
        return Err(DatasetError::ZeroVariance("price"));
    }
    if !(stds[1] > T::zero()) {
        return Err(DatasetError::ZeroVariance("volume"));
    }
    Ok(NormalizationStats {
        price_mean: means[0],
        price_std: stds[0],
        volume_mean: means[1],
        volume_std: stds[1],
    })
}

impl<T: Scalar> NormalizationStats<T> {
    fn family(&self, position: usize) -> (T, T) {
        if is_price(position) {
            (self.price_mean, self.price_std)
        } else {
            (self.volume_mean, self.volume_std)
        }
    }

    pub fn apply(&self, record: &LobRecord) -> Vec<T> {
        record
            .features
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (m, s) = self.family(i);
                (raw_value::<T>(i, *v) - m) / s
            })
            .collect()
    }

    /// Maps normalized values back to prices (currency units) and volumes.
    pub fn invert(&self, values: &[T]) -> Vec<T> {
        values
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let (m, s) = self.family(i);
                *z * s + m
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> NormalizationStats<U> {
        NormalizationStats {
            price_mean: U::lit(self.price_mean.as_f64()),
            price_std: U::lit(self.price_std.as_f64()),
            volume_mean: U::lit(self.volume_mean.as_f64()),
            volume_std: U::lit(self.volume_std.as_f64()),
        }
    }
}

pub fn apply_zscore<T: Scalar>(
    records: &[LobRecord],
    stats: &NormalizationStats<T>,
) -> Vec<Vec<T>> {
    records.iter().map(|r| stats.apply(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(ask: i64, av: i64, bid: i64, bv: i64) -> LobRecord {
        LobRecord::from_features(0, vec![ask, av, bid, bv])
    }

    #[test]
    fn constant_fields_have_zero_variance() {
        let rs = vec![rec(1_000_000, 10, 1_000_000, 10); 3];
        assert_eq!(
            fit_normalization::<f64, _>(&rs),
            Err(DatasetError::ZeroVariance("price"))
        );
        let rs = vec![rec(1_000_000, 10, 990_000, 10); 3];
        assert_eq!(
            fit_normalization::<f64, _>(&rs),
            Err(DatasetError::ZeroVariance("volume"))
        );
        assert_eq!(
            fit_normalization::<f64, _>(&Vec::<LobRecord>::new()),
            Err(DatasetError::EmptyInput)
        );
    }

    #[test]
    fn hand_computed_stats() {
        // prices {102, 100} and volumes {30, 10} in each record
        let rs = vec![
            rec(1_020_000, 30, 1_000_000, 10),
            rec(1_020_000, 30, 1_000_000, 10),
        ];
        let s = fit_normalization::<f64, _>(&rs).unwrap();
        assert_eq!(s.price_mean, 101.0);
        assert_eq!(s.volume_mean, 20.0);
        // population std: sqrt(((1)^2 * 4) / 4)
        assert_eq!(s.price_std, 1.0);
        assert_eq!(s.volume_std, 10.0);
        let z = s.apply(&rs[0]);
        assert_eq!(z, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn fitted_set_is_standardized_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rs: Vec<_> = (0..200)
            .map(|_| {
                let bid = rng.gen_range(900_000..1_100_000);
                LobRecord::from_features(
                    0,
                    vec![
                        bid + rng.gen_range(100..500),
                        rng.gen_range(1..900),
                        bid,
                        rng.gen_range(1..900),
                    ],
                )
            })
            .collect();
        let s = fit_normalization::<f64, _>(&rs).unwrap();
        let z = apply_zscore(&rs, &s);
        for fam in 0..2 {
            let vals: Vec<f64> = z
                .iter()
                .flat_map(|r| r.iter().skip(fam).step_by(2).copied())
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
        // x = mean -> 0, x = mean + std -> 1
        let at_mean = s.apply(&rec(0, 0, 0, 0));
        assert!((at_mean[0] + s.price_mean / s.price_std).abs() < 1e-12);
        for (r, zr) in rs.iter().zip(&z) {
            let back = s.invert(zr);
            for (i, v) in r.features.iter().enumerate() {
                let raw = if i % 2 == 0 {
                    *v as f64 / 1e4
                } else {
                    *v as f64
                };
                assert!((back[i] - raw).abs() <= 1e-9 * raw.abs());
            }
        }
    }
}
