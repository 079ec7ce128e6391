//! Compensated summation.
//!
//! Weights in a multiple-frame sample can span several orders of magnitude
//! (frame sizes range from a few thousand to over a million ssus), so every
//! triple sum in the estimators goes through a Neumaier accumulator.

#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator of `f64`.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<NeumaierSum>().value()
}

/// Sample mean square `1/(k-1) Σ (x - x̄)²`, with the singleton case defined as 0.
pub fn mean_square(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = sum(values.iter().copied()) / values.len() as f64;
    sum(values.iter().map(|v| (v - mean) * (v - mean))) / (values.len() - 1) as f64
}

/// `C(n, k)` as `u128`, `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(values), 2.0);
    }

    #[test]
    fn mean_square_of_singleton_is_zero() {
        assert_eq!(mean_square(&[3.0]), 0.0);
        assert_eq!(mean_square(&[1.0, 3.0]), 2.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 2), Some(3));
        assert_eq!(binomial(20, 10), Some(184_756));
        assert_eq!(binomial(2, 5), Some(0));
    }
}
