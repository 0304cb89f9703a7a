//! Small numerically careful helpers used across the solvers.

use crate::Real;

/// `log(sum(exp(x)))` with the max shifted out. Returns `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let mut acc = NeumaierSum::default();
    for &v in values {
        acc.add((v - max).exp());
    }
    max + acc.value().ln()
}

/// Compensated (Kahan-Babuska-Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Real> NeumaierSum<T> {
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.compensation
    }
}

impl<T: Real> FromIterator<T> for NeumaierSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = NeumaierSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn stable_sum<T: Real>(values: &[T]) -> T {
    values.iter().copied().collect::<NeumaierSum<T>>().value()
}

/// Rescales `values` in place to sum to one. Returns the original total.
pub fn normalize<T: Real>(values: &mut [T]) -> T {
    let total = stable_sum(values);
    if total > T::zero() {
        for v in values.iter_mut() {
            *v /= total;
        }
    }
    total
}

/// Index of the largest value; the first index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
