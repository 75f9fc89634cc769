//! Small summation and moment helpers.

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running mean and variance accumulator built on compensated sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MomentAcc {
    pub n: usize,
    s1: NeumaierSum,
    s2: NeumaierSum,
}

impl MomentAcc {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.s1.add(v);
        self.s2.add(v * v);
    }

    pub fn merge(&mut self, o: &MomentAcc) {
        self.n += o.n;
        self.s1.merge(&o.s1);
        self.s2.merge(&o.s2);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.s1.value() / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn var(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.s1.value() / n;
        ((self.s2.value() - n * m * m) / (n - 1.0)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut s = NeumaierSum::default();
        for v in [1.0, 1e100, 1.0, -1e100] {
            s.add(v);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn moments_match_direct() {
        let mut a = MomentAcc::default();
        for v in [1.0, 2.0, 4.0] {
            a.push(v);
        }
        assert!((a.mean() - 7.0 / 3.0).abs() < 1e-15);
        assert!((a.var() - 7.0 / 3.0).abs() < 1e-14);
    }
}
