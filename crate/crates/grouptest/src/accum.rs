//! Compensated (error-free-transformation) accumulation.
//!
//! The exact-expectation sums run over up to tens of millions of terms whose
//! magnitudes span many orders; a Neumaier-style compensated sum keeps the
//! result accurate to a few ulps regardless of term order or count.

/// Neumaier variant of Kahan summation: like Kahan, but also captures the
/// error when the incoming term is larger than the running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
