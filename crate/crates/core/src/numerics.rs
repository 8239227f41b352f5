//! Small numerical helpers shared across modules.

/// Neumaier's variant of Kahan compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
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

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Powers `base^0 .. base^(count-1)` built by repeated multiplication so the
/// table is bit-identical on every platform.
pub fn power_table(base: f64, count: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(count);
    let mut w = 1.0;
    for _ in 0..count {
        table.push(w);
        w *= base;
    }
    table
}

/// `sqrt(sum_j weight^j * u_j^2)` with the weights generated by repeated
/// multiplication of `weight`.
pub fn weighted_norm(u: &[f64], weight: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut w = 1.0;
    for &x in u {
        acc.add(w * x * x);
        w *= weight;
    }
    acc.value().max(0.0).sqrt()
}
