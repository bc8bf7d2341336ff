use serde::{Deserialize, Serialize};

/// `a * exp(-b * m) + c`, the execution-latency curve over memory size `m` (MB).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpDecay {
    /// Decaying amplitude (ms).
    pub a: f64,
    /// Decay rate (1/MB).
    pub b: f64,
    /// Asymptotic floor (ms).
    pub c: f64,
}

impl ExpDecay {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        ExpDecay { a, b, c }
    }

    pub fn eval(&self, m: f64) -> f64 {
        self.a * (-self.b * m).exp() + self.c
    }

    pub fn is_non_negative(&self) -> bool {
        self.a >= 0.0 && self.b >= 0.0 && self.c >= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_at_1024() {
        let d = ExpDecay::new(1000.0, 0.002, 200.0);
        assert!((d.eval(1024.0) - 328.9934).abs() < 1e-3);
        assert_eq!(ExpDecay::new(1000.0, 0.0, 200.0).eval(4096.0), 1200.0);
    }
}
