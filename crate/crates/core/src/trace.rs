//! Sample-indexed risk traces produced by every method.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// Cumulative labeled samples.
    pub samples: u64,
    /// Cumulative unlabeled samples.
    pub unlabeled: u64,
    pub excess_risk: f64,
    pub stderr: f64,
    /// Outer round, 0 for the initial point and for methods without rounds.
    pub outer_k: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub final_x: Vec<f64>,
    /// Floating-point operations on the streaming path.
    pub ops: u64,
}

impl RunTrace {
    pub fn initial_risk(&self) -> Option<f64> {
        self.rows.first().map(|r| r.excess_risk)
    }

    pub fn final_risk(&self) -> Option<f64> {
        self.rows.last().map(|r| r.excess_risk)
    }

    /// First sample count at which the risk is at most `threshold`.
    pub fn samples_to(&self, threshold: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.excess_risk <= threshold).map(|r| r.samples)
    }
}

/// Risk measurement hook, called with the current reported iterate.
pub trait Probe {
    fn measure(&mut self, x: &[f64]) -> (f64, f64);
}

impl<F: FnMut(&[f64]) -> (f64, f64)> Probe for F {
    fn measure(&mut self, x: &[f64]) -> (f64, f64) {
        self(x)
    }
}

/// A probe that records nothing.
pub struct NoProbe;

impl Probe for NoProbe {
    fn measure(&mut self, _x: &[f64]) -> (f64, f64) {
        (f64::NAN, f64::NAN)
    }
}
