//! Streaming sample sources and the seeding contract.
//!
//! A replicate owns one ChaCha stream; independent workers are separated by
//! stream id, never by reseeding, so runs are reproducible under any
//! scheduling of the worker pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::DataDistribution;

pub type StreamRng = ChaCha8Rng;

/// Deterministic generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a path of indices into one stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A source of i.i.d. feature/label pairs written into caller buffers.
pub trait SampleSource {
    fn dim(&self) -> usize;

    /// Writes a feature vector into `a` and returns its label.
    fn next_labeled(&mut self, a: &mut [f64]) -> Result<f64>;

    /// Writes a feature vector drawn from the marginal of the design.
    fn next_unlabeled(&mut self, a: &mut [f64]) -> Result<()>;
}

impl<S: SampleSource + ?Sized> SampleSource for &mut S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn next_labeled(&mut self, a: &mut [f64]) -> Result<f64> {
        (**self).next_labeled(a)
    }
    fn next_unlabeled(&mut self, a: &mut [f64]) -> Result<()> {
        (**self).next_unlabeled(a)
    }
}

/// Draws from a [`DataDistribution`] with an owned generator.
pub struct DistributionSource<'a> {
    dist: &'a DataDistribution,
    rng: StreamRng,
    scratch: Vec<f64>,
    draws: u64,
    limit: Option<u64>,
}

impl<'a> DistributionSource<'a> {
    pub fn new(dist: &'a DataDistribution, rng: StreamRng) -> Self {
        Self { dist, rng, scratch: vec![0.0; dist.dim()], draws: 0, limit: None }
    }

    pub fn seeded(dist: &'a DataDistribution, seed: u64, stream: u64) -> Self {
        Self::new(dist, stream_rng(seed, stream))
    }

    /// Caps the number of draws; further requests fail with `StreamExhausted`.
    pub fn with_limit(mut self, limit: u64) -> Self {
        self.limit = Some(limit);
        self
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    fn take(&mut self, a: &[f64]) -> Result<()> {
        if a.len() != self.dist.dim() {
            return Err(Error::Dimension { expected: self.dist.dim(), got: a.len() });
        }
        if self.limit.is_some_and(|l| self.draws >= l) {
            return Err(Error::StreamExhausted(self.draws));
        }
        self.draws += 1;
        Ok(())
    }
}

impl SampleSource for DistributionSource<'_> {
    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn next_labeled(&mut self, a: &mut [f64]) -> Result<f64> {
        self.take(a)?;
        Ok(self.dist.sample_into(&mut self.rng, a, &mut self.scratch))
    }

    fn next_unlabeled(&mut self, a: &mut [f64]) -> Result<()> {
        self.take(a)?;
        self.dist.sample_features_into(&mut self.rng, a, &mut self.scratch);
        Ok(())
    }
}

/// Replays a fixed list of pairs, then reports exhaustion.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    pos: usize,
}

impl ReplaySource {
    /// `features` is row-major with one row of length `dim` per label.
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::Dimension { expected: dim * labels.len(), got: features.len() });
        }
        Ok(Self { dim, features, labels, pos: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.labels.len() - self.pos
    }
}

impl SampleSource for ReplaySource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn next_labeled(&mut self, a: &mut [f64]) -> Result<f64> {
        if a.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: a.len() });
        }
        if self.pos >= self.labels.len() {
            return Err(Error::StreamExhausted(self.pos as u64));
        }
        a.copy_from_slice(&self.features[self.pos * self.dim..(self.pos + 1) * self.dim]);
        self.pos += 1;
        Ok(self.labels[self.pos - 1])
    }

    fn next_unlabeled(&mut self, a: &mut [f64]) -> Result<()> {
        self.next_labeled(a).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(7, 1), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(7, 1), |r, _| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(7, 2), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(stream_id(&[1, 2]), stream_id(&[2, 1]));
    }

    #[test]
    fn replay_exhausts() {
        let mut s = ReplaySource::new(1, vec![2.0], vec![1.0]).unwrap();
        let mut a = [0.0];
        assert_eq!(s.next_labeled(&mut a).unwrap(), 1.0);
        assert_eq!(a, [2.0]);
        assert_eq!(s.next_labeled(&mut a), Err(Error::StreamExhausted(1)));
    }
}
