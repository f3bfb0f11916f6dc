use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

/// Additive floor on priorities `|Δ| + PRIORITY_EPS`.
pub const PRIORITY_EPS: f64 = 1e-3;
const MAX_PRIORITY: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub cost: f64,
    pub x_next: DVector<f64>,
}

/// Ring buffer of transitions; the oldest entry is overwritten once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
    priorities: Option<Vec<f64>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, prioritized: bool) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            data: Vec::new(),
            next: 0,
            priorities: prioritized.then(Vec::new),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_prioritized(&self) -> bool {
        self.priorities.is_some()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// New transitions enter with the current maximum priority.
    pub fn push(&mut self, t: Transition) {
        let init = self.priorities.as_ref().map(|p| p.iter().copied().fold(1.0, f64::max));
        if self.data.len() < self.capacity {
            self.data.push(t);
            if let (Some(p), Some(v)) = (self.priorities.as_mut(), init) {
                p.push(v);
            }
        } else {
            self.data[self.next] = t;
            if let (Some(p), Some(v)) = (self.priorities.as_mut(), init) {
                p[self.next] = v;
            }
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Indices drawn with replacement, uniformly or proportionally to priority.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        match &self.priorities {
            None => Ok((0..batch).map(|_| rng.random_range(0..self.data.len())).collect()),
            Some(p) => {
                let dist =
                    WeightedIndex::new(p).map_err(|e| Error::InvalidParameter(format!("replay priorities: {e}")))?;
                Ok((0..batch).map(|_| dist.sample(rng)).collect())
            }
        }
    }

    pub fn update_priorities(&mut self, indices: &[usize], deltas: &[f64]) {
        if let Some(p) = self.priorities.as_mut() {
            for (&i, d) in indices.iter().zip(deltas) {
                // `min` also maps NaN to the cap.
                p[i] = (d.abs() + PRIORITY_EPS).min(MAX_PRIORITY);
            }
        }
    }

    pub fn priorities(&self) -> Option<&[f64]> {
        self.priorities.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::stream_rng;

    fn tr(c: f64) -> Transition {
        Transition {
            x: DVector::from_vec(vec![c]),
            u: DVector::from_vec(vec![0.0]),
            cost: c,
            x_next: DVector::from_vec(vec![c]),
        }
    }

    #[test]
    fn capacity_is_respected() {
        let mut b = ReplayBuffer::new(3, false).unwrap();
        for i in 0..5 {
            b.push(tr(i as f64));
        }
        assert_eq!(b.len(), 3);
        let costs: Vec<f64> = (0..3).map(|i| b.get(i).cost).collect();
        assert_eq!(costs, vec![3.0, 4.0, 2.0]);
        assert!(ReplayBuffer::new(0, false).is_err());
    }

    #[test]
    fn empty_sampling_fails() {
        let b = ReplayBuffer::new(3, true).unwrap();
        assert!(b.sample_indices(&mut stream_rng(0, 0), 4).is_err());
    }

    #[test]
    fn uniform_covers_buffer() {
        let mut b = ReplayBuffer::new(10, false).unwrap();
        for i in 0..4 {
            b.push(tr(i as f64));
        }
        let idx = b.sample_indices(&mut stream_rng(1, 0), 4000).unwrap();
        for k in 0..4 {
            let n = idx.iter().filter(|&&i| i == k).count();
            assert!((800..1200).contains(&n), "{k}: {n}");
        }
    }

    #[test]
    fn prioritized_follows_weights() {
        let mut b = ReplayBuffer::new(10, true).unwrap();
        b.push(tr(0.0));
        b.push(tr(1.0));
        b.update_priorities(&[0, 1], &[3.0 - PRIORITY_EPS, -(1.0 - PRIORITY_EPS)]);
        let p = b.priorities().unwrap();
        assert!((p[0] - 3.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
        let idx = b.sample_indices(&mut stream_rng(2, 0), 8000).unwrap();
        let zeros = idx.iter().filter(|&&i| i == 0).count();
        assert!((5700..6300).contains(&zeros), "{zeros}");
        b.push(tr(2.0));
        assert!(b.priorities().unwrap().iter().all(|&v| v > 0.0));
        assert!((b.priorities().unwrap()[2] - 3.0).abs() < 1e-12);
    }
}
