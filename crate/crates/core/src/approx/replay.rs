use rand::Rng as _;

use crate::env::{Action, GridState};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_CAPACITY: usize = 1_000_000;
pub const DEFAULT_WARMUP: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: GridState,
    pub action: Action,
    pub reward: f64,
    pub next: GridState,
    /// `next` is the goal; nothing is bootstrapped past it.
    pub terminal: bool,
    /// The episode clock expired at `next`; bootstrapping still applies.
    pub truncated: bool,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    warmup: usize,
    data: Vec<Transition>,
    next_slot: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, warmup: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            warmup,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next_slot: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_ready(&self) -> bool {
        self.data.len() >= self.warmup.max(1)
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next_slot] = t;
        }
        self.next_slot = (self.next_slot + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.data.len() < self.capacity {
            0
        } else {
            self.next_slot
        };
        self.data[split..].iter().chain(self.data[..split].iter())
    }

    /// Uniform sampling with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        let mut out = Vec::with_capacity(batch_size);
        self.sample_into(batch_size, rng, &mut out)?;
        Ok(out)
    }

    pub fn sample_into(
        &self,
        batch_size: usize,
        rng: &mut Rng,
        out: &mut Vec<Transition>,
    ) -> Result<()> {
        if !self.is_ready() {
            return Err(Error::BufferNotReady {
                len: self.data.len(),
                warmup: self.warmup.max(1),
            });
        }
        out.clear();
        out.extend((0..batch_size).map(|_| self.data[rng.gen_range(0..self.data.len())]));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn t(i: i32) -> Transition {
        Transition {
            state: GridState::new(i % 19, (i / 19) % 19),
            action: Action::Stay,
            reward: i as f64,
            next: GridState::new(i % 19, (i / 19) % 19),
            terminal: false,
            truncated: false,
        }
    }

    #[test]
    fn evicts_oldest_at_capacity() {
        let mut b = ReplayBuffer::new(2000, 2000).unwrap();
        for i in 0..2001 {
            b.push(t(i));
        }
        assert_eq!(b.len(), 2000);
        assert_eq!(*b.iter().next().unwrap(), t(1));
        assert_eq!(*b.iter().last().unwrap(), t(2000));
        assert!(!b.iter().any(|x| *x == t(0)));
    }

    #[test]
    fn sampling_waits_for_warmup() {
        let mut b = ReplayBuffer::new(DEFAULT_CAPACITY, DEFAULT_WARMUP).unwrap();
        let mut rng = stream(0, Stream::QBatch);
        for i in 0..1999 {
            b.push(t(i));
        }
        assert!(matches!(
            b.sample(8, &mut rng),
            Err(Error::BufferNotReady {
                len: 1999,
                warmup: 2000
            })
        ));
        b.push(t(1999));
        assert_eq!(b.sample(8, &mut rng).unwrap().len(), 8);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let mut b = ReplayBuffer::new(100, 10).unwrap();
        for i in 0..50 {
            b.push(t(i));
        }
        let x = b.sample(32, &mut stream(5, Stream::QBatch)).unwrap();
        let y = b.sample(32, &mut stream(5, Stream::QBatch)).unwrap();
        assert_eq!(x, y);
    }
}
