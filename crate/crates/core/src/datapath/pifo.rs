//! Push-in first-out queue and a scheduler with per-flow bandwidth floors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::DatapathError;

/// Dequeues the minimum rank; equal ranks leave in arrival order.
#[derive(Debug, Clone)]
pub struct PifoQueue<T> {
    entries: BTreeMap<(i64, u64), T>,
    seq: u64,
}

impl<T> Default for PifoQueue<T> {
    fn default() -> Self {
        PifoQueue { entries: BTreeMap::new(), seq: 0 }
    }
}

impl<T> PifoQueue<T> {
    pub fn push(&mut self, rank: i64, item: T) {
        self.entries.insert((rank, self.seq), item);
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(i64, T)> {
        self.entries.pop_first().map(|((r, _), t)| (r, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Departure<T> {
    pub flow: u64,
    pub rank: i64,
    pub item: T,
    /// Sent ahead of its rank to honour a floor.
    pub forced: bool,
}

/// PIFO over all flows. Each window of `window` departures reserves
/// `floor(frac * window)` departures for every flow backlogged when the
/// window opened; once the outstanding reservations fill the remaining
/// slots, the most-owed flow's oldest packet goes first.
#[derive(Debug, Clone)]
pub struct Scheduler<T> {
    frac: f64,
    window: usize,
    queue: BTreeMap<(i64, u64), (u64, T)>,
    heads: HashMap<u64, BTreeSet<(u64, i64)>>,
    seq: u64,
    slot: usize,
    owed: BTreeMap<u64, usize>,
}

impl<T> Scheduler<T> {
    pub fn new(frac: f64, window: usize) -> Result<Self, DatapathError> {
        if !(0.0..1.0).contains(&frac) || window == 0 {
            return Err(DatapathError::InfeasibleFloor(frac));
        }
        Ok(Scheduler {
            frac,
            window,
            queue: BTreeMap::new(),
            heads: HashMap::new(),
            seq: 0,
            slot: 0,
            owed: BTreeMap::new(),
        })
    }

    fn quota(&self) -> usize {
        (self.frac * self.window as f64).floor() as usize
    }

    pub fn push(&mut self, flow: u64, rank: i64, item: T) -> Result<(), DatapathError> {
        let new_flow = !self.heads.contains_key(&flow);
        if new_flow && (self.heads.len() + 1) as f64 * self.frac > 1.0 {
            return Err(DatapathError::InfeasibleFloor(self.frac * (self.heads.len() + 1) as f64));
        }
        self.queue.insert((rank, self.seq), (flow, item));
        self.heads.entry(flow).or_default().insert((self.seq, rank));
        self.seq += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn backlogged(&self) -> HashSet<u64> {
        self.heads.keys().copied().collect()
    }

    pub fn pop(&mut self) -> Option<Departure<T>> {
        if self.queue.is_empty() {
            return None;
        }
        if self.slot == 0 {
            let q = self.quota();
            self.owed = if q > 0 { self.heads.keys().map(|&f| (f, q)).collect() } else { BTreeMap::new() };
        }
        let remaining = self.window - self.slot;
        let need: usize = self.owed.values().sum();
        let forced = need >= remaining && need > 0;
        let key = if forced {
            let (&flow, _) = self.owed.iter().max_by_key(|(f, n)| (**n, std::cmp::Reverse(**f))).expect("owed flow");
            let &(seq, rank) = self.heads[&flow].first().expect("backlogged");
            (rank, seq)
        } else {
            *self.queue.first_key_value().expect("non-empty").0
        };
        let (flow, item) = self.queue.remove(&key).expect("queued");
        let head = self.heads.get_mut(&flow).expect("flow heads");
        head.remove(&(key.1, key.0));
        if head.is_empty() {
            self.heads.remove(&flow);
            self.owed.remove(&flow);
        } else if let Some(n) = self.owed.get_mut(&flow) {
            *n = n.saturating_sub(1);
            if *n == 0 {
                self.owed.remove(&flow);
            }
        }
        self.slot = (self.slot + 1) % self.window;
        Some(Departure { flow, rank: key.0, item, forced })
    }
}
