//! Discrete-event core: an integer-millisecond clock, an `(at, id)` ordered
//! event queue and a seeded random stream.
//!
//! Everything else in the crate runs on top of [`Simulator`]. Events with the
//! same timestamp fire in creation order, so two runs fed the same inputs
//! produce the same firing sequence.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Simulated time in milliseconds.
pub type SimTime = u64;

pub const MS_PER_SEC: SimTime = 1_000;

/// Converts whole seconds to simulated milliseconds.
pub const fn secs(s: u64) -> SimTime {
    s * MS_PER_SEC
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub id: EventId,
    pub at: SimTime,
    pub kind: K,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot schedule at {at} ms, clock is already at {now} ms")]
    PastTime { at: SimTime, now: SimTime },
}

/// Monotone simulated clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: SimTime,
}

impl SimClock {
    pub fn now(&self) -> SimTime {
        self.now
    }

    fn advance_to(&mut self, t: SimTime) {
        debug_assert!(t >= self.now, "clock moved backwards");
        self.now = t;
    }
}

/// Event queue plus clock. `K` is the payload carried by each event.
#[derive(Debug, Clone)]
pub struct Simulator<K> {
    clock: SimClock,
    next_id: u64,
    queue: BTreeMap<(SimTime, u64), K>,
    pending: HashMap<u64, SimTime>,
    fired: u64,
}

impl<K> Default for Simulator<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Simulator<K> {
    pub fn new() -> Self {
        Self {
            clock: SimClock::default(),
            next_id: 1,
            queue: BTreeMap::new(),
            pending: HashMap::new(),
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock.now()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    /// Number of events that have fired so far.
    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Timestamp of the next pending event, if any.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.keys().next().map(|&(at, _)| at)
    }

    pub fn schedule(&mut self, at: SimTime, kind: K) -> Result<EventId, SimError> {
        let now = self.now();
        if at < now {
            return Err(SimError::PastTime { at, now });
        }
        let id = self.next_id;
        self.next_id += 1;
        self.queue.insert((at, id), kind);
        self.pending.insert(id, at);
        Ok(EventId(id))
    }

    /// Schedules `delay` ms after the current time. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> EventId {
        let at = self.now().saturating_add(delay);
        self.schedule(at, kind)
            .expect("relative schedule is never in the past")
    }

    /// Returns true iff the event was pending. A cancelled event never fires.
    pub fn cancel(&mut self, id: EventId) -> bool {
        match self.pending.remove(&id.0) {
            Some(at) => self.queue.remove(&(at, id.0)).is_some(),
            None => false,
        }
    }

    /// Pops the next event if it is due at or before `t_end`, advancing the
    /// clock to its timestamp.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<Event<K>> {
        let (&(at, id), _) = self.queue.iter().next()?;
        if at > t_end {
            return None;
        }
        let kind = self.queue.remove(&(at, id))?;
        self.pending.remove(&id);
        self.clock.advance_to(at);
        self.fired += 1;
        Some(Event {
            id: EventId(id),
            at,
            kind,
        })
    }

    /// Fires every event with `at <= t_end` in `(at, id)` order, then leaves
    /// the clock at `t_end`. Handlers may schedule or cancel further events,
    /// including ones due before `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<usize, SimError>
    where
        F: FnMut(&mut Self, Event<K>),
    {
        let now = self.now();
        if t_end < now {
            return Err(SimError::PastTime { at: t_end, now });
        }
        let mut count = 0;
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev);
            count += 1;
        }
        self.clock.advance_to(t_end);
        Ok(count)
    }
}

/// Seeded, counted random stream. Only stochastic models draw from it.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of draws made so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.counter += 1;
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `[lo, hi)`.
    pub fn below(&mut self, lo: u64, hi: u64) -> u64 {
        self.counter += 1;
        self.rng.gen_range(lo..hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}
