use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::time::SimTime;
use crate::{Error, Result};

/// Coarse classification of an event, used for tracing and counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival,
    ServiceStart,
    ServiceComplete,
    Timeout,
    MessageDelivery,
    ScaleActionEffective,
    MetricTick,
}

/// An event popped from the scheduler together with its ordering key.
#[derive(Clone, Debug)]
pub struct Scheduled<E> {
    pub time: SimTime,
    pub sequence: u64,
    pub event: E,
}

struct Entry<E>(Scheduled<E>);

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, sequence) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.time.total_cmp(&self.0.time).then_with(|| other.0.sequence.cmp(&self.0.sequence))
    }
}

/// Future-event list ordered by `(time, sequence)`. The sequence counter is
/// global and monotone, so equal-time events run in scheduling order.
pub struct Scheduler<E> {
    now: SimTime,
    next_sequence: u64,
    heap: BinaryHeap<Entry<E>>,
    executed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler { now: SimTime::ZERO, next_sequence: 0, heap: BinaryHeap::new(), executed: 0 }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.time)
    }

    /// Queue `event` at absolute time `time`. Returns the assigned sequence number.
    pub fn schedule(&mut self, time: SimTime, event: E) -> Result<u64> {
        if time < self.now {
            return Err(Error::ScheduleInPast { time: time.as_secs(), now: self.now.as_secs() });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Entry(Scheduled { time, sequence, event }));
        Ok(sequence)
    }

    pub fn schedule_in(&mut self, delay: f64, event: E) -> Result<u64> {
        if !(delay >= 0.0) {
            return Err(Error::ScheduleInPast { time: self.now.as_secs() + delay, now: self.now.as_secs() });
        }
        self.schedule(self.now + delay, event)
    }

    /// Pop the next event if it is due at or before `t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Scheduled<E>> {
        match self.heap.peek() {
            Some(e) if e.0.time <= t_end => {}
            _ => return None,
        }
        let Entry(next) = self.heap.pop()?;
        debug_assert!(next.time >= self.now);
        self.now = next.time;
        self.executed += 1;
        Some(next)
    }

    pub fn pop(&mut self) -> Option<Scheduled<E>> {
        self.pop_until(SimTime::new(f64::MAX))
    }

    /// Move the clock forward without executing anything.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

/// Anything that reacts to events from a [`Scheduler`].
pub trait Model {
    type Event;

    fn handle(&mut self, event: Scheduled<Self::Event>, sched: &mut Scheduler<Self::Event>) -> Result<()>;
}

/// Execute events in order until the queue drains or the next event lies past
/// `t_end`. The clock finishes at `max(t_end, now)` when the queue still holds
/// future work, or at `t_end` when it has drained.
pub fn run_until<M: Model>(model: &mut M, sched: &mut Scheduler<M::Event>, t_end: SimTime) -> Result<()> {
    while let Some(ev) = sched.pop_until(t_end) {
        model.handle(ev, sched)?;
    }
    sched.advance_to(t_end);
    Ok(())
}
