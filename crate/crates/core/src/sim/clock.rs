use std::cmp::Ordering;
use std::collections::BinaryHeap;

struct Pending<E> {
    due: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Pending<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Pending<E> {}

impl<E> PartialOrd for Pending<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Pending<E> {
    // reversed: BinaryHeap is a max-heap and we want the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .due
            .total_cmp(&self.due)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Virtual time in seconds plus a queue of pending events.
///
/// Events fire in due-time order; events due at the same instant fire in
/// the order they were scheduled. Time never moves backward.
pub struct VirtualClock<E> {
    now: f64,
    next_seq: u64,
    queue: BinaryHeap<Pending<E>>,
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl<E> VirtualClock<E> {
    pub fn new(start: f64) -> Self {
        VirtualClock {
            now: start,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Schedules `event` at `due`. Events in the past are clamped to now.
    pub fn schedule(&mut self, due: f64, event: E) {
        let due = if due < self.now { self.now } else { due };
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Pending { due, seq, event });
    }

    pub fn peek_due(&self) -> Option<f64> {
        self.queue.peek().map(|p| p.due)
    }

    /// Pops the next event due at or before `until`, advancing time to it.
    pub fn pop_until(&mut self, until: f64) -> Option<(f64, E)> {
        match self.queue.peek() {
            Some(p) if p.due <= until => {
                let p = self.queue.pop().expect("peeked");
                self.now = p.due;
                Some((p.due, p.event))
            }
            _ => None,
        }
    }

    /// Moves time forward to `t` without firing anything.
    pub fn advance_to(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_in_due_order_with_fifo_ties() {
        let mut clock = VirtualClock::new(0.0);
        clock.schedule(5.0, "c");
        clock.schedule(1.0, "a");
        clock.schedule(5.0, "d");
        clock.schedule(2.0, "b");
        let mut fired = Vec::new();
        while let Some((_, e)) = clock.pop_until(10.0) {
            fired.push(e);
        }
        assert_eq!(fired, ["a", "b", "c", "d"]);
        assert_eq!(clock.now(), 5.0);
    }

    #[test]
    fn never_moves_backward() {
        let mut clock = VirtualClock::new(10.0);
        clock.advance_to(3.0);
        assert_eq!(clock.now(), 10.0);
        clock.schedule(1.0, ());
        assert_eq!(clock.pop_until(10.0).map(|(t, _)| t), Some(10.0));
    }

    #[test]
    fn leaves_future_events_queued() {
        let mut clock = VirtualClock::new(0.0);
        clock.schedule(7.0, 1);
        assert!(clock.pop_until(6.9).is_none());
        assert_eq!(clock.pending(), 1);
    }
}
