use alloc::collections::BinaryHeap;
use core::cmp::Ordering;

/// What an event does when it fires. Indices refer to the engine's tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    RequestArrival(usize),
    /// A fleet vehicle finished one edge segment of its leg.
    SavEdgeExit(usize),
    SavArrivalAtStop(usize),
    DwellEnd(usize),
    BackgroundInject(usize),
    BackgroundEdgeExit(usize),
    HorizonEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Seconds.
    pub time: f64,
    /// Scheduling order; breaks ties between equal times.
    pub sequence: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Future events in (time, sequence) order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_sequence: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) -> u64 {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event {
            time,
            sequence,
            kind,
        });
        sequence
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_times_follow_scheduling_order() {
        let mut q = EventQueue::new();
        q.schedule(5.0, EventKind::DwellEnd(1));
        q.schedule(5.0, EventKind::DwellEnd(0));
        q.schedule(1.0, EventKind::HorizonEnd);
        assert_eq!(q.pop().unwrap().kind, EventKind::HorizonEnd);
        assert_eq!(q.pop().unwrap().kind, EventKind::DwellEnd(1));
        assert_eq!(q.pop().unwrap().kind, EventKind::DwellEnd(0));
        assert!(q.pop().is_none());
    }

    proptest! {
        #[test]
        fn dequeue_is_time_monotone(times in proptest::collection::vec(0.0f64..1e5, 1..200)) {
            let mut q = EventQueue::new();
            for (i, &t) in times.iter().enumerate() {
                q.schedule(t, EventKind::RequestArrival(i));
            }
            let mut last: Option<Event> = None;
            while let Some(e) = q.pop() {
                if let Some(prev) = last {
                    prop_assert!(prev.time < e.time || (prev.time == e.time && prev.sequence < e.sequence));
                }
                last = Some(e);
            }
        }
    }
}
