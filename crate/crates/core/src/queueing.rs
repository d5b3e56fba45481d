//! Slotted queue dynamics.
//!
//! Backlog is counted in whole bits so conservation holds exactly. Arrivals
//! are packetized only so that per-packet delay and head-of-line age can be
//! measured; the fluid backlog is the sum over the packet ledger. Packets that
//! arrive in the same slot share a size and are stored as one batch.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

/// Bits are integral throughout the queueing layer.
pub type Bits = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueueError {
    #[error("departure of {departed} bits exceeds backlog of {backlog} bits")]
    Overdrawn { departed: Bits, backlog: Bits },
}

/// Packets of one size that arrived in the same slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketBatch {
    pub arrival_slot: u64,
    pub size_bits: Bits,
    pub count: u64,
}

impl PacketBatch {
    pub fn empty(slot: u64, size_bits: Bits) -> Self {
        Self { arrival_slot: slot, size_bits, count: 0 }
    }

    pub fn bits(&self) -> Bits {
        self.size_bits * self.count
    }
}

/// Draws one slot of Poisson packet arrivals.
///
/// The packet count has mean `lambda * slot_len / packet_size`.
pub fn sample_arrivals<R: Rng + ?Sized>(
    lambda: f64,
    slot_len: f64,
    packet_size: Bits,
    slot: u64,
    rng: &mut R,
) -> PacketBatch {
    debug_assert!(lambda >= 0.0 && slot_len > 0.0 && packet_size > 0);
    let mean = lambda * slot_len / packet_size as f64;
    let count = if mean > 0.0 {
        // Poisson::new only fails for non-finite or non-positive means.
        Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    };
    PacketBatch { arrival_slot: slot, size_bits: packet_size, count }
}

/// Bits served this slot: `min(backlog, capacity)` when eligible, else zero.
pub fn service_amount(backlog: Bits, capacity: Bits, eligible: bool) -> Bits {
    if eligible {
        backlog.min(capacity)
    } else {
        0
    }
}

/// Which queue (if any) is assigned this slot, and whether a switch blackout
/// suppresses service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotEligibility {
    pub assigned: Option<usize>,
    pub blackout: bool,
}

impl SlotEligibility {
    pub fn eligible(&self, queue: usize) -> bool {
        !self.blackout && self.assigned == Some(queue)
    }
}

/// Packets leaving the queue in one slot, all from one arrival slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Departure {
    pub arrival_slot: u64,
    pub delay_slots: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Default)]
pub struct QueueState {
    backlog_bits: Bits,
    ledger: VecDeque<PacketBatch>,
    /// Bits of the head packet already sent.
    head_sent: Bits,
    lambda: f64,
    arrived_total: Bits,
    departed_total: Bits,
}

impl QueueState {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn backlog_bits(&self) -> Bits {
        self.backlog_bits
    }

    pub fn is_empty(&self) -> bool {
        self.backlog_bits == 0
    }

    pub fn arrived_total(&self) -> Bits {
        self.arrived_total
    }

    pub fn departed_total(&self) -> Bits {
        self.departed_total
    }

    pub fn packets(&self) -> u64 {
        self.ledger.iter().map(|b| b.count).sum()
    }

    pub fn ledger(&self) -> impl Iterator<Item = &PacketBatch> {
        self.ledger.iter()
    }

    /// Slots since the head-of-line packet arrived; zero for an empty queue.
    pub fn hol_age(&self, now: u64) -> u64 {
        self.ledger.front().map_or(0, |b| now.saturating_sub(b.arrival_slot))
    }

    /// Applies one slot: `departed` bits leave from the head of the ledger,
    /// then `arrived` is appended. A packet departs when its last bit does;
    /// each completed batch of departures is reported to `on_departure`.
    pub fn advance_slot(
        &mut self,
        departed: Bits,
        arrived: PacketBatch,
        now: u64,
        mut on_departure: impl FnMut(Departure),
    ) -> Result<(), QueueError> {
        if departed > self.backlog_bits {
            return Err(QueueError::Overdrawn { departed, backlog: self.backlog_bits });
        }
        let mut remaining = departed;
        while remaining > 0 {
            let head = self.ledger.front_mut().expect("ledger out of sync with backlog");
            let head_left = head.size_bits - self.head_sent;
            if remaining < head_left {
                self.head_sent += remaining;
                remaining = 0;
            } else {
                // Head packet completes; then as many whole packets as fit.
                remaining -= head_left;
                self.head_sent = 0;
                let whole = (remaining / head.size_bits).min(head.count - 1);
                remaining -= whole * head.size_bits;
                let done = 1 + whole;
                let arrival_slot = head.arrival_slot;
                head.count -= done;
                if head.count == 0 {
                    self.ledger.pop_front();
                }
                on_departure(Departure { arrival_slot, delay_slots: now.saturating_sub(arrival_slot), count: done });
            }
        }
        self.backlog_bits -= departed;
        self.departed_total += departed;

        if arrived.count > 0 {
            debug_assert!(self.ledger.back().is_none_or(|b| b.arrival_slot <= arrived.arrival_slot));
            self.backlog_bits += arrived.bits();
            self.arrived_total += arrived.bits();
            self.ledger.push_back(arrived);
        }
        Ok(())
    }

    /// Sum of the ledger; equals `backlog_bits` at all times.
    pub fn ledger_bits(&self) -> Bits {
        self.ledger.iter().map(PacketBatch::bits).sum::<Bits>() - self.head_sent
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(slot: u64, size: Bits, count: u64) -> PacketBatch {
        PacketBatch { arrival_slot: slot, size_bits: size, count }
    }

    #[test]
    fn zero_rate_never_arrives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..1000 {
            assert_eq!(sample_arrivals(0.0, 0.01, 12_000, s, &mut rng).count, 0);
        }
    }

    #[test]
    fn arrival_count_mean_matches_poisson() {
        // mean = 1.2e6 * 0.01 / 12000 = 1; sd of the sample mean = 1/sqrt(n)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let total: u64 = (0..n).map(|s| sample_arrivals(1.2e6, 0.01, 12_000, s, &mut rng).count).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn service_amount_cases() {
        assert_eq!(service_amount(5, 3, true), 3);
        assert_eq!(service_amount(2, 5, true), 2);
        assert_eq!(service_amount(7, 3, false), 0);
    }

    #[test]
    fn eligibility_blocks_blackout() {
        let e = SlotEligibility { assigned: Some(1), blackout: true };
        assert!(!e.eligible(1));
        let e = SlotEligibility { assigned: Some(1), blackout: false };
        assert!(e.eligible(1) && !e.eligible(0));
    }

    #[test]
    fn advance_arithmetic() {
        let mut q = QueueState::new(0.0);
        q.advance_slot(0, batch(0, 1, 5), 0, |_| {}).unwrap();
        q.advance_slot(3, batch(1, 1, 2), 1, |_| {}).unwrap();
        assert_eq!(q.backlog_bits(), 4);

        let mut idle = QueueState::new(0.0);
        idle.advance_slot(0, PacketBatch::empty(0, 1), 0, |_| {}).unwrap();
        assert_eq!(idle.backlog_bits(), 0);
        assert_eq!(idle.packets(), 0);
    }

    #[test]
    fn ledger_partial_consumption_trace() {
        let mut q = QueueState::new(0.0);
        q.advance_slot(0, batch(1, 4, 1), 1, |_| {}).unwrap();
        q.advance_slot(0, batch(2, 4, 1), 2, |_| {}).unwrap();
        let mut deps = Vec::new();
        q.advance_slot(6, PacketBatch::empty(9, 4), 9, |d| deps.push(d)).unwrap();
        assert_eq!(deps, vec![Departure { arrival_slot: 1, delay_slots: 8, count: 1 }]);
        assert_eq!(q.backlog_bits(), 2);
        assert_eq!(q.ledger_bits(), 2);
        assert_eq!(q.packets(), 1);
    }

    #[test]
    fn overdraw_is_rejected() {
        let mut q = QueueState::new(0.0);
        q.advance_slot(0, batch(0, 4, 1), 0, |_| {}).unwrap();
        assert_eq!(
            q.advance_slot(5, PacketBatch::empty(1, 4), 1, |_| {}),
            Err(QueueError::Overdrawn { departed: 5, backlog: 4 })
        );
    }

    #[test]
    fn hol_age_tracks_head() {
        let mut q = QueueState::new(0.0);
        assert_eq!(q.hol_age(10), 0);
        q.advance_slot(0, batch(3, 10, 1), 3, |_| {}).unwrap();
        q.advance_slot(0, batch(6, 10, 1), 6, |_| {}).unwrap();
        assert_eq!(q.hol_age(10), 7);
        q.advance_slot(10, PacketBatch::empty(10, 10), 10, |_| {}).unwrap();
        assert_eq!(q.hol_age(10), 4);
    }

    proptest! {
        #[test]
        fn conservation_and_single_departure(
            steps in prop::collection::vec((0u64..6, 0u64..40), 1..200),
            size in 1u64..9,
        ) {
            let mut q = QueueState::new(0.0);
            let mut departed_packets = 0u64;
            let mut arrived_packets = 0u64;
            for (t, (count, cap)) in steps.iter().enumerate() {
                let t = t as u64;
                let before = q.backlog_bits();
                let d = service_amount(before, *cap, true);
                q.advance_slot(d, batch(t, size, *count), t, |dep| {
                    assert!(dep.arrival_slot <= t);
                    departed_packets += dep.count;
                }).unwrap();
                arrived_packets += count;
                prop_assert_eq!(q.backlog_bits(), before - d + count * size);
                prop_assert_eq!(q.ledger_bits(), q.backlog_bits());
            }
            prop_assert_eq!(q.arrived_total(), q.departed_total() + q.backlog_bits());
            // packets still queued, counting a partially sent head as queued
            prop_assert_eq!(arrived_packets, departed_packets + q.packets());
            let slots: Vec<u64> = q.ledger().map(|b| b.arrival_slot).collect();
            prop_assert!(slots.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn blackout_backlog_nondecreasing(counts in prop::collection::vec(0u64..5, 1..100)) {
            let mut q = QueueState::new(0.0);
            for (t, c) in counts.iter().enumerate() {
                let before = q.backlog_bits();
                let d = service_amount(before, 1_000, false);
                q.advance_slot(d, batch(t as u64, 3, *c), t as u64, |_| {}).unwrap();
                prop_assert!(q.backlog_bits() >= before);
            }
        }
    }
}
