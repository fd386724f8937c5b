//! Budget ledger: the count of model realisations a run may consume.
//!
//! One unit is one Direct-method path over the full observation window.
//! Charges are atomic and refuse to cross capacity, so a ledger can be shared
//! by the workers of a single sampler.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Tuning,
    Pilot,
    Main,
}

impl Phase {
    const ALL: [Phase; 3] = [Phase::Tuning, Phase::Pilot, Phase::Main];

    fn index(self) -> usize {
        match self {
            Phase::Tuning => 0,
            Phase::Pilot => 1,
            Phase::Main => 2,
        }
    }
}

#[derive(Debug)]
pub struct BudgetLedger {
    capacity: u64,
    consumed: AtomicU64,
    phase: AtomicU8,
    by_phase: [AtomicU64; 3],
}

/// Serializable view of a ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub capacity: u64,
    pub consumed: u64,
    pub tuning: u64,
    pub pilot: u64,
    pub main: u64,
}

impl BudgetLedger {
    pub fn new(capacity: u64) -> Self {
        Self {
            capacity,
            consumed: AtomicU64::new(0),
            phase: AtomicU8::new(Phase::Main.index() as u8),
            by_phase: Default::default(),
        }
    }

    /// A ledger that never runs out, for oracle studies and diagnostics.
    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn consumed(&self) -> u64 {
        self.consumed.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> u64 {
        self.capacity - self.consumed()
    }

    pub fn phase(&self) -> Phase {
        Phase::ALL[self.phase.load(Ordering::SeqCst) as usize]
    }

    /// Tag subsequent charges with `phase`.
    pub fn set_phase(&self, phase: Phase) {
        self.phase.store(phase.index() as u8, Ordering::SeqCst);
    }

    pub fn consumed_in(&self, phase: Phase) -> u64 {
        self.by_phase[phase.index()].load(Ordering::SeqCst)
    }

    /// Charge `units`, all or nothing.
    pub fn charge(&self, units: u64) -> Result<()> {
        let mut current = self.consumed.load(Ordering::SeqCst);
        loop {
            let remaining = self.capacity - current;
            if units > remaining {
                return Err(Error::BudgetExhausted {
                    requested: units,
                    remaining,
                });
            }
            match self
                .consumed
                .compare_exchange_weak(current, current + units, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => break,
                Err(actual) => current = actual,
            }
        }
        self.by_phase[self.phase().index()].fetch_add(units, Ordering::SeqCst);
        Ok(())
    }

    pub fn can_afford(&self, units: u64) -> bool {
        units <= self.remaining()
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            capacity: self.capacity,
            consumed: self.consumed(),
            tuning: self.consumed_in(Phase::Tuning),
            pilot: self.consumed_in(Phase::Pilot),
            main: self.consumed_in(Phase::Main),
        }
    }
}
