//! Exact path simulation by Gillespie's Direct method.
//!
//! Hazards are evaluated at the pre-jump state for both the waiting time and
//! the reaction choice. Because the process is memoryless, simulating over
//! `[a, b]` and then `[b, c]` from the state at `b` is exact, which is what
//! the streaming entry points and the particle filter rely on.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::BudgetLedger;
use crate::model::network::{RateParameters, ReactionNetwork, SpeciesState};

static REALISATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of realisations started in this process, counted at the simulator
/// rather than at the ledger. Tests compare the two.
pub fn realisation_count() -> u64 {
    REALISATIONS.load(Ordering::SeqCst)
}

pub(crate) fn count_realisations(n: u64) {
    REALISATIONS.fetch_add(n, Ordering::SeqCst);
}

/// Guards against runaway paths. A path that crosses either limit is
/// reported as exploded; samplers treat it as incompatible with the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationLimits {
    pub max_events: u64,
    pub max_count: i64,
}

impl Default for SimulationLimits {
    fn default() -> Self {
        Self {
            max_events: u64::MAX,
            max_count: 1 << 53,
        }
    }
}

/// Raised when a path crosses [`SimulationLimits`] or its hazards overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exploded;

impl From<Exploded> for Error {
    fn from(_: Exploded) -> Self {
        Error::HazardOverflow("path exceeded simulation limits".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub reaction: usize,
}

/// A full event-driven path. The state is piecewise constant and right
/// continuous between events.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: SpeciesState,
    pub events: Vec<Event>,
    pub end_time: f64,
    final_state: SpeciesState,
    net: ReactionNetwork,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpeciesState {
        &self.final_state
    }

    /// State at time `t`, right-continuous: an event at exactly `t` is included.
    pub fn state_at(&self, t: f64) -> Result<SpeciesState> {
        if !(0.0..=self.end_time).contains(&t) {
            return Err(Error::TimeOutOfRange { t, end: self.end_time });
        }
        let upto = self.events.partition_point(|e| e.time <= t);
        let mut x = self.initial_state.0.clone();
        for e in &self.events[..upto] {
            self.net.apply(&mut x, e.reaction);
        }
        Ok(SpeciesState(x))
    }

    /// States at sorted times, in one pass over the events.
    pub fn states_at(&self, times: &[f64]) -> Result<Vec<SpeciesState>> {
        let mut out = Vec::with_capacity(times.len());
        let mut x = self.initial_state.0.clone();
        let mut next = 0;
        let mut prev = f64::NEG_INFINITY;
        for &t in times {
            if !(0.0..=self.end_time).contains(&t) {
                return Err(Error::TimeOutOfRange { t, end: self.end_time });
            }
            if t < prev {
                return Err(Error::Invalid("observation times must be sorted".into()));
            }
            prev = t;
            while next < self.events.len() && self.events[next].time <= t {
                self.net.apply(&mut x, self.events[next].reaction);
                next += 1;
            }
            out.push(SpeciesState(x.clone()));
        }
        Ok(out)
    }
}

/// Reusable hazard buffer for the hot loop.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    hazards: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(net: &ReactionNetwork) -> Self {
        Self {
            hazards: vec![0.0; net.num_reactions()],
        }
    }
}

/// Picks reaction index with probability h_j / h0.
#[inline]
fn choose_reaction<R: Rng + ?Sized>(hazards: &[f64], h0: f64, rng: &mut R) -> usize {
    let target = rng.random::<f64>() * h0;
    let mut acc = 0.0;
    let mut last_enabled = 0;
    for (j, &h) in hazards.iter().enumerate() {
        if h > 0.0 {
            acc += h;
            last_enabled = j;
            if target < acc {
                return j;
            }
        }
    }
    // rounding left target at or above the accumulated sum
    last_enabled
}

/// Advances `x` from `t_from` to `t_to`, calling `on_event` for every firing.
/// Returns the number of events.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance<R, F>(
    net: &ReactionNetwork,
    theta: &[f64],
    x: &mut [i64],
    t_from: f64,
    t_to: f64,
    rng: &mut R,
    limits: &SimulationLimits,
    scratch: &mut Scratch,
    mut on_event: F,
) -> Result<u64, Exploded>
where
    R: Rng + ?Sized,
    F: FnMut(f64, usize),
{
    let mut t = t_from;
    let mut events = 0u64;
    loop {
        let h0 = net.hazards_into(x, theta, &mut scratch.hazards);
        if !h0.is_finite() {
            return Err(Exploded);
        }
        if h0 <= 0.0 {
            return Ok(events);
        }
        let dt: f64 = Exp1.sample(rng);
        t += dt / h0;
        if t > t_to {
            return Ok(events);
        }
        let j = choose_reaction(&scratch.hazards, h0, rng);
        net.apply(x, j);
        debug_assert!(x.iter().all(|&c| c >= 0), "negative count after reaction {j}");
        events += 1;
        if events > limits.max_events || x.iter().any(|&c| c > limits.max_count) {
            return Err(Exploded);
        }
        on_event(t, j);
    }
}

fn check_start(net: &ReactionNetwork, theta: &RateParameters, x0: &SpeciesState, t_end: f64) -> Result<()> {
    net.check_dims(x0.counts(), theta)?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Invalid(format!("end time {t_end} must be positive and finite")));
    }
    Ok(())
}

/// Simulates one exact path on `[0, t_end]`, retaining every event.
/// Charges one budget unit.
pub fn simulate_direct<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    x0: &SpeciesState,
    t_end: f64,
    rng: &mut R,
    ledger: &BudgetLedger,
) -> Result<Trajectory> {
    simulate_direct_with_limits(net, theta, x0, t_end, rng, ledger, &SimulationLimits::default())
}

pub fn simulate_direct_with_limits<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    x0: &SpeciesState,
    t_end: f64,
    rng: &mut R,
    ledger: &BudgetLedger,
    limits: &SimulationLimits,
) -> Result<Trajectory> {
    check_start(net, theta, x0, t_end)?;
    ledger.charge(1)?;
    count_realisations(1);
    let mut x = x0.0.clone();
    let mut events = Vec::new();
    let mut scratch = Scratch::new(net);
    advance(
        net,
        theta.values(),
        &mut x,
        0.0,
        t_end,
        rng,
        limits,
        &mut scratch,
        |time, reaction| events.push(Event { time, reaction }),
    )?;
    Ok(Trajectory {
        initial_state: x0.clone(),
        events,
        end_time: t_end,
        final_state: SpeciesState(x),
        net: net.clone(),
    })
}

/// Streaming simulation: keeps only the states at the sorted `times`
/// (which may start at 0). Charges one budget unit.
pub fn simulate_at_times<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    x0: &SpeciesState,
    times: &[f64],
    rng: &mut R,
    ledger: &BudgetLedger,
    limits: &SimulationLimits,
) -> Result<Vec<SpeciesState>> {
    let t_end = times.last().copied().unwrap_or(0.0);
    net.check_dims(x0.counts(), theta)?;
    if times.iter().any(|t| *t < 0.0 || !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(
            "times must be finite, nonnegative and strictly increasing".into(),
        ));
    }
    ledger.charge(1)?;
    count_realisations(1);
    let mut scratch = Scratch::new(net);
    let mut x = x0.0.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &next in times {
        if next > t {
            advance(
                net,
                theta.values(),
                &mut x,
                t,
                next,
                rng,
                limits,
                &mut scratch,
                |_, _| {},
            )?;
            t = next;
        }
        out.push(SpeciesState(x.clone()));
    }
    debug_assert!(t == t_end);
    Ok(out)
}
