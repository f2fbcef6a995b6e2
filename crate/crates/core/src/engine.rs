//! Event superposition and trajectory advancement.
//!
//! One clock drives everything: the next event is the minimum of the thinned
//! flip arrival inside the current bounding segment, the deterministic
//! sticking time, and one exponential arrival whose rate is the sum of the
//! unstick, hyperparameter, swap, birth-death, and sampling rates; the
//! exponential's type is then chosen with probability proportional to its
//! rate. Positions advance lazily from an anchor (the state's `clock`), and
//! the anchor only moves at events that change velocities or structure, so a
//! stored event skeleton replays to bit-identical snapshots.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jumps::{
    self, AdaptiveRwm, BalancingFunction, BdAttempt, JumpDecision, JumpRates, SwapStyle,
};
use crate::model::{flip_rate, init_state, Component, Dataset, ModelState, PriorConfig};
use crate::zigzag::{self, AdaptState, BoundKind, BoundSegment, UnstickConvention};

/// Run-level settings for the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Trajectory length per chain, in sampler time units.
    pub total_time: f64,
    /// Rate of the exponential snapshot clock.
    pub sample_rate: f64,
    pub rates: JumpRates,
    /// When set, overrides `rates` with an even three-way split across
    /// birth-death, swap, and hyperparameter events.
    pub combined_jump_rate: Option<f64>,
    /// Constant offset added to every thinning bound.
    pub lambda0: f64,
    pub seed: u64,
    pub chains: usize,
    /// Record flip events too, making the skeleton exactly replayable.
    pub emit_skeleton: bool,
    pub balancing: BalancingFunction,
    pub swap_style: SwapStyle,
    pub unstick_convention: UnstickConvention,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_time: 10_000.0,
            sample_rate: 4.0,
            rates: JumpRates::default(),
            combined_jump_rate: None,
            lambda0: 0.1,
            seed: 1,
            chains: 2,
            emit_skeleton: false,
            balancing: BalancingFunction::default(),
            swap_style: SwapStyle::default(),
            unstick_convention: UnstickConvention::default(),
        }
    }
}

impl SamplerConfig {
    pub fn effective_rates(&self) -> JumpRates {
        match self.combined_jump_rate {
            Some(r) => JumpRates::combined(r),
            None => self.rates.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(Error::Config(format!(
                "total_time must be positive, got {}",
                self.total_time
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(Error::Config(format!(
                "lambda0 must be >= 0, got {}",
                self.lambda0
            )));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be >= 1".into()));
        }
        self.effective_rates().validate()
    }
}

/// State-changing events, with enough payload to replay them exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Flip {
        coord: usize,
    },
    Stick {
        hazard: usize,
        cov: usize,
    },
    Unstick {
        hazard: usize,
        cov: usize,
        velocity: f64,
    },
    Hyper {
        omega: f64,
        z1: f64,
        z2: f64,
    },
    Birth {
        component: Component,
    },
    Death {
        hazard: usize,
    },
    Swap {
        hazard: usize,
        component: Component,
    },
}

impl EventKind {
    /// Structural events change `(K, D, gamma)` or the hyperparameters and
    /// are always recorded; flips only when a full skeleton is requested.
    pub fn is_structural(&self) -> bool {
        !matches!(self, EventKind::Flip { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub clock: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Ordered event record plus fixed-rate snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSkeleton {
    pub initial: ModelState,
    pub total_time: f64,
    pub events: Vec<Event>,
    pub samples: Vec<ModelState>,
}

/// Raw counters accumulated during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub flip_proposals: u64,
    pub flips_accepted: u64,
    pub exceedances: u64,
    /// Exceedance counts split by the kind of bound that undershot.
    pub exceed_linear: u64,
    pub exceed_constant: u64,
    pub exceed_brent: u64,
    /// Largest observed `rate / (bound + offset)` ratio.
    pub max_exceed_ratio: f64,
    pub sticks: u64,
    pub unsticks: u64,
    pub hyper_events: u64,
    pub birth_attempts: u64,
    pub birth_accepts: u64,
    pub death_attempts: u64,
    pub death_accepts: u64,
    pub swap_attempts: u64,
    pub swap_accepts: u64,
    pub samples_emitted: u64,
    pub segments_total: u64,
    pub segments_linear: u64,
    pub segments_constant: u64,
    pub segments_brent: u64,
    pub brent_fallbacks: u64,
    pub bound_evaluations: u64,
    pub sum_segment_length: f64,
    /// Sparse `(clock, t_star)` trace of the adaptive interval length.
    pub t_star_trace: Vec<(f64, f64)>,
    pub rwm_attempts: u64,
    pub rwm_accepts: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Acceptance rates and bound health in reporting form. Rates for move types
/// that were never attempted are `null`, not zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub birth_acceptance: Option<f64>,
    pub death_acceptance: Option<f64>,
    pub swap_acceptance: Option<f64>,
    pub flip_acceptance: Option<f64>,
    pub rwm_sigma_acceptance: Option<f64>,
    pub exceedances: u64,
    pub exceedance_fraction: Option<f64>,
    pub events: BTreeMap<String, u64>,
    pub segments_total: u64,
    pub linear_fraction: Option<f64>,
    pub constant_fraction: Option<f64>,
    pub brent_fraction: Option<f64>,
    pub brent_fallbacks: u64,
    pub mean_segment_length: Option<f64>,
    pub t_star_final: Option<f64>,
}

impl Diagnostics {
    pub fn report(&self) -> DiagnosticsReport {
        let mut events = BTreeMap::new();
        events.insert("flips".into(), self.flips_accepted);
        events.insert("sticks".into(), self.sticks);
        events.insert("unsticks".into(), self.unsticks);
        events.insert("hyper".into(), self.hyper_events);
        events.insert("births".into(), self.birth_accepts);
        events.insert("deaths".into(), self.death_accepts);
        events.insert("swaps".into(), self.swap_accepts);
        events.insert("samples".into(), self.samples_emitted);
        DiagnosticsReport {
            birth_acceptance: ratio(self.birth_accepts, self.birth_attempts),
            death_acceptance: ratio(self.death_accepts, self.death_attempts),
            swap_acceptance: ratio(self.swap_accepts, self.swap_attempts),
            flip_acceptance: ratio(self.flips_accepted, self.flip_proposals),
            rwm_sigma_acceptance: ratio(self.rwm_accepts, self.rwm_attempts),
            exceedances: self.exceedances,
            exceedance_fraction: ratio(self.exceedances, self.flip_proposals),
            events,
            segments_total: self.segments_total,
            linear_fraction: ratio(self.segments_linear, self.segments_total),
            constant_fraction: ratio(self.segments_constant, self.segments_total),
            brent_fraction: ratio(self.segments_brent, self.segments_total),
            brent_fallbacks: self.brent_fallbacks,
            mean_segment_length: (self.segments_total > 0)
                .then(|| self.sum_segment_length / self.segments_total as f64),
            t_star_final: self.t_star_trace.last().map(|&(_, t)| t),
        }
    }

    fn merge(&mut self, other: &Diagnostics) {
        self.flip_proposals += other.flip_proposals;
        self.flips_accepted += other.flips_accepted;
        self.exceedances += other.exceedances;
        self.exceed_linear += other.exceed_linear;
        self.exceed_constant += other.exceed_constant;
        self.exceed_brent += other.exceed_brent;
        self.max_exceed_ratio = self.max_exceed_ratio.max(other.max_exceed_ratio);
        self.sticks += other.sticks;
        self.unsticks += other.unsticks;
        self.hyper_events += other.hyper_events;
        self.birth_attempts += other.birth_attempts;
        self.birth_accepts += other.birth_accepts;
        self.death_attempts += other.death_attempts;
        self.death_accepts += other.death_accepts;
        self.swap_attempts += other.swap_attempts;
        self.swap_accepts += other.swap_accepts;
        self.samples_emitted += other.samples_emitted;
        self.segments_total += other.segments_total;
        self.segments_linear += other.segments_linear;
        self.segments_constant += other.segments_constant;
        self.segments_brent += other.segments_brent;
        self.brent_fallbacks += other.brent_fallbacks;
        self.bound_evaluations += other.bound_evaluations;
        self.sum_segment_length += other.sum_segment_length;
        self.rwm_attempts += other.rwm_attempts;
        self.rwm_accepts += other.rwm_accepts;
    }
}

/// Combine per-chain diagnostics into pooled counters.
pub fn pooled_diagnostics(chains: &[ChainRun]) -> Diagnostics {
    let mut total = Diagnostics::default();
    for c in chains {
        total.merge(&c.diagnostics);
    }
    total
}

/// Output of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRun {
    pub chain: usize,
    pub skeleton: SampleSkeleton,
    pub diagnostics: Diagnostics,
}

struct Chain<'a> {
    data: &'a Dataset,
    prior: &'a PriorConfig,
    cfg: &'a SamplerConfig,
    rates: JumpRates,
    state: ModelState,
    clock: f64,
    seg: Option<BoundSegment>,
    adapt: AdaptState,
    rwm: AdaptiveRwm,
    rng: StdRng,
    diag: Diagnostics,
    events: Vec<Event>,
    samples: Vec<ModelState>,
    per_coord: Vec<f64>,
}

enum Candidate {
    SegmentEnd,
    FlipProposal,
    Stick { hazard: usize, cov: usize },
    Exponential,
}

#[derive(Clone, Copy)]
enum ExpEvent {
    Unstick,
    Hyper,
    Swap,
    BirthDeath,
    Sample,
}

impl<'a> Chain<'a> {
    /// Move the anchor: advance every coordinate to absolute time `t`.
    fn advance_anchor(&mut self, t: f64) {
        let dt = t - self.state.clock;
        self.state.advance(dt);
        self.state.clock = t;
    }

    fn record(&mut self, clock: f64, kind: EventKind) {
        if kind.is_structural() || self.cfg.emit_skeleton {
            self.events.push(Event { clock, kind });
        }
    }

    fn build_segment(&mut self) -> Result<()> {
        let base = self.clock - self.state.clock;
        let (state, data, prior) = (&self.state, self.data, self.prior);
        let per_coord = &mut self.per_coord;
        let (seg, info) = zigzag::build_bound(
            |s| flip_rate(state, data, prior, base + s, per_coord),
            self.clock,
            self.cfg.lambda0,
            &self.adapt,
        )?;
        self.diag.bound_evaluations += u64::from(info.evaluations);
        self.diag.segments_total += 1;
        self.diag.sum_segment_length += seg.length;
        match seg.kind {
            BoundKind::Linear => self.diag.segments_linear += 1,
            BoundKind::Constant => self.diag.segments_constant += 1,
            BoundKind::Brent => self.diag.segments_brent += 1,
        }
        if info.brent_fallback {
            self.diag.brent_fallbacks += 1;
        }
        if self.diag.segments_total % 256 == 1 {
            self.diag
                .t_star_trace
                .push((self.clock, self.adapt.t_star()));
        }
        self.seg = Some(seg);
        Ok(())
    }

    /// One event-loop iteration. Returns false once the time budget is used.
    fn step(&mut self) -> Result<bool> {
        if self.seg.is_none() {
            self.build_segment()?;
        }
        let seg = self.seg.unwrap();

        let tau_flip = seg.sample_arrival(self.clock, &mut self.rng);
        let stick =
            zigzag::next_sticking_time(&self.state).map(|(k, j, dt)| (k, j, self.state.clock + dt));

        let unstick_per = zigzag::unstick_rate(
            self.state.omega,
            self.state.sigma_beta(),
            self.cfg.unstick_convention,
        )?;
        let n_stuck = self.state.n_stuck() as f64;
        let r_unstick = unstick_per * n_stuck;
        let hyper_rate =
            if self.prior.fixed_omega.is_some() && self.prior.fixed_sigma_beta.is_some() {
                0.0
            } else {
                self.rates.hyper
            };
        let r_exp = r_unstick
            + hyper_rate
            + self.rates.swap
            + self.rates.birth_death
            + self.cfg.sample_rate;
        let tau_exp = if r_exp > 0.0 {
            Some(self.clock + Exp::new(r_exp).unwrap().sample(&mut self.rng))
        } else {
            None
        };

        let mut t_next = seg.end();
        let mut which = Candidate::SegmentEnd;
        if let Some(t) = tau_flip {
            if t < t_next {
                t_next = t;
                which = Candidate::FlipProposal;
            }
        }
        if let Some((k, j, t)) = stick {
            if t < t_next {
                t_next = t;
                which = Candidate::Stick { hazard: k, cov: j };
            }
        }
        if let Some(t) = tau_exp {
            if t < t_next {
                t_next = t;
                which = Candidate::Exponential;
            }
        }
        if t_next >= self.cfg.total_time {
            return Ok(false);
        }

        match which {
            Candidate::SegmentEnd => {
                self.clock = t_next;
                self.seg = None;
            }
            Candidate::FlipProposal => {
                self.diag.flip_proposals += 1;
                self.diag.bound_evaluations += 1;
                let offset = t_next - self.state.clock;
                let outcome = zigzag::thin_and_flip(
                    &self.state,
                    self.data,
                    self.prior,
                    &seg,
                    t_next,
                    offset,
                    &mut self.per_coord,
                    &mut self.rng,
                )?;
                if outcome.exceeded {
                    self.diag.exceedances += 1;
                    match seg.kind {
                        BoundKind::Linear => self.diag.exceed_linear += 1,
                        BoundKind::Constant => self.diag.exceed_constant += 1,
                        BoundKind::Brent => self.diag.exceed_brent += 1,
                    }
                }
                if outcome.bound > 0.0 {
                    self.diag.max_exceed_ratio =
                        self.diag.max_exceed_ratio.max(outcome.rate / outcome.bound);
                }
                self.clock = t_next;
                if let Some(coord) = outcome.flip {
                    self.advance_anchor(t_next);
                    self.state.flip_velocity(coord);
                    self.record(t_next, EventKind::Flip { coord });
                    self.adapt.record_event(t_next);
                    self.diag.flips_accepted += 1;
                    self.seg = None;
                }
            }
            Candidate::Stick { hazard, cov } => {
                self.advance_anchor(t_next);
                zigzag::apply_stick(&mut self.state, hazard, cov);
                self.record(t_next, EventKind::Stick { hazard, cov });
                self.clock = t_next;
                self.seg = None;
                self.diag.sticks += 1;
            }
            Candidate::Exponential => {
                self.clock = t_next;
                // Multinomial step: pick the event type by its rate share.
                let mut pick = self.rng.random::<f64>() * r_exp;
                let mut kind = ExpEvent::Sample;
                let shares = [
                    (r_unstick, ExpEvent::Unstick),
                    (hyper_rate, ExpEvent::Hyper),
                    (self.rates.swap, ExpEvent::Swap),
                    (self.rates.birth_death, ExpEvent::BirthDeath),
                ];
                for (rate, candidate) in shares {
                    pick -= rate;
                    if pick < 0.0 {
                        kind = candidate;
                        break;
                    }
                }
                self.exponential_event(kind, t_next)?;
            }
        }
        Ok(true)
    }

    fn exponential_event(&mut self, kind: ExpEvent, t: f64) -> Result<()> {
        match kind {
            ExpEvent::Unstick => {
                let stuck = zigzag::stuck_coordinates(&self.state);
                debug_assert!(!stuck.is_empty());
                let (hazard, cov) = stuck[self.rng.random_range(0..stuck.len())];
                let velocity = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                self.advance_anchor(t);
                zigzag::apply_unstick(&mut self.state, hazard, cov, velocity);
                self.record(
                    t,
                    EventKind::Unstick {
                        hazard,
                        cov,
                        velocity,
                    },
                );
                self.diag.unsticks += 1;
                self.seg = None;
            }
            ExpEvent::Hyper => {
                let offset = t - self.state.clock;
                let mut sigma_changed = false;
                if self.prior.fixed_omega.is_none() {
                    jumps::gibbs_omega(&mut self.state, self.prior, &mut self.rng);
                }
                if self.prior.fixed_sigma_beta.is_none() {
                    let before = (self.state.z1, self.state.z2);
                    jumps::rwm_sigma(
                        &mut self.state,
                        self.prior,
                        offset,
                        &mut self.rwm,
                        &mut self.rng,
                    );
                    sigma_changed = (self.state.z1, self.state.z2) != before;
                }
                self.record(
                    t,
                    EventKind::Hyper {
                        omega: self.state.omega,
                        z1: self.state.z1,
                        z2: self.state.z2,
                    },
                );
                self.diag.hyper_events += 1;
                self.diag.rwm_attempts = self.rwm.attempts;
                self.diag.rwm_accepts = self.rwm.accepted;
                if sigma_changed {
                    // The slab scale entered the potential.
                    self.seg = None;
                }
            }
            ExpEvent::Swap => {
                self.diag.swap_attempts += 1;
                let at_event = self.state.snapshot_at(t);
                let decision = jumps::swap_event(
                    &at_event,
                    self.data,
                    self.prior,
                    &self.rates,
                    self.cfg.balancing,
                    self.cfg.swap_style,
                    &mut self.rng,
                )?;
                if let Some(JumpDecision::Swap { hazard, component }) = decision {
                    self.advance_anchor(t);
                    self.state.replace_component(hazard, component.clone());
                    self.record(t, EventKind::Swap { hazard, component });
                    self.diag.swap_accepts += 1;
                    self.seg = None;
                }
            }
            ExpEvent::BirthDeath => {
                let at_event = self.state.snapshot_at(t);
                let (decision, attempt) = jumps::birth_death_event(
                    &at_event,
                    self.data,
                    self.prior,
                    &self.rates,
                    self.cfg.balancing,
                    &mut self.rng,
                )?;
                match attempt {
                    BdAttempt::Birth => self.diag.birth_attempts += 1,
                    BdAttempt::Death => self.diag.death_attempts += 1,
                }
                match decision {
                    Some(JumpDecision::Birth(component)) => {
                        self.advance_anchor(t);
                        self.state.push_component(component.clone());
                        self.record(t, EventKind::Birth { component });
                        self.diag.birth_accepts += 1;
                        self.seg = None;
                    }
                    Some(JumpDecision::Death(hazard)) => {
                        self.advance_anchor(t);
                        self.state.remove_component(hazard);
                        self.record(t, EventKind::Death { hazard });
                        self.diag.death_accepts += 1;
                        self.seg = None;
                    }
                    _ => {}
                }
            }
            ExpEvent::Sample => {
                let snap = self.state.snapshot_at(t);
                self.samples.push(snap);
                self.diag.samples_emitted += 1;
            }
        }
        Ok(())
    }
}

/// Run a single chain to completion.
pub fn run_chain(
    cfg: &SamplerConfig,
    prior: &PriorConfig,
    data: &Dataset,
    chain_idx: usize,
) -> Result<ChainRun> {
    cfg.validate()?;
    prior.validate()?;
    let mut rng =
        StdRng::seed_from_u64(cfg.seed ^ (chain_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let state = init_state(prior, data, &mut rng);
    let initial = state.clone();
    let mut chain = Chain {
        data,
        prior,
        cfg,
        rates: cfg.effective_rates(),
        state,
        clock: 0.0,
        seg: None,
        adapt: AdaptState::new(),
        rwm: AdaptiveRwm::new(),
        rng,
        diag: Diagnostics::default(),
        events: Vec::new(),
        samples: Vec::new(),
        per_coord: Vec::new(),
    };
    loop {
        match chain.step() {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let state_json = serde_json::to_string(&chain.state)
                    .unwrap_or_else(|_| "<unserializable>".into());
                return Err(Error::ChainAborted {
                    chain: chain_idx,
                    clock: chain.clock,
                    message: e.to_string(),
                    state_json,
                });
            }
        }
    }
    Ok(ChainRun {
        chain: chain_idx,
        skeleton: SampleSkeleton {
            initial,
            total_time: cfg.total_time,
            events: chain.events,
            samples: chain.samples,
        },
        diagnostics: chain.diag,
    })
}

/// Run all configured chains, at most `max_workers` at a time. Results come
/// back ordered by chain index regardless of scheduling.
pub fn run(
    cfg: &SamplerConfig,
    prior: &PriorConfig,
    data: &Dataset,
    max_workers: usize,
) -> Result<Vec<ChainRun>> {
    cfg.validate()?;
    prior.validate()?;
    let workers = max_workers.max(1).min(cfg.chains);
    if workers == 1 {
        return (0..cfg.chains)
            .map(|i| run_chain(cfg, prior, data, i))
            .collect();
    }
    let mut results: Vec<Option<Result<ChainRun>>> = (0..cfg.chains).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= cfg.chains {
                    break;
                }
                let out = run_chain(cfg, prior, data, i);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("worker filled every slot"))
        .collect()
}

/// Replay the event skeleton and reproduce the state at each stored sample
/// time. With `emit_skeleton` on, results are bit-identical to the stored
/// snapshots.
pub fn reconstruct_at_samples(skeleton: &SampleSkeleton) -> Vec<ModelState> {
    let mut state = skeleton.initial.clone();
    let mut out = Vec::with_capacity(skeleton.samples.len());
    let mut ev = skeleton.events.iter().peekable();
    for snap in &skeleton.samples {
        let t_s = snap.clock;
        while let Some(e) = ev.peek() {
            if e.clock >= t_s {
                break;
            }
            apply_event(&mut state, e);
            ev.next();
        }
        out.push(state.snapshot_at(t_s));
    }
    out
}

/// Apply one recorded event to a replayed state.
pub fn apply_event(state: &mut ModelState, event: &Event) {
    match &event.kind {
        EventKind::Flip { coord } => {
            let dt = event.clock - state.clock;
            state.advance(dt);
            state.clock = event.clock;
            state.flip_velocity(*coord);
        }
        EventKind::Stick { hazard, cov } => {
            let dt = event.clock - state.clock;
            state.advance(dt);
            state.clock = event.clock;
            zigzag::apply_stick(state, *hazard, *cov);
        }
        EventKind::Unstick {
            hazard,
            cov,
            velocity,
        } => {
            let dt = event.clock - state.clock;
            state.advance(dt);
            state.clock = event.clock;
            zigzag::apply_unstick(state, *hazard, *cov, *velocity);
        }
        EventKind::Hyper { omega, z1, z2 } => {
            state.omega = *omega;
            state.z1 = *z1;
            state.z2 = *z2;
        }
        EventKind::Birth { component } => {
            let dt = event.clock - state.clock;
            state.advance(dt);
            state.clock = event.clock;
            state.push_component(component.clone());
        }
        EventKind::Death { hazard } => {
            let dt = event.clock - state.clock;
            state.advance(dt);
            state.clock = event.clock;
            state.remove_component(*hazard);
        }
        EventKind::Swap { hazard, component } => {
            let dt = event.clock - state.clock;
            state.advance(dt);
            state.clock = event.clock;
            state.replace_component(*hazard, component.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior_only_config(total_time: f64, seed: u64) -> (SamplerConfig, PriorConfig, Dataset) {
        let cfg = SamplerConfig {
            total_time,
            sample_rate: 2.0,
            rates: JumpRates {
                birth_death: 0.0,
                swap: 0.0,
                hyper: 0.0,
                bd_scale: None,
                swap_scale: None,
            },
            combined_jump_rate: None,
            lambda0: 0.1,
            seed,
            chains: 1,
            emit_skeleton: true,
            ..SamplerConfig::default()
        };
        let prior = PriorConfig {
            sigma_alpha: 1.0,
            sigma_beta0: 1.0,
            k_max: 4,
            fixed_omega: Some(0.5),
            fixed_sigma_beta: Some(1.0),
            ..PriorConfig::default()
        };
        (cfg, prior, Dataset::empty(0))
    }

    #[test]
    fn prior_only_run_reduces_to_plain_zigzag() {
        let (cfg, prior, data) = prior_only_config(500.0, 7);
        let runs = run(&cfg, &prior, &data, 1).unwrap();
        let run = &runs[0];
        // Only flips occur: no sticky coordinates, no jumps.
        assert!(run
            .skeleton
            .events
            .iter()
            .all(|e| matches!(e.kind, EventKind::Flip { .. })));
        assert!(run.diagnostics.flips_accepted > 0);
        assert_eq!(run.diagnostics.sticks, 0);
        assert_eq!(run.diagnostics.birth_attempts, 0);
    }

    #[test]
    fn snapshot_count_is_poissonian() {
        let (mut cfg, prior, data) = prior_only_config(2_000.0, 8);
        cfg.sample_rate = 3.0;
        let runs = run(&cfg, &prior, &data, 1).unwrap();
        let n = runs[0].skeleton.samples.len() as f64;
        let expected = cfg.sample_rate * cfg.total_time;
        assert!(
            (n - expected).abs() < 3.0 * expected.sqrt(),
            "{n} snapshots vs expected {expected}"
        );
    }

    #[test]
    fn equal_seeds_are_bit_identical() {
        let (cfg, prior, data) = prior_only_config(300.0, 9);
        let a = run(&cfg, &prior, &data, 1).unwrap();
        let b = run(&cfg, &prior, &data, 1).unwrap();
        let ja = serde_json::to_string(&a[0].skeleton).unwrap();
        let jb = serde_json::to_string(&b[0].skeleton).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn skeleton_replay_reproduces_snapshots_exactly() {
        // Full sampler with jumps and sticky dynamics on a small dataset.
        let mut rng = StdRng::seed_from_u64(123);
        let times: Vec<f64> = (0..30).map(|_| rng.random_range(0.2..4.0)).collect();
        let events: Vec<bool> = (0..30).map(|_| rng.random_bool(0.7)).collect();
        let covs: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let data = Dataset::new_prestandardized(times, events, covs, vec!["x1".into()]).unwrap();
        let cfg = SamplerConfig {
            total_time: 150.0,
            sample_rate: 2.0,
            rates: JumpRates {
                birth_death: 2.0,
                swap: 2.0,
                hyper: 2.0,
                bd_scale: None,
                swap_scale: None,
            },
            emit_skeleton: true,
            seed: 31,
            chains: 1,
            ..SamplerConfig::default()
        };
        let prior = PriorConfig {
            k_max: 3,
            ..PriorConfig::default()
        };
        let runs = run(&cfg, &prior, &data, 1).unwrap();
        let skel = &runs[0].skeleton;
        assert!(runs[0].diagnostics.birth_accepts + runs[0].diagnostics.swap_accepts > 0);
        assert!(runs[0].diagnostics.sticks + runs[0].diagnostics.unsticks > 0);
        let rebuilt = reconstruct_at_samples(skel);
        assert_eq!(rebuilt.len(), skel.samples.len());
        for (a, b) in rebuilt.iter().zip(&skel.samples) {
            assert_eq!(a, b, "replayed snapshot differs");
        }
    }

    #[test]
    fn event_clocks_are_increasing_and_invariants_hold() {
        let mut rng = StdRng::seed_from_u64(77);
        let times: Vec<f64> = (0..20).map(|_| rng.random_range(0.2..4.0)).collect();
        let events: Vec<bool> = (0..20).map(|_| rng.random_bool(0.6)).collect();
        let covs: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let data =
            Dataset::new_prestandardized(times, events, covs, vec!["x1".into(), "x2".into()])
                .unwrap();
        let cfg = SamplerConfig {
            total_time: 100.0,
            rates: JumpRates::combined(6.0),
            emit_skeleton: true,
            seed: 5,
            chains: 1,
            ..SamplerConfig::default()
        };
        let prior = PriorConfig::default();
        let runs = run(&cfg, &prior, &data, 1).unwrap();
        let skel = &runs[0].skeleton;
        let mut last = 0.0;
        for e in &skel.events {
            assert!(e.clock >= last, "clocks must increase");
            last = e.clock;
        }
        // Replay and check invariants after every event.
        let mut state = skel.initial.clone();
        state.check_invariants(prior.k_max).unwrap();
        for e in &skel.events {
            apply_event(&mut state, e);
            state.check_invariants(prior.k_max).unwrap();
        }
    }

    #[test]
    fn event_type_frequencies_match_rates() {
        // Hyper, swap, birth-death, and sample clocks are all constant-rate;
        // their event counts must match the rate proportions.
        let mut rng = StdRng::seed_from_u64(99);
        let times: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..3.0)).collect();
        let events = vec![true; 10];
        let covs: Vec<Vec<f64>> = (0..10).map(|_| vec![]).collect();
        let data = Dataset::new_prestandardized(times, events, covs, vec![]).unwrap();
        let cfg = SamplerConfig {
            total_time: 4_000.0,
            sample_rate: 1.5,
            rates: JumpRates {
                birth_death: 2.0,
                swap: 1.0,
                hyper: 0.5,
                bd_scale: None,
                swap_scale: None,
            },
            seed: 13,
            chains: 1,
            ..SamplerConfig::default()
        };
        let prior = PriorConfig {
            k_max: 3,
            ..PriorConfig::default()
        };
        let runs = run(&cfg, &prior, &data, 1).unwrap();
        let d = &runs[0].diagnostics;
        let counts = [
            (d.birth_attempts + d.death_attempts) as f64,
            d.swap_attempts as f64,
            d.hyper_events as f64,
            d.samples_emitted as f64,
        ];
        let rates = [2.0, 1.0, 0.5, 1.5];
        let total_count: f64 = counts.iter().sum();
        let total_rate: f64 = rates.iter().sum();
        for (c, r) in counts.iter().zip(&rates) {
            let got = c / total_count;
            let want = r / total_rate;
            assert!((got - want).abs() < 0.01, "fraction {got} vs {want}");
        }
    }

    #[test]
    fn deterministic_stick_beats_later_arrivals() {
        // A single included coordinate moving toward zero must stick before
        // anything else can touch it when all jump rates are tiny.
        let data = Dataset::empty(1);
        let prior = PriorConfig {
            fixed_omega: Some(0.5),
            fixed_sigma_beta: Some(1.0),
            ..PriorConfig::default()
        };
        let cfg = SamplerConfig {
            total_time: 0.6,
            sample_rate: 1e-9,
            rates: JumpRates {
                birth_death: 0.0,
                swap: 0.0,
                hyper: 0.0,
                bd_scale: None,
                swap_scale: None,
            },
            lambda0: 0.0,
            emit_skeleton: true,
            seed: 3,
            chains: 1,
            ..SamplerConfig::default()
        };
        // Hand-build a chain whose only motion is beta -> 0 at t = 0.5.
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        let mut state = init_state(&prior, &data, &mut rng);
        state.gamma[0][0] = true;
        state.beta[0][0] = 0.5;
        state.v_beta[0][0] = -1.0;
        // Park the free coordinates at their mode moving apart so the flip
        // rate stays small.
        state.alpha[0] = 0.0;
        state.beta0[0] = 0.0;
        let initial = state.clone();
        let mut chain = Chain {
            data: &data,
            prior: &prior,
            cfg: &cfg,
            rates: cfg.effective_rates(),
            state,
            clock: 0.0,
            seg: None,
            adapt: AdaptState::new(),
            rwm: AdaptiveRwm::new(),
            rng,
            diag: Diagnostics::default(),
            events: Vec::new(),
            samples: Vec::new(),
            per_coord: Vec::new(),
        };
        while chain.step().unwrap() {}
        let stick = chain
            .events
            .iter()
            .find(|e| matches!(e.kind, EventKind::Stick { .. }))
            .expect("coordinate must stick");
        assert!((stick.clock - 0.5).abs() < 1e-9, "stick at {}", stick.clock);
        assert_eq!(initial.beta[0][0], 0.5);
        assert_eq!(chain.state.beta[0][0], 0.0);
        assert_eq!(chain.state.v_beta[0][0], 0.0);
    }

    #[test]
    fn diagnostics_report_round_trips_and_handles_no_attempts() {
        let d = Diagnostics::default();
        let r = d.report();
        assert!(
            r.birth_acceptance.is_none(),
            "no attempts reports null, not 0"
        );
        let json = serde_json::to_string(&r).unwrap();
        let back: DiagnosticsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
        assert!(json.contains("\"birth_acceptance\":null"));
    }

    #[test]
    fn chains_run_in_parallel_deterministically() {
        let (mut cfg, prior, data) = prior_only_config(200.0, 21);
        cfg.chains = 3;
        let seq = run(&cfg, &prior, &data, 1).unwrap();
        let par = run(&cfg, &prior, &data, 3).unwrap();
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.chain, b.chain);
            assert_eq!(
                serde_json::to_string(&a.skeleton).unwrap(),
                serde_json::to_string(&b.skeleton).unwrap()
            );
        }
    }
}
