//! Equal-step simulation loop: clock, failure sampling, repair, preventive
//! maintenance, reconfiguration, business/service execution and trace
//! collection.
//!
//! Determinism contract: one failure variate per agent per tick in ascending
//! id order, drawn even for agents that are already failed or under
//! maintenance (and discarded). The failure stream is therefore identical
//! across reconfiguration on/off runs with the same seed, which makes paired
//! comparisons a common-random-numbers experiment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{AvailabilityPoint, TimeCounters};
use crate::model::{
    self, AgentId, BusinessAgent, BusinessState, ModelError, ServiceState, Status, SystemModel,
    ValidationReport,
};
use crate::reconfig::{self, Availability, BindingTable, Eligibility};

/// Preventive-maintenance window: the agent is out of service for `duration`
/// ticks at the start of every `period`-tick cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmWindow {
    pub agent: AgentId,
    pub period: u64,
    pub duration: u64,
}

impl PmWindow {
    /// Whether the window covers 1-based tick `t`.
    pub fn covers(&self, t: u64) -> bool {
        (t - 1) % self.period < self.duration
    }
}

/// Run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Total simulation length T in ticks.
    pub ticks: u64,
    pub seed: u64,
    pub reconfig_enabled: bool,
    /// When set, replaces every agent's reliability.
    pub reliability_override: Option<f64>,
    pub pm_schedule: Vec<PmWindow>,
    pub replications: u64,
}

impl SimParams {
    pub fn new(ticks: u64, seed: u64) -> Self {
        SimParams {
            ticks,
            seed,
            reconfig_enabled: true,
            reliability_override: None,
            pm_schedule: Vec::new(),
            replications: 1,
        }
    }

    pub fn check(&self) -> Result<(), EngineError> {
        if self.ticks < 1 {
            return Err(EngineError::InvalidParams("ticks must be >= 1".into()));
        }
        if self.replications < 1 {
            return Err(EngineError::InvalidParams(
                "replications must be >= 1".into(),
            ));
        }
        if let Some(r) = self.reliability_override {
            if !(r > 0.0 && r <= 1.0) {
                return Err(EngineError::InvalidParams(format!(
                    "reliability override {r} outside (0, 1]"
                )));
            }
        }
        for w in &self.pm_schedule {
            if w.period < 1 || w.duration < 1 {
                return Err(EngineError::InvalidParams(
                    "pm window period and duration must be >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Everything the monitor observes during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Fail {
        tick: u64,
        agent: AgentId,
    },
    Recover {
        tick: u64,
        agent: AgentId,
    },
    SubstituteIn {
        tick: u64,
        original: AgentId,
        old: AgentId,
        new: AgentId,
    },
    SubstituteOut {
        tick: u64,
        original: AgentId,
        old: AgentId,
    },
    PmStart {
        tick: u64,
        agent: AgentId,
    },
    PmEnd {
        tick: u64,
        agent: AgentId,
    },
}

impl Event {
    pub fn tick(&self) -> u64 {
        match self {
            Event::Fail { tick, .. }
            | Event::Recover { tick, .. }
            | Event::SubstituteIn { tick, .. }
            | Event::SubstituteOut { tick, .. }
            | Event::PmStart { tick, .. }
            | Event::PmEnd { tick, .. } => *tick,
        }
    }
}

/// Per-agent runtime state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentRuntime {
    pub status: Status,
    /// Remaining corrective-maintenance ticks; `None` for infinite repair.
    pub repair_left: Option<u64>,
    pub in_pm: bool,
}

impl AgentRuntime {
    pub fn availability(&self) -> Availability {
        if self.in_pm {
            Availability::Maintenance
        } else if self.status == Status::Failed {
            Availability::Failed
        } else {
            Availability::Normal
        }
    }
}

/// Per-business runtime state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusinessRuntime {
    pub state: BusinessState,
    /// Index into the business's service list of the last call, if any.
    pub last_service: Option<usize>,
}

/// Complete record of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    /// One point per tick; values are cumulative A0 through that tick.
    pub samples: Vec<AvailabilityPoint>,
    /// Business ids in ascending order, matching `per_business` columns.
    pub business_ids: Vec<u64>,
    pub events: Vec<Event>,
    pub final_counters: BTreeMap<u64, TimeCounters>,
    pub params: SimParams,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("model failed validation:\n{0}")]
    InvalidModel(ValidationReport),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("simulation already at end of horizon")]
    EndOfHorizon,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of probing one service against current bindings and statuses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceOutcome {
    Up,
    /// The (post-binding) agents blocking the service.
    Down(Vec<AgentId>),
}

/// Up iff every agent in the service's support closure, after mapping through
/// the binding table, is Normal.
pub fn evaluate_service(
    service_id: u64,
    model: &SystemModel,
    bindings: &BindingTable,
    availability: &dyn Fn(AgentId) -> Availability,
) -> Result<ServiceOutcome, ModelError> {
    let closure = model::support_closure(service_id, model)?;
    Ok(evaluate_closure(&closure, bindings, availability))
}

fn evaluate_closure(
    closure: &std::collections::BTreeSet<AgentId>,
    bindings: &BindingTable,
    availability: &dyn Fn(AgentId) -> Availability,
) -> ServiceOutcome {
    let mut blocking = Vec::new();
    for original in closure {
        let bound = bindings.bound(*original);
        if availability(bound) != Availability::Normal {
            blocking.push(bound);
        }
    }
    if blocking.is_empty() {
        ServiceOutcome::Up
    } else {
        ServiceOutcome::Down(blocking)
    }
}

/// Draws the business's call for this tick: `None` is Idle, `Some(i)` is an
/// index into its service list.
///
/// One variate for the duty draw, then one for the branch draw when a call is
/// issued. The first call uses the uniform initial distribution, later calls
/// the transition row of the previously called service.
pub fn select_service(
    business: &BusinessAgent,
    last_service: Option<usize>,
    rng: &mut impl Rng,
) -> Option<usize> {
    let duty: f64 = rng.random();
    if duty >= business.duty_cycle {
        return None;
    }
    let branch: f64 = rng.random();
    let n = business.services.len();
    let idx = match last_service {
        None => ((branch * n as f64) as usize).min(n - 1),
        Some(prev) => {
            let row = &business.transition[prev];
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, p) in row.iter().enumerate() {
                acc += p;
                if branch < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    Some(idx)
}

/// One in-flight simulation run.
pub struct Simulation<'a> {
    model: &'a SystemModel,
    params: SimParams,
    agent_order: Vec<AgentId>,
    reliabilities: HashMap<AgentId, f64>,
    repair_ticks: HashMap<AgentId, Option<u64>>,
    closures: HashMap<u64, std::collections::BTreeSet<AgentId>>,
    eligibility: Eligibility,
    business_order: Vec<u64>,
    pm_by_agent: HashMap<AgentId, Vec<PmWindow>>,
    clock: u64,
    statuses: BTreeMap<AgentId, AgentRuntime>,
    bindings: BindingTable,
    business_states: BTreeMap<u64, BusinessRuntime>,
    service_states: BTreeMap<u64, ServiceState>,
    counters: BTreeMap<u64, TimeCounters>,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    samples: Vec<AvailabilityPoint>,
}

impl<'a> Simulation<'a> {
    pub fn new(model: &'a SystemModel, params: &SimParams) -> Result<Self, EngineError> {
        let report = model::validate(model);
        if !report.is_valid() {
            return Err(EngineError::InvalidModel(report));
        }
        params.check()?;
        for w in &params.pm_schedule {
            if !model.contains_agent(w.agent) {
                return Err(EngineError::InvalidParams(format!(
                    "pm window references unknown agent {}",
                    w.agent
                )));
            }
        }

        let agent_order = model.agent_ids();
        let mut reliabilities = HashMap::new();
        let mut repair_ticks = HashMap::new();
        let mut statuses = BTreeMap::new();
        for c in &model.components {
            reliabilities.insert(c.id, params.reliability_override.unwrap_or(c.reliability));
            repair_ticks.insert(c.id, c.repair_ticks);
            statuses.insert(
                c.id,
                AgentRuntime {
                    status: c.status,
                    repair_left: if c.status == Status::Failed {
                        c.repair_ticks
                    } else {
                        None
                    },
                    in_pm: false,
                },
            );
        }
        for c in &model.connectors {
            reliabilities.insert(c.id, params.reliability_override.unwrap_or(c.reliability));
            repair_ticks.insert(c.id, c.repair_ticks);
            statuses.insert(
                c.id,
                AgentRuntime {
                    status: c.status,
                    repair_left: if c.status == Status::Failed {
                        c.repair_ticks
                    } else {
                        None
                    },
                    in_pm: false,
                },
            );
        }

        let mut pm_by_agent: HashMap<AgentId, Vec<PmWindow>> = HashMap::new();
        for w in &params.pm_schedule {
            pm_by_agent.entry(w.agent).or_default().push(*w);
        }

        let mut business_order: Vec<u64> = model.businesses.iter().map(|b| b.id).collect();
        business_order.sort_unstable();

        let business_states = business_order
            .iter()
            .map(|id| {
                (
                    *id,
                    BusinessRuntime {
                        state: BusinessState::Idle,
                        last_service: None,
                    },
                )
            })
            .collect();
        let counters = business_order
            .iter()
            .map(|id| (*id, TimeCounters::default()))
            .collect();
        let service_states = model
            .services
            .iter()
            .map(|s| (s.id, ServiceState::Idle))
            .collect();

        Ok(Simulation {
            model,
            params: params.clone(),
            agent_order,
            reliabilities,
            repair_ticks,
            closures: model::all_closures(model),
            eligibility: if params.reconfig_enabled {
                Eligibility::from_model(model)
            } else {
                Eligibility::default()
            },
            business_order,
            pm_by_agent,
            clock: 0,
            statuses,
            bindings: BindingTable::new(),
            business_states,
            service_states,
            counters,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            events: Vec::new(),
            samples: Vec::new(),
        })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn statuses(&self) -> &BTreeMap<AgentId, AgentRuntime> {
        &self.statuses
    }

    pub fn bindings(&self) -> &BindingTable {
        &self.bindings
    }

    pub fn counters(&self) -> &BTreeMap<u64, TimeCounters> {
        &self.counters
    }

    pub fn business_states(&self) -> &BTreeMap<u64, BusinessRuntime> {
        &self.business_states
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn samples(&self) -> &[AvailabilityPoint] {
        &self.samples
    }

    /// Failure sampling for the current tick. Exactly one variate per agent
    /// in ascending id order; variates for non-samplable agents are
    /// discarded.
    fn sample_failures(&mut self) -> HashSet<AgentId> {
        let mut newly_failed = HashSet::new();
        for id in &self.agent_order {
            let u: f64 = self.rng.random();
            let rt = self.statuses.get_mut(id).expect("agent runtime");
            if rt.status == Status::Normal && !rt.in_pm {
                let r = self.reliabilities[id];
                if u < 1.0 - r {
                    rt.status = Status::Failed;
                    rt.repair_left = self.repair_ticks[id];
                    newly_failed.insert(*id);
                    self.events.push(Event::Fail {
                        tick: self.clock,
                        agent: *id,
                    });
                }
            }
        }
        newly_failed
    }

    fn update_pm_windows(&mut self) {
        for id in &self.agent_order {
            let Some(windows) = self.pm_by_agent.get(id) else {
                continue;
            };
            let now = windows.iter().any(|w| w.covers(self.clock));
            let rt = self.statuses.get_mut(id).expect("agent runtime");
            if now && !rt.in_pm {
                rt.in_pm = true;
                self.events.push(Event::PmStart {
                    tick: self.clock,
                    agent: *id,
                });
            } else if !now && rt.in_pm {
                rt.in_pm = false;
                self.events.push(Event::PmEnd {
                    tick: self.clock,
                    agent: *id,
                });
            }
        }
    }

    /// Decrements repair countdowns of agents that failed on earlier ticks and
    /// recovers those reaching zero.
    fn advance_repairs(&mut self, newly_failed: &HashSet<AgentId>) {
        for id in &self.agent_order {
            if newly_failed.contains(id) {
                continue;
            }
            let rt = self.statuses.get_mut(id).expect("agent runtime");
            if rt.status != Status::Failed {
                continue;
            }
            if let Some(left) = rt.repair_left {
                let left = left.saturating_sub(1);
                if left == 0 {
                    rt.status = Status::Normal;
                    rt.repair_left = None;
                    self.events.push(Event::Recover {
                        tick: self.clock,
                        agent: *id,
                    });
                } else {
                    rt.repair_left = Some(left);
                }
            }
        }
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) -> Result<(), EngineError> {
        if self.clock >= self.params.ticks {
            return Err(EngineError::EndOfHorizon);
        }
        self.clock += 1;

        self.update_pm_windows();
        let newly_failed = self.sample_failures();
        self.advance_repairs(&newly_failed);

        if self.params.reconfig_enabled {
            let statuses = &self.statuses;
            let availability = |id: AgentId| statuses[&id].availability();
            let subs = reconfig::apply_reconfiguration(
                self.clock,
                &self.eligibility,
                &mut self.bindings,
                &availability,
            );
            for s in subs {
                if s.new == s.original {
                    self.events.push(Event::SubstituteOut {
                        tick: s.tick,
                        original: s.original,
                        old: s.old,
                    });
                } else {
                    self.events.push(Event::SubstituteIn {
                        tick: s.tick,
                        original: s.original,
                        old: s.old,
                        new: s.new,
                    });
                }
            }
        }

        // Business execution, ascending id order, one counter tick each.
        let mut called_services: Vec<(u64, ServiceState)> = Vec::new();
        for bid in &self.business_order {
            let business = self.model.business(*bid).expect("business exists");
            let runtime = self.business_states.get_mut(bid).expect("runtime");
            let choice = select_service(business, runtime.last_service, &mut self.rng);
            let counters = self.counters.get_mut(bid).expect("counters");
            match choice {
                None => {
                    counters.st += 1;
                    runtime.state = BusinessState::Idle;
                }
                Some(idx) => {
                    runtime.last_service = Some(idx);
                    let sid = business.services[idx];
                    let closure = &self.closures[&sid];
                    let statuses = &self.statuses;
                    let availability = |id: AgentId| statuses[&id].availability();
                    match evaluate_closure(closure, &self.bindings, &availability) {
                        ServiceOutcome::Up => {
                            counters.ot += 1;
                            runtime.state = BusinessState::Calling(sid);
                            called_services.push((sid, ServiceState::Executing));
                        }
                        ServiceOutcome::Down(blocking) => {
                            runtime.state = BusinessState::Blocked;
                            // Corrective state wins over preventive when an
                            // agent is both failed and under maintenance.
                            let pm_only = blocking.iter().all(|a| {
                                let rt = &self.statuses[a];
                                rt.in_pm && rt.status == Status::Normal
                            });
                            if pm_only {
                                counters.tpm += 1;
                            } else {
                                counters.tcm += 1;
                            }
                            called_services.push((sid, ServiceState::Failed));
                        }
                    }
                }
            }
            debug_assert_eq!(self.counters[bid].total(), self.clock);
        }

        for state in self.service_states.values_mut() {
            *state = ServiceState::Idle;
        }
        for (sid, state) in called_services {
            // Failed sticks over Executing when several businesses hit the
            // same service in one tick.
            let slot = self.service_states.get_mut(&sid).expect("service state");
            if *slot != ServiceState::Failed {
                *slot = state;
            }
        }

        let per_business: Vec<f64> = self
            .business_order
            .iter()
            .map(|bid| {
                let c = &self.counters[bid];
                c.mut_ticks() as f64 / self.clock as f64
            })
            .collect();
        let system = per_business.iter().sum::<f64>() / per_business.len().max(1) as f64;
        self.samples.push(AvailabilityPoint {
            tick: self.clock,
            per_business,
            system,
        });
        Ok(())
    }

    pub fn into_trace(self) -> SimulationTrace {
        SimulationTrace {
            samples: self.samples,
            business_ids: self.business_order,
            events: self.events,
            final_counters: self.counters,
            params: self.params,
        }
    }
}

/// Runs one seeded replication to completion.
///
/// Bit-identical output for identical (model, params).
pub fn run(model: &SystemModel, params: &SimParams) -> Result<SimulationTrace, EngineError> {
    let mut sim = Simulation::new(model, params)?;
    for _ in 0..params.ticks {
        sim.step()?;
    }
    Ok(sim.into_trace())
}

/// Runs `params.replications` independent replications; replication i uses
/// seed `params.seed + i`. `threads` caps concurrency, 0 meaning sequential.
/// Output order is by replication index regardless of thread count.
pub fn run_replications(
    model: &SystemModel,
    params: &SimParams,
    threads: usize,
) -> Result<Vec<SimulationTrace>, EngineError> {
    let reps = params.replications;
    let rep_params = |i: u64| {
        let mut p = params.clone();
        p.seed = params.seed.wrapping_add(i);
        p.replications = 1;
        p
    };
    if threads <= 1 || reps == 1 {
        return (0..reps).map(|i| run(model, &rep_params(i))).collect();
    }
    // Validate once up front so workers cannot race on error reporting.
    Simulation::new(model, params)?;
    let next = AtomicU64::new(0);
    let results: Mutex<Vec<Option<Result<SimulationTrace, EngineError>>>> =
        Mutex::new((0..reps).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(reps as usize) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= reps {
                    break;
                }
                let trace = run(model, &rep_params(i));
                results.lock().unwrap()[i as usize] = Some(trace);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("replication completed"))
        .collect()
}
