//! Rule storage and instantaneous substitution of failed agents that serve
//! critical businesses.
//!
//! Substitutes are hot standby: they keep undergoing failure sampling whether
//! bound or not. Selection is first-fit in declared rule order, originals are
//! processed in ascending id order, and a recovered original always takes its
//! place back from a substitute.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, ModelError, SystemModel};

/// Substitution rule: which agents can take over for `failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconfigRule {
    pub failed: AgentId,
    /// Ordered preference; all the same kind as `failed`.
    pub substitutes: Vec<AgentId>,
}

/// The single deterministic coordination strategy: originals in ascending id
/// order, substitutes first-fit in declared order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CoordinationStrategy {
    #[default]
    PriorityOrder,
}

/// The reconfiguration rule table of a system model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconfigModel {
    pub id: u64,
    pub rules: Vec<ReconfigRule>,
    /// Rule-selection policy identifier; informational.
    pub policy: String,
    pub strategy: CoordinationStrategy,
}

impl Default for ReconfigModel {
    fn default() -> Self {
        ReconfigModel {
            id: 0,
            rules: Vec::new(),
            policy: "first-fit".to_string(),
            strategy: CoordinationStrategy::PriorityOrder,
        }
    }
}

impl ReconfigModel {
    pub fn rule_for(&self, failed: AgentId) -> Option<&ReconfigRule> {
        self.rules.iter().find(|r| r.failed == failed)
    }
}

/// What the engine knows about an agent when substitution decisions are made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Availability {
    Normal,
    Failed,
    /// Out of service for preventive maintenance; not failed, not selectable.
    Maintenance,
}

/// Maps each original agent to the agent currently serving in its place.
///
/// Only non-identity bindings are stored; an unsubstituted agent is bound to
/// itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindingTable {
    map: BTreeMap<AgentId, AgentId>,
}

impl BindingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// The agent currently serving in place of `original`.
    pub fn bound(&self, original: AgentId) -> AgentId {
        self.map.get(&original).copied().unwrap_or(original)
    }

    pub fn bind(&mut self, original: AgentId, substitute: AgentId) {
        if substitute == original {
            self.map.remove(&original);
        } else {
            self.map.insert(original, substitute);
        }
    }

    pub fn unbind(&mut self, original: AgentId) {
        self.map.remove(&original);
    }

    /// True if `agent` is serving in place of some original other than
    /// `except`.
    pub fn occupied(&self, agent: AgentId, except: AgentId) -> bool {
        self.map
            .iter()
            .any(|(orig, sub)| *sub == agent && *orig != except)
    }

    /// Non-identity bindings, ascending by original id.
    pub fn entries(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.map.iter().map(|(o, s)| (*o, *s))
    }
}

/// Record of one binding change: `new == original` is a revert or an
/// exhausted-pool unbind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubstitutionEvent {
    pub tick: u64,
    pub original: AgentId,
    pub old: AgentId,
    pub new: AgentId,
}

#[derive(Debug, thiserror::Error)]
pub enum ReconfigError {
    #[error("no reconfiguration rule for agent {0}")]
    RuleMissing(AgentId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Union of support closures over all services of critical businesses.
pub fn critical_closure(model: &SystemModel) -> BTreeSet<AgentId> {
    let mut set = BTreeSet::new();
    for b in model.businesses.iter().filter(|b| b.critical) {
        for sid in &b.services {
            if let Ok(closure) = crate::model::support_closure(*sid, model) {
                set.extend(closure);
            }
        }
    }
    set
}

/// True iff a rule exists for `agent` and `agent` lies in the support closure
/// of some service of a critical business.
pub fn is_reconfigurable(agent: AgentId, model: &SystemModel) -> Result<bool, ReconfigError> {
    if !model.contains_agent(agent) {
        return Err(ModelError::UnknownAgent(agent).into());
    }
    Ok(model.reconfig.rule_for(agent).is_some() && critical_closure(model).contains(&agent))
}

/// Precomputed substitution table: eligible originals (ascending) with their
/// rule-ordered substitute lists.
#[derive(Debug, Clone, Default)]
pub struct Eligibility {
    slots: BTreeMap<AgentId, Vec<AgentId>>,
}

impl Eligibility {
    pub fn from_model(model: &SystemModel) -> Self {
        let critical = critical_closure(model);
        let slots = model
            .reconfig
            .rules
            .iter()
            .filter(|r| critical.contains(&r.failed))
            .map(|r| (r.failed, r.substitutes.clone()))
            .collect();
        Eligibility { slots }
    }

    pub fn substitutes(&self, original: AgentId) -> Option<&[AgentId]> {
        self.slots.get(&original).map(|v| v.as_slice())
    }

    pub fn originals(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.slots.keys().copied()
    }
}

/// First substitute in rule order that is Normal and not already serving in
/// place of another agent; `None` when the pool is exhausted.
pub fn find_substitute(
    failed: AgentId,
    model: &SystemModel,
    bindings: &BindingTable,
    availability: &dyn Fn(AgentId) -> Availability,
) -> Result<Option<AgentId>, ReconfigError> {
    let rule = model
        .reconfig
        .rule_for(failed)
        .ok_or(ReconfigError::RuleMissing(failed))?;
    Ok(first_fit(failed, &rule.substitutes, bindings, availability))
}

fn first_fit(
    original: AgentId,
    substitutes: &[AgentId],
    bindings: &BindingTable,
    availability: &dyn Fn(AgentId) -> Availability,
) -> Option<AgentId> {
    substitutes
        .iter()
        .copied()
        .find(|s| availability(*s) == Availability::Normal && !bindings.occupied(*s, original))
}

/// Rebinds every eligible agent whose current binding is Failed, within the
/// same tick. A recovered original takes priority over its substitute. Agents
/// are processed in ascending id order.
pub fn apply_reconfiguration(
    tick: u64,
    eligibility: &Eligibility,
    bindings: &mut BindingTable,
    availability: &dyn Fn(AgentId) -> Availability,
) -> Vec<SubstitutionEvent> {
    let mut events = Vec::new();
    for original in eligibility.originals() {
        let current = bindings.bound(original);
        if current != original && availability(original) == Availability::Normal {
            bindings.unbind(original);
            events.push(SubstitutionEvent {
                tick,
                original,
                old: current,
                new: original,
            });
            continue;
        }
        if availability(current) == Availability::Failed {
            let subs = eligibility.substitutes(original).unwrap_or(&[]);
            match first_fit(original, subs, bindings, availability) {
                Some(next) => {
                    bindings.bind(original, next);
                    events.push(SubstitutionEvent {
                        tick,
                        original,
                        old: current,
                        new: next,
                    });
                }
                None if current != original => {
                    // Pool exhausted: fall back to the failed original so the
                    // downtime is attributed there.
                    bindings.unbind(original);
                    events.push(SubstitutionEvent {
                        tick,
                        original,
                        old: current,
                        new: original,
                    });
                }
                None => {}
            }
        }
    }
    events
}
