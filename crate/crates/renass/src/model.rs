//! Domain types for the agent-structured system description and structural
//! validation.
//!
//! A system is a flat graph of failable component agents (nodes) and directed
//! failable connector agents (edges), overlaid with a workload layer of
//! services (support sets of agents) and businesses (service consumers).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::reconfig::ReconfigModel;

/// Tolerance for row-stochastic transition matrix checks.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Which structural kind of agent an id names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Component,
    Connector,
}

/// Identifier of a component or connector agent.
///
/// Ordering is (kind, index) so "ascending id order" means all components
/// before all connectors, each by serial number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub kind: AgentKind,
    pub index: u64,
}

impl AgentId {
    pub fn component(index: u64) -> Self {
        AgentId {
            kind: AgentKind::Component,
            index,
        }
    }

    pub fn connector(index: u64) -> Self {
        AgentId {
            kind: AgentKind::Connector,
            index,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AgentKind::Component => write!(f, "com{}", self.index),
            AgentKind::Connector => write!(f, "con{}", self.index),
        }
    }
}

/// An agent is either running normally or failed; there is no degraded state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Status {
    #[default]
    Normal,
    Failed,
}

/// The fixed action alphabet shared by all component and connector agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentAction {
    Fail,
    Recover,
    SubstituteIn,
    SubstituteOut,
}

/// All actions any agent may take.
pub const ACTION_ALPHABET: [AgentAction; 4] = [
    AgentAction::Fail,
    AgentAction::Recover,
    AgentAction::SubstituteIn,
    AgentAction::SubstituteOut,
];

/// Declarative behavior attached to a component agent.
///
/// `knowledge` lists the failed-agent ids of reconfiguration rules this agent
/// participates in, `plan` is its ordered substitute preference, and `goal`
/// flags whether the agent serves a critical business. The executable
/// semantics live entirely in the reconfiguration rule table; this profile is
/// descriptive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorProfile {
    pub knowledge: Vec<AgentId>,
    pub plan: Vec<AgentId>,
    pub goal: bool,
}

/// Corrective-maintenance duration: `None` means the agent never recovers on
/// its own once failed.
pub type RepairTicks = Option<u64>;

/// A failable node of the topology network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentAgent {
    pub id: AgentId,
    /// Per-tick survival probability, in (0, 1].
    pub reliability: f64,
    #[serde(default)]
    pub status: Status,
    /// Ticks until a failed agent recovers; `null` = never.
    #[serde(default)]
    pub repair_ticks: RepairTicks,
    #[serde(default)]
    pub behavior: BehaviorProfile,
}

/// A failable directed edge between two components.
///
/// Direction is topology description only; failure semantics are identical to
/// components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectorAgent {
    pub id: AgentId,
    pub reliability: f64,
    #[serde(default)]
    pub status: Status,
    pub source: AgentId,
    pub target: AgentId,
    /// Ordered substitute preference, descriptive only.
    #[serde(default)]
    pub plan: Vec<AgentId>,
    #[serde(default)]
    pub repair_ticks: RepairTicks,
}

/// Runtime state of a service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum ServiceState {
    #[default]
    Idle,
    Executing,
    Failed,
}

/// A set of software functions requiring a support set of agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceAgent {
    pub id: u64,
    #[serde(default)]
    pub state: ServiceState,
    /// Components and connectors this service requires. Connector endpoints
    /// are pulled in implicitly via [`support_closure`].
    pub support_set: BTreeSet<AgentId>,
}

/// Runtime state of a business.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum BusinessState {
    #[default]
    Idle,
    Calling(u64),
    Blocked,
}

/// A consumer workload invoking services via a branch-transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusinessAgent {
    pub id: u64,
    /// Probability of issuing a call each tick.
    pub duty_cycle: f64,
    /// Row-stochastic matrix over `services`; row i gives the branch
    /// probabilities after calling `services[i]`. The first call is drawn
    /// uniformly.
    pub transition: Vec<Vec<f64>>,
    pub services: Vec<u64>,
    #[serde(default)]
    pub state: BusinessState,
    pub critical: bool,
}

/// The full topology plus workload and reconfiguration description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemModel {
    pub components: Vec<ComponentAgent>,
    pub connectors: Vec<ConnectorAgent>,
    pub services: Vec<ServiceAgent>,
    pub businesses: Vec<BusinessAgent>,
    pub reconfig: ReconfigModel,
}

/// One invariant violation, with a path to the offending element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Outcome of [`validate`]; empty means the model is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "valid")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

/// Errors from lookup operations over a model.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown service {0}")]
    UnknownService(u64),
    #[error("unknown business {0}")]
    UnknownBusiness(u64),
}

impl SystemModel {
    pub fn component(&self, index: u64) -> Option<&ComponentAgent> {
        self.components.iter().find(|c| c.id.index == index)
    }

    pub fn connector(&self, index: u64) -> Option<&ConnectorAgent> {
        self.connectors.iter().find(|c| c.id.index == index)
    }

    pub fn service(&self, id: u64) -> Option<&ServiceAgent> {
        self.services.iter().find(|s| s.id == id)
    }

    pub fn business(&self, id: u64) -> Option<&BusinessAgent> {
        self.businesses.iter().find(|b| b.id == id)
    }

    pub fn contains_agent(&self, id: AgentId) -> bool {
        match id.kind {
            AgentKind::Component => self.component(id.index).is_some(),
            AgentKind::Connector => self.connector(id.index).is_some(),
        }
    }

    /// Per-tick survival probability of an agent.
    pub fn reliability(&self, id: AgentId) -> Result<f64, ModelError> {
        match id.kind {
            AgentKind::Component => self
                .component(id.index)
                .map(|c| c.reliability)
                .ok_or(ModelError::UnknownAgent(id)),
            AgentKind::Connector => self
                .connector(id.index)
                .map(|c| c.reliability)
                .ok_or(ModelError::UnknownAgent(id)),
        }
    }

    pub fn repair_ticks(&self, id: AgentId) -> Result<RepairTicks, ModelError> {
        match id.kind {
            AgentKind::Component => self
                .component(id.index)
                .map(|c| c.repair_ticks)
                .ok_or(ModelError::UnknownAgent(id)),
            AgentKind::Connector => self
                .connector(id.index)
                .map(|c| c.repair_ticks)
                .ok_or(ModelError::UnknownAgent(id)),
        }
    }

    /// All agent ids in ascending order (components first, then connectors).
    pub fn agent_ids(&self) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = self
            .components
            .iter()
            .map(|c| c.id)
            .chain(self.connectors.iter().map(|c| c.id))
            .collect();
        ids.sort();
        ids
    }
}

/// Checks every structural invariant and returns all violations found.
///
/// Violations are data, not failures: a valid model yields an empty report.
pub fn validate(model: &SystemModel) -> ValidationReport {
    let mut v = Vec::new();

    let mut component_ids = HashSet::new();
    for (i, c) in model.components.iter().enumerate() {
        let path = format!("components[{i}]");
        if c.id.kind != AgentKind::Component {
            v.push(Violation {
                path: path.clone(),
                message: format!("component carries non-component id {}", c.id),
            });
        }
        if !component_ids.insert(c.id.index) {
            v.push(Violation {
                path: path.clone(),
                message: format!("duplicate component index {}", c.id.index),
            });
        }
        check_reliability(&mut v, &path, c.reliability);
        check_repair(&mut v, &path, c.repair_ticks);
    }

    let mut connector_ids = HashSet::new();
    for (i, c) in model.connectors.iter().enumerate() {
        let path = format!("connectors[{i}]");
        if c.id.kind != AgentKind::Connector {
            v.push(Violation {
                path: path.clone(),
                message: format!("connector carries non-connector id {}", c.id),
            });
        }
        if !connector_ids.insert(c.id.index) {
            v.push(Violation {
                path: path.clone(),
                message: format!("duplicate connector index {}", c.id.index),
            });
        }
        check_reliability(&mut v, &path, c.reliability);
        check_repair(&mut v, &path, c.repair_ticks);
        for (role, end) in [("source", c.source), ("target", c.target)] {
            if end.kind != AgentKind::Component {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("{role} {end} is not a component id"),
                });
            } else if model.component(end.index).is_none() {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("{role} references missing component {end}"),
                });
            }
        }
        if c.source == c.target {
            v.push(Violation {
                path: path.clone(),
                message: format!("self-loop at {}", c.source),
            });
        }
        for p in &c.plan {
            if !model.contains_agent(*p) {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("plan references missing agent {p}"),
                });
            }
        }
    }

    // Behavior profiles can only be checked once all agents are known.
    for (i, c) in model.components.iter().enumerate() {
        let path = format!("components[{i}].behavior");
        for p in &c.behavior.plan {
            if !model.contains_agent(*p) {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("plan references missing agent {p}"),
                });
            }
        }
    }

    let mut service_ids = HashSet::new();
    for (i, s) in model.services.iter().enumerate() {
        let path = format!("services[{i}]");
        if !service_ids.insert(s.id) {
            v.push(Violation {
                path: path.clone(),
                message: format!("duplicate service id {}", s.id),
            });
        }
        if s.support_set.is_empty() {
            v.push(Violation {
                path: path.clone(),
                message: "empty support set".into(),
            });
        }
        for a in &s.support_set {
            if !model.contains_agent(*a) {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("support set references missing agent {a}"),
                });
            }
        }
    }

    let mut business_ids = HashSet::new();
    for (i, b) in model.businesses.iter().enumerate() {
        let path = format!("businesses[{i}]");
        if !business_ids.insert(b.id) {
            v.push(Violation {
                path: path.clone(),
                message: format!("duplicate business id {}", b.id),
            });
        }
        if !(0.0..=1.0).contains(&b.duty_cycle) {
            v.push(Violation {
                path: path.clone(),
                message: format!("duty_cycle {} outside [0, 1]", b.duty_cycle),
            });
        }
        if b.services.is_empty() {
            v.push(Violation {
                path: path.clone(),
                message: "no services".into(),
            });
        }
        for sid in &b.services {
            if model.service(*sid).is_none() {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("references missing service {sid}"),
                });
            }
        }
        let n = b.services.len();
        if b.transition.len() != n {
            v.push(Violation {
                path: format!("{path}.transition"),
                message: format!("{} rows for {} services", b.transition.len(), n),
            });
        }
        for (r, row) in b.transition.iter().enumerate() {
            let row_path = format!("{path}.transition[{r}]");
            if row.len() != n {
                v.push(Violation {
                    path: row_path.clone(),
                    message: format!("{} entries for {} services", row.len(), n),
                });
            }
            if row.iter().any(|p| *p < 0.0) {
                v.push(Violation {
                    path: row_path.clone(),
                    message: "negative entry".into(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                v.push(Violation {
                    path: row_path,
                    message: format!("row sums to {sum}, expected 1"),
                });
            }
        }
    }

    let mut failed_seen = HashSet::new();
    for (i, rule) in model.reconfig.rules.iter().enumerate() {
        let path = format!("reconfig.rules[{i}]");
        if !failed_seen.insert(rule.failed) {
            v.push(Violation {
                path: path.clone(),
                message: format!("second rule for failed agent {}", rule.failed),
            });
        }
        if !model.contains_agent(rule.failed) {
            v.push(Violation {
                path: path.clone(),
                message: format!("failed agent {} missing from model", rule.failed),
            });
        }
        if rule.substitutes.is_empty() {
            v.push(Violation {
                path: path.clone(),
                message: "empty substitute list".into(),
            });
        }
        let mut seen = HashSet::new();
        for s in &rule.substitutes {
            if *s == rule.failed {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("agent {s} is its own substitute"),
                });
            }
            if s.kind != rule.failed.kind {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("substitute {s} differs in kind from {}", rule.failed),
                });
            }
            if !seen.insert(*s) {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("duplicate substitute {s}"),
                });
            }
            if !model.contains_agent(*s) {
                v.push(Violation {
                    path: path.clone(),
                    message: format!("substitute {s} missing from model"),
                });
            }
        }
    }

    ValidationReport { violations: v }
}

fn check_reliability(v: &mut Vec<Violation>, path: &str, r: f64) {
    if !(r > 0.0 && r <= 1.0) {
        v.push(Violation {
            path: path.to_string(),
            message: format!("reliability {r} outside (0, 1]"),
        });
    }
}

fn check_repair(v: &mut Vec<Violation>, path: &str, ticks: RepairTicks) {
    if ticks == Some(0) {
        v.push(Violation {
            path: path.to_string(),
            message: "repair_ticks must be positive".into(),
        });
    }
}

/// The service's declared support set plus, for each connector in it, its
/// endpoint components. A service cannot run over an edge whose endpoints are
/// absent.
pub fn support_closure(
    service_id: u64,
    model: &SystemModel,
) -> Result<BTreeSet<AgentId>, ModelError> {
    let service = model
        .service(service_id)
        .ok_or(ModelError::UnknownService(service_id))?;
    let mut closure = service.support_set.clone();
    for id in &service.support_set {
        if id.kind == AgentKind::Connector {
            if let Some(c) = model.connector(id.index) {
                closure.insert(c.source);
                closure.insert(c.target);
            }
        }
    }
    Ok(closure)
}

/// Precomputed closures for every service, keyed by service id.
pub fn all_closures(model: &SystemModel) -> HashMap<u64, BTreeSet<AgentId>> {
    model
        .services
        .iter()
        .map(|s| (s.id, support_closure(s.id, model).expect("service exists")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn component(index: u64, reliability: f64) -> ComponentAgent {
        ComponentAgent {
            id: AgentId::component(index),
            reliability,
            status: Status::Normal,
            repair_ticks: None,
            behavior: BehaviorProfile::default(),
        }
    }

    fn connector(index: u64, source: u64, target: u64) -> ConnectorAgent {
        ConnectorAgent {
            id: AgentId::connector(index),
            reliability: 1.0,
            status: Status::Normal,
            source: AgentId::component(source),
            target: AgentId::component(target),
            plan: Vec::new(),
            repair_ticks: None,
        }
    }

    fn two_component_model() -> SystemModel {
        SystemModel {
            components: vec![component(0, 0.9), component(1, 0.9)],
            connectors: vec![connector(0, 0, 1)],
            services: vec![ServiceAgent {
                id: 0,
                state: ServiceState::Idle,
                support_set: [AgentId::connector(0)].into_iter().collect(),
            }],
            businesses: vec![BusinessAgent {
                id: 0,
                duty_cycle: 1.0,
                transition: vec![vec![1.0]],
                services: vec![0],
                state: BusinessState::Idle,
                critical: false,
            }],
            reconfig: ReconfigModel::default(),
        }
    }

    #[test]
    fn well_formed_model_is_valid() {
        assert!(validate(&two_component_model()).is_valid());
    }

    #[test]
    fn dangling_connector_target_reported() {
        let mut m = two_component_model();
        m.connectors[0].target = AgentId::component(7);
        let report = validate(&m);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].path.contains("connectors[0]"));
        assert!(report.violations[0].message.contains("com7"));
    }

    #[test]
    fn non_stochastic_row_reported() {
        let mut m = two_component_model();
        m.businesses[0].transition = vec![vec![0.9]];
        let report = validate(&m);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0]
            .path
            .contains("businesses[0].transition[0]"));
    }

    #[test]
    fn validate_is_pure() {
        let m = two_component_model();
        assert_eq!(validate(&m), validate(&m));
    }

    #[test]
    fn closure_adds_connector_endpoints() {
        let m = two_component_model();
        let closure = support_closure(0, &m).unwrap();
        let expected: BTreeSet<AgentId> = [
            AgentId::connector(0),
            AgentId::component(0),
            AgentId::component(1),
        ]
        .into_iter()
        .collect();
        assert_eq!(closure, expected);
    }

    #[test]
    fn closure_identity_for_component_only_service() {
        let mut m = two_component_model();
        m.services[0].support_set = [AgentId::component(0)].into_iter().collect();
        let closure = support_closure(0, &m).unwrap();
        assert_eq!(closure.len(), 1);
        assert!(closure.contains(&AgentId::component(0)));
    }

    #[test]
    fn closure_over_two_connectors() {
        // {A, c(A->B), d(B->E)} -> {A, B, E, c, d}
        let mut m = two_component_model();
        m.components.push(component(2, 0.9));
        m.connectors.push(connector(1, 1, 2));
        m.services[0].support_set = [
            AgentId::component(0),
            AgentId::connector(0),
            AgentId::connector(1),
        ]
        .into_iter()
        .collect();
        let closure = support_closure(0, &m).unwrap();
        let expected: BTreeSet<AgentId> = [
            AgentId::component(0),
            AgentId::component(1),
            AgentId::component(2),
            AgentId::connector(0),
            AgentId::connector(1),
        ]
        .into_iter()
        .collect();
        assert_eq!(closure, expected);
    }

    #[test]
    fn closure_superset_of_support_and_idempotent() {
        let m = two_component_model();
        let c1 = support_closure(0, &m).unwrap();
        assert!(m.services[0].support_set.is_subset(&c1));
        // Re-deriving from a service whose support set already is the closure
        // changes nothing.
        let mut m2 = m.clone();
        m2.services[0].support_set = c1.clone();
        assert_eq!(support_closure(0, &m2).unwrap(), c1);
    }

    #[test]
    fn unknown_service_lookup_errors() {
        let m = two_component_model();
        assert!(matches!(
            support_closure(99, &m),
            Err(ModelError::UnknownService(99))
        ));
    }
}
