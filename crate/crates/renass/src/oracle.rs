//! Exact transient availability for small models: the independent ground
//! truth the Monte Carlo engine is validated against.
//!
//! Two routes are provided. The closed-form route multiplies per-slot
//! survival probabilities under the business's service-chain distribution;
//! the brute-force route exhaustively enumerates per-agent failure-time
//! assignments. They must agree to 1e-12 on the brute-force domain.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::model::{self, AgentId, ModelError, Status, SystemModel};
use crate::reconfig::Eligibility;

/// Tractability bound for the closed-form oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmallModelBound {
    pub max_agents: usize,
    pub max_services: usize,
}

impl Default for SmallModelBound {
    fn default() -> Self {
        SmallModelBound {
            max_agents: 12,
            max_services: 4,
        }
    }
}

/// Hard limits of the brute-force enumeration.
pub const BRUTE_FORCE_MAX_AGENTS: usize = 6;
pub const BRUTE_FORCE_MAX_TICKS: u64 = 10;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("model exceeds oracle bounds: {0}")]
    SizeExceeded(String),
    #[error("availability undefined over an empty horizon")]
    UndefinedMetric,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Probability that at least one slot member (original or substitute) is
/// still Normal at tick `t`, under per-tick survival and no repair:
/// 1 - prod over members m of (1 - r_m^t).
pub fn exact_slot_availability(
    original: AgentId,
    substitutes: &[AgentId],
    t: u64,
    model: &SystemModel,
) -> Result<f64, OracleError> {
    let mut all_down = 1.0;
    for member in std::iter::once(&original).chain(substitutes) {
        if model.repair_ticks(*member)?.is_some() {
            return Err(OracleError::Unsupported(format!(
                "agent {member} has finite repair"
            )));
        }
        let r = model.reliability(*member)?;
        all_down *= 1.0 - r.powi(t as i32);
    }
    Ok(1.0 - all_down)
}

/// Shared precondition checks for both oracle routes.
fn check_domain(model: &SystemModel, eligibility: &Eligibility) -> Result<(), OracleError> {
    let report = model::validate(model);
    if !report.is_valid() {
        return Err(OracleError::Unsupported(format!(
            "model fails validation:\n{report}"
        )));
    }
    for b in &model.businesses {
        if b.duty_cycle != 1.0 {
            return Err(OracleError::Unsupported(format!(
                "business {} duty_cycle {} != 1",
                b.id, b.duty_cycle
            )));
        }
    }
    for (id, repair, status) in model
        .components
        .iter()
        .map(|c| (c.id, c.repair_ticks, c.status))
        .chain(
            model
                .connectors
                .iter()
                .map(|c| (c.id, c.repair_ticks, c.status)),
        )
    {
        if repair.is_some() {
            return Err(OracleError::Unsupported(format!(
                "agent {id} has finite repair"
            )));
        }
        if status != Status::Normal {
            return Err(OracleError::Unsupported(format!(
                "agent {id} starts Failed"
            )));
        }
    }

    // Slot independence: substitute pools pairwise disjoint, substitutes
    // outside every service closure and never eligible originals themselves.
    let closures = model::all_closures(model);
    let in_any_closure: BTreeSet<AgentId> = closures.values().flatten().copied().collect();
    let originals: BTreeSet<AgentId> = eligibility.originals().collect();
    let mut seen = HashSet::new();
    for original in eligibility.originals() {
        for s in eligibility.substitutes(original).unwrap_or(&[]) {
            if !seen.insert(*s) {
                return Err(OracleError::Unsupported(format!(
                    "substitute {s} shared between rules"
                )));
            }
            if in_any_closure.contains(s) {
                return Err(OracleError::Unsupported(format!(
                    "substitute {s} appears in a service support closure"
                )));
            }
            if originals.contains(s) {
                return Err(OracleError::Unsupported(format!(
                    "substitute {s} is itself a reconfigurable original"
                )));
            }
        }
    }
    Ok(())
}

/// Expected cumulative system availability at T for a small no-repair,
/// no-PM, duty-cycle-1 model with disjoint hot-standby substitute pools.
pub fn exact_expected_availability(model: &SystemModel, ticks: u64) -> Result<f64, OracleError> {
    exact_expected_availability_bounded(model, ticks, SmallModelBound::default())
}

pub fn exact_expected_availability_bounded(
    model: &SystemModel,
    ticks: u64,
    bound: SmallModelBound,
) -> Result<f64, OracleError> {
    if ticks == 0 {
        return Err(OracleError::UndefinedMetric);
    }
    let n_agents = model.components.len() + model.connectors.len();
    if n_agents > bound.max_agents {
        return Err(OracleError::SizeExceeded(format!(
            "{n_agents} agents > {}",
            bound.max_agents
        )));
    }
    if model.services.len() > bound.max_services {
        return Err(OracleError::SizeExceeded(format!(
            "{} services > {}",
            model.services.len(),
            bound.max_services
        )));
    }
    let eligibility = Eligibility::from_model(model);
    check_domain(model, &eligibility)?;

    let closures = model::all_closures(model);
    let mut acc = 0.0;
    for t in 1..=ticks {
        // P(up at t) per service, shared across businesses.
        let mut service_up: BTreeMap<u64, f64> = BTreeMap::new();
        for service in &model.services {
            let mut p = 1.0;
            for agent in &closures[&service.id] {
                let subs = eligibility.substitutes(*agent).unwrap_or(&[]);
                p *= exact_slot_availability(*agent, subs, t, model)?;
            }
            service_up.insert(service.id, p);
        }
        let mut tick_mean = 0.0;
        for b in &model.businesses {
            let dist = chain_distribution(&b.transition, b.services.len(), t);
            let p_up: f64 = b
                .services
                .iter()
                .zip(&dist)
                .map(|(sid, w)| w * service_up[sid])
                .sum();
            tick_mean += p_up;
        }
        acc += tick_mean / model.businesses.len() as f64;
    }
    Ok(acc / ticks as f64)
}

/// Distribution over service positions at call number `t` (1-based): uniform
/// initial, then `t - 1` applications of the transition matrix.
fn chain_distribution(transition: &[Vec<f64>], n: usize, t: u64) -> Vec<f64> {
    let mut dist = vec![1.0 / n as f64; n];
    for _ in 1..t {
        let mut next = vec![0.0; n];
        for (i, w) in dist.iter().enumerate() {
            for (j, p) in transition[i].iter().enumerate() {
                next[j] += w * p;
            }
        }
        dist = next;
    }
    dist
}

/// Independent second route: exhaustive enumeration of per-agent failure-time
/// assignments with exact probabilities.
///
/// Domain: at most [`BRUTE_FORCE_MAX_AGENTS`] agents, at most
/// [`BRUTE_FORCE_MAX_TICKS`] ticks, and a single deterministic service per
/// business.
pub fn brute_force_availability(model: &SystemModel, ticks: u64) -> Result<f64, OracleError> {
    if ticks == 0 {
        return Err(OracleError::UndefinedMetric);
    }
    let agents = model.agent_ids();
    if agents.len() > BRUTE_FORCE_MAX_AGENTS {
        return Err(OracleError::SizeExceeded(format!(
            "{} agents > {BRUTE_FORCE_MAX_AGENTS}",
            agents.len()
        )));
    }
    if ticks > BRUTE_FORCE_MAX_TICKS {
        return Err(OracleError::SizeExceeded(format!(
            "{ticks} ticks > {BRUTE_FORCE_MAX_TICKS}"
        )));
    }
    for b in &model.businesses {
        if b.services.len() != 1 {
            return Err(OracleError::Unsupported(format!(
                "business {} manages {} services; brute force needs a single deterministic chain",
                b.id,
                b.services.len()
            )));
        }
    }
    let eligibility = Eligibility::from_model(model);
    check_domain(model, &eligibility)?;

    let closures = model::all_closures(model);
    let reliabilities: Vec<f64> = agents
        .iter()
        .map(|a| model.reliability(*a).expect("agent exists"))
        .collect();

    // fail_time[i] in 1..=ticks is the first tick agent i fails on;
    // ticks + 1 encodes surviving the whole horizon.
    let mut fail_time = vec![1u64; agents.len()];
    let mut total = 0.0;
    loop {
        let mut prob = 1.0;
        for (i, &f) in fail_time.iter().enumerate() {
            let r = reliabilities[i];
            prob *= if f <= ticks {
                r.powi(f as i32 - 1) * (1.0 - r)
            } else {
                r.powi(ticks as i32)
            };
        }
        if prob > 0.0 {
            let alive = |id: AgentId, t: u64| {
                let i = agents.iter().position(|a| *a == id).expect("agent");
                fail_time[i] > t
            };
            let mut up_ticks = 0.0;
            for t in 1..=ticks {
                let mut mean = 0.0;
                for b in &model.businesses {
                    let sid = b.services[0];
                    let up = closures[&sid].iter().all(|a| {
                        alive(*a, t)
                            || eligibility
                                .substitutes(*a)
                                .map(|subs| subs.iter().any(|s| alive(*s, t)))
                                .unwrap_or(false)
                    });
                    if up {
                        mean += 1.0;
                    }
                }
                up_ticks += mean / model.businesses.len() as f64;
            }
            total += prob * up_ticks / ticks as f64;
        }

        // Odometer over assignments.
        let mut i = 0;
        loop {
            if i == fail_time.len() {
                return Ok(total);
            }
            fail_time[i] += 1;
            if fail_time[i] <= ticks + 1 {
                break;
            }
            fail_time[i] = 1;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BehaviorProfile, BusinessAgent, BusinessState, ComponentAgent, ServiceAgent, ServiceState,
    };
    use crate::reconfig::{ReconfigModel, ReconfigRule};

    fn component(index: u64, reliability: f64) -> ComponentAgent {
        ComponentAgent {
            id: AgentId::component(index),
            reliability,
            status: Status::Normal,
            repair_ticks: None,
            behavior: BehaviorProfile::default(),
        }
    }

    fn single_component_model(reliability: f64) -> SystemModel {
        SystemModel {
            components: vec![component(0, reliability)],
            connectors: vec![],
            services: vec![ServiceAgent {
                id: 0,
                state: ServiceState::Idle,
                support_set: [AgentId::component(0)].into_iter().collect(),
            }],
            businesses: vec![BusinessAgent {
                id: 0,
                duty_cycle: 1.0,
                transition: vec![vec![1.0]],
                services: vec![0],
                state: BusinessState::Idle,
                critical: true,
            }],
            reconfig: ReconfigModel::default(),
        }
    }

    fn with_substitute(reliability: f64) -> SystemModel {
        let mut m = single_component_model(reliability);
        m.components.push(component(1, reliability));
        m.reconfig.rules.push(ReconfigRule {
            failed: AgentId::component(0),
            substitutes: vec![AgentId::component(1)],
        });
        m
    }

    #[test]
    fn slot_closed_form() {
        let m = with_substitute(0.5);
        // No substitutes: r^t.
        let p = exact_slot_availability(AgentId::component(0), &[], 2, &m).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
        // One substitute: 1 - (1 - 0.25)^2.
        let p = exact_slot_availability(AgentId::component(0), &[AgentId::component(1)], 2, &m)
            .unwrap();
        assert!((p - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn slot_perfect_reliability_is_one() {
        let m = single_component_model(1.0);
        for t in [1, 5, 100] {
            let p = exact_slot_availability(AgentId::component(0), &[], t, &m).unwrap();
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn slot_rejects_finite_repair() {
        let mut m = single_component_model(0.5);
        m.components[0].repair_ticks = Some(3);
        assert!(matches!(
            exact_slot_availability(AgentId::component(0), &[], 1, &m),
            Err(OracleError::Unsupported(_))
        ));
    }

    #[test]
    fn hand_derived_single_component() {
        let m = single_component_model(0.5);
        let v = exact_expected_availability(&m, 2).unwrap();
        assert!((v - 0.375).abs() < 1e-15);
        let b = brute_force_availability(&m, 2).unwrap();
        assert!((b - 0.375).abs() < 1e-15);
    }

    #[test]
    fn hand_derived_with_substitute() {
        let m = with_substitute(0.5);
        let v = exact_expected_availability(&m, 2).unwrap();
        assert!((v - 0.59375).abs() < 1e-15);
        let b = brute_force_availability(&m, 2).unwrap();
        assert!((b - 0.59375).abs() < 1e-15);
    }

    #[test]
    fn two_agent_series_service() {
        // Both must survive one sampling: 0.5^2 = 0.25.
        let mut m = single_component_model(0.5);
        m.components.push(component(1, 0.5));
        m.services[0].support_set.insert(AgentId::component(1));
        let v = exact_expected_availability(&m, 1).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let b = brute_force_availability(&m, 1).unwrap();
        assert!((b - 0.25).abs() < 1e-15);
    }

    #[test]
    fn perfect_reliability_is_one_for_any_horizon() {
        let m = with_substitute(1.0);
        for t in [1, 3, 10] {
            assert_eq!(exact_expected_availability(&m, t).unwrap(), 1.0);
            assert_eq!(brute_force_availability(&m, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn empty_horizon_is_undefined() {
        let m = single_component_model(0.5);
        assert!(matches!(
            exact_expected_availability(&m, 0),
            Err(OracleError::UndefinedMetric)
        ));
        assert!(matches!(
            brute_force_availability(&m, 0),
            Err(OracleError::UndefinedMetric)
        ));
    }

    #[test]
    fn bounds_enforced() {
        let mut m = single_component_model(0.9);
        for i in 1..13 {
            m.components.push(component(i, 0.9));
        }
        assert!(matches!(
            exact_expected_availability(&m, 2),
            Err(OracleError::SizeExceeded(_))
        ));
        assert!(matches!(
            brute_force_availability(&m, 2),
            Err(OracleError::SizeExceeded(_))
        ));
        let m = single_component_model(0.9);
        assert!(matches!(
            brute_force_availability(&m, 11),
            Err(OracleError::SizeExceeded(_))
        ));
    }

    #[test]
    fn overlapping_pools_rejected() {
        let mut m = with_substitute(0.5);
        m.components.push(component(2, 0.5));
        m.services.push(ServiceAgent {
            id: 1,
            state: ServiceState::Idle,
            support_set: [AgentId::component(2)].into_iter().collect(),
        });
        m.businesses.push(BusinessAgent {
            id: 1,
            duty_cycle: 1.0,
            transition: vec![vec![1.0]],
            services: vec![1],
            state: BusinessState::Idle,
            critical: true,
        });
        // com1 substitutes for both com0 and com2.
        m.reconfig.rules.push(ReconfigRule {
            failed: AgentId::component(2),
            substitutes: vec![AgentId::component(1)],
        });
        assert!(matches!(
            exact_expected_availability(&m, 2),
            Err(OracleError::Unsupported(_))
        ));
    }

    #[test]
    fn routes_agree_on_shared_domain() {
        for (reliability, ticks) in [(0.3, 5), (0.5, 8), (0.9, 10), (0.99, 3)] {
            let m = with_substitute(reliability);
            let exact = exact_expected_availability(&m, ticks).unwrap();
            let brute = brute_force_availability(&m, ticks).unwrap();
            assert!(
                (exact - brute).abs() < 1e-12,
                "r={reliability} T={ticks}: {exact} vs {brute}"
            );
        }
    }

    #[test]
    fn monotone_in_substitutes_and_reliability() {
        let base = single_component_model(0.5);
        let with_sub = with_substitute(0.5);
        let t = 4;
        assert!(
            exact_expected_availability(&with_sub, t).unwrap()
                > exact_expected_availability(&base, t).unwrap()
        );
        let better = single_component_model(0.8);
        assert!(
            exact_expected_availability(&better, t).unwrap()
                > exact_expected_availability(&base, t).unwrap()
        );
    }
}
