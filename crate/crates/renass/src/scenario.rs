//! Model ingestion/serialization and generation of random topologies,
//! including the benchmark-scale 306-component / 459-connector shape.
//!
//! The file format is UTF-8 JSON, one document per model, with a top-level
//! `format_version` key. Unknown keys are rejected. See
//! `docs/model-format.md` for the schema.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    self, AgentId, AgentKind, BehaviorProfile, BusinessAgent, BusinessState, ComponentAgent,
    ConnectorAgent, ServiceAgent, ServiceState, Status, SystemModel, ValidationReport,
};
use crate::reconfig::{self, ReconfigModel, ReconfigRule};

pub const FORMAT_VERSION: u32 = 1;

/// Knobs for random model generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub components: u64,
    pub connectors: u64,
    pub services: u64,
    pub businesses: u64,
    /// Fraction of businesses marked critical.
    pub critical_fraction: f64,
    /// Dedicated substitutes assigned to each agent in a critical closure.
    pub substitutes_per_critical_agent: u64,
    /// Inclusive bounds on service support-set size.
    pub support_size_range: (u64, u64),
    /// Per-tick survival probability applied to every agent.
    pub reliability: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            components: 306,
            connectors: 459,
            services: 40,
            businesses: 10,
            critical_fraction: 0.3,
            substitutes_per_critical_agent: 2,
            support_size_range: (1, 3),
            reliability: 0.9999,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("infeasible generation parameters: {0}")]
    Infeasible(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model failed validation:\n{0}")]
    Invalid(ValidationReport),
}

fn check_params(p: &GenParams) -> Result<(), ScenarioError> {
    if p.components < 1 || p.services < 1 || p.businesses < 1 {
        return Err(ScenarioError::Infeasible(
            "components, services and businesses must be positive".into(),
        ));
    }
    if !(p.reliability > 0.0 && p.reliability <= 1.0) {
        return Err(ScenarioError::Infeasible(format!(
            "reliability {} outside (0, 1]",
            p.reliability
        )));
    }
    if !(0.0..=1.0).contains(&p.critical_fraction) {
        return Err(ScenarioError::Infeasible(format!(
            "critical_fraction {} outside [0, 1]",
            p.critical_fraction
        )));
    }
    let (lo, hi) = p.support_size_range;
    if lo < 1 || lo > hi {
        return Err(ScenarioError::Infeasible(format!(
            "support_size_range ({lo}, {hi}) is empty or starts at zero"
        )));
    }
    if p.connectors > 0 && p.components < 2 {
        return Err(ScenarioError::Infeasible(
            "connectors need at least two components".into(),
        ));
    }
    Ok(())
}

fn sample_distinct<T: Copy>(pool: &[T], k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    indices.shuffle(rng);
    indices.truncate(k);
    indices.into_iter().map(|i| pool[i]).collect()
}

/// Deterministically generates a valid model for a seed: a weakly connected
/// directed graph where feasible, random support sets, uniform transition
/// rows, and reconfiguration rules only for agents inside critical-business
/// closures, each with dedicated substitutes drawn from agents outside those
/// closures.
pub fn generate(params: &GenParams) -> Result<SystemModel, ScenarioError> {
    check_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let components: Vec<ComponentAgent> = (0..params.components)
        .map(|i| ComponentAgent {
            id: AgentId::component(i),
            reliability: params.reliability,
            status: Status::Normal,
            repair_ticks: None,
            behavior: BehaviorProfile::default(),
        })
        .collect();

    // Connectors: a random spanning tree first when the budget allows, which
    // makes the underlying undirected graph weakly connected.
    let mut connectors = Vec::with_capacity(params.connectors as usize);
    let n_com = params.components;
    let mut next_index = 0u64;
    if params.connectors >= n_com.saturating_sub(1) && n_com >= 2 {
        for i in 1..n_com {
            let parent = rng.random_range(0..i);
            let forward = rng.random::<bool>();
            let (s, t) = if forward { (parent, i) } else { (i, parent) };
            connectors.push(ConnectorAgent {
                id: AgentId::connector(next_index),
                reliability: params.reliability,
                status: Status::Normal,
                source: AgentId::component(s),
                target: AgentId::component(t),
                plan: Vec::new(),
                repair_ticks: None,
            });
            next_index += 1;
        }
    }
    while next_index < params.connectors {
        let s = rng.random_range(0..n_com);
        let mut t = rng.random_range(0..n_com - 1);
        if t >= s {
            t += 1;
        }
        connectors.push(ConnectorAgent {
            id: AgentId::connector(next_index),
            reliability: params.reliability,
            status: Status::Normal,
            source: AgentId::component(s),
            target: AgentId::component(t),
            plan: Vec::new(),
            repair_ticks: None,
        });
        next_index += 1;
    }

    let all_agents: Vec<AgentId> = components
        .iter()
        .map(|c| c.id)
        .chain(connectors.iter().map(|c| c.id))
        .collect();

    let (lo, hi) = params.support_size_range;
    let hi = hi.min(all_agents.len() as u64);
    let lo = lo.min(hi);
    let services: Vec<ServiceAgent> = (0..params.services)
        .map(|i| {
            let size = rng.random_range(lo..=hi) as usize;
            let support: BTreeSet<AgentId> = sample_distinct(&all_agents, size.max(1), &mut rng)
                .into_iter()
                .collect();
            ServiceAgent {
                id: i,
                state: ServiceState::Idle,
                support_set: support,
            }
        })
        .collect();

    // Round-robin service assignment; reuse cyclically when businesses
    // outnumber services.
    let n_bus = params.businesses;
    let mut business_services: Vec<Vec<u64>> = vec![Vec::new(); n_bus as usize];
    if params.services >= n_bus {
        for sid in 0..params.services {
            business_services[(sid % n_bus) as usize].push(sid);
        }
    } else {
        for b in 0..n_bus {
            business_services[b as usize].push(b % params.services);
        }
    }
    let n_critical = (params.critical_fraction * n_bus as f64).round() as usize;
    let critical_ids: BTreeSet<u64> = {
        let ids: Vec<u64> = (0..n_bus).collect();
        sample_distinct(&ids, n_critical.min(ids.len()), &mut rng)
            .into_iter()
            .collect()
    };
    let businesses: Vec<BusinessAgent> = (0..n_bus)
        .map(|i| {
            let svc = business_services[i as usize].clone();
            let n = svc.len();
            BusinessAgent {
                id: i,
                duty_cycle: 1.0,
                transition: vec![vec![1.0 / n as f64; n]; n],
                services: svc,
                state: BusinessState::Idle,
                critical: critical_ids.contains(&i),
            }
        })
        .collect();

    let mut model = SystemModel {
        components,
        connectors,
        services,
        businesses,
        reconfig: ReconfigModel::default(),
    };

    // Substitute pools: prefer agents outside every service closure (keeps
    // small models inside the oracle's independence domain), fall back to
    // agents merely outside the critical closure.
    let critical_closure = reconfig::critical_closure(&model);
    let in_any_closure: BTreeSet<AgentId> = model::all_closures(&model)
        .values()
        .flatten()
        .copied()
        .collect();
    let mut pool: Vec<AgentId> = all_agents
        .iter()
        .filter(|a| !in_any_closure.contains(a))
        .copied()
        .chain(
            all_agents
                .iter()
                .filter(|a| in_any_closure.contains(a) && !critical_closure.contains(a))
                .copied(),
        )
        .collect();
    // Deterministic shuffle within each preference tier.
    let strict_len = all_agents
        .iter()
        .filter(|a| !in_any_closure.contains(a))
        .count();
    pool[..strict_len].shuffle(&mut rng);
    pool[strict_len..].shuffle(&mut rng);

    let mut rules = Vec::new();
    let mut taken: BTreeSet<AgentId> = BTreeSet::new();
    let k = params.substitutes_per_critical_agent as usize;
    if k > 0 {
        for original in &critical_closure {
            let mut substitutes = Vec::with_capacity(k);
            for candidate in pool.iter() {
                if substitutes.len() == k {
                    break;
                }
                if candidate.kind == original.kind && !taken.contains(candidate) {
                    substitutes.push(*candidate);
                }
            }
            if substitutes.len() < k {
                return Err(ScenarioError::Infeasible(format!(
                    "not enough spare {:?} agents to give {original} {k} dedicated substitutes",
                    original.kind
                )));
            }
            taken.extend(substitutes.iter().copied());
            rules.push(ReconfigRule {
                failed: *original,
                substitutes,
            });
        }
    }
    model.reconfig.rules = rules;

    // Descriptive behavior profiles mirroring the rule table.
    for rule in &model.reconfig.rules.clone() {
        if rule.failed.kind == AgentKind::Component {
            if let Some(c) = model.components.iter_mut().find(|c| c.id == rule.failed) {
                c.behavior.knowledge = vec![rule.failed];
                c.behavior.plan = rule.substitutes.clone();
            }
        } else if let Some(c) = model.connectors.iter_mut().find(|c| c.id == rule.failed) {
            c.plan = rule.substitutes.clone();
        }
    }
    for c in &mut model.components {
        c.behavior.goal = critical_closure.contains(&c.id);
    }

    let report = model::validate(&model);
    if !report.is_valid() {
        return Err(ScenarioError::Invalid(report));
    }
    Ok(model)
}

/// On-disk representation: the model plus a format version marker.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    components: Vec<ComponentAgent>,
    connectors: Vec<ConnectorAgent>,
    services: Vec<ServiceAgent>,
    businesses: Vec<BusinessAgent>,
    reconfig: ReconfigModel,
}

pub fn save(model: &SystemModel, path: &Path) -> Result<(), ScenarioError> {
    let report = model::validate(model);
    if !report.is_valid() {
        return Err(ScenarioError::Invalid(report));
    }
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        components: model.components.clone(),
        connectors: model.connectors.clone(),
        services: model.services.clone(),
        businesses: model.businesses.clone(),
        reconfig: model.reconfig.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&file).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Parses, version-checks and validates a model file. Invalid content is
/// rejected with the full violation report.
pub fn load(path: &Path) -> Result<SystemModel, ScenarioError> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
    if file.format_version != FORMAT_VERSION {
        return Err(ScenarioError::UnsupportedVersion(file.format_version));
    }
    let model = SystemModel {
        components: file.components,
        connectors: file.connectors,
        services: file.services,
        businesses: file.businesses,
        reconfig: file.reconfig,
    };
    let report = model::validate(&model);
    if !report.is_valid() {
        return Err(ScenarioError::Invalid(report));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small_params() -> GenParams {
        GenParams {
            components: 12,
            connectors: 16,
            services: 4,
            businesses: 2,
            critical_fraction: 0.5,
            substitutes_per_critical_agent: 1,
            support_size_range: (1, 2),
            reliability: 0.99,
            seed: 7,
        }
    }

    #[test]
    fn generated_model_is_valid_with_exact_counts() {
        let p = small_params();
        let m = generate(&p).unwrap();
        assert!(model::validate(&m).is_valid());
        assert_eq!(m.components.len() as u64, p.components);
        assert_eq!(m.connectors.len() as u64, p.connectors);
        assert_eq!(m.services.len() as u64, p.services);
        assert_eq!(m.businesses.len() as u64, p.businesses);
    }

    #[test]
    fn minimal_model_generates() {
        let p = GenParams {
            components: 1,
            connectors: 0,
            services: 1,
            businesses: 1,
            critical_fraction: 0.0,
            substitutes_per_critical_agent: 0,
            support_size_range: (1, 1),
            reliability: 0.9,
            seed: 0,
        };
        let m = generate(&p).unwrap();
        assert!(model::validate(&m).is_valid());
        assert_eq!(m.components.len(), 1);
        assert!(m.connectors.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_models() {
        let p = small_params();
        let a = generate(&p).unwrap();
        let b = generate(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn generated_graph_is_weakly_connected() {
        let p = small_params();
        let m = generate(&p).unwrap();
        // Union-find over undirected edges.
        let mut parent: HashMap<u64, u64> = (0..p.components).map(|i| (i, i)).collect();
        fn find(parent: &mut HashMap<u64, u64>, x: u64) -> u64 {
            let p = parent[&x];
            if p == x {
                x
            } else {
                let root = find(parent, p);
                parent.insert(x, root);
                root
            }
        }
        for c in &m.connectors {
            let a = find(&mut parent, c.source.index);
            let b = find(&mut parent, c.target.index);
            parent.insert(a, b);
        }
        let roots: BTreeSet<u64> = (0..p.components).map(|i| find(&mut parent, i)).collect();
        assert_eq!(roots.len(), 1);
    }

    #[test]
    fn generated_substitute_pools_are_disjoint() {
        let p = small_params();
        let m = generate(&p).unwrap();
        let mut seen = BTreeSet::new();
        for rule in &m.reconfig.rules {
            for s in &rule.substitutes {
                assert!(seen.insert(*s), "substitute {s} shared between rules");
            }
        }
    }

    #[test]
    fn rules_cover_exactly_the_critical_closure() {
        let p = small_params();
        let m = generate(&p).unwrap();
        let closure = reconfig::critical_closure(&m);
        let ruled: BTreeSet<AgentId> = m.reconfig.rules.iter().map(|r| r.failed).collect();
        assert_eq!(ruled, closure);
    }

    #[test]
    fn infeasible_substitute_demand_errors() {
        let mut p = small_params();
        p.substitutes_per_critical_agent = 50;
        assert!(matches!(generate(&p), Err(ScenarioError::Infeasible(_))));
    }

    #[test]
    fn round_trip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = generate(&small_params()).unwrap();
        save(&m, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(m, loaded);
    }

    #[test]
    fn load_rejects_dangling_reference() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut m = generate(&small_params()).unwrap();
        save(&m, &path).unwrap();
        // Corrupt: point a connector at a missing component.
        m.connectors[0].target = AgentId::component(999);
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            components: m.components.clone(),
            connectors: m.connectors.clone(),
            services: m.services.clone(),
            businesses: m.businesses.clone(),
            reconfig: m.reconfig.clone(),
        };
        fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        match load(&path) {
            Err(ScenarioError::Invalid(report)) => {
                assert!(report
                    .violations
                    .iter()
                    .any(|v| v.message.contains("com999")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        fs::write(&path, "").unwrap();
        assert!(matches!(load(&path), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn load_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = generate(&small_params()).unwrap();
        save(&m, &path).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        value["surprise"] = serde_json::json!(1);
        fs::write(&path, value.to_string()).unwrap();
        assert!(matches!(load(&path), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn load_rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = generate(&small_params()).unwrap();
        save(&m, &path).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        value["format_version"] = serde_json::json!(2);
        fs::write(&path, value.to_string()).unwrap();
        assert!(matches!(
            load(&path),
            Err(ScenarioError::UnsupportedVersion(2))
        ));
    }
}
