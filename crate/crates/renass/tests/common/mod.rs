//! Shared helpers for integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use renass::engine::{PmWindow, SimParams};
use renass::model::{
    AgentId, BehaviorProfile, BusinessAgent, BusinessState, ComponentAgent, ServiceAgent,
    ServiceState, Status, SystemModel,
};
use renass::reconfig::{ReconfigModel, ReconfigRule};
use renass::scenario::{self, GenParams};

pub fn component(index: u64, reliability: f64) -> ComponentAgent {
    ComponentAgent {
        id: AgentId::component(index),
        reliability,
        status: Status::Normal,
        repair_ticks: None,
        behavior: BehaviorProfile::default(),
    }
}

/// One critical business calling one service backed by one component.
pub fn single_component_model(reliability: f64) -> SystemModel {
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

/// Same, plus one hot-standby substitute for the component.
pub fn substitute_model(reliability: f64) -> SystemModel {
    let mut m = single_component_model(reliability);
    m.components.push(component(1, reliability));
    m.reconfig.rules.push(ReconfigRule {
        failed: AgentId::component(0),
        substitutes: vec![AgentId::component(1)],
    });
    m
}

/// A randomized small scenario: generated topology with randomized duty
/// cycles, finite repair times and preventive-maintenance windows.
pub fn random_scenario(seed: u64) -> (SystemModel, SimParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let components = rng.random_range(1..=10u64);
    let connectors = if components >= 2 {
        rng.random_range(0..=12u64)
    } else {
        0
    };
    let params = GenParams {
        components,
        connectors,
        services: rng.random_range(1..=5),
        businesses: rng.random_range(1..=3),
        critical_fraction: rng.random_range(0.0..=1.0),
        substitutes_per_critical_agent: rng.random_range(0..=2),
        support_size_range: {
            let lo = rng.random_range(1..=2u64);
            (lo, lo + rng.random_range(0..=2u64))
        },
        reliability: rng.random_range(0.05..=1.0),
        seed: rng.random(),
    };
    let mut model = match scenario::generate(&params) {
        Ok(m) => m,
        Err(_) => {
            // Substitute demand can be infeasible on tiny graphs; retry
            // without dedicated substitutes.
            let mut p = params.clone();
            p.substitutes_per_critical_agent = 0;
            scenario::generate(&p).expect("generation without substitutes is feasible")
        }
    };
    for b in &mut model.businesses {
        b.duty_cycle = rng.random_range(0.0..=1.0);
    }
    for c in &mut model.components {
        if rng.random_bool(0.3) {
            c.repair_ticks = Some(rng.random_range(1..=5));
        }
    }
    for c in &mut model.connectors {
        if rng.random_bool(0.3) {
            c.repair_ticks = Some(rng.random_range(1..=5));
        }
    }

    let mut sim = SimParams::new(rng.random_range(1..=40), rng.random());
    sim.reconfig_enabled = rng.random_bool(0.7);
    let agents = model.agent_ids();
    for _ in 0..rng.random_range(0..=2usize) {
        let agent = agents[rng.random_range(0..agents.len())];
        sim.pm_schedule.push(PmWindow {
            agent,
            period: rng.random_range(1..=10),
            duration: rng.random_range(1..=5),
        });
    }
    (model, sim)
}

/// Prints the acceptance verdict line and panics with details on failure.
pub fn verdict(criterion: &str, failures: &[String]) {
    if failures.is_empty() {
        println!("{criterion}: PASS");
    } else {
        println!("{criterion}: FAIL");
        panic!("{criterion} failed:\n{}", failures.join("\n"));
    }
}
