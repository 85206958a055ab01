use proptest::prelude::*;

use symla_core::agents::{Agent, AgentIo, AgentState};
use symla_core::es::centered_ranks;
use symla_core::harness::ExperimentConfig;
use symla_core::lifetime::run_lifetime_observed;
use symla_core::{AgentConfig, AgentKind, EnvSpec, SplitRng};

fn state_len(s: &AgentState) -> usize {
    match s {
        AgentState::Symla(s) => s.h.len() + s.c.len() + s.fwd_msgs.len() + s.bwd_msgs.len(),
        AgentState::MetaRnn(s) => s.h.len() + s.c.len(),
        AgentState::Random => 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ranks_are_centered_and_bounded(xs in prop::collection::vec(-1e6f64..1e6, 2..200)) {
        let r = centered_ranks(&xs);
        prop_assert_eq!(r.len(), xs.len());
        prop_assert!(r.iter().sum::<f64>().abs() < 1e-9);
        prop_assert!(r.iter().all(|v| (-0.5..=0.5).contains(v)));
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if xs[i] < xs[j] {
                    prop_assert!(r[i] < r[j]);
                } else if xs[i] == xs[j] {
                    prop_assert_eq!(r[i], r[j]);
                }
            }
        }
    }

    #[test]
    fn ranks_ignore_monotone_transforms(xs in prop::collection::vec(-10f64..10.0, 2..100)) {
        let ys: Vec<f64> = xs.iter().map(|x| x.exp() * 3.0 - 1.0).collect();
        prop_assert_eq!(centered_ranks(&xs), centered_ranks(&ys));
    }

    #[test]
    fn symla_output_matches_action_count(a in 1usize..12, b in 2usize..8, seed in any::<u64>()) {
        let cfg = AgentConfig::default();
        let p = cfg.init_params(AgentKind::Symla, a, b, &mut SplitRng::new(seed));
        let agent = Agent::from_flat(AgentKind::Symla, a, b, &cfg, &p).unwrap();
        let mut state = agent.init_state(&mut SplitRng::new(seed ^ 1));
        let obs: Vec<f32> = (0..a).map(|i| i as f32 * 0.1).collect();
        let y = agent.forward(&mut state, &AgentIo { obs: &obs, reward: 1.0, prev_action: Some(b - 1) }).unwrap();
        prop_assert_eq!(y.len(), b);
        prop_assert!(y.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn inner_loop_memory_does_not_grow_with_time() {
    let cfg = AgentConfig::default();
    for kind in [AgentKind::Symla, AgentKind::MetaRnn] {
        for env in ["bandit.uniform_dep", "cartpole", "grid.heart_trap"] {
            let spec = EnvSpec::new(env);
            let shape = spec.shape().unwrap();
            let p = cfg.init_params(kind, shape.obs_dim, shape.actions, &mut SplitRng::new(0));
            let agent = Agent::from_flat(kind, shape.obs_dim, shape.actions, &cfg, &p).unwrap();
            let mut env_inst = spec.build(&SplitRng::new(1)).unwrap();
            let mut sizes = Vec::new();
            run_lifetime_observed(&agent, env_inst.as_mut(), 600, &SplitRng::new(2), |t| sizes.push(state_len(t.state)))
                .unwrap();
            assert_eq!(sizes.len(), 600);
            assert!(sizes.iter().all(|&s| s == sizes[0] && s > 0), "{kind} on {env}");
        }
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for dir in std::fs::read_dir(&root).unwrap() {
        for f in std::fs::read_dir(dir.unwrap().path()).unwrap() {
            let path = f.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
                assert_eq!(back.config_hash(), cfg.config_hash(), "{}", path.display());
                n += 1;
            }
        }
    }
    assert!(n >= 18, "found {n} configs");
}
