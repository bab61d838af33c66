mod common;

use common::oracles::{chi_square, CHI2_99};
use gerl_core::envs::{
    factor_class_as_model_class, gen_block, gen_factor_class, gen_factored, gen_model_class, ClassSpec, EnvSpec, Family,
};
use gerl_core::game::{BlockEnv, TabularObsPolicy};
use gerl_core::meta::{collect_triples, run_block, run_gerl_factored, run_gerl_mb, RunConfig, RunOutput};
use gerl_core::planner::Variant;
use gerl_core::replearn::{Dataset, ModelClass};
use gerl_core::rng::seeded;
use gerl_core::{Concept, GerlError};

fn env(seed: u64) -> BlockEnv {
    gen_block(&EnvSpec {
        seed,
        ..EnvSpec::default()
    })
    .unwrap()
}

fn mb(episodes: usize) -> RunConfig {
    RunConfig {
        variant: Variant::Mb,
        episodes,
        eval_every: 0,
        ..RunConfig::default()
    }
}

fn without_timing(out: &RunOutput) -> Vec<String> {
    out.records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.wall_ms = 0;
            format!("{r:?}")
        })
        .collect()
}

#[test]
fn each_round_adds_one_triple_per_buffer_and_step() {
    let env = env(1);
    let policy = TabularObsPolicy::uniform(env.horizon(), env.actions().size());
    let mut data = Dataset::new(env.horizon());
    let mut r = seeded(1);
    for n in 1..=25 {
        let fresh = collect_triples(&env, &policy, &mut data, &mut r).unwrap();
        let steps: Vec<usize> = fresh.iter().map(|(h, _, _)| *h).collect();
        assert_eq!(steps, vec![2, 1, 0]);
        for s in &data.steps {
            assert_eq!((s.main.len(), s.tilde.len()), (n, n));
        }
    }
    for h in 0..env.horizon() {
        let alphabet = env.obs_space(h).unwrap();
        let next = env.obs_space(h + 1).unwrap();
        for t in data.steps[h].union() {
            assert!(alphabet.contains(&t.obs) && next.contains(&t.next_obs));
        }
    }
}

#[test]
fn collected_actions_are_uniform() {
    let env = env(2);
    let a_n = env.actions().size();
    let policy = TabularObsPolicy::uniform(env.horizon(), a_n);
    let mut data = Dataset::new(env.horizon());
    let mut r = seeded(2);
    for _ in 0..10_000 {
        collect_triples(&env, &policy, &mut data, &mut r).unwrap();
    }
    for s in &data.steps {
        for buffer in [&s.main, &s.tilde] {
            let mut counts = vec![0; a_n];
            buffer.iter().for_each(|t| counts[t.joint] += 1);
            let stat = chi_square(&counts);
            assert!(stat < CHI2_99[a_n - 2], "chi-square {stat} over {a_n} actions");
        }
    }
}

#[test]
fn runs_are_deterministic_in_the_seed() {
    let env = env(3);
    let classes = ClassSpec::default();
    for variant in [Variant::Mb, Variant::Mf] {
        let cfg = RunConfig {
            variant,
            episodes: 12,
            eval_every: 4,
            seed: 9,
            ..RunConfig::default()
        };
        let a = run_block(&env, &cfg, &classes).unwrap();
        let b = run_block(&env, &cfg, &classes).unwrap();
        assert_eq!(without_timing(&a), without_timing(&b));
        assert_eq!(a.policy, b.policy);
        let c = run_block(&env, &RunConfig { seed: 10, ..cfg }, &classes).unwrap();
        assert_ne!(without_timing(&a), without_timing(&c));
    }
}

#[test]
fn output_policy_is_the_minimum_gap_episode() {
    let env = env(4);
    let out = run_block(
        &env,
        &RunConfig {
            episodes: 30,
            eval_every: 5,
            ..RunConfig::default()
        },
        &ClassSpec::default(),
    )
    .unwrap();
    let deltas: Vec<f64> = out.records.iter().map(|r| r.delta).collect();
    let first_min = deltas.iter().enumerate().fold(0, |b, (k, d)| if *d < deltas[b] { k } else { b });
    assert_eq!(out.best, first_min);
    for r in &out.records {
        assert_eq!(r.exploit.is_some(), r.n % 5 == 0);
        assert!((r.delta - r.spread - r.slack).abs() < 1e-12);
    }
    assert_eq!(out.records.iter().map(|r| r.n).collect::<Vec<_>>(), (1..=30).collect::<Vec<_>>());
}

#[test]
fn a_single_episode_run_is_valid() {
    let env = env(5);
    for variant in [Variant::Mb, Variant::Mf] {
        let out = run_block(
            &env,
            &RunConfig {
                variant,
                episodes: 1,
                eval_every: 1,
                ..RunConfig::default()
            },
            &ClassSpec::default(),
        )
        .unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.best, 0);
        assert!(out.records[0].exploit.unwrap() >= 0.0);
    }
}

#[test]
fn gap_shrinks_with_the_true_model() {
    let env = env(6);
    let full = gen_model_class(&env, &ClassSpec::default()).unwrap();
    let truth_only = ModelClass::new(
        full.steps.iter().zip(&full.truth).map(|(list, &t)| vec![list[t].clone()]).collect(),
        vec![0; env.horizon()],
    )
    .unwrap();
    let out = run_gerl_mb(&env, &truth_only, &mb(200)).unwrap();
    let first = out.records[0].delta;
    let last = out.records.last().unwrap().delta;
    assert!(last < first, "gap {first} -> {last}");
    assert!(out.records.iter().all(|r| r.selected == vec![0; env.horizon()]));
}

#[test]
fn nash_planning_is_rejected() {
    let cfg = RunConfig {
        concept: Concept::Ne,
        ..RunConfig::default()
    };
    assert!(matches!(
        run_block(&env(7), &cfg, &ClassSpec::default()),
        Err(GerlError::Config(_))
    ));
    let zero = RunConfig {
        episodes: 0,
        ..RunConfig::default()
    };
    assert!(zero.validate().is_err());
}

#[test]
fn single_factor_run_matches_the_model_based_run() {
    let fenv = gen_factored(&EnvSpec {
        family: Family::Factored,
        players: 1,
        latents: 3,
        actions: 3,
        seed: 8,
        ..EnvSpec::default()
    })
    .unwrap();
    let fclass = gen_factor_class(&fenv, &ClassSpec::default()).unwrap();
    let mclass = factor_class_as_model_class(&fenv, &fclass).unwrap();
    let cfg = RunConfig {
        variant: Variant::Factored,
        ..mb(40)
    };
    let f = run_gerl_factored(&fenv, &fclass, &cfg).unwrap();
    let m = run_gerl_mb(&fenv.block, &mclass, &RunConfig { variant: Variant::Mb, ..cfg }).unwrap();
    let fd: Vec<f64> = f.records.iter().map(|r| r.delta - r.slack).collect();
    let md: Vec<f64> = m.records.iter().map(|r| r.delta - r.slack).collect();
    for (a, b) in fd.iter().zip(&md) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
