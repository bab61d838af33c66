//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use common::oracles::{duality_gap, exhaustive_gap, mean_tv};
use common::{random_counts, random_game, random_payoffs, random_policy, rng};
use gerl_core::envs::{
    factor_class_as_model_class, gen_block, gen_factor_class, gen_factored, gen_model_class, ClassSpec, EnvSpec,
    Family, Topology,
};
use gerl_core::equilibrium::{solve_cce, solve_ce, solve_zero_sum_ne, SolverConfig, StageGame};
use gerl_core::game::{exploitability, player_gaps, roll_in_state, BlockEnv, TabularObsPolicy};
use gerl_core::harness::{cmd_run, cmd_table1, table_env_spec, EnvSource, ExperimentManifest, TableOptions};
use gerl_core::io::{EnvDoc, Environment};
use gerl_core::meta::{run_block, run_gerl_factored, run_gerl_mb, RunConfig};
use gerl_core::planner::{BonusParams, ScheduleMode, Variant};
use gerl_core::replearn::{mle_fit, Triple};
use gerl_core::rng::{seeded, SimRng};
use gerl_core::{ActionSpace, Concept};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn stage_solvers() -> Verdict {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let counts = random_counts(&mut r);
        let payoffs = random_payoffs(&mut r, &counts);
        let g = StageGame::new(ActionSpace::new(counts.clone()), payoffs.clone()).unwrap();
        let cce = solve_cce(&g, &cfg);
        let ce = solve_ce(&g, &cfg);
        for i in 0..counts.len() {
            worst = worst.max(exhaustive_gap(&counts, &payoffs, &cce.dist, i, false));
            worst = worst.max(exhaustive_gap(&counts, &payoffs, &ce.dist, i, true));
        }
    }
    let mut worst_ne: f64 = 0.0;
    for _ in 0..200 {
        let (rows, cols) = (r.random_range(1..=3), r.random_range(1..=3));
        let u: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let g = StageGame::zero_sum(&u).unwrap();
        let m = solve_zero_sum_ne(&g, &cfg).unwrap().marginals.unwrap();
        let flat: Vec<f64> = u.iter().flatten().copied().collect();
        worst_ne = worst_ne.max(duality_gap(&flat, rows, cols, &m[0], &m[1]));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-3 && worst_ne <= 1e-3 && secs < 60.0,
        format!("worst CCE/CE gap {worst:.2e}, worst NE duality gap {worst_ne:.2e}, {secs:.1} s"),
    )
}

fn exploration_triples(env: &BlockEnv, h: usize, n: usize, r: &mut SimRng) -> Vec<Triple> {
    let policy = TabularObsPolicy::uniform(env.horizon(), env.actions().size());
    (0..n)
        .map(|_| {
            let mut s = roll_in_state(env, &policy, h, r).unwrap();
            let obs = s.obs.clone();
            let joint = r.random_range(0..env.actions().size());
            let next_obs = env.step(&mut s, joint, r).unwrap().next_obs;
            Triple { obs, joint, next_obs }
        })
        .collect()
}

fn mle_consistency() -> Verdict {
    let start = Instant::now();
    // n = 25 is reported only, to show where selection errors still occur
    let sizes = [25, 250, 1000, 4000];
    let mut per_size = vec![Vec::new(); sizes.len()];
    for seed in 0..20 {
        let env = gen_block(&EnvSpec {
            seed: 500 + seed,
            ..EnvSpec::default()
        })
        .unwrap();
        let class = gen_model_class(&env, &ClassSpec::default()).unwrap();
        assert!(class.steps.iter().all(|s| s.len() == 64));
        let p = env.privileged();
        let lg = env.latent();
        let a_n = env.actions().size();
        for (k, &n) in sizes.iter().enumerate() {
            let mut r = seeded(seed * 10 + k as u64);
            let mut tv = 0.0;
            for h in 0..env.horizon() {
                let data = exploration_triples(&env, h, n, &mut r);
                let cand = &class.steps[h][mle_fit(&class.steps[h], &data).unwrap().index];
                let cur = env.obs_space(h).unwrap();
                let next = env.obs_space(h + 1).unwrap();
                let truth = |s: usize, a: usize, s2: usize| {
                    let z2 = p.decode(h + 1, &next[s2]);
                    lg.transition_row(h, p.decode(h, &cur[s]), a)[z2] * p.emission_prob(h + 1, &next[s2], z2)
                };
                tv += mean_tv(cur.len(), a_n, next.len(), |s, a, s2| cand.prob(&cur[s], a, &next[s2]), truth);
            }
            per_size[k].push(tv / env.horizon() as f64);
        }
    }
    let avg: Vec<f64> = per_size.iter().map(|v| mean(v)).collect();
    let med: Vec<f64> = per_size.into_iter().map(median).collect();
    let secs = start.elapsed().as_secs_f64();
    let monotone = med[1..].windows(2).all(|w| w[1] <= w[0]);
    verdict(
        monotone && med[3] <= 0.05 && secs < 120.0,
        format!(
            "median TV at n = 250/1000/4000: {:.4} / {:.4} / {:.4} (mean {:.4} / {:.4} / {:.4}; n = 25: median {:.4}, mean {:.4}), {secs:.1} s",
            med[1], med[2], med[3], avg[1], avg[2], avg[3], med[0], avg[0]
        ),
    )
}

fn kernel_simplex() -> Verdict {
    let mut violations = 0;
    let mut checks = 0;
    for env_seed in [101, 102] {
        let env = gen_block(&table_env_spec(3, env_seed)).unwrap();
        let cfg = RunConfig {
            episodes: 100,
            eval_every: 0,
            check_kernel: true,
            ..RunConfig::default()
        };
        let out = run_block(&env, &cfg, &ClassSpec::default()).unwrap();
        violations += out.stats.kernel_violations;
        checks += out.stats.kernel_checks;
    }
    verdict(
        violations == 0 && checks > 0,
        format!("{violations} violations over {checks} conditional checks"),
    )
}

fn table_reproduction() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let table = cmd_table1(dir.path(), &TableOptions::default()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (horizon, limit) in [(3, 0.05), (10, 0.15)] {
        let means: Vec<f64> = table.block(horizon).map(|c| c.summary.mean).collect();
        ok &= means.len() == 3 && means.iter().all(|m| *m <= limit);
        let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
        parts.push(format!("H={horizon}: {} (limit {limit})", shown.join(", ")));
    }
    verdict(ok, format!("{}; {:.0} s", parts.join("; "), start.elapsed().as_secs_f64()))
}

fn sandwich() -> Verdict {
    let mut violations = 0;
    let mut runs = 0;
    for seed in 0..3 {
        let cat = gen_block(&EnvSpec {
            seed: 600 + seed,
            ..EnvSpec::default()
        })
        .unwrap();
        let had = gen_block(&table_env_spec(3, 101 + seed)).unwrap();
        for (env, variant) in [(&cat, Variant::Mb), (&cat, Variant::Mf), (&had, Variant::Mf)] {
            for mode in [ScheduleMode::Constant, ScheduleMode::Theory] {
                let cfg = RunConfig {
                    variant,
                    episodes: 60,
                    eval_every: 0,
                    seed,
                    bonus: BonusParams {
                        mode,
                        ..BonusParams::default()
                    },
                    ..RunConfig::default()
                };
                violations += run_block(env, &cfg, &ClassSpec::default()).unwrap().stats.sandwich_violations;
                runs += 1;
            }
        }
    }
    verdict(violations == 0, format!("{violations} violations over {runs} runs"))
}

fn gap_soundness() -> Verdict {
    let mut cells = 0;
    let mut covered = 0;
    for (env, variant) in [
        (gen_block(&EnvSpec { seed: 700, ..EnvSpec::default() }).unwrap(), Variant::Mb),
        (gen_block(&table_env_spec(3, 101)).unwrap(), Variant::Mf),
    ] {
        for seed in 0..5 {
            let cfg = RunConfig {
                variant,
                episodes: 40,
                eval_every: 1,
                seed,
                bonus: BonusParams {
                    mode: ScheduleMode::Theory,
                    c_alpha: 1.0,
                    ..BonusParams::default()
                },
                ..RunConfig::default()
            };
            for rec in run_block(&env, &cfg, &ClassSpec::default()).unwrap().records {
                cells += 1;
                covered += usize::from(rec.exploit.unwrap() <= rec.delta + 0.1);
            }
        }
    }
    let frac = covered as f64 / cells as f64;
    verdict(frac >= 0.9, format!("{covered}/{cells} cells with exploitability <= gap + 0.1 ({:.1}%)", 100.0 * frac))
}

fn factored_reduction() -> Verdict {
    let single = gen_factored(&EnvSpec {
        family: Family::Factored,
        players: 1,
        seed: 800,
        ..EnvSpec::default()
    })
    .unwrap();
    let fclass = gen_factor_class(&single, &ClassSpec::default()).unwrap();
    let mclass = factor_class_as_model_class(&single, &fclass).unwrap();
    let mut identical = true;
    for seed in 0..3 {
        let cfg = RunConfig {
            episodes: 50,
            eval_every: 0,
            seed,
            ..RunConfig::default()
        };
        let f = run_gerl_factored(&single, &fclass, &RunConfig { variant: Variant::Factored, ..cfg.clone() }).unwrap();
        let m = run_gerl_mb(&single.block, &mclass, &RunConfig { variant: Variant::Mb, ..cfg }).unwrap();
        identical &= f.records.len() == m.records.len()
            && f.records.iter().zip(&m.records).all(|(a, b)| a.delta.to_bits() == b.delta.to_bits());
    }

    let ring = gen_factored(&EnvSpec {
        family: Family::Factored,
        players: 3,
        latents: 2,
        actions: 2,
        topology: Topology::Ring,
        locality: 2,
        seed: 801,
        ..EnvSpec::default()
    })
    .unwrap();
    let class = gen_factor_class(&ring, &ClassSpec::default()).unwrap();
    let uniform = TabularObsPolicy::uniform(ring.block.horizon(), ring.block.actions().size());
    let base = exploitability(&ring.block, &uniform, Concept::Cce).unwrap();
    let learned: Vec<f64> = (0..5)
        .map(|seed| {
            let cfg = RunConfig {
                variant: Variant::Factored,
                episodes: 300,
                eval_every: 0,
                seed,
                ..RunConfig::default()
            };
            let out = run_gerl_factored(&ring, &class, &cfg).unwrap();
            exploitability(&ring.block, &out.policy, Concept::Cce).unwrap()
        })
        .collect();
    let ours = mean(&learned);
    verdict(
        identical && ours <= 0.5 * base,
        format!("M=1 gap traces identical: {identical}; M=3 ring exploitability {ours:.4} vs uniform {base:.4}"),
    )
}

fn determinism() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut same = true;
    for variant in [Variant::Mb, Variant::Mf] {
        for d in &dirs {
            let m = ExperimentManifest {
                env: EnvSource::Spec(EnvSpec {
                    seed: 900,
                    ..EnvSpec::default()
                }),
                run: RunConfig {
                    variant,
                    episodes: 30,
                    eval_every: 10,
                    ..RunConfig::default()
                },
                classes: ClassSpec::default(),
                seeds: vec![0, 1, 2],
                out: d.path().join(variant.to_string()),
                eval_concept: Concept::Cce,
                timing: false,
            };
            cmd_run(&m).unwrap();
        }
        for s in 0..3 {
            let name = format!("{variant}/seed_{s}.csv");
            same &= fs::read(dirs[0].path().join(&name)).unwrap() == fs::read(dirs[1].path().join(&name)).unwrap();
        }
    }
    let mut exact = true;
    for family in [Family::Tabular, Family::Block, Family::Factored] {
        let spec = EnvSpec {
            family,
            latents: 2,
            seed: 901,
            ..EnvSpec::default()
        };
        let env = Environment::generate(&spec).unwrap();
        let path = dirs[0].path().join("env.json");
        EnvDoc::from_env(&env, Some(spec), None).save(&path).unwrap();
        let doc = EnvDoc::load(&path).unwrap();
        let back = doc.to_env().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        exact &= EnvDoc::from_env(&back, doc.spec.clone(), None).to_json().unwrap() == text;
        let bits = |e: &Environment| -> Vec<u64> {
            let lg = e.block().latent();
            lg.transitions.iter().chain(&lg.rewards).flatten().chain(&lg.init).map(|x| x.to_bits()).collect()
        };
        exact &= bits(&env) == bits(&back);
    }
    verdict(same && exact, format!("CSVs byte-identical: {same}; env JSON bit-exact: {exact}"))
}

fn nesting() -> Verdict {
    let mut r = rng(1009);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let counts = random_counts(&mut r);
        let states = r.random_range(1..=3);
        let g = random_game(&mut r, &counts, &[states, 1]);
        let p = random_policy(&mut r, &g);
        let cce = player_gaps(&g, &p, Concept::Cce).unwrap();
        let ce = player_gaps(&g, &p, Concept::Ce).unwrap();
        for (a, b) in cce.iter().zip(&ce) {
            worst = worst.max(a - b);
        }
    }
    verdict(worst <= 1e-9, format!("largest CCE gap minus CE gap {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("stage equilibrium solvers", stage_solvers),
        ("likelihood selection consistency", mle_consistency),
        ("ridge transition estimate stays on the simplex", kernel_simplex),
        ("short/long-horizon exploitability table", table_reproduction),
        ("optimistic and pessimistic values are ordered", sandwich),
        ("gap bounds exploitability (theory schedule)", gap_soundness),
        ("factored reduction", factored_reduction),
        ("determinism and serialization", determinism),
        ("CCE gap never exceeds CE gap", nesting),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let v = check();
        println!("{} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, k + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
