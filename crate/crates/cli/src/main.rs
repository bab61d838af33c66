use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gerl_core::envs::{ClassSpec, EnvSpec, Family, ObsMode, RewardRange, Topology};
use gerl_core::harness::{cmd_eval, cmd_run, cmd_table1, parse_seeds, ManifestFile, SeedList, TableOptions};
use gerl_core::io::{EnvDoc, Environment};
use gerl_core::meta::Selection;
use gerl_core::planner::{ScheduleMode, Variant};
use gerl_core::Concept;

#[derive(Parser)]
#[command(name = "gerl", version, about = "Representation learning for multi-player Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded environment and write it as JSON.
    Gen(GenArgs),
    /// Run seeded learning experiments.
    Run(RunArgs),
    /// Exact exploitability of a stored policy.
    Eval(EvalArgs),
    /// Regenerate the short/long-horizon exploitability table.
    Table1(TableArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "block")]
    family: Family,
    #[arg(long = "H", default_value_t = 3)]
    horizon: usize,
    #[arg(long = "Z", default_value_t = 3)]
    latents: usize,
    #[arg(long, default_value_t = 2)]
    players: usize,
    #[arg(long, default_value_t = 3)]
    actions: usize,
    /// Symbols per latent (categorical emission).
    #[arg(long = "k", default_value_t = 2)]
    per_latent: usize,
    #[arg(long, default_value = "categorical")]
    obs_mode: ObsMode,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value = "ring")]
    topology: Topology,
    /// Largest neighbourhood in factored games.
    #[arg(long = "L", default_value_t = 2)]
    locality: usize,
    #[arg(long, default_value = "symmetric")]
    reward_range: RewardRange,
    #[arg(long)]
    zero_sum: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML manifest; flags override its keys.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `0..4` (inclusive) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    concept: Option<Concept>,
    #[arg(long)]
    eval_concept: Option<Concept>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    selection: Option<Selection>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    check_kernel: bool,
    #[arg(long)]
    schedule: Option<ScheduleMode>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    replearn_lambda: Option<f64>,
    #[arg(long)]
    stage_eps: Option<f64>,
    /// Record per-episode wall-clock time (outputs stop being reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value = "cce")]
    concept: Concept,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value = "table1")]
    out: PathBuf,
    #[arg(long, default_value = "0..4")]
    seeds: String,
    #[arg(long, default_value_t = 200)]
    short_episodes: usize,
    #[arg(long, default_value_t = 500)]
    long_episodes: usize,
    #[arg(long)]
    timing: bool,
}

fn gen(a: GenArgs) -> anyhow::Result<()> {
    let spec = EnvSpec {
        family: a.family,
        horizon: a.horizon,
        latents: a.latents,
        players: a.players,
        actions: a.actions,
        per_latent: a.per_latent,
        obs_mode: a.obs_mode,
        sigma: a.sigma,
        topology: a.topology,
        locality: a.locality,
        reward_range: a.reward_range,
        zero_sum: a.zero_sum,
        seed: a.seed,
        ..EnvSpec::default()
    };
    let env = Environment::generate(&spec)?;
    EnvDoc::from_env(&env, Some(spec), Some(ClassSpec::default()))
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let file = match &a.manifest {
        Some(p) => ManifestFile::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ManifestFile::default(),
    };
    let flags = ManifestFile {
        env: a.env,
        out: a.out,
        seeds: a.seeds.map(SeedList::Text),
        eval_concept: a.eval_concept,
        timing: a.timing.then_some(true),
        variant: a.variant,
        concept: a.concept,
        episodes: a.episodes,
        selection: a.selection,
        rounds: a.rounds,
        eval_every: a.eval_every,
        check_kernel: a.check_kernel.then_some(true),
        schedule: a.schedule,
        beta: a.beta,
        lambda: a.lambda,
        replearn_lambda: a.replearn_lambda,
        stage_eps: a.stage_eps,
        ..ManifestFile::default()
    };
    let manifest = file.overlay(flags).resolve()?;
    let summary = cmd_run(&manifest).context("run failed")?;
    for r in &summary.runs {
        println!(
            "seed {}: best episode {} (delta {:.6}), exploitability {:.6}",
            r.seed, r.best_episode, r.best_delta, r.exploitability
        );
    }
    println!("final exploitability {}", summary.display);
    println!("outputs in {}", manifest.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let x = cmd_eval(&a.env, &a.policy, a.concept)
        .with_context(|| format!("evaluating {} on {}", a.policy.display(), a.env.display()))?;
    println!("{x:.6}");
    Ok(())
}

fn table1(a: TableArgs) -> anyhow::Result<()> {
    let options = TableOptions {
        seeds: parse_seeds(&a.seeds)?,
        short_episodes: a.short_episodes,
        long_episodes: a.long_episodes,
        timing: a.timing,
    };
    let table = cmd_table1(&a.out, &options)?;
    print!("{}", table.markdown());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Table1(a) => table1(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
