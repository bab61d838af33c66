//! Seeded experiments: manifests, per-seed runs, metric files, and the
//! short/long-horizon exploitability table.
//!
//! Per-episode CSV schema (one file per seed, `seed_<s>.csv`):
//!
//! ```text
//! # manifest_sha256=<hex>
//! # env_sha1=<hex>
//! n,delta,vbar_0,..,vbar_{M-1},vlow_0,..,vlow_{M-1},exploit,wall_ms
//! ```
//!
//! Floats use six decimals. `exploit` is empty on episodes without an
//! exact evaluation. `wall_ms` is 0 unless timing is switched on, which
//! keeps repeated runs byte-identical.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{gen_factor_class, ClassSpec, EnvSpec, Family, ObsMode, RewardRange, Topology};
use crate::equilibrium::Concept;
use crate::error::{GerlError, Result};
use crate::game::exploitability;
use crate::io::{git_blob_sha1, EnvDoc, Environment, PolicyDoc, Provenance};
use crate::meta::{run_block, run_gerl_factored, EpisodeRecord, RunConfig, RunOutput, Selection};
use crate::planner::{ScheduleMode, Variant};

/// Seed list as written in a manifest: an array or a string such as
/// `"0..4"` (inclusive) or `"0,2,5"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedList {
    List(Vec<u64>),
    Text(String),
}

impl SeedList {
    pub fn seeds(&self) -> Result<Vec<u64>> {
        match self {
            Self::List(v) => Ok(v.clone()),
            Self::Text(s) => parse_seeds(s),
        }
    }
}

/// `"a..b"` and `"a..=b"` are both inclusive; otherwise a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || GerlError::Parse(format!("cannot read seeds from `{text}`"));
    let t = text.trim();
    if let Some((a, b)) = t.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    t.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

/// Flat key-value manifest. Every key is optional; [`ManifestFile::overlay`]
/// lets command-line flags replace file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestFile {
    /// Environment file; when absent the environment keys below generate one.
    pub env: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seeds: Option<SeedList>,
    pub eval_concept: Option<Concept>,
    pub timing: Option<bool>,

    pub family: Option<Family>,
    pub horizon: Option<usize>,
    pub latents: Option<usize>,
    pub players: Option<usize>,
    pub actions: Option<usize>,
    pub per_latent: Option<usize>,
    pub obs_mode: Option<ObsMode>,
    pub sigma: Option<f64>,
    pub eval_samples: Option<usize>,
    pub topology: Option<Topology>,
    pub locality: Option<usize>,
    pub reward_range: Option<RewardRange>,
    pub zero_sum: Option<bool>,
    pub env_seed: Option<u64>,

    pub variant: Option<Variant>,
    pub concept: Option<Concept>,
    pub episodes: Option<usize>,
    pub selection: Option<Selection>,
    pub rounds: Option<usize>,
    pub eval_every: Option<usize>,
    pub check_kernel: Option<bool>,
    pub stage_eps: Option<f64>,
    pub stage_max_iters: Option<usize>,

    pub schedule: Option<ScheduleMode>,
    pub c_alpha: Option<f64>,
    pub c_zeta: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub replearn_lambda: Option<f64>,
    pub delta: Option<f64>,

    pub decoders: Option<usize>,
    pub models: Option<usize>,
    pub factor_models: Option<usize>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($f:ident),+ $(,)?) => {
        $(if $src.$f.is_some() { $dst.$f = $src.$f; })+
    };
}

macro_rules! set_fields {
    ($dst:expr, $src:ident; $($f:ident => $g:ident),+ $(,)?) => {
        $(if let Some(v) = $src.$f.clone() { $dst.$g = v; })+
    };
}

impl ManifestFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GerlError::Parse(format!("manifest: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Keys set in `top` win.
    pub fn overlay(mut self, top: ManifestFile) -> Self {
        overlay_fields!(self, top;
            env, out, seeds, eval_concept, timing,
            family, horizon, latents, players, actions, per_latent, obs_mode, sigma, eval_samples,
            topology, locality, reward_range, zero_sum, env_seed,
            variant, concept, episodes, selection, rounds, eval_every, check_kernel, stage_eps, stage_max_iters,
            schedule, c_alpha, c_zeta, beta, lambda, replearn_lambda, delta,
            decoders, models, factor_models,
        );
        self
    }

    pub fn resolve(&self) -> Result<ExperimentManifest> {
        let env = match &self.env {
            Some(path) => EnvSource::File(path.clone()),
            None => {
                let mut spec = EnvSpec::default();
                set_fields!(spec, self;
                    family => family, horizon => horizon, latents => latents, players => players,
                    actions => actions, per_latent => per_latent, obs_mode => obs_mode, sigma => sigma,
                    eval_samples => eval_samples, topology => topology, locality => locality,
                    reward_range => reward_range, zero_sum => zero_sum, env_seed => seed,
                );
                EnvSource::Spec(spec)
            }
        };
        let mut run = RunConfig::default();
        set_fields!(run, self;
            variant => variant, concept => concept, episodes => episodes, selection => selection,
            rounds => rounds, eval_every => eval_every, check_kernel => check_kernel,
            stage_eps => stage_eps, stage_max_iters => stage_max_iters,
        );
        set_fields!(run.bonus, self;
            schedule => mode, c_alpha => c_alpha, c_zeta => c_zeta, beta => beta, lambda => lambda,
            replearn_lambda => replearn_lambda, delta => delta,
        );
        let mut classes = ClassSpec::default();
        set_fields!(classes, self; decoders => decoders, models => models, factor_models => factor_models);
        let seeds = match &self.seeds {
            Some(s) => s.seeds()?,
            None => vec![0],
        };
        let m = ExperimentManifest {
            env,
            run,
            classes,
            seeds,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
            eval_concept: self.eval_concept.unwrap_or(Concept::Cce),
            timing: self.timing.unwrap_or(false),
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvSource {
    File(PathBuf),
    Spec(EnvSpec),
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub env: EnvSource,
    /// Template configuration; its `seed` is replaced by each entry of `seeds`.
    pub run: RunConfig,
    pub classes: ClassSpec,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Concept of the final exploitability.
    pub eval_concept: Concept,
    /// Record wall-clock milliseconds per episode.
    pub timing: bool,
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(GerlError::Config("at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(GerlError::Config("seeds must be distinct".into()));
        }
        if let EnvSource::Spec(spec) = &self.env {
            spec.validate()?;
        }
        self.run.validate()
    }

    /// The environment and the exact bytes its hash is taken over.
    pub fn load_env(&self) -> Result<(Environment, Vec<u8>)> {
        match &self.env {
            EnvSource::File(path) => {
                let bytes = fs::read(path)?;
                let text = std::str::from_utf8(&bytes)
                    .map_err(|_| GerlError::Parse(format!("{} is not UTF-8", path.display())))?;
                Ok((EnvDoc::from_json(text)?.to_env()?, bytes))
            }
            EnvSource::Spec(spec) => {
                let env = Environment::generate(spec)?;
                let text = EnvDoc::from_env(&env, Some(spec.clone()), Some(self.classes.clone())).to_json()?;
                Ok((env, text.into_bytes()))
            }
        }
    }

    /// SHA-256 over everything that determines the outputs: the environment
    /// content hash and the resolved settings. Paths do not enter.
    pub fn sha256(&self, env_sha1: &str) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            env_sha1: &'a str,
            run: &'a RunConfig,
            classes: &'a ClassSpec,
            seeds: &'a [u64],
            eval_concept: Concept,
            timing: bool,
        }
        let mut run = self.run.clone();
        run.seed = 0;
        let view = View {
            env_sha1,
            run: &run,
            classes: &self.classes,
            seeds: &self.seeds,
            eval_concept: self.eval_concept,
            timing: self.timing,
        };
        let text = serde_json::to_string(&view).expect("manifest view serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// One learning run on `env`.
pub fn run_seed(env: &Environment, cfg: &RunConfig, classes: &ClassSpec) -> Result<RunOutput> {
    match (env, cfg.variant) {
        (Environment::Factored(f), Variant::Factored) => run_gerl_factored(f, &gen_factor_class(f, classes)?, cfg),
        (Environment::Block(_), Variant::Factored) => {
            Err(GerlError::Config("the factored variant needs a factored environment".into()))
        }
        (e, _) => run_block(e.block(), cfg, classes),
    }
}

/// Per-episode CSV text.
pub fn episode_csv(records: &[EpisodeRecord], players: usize, provenance: &Provenance, timing: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# manifest_sha256={}", provenance.manifest_sha256);
    let _ = writeln!(s, "# env_sha1={}", provenance.env_sha1);
    s.push_str("n,delta");
    for i in 0..players {
        let _ = write!(s, ",vbar_{i}");
    }
    for i in 0..players {
        let _ = write!(s, ",vlow_{i}");
    }
    s.push_str(",exploit,wall_ms\n");
    for r in records {
        let _ = write!(s, "{},{:.6}", r.n, r.delta);
        for v in r.vbar.iter().chain(&r.vlow) {
            let _ = write!(s, ",{v:.6}");
        }
        match r.exploit {
            Some(x) => {
                let _ = write!(s, ",{x:.6}");
            }
            None => s.push(','),
        }
        let _ = writeln!(s, ",{}", if timing { r.wall_ms } else { 0 });
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// 1-based episode whose policy was returned.
    pub best_episode: usize,
    pub best_delta: f64,
    pub exploitability: f64,
    pub sandwich_violations: usize,
    pub kernel_violations: usize,
    pub unconverged_stage_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub manifest_sha256: String,
    pub env_sha1: String,
    pub variant: Variant,
    pub concept: Concept,
    pub eval_concept: Concept,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    /// `"mean (std)"` with four decimals.
    pub display: String,
    pub runs: Vec<SeedReport>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.4} ({std:.4})")
}

/// Run every seed of `manifest` in turn and write the CSVs, the final
/// policies, and `summary.json` under `manifest.out`.
pub fn cmd_run(manifest: &ExperimentManifest) -> Result<Summary> {
    manifest.validate()?;
    let (env, bytes) = manifest.load_env()?;
    let env_sha1 = git_blob_sha1(&bytes);
    let provenance = Provenance {
        manifest_sha256: manifest.sha256(&env_sha1),
        env_sha1,
    };
    fs::create_dir_all(&manifest.out)?;
    let block = env.block();
    let mut runs = Vec::with_capacity(manifest.seeds.len());
    for &seed in &manifest.seeds {
        let cfg = RunConfig {
            seed,
            ..manifest.run.clone()
        };
        let out = run_seed(&env, &cfg, &manifest.classes)?;
        let csv = episode_csv(&out.records, block.players(), &provenance, manifest.timing);
        fs::write(manifest.out.join(format!("seed_{seed}.csv")), csv)?;
        let mut doc = PolicyDoc::from_policy(&out.policy);
        doc.provenance = Some(provenance.clone());
        doc.save(&manifest.out.join(format!("policy_seed_{seed}.json")))?;
        let best = out.best_record();
        runs.push(SeedReport {
            seed,
            best_episode: best.n,
            best_delta: best.delta,
            exploitability: exploitability(block, &out.policy, manifest.eval_concept)?,
            sandwich_violations: out.stats.sandwich_violations,
            kernel_violations: out.stats.kernel_violations,
            unconverged_stage_solves: out.stats.unconverged,
        });
    }
    let xs: Vec<f64> = runs.iter().map(|r| r.exploitability).collect();
    let (mean, std) = mean_std(&xs);
    let summary = Summary {
        manifest_sha256: provenance.manifest_sha256,
        env_sha1: provenance.env_sha1,
        variant: manifest.run.variant,
        concept: manifest.run.concept,
        eval_concept: manifest.eval_concept,
        episodes: manifest.run.episodes,
        seeds: manifest.seeds.clone(),
        mean,
        std,
        display: format_mean_std(mean, std),
        runs,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(manifest.out.join("summary.json"), text)?;
    Ok(summary)
}

/// Exact exploitability of a stored policy.
pub fn cmd_eval(env_path: &Path, policy_path: &Path, concept: Concept) -> Result<f64> {
    let env = EnvDoc::load(env_path)?.to_env()?;
    let policy = PolicyDoc::load(policy_path)?.to_policy()?;
    exploitability(env.block(), &policy, concept)
}

/// Environment seeds of the short-horizon (H = 3) table block.
pub const SHORT_ENV_SEEDS: [u64; 3] = [101, 102, 103];
/// Environment seeds of the long-horizon (H = 10) table block.
pub const LONG_ENV_SEEDS: [u64; 3] = [201, 202, 203];

/// Published final-policy exploitability, `[DQN, GeRL_MG2]` rows, mean (std).
pub const PUBLISHED_SHORT: [[&str; 3]; 2] = [
    ["0.0851 (0.1152)", "0.0877 (0.1961)", "0.0090 (0.0200)"],
    ["0.0013 (0.0018)", "0.0032 (0.0032)", "0.0004 (0.0009)"],
];
pub const PUBLISHED_LONG: [[&str; 3]; 2] = [
    ["0.2730 (0.3270)", "0.0340 (0.0760)", "0.0320 (0.0170)"],
    ["0.0780 (0.1560)", "0.0070 (0.0160)", "0.0060 (0.0130)"],
];

/// Rich-observation zero-sum block game used by the table.
pub fn table_env_spec(horizon: usize, seed: u64) -> EnvSpec {
    EnvSpec {
        horizon,
        obs_mode: ObsMode::Hadamard,
        zero_sum: true,
        seed,
        ..EnvSpec::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableOptions {
    pub seeds: Vec<u64>,
    pub short_episodes: usize,
    pub long_episodes: usize,
    pub timing: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            short_episodes: 200,
            long_episodes: 500,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub horizon: usize,
    /// 1-based environment index within its block.
    pub env: usize,
    pub env_seed: u64,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1 {
    pub cells: Vec<TableCell>,
    pub options: TableOptions,
}

impl Table1 {
    pub fn block(&self, horizon: usize) -> impl Iterator<Item = &TableCell> {
        self.cells.iter().filter(move |c| c.horizon == horizon)
    }

    pub fn markdown(&self) -> String {
        let seeds = self.options.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "# Final-policy exploitability (CCE), mean (std) over seeds {seeds}\n");
        for (horizon, episodes, published) in [
            (3, self.options.short_episodes, &PUBLISHED_SHORT),
            (10, self.options.long_episodes, &PUBLISHED_LONG),
        ] {
            let _ = writeln!(s, "| H={horizon} | Environment 1 | Environment 2 | Environment 3 |");
            s.push_str("|---|---|---|---|\n");
            let _ = writeln!(s, "| DQN (published) | {} |", published[0].join(" | "));
            let _ = writeln!(s, "| GeRL_MG2 (published) | {} |", published[1].join(" | "));
            let ours: Vec<&str> = self.block(horizon).map(|c| c.summary.display.as_str()).collect();
            let _ = writeln!(s, "| mf, N={episodes} (this build) | {} |", ours.join(" | "));
            let env_seeds: Vec<String> = self.block(horizon).map(|c| c.env_seed.to_string()).collect();
            let _ = writeln!(s, "\nEnvironment seeds: {}.\n", env_seeds.join(", "));
        }
        s
    }
}

/// Regenerate the six table environments, run the model-free learner on
/// each, and write `table1.md` plus per-environment run directories.
pub fn cmd_table1(out: &Path, options: &TableOptions) -> Result<Table1> {
    fs::create_dir_all(out)?;
    let mut cells = Vec::new();
    for (horizon, episodes, seeds) in [
        (3, options.short_episodes, SHORT_ENV_SEEDS),
        (10, options.long_episodes, LONG_ENV_SEEDS),
    ] {
        for (k, &env_seed) in seeds.iter().enumerate() {
            let dir = out.join(format!("h{horizon}_env{}", k + 1));
            fs::create_dir_all(&dir)?;
            let spec = table_env_spec(horizon, env_seed);
            let classes = ClassSpec::default();
            let env = Environment::generate(&spec)?;
            let env_path = dir.join("env.json");
            EnvDoc::from_env(&env, Some(spec), Some(classes.clone())).save(&env_path)?;
            let manifest = ExperimentManifest {
                env: EnvSource::File(env_path),
                run: RunConfig {
                    episodes,
                    eval_every: (episodes / 10).max(1),
                    ..RunConfig::default()
                },
                classes,
                seeds: options.seeds.clone(),
                out: dir,
                eval_concept: Concept::Cce,
                timing: options.timing,
            };
            let summary = cmd_run(&manifest)?;
            cells.push(TableCell {
                horizon,
                env: k + 1,
                env_seed,
                summary,
            });
        }
    }
    let table = Table1 {
        cells,
        options: options.clone(),
    };
    fs::write(out.join("table1.md"), table.markdown())?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_are_inclusive() {
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_seeds("7, 1,3").unwrap(), vec![7, 1, 3]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let file = ManifestFile::from_toml("episodes = 50\nbeta = 0.2\nseeds = [1, 2]\nvariant = \"mb\"\n").unwrap();
        let flags = ManifestFile {
            episodes: Some(7),
            ..ManifestFile::default()
        };
        let m = file.overlay(flags).resolve().unwrap();
        assert_eq!(m.run.episodes, 7);
        assert_eq!(m.run.bonus.beta, 0.2);
        assert_eq!(m.run.variant, Variant::Mb);
        assert_eq!(m.seeds, vec![1, 2]);
    }

    #[test]
    fn manifest_rejects_unknown_keys_and_repeated_seeds() {
        assert!(ManifestFile::from_toml("episode = 3\n").is_err());
        let m = ManifestFile {
            seeds: Some(SeedList::Text("1,1".into())),
            ..ManifestFile::default()
        };
        assert!(m.resolve().is_err());
    }

    #[test]
    fn hash_ignores_paths_and_seed_template() {
        let a = ManifestFile::default().resolve().unwrap();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        b.run.seed = 99;
        assert_eq!(a.sha256("x"), b.sha256("x"));
        b.run.episodes += 1;
        assert_ne!(a.sha256("x"), b.sha256("x"));
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(format_mean_std(0.0013, 0.0018), "0.0013 (0.0018)");
    }

    #[test]
    fn csv_blank_exploit_and_zero_wall() {
        let r = EpisodeRecord {
            n: 1,
            delta: 0.5,
            spread: 0.0,
            slack: 0.5,
            vbar: vec![1.0, -1.0],
            vlow: vec![0.25, -1.5],
            exploit: None,
            sandwich_violations: 0,
            kernel_violations: 0,
            selected: vec![],
            wall_ms: 12,
        };
        let p = Provenance {
            manifest_sha256: "m".into(),
            env_sha1: "e".into(),
        };
        let csv = episode_csv(&[r], 2, &p, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[2], "n,delta,vbar_0,vbar_1,vlow_0,vlow_1,exploit,wall_ms");
        assert_eq!(lines[3], "1,0.500000,1.000000,-1.000000,0.250000,-1.500000,,0");
    }
}
