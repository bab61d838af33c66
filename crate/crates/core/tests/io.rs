use std::fs;

use gerl_core::envs::{ClassSpec, EnvSpec, Family, ObsMode};
use gerl_core::game::exploitability;
use gerl_core::harness::{cmd_eval, cmd_run, EnvSource, ExperimentManifest, ManifestFile};
use gerl_core::io::{git_blob_sha1, EnvDoc, Environment, PolicyDoc};
use gerl_core::meta::RunConfig;
use gerl_core::planner::Variant;
use gerl_core::{Concept, GerlError};

fn bits(v: &[Vec<f64>]) -> Vec<u64> {
    v.iter().flatten().map(|x| x.to_bits()).collect()
}

#[test]
fn environments_round_trip_bit_exactly() {
    for (family, obs_mode) in [
        (Family::Tabular, ObsMode::Categorical),
        (Family::Block, ObsMode::Categorical),
        (Family::Block, ObsMode::Hadamard),
        (Family::Factored, ObsMode::Categorical),
    ] {
        let spec = EnvSpec {
            family,
            obs_mode,
            latents: 2,
            seed: 40,
            ..EnvSpec::default()
        };
        let env = Environment::generate(&spec).unwrap();
        let text = EnvDoc::from_env(&env, Some(spec.clone()), Some(ClassSpec::default())).to_json().unwrap();
        let doc = EnvDoc::from_json(&text).unwrap();
        let back = doc.to_env().unwrap();
        assert_eq!(EnvDoc::from_env(&back, doc.spec.clone(), doc.classes.clone()).to_json().unwrap(), text);
        let (a, b) = (env.block().latent(), back.block().latent());
        assert_eq!(bits(&a.transitions), bits(&b.transitions));
        assert_eq!(bits(&a.rewards), bits(&b.rewards));
        assert_eq!(bits(std::slice::from_ref(&a.init)), bits(std::slice::from_ref(&b.init)));
    }
}

#[test]
fn corrupted_documents_are_rejected() {
    let env = Environment::generate(&EnvSpec::default()).unwrap();
    let text = EnvDoc::from_env(&env, None, None).to_json().unwrap();
    let wrong_format = text.replacen("gerl-env", "something-else", 1);
    assert!(EnvDoc::from_json(&wrong_format).unwrap().to_env().is_err());
    assert!(EnvDoc::from_json("{").is_err());
}

#[test]
fn git_blob_hash_matches_git() {
    assert_eq!(git_blob_sha1(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    assert_eq!(git_blob_sha1(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

fn manifest(out: &std::path::Path, variant: Variant) -> ExperimentManifest {
    ExperimentManifest {
        env: EnvSource::Spec(EnvSpec {
            seed: 3,
            ..EnvSpec::default()
        }),
        run: RunConfig {
            variant,
            episodes: 15,
            eval_every: 5,
            ..RunConfig::default()
        },
        classes: ClassSpec::default(),
        seeds: vec![0, 1],
        out: out.to_path_buf(),
        eval_concept: Concept::Cce,
        timing: false,
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    for variant in [Variant::Mb, Variant::Mf] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sa = cmd_run(&manifest(a.path(), variant)).unwrap();
        let sb = cmd_run(&manifest(b.path(), variant)).unwrap();
        assert_eq!(sa, sb);
        for name in ["seed_0.csv", "seed_1.csv", "policy_seed_0.json", "policy_seed_1.json", "summary.json"] {
            let x = fs::read(a.path().join(name)).unwrap();
            let y = fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name} differs");
        }
        let csv = fs::read_to_string(a.path().join("seed_0.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# manifest_sha256=") && lines[1].starts_with("# env_sha1="));
        assert_eq!(lines[2], "n,delta,vbar_0,vbar_1,vlow_0,vlow_1,exploit,wall_ms");
        assert_eq!(lines.len(), 3 + 15);
        assert!(lines[3].ends_with(",,0"));
        assert!(!lines[7].contains(",,"));
    }
}

#[test]
fn stored_policies_evaluate_to_the_reported_exploitability() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [Variant::Mb, Variant::Mf] {
        let out = dir.path().join(variant.to_string());
        let m = manifest(&out, variant);
        let summary = cmd_run(&m).unwrap();
        let (env, bytes) = m.load_env().unwrap();
        let env_path = out.join("env.json");
        fs::write(&env_path, &bytes).unwrap();
        assert_eq!(git_blob_sha1(&bytes), summary.env_sha1);
        for run in &summary.runs {
            let path = out.join(format!("policy_seed_{}.json", run.seed));
            let x = cmd_eval(&env_path, &path, Concept::Cce).unwrap();
            assert_eq!(x.to_bits(), run.exploitability.to_bits());
            let policy = PolicyDoc::load(&path).unwrap().to_policy().unwrap();
            assert_eq!(exploitability(env.block(), &policy, Concept::Cce).unwrap().to_bits(), x.to_bits());
        }
    }
}

#[test]
fn manifest_files_resolve_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    fs::write(&path, "seeds = \"0..2\"\nvariant = \"mb\"\nhorizon = 4\nepisodes = 9\nschedule = \"theory\"\n").unwrap();
    let file = ManifestFile::load(&path).unwrap();
    let m = file
        .overlay(ManifestFile {
            horizon: Some(2),
            ..ManifestFile::default()
        })
        .resolve()
        .unwrap();
    assert_eq!(m.seeds, vec![0, 1, 2]);
    assert_eq!(m.run.episodes, 9);
    let EnvSource::Spec(spec) = &m.env else { panic!("expected a generated environment") };
    assert_eq!(spec.horizon, 2);
    let bad = ManifestFile {
        concept: Some(Concept::Ne),
        ..ManifestFile::default()
    };
    assert!(matches!(bad.resolve(), Err(GerlError::Config(_))));
}

#[test]
fn factored_variant_needs_a_factored_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), Variant::Factored);
    assert!(matches!(cmd_run(&m), Err(GerlError::Config(_))));
}
