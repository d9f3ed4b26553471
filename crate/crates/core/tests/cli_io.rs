//! File formats and commands end to end.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lmrj::cli::{cmd_simulate, cmd_summarize, run_fit, SimulationInput};
use lmrj::io::config::RunConfig;
use lmrj::io::data::{ingest, read_responses, write_covariates, write_responses};
use lmrj::io::tracefile::{read_trace, write_trace};
use lmrj::model::{simulate_panel, Covariates, DesignRecipe, ModelSpec, PanelDataset};
use lmrj::postprocess::StateOrdering;
use lmrj::priors::PriorSpec;
use lmrj::trace::ChainTrace;

fn write_panel(dir: &Path, spec: &ModelSpec, n: usize, seed: u64) -> PathBuf {
    let params = PriorSpec::default().sample(spec, 2, &mut ChaCha8Rng::seed_from_u64(seed));
    let data = simulate_panel(spec, &params, n, seed).unwrap();
    let path = dir.join("responses.csv");
    write_responses(std::fs::File::create(&path).unwrap(), &data).unwrap();
    path
}

fn config(dir: &Path, body: &str) -> RunConfig {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    RunConfig::load(&path).unwrap()
}

const BASIC_RUN: &str = r#"
[data]
responses = "responses.csv"
[model]
variant = "basic"
[prior]
k_max = 4
[sampler]
sweeps = 100
burn_in = 20
seed = 11
"#;

#[test]
fn smoke_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &ModelSpec::basic(vec![3, 2], 4, true), 10, 1);
    let cfg = config(dir.path(), BASIC_RUN);
    let out = dir.path().join("out");
    let results = run_fit(&cfg, &out).unwrap();
    assert_eq!(results.len(), 1);
    for f in ["chain1.trace", "summary.json", "summary.txt", "occupancy.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let trace = read_trace(&out.join("chain1.trace")).unwrap();
    assert_eq!(trace.records.len(), 100);
    assert_eq!(trace.counts.sweeps, 100);
    let text = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(text.contains("Acceptance rates") && text.contains("Posterior distribution of the number of states"));
}

#[test]
fn equal_configs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &ModelSpec::cutpoint(3, 2, 4), 12, 2);
    let body = BASIC_RUN.replace("\"basic\"", "\"cutpoint\"").replace("[sampler]", "[run]\nchains = 2\n[sampler]");
    let cfg = config(dir.path(), &body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_fit(&cfg, &a).unwrap();
    run_fit(&cfg, &b).unwrap();
    for f in ["chain1.trace", "chain2.trace", "summary.json", "summary.txt", "occupancy.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_ne!(std::fs::read(a.join("chain1.trace")).unwrap(), std::fs::read(a.join("chain2.trace")).unwrap());
}

#[test]
fn sensitivity_grid_gives_one_summary_per_column() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &ModelSpec::cutpoint(3, 2, 4), 15, 3);
    let body = format!(
        "{}{}",
        BASIC_RUN.replace("\"basic\"", "\"cutpoint\""),
        r#"
[[grid]]
name = "persistence-5"
[[grid]]
name = "persistence-10"
prior = { sigma2_zeta = 10.0, sigma2_omega = 10.0 }
[[grid]]
name = "flat-5"
prior = { delta_uv = "flat" }
[[grid]]
name = "flat-10"
prior = { delta_uv = "flat", sigma2_zeta = 10.0, sigma2_omega = 10.0 }
"#
    );
    let cfg = config(dir.path(), &body);
    let out = dir.path().join("out");
    let results = run_fit(&cfg, &out).unwrap();
    assert_eq!(results.len(), 4);
    let mut summaries = 0;
    for r in &results {
        assert!(r.summary_json.starts_with(out.join(&r.name)));
        let mass_total: f64 = r.summary.k_mass.values().sum();
        assert!((mass_total - 1.0).abs() < 1e-12);
        summaries += r.summary_json.is_file() as usize;
    }
    assert_eq!(summaries, 4);
}

#[test]
fn single_state_prior_gives_unit_mass() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &ModelSpec::basic(vec![2], 3, true), 10, 4);
    let cfg = config(dir.path(), &BASIC_RUN.replace("k_max = 4", "k_max = 1"));
    let results = run_fit(&cfg, &dir.path().join("out")).unwrap();
    assert_eq!(results[0].summary.k_mass, BTreeMap::from([(1, 1.0)]));
}

#[test]
fn occupancy_rows_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &ModelSpec::basic(vec![3], 4, true), 10, 5);
    let cfg = config(dir.path(), &BASIC_RUN.replace("[sampler]", "[run]\nchains = 2\noccupancy_stride = 7\n[sampler]"));
    let out = dir.path().join("out");
    run_fit(&cfg, &out).unwrap();
    let text = std::fs::read_to_string(out.join("occupancy.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let sum: f64 = line.split(',').skip(2).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12, "{line}");
        rows += 1;
    }
    // 100 sweeps at stride 7 give 15 rows per chain
    assert_eq!(rows, 30);
}

fn scrambled(trace: &ChainTrace, seed: u64) -> ChainTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = trace.clone();
    for r in &mut out.records {
        let p = r.params(&trace.spec).unwrap();
        let mut perm: Vec<usize> = (0..r.k).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        r.theta = p.permuted(&perm).flatten();
    }
    out
}

#[test]
fn scrambled_labels_give_the_same_summary() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &ModelSpec::basic(vec![3], 5, true), 30, 6);
    let cfg = config(dir.path(), &BASIC_RUN.replace("sweeps = 100", "sweeps = 600"));
    let out = dir.path().join("out");
    run_fit(&cfg, &out).unwrap();
    let trace = read_trace(&out.join("chain1.trace")).unwrap();
    let mixed = dir.path().join("scrambled.trace");
    write_trace(std::fs::File::create(&mixed).unwrap(), &scrambled(&trace, 9)).unwrap();

    let a = cmd_summarize(&[out.join("chain1.trace")], 20, StateOrdering::LastCategory, None, 0, &dir.path().join("s1"))
        .unwrap();
    let b = cmd_summarize(&[mixed], 20, StateOrdering::LastCategory, None, 0, &dir.path().join("s2")).unwrap();
    assert_eq!(a.k_star, b.k_star);
    assert_eq!(a.parameters.len(), b.parameters.len());
    for (x, y) in a.parameters.iter().zip(&b.parameters) {
        assert_eq!(x.name, y.name);
        assert!((x.mean - y.mean).abs() <= 1e-12, "{}: {} vs {}", x.name, x.mean, y.mean);
    }
}

#[test]
fn mixed_variant_traces_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &ModelSpec::cutpoint(2, 2, 3), 8, 7);
    let basic = config(dir.path(), BASIC_RUN);
    let cut = config(dir.path(), &BASIC_RUN.replace("\"basic\"", "\"cutpoint\""));
    run_fit(&basic, &dir.path().join("b")).unwrap();
    run_fit(&cut, &dir.path().join("c")).unwrap();
    let traces = [dir.path().join("b/chain1.trace"), dir.path().join("c/chain1.trace")];
    let err = cmd_summarize(&traces, 0, StateOrdering::None, None, 0, &dir.path().join("s")).unwrap_err();
    assert!(err.to_string().contains("different models"), "{err}");
}

#[test]
fn ingest_reports_rows_and_cells() {
    let ok = "subject,occasion,var,value\na,1,y,0\na,2,y,1\nb,1,y,1\nb,2,y,0\n";
    let data = read_responses(ok.as_bytes(), &BTreeMap::new()).unwrap();
    assert_eq!((data.n(), data.occasions(), data.variables()), (2, 2, 1));

    let missing = "subject,occasion,var,value\na,1,y,0\na,2,y,1\nb,1,y,1\n";
    let err = read_responses(missing.as_bytes(), &BTreeMap::new()).unwrap_err().to_string();
    assert!(err.contains("subject b") && err.contains("occasion 2") && err.contains("var y"), "{err}");

    let dup = "subject,occasion,var,value\na,1,y,0\na,1,y,1\n";
    let err = read_responses(dup.as_bytes(), &BTreeMap::new()).unwrap_err().to_string();
    assert!(err.starts_with("line 3"), "{err}");

    let levels = BTreeMap::from([("y".to_string(), 2)]);
    let out_of_range = "subject,occasion,var,value\na,1,y,0\na,2,y,2\n";
    let err = read_responses(out_of_range.as_bytes(), &levels).unwrap_err().to_string();
    assert!(err.starts_with("line 3"), "{err}");
}

/// 482 subjects by 7 occasions, two binary responses and eight covariates.
fn psid_like(seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, t) = (482, 7);
    let responses: Vec<u16> = (0..n * t * 2).map(|_| rng.random_range(0..2)).collect();
    let subjects: Vec<String> = (0..n).map(|i| format!("id{:04}", 1000 + 7 * i)).collect();
    let data = PanelDataset::with_labels(
        subjects,
        (1987..1994).collect(),
        vec!["fertility".into(), "employment".into()],
        vec![2, 2],
        responses,
    )
    .unwrap();
    let mut cov = common::random_covariates(n, t, 8, &mut rng);
    cov.names = ["race", "age", "educ", "child1_2", "child3_5", "child6_13", "child14", "income"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    data.with_covariates(cov).unwrap()
}

#[test]
fn psid_shaped_panel_round_trips_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = psid_like(8);
    let (resp, cov) = (dir.path().join("r.csv"), dir.path().join("c.csv"));
    write_responses(std::fs::File::create(&resp).unwrap(), &data).unwrap();
    write_covariates(std::fs::File::create(&cov).unwrap(), &data).unwrap();

    let back = ingest(&resp, Some(&cov), &BTreeMap::new(), &[]).unwrap();
    assert_eq!(back, data);
    let mut r2 = Vec::new();
    let mut c2 = Vec::new();
    write_responses(&mut r2, &back).unwrap();
    write_covariates(&mut c2, &back).unwrap();
    assert_eq!(r2, std::fs::read(&resp).unwrap());
    assert_eq!(c2, std::fs::read(&cov).unwrap());

    // year dummies come from the design, never from the file
    let spec = ModelSpec::covariate(7, DesignRecipe::shared((0..8).collect(), true));
    assert_eq!(spec.n_beta(), 2 * (8 + 6));
}

#[test]
fn standardized_columns_have_unit_scale() {
    let dir = tempfile::tempdir().unwrap();
    let data = psid_like(9);
    let (resp, cov) = (dir.path().join("r.csv"), dir.path().join("c.csv"));
    write_responses(std::fs::File::create(&resp).unwrap(), &data).unwrap();
    write_covariates(std::fs::File::create(&cov).unwrap(), &data).unwrap();
    let back = ingest(&resp, Some(&cov), &BTreeMap::new(), &["age".into(), "income".into()]).unwrap();
    let c: &Covariates = back.covariates.as_ref().unwrap();
    for name in ["age", "income"] {
        let j = c.index_of(name).unwrap();
        let v: Vec<f64> = c.column(j).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        assert!(m.abs() < 1e-12 && (var - 1.0).abs() < 1e-12, "{name}: {m} {var}");
    }
    let untouched = c.index_of("race").unwrap();
    let orig = data.covariates.as_ref().unwrap();
    assert!(c.column(untouched).eq(orig.column(untouched)));
}

#[test]
fn simulate_then_fit_covariate_model() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::covariate(3, DesignRecipe::shared(vec![0, 1], false));
    let params = PriorSpec::default().sample(&spec, 2, &mut ChaCha8Rng::seed_from_u64(10));
    let input = SimulationInput { spec, params };
    let params_path = dir.path().join("params.json");
    std::fs::write(&params_path, serde_json::to_string(&input).unwrap()).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cov = common::random_covariates(12, 3, 2, &mut rng);
    let base = PanelDataset::new(vec![2], 12, 3, vec![0; 36]).unwrap().with_covariates(cov).unwrap();
    let cov_path = dir.path().join("cov_in.csv");
    write_covariates(std::fs::File::create(&cov_path).unwrap(), &base).unwrap();

    let sim = cmd_simulate(&params_path, None, 3, Some(&cov_path), &dir.path().join("sim")).unwrap();
    assert!(cmd_simulate(&params_path, Some(5), 3, Some(&cov_path), &dir.path().join("x")).is_err());
    assert_eq!(std::fs::read(sim.covariates.as_ref().unwrap()).unwrap(), std::fs::read(&cov_path).unwrap());

    let body = r#"
[data]
responses = "sim/responses.csv"
covariates = "sim/covariates.csv"
standardize = ["x2"]
[model]
variant = "covariate"
columns = [["x1", "x2"], ["x2"]]
occasion_dummies = false
[prior]
k_max = 3
[sampler]
sweeps = 100
burn_in = 10
"#;
    let cfg = config(dir.path(), body);
    let results = run_fit(&cfg, &dir.path().join("out")).unwrap();
    let names: Vec<&str> = results[0].summary.all_draws.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, vec!["beta1[x1]", "beta1[x2]", "beta2[x2]", "gamma[1]"]);
}
