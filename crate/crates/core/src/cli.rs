//! The `simulate`, `fit`, `summarize` and `check` commands.
//!
//! Each command is a plain function so it can be driven from tests and
//! examples; `src/bin/lmrj.rs` only parses flags and maps errors to exit
//! codes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::io::data::{read_covariates, write_covariates, write_responses};
use crate::io::report::{name_covariates, pool_chains, render_summary, write_occupancy};
use crate::io::tracefile::{read_trace, Thinned, TraceWriter};
use crate::model::{simulate_panel_with_states, Covariates, ModelParams, ModelSpec, PanelDataset, PanelLikelihood};
use crate::postprocess::{occupancy_fractions, summarize, summarize_at, Occupancy, PosteriorSummary, StateOrdering};
use crate::sampler::{frequency_start, run_chain};
use crate::selfcheck::{run_checks, CheckLine, CheckOptions};
use crate::trace::{ChainTrace, TraceSink};

/// Process exit status for a result.
pub fn exit_code<T>(result: &Result<T>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_user_error() => 1,
        Err(_) => 2,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(path).map_err(|e| Error::invalid(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

/// Contents of a `simulate` parameter file (JSON, or TOML by extension).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationInput {
    pub spec: ModelSpec,
    pub params: ModelParams,
}

impl SimulationInput {
    pub fn load(path: &Path) -> Result<SimulationInput> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
        let input: SimulationInput = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        };
        input.spec.validate()?;
        input.params.validate(&input.spec)?;
        Ok(input)
    }
}

/// Reads a covariate file on its own, taking subjects (first appearance)
/// and occasions (sorted) from its rows.
pub fn read_covariate_file(path: &Path) -> Result<(Vec<String>, Vec<i64>, Covariates)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut subjects: Vec<String> = Vec::new();
    let mut occasions = std::collections::BTreeSet::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    for record in rdr.records() {
        let record = record?;
        if record.len() < 2 {
            continue;
        }
        if !subjects.iter().any(|s| s == &record[0]) {
            subjects.push(record[0].to_string());
        }
        if let Ok(o) = record[1].parse::<i64>() {
            occasions.insert(o);
        }
    }
    let occasions: Vec<i64> = occasions.into_iter().collect();
    let cells = subjects.len() * occasions.len();
    let skeleton =
        PanelDataset::with_labels(subjects.clone(), occasions.clone(), vec!["_".into()], vec![1], vec![0; cells])?;
    let cov = read_covariates(text.as_bytes(), &skeleton, &[])?;
    Ok((subjects, occasions, cov))
}

/// Files written by [`cmd_simulate`].
#[derive(Clone, Debug)]
pub struct SimulateOutput {
    pub responses: PathBuf,
    pub covariates: Option<PathBuf>,
    pub states: PathBuf,
}

/// Draws a panel and writes `responses.csv`, `states.csv` (1-based latent
/// states) and, for the covariate model, `covariates.csv` into `out_dir`.
/// The covariate model takes its subjects from `covariates`; `n` must then
/// be absent or equal to their count.
pub fn cmd_simulate(
    params_file: &Path,
    n: Option<usize>,
    seed: u64,
    covariates: Option<&Path>,
    out_dir: &Path,
) -> Result<SimulateOutput> {
    let input = SimulationInput::load(params_file)?;
    let spec = &input.spec;
    let (subjects, occasions, cov) = match (spec.design(), covariates) {
        (Some(_), Some(path)) => {
            let (s, o, c) = read_covariate_file(path)?;
            if n.is_some_and(|n| n != s.len()) {
                return Err(Error::invalid(format!(
                    "--n {} disagrees with the {} subjects of the covariate file",
                    n.unwrap_or(0),
                    s.len()
                )));
            }
            (s, o, Some(c))
        }
        (Some(_), None) => return Err(Error::invalid("the covariate model needs --covariates")),
        (None, Some(_)) => return Err(Error::invalid("--covariates applies to the covariate model only")),
        (None, None) => {
            let n = n.ok_or_else(|| Error::invalid("--n is required"))?;
            ((1..=n).map(|i| i.to_string()).collect(), (1..=spec.occasions as i64).collect(), None)
        }
    };
    if occasions.len() != spec.occasions {
        return Err(Error::invalid(format!(
            "covariate file has {} occasions, the model has {}",
            occasions.len(),
            spec.occasions
        )));
    }
    let sim = simulate_panel_with_states(spec, &input.params, subjects.len(), cov, seed)?;
    let mut data = PanelDataset::with_labels(
        subjects,
        occasions,
        sim.data.variables.clone(),
        sim.data.levels.clone(),
        sim.data.responses().to_vec(),
    )?;
    if let Some(c) = sim.data.covariates.clone() {
        data = data.with_covariates(c)?;
    }

    let out = SimulateOutput {
        responses: out_dir.join("responses.csv"),
        covariates: data.covariates.as_ref().map(|_| out_dir.join("covariates.csv")),
        states: out_dir.join("states.csv"),
    };
    write_responses(create(&out.responses)?, &data)?;
    if let Some(p) = &out.covariates {
        write_covariates(create(p)?, &data)?;
    }
    let mut w = csv::Writer::from_writer(create(&out.states)?);
    w.write_record(["subject", "occasion", "state"])?;
    let t_count = data.occasions();
    for (i, s) in data.subjects.iter().enumerate() {
        for (t, o) in data.occasion_labels.iter().enumerate() {
            w.write_record([s.clone(), o.to_string(), (sim.states[i * t_count + t] + 1).to_string()])?;
        }
    }
    w.flush()?;
    Ok(out)
}

/// Summary artifacts for one prior.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub name: String,
    pub traces: Vec<PathBuf>,
    pub summary: PosteriorSummary,
    pub summary_json: PathBuf,
}

fn occupancy_stride(records: usize, stride: usize) -> usize {
    if stride > 0 {
        stride
    } else {
        records.div_ceil(1000).max(1)
    }
}

/// Writes `summary.json`, `summary.txt` and `occupancy.csv` into `dir`.
pub fn write_summary(dir: &Path, summary: &PosteriorSummary, occupancy: &[Occupancy]) -> Result<PathBuf> {
    let json = dir.join("summary.json");
    let mut w = create(&json)?;
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    w.flush()?;
    let mut w = create(&dir.join("summary.txt"))?;
    w.write_all(render_summary(summary).as_bytes())?;
    w.flush()?;
    write_occupancy(create(&dir.join("occupancy.csv"))?, occupancy)?;
    Ok(json)
}

/// Pools the chains after `burn_in` and summarizes at `k` (default: the
/// modal number of states).
pub fn summarize_chains(
    traces: &[ChainTrace],
    burn_in: u64,
    ordering: StateOrdering,
    k: Option<usize>,
) -> Result<PosteriorSummary> {
    let pooled = pool_chains(traces, burn_in)?;
    let mut summary = match k {
        Some(k) => summarize_at(&pooled, 0, ordering, k)?,
        None => summarize(&pooled, 0, ordering)?,
    };
    summary.burn_in = burn_in;
    Ok(summary)
}

fn occupancy_of(traces: &[ChainTrace], stride: usize) -> Result<Vec<Occupancy>> {
    traces
        .iter()
        .map(|t| occupancy_fractions(&t.records, t.k_max, occupancy_stride(t.records.len(), stride)))
        .collect()
}

/// Runs every chain for every prior of `cfg`. Traces go to
/// `out_dir/chain<c>.trace` (or `out_dir/<grid name>/chain<c>.trace` when a
/// grid is given) next to the summary files.
pub fn run_fit(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<FitResult>> {
    let data = cfg.load_data()?;
    let spec = cfg.model_spec(&data)?;
    let lik = PanelLikelihood::new(&spec, &data)?;
    let init = frequency_start(&spec, &data)?;
    let priors = cfg.priors()?;
    let gridded = !cfg.grid.is_empty();
    let mut results = Vec::new();
    for (name, prior) in priors {
        let dir = if gridded { out_dir.join(&name) } else { out_dir.to_path_buf() };
        let mut paths = Vec::new();
        for (c, seed) in cfg.seeds().into_iter().enumerate() {
            let path = dir.join(format!("chain{}.trace", c + 1));
            let mut sampler = cfg.sampler.clone();
            sampler.seed = seed;
            let mut writer = TraceWriter::new(create(&path)?, &spec, prior.k_max)?;
            let counts = {
                let mut thinned = Thinned { inner: &mut writer, every: cfg.run.thin };
                let sink: &mut dyn TraceSink = &mut thinned;
                run_chain(&lik, &spec, &prior, &sampler, init.clone(), sink)?
            };
            writer.finish(&counts)?.flush()?;
            paths.push(path);
        }
        let traces = paths.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>>>()?;
        let mut summary = summarize_chains(&traces, cfg.sampler.burn_in, cfg.run.ordering, None)?;
        if let Some(cov) = &data.covariates {
            name_covariates(&mut summary, &cov.names);
        }
        let json = write_summary(&dir, &summary, &occupancy_of(&traces, cfg.run.occupancy_stride)?)?;
        results.push(FitResult { name, traces: paths, summary, summary_json: json });
    }
    Ok(results)
}

/// `fit`: loads the config, applies the seed override and runs.
pub fn cmd_fit(
    config: &Path,
    output: Option<&Path>,
    seed: Option<u64>,
    sweeps: Option<u64>,
) -> Result<Vec<FitResult>> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.sampler.seed = s;
        cfg.run.seeds.clear();
    }
    if let Some(s) = sweeps {
        cfg.sampler.sweeps = s;
        cfg.validate()?;
    }
    let out = cfg.output_dir(output, config);
    run_fit(&cfg, &out)
}

/// `summarize`: pools the given traces and writes the summary files into
/// `out_dir`.
pub fn cmd_summarize(
    traces: &[PathBuf],
    burn_in: u64,
    ordering: StateOrdering,
    k: Option<usize>,
    occupancy_stride: usize,
    out_dir: &Path,
) -> Result<PosteriorSummary> {
    if traces.is_empty() {
        return Err(Error::invalid("no trace files given"));
    }
    let chains = traces.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>>>()?;
    let summary = summarize_chains(&chains, burn_in, ordering, k)?;
    write_summary(out_dir, &summary, &occupancy_of(&chains, occupancy_stride)?)?;
    Ok(summary)
}

/// Aligned text table of check results, one line per comparison.
pub fn render_checks(lines: &[CheckLine]) -> String {
    let w = lines.iter().map(|l| l.report.case.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<12} {:<w$} {:>14} {:>14} {:>10} {:>10} {:>10} {}\n",
        "suite", "case", "value", "oracle", "abs_err", "rel_err", "tol", "status"
    );
    for l in lines {
        let r = &l.report;
        out.push_str(&format!(
            "{:<12} {:<w$} {:>14.6e} {:>14.6e} {:>10.2e} {:>10.2e} {:>10.1e} {}\n",
            l.suite,
            r.case,
            r.main_value,
            r.oracle_value,
            r.abs_err,
            r.rel_err,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}

/// `check`: runs the oracle suites. A failed comparison is reported as a
/// numerical error so the process exits with status 2.
pub fn cmd_check(opts: &CheckOptions, json: bool, out: &mut dyn Write) -> Result<Vec<CheckLine>> {
    let lines = run_checks(opts)?;
    if json {
        serde_json::to_writer_pretty(&mut *out, &lines)?;
        writeln!(out)?;
    } else {
        out.write_all(render_checks(&lines).as_bytes())?;
    }
    let failed = lines.iter().filter(|l| !l.report.pass).count();
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} of {} checks failed", lines.len())));
    }
    Ok(lines)
}
