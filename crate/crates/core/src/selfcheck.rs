//! Oracle suites behind the `check` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::model::{
    forward_loglik, simulate_panel_with_states, Covariates, DesignRecipe, ModelParams, ModelSpec, PanelDataset,
};
use crate::oracle::{brute_force_loglik, numeric_split_jacobian, prior_chain_check, OracleReport, TOLERANCES};
use crate::priors::PriorSpec;
use crate::sampler::moves::{
    birth_params, combine_params, death_params, draw_split_aux, split_log_jacobian, split_params, state_vector_count,
};
use crate::sampler::{SamplerConfig, SplitAuxConfig};

pub const VARIANTS: [&str; 3] = ["basic", "cutpoint", "covariate"];

/// Standard normal covariates named `x1..xp`.
pub fn random_covariates<R: Rng + ?Sized>(n: usize, occasions: usize, p: usize, rng: &mut R) -> Covariates {
    let values = (0..n * occasions * p).map(|_| StandardNormal.sample(rng)).collect();
    Covariates::new((1..=p).map(|c| format!("x{c}")).collect(), n, occasions, values).expect("finite values")
}

/// Random specification of `variant` with at most three categories.
pub fn random_spec<R: Rng + ?Sized>(variant: &str, occasions: usize, rng: &mut R) -> ModelSpec {
    match variant {
        "basic" => {
            let r = rng.random_range(1..=2);
            let levels = (0..r).map(|_| rng.random_range(2..=3)).collect();
            ModelSpec::basic(levels, occasions, rng.random_bool(0.5))
        }
        "cutpoint" => ModelSpec::cutpoint(rng.random_range(2..=3), rng.random_range(1..=2), occasions),
        _ => ModelSpec::covariate(
            occasions,
            DesignRecipe { columns: vec![vec![0, 1], vec![1]], occasion_dummies: rng.random_bool(0.5) },
        ),
    }
}

/// Prior draw with `k <= 4` and a panel of at most three subjects and six
/// occasions simulated from it.
pub fn random_instance<R: Rng + ?Sized>(variant: &str, rng: &mut R) -> (ModelSpec, ModelParams, PanelDataset) {
    let k = rng.random_range(1..=4);
    let t = rng.random_range(1..=6);
    let n = rng.random_range(1..=3);
    let spec = random_spec(variant, t, rng);
    let params = PriorSpec::default().sample(&spec, k, rng);
    let cov = spec.design().map(|_| random_covariates(n, t, 2, rng));
    let seed = rng.random();
    let data = simulate_panel_with_states(&spec, &params, n, cov, seed).expect("valid instance").data;
    (spec, params, data)
}

/// Forward recursion against path enumeration on `cases` random instances,
/// cycling through the variants.
pub fn likelihood_suite(cases: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|i| {
            let variant = VARIANTS[i % VARIANTS.len()];
            let (spec, params, data) = random_instance(variant, &mut rng);
            let fwd = forward_loglik(&spec, &params, &data)?;
            let brute = brute_force_loglik(&spec, &params, &data)?;
            let case = format!("{variant} k={} T={} n={}", params.k(), spec.occasions, data.n());
            Ok(OracleReport::absolute(case, fwd, brute, TOLERANCES.loglik_abs))
        })
        .collect()
}

/// Analytic split Jacobian against finite differences, `per_variant` random
/// configurations for each variant.
pub fn jacobian_suite(per_variant: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SplitAuxConfig::default();
    let mut out = Vec::new();
    for variant in VARIANTS {
        for _ in 0..per_variant {
            let spec = random_spec(variant, 2, &mut rng);
            let k = rng.random_range(1..=3);
            let parent = PriorSpec::default().sample(&spec, k, &mut rng);
            let aux = draw_split_aux(&spec, &cfg, k, &mut rng);
            let (u0, at) = (rng.random_range(0..k), rng.random_range(0..=k));
            let est = numeric_split_jacobian(&spec, &parent, u0, at, &aux)?;
            let analytic = split_log_jacobian(&spec, &parent, u0, &aux);
            // compare |J| on the relative scale through the log determinants
            let rel = (est.log_abs_det - analytic).exp_m1().abs();
            let mut r = OracleReport::relative(
                format!("{variant} k={k} u0={u0} at={at}"),
                analytic.exp(),
                est.abs_det(),
                TOLERANCES.jacobian_rel,
            );
            r.rel_err = rel;
            r.pass = rel <= TOLERANCES.jacobian_rel && !est.ill_conditioned;
            out.push(r);
        }
    }
    Ok(out)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `combine(split(x))` and `death(birth(x))` on `cases` random states each;
/// the reported error is the largest absolute coordinate difference of
/// parameters and auxiliaries.
pub fn round_trip_suite(cases: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SplitAuxConfig::default();
    let prior = PriorSpec::default();
    let mut out = Vec::new();
    for i in 0..cases {
        let variant = VARIANTS[i % VARIANTS.len()];
        let spec = random_spec(variant, rng.random_range(1..=4), &mut rng);
        let k = rng.random_range(1..=4);
        let parent = prior.sample(&spec, k, &mut rng);

        let aux = draw_split_aux(&spec, &cfg, k, &mut rng);
        let (u0, at) = (rng.random_range(0..k), rng.random_range(0..=k));
        let child = split_params(&spec, &parent, u0, at, &aux);
        let keep = if u0 < at { u0 } else { u0 + 1 };
        let back = combine_params(&spec, &child, keep, at);
        let mut err = max_abs_diff(&back.params.flatten(), &parent.flatten());
        err = err.max(max_abs_diff(&back.aux.to_vec(), &aux.to_vec()));
        if (back.u0, back.insert_at) != (u0, at) {
            err = f64::INFINITY;
        }
        out.push(OracleReport::absolute(format!("split/combine {variant} k={k}"), err, 0.0, TOLERANCES.round_trip));

        let position = rng.random_range(0..=k);
        let block = prior.sample_state_block(&spec, k + 1, position, state_vector_count(&spec), &mut rng);
        let grown = birth_params(&parent, position, &block);
        let (shrunk, recovered) = death_params(&grown, position);
        let mut err = max_abs_diff(&shrunk.flatten(), &parent.flatten());
        err = err.max(max_abs_diff(&[recovered.initial], &[block.initial]));
        err = err.max(max_abs_diff(&recovered.row, &block.row));
        err = err.max(max_abs_diff(&recovered.column, &block.column));
        err = err.max(max_abs_diff(&recovered.measurement, &block.measurement));
        out.push(OracleReport::absolute(format!("birth/death {variant} k={k}"), err, 0.0, TOLERANCES.round_trip));
    }
    Ok(out)
}

/// The sampler against the prior alone: basic model, three categories,
/// `k_max = 3`.
pub fn prior_suite(sweeps: u64, seed: u64) -> Result<Vec<OracleReport>> {
    let spec = ModelSpec::basic(vec![3], 1, true);
    let prior = PriorSpec { k_max: 3, ..PriorSpec::default() };
    let cfg = SamplerConfig { sweeps, burn_in: 0, seed, ..SamplerConfig::default() };
    let init = prior.sample(&spec, 1, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(prior_chain_check(&spec, &prior, &cfg, init)?.as_oracle_reports())
}

/// Sizes of the `check` suites.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOptions {
    pub likelihood_cases: usize,
    pub jacobian_per_variant: usize,
    pub round_trips: usize,
    pub prior_sweeps: u64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            likelihood_cases: 100,
            jacobian_per_variant: 20,
            round_trips: 100,
            prior_sweeps: 100_000,
            seed: 1,
        }
    }
}

/// One line of the `check` table.
#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub suite: &'static str,
    pub report: OracleReport,
}

/// Runs every suite; a suite of size zero is skipped.
pub fn run_checks(opts: &CheckOptions) -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    let mut add = |suite: &'static str, reports: Vec<OracleReport>| {
        out.extend(reports.into_iter().map(|report| CheckLine { suite, report }));
    };
    add("likelihood", likelihood_suite(opts.likelihood_cases, opts.seed)?);
    add("jacobian", jacobian_suite(opts.jacobian_per_variant, opts.seed)?);
    add("round_trip", round_trip_suite(opts.round_trips, opts.seed)?);
    if opts.prior_sweeps > 0 {
        add("prior_chain", prior_suite(opts.prior_sweeps, opts.seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let opts = CheckOptions {
            likelihood_cases: 6,
            jacobian_per_variant: 1,
            round_trips: 6,
            prior_sweeps: 0,
            seed: 3,
        };
        let lines = run_checks(&opts).unwrap();
        assert_eq!(lines.len(), 6 + 3 + 12);
        for l in &lines {
            assert!(l.report.pass, "{} {}: {:?}", l.suite, l.report.case, l.report);
        }
    }
}
