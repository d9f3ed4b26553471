//! The chain's posterior over k on tiny panels against marginal likelihoods
//! estimated by plain Monte Carlo over the prior.

mod common;

use lmrj::model::{
    forward_loglik, simulate_panel_with_states, DesignRecipe, ModelSpec, PanelDataset, PanelLikelihood,
};
use lmrj::priors::PriorSpec;
use lmrj::sampler::{frequency_start, run_chain, SamplerConfig};
use lmrj::trace::TraceRecord;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn marginal_posterior(spec: &ModelSpec, prior: &PriorSpec, data: &PanelDataset, draws: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let evidence: Vec<f64> = (1..=prior.k_max)
        .map(|k| {
            let total: f64 = (0..draws)
                .map(|_| forward_loglik(spec, &prior.sample(spec, k, &mut rng), data).unwrap().exp())
                .sum();
            total / draws as f64
        })
        .collect();
    let z: f64 = evidence.iter().sum();
    evidence.iter().map(|e| e / z).collect()
}

fn compare(spec: &ModelSpec, data: &PanelDataset) {
    let prior = PriorSpec { k_max: 3, ..PriorSpec::default() };
    let exact = marginal_posterior(spec, &prior, data, 200_000);
    let lik = PanelLikelihood::new(spec, data).unwrap();
    let cfg = SamplerConfig { sweeps: 200_000, burn_in: 10_000, seed: 5, ..SamplerConfig::default() };
    let mut records: Vec<TraceRecord> = Vec::new();
    run_chain(&lik, spec, &prior, &cfg, frequency_start(spec, data).unwrap(), &mut records).unwrap();
    let kept = &records[cfg.burn_in as usize..];
    for k in 1..=3 {
        let freq = kept.iter().filter(|r| r.k == k).count() as f64 / kept.len() as f64;
        println!("{} k = {k}: chain {freq:.4} marginal {:.4}", spec.variant_name(), exact[k - 1]);
        assert!((freq - exact[k - 1]).abs() < 0.03, "k = {k}: chain {freq} vs {}", exact[k - 1]);
    }
}

fn simulated(spec: &ModelSpec, n: usize, seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = PriorSpec::default().sample(spec, 2, &mut rng);
    let cov = spec.design().map(|_| common::random_covariates(n, spec.occasions, 1, &mut rng));
    simulate_panel_with_states(spec, &params, n, cov, seed).unwrap().data
}

#[test]
fn basic_chain_matches_marginal_likelihood_posterior() {
    let spec = ModelSpec::basic(vec![2], 3, true);
    let responses = vec![0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1];
    compare(&spec, &PanelDataset::new(vec![2], 6, 3, responses).unwrap());
}

#[test]
fn cutpoint_chain_matches_marginal_likelihood_posterior() {
    let spec = ModelSpec::cutpoint(3, 1, 3);
    compare(&spec, &simulated(&spec, 6, 3));
}

#[test]
fn covariate_chain_matches_marginal_likelihood_posterior() {
    let spec = ModelSpec::covariate(2, DesignRecipe { columns: vec![vec![0], vec![0]], occasion_dummies: false });
    compare(&spec, &simulated(&spec, 5, 4));
}
