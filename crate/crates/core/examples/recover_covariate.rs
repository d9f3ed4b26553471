//! Replicate study for the covariate model: how often the 95% HPD interval
//! of each standardized coefficient covers its true value.

use lmrj::model::{
    simulate_panel_with_states, Covariates, DesignRecipe, Measurement, ModelParams, ModelSpec, PanelLikelihood,
};
use lmrj::postprocess::{summarize, StateOrdering};
use lmrj::priors::PriorSpec;
use lmrj::sampler::{frequency_start, run_chain, SamplerConfig};
use lmrj::trace::{ChainTrace, TraceRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const P: usize = 5;

fn main() -> lmrj::Result<()> {
    let mut args = std::env::args().skip(1);
    let sweeps: u64 = args.next().map_or(20_000, |s| s.parse().expect("sweep count"));
    let replicates: u64 = args.next().map_or(10, |s| s.parse().expect("replicate count"));
    let (n, t) = (300, 5);
    let beta = vec![0.5, -0.3, 0.0, 0.8, -0.6, -0.4, 0.6, 0.3, 0.0, -0.7];
    let truth = ModelParams {
        initial: vec![0.6, 0.4],
        transition: vec![vec![0.9, 0.1], vec![0.15, 0.85]],
        measurement: Measurement::Covariate {
            xi: vec![vec![-1.5, 1.0], vec![-1.0, 1.5]],
            beta: beta.clone(),
            gamma: vec![1.0],
        },
    };
    let spec = ModelSpec::covariate(t, DesignRecipe::shared((0..P).collect(), false));
    let mut total_covered = 0;
    for rep in 0..replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let raw = (0..n * t * P).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut cov = Covariates::new((1..=P).map(|c| format!("x{c}")).collect(), n, t, raw)?;
        for c in 0..P {
            cov.standardize(c)?;
        }
        let data = simulate_panel_with_states(&spec, &truth, n, Some(cov), 2000 + rep)?.data;
        let lik = PanelLikelihood::new(&spec, &data)?;
        let prior = PriorSpec::default();
        let mut cfg = SamplerConfig { sweeps, burn_in: sweeps / 4, seed: rep, ..SamplerConfig::default() };
        cfg.steps.beta = 0.05;
        cfg.steps.gamma = 0.3;
        cfg.steps.xi = 0.15;
        cfg.steps.transition = 0.3;
        let mut records: Vec<TraceRecord> = Vec::new();
        let start = std::time::Instant::now();
        let counts = run_chain(&lik, &spec, &prior, &cfg, frequency_start(&spec, &data)?, &mut records)?;
        let elapsed = start.elapsed();
        let trace = ChainTrace::new(spec.clone(), prior.k_max, records, counts)?;
        let summary = summarize(&trace, cfg.burn_in, StateOrdering::SupportPoint)?;
        let covered = summary
            .all_draws
            .iter()
            .filter(|p| p.name.starts_with("beta"))
            .zip(&beta)
            .filter(|(p, &b)| p.hpd.iter().any(|i| i.level == 0.95 && i.lower <= b && b <= i.upper))
            .count();
        total_covered += covered;
        let rates: Vec<String> = summary
            .counts
            .counts
            .iter()
            .map(|(kind, c)| format!("{} {:.1}%", kind.code(), 100.0 * c.rate()))
            .collect();
        println!(
            "replicate {rep}: k* = {} ({:.2}), {covered}/10 covered, {elapsed:.1?}, {}",
            summary.k_star,
            summary.k_mass[&summary.k_star],
            rates.join(" ")
        );
    }
    println!("mean coverage {:.1}/10", total_covered as f64 / replicates as f64);
    Ok(())
}
