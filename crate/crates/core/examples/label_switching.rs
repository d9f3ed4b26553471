//! Label switching: scrambles the state labels of every draw of a short
//! chain and shows the relabeled summary does not move.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lmrj::model::{simulate_panel, Measurement, ModelParams, ModelSpec, PanelLikelihood};
use lmrj::postprocess::{summarize, StateOrdering};
use lmrj::priors::PriorSpec;
use lmrj::sampler::{frequency_start, run_chain, SamplerConfig};
use lmrj::trace::{ChainTrace, TraceRecord};

fn main() -> lmrj::Result<()> {
    let truth = ModelParams {
        initial: vec![0.7, 0.3],
        transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        measurement: Measurement::Basic { psi: vec![vec![vec![vec![0.8, 0.1], vec![0.15, 0.3], vec![0.05, 0.6]]]] },
    };
    let spec = ModelSpec::basic(vec![3], 4, true);
    let data = simulate_panel(&spec, &truth, 200, 3)?;
    let lik = PanelLikelihood::new(&spec, &data)?;
    let prior = PriorSpec::default();
    let cfg = SamplerConfig { sweeps: 5_000, burn_in: 1_000, seed: 5, ..SamplerConfig::default() };
    let mut records: Vec<TraceRecord> = Vec::new();
    let counts = run_chain(&lik, &spec, &prior, &cfg, frequency_start(&spec, &data)?, &mut records)?;
    let trace = ChainTrace::new(spec.clone(), prior.k_max, records, counts)?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut scrambled = trace.clone();
    for r in &mut scrambled.records {
        let mut perm: Vec<usize> = (0..r.k).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        r.theta = r.params(&spec)?.permuted(&perm).flatten();
    }

    let a = summarize(&trace, cfg.burn_in, StateOrdering::LastCategory)?;
    let b = summarize(&scrambled, cfg.burn_in, StateOrdering::LastCategory)?;
    println!("modal k = {}", a.k_star);
    for (x, y) in a.parameters.iter().zip(&b.parameters) {
        println!("{:<14} {:>9.5} {:>9.5}  diff {:.1e}", x.name, x.mean, y.mean, (x.mean - y.mean).abs());
    }
    Ok(())
}
