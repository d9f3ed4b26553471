//! Fits the basic model to a panel simulated from a persistent 3-state chain
//! and compares the relabeled estimates with the truth.

use lmrj::model::{simulate_panel, Measurement, ModelParams, ModelSpec, PanelLikelihood};
use lmrj::postprocess::{summarize, StateOrdering};
use lmrj::priors::PriorSpec;
use lmrj::sampler::{frequency_start, run_chain, SamplerConfig};
use lmrj::trace::{ChainTrace, TraceRecord};

fn main() -> lmrj::Result<()> {
    let sweeps: u64 = std::env::args().nth(1).map_or(20_000, |s| s.parse().expect("sweep count"));
    let truth = ModelParams {
        initial: vec![0.868, 0.080, 0.052],
        transition: vec![
            vec![0.85, 0.12, 0.03],
            vec![0.06, 0.88, 0.06],
            vec![0.02, 0.06, 0.92],
        ],
        // psi[variable][slot][category][state]
        measurement: Measurement::Basic {
            psi: vec![vec![vec![
                vec![0.92, 0.075, 0.03],
                vec![0.056, 0.85, 0.07],
                vec![0.024, 0.075, 0.90],
            ]]],
        },
    };
    let spec = ModelSpec::basic(vec![3], 5, true);
    let data = simulate_panel(&spec, &truth, 237, 2024)?;
    let lik = PanelLikelihood::new(&spec, &data)?;
    let prior = PriorSpec::default();
    let mut cfg = SamplerConfig { sweeps, burn_in: sweeps / 4, seed: 7, ..SamplerConfig::default() };
    cfg.steps.transition = 0.3;
    cfg.steps.psi = 0.3;
    let mut records: Vec<TraceRecord> = Vec::new();
    let start = std::time::Instant::now();
    let counts = run_chain(&lik, &spec, &prior, &cfg, frequency_start(&spec, &data)?, &mut records)?;
    let elapsed = start.elapsed();
    let trace = ChainTrace::new(spec.clone(), prior.k_max, records, counts)?;
    let summary = summarize(&trace, cfg.burn_in, StateOrdering::LastCategory)?;

    println!("{sweeps} sweeps in {elapsed:.1?}");
    for (k, m) in &summary.k_mass {
        println!("P(k = {k}) = {m:.3}");
    }
    for (kind, c) in &summary.counts.counts {
        println!("{:<28} {:>8} {:>8} {:>6.2}%", kind.label(), c.performed, c.accepted, 100.0 * c.rate());
    }
    if summary.k_star == 3 {
        let truth_probs = truth.transition_probs();
        let mut worst: f64 = 0.0;
        for p in summary.parameters.iter().filter(|p| p.name.starts_with("pi[") && p.name.contains('|')) {
            let inner = &p.name[3..p.name.len() - 1];
            let (v, u) = inner.split_once('|').unwrap();
            let (v, u): (usize, usize) = (v.parse().unwrap(), u.parse().unwrap());
            let err = (p.mean - truth_probs[u - 1][v - 1]).abs();
            worst = worst.max(err);
            println!("{:<10} {:.3} (truth {:.3})", p.name, p.mean, truth_probs[u - 1][v - 1]);
        }
        println!("largest transition error {worst:.3}");
    }
    Ok(())
}
