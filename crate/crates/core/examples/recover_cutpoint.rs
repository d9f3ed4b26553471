//! Fits the cutpoint model to a simulated panel and compares the support
//! points and cutpoints with the truth.
//!
//! `(zeta + c, omega - c)` has the same likelihood for every `c`, so the
//! cutpoints are located only through their prior and the chain drifts
//! slowly along that direction; long runs are needed for stable means.

use lmrj::model::{cutpoint_probs, simulate_panel, Measurement, ModelParams, ModelSpec, PanelLikelihood};
use lmrj::postprocess::{summarize, StateOrdering};
use lmrj::priors::{PriorSpec, TransitionRule};
use lmrj::sampler::{frequency_start, run_chain, SamplerConfig};
use lmrj::trace::{ChainTrace, TraceRecord};

fn main() -> lmrj::Result<()> {
    let sweeps: u64 = std::env::args().nth(1).map_or(1_000_000, |s| s.parse().expect("sweep count"));
    let seed: u64 = std::env::args().nth(2).map_or(2024, |s| s.parse().expect("seed"));
    let (zeta, omega) = (vec![-4.0, 0.0, 4.0], vec![2.5, -2.5]);
    let truth = ModelParams {
        initial: vec![0.5, 0.3, 0.2],
        transition: vec![
            vec![0.85, 0.12, 0.03],
            vec![0.06, 0.88, 0.06],
            vec![0.02, 0.06, 0.92],
        ],
        measurement: Measurement::Cutpoint { zeta: zeta.clone(), omega: omega.clone() },
    };
    let spec = ModelSpec::cutpoint(3, 1, 5);
    let data = simulate_panel(&spec, &truth, 500, seed)?;
    let lik = PanelLikelihood::new(&spec, &data)?;
    let prior = PriorSpec { delta_uv: TransitionRule::Flat, ..PriorSpec::default() };
    let mut cfg = SamplerConfig { sweeps, burn_in: sweeps / 4, seed: 7, ..SamplerConfig::default() };
    cfg.steps.transition = 0.3;
    cfg.steps.zeta = 0.15;
    cfg.steps.omega = 0.15;
    let mut records: Vec<TraceRecord> = Vec::new();
    let start = std::time::Instant::now();
    let counts = run_chain(&lik, &spec, &prior, &cfg, frequency_start(&spec, &data)?, &mut records)?;
    println!("{sweeps} sweeps in {:.1?}", start.elapsed());
    let trace = ChainTrace::new(spec, prior.k_max, records, counts)?;
    let summary = summarize(&trace, cfg.burn_in, StateOrdering::None)?;
    if summary.k_star != 3 {
        println!("modal k is {}, not 3", summary.k_star);
        return Ok(());
    }

    for (k, m) in &summary.k_mass {
        println!("P(k = {k}) = {m:.3}");
    }
    let mean = |name: &str| summary.parameters.iter().find(|p| p.name == name).map(|p| p.mean).unwrap();
    let fitted_zeta: Vec<f64> = (1..=3).map(|u| mean(&format!("zeta[{u}]"))).collect();
    let fitted_omega: Vec<f64> = (1..=2).map(|y| mean(&format!("omega[{y}]"))).collect();

    // match each fitted state to the true state with the nearest response distribution
    let tv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
    let matched: Vec<usize> = fitted_zeta
        .iter()
        .map(|&z| {
            let p = cutpoint_probs(z, &fitted_omega);
            (0..3)
                .min_by(|&a, &b| tv(&p, &cutpoint_probs(zeta[a], &omega)).total_cmp(&tv(&p, &cutpoint_probs(zeta[b], &omega))))
                .unwrap()
        })
        .collect();
    for u in 0..3 {
        println!("zeta[{}] {:>7.3} ~ true state {} ({})", u + 1, fitted_zeta[u], matched[u] + 1, zeta[matched[u]]);
    }
    let order_ok = (0..3).all(|a| (0..3).all(|b| (fitted_zeta[a] < fitted_zeta[b]) == (zeta[matched[a]] < zeta[matched[b]])));
    println!("zeta ordering {}", if order_ok { "matches" } else { "differs" });
    for y in 0..2 {
        println!("omega[{}] {:>7.3} (truth {})", y + 1, fitted_omega[y], omega[y]);
    }
    Ok(())
}
