use lmrj::model::{Measurement, ModelParams, ModelSpec};
use lmrj::oracle::prior_chain_check;
use lmrj::priors::PriorSpec;
use lmrj::sampler::SamplerConfig;

fn main() -> lmrj::Result<()> {
    let sweeps: u64 = std::env::args().nth(1).map_or(100_000, |s| s.parse().expect("sweep count"));
    let spec = ModelSpec::basic(vec![3], 1, true);
    let prior = PriorSpec { k_max: 3, ..PriorSpec::default() };
    let cfg = SamplerConfig { sweeps, burn_in: 0, seed: 11, ..SamplerConfig::default() };
    let init = ModelParams {
        initial: vec![1.0],
        transition: vec![vec![1.0]],
        measurement: Measurement::Basic { psi: vec![vec![vec![vec![1.0], vec![1.0], vec![1.0]]]] },
    };
    let report = prior_chain_check(&spec, &prior, &cfg, init)?;
    for c in &report.checks {
        println!("{:<40} {:>10.5} {:>10.5} se {:.5} z {:+.2}", c.label, c.estimate, c.target, c.std_err, c.z);
    }
    println!("max |z| = {:.2} -> {}", report.max_z, if report.pass { "pass" } else { "FAIL" });
    Ok(())
}
