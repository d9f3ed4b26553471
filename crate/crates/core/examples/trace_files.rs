//! Writes a chain to the checksummed trace format, reads it back, and shows
//! that a truncated copy is refused.

use lmrj::io::tracefile::{parse_trace, TraceWriter};
use lmrj::model::{simulate_panel, ModelSpec, PanelLikelihood};
use lmrj::priors::PriorSpec;
use lmrj::sampler::{frequency_start, run_chain, SamplerConfig};

fn main() -> lmrj::Result<()> {
    let spec = ModelSpec::basic(vec![2, 2], 3, true);
    let prior = PriorSpec { k_max: 3, ..PriorSpec::default() };
    let truth = prior.sample(&spec, 2, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4));
    let data = simulate_panel(&spec, &truth, 60, 4)?;
    let lik = PanelLikelihood::new(&spec, &data)?;
    let cfg = SamplerConfig { sweeps: 500, burn_in: 100, seed: 4, ..SamplerConfig::default() };

    let mut writer = TraceWriter::new(Vec::new(), &spec, prior.k_max)?;
    let counts = run_chain(&lik, &spec, &prior, &cfg, frequency_start(&spec, &data)?, &mut writer)?;
    let bytes = writer.finish(&counts)?;
    println!("{} bytes; header:", bytes.len());
    for line in String::from_utf8_lossy(&bytes).lines().take(5) {
        println!("  {}", if line.len() > 100 { &line[..100] } else { line });
    }

    let trace = parse_trace(&bytes)?;
    println!("read back {} records, last k = {}", trace.records.len(), trace.records.last().map_or(0, |r| r.k));
    match parse_trace(&bytes[..bytes.len() / 2]) {
        Ok(_) => println!("truncated copy accepted"),
        Err(e) => println!("truncated copy refused: {e}"),
    }
    Ok(())
}
