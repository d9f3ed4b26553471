//! Highest posterior density intervals for a skewed sample, at the three
//! levels used in summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use lmrj::postprocess::{hpd_intervals, HPD_LEVELS};

fn main() -> lmrj::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gamma = Gamma::new(2.0, 1.0).expect("valid shape");
    let draws: Vec<f64> = (0..20_000).map(|_| gamma.sample(&mut rng)).collect();
    for iv in hpd_intervals(&draws, &HPD_LEVELS)? {
        let inside = draws.iter().filter(|x| **x >= iv.lower && **x <= iv.upper).count();
        println!(
            "{:>3.0}%  [{:.4}, {:.4}]  width {:.4}  holds {:.4}",
            100.0 * iv.level,
            iv.lower,
            iv.upper,
            iv.upper - iv.lower,
            inside as f64 / draws.len() as f64
        );
    }
    Ok(())
}
