use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::emission::{conditional_response_probs, ResponseContext};
use super::{Covariates, ModelParams, ModelSpec, PanelDataset};
use crate::error::{Error, Result};

/// A simulated panel together with the latent paths that generated it.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub data: PanelDataset,
    /// `[subject][occasion]`, 0-based states.
    pub states: Vec<usize>,
}

fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if target < *p {
            return i;
        }
        target -= p;
    }
    probs.len() - 1
}

/// Draws a panel of `n` subjects. Deterministic given `seed`.
pub fn simulate_panel(spec: &ModelSpec, params: &ModelParams, n: usize, seed: u64) -> Result<PanelDataset> {
    Ok(simulate_panel_with_states(spec, params, n, None, seed)?.data)
}

/// Draws a panel and keeps the latent paths. The covariate variant takes its
/// subject count from `covariates`, which are attached to the result.
pub fn simulate_panel_with_states(
    spec: &ModelSpec,
    params: &ModelParams,
    n: usize,
    covariates: Option<Covariates>,
    seed: u64,
) -> Result<Simulation> {
    spec.validate()?;
    params.validate(spec)?;
    if spec.design().is_some() != covariates.is_some() {
        return Err(Error::invalid(
            "covariates are required by, and only by, the covariate measurement model",
        ));
    }
    if let Some(cov) = &covariates {
        if cov.n() != n || cov.occasions() != spec.occasions {
            return Err(Error::invalid(format!(
                "covariates describe {} subjects x {} occasions, simulation asks for {n} x {}",
                cov.n(),
                cov.occasions(),
                spec.occasions
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.k();
    let t_count = spec.occasions;
    let r = spec.variables();
    let initial = params.initial_probs();
    let transition = params.transition_probs();

    // without covariates the conditional distributions do not vary by subject
    let fixed: Option<Vec<Vec<Vec<f64>>>> = if covariates.is_none() {
        Some(
            (0..t_count)
                .map(|t| {
                    (0..k)
                        .map(|u| {
                            let ctx = ResponseContext { occasion: t, covariates: None };
                            conditional_response_probs(spec, params, u, ctx)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let mut states = Vec::with_capacity(n * t_count);
    let mut responses = Vec::with_capacity(n * t_count * r);
    for i in 0..n {
        let mut u = draw_index(&initial, &mut rng);
        for t in 0..t_count {
            if t > 0 {
                u = draw_index(&transition[u], &mut rng);
            }
            states.push(u);
            let owned;
            let probs: &[f64] = match &fixed {
                Some(tables) => &tables[t][u],
                None => {
                    let x = covariates.as_ref().map(|c| c.row(i, t));
                    owned = conditional_response_probs(spec, params, u, ResponseContext { occasion: t, covariates: x })?;
                    &owned
                }
            };
            // decode the joint configuration index, first variable slowest
            let mut config = draw_index(probs, &mut rng);
            let mut ys = vec![0u16; r];
            for j in (0..r).rev() {
                ys[j] = (config % spec.levels[j]) as u16;
                config /= spec.levels[j];
            }
            responses.extend(ys);
        }
    }
    let mut data = PanelDataset::new(spec.levels.clone(), n, t_count, responses)?;
    if let Some(cov) = covariates {
        data = data.with_covariates(cov)?;
    }
    Ok(Simulation { data, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Measurement;

    #[test]
    fn identity_transitions_freeze_paths() {
        let spec = ModelSpec::basic(vec![2], 6, true);
        let params = ModelParams {
            initial: vec![1.0, 1.0, 1.0],
            transition: vec![vec![1.0, 1e-300, 1e-300], vec![1e-300, 1.0, 1e-300], vec![1e-300, 1e-300, 1.0]],
            measurement: Measurement::Basic {
                psi: vec![vec![vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]]],
            },
        };
        let sim = simulate_panel_with_states(&spec, &params, 200, None, 7).unwrap();
        for path in sim.states.chunks(6) {
            assert!(path.iter().all(|&u| u == path[0]));
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let spec = ModelSpec::cutpoint(3, 2, 4);
        let params = ModelParams {
            initial: vec![1.0, 2.0],
            transition: vec![vec![3.0, 1.0], vec![1.0, 3.0]],
            measurement: Measurement::Cutpoint { zeta: vec![-1.0, 1.5], omega: vec![0.3, -0.2] },
        };
        let a = simulate_panel(&spec, &params, 50, 11).unwrap();
        let b = simulate_panel(&spec, &params, 50, 11).unwrap();
        assert_eq!(a, b);
    }
}
