//! Scaled forward recursion.
//!
//! Each occasion's forward vector is renormalized to sum to one and the log
//! of the normalizer is accumulated, so the recursion cannot underflow no
//! matter how many occasions a subject has.

use std::collections::BTreeMap;

use super::emission::{bivariate_cell, cutpoint_probs, OddsRatio};
use super::{Measurement, ModelParams, ModelSpec, PanelDataset};
use crate::error::{Error, Result};

/// Anything the sampler can evaluate a log-likelihood with.
///
/// Emission probabilities depend only on the measurement parameters, so the
/// sampler caches them and reuses them when only initial or transition
/// weights change.
pub trait LikelihoodModel {
    type Emissions: Clone;

    fn emissions(&self, params: &ModelParams) -> Self::Emissions;

    fn log_likelihood_with(&self, params: &ModelParams, emissions: &Self::Emissions) -> f64;

    fn log_likelihood(&self, params: &ModelParams) -> f64 {
        let e = self.emissions(params);
        self.log_likelihood_with(params, &e)
    }
}

/// Constant likelihood; turns the sampler into a prior sampler.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatLikelihood;

impl LikelihoodModel for FlatLikelihood {
    type Emissions = ();

    fn emissions(&self, _: &ModelParams) {}

    fn log_likelihood_with(&self, _: &ModelParams, _: &()) -> f64 {
        0.0
    }
}

/// Emission probabilities `[unit][occasion][state]`.
#[derive(Clone, Debug)]
pub struct EmissionTable {
    k: usize,
    values: Vec<f64>,
}

/// Log-likelihood of a panel under a fixed [`ModelSpec`].
///
/// Without covariates, subjects with identical response histories are
/// collapsed into one weighted unit.
#[derive(Clone, Debug)]
pub struct PanelLikelihood {
    spec: ModelSpec,
    occasions: usize,
    variables: usize,
    /// `[unit][occasion][variable]`
    patterns: Vec<u16>,
    weights: Vec<f64>,
    /// Per response, design rows `[unit][occasion][column]`.
    design: Vec<Vec<f64>>,
    design_width: Vec<usize>,
}

impl PanelLikelihood {
    pub fn new(spec: &ModelSpec, data: &PanelDataset) -> Result<Self> {
        spec.validate()?;
        if data.occasions() != spec.occasions {
            return Err(Error::invalid(format!(
                "model expects {} occasions, data has {}",
                spec.occasions,
                data.occasions()
            )));
        }
        if data.levels != spec.levels {
            return Err(Error::invalid(format!(
                "model expects categories {:?}, data has {:?}",
                spec.levels, data.levels
            )));
        }
        let t = spec.occasions;
        let r = data.variables();
        let mut lik = PanelLikelihood {
            spec: spec.clone(),
            occasions: t,
            variables: r,
            patterns: Vec::new(),
            weights: Vec::new(),
            design: Vec::new(),
            design_width: Vec::new(),
        };
        match spec.design() {
            None => {
                if data.covariates.is_some() {
                    return Err(Error::invalid(
                        "covariates are only used by the covariate measurement model",
                    ));
                }
                let mut counts: BTreeMap<&[u16], usize> = BTreeMap::new();
                for i in 0..data.n() {
                    *counts.entry(data.subject_responses(i)).or_default() += 1;
                }
                for (pattern, count) in counts {
                    lik.patterns.extend_from_slice(pattern);
                    lik.weights.push(count as f64);
                }
            }
            Some(design) => {
                let cov = data.covariates.as_ref().ok_or_else(|| {
                    Error::invalid("the covariate measurement model needs covariates")
                })?;
                if let Some(&c) = design.columns.iter().flatten().find(|&&c| c >= cov.columns()) {
                    return Err(Error::invalid(format!("design refers to missing covariate column {c}")));
                }
                lik.patterns.extend_from_slice(data.responses());
                lik.weights = vec![1.0; data.n()];
                for m in 0..design.columns.len() {
                    let mut rows = Vec::new();
                    for i in 0..data.n() {
                        for tt in 0..t {
                            design.design_row(m, tt, t, cov.row(i, tt), &mut rows);
                        }
                    }
                    lik.design.push(rows);
                    lik.design_width.push(design.width(m, t));
                }
            }
        }
        Ok(lik)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Number of likelihood units after collapsing identical histories.
    pub fn units(&self) -> usize {
        self.weights.len()
    }

    fn pattern(&self, unit: usize) -> &[u16] {
        let w = self.occasions * self.variables;
        &self.patterns[unit * w..(unit + 1) * w]
    }

    fn unit_emissions(&self, unit: usize, params: &ModelParams, tables: &Tables, out: &mut [f64]) {
        let k = params.k();
        let t_count = self.occasions;
        let pattern = self.pattern(unit);
        match tables {
            Tables::Categorical { phi, slots } => {
                for t in 0..t_count {
                    let e = &mut out[t * k..(t + 1) * k];
                    e.fill(1.0);
                    let slot = if *slots == 1 { 0 } else { t };
                    for (j, table) in phi.iter().enumerate() {
                        let y = pattern[t * self.variables + j] as usize;
                        let col = &table[slot][y];
                        for (eu, p) in e.iter_mut().zip(col) {
                            *eu *= p;
                        }
                    }
                }
            }
            Tables::Bivariate => {
                let Measurement::Covariate { xi, beta, gamma } = &params.measurement else {
                    unreachable!("tables are built from the same params")
                };
                let design = self.spec.design().expect("covariate spec");
                let or = OddsRatio::new(gamma[0]);
                for t in 0..t_count {
                    let row = unit * t_count + t;
                    let eta: [f64; 2] = std::array::from_fn(|m| {
                        let w = self.design_width[m];
                        let coef = &beta[design.offset(m, t_count)..][..w];
                        self.design[m][row * w..(row + 1) * w]
                            .iter()
                            .zip(coef)
                            .map(|(x, b)| x * b)
                            .sum()
                    });
                    let (y1, y2) = (pattern[2 * t] as usize, pattern[2 * t + 1] as usize);
                    for u in 0..k {
                        out[t * k + u] = bivariate_cell(xi[0][u] + eta[0], xi[1][u] + eta[1], or, y1, y2);
                    }
                }
            }
        }
    }
}

enum Tables {
    /// `phi[variable][slot][category][state]`
    Categorical { phi: Vec<Vec<Vec<Vec<f64>>>>, slots: usize },
    Bivariate,
}

fn build_tables(spec: &ModelSpec, params: &ModelParams) -> Tables {
    let k = params.k();
    match &params.measurement {
        Measurement::Basic { psi } => {
            let phi = psi
                .iter()
                .map(|block| {
                    block
                        .iter()
                        .map(|slot| {
                            let totals: Vec<f64> =
                                (0..k).map(|u| slot.iter().map(|c| c[u]).sum()).collect();
                            slot.iter()
                                .map(|c| c.iter().zip(&totals).map(|(x, s)| x / s).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect();
            Tables::Categorical { phi, slots: spec.slots() }
        }
        Measurement::Cutpoint { zeta, omega } => {
            let by_state: Vec<Vec<f64>> = zeta.iter().map(|&z| cutpoint_probs(z, omega)).collect();
            let table: Vec<Vec<f64>> = (0..=omega.len())
                .map(|y| by_state.iter().map(|p| p[y]).collect())
                .collect();
            Tables::Categorical {
                phi: vec![vec![table]; spec.variables()],
                slots: 1,
            }
        }
        Measurement::Covariate { .. } => Tables::Bivariate,
    }
}

/// Forward recursion for one unit; returns `log f(y)` or `-inf` when the
/// history has probability zero.
fn forward_unit(initial: &[f64], transition: &[f64], emissions: &[f64], k: usize, q: &mut Vec<f64>, next: &mut Vec<f64>) -> f64 {
    let t_count = emissions.len() / k;
    q.clear();
    q.extend(initial.iter().zip(&emissions[..k]).map(|(p, e)| p * e));
    let mut log_f = 0.0;
    for t in 0..t_count {
        if t > 0 {
            let e = &emissions[t * k..(t + 1) * k];
            next.clear();
            next.extend((0..k).map(|v| {
                let mut acc = 0.0;
                for (u, qu) in q.iter().enumerate() {
                    acc += qu * transition[u * k + v];
                }
                acc * e[v]
            }));
            std::mem::swap(q, next);
        }
        let s: f64 = q.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return f64::NEG_INFINITY;
        }
        log_f += s.ln();
        for x in q.iter_mut() {
            *x /= s;
        }
    }
    log_f
}

impl LikelihoodModel for PanelLikelihood {
    type Emissions = EmissionTable;

    fn emissions(&self, params: &ModelParams) -> EmissionTable {
        let k = params.k();
        let tables = build_tables(&self.spec, params);
        let stride = self.occasions * k;
        let mut values = vec![0.0; self.units() * stride];
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            values
                .par_chunks_mut(stride)
                .enumerate()
                .for_each(|(unit, out)| self.unit_emissions(unit, params, &tables, out));
        }
        #[cfg(not(feature = "parallel"))]
        for (unit, out) in values.chunks_mut(stride).enumerate() {
            self.unit_emissions(unit, params, &tables, out);
        }
        EmissionTable { k, values }
    }

    fn log_likelihood_with(&self, params: &ModelParams, emissions: &EmissionTable) -> f64 {
        let k = params.k();
        debug_assert_eq!(emissions.k, k);
        let initial = params.initial_probs();
        let transition: Vec<f64> = params.transition_probs().into_iter().flatten().collect();
        let stride = self.occasions * k;
        let per_unit = |unit: usize, q: &mut Vec<f64>, next: &mut Vec<f64>| {
            let e = &emissions.values[unit * stride..(unit + 1) * stride];
            forward_unit(&initial, &transition, e, k, q, next)
        };
        // per-unit terms are summed in unit order in both modes, so the
        // result does not depend on the thread count
        #[cfg(feature = "parallel")]
        let terms: Vec<f64> = {
            use rayon::prelude::*;
            (0..self.units())
                .into_par_iter()
                .map_init(|| (Vec::with_capacity(k), Vec::with_capacity(k)), |(q, n), u| per_unit(u, q, n))
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let terms: Vec<f64> = {
            let (mut q, mut n) = (Vec::with_capacity(k), Vec::with_capacity(k));
            (0..self.units()).map(|u| per_unit(u, &mut q, &mut n)).collect()
        };
        let mut total = 0.0;
        for (term, w) in terms.iter().zip(&self.weights) {
            if *term == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += w * term;
        }
        total
    }
}

/// Total log-likelihood `sum_i log f(y_i)` of `data` under `params`.
pub fn forward_loglik(spec: &ModelSpec, params: &ModelParams, data: &PanelDataset) -> Result<f64> {
    params.validate(spec)?;
    Ok(PanelLikelihood::new(spec, data)?.log_likelihood(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Measurement;

    fn params(pi: Vec<f64>, trans: Vec<Vec<f64>>, psi: Vec<Vec<f64>>) -> ModelParams {
        ModelParams {
            initial: pi,
            transition: trans,
            measurement: Measurement::Basic { psi: vec![vec![psi]] },
        }
    }

    #[test]
    fn single_state_is_product_of_marginals() {
        let spec = ModelSpec::basic(vec![2], 2, true);
        let p = params(vec![1.0], vec![vec![1.0]], vec![vec![1.0], vec![1.0]]);
        let data = PanelDataset::new(vec![2], 3, 2, vec![0, 1, 1, 1, 0, 0]).unwrap();
        let ll = forward_loglik(&spec, &p, &data).unwrap();
        assert!((ll - 6.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn one_occasion_is_a_mixture() {
        let spec = ModelSpec::basic(vec![2], 1, true);
        let p = params(
            vec![0.5, 0.5],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![0.8, 0.2], vec![0.2, 0.8]],
        );
        let data = PanelDataset::new(vec![2], 1, 1, vec![1]).unwrap();
        let ll = forward_loglik(&spec, &p, &data).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn impossible_history_is_negative_infinity() {
        let spec = ModelSpec::basic(vec![2], 2, true);
        // weights bypass validation here: category 1 has probability zero
        let p = params(vec![1.0], vec![vec![1.0]], vec![vec![1.0], vec![0.0]]);
        let data = PanelDataset::new(vec![2], 1, 2, vec![0, 1]).unwrap();
        let lik = PanelLikelihood::new(&spec, &data).unwrap();
        assert_eq!(lik.log_likelihood(&p), f64::NEG_INFINITY);
    }

    #[test]
    fn long_histories_do_not_underflow() {
        let spec = ModelSpec::basic(vec![3], 10_000, true);
        let p = params(
            vec![1.0, 1.0],
            vec![vec![9.0, 1.0], vec![1.0, 9.0]],
            vec![vec![0.2, 0.5], vec![0.3, 0.3], vec![0.5, 0.2]],
        );
        let ys: Vec<u16> = (0..10_000).map(|t| (t % 3) as u16).collect();
        let data = PanelDataset::new(vec![3], 1, 10_000, ys).unwrap();
        let ll = forward_loglik(&spec, &p, &data).unwrap();
        assert!(ll.is_finite() && ll < -5000.0);
    }

    #[test]
    fn identical_histories_are_collapsed() {
        let data = PanelDataset::new(vec![2], 4, 2, vec![0, 1, 0, 1, 1, 1, 0, 1]).unwrap();
        let lik = PanelLikelihood::new(&ModelSpec::basic(vec![2], 2, true), &data).unwrap();
        assert_eq!(lik.units(), 2);
    }
}
