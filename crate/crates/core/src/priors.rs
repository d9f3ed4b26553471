//! Prior system.
//!
//! Initial, transition and conditional-response weights carry independent
//! `Gamma(delta, 1)` priors; normalizing a vector of them gives a
//! `Dirichlet(delta)` law on the probabilities. Real-valued measurement
//! parameters get independent centred Normal priors and `k` is uniform on
//! `1..=k_max`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{Measurement, MeasurementSpec, ModelParams, ModelSpec, N_GAMMA, N_XI};

/// Off-diagonal shape of the persistence rule.
pub const PERSISTENCE_OFF_DIAGONAL: f64 = 0.6;

/// Shape rule for the transition weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionRule {
    /// `k` on the diagonal, 0.6 elsewhere; favours staying in a state.
    Persistence,
    /// Shape 1 everywhere.
    Flat,
}

/// Hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub delta_u: f64,
    pub delta_uv: TransitionRule,
    pub delta_yu: f64,
    pub sigma2_zeta: f64,
    pub sigma2_omega: f64,
    pub sigma2_xi: f64,
    pub sigma2_beta: f64,
    pub sigma2_gamma: f64,
    pub k_max: usize,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            delta_u: 1.0,
            delta_uv: TransitionRule::Persistence,
            delta_yu: 1.0,
            sigma2_zeta: 5.0,
            sigma2_omega: 5.0,
            sigma2_xi: 5.0,
            sigma2_beta: 5.0,
            sigma2_gamma: 5.0,
            k_max: 10,
        }
    }
}

pub fn ln_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn ln_normal_density(x: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - x * x / (2.0 * variance)
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("positive shape");
    g.sample(rng).max(f64::MIN_POSITIVE)
}

fn draw_normal<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> f64 {
    Normal::new(0.0, variance.sqrt()).expect("positive variance").sample(rng)
}

/// Prior draws for the parameters attached to one new latent state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateBlock {
    pub initial: f64,
    /// Weights from the new state to every state, itself included, in the
    /// final order.
    pub row: Vec<f64>,
    /// Weights from every other state into the new one, in the final order
    /// with the new state skipped.
    pub column: Vec<f64>,
    /// One value per measurement state vector, in
    /// [`Measurement::state_vectors`] order.
    pub measurement: Vec<f64>,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.delta_u,
            self.delta_yu,
            self.sigma2_zeta,
            self.sigma2_omega,
            self.sigma2_xi,
            self.sigma2_beta,
            self.sigma2_gamma,
        ];
        if positive.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("prior shapes and variances must be positive".into()));
        }
        if self.k_max < 1 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Shape of `lambda_uv` in a model with `k` states.
    pub fn transition_shape(&self, u: usize, v: usize, k: usize) -> f64 {
        match self.delta_uv {
            TransitionRule::Persistence if u == v => k as f64,
            TransitionRule::Persistence => PERSISTENCE_OFF_DIAGONAL,
            TransitionRule::Flat => 1.0,
        }
    }

    /// Log prior density of a parameter state, including `log p(k)`.
    pub fn log_prior(&self, params: &ModelParams) -> f64 {
        let k = params.k();
        if k == 0 || k > self.k_max {
            return f64::NEG_INFINITY;
        }
        let mut total = -(self.k_max as f64).ln();
        total += params
            .initial
            .iter()
            .map(|&x| ln_gamma_density(x, self.delta_u, 1.0))
            .sum::<f64>();
        for (u, row) in params.transition.iter().enumerate() {
            for (v, &x) in row.iter().enumerate() {
                total += ln_gamma_density(x, self.transition_shape(u, v, k), 1.0);
            }
        }
        total += self.log_prior_measurement(&params.measurement);
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    pub(crate) fn log_prior_measurement(&self, measurement: &Measurement) -> f64 {
        match measurement {
            Measurement::Basic { psi } => psi
                .iter()
                .flatten()
                .flatten()
                .flatten()
                .map(|&x| ln_gamma_density(x, self.delta_yu, 1.0))
                .sum(),
            Measurement::Cutpoint { zeta, omega } => {
                zeta.iter().map(|&z| ln_normal_density(z, self.sigma2_zeta)).sum::<f64>()
                    + omega.iter().map(|&w| ln_normal_density(w, self.sigma2_omega)).sum::<f64>()
            }
            Measurement::Covariate { xi, beta, gamma } => {
                xi.iter().flatten().map(|&x| ln_normal_density(x, self.sigma2_xi)).sum::<f64>()
                    + beta.iter().map(|&b| ln_normal_density(b, self.sigma2_beta)).sum::<f64>()
                    + gamma.iter().map(|&g| ln_normal_density(g, self.sigma2_gamma)).sum::<f64>()
            }
        }
    }

    /// Log density of the per-state measurement value stored in the
    /// `index`-th state vector.
    pub(crate) fn log_state_measurement(&self, spec: &ModelSpec, x: f64) -> f64 {
        match spec.measurement {
            MeasurementSpec::Basic { .. } => ln_gamma_density(x, self.delta_yu, 1.0),
            MeasurementSpec::Cutpoint => ln_normal_density(x, self.sigma2_zeta),
            MeasurementSpec::Covariate { .. } => ln_normal_density(x, self.sigma2_xi),
        }
    }

    fn draw_state_measurement<R: Rng + ?Sized>(&self, spec: &ModelSpec, rng: &mut R) -> f64 {
        match spec.measurement {
            MeasurementSpec::Basic { .. } => draw_gamma(self.delta_yu, rng),
            MeasurementSpec::Cutpoint => draw_normal(self.sigma2_zeta, rng),
            MeasurementSpec::Covariate { .. } => draw_normal(self.sigma2_xi, rng),
        }
    }

    /// Draws the parameters of a new state inserted at `position` of a model
    /// that will have `k_new` states.
    pub fn sample_state_block<R: Rng + ?Sized>(
        &self,
        spec: &ModelSpec,
        k_new: usize,
        position: usize,
        n_state_vectors: usize,
        rng: &mut R,
    ) -> StateBlock {
        let initial = draw_gamma(self.delta_u, rng);
        let row = (0..k_new)
            .map(|v| draw_gamma(self.transition_shape(position, v, k_new), rng))
            .collect();
        let column = (0..k_new)
            .filter(|&u| u != position)
            .map(|u| draw_gamma(self.transition_shape(u, position, k_new), rng))
            .collect();
        let measurement = (0..n_state_vectors)
            .map(|_| self.draw_state_measurement(spec, rng))
            .collect();
        StateBlock { initial, row, column, measurement }
    }

    /// Log density of [`sample_state_block`](Self::sample_state_block).
    pub fn log_state_block(&self, spec: &ModelSpec, k_new: usize, position: usize, block: &StateBlock) -> f64 {
        let mut total = ln_gamma_density(block.initial, self.delta_u, 1.0);
        for (v, &x) in block.row.iter().enumerate() {
            total += ln_gamma_density(x, self.transition_shape(position, v, k_new), 1.0);
        }
        let others = (0..k_new).filter(|&u| u != position);
        for (u, &x) in others.zip(&block.column) {
            total += ln_gamma_density(x, self.transition_shape(u, position, k_new), 1.0);
        }
        total
            + block
                .measurement
                .iter()
                .map(|&x| self.log_state_measurement(spec, x))
                .sum::<f64>()
    }

    /// Independent draw of a full `k`-state parameter vector.
    pub fn sample<R: Rng + ?Sized>(&self, spec: &ModelSpec, k: usize, rng: &mut R) -> ModelParams {
        let initial = (0..k).map(|_| draw_gamma(self.delta_u, rng)).collect();
        let transition = (0..k)
            .map(|u| (0..k).map(|v| draw_gamma(self.transition_shape(u, v, k), rng)).collect())
            .collect();
        let measurement = match &spec.measurement {
            MeasurementSpec::Basic { .. } => Measurement::Basic {
                psi: spec
                    .levels
                    .iter()
                    .map(|&l| {
                        (0..spec.slots())
                            .map(|_| {
                                (0..l)
                                    .map(|_| (0..k).map(|_| draw_gamma(self.delta_yu, rng)).collect())
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
            },
            MeasurementSpec::Cutpoint => Measurement::Cutpoint {
                zeta: (0..k).map(|_| draw_normal(self.sigma2_zeta, rng)).collect(),
                omega: (1..spec.levels[0]).map(|_| draw_normal(self.sigma2_omega, rng)).collect(),
            },
            MeasurementSpec::Covariate { .. } => Measurement::Covariate {
                xi: (0..N_XI)
                    .map(|_| (0..k).map(|_| draw_normal(self.sigma2_xi, rng)).collect())
                    .collect(),
                beta: (0..spec.n_beta()).map(|_| draw_normal(self.sigma2_beta, rng)).collect(),
                gamma: (0..N_GAMMA).map(|_| draw_normal(self.sigma2_gamma, rng)).collect(),
            },
        };
        ModelParams { initial, transition, measurement }
    }
}

/// Free-function form of [`PriorSpec::log_prior`].
pub fn log_prior(params: &ModelParams, prior: &PriorSpec) -> f64 {
    prior.log_prior(params)
}

/// Free-function form of [`PriorSpec::sample`].
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, spec: &ModelSpec, k: usize, rng: &mut R) -> Result<ModelParams> {
    if k < 1 || k > prior.k_max {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", prior.k_max)));
    }
    Ok(prior.sample(spec, k, rng))
}

/// Empirical versus analytic moments of one Dirichlet coordinate.
#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub label: String,
    pub empirical_mean: f64,
    pub analytic_mean: f64,
    pub z_mean: f64,
    pub empirical_var: f64,
    pub analytic_var: f64,
    pub z_var: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub checks: Vec<MomentCheck>,
    pub max_z: f64,
}

/// Dirichlet mean and variance of each coordinate for shape vector `deltas`.
pub fn dirichlet_moments(deltas: &[f64]) -> Vec<(f64, f64)> {
    let total: f64 = deltas.iter().sum();
    deltas
        .iter()
        .map(|d| (d / total, d * (total - d) / (total * total * (total + 1.0))))
        .collect()
}

/// Normalizes `samples` independent Gamma vectors and compares coordinate
/// means and variances with the Dirichlet formulas.
pub fn dirichlet_moment_check<R: Rng + ?Sized>(
    label: &str,
    deltas: &[f64],
    samples: usize,
    rng: &mut R,
) -> Vec<MomentCheck> {
    let d = deltas.len();
    let mut draws = vec![Vec::with_capacity(samples); d];
    for _ in 0..samples {
        let g: Vec<f64> = deltas.iter().map(|&a| draw_gamma(a, rng)).collect();
        let total: f64 = g.iter().sum();
        for (c, x) in g.iter().enumerate() {
            draws[c].push(x / total);
        }
    }
    dirichlet_moments(deltas)
        .into_iter()
        .zip(draws)
        .enumerate()
        .map(|(c, ((mean, var), xs))| {
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
            MomentCheck {
                label: format!("{label}[{c}]"),
                empirical_mean: m,
                analytic_mean: mean,
                z_mean: (m - mean) / (v / n).sqrt(),
                empirical_var: v,
                analytic_var: var,
                z_var: (v - var) / ((m4 - v * v).max(f64::MIN_POSITIVE) / n).sqrt(),
            }
        })
        .collect()
}

/// Checks that normalized Gamma draws under `prior` reproduce Dirichlet
/// moments for the initial vector and every transition row at `k` states.
pub fn dirichlet_equivalence_check<R: Rng + ?Sized>(
    prior: &PriorSpec,
    k: usize,
    samples: usize,
    rng: &mut R,
) -> Result<MomentReport> {
    if samples < 10_000 {
        return Err(Error::invalid("the moment check needs at least 10^4 samples"));
    }
    let mut checks = dirichlet_moment_check("initial", &vec![prior.delta_u; k], samples, rng);
    for u in 0..k {
        let shapes: Vec<f64> = (0..k).map(|v| prior.transition_shape(u, v, k)).collect();
        checks.extend(dirichlet_moment_check(&format!("transition[{u}]"), &shapes, samples, rng));
    }
    let max_z = checks
        .iter()
        .flat_map(|c| [c.z_mean.abs(), c.z_var.abs()])
        .filter(|z| z.is_finite())
        .fold(0.0, f64::max);
    Ok(MomentReport { checks, max_z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_one_at_one() {
        assert!((ln_gamma_density(1.0, 1.0, 1.0) + 1.0).abs() < 1e-15);
        assert_eq!(ln_gamma_density(0.0, 1.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(ln_gamma_density(-2.0, 3.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn normal_mode() {
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 5.0).ln();
        assert!((ln_normal_density(0.0, 5.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn persistence_shapes_follow_k() {
        let p = PriorSpec::default();
        assert_eq!(p.transition_shape(2, 2, 4), 4.0);
        assert_eq!(p.transition_shape(1, 2, 4), 0.6);
        let flat = PriorSpec { delta_uv: TransitionRule::Flat, ..p };
        assert_eq!(flat.transition_shape(0, 0, 4), 1.0);
    }

    #[test]
    fn nonpositive_weight_has_zero_density() {
        let spec = ModelSpec::basic(vec![2], 1, true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = PriorSpec::default().sample(&spec, 2, &mut rng);
        p.transition[0][1] = -1.0;
        assert_eq!(PriorSpec::default().log_prior(&p), f64::NEG_INFINITY);
    }

    #[test]
    fn k_above_k_max_has_zero_mass() {
        let spec = ModelSpec::basic(vec![2], 1, true);
        let prior = PriorSpec { k_max: 2, ..PriorSpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = prior.sample(&spec, 3, &mut rng);
        assert_eq!(prior.log_prior(&p), f64::NEG_INFINITY);
        assert!(sample_prior(&prior, &spec, 3, &mut rng).is_err());
    }

    #[test]
    fn state_block_density_matches_the_sampler_shapes() {
        let spec = ModelSpec::cutpoint(3, 1, 2);
        let prior = PriorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let block = prior.sample_state_block(&spec, 3, 1, 1, &mut rng);
        assert_eq!(block.row.len(), 3);
        assert_eq!(block.column.len(), 2);
        let direct = ln_gamma_density(block.initial, 1.0, 1.0)
            + ln_gamma_density(block.row[0], 0.6, 1.0)
            + ln_gamma_density(block.row[1], 3.0, 1.0)
            + ln_gamma_density(block.row[2], 0.6, 1.0)
            + block.column.iter().map(|&x| ln_gamma_density(x, 0.6, 1.0)).sum::<f64>()
            + ln_normal_density(block.measurement[0], 5.0);
        assert!((prior.log_state_block(&spec, 3, 1, &block) - direct).abs() < 1e-12);
    }
}
