//! Latent Markov model structure, parameters and likelihood.
//!
//! A model is described by a [`ModelSpec`] (response layout and measurement
//! variant, independent of the number of latent states) and a [`ModelParams`]
//! value holding the unnormalized weights for one particular state count `k`.
//!
//! Every state-indexed quantity is stored with the state as the innermost
//! index, so inserting, deleting or permuting a state touches each leaf vector
//! the same way.

mod data;
mod emission;
mod likelihood;
mod simulate;

pub use data::{Covariates, PanelDataset};
pub use emission::{
    conditional_response_probs, cutpoint_probs, expit, invert_bivariate_margins, logit,
    JointCellTable, ResponseContext,
};
pub use likelihood::{forward_loglik, FlatLikelihood, LikelihoodModel, PanelLikelihood};
pub use simulate::{simulate_panel, simulate_panel_with_states, Simulation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of marginal logits in the bivariate covariate model.
pub const N_XI: usize = 2;
/// Number of log-odds ratios in the bivariate covariate model.
pub const N_GAMMA: usize = 1;

/// Which covariate columns enter each response's linear predictor.
///
/// The design row for response `m` at occasion `t` is the selected covariate
/// values followed, when `occasion_dummies` is set, by indicators for
/// occasions `2..=T`. This is the `I_2 ⊗ x'` layout with per-response column
/// selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRecipe {
    pub columns: Vec<Vec<usize>>,
    #[serde(default = "default_true")]
    pub occasion_dummies: bool,
}

fn default_true() -> bool {
    true
}

impl DesignRecipe {
    /// Same columns for both responses.
    pub fn shared(columns: Vec<usize>, occasion_dummies: bool) -> Self {
        DesignRecipe {
            columns: vec![columns.clone(), columns],
            occasion_dummies,
        }
    }

    pub fn width(&self, response: usize, occasions: usize) -> usize {
        self.columns[response].len() + if self.occasion_dummies { occasions - 1 } else { 0 }
    }

    pub fn n_beta(&self, occasions: usize) -> usize {
        (0..N_XI).map(|m| self.width(m, occasions)).sum()
    }

    /// Offset of response `m`'s coefficients inside `beta`.
    pub fn offset(&self, response: usize, occasions: usize) -> usize {
        (0..response).map(|m| self.width(m, occasions)).sum()
    }

    /// Appends the design row of response `m` for a raw covariate row at the
    /// 0-based `occasion`; occasion 0 is the dummy reference level.
    pub fn design_row(
        &self,
        response: usize,
        occasion: usize,
        occasions: usize,
        x: &[f64],
        out: &mut Vec<f64>,
    ) {
        out.extend(self.columns[response].iter().map(|&c| x[c]));
        if self.occasion_dummies {
            out.extend((1..occasions).map(|s| if s == occasion { 1.0 } else { 0.0 }));
        }
    }

    /// Linear predictor `x' beta_m` for response `m`.
    pub fn linear_predictor(
        &self,
        response: usize,
        occasion: usize,
        occasions: usize,
        x: &[f64],
        beta: &[f64],
    ) -> f64 {
        let coef = &beta[self.offset(response, occasions)..];
        let mut eta: f64 = self.columns[response]
            .iter()
            .zip(coef)
            .map(|(&c, b)| x[c] * b)
            .sum();
        if self.occasion_dummies && occasion > 0 {
            eta += coef[self.columns[response].len() + occasion - 1];
        }
        eta
    }
}

/// Measurement-model variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MeasurementSpec {
    /// Unconstrained conditional probabilities from normalized `psi` weights.
    Basic { homogeneous: bool },
    /// Adjacent-category logits `zeta_u + omega_y`, time homogeneous, with
    /// cutpoints shared by every response variable.
    Cutpoint,
    /// Two binary responses with marginal logits `xi_u + X beta` and a common
    /// log-odds ratio `gamma`.
    Covariate { design: DesignRecipe },
}

/// Structural description of a latent Markov model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub measurement: MeasurementSpec,
    /// Category count of each response variable.
    pub levels: Vec<usize>,
    /// Number of occasions `T`.
    pub occasions: usize,
}

impl ModelSpec {
    pub fn basic(levels: Vec<usize>, occasions: usize, homogeneous: bool) -> Self {
        ModelSpec {
            measurement: MeasurementSpec::Basic { homogeneous },
            levels,
            occasions,
        }
    }

    pub fn cutpoint(levels: usize, variables: usize, occasions: usize) -> Self {
        ModelSpec {
            measurement: MeasurementSpec::Cutpoint,
            levels: vec![levels; variables],
            occasions,
        }
    }

    pub fn covariate(occasions: usize, design: DesignRecipe) -> Self {
        ModelSpec {
            measurement: MeasurementSpec::Covariate { design },
            levels: vec![2, 2],
            occasions,
        }
    }

    pub fn variables(&self) -> usize {
        self.levels.len()
    }

    /// Number of distinct occasion slots in the `psi` tensor.
    pub fn slots(&self) -> usize {
        match self.measurement {
            MeasurementSpec::Basic { homogeneous: false } => self.occasions,
            _ => 1,
        }
    }

    pub fn slot(&self, occasion: usize) -> usize {
        if self.slots() == 1 {
            0
        } else {
            occasion
        }
    }

    pub fn design(&self) -> Option<&DesignRecipe> {
        match &self.measurement {
            MeasurementSpec::Covariate { design } => Some(design),
            _ => None,
        }
    }

    pub fn n_beta(&self) -> usize {
        self.design().map_or(0, |d| d.n_beta(self.occasions))
    }

    pub fn variant_name(&self) -> &'static str {
        match self.measurement {
            MeasurementSpec::Basic { .. } => "basic",
            MeasurementSpec::Cutpoint => "cutpoint",
            MeasurementSpec::Covariate { .. } => "covariate",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.occasions == 0 {
            return Err(Error::invalid("model needs at least one occasion"));
        }
        if self.levels.is_empty() {
            return Err(Error::invalid("model needs at least one response variable"));
        }
        if self.levels.iter().any(|&l| l < 2) {
            return Err(Error::invalid("every response needs at least two categories"));
        }
        match &self.measurement {
            MeasurementSpec::Basic { .. } => {}
            MeasurementSpec::Cutpoint => {
                if self.levels.iter().any(|&l| l != self.levels[0]) {
                    return Err(Error::invalid(
                        "cutpoint model needs the same category count for every response",
                    ));
                }
            }
            MeasurementSpec::Covariate { design } => {
                if self.levels != [2, 2] {
                    return Err(Error::Unsupported(
                        "covariate model supports exactly two binary responses".into(),
                    ));
                }
                if design.columns.len() != N_XI {
                    return Err(Error::invalid("design recipe needs one column list per response"));
                }
            }
        }
        Ok(())
    }
}

/// Measurement-model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Measurement {
    /// `psi[variable][slot][category][state]`, positive.
    Basic { psi: Vec<Vec<Vec<Vec<f64>>>> },
    Cutpoint { zeta: Vec<f64>, omega: Vec<f64> },
    /// `xi[logit][state]`.
    Covariate {
        xi: Vec<Vec<f64>>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
    },
}

impl Measurement {
    /// Every vector indexed by latent state.
    pub fn state_vectors(&self) -> Vec<&Vec<f64>> {
        match self {
            Measurement::Basic { psi } => psi.iter().flatten().flatten().collect(),
            Measurement::Cutpoint { zeta, .. } => vec![zeta],
            Measurement::Covariate { xi, .. } => xi.iter().collect(),
        }
    }

    pub fn state_vectors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Measurement::Basic { psi } => psi.iter_mut().flatten().flatten().collect(),
            Measurement::Cutpoint { zeta, .. } => vec![zeta],
            Measurement::Covariate { xi, .. } => xi.iter_mut().collect(),
        }
    }
}

/// Parameter state of a model with `k` latent states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Unnormalized initial weights `lambda_u`.
    pub initial: Vec<f64>,
    /// Unnormalized transition weights, `transition[u][v]` for `u -> v`.
    pub transition: Vec<Vec<f64>>,
    pub measurement: Measurement,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.initial.len()
    }

    /// Initial probabilities `pi_u`.
    pub fn initial_probs(&self) -> Vec<f64> {
        normalized(&self.initial)
    }

    /// Transition probabilities, rows indexed by the from-state.
    pub fn transition_probs(&self) -> Vec<Vec<f64>> {
        self.transition.iter().map(|row| normalized(row)).collect()
    }

    /// Checks dimensions against `spec` and positivity of all weights.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::invalid("parameters need at least one latent state"));
        }
        if self.transition.len() != k || self.transition.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("transition weights must be k x k"));
        }
        let positive = |x: &f64| x.is_finite() && *x > 0.0;
        if !self.initial.iter().all(positive) || !self.transition.iter().flatten().all(positive) {
            return Err(Error::invalid("initial and transition weights must be positive"));
        }
        match (&spec.measurement, &self.measurement) {
            (MeasurementSpec::Basic { .. }, Measurement::Basic { psi }) => {
                if psi.len() != spec.variables() {
                    return Err(Error::invalid("psi must have one block per response variable"));
                }
                for (j, block) in psi.iter().enumerate() {
                    if block.len() != spec.slots() {
                        return Err(Error::invalid(format!(
                            "psi for variable {j} must have {} occasion slots",
                            spec.slots()
                        )));
                    }
                    for slot in block {
                        if slot.len() != spec.levels[j] || slot.iter().any(|c| c.len() != k) {
                            return Err(Error::invalid(format!(
                                "psi for variable {j} must be {} x {k}",
                                spec.levels[j]
                            )));
                        }
                        if !slot.iter().flatten().all(positive) {
                            return Err(Error::invalid("psi weights must be positive"));
                        }
                    }
                }
            }
            (MeasurementSpec::Cutpoint, Measurement::Cutpoint { zeta, omega }) => {
                if zeta.len() != k || omega.len() != spec.levels[0] - 1 {
                    return Err(Error::invalid("cutpoint model needs k zeta and l-1 omega values"));
                }
                if !zeta.iter().chain(omega).all(|x| x.is_finite()) {
                    return Err(Error::invalid("cutpoint parameters must be finite"));
                }
            }
            (MeasurementSpec::Covariate { .. }, Measurement::Covariate { xi, beta, gamma }) => {
                if xi.len() != N_XI || xi.iter().any(|r| r.len() != k) {
                    return Err(Error::invalid("support points must be 2 x k"));
                }
                if beta.len() != spec.n_beta() {
                    return Err(Error::invalid(format!(
                        "beta has {} entries, design needs {}",
                        beta.len(),
                        spec.n_beta()
                    )));
                }
                if gamma.len() != N_GAMMA {
                    return Err(Error::invalid("gamma must hold one log-odds ratio"));
                }
                if !xi.iter().flatten().chain(beta).chain(gamma).all(|x| x.is_finite()) {
                    return Err(Error::invalid("covariate parameters must be finite"));
                }
            }
            _ => return Err(Error::invalid("measurement parameters do not match the model variant")),
        }
        Ok(())
    }

    /// Relabels states: new state `u` takes the parameters of old state `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> ModelParams {
        let pick = |v: &Vec<f64>| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        let mut out = self.clone();
        out.initial = pick(&self.initial);
        out.transition = perm.iter().map(|&p| pick(&self.transition[p])).collect();
        for v in out.measurement.state_vectors_mut() {
            *v = pick(v);
        }
        out
    }

    /// Removes state `u`, shifting later states down.
    pub fn without_state(&self, u: usize) -> ModelParams {
        let mut out = self.clone();
        out.initial.remove(u);
        out.transition.remove(u);
        for row in &mut out.transition {
            row.remove(u);
        }
        for v in out.measurement.state_vectors_mut() {
            v.remove(u);
        }
        out
    }

    /// Number of scalars in the flattened representation.
    pub fn flat_len(spec: &ModelSpec, k: usize) -> usize {
        let meas = match &spec.measurement {
            MeasurementSpec::Basic { .. } => {
                spec.levels.iter().map(|l| l * spec.slots() * k).sum::<usize>()
            }
            MeasurementSpec::Cutpoint => k + spec.levels[0] - 1,
            MeasurementSpec::Covariate { .. } => N_XI * k + spec.n_beta() + N_GAMMA,
        };
        k + k * k + meas
    }

    /// Which entries of [`flatten`](Self::flatten) are positive weights.
    pub fn positive_mask(spec: &ModelSpec, k: usize) -> Vec<bool> {
        let n = Self::flat_len(spec, k);
        let weights = match spec.measurement {
            MeasurementSpec::Basic { .. } => n,
            _ => k + k * k,
        };
        (0..n).map(|i| i < weights).collect()
    }

    /// Flattens in a fixed order: initial, transition rows, then measurement
    /// leaves in storage order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.initial);
        for row in &self.transition {
            out.extend_from_slice(row);
        }
        match &self.measurement {
            Measurement::Basic { psi } => {
                for v in psi.iter().flatten().flatten() {
                    out.extend_from_slice(v);
                }
            }
            Measurement::Cutpoint { zeta, omega } => {
                out.extend_from_slice(zeta);
                out.extend_from_slice(omega);
            }
            Measurement::Covariate { xi, beta, gamma } => {
                for row in xi {
                    out.extend_from_slice(row);
                }
                out.extend_from_slice(beta);
                out.extend_from_slice(gamma);
            }
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(spec: &ModelSpec, k: usize, values: &[f64]) -> Result<ModelParams> {
        if values.len() != Self::flat_len(spec, k) {
            return Err(Error::invalid(format!(
                "expected {} values for k = {k}, got {}",
                Self::flat_len(spec, k),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let initial = take(k);
        let transition = (0..k).map(|_| take(k)).collect();
        let measurement = match &spec.measurement {
            MeasurementSpec::Basic { .. } => Measurement::Basic {
                psi: spec
                    .levels
                    .iter()
                    .map(|&l| (0..spec.slots()).map(|_| (0..l).map(|_| take(k)).collect()).collect())
                    .collect(),
            },
            MeasurementSpec::Cutpoint => Measurement::Cutpoint {
                zeta: take(k),
                omega: take(spec.levels[0] - 1),
            },
            MeasurementSpec::Covariate { .. } => Measurement::Covariate {
                xi: (0..N_XI).map(|_| take(k)).collect(),
                beta: take(spec.n_beta()),
                gamma: take(N_GAMMA),
            },
        };
        Ok(ModelParams {
            initial,
            transition,
            measurement,
        })
    }
}

pub(crate) fn normalized(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic_params() -> ModelParams {
        ModelParams {
            initial: vec![1.0, 2.0, 3.0],
            transition: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]],
            measurement: Measurement::Basic {
                psi: vec![vec![vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]]],
            },
        }
    }

    #[test]
    fn flatten_round_trip() {
        let spec = ModelSpec::basic(vec![2], 3, true);
        let p = basic_params();
        p.validate(&spec).unwrap();
        let flat = p.flatten();
        assert_eq!(flat.len(), ModelParams::flat_len(&spec, 3));
        assert_eq!(ModelParams::unflatten(&spec, 3, &flat).unwrap(), p);
    }

    #[test]
    fn permutation_moves_rows_and_columns() {
        let p = basic_params().permuted(&[2, 0, 1]);
        assert_eq!(p.initial, vec![3.0, 1.0, 2.0]);
        assert_eq!(p.transition[0], vec![9.0, 7.0, 8.0]);
        match &p.measurement {
            Measurement::Basic { psi } => assert_eq!(psi[0][0][1], vec![6.0, 4.0, 5.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn removing_a_state_drops_row_and_column() {
        let p = basic_params().without_state(1);
        assert_eq!(p.transition, vec![vec![1.0, 3.0], vec![7.0, 9.0]]);
        assert_eq!(p.initial, vec![1.0, 3.0]);
    }

    #[test]
    fn validation_rejects_nonpositive_weights() {
        let spec = ModelSpec::basic(vec![2], 3, true);
        let mut p = basic_params();
        p.transition[1][2] = 0.0;
        assert!(p.validate(&spec).is_err());
    }

    #[test]
    fn probabilities_are_normalized() {
        let p = basic_params();
        for row in p.transition_probs() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((p.initial_probs()[2] - 0.5).abs() < 1e-15);
    }
}
