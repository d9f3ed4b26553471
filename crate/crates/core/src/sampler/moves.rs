//! Deterministic parts of the dimension-changing moves.
//!
//! A split of state `u0` in a `k`-state model puts the first child in `u0`'s
//! slot and inserts the second child at position `insert_at` of the
//! `(k+1)`-state result. The matching combine takes an ordered pair
//! `(keep, remove)`, writes the merged state at `keep` and deletes `remove`.
//! With `u0` uniform on `k` slots, `insert_at` uniform on `k+1` positions and
//! the pair uniform on the `(k+1)k` ordered pairs, the labelling factors in
//! the acceptance ratio cancel.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Open01};
use std::f64::consts::LN_2;

use super::SplitAuxConfig;
use crate::model::{MeasurementSpec, ModelParams, ModelSpec};
use crate::priors::{ln_gamma_density, StateBlock};

/// Auxiliary variables of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitAux {
    /// Share of `lambda_u0` given to the first child.
    pub rho: f64,
    /// Column shares `rho_u` for `u != u0`, in increasing `u`.
    pub rho_col: Vec<f64>,
    /// Share `rho_u0` of the diagonal weight.
    pub rho_diag: f64,
    /// Row factors `theta_v` for `v != u0`, in increasing `v`.
    pub theta_row: Vec<f64>,
    /// `theta_u1`, `theta_u2` for the diagonal block.
    pub theta_diag: [f64; 2],
    /// One value per measurement state vector: a multiplicative factor for
    /// the basic model, an additive perturbation otherwise.
    pub measurement: Vec<f64>,
}

impl SplitAux {
    /// Flattens as `rho, rho_col, rho_diag, theta_row, theta_diag,
    /// measurement`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![self.rho];
        out.extend(&self.rho_col);
        out.push(self.rho_diag);
        out.extend(&self.theta_row);
        out.extend(self.theta_diag);
        out.extend(&self.measurement);
        out
    }

    /// Inverse of [`to_vec`](Self::to_vec) for a `k`-state parent.
    pub fn from_slice(k: usize, values: &[f64]) -> SplitAux {
        let m = k - 1;
        SplitAux {
            rho: values[0],
            rho_col: values[1..1 + m].to_vec(),
            rho_diag: values[1 + m],
            theta_row: values[2 + m..2 + 2 * m].to_vec(),
            theta_diag: [values[2 + 2 * m], values[3 + 2 * m]],
            measurement: values[4 + 2 * m..].to_vec(),
        }
    }

    /// Which entries of [`to_vec`](Self::to_vec) are strictly positive by
    /// construction.
    pub fn positive_mask(spec: &ModelSpec, k: usize) -> Vec<bool> {
        let mut out = vec![false; k + 1];
        out.extend(vec![true; k + 1]);
        out.extend(vec![multiplicative(spec); state_vector_count(spec)]);
        out
    }

    /// Whether every auxiliary lies in the interior of its support.
    pub fn is_valid(&self, spec: &ModelSpec) -> bool {
        let unit = |x: &f64| *x > 0.0 && *x < 1.0;
        let pos = |x: &f64| *x > 0.0 && x.is_finite();
        let meas_ok = if multiplicative(spec) {
            self.measurement.iter().all(pos)
        } else {
            self.measurement.iter().all(|x| x.is_finite())
        };
        unit(&self.rho)
            && self.rho_col.iter().all(unit)
            && unit(&self.rho_diag)
            && self.theta_row.iter().all(pos)
            && self.theta_diag.iter().all(pos)
            && meas_ok
    }
}

fn multiplicative(spec: &ModelSpec) -> bool {
    matches!(spec.measurement, MeasurementSpec::Basic { .. })
}

/// Number of state-indexed measurement vectors under `spec`.
pub fn state_vector_count(spec: &ModelSpec) -> usize {
    match spec.measurement {
        MeasurementSpec::Basic { .. } => spec.levels.iter().sum::<usize>() * spec.slots(),
        MeasurementSpec::Cutpoint => 1,
        MeasurementSpec::Covariate { .. } => crate::model::N_XI,
    }
}

fn measurement_sd(spec: &ModelSpec, cfg: &SplitAuxConfig) -> f64 {
    match spec.measurement {
        MeasurementSpec::Cutpoint => cfg.tau_zeta,
        _ => cfg.tau_xi,
    }
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("validated Gamma parameters")
        .sample(rng)
}

/// Draws split auxiliaries for a `k`-state parent.
pub fn draw_split_aux<R: Rng + ?Sized>(spec: &ModelSpec, cfg: &SplitAuxConfig, k: usize, rng: &mut R) -> SplitAux {
    let rho: f64 = Open01.sample(rng);
    let rho_col = (1..k).map(|_| Open01.sample(rng)).collect();
    let rho_diag: f64 = Open01.sample(rng);
    let theta_row = (1..k).map(|_| gamma_draw(cfg.a_lambda, cfg.b_lambda, rng)).collect();
    let theta_diag = [
        gamma_draw(cfg.a_theta, cfg.b_theta, rng),
        gamma_draw(cfg.a_theta, cfg.b_theta, rng),
    ];
    let n = state_vector_count(spec);
    let measurement = if multiplicative(spec) {
        (0..n).map(|_| gamma_draw(cfg.a_psi, cfg.b_psi, rng)).collect()
    } else {
        let normal = Normal::new(0.0, measurement_sd(spec, cfg)).expect("positive sd");
        (0..n).map(|_| normal.sample(rng)).collect()
    };
    SplitAux { rho, rho_col, rho_diag, theta_row, theta_diag, measurement }
}

/// Log density of [`draw_split_aux`]; uniform terms contribute zero.
pub fn split_aux_log_density(spec: &ModelSpec, cfg: &SplitAuxConfig, aux: &SplitAux) -> f64 {
    let mut total: f64 = aux
        .theta_row
        .iter()
        .map(|&x| ln_gamma_density(x, cfg.a_lambda, cfg.b_lambda))
        .sum();
    total += aux
        .theta_diag
        .iter()
        .map(|&x| ln_gamma_density(x, cfg.a_theta, cfg.b_theta))
        .sum::<f64>();
    if multiplicative(spec) {
        total += aux
            .measurement
            .iter()
            .map(|&x| ln_gamma_density(x, cfg.a_psi, cfg.b_psi))
            .sum::<f64>();
    } else {
        let sd = measurement_sd(spec, cfg);
        total += aux
            .measurement
            .iter()
            .map(|&e| -0.5 * (2.0 * std::f64::consts::PI * sd * sd).ln() - e * e / (2.0 * sd * sd))
            .sum::<f64>();
    }
    total
}

/// `log |J|` of the split map at `parent`, `u0`, `aux`.
pub fn split_log_jacobian(spec: &ModelSpec, parent: &ModelParams, u0: usize, aux: &SplitAux) -> f64 {
    let k = parent.k();
    let lam00 = parent.transition[u0][u0];
    let others = (0..k).filter(|&u| u != u0);
    let j1 = parent.initial[u0].ln();
    let j2: f64 = others.clone().map(|u| parent.transition[u][u0].ln()).sum();
    let j3: f64 = (k - 1) as f64 * LN_2
        + others
            .zip(&aux.theta_row)
            .map(|(v, t)| parent.transition[u0][v].ln() - t.ln())
            .sum::<f64>();
    let j4 = 2.0 * LN_2 + 3.0 * lam00.ln() + aux.rho_diag.ln() + (1.0 - aux.rho_diag).ln()
        - aux.theta_diag[0].ln()
        - aux.theta_diag[1].ln();
    let j5 = if multiplicative(spec) {
        parent
            .measurement
            .state_vectors()
            .iter()
            .zip(&aux.measurement)
            .map(|(v, t)| LN_2 + v[u0].ln() - t.ln())
            .sum()
    } else {
        aux.measurement.len() as f64 * LN_2
    };
    j1 + j2 + j3 + j4 + j5
}

/// Final-order permutation that moves appended index `k` to `insert_at`.
fn insertion_perm(k: usize, insert_at: usize) -> Vec<usize> {
    (0..=k)
        .map(|f| match f.cmp(&insert_at) {
            std::cmp::Ordering::Less => f,
            std::cmp::Ordering::Equal => k,
            std::cmp::Ordering::Greater => f - 1,
        })
        .collect()
}

/// Splits state `u0` of `parent`; the second child lands at `insert_at`.
pub fn split_params(spec: &ModelSpec, parent: &ModelParams, u0: usize, insert_at: usize, aux: &SplitAux) -> ModelParams {
    let k = parent.k();
    assert!(u0 < k && insert_at <= k, "split indices out of range");
    let mult = multiplicative(spec);
    let mut out = parent.clone();
    let lam = parent.initial[u0];
    out.initial[u0] = lam * aux.rho;
    out.initial.push(lam * (1.0 - aux.rho));

    let others: Vec<usize> = (0..k).filter(|&u| u != u0).collect();
    for (&u, &r) in others.iter().zip(&aux.rho_col) {
        let w = parent.transition[u][u0];
        out.transition[u][u0] = w * r;
        out.transition[u].push(w * (1.0 - r));
    }
    let mut child2 = vec![0.0; k + 1];
    for (&v, &t) in others.iter().zip(&aux.theta_row) {
        let w = parent.transition[u0][v];
        out.transition[u0][v] = w * t;
        child2[v] = w / t;
    }
    let d = parent.transition[u0][u0];
    let (r0, [t1, t2]) = (aux.rho_diag, aux.theta_diag);
    out.transition[u0][u0] = d * r0 * t1;
    out.transition[u0].push(d * (1.0 - r0) * t2);
    child2[u0] = d * r0 / t1;
    child2[k] = d * (1.0 - r0) / t2;
    out.transition.push(child2);

    for (v, &a) in out.measurement.state_vectors_mut().into_iter().zip(&aux.measurement) {
        let x = v[u0];
        if mult {
            v[u0] = x * a;
            v.push(x / a);
        } else {
            v[u0] = x - a;
            v.push(x + a);
        }
    }
    out.permuted(&insertion_perm(k, insert_at))
}

/// Result of merging two states.
#[derive(Clone, Debug, PartialEq)]
pub struct Combined {
    pub params: ModelParams,
    /// Index of the merged state in `params`.
    pub u0: usize,
    /// Where the matching split would insert its second child.
    pub insert_at: usize,
    /// Auxiliaries that the matching split would have drawn.
    pub aux: SplitAux,
}

/// Merges `keep` and `remove` into one state written at `keep`'s slot.
pub fn combine_params(spec: &ModelSpec, current: &ModelParams, keep: usize, remove: usize) -> Combined {
    let k1 = current.k();
    assert!(keep < k1 && remove < k1 && keep != remove, "combine indices out of range");
    let (a, b) = (keep, remove);
    let mult = multiplicative(spec);
    let mut out = current.clone();
    let t = &current.transition;

    let lam = current.initial[a] + current.initial[b];
    let rho = current.initial[a] / lam;
    out.initial[a] = lam;

    let others: Vec<usize> = (0..k1).filter(|&u| u != a && u != b).collect();
    let mut rho_col = Vec::with_capacity(others.len());
    for &u in &others {
        let w = t[u][a] + t[u][b];
        rho_col.push(t[u][a] / w);
        out.transition[u][a] = w;
    }
    let mut theta_row = Vec::with_capacity(others.len());
    for &v in &others {
        out.transition[a][v] = (t[a][v] * t[b][v]).sqrt();
        theta_row.push((t[a][v] / t[b][v]).sqrt());
    }
    let left = (t[a][a] * t[b][a]).sqrt();
    let right = (t[a][b] * t[b][b]).sqrt();
    out.transition[a][a] = left + right;
    let rho_diag = left / (left + right);
    let theta_diag = [(t[a][a] / t[b][a]).sqrt(), (t[a][b] / t[b][b]).sqrt()];

    let mut measurement = Vec::new();
    for v in out.measurement.state_vectors_mut() {
        let (xa, xb) = (v[a], v[b]);
        if mult {
            v[a] = (xa * xb).sqrt();
            measurement.push((xa / xb).sqrt());
        } else {
            v[a] = 0.5 * (xa + xb);
            measurement.push(0.5 * (xb - xa));
        }
    }
    let params = out.without_state(b);
    let u0 = if a < b { a } else { a - 1 };
    Combined {
        params,
        u0,
        insert_at: b,
        aux: SplitAux { rho, rho_col, rho_diag, theta_row, theta_diag, measurement },
    }
}

/// Inserts a new state at `position`.
pub fn birth_params(current: &ModelParams, position: usize, block: &StateBlock) -> ModelParams {
    let k = current.k();
    assert!(position <= k, "birth position out of range");
    let mut out = current.clone();
    out.initial.insert(position, block.initial);
    for (row, &c) in out.transition.iter_mut().zip(&block.column) {
        row.insert(position, c);
    }
    out.transition.insert(position, block.row.clone());
    for (v, &x) in out.measurement.state_vectors_mut().into_iter().zip(&block.measurement) {
        v.insert(position, x);
    }
    out
}

/// Removes state `u` and returns the block a birth would need to restore it.
pub fn death_params(current: &ModelParams, u: usize) -> (ModelParams, StateBlock) {
    let block = StateBlock {
        initial: current.initial[u],
        row: current.transition[u].clone(),
        column: current
            .transition
            .iter()
            .enumerate()
            .filter(|(w, _)| *w != u)
            .map(|(_, row)| row[u])
            .collect(),
        measurement: current.measurement.state_vectors().iter().map(|v| v[u]).collect(),
    };
    (current.without_state(u), block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Measurement;
    use crate::priors::PriorSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &ModelParams, b: &ModelParams, tol: f64) -> bool {
        let (x, y) = (a.flatten(), b.flatten());
        x.len() == y.len() && x.iter().zip(&y).all(|(p, q)| (p - q).abs() <= tol * (1.0 + q.abs()))
    }

    #[test]
    fn symmetric_split_children_match() {
        let spec = ModelSpec::cutpoint(3, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parent = PriorSpec::default().sample(&spec, 2, &mut rng);
        let aux = SplitAux {
            rho: 0.5,
            rho_col: vec![0.5],
            rho_diag: 0.5,
            theta_row: vec![1.0],
            theta_diag: [1.0, 1.0],
            measurement: vec![0.0],
        };
        let child = split_params(&spec, &parent, 0, 2, &aux);
        assert_eq!(child.initial[0], child.initial[2]);
        assert_eq!(child.transition[0], child.transition[2]);
        let back = combine_params(&spec, &child, 0, 2);
        assert!(close(&back.params, &parent, 1e-15));
        assert_eq!(back.aux, aux);
    }

    #[test]
    fn combine_inverts_split_for_every_slot_pair() {
        let spec = ModelSpec::basic(vec![3, 2], 2, false);
        let cfg = SplitAuxConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let parent = PriorSpec::default().sample(&spec, 3, &mut rng);
        for u0 in 0..3 {
            for j in 0..=3 {
                let aux = draw_split_aux(&spec, &cfg, 3, &mut rng);
                let child = split_params(&spec, &parent, u0, j, &aux);
                let keep = if u0 < j { u0 } else { u0 + 1 };
                let back = combine_params(&spec, &child, keep, j);
                assert_eq!((back.u0, back.insert_at), (u0, j));
                assert!(close(&back.params, &parent, 1e-12));
                let again = split_params(&spec, &back.params, back.u0, back.insert_at, &back.aux);
                assert!(close(&again, &child, 1e-12));
            }
        }
    }

    #[test]
    fn merging_duplicates_doubles_the_initial_weight() {
        let spec = ModelSpec::basic(vec![2], 1, true);
        let p = ModelParams {
            initial: vec![0.7, 0.7],
            transition: vec![vec![2.0, 1.0], vec![2.0, 1.0]],
            measurement: Measurement::Basic { psi: vec![vec![vec![vec![1.0, 1.0], vec![3.0, 3.0]]]] },
        };
        let merged = combine_params(&spec, &p, 0, 1).params;
        assert_eq!(merged.initial, vec![1.4]);
        assert_eq!(merged.transition_probs(), vec![vec![1.0]]);
    }

    #[test]
    fn death_undoes_birth() {
        let spec = ModelSpec::covariate(3, crate::model::DesignRecipe::shared(vec![0], true));
        let prior = PriorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = prior.sample(&spec, 2, &mut rng);
        let block = prior.sample_state_block(&spec, 3, 1, 2, &mut rng);
        let grown = birth_params(&p, 1, &block);
        grown.validate(&spec).unwrap();
        let (back, recovered) = death_params(&grown, 1);
        assert_eq!(back, p);
        assert_eq!(recovered, block);
    }
}
