//! Conditional response probabilities for the three measurement variants.

use serde::{Deserialize, Serialize};

use super::{Measurement, MeasurementSpec, ModelParams, ModelSpec};
use crate::error::{Error, Result};

/// Below this distance from independence the odds-ratio equation is solved by
/// bisection instead of the closed-form root.
const NEAR_INDEPENDENCE: f64 = 1e-8;
/// `exp` of anything larger overflows.
const MAX_LOG_ODDS: f64 = 700.0;

/// Logistic function, evaluated without overflow for any finite input.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Joint distribution of two binary responses, `cells[2 * y1 + y2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointCellTable {
    pub cells: [f64; 4],
}

impl JointCellTable {
    pub fn get(&self, y1: usize, y2: usize) -> f64 {
        self.cells[2 * y1 + y2]
    }

    pub fn marginal_logits(&self) -> (f64, f64) {
        let [p00, p01, p10, p11] = self.cells;
        ((p10 + p11).ln() - (p00 + p01).ln(), (p01 + p11).ln() - (p00 + p10).ln())
    }

    pub fn log_odds_ratio(&self) -> f64 {
        let [p00, p01, p10, p11] = self.cells;
        p11.ln() + p00.ln() - p10.ln() - p01.ln()
    }
}

/// Probability of the "both succeed" cell of a 2x2 table with success
/// margins `a`, `b` and odds ratio `exp(log_or)`.
fn corner_cell(a: f64, b: f64, log_or: f64) -> f64 {
    corner_cell_with(a, b, OddsRatio::new(log_or))
}

/// `exp(g)` and `exp(g) - 1` for a clamped log-odds ratio `g`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct OddsRatio {
    log: f64,
    psi: f64,
    psi_m1: f64,
}

impl OddsRatio {
    pub(crate) fn new(log_or: f64) -> Self {
        let log = log_or.clamp(-MAX_LOG_ODDS, MAX_LOG_ODDS);
        OddsRatio { log, psi: log.exp(), psi_m1: log.exp_m1() }
    }

    fn inverse(self) -> Self {
        OddsRatio { log: -self.log, psi: 1.0 / self.psi, psi_m1: -self.psi_m1 / self.psi }
    }
}

fn corner_cell_with(a: f64, b: f64, or: OddsRatio) -> f64 {
    let OddsRatio { log: log_or, psi, psi_m1 } = or;
    if psi_m1.abs() < NEAR_INDEPENDENCE {
        return corner_cell_bisection(a, b, log_or);
    }
    let s = 1.0 + (a + b) * psi_m1;
    let root = (s * s - 4.0 * psi * psi_m1 * a * b).max(0.0).sqrt();
    // pick the algebraically equivalent form that avoids cancellation
    if s >= 0.0 {
        2.0 * psi * a * b / (s + root)
    } else {
        (s - root) / (2.0 * psi_m1)
    }
}

fn corner_cell_bisection(a: f64, b: f64, log_or: f64) -> f64 {
    let mut lo = (a + b - 1.0).max(0.0);
    let mut hi = a.min(b);
    let gap = |p11: f64| {
        let p00 = 1.0 - a - b + p11;
        p11.ln() + p00.ln() - (a - p11).ln() - (b - p11).ln() - log_or
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Recovers the 2x2 joint table from two marginal logits and the log-odds
/// ratio. Each cell is computed from its own margins so small cells keep full
/// relative precision.
pub fn invert_bivariate_margins(logit1: f64, logit2: f64, log_odds_ratio: f64) -> JointCellTable {
    let g = log_odds_ratio.clamp(-MAX_LOG_ODDS, MAX_LOG_ODDS);
    let (p1, q1) = (expit(logit1), expit(-logit1));
    let (p2, q2) = (expit(logit2), expit(-logit2));
    let mut cells = [
        corner_cell(q1, q2, g),
        corner_cell(q1, p2, -g),
        corner_cell(p1, q2, -g),
        corner_cell(p1, p2, g),
    ];
    let total: f64 = cells.iter().sum();
    for c in &mut cells {
        *c /= total;
    }
    JointCellTable { cells }
}

/// Probability of the single cell `(y1, y2)` of the table built by
/// [`invert_bivariate_margins`], without computing the other three.
pub(crate) fn bivariate_cell(logit1: f64, logit2: f64, or: OddsRatio, y1: usize, y2: usize) -> f64 {
    let m1 = if y1 == 1 { expit(logit1) } else { expit(-logit1) };
    let m2 = if y2 == 1 { expit(logit2) } else { expit(-logit2) };
    corner_cell_with(m1, m2, if y1 == y2 { or } else { or.inverse() })
}

/// Adjacent-category logit probabilities: `phi_y` proportional to
/// `exp(sum_{h<=y} (zeta + omega_h))`, with category 0 as the base.
pub fn cutpoint_probs(zeta: f64, omega: &[f64]) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(omega.len() + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for w in omega {
        acc += zeta + w;
        cumulative.push(acc);
    }
    let max = cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = cumulative.iter().map(|c| (c - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Where a conditional distribution is evaluated.
#[derive(Clone, Copy, Debug, Default)]
pub struct ResponseContext<'a> {
    /// 0-based occasion.
    pub occasion: usize,
    /// Raw covariate row `x_i^(t)`, required by the covariate variant.
    pub covariates: Option<&'a [f64]>,
}

/// Conditional distribution of the response configuration at one occasion
/// given latent state `state`.
///
/// With several response variables the result is the joint distribution over
/// configurations in row-major order (first variable slowest). The covariate
/// variant returns the four cells `(0,0), (0,1), (1,0), (1,1)`.
pub fn conditional_response_probs(
    spec: &ModelSpec,
    params: &ModelParams,
    state: usize,
    ctx: ResponseContext<'_>,
) -> Result<Vec<f64>> {
    if state >= params.k() {
        return Err(Error::invalid(format!("state {state} out of range")));
    }
    if ctx.occasion >= spec.occasions {
        return Err(Error::invalid(format!("occasion {} out of range", ctx.occasion)));
    }
    let per_variable: Vec<Vec<f64>> = match (&spec.measurement, &params.measurement) {
        (MeasurementSpec::Basic { .. }, Measurement::Basic { psi }) => psi
            .iter()
            .map(|block| {
                let col: Vec<f64> = block[spec.slot(ctx.occasion)].iter().map(|c| c[state]).collect();
                super::normalized(&col)
            })
            .collect(),
        (MeasurementSpec::Cutpoint, Measurement::Cutpoint { zeta, omega }) => {
            vec![cutpoint_probs(zeta[state], omega); spec.variables()]
        }
        (MeasurementSpec::Covariate { design }, Measurement::Covariate { xi, beta, gamma }) => {
            let x = ctx
                .covariates
                .ok_or_else(|| Error::invalid("covariate model needs a covariate row"))?;
            let needed = design.columns.iter().flatten().copied().max().map_or(0, |c| c + 1);
            if x.len() < needed {
                return Err(Error::invalid("covariate row is shorter than the design needs"));
            }
            let eta = |m: usize| {
                xi[m][state] + design.linear_predictor(m, ctx.occasion, spec.occasions, x, beta)
            };
            let table = invert_bivariate_margins(eta(0), eta(1), gamma[0]);
            return Ok(table.cells.to_vec());
        }
        _ => return Err(Error::invalid("measurement parameters do not match the model variant")),
    };
    let mut joint = vec![1.0];
    for probs in &per_variable {
        joint = joint
            .iter()
            .flat_map(|a| probs.iter().map(move |b| a * b))
            .collect();
    }
    Ok(joint)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_is_stable_in_both_tails() {
        assert_eq!(expit(800.0), 1.0);
        assert!(expit(-800.0) >= 0.0);
        assert!((expit(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn independence_table_is_product() {
        let t = invert_bivariate_margins(0.0, 0.0, 0.0);
        for c in t.cells {
            assert!((c - 0.25).abs() < 1e-15);
        }
        let t = invert_bivariate_margins(logit(0.3), logit(0.6), 0.0);
        assert!((t.get(1, 1) - 0.18).abs() < 1e-14);
    }

    #[test]
    fn near_independence_uses_consistent_branches() {
        // the bisection branch and closed form must agree across the switch
        let a = invert_bivariate_margins(0.4, -1.1, 5e-9);
        let b = invert_bivariate_margins(0.4, -1.1, 2e-8);
        assert!((a.get(1, 1) - b.get(1, 1)).abs() < 1e-8);
        assert!((a.log_odds_ratio() - 5e-9).abs() < 1e-9);
    }

    #[test]
    fn single_cell_matches_full_table() {
        for &(l1, l2, g) in &[(0.3, -1.2, 0.8), (4.0, 2.0, -3.0), (-0.5, 0.5, 1e-10), (12.0, -9.0, 40.0)] {
            let t = invert_bivariate_margins(l1, l2, g);
            for (y1, y2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let c = bivariate_cell(l1, l2, OddsRatio::new(g), y1, y2);
                assert!((c - t.get(y1, y2)).abs() <= 1e-14 * t.get(y1, y2).max(1e-300), "{l1} {l2} {g} {y1}{y2}");
            }
        }
    }

    #[test]
    fn extreme_inputs_keep_cells_positive() {
        let t = invert_bivariate_margins(25.0, -30.0, -12.0);
        assert!(t.cells.iter().all(|&c| c > 0.0 && c < 1.0));
        let (l1, l2) = t.marginal_logits();
        assert!((l1 - 25.0).abs() < 1e-8 && (l2 + 30.0).abs() < 1e-8);
    }

    #[test]
    fn cutpoint_all_zero_is_uniform() {
        for p in cutpoint_probs(0.0, &[0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cutpoint_huge_logits_do_not_overflow() {
        let p = cutpoint_probs(500.0, &[300.0, 400.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[2] - 1.0).abs() < 1e-15);
    }
}
