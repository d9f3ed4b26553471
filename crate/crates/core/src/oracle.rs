//! Independent reference computations.
//!
//! Nothing here calls the forward recursion or the emission code of
//! [`crate::model`]; the brute-force likelihood has its own probability
//! evaluation and the Jacobian estimate treats the split map as a black box.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FlatLikelihood, Measurement, ModelParams, ModelSpec, PanelDataset};
use crate::priors::PriorSpec;
use crate::sampler::moves::{split_params, SplitAux};
use crate::sampler::{Sampler, SamplerConfig};
use crate::trace::{SweepView, TraceSink};

/// Every tolerance the oracles and the `check` command use.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub loglik_abs: f64,
    pub jacobian_rel: f64,
    pub round_trip: f64,
    pub z_max: f64,
    pub condition_max: f64,
    pub fd_step: f64,
    pub max_paths: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    loglik_abs: 1e-10,
    jacobian_rel: 1e-4,
    round_trip: 1e-12,
    z_max: 3.0,
    condition_max: 1e10,
    fd_step: 1e-6,
    max_paths: 1e6,
};

/// One main-path versus oracle comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub case: String,
    pub main_value: f64,
    pub oracle_value: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Compares on absolute error.
    pub fn absolute(case: impl Into<String>, main_value: f64, oracle_value: f64, tolerance: f64) -> Self {
        Self::build(case.into(), main_value, oracle_value, tolerance, false)
    }

    /// Compares on relative error.
    pub fn relative(case: impl Into<String>, main_value: f64, oracle_value: f64, tolerance: f64) -> Self {
        Self::build(case.into(), main_value, oracle_value, tolerance, true)
    }

    fn build(case: String, main_value: f64, oracle_value: f64, tolerance: f64, relative: bool) -> Self {
        let abs_err = if main_value == oracle_value { 0.0 } else { (main_value - oracle_value).abs() };
        let rel_err = if abs_err == 0.0 { 0.0 } else { abs_err / oracle_value.abs() };
        let err = if relative { rel_err } else { abs_err };
        OracleReport { case, main_value, oracle_value, abs_err, rel_err, tolerance, pass: err <= tolerance }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `P(A = 1, B = 1)` for success margins `a`, `b` and log odds ratio `g`,
/// by bisection on the log cross-product ratio.
fn corner_by_bisection(a: f64, b: f64, g: f64) -> f64 {
    let mut lo = (a + b - 1.0).max(0.0);
    let mut hi = a.min(b);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let lor = mid.ln() + (1.0 - a - b + mid).ln() - (a - mid).ln() - (b - mid).ln();
        if lor > g {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log P(y_i^(t) | U = u)` evaluated from scratch.
fn log_emission(spec: &ModelSpec, params: &ModelParams, data: &PanelDataset, i: usize, t: usize, u: usize) -> f64 {
    match &params.measurement {
        Measurement::Basic { psi } => {
            let slot = if psi[0].len() == 1 { 0 } else { t };
            (0..data.variables())
                .map(|j| {
                    let col = &psi[j][slot];
                    let y = data.response(i, t, j) as usize;
                    let total: f64 = col.iter().map(|c| c[u]).sum();
                    (col[y][u] / total).ln()
                })
                .sum()
        }
        Measurement::Cutpoint { zeta, omega } => {
            let mut cum = vec![0.0];
            for w in omega {
                let last = *cum.last().unwrap();
                cum.push(last + zeta[u] + w);
            }
            let norm = log_sum_exp(&cum);
            (0..data.variables())
                .map(|j| cum[data.response(i, t, j) as usize] - norm)
                .sum()
        }
        Measurement::Covariate { xi, beta, gamma } => {
            let design = spec.design().expect("covariate model carries a design");
            let x = data.covariates.as_ref().expect("covariates present").row(i, t);
            let mut offset = 0;
            let mut eta = [0.0; 2];
            for (m, e) in eta.iter_mut().enumerate() {
                let cols = &design.columns[m];
                let mut v = xi[m][u];
                for (c, &col) in cols.iter().enumerate() {
                    v += x[col] * beta[offset + c];
                }
                let mut width = cols.len();
                if design.occasion_dummies {
                    if t > 0 {
                        v += beta[offset + cols.len() + t - 1];
                    }
                    width += spec.occasions - 1;
                }
                offset += width;
                *e = v;
            }
            let (y1, y2) = (data.response(i, t, 0), data.response(i, t, 1));
            let m1 = if y1 == 1 { logistic(eta[0]) } else { logistic(-eta[0]) };
            let m2 = if y2 == 1 { logistic(eta[1]) } else { logistic(-eta[1]) };
            let g = if y1 == y2 { gamma[0] } else { -gamma[0] };
            corner_by_bisection(m1, m2, g).ln()
        }
    }
}

/// Log-likelihood by enumerating every latent path of every subject.
pub fn brute_force_loglik(spec: &ModelSpec, params: &ModelParams, data: &PanelDataset) -> Result<f64> {
    params.validate(spec)?;
    let k = params.k();
    let t_count = data.occasions();
    let paths = (k as f64).powi(t_count as i32);
    if paths > TOLERANCES.max_paths {
        return Err(Error::Unsupported(format!(
            "{k}^{t_count} latent paths exceed the enumeration limit"
        )));
    }
    let lam_total: f64 = params.initial.iter().sum();
    let log_init: Vec<f64> = params.initial.iter().map(|x| (x / lam_total).ln()).collect();
    let log_trans: Vec<Vec<f64>> = params
        .transition
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|x| (x / s).ln()).collect()
        })
        .collect();
    let mut total = 0.0;
    for i in 0..data.n() {
        let emit: Vec<Vec<f64>> = (0..t_count)
            .map(|t| (0..k).map(|u| log_emission(spec, params, data, i, t, u)).collect())
            .collect();
        let mut terms = Vec::with_capacity(paths as usize);
        let mut path = vec![0usize; t_count];
        loop {
            let mut lp = log_init[path[0]] + emit[0][path[0]];
            for t in 1..t_count {
                lp += log_trans[path[t - 1]][path[t]] + emit[t][path[t]];
            }
            terms.push(lp);
            // odometer increment over the k^T paths
            let mut pos = t_count;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                path[pos] += 1;
                if path[pos] < k {
                    break;
                }
                path[pos] = 0;
            }
            if path.iter().all(|&u| u == 0) {
                break;
            }
        }
        total += log_sum_exp(&terms);
    }
    Ok(total)
}

/// Finite-difference estimate of `|det J|` for a smooth map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianEstimate {
    pub log_abs_det: f64,
    pub condition: f64,
    pub ill_conditioned: bool,
}

impl JacobianEstimate {
    pub fn abs_det(&self) -> f64 {
        self.log_abs_det.exp()
    }
}

/// Central differences with one Richardson step, in log coordinates where
/// `log_in` / `log_out` flag a positive input / output.
pub fn numeric_jacobian<F>(map: F, x: &[f64], log_in: &[bool], log_out: &[bool]) -> Result<JacobianEstimate>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    if log_in.len() != n {
        return Err(Error::invalid("one log flag is needed per input"));
    }
    let y0 = map(x);
    if y0.len() != n || log_out.len() != n {
        return Err(Error::invalid("the Jacobian oracle needs a square map"));
    }
    if x.iter().zip(log_in).chain(y0.iter().zip(log_out)).any(|(v, &l)| l && !(*v > 0.0)) {
        return Err(Error::invalid("log coordinates need positive values"));
    }
    let to_z = |v: &[f64], flags: &[bool]| -> Vec<f64> {
        v.iter().zip(flags).map(|(&a, &l)| if l { a.ln() } else { a }).collect()
    };
    let z0 = to_z(x, log_in);
    let eval = |z: &[f64]| -> Vec<f64> {
        let xs: Vec<f64> = z.iter().zip(log_in).map(|(&a, &l)| if l { a.exp() } else { a }).collect();
        to_z(&map(&xs), log_out)
    };
    let h = TOLERANCES.fd_step;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let central = |col: usize, step: f64| -> Vec<f64> {
        let mut up = z0.clone();
        let mut down = z0.clone();
        up[col] += step;
        down[col] -= step;
        eval(&up).iter().zip(eval(&down)).map(|(a, b)| (a - b) / (2.0 * step)).collect()
    };
    for col in 0..n {
        let d1 = central(col, h);
        let d2 = central(col, h / 2.0);
        for row in 0..n {
            jac[(row, col)] = (4.0 * d2[row] - d1[row]) / 3.0;
        }
    }
    let det = jac.clone().determinant();
    let sv = jac.singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let condition = smax / smin;
    // back from log coordinates: J_raw = diag(y) J_z diag(1/x)
    let correction: f64 = y0.iter().zip(log_out).filter(|(_, &l)| l).map(|(v, _)| v.ln()).sum::<f64>()
        - x.iter().zip(log_in).filter(|(_, &l)| l).map(|(v, _)| v.ln()).sum::<f64>();
    Ok(JacobianEstimate {
        log_abs_det: det.abs().ln() + correction,
        condition,
        ill_conditioned: !(condition <= TOLERANCES.condition_max),
    })
}

/// Finite-difference `|J|` of the full split map
/// `(theta_k, aux) -> theta_{k+1}`.
pub fn numeric_split_jacobian(
    spec: &ModelSpec,
    parent: &ModelParams,
    u0: usize,
    insert_at: usize,
    aux: &SplitAux,
) -> Result<JacobianEstimate> {
    let k = parent.k();
    let n_parent = ModelParams::flat_len(spec, k);
    let mut x = parent.flatten();
    x.extend(aux.to_vec());
    let mut log_in = ModelParams::positive_mask(spec, k);
    log_in.extend(SplitAux::positive_mask(spec, k));
    let log_out = ModelParams::positive_mask(spec, k + 1);
    let map = |v: &[f64]| -> Vec<f64> {
        let p = ModelParams::unflatten(spec, k, &v[..n_parent]).expect("fixed layout");
        let a = SplitAux::from_slice(k, &v[n_parent..]);
        split_params(spec, &p, u0, insert_at, &a).flatten()
    };
    numeric_jacobian(map, &x, &log_in, &log_out)
}

/// Running batch sums of a fixed set of statistics.
#[derive(Clone, Debug)]
struct BatchMeans {
    batch_len: u64,
    current: Vec<f64>,
    filled: u64,
    batches: Vec<Vec<f64>>,
}

impl BatchMeans {
    fn new(stats: usize, batch_len: u64) -> Self {
        BatchMeans { batch_len, current: vec![0.0; stats], filled: 0, batches: Vec::new() }
    }

    fn push(&mut self, values: &[f64]) {
        for (c, v) in self.current.iter_mut().zip(values) {
            *c += v;
        }
        self.filled += 1;
        if self.filled == self.batch_len {
            let n = self.batch_len as f64;
            self.batches.push(self.current.iter().map(|s| s / n).collect());
            self.current.iter_mut().for_each(|c| *c = 0.0);
            self.filled = 0;
        }
    }

    /// Mean and batch-means standard error of statistic `s`.
    fn estimate(&self, s: usize) -> (f64, f64) {
        let b = self.batches.len() as f64;
        let xs: Vec<f64> = self.batches.iter().map(|v| v[s]).collect();
        let mean = xs.iter().sum::<f64>() / b;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (mean, (var / b).sqrt())
    }
}

/// One z-scored comparison from the prior chain.
#[derive(Clone, Debug, Serialize)]
pub struct ZCheck {
    pub label: String,
    pub estimate: f64,
    pub target: f64,
    pub std_err: f64,
    pub z: f64,
}

/// Outcome of running the sampler against the prior alone.
#[derive(Clone, Debug, Serialize)]
pub struct PriorChainReport {
    pub sweeps: u64,
    pub k_mass: Vec<f64>,
    pub checks: Vec<ZCheck>,
    pub max_z: f64,
    pub pass: bool,
}

impl PriorChainReport {
    pub fn as_oracle_reports(&self) -> Vec<OracleReport> {
        self.checks
            .iter()
            .map(|c| {
                let mut r = OracleReport::absolute(c.label.clone(), c.estimate, c.target, TOLERANCES.z_max * c.std_err);
                r.pass = c.z.abs() < TOLERANCES.z_max;
                r
            })
            .collect()
    }
}

/// Statistics whose prior expectation is known at every `k`.
struct PriorSink<'a> {
    prior: &'a PriorSpec,
    stats: BatchMeans,
    buf: Vec<f64>,
}

const MOMENT_STATS: usize = 6;

impl TraceSink for PriorSink<'_> {
    fn record(&mut self, sweep: &SweepView<'_>) -> Result<()> {
        let p = sweep.params;
        let k = p.k();
        let kf = k as f64;
        let d = self.prior.delta_u;
        self.buf.clear();
        for kk in 1..=self.prior.k_max {
            self.buf.push(if k == kk { 1.0 } else { 0.0 });
        }
        // first initial probability against Dirichlet(d, ..., d)
        let pi1 = p.initial[0] / p.initial.iter().sum::<f64>();
        let pi_var = (kf - 1.0) / (kf * kf * (kf * d + 1.0));
        self.buf.push(pi1 - 1.0 / kf);
        self.buf.push((pi1 - 1.0 / kf).powi(2) - pi_var);
        // raw weights against Gamma(d, 1)
        self.buf.push(p.initial[0] - d);
        self.buf.push((p.initial[0] - d).powi(2) - d);
        // persistence probability of the first state
        let shapes: Vec<f64> = (0..k).map(|v| self.prior.transition_shape(0, v, k)).collect();
        let total: f64 = shapes.iter().sum();
        let stay = p.transition[0][0] / p.transition[0].iter().sum::<f64>();
        let m = shapes[0] / total;
        let v = shapes[0] * (total - shapes[0]) / (total * total * (total + 1.0));
        self.buf.push(stay - m);
        self.buf.push((stay - m).powi(2) - v);
        self.stats.push(&self.buf);
        Ok(())
    }
}

/// Runs the full sampler with a constant likelihood and compares the draws
/// with what the prior implies: a uniform law on `k`, Dirichlet moments for
/// normalized weights and Gamma moments for raw weights. Standard errors come
/// from 100 batch means.
pub fn prior_chain_check(spec: &ModelSpec, prior: &PriorSpec, cfg: &SamplerConfig, init: ModelParams) -> Result<PriorChainReport> {
    if cfg.sweeps < 1000 {
        return Err(Error::invalid("the prior chain check needs at least 1000 sweeps"));
    }
    let batches = 100;
    let batch_len = cfg.sweeps / batches;
    let k_max = prior.k_max;
    let mut sink = PriorSink {
        prior,
        stats: BatchMeans::new(k_max + MOMENT_STATS, batch_len),
        buf: Vec::new(),
    };
    let cfg = SamplerConfig { sweeps: batch_len * batches, burn_in: 0, ..cfg.clone() };
    Sampler::new(&FlatLikelihood, spec, prior, &cfg)?.run(init, &mut sink)?;

    let labels = [
        "initial probability mean",
        "initial probability variance",
        "initial weight mean",
        "initial weight variance",
        "persistence probability mean",
        "persistence probability variance",
    ];
    let mut checks = Vec::new();
    let mut k_mass = Vec::new();
    for kk in 0..k_max {
        let (mean, se) = sink.stats.estimate(kk);
        k_mass.push(mean);
        let target = 1.0 / k_max as f64;
        checks.push(ZCheck {
            label: format!("P(k = {})", kk + 1),
            estimate: mean,
            target,
            std_err: se,
            z: if se > 0.0 { (mean - target) / se } else { 0.0 },
        });
    }
    for (s, label) in labels.iter().enumerate() {
        let (mean, se) = sink.stats.estimate(k_max + s);
        checks.push(ZCheck {
            label: format!("{label} (centred)"),
            estimate: mean,
            target: 0.0,
            std_err: se,
            z: if se > 0.0 { mean / se } else { 0.0 },
        });
    }
    let max_z = checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    Ok(PriorChainReport {
        sweeps: cfg.sweeps,
        k_mass,
        checks,
        max_z,
        pass: max_z < TOLERANCES.z_max,
    })
}
