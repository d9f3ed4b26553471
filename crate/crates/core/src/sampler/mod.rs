//! Reversible-jump sampler over `(k, theta)`.
//!
//! Every sweep runs the within-model MH blocks and then exactly one
//! dimension-changing attempt, split/combine or birth/death with equal
//! probability.

mod init;
pub mod moves;

pub use init::frequency_start;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LikelihoodModel, Measurement, ModelParams, ModelSpec};
use crate::priors::PriorSpec;
use crate::trace::{DimOutcome, MoveCounts, MoveKind, SweepView, TraceSink};
use moves::{
    birth_params, combine_params, death_params, draw_split_aux, split_aux_log_density,
    split_log_jacobian, split_params, state_vector_count,
};

/// Random-walk standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSizes {
    pub lambda: f64,
    pub transition: f64,
    pub psi: f64,
    pub zeta: f64,
    pub omega: f64,
    pub xi: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            lambda: 0.5,
            transition: 0.1,
            psi: 0.2,
            zeta: 0.5,
            omega: 0.5,
            xi: 0.5,
            beta: 0.1,
            gamma: 0.1,
        }
    }
}

/// Proposal distributions of the split auxiliaries (Gamma shape and rate,
/// Normal standard deviations).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitAuxConfig {
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub a_theta: f64,
    pub b_theta: f64,
    pub a_psi: f64,
    pub b_psi: f64,
    pub tau_xi: f64,
    pub tau_zeta: f64,
}

impl Default for SplitAuxConfig {
    fn default() -> Self {
        SplitAuxConfig {
            a_lambda: 1.0,
            b_lambda: 1.0,
            a_theta: 1.0,
            b_theta: 1.0,
            a_psi: 1.0,
            b_psi: 1.0,
            tau_xi: 2.0,
            tau_zeta: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub sweeps: u64,
    /// Default burn-in for summaries; the sampler itself records every sweep.
    pub burn_in: u64,
    pub seed: u64,
    pub steps: StepSizes,
    pub split: SplitAuxConfig,
    /// Sweeps between recomputations of the cached likelihood and prior.
    pub check_every: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            sweeps: 10_000,
            burn_in: 2_000,
            seed: 1,
            steps: StepSizes::default(),
            split: SplitAuxConfig::default(),
            check_every: 10_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.steps;
        let a = &self.split;
        let all = [
            s.lambda, s.transition, s.psi, s.zeta, s.omega, s.xi, s.beta, s.gamma, a.a_lambda,
            a.b_lambda, a.a_theta, a.b_theta, a.a_psi, a.b_psi, a.tau_xi, a.tau_zeta,
        ];
        if all.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("step sizes and split parameters must be positive".into()));
        }
        if self.burn_in > 0 && self.burn_in >= self.sweeps {
            return Err(Error::Config(format!(
                "burn-in {} must be below the sweep count {}",
                self.burn_in, self.sweeps
            )));
        }
        if self.check_every == 0 {
            return Err(Error::Config("check_every must be positive".into()));
        }
        Ok(())
    }
}

/// Current point of the chain with cached likelihood, prior and emissions.
#[derive(Clone, Debug)]
pub struct ChainState<E> {
    pub params: ModelParams,
    pub loglik: f64,
    pub logprior: f64,
    emissions: E,
}

impl<E> ChainState<E> {
    pub fn log_posterior(&self) -> f64 {
        self.loglik + self.logprior
    }
}

/// A candidate state with its log acceptance ratio.
#[derive(Clone, Debug)]
pub struct Proposal<E> {
    pub state: ChainState<E>,
    pub log_accept: f64,
}

/// Probability of proposing the dimension-increasing member of a move pair.
pub fn prob_up(k: usize, k_max: usize) -> f64 {
    if k >= k_max {
        0.0
    } else if k == 1 {
        1.0
    } else {
        0.5
    }
}

/// Probability of proposing the dimension-decreasing member of a move pair.
pub fn prob_down(k: usize, k_max: usize) -> f64 {
    if k <= 1 {
        0.0
    } else if k >= k_max {
        1.0
    } else {
        0.5
    }
}

fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    if log_a.is_nan() {
        return false;
    }
    if log_a >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_a
}

/// Borrowed sampler configuration for one likelihood.
pub struct Sampler<'a, L: LikelihoodModel> {
    pub lik: &'a L,
    pub spec: &'a ModelSpec,
    pub prior: &'a PriorSpec,
    pub cfg: &'a SamplerConfig,
}

impl<'a, L: LikelihoodModel> Sampler<'a, L> {
    pub fn new(lik: &'a L, spec: &'a ModelSpec, prior: &'a PriorSpec, cfg: &'a SamplerConfig) -> Result<Self> {
        spec.validate()?;
        prior.validate()?;
        cfg.validate()?;
        Ok(Sampler { lik, spec, prior, cfg })
    }

    fn evaluate(&self, params: ModelParams) -> ChainState<L::Emissions> {
        let logprior = self.prior.log_prior(&params);
        let emissions = self.lik.emissions(&params);
        let loglik = if logprior == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.lik.log_likelihood_with(&params, &emissions)
        };
        ChainState { params, loglik, logprior, emissions }
    }

    /// Builds the starting state; it must have positive posterior density.
    pub fn init(&self, params: ModelParams) -> Result<ChainState<L::Emissions>> {
        params.validate(self.spec)?;
        if params.k() > self.prior.k_max {
            return Err(Error::invalid(format!(
                "initial k = {} exceeds k_max = {}",
                params.k(),
                self.prior.k_max
            )));
        }
        let state = self.evaluate(params);
        if !state.log_posterior().is_finite() {
            return Err(Error::invalid("initial parameters have zero posterior density"));
        }
        Ok(state)
    }

    fn step_size(&self, kind: MoveKind) -> f64 {
        let s = &self.cfg.steps;
        match kind {
            MoveKind::Initial => s.lambda,
            MoveKind::Transition => s.transition,
            MoveKind::Psi => s.psi,
            MoveKind::Zeta => s.zeta,
            MoveKind::Omega => s.omega,
            MoveKind::Xi => s.xi,
            MoveKind::Beta => s.beta,
            MoveKind::Gamma => s.gamma,
            _ => unreachable!("not an MH block"),
        }
    }

    /// One random-walk update of a single block. Returns whether it was
    /// accepted.
    pub fn mh_block<R: Rng + ?Sized>(&self, state: &mut ChainState<L::Emissions>, kind: MoveKind, rng: &mut R) -> bool {
        let tau = self.step_size(kind);
        let mut prop = state.params.clone();
        let mut log_jac = 0.0;
        let mut noise = || -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            tau * z
        };
        let mut scale = |xs: &mut [f64]| {
            for x in xs {
                let e = noise();
                *x *= e.exp();
                log_jac += e;
            }
        };
        match (kind, &mut prop.measurement) {
            (MoveKind::Initial, _) => scale(&mut prop.initial),
            (MoveKind::Transition, _) => {
                for row in &mut prop.transition {
                    scale(row);
                }
            }
            (MoveKind::Psi, Measurement::Basic { psi }) => {
                for v in psi.iter_mut().flatten().flatten() {
                    scale(v);
                }
            }
            (kind, m) => {
                let target: Vec<&mut Vec<f64>> = match (kind, m) {
                    (MoveKind::Zeta, Measurement::Cutpoint { zeta, .. }) => vec![zeta],
                    (MoveKind::Omega, Measurement::Cutpoint { omega, .. }) => vec![omega],
                    (MoveKind::Xi, Measurement::Covariate { xi, .. }) => xi.iter_mut().collect(),
                    (MoveKind::Beta, Measurement::Covariate { beta, .. }) => vec![beta],
                    (MoveKind::Gamma, Measurement::Covariate { gamma, .. }) => vec![gamma],
                    _ => unreachable!("block does not match the measurement variant"),
                };
                for v in target {
                    for x in v.iter_mut() {
                        *x += noise();
                    }
                }
            }
        }
        let logprior = self.prior.log_prior(&prop);
        if logprior == f64::NEG_INFINITY {
            return false;
        }
        let changes_emissions = !matches!(kind, MoveKind::Initial | MoveKind::Transition);
        let (loglik, emissions) = if changes_emissions {
            let e = self.lik.emissions(&prop);
            (self.lik.log_likelihood_with(&prop, &e), Some(e))
        } else {
            (self.lik.log_likelihood_with(&prop, &state.emissions), None)
        };
        let log_a = loglik - state.loglik + logprior - state.logprior + log_jac;
        if !accept(log_a, rng) {
            return false;
        }
        state.params = prop;
        state.loglik = loglik;
        state.logprior = logprior;
        if let Some(e) = emissions {
            state.emissions = e;
        }
        true
    }

    /// Runs every MH block once, recording acceptances in `outcome`.
    pub fn mh_sweep<R: Rng + ?Sized>(&self, state: &mut ChainState<L::Emissions>, rng: &mut R, outcome: &mut Vec<bool>) {
        outcome.clear();
        for kind in MoveKind::mh_blocks(self.spec) {
            let ok = self.mh_block(state, kind, rng);
            outcome.push(ok);
        }
    }

    /// Log ratio for moving from `small` (k states) to `large` (k+1 states)
    /// given the dimension-specific terms `extra`.
    fn up_ratio(&self, small: &ChainState<L::Emissions>, large: &ChainState<L::Emissions>, extra: f64) -> f64 {
        let k = small.params.k();
        let k_max = self.prior.k_max;
        let moves = prob_down(k + 1, k_max).ln() - prob_up(k, k_max).ln();
        let diff = large.log_posterior() - small.log_posterior();
        if diff.is_nan() {
            return f64::NEG_INFINITY;
        }
        diff + moves + extra
    }

    pub fn propose_split<R: Rng + ?Sized>(&self, state: &ChainState<L::Emissions>, rng: &mut R) -> Proposal<L::Emissions> {
        let k = state.params.k();
        let u0 = rng.random_range(0..k);
        let insert_at = rng.random_range(0..=k);
        let aux = draw_split_aux(self.spec, &self.cfg.split, k, rng);
        let params = split_params(self.spec, &state.params, u0, insert_at, &aux);
        let next = self.evaluate(params);
        let extra = split_log_jacobian(self.spec, &state.params, u0, &aux)
            - split_aux_log_density(self.spec, &self.cfg.split, &aux);
        let log_accept = self.up_ratio(state, &next, extra);
        Proposal { state: next, log_accept }
    }

    pub fn propose_combine<R: Rng + ?Sized>(&self, state: &ChainState<L::Emissions>, rng: &mut R) -> Proposal<L::Emissions> {
        let k1 = state.params.k();
        let keep = rng.random_range(0..k1);
        let mut remove = rng.random_range(0..k1 - 1);
        if remove >= keep {
            remove += 1;
        }
        let merged = combine_params(self.spec, &state.params, keep, remove);
        let next = self.evaluate(merged.params);
        let log_accept = if merged.aux.is_valid(self.spec) {
            let extra = split_log_jacobian(self.spec, &next.params, merged.u0, &merged.aux)
                - split_aux_log_density(self.spec, &self.cfg.split, &merged.aux);
            -self.up_ratio(&next, state, extra)
        } else {
            f64::NEG_INFINITY
        };
        Proposal { state: next, log_accept }
    }

    pub fn propose_birth<R: Rng + ?Sized>(&self, state: &ChainState<L::Emissions>, rng: &mut R) -> Proposal<L::Emissions> {
        let k = state.params.k();
        let position = rng.random_range(0..=k);
        let n = state_vector_count(self.spec);
        let block = self.prior.sample_state_block(self.spec, k + 1, position, n, rng);
        let q = self.prior.log_state_block(self.spec, k + 1, position, &block);
        let next = self.evaluate(birth_params(&state.params, position, &block));
        let log_accept = self.up_ratio(state, &next, -q);
        Proposal { state: next, log_accept }
    }

    pub fn propose_death<R: Rng + ?Sized>(&self, state: &ChainState<L::Emissions>, rng: &mut R) -> Proposal<L::Emissions> {
        let k1 = state.params.k();
        let u = rng.random_range(0..k1);
        let (params, block) = death_params(&state.params, u);
        let q = self.prior.log_state_block(self.spec, k1, u, &block);
        let next = self.evaluate(params);
        let log_accept = -self.up_ratio(&next, state, -q);
        Proposal { state: next, log_accept }
    }

    /// One dimension-changing attempt; `None` when `k_max = 1`.
    pub fn dimension_step<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState<L::Emissions>,
        rng: &mut R,
    ) -> Option<DimOutcome> {
        let k_max = self.prior.k_max;
        if k_max == 1 {
            return None;
        }
        let k = state.params.k();
        let split_family = rng.random::<f64>() < 0.5;
        let up = rng.random::<f64>() < prob_up(k, k_max);
        let kind = match (split_family, up) {
            (true, true) => MoveKind::Split,
            (true, false) => MoveKind::Combine,
            (false, true) => MoveKind::Birth,
            (false, false) => MoveKind::Death,
        };
        let proposal = match kind {
            MoveKind::Split => self.propose_split(state, rng),
            MoveKind::Combine => self.propose_combine(state, rng),
            MoveKind::Birth => self.propose_birth(state, rng),
            _ => self.propose_death(state, rng),
        };
        let accepted = accept(proposal.log_accept, rng);
        if accepted {
            *state = proposal.state;
        }
        Some(DimOutcome { kind, accepted })
    }

    fn check_cache(&self, state: &ChainState<L::Emissions>, sweep: u64) -> Result<()> {
        let ll = self.lik.log_likelihood(&state.params);
        let lp = self.prior.log_prior(&state.params);
        if (ll - state.loglik).abs() > 1e-8 || (lp - state.logprior).abs() > 1e-8 {
            return Err(Error::Numerical(format!(
                "cached values drifted at sweep {sweep}: loglik {} vs {ll}, logprior {} vs {lp}",
                state.loglik, state.logprior
            )));
        }
        Ok(())
    }

    /// Runs `cfg.sweeps` sweeps from `init`, streaming each to `sink`.
    pub fn run(&self, init: ModelParams, sink: &mut dyn TraceSink) -> Result<MoveCounts> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut state = self.init(init)?;
        let blocks = MoveKind::mh_blocks(self.spec);
        let mut counts = MoveCounts::default();
        let mut mh = Vec::with_capacity(blocks.len());
        for sweep in 1..=self.cfg.sweeps {
            self.mh_sweep(&mut state, &mut rng, &mut mh);
            for (kind, ok) in blocks.iter().zip(&mh) {
                counts.record(*kind, *ok);
            }
            let dim = self.dimension_step(&mut state, &mut rng);
            if let Some(d) = dim {
                counts.record(d.kind, d.accepted);
            }
            counts.sweeps += 1;
            if state.loglik.is_nan() || state.logprior.is_nan() {
                return Err(Error::Numerical(format!("NaN entered the chain at sweep {sweep}")));
            }
            if sweep % self.cfg.check_every == 0 {
                self.check_cache(&state, sweep)?;
            }
            sink.record(&SweepView {
                sweep,
                params: &state.params,
                loglik: state.loglik,
                logprior: state.logprior,
                mh: &mh,
                dim,
            })?;
        }
        Ok(counts)
    }
}

/// Runs one chain; see [`Sampler::run`].
pub fn run_chain<L: LikelihoodModel>(
    lik: &L,
    spec: &ModelSpec,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
    init: ModelParams,
    sink: &mut dyn TraceSink,
) -> Result<MoveCounts> {
    Sampler::new(lik, spec, prior, cfg)?.run(init, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlatLikelihood, PanelLikelihood, simulate_panel};
    use crate::trace::TraceRecord;

    fn cutpoint_start() -> (ModelSpec, ModelParams) {
        let spec = ModelSpec::cutpoint(3, 2, 3);
        let p = ModelParams {
            initial: vec![1.0, 1.0],
            transition: vec![vec![4.0, 1.0], vec![1.0, 4.0]],
            measurement: Measurement::Cutpoint { zeta: vec![-1.0, 1.0], omega: vec![0.2, -0.1] },
        };
        (spec, p)
    }

    #[test]
    fn zero_sweeps_give_an_empty_trace() {
        let (spec, p) = cutpoint_start();
        let cfg = SamplerConfig { sweeps: 0, burn_in: 0, ..SamplerConfig::default() };
        let mut out: Vec<TraceRecord> = Vec::new();
        run_chain(&FlatLikelihood, &spec, &PriorSpec::default(), &cfg, p, &mut out).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn k_max_one_never_changes_dimension() {
        let spec = ModelSpec::basic(vec![2], 2, true);
        let p = ModelParams {
            initial: vec![1.0],
            transition: vec![vec![1.0]],
            measurement: Measurement::Basic { psi: vec![vec![vec![vec![1.0], vec![2.0]]]] },
        };
        let prior = PriorSpec { k_max: 1, ..PriorSpec::default() };
        let cfg = SamplerConfig { sweeps: 300, burn_in: 0, ..SamplerConfig::default() };
        let mut out: Vec<TraceRecord> = Vec::new();
        let counts = run_chain(&FlatLikelihood, &spec, &prior, &cfg, p, &mut out).unwrap();
        assert!(out.iter().all(|r| r.k == 1 && r.dim.is_none()));
        assert_eq!(counts.get(MoveKind::Split).performed, 0);
    }

    #[test]
    fn tiny_steps_are_always_accepted() {
        let (spec, p) = cutpoint_start();
        let data = simulate_panel(&spec, &p, 40, 2).unwrap();
        let lik = PanelLikelihood::new(&spec, &data).unwrap();
        let tiny = 1e-12;
        let cfg = SamplerConfig {
            steps: StepSizes {
                lambda: tiny,
                transition: tiny,
                psi: tiny,
                zeta: tiny,
                omega: tiny,
                xi: tiny,
                beta: tiny,
                gamma: tiny,
            },
            ..SamplerConfig::default()
        };
        let prior = PriorSpec::default();
        let sampler = Sampler::new(&lik, &spec, &prior, &cfg).unwrap();
        let mut state = sampler.init(p.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = Vec::new();
        for _ in 0..20 {
            sampler.mh_sweep(&mut state, &mut rng, &mut out);
            assert!(out.iter().all(|&a| a));
        }
        let drift = state.params.flatten().iter().zip(p.flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-9);
    }

    #[test]
    fn boundary_move_probabilities() {
        assert_eq!(prob_up(1, 3), 1.0);
        assert_eq!(prob_down(1, 3), 0.0);
        assert_eq!(prob_up(3, 3), 0.0);
        assert_eq!(prob_down(3, 3), 1.0);
        assert_eq!(prob_up(2, 3), 0.5);
    }

    #[test]
    fn same_seed_same_chain() {
        let (spec, p) = cutpoint_start();
        let data = simulate_panel(&spec, &p, 30, 8).unwrap();
        let lik = PanelLikelihood::new(&spec, &data).unwrap();
        let cfg = SamplerConfig { sweeps: 200, burn_in: 0, seed: 4, ..SamplerConfig::default() };
        let run = || {
            let mut out: Vec<TraceRecord> = Vec::new();
            run_chain(&lik, &spec, &PriorSpec::default(), &cfg, p.clone(), &mut out).unwrap();
            out
        };
        assert_eq!(run(), run());
    }
}
