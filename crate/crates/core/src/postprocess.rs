//! Posterior summaries of a chain.
//!
//! Draws at the most visited `k` are relabeled toward the posterior mode by
//! minimizing a Euclidean distance over state permutations, then summarized
//! by ergodic means and sample HPD intervals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Measurement, MeasurementSpec, ModelParams, ModelSpec};
use crate::trace::{ChainTrace, MoveCounts, TraceRecord};

/// Largest `k` the exhaustive relabeling search accepts.
pub const MAX_RELABEL_K: usize = 8;
pub const HPD_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Canonical order imposed on the pivot before relabeling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOrdering {
    /// Increasing probability of the last category of the first response.
    #[default]
    LastCategory,
    /// Increasing support point (`zeta_u`, or `xi_1u`).
    SupportPoint,
    /// Keep the pivot's labels.
    None,
}

/// Normalized visit frequencies of `k` after `burn_in`.
pub fn posterior_of_k(records: &[TraceRecord], burn_in: u64) -> Result<BTreeMap<usize, f64>> {
    let kept: Vec<&TraceRecord> = records.iter().filter(|r| r.sweep > burn_in).collect();
    if kept.is_empty() {
        return Err(Error::invalid("no draws remain after burn-in"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &kept {
        *counts.entry(r.k).or_default() += 1;
    }
    let n = kept.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

/// Most visited `k`; ties go to the smaller `k`.
pub fn modal_k(mass: &BTreeMap<usize, f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (&k, &m) in mass {
        if m > best.1 {
            best = (k, m);
        }
    }
    best.0
}

/// Index of the draw maximizing `loglik + logprior`; the earliest wins ties.
pub fn posterior_mode(records: &[TraceRecord]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        let v = r.log_posterior();
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::invalid("no draws to take a mode from"))
}

/// Permutation-covariant features used by the relabeling distance.
struct Features {
    k: usize,
    initial: Vec<f64>,
    /// `[u * k + v]`
    transition: Vec<f64>,
    /// State vectors of the measurement features.
    measurement: Vec<Vec<f64>>,
}

impl Features {
    fn of(params: &ModelParams) -> Features {
        let k = params.k();
        let measurement = match &params.measurement {
            Measurement::Basic { psi } => {
                let mut out = Vec::new();
                for slot in psi.iter().flatten() {
                    let totals: Vec<f64> = (0..k).map(|u| slot.iter().map(|c| c[u]).sum()).collect();
                    for c in slot {
                        out.push(c.iter().zip(&totals).map(|(x, s)| x / s).collect());
                    }
                }
                out
            }
            Measurement::Cutpoint { zeta, .. } => vec![zeta.clone()],
            Measurement::Covariate { xi, .. } => xi.clone(),
        };
        Features {
            k,
            initial: params.initial_probs(),
            transition: params.transition_probs().into_iter().flatten().collect(),
            measurement,
        }
    }

    /// Cost of placing this draw's state `s` at position `i`, excluding the
    /// transition cross terms.
    fn unary(&self, pivot: &Features, i: usize, s: usize) -> f64 {
        let mut c = (self.initial[s] - pivot.initial[i]).powi(2);
        for (a, b) in self.measurement.iter().zip(&pivot.measurement) {
            c += (a[s] - b[i]).powi(2);
        }
        c
    }

    fn pair(&self, pivot: &Features, i: usize, j: usize, si: usize, sj: usize) -> f64 {
        (self.transition[si * self.k + sj] - pivot.transition[i * self.k + j]).powi(2)
    }
}

struct Search<'a> {
    draw: &'a Features,
    pivot: &'a Features,
    perm: Vec<usize>,
    used: Vec<bool>,
    best: Vec<usize>,
    best_cost: f64,
}

impl Search<'_> {
    // positions are filled in order 0..k and every term is added in a fixed
    // position order, so a candidate's cost is bitwise independent of how
    // the draw was labeled
    fn descend(&mut self, pos: usize, cost: f64) {
        let k = self.draw.k;
        if pos == k {
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best.clone_from(&self.perm);
            }
            return;
        }
        for s in 0..k {
            if self.used[s] {
                continue;
            }
            let mut c = cost + self.draw.unary(self.pivot, pos, s);
            for j in 0..pos {
                let sj = self.perm[j];
                c += self.draw.pair(self.pivot, pos, j, s, sj);
                c += self.draw.pair(self.pivot, j, pos, sj, s);
            }
            c += self.draw.pair(self.pivot, pos, pos, s, s);
            if c >= self.best_cost {
                continue;
            }
            self.used[s] = true;
            self.perm[pos] = s;
            self.descend(pos + 1, c);
            self.used[s] = false;
        }
    }
}

/// Permutation `h` (new state `u` takes old state `h[u]`) minimizing the
/// distance between `h(draw)` and `pivot`. The lexicographically first
/// minimizer is returned, so exact ties keep the identity.
pub fn best_permutation(draw: &ModelParams, pivot: &ModelParams) -> Result<Vec<usize>> {
    let k = draw.k();
    if pivot.k() != k {
        return Err(Error::invalid("relabeling needs draws with the pivot's k"));
    }
    if k > MAX_RELABEL_K {
        return Err(Error::Unsupported(format!(
            "relabeling searches all permutations and supports k <= {MAX_RELABEL_K}, got {k}"
        )));
    }
    let (fd, fp) = (Features::of(draw), Features::of(pivot));
    let mut search = Search {
        draw: &fd,
        pivot: &fp,
        perm: vec![0; k],
        used: vec![false; k],
        best: (0..k).collect(),
        best_cost: f64::INFINITY,
    };
    search.descend(0, 0.0);
    Ok(search.best)
}

/// Relabels every draw toward `pivot`.
pub fn relabel(draws: &[ModelParams], pivot: &ModelParams) -> Result<Vec<ModelParams>> {
    draws
        .iter()
        .map(|d| Ok(d.permuted(&best_permutation(d, pivot)?)))
        .collect()
}

/// Permutation sorting the states of `params` under `ordering`.
pub fn ordering_permutation(spec: &ModelSpec, params: &ModelParams, ordering: StateOrdering) -> Vec<usize> {
    let k = params.k();
    let key: Vec<f64> = match (ordering, &params.measurement) {
        (StateOrdering::None, _) => return (0..k).collect(),
        (StateOrdering::SupportPoint, Measurement::Cutpoint { zeta, .. }) => zeta.clone(),
        (StateOrdering::SupportPoint, Measurement::Covariate { xi, .. }) => xi[0].clone(),
        (_, Measurement::Basic { psi }) => {
            let slot = &psi[0][0];
            let last = slot.last().expect("at least two categories");
            (0..k).map(|u| last[u] / slot.iter().map(|c| c[u]).sum::<f64>()).collect()
        }
        (_, Measurement::Cutpoint { zeta, omega }) => zeta
            .iter()
            .map(|&z| *crate::model::cutpoint_probs(z, omega).last().unwrap())
            .collect(),
        (_, Measurement::Covariate { xi, .. }) => {
            debug_assert!(matches!(spec.measurement, MeasurementSpec::Covariate { .. }));
            xi[0].clone()
        }
    };
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
    idx
}

/// One nested HPD interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

/// Start of the shortest window of `m` consecutive values within
/// `sorted[lo..hi]`; the earliest wins ties.
fn shortest_window(sorted: &[f64], lo: usize, hi: usize, m: usize) -> usize {
    let mut best = lo;
    let mut width = f64::INFINITY;
    for i in lo..=hi - m {
        let w = sorted[i + m - 1] - sorted[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    best
}

/// Sample HPD intervals at `levels` (ascending). The widest level is the
/// unconstrained shortest window of `ceil(level * N)` sorted draws; each
/// narrower level is the shortest window inside the next wider one, so the
/// intervals nest.
pub fn hpd_intervals(draws: &[f64], levels: &[f64]) -> Result<Vec<Interval>> {
    if draws.is_empty() {
        return Err(Error::invalid("HPD intervals need at least one draw"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out = Vec::with_capacity(levels.len());
    let (mut lo, mut hi) = (0, n);
    for &level in levels.iter().rev() {
        let m = ((level * n as f64).ceil() as usize).clamp(1, hi - lo);
        let start = shortest_window(&sorted, lo, hi, m);
        out.push(Interval { level, lower: sorted[start], upper: sorted[start + m - 1] });
        (lo, hi) = (start, start + m);
    }
    out.reverse();
    Ok(out)
}

/// Posterior summary of one scalar quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// At [`HPD_LEVELS`].
    pub hpd: Vec<Interval>,
}

impl ParameterSummary {
    /// `*`, `**` or `***` when the 90%, 95% or 99% interval excludes zero.
    pub fn stars(&self) -> &'static str {
        let n = self.hpd.iter().filter(|i| i.excludes_zero()).count();
        ["", "*", "**", "***"][n]
    }
}

/// Means and HPD intervals of each column of `draws[draw][quantity]`.
pub fn ergodic_summary(names: &[String], draws: &[Vec<f64>]) -> Result<Vec<ParameterSummary>> {
    if draws.is_empty() {
        return Err(Error::invalid("ergodic summary of an empty sample"));
    }
    let n = draws.len() as f64;
    names
        .iter()
        .enumerate()
        .map(|(q, name)| {
            let col: Vec<f64> = draws.iter().map(|d| d[q]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let sd = if col.len() > 1 {
                (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(ParameterSummary { name: name.clone(), mean, sd, hpd: hpd_intervals(&col, &HPD_LEVELS)? })
        })
        .collect()
}

/// Names and values of the reported quantities at fixed `k`: normalized
/// initial, transition and conditional probabilities, support points and
/// the dimension-free parameters.
pub fn state_quantities(params: &ModelParams) -> (Vec<String>, Vec<f64>) {
    let k = params.k();
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (u, p) in params.initial_probs().into_iter().enumerate() {
        names.push(format!("pi[{}]", u + 1));
        values.push(p);
    }
    for (u, row) in params.transition_probs().into_iter().enumerate() {
        for (v, p) in row.into_iter().enumerate() {
            names.push(format!("pi[{}|{}]", v + 1, u + 1));
            values.push(p);
        }
    }
    match &params.measurement {
        Measurement::Basic { psi } => {
            let slots = psi[0].len();
            for (j, block) in psi.iter().enumerate() {
                for (t, slot) in block.iter().enumerate() {
                    for u in 0..k {
                        let total: f64 = slot.iter().map(|c| c[u]).sum();
                        for (y, c) in slot.iter().enumerate() {
                            let time = if slots == 1 { String::new() } else { format!(",t{}", t + 1) };
                            names.push(format!("phi{}[{y}|{}{time}]", j + 1, u + 1));
                            values.push(c[u] / total);
                        }
                    }
                }
            }
        }
        Measurement::Cutpoint { zeta, omega } => {
            for (u, z) in zeta.iter().enumerate() {
                names.push(format!("zeta[{}]", u + 1));
                values.push(*z);
            }
            for (y, w) in omega.iter().enumerate() {
                names.push(format!("omega[{}]", y + 1));
                values.push(*w);
            }
        }
        Measurement::Covariate { xi, beta, gamma } => {
            for (m, row) in xi.iter().enumerate() {
                for (u, x) in row.iter().enumerate() {
                    names.push(format!("xi{}[{}]", m + 1, u + 1));
                    values.push(*x);
                }
            }
            for (j, b) in beta.iter().enumerate() {
                names.push(format!("beta[{}]", j + 1));
                values.push(*b);
            }
            for (j, g) in gamma.iter().enumerate() {
                names.push(format!("gamma[{}]", j + 1));
                values.push(*g);
            }
        }
    }
    (names, values)
}

/// Names and values of parameters whose dimension does not depend on `k`.
pub fn invariant_quantities(spec: &ModelSpec, params: &ModelParams) -> (Vec<String>, Vec<f64>) {
    let labels = spec.design().map(|d| beta_labels(d, spec.occasions));
    match &params.measurement {
        Measurement::Basic { .. } => (vec![], vec![]),
        Measurement::Cutpoint { omega, .. } => (
            (1..=omega.len()).map(|y| format!("omega[{y}]")).collect(),
            omega.clone(),
        ),
        Measurement::Covariate { beta, gamma, .. } => {
            let mut names = labels.unwrap_or_default();
            names.extend((1..=gamma.len()).map(|j| format!("gamma[{j}]")));
            (names, beta.iter().chain(gamma).copied().collect())
        }
    }
}

fn beta_labels(design: &crate::model::DesignRecipe, occasions: usize) -> Vec<String> {
    let mut out = Vec::new();
    for (m, cols) in design.columns.iter().enumerate() {
        for c in cols {
            out.push(format!("beta{}[x{}]", m + 1, c + 1));
        }
        if design.occasion_dummies {
            for t in 2..=occasions {
                out.push(format!("beta{}[t{t}]", m + 1));
            }
        }
    }
    out
}

/// Cumulative occupancy fractions, one row per `stride` sweeps (and the
/// last sweep): `fractions[row][k - 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub k_max: usize,
    pub sweeps: Vec<u64>,
    pub fractions: Vec<Vec<f64>>,
}

pub fn occupancy_fractions(records: &[TraceRecord], k_max: usize, stride: usize) -> Result<Occupancy> {
    if records.is_empty() {
        return Err(Error::invalid("occupancy of an empty trace"));
    }
    let stride = stride.max(1);
    let mut counts = vec![0u64; k_max];
    let mut out = Occupancy { k_max, sweeps: Vec::new(), fractions: Vec::new() };
    for (i, r) in records.iter().enumerate() {
        counts[r.k - 1] += 1;
        let seen = i + 1;
        if seen % stride == 0 || seen == records.len() {
            out.sweeps.push(r.sweep);
            out.fractions.push(counts.iter().map(|&c| c as f64 / seen as f64).collect());
        }
    }
    Ok(out)
}

/// Everything `summarize` reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub variant: String,
    pub burn_in: u64,
    pub draws: usize,
    pub k_mass: BTreeMap<usize, f64>,
    pub k_star: usize,
    pub draws_at_k_star: usize,
    pub ordering: StateOrdering,
    pub mode_sweep: u64,
    /// Posterior mode at `k_star`, in the reported state order.
    pub mode: ModelParams,
    /// Relabeled draws at `k_star`.
    pub parameters: Vec<ParameterSummary>,
    /// Dimension-free parameters over all retained draws.
    pub all_draws: Vec<ParameterSummary>,
    pub counts: MoveCounts,
}

/// Full post-processing pipeline at the modal number of states.
pub fn summarize(trace: &ChainTrace, burn_in: u64, ordering: StateOrdering) -> Result<PosteriorSummary> {
    let k_mass = posterior_of_k(trace.after_burn_in(burn_in), burn_in)?;
    summarize_at(trace, burn_in, ordering, modal_k(&k_mass))
}

/// As [`summarize`], but the state-specific quantities are taken from the
/// retained draws with `k_star` states.
pub fn summarize_at(trace: &ChainTrace, burn_in: u64, ordering: StateOrdering, k_star: usize) -> Result<PosteriorSummary> {
    let kept = trace.after_burn_in(burn_in);
    let k_mass = posterior_of_k(kept, burn_in)?;
    if !k_mass.contains_key(&k_star) {
        return Err(Error::invalid(format!("no retained draws with k = {k_star}")));
    }
    let at_k: Vec<&TraceRecord> = kept.iter().filter(|r| r.k == k_star).collect();
    let owned: Vec<TraceRecord> = at_k.iter().map(|r| (*r).clone()).collect();
    let mode_idx = posterior_mode(&owned)?;
    let raw_mode = owned[mode_idx].params(&trace.spec)?;
    let pivot = raw_mode.permuted(&ordering_permutation(&trace.spec, &raw_mode, ordering));

    let mut names = Vec::new();
    let mut rows = Vec::with_capacity(owned.len());
    for r in &owned {
        let p = r.params(&trace.spec)?;
        let aligned = p.permuted(&best_permutation(&p, &pivot)?);
        let (n, v) = state_quantities(&aligned);
        names = n;
        rows.push(v);
    }
    let parameters = ergodic_summary(&names, &rows)?;

    let mut inv_names = Vec::new();
    let mut inv_rows = Vec::with_capacity(kept.len());
    for r in kept {
        let (n, v) = invariant_quantities(&trace.spec, &r.params(&trace.spec)?);
        inv_names = n;
        inv_rows.push(v);
    }
    let all_draws = if inv_names.is_empty() { Vec::new() } else { ergodic_summary(&inv_names, &inv_rows)? };

    Ok(PosteriorSummary {
        variant: trace.spec.variant_name().to_string(),
        burn_in,
        draws: kept.len(),
        k_mass,
        k_star,
        draws_at_k_star: owned.len(),
        ordering,
        mode_sweep: owned[mode_idx].sweep,
        mode: pivot,
        parameters,
        all_draws,
        counts: trace.counts.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(sweep: u64, k: usize, post: f64) -> TraceRecord {
        TraceRecord { sweep, k, loglik: post, logprior: 0.0, mh: vec![], dim: None, theta: vec![] }
    }

    #[test]
    fn k_mass_counts_visits() {
        let recs: Vec<_> = [3, 3, 4, 3].iter().enumerate().map(|(i, &k)| rec(i as u64 + 1, k, 0.0)).collect();
        let mass = posterior_of_k(&recs, 0).unwrap();
        assert_eq!(mass[&3], 0.75);
        assert_eq!(mass[&4], 0.25);
        assert_eq!(modal_k(&mass), 3);
        assert!(posterior_of_k(&recs, 4).is_err());
    }

    #[test]
    fn mode_tie_goes_to_earliest() {
        let recs = vec![rec(1, 2, -5.0), rec(2, 2, -3.0), rec(3, 2, -3.0)];
        assert_eq!(posterior_mode(&recs).unwrap(), 1);
        assert_eq!(posterior_mode(&recs[..1]).unwrap(), 0);
    }

    #[test]
    fn hpd_of_one_to_ten() {
        let draws: Vec<f64> = (1..=10).map(f64::from).collect();
        let iv = hpd_intervals(&draws, &[0.9]).unwrap();
        assert_eq!(iv[0].upper - iv[0].lower, 8.0);
        assert_eq!(iv[0].lower, 1.0);
    }

    #[test]
    fn constant_draws_have_degenerate_intervals() {
        let s = ergodic_summary(&["c".into()], &vec![vec![2.5]; 50]).unwrap();
        assert_eq!(s[0].mean, 2.5);
        assert!(s[0].hpd.iter().all(|i| i.lower == 2.5 && i.upper == 2.5));
        assert_eq!(s[0].stars(), "***");
    }

    #[test]
    fn occupancy_alternating() {
        let recs: Vec<_> = (0..100).map(|i| rec(i + 1, 3 + (i % 2) as usize, 0.0)).collect();
        let occ = occupancy_fractions(&recs, 5, 1).unwrap();
        let last = occ.fractions.last().unwrap();
        assert_eq!((last[2], last[3]), (0.5, 0.5));
        for row in &occ.fractions {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn large_k_is_refused() {
        let spec = ModelSpec::cutpoint(2, 1, 1);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let p = crate::priors::PriorSpec { k_max: 9, ..Default::default() }.sample(&spec, 9, &mut rng);
        assert!(matches!(best_permutation(&p, &p), Err(Error::Unsupported(_))));
    }
}
