//! Human-readable summary tables and plot-ready CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::postprocess::{Occupancy, ParameterSummary, PosteriorSummary};
use crate::trace::{ChainTrace, MoveCounts, MoveKind};

/// `1234567` as `1,234,567`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&width).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(header);
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule);
    for r in rows {
        line(r);
    }
    out
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Acceptance table: one "MH with fixed k" row carrying the sweep count,
/// the MH blocks indented below it with their acceptances, then the four
/// dimension-changing moves. MH blocks that never ran are left out.
pub fn acceptance_table(counts: &MoveCounts) -> String {
    let mut rows = vec![vec!["MH with fixed k".to_string(), thousands(counts.sweeps), String::new(), String::new()]];
    for &m in MoveKind::ALL.iter() {
        let c = counts.get(m);
        if m.is_mh() && c.performed == 0 {
            continue;
        }
        let rate = format!("{:.2}", 100.0 * c.rate());
        rows.push(if m.is_mh() {
            vec![format!("  {}", m.label()), String::new(), thousands(c.accepted), rate]
        } else {
            vec![m.label().to_string(), thousands(c.performed), thousands(c.accepted), rate]
        });
    }
    table(&strings(&["", "Performed", "Accepted", "% Accepted"]), &rows)
}

pub fn k_table(mass: &BTreeMap<usize, f64>) -> String {
    let header: Vec<String> = std::iter::once("k".to_string()).chain(mass.keys().map(|k| k.to_string())).collect();
    let row: Vec<String> =
        std::iter::once("p(k|y)".to_string()).chain(mass.values().map(|p| format!("{p:.3}"))).collect();
    table(&header, &[row])
}

fn lookup(params: &[ParameterSummary]) -> BTreeMap<&str, &ParameterSummary> {
    params.iter().map(|p| (p.name.as_str(), p)).collect()
}

/// Initial probabilities and the transition matrix (rows are the state at
/// the previous occasion).
pub fn latent_tables(summary: &PosteriorSummary) -> String {
    let by_name = lookup(&summary.parameters);
    let k = summary.k_star;
    let mean = |name: String| by_name.get(name.as_str()).map_or("-".to_string(), |p| format!("{:.3}", p.mean));
    let states: Vec<String> = (1..=k).map(|u| format!("u={u}")).collect();

    let header: Vec<String> = std::iter::once(String::new()).chain(states.iter().cloned()).collect();
    let initial = vec![std::iter::once("pi_u".to_string()).chain((1..=k).map(|u| mean(format!("pi[{u}]")))).collect()];
    let mut out = table(&header, &initial);
    out.push('\n');

    let header: Vec<String> = std::iter::once("u \\ v".to_string()).chain((1..=k).map(|v| format!("v={v}"))).collect();
    let rows: Vec<Vec<String>> = (1..=k)
        .map(|u| {
            std::iter::once(format!("u={u}")).chain((1..=k).map(|v| mean(format!("pi[{v}|{u}]")))).collect()
        })
        .collect();
    out.push_str(&table(&header, &rows));
    out
}

/// Mean, standard deviation and HPD intervals, with the zero-exclusion
/// stars when `stars` is set.
pub fn estimate_table(params: &[ParameterSummary], stars: bool) -> String {
    let mut header = strings(&["Parameter", "Mean", "SD"]);
    if let Some(p) = params.first() {
        header.extend(p.hpd.iter().map(|i| format!("{:.0}% HPD", 100.0 * i.level)));
    }
    if stars {
        header.push(String::new());
    }
    let rows: Vec<Vec<String>> = params
        .iter()
        .map(|p| {
            let mut r = vec![p.name.clone(), format!("{:.3}", p.mean), format!("{:.3}", p.sd)];
            r.extend(p.hpd.iter().map(|i| format!("({:.3}, {:.3})", i.lower, i.upper)));
            if stars {
                r.push(p.stars().to_string());
            }
            r
        })
        .collect();
    table(&header, &rows)
}

/// The full text report.
pub fn render_summary(summary: &PosteriorSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Model: {}", summary.variant);
    let _ = writeln!(
        out,
        "Sweeps: {} ({} retained after burn-in {})",
        thousands(summary.counts.sweeps),
        thousands(summary.draws as u64),
        thousands(summary.burn_in)
    );
    let _ = writeln!(
        out,
        "Selected k = {} ({} draws); posterior mode at pooled draw {}\n",
        summary.k_star,
        thousands(summary.draws_at_k_star as u64),
        summary.mode_sweep
    );
    out.push_str("Acceptance rates\n\n");
    out.push_str(&acceptance_table(&summary.counts));
    out.push_str("\nPosterior distribution of the number of states\n\n");
    out.push_str(&k_table(&summary.k_mass));
    out.push_str("\nInitial and transition probabilities\n\n");
    out.push_str(&latent_tables(summary));
    let measurement: Vec<ParameterSummary> =
        summary.parameters.iter().filter(|p| !p.name.starts_with("pi[")).cloned().collect();
    out.push_str(&format!("\nMeasurement parameters at k = {}\n\n", summary.k_star));
    let unconstrained = summary.variant != "basic";
    out.push_str(&estimate_table(&measurement, unconstrained));
    if !summary.all_draws.is_empty() {
        out.push_str("\nDimension-free parameters over all retained draws\n\n");
        out.push_str(&estimate_table(&summary.all_draws, true));
    }
    if unconstrained {
        out.push_str("\n* 90%, ** 95%, *** 99% HPD interval excludes zero\n");
    }
    out
}

/// Replaces `x{c}` column labels in covariate-effect names by the covariate
/// names (`beta1[x2]` becomes `beta1[income]`).
pub fn name_covariates(summary: &mut PosteriorSummary, names: &[String]) {
    let rename = |p: &mut ParameterSummary| {
        if let (Some(open), true) = (p.name.find("[x"), p.name.ends_with(']')) {
            if let Ok(c) = p.name[open + 2..p.name.len() - 1].parse::<usize>() {
                if let Some(n) = names.get(c.wrapping_sub(1)) {
                    p.name = format!("{}[{n}]", &p.name[..open]);
                }
            }
        }
    };
    summary.all_draws.iter_mut().for_each(rename);
}

/// One row per chain and recorded sweep: `chain,sweep,k1,...,k_max`; each
/// row sums to 1.
pub fn write_occupancy<W: Write>(out: W, chains: &[Occupancy]) -> Result<()> {
    let k_max = chains.iter().map(|o| o.k_max).max().ok_or_else(|| Error::invalid("no chains"))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain".to_string(), "sweep".to_string()];
    header.extend((1..=k_max).map(|k| format!("k{k}")));
    w.write_record(&header)?;
    for (c, occ) in chains.iter().enumerate() {
        for (sweep, row) in occ.sweeps.iter().zip(&occ.fractions) {
            let mut rec = vec![(c + 1).to_string(), sweep.to_string()];
            rec.extend((0..k_max).map(|k| row.get(k).copied().unwrap_or(0.0).to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Concatenates the post-burn-in parts of several chains of the same model
/// into one trace, renumbering sweeps consecutively.
pub fn pool_chains(traces: &[ChainTrace], burn_in: u64) -> Result<ChainTrace> {
    let first = traces.first().ok_or_else(|| Error::invalid("no traces to pool"))?;
    let mut records = Vec::new();
    let mut counts = MoveCounts::default();
    let mut offset = 0;
    for t in traces {
        if t.spec != first.spec || t.k_max != first.k_max {
            return Err(Error::invalid(format!(
                "traces of different models cannot be pooled ({} with k_max {} and {} with k_max {})",
                first.spec.variant_name(),
                first.k_max,
                t.spec.variant_name(),
                t.k_max
            )));
        }
        let kept = t.after_burn_in(burn_in);
        if kept.is_empty() {
            return Err(Error::invalid(format!("a chain has no sweeps after burn-in {burn_in}")));
        }
        for r in kept {
            let mut r = r.clone();
            r.sweep = offset + r.sweep - burn_in;
            records.push(r);
        }
        offset = records.last().map_or(offset, |r| r.sweep);
        counts.merge(&t.counts);
    }
    ChainTrace::new(first.spec.clone(), first.k_max, records, counts)
}
