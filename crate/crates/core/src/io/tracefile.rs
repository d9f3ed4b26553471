//! Line-delimited trace files.
//!
//! ```text
//! #lmrj-trace 1
//! #spec {"measurement":...}
//! #k_max 10
//! #columns sweep  k  loglik  logprior  mh  dim  theta
//! 1  3  -812.5  -20.1  101  split+  0.41,0.22,...
//! ...
//! #counts {"sweeps":...}
//! #sha256 <hex digest of every preceding byte>
//! ```
//!
//! Columns are tab separated. `mh` has one 0/1 digit per MH block, `dim` is
//! the move code followed by `+` (accepted) or `-`, or `.` when no move was
//! attempted. Numbers use the shortest form that parses back exactly, so
//! equal runs give byte-identical files.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::trace::{ChainTrace, DimOutcome, MoveCounts, MoveKind, SweepView, TraceRecord, TraceSink};

const MAGIC: &str = "#lmrj-trace 1";
const COLUMNS: &str = "#columns\tsweep\tk\tloglik\tlogprior\tmh\tdim\ttheta";

/// Streams sweeps to `W` while hashing everything written.
pub struct TraceWriter<W: Write> {
    out: W,
    hasher: Sha256,
    line: String,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, spec: &ModelSpec, k_max: usize) -> Result<Self> {
        let mut w = TraceWriter { out, hasher: Sha256::new(), line: String::new() };
        w.emit(MAGIC)?;
        let spec_line = format!("#spec {}", serde_json::to_string(spec)?);
        w.emit(&spec_line)?;
        w.emit(&format!("#k_max {k_max}"))?;
        w.emit(COLUMNS)?;
        Ok(w)
    }

    fn emit(&mut self, line: &str) -> Result<()> {
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    /// Writes the move counters and the checksum trailer.
    pub fn finish(mut self, counts: &MoveCounts) -> Result<W> {
        let counts_line = format!("#counts {}", serde_json::to_string(counts)?);
        self.emit(&counts_line)?;
        let digest = hex::encode(self.hasher.finalize_reset());
        writeln!(self.out, "#sha256 {digest}")?;
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for TraceWriter<W> {
    fn record(&mut self, s: &SweepView<'_>) -> Result<()> {
        use std::fmt::Write as _;
        let mut line = std::mem::take(&mut self.line);
        line.clear();
        let _ = write!(line, "{}\t{}\t{}\t{}\t", s.sweep, s.params.k(), s.loglik, s.logprior);
        line.extend(s.mh.iter().map(|&a| if a { '1' } else { '0' }));
        line.push('\t');
        match s.dim {
            Some(d) => {
                line.push_str(d.kind.code());
                line.push(if d.accepted { '+' } else { '-' });
            }
            None => line.push('.'),
        }
        line.push('\t');
        for (i, x) in s.params.flatten().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(line, "{x}");
        }
        let result = self.emit(&line);
        self.line = line;
        result
    }
}

/// Passes every `every`-th sweep to `inner`.
pub struct Thinned<'a> {
    pub inner: &'a mut dyn TraceSink,
    pub every: u64,
}

impl TraceSink for Thinned<'_> {
    fn record(&mut self, sweep: &SweepView<'_>) -> Result<()> {
        if sweep.sweep.is_multiple_of(self.every.max(1)) {
            self.inner.record(sweep)
        } else {
            Ok(())
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Trace(format!("line {line}: {msg}"))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| bad(line, format!("'{s}' is not a number")))
}

fn parse_record(text: &str, line: usize) -> Result<TraceRecord> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != 7 {
        return Err(bad(line, format!("expected 7 columns, found {}", fields.len())));
    }
    let sweep = fields[0].parse().map_err(|_| bad(line, "bad sweep index"))?;
    let k = fields[1].parse().map_err(|_| bad(line, "bad state count"))?;
    let mh = fields[4]
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(bad(line, "bad MH outcome")),
        })
        .collect::<Result<Vec<bool>>>()?;
    let dim = match fields[5] {
        "." => None,
        d => {
            let (code, flag) = d.split_at(d.len().saturating_sub(1));
            let kind = MoveKind::from_code(code).ok_or_else(|| bad(line, format!("unknown move '{code}'")))?;
            let accepted = match flag {
                "+" => true,
                "-" => false,
                _ => return Err(bad(line, "bad move outcome")),
            };
            Some(DimOutcome { kind, accepted })
        }
    };
    let theta = fields[6].split(',').map(|x| parse_f64(x, line)).collect::<Result<Vec<f64>>>()?;
    Ok(TraceRecord {
        sweep,
        k,
        loglik: parse_f64(fields[2], line)?,
        logprior: parse_f64(fields[3], line)?,
        mh,
        dim,
        theta,
    })
}

/// Parses and verifies a complete trace.
pub fn parse_trace(bytes: &[u8]) -> Result<ChainTrace> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Trace("not UTF-8".into()))?;
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| Error::Trace("truncated: no checksum trailer".into()))?;
    let trailer = text[body_end..].trim_end();
    let digest = trailer
        .strip_prefix("#sha256 ")
        .ok_or_else(|| Error::Trace("truncated: no checksum trailer".into()))?;
    let actual = hex::encode(Sha256::digest(&bytes[..body_end]));
    if digest != actual {
        return Err(Error::Trace("checksum mismatch: file is truncated or altered".into()));
    }

    let mut lines = text[..body_end].lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut header = |prefix: &str| -> Result<String> {
        match lines.next() {
            Some((_, l)) if l.starts_with(prefix) => Ok(l[prefix.len()..].to_string()),
            Some((n, _)) => Err(bad(n, format!("expected '{prefix}'"))),
            None => Err(Error::Trace("missing header".into())),
        }
    };
    header(MAGIC)?;
    let spec: ModelSpec = serde_json::from_str(&header("#spec ")?)?;
    let k_max = header("#k_max ")?.parse().map_err(|_| bad(3, "bad k_max"))?;
    header(COLUMNS)?;
    let mut records = Vec::new();
    let mut counts = None;
    for (n, l) in lines {
        if let Some(json) = l.strip_prefix("#counts ") {
            counts = Some(serde_json::from_str::<MoveCounts>(json)?);
        } else if counts.is_some() {
            return Err(bad(n, "records after the counts line"));
        } else {
            records.push(parse_record(l, n)?);
        }
    }
    let counts = counts.ok_or_else(|| Error::Trace("missing counts line".into()))?;
    ChainTrace::new(spec, k_max, records, counts)
}

pub fn read_trace(path: &Path) -> Result<ChainTrace> {
    let bytes = std::fs::read(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_trace(&bytes).map_err(|e| match e {
        Error::Trace(m) => Error::Trace(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes an in-memory chain in the trace format.
pub fn write_trace<W: Write>(out: W, trace: &ChainTrace) -> Result<W> {
    let mut w = TraceWriter::new(out, &trace.spec, trace.k_max)?;
    for r in &trace.records {
        let params = r.params(&trace.spec)?;
        w.record(&SweepView {
            sweep: r.sweep,
            params: &params,
            loglik: r.loglik,
            logprior: r.logprior,
            mh: &r.mh,
            dim: r.dim,
        })?;
    }
    w.finish(&trace.counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_panel, PanelLikelihood};
    use crate::priors::PriorSpec;
    use crate::sampler::{frequency_start, run_chain, SamplerConfig};

    fn small_run() -> (Vec<u8>, ChainTrace) {
        let spec = ModelSpec::cutpoint(3, 1, 3);
        let truth = PriorSpec::default().sample(&spec, 2, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1));
        let data = simulate_panel(&spec, &truth, 8, 2).unwrap();
        let lik = PanelLikelihood::new(&spec, &data).unwrap();
        let prior = PriorSpec { k_max: 4, ..PriorSpec::default() };
        let cfg = SamplerConfig { sweeps: 200, burn_in: 0, seed: 3, ..SamplerConfig::default() };
        let mut w = TraceWriter::new(Vec::new(), &spec, 4).unwrap();
        let mut mem: Vec<TraceRecord> = Vec::new();
        let init = frequency_start(&spec, &data).unwrap();
        let counts = run_chain(&lik, &spec, &prior, &cfg, init.clone(), &mut w).unwrap();
        run_chain(&lik, &spec, &prior, &cfg, init, &mut mem).unwrap();
        let bytes = w.finish(&counts).unwrap();
        (bytes, ChainTrace::new(spec, 4, mem, counts).unwrap())
    }

    #[test]
    fn written_trace_parses_back_exactly() {
        let (bytes, mem) = small_run();
        let parsed = parse_trace(&bytes).unwrap();
        assert_eq!(parsed, mem);
        assert_eq!(write_trace(Vec::new(), &parsed).unwrap(), bytes);
    }

    #[test]
    fn truncation_is_detected() {
        let (bytes, _) = small_run();
        let cut = &bytes[..bytes.len() / 2];
        let err = parse_trace(cut).unwrap_err();
        assert!(err.to_string().contains("truncated") || err.to_string().contains("checksum"), "{err}");
        let without_trailer = &bytes[..bytes.len() - 72];
        assert!(parse_trace(without_trailer).is_err());
    }

    #[test]
    fn altered_record_fails_the_checksum() {
        let (mut bytes, _) = small_run();
        let pos = bytes.iter().position(|&b| b == b'\t').unwrap() + 1;
        bytes[pos] = if bytes[pos] == b'1' { b'2' } else { b'1' };
        assert!(parse_trace(&bytes).unwrap_err().to_string().contains("checksum"));
    }

    #[test]
    fn thinning_keeps_multiples() {
        let mut mem: Vec<TraceRecord> = Vec::new();
        let spec = ModelSpec::basic(vec![2], 1, true);
        let params = PriorSpec::default().sample(&spec, 1, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
        let mut thin = Thinned { inner: &mut mem, every: 3 };
        for sweep in 1..=10 {
            let view = SweepView { sweep, params: &params, loglik: 0.0, logprior: 0.0, mh: &[], dim: None };
            thin.record(&view).unwrap();
        }
        assert_eq!(mem.iter().map(|r| r.sweep).collect::<Vec<_>>(), vec![3, 6, 9]);
    }
}
