//! Long-format CSV panels.
//!
//! Responses: `subject,occasion,var,value` with 0-based categories.
//! Covariates: `subject,occasion,<one column per covariate>`.
//! Subjects and variables keep their order of first appearance; occasions
//! are sorted.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Covariates, PanelDataset};

const RESPONSE_HEADER: [&str; 4] = ["subject", "occasion", "var", "value"];

fn ingest_error(line: u64, message: impl Into<String>) -> Error {
    Error::Ingest { line: line as usize, message: message.into() }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input)
}

/// Order-preserving interning of labels.
#[derive(Default)]
struct Index {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Index {
    fn id(&mut self, label: &str) -> usize {
        if let Some(&i) = self.lookup.get(label) {
            return i;
        }
        self.labels.push(label.to_string());
        self.lookup.insert(label.to_string(), self.labels.len() - 1);
        self.labels.len() - 1
    }
}

/// Reads a response panel. `levels` fixes the category count of named
/// variables; others get `max + 1`.
pub fn read_responses<R: Read>(input: R, levels: &BTreeMap<String, usize>) -> Result<PanelDataset> {
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESPONSE_HEADER {
        return Err(ingest_error(1, format!("expected header {}, found {}", RESPONSE_HEADER.join(","), header.join(","))));
    }
    let (mut subjects, mut variables) = (Index::default(), Index::default());
    let mut cells: HashMap<(usize, i64, usize), (u16, u64)> = HashMap::new();
    let mut occasions = std::collections::BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != 4 {
            return Err(ingest_error(line, format!("expected 4 fields, found {}", record.len())));
        }
        let occasion: i64 = record[1]
            .parse()
            .map_err(|_| ingest_error(line, format!("occasion '{}' is not an integer", &record[1])))?;
        let value: u16 = record[3]
            .parse()
            .map_err(|_| ingest_error(line, format!("category '{}' is not a non-negative integer", &record[3])))?;
        let var = variables.id(&record[2]);
        if let Some(&l) = levels.get(&record[2]) {
            if value as usize >= l {
                return Err(ingest_error(
                    line,
                    format!("category {value} of '{}' is outside 0..{}", &record[2], l - 1),
                ));
            }
        }
        let subject = subjects.id(&record[0]);
        occasions.insert(occasion);
        if let Some((_, first)) = cells.insert((subject, occasion, var), (value, line)) {
            return Err(ingest_error(
                line,
                format!(
                    "duplicate cell (subject {}, occasion {occasion}, var {}) first given on line {first}",
                    &record[0], &record[2]
                ),
            ));
        }
    }
    if cells.is_empty() {
        return Err(ingest_error(1, "no response rows"));
    }
    let occasions: Vec<i64> = occasions.into_iter().collect();
    let (n, t, r) = (subjects.labels.len(), occasions.len(), variables.labels.len());
    let mut values = Vec::with_capacity(n * t * r);
    let mut max_cat = vec![0u16; r];
    for (i, subject) in subjects.labels.iter().enumerate() {
        for &occ in &occasions {
            for (j, var) in variables.labels.iter().enumerate() {
                let (y, _) = cells.get(&(i, occ, j)).ok_or_else(|| {
                    Error::invalid(format!("missing cell (subject {subject}, occasion {occ}, var {var})"))
                })?;
                max_cat[j] = max_cat[j].max(*y);
                values.push(*y);
            }
        }
    }
    let levels: Vec<usize> = variables
        .labels
        .iter()
        .zip(&max_cat)
        .map(|(name, &m)| levels.get(name).copied().unwrap_or(m as usize + 1))
        .collect();
    PanelDataset::with_labels(subjects.labels, occasions, variables.labels, levels, values)
}

/// Reads covariates for the subjects and occasions of `panel`, standardizing
/// the columns named in `standardize`.
pub fn read_covariates<R: Read>(input: R, panel: &PanelDataset, standardize: &[String]) -> Result<Covariates> {
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "subject" || header[1] != "occasion" {
        return Err(ingest_error(1, "expected header subject,occasion,<covariate columns>"));
    }
    let names: Vec<String> = header[2..].to_vec();
    let p = names.len();
    let subject_pos: HashMap<&str, usize> =
        panel.subjects.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let occasion_pos: HashMap<i64, usize> =
        panel.occasion_labels.iter().enumerate().map(|(t, &o)| (o, t)).collect();
    let (n, t_count) = (panel.n(), panel.occasions());
    let mut values = vec![f64::NAN; n * t_count * p];
    let mut seen: Vec<Option<u64>> = vec![None; n * t_count];
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != p + 2 {
            return Err(ingest_error(line, format!("expected {} fields, found {}", p + 2, record.len())));
        }
        let i = *subject_pos
            .get(&record[0])
            .ok_or_else(|| ingest_error(line, format!("subject '{}' has no responses", &record[0])))?;
        let occ: i64 = record[1]
            .parse()
            .map_err(|_| ingest_error(line, format!("occasion '{}' is not an integer", &record[1])))?;
        let t = *occasion_pos
            .get(&occ)
            .ok_or_else(|| ingest_error(line, format!("occasion {occ} has no responses")))?;
        if let Some(first) = seen[i * t_count + t] {
            return Err(ingest_error(
                line,
                format!("duplicate row (subject {}, occasion {occ}) first given on line {first}", &record[0]),
            ));
        }
        seen[i * t_count + t] = Some(line);
        for c in 0..p {
            let v: f64 = record[c + 2].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                ingest_error(line, format!("covariate '{}' value '{}' is not a finite number", names[c], &record[c + 2]))
            })?;
            values[(i * t_count + t) * p + c] = v;
        }
    }
    if let Some(idx) = seen.iter().position(Option::is_none) {
        return Err(Error::invalid(format!(
            "missing covariate row (subject {}, occasion {})",
            panel.subjects[idx / t_count],
            panel.occasion_labels[idx % t_count]
        )));
    }
    let mut cov = Covariates::new(names, n, t_count, values)?;
    for name in standardize {
        let c = cov
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("cannot standardize unknown covariate '{name}'")))?;
        cov.standardize(c)?;
    }
    Ok(cov)
}

/// Reads responses and, when given, covariates from files.
pub fn ingest(
    responses: &Path,
    covariates: Option<&Path>,
    levels: &BTreeMap<String, usize>,
    standardize: &[String],
) -> Result<PanelDataset> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| Error::invalid(format!("cannot open {}: {e}", p.display())))
    };
    let panel = read_responses(open(responses)?, levels)?;
    match covariates {
        Some(path) => {
            let cov = read_covariates(open(path)?, &panel, standardize)?;
            panel.with_covariates(cov)
        }
        None if !standardize.is_empty() => Err(Error::Config("standardization needs a covariate file".into())),
        None => Ok(panel),
    }
}

/// Writes responses in the long format read by [`read_responses`].
pub fn write_responses<W: Write>(out: W, data: &PanelDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESPONSE_HEADER)?;
    for (i, subject) in data.subjects.iter().enumerate() {
        for (t, occ) in data.occasion_labels.iter().enumerate() {
            for (j, var) in data.variables.iter().enumerate() {
                let occ = occ.to_string();
                let y = data.response(i, t, j).to_string();
                w.write_record([subject.as_str(), occ.as_str(), var.as_str(), y.as_str()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes covariates in the layout read by [`read_covariates`]; values use
/// the shortest decimal form that parses back to the same number.
pub fn write_covariates<W: Write>(out: W, data: &PanelDataset) -> Result<()> {
    let cov = data
        .covariates
        .as_ref()
        .ok_or_else(|| Error::invalid("dataset has no covariates"))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject".to_string(), "occasion".to_string()];
    header.extend(cov.names.iter().cloned());
    w.write_record(&header)?;
    for (i, subject) in data.subjects.iter().enumerate() {
        for (t, occ) in data.occasion_labels.iter().enumerate() {
            let mut row = vec![subject.clone(), occ.to_string()];
            row.extend(cov.row(i, t).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
