use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-subject, per-occasion covariate values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub names: Vec<String>,
    /// Columns rescaled to mean 0 and variance 1 at ingestion.
    pub standardized: Vec<bool>,
    n: usize,
    occasions: usize,
    /// `[subject][occasion][column]`
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(names: Vec<String>, n: usize, occasions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * occasions * names.len() {
            return Err(Error::invalid(format!(
                "covariate tensor has {} values, expected {n} x {occasions} x {}",
                values.len(),
                names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariate values must be finite"));
        }
        Ok(Covariates {
            standardized: vec![false; names.len()],
            names,
            n,
            occasions,
            values,
        })
    }

    pub fn columns(&self) -> usize {
        self.names.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    pub fn row(&self, subject: usize, occasion: usize) -> &[f64] {
        let p = self.columns();
        let start = (subject * self.occasions + occasion) * p;
        &self.values[start..start + p]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(c).step_by(self.columns()).copied()
    }

    /// Rescales column `c` to sample mean 0 and sample variance 1 over all
    /// subject-occasions. Constant columns are rejected.
    pub fn standardize(&mut self, c: usize) -> Result<()> {
        let p = self.columns();
        let count = (self.n * self.occasions) as f64;
        if count < 2.0 {
            return Err(Error::invalid("standardization needs at least two observations"));
        }
        let mean = self.column(c).sum::<f64>() / count;
        let var = self.column(c).map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
        if var <= 0.0 {
            return Err(Error::invalid(format!(
                "cannot standardize constant covariate '{}'",
                self.names[c]
            )));
        }
        let sd = var.sqrt();
        for v in self.values.iter_mut().skip(c).step_by(p) {
            *v = (*v - mean) / sd;
        }
        self.standardized[c] = true;
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Balanced categorical panel: `n` subjects by `T` occasions by `r` responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub subjects: Vec<String>,
    pub occasion_labels: Vec<i64>,
    pub variables: Vec<String>,
    /// Category count `l_j` of each response; categories are `0..l_j`.
    pub levels: Vec<usize>,
    /// `[subject][occasion][variable]`
    responses: Vec<u16>,
    pub covariates: Option<Covariates>,
}

impl PanelDataset {
    /// Builds a dataset with default labels (`1..=n`, `1..=T`, `y1..yr`).
    pub fn new(levels: Vec<usize>, n: usize, occasions: usize, responses: Vec<u16>) -> Result<Self> {
        Self::with_labels(
            (1..=n).map(|i| i.to_string()).collect(),
            (1..=occasions as i64).collect(),
            (1..=levels.len()).map(|j| format!("y{j}")).collect(),
            levels,
            responses,
        )
    }

    pub fn with_labels(
        subjects: Vec<String>,
        occasion_labels: Vec<i64>,
        variables: Vec<String>,
        levels: Vec<usize>,
        responses: Vec<u16>,
    ) -> Result<Self> {
        let (n, t, r) = (subjects.len(), occasion_labels.len(), variables.len());
        if levels.len() != r {
            return Err(Error::invalid("one category count is needed per response variable"));
        }
        if n == 0 || t == 0 || r == 0 {
            return Err(Error::invalid("dataset needs subjects, occasions and variables"));
        }
        if responses.len() != n * t * r {
            return Err(Error::invalid(format!(
                "response tensor has {} values, expected {n} x {t} x {r}",
                responses.len()
            )));
        }
        for (idx, &y) in responses.iter().enumerate() {
            let j = idx % r;
            if y as usize >= levels[j] {
                let (i, tt) = (idx / (t * r), (idx / r) % t);
                return Err(Error::invalid(format!(
                    "response {y} of subject {} at occasion {} for '{}' exceeds {} categories",
                    subjects[i], occasion_labels[tt], variables[j], levels[j]
                )));
            }
        }
        Ok(PanelDataset {
            subjects,
            occasion_labels,
            variables,
            levels,
            responses,
            covariates: None,
        })
    }

    pub fn with_covariates(mut self, covariates: Covariates) -> Result<Self> {
        if covariates.n() != self.n() || covariates.occasions() != self.occasions() {
            return Err(Error::invalid("covariates must cover every subject and occasion"));
        }
        self.covariates = Some(covariates);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn occasions(&self) -> usize {
        self.occasion_labels.len()
    }

    pub fn variables(&self) -> usize {
        self.variables.len()
    }

    pub fn response(&self, subject: usize, occasion: usize, variable: usize) -> u16 {
        self.responses[(subject * self.occasions() + occasion) * self.variables() + variable]
    }

    /// All responses of one subject, `[occasion][variable]`.
    pub fn subject_responses(&self, subject: usize) -> &[u16] {
        let w = self.occasions() * self.variables();
        &self.responses[subject * w..(subject + 1) * w]
    }

    pub fn responses(&self) -> &[u16] {
        &self.responses
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_category() {
        let err = PanelDataset::new(vec![2], 1, 2, vec![0, 2]).unwrap_err();
        assert!(err.to_string().contains("exceeds 2 categories"));
    }

    #[test]
    fn standardized_column_has_unit_moments() {
        let values: Vec<f64> = (0..12).map(|i| (i * i) as f64 * 0.37 + 2.0).collect();
        let mut cov = Covariates::new(vec!["a".into(), "b".into()], 3, 2, values).unwrap();
        cov.standardize(1).unwrap();
        let col: Vec<f64> = cov.column(1).collect();
        let mean = col.iter().sum::<f64>() / 6.0;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert!(!cov.standardized[0] && cov.standardized[1]);
    }

    #[test]
    fn constant_column_cannot_be_standardized() {
        let mut cov = Covariates::new(vec!["a".into()], 2, 2, vec![1.0; 4]).unwrap();
        assert!(cov.standardize(0).is_err());
    }
}
