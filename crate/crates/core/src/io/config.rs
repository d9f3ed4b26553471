//! TOML run configuration.
//!
//! ```toml
//! [data]
//! responses = "responses.csv"
//! covariates = "covariates.csv"      # covariate model only
//! standardize = ["age", "income"]
//! levels = { y1 = 3 }                # optional; otherwise max + 1
//!
//! [model]
//! variant = "covariate"              # basic | cutpoint | covariate
//! columns = [["age", "income"], ["age"]]
//! occasion_dummies = true
//!
//! [prior]
//! k_max = 6
//!
//! [sampler]
//! sweeps = 100000
//! burn_in = 20000
//! seed = 7
//!
//! [run]
//! chains = 2
//! ordering = "support_point"
//!
//! [[grid]]
//! name = "flat"
//! prior = { delta_uv = "flat" }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DesignRecipe, ModelSpec, PanelDataset};
use crate::postprocess::StateOrdering;
use crate::priors::PriorSpec;
use crate::sampler::SamplerConfig;

use super::data::ingest;

/// Environment variable holding the default output root.
pub const OUTPUT_ROOT_ENV: &str = "LMRJ_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "lmrj-output";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Basic,
    Cutpoint,
    Covariate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub responses: PathBuf,
    #[serde(default)]
    pub covariates: Option<PathBuf>,
    #[serde(default)]
    pub standardize: Vec<String>,
    #[serde(default)]
    pub levels: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    /// Basic model only.
    #[serde(default = "yes")]
    pub homogeneous: bool,
    /// Covariate names entering each response's marginal logit.
    #[serde(default)]
    pub columns: Vec<Vec<String>>,
    #[serde(default = "yes")]
    pub occasion_dummies: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub output: Option<PathBuf>,
    pub chains: usize,
    /// One per chain; when empty, chain `c` uses `sampler.seed + c`.
    pub seeds: Vec<u64>,
    pub ordering: StateOrdering,
    /// Sweeps per occupancy row; 0 picks about 1000 rows.
    pub occupancy_stride: usize,
    /// Keep every `thin`-th sweep in the trace files.
    pub thin: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            output: None,
            chains: 1,
            seeds: Vec::new(),
            ordering: StateOrdering::default(),
            occupancy_stride: 0,
            thin: 1,
        }
    }
}

/// A named prior overlay; its keys replace those of the base `[prior]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub name: String,
    #[serde(default)]
    pub prior: toml::Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub grid: Vec<GridEntry>,
}

impl RunConfig {
    /// Parses `text`, resolving relative paths against `base`, and validates.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.responses);
        if let Some(p) = cfg.data.covariates.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.run.output.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let exists = |p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("data file {} does not exist", p.display())))
            }
        };
        exists(&self.data.responses)?;
        if let Some(p) = &self.data.covariates {
            exists(p)?;
        }
        match self.model.variant {
            Variant::Covariate => {
                if self.data.covariates.is_none() {
                    return Err(Error::Config("the covariate model needs data.covariates".into()));
                }
                if self.model.columns.len() != 2 {
                    return Err(Error::Config(
                        "the covariate model needs model.columns with one list per response".into(),
                    ));
                }
            }
            _ if !self.model.columns.is_empty() => {
                return Err(Error::Config("model.columns applies to the covariate model only".into()));
            }
            _ => {}
        }
        self.prior.validate()?;
        self.sampler.validate()?;
        let run = &self.run;
        if run.chains == 0 {
            return Err(Error::Config("run.chains must be at least 1".into()));
        }
        if !run.seeds.is_empty() && run.seeds.len() != run.chains {
            return Err(Error::Config(format!(
                "run.seeds has {} entries for {} chains",
                run.seeds.len(),
                run.chains
            )));
        }
        if run.thin == 0 {
            return Err(Error::Config("run.thin must be at least 1".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for g in &self.grid {
            let safe = !g.name.is_empty()
                && g.name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !safe {
                return Err(Error::Config(format!(
                    "grid name '{}' must be non-empty and use letters, digits, '-', '_' or '.'",
                    g.name
                )));
            }
            if !names.insert(&g.name) {
                return Err(Error::Config(format!("grid name '{}' is repeated", g.name)));
            }
        }
        self.priors()?;
        Ok(())
    }

    /// Chain seeds in chain order.
    pub fn seeds(&self) -> Vec<u64> {
        if self.run.seeds.is_empty() {
            (0..self.run.chains as u64).map(|c| self.sampler.seed.wrapping_add(c)).collect()
        } else {
            self.run.seeds.clone()
        }
    }

    /// Named priors to fit: the grid overlays, or the base prior alone as
    /// `"main"`.
    pub fn priors(&self) -> Result<Vec<(String, PriorSpec)>> {
        if self.grid.is_empty() {
            return Ok(vec![("main".to_string(), self.prior.clone())]);
        }
        let base = toml::Table::try_from(&self.prior).map_err(|e| Error::Config(e.to_string()))?;
        self.grid
            .iter()
            .map(|g| {
                let mut merged = base.clone();
                merged.extend(g.prior.clone());
                let prior: PriorSpec = merged
                    .try_into()
                    .map_err(|e| Error::Config(format!("grid '{}': {e}", g.name)))?;
                prior.validate()?;
                Ok((g.name.clone(), prior))
            })
            .collect()
    }

    pub fn load_data(&self) -> Result<PanelDataset> {
        ingest(
            &self.data.responses,
            self.data.covariates.as_deref(),
            &self.data.levels,
            &self.data.standardize,
        )
    }

    /// Model structure for `data`.
    pub fn model_spec(&self, data: &PanelDataset) -> Result<ModelSpec> {
        let spec = match self.model.variant {
            Variant::Basic => ModelSpec::basic(data.levels.clone(), data.occasions(), self.model.homogeneous),
            Variant::Cutpoint => {
                let l = data.levels[0];
                if data.levels.iter().any(|&x| x != l) {
                    return Err(Error::Config(
                        "the cutpoint model needs the same number of categories for every response".into(),
                    ));
                }
                ModelSpec::cutpoint(l, data.variables(), data.occasions())
            }
            Variant::Covariate => {
                let cov = data
                    .covariates
                    .as_ref()
                    .ok_or_else(|| Error::Config("the covariate model needs covariates".into()))?;
                let columns = self
                    .model
                    .columns
                    .iter()
                    .map(|names| {
                        names
                            .iter()
                            .map(|n| {
                                cov.index_of(n)
                                    .ok_or_else(|| Error::Config(format!("unknown covariate '{n}' in model.columns")))
                            })
                            .collect::<Result<Vec<usize>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                ModelSpec::covariate(
                    data.occasions(),
                    DesignRecipe { columns, occasion_dummies: self.model.occasion_dummies },
                )
            }
        };
        spec.validate()?;
        if spec.levels != data.levels {
            return Err(Error::Config(format!(
                "data has category counts {:?}, the {} model needs {:?}",
                data.levels,
                spec.variant_name(),
                spec.levels
            )));
        }
        Ok(spec)
    }

    /// Output directory: `cli` if given, then `run.output`, then
    /// `$LMRJ_OUTPUT_ROOT/<config stem>`, then `lmrj-output/<config stem>`.
    pub fn output_dir(&self, cli: Option<&Path>, config_path: &Path) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = &self.run.output {
            return p.clone();
        }
        let stem = config_path.file_stem().map_or_else(|| "run".into(), |s| s.to_os_string());
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
        root.join(stem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::TransitionRule;

    fn dir_with_data() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("resp.csv"),
            "subject,occasion,var,value\n1,1,a,0\n1,1,b,1\n1,2,a,1\n1,2,b,1\n2,1,a,0\n2,1,b,0\n2,2,a,1\n2,2,b,0\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("cov.csv"), "subject,occasion,age,inc\n1,1,30,1\n1,2,31,2\n2,1,50,0\n2,2,51,4\n")
            .unwrap();
        dir
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let dir = dir_with_data();
        let cfg = RunConfig::parse("[data]\nresponses = \"resp.csv\"\n[model]\nvariant = \"basic\"\n", dir.path()).unwrap();
        assert_eq!(cfg.prior, PriorSpec::default());
        assert_eq!(cfg.seeds(), vec![1]);
        let data = cfg.load_data().unwrap();
        let spec = cfg.model_spec(&data).unwrap();
        assert_eq!(spec, ModelSpec::basic(vec![2, 2], 2, true));
    }

    #[test]
    fn covariate_config_maps_names() {
        let dir = dir_with_data();
        let text = r#"
[data]
responses = "resp.csv"
covariates = "cov.csv"
standardize = ["age"]
[model]
variant = "covariate"
columns = [["age", "inc"], ["inc"]]
occasion_dummies = false
[run]
chains = 2
seeds = [5, 9]
"#;
        let cfg = RunConfig::parse(text, dir.path()).unwrap();
        let data = cfg.load_data().unwrap();
        let spec = cfg.model_spec(&data).unwrap();
        assert_eq!(spec.design().unwrap().columns, vec![vec![0, 1], vec![1]]);
        assert_eq!(cfg.seeds(), vec![5, 9]);
    }

    #[test]
    fn variant_fields_are_checked() {
        let dir = dir_with_data();
        let no_cov = "[data]\nresponses = \"resp.csv\"\n[model]\nvariant = \"covariate\"\ncolumns = [[\"age\"], []]\n";
        assert!(RunConfig::parse(no_cov, dir.path()).unwrap_err().to_string().contains("data.covariates"));
        let no_cols = "[data]\nresponses = \"resp.csv\"\ncovariates = \"cov.csv\"\n[model]\nvariant = \"covariate\"\n";
        assert!(RunConfig::parse(no_cols, dir.path()).unwrap_err().to_string().contains("model.columns"));
        let missing = "[data]\nresponses = \"nope.csv\"\n[model]\nvariant = \"basic\"\n";
        assert!(RunConfig::parse(missing, dir.path()).unwrap_err().to_string().contains("does not exist"));
        let typo = "[data]\nresponses = \"resp.csv\"\n[model]\nvariant = \"basic\"\n[sampler]\nsweep = 3\n";
        assert!(RunConfig::parse(typo, dir.path()).is_err());
    }

    #[test]
    fn grid_overlays_the_base_prior() {
        let dir = dir_with_data();
        let text = r#"
[data]
responses = "resp.csv"
[model]
variant = "basic"
[prior]
k_max = 5
[[grid]]
name = "persistence"
[[grid]]
name = "flat"
prior = { delta_uv = "flat", delta_yu = 2.0 }
"#;
        let cfg = RunConfig::parse(text, dir.path()).unwrap();
        let priors = cfg.priors().unwrap();
        assert_eq!(priors.len(), 2);
        assert_eq!(priors[0].1, PriorSpec { k_max: 5, ..PriorSpec::default() });
        assert_eq!(priors[1].1.delta_uv, TransitionRule::Flat);
        assert_eq!((priors[1].1.delta_yu, priors[1].1.k_max), (2.0, 5));

        let bad = text.replace("delta_yu = 2.0", "delta_yu = -1.0");
        assert!(RunConfig::parse(&bad, dir.path()).is_err());
    }

    #[test]
    fn output_precedence() {
        let dir = dir_with_data();
        let base = "[data]\nresponses = \"resp.csv\"\n[model]\nvariant = \"basic\"\n";
        let cfg = RunConfig::parse(base, dir.path()).unwrap();
        let cli = Path::new("/tmp/x");
        assert_eq!(cfg.output_dir(Some(cli), Path::new("a/b/run1.toml")), cli);
        let with_out = RunConfig::parse(&format!("{base}[run]\noutput = \"out\"\n"), dir.path()).unwrap();
        assert_eq!(with_out.output_dir(None, Path::new("run1.toml")), dir.path().join("out"));
        let fallback = cfg.output_dir(None, Path::new("a/b/run1.toml"));
        assert!(fallback.ends_with("run1"));
    }
}
