//! End to end through the run layer: simulate a panel, write a TOML run
//! config with a two-entry prior grid, fit it and print the rendered report
//! for each grid entry.

use lmrj::cli::{cmd_simulate, run_fit};
use lmrj::io::config::RunConfig;

fn main() -> lmrj::Result<()> {
    let dir = tempfile::tempdir()?;
    let params = r#"{
        "spec": {"levels": [3], "occasions": 5, "measurement": {"variant": "basic", "homogeneous": true}},
        "params": {
            "initial": [0.6, 0.4],
            "transition": [[0.9, 0.1], [0.1, 0.9]],
            "measurement": {"variant": "basic", "psi": [[[[0.8, 0.1], [0.15, 0.2], [0.05, 0.7]]]]}
        }
    }"#;
    std::fs::write(dir.path().join("params.json"), params)?;
    cmd_simulate(&dir.path().join("params.json"), Some(300), 12, None, dir.path())?;

    let config = r#"
[data]
responses = "responses.csv"

[model]
variant = "basic"

[prior]
k_max = 4

[sampler]
sweeps = 6000
burn_in = 1500
seed = 1

[run]
chains = 2

[[grid]]
name = "persistent"
prior = { delta_uv = "persistence" }

[[grid]]
name = "flat"
prior = { delta_uv = "flat" }
"#;
    let path = dir.path().join("run.toml");
    std::fs::write(&path, config)?;
    let cfg = RunConfig::load(&path)?;
    for fit in run_fit(&cfg, &dir.path().join("out"))? {
        println!("== {} ({} chains)", fit.name, fit.traces.len());
        println!("{}", lmrj::io::report::render_summary(&fit.summary));
    }
    Ok(())
}
