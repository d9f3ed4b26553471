//! Runs the built-in oracle suites at reduced size and prints the table the
//! `check` command shows.

use lmrj::cli::render_checks;
use lmrj::selfcheck::{run_checks, CheckOptions};

fn main() -> lmrj::Result<()> {
    let opts = CheckOptions { prior_sweeps: 20_000, ..CheckOptions::default() };
    let lines = run_checks(&opts)?;
    print!("{}", render_checks(&lines));
    let failed = lines.iter().filter(|l| !l.report.pass).count();
    println!("{} checks, {failed} failed", lines.len());
    Ok(())
}
