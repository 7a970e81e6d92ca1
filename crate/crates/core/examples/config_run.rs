//! Parses an experiment config and runs a subcommand in-process, the way the
//! `homfield` binary does.

use homfield::cli::{run, Command};
use homfield::config::parse_config;

const CONFIG: &str = "
[model]
family = power
sigma = 1
kappa = 1
d = 1
alpha = 1

[lattice]
matrix = Z

[window]
radius = 4

[mc]
seed = 17
reps = 5000

[functional near]
kind = exceedance
points = 1
lower = 0.5

[identity]
h = 0; 1
functionals = near
";

fn main() -> homfield::Result<()> {
    let cfg = parse_config(CONFIG)?;
    let report = run(&cfg, Command::CheckIdentity)?;
    for line in &report.summary {
        println!("{line}");
    }
    print!("{}", report.csv);
    Ok(())
}
