//! Driving the command-line pipeline from code: resolve flags, run, render.

use tpa_metrology::cli::{execute, Command, OutputFormat, RunArgs, RunSpec};

fn main() {
    let args = RunArgs {
        scenario: Some("double,classical".into()),
        observable: Some("G11".into()),
        n_total: Some("1e2:1e3".into()),
        points: Some(3),
        format: Some(OutputFormat::Csv),
        ..RunArgs::default()
    };
    let spec = RunSpec::resolve(Command::Sweep, &args).expect("valid spec");
    let outcome = execute(&spec).expect("runs");
    print!("{}", outcome.artifact.render(spec.format));
    if let Some(e) = outcome.error {
        eprintln!("{}", e.to_json());
    }
}
