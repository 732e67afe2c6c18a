use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ftlab::cli::{self, RunSpec};
use ftlab::control::ControllerKind;
use ftlab::sim::Scenario;
use ftlab::verify::Mutation;

#[derive(Parser)]
#[command(name = "ftlab", version, about = "Finite-time adaptive set-point control lab")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// key=value config file; omitted keys keep their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// c1, c2, c3 or c4
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// case1 (ideal) or case2 (friction and noise)
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn spec(self) -> RunSpec {
        RunSpec { config: self.config, controller: self.controller, scenario: self.scenario, out: self.out }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one closed loop and write trace.csv and metrics.txt
    Simulate(Common),
    /// Check the runtime property suite
    Verify {
        /// Inject a defect: coriolis-sign or adjugate
        #[arg(long, default_value = "none", hide = true)]
        inject: Mutation,
    },
    /// Run every controller and scenario (or the selected ones) in parallel
    Sweep(Common),
}

fn main() -> ExitCode {
    let code = match Args::parse().cmd {
        Cmd::Simulate(c) => cli::cmd_simulate(&c.spec()),
        Cmd::Verify { inject } => cli::cmd_verify(inject),
        Cmd::Sweep(c) => cli::cmd_sweep(&c.spec()),
    };
    ExitCode::from(code as u8)
}
