use clap::{Parser, Subcommand};
use sparsedelay_cli::config::{build_plant, ExperimentConfig, Mode};
use sparsedelay_cli::io::DesignFile;
use sparsedelay_cli::{fixtures, report, run};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sparsedelay", version, about = "Delay/sparsity co-design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a gain/delay design experiment (algorithm1, constant_delay, case_a).
    Design {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's mode.
        #[arg(long)]
        mode: Option<String>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Echo the trace to stdout as it is written.
        #[arg(long)]
        trace: bool,
    },
    /// Run the CN reassignment pipeline (topology_redesign or the
    /// block-sparse comparison).
    Topology {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stability/H2/gradient report for a stored design file.
    Analyze {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// List or dump bundled fixtures.
    Fixtures {
        /// Fixture name to dump; lists all when omitted.
        name: Option<String>,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    mode: Option<String>,
    seed: Option<u64>,
) -> sparsedelay::Result<()> {
    if let Some(mode) = mode {
        cfg.mode = mode.parse::<Mode>()?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(())
}

fn dispatch() -> sparsedelay::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Design { config, mode, seed, out, trace } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            apply_overrides(&mut cfg, mode, seed)?;
            if !matches!(cfg.mode, Mode::Algorithm1 | Mode::ConstantDelay | Mode::CaseA) {
                return Err(sparsedelay::Error::Config(format!(
                    "`design` drives gain/delay modes, not {}",
                    cfg.mode.as_str()
                )));
            }
            let artifacts = run::run(&cfg, out.as_deref())?;
            print!("{}", artifacts.summary);
            if trace {
                for name in ["trace.csv", "case_a.csv"] {
                    if let Ok(text) = std::fs::read_to_string(artifacts.out_dir.join(name)) {
                        print!("{text}");
                    }
                }
            }
            println!("artifacts in {}", artifacts.out_dir.display());
            Ok(())
        }
        Command::Topology { config, mode, seed, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            apply_overrides(&mut cfg, mode, seed)?;
            if !matches!(cfg.mode, Mode::TopologyRedesign | Mode::BlockSparseBaseline) {
                cfg.mode = Mode::TopologyRedesign;
            }
            let artifacts = run::run(&cfg, out.as_deref())?;
            print!("{}", artifacts.summary);
            println!("artifacts in {}", artifacts.out_dir.display());
            Ok(())
        }
        Command::Analyze { design, config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let text = std::fs::read_to_string(&design).map_err(|e| {
                sparsedelay::Error::Config(format!("cannot read {}: {e}", design.display()))
            })?;
            let design = DesignFile::from_text(&text)?;
            let plant = build_plant(&cfg)?;
            let bw = cfg.bandwidth.to_model();
            let n_grid = if cfg.spectral.n_grid == 0 { 20 } else { cfg.spectral.n_grid };
            let report = report::analyze(&design, &plant, Some(&bw), n_grid)?;
            print!("{report}");
            Ok(())
        }
        Command::Fixtures { name } => {
            match name {
                None => {
                    for name in fixtures::fixture_names() {
                        let f = fixtures::fixture_loader(name)?;
                        println!("{name}: {}", f.description);
                    }
                }
                Some(name) => {
                    let f = fixtures::fixture_loader(&name)?;
                    println!("# {}: {}", f.name, f.description);
                    println!("x_order {:?}", f.topology.x_order());
                    println!("u_order {:?}", f.topology.u_order());
                    println!("n_sizes {:?}", f.topology.n_sizes());
                    println!("m_sizes {:?}", f.topology.m_sizes());
                    if let Some(k) = &f.gain {
                        print!("{}", sparsedelay_cli::io::matrix_to_text(k));
                    }
                }
            }
            Ok(())
        }
    }
}
