use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hybridbn::engine::{Engine, EngineConfig, XiInit};
use hybridbn::graph::estimate_cost;
use hybridbn::oracle::{grid_posterior_default, likelihood_weighting};
use hybridbn::table2::{run_table2, Table2Config};
use hybridbn::{load_network, Evidence, Result};

#[derive(Parser)]
#[command(name = "hybridbn", version, about = "Inference for hybrid Bayesian networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineKind {
    /// Junction tree with the variational logistic bound.
    Variational,
    /// Quadrature reference.
    Grid,
    /// Likelihood-weighting sampler.
    Lw,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitKind {
    Ancestral,
    OwnNoise,
}

#[derive(Subcommand)]
enum Command {
    /// Posterior marginals of the hidden nodes given evidence.
    Infer {
        #[arg(long)]
        net: PathBuf,
        /// Observations as `Name=value,Name=value`; vector values use `;`.
        #[arg(long, default_value = "")]
        evidence: String,
        #[arg(long, value_enum, default_value = "variational")]
        engine: EngineKind,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[arg(long, value_enum, default_value = "ancestral")]
        init: InitKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample count for the `lw` engine.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Engine-vs-oracle error table over every observed/hidden pattern.
    Table2 {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        /// CSV destination; without it the CSV goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cost estimate and junction-tree dump.
    Cost {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value = "")]
        evidence: String,
    },
    /// Load a network file and check it.
    Validate {
        #[arg(long)]
        net: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Infer {
            net,
            evidence,
            engine,
            tol,
            max_iter,
            init,
            seed,
            samples,
        } => {
            let net = load_network(&net)?;
            let ev = Evidence::parse(&net, &evidence)?;
            match engine {
                EngineKind::Variational => {
                    let cfg = EngineConfig {
                        tol,
                        max_iter,
                        init: match init {
                            InitKind::Ancestral => XiInit::Ancestral,
                            InitKind::OwnNoise => XiInit::OwnNoise,
                        },
                    };
                    let run = Engine::new(&net)?.run(&ev, &cfg)?;
                    print!("{}", run.report.render(&net));
                    println!("iterations={}", run.iterations);
                    if !run.converged {
                        println!("warning: not converged after {max_iter} iterations");
                    }
                }
                EngineKind::Grid => print!("{}", grid_posterior_default(&net, &ev)?.render(&net)),
                EngineKind::Lw => {
                    let lw = likelihood_weighting(&net, &ev, samples, seed)?;
                    print!("{}", lw.report.render(&net));
                    println!("ess={:.6}", lw.ess);
                }
            }
        }
        Command::Table2 {
            net,
            trials,
            seed,
            tol,
            max_iter,
            out,
        } => {
            let net = load_network(&net)?;
            let cfg = Table2Config {
                trials,
                seed,
                engine: EngineConfig {
                    tol,
                    max_iter,
                    ..EngineConfig::default()
                },
            };
            let table = run_table2(&net, &cfg)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, table.to_csv()).map_err(|e| {
                        hybridbn::Error::Network(format!("cannot write {}: {e}", path.display()))
                    })?;
                    print!("{}", table.render());
                }
                None => print!("{}", table.to_csv()),
            }
        }
        Command::Cost { net, evidence } => {
            let net = load_network(&net)?;
            let ev = Evidence::parse(&net, &evidence)?;
            let engine = Engine::new(&net)?;
            let cost = estimate_cost(&engine.structure().jtree, &net, |v| !ev.is_observed(v));
            println!("cost {cost}");
            print!("{}", engine.structure().dump(&net));
        }
        Command::Validate { net } => {
            let path = net;
            let net = load_network(&path)?;
            let structure = hybridbn::Structure::build(&net)?;
            println!(
                "OK: {} nodes, {} cliques, strong root {}",
                net.len(),
                structure.jtree.len(),
                if structure.jtree.strong { "found" } else { "missing" }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
