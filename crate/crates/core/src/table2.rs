//! Accuracy experiment over every observed/hidden pattern: sample complete
//! examples from the joint, clamp the observed part, and compare the
//! variational engine against the grid oracle node by node.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::evidence::Evidence;
use crate::gaussian::VarId;
use crate::network::BayesNet;
use crate::oracle::{grid_posterior_default, sample_joint};

/// Patterns are numbered from 1; bit `i` of `number - 1` set means node `i`
/// (by id) is hidden. Pattern 1 observes everything, the last hides all.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pattern(pub usize);

impl Pattern {
    pub fn hidden(self, id: VarId) -> bool {
        (self.0 - 1) >> id.0 & 1 == 1
    }

    /// `h`/`o` per node in id order, comma separated.
    pub fn label(self, n: usize) -> String {
        (0..n)
            .map(|i| if self.hidden(VarId(i)) { "h" } else { "o" })
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Clone, Debug)]
pub struct Table2Config {
    pub trials: usize,
    pub seed: u64,
    pub engine: EngineConfig,
}

impl Default for Table2Config {
    fn default() -> Self {
        Table2Config {
            trials: 20,
            seed: 0,
            engine: EngineConfig::default(),
        }
    }
}

/// One (pattern, trial) run.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub pattern: Pattern,
    pub trial: usize,
    /// `|E_engine - E_oracle|` per node; `None` where observed.
    pub delta: Vec<Option<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub loglik_bound: f64,
    pub oracle_loglik: f64,
    pub loglik_trace: Vec<f64>,
    /// Largest difference over every reported probability, mean and
    /// covariance entry.
    pub max_moment_diff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub pattern: Pattern,
    pub mean: Vec<Option<f64>>,
    /// Sample standard deviation (n - 1 denominator).
    pub std: Vec<Option<f64>>,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub mean_loglik_bound: f64,
    pub mean_oracle_loglik: f64,
}

#[derive(Clone, Debug)]
pub struct Table2 {
    pub names: Vec<String>,
    pub cells: Vec<Cell>,
    pub summaries: Vec<Summary>,
}

/// Complete example for `trial`, drawn from its own stream of the master
/// seed so that every pattern sees the same example regardless of schedule.
pub fn trial_example(net: &BayesNet, seed: u64, trial: usize) -> Vec<crate::evidence::Value> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    sample_joint(net, &mut rng)
}

pub fn evidence_for(net: &BayesNet, pattern: Pattern, example: &[crate::evidence::Value]) -> Result<Evidence> {
    let mut ev = Evidence::new();
    for id in net.ids().filter(|id| !pattern.hidden(*id)) {
        ev.observe(net, id, example[id.0].clone())?;
    }
    Ok(ev)
}

pub fn run_cell(engine: &Engine<'_>, cfg: &Table2Config, pattern: Pattern, trial: usize) -> Result<Cell> {
    let net = engine.net();
    let example = trial_example(net, cfg.seed, trial);
    let ev = evidence_for(net, pattern, &example)?;
    let run = engine.run(&ev, &cfg.engine)?;
    let oracle = grid_posterior_default(net, &ev)?;
    let delta = net
        .ids()
        .map(|id| match (run.report.expectation(id), oracle.expectation(id)) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        })
        .collect();
    Ok(Cell {
        pattern,
        trial,
        delta,
        iterations: run.iterations,
        converged: run.converged,
        loglik_bound: run.report.log_evidence,
        oracle_loglik: oracle.log_evidence,
        loglik_trace: run.loglik_trace().to_vec(),
        max_moment_diff: run.report.max_abs_diff(&oracle),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn summarize(n_nodes: usize, pattern: Pattern, cells: &[&Cell]) -> Summary {
    let mut mean = Vec::with_capacity(n_nodes);
    let mut std = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let xs: Vec<f64> = cells.iter().filter_map(|c| c.delta[i]).collect();
        if xs.is_empty() {
            mean.push(None);
            std.push(None);
        } else {
            let (m, s) = mean_std(&xs);
            mean.push(Some(m));
            std.push(Some(s));
        }
    }
    let iters: Vec<f64> = cells.iter().map(|c| c.iterations as f64).collect();
    let lb: Vec<f64> = cells.iter().map(|c| c.loglik_bound).collect();
    let lo: Vec<f64> = cells.iter().map(|c| c.oracle_loglik).collect();
    Summary {
        pattern,
        mean,
        std,
        mean_iterations: mean_std(&iters).0,
        max_iterations: cells.iter().map(|c| c.iterations).max().unwrap_or(0),
        mean_loglik_bound: mean_std(&lb).0,
        mean_oracle_loglik: mean_std(&lo).0,
    }
}

/// Runs every pattern for `cfg.trials` trials. Cells run in parallel.
pub fn run_table2(net: &BayesNet, cfg: &Table2Config) -> Result<Table2> {
    if net.len() > 8 {
        return Err(Error::OracleScale(format!(
            "{} nodes would need {} patterns; the experiment is limited to 8 nodes",
            net.len(),
            1usize << net.len()
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::OracleScale("at least one trial is required".into()));
    }
    let engine = Engine::new(net)?;
    let patterns: Vec<Pattern> = (1..=1usize << net.len()).map(Pattern).collect();
    let jobs: Vec<(Pattern, usize)> = patterns
        .iter()
        .flat_map(|p| (0..cfg.trials).map(move |t| (*p, t)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(p, t)| run_cell(&engine, cfg, p, t))
        .collect::<Result<Vec<Cell>>>()?;
    let summaries = patterns
        .iter()
        .map(|p| {
            let mine: Vec<&Cell> = cells.iter().filter(|c| c.pattern == *p).collect();
            summarize(net.len(), *p, &mine)
        })
        .collect();
    Ok(Table2 {
        names: net.nodes().iter().map(|n| n.name.clone()).collect(),
        cells,
        summaries,
    })
}

impl Table2 {
    pub fn summary(&self, pattern: Pattern) -> &Summary {
        &self.summaries[pattern.0 - 1]
    }

    /// Per-cell rows followed by `mean` and `std` rows for each pattern.
    /// Observed nodes leave their delta field empty.
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("pattern,trial");
        for n in &self.names {
            write!(out, ",delta_{n}").unwrap();
        }
        out.push_str(",iterations,loglik_bound,oracle_loglik\n");
        for c in &self.cells {
            write!(out, "{},{}", c.pattern.0, c.trial).unwrap();
            for d in &c.delta {
                write!(out, ",{}", opt(*d)).unwrap();
            }
            writeln!(out, ",{},{},{}", c.iterations, c.loglik_bound, c.oracle_loglik).unwrap();
        }
        for s in &self.summaries {
            write!(out, "{},mean", s.pattern.0).unwrap();
            for d in &s.mean {
                write!(out, ",{}", opt(*d)).unwrap();
            }
            writeln!(out, ",{},{},{}", s.mean_iterations, s.mean_loglik_bound, s.mean_oracle_loglik).unwrap();
            write!(out, "{},std", s.pattern.0).unwrap();
            for d in &s.std {
                write!(out, ",{}", opt(*d)).unwrap();
            }
            out.push_str(",,,\n");
        }
        out
    }

    /// Table in the familiar layout: pattern letters, then `mean (std)` per
    /// node with six decimals, and the mean iteration count.
    pub fn render(&self) -> String {
        let n = self.names.len();
        let mut out = String::new();
        write!(out, "{:>3}  {:<width$}", "#", self.names.join(","), width = 2 * n - 1).unwrap();
        for name in &self.names {
            write!(out, "  {:>21}", format!("delta({name})")).unwrap();
        }
        out.push_str("  iters\n");
        for s in &self.summaries {
            write!(out, "{:>3}  {}", s.pattern.0, s.pattern.label(n)).unwrap();
            for (m, sd) in s.mean.iter().zip(&s.std) {
                match (m, sd) {
                    (Some(m), Some(sd)) => write!(out, "  {:>21}", format!("{m:.6} ({sd:.6})")).unwrap(),
                    _ => write!(out, "  {:>21}", "-").unwrap(),
                }
            }
            writeln!(out, "  {:.2}", s.mean_iterations).unwrap();
        }
        out
    }
}
