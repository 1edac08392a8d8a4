//! Posterior summaries shared by the engine and the oracles.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::gaussian::VarId;
use crate::network::BayesNet;

#[derive(Clone, Debug, PartialEq)]
pub enum Marginal {
    Discrete(Vec<f64>),
    Continuous { mean: DVector<f64>, cov: DMatrix<f64> },
}

impl Marginal {
    /// Scalar summary used for error tables: the expected state index of a
    /// discrete node (so `Pr(X=1)` for a binary one) or the first mean
    /// component of a continuous node.
    pub fn expectation(&self) -> f64 {
        match self {
            Marginal::Discrete(p) => p.iter().enumerate().map(|(k, pk)| k as f64 * pk).sum(),
            Marginal::Continuous { mean, .. } => mean[0],
        }
    }

    /// Largest absolute difference over every reported number.
    pub fn max_abs_diff(&self, other: &Marginal) -> f64 {
        match (self, other) {
            (Marginal::Discrete(a), Marginal::Discrete(b)) if a.len() == b.len() => {
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            }
            (Marginal::Continuous { mean: m1, cov: c1 }, Marginal::Continuous { mean: m2, cov: c2 })
                if m1.len() == m2.len() =>
            {
                (m1 - m2).amax().max((c1 - c2).amax())
            }
            _ => f64::INFINITY,
        }
    }
}

/// Marginals of the hidden nodes plus the log evidence (or its lower bound).
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorReport {
    pub marginals: BTreeMap<VarId, Marginal>,
    pub log_evidence: f64,
}

impl PosteriorReport {
    pub fn get(&self, id: VarId) -> Option<&Marginal> {
        self.marginals.get(&id)
    }

    pub fn expectation(&self, id: VarId) -> Option<f64> {
        self.marginals.get(&id).map(Marginal::expectation)
    }

    /// Largest absolute difference over the marginals both reports share,
    /// or infinity when their node sets differ.
    pub fn max_abs_diff(&self, other: &PosteriorReport) -> f64 {
        if self.marginals.keys().ne(other.marginals.keys()) {
            return f64::INFINITY;
        }
        self.marginals
            .iter()
            .map(|(id, m)| m.max_abs_diff(&other.marginals[id]))
            .fold(0.0, f64::max)
    }

    /// Human-readable listing with six decimals.
    pub fn render(&self, net: &BayesNet) -> String {
        let mut out = String::new();
        for (id, m) in &self.marginals {
            let name = net.name(*id);
            match m {
                Marginal::Discrete(p) => {
                    let probs: Vec<String> = p
                        .iter()
                        .enumerate()
                        .map(|(k, pk)| format!("Pr({name}={k})={pk:.6}"))
                        .collect();
                    writeln!(out, "{name}: {}", probs.join(" ")).unwrap();
                }
                Marginal::Continuous { mean, cov } if mean.len() == 1 => {
                    writeln!(out, "{name}: E[{name}]={:.6} Var[{name}]={:.6}", mean[0], cov[(0, 0)]).unwrap();
                }
                Marginal::Continuous { mean, cov } => {
                    let mu: Vec<String> = mean.iter().map(|x| format!("{x:.6}")).collect();
                    let rows: Vec<String> = cov
                        .row_iter()
                        .map(|r| r.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" "))
                        .collect();
                    writeln!(out, "{name}: E[{name}]=[{}] Cov[{name}]=[{}]", mu.join(" "), rows.join("; ")).unwrap();
                }
            }
        }
        writeln!(out, "log_evidence={:.6}", self.log_evidence).unwrap();
        out
    }
}
