//! JSON network files.
//!
//! ```json
//! { "nodes": [
//!   { "name": "S", "kind": "discrete", "cardinality": 2, "parents": [],
//!     "cpd": { "type": "cpt", "table": [[0.7, 0.3]] } },
//!   { "name": "P", "kind": "continuous", "dim": 1, "parents": ["S", "C"],
//!     "cpd": { "type": "linear_gaussian", "configs": [
//!       { "config": [0], "mean": [10.0], "weights": [[-1.0]], "cov": [[1.0]] },
//!       { "config": [1], "mean": [20.0], "weights": [[-1.0]], "cov": [[1.0]] } ] } },
//!   { "name": "B", "kind": "discrete", "cardinality": 2, "parents": ["P"],
//!     "cpd": { "type": "logistic", "configs": [
//!       { "config": [], "weights": [-1.0], "bias": 5.0 } ] } } ] }
//! ```
//!
//! `config` tuples list the states of the node's discrete parents in the
//! order they appear in `parents`. CPT rows use the same order, last parent
//! varying fastest. Weight matrices have one row per child component and one
//! column per component of the stacked continuous parents.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cg::{decode, encode};
use crate::cpd::{Cpd, LgParams, LinearGaussianCpd, LogisticCpd, LogisticParams, TabularCpd};
use crate::error::{Error, Result};
use crate::gaussian::VarId;
use crate::network::{BayesNet, Node, NodeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: Vec<NodeEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindEntry {
    Discrete,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub name: String,
    pub kind: KindEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpd: CpdEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CpdEntry {
    Cpt {
        table: Vec<Vec<f64>>,
    },
    LinearGaussian {
        configs: Vec<LgEntry>,
    },
    Logistic {
        configs: Vec<LogisticEntry>,
    },
    /// Accepted by the parser only so validation can reject it by name.
    Probit(serde_json::Map<String, serde_json::Value>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LgEntry {
    #[serde(default)]
    pub config: Vec<usize>,
    pub mean: Vec<f64>,
    #[serde(default)]
    pub weights: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticEntry {
    #[serde(default)]
    pub config: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if ncols == 0 && rows.iter().all(|r| r.is_empty()) {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Network(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Places keyed configurations at their table index, requiring each exactly once.
fn by_config<T: Clone>(
    name: &str,
    net_vars: &[crate::cg::DiscVar],
    items: &[(Vec<usize>, T)],
) -> Result<Vec<T>> {
    let n = crate::cg::config_count(net_vars);
    let mut out: Vec<Option<T>> = vec![None; n];
    for (cfg, item) in items {
        if cfg.len() != net_vars.len() || cfg.iter().zip(net_vars).any(|(x, v)| *x >= v.card) {
            return Err(Error::Network(format!(
                "node '{name}': configuration {cfg:?} does not match the discrete parents"
            )));
        }
        let idx = encode(net_vars, cfg);
        if out[idx].is_some() {
            return Err(Error::Network(format!("node '{name}': configuration {cfg:?} given twice")));
        }
        out[idx] = Some(item.clone());
    }
    out.into_iter()
        .enumerate()
        .map(|(i, x)| {
            x.ok_or_else(|| {
                Error::Network(format!(
                    "node '{name}': missing parameters for configuration {:?}",
                    decode(net_vars, i)
                ))
            })
        })
        .collect()
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Network(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network file serializes")
    }

    pub fn to_network(&self) -> Result<BayesNet> {
        let id_of = |n: &str| self.nodes.iter().position(|m| m.name == n);
        let mut kinds = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let kind = match (n.kind, n.cardinality, n.dim) {
                (KindEntry::Discrete, Some(card), None) => NodeKind::Discrete { card },
                (KindEntry::Continuous, None, Some(dim)) => NodeKind::Continuous { dim },
                (KindEntry::Continuous, None, None) => NodeKind::Continuous { dim: 1 },
                (KindEntry::Discrete, None, _) => {
                    return Err(Error::Network(format!("node '{}': discrete nodes need a cardinality", n.name)))
                }
                _ => {
                    return Err(Error::Network(format!(
                        "node '{}': use cardinality for discrete nodes and dim for continuous ones",
                        n.name
                    )))
                }
            };
            kinds.push(kind);
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let parents = n
                .parents
                .iter()
                .map(|p| {
                    id_of(p)
                        .map(VarId)
                        .ok_or_else(|| Error::Network(format!("node '{}': unknown parent '{p}'", n.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            let dvars: Vec<crate::cg::DiscVar> = parents
                .iter()
                .filter_map(|p| match kinds[p.0] {
                    NodeKind::Discrete { card } => Some(crate::cg::DiscVar::new(*p, card)),
                    NodeKind::Continuous { .. } => None,
                })
                .collect();
            let m: usize = parents
                .iter()
                .filter_map(|p| match kinds[p.0] {
                    NodeKind::Continuous { dim } => Some(dim),
                    NodeKind::Discrete { .. } => None,
                })
                .sum();
            let cpd = match &n.cpd {
                CpdEntry::Cpt { table } => Cpd::Tabular(TabularCpd { rows: table.clone() }),
                CpdEntry::LinearGaussian { configs } => {
                    let dim = kinds[i].size();
                    let items = configs
                        .iter()
                        .map(|c| {
                            let params = LgParams {
                                mean: DVector::from_vec(c.mean.clone()),
                                weights: matrix(&c.weights, dim, m, "weights")
                                    .map_err(|e| Error::Network(format!("node '{}': {e}", n.name)))?,
                                cov: matrix(&c.cov, dim, dim, "cov")
                                    .map_err(|e| Error::Network(format!("node '{}': {e}", n.name)))?,
                            };
                            Ok((c.config.clone(), params))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Cpd::LinearGaussian(LinearGaussianCpd {
                        configs: by_config(&n.name, &dvars, &items)?,
                    })
                }
                CpdEntry::Logistic { configs } => {
                    let items: Vec<_> = configs
                        .iter()
                        .map(|c| (c.config.clone(), LogisticParams::new(&c.weights, c.bias)))
                        .collect();
                    Cpd::Logistic(LogisticCpd {
                        configs: by_config(&n.name, &dvars, &items)?,
                    })
                }
                CpdEntry::Probit(_) => {
                    return Err(Error::Network(format!(
                        "node '{}': probit CPDs are not supported; use a logistic CPD instead",
                        n.name
                    )))
                }
            };
            nodes.push(Node {
                id: VarId(i),
                name: n.name.clone(),
                kind: kinds[i],
                parents,
                cpd,
            });
        }
        BayesNet::new(nodes)
    }

    pub fn from_network(net: &BayesNet) -> Self {
        let nodes = net
            .nodes()
            .iter()
            .map(|n| {
                let dvars = net.parent_config_vars(n.id);
                let cpd = match &n.cpd {
                    Cpd::Tabular(t) => CpdEntry::Cpt { table: t.rows.clone() },
                    Cpd::LinearGaussian(lg) => CpdEntry::LinearGaussian {
                        configs: lg
                            .configs
                            .iter()
                            .enumerate()
                            .map(|(i, c)| LgEntry {
                                config: decode(&dvars, i),
                                mean: c.mean.iter().copied().collect(),
                                weights: rows_of(&c.weights),
                                cov: rows_of(&c.cov),
                            })
                            .collect(),
                    },
                    Cpd::Logistic(lc) => CpdEntry::Logistic {
                        configs: lc
                            .configs
                            .iter()
                            .enumerate()
                            .map(|(i, c)| LogisticEntry {
                                config: decode(&dvars, i),
                                weights: c.weights.iter().copied().collect(),
                                bias: c.bias,
                            })
                            .collect(),
                    },
                };
                let (kind, cardinality, dim) = match n.kind {
                    NodeKind::Discrete { card } => (KindEntry::Discrete, Some(card), None),
                    NodeKind::Continuous { dim } => (KindEntry::Continuous, None, Some(dim)),
                };
                NodeEntry {
                    name: n.name.clone(),
                    kind,
                    cardinality,
                    dim,
                    parents: n.parents.iter().map(|p| net.name(*p).to_string()).collect(),
                    cpd,
                }
            })
            .collect();
        NetworkFile { nodes }
    }
}

pub fn parse_network(text: &str) -> Result<BayesNet> {
    NetworkFile::from_json(text)?.to_network()
}

pub fn load_network(path: &Path) -> Result<BayesNet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Network(format!("cannot read {}: {e}", path.display())))?;
    parse_network(&text)
}

pub fn to_json(net: &BayesNet) -> String {
    NetworkFile::from_network(net).to_json()
}

/// The crop network: subsidy S, crop C, price P, buy B.
pub const CROP_JSON: &str = include_str!("../fixtures/crop.json");

pub fn crop_network() -> BayesNet {
    parse_network(CROP_JSON).expect("crop fixture is valid")
}
