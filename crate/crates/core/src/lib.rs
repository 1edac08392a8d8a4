//! Exact and variational junction-tree inference for hybrid Bayesian
//! networks with conditional Gaussian and logistic (softmax-free, binary)
//! conditional distributions.

pub mod cg;
pub mod cpd;
pub mod engine;
pub mod error;
pub mod evidence;
pub mod gaussian;
pub mod graph;
pub mod netfile;
pub mod oracle;
pub mod network;
pub mod report;
pub mod table2;

pub use cg::{CgPotential, DiscVar};
pub use cpd::{Cpd, LinearGaussianCpd, LogisticCpd, LogisticParams, TabularCpd, XiStore};
pub use engine::{Engine, EngineConfig, EngineRun, EngineState, XiInit};
pub use error::{Error, Result};
pub use evidence::{Evidence, Value};
pub use gaussian::{CanonicalGaussian, ContVar, MomentGaussian, VarId};
pub use graph::{JunctionTree, Structure};
pub use netfile::{crop_network, load_network, parse_network};
pub use network::{BayesNet, Node, NodeKind};
pub use report::{Marginal, PosteriorReport};
