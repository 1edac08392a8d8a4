#![allow(dead_code)]

use hybridbn::cpd::{LgParams, LinearGaussianCpd, LogisticCpd, LogisticParams, TabularCpd};
use hybridbn::oracle::sample_joint;
use hybridbn::{BayesNet, Cpd, Evidence, Node, NodeKind, VarId};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub struct NetShape {
    pub nodes: usize,
    pub logistic: bool,
    pub max_dim: usize,
    pub parent_prob: f64,
}

fn spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.8..0.8));
    &a * a.transpose() + DMatrix::identity(d, d) * rng.random_range(0.3..1.5)
}

fn probs<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    p
}

/// Random hybrid network in topological id order. Discrete nodes with a
/// continuous parent become binary logistic nodes when `logistic` is set;
/// otherwise discrete nodes only get discrete parents.
pub fn random_hybrid<R: Rng>(rng: &mut R, shape: &NetShape) -> BayesNet {
    let mut nodes: Vec<Node> = Vec::new();
    for i in 0..shape.nodes {
        let continuous = rng.random_bool(0.5);
        let mut parents = Vec::new();
        for j in 0..i {
            if parents.len() < 3 && rng.random_bool(shape.parent_prob) {
                let pc = nodes[j].kind.is_continuous();
                if continuous || !pc || shape.logistic {
                    parents.push(VarId(j));
                }
            }
        }
        let disc_parents: Vec<usize> = parents
            .iter()
            .filter(|p| nodes[p.0].kind.is_discrete())
            .map(|p| nodes[p.0].kind.size())
            .collect();
        let rows: usize = disc_parents.iter().product();
        let cont_dim: usize = parents
            .iter()
            .filter(|p| nodes[p.0].kind.is_continuous())
            .map(|p| nodes[p.0].kind.size())
            .sum();
        let (kind, cpd) = if continuous {
            let dim = rng.random_range(1..=shape.max_dim);
            let configs = (0..rows)
                .map(|_| LgParams {
                    mean: DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0)),
                    weights: DMatrix::from_fn(dim, cont_dim, |_, _| rng.random_range(-1.2..1.2)),
                    cov: spd(rng, dim),
                })
                .collect();
            (NodeKind::Continuous { dim }, Cpd::LinearGaussian(LinearGaussianCpd { configs }))
        } else if cont_dim > 0 {
            let configs = (0..rows)
                .map(|_| {
                    let w: Vec<f64> = (0..cont_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                    LogisticParams::new(&w, rng.random_range(-2.0..2.0))
                })
                .collect();
            (NodeKind::Discrete { card: 2 }, Cpd::Logistic(LogisticCpd { configs }))
        } else {
            let card = rng.random_range(2..=3);
            let rows = (0..rows).map(|_| probs(rng, card)).collect();
            (NodeKind::Discrete { card }, Cpd::Tabular(TabularCpd { rows }))
        };
        nodes.push(Node {
            id: VarId(i),
            name: format!("N{i}"),
            kind,
            parents,
            cpd,
        });
    }
    BayesNet::new(nodes).expect("generator builds valid networks")
}

/// Observes each node with probability `p`, at values drawn from the joint.
pub fn random_evidence<R: Rng>(rng: &mut R, net: &BayesNet, p: f64) -> Evidence {
    let example = sample_joint(net, rng);
    let mut ev = Evidence::new();
    for id in net.ids() {
        if rng.random_bool(p) {
            ev.observe(net, id, example[id.0].clone()).unwrap();
        }
    }
    ev
}

/// Hidden continuous scalar components and total hidden discrete states.
pub fn hidden_size(net: &BayesNet, ev: &Evidence) -> (usize, usize) {
    let mut c = 0;
    let mut d = 0;
    for id in net.ids().filter(|id| !ev.is_observed(*id)) {
        match net.kind(id) {
            NodeKind::Continuous { dim } => c += dim,
            NodeKind::Discrete { card } => d += card,
        }
    }
    (c, d)
}
