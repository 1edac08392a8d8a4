//! Bayesian network structure: typed nodes, parents, and one CPD per node.

use std::collections::BTreeMap;

use crate::cg::{config_count, encode, DiscVar};
use crate::cpd::Cpd;
use crate::error::{Error, Result};
use crate::gaussian::{ContVar, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Discrete { card: usize },
    Continuous { dim: usize },
}

impl NodeKind {
    pub fn is_discrete(self) -> bool {
        matches!(self, NodeKind::Discrete { .. })
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, NodeKind::Continuous { .. })
    }

    /// Cardinality for discrete nodes, vector length for continuous ones.
    pub fn size(self) -> usize {
        match self {
            NodeKind::Discrete { card } => card,
            NodeKind::Continuous { dim } => dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: VarId,
    pub name: String,
    pub kind: NodeKind,
    /// Parents in the order the CPD parameters refer to them.
    pub parents: Vec<VarId>,
    pub cpd: Cpd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BayesNet {
    nodes: Vec<Node>,
    topo: Vec<VarId>,
}

impl BayesNet {
    /// Assembles a network from nodes whose ids are their positions. Checks
    /// structure and CPD shapes.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != VarId(i) {
                return Err(Error::Network(format!("node '{}' has id {} at position {i}", n.name, n.id.0)));
            }
            if nodes[..i].iter().any(|m| m.name == n.name) {
                return Err(Error::Network(format!("duplicate node name '{}'", n.name)));
            }
            for (j, p) in n.parents.iter().enumerate() {
                if p.0 >= nodes.len() {
                    return Err(Error::Network(format!("node '{}' has unknown parent id {}", n.name, p.0)));
                }
                if *p == n.id {
                    return Err(Error::Network(format!("node '{}' is its own parent", n.name)));
                }
                if n.parents[..j].contains(p) {
                    return Err(Error::Network(format!("node '{}' lists parent '{}' twice", n.name, nodes[p.0].name)));
                }
            }
            match n.kind {
                NodeKind::Discrete { card } if card < 2 => {
                    return Err(Error::Network(format!("node '{}': cardinality must be at least 2", n.name)))
                }
                NodeKind::Continuous { dim } if dim < 1 => {
                    return Err(Error::Network(format!("node '{}': dim must be at least 1", n.name)))
                }
                _ => {}
            }
        }
        let topo = topological_order(&nodes)?;
        let net = BayesNet { nodes, topo };
        for n in &net.nodes {
            n.cpd.validate(&net, n)?;
        }
        Ok(net)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: VarId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn kind(&self, id: VarId) -> NodeKind {
        self.nodes[id.0].kind
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn id_of(&self, name: &str) -> Option<VarId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn topological_order(&self) -> &[VarId] {
        &self.topo
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn disc_var(&self, id: VarId) -> DiscVar {
        match self.kind(id) {
            NodeKind::Discrete { card } => DiscVar::new(id, card),
            NodeKind::Continuous { .. } => panic!("{} is continuous", self.name(id)),
        }
    }

    pub fn cont_var(&self, id: VarId) -> ContVar {
        match self.kind(id) {
            NodeKind::Continuous { dim } => ContVar::new(id, dim),
            NodeKind::Discrete { .. } => panic!("{} is discrete", self.name(id)),
        }
    }

    /// Discrete parents in listed order.
    pub fn discrete_parents(&self, id: VarId) -> Vec<VarId> {
        self.node(id)
            .parents
            .iter()
            .copied()
            .filter(|p| self.kind(*p).is_discrete())
            .collect()
    }

    /// Continuous parents in listed order; their stacked values form the
    /// regressor vector of the CPD.
    pub fn continuous_parents(&self, id: VarId) -> Vec<VarId> {
        self.node(id)
            .parents
            .iter()
            .copied()
            .filter(|p| self.kind(*p).is_continuous())
            .collect()
    }

    pub fn continuous_parent_dim(&self, id: VarId) -> usize {
        self.continuous_parents(id).iter().map(|p| self.kind(*p).size()).sum()
    }

    /// Discrete-parent layout used to index CPD parameter rows.
    pub fn parent_config_vars(&self, id: VarId) -> Vec<DiscVar> {
        self.discrete_parents(id).iter().map(|p| self.disc_var(*p)).collect()
    }

    pub fn parent_config_count(&self, id: VarId) -> usize {
        config_count(&self.parent_config_vars(id))
    }

    /// Row index into the CPD parameters given a value for every discrete parent.
    pub fn parent_config_index(&self, id: VarId, value_of: impl Fn(VarId) -> usize) -> usize {
        let vars = self.parent_config_vars(id);
        let vals: Vec<usize> = vars.iter().map(|v| value_of(v.id)).collect();
        encode(&vars, &vals)
    }

    /// Node ids in the family of `id`: its parents and itself.
    pub fn family(&self, id: VarId) -> Vec<VarId> {
        let mut f = self.node(id).parents.clone();
        f.push(id);
        f
    }

    pub fn children(&self) -> BTreeMap<VarId, Vec<VarId>> {
        let mut out: BTreeMap<VarId, Vec<VarId>> = self.ids().map(|id| (id, Vec::new())).collect();
        for n in &self.nodes {
            for p in &n.parents {
                out.get_mut(p).unwrap().push(n.id);
            }
        }
        out
    }
}

fn topological_order(nodes: &[Node]) -> Result<Vec<VarId>> {
    let mut indeg: Vec<usize> = nodes.iter().map(|n| n.parents.len()).collect();
    let mut order = Vec::with_capacity(nodes.len());
    let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
    ready.reverse();
    while let Some(i) = ready.pop() {
        order.push(VarId(i));
        let mut released = Vec::new();
        for (j, n) in nodes.iter().enumerate() {
            if n.parents.contains(&VarId(i)) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    released.push(j);
                }
            }
        }
        // smallest id next
        ready.extend(released);
        ready.sort_unstable_by(|a, b| b.cmp(a));
    }
    if order.len() != nodes.len() {
        let stuck: Vec<&str> = (0..nodes.len())
            .filter(|&i| indeg[i] > 0)
            .map(|i| nodes[i].name.as_str())
            .collect();
        return Err(Error::Network(format!("the parent graph has a cycle through {stuck:?}")));
    }
    Ok(order)
}
