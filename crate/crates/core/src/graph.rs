//! Graph side of the junction-tree pipeline: moralization, constrained
//! elimination ordering, triangulation, clique extraction, the junction tree
//! itself and the strong-root test for marked (discrete/continuous) graphs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gaussian::VarId;
use crate::network::BayesNet;

/// Undirected simple graph over vertices `0..n` (network variable ids).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl UGraph {
    pub fn new(n: usize) -> Self {
        UGraph {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    /// Edges as `(lo, hi)` pairs in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.adj.iter().enumerate() {
            out.extend(ns.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }
}

/// Marries co-parents and drops edge directions.
pub fn moralize(net: &BayesNet) -> UGraph {
    let mut g = UGraph::new(net.len());
    for n in net.nodes() {
        for (i, p) in n.parents.iter().enumerate() {
            g.add_edge(p.0, n.id.0);
            for q in &n.parents[i + 1..] {
                g.add_edge(p.0, q.0);
            }
        }
    }
    g
}

/// `true` for continuous variables, indexed by id.
pub fn continuous_marks(net: &BayesNet) -> Vec<bool> {
    net.nodes().iter().map(|n| n.kind.is_continuous()).collect()
}

fn fill_count(adj: &[BTreeSet<usize>], eliminated: &[bool], v: usize) -> usize {
    let ns: Vec<usize> = adj[v].iter().copied().filter(|&u| !eliminated[u]).collect();
    let mut fill = 0;
    for (i, &a) in ns.iter().enumerate() {
        for &b in &ns[i + 1..] {
            if !adj[a].contains(&b) {
                fill += 1;
            }
        }
    }
    fill
}

fn eliminate(adj: &mut [BTreeSet<usize>], eliminated: &mut [bool], v: usize) -> Vec<(usize, usize)> {
    let ns: Vec<usize> = adj[v].iter().copied().filter(|&u| !eliminated[u]).collect();
    let mut fills = Vec::new();
    for (i, &a) in ns.iter().enumerate() {
        for &b in &ns[i + 1..] {
            if adj[a].insert(b) {
                adj[b].insert(a);
                fills.push((a.min(b), a.max(b)));
            }
        }
    }
    eliminated[v] = true;
    fills
}

/// Greedy min-fill order that eliminates every continuous vertex before any
/// discrete one. Ties go to the smaller id.
pub fn elimination_order(g: &UGraph, continuous: &[bool]) -> Vec<usize> {
    let n = g.len();
    let mut adj = g.adj.clone();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for class in [true, false] {
        loop {
            let best = (0..n)
                .filter(|&v| !eliminated[v] && continuous[v] == class)
                .min_by_key(|&v| (fill_count(&adj, &eliminated, v), v));
            match best {
                Some(v) => {
                    eliminate(&mut adj, &mut eliminated, v);
                    order.push(v);
                }
                None => break,
            }
        }
    }
    order
}

/// Eliminates vertices in `order`, returning the filled-in graph and the
/// added edges.
pub fn triangulate(g: &UGraph, order: &[usize]) -> (UGraph, Vec<(usize, usize)>) {
    let mut adj = g.adj.clone();
    let mut eliminated = vec![false; g.len()];
    let mut fills = Vec::new();
    for &v in order {
        fills.extend(eliminate(&mut adj, &mut eliminated, v));
    }
    fills.sort_unstable();
    let mut out = g.clone();
    for &(a, b) in &fills {
        out.add_edge(a, b);
    }
    (out, fills)
}

/// Maximum cardinality search; the reverse of the visit order is a perfect
/// elimination ordering exactly when the graph is chordal.
fn mcs_elimination_order(g: &UGraph) -> Vec<usize> {
    let n = g.len();
    let mut weight = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut visit = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !visited[v])
            .max_by_key(|&v| (weight[v], std::cmp::Reverse(v)))
            .unwrap();
        visited[v] = true;
        visit.push(v);
        for &u in g.neighbors(v) {
            if !visited[u] {
                weight[u] += 1;
            }
        }
    }
    visit.reverse();
    visit
}

pub fn is_chordal(g: &UGraph) -> bool {
    let order = mcs_elimination_order(g);
    triangulate(g, &order).1.is_empty()
}

/// Maximal cliques of a chordal graph, each sorted, listed in lexicographic
/// order.
pub fn max_cliques(g: &UGraph) -> Result<Vec<Vec<usize>>> {
    let order = mcs_elimination_order(g);
    let mut pos = vec![0; g.len()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for &v in &order {
        let later: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| pos[u] > pos[v]).collect();
        for (i, &a) in later.iter().enumerate() {
            for &b in &later[i + 1..] {
                if !g.has_edge(a, b) {
                    return Err(Error::Graph(format!("graph is not chordal (vertices {a} and {b} around {v})")));
                }
            }
        }
        let mut c = later;
        c.push(v);
        c.sort_unstable();
        candidates.push(c);
    }
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for c in &candidates {
        let subsumed = candidates
            .iter()
            .any(|d| d.len() > c.len() && c.iter().all(|x| d.binary_search(x).is_ok()));
        if !subsumed && !cliques.contains(c) {
            cliques.push(c.clone());
        }
    }
    cliques.sort();
    Ok(cliques)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub separator: Vec<VarId>,
}

impl TreeEdge {
    pub fn other(&self, c: usize) -> usize {
        if c == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JunctionTree {
    pub cliques: Vec<Vec<VarId>>,
    pub edges: Vec<TreeEdge>,
    /// `(parent clique, edge index)` for every non-root clique.
    pub parent: Vec<Option<(usize, usize)>>,
    /// One root per connected component.
    pub roots: Vec<usize>,
    /// Per clique: whether it would be a strong root of its component.
    pub strong_roots: Vec<bool>,
    /// Whether every chosen root is strong.
    pub strong: bool,
}

fn is_subset(a: &[VarId], b: &[VarId]) -> bool {
    a.iter().all(|x| b.contains(x))
}

impl JunctionTree {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn neighbors(&self, c: usize) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.a == c || e.b == c)
            .map(|(i, e)| (e.other(c), i))
            .collect()
    }

    pub fn children(&self, c: usize) -> Vec<(usize, usize)> {
        (0..self.len())
            .filter_map(|k| match self.parent[k] {
                Some((p, e)) if p == c => Some((k, e)),
                _ => None,
            })
            .collect()
    }

    /// Parents before children, component by component.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for &r in &self.roots {
            let mut stack = vec![r];
            while let Some(c) = stack.pop() {
                out.push(c);
                let mut kids: Vec<usize> = self.children(c).into_iter().map(|(k, _)| k).collect();
                kids.reverse();
                stack.extend(kids);
            }
        }
        out
    }

    /// Children before parents.
    pub fn postorder(&self) -> Vec<usize> {
        let mut out = self.preorder();
        out.reverse();
        out
    }

    /// Smallest clique containing every variable in `vars` (lowest index on ties).
    pub fn containing(&self, vars: &[VarId]) -> Option<usize> {
        (0..self.len())
            .filter(|&c| is_subset(vars, &self.cliques[c]))
            .min_by_key(|&c| (self.cliques[c].len(), c))
    }

    /// Cliques that are strong roots: rooted there, every edge with `V`
    /// farther from the root than `W` has `V \ W` all continuous or
    /// `V ∩ W` all discrete.
    pub fn check_strong_roots(&self, continuous: &[bool]) -> Vec<bool> {
        (0..self.len())
            .map(|r| {
                let orient = orient_from(self, r);
                orient.iter().all(|&(v, w)| {
                    let vc = &self.cliques[v];
                    let wc = &self.cliques[w];
                    let outside_cont = vc.iter().filter(|x| !wc.contains(x)).all(|x| continuous[x.0]);
                    let sep_disc = vc.iter().filter(|x| wc.contains(x)).all(|x| !continuous[x.0]);
                    outside_cont || sep_disc
                })
            })
            .collect()
    }

    /// Running-intersection property: the cliques holding any variable form
    /// a connected subtree.
    pub fn has_running_intersection(&self) -> bool {
        let vars: BTreeSet<VarId> = self.cliques.iter().flatten().copied().collect();
        vars.iter().all(|v| {
            let holders: Vec<usize> = (0..self.len()).filter(|&c| self.cliques[c].contains(v)).collect();
            let mut seen = vec![holders[0]];
            let mut frontier = vec![holders[0]];
            while let Some(c) = frontier.pop() {
                for (n, _) in self.neighbors(c) {
                    if self.cliques[n].contains(v) && !seen.contains(&n) {
                        seen.push(n);
                        frontier.push(n);
                    }
                }
            }
            seen.len() == holders.len()
        })
    }
}

/// Edges `(farther, nearer)` of the component containing `root`.
fn orient_from(jt: &JunctionTree, root: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut seen = vec![false; jt.len()];
    seen[root] = true;
    let mut stack = vec![root];
    while let Some(c) = stack.pop() {
        for (n, _) in jt.neighbors(c) {
            if !seen[n] {
                seen[n] = true;
                out.push((n, c));
                stack.push(n);
            }
        }
    }
    out
}

fn component_of(jt: &JunctionTree, root: usize) -> Vec<usize> {
    let mut comp = vec![root];
    comp.extend(orient_from(jt, root).into_iter().map(|(v, _)| v));
    comp.sort_unstable();
    comp
}

/// Maximum-weight spanning forest over clique intersections (Kruskal, ties
/// broken by lexicographic clique pair), rooted at a strong root of each
/// component when one exists and at its lowest-index clique otherwise.
pub fn build_jtree(cliques: Vec<Vec<VarId>>, continuous: &[bool]) -> JunctionTree {
    let n = cliques.len();
    let mut candidates = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let sep: Vec<VarId> = cliques[i].iter().copied().filter(|x| cliques[j].contains(x)).collect();
            if !sep.is_empty() {
                candidates.push((sep.len(), i, j, sep));
            }
        }
    }
    candidates.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while uf[r] != r {
            r = uf[r];
        }
        let mut y = x;
        while uf[y] != r {
            let next = uf[y];
            uf[y] = r;
            y = next;
        }
        r
    }
    let mut edges = Vec::new();
    for (_, i, j, sep) in candidates {
        let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
        if ri != rj {
            uf[ri] = rj;
            edges.push(TreeEdge { a: i, b: j, separator: sep });
        }
    }
    let mut jt = JunctionTree {
        cliques,
        edges,
        parent: vec![None; n],
        roots: Vec::new(),
        strong_roots: Vec::new(),
        strong: true,
    };
    jt.strong_roots = jt.check_strong_roots(continuous);
    let mut assigned = vec![false; n];
    for c in 0..n {
        if assigned[c] {
            continue;
        }
        let comp = component_of(&jt, c);
        let root = match comp.iter().copied().find(|&k| jt.strong_roots[k]) {
            Some(r) => r,
            None => {
                jt.strong = false;
                comp[0]
            }
        };
        for &k in &comp {
            assigned[k] = true;
        }
        jt.roots.push(root);
    }
    for r in jt.roots.clone() {
        for (v, w) in orient_from(&jt, r) {
            let e = jt.edges.iter().position(|e| (e.a == v && e.b == w) || (e.a == w && e.b == v)).unwrap();
            jt.parent[v] = Some((w, e));
        }
    }
    jt
}

/// Every artifact of the graph pipeline for one network.
#[derive(Clone, Debug)]
pub struct Structure {
    pub moral: UGraph,
    pub order: Vec<usize>,
    pub triangulated: UGraph,
    pub fill: Vec<(usize, usize)>,
    pub jtree: JunctionTree,
    pub continuous: Vec<bool>,
}

impl Structure {
    pub fn build(net: &BayesNet) -> Result<Self> {
        let moral = moralize(net);
        let continuous = continuous_marks(net);
        let order = elimination_order(&moral, &continuous);
        let (triangulated, fill) = triangulate(&moral, &order);
        if !is_chordal(&triangulated) {
            return Err(Error::Graph("triangulation left a chordless cycle".into()));
        }
        let cliques = max_cliques(&triangulated)?
            .into_iter()
            .map(|c| c.into_iter().map(VarId).collect())
            .collect();
        let jtree = build_jtree(cliques, &continuous);
        for id in net.ids() {
            if jtree.containing(&net.family(id)).is_none() {
                return Err(Error::Graph(format!("no clique holds the family of '{}'", net.name(id))));
            }
        }
        if !jtree.strong {
            log::warn!("junction tree has no strong root; collect-phase marginals may be approximate");
        }
        Ok(Structure {
            moral,
            order,
            triangulated,
            fill,
            jtree,
            continuous,
        })
    }

    /// Plain-text dump: one `moral a b` / `fill a b` line per edge, then the
    /// elimination order, cliques, tree edges and root.
    pub fn dump(&self, net: &BayesNet) -> String {
        let name = |v: usize| net.name(VarId(v)).to_string();
        let set = |c: &[VarId]| c.iter().map(|v| net.name(*v)).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        for (a, b) in self.moral.edges() {
            writeln!(out, "moral {} {}", name(a), name(b)).unwrap();
        }
        for &(a, b) in &self.fill {
            writeln!(out, "fill {} {}", name(a), name(b)).unwrap();
        }
        let order: Vec<String> = self.order.iter().map(|&v| name(v)).collect();
        writeln!(out, "order {}", order.join(" ")).unwrap();
        for (i, c) in self.jtree.cliques.iter().enumerate() {
            let tag = if self.jtree.strong_roots[i] { " strong" } else { "" };
            writeln!(out, "clique {i} {}{tag}", set(c)).unwrap();
        }
        for e in &self.jtree.edges {
            writeln!(out, "edge {} {} sep {}", e.a, e.b, set(&e.separator)).unwrap();
        }
        for &r in &self.jtree.roots {
            writeln!(out, "root {r}").unwrap();
        }
        out
    }
}

/// Cost proxy summed over cliques: product of hidden discrete cardinalities
/// times the cube of the hidden continuous dimension (1 when there is none).
pub fn estimate_cost(jt: &JunctionTree, net: &BayesNet, hidden: impl Fn(VarId) -> bool) -> f64 {
    jt.cliques
        .iter()
        .map(|c| {
            let disc: f64 = c
                .iter()
                .filter(|v| hidden(**v) && net.kind(**v).is_discrete())
                .map(|v| net.kind(*v).size() as f64)
                .product();
            let dim: usize = c
                .iter()
                .filter(|v| hidden(**v) && net.kind(**v).is_continuous())
                .map(|v| net.kind(*v).size())
                .sum();
            let cont = if dim == 0 { 1.0 } else { (dim as f64).powi(3) };
            disc * cont
        })
        .sum()
}
