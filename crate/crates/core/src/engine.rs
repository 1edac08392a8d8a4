//! Junction-tree propagation with the variational logistic bound, iterated
//! over the variational parameters until the evidence bound settles.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::cg::{decode, CgPotential, DiscVar};
use crate::cpd::{compile_family, needs_variational, sigmoid, Cpd, LogisticParams, XiStore};
use crate::error::{Error, Result};
use crate::evidence::Evidence;
use crate::gaussian::{ContVar, MomentGaussian, VarId};
use crate::graph::Structure;
use crate::network::{BayesNet, NodeKind};
use crate::report::{Marginal, PosteriorReport};

/// Variance given to a hidden continuous node by the initial walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum XiInit {
    /// Parent covariance pushed through the regression weights plus the
    /// node's own noise.
    #[default]
    Ancestral,
    /// Only the node's own noise; parents act as constants at their means.
    OwnNoise,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub init: XiInit,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tol: 1e-3,
            max_iter: 50,
            init: XiInit::Ancestral,
        }
    }
}

/// Potentials of one propagation round.
#[derive(Clone, Debug)]
pub struct EngineState {
    pub evidence: Evidence,
    pub cliques: Vec<CgPotential>,
    pub separators: Vec<CgPotential>,
    pub xi: XiStore,
    pub loglik_trace: Vec<f64>,
    pub propagated: bool,
    /// Set when some clique has no supported configuration.
    pub impossible: bool,
}

/// Outcome of [`Engine::run`].
#[derive(Clone, Debug)]
pub struct EngineRun {
    pub state: EngineState,
    pub report: PosteriorReport,
    pub iterations: usize,
    pub converged: bool,
    /// Whether any logistic factor went through the variational bound.
    pub variational: bool,
}

impl EngineRun {
    pub fn loglik_trace(&self) -> &[f64] {
        &self.state.loglik_trace
    }
}

/// A compiled junction tree for one network, reusable across evidence sets.
#[derive(Clone, Debug)]
pub struct Engine<'a> {
    net: &'a BayesNet,
    structure: Structure,
    /// Clique receiving each node's family, indexed by node id.
    home: Vec<usize>,
}

fn ctx(context: String) -> impl FnOnce(Error) -> Error {
    move |e| e.in_context(context)
}

impl<'a> Engine<'a> {
    pub fn new(net: &'a BayesNet) -> Result<Self> {
        let structure = Structure::build(net)?;
        let home = net
            .ids()
            .map(|id| structure.jtree.containing(&net.family(id)).expect("family coverage checked on build"))
            .collect();
        Ok(Engine { net, structure, home })
    }

    pub fn net(&self) -> &BayesNet {
        self.net
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// Clique index the family of `id` is multiplied into.
    pub fn home_clique(&self, id: VarId) -> usize {
        self.home[id.0]
    }

    fn hidden_scope(&self, vars: &[VarId], ev: &Evidence) -> (Vec<DiscVar>, Vec<ContVar>) {
        let mut d = Vec::new();
        let mut c = Vec::new();
        for &v in vars.iter().filter(|v| !ev.is_observed(**v)) {
            match self.net.kind(v) {
                NodeKind::Discrete { card } => d.push(DiscVar::new(v, card)),
                NodeKind::Continuous { dim } => c.push(ContVar::new(v, dim)),
            }
        }
        (d, c)
    }

    fn hidden_ids(&self, vars: &[VarId], ev: &Evidence) -> Vec<VarId> {
        vars.iter().copied().filter(|v| !ev.is_observed(*v)).collect()
    }

    /// One deterministic walk in topological order: observed nodes take
    /// their values, hidden discrete nodes their most probable state given
    /// what is already assigned, and hidden continuous nodes the moments of
    /// the selected regression row. Each logistic node that needs the bound
    /// gets `xi² = E[(w'x + b)²]` under those moments, for every row.
    pub fn initialize_xi(&self, ev: &Evidence, mode: XiInit) -> XiStore {
        let net = self.net;
        let mut offsets = vec![usize::MAX; net.len()];
        let mut n = 0;
        for id in net.ids() {
            if let NodeKind::Continuous { dim } = net.kind(id) {
                offsets[id.0] = n;
                n += dim;
            }
        }
        let range = |id: VarId| -> Vec<usize> { (offsets[id.0]..offsets[id.0] + net.kind(id).size()).collect() };
        let stack = |ids: &[VarId]| -> Vec<usize> { ids.iter().flat_map(|p| range(*p)).collect() };
        let mut mean = DVector::<f64>::zeros(n);
        let mut cov = DMatrix::<f64>::zeros(n, n);
        let mut state = vec![0usize; net.len()];
        let mut xi = XiStore::new();

        for &id in net.topological_order() {
            let node = net.node(id);
            let row = net.parent_config_index(id, |p| state[p.0]);
            let cparents = net.continuous_parents(id);
            let pidx = stack(&cparents);
            let pmean = DVector::from_iterator(pidx.len(), pidx.iter().map(|&i| mean[i]));
            let pcov = DMatrix::from_fn(pidx.len(), pidx.len(), |r, c| cov[(pidx[r], pidx[c])]);

            if let Cpd::Logistic(lc) = &node.cpd {
                if needs_variational(net, id, ev) {
                    for (k, params) in lc.configs.iter().enumerate() {
                        xi.set(id, k, expected_square(params, &pmean, &pcov).sqrt());
                    }
                }
            }

            match (&node.cpd, net.kind(id)) {
                (_, NodeKind::Discrete { .. }) => {
                    state[id.0] = match ev.discrete(id) {
                        Some(v) => v,
                        None => match &node.cpd {
                            Cpd::Tabular(t) => argmax(&t.rows[row]),
                            Cpd::Logistic(lc) => usize::from(sigmoid(lc.configs[row].eta(&pmean)) > 0.5),
                            Cpd::LinearGaussian(_) => unreachable!("validated: discrete nodes never carry a linear-Gaussian CPD"),
                        },
                    };
                }
                (Cpd::LinearGaussian(lg), NodeKind::Continuous { .. }) => {
                    let own = range(id);
                    if let Some(v) = ev.continuous(id) {
                        for (k, &i) in own.iter().enumerate() {
                            mean[i] = v[k];
                        }
                        continue;
                    }
                    let p = &lg.configs[row];
                    let mu = &p.mean + &p.weights * &pmean;
                    for (k, &i) in own.iter().enumerate() {
                        mean[i] = mu[k];
                    }
                    let mut own_cov = p.cov.clone();
                    if mode == XiInit::Ancestral && !pidx.is_empty() {
                        own_cov += &p.weights * &pcov * p.weights.transpose();
                        // cross-covariance with everything assigned so far
                        let cross_rows = DMatrix::from_fn(pidx.len(), n, |r, c| cov[(pidx[r], c)]);
                        let cross = &p.weights * cross_rows;
                        for (k, &i) in own.iter().enumerate() {
                            for j in 0..n {
                                if !own.contains(&j) {
                                    cov[(i, j)] = cross[(k, j)];
                                    cov[(j, i)] = cross[(k, j)];
                                }
                            }
                        }
                    }
                    for (a, &i) in own.iter().enumerate() {
                        for (b, &j) in own.iter().enumerate() {
                            cov[(i, j)] = own_cov[(a, b)];
                        }
                    }
                }
                _ => unreachable!("validated: continuous nodes carry linear-Gaussian CPDs"),
            }
        }
        xi
    }

    /// Fresh clique potentials: each family compiled over its hidden members
    /// and multiplied into its home clique; other cliques hold identities.
    pub fn assign_and_initialize(&self, ev: &Evidence, xi: &XiStore) -> Result<EngineState> {
        let jt = &self.structure.jtree;
        let mut cliques: Vec<CgPotential> = jt
            .cliques
            .iter()
            .map(|c| {
                let (d, k) = self.hidden_scope(c, ev);
                CgPotential::identity(&d, &k)
            })
            .collect();
        for id in self.net.ids() {
            let c = self.home[id.0];
            let f = compile_family(self.net, id, ev, xi).map_err(ctx(format!("compiling '{}'", self.net.name(id))))?;
            cliques[c] = cliques[c]
                .multiply(&f)
                .map_err(ctx(format!("assigning '{}' to clique {c}", self.net.name(id))))?;
        }
        let separators = jt
            .edges
            .iter()
            .map(|e| {
                let (d, k) = self.hidden_scope(&e.separator, ev);
                CgPotential::identity(&d, &k)
            })
            .collect();
        let impossible = cliques.iter().any(|c| !c.has_support());
        Ok(EngineState {
            evidence: ev.clone(),
            cliques,
            separators,
            xi: xi.clone(),
            loglik_trace: Vec::new(),
            propagated: false,
            impossible,
        })
    }

    /// Collect toward the roots, then distribute back out.
    pub fn propagate(&self, state: &mut EngineState) -> Result<()> {
        let jt = &self.structure.jtree;
        if state.impossible {
            state.propagated = true;
            return Ok(());
        }
        for c in jt.postorder() {
            let Some((p, e)) = jt.parent[c] else { continue };
            let keep = self.hidden_ids(&jt.edges[e].separator, &state.evidence);
            let msg = state.cliques[c]
                .marginalize_to(&keep)
                .map_err(ctx(format!("collect message from clique {c} to clique {p}")))?;
            state.cliques[p] = state.cliques[p]
                .multiply(&msg)
                .map_err(ctx(format!("absorbing into clique {p}")))?;
            state.separators[e] = msg;
        }
        for c in jt.preorder() {
            let Some((p, e)) = jt.parent[c] else { continue };
            let keep = self.hidden_ids(&jt.edges[e].separator, &state.evidence);
            let msg = state.cliques[p]
                .marginalize_to(&keep)
                .map_err(ctx(format!("distribute message from clique {p} to clique {c}")))?;
            let update = msg
                .divide(&state.separators[e])
                .map_err(ctx(format!("separator update on edge {e}")))?;
            state.cliques[c] = state.cliques[c]
                .multiply(&update)
                .map_err(ctx(format!("absorbing into clique {c}")))?;
            state.separators[e] = msg;
        }
        state.propagated = true;
        Ok(())
    }

    /// Log total mass summed over component roots; `-inf` for impossible
    /// evidence.
    pub fn log_evidence_bound(&self, state: &EngineState) -> Result<f64> {
        if state.impossible {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total = 0.0;
        for &r in &self.structure.jtree.roots {
            total += state.cliques[r].log_mass().map_err(ctx(format!("root clique {r} mass")))?;
        }
        Ok(total)
    }

    /// `xi² = E[(w'x + b)²]` under the posterior of the continuous parents,
    /// per regression row (conditioned on that discrete-parent configuration
    /// when those parents are hidden). Rows ruled out by evidence keep their
    /// previous value.
    pub fn update_xi(&self, state: &EngineState) -> Result<XiStore> {
        let net = self.net;
        let ev = &state.evidence;
        let mut out = state.xi.clone();
        for id in net.ids() {
            let Cpd::Logistic(lc) = &net.node(id).cpd else { continue };
            if !needs_variational(net, id, ev) {
                continue;
            }
            let dparents = net.discrete_parents(id);
            let cparents = net.continuous_parents(id);
            let hidden_d = self.hidden_ids(&dparents, ev);
            let hidden_c = self.hidden_ids(&cparents, ev);
            let clique = self.home[id.0];
            let marg = state.cliques[clique]
                .marginalize(&hidden_d, &hidden_c)
                .map_err(ctx(format!("parent posterior of '{}'", net.name(id))))?;
            let layout = net.parent_config_vars(id);
            for (row, params) in lc.configs.iter().enumerate() {
                let vals = decode(&layout, row);
                if dparents
                    .iter()
                    .zip(&vals)
                    .any(|(p, v)| ev.discrete(*p).is_some_and(|o| o != *v))
                {
                    continue;
                }
                let fixed: Vec<(VarId, usize)> = dparents
                    .iter()
                    .zip(&vals)
                    .filter(|(p, _)| !ev.is_observed(**p))
                    .map(|(p, v)| (*p, *v))
                    .collect();
                let slice = marg.slice(&fixed)?;
                let entry = &slice.entries()[0];
                if !entry.chi {
                    continue;
                }
                let m = entry
                    .gauss
                    .to_moment()
                    .map_err(ctx(format!("parent posterior of '{}' row {row}", net.name(id))))?;
                let (mu, sigma) = stacked_parent_moments(net, &cparents, ev, &m);
                out.set(id, row, expected_square(params, &mu, &sigma).sqrt());
            }
        }
        Ok(out)
    }

    /// Posterior of one hidden node from the smallest clique holding it.
    pub fn marginal(&self, state: &EngineState, id: VarId) -> Result<Marginal> {
        if state.impossible {
            return Err(Error::ZeroSupport);
        }
        if state.evidence.is_observed(id) {
            return Err(Error::Evidence(format!("'{}' is observed", self.net.name(id))));
        }
        let c = self.structure.jtree.containing(&[id]).ok_or(Error::NotInScope(id))?;
        let pot = state.cliques[c]
            .marginalize_to(&[id])
            .map_err(ctx(format!("marginal of '{}'", self.net.name(id))))?;
        let moments = pot.moments()?;
        Ok(match self.net.kind(id) {
            NodeKind::Discrete { .. } => Marginal::Discrete(moments.iter().map(|m| m.weight).collect()),
            NodeKind::Continuous { .. } => Marginal::Continuous {
                mean: moments[0].mu.clone(),
                cov: moments[0].sigma.clone(),
            },
        })
    }

    pub fn report(&self, state: &EngineState) -> Result<PosteriorReport> {
        let log_evidence = self.log_evidence_bound(state)?;
        let mut marginals = BTreeMap::new();
        if log_evidence > f64::NEG_INFINITY {
            for id in self.net.ids().filter(|id| !state.evidence.is_observed(*id)) {
                marginals.insert(id, self.marginal(state, id)?);
            }
        }
        Ok(PosteriorReport {
            marginals,
            log_evidence,
        })
    }

    /// Largest disagreement, in moment form, between the separator marginals
    /// computed from the two cliques on each tree edge.
    pub fn consistency_error(&self, state: &EngineState) -> Result<f64> {
        let jt = &self.structure.jtree;
        let mut worst: f64 = 0.0;
        for e in &jt.edges {
            let keep = self.hidden_ids(&e.separator, &state.evidence);
            let a = state.cliques[e.a].marginalize_to(&keep)?.moments()?;
            let b = state.cliques[e.b].marginalize_to(&keep)?.moments()?;
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x.weight - y.weight).abs());
                if x.weight > 0.0 && y.weight > 0.0 {
                    worst = worst.max((&x.mu - &y.mu).amax()).max((&x.sigma - &y.sigma).amax());
                }
            }
        }
        Ok(worst)
    }

    /// Initializes `xi`, then alternates propagation and `xi` updates until
    /// the relative change of the evidence bound drops below `tol`. With no
    /// variational factor the loop runs once and the result is exact. On
    /// hitting `max_iter` the best iterate is returned with `converged`
    /// unset.
    pub fn run(&self, ev: &Evidence, cfg: &EngineConfig) -> Result<EngineRun> {
        let variational = self.net.ids().any(|id| needs_variational(self.net, id, ev));
        let mut xi = self.initialize_xi(ev, cfg.init);
        let mut trace = Vec::new();
        let mut best: Option<(f64, EngineState)> = None;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.max_iter.max(1) {
            iterations += 1;
            let mut state = self.assign_and_initialize(ev, &xi)?;
            self.propagate(&mut state)?;
            let ll = self.log_evidence_bound(&state)?;
            let prev = trace.last().copied();
            trace.push(ll);
            let next_xi = if variational && ll > f64::NEG_INFINITY {
                Some(self.update_xi(&state)?)
            } else {
                None
            };
            if best.as_ref().is_none_or(|(b, _)| ll >= *b) {
                best = Some((ll, state));
            }
            let settled = match prev {
                Some(p) => (ll - p).abs() / ll.abs().max(1.0) < cfg.tol,
                None => false,
            };
            match next_xi {
                Some(next) if !settled => xi = next,
                _ => {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            log::warn!("variational loop stopped at max_iter = {} before reaching tol = {}", cfg.max_iter, cfg.tol);
        }
        let (_, mut state) = best.expect("at least one iteration ran");
        state.loglik_trace = trace;
        let report = self.report(&state)?;
        Ok(EngineRun {
            state,
            report,
            iterations,
            converged,
            variational,
        })
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// `E[(w'x + b)²] = w'(Σ + μμ')w + 2b w'μ + b²`.
pub fn expected_square(params: &LogisticParams, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let w = &params.weights;
    let b = params.bias;
    let wm = w.dot(mu);
    (w.transpose() * sigma * w)[(0, 0)] + wm * wm + 2.0 * b * wm + b * b
}

/// Mean and covariance of the stacked continuous parents, with observed
/// parents at their values and zero variance.
fn stacked_parent_moments(
    net: &BayesNet,
    cparents: &[VarId],
    ev: &Evidence,
    hidden: &MomentGaussian,
) -> (DVector<f64>, DMatrix<f64>) {
    let n: usize = cparents.iter().map(|p| net.kind(*p).size()).sum();
    let mut mu = DVector::zeros(n);
    let mut sigma = DMatrix::zeros(n, n);
    // (position in the stack, position in the moment form) per component
    let mut map = Vec::new();
    let mut offset = 0;
    for &p in cparents {
        let dim = net.kind(p).size();
        match ev.continuous(p) {
            Some(v) => mu.rows_mut(offset, dim).copy_from(v),
            None => {
                let mut src = 0;
                for v in &hidden.scope {
                    if v.id == p {
                        break;
                    }
                    src += v.dim;
                }
                map.extend((0..dim).map(|k| (offset + k, src + k)));
            }
        }
        offset += dim;
    }
    for &(i, a) in &map {
        mu[i] = hidden.mu[a];
        for &(j, b) in &map {
            sigma[(i, j)] = hidden.sigma[(a, b)];
        }
    }
    (mu, sigma)
}
