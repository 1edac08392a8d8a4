//! Conditional probability distributions and their compilation into
//! potentials over the hidden members of a family.
//!
//! Compilation happens after the evidence is known: observed parents and
//! children are substituted into the CPD, so the resulting potential only
//! spans hidden variables. A logistic node whose continuous parents are all
//! observed becomes an exact table; otherwise its CPD is replaced by the
//! quadratic lower bound on the sigmoid, which is Gaussian in the parents.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::cg::{CgPotential, Config, DiscVar};
use crate::error::{Error, Result};
use crate::evidence::Evidence;
use crate::gaussian::{CanonicalGaussian, ContVar, SpdFactor, VarId, DEFAULT_MIN_RCOND};
use crate::network::{BayesNet, Node, NodeKind};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const ROW_SUM_TOL: f64 = 1e-12;

/// Conditional probability table, one row per discrete-parent configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularCpd {
    pub rows: Vec<Vec<f64>>,
}

/// `y | x, q ~ N(mean_q + weights_q x, cov_q)` where `x` stacks the
/// continuous parents in listed order.
#[derive(Clone, Debug, PartialEq)]
pub struct LgParams {
    pub mean: DVector<f64>,
    pub weights: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianCpd {
    pub configs: Vec<LgParams>,
}

/// `Pr(r = 1 | x) = sigmoid(weights'x + bias)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticParams {
    pub weights: DVector<f64>,
    pub bias: f64,
}

impl LogisticParams {
    pub fn new(weights: &[f64], bias: f64) -> Self {
        LogisticParams {
            weights: DVector::from_row_slice(weights),
            bias,
        }
    }

    pub fn eta(&self, x: &DVector<f64>) -> f64 {
        self.weights.dot(x) + self.bias
    }

    /// Signed activation `(2r - 1)(w'x + b)`.
    pub fn activation(&self, x: &DVector<f64>, r: usize) -> f64 {
        sign(r) * self.eta(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticCpd {
    pub configs: Vec<LogisticParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cpd {
    Tabular(TabularCpd),
    LinearGaussian(LinearGaussianCpd),
    Logistic(LogisticCpd),
}

impl Cpd {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Cpd::Tabular(_) => "cpt",
            Cpd::LinearGaussian(_) => "linear_gaussian",
            Cpd::Logistic(_) => "logistic",
        }
    }

    pub(crate) fn validate(&self, net: &BayesNet, node: &Node) -> Result<()> {
        let name = &node.name;
        let bad = |msg: String| Err(Error::Network(format!("node '{name}': {msg}")));
        let rows = net.parent_config_count(node.id);
        let m = net.continuous_parent_dim(node.id);
        match (self, node.kind) {
            (Cpd::Tabular(t), NodeKind::Discrete { card }) => {
                if m > 0 {
                    return bad("a discrete node with continuous parents needs a logistic CPD".into());
                }
                if t.rows.len() != rows {
                    return bad(format!("cpt has {} rows, expected {rows}", t.rows.len()));
                }
                for (i, row) in t.rows.iter().enumerate() {
                    if row.len() != card {
                        return bad(format!("cpt row {i} has {} entries, expected {card}", row.len()));
                    }
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return bad(format!("cpt row {i} has a negative or non-finite entry"));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_SUM_TOL {
                        return bad(format!("cpt row {i} sums to {s}, expected 1"));
                    }
                }
            }
            (Cpd::LinearGaussian(lg), NodeKind::Continuous { dim }) => {
                if lg.configs.len() != rows {
                    return bad(format!("linear_gaussian has {} configurations, expected {rows}", lg.configs.len()));
                }
                for (i, c) in lg.configs.iter().enumerate() {
                    if c.mean.len() != dim {
                        return bad(format!("configuration {i}: mean has length {}, expected {dim}", c.mean.len()));
                    }
                    if c.weights.nrows() != dim || c.weights.ncols() != m {
                        return bad(format!(
                            "configuration {i}: weights are {}x{}, expected {dim}x{m}",
                            c.weights.nrows(),
                            c.weights.ncols()
                        ));
                    }
                    if c.cov.nrows() != dim || c.cov.ncols() != dim {
                        return bad(format!("configuration {i}: covariance must be {dim}x{dim}"));
                    }
                    if c.mean.iter().chain(c.weights.iter()).chain(c.cov.iter()).any(|x| !x.is_finite()) {
                        return bad(format!("configuration {i}: non-finite parameter"));
                    }
                    let asym = (&c.cov - c.cov.transpose()).amax();
                    if asym > 1e-12 * c.cov.amax().max(1.0) {
                        return bad(format!("configuration {i}: covariance is not symmetric"));
                    }
                    if SpdFactor::new(&c.cov, DEFAULT_MIN_RCOND).is_err() {
                        return bad(format!("configuration {i}: covariance is not positive definite"));
                    }
                }
            }
            (Cpd::Logistic(lc), NodeKind::Discrete { card }) => {
                if card != 2 {
                    return bad(format!(
                        "logistic CPDs support binary children only (cardinality {card}); encode larger state spaces with several binary nodes"
                    ));
                }
                if lc.configs.len() != rows {
                    return bad(format!("logistic has {} configurations, expected {rows}", lc.configs.len()));
                }
                for (i, c) in lc.configs.iter().enumerate() {
                    if c.weights.len() != m {
                        return bad(format!("configuration {i}: {} weights, expected {m}", c.weights.len()));
                    }
                    if !c.bias.is_finite() || c.weights.iter().any(|x| !x.is_finite()) {
                        return bad(format!("configuration {i}: non-finite parameter"));
                    }
                }
            }
            (cpd, kind) => {
                return bad(format!(
                    "{} CPD cannot be attached to a {} node",
                    cpd.kind_name(),
                    if kind.is_discrete() { "discrete" } else { "continuous" }
                ))
            }
        }
        Ok(())
    }
}

fn sign(r: usize) -> f64 {
    if r == 1 {
        1.0
    } else {
        -1.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// `(1/2 - sigmoid(xi)) / (2 xi)`, continuous at zero with value -1/8.
pub fn lambda(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi < 1e-4 {
        -0.125 * (1.0 - xi * xi / 12.0)
    } else {
        -(0.5 * xi).tanh() / (4.0 * xi)
    }
}

/// The tangent slope `tanh(xi/2) / (4 xi)`; equals `-lambda(xi)`.
pub fn lambda_bar(xi: f64) -> f64 {
    -lambda(xi)
}

/// Log of the quadratic lower bound on `Pr(r | x)`.
pub fn vg_log_bound(params: &LogisticParams, x: &DVector<f64>, r: usize, xi: f64) -> f64 {
    let xi = xi.abs();
    let a = params.activation(x, r);
    log_sigmoid(xi) + 0.5 * (a - xi) + lambda(xi) * (a * a - xi * xi)
}

/// Exact `Pr(r | x)` for an observed parent vector.
pub fn logistic_exact_factor(params: &LogisticParams, x: &DVector<f64>, r: usize) -> f64 {
    sigmoid(params.activation(x, r))
}

pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Upper bound `exp(alpha A - H2(alpha))` on `Pr(r | x)`.
pub fn variational_upper_bound(params: &LogisticParams, x: &DVector<f64>, r: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let a = params.activation(x, r);
    Ok((alpha * a - binary_entropy(alpha)).exp())
}

/// Canonical form of the sigmoid lower bound over the stacked parents.
pub fn vg_potential(params: &LogisticParams, r: usize, xi: f64, stack: &[ContVar]) -> Result<CanonicalGaussian> {
    let xi = xi.abs();
    let lam = lambda(xi);
    let s = sign(r);
    let b = params.bias;
    let w = &params.weights;
    let g = log_sigmoid(xi) + 0.5 * s * b - 0.5 * xi + lam * (b * b - xi * xi);
    let h = w * (0.5 * s + 2.0 * lam * b);
    let k = (w * w.transpose()) * (-2.0 * lam);
    CanonicalGaussian::new(stack.to_vec(), g, h, k)
}

/// Canonical form of `N(y; mean + W x, cov)` over `(x, y)`.
pub fn lg_potential(params: &LgParams, parents: &[ContVar], child: ContVar) -> Result<CanonicalGaussian> {
    let f = SpdFactor::new(&params.cov, DEFAULT_MIN_RCOND)
        .map_err(|rc| Error::NotPositiveDefinite(format!("CPD covariance (rcond {rc:.3e})")))?;
    let prec = f.inverse();
    let n = child.dim;
    let m = params.weights.ncols();
    let w = &params.weights;
    let prec_mu = &prec * &params.mean;
    let wt_prec = w.transpose() * &prec;
    let mut k = DMatrix::zeros(m + n, m + n);
    k.view_mut((0, 0), (m, m)).copy_from(&(&wt_prec * w));
    k.view_mut((0, m), (m, n)).copy_from(&(-&wt_prec));
    k.view_mut((m, 0), (n, m)).copy_from(&(-wt_prec.transpose()));
    k.view_mut((m, m), (n, n)).copy_from(&prec);
    let mut h = DVector::zeros(m + n);
    h.rows_mut(0, m).copy_from(&(-(w.transpose() * &prec_mu)));
    h.rows_mut(m, n).copy_from(&prec_mu);
    let g = -0.5 * params.mean.dot(&prec_mu) - 0.5 * n as f64 * LN_2PI - 0.5 * f.ln_det();
    let mut scope = parents.to_vec();
    scope.push(child);
    CanonicalGaussian::new(scope, g, h, k)
}

/// Variational parameters keyed by (logistic node, CPD configuration row).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct XiStore {
    values: BTreeMap<(VarId, usize), f64>,
}

impl XiStore {
    pub fn new() -> Self {
        XiStore::default()
    }

    /// Stores `|xi|`; the bound is symmetric in the sign.
    pub fn set(&mut self, node: VarId, row: usize, xi: f64) {
        self.values.insert((node, row), xi.abs());
    }

    pub fn get(&self, node: VarId, row: usize) -> Option<f64> {
        self.values.get(&(node, row)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((VarId, usize), f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute change against another store over shared keys.
    pub fn max_change(&self, other: &XiStore) -> f64 {
        self.values
            .iter()
            .filter_map(|(k, v)| other.values.get(k).map(|w| (v - w).abs()))
            .fold(0.0, f64::max)
    }
}

/// True when `id` is a logistic node with at least one hidden continuous
/// parent, i.e. its factor goes through the variational bound.
pub fn needs_variational(net: &BayesNet, id: VarId, ev: &Evidence) -> bool {
    matches!(net.node(id).cpd, Cpd::Logistic(_))
        && net.continuous_parents(id).iter().any(|p| !ev.is_observed(*p))
}

fn hidden_scopes(net: &BayesNet, members: &[VarId], ev: &Evidence) -> (Vec<DiscVar>, Vec<ContVar>) {
    let mut d = Vec::new();
    let mut c = Vec::new();
    for &v in members.iter().filter(|v| !ev.is_observed(**v)) {
        match net.kind(v) {
            NodeKind::Discrete { card } => d.push(DiscVar::new(v, card)),
            NodeKind::Continuous { dim } => c.push(ContVar::new(v, dim)),
        }
    }
    (d, c)
}

fn discrete_value(ev: &Evidence, cfg: &Config<'_>, v: VarId) -> usize {
    ev.discrete(v)
        .or_else(|| cfg.get(v))
        .expect("discrete family member is either observed or in the table scope")
}

fn condition_observed(mut g: CanonicalGaussian, members: &[VarId], ev: &Evidence) -> Result<CanonicalGaussian> {
    for &v in members {
        if let Some(x) = ev.continuous(v) {
            g = g.condition(v, x)?;
        }
    }
    Ok(g)
}

/// Stacked observed values of `parents`; `None` when any is hidden.
fn observed_stack(parents: &[VarId], ev: &Evidence) -> Option<DVector<f64>> {
    let parts: Option<Vec<&DVector<f64>>> = parents.iter().map(|p| ev.continuous(*p)).collect();
    let parts = parts?;
    let values: Vec<f64> = parts.iter().flat_map(|v| v.iter().copied()).collect();
    Some(DVector::from_vec(values))
}

pub fn compile_tabular(net: &BayesNet, id: VarId, cpd: &TabularCpd, ev: &Evidence) -> Result<CgPotential> {
    let family = net.family(id);
    let (dscope, cscope) = hidden_scopes(net, &family, ev);
    CgPotential::from_fn(dscope, cscope, |cfg| {
        let row = net.parent_config_index(id, |p| discrete_value(ev, cfg, p));
        let p = cpd.rows[row][discrete_value(ev, cfg, id)];
        Ok((p > 0.0).then(|| CanonicalGaussian::weight(p.ln())))
    })
}

pub fn compile_linear_gaussian(
    net: &BayesNet,
    id: VarId,
    cpd: &LinearGaussianCpd,
    ev: &Evidence,
) -> Result<CgPotential> {
    let family = net.family(id);
    let (dscope, cscope) = hidden_scopes(net, &family, ev);
    let cparents = net.continuous_parents(id);
    let stack: Vec<ContVar> = cparents.iter().map(|p| net.cont_var(*p)).collect();
    let child = net.cont_var(id);
    let mut cont_members = cparents.clone();
    cont_members.push(id);
    CgPotential::from_fn(dscope, cscope, |cfg| {
        let row = net.parent_config_index(id, |p| discrete_value(ev, cfg, p));
        let g = lg_potential(&cpd.configs[row], &stack, child)?;
        condition_observed(g, &cont_members, ev).map(Some)
    })
}

/// Exact table for a logistic node whose continuous parents are all observed.
pub fn compile_logistic_exact(net: &BayesNet, id: VarId, cpd: &LogisticCpd, ev: &Evidence) -> Result<CgPotential> {
    let cparents = net.continuous_parents(id);
    let x = observed_stack(&cparents, ev)
        .ok_or_else(|| Error::Evidence(format!("'{}' has a hidden continuous parent", net.name(id))))?;
    let mut members = net.discrete_parents(id);
    members.push(id);
    let (dscope, _) = hidden_scopes(net, &members, ev);
    CgPotential::from_fn(dscope, Vec::new(), |cfg| {
        let row = net.parent_config_index(id, |p| discrete_value(ev, cfg, p));
        let r = discrete_value(ev, cfg, id);
        let lp = log_sigmoid(cpd.configs[row].activation(&x, r));
        Ok(Some(CanonicalGaussian::weight(lp)))
    })
}

/// Variational potential for a logistic node with hidden continuous parents.
/// With the child hidden the table carries one bound per child state, both
/// sharing the configuration's `xi`.
pub fn compile_logistic_vg(
    net: &BayesNet,
    id: VarId,
    cpd: &LogisticCpd,
    ev: &Evidence,
    xi: &XiStore,
) -> Result<CgPotential> {
    let family = net.family(id);
    let (dscope, cscope) = hidden_scopes(net, &family, ev);
    let cparents = net.continuous_parents(id);
    let stack: Vec<ContVar> = cparents.iter().map(|p| net.cont_var(*p)).collect();
    CgPotential::from_fn(dscope, cscope, |cfg| {
        let row = net.parent_config_index(id, |p| discrete_value(ev, cfg, p));
        let r = discrete_value(ev, cfg, id);
        let x = xi.get(id, row).ok_or_else(|| {
            Error::Scope(format!("no variational parameter for '{}' configuration {row}", net.name(id)))
        })?;
        let g = vg_potential(&cpd.configs[row], r, x, &stack)?;
        condition_observed(g, &cparents, ev).map(Some)
    })
}

/// Potential of one family over its hidden members, dispatched on CPD kind
/// and on which members are observed.
pub fn compile_family(net: &BayesNet, id: VarId, ev: &Evidence, xi: &XiStore) -> Result<CgPotential> {
    match &net.node(id).cpd {
        Cpd::Tabular(t) => compile_tabular(net, id, t, ev),
        Cpd::LinearGaussian(lg) => compile_linear_gaussian(net, id, lg, ev),
        Cpd::Logistic(lc) if needs_variational(net, id, ev) => compile_logistic_vg(net, id, lc, ev, xi),
        Cpd::Logistic(lc) => compile_logistic_exact(net, id, lc, ev),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn exact_factor_values() {
        let p = LogisticParams::new(&[-1.0], 5.0);
        assert!((logistic_exact_factor(&p, &x1(5.0), 1) - 0.5).abs() < 1e-15);
        let v = logistic_exact_factor(&p, &x1(0.0), 1);
        assert!((v - 0.993_307_149_075_715_3).abs() < 1e-15);
        assert!((v - (1.0 - sigmoid(-5.0))).abs() < 1e-15);
        for (w, b, x) in [(0.3, -1.2, 4.0), (-2.0, 0.1, -0.7), (1.5, 3.0, 2.2)] {
            let p = LogisticParams::new(&[w], b);
            let s = logistic_exact_factor(&p, &x1(x), 0) + logistic_exact_factor(&p, &x1(x), 1);
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_limit_and_tanh_form() {
        assert_eq!(lambda(0.0), -0.125);
        assert!((lambda(1e-5) + 0.125).abs() < 1e-11);
        for i in 0..=500 {
            let xi = 1e-6 + (50.0 - 1e-6) * i as f64 / 500.0;
            let from_sigmoid = (sigmoid(xi) - 0.5) / (2.0 * xi);
            // the difference quotient loses digits near zero
            let tol = if xi < 1e-2 { 1e-9 } else { 1e-12 };
            assert!((lambda_bar(xi) - from_sigmoid).abs() < tol, "xi = {xi}");
        }
    }

    #[test]
    fn bound_tight_at_zero_activation() {
        let p = LogisticParams::new(&[-1.0], 5.0);
        let lb = vg_log_bound(&p, &x1(5.0), 1, 0.0).exp();
        assert!((lb - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bound_tight_at_matching_xi() {
        let p = LogisticParams::new(&[-1.0], 5.0);
        for (x, r) in [(3.0, 1), (7.5, 0), (-2.0, 1)] {
            let a = p.activation(&x1(x), r);
            let lb = vg_log_bound(&p, &x1(x), r, a.abs()).exp();
            assert!((lb - sigmoid(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_matches_bound() {
        let p = LogisticParams::new(&[0.7, -1.3], 0.4);
        let stack = [ContVar::scalar(0), ContVar::scalar(1)];
        let x = DVector::from_row_slice(&[0.3, 1.1]);
        for r in 0..2 {
            let g = vg_potential(&p, r, 1.7, &stack).unwrap();
            assert!((g.log_value(&x) - vg_log_bound(&p, &x, r, 1.7)).abs() < 1e-12);
            assert!(g.k().symmetric_eigenvalues().iter().all(|e| *e >= -1e-12));
        }
    }

    #[test]
    fn upper_bound_rejects_bad_alpha() {
        let p = LogisticParams::new(&[1.0], 0.0);
        assert_eq!(variational_upper_bound(&p, &x1(0.0), 1, 1.0), Err(Error::InvalidAlpha(1.0)));
        let ub = variational_upper_bound(&p, &x1(0.0), 1, 0.5).unwrap();
        assert!((ub - 0.5).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_tight_at_sigmoid() {
        let p = LogisticParams::new(&[-1.0], 5.0);
        for x in [-3.0, 0.0, 4.2, 9.0] {
            for r in 0..2 {
                let a = p.activation(&x1(x), r);
                // the optimal alpha is the slope of log sigmoid, sigmoid(-a)
                let ub = variational_upper_bound(&p, &x1(x), r, sigmoid(-a)).unwrap();
                assert!((ub - sigmoid(a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lg_potential_scalar_case() {
        let params = LgParams {
            mean: x1(10.0),
            weights: DMatrix::from_element(1, 1, -1.0),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        let g = lg_potential(&params, &[ContVar::scalar(1)], ContVar::scalar(2)).unwrap();
        assert_eq!(g.k(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(g.h(), &DVector::from_row_slice(&[10.0, 10.0]));
        assert!((g.g() - (-50.0 - 0.5 * LN_2PI)).abs() < 1e-12);
        // conditioned on the parent it is a unit-mass density in the child
        let c = g.condition(VarId(1), &x1(3.0)).unwrap();
        assert!(c.log_mass().unwrap().abs() < 1e-12);
        let m = c.to_moment().unwrap();
        assert!((m.mu[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn xi_store_keeps_magnitude() {
        let mut s = XiStore::new();
        s.set(VarId(3), 0, -1.5);
        assert_eq!(s.get(VarId(3), 0), Some(1.5));
        assert_eq!(s.get(VarId(3), 1), None);
    }
}
