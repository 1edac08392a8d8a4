//! Reference answers at desk scale: trapezoid quadrature over the hidden
//! continuous components times enumeration of the hidden discrete states,
//! and a likelihood-weighting sampler. Both use the exact sigmoid.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cg::{config_count, decode, DiscVar};
use crate::cpd::{log_sigmoid, sigmoid, Cpd};
use crate::error::{Error, Result};
use crate::evidence::{Evidence, Value};
use crate::gaussian::VarId;
use crate::network::{BayesNet, NodeKind};
use crate::report::{Marginal, PosteriorReport};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Largest number of hidden continuous scalar components the grid accepts.
pub const MAX_GRID_DIMS: usize = 3;
/// Largest total number of hidden discrete states (sum of cardinalities).
pub const MAX_DISCRETE_STATES: usize = 12;
/// Points per axis for one- and two-dimensional grids.
pub const DEFAULT_POINTS: usize = 801;
/// Points per axis once three components are hidden.
pub const DEFAULT_POINTS_3D: usize = 201;
const BOUND_SAMPLES: usize = 20_000;
const BOUND_SEED: u64 = 0x6772_6964;

enum FlatCpd {
    Table(Vec<Vec<f64>>),
    Lg(Vec<LgRow>),
    Logistic(Vec<(Vec<f64>, f64)>),
}

struct LgRow {
    mean: Vec<f64>,
    /// `dim × parent_dim`, row-major.
    w: Vec<f64>,
    /// Lower Cholesky factor of the noise covariance, row-major.
    l: Vec<f64>,
    log_norm: f64,
}

struct FlatNode {
    dim: usize,
    offset: usize,
    /// `(discrete parent id, stride)` giving the row index.
    strides: Vec<(usize, usize)>,
    /// Flat indices of the stacked continuous parent components.
    cpar: Vec<usize>,
    cpd: FlatCpd,
}

/// Allocation-free log-density evaluator over flat value arrays: discrete
/// states by node id, continuous components by offset.
struct FlatNet {
    nodes: Vec<FlatNode>,
    topo: Vec<usize>,
    offsets: Vec<usize>,
    n_cont: usize,
}

impl FlatNet {
    fn new(net: &BayesNet) -> Self {
        let mut offsets = vec![usize::MAX; net.len()];
        let mut n_cont = 0;
        for id in net.ids() {
            if let NodeKind::Continuous { dim } = net.kind(id) {
                offsets[id.0] = n_cont;
                n_cont += dim;
            }
        }
        let nodes = net
            .ids()
            .map(|id| {
                let layout = net.parent_config_vars(id);
                let mut strides = Vec::new();
                let mut stride = 1;
                for v in layout.iter().rev() {
                    strides.push((v.id.0, stride));
                    stride *= v.card;
                }
                let cpar = net
                    .continuous_parents(id)
                    .iter()
                    .flat_map(|p| offsets[p.0]..offsets[p.0] + net.kind(*p).size())
                    .collect();
                let cpd = match &net.node(id).cpd {
                    Cpd::Tabular(t) => FlatCpd::Table(t.rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()),
                    Cpd::Logistic(l) => FlatCpd::Logistic(
                        l.configs.iter().map(|c| (c.weights.iter().copied().collect(), c.bias)).collect(),
                    ),
                    Cpd::LinearGaussian(lg) => FlatCpd::Lg(
                        lg.configs
                            .iter()
                            .map(|c| {
                                let chol = c.cov.clone().cholesky().expect("validated covariance");
                                let l = chol.l();
                                let d = c.mean.len();
                                LgRow {
                                    mean: c.mean.iter().copied().collect(),
                                    w: c.weights.transpose().iter().copied().collect(),
                                    l: l.transpose().iter().copied().collect(),
                                    log_norm: -0.5 * d as f64 * LN_2PI - l.diagonal().iter().map(|x| x.ln()).sum::<f64>(),
                                }
                            })
                            .collect(),
                    ),
                };
                FlatNode {
                    dim: net.kind(id).size(),
                    offset: offsets[id.0],
                    strides,
                    cpar,
                    cpd,
                }
            })
            .collect();
        FlatNet {
            nodes,
            topo: net.topological_order().iter().map(|v| v.0).collect(),
            offsets,
            n_cont,
        }
    }

    fn row(&self, n: usize, disc: &[usize]) -> usize {
        self.nodes[n].strides.iter().map(|&(p, s)| disc[p] * s).sum()
    }

    fn eta(&self, w: &[f64], b: f64, cpar: &[usize], x: &[f64]) -> f64 {
        b + w.iter().zip(cpar).map(|(wi, &i)| wi * x[i]).sum::<f64>()
    }

    /// Regression mean of a linear-Gaussian node, written into `buf`.
    fn lg_mean(&self, row: &LgRow, cpar: &[usize], x: &[f64], buf: &mut [f64]) {
        let m = cpar.len();
        for (k, b) in buf.iter_mut().enumerate() {
            *b = row.mean[k] + (0..m).map(|j| row.w[k * m + j] * x[cpar[j]]).sum::<f64>();
        }
    }

    /// `log p(node value | parents)`.
    fn log_cpd(&self, n: usize, disc: &[usize], x: &[f64], buf: &mut [f64]) -> f64 {
        let node = &self.nodes[n];
        let row = self.row(n, disc);
        match &node.cpd {
            FlatCpd::Table(t) => t[row][disc[n]],
            FlatCpd::Logistic(rows) => {
                let (w, b) = &rows[row];
                let eta = self.eta(w, *b, &node.cpar, x);
                log_sigmoid(if disc[n] == 1 { eta } else { -eta })
            }
            FlatCpd::Lg(rows) => {
                let r = &rows[row];
                let d = node.dim;
                let buf = &mut buf[..d];
                self.lg_mean(r, &node.cpar, x, buf);
                // forward substitution L z = x - mean, accumulating |z|²
                let mut q = 0.0;
                for i in 0..d {
                    let mut z = x[node.offset + i] - buf[i];
                    for j in 0..i {
                        z -= r.l[i * d + j] * buf[j];
                    }
                    z /= r.l[i * d + i];
                    buf[i] = z;
                    q += z * z;
                }
                r.log_norm - 0.5 * q
            }
        }
    }

    fn log_joint(&self, disc: &[usize], x: &[f64], buf: &mut [f64]) -> f64 {
        (0..self.nodes.len()).map(|n| self.log_cpd(n, disc, x, buf)).sum()
    }

    fn max_dim(&self) -> usize {
        self.nodes.iter().map(|n| n.dim).max().unwrap_or(1)
    }

    /// Ancestral draw; observed nodes keep their values and contribute their
    /// log density to the returned weight.
    fn sample<R: Rng>(&self, rng: &mut R, clamp: &Clamp, disc: &mut [usize], x: &mut [f64], buf: &mut [f64]) -> f64 {
        let mut logw = 0.0;
        for &n in &self.topo {
            if clamp.disc[n].is_some() || clamp.observed_cont[n] {
                if let Some(v) = clamp.disc[n] {
                    disc[n] = v;
                }
                logw += self.log_cpd(n, disc, x, buf);
                continue;
            }
            let node = &self.nodes[n];
            let row = self.row(n, disc);
            match &node.cpd {
                FlatCpd::Table(t) => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = t[row].len() - 1;
                    for (k, lp) in t[row].iter().enumerate() {
                        acc += lp.exp();
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    disc[n] = pick;
                }
                FlatCpd::Logistic(rows) => {
                    let (w, b) = &rows[row];
                    let p1 = sigmoid(self.eta(w, *b, &node.cpar, x));
                    let u: f64 = rng.random();
                    disc[n] = usize::from(u < p1);
                }
                FlatCpd::Lg(rows) => {
                    let r = &rows[row];
                    let d = node.dim;
                    self.lg_mean(r, &node.cpar, x, &mut buf[..d]);
                    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    for i in 0..d {
                        x[node.offset + i] = buf[i] + (0..=i).map(|j| r.l[i * d + j] * z[j]).sum::<f64>();
                    }
                }
            }
        }
        logw
    }
}

struct Clamp {
    disc: Vec<Option<usize>>,
    observed_cont: Vec<bool>,
    x: Vec<f64>,
}

impl Clamp {
    fn new(net: &BayesNet, flat: &FlatNet, ev: &Evidence) -> Self {
        let mut x = vec![0.0; flat.n_cont];
        let mut observed_cont = vec![false; net.len()];
        for (id, v) in ev.iter() {
            if let Value::Continuous(v) = v {
                observed_cont[id.0] = true;
                let o = flat.offsets[id.0];
                x[o..o + v.len()].copy_from_slice(v.as_slice());
            }
        }
        Clamp {
            disc: net.ids().map(|id| ev.discrete(id)).collect(),
            observed_cont,
            x,
        }
    }
}

/// Draws one complete assignment from the joint distribution.
pub fn sample_joint<R: Rng>(net: &BayesNet, rng: &mut R) -> Vec<Value> {
    let flat = FlatNet::new(net);
    let clamp = Clamp::new(net, &flat, &Evidence::new());
    let mut disc = vec![0; net.len()];
    let mut x = vec![0.0; flat.n_cont];
    let mut buf = vec![0.0; flat.max_dim()];
    flat.sample(rng, &clamp, &mut disc, &mut x, &mut buf);
    net.ids()
        .map(|id| match net.kind(id) {
            NodeKind::Discrete { .. } => Value::Discrete(disc[id.0]),
            NodeKind::Continuous { dim } => {
                let o = flat.offsets[id.0];
                Value::Continuous(DVector::from_column_slice(&x[o..o + dim]))
            }
        })
        .collect()
}

/// One integration axis: a scalar component of a hidden continuous node.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub var: VarId,
    pub component: usize,
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    /// Axes over every hidden continuous component, spanning eight standard
    /// deviations either side of the component's prior (ancestral) mean.
    /// Those moments come from a fixed-seed prior sample, so the grid is
    /// deterministic.
    pub fn default_for(net: &BayesNet, ev: &Evidence) -> Result<Self> {
        let flat = FlatNet::new(net);
        let hidden: Vec<(VarId, usize)> = net
            .ids()
            .filter(|id| net.kind(*id).is_continuous() && !ev.is_observed(*id))
            .flat_map(|id| (0..net.kind(id).size()).map(move |k| (id, k)))
            .collect();
        if hidden.len() > MAX_GRID_DIMS {
            return Err(Error::OracleScale(format!(
                "{} hidden continuous components, the grid handles at most {MAX_GRID_DIMS}",
                hidden.len()
            )));
        }
        let points = if hidden.len() >= 3 { DEFAULT_POINTS_3D } else { DEFAULT_POINTS };
        let clamp = Clamp::new(net, &flat, &Evidence::new());
        let mut rng = ChaCha20Rng::seed_from_u64(BOUND_SEED);
        let mut disc = vec![0; net.len()];
        let mut x = vec![0.0; flat.n_cont];
        let mut buf = vec![0.0; flat.max_dim()];
        let mut s1 = vec![0.0; flat.n_cont];
        let mut s2 = vec![0.0; flat.n_cont];
        for _ in 0..BOUND_SAMPLES {
            flat.sample(&mut rng, &clamp, &mut disc, &mut x, &mut buf);
            for i in 0..flat.n_cont {
                s1[i] += x[i];
                s2[i] += x[i] * x[i];
            }
        }
        let n = BOUND_SAMPLES as f64;
        let axes = hidden
            .into_iter()
            .map(|(var, component)| {
                let i = flat.offsets[var.0] + component;
                let mean = s1[i] / n;
                let sd = ((s2[i] / n - mean * mean) * n / (n - 1.0)).max(0.0).sqrt();
                Axis {
                    var,
                    component,
                    lower: mean - 8.0 * sd,
                    upper: mean + 8.0 * sd,
                    points,
                }
            })
            .collect();
        let spec = GridSpec { axes };
        spec.validate()?;
        Ok(spec)
    }

    /// Same bounds, spacing halved.
    pub fn refined(&self) -> Self {
        GridSpec {
            axes: self
                .axes
                .iter()
                .map(|a| Axis {
                    points: 2 * a.points - 1,
                    ..a.clone()
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in &self.axes {
            if !(a.lower.is_finite() && a.upper.is_finite() && a.lower < a.upper) {
                return Err(Error::OracleScale(format!("bad bounds [{}, {}] for {}", a.lower, a.upper, a.var)));
            }
            if a.points < 3 || a.points % 2 == 0 {
                return Err(Error::OracleScale(format!("axis for {} needs an odd count of at least 3", a.var)));
            }
        }
        Ok(())
    }

    fn step(&self, k: usize) -> f64 {
        let a = &self.axes[k];
        (a.upper - a.lower) / (a.points - 1) as f64
    }
}

/// Scaled running sums `exp(-m) * Σ exp(l) * (1, x, x x')`.
#[derive(Clone)]
struct Acc {
    m: f64,
    s0: f64,
    s1: [f64; MAX_GRID_DIMS],
    s2: [[f64; MAX_GRID_DIMS]; MAX_GRID_DIMS],
}

impl Acc {
    fn new() -> Self {
        Acc {
            m: f64::NEG_INFINITY,
            s0: 0.0,
            s1: [0.0; MAX_GRID_DIMS],
            s2: [[0.0; MAX_GRID_DIMS]; MAX_GRID_DIMS],
        }
    }

    fn rescale(&mut self, m: f64) {
        let f = if self.m == f64::NEG_INFINITY { 0.0 } else { (self.m - m).exp() };
        self.s0 *= f;
        for i in 0..MAX_GRID_DIMS {
            self.s1[i] *= f;
            for j in 0..MAX_GRID_DIMS {
                self.s2[i][j] *= f;
            }
        }
        self.m = m;
    }

    fn add(&mut self, l: f64, x: &[f64]) {
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.m {
            self.rescale(l);
        }
        let w = (l - self.m).exp();
        self.s0 += w;
        for i in 0..x.len() {
            self.s1[i] += w * x[i];
            for j in 0..x.len() {
                self.s2[i][j] += w * x[i] * x[j];
            }
        }
    }

    fn merge(mut self, mut other: Acc) -> Acc {
        let m = self.m.max(other.m);
        if m == f64::NEG_INFINITY {
            return self;
        }
        self.rescale(m);
        other.rescale(m);
        self.s0 += other.s0;
        for i in 0..MAX_GRID_DIMS {
            self.s1[i] += other.s1[i];
            for j in 0..MAX_GRID_DIMS {
                self.s2[i][j] += other.s2[i][j];
            }
        }
        self
    }

    fn log_mass(&self) -> f64 {
        if self.s0 > 0.0 {
            self.m + self.s0.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn hidden_discrete(net: &BayesNet, ev: &Evidence) -> Vec<DiscVar> {
    net.ids()
        .filter(|id| net.kind(*id).is_discrete() && !ev.is_observed(*id))
        .map(|id| net.disc_var(id))
        .collect()
}

/// Exact posterior by quadrature: joint density on the product grid for
/// each hidden discrete configuration, trapezoid weights, normalized.
pub fn grid_posterior(net: &BayesNet, ev: &Evidence, grid: &GridSpec) -> Result<PosteriorReport> {
    grid.validate()?;
    let dvars = hidden_discrete(net, ev);
    let states: usize = dvars.iter().map(|v| v.card).sum();
    if states > MAX_DISCRETE_STATES {
        return Err(Error::OracleScale(format!(
            "{states} hidden discrete states, the grid handles at most {MAX_DISCRETE_STATES}"
        )));
    }
    let expected: Vec<(VarId, usize)> = net
        .ids()
        .filter(|id| net.kind(*id).is_continuous() && !ev.is_observed(*id))
        .flat_map(|id| (0..net.kind(id).size()).map(move |k| (id, k)))
        .collect();
    let on_grid: Vec<(VarId, usize)> = grid.axes.iter().map(|a| (a.var, a.component)).collect();
    if expected != on_grid {
        return Err(Error::OracleScale(
            "grid axes must cover each hidden continuous component once, in id order".into(),
        ));
    }
    if on_grid.len() > MAX_GRID_DIMS {
        return Err(Error::OracleScale(format!(
            "{} hidden continuous components, the grid handles at most {MAX_GRID_DIMS}",
            on_grid.len()
        )));
    }

    let flat = FlatNet::new(net);
    let clamp = Clamp::new(net, &flat, ev);
    let d = grid.axes.len();
    let coords: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let a = &grid.axes[k];
            let h = grid.step(k);
            (0..a.points).map(|i| a.lower + h * i as f64).collect()
        })
        .collect();
    let logw: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let n = grid.axes[k].points;
            let h = grid.step(k).ln();
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { h + 0.5f64.ln() } else { h })
                .collect()
        })
        .collect();
    let slots: Vec<usize> = grid.axes.iter().map(|a| flat.offsets[a.var.0] + a.component).collect();
    let total: usize = grid.axes.iter().map(|a| a.points).product();

    let configs = config_count(&dvars);
    let per_config: Vec<Acc> = (0..configs)
        .map(|c| {
            let vals = decode(&dvars, c);
            let mut disc: Vec<usize> = clamp.disc.iter().map(|v| v.unwrap_or(0)).collect();
            for (v, x) in dvars.iter().zip(&vals) {
                disc[v.id.0] = *x;
            }
            (0..total)
                .into_par_iter()
                .fold(
                    || (Acc::new(), clamp.x.clone(), vec![0.0; flat.max_dim()], [0.0; MAX_GRID_DIMS]),
                    |(mut acc, mut x, mut buf, mut pt), flat_idx| {
                        let mut rest = flat_idx;
                        let mut lw = 0.0;
                        for k in (0..d).rev() {
                            let n = grid.axes[k].points;
                            let i = rest % n;
                            rest /= n;
                            pt[k] = coords[k][i];
                            x[slots[k]] = pt[k];
                            lw += logw[k][i];
                        }
                        let l = flat.log_joint(&disc, &x, &mut buf) + lw;
                        acc.add(l, &pt[..d]);
                        (acc, x, buf, pt)
                    },
                )
                .map(|(acc, ..)| acc)
                .reduce(Acc::new, Acc::merge)
        })
        .collect();

    let log_evidence = log_sum_exp(per_config.iter().map(Acc::log_mass));
    if log_evidence == f64::NEG_INFINITY {
        return Ok(PosteriorReport {
            marginals: BTreeMap::new(),
            log_evidence,
        });
    }
    let weights: Vec<f64> = per_config.iter().map(|a| (a.log_mass() - log_evidence).exp()).collect();

    let mut marginals = BTreeMap::new();
    for (pos, v) in dvars.iter().enumerate() {
        let mut p = vec![0.0; v.card];
        for (c, w) in weights.iter().enumerate() {
            p[decode(&dvars, c)[pos]] += w;
        }
        marginals.insert(v.id, Marginal::Discrete(p));
    }
    let mut m1 = [0.0; MAX_GRID_DIMS];
    let mut m2 = [[0.0; MAX_GRID_DIMS]; MAX_GRID_DIMS];
    for (acc, w) in per_config.iter().zip(&weights) {
        if acc.s0 == 0.0 {
            continue;
        }
        for i in 0..d {
            m1[i] += w * acc.s1[i] / acc.s0;
            for j in 0..d {
                m2[i][j] += w * acc.s2[i][j] / acc.s0;
            }
        }
    }
    let mut k = 0;
    while k < d {
        let var = grid.axes[k].var;
        let dim = net.kind(var).size();
        let mean = DVector::from_fn(dim, |i, _| m1[k + i]);
        let cov = DMatrix::from_fn(dim, dim, |i, j| m2[k + i][k + j] - m1[k + i] * m1[k + j]);
        marginals.insert(var, Marginal::Continuous { mean, cov });
        k += dim;
    }
    Ok(PosteriorReport {
        marginals,
        log_evidence,
    })
}

/// Convenience: [`grid_posterior`] on the default grid.
pub fn grid_posterior_default(net: &BayesNet, ev: &Evidence) -> Result<PosteriorReport> {
    grid_posterior(net, ev, &GridSpec::default_for(net, ev)?)
}

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Likelihood-weighting estimate with its sampling diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct LwReport {
    pub report: PosteriorReport,
    /// `(Σw)² / Σw²`.
    pub ess: f64,
    /// Standard error of every reported probability or mean component,
    /// in the same layout as the marginals.
    pub std_errors: BTreeMap<VarId, Vec<f64>>,
}

/// Ancestral importance sampling with the observed nodes clamped and their
/// densities folded into the weights. Reproducible for a given seed.
pub fn likelihood_weighting(net: &BayesNet, ev: &Evidence, n_samples: usize, seed: u64) -> Result<LwReport> {
    if n_samples == 0 {
        return Err(Error::OracleScale("likelihood weighting needs at least one sample".into()));
    }
    let flat = FlatNet::new(net);
    let clamp = Clamp::new(net, &flat, ev);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut disc = vec![0; net.len()];
    let mut x = clamp.x.clone();
    let mut buf = vec![0.0; flat.max_dim()];
    let mut logws = Vec::with_capacity(n_samples);
    let mut draws: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let lw = flat.sample(&mut rng, &clamp, &mut disc, &mut x, &mut buf);
        logws.push(lw);
        draws.push((disc.clone(), x.clone()));
    }
    let lse = log_sum_exp(logws.iter().copied());
    if lse == f64::NEG_INFINITY {
        return Ok(LwReport {
            report: PosteriorReport {
                marginals: BTreeMap::new(),
                log_evidence: f64::NEG_INFINITY,
            },
            ess: 0.0,
            std_errors: BTreeMap::new(),
        });
    }
    let w: Vec<f64> = logws.iter().map(|l| (l - lse).exp()).collect();
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
    let log_evidence = lse - (n_samples as f64).ln();

    // self-normalized estimate of E[f] and its delta-method standard error
    let estimate = |f: &dyn Fn(usize) -> f64| -> (f64, f64) {
        let mean: f64 = (0..n_samples).map(|i| w[i] * f(i)).sum();
        let var: f64 = (0..n_samples).map(|i| w[i] * w[i] * (f(i) - mean).powi(2)).sum();
        (mean, var.sqrt())
    };

    let mut marginals = BTreeMap::new();
    let mut std_errors = BTreeMap::new();
    for id in net.ids().filter(|id| !ev.is_observed(*id)) {
        match net.kind(id) {
            NodeKind::Discrete { card } => {
                let (p, se): (Vec<f64>, Vec<f64>) = (0..card)
                    .map(|k| estimate(&|i| f64::from(u8::from(draws[i].0[id.0] == k))))
                    .unzip();
                marginals.insert(id, Marginal::Discrete(p));
                std_errors.insert(id, se);
            }
            NodeKind::Continuous { dim } => {
                let o = flat.offsets[id.0];
                let (mean, se): (Vec<f64>, Vec<f64>) = (0..dim).map(|k| estimate(&|i| draws[i].1[o + k])).unzip();
                let cov = DMatrix::from_fn(dim, dim, |a, b| {
                    (0..n_samples)
                        .map(|i| w[i] * (draws[i].1[o + a] - mean[a]) * (draws[i].1[o + b] - mean[b]))
                        .sum()
                });
                marginals.insert(
                    id,
                    Marginal::Continuous {
                        mean: DVector::from_vec(mean),
                        cov,
                    },
                );
                std_errors.insert(id, se);
            }
        }
    }
    Ok(LwReport {
        report: PosteriorReport {
            marginals,
            log_evidence,
        },
        ess,
        std_errors,
    })
}
