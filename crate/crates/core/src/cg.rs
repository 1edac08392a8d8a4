//! Conditional-Gaussian potentials: one canonical Gaussian per configuration
//! of the discrete scope, each tagged with a support flag.
//!
//! Empty continuous scope gives a plain discrete table, empty discrete scope
//! a single Gaussian; mixing the two is done by extension, so there is no
//! separate type lattice to convert between.
//!
//! Tables are row-major over the discrete scope in canonical order, with the
//! last variable varying fastest.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{union_scope, CanonicalGaussian, ContVar, MomentGaussian, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DiscVar {
    pub id: VarId,
    pub card: usize,
}

impl DiscVar {
    pub fn new(id: VarId, card: usize) -> Self {
        DiscVar { id, card }
    }
}

pub fn config_count(dscope: &[DiscVar]) -> usize {
    dscope.iter().map(|v| v.card).product()
}

/// Values of each discrete variable for table index `idx`.
pub fn decode(dscope: &[DiscVar], mut idx: usize) -> Vec<usize> {
    let mut vals = vec![0; dscope.len()];
    for (slot, v) in vals.iter_mut().zip(dscope).rev() {
        *slot = idx % v.card;
        idx /= v.card;
    }
    vals
}

pub fn encode(dscope: &[DiscVar], vals: &[usize]) -> usize {
    dscope.iter().zip(vals).fold(0, |acc, (v, &x)| acc * v.card + x)
}

/// For every configuration of `from`, the index of its restriction to `sub`.
fn projection(from: &[DiscVar], sub: &[DiscVar]) -> Vec<usize> {
    let pos: Vec<usize> = sub
        .iter()
        .map(|s| from.iter().position(|f| f.id == s.id).expect("sub-scope"))
        .collect();
    (0..config_count(from))
        .map(|i| {
            let vals = decode(from, i);
            let sub_vals: Vec<usize> = pos.iter().map(|&p| vals[p]).collect();
            encode(sub, &sub_vals)
        })
        .collect()
}

fn union_discrete(a: &[DiscVar], b: &[DiscVar]) -> Result<Vec<DiscVar>> {
    let mut out = a.to_vec();
    for v in b {
        match out.iter().find(|w| w.id == v.id) {
            Some(w) if w.card != v.card => {
                return Err(Error::Dimension(format!(
                    "discrete variable {} has cardinality {} and {}",
                    v.id, w.card, v.card
                )))
            }
            Some(_) => {}
            None => out.push(*v),
        }
    }
    out.sort_by_key(|v| v.id);
    Ok(out)
}

/// Read-only view of one discrete configuration, handed to table builders.
pub struct Config<'a> {
    vars: &'a [DiscVar],
    vals: &'a [usize],
}

impl Config<'_> {
    pub fn get(&self, id: VarId) -> Option<usize> {
        self.vars.iter().position(|v| v.id == id).map(|i| self.vals[i])
    }

    pub fn values(&self) -> &[usize] {
        self.vals
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub chi: bool,
    pub gauss: CanonicalGaussian,
}

impl Entry {
    pub fn new(gauss: CanonicalGaussian) -> Self {
        Entry { chi: true, gauss }
    }

    pub fn zero(cscope: &[ContVar]) -> Self {
        Entry {
            chi: false,
            gauss: CanonicalGaussian::identity(cscope),
        }
    }
}

/// Per-configuration normalized summary produced by [`CgPotential::moments`].
#[derive(Clone, Debug, PartialEq)]
pub struct EntryMoments {
    pub weight: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgPotential {
    dscope: Vec<DiscVar>,
    cscope: Vec<ContVar>,
    entries: Vec<Entry>,
}

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl CgPotential {
    pub fn new(dscope: Vec<DiscVar>, cscope: Vec<ContVar>, entries: Vec<Entry>) -> Result<Self> {
        if dscope.windows(2).any(|w| w[0].id >= w[1].id) || cscope.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(Error::Scope("scopes must be sorted and duplicate free".into()));
        }
        if let Some(v) = dscope.iter().find(|v| v.card < 2) {
            return Err(Error::Dimension(format!("discrete variable {} has cardinality {}", v.id, v.card)));
        }
        if entries.len() != config_count(&dscope) {
            return Err(Error::Dimension(format!(
                "table has {} entries, discrete scope needs {}",
                entries.len(),
                config_count(&dscope)
            )));
        }
        if entries.iter().any(|e| e.gauss.scope() != cscope.as_slice()) {
            return Err(Error::Scope("entry scope differs from the continuous scope".into()));
        }
        Ok(CgPotential {
            dscope,
            cscope,
            entries,
        })
    }

    /// Builds a table entry by entry. `dscope` and `cscope` may be given in
    /// any order; the builder sees each configuration through [`Config`] and
    /// returns `None` for zero support. Returned Gaussians are extended onto
    /// the continuous scope.
    pub fn from_fn<F>(mut dscope: Vec<DiscVar>, mut cscope: Vec<ContVar>, mut f: F) -> Result<Self>
    where
        F: FnMut(&Config<'_>) -> Result<Option<CanonicalGaussian>>,
    {
        dscope.sort_by_key(|v| v.id);
        cscope.sort_by_key(|v| v.id);
        let mut entries = Vec::with_capacity(config_count(&dscope));
        for i in 0..config_count(&dscope) {
            let vals = decode(&dscope, i);
            let cfg = Config {
                vars: &dscope,
                vals: &vals,
            };
            entries.push(match f(&cfg)? {
                Some(g) => Entry::new(g.extend(&cscope)?),
                None => Entry::zero(&cscope),
            });
        }
        CgPotential::new(dscope, cscope, entries)
    }

    pub fn identity(dscope: &[DiscVar], cscope: &[ContVar]) -> Self {
        let mut d = dscope.to_vec();
        d.sort_by_key(|v| v.id);
        let mut c = cscope.to_vec();
        c.sort_by_key(|v| v.id);
        let entries = vec![Entry::new(CanonicalGaussian::identity(&c)); config_count(&d)];
        CgPotential {
            dscope: d,
            cscope: c,
            entries,
        }
    }

    /// Discrete table from probabilities laid out in canonical order.
    pub fn table(dscope: Vec<DiscVar>, probs: &[f64]) -> Result<Self> {
        if probs.len() != config_count(&dscope) {
            return Err(Error::Dimension("probability table length".into()));
        }
        let entries = probs
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    Entry::new(CanonicalGaussian::weight(p.ln()))
                } else {
                    Entry::zero(&[])
                }
            })
            .collect();
        CgPotential::new(dscope, Vec::new(), entries)
    }

    pub fn gaussian(g: CanonicalGaussian) -> Self {
        CgPotential {
            dscope: Vec::new(),
            cscope: g.scope().to_vec(),
            entries: vec![Entry::new(g)],
        }
    }

    pub fn dscope(&self) -> &[DiscVar] {
        &self.dscope
    }

    pub fn cscope(&self) -> &[ContVar] {
        &self.cscope
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, vals: &[usize]) -> &Entry {
        &self.entries[encode(&self.dscope, vals)]
    }

    pub fn has_support(&self) -> bool {
        self.entries.iter().any(|e| e.chi)
    }

    pub fn extend(&self, target_d: &[DiscVar], target_c: &[ContVar]) -> Result<Self> {
        let mut td = target_d.to_vec();
        td.sort_by_key(|v| v.id);
        let mut tc = target_c.to_vec();
        tc.sort_by_key(|v| v.id);
        for v in &self.dscope {
            if !td.contains(v) {
                return Err(Error::Scope(format!("extension target is missing discrete {}", v.id)));
            }
        }
        if td == self.dscope && tc == self.cscope {
            return Ok(self.clone());
        }
        let proj = projection(&td, &self.dscope);
        let mut entries = Vec::with_capacity(proj.len());
        for &src in &proj {
            let e = &self.entries[src];
            entries.push(Entry {
                chi: e.chi,
                gauss: e.gauss.extend(&tc)?,
            });
        }
        Ok(CgPotential {
            dscope: td,
            cscope: tc,
            entries,
        })
    }

    fn aligned(&self, other: &Self) -> Result<(Self, Self)> {
        let d = union_discrete(&self.dscope, &other.dscope)?;
        let c = union_scope(&self.cscope, &other.cscope)?;
        Ok((self.extend(&d, &c)?, other.extend(&d, &c)?))
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        let entries = a
            .entries
            .iter()
            .zip(&b.entries)
            .map(|(x, y)| {
                if x.chi && y.chi {
                    Ok(Entry::new(x.gauss.multiply(&y.gauss)?))
                } else {
                    Ok(Entry::zero(&a.cscope))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CgPotential { entries, ..a })
    }

    /// Entrywise division with the 0/0 = 0 convention.
    pub fn divide(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        let entries = a
            .entries
            .iter()
            .zip(&b.entries)
            .enumerate()
            .map(|(i, (x, y))| match (x.chi, y.chi) {
                (true, true) => Ok(Entry::new(x.gauss.divide(&y.gauss)?)),
                (true, false) => Err(Error::SupportViolation { config: i }),
                (false, _) => Ok(Entry::zero(&a.cscope)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CgPotential { entries, ..a })
    }

    /// Exact integration of the listed continuous variables in every entry.
    pub fn strong_marginalize(&self, drop_c: &[VarId]) -> Result<Self> {
        if !self.cscope.iter().any(|v| drop_c.contains(&v.id)) {
            return Ok(self.clone());
        }
        let keep: Vec<VarId> = self.cscope.iter().map(|v| v.id).filter(|id| !drop_c.contains(id)).collect();
        let cscope: Vec<ContVar> = self.cscope.iter().copied().filter(|v| keep.contains(&v.id)).collect();
        let entries = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if !e.chi {
                    return Ok(Entry::zero(&cscope));
                }
                e.gauss.marginalize(&keep).map(Entry::new).map_err(|source| Error::ImproperEntry {
                    config: i,
                    source: Box::new(source),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CgPotential {
            dscope: self.dscope.clone(),
            cscope,
            entries,
        })
    }

    /// Sums out discrete variables, collapsing each retained configuration's
    /// mixture to a single Gaussian with the same mass, mean and covariance.
    pub fn weak_marginalize(&self, drop_d: &[VarId]) -> Result<Self> {
        if !self.dscope.iter().any(|v| drop_d.contains(&v.id)) {
            return Ok(self.clone());
        }
        let kept: Vec<DiscVar> = self.dscope.iter().copied().filter(|v| !drop_d.contains(&v.id)).collect();
        let proj = projection(&self.dscope, &kept);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); config_count(&kept)];
        for (src, &dst) in proj.iter().enumerate() {
            if self.entries[src].chi {
                groups[dst].push(src);
            }
        }
        let entries = groups
            .iter()
            .map(|members| self.collapse(members))
            .collect::<Result<Vec<_>>>()?;
        Ok(CgPotential {
            dscope: kept,
            cscope: self.cscope.clone(),
            entries,
        })
    }

    fn collapse(&self, members: &[usize]) -> Result<Entry> {
        match members {
            [] => return Ok(Entry::zero(&self.cscope)),
            [only] => return Ok(self.entries[*only].clone()),
            _ => {}
        }
        let first = &self.entries[members[0]].gauss;
        let same_shape = members[1..]
            .iter()
            .all(|&m| self.entries[m].gauss.h() == first.h() && self.entries[m].gauss.k() == first.k());
        if same_shape {
            let g = log_sum_exp(members.iter().map(|&m| self.entries[m].gauss.g()));
            let mut out = first.clone();
            out.add_log_weight(g - first.g());
            return Ok(Entry::new(out));
        }
        let comps = members
            .iter()
            .map(|&m| {
                self.entries[m].gauss.to_moment().map_err(|source| Error::ImproperEntry {
                    config: m,
                    source: Box::new(source),
                })
            })
            .collect::<Result<Vec<MomentGaussian>>>()?;
        let log_total = log_sum_exp(comps.iter().map(|c| c.log_p));
        let n = comps[0].mu.len();
        let mut mu = DVector::zeros(n);
        for c in &comps {
            mu += &c.mu * (c.log_p - log_total).exp();
        }
        let mut sigma = DMatrix::zeros(n, n);
        for c in &comps {
            let d = &c.mu - &mu;
            sigma += (&c.sigma + &d * d.transpose()) * (c.log_p - log_total).exp();
        }
        let m = MomentGaussian::new(self.cscope.clone(), log_total, mu, sigma);
        Ok(Entry::new(CanonicalGaussian::from_moment(&m)?))
    }

    /// Integrates out continuous variables first, then sums (weakly) over
    /// the discrete ones.
    pub fn marginalize(&self, keep_d: &[VarId], keep_c: &[VarId]) -> Result<Self> {
        let drop_c: Vec<VarId> = self.cscope.iter().map(|v| v.id).filter(|id| !keep_c.contains(id)).collect();
        let drop_d: Vec<VarId> = self.dscope.iter().map(|v| v.id).filter(|id| !keep_d.contains(id)).collect();
        self.strong_marginalize(&drop_c)?.weak_marginalize(&drop_d)
    }

    /// Marginal onto any subset of variable ids, discrete or continuous.
    pub fn marginalize_to(&self, keep: &[VarId]) -> Result<Self> {
        self.marginalize(keep, keep)
    }

    /// Keeps only the configurations consistent with `fixed`, dropping those
    /// discrete variables from the scope.
    pub fn slice(&self, fixed: &[(VarId, usize)]) -> Result<Self> {
        let kept: Vec<DiscVar> = self
            .dscope
            .iter()
            .copied()
            .filter(|v| !fixed.iter().any(|(id, _)| *id == v.id))
            .collect();
        for (id, val) in fixed {
            match self.dscope.iter().find(|v| v.id == *id) {
                Some(v) if *val < v.card => {}
                Some(v) => return Err(Error::Evidence(format!("value {val} out of range for {}", v.id))),
                None => return Err(Error::NotInScope(*id)),
            }
        }
        let entries = (0..config_count(&kept))
            .map(|i| {
                let kv = decode(&kept, i);
                let full: Vec<usize> = self
                    .dscope
                    .iter()
                    .map(|v| match fixed.iter().find(|(id, _)| *id == v.id) {
                        Some((_, x)) => *x,
                        None => kv[kept.iter().position(|k| k.id == v.id).unwrap()],
                    })
                    .collect();
                self.entry(&full).clone()
            })
            .collect();
        Ok(CgPotential {
            dscope: kept,
            cscope: self.cscope.clone(),
            entries,
        })
    }

    /// Log of the total mass, summed over supported configurations.
    pub fn log_mass(&self) -> Result<f64> {
        let masses = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.chi)
            .map(|(i, e)| {
                e.gauss.log_mass().map_err(|source| Error::ImproperEntry {
                    config: i,
                    source: Box::new(source),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_sum_exp(masses))
    }

    /// Normalized weight, mean and covariance of every configuration.
    /// Unsupported configurations get weight 0 and empty moments.
    pub fn moments(&self) -> Result<Vec<EntryMoments>> {
        if !self.has_support() {
            return Err(Error::ZeroSupport);
        }
        let forms = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if !e.chi {
                    return Ok(None);
                }
                e.gauss.to_moment().map(Some).map_err(|source| Error::ImproperEntry {
                    config: i,
                    source: Box::new(source),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let total = log_sum_exp(forms.iter().flatten().map(|m| m.log_p));
        if total == f64::NEG_INFINITY {
            return Err(Error::ZeroSupport);
        }
        let n = self.cscope.iter().map(|v| v.dim).sum();
        Ok(forms
            .into_iter()
            .map(|m| match m {
                Some(m) => EntryMoments {
                    weight: (m.log_p - total).exp(),
                    mu: m.mu,
                    sigma: m.sigma,
                },
                None => EntryMoments {
                    weight: 0.0,
                    mu: DVector::zeros(n),
                    sigma: DMatrix::zeros(n, n),
                },
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s() -> DiscVar {
        DiscVar::new(VarId(0), 2)
    }

    fn b() -> DiscVar {
        DiscVar::new(VarId(3), 2)
    }

    fn normal(id: usize, mean: f64, var: f64) -> CanonicalGaussian {
        CanonicalGaussian::from_moment(&MomentGaussian::scalar(id, mean, var)).unwrap()
    }

    fn weights(p: &CgPotential) -> Vec<f64> {
        p.entries().iter().map(|e| if e.chi { e.gauss.g().exp() } else { 0.0 }).collect()
    }

    #[test]
    fn index_layout_last_fastest() {
        let d = vec![DiscVar::new(VarId(0), 2), DiscVar::new(VarId(1), 3)];
        assert_eq!(decode(&d, 4), vec![1, 1]);
        assert_eq!(encode(&d, &[1, 2]), 5);
    }

    #[test]
    fn extend_duplicates_table() {
        let p = CgPotential::table(vec![s()], &[0.7, 0.3]).unwrap();
        let e = p.extend(&[s(), b()], &[]).unwrap();
        let w = weights(&e);
        for (x, y) in w.iter().zip([0.7, 0.7, 0.3, 0.3]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn extend_rejects_shrinking() {
        let p = CgPotential::table(vec![s()], &[0.7, 0.3]).unwrap();
        assert!(p.extend(&[b()], &[]).is_err());
    }

    #[test]
    fn shared_gaussian_mixture() {
        let g = CgPotential::gaussian(normal(1, 5.0, 1.0));
        let d = CgPotential::table(vec![s()], &[0.7, 0.3]).unwrap();
        let m = g.multiply(&d).unwrap();
        let moms = m.moments().unwrap();
        assert!((moms[0].weight - 0.7).abs() < 1e-12);
        assert!((moms[1].mu[0] - 5.0).abs() < 1e-12);
        // summing S out of a shared Gaussian is exact
        let w = m.weak_marginalize(&[VarId(0)]).unwrap();
        assert!(w.entries()[0].gauss.multiply(&normal(1, 5.0, 1.0)).is_ok());
        assert!((w.log_mass().unwrap()).abs() < 1e-12);
        assert!((w.entries()[0].gauss.k()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divide_support_rules() {
        let num = CgPotential::table(vec![s()], &[0.5, 0.5]).unwrap();
        let den = CgPotential::table(vec![s()], &[0.5, 0.0]).unwrap();
        assert_eq!(num.divide(&den), Err(Error::SupportViolation { config: 1 }));
        let num = CgPotential::table(vec![s()], &[0.5, 0.0]).unwrap();
        let q = num.divide(&den).unwrap();
        assert!(q.entries()[0].chi);
        assert!(!q.entries()[1].chi);
    }

    #[test]
    fn multiply_identity() {
        let p = CgPotential::gaussian(normal(1, 5.0, 1.0))
            .multiply(&CgPotential::table(vec![s()], &[0.7, 0.3]).unwrap())
            .unwrap();
        let id = CgPotential::identity(p.dscope(), p.cscope());
        assert_eq!(p.multiply(&id).unwrap(), p);
    }

    #[test]
    fn collapse_identical_components() {
        let p = CgPotential::from_fn(vec![s()], vec![ContVar::scalar(1)], |_| {
            let mut g = normal(1, 0.0, 1.0);
            g.add_log_weight(0.5_f64.ln());
            Ok(Some(g))
        })
        .unwrap();
        let w = p.weak_marginalize(&[VarId(0)]).unwrap();
        let m = w.entries()[0].gauss.to_moment().unwrap();
        assert!(m.log_p.abs() < 1e-12);
        assert!(m.mu[0].abs() < 1e-12);
        assert!((m.sigma[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapse_two_components() {
        let p = CgPotential::from_fn(vec![s()], vec![ContVar::scalar(1)], |c| {
            let mut g = normal(1, 2.0 * c.get(VarId(0)).unwrap() as f64, 1.0);
            g.add_log_weight(0.5_f64.ln());
            Ok(Some(g))
        })
        .unwrap();
        let m = p.weak_marginalize(&[VarId(0)]).unwrap().entries()[0].gauss.to_moment().unwrap();
        assert!(m.log_p.abs() < 1e-12);
        assert!((m.mu[0] - 1.0).abs() < 1e-12);
        assert!((m.sigma[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_support_group_stays_zero() {
        let p = CgPotential::from_fn(vec![s(), b()], vec![ContVar::scalar(1)], |c| {
            Ok((c.get(VarId(0)) == Some(0)).then(|| normal(1, 0.0, 1.0)))
        })
        .unwrap();
        let w = p.weak_marginalize(&[VarId(3)]).unwrap();
        assert!(w.entries()[0].chi);
        assert!(!w.entries()[1].chi);
    }

    #[test]
    fn moments_of_empty_support() {
        let p = CgPotential::table(vec![s()], &[0.0, 0.0]).unwrap();
        assert_eq!(p.moments(), Err(Error::ZeroSupport));
        assert_eq!(p.log_mass().unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn single_unit_normal_moments() {
        let m = CgPotential::gaussian(normal(0, 0.0, 1.0)).moments().unwrap();
        assert_eq!(m.len(), 1);
        assert!((m[0].weight - 1.0).abs() < 1e-12);
        assert!(m[0].mu[0].abs() < 1e-12);
        assert!((m[0].sigma[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slice_fixes_configuration() {
        let p = CgPotential::table(vec![s(), b()], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = p.slice(&[(VarId(0), 1)]).unwrap();
        assert_eq!(q.dscope(), &[b()]);
        let w = weights(&q);
        assert!((w[0] - 0.3).abs() < 1e-15 && (w[1] - 0.4).abs() < 1e-15);
    }
}
