//! Canonical-form Gaussian potentials.
//!
//! A potential over an ordered set of continuous variables is stored as
//! `exp(g + x'h - x'Kx/2)`. The form is closed under multiplication and
//! division, and `K` may be rank deficient (CPD potentials usually are), so
//! only the operations that genuinely need an inverse (moment conversion,
//! integration) check the relevant block.
//!
//! Scopes are always kept sorted by [`VarId`]; every binary operation
//! realigns its operands onto the union scope first.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Reciprocal condition number below which a precision block counts as singular.
pub const DEFAULT_MIN_RCOND: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Global identifier of a network variable. The derived ordering is the
/// canonical ordering used for every scope and table layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A continuous variable together with its vector length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ContVar {
    pub id: VarId,
    pub dim: usize,
}

impl ContVar {
    pub fn new(id: VarId, dim: usize) -> Self {
        assert!(dim >= 1, "continuous variables have dim >= 1");
        ContVar { id, dim }
    }

    pub fn scalar(id: usize) -> Self {
        ContVar::new(VarId(id), 1)
    }
}

pub fn total_dim(scope: &[ContVar]) -> usize {
    scope.iter().map(|v| v.dim).sum()
}

/// Positions of the scalar components of `ids` inside `scope`, in scope order.
pub(crate) fn component_indices(scope: &[ContVar], ids: &[VarId]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for v in scope {
        if ids.contains(&v.id) {
            out.extend(offset..offset + v.dim);
        }
        offset += v.dim;
    }
    out
}

fn offset_of(scope: &[ContVar], id: VarId) -> Option<usize> {
    let mut offset = 0;
    for v in scope {
        if v.id == id {
            return Some(offset);
        }
        offset += v.dim;
    }
    None
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

fn symmetrize(k: &mut DMatrix<f64>) {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = a;
            k[(j, i)] = a;
        }
    }
}

/// Sorted union of two sorted scopes. Fails when the same id carries two dims.
pub fn union_scope(a: &[ContVar], b: &[ContVar]) -> Result<Vec<ContVar>> {
    let mut out: Vec<ContVar> = a.to_vec();
    for v in b {
        match out.iter().find(|w| w.id == v.id) {
            Some(w) if w.dim != v.dim => {
                return Err(Error::Dimension(format!(
                    "variable {} has dim {} and {}",
                    v.id, w.dim, v.dim
                )))
            }
            Some(_) => {}
            None => out.push(*v),
        }
    }
    out.sort_by_key(|v| v.id);
    Ok(out)
}

/// Cholesky factor of a symmetric block, accepted only when the reciprocal
/// condition estimate from the factor's diagonal clears `min_rcond`.
pub(crate) struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub(crate) fn new(m: &DMatrix<f64>, min_rcond: f64) -> std::result::Result<SpdFactor, f64> {
        if m.nrows() == 0 {
            return Ok(SpdFactor {
                chol: Cholesky::new(m.clone()).expect("empty matrix factors"),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(0.0);
        }
        let chol = Cholesky::new(m.clone()).ok_or(0.0)?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d.abs()), hi.max(d.abs())));
        let rcond = if hi > 0.0 { (lo / hi).powi(2) } else { 0.0 };
        if !(rcond > min_rcond) {
            return Err(rcond);
        }
        Ok(SpdFactor { chol })
    }

    pub(crate) fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub(crate) fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub(crate) fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub(crate) fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        symmetrize(&mut inv);
        inv
    }
}

/// Moment form: `exp(log_p) * N(x; mu, sigma)`, i.e. `log_p` is the log of
/// the total mass.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentGaussian {
    pub scope: Vec<ContVar>,
    pub log_p: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl MomentGaussian {
    pub fn new(scope: Vec<ContVar>, log_p: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Self {
        MomentGaussian {
            scope,
            log_p,
            mu,
            sigma,
        }
    }

    /// Unit-mass scalar normal over variable `id`.
    pub fn scalar(id: usize, mean: f64, var: f64) -> Self {
        MomentGaussian::new(
            vec![ContVar::scalar(id)],
            0.0,
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )
    }
}

/// Canonical characteristics `(g, h, K)` over a sorted continuous scope.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalGaussian {
    scope: Vec<ContVar>,
    g: f64,
    h: DVector<f64>,
    k: DMatrix<f64>,
}

impl CanonicalGaussian {
    /// Builds a potential from characteristics laid out in the given scope
    /// order. The scope is re-sorted (permuting `h` and `K` with it) and `K`
    /// is symmetrized.
    pub fn new(scope: Vec<ContVar>, g: f64, h: DVector<f64>, k: DMatrix<f64>) -> Result<Self> {
        let n = total_dim(&scope);
        if h.len() != n || k.nrows() != n || k.ncols() != n {
            return Err(Error::Dimension(format!(
                "scope has total dim {n}, got h of length {} and K of shape {}x{}",
                h.len(),
                k.nrows(),
                k.ncols()
            )));
        }
        for (i, v) in scope.iter().enumerate() {
            if v.dim == 0 {
                return Err(Error::Dimension(format!("variable {} has dim 0", v.id)));
            }
            if scope[..i].iter().any(|w| w.id == v.id) {
                return Err(Error::Scope(format!("variable {} listed twice", v.id)));
            }
        }
        let mut sorted = scope.clone();
        sorted.sort_by_key(|v| v.id);
        let (h, mut k) = if sorted == scope {
            (h, k)
        } else {
            let perm: Vec<usize> = sorted
                .iter()
                .flat_map(|v| {
                    let off = offset_of(&scope, v.id).unwrap();
                    off..off + v.dim
                })
                .collect();
            (subvector(&h, &perm), submatrix(&k, &perm, &perm))
        };
        symmetrize(&mut k);
        Ok(CanonicalGaussian {
            scope: sorted,
            g,
            h,
            k,
        })
    }

    /// The multiplicative identity `(0, 0, 0)` over `scope`.
    pub fn identity(scope: &[ContVar]) -> Self {
        let mut scope = scope.to_vec();
        scope.sort_by_key(|v| v.id);
        let n = total_dim(&scope);
        CanonicalGaussian {
            scope,
            g: 0.0,
            h: DVector::zeros(n),
            k: DMatrix::zeros(n, n),
        }
    }

    /// Empty-scope potential carrying only a log weight.
    pub fn weight(g: f64) -> Self {
        CanonicalGaussian {
            scope: Vec::new(),
            g,
            h: DVector::zeros(0),
            k: DMatrix::zeros(0, 0),
        }
    }

    pub fn scope(&self) -> &[ContVar] {
        &self.scope
    }

    pub fn ids(&self) -> Vec<VarId> {
        self.scope.iter().map(|v| v.id).collect()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn add_log_weight(&mut self, dg: f64) {
        self.g += dg;
    }

    pub fn from_moment(m: &MomentGaussian) -> Result<Self> {
        let n = total_dim(&m.scope);
        if m.mu.len() != n || m.sigma.nrows() != n || m.sigma.ncols() != n {
            return Err(Error::Dimension("moment form does not match its scope".into()));
        }
        let mut sigma = m.sigma.clone();
        symmetrize(&mut sigma);
        let f = SpdFactor::new(&sigma, DEFAULT_MIN_RCOND)
            .map_err(|rc| Error::NotPositiveDefinite(format!("Sigma (rcond {rc:.3e})")))?;
        let k = f.inverse();
        let h = &k * &m.mu;
        // log|K| = -log|Sigma|
        let g = m.log_p - 0.5 * m.mu.dot(&h) - 0.5 * f.ln_det() - 0.5 * n as f64 * LN_2PI;
        CanonicalGaussian::new(m.scope.clone(), g, h, k)
    }

    pub fn to_moment(&self) -> Result<MomentGaussian> {
        self.to_moment_with(DEFAULT_MIN_RCOND)
    }

    pub fn to_moment_with(&self, min_rcond: f64) -> Result<MomentGaussian> {
        let f = SpdFactor::new(&self.k, min_rcond).map_err(|rcond| Error::NotConvertible { rcond })?;
        let n = self.dim() as f64;
        let mu = f.solve_vec(&self.h);
        let sigma = f.inverse();
        let log_p = self.g - 0.5 * f.ln_det() + 0.5 * n * LN_2PI + 0.5 * mu.dot(&self.h);
        Ok(MomentGaussian::new(self.scope.clone(), log_p, mu, sigma))
    }

    /// Embeds the potential into a larger scope, padding with zeros.
    pub fn extend(&self, target: &[ContVar]) -> Result<Self> {
        let mut target = target.to_vec();
        target.sort_by_key(|v| v.id);
        if target == self.scope {
            return Ok(self.clone());
        }
        let mut pos = Vec::with_capacity(self.dim());
        for v in &self.scope {
            let t = target
                .iter()
                .find(|w| w.id == v.id)
                .ok_or_else(|| Error::Scope(format!("extension target is missing {}", v.id)))?;
            if t.dim != v.dim {
                return Err(Error::Dimension(format!("variable {} has dim {} and {}", v.id, v.dim, t.dim)));
            }
            let off = offset_of(&target, v.id).unwrap();
            pos.extend(off..off + v.dim);
        }
        let n = total_dim(&target);
        let mut h = DVector::zeros(n);
        let mut k = DMatrix::zeros(n, n);
        for (i, &pi) in pos.iter().enumerate() {
            h[pi] = self.h[i];
            for (j, &pj) in pos.iter().enumerate() {
                k[(pi, pj)] = self.k[(i, j)];
            }
        }
        Ok(CanonicalGaussian {
            scope: target,
            g: self.g,
            h,
            k,
        })
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self> {
        let scope = union_scope(&self.scope, &other.scope)?;
        let a = self.extend(&scope)?;
        let b = other.extend(&scope)?;
        let mut k = a.k + b.k * sign;
        symmetrize(&mut k);
        Ok(CanonicalGaussian {
            scope,
            g: a.g + sign * b.g,
            h: a.h + b.h * sign,
            k,
        })
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn divide(&self, other: &Self) -> Result<Self> {
        self.combine(other, -1.0)
    }

    /// Integrates out every variable not listed in `keep`.
    pub fn marginalize(&self, keep: &[VarId]) -> Result<Self> {
        self.marginalize_with(keep, DEFAULT_MIN_RCOND)
    }

    pub fn marginalize_with(&self, keep: &[VarId], min_rcond: f64) -> Result<Self> {
        let drop: Vec<VarId> = self
            .scope
            .iter()
            .map(|v| v.id)
            .filter(|id| !keep.contains(id))
            .collect();
        if drop.is_empty() {
            return Ok(self.clone());
        }
        let kept: Vec<VarId> = self.scope.iter().map(|v| v.id).filter(|id| keep.contains(id)).collect();
        let i1 = component_indices(&self.scope, &drop);
        let i2 = component_indices(&self.scope, &kept);
        let k11 = submatrix(&self.k, &i1, &i1);
        let f = SpdFactor::new(&k11, min_rcond).map_err(|rcond| Error::ImproperMarginal {
            vars: drop.clone(),
            rcond,
        })?;
        let h1 = subvector(&self.h, &i1);
        let h2 = subvector(&self.h, &i2);
        let k21 = submatrix(&self.k, &i2, &i1);
        let k22 = submatrix(&self.k, &i2, &i2);
        let k11_inv_h1 = f.solve_vec(&h1);
        let k11_inv_k12 = f.solve_mat(&k21.transpose());
        let p = i1.len() as f64;
        let g = self.g + 0.5 * (p * LN_2PI - f.ln_det() + h1.dot(&k11_inv_h1));
        let h = h2 - &k21 * k11_inv_h1;
        let mut k = k22 - &k21 * k11_inv_k12;
        symmetrize(&mut k);
        Ok(CanonicalGaussian {
            scope: self.scope.iter().copied().filter(|v| keep.contains(&v.id)).collect(),
            g,
            h,
            k,
        })
    }

    /// Clamps `var` to `value`; the variable leaves the scope.
    pub fn condition(&self, var: VarId, value: &DVector<f64>) -> Result<Self> {
        let cv = self
            .scope
            .iter()
            .find(|v| v.id == var)
            .ok_or(Error::NotInScope(var))?;
        if value.len() != cv.dim {
            return Err(Error::Dimension(format!(
                "observed value for {} has length {}, expected {}",
                var,
                value.len(),
                cv.dim
            )));
        }
        let iy = component_indices(&self.scope, &[var]);
        let rest: Vec<VarId> = self.scope.iter().map(|v| v.id).filter(|&id| id != var).collect();
        let ix = component_indices(&self.scope, &rest);
        let hy = subvector(&self.h, &iy);
        let kyy = submatrix(&self.k, &iy, &iy);
        let kxy = submatrix(&self.k, &ix, &iy);
        let g = self.g + hy.dot(value) - 0.5 * value.dot(&(&kyy * value));
        let h = subvector(&self.h, &ix) - kxy * value;
        let k = submatrix(&self.k, &ix, &ix);
        Ok(CanonicalGaussian {
            scope: self.scope.iter().copied().filter(|v| v.id != var).collect(),
            g,
            h,
            k,
        })
    }

    /// Log of the potential evaluated at `x` (laid out in scope order).
    pub fn log_value(&self, x: &DVector<f64>) -> f64 {
        self.g + x.dot(&self.h) - 0.5 * x.dot(&(&self.k * x))
    }

    /// Log of the integral over the whole scope.
    pub fn log_mass(&self) -> Result<f64> {
        Ok(self.marginalize(&[])?.g)
    }
}
