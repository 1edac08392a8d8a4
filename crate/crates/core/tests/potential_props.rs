//! Property tests for the Gaussian and CG potential algebra, checked against
//! direct moment formulas and brute-force quadrature.

use hybridbn::cg::{CgPotential, DiscVar, Entry};
use hybridbn::{CanonicalGaussian, ContVar, MomentGaussian, VarId};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn scope(d: usize) -> Vec<ContVar> {
    (0..d).map(ContVar::scalar).collect()
}

fn build(d: usize, a: &[f64], jitter: f64, mu: &[f64], log_p: f64) -> MomentGaussian {
    let a = DMatrix::from_fn(d, d, |i, j| a[i * 3 + j]);
    let sigma = &a * a.transpose() + DMatrix::identity(d, d) * jitter;
    MomentGaussian::new(scope(d), log_p, DVector::from_column_slice(&mu[..d]), sigma)
}

prop_compose! {
    fn moment(d: usize)(
        a in prop::collection::vec(-1.0..1.0f64, 9),
        jitter in 0.3..2.0f64,
        mu in prop::collection::vec(-5.0..5.0f64, 3),
        log_p in -3.0..3.0f64,
    ) -> MomentGaussian {
        build(d, &a, jitter, &mu, log_p)
    }
}

fn any_moment() -> impl Strategy<Value = MomentGaussian> {
    (1usize..=3).prop_flat_map(moment)
}

fn canonical() -> impl Strategy<Value = CanonicalGaussian> {
    any_moment().prop_map(|m| CanonicalGaussian::from_moment(&m).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn same(a: &CanonicalGaussian, b: &CanonicalGaussian, tol: f64) -> bool {
    a.scope() == b.scope()
        && close(a.g(), b.g(), tol)
        && a.h().iter().zip(b.h().iter()).all(|(x, y)| close(*x, *y, tol))
        && a.k().iter().zip(b.k().iter()).all(|(x, y)| close(*x, *y, tol))
}

/// Trapezoid integral of `exp(f)` over a box, `n` points per axis.
fn quad(lo: &[f64], hi: &[f64], n: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let d = lo.len();
    let h: Vec<f64> = (0..d).map(|k| (hi[k] - lo[k]) / (n - 1) as f64).collect();
    let total = n.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rest = idx;
        let mut w = 1.0;
        for k in 0..d {
            let i = rest % n;
            rest /= n;
            x[k] = lo[k] + h[k] * i as f64;
            w *= if i == 0 || i == n - 1 { 0.5 * h[k] } else { h[k] };
        }
        sum += w * f(&x).exp();
    }
    sum
}

proptest! {
    #[test]
    fn moment_round_trip(m in any_moment()) {
        let back = CanonicalGaussian::from_moment(&m).unwrap().to_moment().unwrap();
        prop_assert!(close(back.log_p, m.log_p, 1e-9));
        for (x, y) in back.mu.iter().zip(m.mu.iter()) {
            prop_assert!(close(*x, *y, 1e-9));
        }
        for (x, y) in back.sigma.iter().zip(m.sigma.iter()) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn identity_is_neutral(a in canonical()) {
        let one = CanonicalGaussian::identity(a.scope());
        prop_assert_eq!(a.multiply(&one).unwrap(), a.clone());
        prop_assert_eq!(a.divide(&one).unwrap(), a);
    }

    #[test]
    fn multiply_commutes_and_associates(a in moment(2), b in moment(2), c in moment(2)) {
        let (a, b, c) = [a, b, c].map(|m| CanonicalGaussian::from_moment(&m).unwrap()).into();
        prop_assert!(same(&a.multiply(&b).unwrap(), &b.multiply(&a).unwrap(), 1e-12));
        let left = a.multiply(&b).unwrap().multiply(&c).unwrap();
        let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
        prop_assert!(same(&left, &right, 1e-12));
    }

    #[test]
    fn divide_undoes_multiply(a in moment(3), b in moment(3)) {
        let a = CanonicalGaussian::from_moment(&a).unwrap();
        let b = CanonicalGaussian::from_moment(&b).unwrap();
        prop_assert!(same(&a.multiply(&b).unwrap().divide(&b).unwrap(), &a, 1e-12));
    }

    #[test]
    fn multiply_over_different_scopes_extends(a in moment(1), b in moment(2)) {
        // a lives on variable 5, b on variables 0 and 1
        let a = CanonicalGaussian::from_moment(&MomentGaussian::new(vec![ContVar::scalar(5)], a.log_p, a.mu, a.sigma)).unwrap();
        let b = CanonicalGaussian::from_moment(&b).unwrap();
        let p = a.multiply(&b).unwrap();
        prop_assert_eq!(p.ids(), vec![VarId(0), VarId(1), VarId(5)]);
        let x = DVector::from_row_slice(&[0.3, -1.1, 2.0]);
        let lhs = p.log_value(&x);
        let rhs = a.log_value(&DVector::from_row_slice(&[2.0])) + b.log_value(&DVector::from_row_slice(&[0.3, -1.1]));
        prop_assert!(close(lhs, rhs, 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn strong_marginal_matches_quadrature(m in any_moment(), keep_first in any::<bool>()) {
        let d = m.mu.len();
        let g = CanonicalGaussian::from_moment(&m).unwrap();
        let sd: Vec<f64> = (0..d).map(|i| m.sigma[(i, i)].sqrt()).collect();
        // keep at most one variable; integrate the rest numerically
        let keep: Vec<usize> = if keep_first && d > 1 { vec![0] } else { vec![] };
        let drop: Vec<usize> = (0..d).filter(|i| !keep.contains(i)).collect();
        let marg = g.marginalize(&keep.iter().map(|&i| VarId(i)).collect::<Vec<_>>()).unwrap();
        let n = match drop.len() { 1 => 1201, 2 => 301, _ => 81 };
        let lo: Vec<f64> = drop.iter().map(|&i| m.mu[i] - 9.0 * sd[i]).collect();
        let hi: Vec<f64> = drop.iter().map(|&i| m.mu[i] + 9.0 * sd[i]).collect();
        for x0 in [-1.0, 0.5] {
            let num = quad(&lo, &hi, n, |y| {
                let mut x = DVector::zeros(d);
                for (k, &i) in drop.iter().enumerate() {
                    x[i] = y[k];
                }
                for &i in &keep {
                    x[i] = m.mu[i] + x0 * sd[i];
                }
                g.log_value(&x)
            });
            let at: DVector<f64> = DVector::from_iterator(keep.len(), keep.iter().map(|&i| m.mu[i] + x0 * sd[i]));
            let exact = marg.log_value(&at).exp();
            prop_assert!((num - exact).abs() <= 1e-6 * exact.max(1e-300), "num {num} exact {exact}");
        }
    }

    #[test]
    fn weak_marginal_preserves_mixture_moments(
        parts in prop::collection::vec(moment(2), 3),
        weights in prop::collection::vec(-2.0..2.0f64, 3),
    ) {
        let dvar = DiscVar::new(VarId(9), 3);
        let mixture: Vec<MomentGaussian> = parts
            .into_iter()
            .zip(&weights)
            .map(|(m, w)| MomentGaussian::new(m.scope, *w, m.mu, m.sigma))
            .collect();
        let entries = mixture
            .iter()
            .map(|m| Entry::new(CanonicalGaussian::from_moment(m).unwrap()))
            .collect();
        let pot = CgPotential::new(vec![dvar], scope(2), entries).unwrap();
        let collapsed = pot.weak_marginalize(&[VarId(9)]).unwrap();
        let got = collapsed.entries()[0].gauss.to_moment().unwrap();

        let total: f64 = weights.iter().map(|w| w.exp()).sum();
        let mut mu = DVector::zeros(2);
        let mut second = DMatrix::zeros(2, 2);
        for m in &mixture {
            let p = m.log_p.exp() / total;
            mu += &m.mu * p;
            second += (&m.sigma + &m.mu * m.mu.transpose()) * p;
        }
        let sigma = second - &mu * mu.transpose();
        prop_assert!(close(got.log_p, total.ln(), 1e-9));
        for (x, y) in got.mu.iter().zip(mu.iter()) {
            prop_assert!(close(*x, *y, 1e-9));
        }
        for (x, y) in got.sigma.iter().zip(sigma.iter()) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn conditioning_is_the_narrow_evidence_limit(m in (2usize..=3).prop_flat_map(moment), y0 in -3.0..3.0f64) {
        let d = m.mu.len();
        let last = VarId(d - 1);
        let g = CanonicalGaussian::from_moment(&m).unwrap();
        let value = DVector::from_element(1, y0);
        let exact = g.condition(last, &value).unwrap();
        let eps = 1e-3;
        let narrow = CanonicalGaussian::from_moment(&MomentGaussian::new(vec![ContVar::scalar(d - 1)], 0.0, value, DMatrix::from_element(1, 1, eps * eps))).unwrap();
        let keep: Vec<VarId> = (0..d - 1).map(VarId).collect();
        let limit = g.multiply(&narrow).unwrap().marginalize(&keep).unwrap();
        prop_assert!(same(&exact, &limit, 1e-4));
    }
}
