mod common;

use common::{hidden_size, random_evidence, random_hybrid, NetShape};
use hybridbn::cpd::{LgParams, LinearGaussianCpd, TabularCpd};
use hybridbn::oracle::grid_posterior_default;
use hybridbn::{
    crop_network, BayesNet, Cpd, Engine, EngineConfig, Evidence, Marginal, Node, NodeKind, VarId, XiInit,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const S: VarId = VarId(0);
const C: VarId = VarId(1);
const P: VarId = VarId(2);
const B: VarId = VarId(3);

fn crop_ev(s: Option<usize>, c: Option<f64>, p: Option<f64>, b: Option<usize>) -> Evidence {
    let net = crop_network();
    let mut ev = Evidence::new();
    if let Some(s) = s {
        ev.observe_discrete(&net, S, s).unwrap();
    }
    if let Some(c) = c {
        ev.observe_scalar(&net, C, c).unwrap();
    }
    if let Some(p) = p {
        ev.observe_scalar(&net, P, p).unwrap();
    }
    if let Some(b) = b {
        ev.observe_discrete(&net, B, b).unwrap();
    }
    ev
}

#[test]
fn observed_price_is_exact() {
    let net = crop_network();
    let engine = Engine::new(&net).unwrap();
    for (p, b) in [(5.0, Some(1)), (13.2, None), (-1.0, Some(0))] {
        let ev = crop_ev(None, None, Some(p), b);
        let run = engine.run(&ev, &EngineConfig::default()).unwrap();
        assert_eq!(run.iterations, 1);
        let grid = grid_posterior_default(&net, &ev).unwrap();
        assert!(run.report.max_abs_diff(&grid) < 1e-6);
        let (e, g) = (run.report.log_evidence.exp(), grid.log_evidence.exp());
        assert!((e - g).abs() < 1e-9, "Pr(e) {e} vs {g}");
    }
}

#[test]
fn symmetric_activation_gives_even_odds() {
    let net = crop_network();
    let engine = Engine::new(&net).unwrap();
    for (s, c) in [(0, 5.0), (1, 15.0)] {
        let run = engine.run(&crop_ev(Some(s), Some(c), None, None), &EngineConfig::default()).unwrap();
        assert!((run.report.expectation(B).unwrap() - 0.5).abs() < 1e-9);
    }
}

#[test]
fn only_b_observed_converges_quickly() {
    let net = crop_network();
    let engine = Engine::new(&net).unwrap();
    for b in 0..2 {
        let run = engine.run(&crop_ev(None, None, None, Some(b)), &EngineConfig::default()).unwrap();
        assert!(run.converged);
        assert!(run.iterations <= 10, "{} iterations", run.iterations);
    }
}

#[test]
fn converged_xi_is_a_fixed_point() {
    // The bound is flat to second order in xi near its optimum, so the
    // loglik stopping rule halts before xi settles; iterate xi directly.
    let net = crop_network();
    let engine = Engine::new(&net).unwrap();
    let ev = crop_ev(None, Some(4.0), None, Some(1));
    let mut xi = engine.run(&ev, &EngineConfig::default()).unwrap().state.xi;
    let mut change = f64::INFINITY;
    for _ in 0..200 {
        let mut state = engine.assign_and_initialize(&ev, &xi).unwrap();
        engine.propagate(&mut state).unwrap();
        let next = engine.update_xi(&state).unwrap();
        change = next.max_change(&xi);
        xi = next;
        if change < 1e-12 {
            break;
        }
    }
    assert!(change < 1e-9, "xi still moving by {change:e}");
}

#[test]
fn hitting_max_iter_is_reported() {
    let net = crop_network();
    let engine = Engine::new(&net).unwrap();
    let cfg = EngineConfig {
        tol: 0.0,
        max_iter: 2,
        init: XiInit::Ancestral,
    };
    let run = engine.run(&crop_ev(None, None, None, Some(0)), &cfg).unwrap();
    assert!(!run.converged);
    assert_eq!(run.iterations, 2);
    assert!(!run.report.marginals.is_empty());
}

#[test]
fn bound_lies_below_exact_evidence() {
    let net = crop_network();
    let engine = Engine::new(&net).unwrap();
    let run = engine.run(&Evidence::new(), &EngineConfig::default()).unwrap();
    assert!(run.report.log_evidence <= 0.0);
    assert!(run.report.log_evidence < -1e-3, "the bound is loose with B hidden");
    for ev in [crop_ev(Some(1), None, None, Some(0)), crop_ev(None, Some(6.0), None, Some(1))] {
        let run = engine.run(&ev, &EngineConfig::default()).unwrap();
        let grid = grid_posterior_default(&net, &ev).unwrap();
        assert!(run.report.log_evidence <= grid.log_evidence + 1e-6);
    }
}

#[test]
fn reported_price_matches_root_mixture() {
    let net = crop_network();
    let engine = Engine::new(&net).unwrap();
    let run = engine.run(&Evidence::new(), &EngineConfig::default()).unwrap();
    let root = engine.structure().jtree.roots[0];
    let parts = run.state.cliques[root].marginalize_to(&[P]).unwrap().moments().unwrap();
    let Marginal::Continuous { mean, cov } = run.report.get(P).unwrap() else { panic!() };
    let m = parts[0].mu[0];
    let v = parts[0].sigma[(0, 0)];
    assert!((mean[0] - m).abs() < 1e-9 && (cov[(0, 0)] - v).abs() < 1e-9);
    // the mixture over the root's discrete configurations, collapsed by hand
    let full = run.state.cliques[root].moments().unwrap();
    let hand_mean: f64 = full.iter().map(|e| e.weight * e.mu[0]).sum();
    let hand_var: f64 = full.iter().map(|e| e.weight * (e.sigma[(0, 0)] + e.mu[0] * e.mu[0])).sum::<f64>() - hand_mean * hand_mean;
    assert!((mean[0] - hand_mean).abs() < 1e-9);
    assert!((cov[(0, 0)] - hand_var).abs() < 1e-9);
}

#[test]
fn impossible_evidence_reports_minus_infinity() {
    let nodes = vec![
        Node {
            id: VarId(0),
            name: "A".into(),
            kind: NodeKind::Discrete { card: 2 },
            parents: vec![],
            cpd: Cpd::Tabular(TabularCpd { rows: vec![vec![1.0, 0.0]] }),
        },
        Node {
            id: VarId(1),
            name: "X".into(),
            kind: NodeKind::Continuous { dim: 1 },
            parents: vec![VarId(0)],
            cpd: Cpd::LinearGaussian(LinearGaussianCpd {
                configs: vec![
                    LgParams {
                        mean: DVector::from_element(1, 0.0),
                        weights: DMatrix::zeros(1, 0),
                        cov: DMatrix::identity(1, 1),
                    };
                    2
                ],
            }),
        },
    ];
    let net = BayesNet::new(nodes).unwrap();
    let engine = Engine::new(&net).unwrap();
    let mut ev = Evidence::new();
    ev.observe_discrete(&net, VarId(0), 1).unwrap();
    let run = engine.run(&ev, &EngineConfig::default()).unwrap();
    assert_eq!(run.report.log_evidence, f64::NEG_INFINITY);
    assert!(run.report.marginals.is_empty());
}

#[test]
fn single_clique_propagation_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = loop {
        let net = random_hybrid(&mut rng, &NetShape { nodes: 3, logistic: false, max_dim: 2, parent_prob: 1.0 });
        if Engine::new(&net).unwrap().structure().jtree.len() == 1 {
            break net;
        }
    };
    let engine = Engine::new(&net).unwrap();
    let ev = Evidence::new();
    let before = engine.assign_and_initialize(&ev, &Default::default()).unwrap();
    let mut after = before.clone();
    engine.propagate(&mut after).unwrap();
    assert_eq!(before.cliques, after.cliques);
}

#[test]
fn cg_networks_are_consistent_after_propagation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..50 {
        let net = random_hybrid(
            &mut rng,
            &NetShape {
                nodes: 4 + k % 4,
                logistic: false,
                max_dim: 2,
                parent_prob: 0.5,
            },
        );
        let ev = random_evidence(&mut rng, &net, 0.3);
        let engine = Engine::new(&net).unwrap();
        let run = engine.run(&ev, &EngineConfig::default()).unwrap();
        assert_eq!(run.iterations, 1);
        assert!(engine.consistency_error(&run.state).unwrap() < 1e-8);
        if ev.is_empty() {
            assert!(run.report.log_evidence.abs() < 1e-10);
        }
    }
}

#[test]
fn reports_are_normalized_and_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..60 {
        let net = random_hybrid(
            &mut rng,
            &NetShape {
                nodes: 4 + k % 3,
                logistic: true,
                max_dim: 2,
                parent_prob: 0.5,
            },
        );
        let ev = random_evidence(&mut rng, &net, 0.3);
        let run = Engine::new(&net).unwrap().run(&ev, &EngineConfig::default()).unwrap();
        for m in run.report.marginals.values() {
            match m {
                Marginal::Discrete(p) => assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9),
                Marginal::Continuous { cov, .. } => {
                    assert!(cov.clone().symmetric_eigenvalues().iter().all(|e| *e > -1e-9));
                }
            }
        }
    }
}

#[test]
fn exact_off_the_variational_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    while checked < 40 {
        let net = random_hybrid(
            &mut rng,
            &NetShape {
                nodes: 4,
                logistic: true,
                max_dim: 1,
                parent_prob: 0.5,
            },
        );
        let ev = random_evidence(&mut rng, &net, 0.5);
        let (c, d) = hidden_size(&net, &ev);
        let engine = Engine::new(&net).unwrap();
        let run = engine.run(&ev, &EngineConfig::default()).unwrap();
        if run.variational || c > 2 || d > 12 {
            continue;
        }
        let grid = grid_posterior_default(&net, &ev).unwrap();
        assert!(run.report.max_abs_diff(&grid) < 1e-6);
        assert!((run.report.log_evidence - grid.log_evidence).abs() < 1e-6);
        checked += 1;
    }
}

#[test]
fn em_trace_never_decreases_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for k in 0..60 {
        let net = random_hybrid(
            &mut rng,
            &NetShape {
                nodes: 4 + k % 3,
                logistic: true,
                max_dim: 1,
                parent_prob: 0.5,
            },
        );
        let ev = random_evidence(&mut rng, &net, 0.4);
        for init in [XiInit::Ancestral, XiInit::OwnNoise] {
            let cfg = EngineConfig { init, ..EngineConfig::default() };
            let run = Engine::new(&net).unwrap().run(&ev, &cfg).unwrap();
            assert!(run.loglik_trace().windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }
    }
}
