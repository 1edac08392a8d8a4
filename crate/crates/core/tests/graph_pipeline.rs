use hybridbn::graph::{
    build_jtree, elimination_order, estimate_cost, is_chordal, max_cliques, moralize, triangulate, Structure, UGraph,
};
use hybridbn::{crop_network, Evidence, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const S: VarId = VarId(0);
const C: VarId = VarId(1);
const P: VarId = VarId(2);
const B: VarId = VarId(3);

#[test]
fn crop_moral_graph_marries_s_and_c() {
    let net = crop_network();
    let moral = moralize(&net);
    assert_eq!(moral.edges(), vec![(0, 1), (0, 2), (1, 2), (2, 3)]);
}

#[test]
fn crop_triangulation_adds_s_b() {
    let net = crop_network();
    let s = Structure::build(&net).unwrap();
    assert_eq!(s.order, vec![1, 2, 0, 3]);
    assert_eq!(s.fill, vec![(0, 3)]);
    assert_eq!(s.jtree.cliques, vec![vec![S, C, P], vec![S, P, B]]);
    assert_eq!(s.jtree.edges.len(), 1);
    assert_eq!(s.jtree.edges[0].separator, vec![S, P]);
    assert_eq!(s.jtree.roots, vec![1]);
    assert!(s.jtree.strong);
    assert_eq!(s.jtree.strong_roots, vec![false, true]);
}

#[test]
fn crop_without_fill_has_no_strong_root() {
    let cliques = vec![vec![S, C, P], vec![P, B]];
    let jt = build_jtree(cliques, &[false, true, true, false]);
    assert!(!jt.strong);
    assert!(jt.strong_roots.iter().all(|s| !s));
}

#[test]
fn crop_cost_estimates() {
    let net = crop_network();
    let s = Structure::build(&net).unwrap();
    let all_hidden = estimate_cost(&s.jtree, &net, |_| true);
    assert_eq!(all_hidden, 20.0);
    let mut ev = Evidence::new();
    ev.observe_scalar(&net, P, 4.0).unwrap();
    assert_eq!(estimate_cost(&s.jtree, &net, |v| !ev.is_observed(v)), 6.0);
    // everything observed: each clique costs one unit
    assert_eq!(estimate_cost(&s.jtree, &net, |_| false), 2.0);
}

#[test]
fn crop_dump_lists_edges_one_per_line() {
    let net = crop_network();
    let dump = Structure::build(&net).unwrap().dump(&net);
    assert!(dump.lines().any(|l| l == "moral S C"));
    assert!(dump.lines().any(|l| l == "fill S B"));
    assert!(dump.lines().any(|l| l == "clique 1 S P B strong"));
}

fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> UGraph {
    let mut g = UGraph::new(n);
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random_bool(p) {
                g.add_edge(a, b);
            }
        }
    }
    g
}

#[test]
fn random_triangulations_give_valid_junction_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(3..=12);
        let g = random_graph(&mut rng, n, 0.3);
        let marks: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let order = elimination_order(&g, &marks);
        // every continuous vertex goes before every discrete one
        let first_disc = order.iter().position(|&v| !marks[v]).unwrap_or(n);
        assert!(order[first_disc..].iter().all(|&v| !marks[v]));
        let (t, fill) = triangulate(&g, &order);
        assert!(is_chordal(&t));
        for (a, b) in fill {
            assert!(!g.has_edge(a, b));
        }
        let cliques = max_cliques(&t).unwrap();
        for (i, c) in cliques.iter().enumerate() {
            for (j, d) in cliques.iter().enumerate() {
                assert!(i == j || !c.iter().all(|x| d.contains(x)), "clique {c:?} inside {d:?}");
            }
            for (k, &a) in c.iter().enumerate() {
                for &b in &c[k + 1..] {
                    assert!(t.has_edge(a, b));
                }
            }
        }
        let jt = build_jtree(
            cliques.into_iter().map(|c| c.into_iter().map(VarId).collect()).collect(),
            &marks,
        );
        assert!(jt.has_running_intersection());
        assert!(jt.strong, "continuous-first elimination must leave a strong root");
        // the tree spans each connected component exactly once
        assert_eq!(jt.edges.len() + jt.roots.len(), jt.len());
    }
}

#[test]
fn chordal_graphs_need_no_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(3..=10);
        let g = random_graph(&mut rng, n, 0.4);
        let (t, _) = triangulate(&g, &elimination_order(&g, &vec![false; n]));
        let again = triangulate(&t, &elimination_order(&t, &vec![false; n]));
        assert!(again.1.is_empty());
    }
}
