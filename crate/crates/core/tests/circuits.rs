mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{brute_mesh, id, oracle, random_network, rng, RandomNet};
use nsgraph::graph::GraphBuilder;
use nsgraph::hyperreal::Magnitude;
use nsgraph::network::{solve_standard, verify_laws, Law, NetworkError, NsNetwork, StandardNetwork};
use nsgraph::seq::{generators, SeqDescriptor};
use nsgraph::ultrapower::GraphFamily;
use nsgraph::{Ident, Traits};

#[test]
fn brute_force_oracle_on_hand_circuits() {
    // 1 Ω and 2 Ω in series with 3 V: 1 A.
    let i = brute_mesh(2, &[(0, 1), (1, 0)], &[1.0, 2.0], &[3.0, 0.0]);
    assert!((i[0] - 1.0).abs() < 1e-15 && (i[1] - 1.0).abs() < 1e-15);
    // Two 1 Ω branches in parallel, 2 V in the first: 1 A circulates.
    let i = brute_mesh(2, &[(0, 1), (0, 1)], &[1.0, 1.0], &[2.0, 0.0]);
    assert!((i[0] - 1.0).abs() < 1e-15 && (i[1] + 1.0).abs() < 1e-15);
    // A bridge carries nothing.
    let i = brute_mesh(3, &[(0, 1), (1, 0), (1, 2)], &[1.0, 1.0, 1.0], &[1.0, 0.0, 4.0]);
    assert_eq!(i[2], 0.0);
}

#[test]
fn nodal_solver_matches_mesh_oracle() {
    let mut r = rng(7);
    for trial in 0..200 {
        let net = random_network(&mut r, 12);
        let want = brute_mesh(net.nodes, &net.branches, &net.r, &net.e);
        let got = solve_standard(&net.standard()).unwrap();
        let scale = net.scale(&want);
        for (k, w) in want.iter().enumerate() {
            let g = got.currents[&RandomNet::branch(k)];
            assert!((g - w).abs() <= 1e-9 * scale, "trial {trial} branch {k}: {g} vs {w}");
        }
    }
}

#[test]
fn tellegen_by_direct_sum_on_five_branches() {
    let g = GraphBuilder::new()
        .zero_nodes(["a", "b", "c", "d"])
        .branch("p", "a", "b")
        .branch("q", "b", "c")
        .branch("s", "c", "a")
        .branch("t", "c", "d")
        .branch("u", "d", "a")
        .build("five", 0);
    let r: BTreeMap<Ident, f64> = [("p", 1.0), ("q", 2.5), ("s", 0.5), ("t", 4.0), ("u", 3.0)]
        .into_iter()
        .map(|(b, x)| (id(b), x))
        .collect();
    let e: BTreeMap<Ident, f64> = [("p", 5.0), ("t", -2.0)].into_iter().map(|(b, x)| (id(b), x)).collect();
    let sol = StandardNetwork::new(&g, r, e).unwrap().solve().unwrap();
    let sum: f64 = sol.currents.keys().map(|b| sol.currents[b] * sol.voltages[b]).sum();
    let scale: f64 = sol.currents.keys().map(|b| (sol.currents[b] * sol.voltages[b]).abs()).sum();
    assert!(sum.abs() <= 1e-12 * scale.max(1.0), "Σ v·i = {sum}");
}

fn divider(horizon: u64) -> NsNetwork {
    let g = GraphBuilder::new()
        .zero_nodes(["a", "b"])
        .branch("b1", "a", "b")
        .branch("b2", "b", "a")
        .build("divider", 0);
    let traits = Traits {
        unbounded: true,
        monotone: true,
        injective: true,
        ..Traits::default()
    };
    NsNetwork::new(
        GraphFamily::constant(g),
        [
            (id("b1"), SeqDescriptor::constant(1.0)),
            (id("b2"), generators::affine(1.0, 1.0, horizon, traits)),
        ]
        .into(),
        [(id("b1"), SeqDescriptor::constant(1.0))].into(),
    )
    .unwrap()
}

#[test]
fn divider_operating_point() {
    let op = divider(1 << 20).operating_point(oracle(), 64).unwrap();
    for b in ["b1", "b2"] {
        let i = &op.currents[&id(b)];
        for n in 0..=64u64 {
            let want = 1.0 / (n as f64 + 2.0);
            assert!((i.rep().value_at(n).unwrap() - want).abs() <= 1e-15);
        }
        assert_eq!(i.classify_magnitude(), Magnitude::Infinitesimal);
        assert_eq!(i.standard_part().unwrap(), 0.0);
    }
    let report = verify_laws(&op, 64, 1e-9).unwrap();
    assert!(report.passed(), "{report}");
    for law in Law::ALL {
        assert!(report.max_residual[&law] <= 1e-9);
    }
}

#[test]
fn perturbation_is_caught_at_both_endpoints() {
    let op = divider(64).operating_point(oracle(), 64).unwrap();
    let bad = op.with_current_offset(&id("b2"), 0.1);
    let report = verify_laws(&bad, 64, 1e-9).unwrap();
    assert!(!report.passed_law(Law::Kcl));
    let at: std::collections::BTreeSet<String> = report
        .failures
        .iter()
        .filter(|w| w.law == Law::Kcl && w.n == 0)
        .map(|w| w.at.clone())
        .collect();
    assert!(at.contains("a") && at.contains("b"), "{at:?}");
}

#[test]
fn zero_sources_give_zero_operating_point() {
    let mut r = rng(3);
    let net = random_network(&mut r, 12);
    let zero = RandomNet { e: vec![0.0; net.e.len()], ..net };
    let sol = solve_standard(&zero.standard()).unwrap();
    assert!(sol.currents.values().all(|&i| i == 0.0));
    assert!(sol.voltages.values().all(|&v| v == 0.0));
}

#[test]
fn solver_failures_are_reported() {
    let g = GraphBuilder::new()
        .zero_nodes(["a", "b", "c"])
        .branch("p", "a", "b")
        .branch("q", "b", "c")
        .branch("s", "c", "a")
        .build("tri", 0);
    let r = |x: f64| -> BTreeMap<Ident, f64> { [(id("p"), 1.0), (id("q"), x), (id("s"), 1.0)].into() };
    assert!(matches!(
        StandardNetwork::new(&g, r(-1.0), BTreeMap::new()),
        Err(NetworkError::NonPositiveResistance { .. })
    ));
    let stiff = StandardNetwork::new(&g, r(1e-14), BTreeMap::new()).unwrap();
    assert!(matches!(stiff.solve(), Err(NetworkError::NumericalFailure { .. })));
    let fam = GraphFamily::constant(g);
    let net = NsNetwork::new(
        fam,
        [
            (id("p"), SeqDescriptor::constant(1.0)),
            (id("q"), SeqDescriptor::cycle(vec![1.0, 1e-14])),
            (id("s"), SeqDescriptor::constant(1.0)),
        ]
        .into(),
        BTreeMap::new(),
    )
    .unwrap();
    match net.operating_point(Arc::clone(&oracle()), 8) {
        Err(NetworkError::AtIndex { n, .. }) => assert_eq!(n, 1),
        other => panic!("{other:?}"),
    }
}
