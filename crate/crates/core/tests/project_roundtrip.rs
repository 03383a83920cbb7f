mod common;

use proptest::prelude::*;

use nsgraph::project::{parse, parse_index_set, parse_pin_spec, parse_seq, ExtremityDecl, FamilyDecl, NetworkDecl, OracleConfig, Project, Query};
use nsgraph::ultrapower::ExtremitySeq;
use nsgraph::{Ident, IndexSet, Membership, Rank, SeqDescriptor};

fn periodic<T: Clone + std::fmt::Debug + 'static>(
    values: impl Strategy<Value = T> + Clone,
) -> impl Strategy<Value = (Vec<T>, Vec<T>)> {
    (prop::collection::vec(values.clone(), 0..3), prop::collection::vec(values, 1..=4))
}

fn index_set() -> impl Strategy<Value = IndexSet> {
    periodic(any::<bool>()).prop_map(|(p, c)| IndexSet::periodic(p, c))
}

fn real() -> impl Strategy<Value = f64> + Clone {
    // Quarter steps keep the values exact in decimal.
    (1u32..40).prop_map(|k| f64::from(k) / 4.0)
}

fn project() -> impl Strategy<Value = Project> {
    (
        1u32..=3,
        prop::collection::vec(any::<u64>(), 1..=3),
        prop::collection::vec((2u64..=6).prop_flat_map(|m| (Just(m), 0..m)), 0..2),
        prop::collection::vec((index_set(), any::<bool>()), 0..2),
        any::<bool>(),
        any::<u64>(),
    )
        .prop_flat_map(|(rank, seeds, tower, pins, with_net, qseed)| {
            let graphs: Vec<_> = seeds.iter().enumerate().map(|(i, &s)| common::layered(&format!("g{i}"), rank, s)).collect();
            let k = graphs.len();
            let assign = periodic(0..k);
            let net = prop::collection::vec((periodic(real()), periodic(real())), 0..=8);
            (Just((rank, graphs, tower, pins, with_net, qseed)), assign, net)
        })
        .prop_map(|((rank, graphs, tower, pins, with_net, qseed), (pre, cycle), data)| {
            let names: Vec<String> = graphs.iter().map(|g| g.name().to_string()).collect();
            let family = (graphs.len() > 1).then(|| FamilyDecl {
                rank: Some(Rank::Natural(rank)),
                assign: SeqDescriptor::periodic(
                    pre.iter().map(|&i| names[i].clone()).collect(),
                    cycle.iter().map(|&i| names[i].clone()).collect(),
                ),
            });
            // Branch ids shared by every prototype (the 0-cycle b[0..3]).
            let shared: Vec<Ident> = (0..3).map(|i| Ident::indexed("b", i)).collect();
            let network = with_net.then(|| {
                let mut n = NetworkDecl::default();
                for (i, ((rp, rc), (ep, ec))) in data.into_iter().enumerate() {
                    let b = shared[i % shared.len()].clone();
                    n.resistances.insert(b.clone(), SeqDescriptor::periodic(rp, rc));
                    if i % 2 == 0 {
                        n.sources.insert(b, SeqDescriptor::periodic(ep, ec));
                    }
                }
                n
            });
            let mut r = common::rng(qseed);
            let g0 = &graphs[0];
            let mut extremities = Vec::new();
            let mut queries = Vec::new();
            for mu in 1..=rank {
                let ex = g0.extremities(Rank::Natural(mu)).unwrap();
                let pick = &ex[rand::Rng::random_range(&mut r, 0..ex.len())];
                let name = format!("e{mu}");
                extremities.push(ExtremityDecl {
                    name: name.clone(),
                    level: Rank::Natural(mu),
                    rep: ExtremitySeq::constant(pick.id.clone()),
                });
                queries.push(Query::Classify(name));
            }
            if rank >= 2 {
                queries.push(Query::Shorted("e1".into(), "e2".into()));
            }
            Project {
                oracle: OracleConfig {
                    tower,
                    pins: pins.into_iter().map(|(s, v)| (s, Membership::from_bool(v))).collect(),
                },
                graphs,
                family,
                network,
                extremities,
                queries,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn printed_projects_parse_back(p in project()) {
        let text = p.to_string();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn damaged_text_never_panics(p in project(), cuts in prop::collection::vec((any::<prop::sample::Index>(), any::<char>()), 1..6)) {
        let mut chars: Vec<char> = p.to_string().chars().collect();
        for (at, c) in cuts {
            let i = at.index(chars.len().max(1));
            if chars.is_empty() || c.is_ascii_digit() {
                chars.insert(i.min(chars.len()), c);
            } else {
                chars[i] = c;
            }
        }
        let text: String = chars.into_iter().collect();
        let _ = parse(&text);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse(&text);
        let _ = parse_index_set(&text);
        let _ = parse_pin_spec(&text);
        let _ = parse_seq(&text);
    }

    #[test]
    fn index_sets_round_trip(s in index_set()) {
        let text = s.to_descriptor();
        prop_assert_eq!(parse_index_set(&text).unwrap(), s);
    }
}

#[test]
fn example_projects_round_trip() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../projects");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "nsg") {
            let p = parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
            assert_eq!(parse(&p.to_string()).unwrap(), p, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn fuzz_seeds_are_valid_inputs() {
    let corpus = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fuzz/corpus");
    let read = |target: &str| -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = std::fs::read_dir(format!("{corpus}/{target}"))
            .unwrap()
            .map(|e| {
                let path = e.unwrap().path();
                (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&path).unwrap())
            })
            .collect();
        out.sort();
        assert!(!out.is_empty(), "{target}: no seeds");
        out
    };
    for (name, text) in read("parse_index_set") {
        parse_index_set(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in read("parse_seq") {
        parse_seq(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in read("parse_pin_spec") {
        parse_pin_spec(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, text) in read("parse_project") {
        if !name.starts_with("faults_") {
            parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
