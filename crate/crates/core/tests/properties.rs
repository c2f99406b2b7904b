use les3_core::ingest::{parse_dataset, write_dataset, Format, TokenDictionary};
use les3_core::l2p::PartitionHierarchy;
use les3_core::nn::{backward, surrogate_loss, PairSample, SiameseMlp};
use les3_core::ptr::{PathTable, Variant};
use les3_core::query::{brute_force, same_answer, search};
use les3_core::tgm::{Htgm, Index, Tgm, UniverseMode};
use les3_core::{similarity, Database, Partition, QueryKind, Score, SetRecord, SimilarityMeasure};
use proptest::prelude::*;

const UNIVERSE: u32 = 24;

fn token_list(universe: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..universe, 1..8)
}

/// A database plus a group label per set, labels covering `0..groups`.
fn db_and_labels() -> impl Strategy<Value = (Vec<Vec<u32>>, Vec<u32>)> {
    prop::collection::vec(token_list(UNIVERSE), 1..30).prop_flat_map(|lists| {
        let n = lists.len();
        (1..=n).prop_flat_map(move |groups| {
            let lists = lists.clone();
            prop::collection::vec(0..groups as u32, n).prop_map(move |mut labels| {
                for (g, label) in labels.iter_mut().enumerate().take(groups) {
                    *label = g as u32;
                }
                (lists.clone(), labels)
            })
        })
    })
}

fn measure() -> impl Strategy<Value = SimilarityMeasure> {
    prop::sample::select(SimilarityMeasure::all().to_vec())
}

fn database(lists: &[Vec<u32>]) -> Database {
    let records = lists
        .iter()
        .enumerate()
        .map(|(i, l)| SetRecord::from_tokens(i as u32, l.iter().copied()).unwrap())
        .collect();
    Database::new(records, UNIVERSE as usize).unwrap()
}

fn query(tokens: &[u32]) -> SetRecord {
    SetRecord::from_tokens(0, tokens.iter().copied()).unwrap()
}

fn kind() -> impl Strategy<Value = QueryKind> {
    prop_oneof![
        (1usize..12).prop_map(QueryKind::Knn),
        prop::sample::select(vec![0.1, 0.25, 1.0 / 3.0, 0.5, 0.6, 0.75, 1.0]).prop_map(QueryKind::Range),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bound_dominates_every_member((lists, labels) in db_and_labels(), q in token_list(UNIVERSE + 4), m in measure()) {
        let db = database(&lists);
        let p = Partition::from_labels(&labels);
        let q = query(&q);
        let ubs = Tgm::build(&db, &p).upper_bounds(&q, m);
        for (set, &g) in labels.iter().enumerate() {
            prop_assert!(ubs[g as usize] >= similarity(&q, db.get(set as u32), m));
        }
    }

    #[test]
    fn coarse_bounds_dominate_children((lists, labels) in db_and_labels(), q in token_list(UNIVERSE), coarse in 1usize..5, m in measure()) {
        let db = database(&lists);
        let fine = Partition::from_labels(&labels);
        let h = PartitionHierarchy::two_level(&fine, coarse.min(fine.num_groups())).unwrap();
        let htgm = Htgm::build(&db, &h, &[0, 1]).unwrap();
        let q = query(&q);
        let top = htgm.tier(0).upper_bounds(&q, m);
        let bottom = htgm.tier(1).upper_bounds(&q, m);
        for (g, ub) in top.iter().enumerate() {
            for &c in htgm.children(0, g) {
                prop_assert!(bottom[c as usize] <= *ub);
            }
        }
    }

    #[test]
    fn encoding_is_additive(a in token_list(UNIVERSE), b in token_list(UNIVERSE), half in any::<bool>()) {
        let pt = PathTable::new(UNIVERSE as usize);
        let variant = if half { Variant::Half } else { Variant::Full };
        let joined: Vec<u32> = a.iter().chain(&b).copied().collect();
        let sum: Vec<u32> = pt.encode(&query(&a), variant).0.iter()
            .zip(&pt.encode(&query(&b), variant).0)
            .map(|(x, y)| x + y)
            .collect();
        prop_assert_eq!(pt.encode(&query(&joined), variant).0, sum);
    }

    #[test]
    fn dataset_text_round_trips(lists in prop::collection::vec(token_list(UNIVERSE), 1..20)) {
        let db = database(&lists);
        let dict = TokenDictionary::identity(UNIVERSE as usize);
        let mut text = Vec::new();
        write_dataset(db.records(), &dict, &mut text).unwrap();
        let parsed = parse_dataset(&text[..], Format::IntegerIds { universe_size: UNIVERSE as usize }).unwrap();
        prop_assert_eq!(parsed.db, db);
    }

    #[test]
    fn indexed_search_matches_full_scan(
        (lists, labels) in db_and_labels(),
        q in token_list(UNIVERSE + 2),
        m in measure(),
        kind in kind(),
        coarse in 1usize..4,
    ) {
        let db = database(&lists);
        let fine = Partition::from_labels(&labels);
        let q = query(&q);
        let truth = brute_force(&db, &q, kind, m).unwrap();
        let h = PartitionHierarchy::two_level(&fine, coarse.min(fine.num_groups())).unwrap();
        for index in [Index::flat(&db, &fine, m), Index::hierarchical(&db, &h, &[0, 1], m).unwrap()] {
            let got = search(&index, &db, &q, kind, m).unwrap();
            prop_assert!(same_answer(&got, &truth, kind), "{:?} vs {:?}", got.hits, truth.hits);
            let verified: usize = got.metrics.candidates;
            prop_assert!(verified >= got.hits.len());
        }
    }

    #[test]
    fn inserts_keep_index_consistent(
        (lists, labels) in db_and_labels(),
        inserts in prop::collection::vec(token_list(UNIVERSE + 6), 1..10),
        q in token_list(UNIVERSE + 6),
        m in measure(),
    ) {
        let mut db = database(&lists);
        let fine = Partition::from_labels(&labels);
        let h = PartitionHierarchy::two_level(&fine, 1).unwrap();
        let mut index = Index::hierarchical(&db, &h, &[0, 1], m).unwrap();
        for tokens in inserts {
            index.update_insert(&mut db, query(&tokens), UniverseMode::Open).unwrap();
        }
        prop_assert!(index.finest().is_consistent_with(&db));
        let q = query(&q);
        for kind in [QueryKind::Knn(5), QueryKind::Range(0.5)] {
            let got = search(&index, &db, &q, kind, m).unwrap();
            prop_assert!(same_answer(&got, &brute_force(&db, &q, kind, m).unwrap(), kind));
        }
    }

    #[test]
    fn index_bytes_round_trip((lists, labels) in db_and_labels(), m in measure(), hierarchical in any::<bool>()) {
        let db = database(&lists);
        let fine = Partition::from_labels(&labels);
        let index = if hierarchical {
            let h = PartitionHierarchy::two_level(&fine, 2.min(fine.num_groups())).unwrap();
            Index::hierarchical(&db, &h, &[0, 1], m).unwrap()
        } else {
            Index::flat(&db, &fine, m)
        };
        let bytes = index.to_bytes();
        let back = Index::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, index);
    }

    #[test]
    fn score_order_agrees_with_floats(a in 0u64..50, b in 1u64..50, c in 0u64..50, d in 1u64..50, roots in any::<(bool, bool)>()) {
        let make = |n: u64, den: u64, root: bool| if root { Score::sqrt_ratio(n.min(den), den) } else { Score::ratio(n.min(den), den) };
        let (x, y) = (make(a, b, roots.0), make(c, d, roots.1));
        let (fx, fy) = (x.to_f64(), y.to_f64());
        if (fx - fy).abs() > 1e-12 {
            prop_assert_eq!(x < y, fx < fy);
        }
        // The rounded value sits within two ulps of the exact score.
        let below = if fx > 1e-300 { f64::from_bits(fx.to_bits() - 2) } else { -f64::MIN_POSITIVE };
        let above = f64::from_bits(fx.to_bits() + 2);
        prop_assert!(x.meets(below));
        prop_assert!(!x.meets(above));
    }

    #[test]
    fn surrogate_gradient_matches_differences(seed in any::<u64>(), dissim in 0.05f64..1.0, xs in prop::collection::vec(0.0f64..1.0, 12)) {
        let dim = 6;
        let mut net = SiameseMlp::init(dim, seed);
        let (x, y) = (xs[..dim].to_vec(), xs[dim..].to_vec());
        let (ox, oy) = (net.forward(&x), net.forward(&y));
        let clear = (ox - oy).abs() > 1e-4 && (ox - 0.5).abs() > 1e-4 && (oy - 0.5).abs() > 1e-4;
        prop_assume!(clear);
        let (_, grads) = backward(&net, &PairSample { rep_x: x.clone(), rep_y: y.clone(), dissim });
        let step = 1e-5;
        for i in 0..net.num_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + step;
            let up = surrogate_loss(net.forward(&x), net.forward(&y), dissim);
            net.params_mut()[i] = orig - step;
            let down = surrogate_loss(net.forward(&x), net.forward(&y), dissim);
            net.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            prop_assert!((grads[i] - numeric).abs() <= 1e-4 * grads[i].abs().max(numeric.abs()).max(1e-6));
        }
    }
}
