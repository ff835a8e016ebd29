use std::collections::{BTreeMap, BTreeSet};

use drdw_core::corpus::{compile_ntd, largest_remainder, Attribute, CompiledNtd, NtdDimension, NtdSpec};
use drdw_core::rerank::{
    gkl_rerank, mmr_rerank, one_hot_similarity, pm2_rerank, rank_by_score, space_by_category, RerankCandidate,
};
use drdw_core::sampler::{build_constraints, solve_exact, Objective};
use drdw_core::{walk_scores, walk_scores_with, InteractionGraph, ScoredItem, WalkScratch};
use proptest::prelude::*;

fn spec(dims: &[Vec<u32>]) -> Option<NtdSpec> {
    let dimensions = dims
        .iter()
        .enumerate()
        .map(|(d, weights)| {
            let total: u32 = weights.iter().sum();
            let buckets: Vec<(String, f64)> = weights
                .iter()
                .enumerate()
                .map(|(b, w)| (format!("b{b}"), f64::from(*w) / f64::from(total)))
                .collect();
            NtdDimension::new(format!("d{d}"), Attribute::Custom(format!("a{d}")), buckets)
        })
        .collect();
    NtdSpec::new(dimensions).ok()
}

prop_compose! {
    fn instance()(
        w0 in prop::collection::vec(1u32..5, 2..4),
        w1 in prop::collection::vec(1u32..5, 2..4),
        size in 1usize..8,
        n in 1usize..14,
    )(
        cands in prop::collection::vec((0u32..64, 0usize..w0.len(), 0usize..w1.len()), n),
        w0 in Just(w0), w1 in Just(w1), size in Just(size),
    ) -> (CompiledNtd, Vec<ScoredItem>, BTreeMap<String, Vec<usize>>) {
        let compiled = compile_ntd(&spec(&[w0, w1]).unwrap(), size).unwrap();
        let items = cands.iter().enumerate()
            .map(|(i, (s, _, _))| ScoredItem::new(format!("i{i:02}"), f64::from(*s) / 8.0))
            .collect();
        let attrs = cands.iter().enumerate()
            .map(|(i, (_, b0, b1))| (format!("i{i:02}"), vec![*b0, *b1]))
            .collect();
        (compiled, items, attrs)
    }
}

fn candidate(id: &str, score: f64, buckets: Vec<usize>) -> RerankCandidate {
    RerankCandidate {
        id: id.into(),
        score,
        buckets,
        embedding: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn full_sets_match_targets_and_scale_freely((compiled, items, attrs) in instance(), factor in prop::sample::select(vec![0.5, 2.0, 3.0, 10.0])) {
        let cs = build_constraints(&items, &compiled, &attrs, &Objective::WalkProbability).unwrap();
        let Some(sol) = solve_exact(&cs) else { return Ok(()) };
        prop_assert_eq!(sol.selected.len(), compiled.list_size);
        for (d, dim) in compiled.dimensions.iter().enumerate() {
            let mut hist = vec![0; dim.counts.len()];
            for id in &sol.selected {
                hist[attrs[id][d]] += 1;
            }
            prop_assert_eq!(&hist, &dim.counts);
        }
        let scaled: Vec<ScoredItem> = items.iter().map(|c| ScoredItem::new(c.id.clone(), c.score * factor)).collect();
        let cs2 = build_constraints(&scaled, &compiled, &attrs, &Objective::WalkProbability).unwrap();
        prop_assert_eq!(solve_exact(&cs2).unwrap().selected, sol.selected);
    }

    #[test]
    fn largest_remainder_hits_total(weights in prop::collection::vec(0u32..10, 1..6), total in 0usize..40) {
        let sum: u32 = weights.iter().sum();
        prop_assume!(sum > 0);
        let props: Vec<f64> = weights.iter().map(|w| f64::from(*w) / f64::from(sum)).collect();
        let counts = largest_remainder(&props, total);
        prop_assert_eq!(counts.iter().sum::<usize>(), total);
        for (c, p) in counts.iter().zip(&props) {
            let quota = p * total as f64;
            prop_assert!((*c as f64 - quota).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn relevance_endpoints_reproduce_score_order(
        scores in prop::collection::vec(0u32..20, 1..15),
        buckets in prop::collection::vec(0usize..2, 15),
        list_size in 1usize..10,
    ) {
        let cands: Vec<RerankCandidate> = scores.iter().enumerate()
            .map(|(i, s)| candidate(&format!("c{i:02}"), f64::from(*s), vec![buckets[i]]))
            .collect();
        let target = compile_ntd(&spec(&[vec![1, 1]]).unwrap(), list_size).unwrap();
        let ids: Vec<String> = cands.iter().map(|c| c.id.clone()).collect();
        let map: BTreeMap<String, f64> = cands.iter().map(|c| (c.id.clone(), c.score)).collect();
        let mut expected = rank_by_score(&ids, &map).unwrap();
        expected.truncate(list_size);
        prop_assert_eq!(gkl_rerank(&cands, &target, &[0], 0.0, list_size).unwrap(), expected.clone());
        let sim = |a: &RerankCandidate, b: &RerankCandidate| one_hot_similarity(a, b, &[0]);
        prop_assert_eq!(mmr_rerank(&cands, &sim, 1.0, list_size).unwrap(), expected);
    }

    #[test]
    fn rerankers_return_distinct_subsets(
        scores in prop::collection::vec(0u32..20, 1..20),
        buckets in prop::collection::vec((0usize..3, 0usize..2), 20),
        list_size in 1usize..12,
        lambda in 0.0f64..=1.0,
    ) {
        let cands: Vec<RerankCandidate> = scores.iter().enumerate()
            .map(|(i, s)| candidate(&format!("c{i:02}"), f64::from(*s), vec![buckets[i].0, buckets[i].1]))
            .collect();
        let target = compile_ntd(&spec(&[vec![2, 3, 5], vec![1, 1]]).unwrap(), list_size).unwrap();
        let sim = |a: &RerankCandidate, b: &RerankCandidate| one_hot_similarity(a, b, &[0, 1]);
        let pool: BTreeSet<&str> = cands.iter().map(|c| c.id.as_str()).collect();
        for out in [
            gkl_rerank(&cands, &target, &[0, 1], lambda, list_size).unwrap(),
            pm2_rerank(&cands, &target, &[0, 1], list_size).unwrap(),
            mmr_rerank(&cands, &sim, lambda, list_size).unwrap(),
        ] {
            prop_assert_eq!(out.len(), list_size.min(cands.len()));
            let set: BTreeSet<&str> = out.iter().map(String::as_str).collect();
            prop_assert_eq!(set.len(), out.len());
            prop_assert!(set.is_subset(&pool));
        }
    }

    #[test]
    fn pm2_seats_stay_within_one_of_quota(weights in prop::collection::vec(1u32..6, 2..5), list_size in 1usize..25) {
        let target = compile_ntd(&spec(std::slice::from_ref(&weights)).unwrap(), list_size).unwrap();
        // every bucket can fill the whole list on its own
        let cands: Vec<RerankCandidate> = (0..weights.len() * list_size)
            .map(|i| candidate(&format!("c{i:03}"), (i % 7) as f64, vec![i % weights.len()]))
            .collect();
        let out = pm2_rerank(&cands, &target, &[0], list_size).unwrap();
        let bucket_of: BTreeMap<&str, usize> = cands.iter().map(|c| (c.id.as_str(), c.buckets[0])).collect();
        let mut seats = vec![0usize; weights.len()];
        for id in &out {
            seats[bucket_of[id.as_str()]] += 1;
        }
        for (s, p) in seats.iter().zip(&target.dimensions[0].proportions) {
            let floor = (p * list_size as f64).floor() as i64;
            prop_assert!((*s as i64 - floor).abs() <= 1, "seats {:?} props {:?}", seats, target.dimensions[0].proportions);
        }
    }

    #[test]
    fn spacing_keeps_items(cats in prop::collection::vec(0u8..4, 0..20)) {
        let ids: Vec<String> = (0..cats.len()).map(|i| format!("x{i:02}")).collect();
        let map: BTreeMap<String, String> = ids.iter().zip(&cats).map(|(i, c)| (i.clone(), c.to_string())).collect();
        let spaced = space_by_category(&ids, &map);
        let mut a = spaced.clone();
        a.sort();
        prop_assert_eq!(a, ids);
    }

    #[test]
    fn walk_mass_is_conserved(edges in prop::collection::btree_set((0u8..8, 0u8..8), 1..30), hops in prop::sample::select(vec![1u32, 3, 5, 7])) {
        let named: Vec<(String, String)> = edges.iter().map(|(u, i)| (format!("u{u}"), format!("i{i}"))).collect();
        let g = InteractionGraph::from_edges(named.iter().map(|(u, i)| (u.as_str(), i.as_str())));
        let mut scratch = WalkScratch::new();
        for u in g.users() {
            let ws = walk_scores(&g, g.user_id(u), hops).unwrap();
            prop_assert!((ws.total() - 1.0).abs() < 1e-9);
            // reused buffers give the same walk as fresh ones
            let again = walk_scores_with(&g, g.user_id(u), hops, &mut scratch).unwrap();
            prop_assert_eq!(again.to_id_map(&g), ws.to_id_map(&g));
        }
    }
}
