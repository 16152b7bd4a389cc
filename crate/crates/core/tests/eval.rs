mod common;

use std::collections::HashMap;

use llfl::data::{Dataset, Example, ExampleId};
use llfl::eval::{
    build_r, fact_type_breakdown, fewshot_accuracy, generalized_accuracy, longtail_bins, spo_generalization,
    standard_accuracy, summarize, transfer_metrics, BinEdges, FnScorer, Metric, RankTable, Scorer, SpoCondition,
    TransferMatrix,
};
use llfl::fact::{FactId, FactShape};
use llfl::rng::fnv1a64;
use llfl::split::{Benchmark, SplitType};
use llfl_oracles::topk_by_sorting;
use proptest::prelude::*;

/// Deterministic pseudo-random score, quantized so ties happen.
fn hashed_score(seed: u64, levels: u64) -> impl Fn(&Example, FactId) -> f64 + Sync {
    move |e, f| {
        let mut bytes = seed.to_le_bytes().to_vec();
        bytes.extend(e.id.0.to_le_bytes());
        bytes.extend(f.0.to_le_bytes());
        (fnv1a64(&bytes) % levels) as f64 / levels as f64
    }
}

fn oracle_accuracy(scorer: &dyn Scorer, ds: &Dataset, examples: &[ExampleId], cands: &[FactId], k: usize) -> f64 {
    let rows: Vec<(u32, Vec<(u32, f64)>)> = examples
        .iter()
        .map(|id| {
            let e = ds.example(*id).unwrap();
            let s = scorer.score_batch(&[e], cands).unwrap().remove(0);
            (e.fact_id.0, cands.iter().map(|c| c.0).zip(s).collect())
        })
        .collect();
    topk_by_sorting(&rows, k)
}

fn random_bench(ds: &Dataset, n_tasks: usize, seed: u64) -> Benchmark {
    let labels: Vec<usize> = (0..ds.facts().len())
        .map(|i| if i < n_tasks { i } else { (fnv1a64(&[seed as u8, i as u8]) % n_tasks as u64) as usize })
        .collect();
    Benchmark::from_assignment(ds, &labels, seed, SplitType::Random).unwrap()
}

#[test]
fn generalized_never_exceeds_standard_over_1000_configurations() {
    let mut violations = 0;
    for trial in 0..1000u64 {
        let n = 3 + (trial % 9) as usize;
        let train: Vec<usize> = (0..n).map(|i| 1 + (i + trial as usize) % 3).collect();
        let ds = common::dataset(common::fact_list(n), &train, 1 + (trial % 3) as usize, trial);
        let b = random_bench(&ds, 2 + (trial % 2) as usize, trial);
        let scorer = FnScorer(hashed_score(trial, 2 + trial % 7));
        let table = RankTable::build(&scorer, &ds, &b).unwrap();
        let space = b.label_space();
        for (j, t) in b.tasks.iter().enumerate() {
            for k in 1..=n {
                let std = table.task_accuracy(j, Metric::Standard, k).unwrap();
                let gen = table.task_accuracy(j, Metric::Generalized, k).unwrap();
                if gen > std {
                    violations += 1;
                }
                if k <= 3 {
                    assert_eq!(std, oracle_accuracy(&scorer, &ds, &t.test_example_ids, &t.fact_ids, k));
                    assert_eq!(gen, oracle_accuracy(&scorer, &ds, &t.test_example_ids, &space, k));
                }
            }
        }
    }
    assert_eq!(violations, 0);
}

fn four_example_set() -> (Dataset, Benchmark) {
    let ds = common::dataset(common::fact_list(4), &[1, 1, 1, 1], 1, 0);
    let b = Benchmark::from_assignment(&ds, &[0, 0, 1, 1], 0, SplitType::Random).unwrap();
    (ds, b)
}

#[test]
fn accuracy_examples() {
    let (ds, b) = four_example_set();
    let gold = |e: &Example, f: FactId| if e.fact_id == f { 1.0 } else { 0.0 };
    let t = &b.tasks[0];
    assert_eq!(standard_accuracy(&FnScorer(gold), &ds, t, 1).unwrap(), 1.0);
    let inverted = |e: &Example, f: FactId| if e.fact_id == f { 0.0 } else { 1.0 };
    assert_eq!(standard_accuracy(&FnScorer(inverted), &ds, t, 2).unwrap(), 1.0);
    assert_eq!(standard_accuracy(&FnScorer(inverted), &ds, t, 1).unwrap(), 0.0);

    // Hand-set score table over the four test examples.
    let table: HashMap<(u64, u32), f64> = [
        ((1, 0), 0.9), ((1, 1), 0.1), ((1, 2), 0.95), ((1, 3), 0.0),
        ((3, 0), 0.2), ((3, 1), 0.2), ((3, 2), 0.0), ((3, 3), 0.3),
        ((5, 0), 0.5), ((5, 1), 0.4), ((5, 2), 0.6), ((5, 3), 0.1),
        ((7, 0), 0.1), ((7, 1), 0.2), ((7, 2), 0.3), ((7, 3), 0.4),
    ]
    .into_iter()
    .collect();
    let hand = FnScorer(move |e: &Example, f: FactId| table[&(e.id.0, f.0)]);
    let space = b.label_space();
    for (j, task) in b.tasks.iter().enumerate() {
        for k in 1..=4 {
            let s = standard_accuracy(&hand, &ds, task, k).unwrap();
            assert_eq!(s, oracle_accuracy(&hand, &ds, &task.test_example_ids, &task.fact_ids, k), "task {j} k {k}");
            let g = generalized_accuracy(&hand, &ds, task, &space, k).unwrap();
            assert_eq!(g, oracle_accuracy(&hand, &ds, &task.test_example_ids, &space, k));
            assert_eq!(generalized_accuracy(&hand, &ds, task, &task.fact_ids, k).unwrap(), s);
        }
    }
}

#[test]
fn an_outranking_candidate_flips_a_hit() {
    let (ds, b) = four_example_set();
    let t = &b.tasks[0];
    let s = |e: &Example, f: FactId| if e.fact_id == f { 0.8 } else if f.0 >= 2 { 0.9 } else { 0.0 };
    assert_eq!(standard_accuracy(&FnScorer(s), &ds, t, 1).unwrap(), 1.0);
    let mut with_rival = t.fact_ids.clone();
    with_rival.push(FactId(3));
    assert_eq!(generalized_accuracy(&FnScorer(s), &ds, t, &with_rival, 1).unwrap(), 0.0);
}

#[test]
fn summaries() {
    let s = summarize(&[0.2, 0.6], &[5, 5]).unwrap();
    assert_eq!(s.mean, s.mean_over_examples);
    let s = summarize(&[1.0, 0.0], &[1, 3]).unwrap();
    assert_eq!((s.mean, s.mean_over_examples), (0.5, 0.25));
}

#[test]
fn transfer_matrix_cells_match_standalone_calls() {
    let ds = common::dataset(common::fact_list(9), &[2; 9], 2, 1);
    let b = random_bench(&ds, 3, 1);
    let scorers: Vec<FnScorer<_>> = (0..3).map(|s| FnScorer(hashed_score(10 + s, 50))).collect();
    let refs: Vec<&dyn Scorer> = scorers.iter().map(|s| s as &dyn Scorer).collect();
    let init = FnScorer(hashed_score(99, 50));
    let space = b.label_space();
    for metric in [Metric::Standard, Metric::Generalized] {
        let m = build_r(&refs, &init, &ds, &b, 2, metric).unwrap();
        for (col, s) in scorers.iter().enumerate() {
            for (j, t) in b.tasks.iter().enumerate() {
                let direct = match metric {
                    Metric::Standard => standard_accuracy(s, &ds, t, 2).unwrap(),
                    Metric::Generalized => generalized_accuracy(s, &ds, t, &space, 2).unwrap(),
                };
                assert_eq!(m.r[j][col], direct);
            }
        }
    }
}

#[test]
fn frozen_model_has_no_backward_transfer() {
    let ds = common::dataset(common::fact_list(9), &[2; 9], 2, 2);
    let b = random_bench(&ds, 3, 2);
    let frozen = FnScorer(hashed_score(5, 1000));
    let refs: Vec<&dyn Scorer> = vec![&frozen; 3];
    let m = build_r(&refs, &frozen, &ds, &b, 1, Metric::Generalized).unwrap();
    for row in &m.r {
        assert!(row.iter().all(|&v| v == row[0]));
    }
    assert_eq!(transfer_metrics(&m).unwrap().bwt, 0.0);

    let single = Benchmark::from_assignment(&ds, &[0; 9], 0, SplitType::Random).unwrap();
    let one = build_r(&[&frozen as &dyn Scorer], &frozen, &ds, &single, 1, Metric::Standard).unwrap();
    assert_eq!(one.len(), 1);
}

#[test]
fn hand_matrix_transfer() {
    let r = vec![vec![0.6, 0.55, 0.5], vec![0.2, 0.7, 0.4], vec![0.1, 0.3, 0.9]];
    let m = TransferMatrix::new(r, vec![0.05, 0.1, 0.2]).unwrap();
    let t = transfer_metrics(&m).unwrap();
    assert!((t.bwt - (-0.2)).abs() < 1e-15);
    assert!((t.fwt - ((0.2 - 0.1) + (0.3 - 0.2)) / 2.0).abs() < 1e-15);
}

/// Dataset with long-tail training counts and all three fact shapes.
fn sliced_dataset(seed: u64) -> (Dataset, Benchmark) {
    let facts = vec![
        common::spo(0, "dog", "riding", "wave"),
        common::spo(1, "person", "riding", "wave"),
        llfl::fact::Fact::new(2, "dog", None, None).unwrap(),
        llfl::fact::Fact::new(3, "person", Some("riding"), None).unwrap(),
        common::spo(4, "cat", "eating", "fish"),
        llfl::fact::Fact::new(5, "cat", None, None).unwrap(),
        common::spo(6, "person", "eating", "fish"),
    ];
    let train = [2, 30, 12, 7, 1, 60, 4];
    let ds = common::dataset(facts, &train, 3, seed);
    let b = Benchmark::from_assignment(&ds, &[0, 0, 0, 1, 1, 1, 1], seed, SplitType::Random).unwrap();
    (ds, b)
}

#[test]
fn bins_recombine_to_overall_accuracy() {
    let (ds, b) = sliced_dataset(1);
    for seed in 0..20 {
        let table = RankTable::build(&FnScorer(hashed_score(seed, 9)), &ds, &b).unwrap();
        for metric in [Metric::Standard, Metric::Generalized] {
            for k in 1..4 {
                let overall = table.accuracy_where(metric, k, |_| true).unwrap();
                let bins = longtail_bins(&table, &ds, &BinEdges::default(), k, metric).unwrap();
                let total: usize = bins.iter().map(|b| b.support).sum();
                assert_eq!(total, table.entries().len());
                let recombined: f64 = bins.iter().filter_map(|b| b.accuracy.map(|a| a * b.support as f64)).sum::<f64>() / total as f64;
                assert!((recombined - overall).abs() < 1e-12);
                let one = longtail_bins(&table, &ds, &BinEdges::new(vec![1]).unwrap(), k, metric).unwrap();
                assert_eq!(one[0].accuracy, Some(overall));

                for t in 0..b.len() {
                    let cells = fact_type_breakdown(&table, &ds, t, k, metric).unwrap();
                    let n: usize = cells.values().map(|c| c.support).sum();
                    let acc: f64 = cells.values().map(|c| c.accuracy * c.support as f64).sum::<f64>() / n as f64;
                    assert!((acc - table.task_accuracy(t, metric, k).unwrap()).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn fewshot_matches_filter_oracle() {
    let (ds, b) = sliced_dataset(2);
    let counts = ds.train_counts();
    let table = RankTable::build(&FnScorer(hashed_score(3, 7)), &ds, &b).unwrap();
    for max in [0, 1, 4, 10, 100] {
        let got = fewshot_accuracy(&table, &ds, max, 2, Metric::Generalized);
        for (t, g) in got.iter().enumerate() {
            let kept: Vec<_> = table.task_entries(t).filter(|e| counts[&e.fact] <= max).collect();
            let expect = (!kept.is_empty())
                .then(|| kept.iter().filter(|e| e.generalized < 2).count() as f64 / kept.len() as f64);
            assert_eq!(*g, expect);
        }
    }
    let all = fewshot_accuracy(&table, &ds, usize::MAX, 1, Metric::Standard);
    for (t, a) in all.iter().enumerate() {
        assert_eq!(a.unwrap(), table.task_accuracy(t, Metric::Standard, 1).unwrap());
    }
    assert!(fewshot_accuracy(&table, &ds, 0, 1, Metric::Standard).iter().all(Option::is_none));
}

#[test]
fn fact_types_match_per_shape_oracle() {
    let (ds, b) = sliced_dataset(3);
    let table = RankTable::build(&FnScorer(hashed_score(4, 5)), &ds, &b).unwrap();
    let cells = fact_type_breakdown(&table, &ds, 0, 1, Metric::Standard).unwrap();
    // The heavier task {3,4,5,6} comes first and holds all three shapes.
    assert_eq!(cells.keys().copied().collect::<Vec<_>>(), FactShape::ALL.to_vec());
    for (shape, cell) in &cells {
        let kept: Vec<_> = table.task_entries(0).filter(|e| ds.fact(e.fact).unwrap().shape() == *shape).collect();
        assert_eq!(cell.support, kept.len());
        assert_eq!(cell.accuracy, kept.iter().filter(|e| e.standard < 1).count() as f64 / kept.len() as f64);
    }
    let spo_only = Benchmark::from_assignment(&ds, &[0, 0, 1, 1, 0, 1, 0], 0, SplitType::Random).unwrap();
    let t2 = RankTable::build(&FnScorer(hashed_score(4, 5)), &ds, &spo_only).unwrap();
    let j = spo_only.tasks.iter().position(|t| t.fact_ids[0] == FactId(0)).unwrap();
    let only = fact_type_breakdown(&t2, &ds, j, 1, Metric::Standard).unwrap();
    assert_eq!(only.keys().copied().collect::<Vec<_>>(), vec![FactShape::SPO]);
}

#[test]
fn compositional_slice() {
    let (ds, b) = sliced_dataset(4);
    let table = RankTable::build(&FnScorer(hashed_score(6, 11)), &ds, &b).unwrap();
    // Rare SPO facts: 0 ⟨dog,riding,wave⟩ (2), 4 ⟨cat,eating,fish⟩ (1), 6 ⟨person,eating,fish⟩ (4).
    // SP,O with threshold 10 needs a frequent ⟨s,p⟩ and a frequent O:
    //   dog-riding: 2 (fact 0) → fails; cat-eating: 1 → fails; person-eating: 4 → fails.
    let cells = spo_generalization(&table, &ds, 10, &SpoCondition::ALL, 1, Metric::Generalized).unwrap();
    let sp_o = cells.iter().find(|c| c.condition == SpoCondition::SpO).unwrap();
    assert_eq!(sp_o.support, 0);
    assert_eq!(sp_o.accuracy, None);
    // P,SO: ⟨riding⟩ is seen 2+30+7 times; ⟨dog,·,wave⟩ only 2.
    // PO,S: ⟨riding,wave⟩ 32 times, ⟨dog⟩ 2+12 = 14 times → fact 0 qualifies.
    let po_s = cells.iter().find(|c| c.condition == SpoCondition::PoS).unwrap();
    assert_eq!(po_s.support, 3);
    let dog_hits = table.entries().iter().filter(|e| e.fact == FactId(0) && e.generalized < 1).count();
    assert_eq!(po_s.accuracy, Some(dog_hits as f64 / 3.0));

    // Threshold one: any rare fact whose parts appear at all.
    let th1 = spo_generalization(&table, &ds, 1, &[SpoCondition::SpPoSo], 1, Metric::Generalized).unwrap();
    assert_eq!(th1[0].support, 9);

    let frequent = common::dataset(common::fact_list(4), &[20; 4], 1, 0);
    let fb = Benchmark::from_assignment(&frequent, &[0, 0, 1, 1], 0, SplitType::Random).unwrap();
    let ft = RankTable::build(&FnScorer(hashed_score(1, 3)), &frequent, &fb).unwrap();
    let none = spo_generalization(&ft, &frequent, 1, &SpoCondition::ALL, 1, Metric::Standard).unwrap();
    assert!(none.iter().all(|c| c.support == 0 && c.accuracy.is_none()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bins_partition_any_edges(
        seed in 0u64..1000,
        gaps in prop::collection::vec(1usize..20, 0..5),
        k in 1usize..4,
    ) {
        let (ds, b) = sliced_dataset(seed);
        let mut edges = vec![1];
        for g in gaps {
            edges.push(edges.last().unwrap() + g);
        }
        let table = RankTable::build(&FnScorer(hashed_score(seed, 13)), &ds, &b).unwrap();
        let bins = longtail_bins(&table, &ds, &BinEdges::new(edges).unwrap(), k, Metric::Generalized).unwrap();
        let total: usize = bins.iter().map(|b| b.support).sum();
        prop_assert_eq!(total, table.entries().len());
        let overall = table.accuracy_where(Metric::Generalized, k, |_| true).unwrap();
        let re: f64 = bins.iter().filter_map(|b| b.accuracy.map(|a| a * b.support as f64)).sum::<f64>() / total as f64;
        prop_assert!((re - overall).abs() < 1e-12);
    }
}
