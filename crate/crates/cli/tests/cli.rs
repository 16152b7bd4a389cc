mod common;

use std::fs;

use common::*;
use llfl::io::read_json;
use llfl::split::Benchmark;
use llfl_cli::commands::EvalReport;

const BENCH: [&str; 2] = ["--benchmark", "s/benchmark.json"];

fn split_semantic(dir: &std::path::Path, tasks: &str) {
    let mut a = with_data(&["split", "--mode", "semantic", "--tasks", tasks, "--out", "s"]);
    a.extend(["--seed", "0"]);
    ok(dir, &a);
}

fn train(dir: &std::path::Path, method: &str, lambda: &str, out: &str, extra: &[&str]) -> std::process::Output {
    let mut a = with_data(&["train", "--method", method, "--lambda", lambda, "--epochs", "3", "--out", out]);
    a.extend(BENCH);
    a.extend(extra);
    llfl(dir, &a)
}

#[test]
fn semantic_split_recovers_two_planted_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &["--clusters", "2", "--embed-dim", "6"]);
    split_semantic(dir, "4");
    let bench: Benchmark = read_json(&dir.join("s/benchmark.json")).unwrap();
    let cluster_of: Vec<usize> = read_json(&dir.join("d/clusters.json")).unwrap();
    assert_eq!(bench.len(), 4);
    for t in &bench.tasks {
        let c = cluster_of[t.fact_ids[0].0 as usize];
        assert!(t.fact_ids.iter().all(|f| cluster_of[f.0 as usize] == c), "task {} straddles clusters", t.index);
    }
    assert!(dir.join("s/dendrogram.json").is_file());
    assert_eq!(csv_rows(dir.join("s/similarity_w2v.csv")).len(), 4);
}

#[test]
fn random_split_is_reproducible_and_has_no_dendrogram() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    for out in ["r1", "r2"] {
        ok(dir, &with_data(&["split", "--mode", "random", "--tasks", "4", "--trials", "1", "--seed", "7", "--out", out]));
    }
    assert_same_outputs(&dir.join("r1"), &dir.join("r2"));
    assert!(!dir.join("r1/dendrogram.json").exists());
}

#[test]
fn usage_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    let out = llfl(dir, &with_data(&["split", "--mode", "semantic", "--tasks", "0", "--out", "s"]));
    assert_eq!(out.status.code(), Some(2));
    let out = llfl(dir, &with_data(&["split", "--mode", "sideways", "--tasks", "2", "--out", "s"]));
    assert_eq!(out.status.code(), Some(2));
    split_semantic(dir, "2");
    let out = train(dir, "ewc", "1", "t", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for m in ["finetune", "si", "mas", "imm-mean", "imm-mode", "expertgate", "joint"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn parse_errors_name_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    let facts = dir.join("d/facts.tsv");
    let mut text = fs::read_to_string(&facts).unwrap();
    text.push_str("x\ty\t*\t*\n");
    fs::write(&facts, &text).unwrap();
    let n = text.lines().count();
    let out = llfl(dir, &with_data(&["split", "--mode", "random", "--tasks", "2", "--out", "s"]));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("facts.tsv:{n}:")), "{err}");

    text.truncate(text.len() - "x\ty\t*\t*\n".len());
    text.push_str("999\tzebra\tunicorn\t*\n");
    fs::write(&facts, &text).unwrap();
    let err = String::from_utf8_lossy(&llfl(dir, &with_data(&["split", "--mode", "random", "--tasks", "2", "--out", "s"])).stderr).into_owned();
    assert!(err.contains("unicorn") && err.contains("zebra"), "{err}");
}

#[test]
fn zero_lambda_matches_finetune_bitwise_and_runs_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    split_semantic(dir, "3");
    for (m, out) in [("finetune", "ft"), ("mas", "mas"), ("mas", "mas2"), ("si", "si")] {
        let o = train(dir, m, "0", out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for n in 0..=3 {
        let f = format!("task_{n}.model");
        assert_eq!(bytes(dir.join("ft").join(&f)), bytes(dir.join("mas").join(&f)), "{f}");
        assert_eq!(bytes(dir.join("ft").join(&f)), bytes(dir.join("si").join(&f)), "{f}");
    }
    assert_same_outputs(&dir.join("mas"), &dir.join("mas2"));
}

#[test]
fn resume_needs_the_previous_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    split_semantic(dir, "3");
    assert!(train(dir, "si", "1", "full", &[]).status.success());
    assert!(train(dir, "si", "1", "part", &[]).status.success());
    fs::remove_file(dir.join("part/state_2.ckpt")).unwrap();
    fs::remove_file(dir.join("part/task_3.model")).unwrap();

    let out = train(dir, "si", "1", "part", &["--resume", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task 2 is missing"));
    assert!(!dir.join("part/task_3.model").exists());

    let out = train(dir, "si", "1", "part", &["--resume"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for n in 0..=3 {
        assert_eq!(bytes(dir.join(format!("full/task_{n}.model"))), bytes(dir.join(format!("part/task_{n}.model"))));
        if n > 0 {
            assert_eq!(bytes(dir.join(format!("full/state_{n}.ckpt"))), bytes(dir.join(format!("part/state_{n}.ckpt"))));
        }
    }
    let out = train(dir, "mas", "1", "part", &["--resume", "3"]);
    assert_eq!(out.status.code(), Some(1), "state from a different method must be refused");
}

#[test]
fn gate_and_imm_and_joint_runs_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    split_semantic(dir, "2");
    for m in ["expertgate", "imm-mode", "imm-mean", "joint"] {
        let o = train(dir, m, "1", m, &[]);
        assert!(o.status.success(), "{m}: {}", String::from_utf8_lossy(&o.stderr));
        let e = format!("{m}-e");
        let mut a = with_data(&["eval", "--checkpoints", m, "--out", &e]);
        a.extend(BENCH);
        ok(dir, &a);
    }
    assert!(!dir.join("joint/state_1.ckpt").exists());
}

#[test]
fn eval_reports_and_invariants() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    split_semantic(dir, "4");
    assert!(train(dir, "finetune", "0", "t", &[]).status.success());

    let mut a = with_data(&["eval", "--checkpoints", "t", "--out", "e"]);
    a.extend(BENCH);
    ok(dir, &a);
    let r: EvalReport = read_json(&dir.join("e/report.json")).unwrap();
    assert_eq!(r.topk.iter().map(|b| b.k).collect::<Vec<_>>(), vec![1, 5, 10]);
    for b in &r.topk {
        for t in 0..r.tasks {
            assert!(b.accuracy_table.generalized[t] <= b.accuracy_table.standard[t]);
            for col in 0..r.tasks {
                assert!(b.generalized.r.r[t][col] <= b.standard.r.r[t][col]);
            }
        }
    }

    let mut a = with_data(&["eval", "--checkpoints", "t", "--topk", "5", "--out", "e5"]);
    a.extend(BENCH);
    ok(dir, &a);
    let r5: EvalReport = read_json(&dir.join("e5/report.json")).unwrap();
    assert_eq!(r5.topk.len(), 1);
    assert_eq!(r5.topk[0].k, 5);
    assert_eq!(r5.topk[0], r.topk[1]);

    // Frozen: the same network after every task.
    fs::create_dir(dir.join("frozen")).unwrap();
    for n in 0..=4 {
        fs::copy(dir.join("t/task_1.model"), dir.join(format!("frozen/task_{n}.model"))).unwrap();
    }
    let mut a = with_data(&["eval", "--checkpoints", "frozen", "--out", "ef"]);
    a.extend(BENCH);
    ok(dir, &a);
    let rf: EvalReport = read_json(&dir.join("ef/report.json")).unwrap();
    for b in &rf.topk {
        assert_eq!(b.standard.bwt, Some(0.0));
        assert_eq!(b.generalized.bwt, Some(0.0));
        assert_eq!(b.generalized.fwt, Some(0.0));
    }

    fs::remove_file(dir.join("frozen/task_3.model")).unwrap();
    let mut a = with_data(&["eval", "--checkpoints", "frozen", "--out", "ef2"]);
    a.extend(BENCH);
    let out = llfl(dir, &a);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task_3.model"));
}

fn analyzed(dir: &std::path::Path, synth_extra: &[&str]) {
    synth(dir, synth_extra);
    split_semantic(dir, "4");
    assert!(train(dir, "mas", "1", "t", &[]).status.success());
    let mut a = with_data(&["eval", "--checkpoints", "t", "--out", "e"]);
    a.extend(BENCH);
    ok(dir, &a);
    let mut a = with_data(&["analyze", "--report", "e", "--out", "a"]);
    a.extend(BENCH);
    ok(dir, &a);
}

#[test]
fn analyze_slices_recombine() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    analyzed(dir, &["--long-tail", "--train-per-fact", "20"]);
    let r: EvalReport = read_json(&dir.join("e/report.json")).unwrap();
    let total: usize = r.test_sizes.iter().sum();
    let bins = csv_rows(dir.join("a/longtail.csv"));
    for b in &r.topk {
        for metric in ["standard", "generalized"] {
            let rows: Vec<_> = bins.iter().filter(|x| x[0] == b.k.to_string() && x[1] == metric).collect();
            let support: usize = rows.iter().map(|x| x[4].parse::<usize>().unwrap()).sum();
            assert_eq!(support, total);
            let hits: f64 = rows.iter().map(|x| x[4].parse::<f64>().unwrap() * x[5].parse::<f64>().unwrap()).sum();
            let acc = if metric == "standard" { &b.accuracy_table.standard } else { &b.accuracy_table.generalized };
            let overall: f64 = acc.iter().zip(&r.test_sizes).map(|(a, &n)| a * n as f64).sum::<f64>() / total as f64;
            assert!((hits / total as f64 - overall).abs() < 1e-12);
        }
    }
    for f in ["fewshot.csv", "fact_types.csv", "spo_generalization.csv", "gained_knowledge.csv", "analysis.json"] {
        assert!(dir.join("a").join(f).is_file(), "{f}");
    }
}

#[test]
fn empty_fewshot_rows_are_omitted() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    analyzed(dir, &["--train-per-fact", "12"]);
    assert!(csv_rows(dir.join("a/fewshot.csv")).is_empty());
    let text = fs::read_to_string(dir.join("a/fewshot.csv")).unwrap();
    assert_eq!(text.trim(), "k,metric,task,accuracy");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    fs::write(
        dir.join("run.cfg"),
        "# split settings\nmode = random\ntasks = 3\ntrials = 5\nseed = 7\nfacts = d/facts.tsv\nembeddings = d/embeddings.txt\nexamples = d/examples.csv\n",
    )
    .unwrap();
    ok(dir, &["split", "--config", "run.cfg", "--out", "c1"]);
    ok(dir, &["split", "--config", "run.cfg", "--tasks", "2", "--out", "c2"]);
    let b1: Benchmark = read_json(&dir.join("c1/benchmark.json")).unwrap();
    let b2: Benchmark = read_json(&dir.join("c2/benchmark.json")).unwrap();
    assert_eq!((b1.len(), b2.len()), (3, 2));
    let m = fs::read_to_string(dir.join("c2/split.manifest.json")).unwrap();
    assert!(m.contains("\"tasks\": \"2\"") && m.contains("\"trials\": \"5\""), "{m}");

    fs::write(dir.join("bad.cfg"), "tasks = 3\ntask = 4\n").unwrap();
    assert_eq!(llfl(dir, &["split", "--config", "bad.cfg"]).status.code(), Some(2));
}

#[test]
fn thread_variable_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_llfl"))
        .current_dir(tmp.path())
        .env("LLFL_THREADS", "0")
        .args(["synth", "--out", "d"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_llfl"))
        .current_dir(tmp.path())
        .env("LLFL_THREADS", "1")
        .args(["synth", "--out", "d"])
        .output()
        .unwrap();
    assert!(out.status.success());
}
