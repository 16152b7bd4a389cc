use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use llfl::data::{Dataset, ExampleId};
use llfl::eval::{
    fact_type_breakdown, fewshot_accuracy, longtail_bins, spo_generalization, AccuracyTable, BinEdges, BinReport,
    Metric, RankEntry, RankTable, ShapeCell, SpoCell, SpoCondition, FEWSHOT_MAX,
};
use llfl::fact::{FactId, FactShape};
use llfl::io::{read_json, write_json};
use llfl::split::{similarity_matrices, Benchmark};

use super::eval::{EvalReport, TransferBlock, RANKS_FILE, REPORT_FILE};
use super::{load_benchmark, load_dataset, num, opt_num, out_dir, write_csv};
use crate::args::AnalyzeArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::settings::{parse_topk, Settings};

pub const SPO_THRESHOLDS: [usize; 3] = [1, 5, 10];
const RECOMBINE_TOL: f64 = 1e-12;

#[derive(Serialize)]
struct FactTypeRow {
    task: usize,
    shape: FactShape,
    #[serde(flatten)]
    cell: ShapeCell,
}

#[derive(Serialize)]
struct MetricSlices {
    bins: Vec<BinReport>,
    /// One entry per task; `None` where no test example qualifies.
    fewshot: Vec<Option<f64>>,
    fact_types: Vec<FactTypeRow>,
    spo_generalization: Vec<SpoCell>,
}

#[derive(Serialize)]
struct KAnalysis {
    k: usize,
    accuracy_table: AccuracyTable,
    standard: TransferBlock,
    generalized: TransferBlock,
    slices: BTreeMap<&'static str, MetricSlices>,
}

#[derive(Serialize)]
struct TaskSimilarity {
    w2v: Vec<Vec<f64>>,
    spo_overlap: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Analysis {
    tasks: usize,
    test_sizes: Vec<usize>,
    topk: Vec<KAnalysis>,
    task_similarity: TaskSimilarity,
}

fn read_ranks(dir: &Path, report: &EvalReport, bench: &Benchmark) -> CliResult<RankTable> {
    let path = dir.join(RANKS_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(|e| bad(&path, e))?;
    let owner = bench.fact_owner();
    let mut entries = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(&path, e))?;
        let field = |j: usize| -> CliResult<u64> {
            rec.get(j).and_then(|v| v.parse().ok()).ok_or_else(|| {
                CliError::Core(llfl::Error::Parse {
                    path: path.clone(),
                    line: i as u64 + 2,
                    msg: format!("column {} is not a non-negative integer", j + 1),
                })
            })
        };
        let fact = FactId(field(1)? as u32);
        let task = field(2)? as usize;
        if owner.get(&fact) != Some(&(task.wrapping_sub(1))) {
            return Err(CliError::Invariant(format!(
                "{}: fact {fact} is not owned by task {task}",
                path.display()
            )));
        }
        entries.push(RankEntry {
            example: ExampleId(field(0)?),
            fact,
            task: task - 1,
            standard: field(3)? as usize,
            generalized: field(4)? as usize,
        });
    }
    Ok(RankTable::from_entries(entries, report.test_sizes.clone())?)
}

fn bad(path: &Path, e: csv::Error) -> CliError {
    CliError::Core(llfl::Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RECOMBINE_TOL
}

fn slices(table: &RankTable, dataset: &Dataset, k: usize, metric: Metric, tasks: usize) -> CliResult<MetricSlices> {
    let bins = longtail_bins(table, dataset, &BinEdges::default(), k, metric)?;
    let total: usize = bins.iter().map(|b| b.support).sum();
    if total != table.entries().len() {
        return Err(CliError::Invariant(format!(
            "bin supports sum to {total}, test set has {}",
            table.entries().len()
        )));
    }
    let overall = table.accuracy_where(metric, k, |_| true).unwrap_or(0.0);
    let recombined = bins
        .iter()
        .filter_map(|b| b.accuracy.map(|a| a * b.support as f64))
        .sum::<f64>()
        / total.max(1) as f64;
    if !close(recombined, overall) {
        return Err(CliError::Invariant(format!(
            "bins recombine to {recombined}, overall accuracy is {overall}"
        )));
    }

    let mut fact_types = Vec::new();
    for t in 0..tasks {
        let cells = fact_type_breakdown(table, dataset, t, k, metric)?;
        let n: usize = cells.values().map(|c| c.support).sum();
        let acc = cells.values().map(|c| c.accuracy * c.support as f64).sum::<f64>() / n.max(1) as f64;
        let task_acc = table.task_accuracy(t, metric, k)?;
        if !close(acc, task_acc) {
            return Err(CliError::Invariant(format!(
                "task {} fact-type cells recombine to {acc}, task accuracy is {task_acc}",
                t + 1
            )));
        }
        fact_types.extend(cells.into_iter().map(|(shape, cell)| FactTypeRow { task: t + 1, shape, cell }));
    }

    let mut spo = Vec::new();
    for th in SPO_THRESHOLDS {
        spo.extend(spo_generalization(table, dataset, th, &SpoCondition::ALL, k, metric)?);
    }
    Ok(MetricSlices {
        bins,
        fewshot: fewshot_accuracy(table, dataset, FEWSHOT_MAX, k, metric),
        fact_types,
        spo_generalization: spo,
    })
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Standard => "standard",
        Metric::Generalized => "generalized",
    }
}

pub fn analyze(s: &mut Settings, a: AnalyzeArgs) -> CliResult<()> {
    let mut m = RunManifest::new("analyze", None, Default::default());
    let dataset = load_dataset(s, &a.data, &mut m)?;
    let bench_path = s.path("benchmark", a.benchmark)?;
    let bench = load_benchmark(&bench_path, &dataset, &mut m)?;
    let report_dir = s.path("report", a.report)?;
    let report_path = report_dir.join(REPORT_FILE);
    m.input(&report_path)?;
    m.input(&report_dir.join(RANKS_FILE))?;
    let report: EvalReport = read_json(&report_path)?;
    if report.tasks != bench.len() {
        return Err(CliError::usage(format!(
            "report covers {} tasks, benchmark has {}",
            report.tasks,
            bench.len()
        )));
    }
    let wanted = match s.opt::<String>("topk", a.topk)? {
        Some(t) => parse_topk(&t)?,
        None => report.topk.iter().map(|b| b.k).collect(),
    };
    let out = out_dir(s, a.out)?;
    let table = read_ranks(&report_dir, &report, &bench)?;

    let mut per_k = Vec::new();
    for &k in &wanted {
        let block = report
            .topk
            .iter()
            .find(|b| b.k == k)
            .ok_or_else(|| CliError::usage(format!("report has no k={k} block")))?;
        if AccuracyTable::from_ranks(&table, k)? != block.accuracy_table {
            return Err(CliError::Invariant(format!("ranks disagree with the report at k={k}")));
        }
        let mut sl = BTreeMap::new();
        for metric in [Metric::Standard, Metric::Generalized] {
            sl.insert(metric_name(metric), slices(&table, &dataset, k, metric, bench.len())?);
        }
        per_k.push(KAnalysis {
            k,
            accuracy_table: block.accuracy_table.clone(),
            standard: block.standard.clone(),
            generalized: block.generalized.clone(),
            slices: sl,
        });
    }
    let (w2v, spo_overlap) = similarity_matrices(&bench, &dataset)?;
    let analysis = Analysis {
        tasks: report.tasks,
        test_sizes: report.test_sizes.clone(),
        topk: per_k,
        task_similarity: TaskSimilarity { w2v, spo_overlap },
    };
    write_json(&out.join("analysis.json"), &analysis)?;
    m.artifact("analysis.json");

    let mut longtail = Vec::new();
    let mut fewshot = Vec::new();
    let mut types = Vec::new();
    let mut spo = Vec::new();
    let mut gained = Vec::new();
    for ka in &analysis.topk {
        let k = ka.k.to_string();
        for (metric, sl) in &ka.slices {
            let head = || vec![k.clone(), metric.to_string()];
            for b in sl.bins.iter().filter(|b| b.support > 0) {
                let mut r = head();
                r.extend([
                    b.lo.to_string(),
                    b.hi.map(|h| h.to_string()).unwrap_or_default(),
                    b.support.to_string(),
                    opt_num(b.accuracy),
                ]);
                longtail.push(r);
            }
            for (t, acc) in sl.fewshot.iter().enumerate() {
                if let Some(acc) = acc {
                    let mut r = head();
                    r.extend([(t + 1).to_string(), num(*acc)]);
                    fewshot.push(r);
                }
            }
            for ft in &sl.fact_types {
                let mut r = head();
                r.extend([
                    ft.task.to_string(),
                    ft.shape.as_str().to_string(),
                    ft.cell.support.to_string(),
                    num(ft.cell.accuracy),
                ]);
                types.push(r);
            }
            for c in sl.spo_generalization.iter().filter(|c| c.accuracy.is_some()) {
                let mut r = head();
                r.extend([
                    c.threshold.to_string(),
                    c.condition.to_string(),
                    c.support.to_string(),
                    opt_num(c.accuracy),
                ]);
                spo.push(r);
            }
        }
        for (metric, tb) in [("standard", &ka.standard), ("generalized", &ka.generalized)] {
            for (n, g) in tb.gained_knowledge.iter().enumerate() {
                gained.push(vec![k.clone(), metric.to_string(), (n + 1).to_string(), num(*g)]);
            }
        }
    }
    type CsvFile<'a> = (&'a str, &'a [&'a str], &'a [Vec<String>]);
    let files: [CsvFile; 5] = [
        ("longtail.csv", &["k", "metric", "bin_lo", "bin_hi", "support", "accuracy"], &longtail),
        ("fewshot.csv", &["k", "metric", "task", "accuracy"], &fewshot),
        ("fact_types.csv", &["k", "metric", "task", "shape", "support", "accuracy"], &types),
        (
            "spo_generalization.csv",
            &["k", "metric", "threshold", "condition", "support", "accuracy"],
            &spo,
        ),
        ("gained_knowledge.csv", &["k", "metric", "after_task", "accuracy"], &gained),
    ];
    for (name, header, rows) in files {
        write_csv(&out.join(name), header, rows)?;
        m.artifact(name);
    }
    m.config = s.snapshot();
    m.write(&out)
}
