use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use llfl::eval::{
    build_r_from_tables, gained_knowledge, transfer_metrics, AccuracyTable, EmbedScorer, Metric, RankTable,
    TransferMatrix, DEFAULT_TOPK,
};
use llfl::io::{read_checkpoint, write_json};

use super::train::model_file;
use super::{load_benchmark, load_dataset, matrix_rows, num, out_dir, task_header, write_csv};
use crate::args::EvalArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::model_file::decode_model;
use crate::settings::{parse_topk, Settings};

pub const REPORT_FILE: &str = "report.json";
/// Gold ranks of every test example under the final model.
pub const RANKS_FILE: &str = "ranks.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferBlock {
    #[serde(rename = "R")]
    pub r: TransferMatrix,
    /// Absent with a single task.
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub gained_knowledge: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKBlock {
    pub k: usize,
    pub accuracy_table: AccuracyTable,
    pub standard: TransferBlock,
    pub generalized: TransferBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: usize,
    pub test_sizes: Vec<usize>,
    pub topk: Vec<TopKBlock>,
}

fn transfer_block(tables: &[RankTable], initial: &RankTable, k: usize, metric: Metric) -> CliResult<TransferBlock> {
    let r = build_r_from_tables(tables, initial, k, metric)?;
    let t = (r.len() >= 2).then(|| transfer_metrics(&r)).transpose()?;
    let gained = gained_knowledge(&r, initial.task_sizes())?;
    Ok(TransferBlock {
        bwt: t.map(|t| t.bwt),
        fwt: t.map(|t| t.fwt),
        gained_knowledge: gained,
        r,
    })
}

fn check_dominance(tables: &[RankTable]) -> CliResult<()> {
    for (i, t) in tables.iter().enumerate() {
        if let Some(e) = t.entries().iter().find(|e| e.generalized < e.standard) {
            return Err(CliError::Invariant(format!(
                "checkpoint {i}: example {} ranks better over all labels than within its task",
                e.example
            )));
        }
    }
    Ok(())
}

pub fn eval(s: &mut Settings, a: EvalArgs) -> CliResult<()> {
    let topk = match s.opt::<String>("topk", a.topk)? {
        Some(t) => parse_topk(&t)?,
        None => DEFAULT_TOPK.to_vec(),
    };
    let mut m = RunManifest::new("eval", None, Default::default());
    let dataset = load_dataset(s, &a.data, &mut m)?;
    let bench_path = s.path("benchmark", a.benchmark)?;
    let bench = load_benchmark(&bench_path, &dataset, &mut m)?;
    let ckpt = s.path("checkpoints", a.checkpoints)?;
    let out = out_dir(s, a.out)?;

    let models = (0..=bench.len())
        .map(|n| {
            let p = model_file(&ckpt, n);
            if !p.is_file() {
                return Err(CliError::Core(llfl::Error::InvalidArgument(format!(
                    "missing checkpoint {}",
                    p.display()
                ))));
            }
            m.input(&p)?;
            Ok(decode_model(&read_checkpoint(&p)?)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut tables = models
        .par_iter()
        .map(|model| RankTable::build(&EmbedScorer::new(model, &dataset), &dataset, &bench))
        .collect::<llfl::Result<Vec<_>>>()?;
    check_dominance(&tables)?;
    let initial = tables.remove(0);
    let last = tables.last().expect("a benchmark has at least one task");

    let mut blocks = Vec::new();
    for &k in &topk {
        blocks.push(TopKBlock {
            k,
            accuracy_table: AccuracyTable::from_ranks(last, k)?,
            standard: transfer_block(&tables, &initial, k, Metric::Standard)?,
            generalized: transfer_block(&tables, &initial, k, Metric::Generalized)?,
        });
    }
    for b in &blocks {
        let acc = &b.accuracy_table;
        if let Some(t) = (0..bench.len()).find(|&t| acc.generalized[t] > acc.standard[t]) {
            return Err(CliError::Invariant(format!("task {} at k={}: generalized above standard", t + 1, b.k)));
        }
    }
    let report = EvalReport {
        tasks: bench.len(),
        test_sizes: initial.task_sizes().to_vec(),
        topk: blocks,
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    m.artifact(REPORT_FILE);

    let rows: Vec<Vec<String>> = last
        .entries()
        .iter()
        .map(|e| {
            vec![
                e.example.to_string(),
                e.fact.to_string(),
                (e.task + 1).to_string(),
                e.standard.to_string(),
                e.generalized.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join(RANKS_FILE),
        &["example_id", "fact_id", "task", "standard_rank", "generalized_rank"],
        &rows,
    )?;
    m.artifact(RANKS_FILE);

    let rows: Vec<Vec<String>> = report
        .topk
        .iter()
        .flat_map(|b| {
            let acc = &b.accuracy_table;
            (0..report.tasks).map(move |t| {
                vec![
                    b.k.to_string(),
                    (t + 1).to_string(),
                    acc.test_sizes[t].to_string(),
                    num(acc.standard[t]),
                    num(acc.generalized[t]),
                ]
            })
        })
        .collect();
    write_csv(
        &out.join("accuracy.csv"),
        &["k", "task", "test_size", "standard", "generalized"],
        &rows,
    )?;
    m.artifact("accuracy.csv");

    let mut header = vec!["task".to_string(), "baseline".to_string()];
    header.extend(task_header("after_t", report.tasks));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    for b in &report.topk {
        for (metric, tb) in [("standard", &b.standard), ("generalized", &b.generalized)] {
            let rows: Vec<Vec<String>> = matrix_rows(&tb.r.r)
                .into_iter()
                .zip(&tb.r.baseline)
                .map(|(mut row, &base)| {
                    row.insert(1, num(base));
                    row
                })
                .collect();
            let name = format!("transfer_{metric}_top{}.csv", b.k);
            write_csv(&out.join(&name), &header, &rows)?;
            m.artifact(name);
        }
    }
    m.config = s.snapshot();
    m.write(&out)
}
