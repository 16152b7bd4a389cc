mod analyze;
mod eval;
mod split;
mod synth;
mod train;

pub use analyze::analyze;
pub use eval::{eval, EvalReport, TopKBlock, TransferBlock, RANKS_FILE, REPORT_FILE};
pub use split::split;
pub use synth::synth;
pub use train::{model_file, state_file, train};

use std::fs;
use std::path::{Path, PathBuf};

use llfl::data::Dataset;
use llfl::io::{format_f64, read_embeddings, read_examples, read_facts, read_json, write_string};
use llfl::split::Benchmark;

use crate::args::DataArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::settings::Settings;

fn load_dataset(s: &mut Settings, data: &DataArgs, manifest: &mut RunManifest) -> CliResult<Dataset> {
    let facts = s.path("facts", data.facts.clone())?;
    let emb = s.path("embeddings", data.embeddings.clone())?;
    let ex = s.path("examples", data.examples.clone())?;
    for p in [&facts, &emb, &ex] {
        manifest.input(p)?;
    }
    Ok(Dataset::new(read_facts(&facts)?, &read_embeddings(&emb)?, read_examples(&ex)?)?)
}

fn load_benchmark(path: &Path, dataset: &Dataset, manifest: &mut RunManifest) -> CliResult<Benchmark> {
    manifest.input(path)?;
    let bench: Benchmark = read_json(path)?;
    bench.validate(dataset)?;
    Ok(bench)
}

fn out_dir(s: &mut Settings, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    let out = s.path("out", flag)?;
    fs::create_dir_all(&out).map_err(|e| llfl::Error::Io { path: out.clone(), source: e })?;
    Ok(out)
}

fn num(v: f64) -> String {
    format_f64(v)
}

fn opt_num(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Core(llfl::Error::InvalidArgument(e.to_string())))?;
    write_string(path, &String::from_utf8(bytes).expect("csv of UTF-8 fields"))?;
    Ok(())
}

fn matrix_rows(m: &[Vec<f64>]) -> Vec<Vec<String>> {
    m.iter()
        .enumerate()
        .map(|(i, row)| std::iter::once((i + 1).to_string()).chain(row.iter().map(|&v| num(v))).collect())
        .collect()
}

fn task_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("{prefix}{j}")).collect()
}
