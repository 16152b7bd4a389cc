use llfl::io::write_json;
use llfl::split::{random_split, semantic_split, similarity_matrices, SplitType};

use super::{load_dataset, matrix_rows, out_dir, task_header, write_csv};
use crate::args::SplitArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::settings::Settings;

pub const BENCHMARK_FILE: &str = "benchmark.json";

pub fn split(s: &mut Settings, a: SplitArgs) -> CliResult<()> {
    let mode: SplitType = s
        .req::<String>("mode", a.mode)?
        .parse()
        .map_err(|e: llfl::Error| CliError::usage(e.to_string()))?;
    let tasks = s.req::<u64>("tasks", a.tasks)? as usize;
    if tasks == 0 {
        return Err(CliError::usage("--tasks must be at least 1"));
    }
    let trials = s.or::<u64>("trials", a.trials, 100)? as usize;
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let seed = s.or("seed", a.seed, 0u64)?;
    let mut m = RunManifest::new("split", Some(seed), Default::default());
    let dataset = load_dataset(s, &a.data, &mut m)?;
    let out = out_dir(s, a.out)?;

    let bench = match mode {
        SplitType::Semantic => {
            let (bench, dendrogram) = semantic_split(&dataset, tasks, seed)?;
            write_json(&out.join("dendrogram.json"), &dendrogram)?;
            m.artifact("dendrogram.json");
            bench
        }
        SplitType::Random => random_split(&dataset, tasks, trials, seed)?,
    };
    bench.validate(&dataset)?;
    write_json(&out.join(BENCHMARK_FILE), &bench)?;
    m.artifact(BENCHMARK_FILE);

    let (w2v, spo) = similarity_matrices(&bench, &dataset)?;
    let mut header = vec!["task".to_string()];
    header.extend(task_header("t", bench.len()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    for (name, mat) in [("similarity_w2v.csv", &w2v), ("similarity_spo.csv", &spo)] {
        write_csv(&out.join(name), &header, &matrix_rows(mat))?;
        m.artifact(name);
    }
    m.config = s.snapshot();
    m.write(&out)
}
