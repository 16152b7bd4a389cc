use std::path::{Path, PathBuf};

use llfl::io::{read_checkpoint, write_checkpoint};
use llfl::lll::{initial_model, train_joint, train_task, Hyper, LllState, Method, TrainedModel};

use super::{load_benchmark, load_dataset, out_dir};
use crate::args::TrainArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::model_file::encode_model;
use crate::settings::Settings;

/// Query model after task `n`; `n = 0` is the untrained network.
pub fn model_file(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("task_{n}.model"))
}

/// Full training state after task `n`, used to resume.
pub fn state_file(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("state_{n}.ckpt"))
}

fn name(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

/// First task still to train.
fn resume_point(out: &Path, method: Method, tasks: usize, resume: Option<Option<usize>>) -> CliResult<usize> {
    let have = |n: usize| {
        model_file(out, n).is_file() && (method == Method::Joint || state_file(out, n).is_file())
    };
    match resume {
        None => Ok(1),
        Some(None) => Ok((1..=tasks).find(|&n| !have(n)).unwrap_or(tasks + 1)),
        Some(Some(start)) => {
            if start == 0 || start > tasks + 1 {
                return Err(CliError::usage(format!("--resume must be in 1..={}", tasks + 1)));
            }
            if let Some(gap) = (1..start).find(|&n| !have(n)) {
                return Err(CliError::Core(llfl::Error::InvalidArgument(format!(
                    "cannot resume at task {start}: checkpoint for task {gap} is missing"
                ))));
            }
            Ok(start)
        }
    }
}

pub fn train(s: &mut Settings, a: TrainArgs) -> CliResult<()> {
    let method: Method = s
        .req::<String>("method", a.method)?
        .parse()
        .map_err(|e: llfl::Error| CliError::usage(e.to_string()))?;
    let d = Hyper::default();
    let hyper = Hyper {
        lambda: s.or("lambda", a.lambda, d.lambda)?,
        epochs: s.or("epochs", a.epochs, d.epochs)?,
        lr: s.or("lr", a.lr, d.lr)?,
        seed: s.or("seed", a.seed, d.seed)?,
        ..d
    };
    hyper.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let mut m = RunManifest::new("train", Some(hyper.seed), Default::default());
    let dataset = load_dataset(s, &a.data, &mut m)?;
    let bench_path = s.path("benchmark", a.benchmark)?;
    let bench = load_benchmark(&bench_path, &dataset, &mut m)?;
    let out = out_dir(s, a.out)?;
    let config = hyper.config_for(&dataset);
    let n_tasks = bench.len();
    let start = resume_point(&out, method, n_tasks, a.resume)?;

    let init = model_file(&out, 0);
    write_checkpoint(&init, &encode_model(&TrainedModel::Single(initial_model(config, hyper.seed)))?)?;
    m.artifact(name(&init));

    if method == Method::Joint {
        for n in start..=n_tasks {
            let model = train_joint(&dataset, &bench.tasks[..n], &hyper)?;
            write_checkpoint(&model_file(&out, n), &encode_model(&TrainedModel::Single(model))?)?;
        }
    } else {
        let mut state = if start == 1 {
            LllState::new(method, config, &hyper)?
        } else {
            let path = state_file(&out, start - 1);
            let st = LllState::from_tensors(&read_checkpoint(&path)?)?;
            if st.method() != method || st.lambda().to_bits() != hyper.lambda.to_bits() || st.config() != config {
                return Err(CliError::Core(llfl::Error::Checkpoint {
                    path,
                    msg: format!("was written by a different run (method {}, lambda {})", st.method(), st.lambda()),
                }));
            }
            if st.cursor() != start - 1 {
                return Err(CliError::Core(llfl::Error::Checkpoint {
                    path,
                    msg: format!("holds {} tasks, expected {}", st.cursor(), start - 1),
                }));
            }
            st
        };
        for n in start..=n_tasks {
            state = train_task(state, &bench.tasks[n - 1], &dataset, &hyper)?;
            write_checkpoint(&state_file(&out, n), &state.to_tensors()?)?;
            write_checkpoint(&model_file(&out, n), &encode_model(&state.model()?)?)?;
        }
    }
    for n in 1..=n_tasks {
        m.artifact(name(&model_file(&out, n)));
        if method != Method::Joint {
            m.artifact(name(&state_file(&out, n)));
        }
    }
    m.config = s.snapshot();
    m.config.insert("tasks".into(), n_tasks.to_string());
    m.write(&out)
}
