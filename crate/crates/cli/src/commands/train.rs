use std::io::Write;
use std::path::{Path, PathBuf};

use chrononet::arch::{Model, ModelConfig, Precision};
use chrononet::data::{Dataset, Split};
use chrononet::train::{metrics_csv, Checkpoint, Control, Metrics, Summary, TrainConfig, Trainer};
use chrononet::{Prng, Result, Scalar};
use rayon::prelude::*;

use super::{load_dataset, required};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::Outputs;
use crate::TrainArgs;

/// Metrics and final parameters of one training run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub metrics: Vec<Metrics>,
    pub checkpoint: Checkpoint,
}

impl RunOutcome {
    pub fn final_test_acc(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.test_acc)
    }
}

/// Seed of repeat `r`: the base seed for the first, derived streams after.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        Prng::derive_seed(seed, r as u64)
    }
}

fn train_as<T: Scalar>(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    seed: u64,
) -> Result<RunOutcome> {
    let mut model = Model::<T>::build(model_cfg, &mut Prng::new(seed))?;
    let cfg = TrainConfig {
        seed: Prng::derive_seed(seed, 0),
        ..train_cfg.clone()
    };
    let outcome = Trainer::new(cfg)?.run(&mut model, train, test, |_| Control::Continue)?;
    let epochs = outcome.metrics.len() as u64;
    Ok(RunOutcome {
        seed,
        checkpoint: Checkpoint::from_model(&model, Some(&outcome.adam), seed, epochs),
        metrics: outcome.metrics,
    })
}

/// One full training run with model initialization and shuffling both
/// derived from `seed`.
pub fn train_once(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    seed: u64,
) -> Result<RunOutcome> {
    match train_cfg.precision {
        Precision::Train => train_as::<f32>(model_cfg, train_cfg, train, test, seed),
        Precision::Check => train_as::<f64>(model_cfg, train_cfg, train, test, seed),
    }
}

/// Runs `jobs` workers over `items`, keeping the input order of results.
pub fn parallel<I: Sync, R: Send>(jobs: usize, items: &[I], f: impl Fn(&I) -> R + Sync + Send) -> Vec<R> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

fn file_names(repeats: usize, r: usize) -> (String, String) {
    if repeats == 1 {
        ("metrics.csv".into(), "model.cncp".into())
    } else {
        (format!("metrics_r{r}.csv"), format!("model_r{r}.cncp"))
    }
}

pub fn run(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.run.resolve()?;
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if a.test_data.is_some() {
        cfg.test_data = a.test_data.clone();
    }
    if a.out_dir.is_some() {
        cfg.out_dir = a.out_dir.clone();
    }
    let data_path = required(&cfg.data, "data")?;
    let out_dir = required(&cfg.out_dir, "out-dir")?;
    let all = load_dataset(&data_path)?;
    let train = all.split(Split::Train);
    let mut test = all.split(Split::Test);
    if let Some(p) = &cfg.test_data {
        test.extend(&load_dataset(p)?)?;
    }
    let classes = all.num_classes().max(test.num_classes());
    let model_cfg = cfg.model_config(all.channels(), classes)?;

    let runs = train_all(&cfg, &model_cfg, &train, (!test.is_empty()).then_some(&test))?;
    write_runs(&cfg, &out_dir, &runs, out)
}

/// Trains every repeat of `cfg`.
pub fn train_all(
    cfg: &RunConfig,
    model_cfg: &ModelConfig,
    train: &Dataset,
    test: Option<&Dataset>,
) -> Result<Vec<RunOutcome>> {
    let seeds: Vec<u64> = (0..cfg.repeats).map(|r| repeat_seed(cfg.train.seed, r)).collect();
    parallel(cfg.jobs, &seeds, |&s| train_once(model_cfg, &cfg.train, train, test, s))
        .into_iter()
        .collect()
}

fn write_runs(cfg: &RunConfig, out_dir: &Path, runs: &[RunOutcome], out: &mut dyn Write) -> CliResult<()> {
    let mut outputs = Outputs::new();
    outputs.write(&out_dir.join("run.cfg"), cfg.to_text().as_bytes())?;
    for (r, run) in runs.iter().enumerate() {
        let (metrics, model) = file_names(runs.len(), r);
        outputs.write(&out_dir.join(metrics), metrics_csv(&run.metrics, cfg.timing).as_bytes())?;
        outputs.write(&out_dir.join(model), &run.checkpoint.to_bytes())?;
        let last = run.metrics.last();
        let _ = writeln!(
            out,
            "repeat {r} seed {} epochs {} train_acc {:.4} test_acc {}",
            run.seed,
            run.metrics.len(),
            last.map_or(0.0, |m| m.train_acc),
            run.final_test_acc().map_or("-".into(), |a| format!("{a:.4}"))
        );
    }
    let finals: Vec<f64> = runs.iter().filter_map(RunOutcome::final_test_acc).collect();
    if let Some(s) = Summary::of(&finals) {
        let _ = writeln!(
            out,
            "final test accuracy over {} run(s): mean {:.4} (min {:.4}, max {:.4})",
            finals.len(),
            s.mean,
            s.min,
            s.max
        );
    }
    outputs.commit();
    Ok(())
}

/// Paths written by a train command into `out_dir`.
pub fn output_paths(out_dir: &Path, repeats: usize) -> Vec<PathBuf> {
    let mut v = vec![out_dir.join("run.cfg")];
    for r in 0..repeats {
        let (m, c) = file_names(repeats, r);
        v.push(out_dir.join(m));
        v.push(out_dir.join(c));
    }
    v
}
