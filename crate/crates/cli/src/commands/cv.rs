use std::fmt::Write as _;
use std::io::Write;

use chrononet::arch::ModelConfig;
use chrononet::data::Dataset;
use chrononet::train::{kfold, Fold, Summary};
use chrononet::Result;

use super::train::{parallel, repeat_seed, train_once};
use super::{load_dataset, required};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::Outputs;
use crate::CvArgs;

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: Fold,
    pub accuracy: f64,
}

/// Trains one model per fold (seeded per fold) and scores it on the held-out
/// groups. Every sample takes part regardless of its split tag.
pub fn cross_validate(cfg: &RunConfig, model_cfg: &ModelConfig, ds: &Dataset) -> Result<Vec<FoldResult>> {
    let folds = kfold(&ds.groups(), cfg.folds, cfg.train.seed)?;
    parallel(cfg.jobs, &folds, |fold| {
        let train = ds.subset(&fold.train);
        let test = ds.subset(&fold.test);
        let run = train_once(model_cfg, &cfg.train, &train, Some(&test), repeat_seed(cfg.train.seed, fold.index))?;
        Ok(FoldResult {
            fold: fold.clone(),
            accuracy: run.final_test_acc().unwrap_or(0.0),
        })
    })
    .into_iter()
    .collect()
}

pub fn csv(results: &[FoldResult]) -> String {
    let mut s = String::from("fold,accuracy\n");
    for r in results {
        let _ = writeln!(s, "{},{:.6}", r.fold.index, r.accuracy);
    }
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    if let Some(sum) = Summary::of(&accs) {
        let _ = writeln!(s, "mean,{:.6}", sum.mean);
    }
    s
}

pub fn run(a: &CvArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.run.resolve()?;
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if let Some(k) = a.folds {
        cfg.apply("folds", &k.to_string())?;
        cfg.validate()?;
    }
    let ds = load_dataset(&required(&cfg.data, "data")?)?;
    let model_cfg = cfg.model_config(ds.channels(), ds.num_classes())?;
    let results = cross_validate(&cfg, &model_cfg, &ds)?;
    let table = csv(&results);
    if let Some(path) = &a.out {
        let mut outputs = Outputs::new();
        outputs.write(path, table.as_bytes())?;
        outputs.commit();
    }
    let _ = write!(out, "{table}");
    Ok(())
}
