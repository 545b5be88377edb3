use std::io::Write;

use chrononet::data::{Dataset, Split};
use chrononet::train::{evaluate, Evaluation};

use super::{check_header, load_checkpoint, load_dataset};
use crate::error::{CliError, CliResult};
use crate::EvalArgs;

pub(crate) fn select(ds: Dataset, split: &str) -> CliResult<Dataset> {
    match split.trim().to_ascii_lowercase().as_str() {
        "all" => Ok(ds),
        s => {
            let split: Split = s.parse().map_err(|_| CliError::usage(format!("unknown split `{s}` (train, test, all)")))?;
            Ok(ds.split(split))
        }
    }
}

pub fn report(e: &Evaluation, out: &mut dyn Write) {
    let _ = writeln!(out, "accuracy {:.6} ({}/{})", e.accuracy, e.correct, e.total);
    let _ = writeln!(out, "confusion (rows true, columns predicted):");
    for (t, row) in e.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        let _ = writeln!(out, "  class {t:>3}: {}", cells.join(" "));
    }
}

pub fn run(a: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    check_header(&ckpt, &a.data)?;
    let ds = select(load_dataset(&a.data)?, &a.split)?;
    if ds.is_empty() {
        return Err(CliError::data(format!("no `{}` samples in {}", a.split, a.data.display())));
    }
    let model = ckpt.to_model::<f32>()?;
    let e = evaluate(&model, &ds, 64)?;
    report(&e, out);
    Ok(())
}
