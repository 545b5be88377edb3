use std::fmt::Write as _;
use std::io::Write;

use chrononet::train::predict_proba;

use super::{check_header, load_checkpoint, load_dataset};
use crate::error::CliResult;
use crate::output::Outputs;
use crate::PredictArgs;

pub fn run(a: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    check_header(&ckpt, &a.data)?;
    let ds = load_dataset(&a.data)?;
    let model = ckpt.to_model::<f32>()?;
    let probs = predict_proba(&model, &ds, 64)?;
    let k = ckpt.config.num_classes;

    let mut csv = String::from("index,patient_id,label,predicted");
    for c in 0..k {
        let _ = write!(csv, ",p{c}");
    }
    csv.push('\n');
    for (i, row) in probs.data().chunks(k).enumerate() {
        let pred = row
            .iter()
            .enumerate()
            .fold(0, |best, (c, &p)| if p > row[best] { c } else { best });
        let _ = write!(csv, "{i},{},{},{pred}", ds.meta()[i].patient_id, ds.labels()[i]);
        for p in row {
            let _ = write!(csv, ",{p:.6}");
        }
        csv.push('\n');
    }
    match &a.out {
        Some(path) => {
            let mut outputs = Outputs::new();
            outputs.write(path, csv.as_bytes())?;
            outputs.commit();
            let _ = writeln!(out, "wrote {} predictions to {}", ds.len(), path.display());
        }
        None => {
            let _ = out.write_all(csv.as_bytes());
        }
    }
    Ok(())
}
