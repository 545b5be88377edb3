use std::io::Write;

use chrononet::data::{generate_synthetic, meta_path, Dataset, Split, SyntheticSet, SyntheticSpec};
use chrononet::Prng;

use crate::error::CliResult;
use crate::output::Outputs;
use crate::SynthArgs;

pub fn spec_of(a: &SynthArgs) -> SyntheticSpec {
    SyntheticSpec {
        classes: a.classes,
        length: a.length,
        channels: a.channels,
        noise: a.noise,
        envelope_period: a.envelope_period,
        envelope_hint: a.envelope_hint,
        groups: a.groups,
        seed: a.seed,
        ..SyntheticSpec::default()
    }
}

/// Training and test sets in one container. Test samples come from a
/// derived seed and their own groups (`t{g}`), so no group spans both splits.
pub fn build(spec: &SyntheticSpec, per_class: usize, test_per_class: usize) -> chrononet::Result<(Dataset, SyntheticSet)> {
    let train = generate_synthetic(spec, per_class, Split::Train)?;
    let mut ds = train.dataset.clone();
    if test_per_class > 0 {
        let test_spec = SyntheticSpec {
            seed: Prng::derive_seed(spec.seed, 1),
            ..spec.clone()
        };
        let mut test = generate_synthetic(&test_spec, test_per_class, Split::Test)?.dataset;
        for m in test.meta_mut() {
            m.patient_id.replace_range(..1, "t");
            m.session_id.replace_range(..1, "t");
        }
        ds.extend(&test)?;
    }
    Ok((ds, train))
}

pub fn run(a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = spec_of(a);
    let (ds, train) = build(&spec, a.per_class, a.test_per_class)?;
    let mut outputs = Outputs::new();
    outputs.track(&a.out);
    outputs.track(meta_path(&a.out));
    ds.export(&a.out)?;
    let c = train.check;
    let _ = writeln!(
        out,
        "wrote {} samples ({} train, {} test), {} classes, {} channels x {}",
        ds.len(),
        ds.indices_of(Split::Train).len(),
        ds.indices_of(Split::Test).len(),
        spec.classes,
        spec.channels,
        spec.length
    );
    let _ = writeln!(
        out,
        "self-check joint={:.4} motif_only={:.4} envelope_only={:.4}",
        c.joint, c.motif_only, c.envelope_only
    );
    outputs.commit();
    Ok(())
}
