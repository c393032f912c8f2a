use chrono::NaiveDate;

use super::{absolute, now, prepare_out, split_list, write_manifest, Command, SynthArgs};
use crate::corpus::KeyFigureSet;
use crate::error::{Error, Result};
use crate::synth::{generate, generate_counts, SynthSpec};
use crate::tensor::io::write_json;
use crate::tensor::{CorrectedTensor, TensorBundle, WeekIndex};

pub fn synth(args: &SynthArgs) -> Result<()> {
    let started = now();
    let breakpoints = split_list(&args.breakpoints)
        .iter()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|e| Error::Config(format!("bad breakpoint `{s}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = SynthSpec::planted(
        args.n,
        args.t,
        args.dims,
        breakpoints,
        (args.within, args.between),
        args.noise,
        args.seed,
    );
    let (bundle, states) = if args.counts {
        let (tensor, states) = generate_counts(&spec)?;
        (TensorBundle::from_counts(tensor)?, states)
    } else {
        let data = generate(&spec)?;
        let figures = KeyFigureSet::new((1..=spec.n).map(|i| format!("node_{i}")).collect())?;
        let epoch = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");
        let weeks = (1..=spec.t).map(|t| WeekIndex::nth(epoch, t)).collect();
        let corrected = CorrectedTensor::from_layers(data.layers)?;
        (TensorBundle::from_corrected(corrected, figures, weeks)?, data.states)
    };

    prepare_out(&args.out, args.force)?;
    let mut args = args.clone();
    args.out = absolute(&args.out)?;
    bundle.write(&args.out)?;
    write_json(&args.out.join("truth.json"), &spec)?;
    let path = args.out.join("truth_states.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| crate::tensor::io::csv_err(&path, e))?;
    w.write_record(["week", "regime"])
        .map_err(|e| crate::tensor::io::csv_err(&path, e))?;
    for (t, s) in states.iter().enumerate() {
        w.write_record([(t + 1).to_string(), (s + 1).to_string()])
            .map_err(|e| crate::tensor::io::csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_manifest(&args.out, &Command::Synth(args.clone()), started)
}
