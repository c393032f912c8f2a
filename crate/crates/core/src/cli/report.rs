use nalgebra::DMatrix;

use super::fit::{load_fit, write_rows};
use super::{absolute, now, prepare_out, write_manifest, Command, ReportArgs};
use crate::error::{Error, Result};
use crate::tensor::io::write_centrality_csv;
use crate::tensor::{betweenness_centrality, degree_centrality, TensorBundle};

/// Per-regime edge lists, latent coordinates and centralities of one fit.
///
/// Edge weights sum the observed layers (counts when the tensor has them)
/// over the weeks whose modal regime is `m`.
pub fn report(args: &ReportArgs) -> Result<()> {
    let started = now();
    let mut args = args.clone();
    args.input = absolute(&args.input)?;
    args.tensor = args.tensor.as_deref().map(absolute).transpose()?;
    let (summary, fit) = load_fit(&args.input)?;
    let tensor_dir = args.tensor.clone().unwrap_or_else(|| summary.tensor.clone());
    let bundle = TensorBundle::read(&tensor_dir)?;
    if bundle.meta.n != summary.n || bundle.meta.t != summary.t {
        return Err(Error::Validation(format!(
            "tensor {} is {}x{}, the fit expects {}x{}",
            tensor_dir.display(),
            bundle.meta.n,
            bundle.meta.t,
            summary.n,
            summary.t
        )));
    }

    let out = args.out.clone().unwrap_or_else(|| args.input.join("report"));
    prepare_out(&out, args.force)?;
    args.out = Some(absolute(&out)?);

    let names = bundle.meta.figures.names();
    let layers = bundle.observed_layers();
    let modal = fit.modal_states();
    for m in 0..fit.n_regimes() {
        let mut agg = DMatrix::<f64>::zeros(summary.n, summary.n);
        for (t, _) in modal.iter().enumerate().filter(|(_, &s)| s == m) {
            agg += &layers[t];
        }
        let edges = (0..summary.n).flat_map(|i| ((i + 1)..summary.n).map(move |j| (i, j)));
        write_rows(
            &out.join(format!("edges_regime_{}.csv", m + 1)),
            &["source", "target", "weight"].map(String::from),
            edges
                .filter(|&(i, j)| agg[(i, j)] != 0.0)
                .map(|(i, j)| vec![names[i].clone(), names[j].clone(), agg[(i, j)].to_string()]),
        )?;

        let u = &fit.mean_u[m];
        let mut header = vec!["figure".to_string()];
        header.extend((1..=u.ncols()).map(|k| format!("dim_{k}")));
        write_rows(
            &out.join(format!("latent_regime_{}.csv", m + 1)),
            &header,
            names.iter().enumerate().map(|(i, name)| {
                let mut row = vec![name.clone()];
                row.extend(u.row(i).iter().map(f64::to_string));
                row
            }),
        )?;
    }
    if let Some(counts) = &bundle.counts {
        write_centrality_csv(
            &out.join("degree_centrality.csv"),
            counts.figures(),
            counts.weeks(),
            &degree_centrality(counts),
        )?;
        write_centrality_csv(
            &out.join("betweenness_centrality.csv"),
            counts.figures(),
            counts.weeks(),
            &betweenness_centrality(counts),
        )?;
    }
    write_manifest(&out, &Command::Report(args.clone()), started)
}
