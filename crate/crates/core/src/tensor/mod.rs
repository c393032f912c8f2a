//! Weekly co-occurrence tensors, degree correction and descriptive centralities.

mod centrality;
mod cooccur;
mod degree;
mod epoch;
pub mod io;

pub use centrality::{betweenness_centrality, degree_centrality, layer_betweenness};
pub use cooccur::{
    assemble_tensor, build_occurrence_matrix, cooccurrence_slice, drop_figures, CooccurrenceTensor,
    CountMatrix, OccurrenceMatrix,
};
pub use degree::{degree_correct, CorrectedTensor, DegreeCorrection};
pub use epoch::{assign_week, weeks_for_window, WeekIndex};
pub use io::{TensorBundle, TensorKind, TensorMeta};
