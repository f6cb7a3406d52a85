//! Distribution diagnostics for a training configuration.
//!
//! Target-side: the histogram of training targets and its KL divergence to the
//! held-out target histogram. Input-side: alignment (similarity of a held-out
//! input to training inputs sharing its target), discrimination (similarity to
//! training inputs with other targets) and nearest-neighbour recall, all under
//! `1 - normalized edit distance`.

mod distance;
mod histogram;
mod measures;
mod report;
mod representation;

pub use distance::{edit_distance, normalized_distance, similarity, EditScratch, DEFAULT_MAX_LEN};
pub use histogram::{kl_divergence, TargetHistogram};
pub use measures::{alignment, discrimination, nearest_neighbor, nn_recall_at_k, MeasureOptions, NeighborIndex};
pub use report::{diagnostics_report, write_reports_csv, DiagOptions, DiagReport, RepresentationSource};
pub(crate) use report::{build_representation, held_out_histogram};
pub use representation::{eval_pairs, EvalPair, RepEntry, Stage, TrainRepresentation};
