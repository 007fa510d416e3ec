//! Datasets with missing views and labels.
//!
//! Conventions: `V` is the N x v view indicator (1 = view observed), `W` the
//! N x C label indicator (1 = label known). Unobserved view rows and unknown
//! labels are stored as zeros.

mod dataset;
mod io;
mod missing;
mod protocol;
mod synth;

pub use dataset::{split, split_indices, MultiViewDataset};
pub use io::{load_dataset, read_csv_matrix, save_dataset, write_csv_matrix, Manifest};
pub use missing::{apply_input_mask, generate_indicators, label_indicator, view_indicator, MaskBank};
pub use protocol::{apply_protocol, Protocol};
pub use synth::{synth_dataset, SynthConfig};
