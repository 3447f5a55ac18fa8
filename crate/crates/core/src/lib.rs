//! Physics-constrained generation of MIMO channels.
//!
//! Channels are built from geometric path parameters ([`channel`]), relaxed
//! onto a fixed angle-pair dictionary ([`dictionary`]) so a generator can
//! learn a linear gain matrix instead of the periodic path parameters, and
//! trained as variational autoencoders ([`generative`]) on top of a small
//! dense network stack ([`neural`]). Generated distributions are scored with
//! an exact empirical 2-Wasserstein distance and kernel MMD ([`metrics`]) and
//! with a downstream compression task ([`compression`]). [`analysis`] sweeps
//! the loss surface of the unrelaxed model. Synthetic scenarios and the
//! channel tensor file format live in [`datasets`].

pub mod analysis;
pub mod channel;
pub mod compression;
pub mod datasets;
pub mod dictionary;
pub mod error;
pub mod exec;
pub mod generative;
pub(crate) mod io_util;
pub mod metrics;
pub mod neural;

pub use channel::{
    array_response_rx, array_response_tx, nmse, synthesize_channel, ArrayConfig, ChannelMatrix,
    PathParams,
};
pub use datasets::{
    generate_dataset, load_dataset, save_dataset, split, ChannelDataset, ScenarioSpec,
};
pub use dictionary::{
    build_dictionary, extract_paths, grid_angle, project_paths, relaxed_synthesize, AngleGrid,
    Dictionary, GainMatrix,
};
pub use error::{Error, FormatError, Result};
pub use exec::Exec;
pub use io_util::write_atomic;
pub use metrics::{mmd, wasserstein2, SampleSet};
