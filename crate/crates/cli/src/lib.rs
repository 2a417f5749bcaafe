//! Batch front-end over `aen-core`: a seeded synthetic corpus generator and
//! manifest-driven `featurize`, `labels`, `infer` and `eval` commands.
//!
//! Output layout under the output directory:
//!
//! ```text
//! manifests/<id>.json            synth
//! grids/<id>/{start,end,conf_cls,conf_reg}.aent
//! feature_maps/<id>/<index>.aent synth, when feature maps are enabled
//! features/<id>.aent             featurize, [T, d_model]
//! labels/<id>/{starts,ends,durations}.aent
//! proposals/<id>.json            infer
//! eval/result.{json,csv}         eval (and split.json with label splits)
//! summary-<command>.json
//! ```

pub mod commands;
pub mod config;
pub mod io;
pub mod summary;
pub mod synth;

pub use commands::{run, Command};
pub use config::{Overrides, RunConfig};
pub use summary::{RunSummary, Status};
