//! Training, evaluation and diagnostics built on the model.

pub mod checkpoint;
pub mod edges;
pub mod evaluate;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod probe;
pub mod train;

pub use edges::{dump_edges, EdgeDump, EdgeRecord};
pub use evaluate::{evaluate, infer_dataset, Inference};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use metrics::{metrics, MetricsReport};
pub use optim::Adam;
pub use probe::{homo_class_probe, modality_probe, probe_unimodal, UnimodalReport};
pub use train::{train, train_from, LogRecord, TrainOutcome};
