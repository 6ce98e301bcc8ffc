//! Linear latent-variable simulator.
//!
//! Generates paired observations from a ground-truth linear model, trains
//! the rank-constrained bilinear head in closed form, and measures test
//! losses, classification accuracy, teacher error, and the selection-gap
//! decomposition that the scoring pipelines are built on. Everything is
//! seeded and reproducible.

mod config;
mod faceoff;
pub mod gd;
mod lemma;
mod metrics;
mod oracle;
mod train;
mod world;

pub use config::SynthConfig;
pub use faceoff::{strategy_faceoff, FaceoffAggregate, FaceoffRow, FaceoffTable, Strategy};
pub use lemma::{
    bound_report, calibrate_envelope, empirical_test_moment, noise_envelope, verify_lemma1,
    BoundMode, BoundReport, LemmaTrialRow,
};
pub use metrics::{
    classification_accuracy, measure_teacher_error, test_loss, ClassSpec, TeacherErrorReport,
    TestLoss,
};
pub use oracle::{
    best_subset_centered, best_subset_oracle, best_trained_subset,
    subset_cross_moment_centered, subset_cross_moment_raw, ORACLE_BUDGET,
};
pub use train::spectrum_degenerate;
pub use train::{closed_form_train, training_gamma, TrainedMap};
pub use world::{gen_world, SplitData, SynthWorld};
