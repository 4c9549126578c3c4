//! Fall detection over unobtrusive UWB radar vital-sign streams.
//!
//! The crate covers the full offline/online pipeline:
//!
//! - [`data`] — radar readings, sensing events, the activity taxonomy, and the
//!   canonical record/annotation/manifest file formats.
//! - [`sim`] — seeded synthetic session generation following a scripted
//!   ADL/fall protocol (stand-in for a private bedroom dataset).
//! - [`preprocess`] — 8-second windowing, per-channel standardization, and
//!   stratified train/test splitting.
//! - [`imbalance`] — class weighting (INS/ENS), random oversampling, SMOTE,
//!   and a transformer GAN that synthesizes minority fall windows.
//! - [`nn`] — the small dense/conv/recurrent/attention layer stack with exact
//!   backward passes that the classifiers and the GAN are built from.
//! - [`models`] — FCN, ResNet, LSTM and InceptionTime detectors with a shared
//!   training loop and persisted artifacts.
//! - [`metrics`] — sensitivity/specificity based scores, statistical feature
//!   vectors, cosine-similarity fidelity checks, and 2-D projections.
//! - [`selection`] — the rule-based, context-aware detector selection.
//! - [`service`] — the per-second streaming runtime that scores sliding
//!   windows and dispatches fall alerts.
//! - [`pipeline`] — end-to-end helpers gluing the above into dataset builds
//!   and the architecture-by-strategy evaluation grid.

pub mod artifact;
pub mod data;
pub mod fingerprint;
pub mod imbalance;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod selection;
pub mod service;
pub mod sim;

pub use data::{
    ActivityLabel, Annotation, Category, DataError, DatasetManifest, EventSequence, FdaasQos,
    HealthSensingEvent, HealthSensingService, PhysiologicalState, PrivacyLevel, RadarReading,
    ResidentContext,
};
