//! Sampled states on the field algebra.

pub mod algebra;
pub mod eval;
pub mod group;
pub mod insertions;
pub mod setup;
pub mod snapshot;

pub use algebra::{parse_element, parse_word, Element, Op, Word};
pub use eval::{positivity_check, prestate, prestate_refined, state_eval, state_localized, PositivityReport};
pub use group::{haar_sample, GroupKind, GroupSpec};
pub use insertions::{fermionic_projector, insertion_bosonic, insertion_fermionic, log_z_diagnostic, StateTable};
pub use setup::{FieldSetup, SetupOptions};
pub use snapshot::{build_snapshot, partition_function, SampleMode, SnapshotSpec, StateSnapshot};
