//! Energy-driven computational offloading by process migration.

pub mod bench;
pub mod checkpoint;
pub mod client;
pub mod decision;
pub mod edge;
pub mod energy;
pub mod kv;
pub mod protocol;
pub mod registry;
pub mod tasks;

pub use checkpoint::{CheckpointImage, Coordinator, CoordinatorOptions, Launcher};
pub use client::{Agent, AgentOptions, ModeTaken, OffloadOutcome, ServerEntry};
pub use decision::{
    benefit_eq1, benefit_eq2, should_offload, AppPreferences, GlobalPreferences, MigrationType,
    OffloadFlag, ProcessEnergyTerms,
};
pub use edge::{AdmissionPolicy, EdgeConfig, EdgeServer};
pub use registry::PreferenceRegistry;
pub use tasks::TaskSpec;
