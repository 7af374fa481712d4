//! Generic tempered SMC machinery.

pub mod mh;
pub mod model;
pub mod population;
pub mod resample;
pub mod sampler;
pub mod schedule;
pub mod trace;
pub mod weights;

pub use model::{Particle, TemperedModel};
pub use population::ParticleSystem;
pub use resample::systematic_resample;
pub use sampler::{run_sampler, SamplerConfig};
pub use schedule::{next_exponent_adaptive, ScheduleMode, TemperingSchedule};
pub use trace::{evidence_estimate, IterationRecord, RunTrace, Snapshot, SnapshotPolicy, TraceSettings};
pub use weights::{ess, WeightVector};
