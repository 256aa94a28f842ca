//! Deterministic runtime for a household robot agent: perception over a
//! tiered visual memory, one-way tool dispatch, and preemptive multi-task
//! planning, all driven by a logical clock against a simulated home.

pub mod harness;
pub mod ids;
pub mod json;
pub mod memory;
pub mod perception;
pub mod planner;
pub mod runtime;
pub mod tasks;
pub mod tools;
pub mod transport;

pub use ids::{CommandId, IdAllocator, TaskId, Tick};
