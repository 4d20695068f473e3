//! Multi-version transaction engine with reenactment-based debugging.

pub mod algebra;
pub mod audit;
pub mod engine;
pub mod error;
pub mod exec;
pub mod expr;
pub mod par;
pub mod provenance;
pub mod reenact;
pub mod sql;
pub mod storage;
pub mod txn;
pub mod value;
pub mod verify;
pub mod whatif;

pub use engine::{Engine, EngineConfig};
pub use error::{Error, Result};
