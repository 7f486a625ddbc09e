//! Session service, experiment runner and CLI plumbing around
//! `turnbeam-core`.

pub mod api;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod registry;
pub mod store;

pub use engine::{Engine, EngineConfig};
pub use error::{ServiceError, ServiceResult};
pub use registry::{LoadedModel, ModelInfo, Registry};
pub use store::{load_session, Event, Reply, Session, SessionStore};
