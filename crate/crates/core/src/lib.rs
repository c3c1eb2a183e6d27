//! Trust evaluation for black-box data services.
//!
//! The crate is organised the way the monitoring pipeline runs:
//!
//! - [`trust`]: the scoring formulas (availability, task success, time
//!   efficiency, data and database timeliness, data quality, trust index).
//! - [`sim`]: a deterministic discrete-event simulator of data services.
//! - [`pmm`]: performance probing, the time-series store and the
//!   performance evaluator.
//! - [`dqmm`]: sampling, novelty detection, update-frequency estimation and
//!   data-quality evaluation.
//! - [`tmm`]: the trust engine, trust history and rankings.
//! - [`scenario`], [`runner`], [`report`]: scenario files, the virtual-time
//!   experiment driver and the exported reports.

pub mod dqmm;
pub mod pmm;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod store;
pub mod tmm;
pub mod trust;
pub mod wire;

mod id;

pub use id::ServiceId;
