//! HTTP gateway for simulated data services, the trust query API and the
//! wall-clock scenario runner.

mod clock;
mod endpoint;
pub mod gateway;
pub mod trust_api;
pub mod wall;

pub use clock::WallClock;
pub use endpoint::{Endpoint, GatewayError};
pub use gateway::{serve_service, ServiceEndpoint};
pub use trust_api::serve_trust_api;
pub use wall::{
    probe_in_process, probe_over_wire, probe_run_differences, run_wall, WallError, WallOptions,
    WallRun,
};
