//! Deterministic discrete-event simulation of black-box data services.
//!
//! Each service produces items periodically into a private buffer and
//! periodically flushes the buffer into the store that queries can see.
//! Only item timestamps leak to clients; the flush schedule stays hidden.

mod clock;
mod service;

use std::collections::HashMap;

use thiserror::Error;

use crate::ServiceId;

pub use clock::VirtualClock;
pub use service::{
    tier_multiplier, DataItem, LogEntry, LogKind, Response, ServiceProfile, SimService,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("duplicate service id {0}")]
    DuplicateServiceId(ServiceId),
    #[error("invalid profile for {0}: {1}")]
    InvalidProfile(ServiceId, String),
    #[error("unknown service {0}")]
    UnknownService(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ServiceHandle(usize);

impl ServiceHandle {
    pub fn index(self) -> usize {
        self.0
    }
}

enum SimEvent<U> {
    Produce(ServiceHandle),
    Flush(ServiceHandle),
    User(U),
}

/// A set of simulated services sharing one virtual clock.
///
/// `U` is the caller's own event type: monitors schedule probes and samples
/// on the same clock and receive them back from [`Simulator::next_event`]
/// interleaved in time order with the services' internal events.
pub struct Simulator<U = ()> {
    clock: VirtualClock<SimEvent<U>>,
    services: Vec<SimService>,
    by_id: HashMap<ServiceId, ServiceHandle>,
    max_tier: u32,
    log: Vec<LogEntry>,
}

impl<U> Simulator<U> {
    /// `max_tier` is the highest resource tier any service may use.
    pub fn new(max_tier: u32) -> Self {
        Simulator {
            clock: VirtualClock::new(0.0),
            services: Vec::new(),
            by_id: HashMap::new(),
            max_tier: max_tier.max(1),
            log: Vec::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn max_tier(&self) -> u32 {
        self.max_tier
    }

    pub fn spawn_service(&mut self, profile: ServiceProfile) -> Result<ServiceHandle, SimError> {
        if self.by_id.contains_key(&profile.service_id) {
            return Err(SimError::DuplicateServiceId(profile.service_id));
        }
        let service = SimService::new(profile, self.max_tier, self.clock.now())?;
        let handle = ServiceHandle(self.services.len());
        self.clock
            .schedule(service.next_production_at(), SimEvent::Produce(handle));
        self.clock
            .schedule(service.next_flush_at(), SimEvent::Flush(handle));
        self.by_id.insert(service.id().clone(), handle);
        self.services.push(service);
        Ok(handle)
    }

    pub fn handle(&self, id: &str) -> Option<ServiceHandle> {
        self.by_id.get(&ServiceId::from(id)).copied()
    }

    pub fn handles(&self) -> impl Iterator<Item = ServiceHandle> + '_ {
        (0..self.services.len()).map(ServiceHandle)
    }

    pub fn service(&self, handle: ServiceHandle) -> &SimService {
        &self.services[handle.0]
    }

    /// Serves a query at the current virtual time.
    pub fn handle_request(&mut self, handle: ServiceHandle, limit: usize) -> Response {
        let now = self.clock.now();
        self.services[handle.0].handle_request(limit, now, &mut self.log)
    }

    pub fn schedule(&mut self, at: f64, event: U) {
        self.clock.schedule(at, SimEvent::User(event));
    }

    /// Fires service events until the next caller event due at or before
    /// `until` and returns it. When none is due the clock ends at `until`.
    pub fn next_event(&mut self, until: f64) -> Option<(f64, U)> {
        while let Some((t, event)) = self.clock.pop_until(until) {
            match event {
                SimEvent::User(u) => return Some((t, u)),
                SimEvent::Produce(h) => {
                    let svc = &mut self.services[h.0];
                    svc.advance_to(t, &mut self.log);
                    let next = svc.next_production_at();
                    self.clock.schedule(next, SimEvent::Produce(h));
                }
                SimEvent::Flush(h) => {
                    let svc = &mut self.services[h.0];
                    svc.advance_to(t, &mut self.log);
                    let next = svc.next_flush_at();
                    self.clock.schedule(next, SimEvent::Flush(h));
                }
            }
        }
        self.clock.advance_to(until);
        None
    }

    /// Fires everything due at or before `t_end` and returns the log lines
    /// written meanwhile. Caller events due in that span are discarded.
    pub fn run_until(&mut self, t_end: f64) -> Vec<LogEntry> {
        let start = self.log.len();
        while self.next_event(t_end).is_some() {}
        self.log[start..].to_vec()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Ground-truth flush instants of one service, from the event log.
    pub fn flush_times(&self, id: &ServiceId) -> Vec<f64> {
        self.log
            .iter()
            .filter(|e| e.kind == LogKind::Flush && &e.service_id == id)
            .map(|e| e.time)
            .collect()
    }
}
