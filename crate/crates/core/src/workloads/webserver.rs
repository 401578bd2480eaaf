use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{positive, Mutator, WorkEvent, Workload, WorkloadKind};
use crate::error::{ConfigError, SimError};
use crate::heap::{ObjectId, SiteId, Ticks};

pub const APP_SITE: SiteId = SiteId(10);
pub const HEADERS_SITE: SiteId = SiteId(11);
pub const REQUEST_SITE: SiteId = SiteId(12);
pub const RESPONSE_SITE: SiteId = SiteId(13);
pub const BODY_SITE: SiteId = SiteId(14);
pub const CONTEXT_SITE: SiteId = SiteId(15);
pub const LOG_SITE: SiteId = SiteId(16);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WebserverParams {
    /// Compute ticks of the request phase, spread over its allocations.
    pub request_ticks: Ticks,
    /// Idle ticks between queuing a response and taking the next request.
    pub io_window_ticks: Ticks,
    /// Long-lived application objects (routes, templates) built at startup.
    pub app_objects: usize,
    pub app_object_bytes: u64,
    pub request_bytes: u64,
    pub headers_bytes: u64,
    pub response_bytes: u64,
    pub body_bytes: u64,
    pub context_bytes: u64,
    pub log_bytes: u64,
}

impl Default for WebserverParams {
    fn default() -> Self {
        Self {
            request_ticks: 100,
            io_window_ticks: 50,
            app_objects: 64,
            app_object_bytes: 256,
            request_bytes: 512,
            headers_bytes: 256,
            response_bytes: 256,
            body_bytes: 1024,
            context_bytes: 256,
            log_bytes: 128,
        }
    }
}

impl WebserverParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("workload.webserver.app_objects", self.app_objects as u64)?;
        for (field, v) in [
            ("app_object_bytes", self.app_object_bytes),
            ("request_bytes", self.request_bytes),
            ("headers_bytes", self.headers_bytes),
            ("response_bytes", self.response_bytes),
            ("body_bytes", self.body_bytes),
            ("context_bytes", self.context_bytes),
            ("log_bytes", self.log_bytes),
        ] {
            positive(&format!("workload.webserver.{field}"), v)?;
        }
        Ok(())
    }
}

/// A request loop. Each request allocates a small object graph with a
/// request/response cycle, queues its response, then waits out an I/O
/// window. Collection work done inside the window uses otherwise idle time
/// (up to the window length); collection work during the request phase
/// delays the response tick for tick.
#[derive(Debug)]
pub struct Webserver {
    params: WebserverParams,
    rng: ChaCha8Rng,
    app: Vec<ObjectId>,
}

impl Webserver {
    pub fn new(params: WebserverParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            app: Vec::new(),
        }
    }

    fn start(&mut self, m: &mut dyn Mutator) -> Result<u64, SimError> {
        // a ring of app objects, all rooted (module globals)
        let p = &self.params;
        for i in 0..p.app_objects {
            let refs: Vec<ObjectId> = if i == 0 {
                vec![]
            } else {
                vec![self.app[i - 1]]
            };
            let id = m.alloc(APP_SITE, p.app_object_bytes, &refs)?;
            self.app.push(id);
        }
        m.heap_mut()
            .add_ref(self.app[0], *self.app.last().expect("nonempty"))?;
        Ok(p.app_object_bytes * p.app_objects as u64)
    }
}

impl Workload for Webserver {
    fn kind(&self) -> WorkloadKind {
        WorkloadKind::Webserver
    }

    fn step(&mut self, m: &mut dyn Mutator) -> Result<WorkEvent, SimError> {
        let start = m.now();
        let mut allocated = 0;
        if self.app.is_empty() {
            allocated += self.start(m)?;
        }
        let p = self.params.clone();
        let slice = p.request_ticks / 5;
        let tail = p.request_ticks - 4 * slice;

        let headers = m.alloc(HEADERS_SITE, p.headers_bytes, &[])?;
        m.work(slice)?;
        let request = m.alloc(REQUEST_SITE, p.request_bytes, &[headers])?;
        m.heap_mut().remove_root(headers)?;
        m.work(slice)?;
        let response = m.alloc(RESPONSE_SITE, p.response_bytes, &[request])?;
        m.heap_mut().add_ref(request, response)?;
        m.work(slice)?;
        let body = m.alloc(BODY_SITE, p.body_bytes, &[])?;
        m.heap_mut().add_ref(response, body)?;
        m.heap_mut().remove_root(body)?;
        m.work(slice)?;
        let route = self.app[self.rng.gen_range(0..self.app.len())];
        let context = m.alloc(CONTEXT_SITE, p.context_bytes, &[request, route])?;
        m.work(tail)?;
        allocated +=
            p.headers_bytes + p.request_bytes + p.response_bytes + p.body_bytes + p.context_bytes;

        // response handed to the OS
        let latency = m.now() - start;
        m.complete(1)?;
        m.heap_mut().remove_root(context)?;
        m.heap_mut().remove_root(response)?;
        m.heap_mut().remove_root(request)?;

        m.set_overlap_window(true);
        let window_start = m.now();
        let log = m.alloc(LOG_SITE, p.log_bytes, &[])?;
        m.heap_mut().remove_root(log)?;
        allocated += p.log_bytes;
        let busy = m.now() - window_start;
        if busy < p.io_window_ticks {
            m.work(p.io_window_ticks - busy)?;
        }
        m.set_overlap_window(false);

        Ok(WorkEvent {
            work_units: 1,
            ticks: m.now() - start,
            latency_ticks: latency,
            allocated_bytes: allocated,
        })
    }
}
