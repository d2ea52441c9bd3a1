use std::io::Read;

use landslide_core::stac::{HttpRequest, HttpResponse, Method, StacError, Transport};

/// Blocking HTTP transport for a real STAC endpoint.
pub struct LiveTransport {
    agent: ureq::Agent,
}

impl LiveTransport {
    pub fn new() -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(60))
                .build(),
        }
    }
}

impl Transport for LiveTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, StacError> {
        let call = match request.method {
            Method::Get => self.agent.get(&request.url).call(),
            Method::Post => self
                .agent
                .post(&request.url)
                .set("Content-Type", "application/json")
                .send_string(request.body.as_deref().unwrap_or("{}")),
        };
        let resp = match call {
            Ok(r) => r,
            // Non-2xx statuses are reported by the search loop.
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(StacError::Transport(e.to_string())),
        };
        let status = resp.status();
        let mut body = String::new();
        resp.into_reader()
            .take(64 << 20)
            .read_to_string(&mut body)
            .map_err(|e| StacError::Transport(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}
