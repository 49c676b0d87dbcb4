//! Minimal HTTP server speaking the tool wire protocol.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Method, Request, Server};

use super::wire;
use super::ToolBackend;

/// Running server. Dropping the handle stops it.
pub struct ServerHandle {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until every worker exits.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").unwrap()
}

fn respond(backend: &dyn ToolBackend, mut req: Request) {
    let url = req.url().to_string();
    let (status, body) = match (req.method(), url.as_str()) {
        (Method::Get, wire::HEALTH_PATH) => (200, wire::health_body(backend)),
        (Method::Post, path) if path.starts_with(wire::TOOL_PREFIX) => {
            let mut body = Vec::new();
            match req.as_reader().read_to_end(&mut body) {
                Ok(_) => wire::handle(backend, &path[wire::TOOL_PREFIX.len()..], &body),
                Err(e) => (400, wire::Response::bad_request(None, e.to_string()).to_json()),
            }
        }
        _ => (404, wire::Response::bad_request(None, format!("no route for {url}")).to_json()),
    };
    let response = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(json_header());
    if let Err(e) = req.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}

/// Binds `addr` (port 0 picks a free port) and serves with `workers` threads.
pub fn serve(backend: Arc<dyn ToolBackend>, addr: &str, workers: usize) -> io::Result<ServerHandle> {
    let server = Server::http(addr).map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| io::Error::new(io::ErrorKind::Other, "not an IP listener"))?;
    let server = Arc::new(server);
    let workers = (0..workers.max(1))
        .map(|_| {
            let (server, backend) = (server.clone(), backend.clone());
            std::thread::spawn(move || {
                while let Ok(req) = server.recv() {
                    respond(backend.as_ref(), req);
                }
            })
        })
        .collect();
    log::info!("tool server listening on {addr}");
    Ok(ServerHandle { server, addr, workers })
}
