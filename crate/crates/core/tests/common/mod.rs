//! Tiny virtual-host HTTP server for crawler tests. Every test host name is
//! routed to it through `CrawlConfig::resolve`.

#![allow(dead_code)]

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use cspsop::crawler::CrawlConfig;
use tiny_http::{Header, Response, Server};

#[derive(Clone)]
pub struct Route {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

pub fn html(body: &str) -> Route {
    Route {
        status: 200,
        headers: vec![("Content-Type".into(), "text/html; charset=utf-8".into())],
        body: body.to_string(),
    }
}

pub fn html_with_csp(csp: &str, body: &str) -> Route {
    let mut r = html(body);
    r.headers.push(("Content-Security-Policy".into(), csp.to_string()));
    r
}

pub fn text(body: &str) -> Route {
    Route {
        status: 200,
        headers: vec![("Content-Type".into(), "text/plain".into())],
        body: body.to_string(),
    }
}

pub fn redirect(to: &str) -> Route {
    Route {
        status: 302,
        headers: vec![("Location".into(), to.to_string())],
        body: String::new(),
    }
}

/// Routes keyed by `(host, path)`; anything else is a 404.
pub struct TestServer {
    pub addr: SocketAddr,
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
    pub hits: Arc<Mutex<Vec<String>>>,
}

impl TestServer {
    pub fn start(routes: Vec<(&str, &str, Route)>) -> TestServer {
        let routes: HashMap<(String, String), Route> = routes
            .into_iter()
            .map(|(h, p, r)| ((h.to_string(), p.to_string()), r))
            .collect();
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind test server"));
        let addr = server.server_addr().to_ip().expect("tcp listener");
        let hits = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    let host = request
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Host"))
                        .map(|h| h.value.as_str().split(':').next().unwrap_or("").to_ascii_lowercase())
                        .unwrap_or_default();
                    let path = request.url().to_string();
                    hits.lock().unwrap().push(format!("{host}{path}"));
                    let route = routes.get(&(host, path)).cloned().unwrap_or(Route {
                        status: 404,
                        headers: Vec::new(),
                        body: "not found".into(),
                    });
                    let mut response = Response::from_string(route.body).with_status_code(route.status);
                    for (k, v) in &route.headers {
                        response.add_header(Header::from_bytes(k.as_bytes(), v.as_bytes()).unwrap());
                    }
                    let _ = request.respond(response);
                }
            })
        };
        TestServer {
            addr,
            server,
            handle: Some(handle),
            hits,
        }
    }

    /// Crawl settings routing `hosts` here, with no politeness delay.
    pub fn config(&self, hosts: &[&str]) -> CrawlConfig {
        CrawlConfig {
            resolve: hosts.iter().map(|h| (h.to_string(), self.addr)).collect(),
            politeness_delay: Duration::ZERO,
            timeout: Duration::from_secs(5),
            ..CrawlConfig::default()
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
