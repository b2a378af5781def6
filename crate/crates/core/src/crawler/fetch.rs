use std::io::Read;

use reqwest::blocking::Client;
use reqwest::redirect;
use url::Url;

use super::record::FetchStatus;
use super::{CrawlConfig, CrawlError};

#[derive(Debug, Clone)]
pub struct FetchResponse {
    pub final_url: Url,
    pub status: FetchStatus,
    pub headers: Vec<(String, String)>,
    pub content_type: Option<String>,
    /// Lossily decoded body, truncated at the configured cap.
    pub body: Option<String>,
}

impl FetchResponse {
    fn failed(url: &Url, status: FetchStatus) -> Self {
        FetchResponse {
            final_url: url.clone(),
            status,
            headers: Vec::new(),
            content_type: None,
            body: None,
        }
    }

    pub fn is_html(&self) -> bool {
        self.content_type
            .as_deref()
            .is_none_or(|ct| ct.to_ascii_lowercase().contains("html"))
    }
}

/// Blocking HTTP client configured from a [`CrawlConfig`].
#[derive(Clone)]
pub struct Fetcher {
    client: Client,
    max_body_bytes: u64,
}

impl Fetcher {
    pub fn new(config: &CrawlConfig) -> Result<Fetcher, CrawlError> {
        let mut builder = Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(config.timeout)
            .redirect(redirect::Policy::limited(config.max_redirects));
        for (host, addr) in &config.resolve {
            builder = builder.resolve(host, *addr);
        }
        let client = builder.build().map_err(|e| CrawlError::Client(e.to_string()))?;
        Ok(Fetcher {
            client,
            max_body_bytes: config.max_body_bytes,
        })
    }

    pub fn fetch(&self, url: &Url) -> FetchResponse {
        let response = match self.client.get(url.clone()).send() {
            Ok(r) => r,
            Err(e) => return FetchResponse::failed(url, classify_error(&e)),
        };
        let final_url = response.url().clone();
        let code = response.status();
        let headers: Vec<(String, String)> = response
            .headers()
            .iter()
            .filter_map(|(k, v)| v.to_str().ok().map(|v| (k.as_str().to_string(), v.to_string())))
            .collect();
        let content_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        if !code.is_success() {
            return FetchResponse {
                final_url,
                status: FetchStatus::HttpError { code: code.as_u16() },
                headers,
                content_type,
                body: None,
            };
        }

        let mut bytes = Vec::new();
        if let Err(e) = response.take(self.max_body_bytes).read_to_end(&mut bytes) {
            let status = if e.kind() == std::io::ErrorKind::TimedOut
                || e.to_string().to_ascii_lowercase().contains("timed out")
            {
                FetchStatus::Timeout
            } else {
                FetchStatus::NetworkError
            };
            return FetchResponse {
                final_url,
                status,
                headers,
                content_type,
                body: None,
            };
        }
        FetchResponse {
            final_url,
            status: FetchStatus::Ok,
            headers,
            content_type,
            body: Some(String::from_utf8_lossy(&bytes).into_owned()),
        }
    }
}

fn classify_error(e: &reqwest::Error) -> FetchStatus {
    if e.is_timeout() {
        FetchStatus::Timeout
    } else {
        FetchStatus::NetworkError
    }
}

/// One-off fetch with a fresh client.
pub fn fetch(url: &Url, config: &CrawlConfig) -> Result<FetchResponse, CrawlError> {
    Ok(Fetcher::new(config)?.fetch(url))
}
