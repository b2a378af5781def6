//! Same-site crawl: home page, then its same-site links, then the same-site
//! iframes of both. Pages are fetched statically; nothing is executed, so
//! links and frames injected by scripts are not seen.

mod fetch;
pub mod html;
mod record;
mod robots;

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

pub use fetch::{fetch, FetchResponse, Fetcher};
pub use html::{extract_iframes, extract_links, extract_meta_policies, IframeExtraction};
pub use record::{Depth, FetchStatus, PageRecord, SrcdocFrame};

use crate::origin::{Origin, OriginError, SiteKey, SuffixTable};
use crate::policy::extract_policies;
use html::HtmlDocument;
use robots::RobotsCache;

pub const DEFAULT_USER_AGENT: &str = "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/51.0.2704.63 Safari/537.36";

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid crawl configuration: {0}")]
    Config(&'static str),
    #[error("could not build HTTP client: {0}")]
    Client(String),
    #[error("seed {url}: {source}")]
    Seed { url: String, source: OriginError },
}

#[derive(Debug, Clone, Serialize)]
pub struct CrawlConfig {
    pub user_agent: String,
    pub max_pages_per_site: usize,
    pub max_links_per_page: usize,
    pub max_iframes_per_page: usize,
    pub timeout: Duration,
    pub politeness_delay: Duration,
    pub parallel_per_site: usize,
    pub parallel_global: usize,
    pub respect_robots: bool,
    pub max_redirects: usize,
    pub max_body_bytes: u64,
    /// Host name overrides, in the manner of curl's `--resolve`.
    pub resolve: Vec<(String, SocketAddr)>,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            user_agent: DEFAULT_USER_AGENT.to_string(),
            max_pages_per_site: 500,
            max_links_per_page: 100,
            max_iframes_per_page: 50,
            timeout: Duration::from_secs(30),
            politeness_delay: Duration::from_millis(500),
            parallel_per_site: 2,
            parallel_global: 8,
            respect_robots: true,
            max_redirects: 5,
            max_body_bytes: 5 * 1024 * 1024,
            resolve: Vec::new(),
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.max_pages_per_site == 0
            || self.max_links_per_page == 0
            || self.max_iframes_per_page == 0
            || self.parallel_per_site == 0
            || self.parallel_global == 0
        {
            return Err(CrawlError::Config("caps and parallelism must be at least 1"));
        }
        if self.timeout.is_zero() {
            return Err(CrawlError::Config("timeout must be positive"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the settings that influence crawl output.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

pub struct Crawler<'a> {
    config: CrawlConfig,
    psl: &'a SuffixTable,
    fetcher: Fetcher,
    robots: RobotsCache,
    global: Semaphore,
}

impl<'a> Crawler<'a> {
    pub fn new(config: CrawlConfig, psl: &'a SuffixTable) -> Result<Self, CrawlError> {
        config.validate()?;
        let fetcher = Fetcher::new(&config)?;
        Ok(Crawler {
            robots: RobotsCache::new(&config.user_agent),
            global: Semaphore::new(config.parallel_global),
            fetcher,
            psl,
            config,
        })
    }

    pub fn config(&self) -> &CrawlConfig {
        &self.config
    }

    /// Crawls one site. Records come in stage order: home, linked pages,
    /// iframes of home, iframes of linked pages.
    pub fn crawl_site(&self, seed: &Url) -> Result<Vec<PageRecord>, CrawlError> {
        let seed_err = |source| CrawlError::Seed {
            url: seed.to_string(),
            source,
        };
        Origin::from_url(seed).map_err(seed_err)?;
        let site = self
            .psl
            .site_of(seed.host_str().unwrap_or_default())
            .map_err(seed_err)?;
        let gate = Mutex::new(Instant::now());

        let mut visited: HashSet<Url> = HashSet::new();
        visited.insert(seed.clone());
        let home = self.visit(seed, Depth::Home, &site, &gate);
        let Some(home) = home else {
            return Ok(Vec::new());
        };
        visited.insert(home.final_url.clone());
        let mut landed: HashSet<Url> = HashSet::from([home.final_url.clone()]);
        let mut records = vec![home];
        if !records[0].is_ok() {
            return Ok(records);
        }

        let cap = self.config.max_pages_per_site;
        let mut queue_links = Vec::new();
        for url in &records[0].links_same_site {
            if records.len() + queue_links.len() >= cap {
                break;
            }
            if visited.insert(url.clone()) {
                queue_links.push((url.clone(), Depth::Linked));
            }
        }
        let linked = self.visit_all(&queue_links, &site, &gate);
        for r in &linked {
            visited.insert(r.final_url.clone());
        }
        records.extend(drop_revisits(linked, &mut landed));

        let mut queue_frames = Vec::new();
        for parent in &records {
            let depth = match parent.depth {
                Depth::Home => Depth::IframeOfHome,
                Depth::Linked => Depth::IframeOfLinked,
                _ => continue,
            };
            for url in &parent.iframes_same_site {
                if records.len() + queue_frames.len() >= cap {
                    break;
                }
                if visited.insert(url.clone()) {
                    queue_frames.push((url.clone(), depth));
                }
            }
        }
        let frames = self.visit_all(&queue_frames, &site, &gate);
        records.extend(drop_revisits(frames, &mut landed));
        Ok(records)
    }

    /// Crawls every seed, at most `parallel_global` fetches in flight, and
    /// returns all records sorted by URL.
    pub fn crawl_sites(&self, seeds: &[Url]) -> Vec<PageRecord> {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(Vec::new());
        let workers = self.config.parallel_global.min(seeds.len()).max(1);
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(seed) = seeds.get(i) else { break };
                    match self.crawl_site(seed) {
                        Ok(records) => results.lock().unwrap().extend(records),
                        Err(e) => log::warn!("skipping seed: {e}"),
                    }
                });
            }
        });
        let mut records = results.into_inner().unwrap();
        records.sort_by(|a, b| a.url.as_str().cmp(b.url.as_str()));
        records
    }

    fn visit_all(&self, queue: &[(Url, Depth)], site: &SiteKey, gate: &Mutex<Instant>) -> Vec<PageRecord> {
        let slots: Vec<Mutex<Option<PageRecord>>> = queue.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.parallel_per_site.min(queue.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((url, depth)) = queue.get(i) else { break };
                    *slots[i].lock().unwrap() = self.visit(url, *depth, site, gate);
                });
            }
        });
        slots.into_iter().filter_map(|s| s.into_inner().unwrap()).collect()
    }

    fn wait_for_turn(&self, gate: &Mutex<Instant>) {
        let wait = {
            let mut next = gate.lock().unwrap();
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + self.config.politeness_delay;
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }

    /// Fetches a single page as its own site, outside any crawl. `None` when
    /// robots.txt forbids it.
    pub fn fetch_page(&self, url: &Url, depth: Depth) -> Result<Option<PageRecord>, CrawlError> {
        let seed_err = |source| CrawlError::Seed {
            url: url.to_string(),
            source,
        };
        Origin::from_url(url).map_err(seed_err)?;
        let site = self
            .psl
            .site_of(url.host_str().unwrap_or_default())
            .map_err(seed_err)?;
        Ok(self.visit(url, depth, &site, &Mutex::new(Instant::now())))
    }

    /// Fetches and extracts one page. `None` when robots.txt forbids it.
    fn visit(&self, url: &Url, depth: Depth, site: &SiteKey, gate: &Mutex<Instant>) -> Option<PageRecord> {
        let origin = Origin::from_url(url).ok()?;
        let _permit = self.global.acquire();
        if self.config.respect_robots && !self.robots.allowed(url, &self.fetcher) {
            log::info!("robots.txt disallows {url}");
            return None;
        }
        self.wait_for_turn(gate);
        let response = self.fetcher.fetch(url);

        let mut record = PageRecord::new(url.clone(), origin, site.clone(), depth);
        record.final_url = response.final_url.clone();
        record.fetch_status = response.status;
        if response.status != FetchStatus::Ok {
            return Some(record);
        }
        let final_site = response
            .final_url
            .host_str()
            .and_then(|h| self.psl.site_of(h).ok());
        let final_origin = Origin::from_url(&response.final_url);
        match (final_site, final_origin) {
            (Some(s), Ok(o)) if &s == site => record.origin = o,
            _ => {
                record.fetch_status = FetchStatus::RedirectedOffSite;
                return Some(record);
            }
        }

        let mut meta = Vec::new();
        if let Some(body) = response.body.as_deref().filter(|_| response.is_html()) {
            let doc = HtmlDocument::parse(body, &response.final_url);
            meta = doc.meta_policies();
            if depth == Depth::Home {
                let mut links = doc.links(site, self.psl);
                links.truncate(self.config.max_links_per_page);
                record.links_same_site = links;
            }
            let frames = doc.iframes(site, self.psl);
            if matches!(depth, Depth::Home | Depth::Linked) {
                let mut urls = frames.urls;
                urls.truncate(self.config.max_iframes_per_page);
                record.iframes_same_site = urls;
            }
            record.srcdoc_iframes = frames.srcdoc;
        }
        record.policies = extract_policies(&response.headers, &meta);
        Some(record)
    }
}

/// Drops fetched records whose redirect landed on a page already recorded.
fn drop_revisits(records: Vec<PageRecord>, landed: &mut HashSet<Url>) -> Vec<PageRecord> {
    records
        .into_iter()
        .filter(|r| {
            let fresh = !r.is_ok() || landed.insert(r.final_url.clone());
            if !fresh {
                log::debug!("{} landed on already recorded {}", r.url, r.final_url);
            }
            fresh
        })
        .collect()
}

/// Crawls a single site with a one-off crawler.
pub fn crawl_site(seed: &Url, config: &CrawlConfig, psl: &SuffixTable) -> Result<Vec<PageRecord>, CrawlError> {
    Crawler::new(config.clone(), psl)?.crawl_site(seed)
}

/// Reads a seed list: one URL per line, blank lines and `#` comments skipped.
pub fn parse_seeds(text: &str) -> Result<Vec<Url>, (usize, String)> {
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let url = Url::parse(line)
            .or_else(|_| Url::parse(&format!("http://{line}/")))
            .map_err(|e| (i + 1, e.to_string()))?;
        seeds.push(url);
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(CrawlConfig::default().validate().is_ok());
        let bad = CrawlConfig {
            max_links_per_page: 0,
            ..CrawlConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CrawlConfig {
            timeout: Duration::ZERO,
            ..CrawlConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_settings() {
        let a = CrawlConfig::default();
        let b = CrawlConfig {
            max_pages_per_site: 7,
            ..CrawlConfig::default()
        };
        assert_eq!(a.fingerprint(), CrawlConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn seeds_file() {
        let seeds = parse_seeds("# top sites\nhttp://main.com/\n\nexample.org\n").unwrap();
        assert_eq!(seeds.len(), 2);
        assert_eq!(seeds[1].as_str(), "http://example.org/");
    }

    #[test]
    fn unresolvable_host_is_network_error() {
        let config = CrawlConfig {
            timeout: Duration::from_secs(5),
            ..CrawlConfig::default()
        };
        let r = fetch(&Url::parse("http://does-not-exist.invalid/").unwrap(), &config).unwrap();
        assert_eq!(r.status, FetchStatus::NetworkError);
    }
}
