//! Same-Origin Policy origins, registrable-domain ("site") identity and
//! `document.domain` relaxation.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::{Host, Url};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OriginError {
    #[error("unsupported URL `{0}`: expected an absolute http(s) URL")]
    UnsupportedUrl(String),
    #[error("`{0}` is a public suffix and has no registrable domain")]
    NoRegistrableDomain(String),
    #[error("invalid host name `{0}`")]
    InvalidHost(String),
}

/// The (scheme, host, port) triple of a document URL. The port is always
/// resolved, so `http://a.com` and `http://a.com:80` have equal origins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub scheme: String,
    pub host: String,
    pub port: u16,
}

pub fn default_port(scheme: &str) -> Option<u16> {
    match scheme {
        "http" | "ws" => Some(80),
        "https" | "wss" => Some(443),
        _ => None,
    }
}

impl Origin {
    pub fn new(scheme: impl Into<String>, host: impl Into<String>, port: u16) -> Self {
        Origin {
            scheme: scheme.into().to_ascii_lowercase(),
            host: host.into().to_ascii_lowercase(),
            port,
        }
    }

    pub fn from_url(url: &Url) -> Result<Origin, OriginError> {
        let unsupported = || OriginError::UnsupportedUrl(url.to_string());
        if !matches!(url.scheme(), "http" | "https") {
            return Err(unsupported());
        }
        let host = url.host_str().filter(|h| !h.is_empty()).ok_or_else(unsupported)?;
        let port = url.port_or_known_default().ok_or_else(unsupported)?;
        Ok(Origin::new(url.scheme(), host, port))
    }

    /// Serialized origin, omitting the port when it is the scheme default.
    pub fn ascii(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}", self.scheme, self.host)?;
        if default_port(&self.scheme) != Some(self.port) {
            write!(f, ":{}", self.port)?;
        }
        Ok(())
    }
}

pub fn origin_of(url: &str) -> Result<Origin, OriginError> {
    let parsed = Url::parse(url).map_err(|_| OriginError::UnsupportedUrl(url.to_string()))?;
    Origin::from_url(&parsed)
}

pub fn same_origin(a: &Origin, b: &Origin) -> bool {
    a == b
}

/// Registrable domain (eTLD+1) identifying a site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteKey(pub String);

impl SiteKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SiteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

const BUNDLED_LIST: &str = include_str!("../data/public_suffix_list.dat");

static BUNDLED: LazyLock<SuffixTable> = LazyLock::new(|| SuffixTable::parse(BUNDLED_LIST));
static NAIVE: LazyLock<SuffixTable> = LazyLock::new(SuffixTable::naive);

/// Public-suffix rules in the standard list format.
#[derive(Debug, Clone, Default)]
pub struct SuffixTable {
    normal: HashSet<String>,
    wildcard: HashSet<String>,
    exception: HashSet<String>,
    version: Option<String>,
}

impl SuffixTable {
    /// Parses the one-rule-per-line format: `//` comments, `*.` wildcard and
    /// `!` exception rules, only the first whitespace-delimited token counts.
    pub fn parse(text: &str) -> SuffixTable {
        let mut table = SuffixTable::default();
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix("//") {
                if let Some(v) = comment.trim().strip_prefix("VERSION:") {
                    table.version = Some(v.trim().to_string());
                }
                continue;
            }
            let Some(rule) = line.split_whitespace().next() else {
                continue;
            };
            let rule = rule.to_lowercase();
            if let Some(r) = rule.strip_prefix('!') {
                table.exception.insert(to_ascii_rule(r));
            } else if let Some(r) = rule.strip_prefix("*.") {
                table.wildcard.insert(to_ascii_rule(r));
            } else {
                table.normal.insert(to_ascii_rule(&rule));
            }
        }
        table
    }

    pub fn load(path: &Path) -> std::io::Result<SuffixTable> {
        Ok(SuffixTable::parse(&std::fs::read_to_string(path)?))
    }

    /// Snapshot of the public suffix list shipped with the crate.
    pub fn bundled() -> &'static SuffixTable {
        &BUNDLED
    }

    /// No rules at all: every TLD is the suffix, so the site is the last two
    /// labels ("domain + TLD").
    pub fn naive() -> SuffixTable {
        SuffixTable::default()
    }

    pub fn naive_static() -> &'static SuffixTable {
        &NAIVE
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    pub fn len(&self) -> usize {
        self.normal.len() + self.wildcard.len() + self.exception.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trailing labels of `labels` forming the public suffix.
    fn suffix_label_count(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        for i in 0..n {
            if self.exception.contains(&labels[i..].join(".")) {
                return n - i - 1;
            }
        }
        for i in 0..n {
            let candidate = labels[i..].join(".");
            if self.normal.contains(&candidate) {
                return n - i;
            }
            if i + 1 < n && self.wildcard.contains(&labels[i + 1..].join(".")) {
                return n - i;
            }
        }
        1
    }

    pub fn public_suffix<'a>(&self, host: &'a str) -> &'a str {
        let labels: Vec<&str> = host.split('.').collect();
        let count = self.suffix_label_count(&labels).min(labels.len());
        let skip: usize = labels[..labels.len() - count].iter().map(|l| l.len() + 1).sum();
        &host[skip..]
    }

    pub fn site_of(&self, host: &str) -> Result<SiteKey, OriginError> {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        if host.is_empty() || host.split('.').any(str::is_empty) {
            return Err(OriginError::InvalidHost(host));
        }
        if is_ip_literal(&host) {
            return Ok(SiteKey(host));
        }
        let labels: Vec<&str> = host.split('.').collect();
        let count = self.suffix_label_count(&labels);
        if count >= labels.len() {
            return Err(OriginError::NoRegistrableDomain(host));
        }
        Ok(SiteKey(labels[labels.len() - count - 1..].join(".")))
    }
}

/// Hosts reach us punycoded, so Unicode rules are stored the same way.
fn to_ascii_rule(rule: &str) -> String {
    if rule.is_ascii() {
        return rule.to_string();
    }
    match Host::parse(rule) {
        Ok(Host::Domain(d)) => d,
        _ => rule.to_string(),
    }
}

fn is_ip_literal(host: &str) -> bool {
    matches!(Host::parse(host), Ok(Host::Ipv4(_) | Host::Ipv6(_)))
}

pub fn site_of(host: &str, psl: &SuffixTable) -> Result<SiteKey, OriginError> {
    psl.site_of(host)
}

/// The common value both documents could assign to `document.domain` to
/// become same-origin: their shared registrable domain, provided they are
/// not already same-origin and agree on scheme and port.
pub fn relaxable_to(a: &Origin, b: &Origin, psl: &SuffixTable) -> Option<SiteKey> {
    if same_origin(a, b) || a.scheme != b.scheme || a.port != b.port {
        return None;
    }
    if is_ip_literal(&a.host) || is_ip_literal(&b.host) {
        return None;
    }
    let site_a = psl.site_of(&a.host).ok()?;
    let site_b = psl.site_of(&b.host).ok()?;
    (site_a == site_b).then_some(site_a)
}
