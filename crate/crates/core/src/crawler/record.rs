use serde::{Deserialize, Serialize};
use url::Url;

use crate::origin::{Origin, SiteKey};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FetchStatus {
    Ok,
    HttpError { code: u16 },
    NetworkError,
    Timeout,
    /// Fetched fine but the final URL after redirects left the crawled site;
    /// nothing was extracted.
    RedirectedOffSite,
}

/// Crawl stage a page was reached in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Depth {
    Home,
    Linked,
    IframeOfHome,
    IframeOfLinked,
}

impl Depth {
    pub fn is_iframe(self) -> bool {
        matches!(self, Depth::IframeOfHome | Depth::IframeOfLinked)
    }
}

/// An `<iframe srcdoc>` seen on a page; it has no URL of its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrcdocFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sandbox: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub url: Url,
    pub final_url: Url,
    pub origin: Origin,
    pub site: SiteKey,
    pub depth: Depth,
    pub fetch_status: FetchStatus,
    /// Header-delivered policies first, then `<meta>` policies, each in
    /// document order.
    pub policies: Vec<Policy>,
    pub links_same_site: Vec<Url>,
    pub iframes_same_site: Vec<Url>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub srcdoc_iframes: Vec<SrcdocFrame>,
}

impl PageRecord {
    /// A successfully fetched page with nothing extracted yet.
    pub fn new(url: Url, origin: Origin, site: SiteKey, depth: Depth) -> Self {
        PageRecord {
            final_url: url.clone(),
            url,
            origin,
            site,
            depth,
            fetch_status: FetchStatus::Ok,
            policies: Vec::new(),
            links_same_site: Vec::new(),
            iframes_same_site: Vec::new(),
            srcdoc_iframes: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.fetch_status == FetchStatus::Ok
    }

    pub fn enforced_policies(&self) -> impl Iterator<Item = &Policy> {
        self.policies.iter().filter(|p| p.is_enforced())
    }

    /// Any policy, enforced or report-only.
    pub fn has_csp(&self) -> bool {
        !self.policies.is_empty()
    }

    pub fn has_enforced_csp(&self) -> bool {
        self.enforced_policies().next().is_some()
    }
}
