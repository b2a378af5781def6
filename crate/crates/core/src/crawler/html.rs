//! Tolerant HTML extraction of anchors, iframes and `<meta>` policies.

use std::collections::HashSet;

use scraper::{Html, Selector};
use url::Url;

use super::record::SrcdocFrame;
use crate::origin::{SiteKey, SuffixTable};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IframeExtraction {
    pub urls: Vec<Url>,
    pub srcdoc: Vec<SrcdocFrame>,
}

/// Everything the crawler needs from one document, from a single parse.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageExtraction {
    pub meta_policies: Vec<String>,
    pub links: Vec<Url>,
    pub iframes: IframeExtraction,
}

pub struct HtmlDocument {
    doc: Html,
    base: Url,
}

fn selector(s: &str) -> Selector {
    Selector::parse(s).expect("static selector")
}

impl HtmlDocument {
    pub fn parse(body: &str, url: &Url) -> HtmlDocument {
        let doc = Html::parse_document(body);
        let base = doc
            .select(&selector("base[href]"))
            .next()
            .and_then(|b| b.value().attr("href"))
            .and_then(|href| url.join(href.trim()).ok())
            .unwrap_or_else(|| url.clone());
        HtmlDocument { doc, base }
    }

    pub fn meta_policies(&self) -> Vec<String> {
        self.doc
            .select(&selector("meta[http-equiv][content]"))
            .filter(|m| {
                m.value()
                    .attr("http-equiv")
                    .is_some_and(|v| v.trim().eq_ignore_ascii_case("content-security-policy"))
            })
            .filter_map(|m| m.value().attr("content").map(str::to_string))
            .collect()
    }

    pub fn links(&self, site: &SiteKey, psl: &SuffixTable) -> Vec<Url> {
        let anchors = selector("a[href]");
        let hrefs = self.doc.select(&anchors).filter_map(|a| a.value().attr("href"));
        same_site_urls(hrefs, &self.base, site, psl)
    }

    pub fn iframes(&self, site: &SiteKey, psl: &SuffixTable) -> IframeExtraction {
        let mut srcdoc = Vec::new();
        let mut srcs = Vec::new();
        for frame in self.doc.select(&selector("iframe")) {
            let el = frame.value();
            if el.attr("srcdoc").is_some() {
                srcdoc.push(SrcdocFrame {
                    sandbox: el.attr("sandbox").map(str::to_string),
                });
            } else if let Some(src) = el.attr("src") {
                srcs.push(src);
            }
        }
        IframeExtraction {
            urls: same_site_urls(srcs.into_iter(), &self.base, site, psl),
            srcdoc,
        }
    }

    pub fn extract(&self, site: &SiteKey, psl: &SuffixTable) -> PageExtraction {
        PageExtraction {
            meta_policies: self.meta_policies(),
            links: self.links(site, psl),
            iframes: self.iframes(site, psl),
        }
    }
}

/// Resolves, filters to http(s) URLs of `site`, strips fragments and
/// deduplicates while keeping first-seen order.
fn same_site_urls<'a>(
    raw: impl Iterator<Item = &'a str>,
    base: &Url,
    site: &SiteKey,
    psl: &SuffixTable,
) -> Vec<Url> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for href in raw {
        let Ok(mut url) = base.join(href.trim()) else {
            continue;
        };
        if !matches!(url.scheme(), "http" | "https") {
            continue;
        }
        url.set_fragment(None);
        let same_site = url
            .host_str()
            .and_then(|h| psl.site_of(h).ok())
            .is_some_and(|s| &s == site);
        if same_site && seen.insert(url.clone()) {
            out.push(url);
        }
    }
    out
}

pub fn extract_links(body: &str, base: &Url, site: &SiteKey, psl: &SuffixTable) -> Vec<Url> {
    HtmlDocument::parse(body, base).links(site, psl)
}

pub fn extract_iframes(body: &str, base: &Url, site: &SiteKey, psl: &SuffixTable) -> IframeExtraction {
    HtmlDocument::parse(body, base).iframes(site, psl)
}

pub fn extract_meta_policies(body: &str) -> Vec<String> {
    let url = Url::parse("http://invalid/").expect("static url");
    HtmlDocument::parse(body, &url).meta_policies()
}
