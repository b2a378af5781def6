//! Canonical, directly comparable form of a policy.
//!
//! Normalization applies, in order:
//! - `default-src` fallback into absent fetch directives, or the most
//!   permissive list when `default-src` itself is absent;
//! - `'self'` replaced by the serialized page origin;
//! - `'unsafe-inline'` dropped next to a nonce or hash, then nonces and
//!   hashes dropped;
//! - `'none'` dropped;
//! - schemeless host sources expanded with the scheme(s) they would match
//!   from the page (`https` page: https only, `http` page: http and https).
//!
//! Explicit default ports are erased, so `http://a.com:80` and `a.com` on an
//! http page normalize to the same string.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::origin::{default_port, Origin};
use crate::policy::{
    self, Delivery, Disposition, Keyword, PortPattern, Policy, SourceExpression, DEFAULT_SRC,
    FALLBACK_DIRECTIVES, REPORT_URI, SANDBOX, SCRIPT_SRC,
};

pub const WILDCARD: &str = "*";
pub const UNSAFE_INLINE: &str = "'unsafe-inline'";
pub const UNSAFE_EVAL: &str = "'unsafe-eval'";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("policy is report-only and only enforced policies were requested")]
    ReportOnly,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizeOptions {
    /// Reject report-only policies instead of normalizing them.
    pub enforce_only: bool,
}

#[derive(Debug, Clone)]
pub struct NormalizedPolicy {
    pub directives: BTreeMap<String, BTreeSet<String>>,
    pub page_origin: Origin,
    pub provenance: Policy,
}

impl NormalizedPolicy {
    pub fn get(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.directives.get(name)
    }

    /// Policy string which normalizes back to the same directive map.
    pub fn to_policy_string(&self) -> String {
        let mut parts = Vec::with_capacity(self.directives.len());
        for (name, values) in &self.directives {
            let mut part = name.clone();
            if values.is_empty() && policy::is_source_list_directive(name) {
                part.push_str(" 'none'");
            }
            for v in values {
                part.push(' ');
                part.push_str(v);
            }
            parts.push(part);
        }
        parts.join("; ")
    }

    pub fn reparse(&self) -> Policy {
        policy::parse_policy(&self.to_policy_string(), Disposition::Enforce, Delivery::HttpHeader)
    }
}

impl PartialEq for NormalizedPolicy {
    fn eq(&self, other: &Self) -> bool {
        self.directives == other.directives
    }
}

impl Eq for NormalizedPolicy {}

impl fmt::Display for NormalizedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_policy_string())
    }
}

pub fn normalize(policy: &Policy, page_origin: &Origin) -> NormalizedPolicy {
    let mut directives = BTreeMap::new();
    for directive in policy.directives.values() {
        let values = if directive.is_source_list() {
            canonical_sources(&directive.sources, page_origin)
        } else {
            canonical_tokens(&directive.name, directive.tokens())
        };
        directives.insert(directive.name.clone(), values);
    }

    let default_src = policy.get(DEFAULT_SRC);
    for name in FALLBACK_DIRECTIVES {
        if directives.contains_key(name) {
            continue;
        }
        let values = match default_src {
            Some(d) => canonical_sources(&d.sources, page_origin),
            None => most_permissive(name),
        };
        directives.insert(name.to_string(), values);
    }

    NormalizedPolicy {
        directives,
        page_origin: page_origin.clone(),
        provenance: policy.clone(),
    }
}

pub fn normalize_with(
    policy: &Policy,
    page_origin: &Origin,
    options: NormalizeOptions,
) -> Result<NormalizedPolicy, NormalizeError> {
    if options.enforce_only && !policy.is_enforced() {
        return Err(NormalizeError::ReportOnly);
    }
    Ok(normalize(policy, page_origin))
}

/// Source list granted to an absent directive when no `default-src` exists.
pub fn most_permissive(name: &str) -> BTreeSet<String> {
    let mut set = BTreeSet::from([WILDCARD.to_string()]);
    if name == SCRIPT_SRC {
        set.insert(UNSAFE_INLINE.to_string());
        set.insert(UNSAFE_EVAL.to_string());
    }
    set
}

fn canonical_tokens<'a>(name: &str, tokens: impl Iterator<Item = &'a str>) -> BTreeSet<String> {
    if name == SANDBOX {
        tokens.map(str::to_ascii_lowercase).collect()
    } else if name == REPORT_URI {
        tokens.map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect()
    } else {
        tokens.map(str::to_string).collect()
    }
}

pub fn canonical_sources(sources: &[SourceExpression], page_origin: &Origin) -> BTreeSet<String> {
    let has_nonce_or_hash = sources.iter().any(SourceExpression::is_nonce_or_hash);
    let mut out = BTreeSet::new();
    for source in sources {
        match source {
            SourceExpression::Wildcard => {
                out.insert(WILDCARD.to_string());
            }
            SourceExpression::Scheme(s) => {
                out.insert(format!("{s}:"));
            }
            SourceExpression::Keyword(Keyword::SelfOrigin) => {
                out.insert(page_origin.to_string());
            }
            SourceExpression::Keyword(Keyword::UnsafeInline) => {
                if !has_nonce_or_hash {
                    out.insert(UNSAFE_INLINE.to_string());
                }
            }
            SourceExpression::Keyword(Keyword::UnsafeEval) => {
                out.insert(UNSAFE_EVAL.to_string());
            }
            SourceExpression::Keyword(Keyword::Other(k)) => {
                out.insert(format!("'{k}'"));
            }
            SourceExpression::Keyword(Keyword::None)
            | SourceExpression::Nonce(_)
            | SourceExpression::Hash { .. } => {}
            SourceExpression::Host(h) => {
                let schemes: Vec<&str> = match (&h.scheme, page_origin.scheme.as_str()) {
                    (Some(s), _) => vec![s.as_str()],
                    (None, "http") => vec!["http", "https"],
                    (None, other) => vec![other],
                };
                for scheme in schemes {
                    let mut s = format!("{scheme}://{}", h.host);
                    match h.port {
                        Some(PortPattern::Number(p)) if default_port(scheme) != Some(p) => {
                            s.push_str(&format!(":{p}"));
                        }
                        Some(PortPattern::Any) => s.push_str(":*"),
                        _ => {}
                    }
                    if let Some(path) = &h.path {
                        s.push_str(path);
                    }
                    out.insert(s);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{parse_policy, CHILD_SRC, IMG_SRC};

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn norm(raw: &str, origin: &Origin) -> NormalizedPolicy {
        normalize(&parse_policy(raw, Disposition::Enforce, Delivery::HttpHeader), origin)
    }

    #[test]
    fn example_policy_on_http_page() {
        let n = norm(
            "default-src 'self'; script-src third.com; child-src https:",
            &Origin::new("http", "main.com", 80),
        );
        assert_eq!(n.get(SCRIPT_SRC).unwrap(), &set(&["http://third.com", "https://third.com"]));
        assert_eq!(n.get(IMG_SRC).unwrap(), &set(&["http://main.com"]));
        assert_eq!(n.get(CHILD_SRC).unwrap(), &set(&["https:"]));
    }

    #[test]
    fn default_none_empties_fallbacks() {
        let n = norm("default-src 'none'", &Origin::new("https", "x.com", 443));
        for name in FALLBACK_DIRECTIVES {
            assert!(n.get(name).unwrap().is_empty(), "{name}");
        }
    }

    #[test]
    fn nonce_removes_unsafe_inline() {
        let n = norm("script-src 'nonce-abc' 'unsafe-inline'", &Origin::new("https", "x.com", 443));
        assert!(n.get(SCRIPT_SRC).unwrap().is_empty());
        assert_eq!(n.get(IMG_SRC).unwrap(), &set(&["*"]));
    }

    #[test]
    fn absent_script_src_is_most_permissive() {
        let n = norm("img-src 'self'", &Origin::new("https", "x.com", 443));
        assert_eq!(n.get(SCRIPT_SRC).unwrap(), &set(&["*", "'unsafe-eval'", "'unsafe-inline'"]));
        assert_eq!(n.get(CHILD_SRC).unwrap(), &set(&["*"]));
        assert!(n.get("frame-ancestors").is_none());
    }

    #[test]
    fn https_page_keeps_only_https() {
        let n = norm("script-src cdn.com:443 cdn.com:8443/lib/", &Origin::new("https", "x.com", 443));
        assert_eq!(
            n.get(SCRIPT_SRC).unwrap(),
            &set(&["https://cdn.com", "https://cdn.com:8443/lib/"])
        );
    }

    #[test]
    fn default_ports_are_erased_per_scheme() {
        let n = norm("script-src a.com:443 http://b.com:80", &Origin::new("http", "x.com", 80));
        assert_eq!(
            n.get(SCRIPT_SRC).unwrap(),
            &set(&["http://a.com:443", "https://a.com", "http://b.com"])
        );
    }

    #[test]
    fn self_keeps_non_default_port() {
        let n = norm("script-src 'self'", &Origin::new("http", "main.com", 81));
        assert_eq!(n.get(SCRIPT_SRC).unwrap(), &set(&["http://main.com:81"]));
    }

    #[test]
    fn sandbox_and_report_uri_are_token_sets() {
        let n = norm(
            "sandbox Allow-Scripts allow-forms; report-uri /csp  /csp2",
            &Origin::new("http", "x.com", 80),
        );
        assert_eq!(n.get("sandbox").unwrap(), &set(&["allow-forms", "allow-scripts"]));
        assert_eq!(n.get("report-uri").unwrap(), &set(&["/csp", "/csp2"]));
        let bare = norm("sandbox", &Origin::new("http", "x.com", 80));
        assert!(bare.get("sandbox").unwrap().is_empty());
        assert!(bare.to_policy_string().contains("sandbox;") || bare.to_policy_string().ends_with("sandbox"));
    }

    #[test]
    fn enforce_only_rejects_report_only() {
        let p = parse_policy("script-src 'self'", Disposition::ReportOnly, Delivery::HttpHeader);
        let o = Origin::new("http", "x.com", 80);
        let opts = NormalizeOptions { enforce_only: true };
        assert_eq!(normalize_with(&p, &o, opts).unwrap_err(), NormalizeError::ReportOnly);
        assert!(normalize_with(&p, &o, NormalizeOptions::default()).is_ok());
    }

    #[test]
    fn reparse_is_a_fixed_point() {
        let o = Origin::new("http", "main.com", 81);
        let n = norm(
            "default-src 'self' *.cdn.com:*; script-src 'sha256-abc=' 'strict-dynamic'; sandbox; frame-ancestors 'none'",
            &o,
        );
        assert_eq!(normalize(&n.reparse(), &o), n);
    }
}
