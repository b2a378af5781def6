//! Content-Security-Policy (level 2) data model and a total, tolerant parser
//! for policy strings delivered in response headers or `<meta>` elements.
//!
//! Parsing never fails. Anything that does not fit the grammar is dropped and
//! recorded as a [`ParseWarning`] on the resulting [`Policy`].

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use url::Url;

use crate::origin::Origin;

pub const DEFAULT_SRC: &str = "default-src";
pub const SCRIPT_SRC: &str = "script-src";
pub const STYLE_SRC: &str = "style-src";
pub const IMG_SRC: &str = "img-src";
pub const FONT_SRC: &str = "font-src";
pub const CONNECT_SRC: &str = "connect-src";
pub const OBJECT_SRC: &str = "object-src";
pub const MEDIA_SRC: &str = "media-src";
pub const CHILD_SRC: &str = "child-src";
pub const FRAME_ANCESTORS: &str = "frame-ancestors";
pub const REPORT_URI: &str = "report-uri";
pub const SANDBOX: &str = "sandbox";

/// Directives that inherit the `default-src` source list when absent.
pub const FALLBACK_DIRECTIVES: [&str; 8] = [
    SCRIPT_SRC,
    STYLE_SRC,
    IMG_SRC,
    FONT_SRC,
    CONNECT_SRC,
    OBJECT_SRC,
    MEDIA_SRC,
    CHILD_SRC,
];

/// Directives whose value is a source list.
const SOURCE_LIST_DIRECTIVES: &[&str] = &[
    DEFAULT_SRC,
    SCRIPT_SRC,
    STYLE_SRC,
    IMG_SRC,
    FONT_SRC,
    CONNECT_SRC,
    OBJECT_SRC,
    MEDIA_SRC,
    CHILD_SRC,
    FRAME_ANCESTORS,
    "frame-src",
    "worker-src",
    "manifest-src",
    "prefetch-src",
    "script-src-elem",
    "script-src-attr",
    "style-src-elem",
    "style-src-attr",
    "base-uri",
    "form-action",
    "navigate-to",
];

/// Known directives whose value is a plain token list (flags, URIs, media types).
const TOKEN_LIST_DIRECTIVES: &[&str] = &[
    REPORT_URI,
    SANDBOX,
    "report-to",
    "plugin-types",
    "upgrade-insecure-requests",
    "block-all-mixed-content",
    "require-sri-for",
    "require-trusted-types-for",
    "trusted-types",
    "referrer",
    "reflected-xss",
];

pub fn is_source_list_directive(name: &str) -> bool {
    SOURCE_LIST_DIRECTIVES.contains(&name)
}

pub fn is_known_directive(name: &str) -> bool {
    is_source_list_directive(name) || TOKEN_LIST_DIRECTIVES.contains(&name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    Enforce,
    ReportOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delivery {
    HttpHeader,
    MetaElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PortPattern {
    Number(u16),
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HashAlgorithm {
    Sha256,
    Sha384,
    Sha512,
}

impl HashAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            HashAlgorithm::Sha256 => "sha256",
            HashAlgorithm::Sha384 => "sha384",
            HashAlgorithm::Sha512 => "sha512",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Keyword {
    SelfOrigin,
    UnsafeInline,
    UnsafeEval,
    None,
    /// Any other quoted keyword (`'strict-dynamic'`, `'unsafe-hashes'`, ...),
    /// lowercased and carried without interpretation.
    Other(String),
}

impl Keyword {
    fn parse(inner: &str) -> Keyword {
        match inner.to_ascii_lowercase().as_str() {
            "self" => Keyword::SelfOrigin,
            "unsafe-inline" => Keyword::UnsafeInline,
            "unsafe-eval" => Keyword::UnsafeEval,
            "none" => Keyword::None,
            other => Keyword::Other(other.to_string()),
        }
    }

    fn as_str(&self) -> &str {
        match self {
            Keyword::SelfOrigin => "self",
            Keyword::UnsafeInline => "unsafe-inline",
            Keyword::UnsafeEval => "unsafe-eval",
            Keyword::None => "none",
            Keyword::Other(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HostSource {
    pub scheme: Option<String>,
    /// `*`, `*.example.com` or `example.com`; always lowercase.
    pub host: String,
    pub port: Option<PortPattern>,
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceExpression {
    Host(HostSource),
    /// Scheme without the trailing colon, lowercase.
    Scheme(String),
    Keyword(Keyword),
    Nonce(String),
    Hash { algorithm: HashAlgorithm, value: String },
    Wildcard,
}

impl SourceExpression {
    /// Parses one source expression token. Returns `None` for malformed input.
    pub fn parse(token: &str) -> Option<SourceExpression> {
        if token == "*" {
            return Some(SourceExpression::Wildcard);
        }
        if let Some(quoted) = token.strip_prefix('\'') {
            let inner = quoted.strip_suffix('\'')?;
            if inner.is_empty() || inner.contains('\'') {
                return None;
            }
            let lower = inner.to_ascii_lowercase();
            if lower.starts_with("nonce-") {
                let value = &inner["nonce-".len()..];
                return is_base64_value(value).then(|| SourceExpression::Nonce(value.to_string()));
            }
            for algorithm in [HashAlgorithm::Sha256, HashAlgorithm::Sha384, HashAlgorithm::Sha512] {
                let prefix = format!("{}-", algorithm.as_str());
                if lower.starts_with(&prefix) {
                    let value = &inner[prefix.len()..];
                    return is_base64_value(value).then(|| SourceExpression::Hash {
                        algorithm,
                        value: value.to_string(),
                    });
                }
            }
            if !inner.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-') {
                return None;
            }
            return Some(SourceExpression::Keyword(Keyword::parse(inner)));
        }
        if let Some(scheme) = token.strip_suffix(':') {
            return is_scheme(scheme).then(|| SourceExpression::Scheme(scheme.to_ascii_lowercase()));
        }
        parse_host_source(token).map(SourceExpression::Host)
    }

    pub fn is_nonce_or_hash(&self) -> bool {
        matches!(self, SourceExpression::Nonce(_) | SourceExpression::Hash { .. })
    }
}

impl fmt::Display for SourceExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceExpression::Wildcard => f.write_str("*"),
            SourceExpression::Scheme(s) => write!(f, "{s}:"),
            SourceExpression::Keyword(k) => write!(f, "'{}'", k.as_str()),
            SourceExpression::Nonce(v) => write!(f, "'nonce-{v}'"),
            SourceExpression::Hash { algorithm, value } => {
                write!(f, "'{}-{value}'", algorithm.as_str())
            }
            SourceExpression::Host(h) => {
                if let Some(scheme) = &h.scheme {
                    write!(f, "{scheme}://")?;
                }
                f.write_str(&h.host)?;
                match h.port {
                    Some(PortPattern::Number(p)) => write!(f, ":{p}")?,
                    Some(PortPattern::Any) => f.write_str(":*")?,
                    None => {}
                }
                if let Some(path) = &h.path {
                    f.write_str(path)?;
                }
                Ok(())
            }
        }
    }
}

fn is_scheme(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_alphabetic())
        && bytes.all(|b| b.is_ascii_alphanumeric() || matches!(b, b'+' | b'-' | b'.'))
}

/// Base64 value as accepted in nonce and hash sources (standard or URL-safe
/// alphabet, at most two padding characters).
fn is_base64_value(s: &str) -> bool {
    let body = s.trim_end_matches('=');
    let padding = s.len() - body.len();
    !body.is_empty()
        && padding <= 2
        && body
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'+' | b'/' | b'-' | b'_'))
}

fn is_host_label(label: &str) -> bool {
    !label.is_empty() && label.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

fn parse_host_source(token: &str) -> Option<HostSource> {
    let (scheme, rest) = match token.find("://") {
        Some(idx) => {
            let scheme = &token[..idx];
            if !is_scheme(scheme) {
                return None;
            }
            (Some(scheme.to_ascii_lowercase()), &token[idx + 3..])
        }
        None => (None, token),
    };

    let host_end = rest.find([':', '/']).unwrap_or(rest.len());
    let host = &rest[..host_end];
    if host != "*" {
        let bare = host.strip_prefix("*.").unwrap_or(host);
        if !bare.split('.').all(is_host_label) {
            return None;
        }
    }
    let mut rest = &rest[host_end..];

    let mut port = None;
    if let Some(after) = rest.strip_prefix(':') {
        let port_end = after.find('/').unwrap_or(after.len());
        let port_str = &after[..port_end];
        port = Some(if port_str == "*" {
            PortPattern::Any
        } else {
            if port_str.is_empty() || !port_str.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            match port_str.parse::<u16>() {
                Ok(p) if p > 0 => PortPattern::Number(p),
                _ => return None,
            }
        });
        rest = &after[port_end..];
    }

    let path = if rest.is_empty() {
        None
    } else {
        if !rest.starts_with('/') || rest.contains([';', ',']) {
            return None;
        }
        Some(rest.to_string())
    };

    Some(HostSource {
        scheme,
        host: host.to_ascii_lowercase(),
        port,
        path,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParseWarning {
    DuplicateDirective { directive: String },
    UnknownDirective { directive: String },
    MalformedDirective { text: String },
    MalformedSource { directive: String, token: String },
    MisplacedNone { directive: String },
}

#[derive(Debug, Clone, Eq)]
pub struct Directive {
    pub name: String,
    /// Parsed sources; empty for token-list directives such as `sandbox`.
    pub sources: Vec<SourceExpression>,
    /// Value text with whitespace collapsed to single spaces.
    pub raw_value: String,
}

impl Directive {
    pub fn is_source_list(&self) -> bool {
        is_source_list_directive(&self.name)
    }

    /// Whitespace-separated tokens of the raw value.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.raw_value.split_ascii_whitespace()
    }
}

impl PartialEq for Directive {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.sources == other.sources
            && (self.is_source_list() || self.raw_value == other.raw_value)
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if self.is_source_list() {
            for source in &self.sources {
                write!(f, " {source}")?;
            }
        } else {
            for token in self.tokens() {
                write!(f, " {token}")?;
            }
        }
        Ok(())
    }
}

/// One parsed policy. Equality is structural: raw text and warnings are ignored.
#[derive(Debug, Clone)]
pub struct Policy {
    pub directives: IndexMap<String, Directive>,
    pub disposition: Disposition,
    pub delivery: Delivery,
    pub raw: String,
    pub warnings: Vec<ParseWarning>,
}

impl PartialEq for Policy {
    fn eq(&self, other: &Self) -> bool {
        self.directives == other.directives
            && self.disposition == other.disposition
            && self.delivery == other.delivery
    }
}

impl Eq for Policy {}

impl Policy {
    pub fn get(&self, name: &str) -> Option<&Directive> {
        self.directives.get(name)
    }

    pub fn is_enforced(&self) -> bool {
        self.disposition == Disposition::Enforce
    }

    /// Serializes to a policy string that reparses to an equal policy.
    pub fn serialize(&self) -> String {
        self.to_string()
    }

    /// The directive that governs `name` for this policy, taking `default-src`
    /// fallback into account.
    pub fn effective_directive(&self, name: &str) -> Option<&Directive> {
        self.get(name).or_else(|| {
            FALLBACK_DIRECTIVES
                .contains(&name)
                .then(|| self.get(DEFAULT_SRC))
                .flatten()
        })
    }

    /// Whether a fetch of `url` under directive `name` would be allowed on a
    /// page at `page_origin`.
    pub fn allows(&self, name: &str, url: &Url, page_origin: &Origin) -> bool {
        match self.effective_directive(name) {
            None => true,
            Some(d) => d.sources.iter().any(|s| source_matches(s, url, page_origin)),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.directives.values().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            raw: &'a str,
            disposition: Disposition,
            delivery: Delivery,
        }
        Wire {
            raw: &self.raw,
            disposition: self.disposition,
            delivery: self.delivery,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            raw: String,
            disposition: Disposition,
            delivery: Delivery,
        }
        let w = Wire::deserialize(deserializer)?;
        Ok(parse_policy(&w.raw, w.disposition, w.delivery))
    }
}

/// Parses a single serialized policy. Total: malformed pieces become warnings.
pub fn parse_policy(raw: &str, disposition: Disposition, delivery: Delivery) -> Policy {
    let mut directives: IndexMap<String, Directive> = IndexMap::new();
    let mut warnings = Vec::new();

    for chunk in raw.split(';') {
        let mut tokens = chunk.split_ascii_whitespace();
        let Some(name_token) = tokens.next() else {
            continue;
        };
        if !name_token.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-') {
            warnings.push(ParseWarning::MalformedDirective {
                text: chunk.trim().to_string(),
            });
            continue;
        }
        let name = name_token.to_ascii_lowercase();
        if directives.contains_key(&name) {
            warnings.push(ParseWarning::DuplicateDirective { directive: name });
            continue;
        }
        if !is_known_directive(&name) {
            warnings.push(ParseWarning::UnknownDirective {
                directive: name.clone(),
            });
        }

        let value_tokens: Vec<&str> = tokens.collect();
        let raw_value = value_tokens.join(" ");
        let mut sources = Vec::new();
        if is_source_list_directive(&name) {
            for token in &value_tokens {
                match SourceExpression::parse(token) {
                    Some(source) => sources.push(source),
                    None => warnings.push(ParseWarning::MalformedSource {
                        directive: name.clone(),
                        token: token.to_string(),
                    }),
                }
            }
            let none = SourceExpression::Keyword(Keyword::None);
            if sources.contains(&none) {
                if sources.iter().any(|s| *s != none) {
                    sources.retain(|s| *s != none);
                    warnings.push(ParseWarning::MisplacedNone {
                        directive: name.clone(),
                    });
                } else {
                    sources.truncate(1);
                }
            }
        }
        directives.insert(
            name.clone(),
            Directive {
                name,
                sources,
                raw_value,
            },
        );
    }

    Policy {
        directives,
        disposition,
        delivery,
        raw: raw.to_string(),
        warnings,
    }
}

pub const CSP_HEADER: &str = "content-security-policy";
pub const CSP_REPORT_ONLY_HEADER: &str = "content-security-policy-report-only";

/// Collects the policies delivered with a document: every CSP header field
/// (in order) followed by every `<meta http-equiv>` policy (in order).
///
/// A field value holding a comma-separated policy list yields one policy per
/// non-empty member.
pub fn extract_policies<N, V, M>(header_fields: &[(N, V)], meta_tags: &[M]) -> Vec<Policy>
where
    N: AsRef<str>,
    V: AsRef<str>,
    M: AsRef<str>,
{
    let mut out = Vec::new();
    for (name, value) in header_fields {
        let disposition = match name.as_ref().trim().to_ascii_lowercase().as_str() {
            CSP_HEADER => Disposition::Enforce,
            CSP_REPORT_ONLY_HEADER => Disposition::ReportOnly,
            _ => continue,
        };
        for part in value.as_ref().split(',') {
            if !part.trim().is_empty() {
                out.push(parse_policy(part.trim(), disposition, Delivery::HttpHeader));
            }
        }
    }
    for content in meta_tags {
        let content = content.as_ref().trim();
        if !content.is_empty() {
            out.push(parse_policy(content, Disposition::Enforce, Delivery::MetaElement));
        }
    }
    out
}

fn source_matches(source: &SourceExpression, url: &Url, page_origin: &Origin) -> bool {
    let url_scheme = url.scheme();
    match source {
        SourceExpression::Wildcard => !matches!(url_scheme, "data" | "blob" | "filesystem"),
        SourceExpression::Scheme(s) => url_scheme == s,
        SourceExpression::Keyword(Keyword::SelfOrigin) => {
            Origin::from_url(url).is_ok_and(|o| &o == page_origin)
        }
        SourceExpression::Keyword(_) | SourceExpression::Nonce(_) | SourceExpression::Hash { .. } => {
            false
        }
        SourceExpression::Host(h) => {
            let scheme_ok = match &h.scheme {
                Some(s) => url_scheme == s,
                None if page_origin.scheme == "http" => matches!(url_scheme, "http" | "https"),
                None => url_scheme == page_origin.scheme,
            };
            let Some(url_host) = url.host_str() else {
                return false;
            };
            let url_host = url_host.to_ascii_lowercase();
            let host_ok = if h.host == "*" {
                true
            } else if let Some(suffix) = h.host.strip_prefix("*.") {
                url_host.len() > suffix.len() + 1
                    && url_host.ends_with(suffix)
                    && url_host.as_bytes()[url_host.len() - suffix.len() - 1] == b'.'
            } else {
                url_host == h.host
            };
            let port_ok = match h.port {
                Some(PortPattern::Any) => true,
                Some(PortPattern::Number(p)) => url.port_or_known_default() == Some(p),
                None => url.port().is_none(),
            };
            let path_ok = match &h.path {
                None => true,
                Some(p) if p.ends_with('/') => url.path().starts_with(p.as_str()),
                Some(p) => url.path() == p,
            };
            scheme_ok && host_ok && port_ok && path_ok
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enforce(raw: &str) -> Policy {
        parse_policy(raw, Disposition::Enforce, Delivery::HttpHeader)
    }

    #[test]
    fn parses_running_example_policy() {
        let p = enforce("default-src 'none'; script-src 'self'; child-src 'self'");
        assert_eq!(p.directives.len(), 3);
        assert_eq!(
            p.get(SCRIPT_SRC).unwrap().sources,
            vec![SourceExpression::Keyword(Keyword::SelfOrigin)]
        );
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn empty_policy() {
        let p = enforce("");
        assert!(p.directives.is_empty());
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn scheme_source_in_child_src() {
        let p = enforce("default-src 'self'; script-src third.com; child-src https:");
        assert_eq!(p.directives.len(), 3);
        assert_eq!(
            p.get(CHILD_SRC).unwrap().sources,
            vec![SourceExpression::Scheme("https".into())]
        );
    }

    #[test]
    fn first_directive_wins() {
        let p = enforce("script-src a.com; script-src b.com");
        let sources = &p.get(SCRIPT_SRC).unwrap().sources;
        assert_eq!(sources.len(), 1);
        assert_eq!(sources[0].to_string(), "a.com");
        assert_eq!(
            p.warnings,
            vec![ParseWarning::DuplicateDirective {
                directive: SCRIPT_SRC.into()
            }]
        );
    }

    #[test]
    fn misplaced_none_is_dropped() {
        let p = enforce("img-src 'none' a.com");
        assert_eq!(p.get(IMG_SRC).unwrap().sources.len(), 1);
        assert!(matches!(p.warnings[0], ParseWarning::MisplacedNone { .. }));
    }

    #[test]
    fn malformed_sources_are_skipped() {
        let p = enforce("script-src 'self' ex ample!! 'nonce-@@' http://a.com:99999");
        let sources = &p.get(SCRIPT_SRC).unwrap().sources;
        assert_eq!(sources.len(), 2); // 'self' and `ex`
        let malformed = p
            .warnings
            .iter()
            .filter(|w| matches!(w, ParseWarning::MalformedSource { .. }))
            .count();
        assert_eq!(malformed, 3);
    }

    #[test]
    fn unknown_directive_is_carried() {
        let p = enforce("Form-Action 'self'; x-custom foo");
        assert!(p.get("form-action").is_some());
        assert!(p.get("x-custom").is_some());
        assert_eq!(
            p.warnings,
            vec![ParseWarning::UnknownDirective {
                directive: "x-custom".into()
            }]
        );
    }

    #[test]
    fn host_source_components() {
        let s = SourceExpression::parse("HTTPS://*.Example.com:*/path/").unwrap();
        let SourceExpression::Host(h) = s else {
            panic!("expected host source")
        };
        assert_eq!(h.scheme.as_deref(), Some("https"));
        assert_eq!(h.host, "*.example.com");
        assert_eq!(h.port, Some(PortPattern::Any));
        assert_eq!(h.path.as_deref(), Some("/path/"));
        assert!(SourceExpression::parse("*.*.a.com").is_none());
        assert!(SourceExpression::parse("a..com").is_none());
    }

    #[test]
    fn nonce_and_hash_preserve_case() {
        let s = SourceExpression::parse("'NONCE-AbC+/='").unwrap();
        assert_eq!(s, SourceExpression::Nonce("AbC+/=".into()));
        let h = SourceExpression::parse("'sha256-Ab_-'").unwrap();
        assert!(matches!(h, SourceExpression::Hash { algorithm: HashAlgorithm::Sha256, .. }));
        assert!(SourceExpression::parse("'nonce-a===").is_none());
    }

    #[test]
    fn extract_sets_disposition_and_order() {
        let headers = [
            ("Content-Security-Policy-Report-Only", "default-src 'self'"),
            ("content-type", "text/html"),
            ("CONTENT-SECURITY-POLICY", "script-src 'self'"),
        ];
        let metas = ["img-src 'none'"];
        let ps = extract_policies(&headers, &metas);
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0].disposition, Disposition::ReportOnly);
        assert_eq!(ps[1].disposition, Disposition::Enforce);
        assert!(ps[1].get(SCRIPT_SRC).is_some());
        assert_eq!(ps[2].delivery, Delivery::MetaElement);
        assert_eq!(ps[2].disposition, Disposition::Enforce);
    }

    #[test]
    fn extract_from_nothing() {
        let none: [(&str, &str); 0] = [];
        let metas: [&str; 0] = [];
        assert!(extract_policies(&none, &metas).is_empty());
    }

    #[test]
    fn extract_two_headers_preserves_order() {
        let headers = [
            ("Content-Security-Policy", "script-src a.com"),
            ("Content-Security-Policy", "img-src b.com"),
        ];
        let ps = extract_policies(&headers, &[] as &[&str]);
        assert_eq!(ps.len(), 2);
        assert!(ps[0].get(SCRIPT_SRC).is_some());
        assert!(ps[1].get(IMG_SRC).is_some());
    }

    #[test]
    fn serde_reparses() {
        let p = enforce("script-src 'self' https://a.com; sandbox allow-scripts");
        let json = serde_json::to_string(&p).unwrap();
        let back: Policy = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        assert_eq!(back.raw, p.raw);
    }

    #[test]
    fn allows_matches_sources() {
        let origin = Origin::new("http", "main.com", 80);
        let p = enforce("default-src 'self'; script-src third.com *.cdn.com:8080; img-src https:");
        let ok = |d: &str, u: &str| p.allows(d, &Url::parse(u).unwrap(), &origin);
        assert!(ok(SCRIPT_SRC, "https://third.com/x.js"));
        assert!(ok(SCRIPT_SRC, "http://a.cdn.com:8080/x.js"));
        assert!(!ok(SCRIPT_SRC, "http://cdn.com:8080/x.js"));
        assert!(!ok(SCRIPT_SRC, "http://main.com/x.js"));
        assert!(ok(STYLE_SRC, "http://main.com/s.css"));
        assert!(!ok(STYLE_SRC, "http://main.com:81/s.css"));
        assert!(ok(IMG_SRC, "https://anything.org/i.png"));
        assert!(!ok(IMG_SRC, "http://main.com/i.png"));
        assert!(ok("form-action", "http://evil.com/"));
    }
}
