//! Classification of (parent, iframe) couples and origin-level potential
//! violations.
//!
//! Only enforced policies count as "having a CSP"; report-only policies are
//! ignored throughout.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::compare::{policy_sets_equal, set_difference_directives};
use crate::crawler::PageRecord;
use crate::normalize::{normalize, NormalizedPolicy};
use crate::origin::{relaxable_to, same_origin, Origin, SiteKey, SuffixTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    SameOrigin,
    Relaxable,
    Unrelated,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::SameOrigin => "same-origin",
            Relation::Relaxable => "relaxable",
            Relation::Unrelated => "unrelated",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        [Relation::SameOrigin, Relation::Relaxable, Relation::Unrelated]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    OnlyParentCsp,
    OnlyIframeCsp,
    DifferentCsp,
    NoViolation,
    NoCspAnywhere,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::OnlyParentCsp,
        Category::OnlyIframeCsp,
        Category::DifferentCsp,
        Category::NoViolation,
        Category::NoCspAnywhere,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::OnlyParentCsp => "only-parent-csp",
            Category::OnlyIframeCsp => "only-iframe-csp",
            Category::DifferentCsp => "different-csp",
            Category::NoViolation => "no-violation",
            Category::NoCspAnywhere => "no-csp-anywhere",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Unequal protection on the two sides.
    pub fn is_mismatch(self) -> bool {
        matches!(self, Category::OnlyParentCsp | Category::OnlyIframeCsp | Category::DifferentCsp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairClassification {
    pub relation: Relation,
    pub category: Category,
    /// Directives that differ; non-empty exactly for `different-csp`.
    pub evidence: BTreeSet<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relaxed_to: Option<SiteKey>,
}

impl PairClassification {
    /// Mismatched protection between documents that can script each other.
    pub fn is_violation(&self) -> bool {
        self.relation != Relation::Unrelated && self.category.is_mismatch()
    }
}

/// Category from the two sides' enforced, normalized policy lists.
pub fn categorize(parent: &[NormalizedPolicy], iframe: &[NormalizedPolicy]) -> (Category, BTreeSet<String>) {
    match (parent.is_empty(), iframe.is_empty()) {
        (true, true) => (Category::NoCspAnywhere, BTreeSet::new()),
        (false, true) => (Category::OnlyParentCsp, BTreeSet::new()),
        (true, false) => (Category::OnlyIframeCsp, BTreeSet::new()),
        (false, false) if policy_sets_equal(parent, iframe) => (Category::NoViolation, BTreeSet::new()),
        (false, false) => (Category::DifferentCsp, set_difference_directives(parent, iframe)),
    }
}

pub fn relation_of(a: &Origin, b: &Origin, psl: &SuffixTable) -> (Relation, Option<SiteKey>) {
    if same_origin(a, b) {
        return (Relation::SameOrigin, None);
    }
    match relaxable_to(a, b, psl) {
        Some(site) => (Relation::Relaxable, Some(site)),
        None => (Relation::Unrelated, None),
    }
}

/// Enforced policies of a record, normalized against its own origin.
pub fn enforced_normalized(record: &PageRecord) -> Vec<NormalizedPolicy> {
    record
        .enforced_policies()
        .map(|p| normalize(p, &record.origin))
        .collect()
}

pub fn classify_pair(parent: &PageRecord, iframe: &PageRecord, psl: &SuffixTable) -> PairClassification {
    classify_normalized(
        &parent.origin,
        &enforced_normalized(parent),
        &iframe.origin,
        &enforced_normalized(iframe),
        psl,
    )
}

fn classify_normalized(
    parent_origin: &Origin,
    parent: &[NormalizedPolicy],
    iframe_origin: &Origin,
    iframe: &[NormalizedPolicy],
    psl: &SuffixTable,
) -> PairClassification {
    let (relation, relaxed_to) = relation_of(parent_origin, iframe_origin, psl);
    let (category, evidence) = categorize(parent, iframe);
    PairClassification {
        relation,
        category,
        evidence,
        relaxed_to,
    }
}

type PolicyKey = Vec<BTreeMap<String, BTreeSet<String>>>;

/// A fetched page with its enforced policies normalized once.
#[derive(Debug)]
pub struct AnalyzedPage<'r> {
    pub record: &'r PageRecord,
    pub policies: Vec<NormalizedPolicy>,
    key: PolicyKey,
}

impl AnalyzedPage<'_> {
    pub fn has_csp(&self) -> bool {
        !self.policies.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    ParentIframe,
    /// Two same-site iframes of one parent (opt-in).
    Siblings,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifiedPair {
    pub parent: String,
    pub iframe: String,
    pub kind: PairKind,
    #[serde(flatten)]
    pub classification: PairClassification,
}

/// Successfully fetched records of a corpus, deduplicated by final URL, with
/// lookup by requested or final URL.
pub struct CorpusIndex<'r> {
    pub pages: Vec<AnalyzedPage<'r>>,
    by_url: HashMap<&'r str, usize>,
}

impl<'r> CorpusIndex<'r> {
    pub fn new(records: &'r [PageRecord]) -> Self {
        let mut pages = Vec::new();
        let mut by_url = HashMap::new();
        let mut finals = HashMap::new();
        for record in records.iter().filter(|r| r.is_ok()) {
            if let Some(&idx) = finals.get(record.final_url.as_str()) {
                by_url.entry(record.url.as_str()).or_insert(idx);
                continue;
            }
            let idx = pages.len();
            let policies = enforced_normalized(record);
            let mut key: PolicyKey = policies.iter().map(|p| p.directives.clone()).collect();
            key.sort();
            pages.push(AnalyzedPage { record, policies, key });
            finals.insert(record.final_url.as_str(), idx);
            by_url.insert(record.url.as_str(), idx);
        }
        for (url, idx) in finals {
            by_url.entry(url).or_insert(idx);
        }
        CorpusIndex { pages, by_url }
    }

    pub fn lookup(&self, url: &str) -> Option<&AnalyzedPage<'r>> {
        self.by_url.get(url).map(|&i| &self.pages[i])
    }

    /// (parent, iframe) couples from each page's same-site iframe list, plus
    /// sibling couples when requested. Iframes without a fetched record are
    /// skipped.
    pub fn pairs(&self, include_siblings: bool) -> Vec<(usize, usize, PairKind)> {
        let mut out = Vec::new();
        for (pi, page) in self.pages.iter().enumerate() {
            let mut children = Vec::new();
            for url in &page.record.iframes_same_site {
                if let Some(&ci) = self.by_url.get(url.as_str()) {
                    if ci != pi && !children.contains(&ci) {
                        children.push(ci);
                    }
                }
            }
            for &ci in &children {
                out.push((pi, ci, PairKind::ParentIframe));
            }
            if include_siblings {
                for (k, &a) in children.iter().enumerate() {
                    for &b in &children[k + 1..] {
                        out.push((a, b, PairKind::Siblings));
                    }
                }
            }
        }
        out
    }

    pub fn classify(&self, parent: usize, iframe: usize, psl: &SuffixTable) -> PairClassification {
        let (p, f) = (&self.pages[parent], &self.pages[iframe]);
        let (relation, relaxed_to) = relation_of(&p.record.origin, &f.record.origin, psl);
        let (category, evidence) = if p.key == f.key && p.has_csp() {
            (Category::NoViolation, BTreeSet::new())
        } else {
            categorize(&p.policies, &f.policies)
        };
        PairClassification {
            relation,
            category,
            evidence,
            relaxed_to,
        }
    }

    pub fn classified_pairs(&self, psl: &SuffixTable, include_siblings: bool) -> Vec<ClassifiedPair> {
        self.pairs(include_siblings)
            .into_iter()
            .map(|(p, f, kind)| ClassifiedPair {
                parent: self.pages[p].record.url.to_string(),
                iframe: self.pages[f].record.url.to_string(),
                kind,
                classification: self.classify(p, f, psl),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeerVerdict {
    PeerWithoutCsp,
    PeerWithDifferentCsp,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct PageVerdict {
    pub url: String,
    pub origin: Origin,
    pub site: SiteKey,
    pub same_origin: PeerVerdict,
    /// Verdict against same-site pages of other origins sharing scheme and
    /// port. Only assigned when `same_origin` is `None`, so each page is
    /// counted once.
    pub relaxed: PeerVerdict,
    /// Directives differing from peers with a different CSP.
    pub evidence: BTreeSet<String>,
}

/// Absolute count with the population it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Count {
    pub count: usize,
    pub of: usize,
}

impl Count {
    pub fn new(count: usize, of: usize) -> Self {
        Count { count, of }
    }

    pub fn percent(&self) -> f64 {
        if self.of == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / self.of as f64
        }
    }
}

impl Serialize for Count {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Count", 3)?;
        s.serialize_field("count", &self.count)?;
        s.serialize_field("of", &self.of)?;
        s.serialize_field("percent", &((self.percent() * 100.0).round() / 100.0))?;
        s.end()
    }
}

impl std::fmt::Display for Count {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({:.2}%)", self.count, self.percent())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PotentialRow {
    pub pages: usize,
    pub origins: usize,
    pub sites: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PotentialTable {
    pub pages_with_csp: usize,
    pub origins_with_csp: usize,
    pub sites_with_csp: usize,
    pub same_origin_no_csp: PotentialRow,
    pub same_origin_different_csp: PotentialRow,
    pub same_origin_total: Count,
    pub relaxed_no_csp: PotentialRow,
    pub relaxed_different_csp: PotentialRow,
    pub relaxed_total: Count,
    pub total_pages: Count,
    pub total_origins: Count,
    pub total_sites: Count,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PotentialViolationReport {
    pub table: PotentialTable,
    /// One entry per page carrying an enforced CSP, in corpus order.
    pub pages: Vec<PageVerdict>,
}

type RelaxKey = (String, SiteKey, u16);

fn relax_key(origin: &Origin, psl: &SuffixTable) -> Option<RelaxKey> {
    let site = psl.site_of(&origin.host).ok()?;
    Some((origin.scheme.clone(), site, origin.port))
}

#[derive(Default)]
struct Group<'a> {
    without_csp: usize,
    keys: HashMap<&'a PolicyKey, Vec<usize>>,
}

pub fn potential_violations(records: &[PageRecord], psl: &SuffixTable) -> PotentialViolationReport {
    potential_from_index(&CorpusIndex::new(records), psl)
}

pub fn potential_from_index(index: &CorpusIndex<'_>, psl: &SuffixTable) -> PotentialViolationReport {
    let mut by_origin: HashMap<&Origin, Group> = HashMap::new();
    let mut by_relax: HashMap<RelaxKey, Group> = HashMap::new();
    let relax_keys: Vec<Option<RelaxKey>> = index
        .pages
        .iter()
        .map(|p| relax_key(&p.record.origin, psl))
        .collect();

    for (i, page) in index.pages.iter().enumerate() {
        let og = by_origin.entry(&page.record.origin).or_default();
        if page.has_csp() {
            og.keys.entry(&page.key).or_default().push(i);
        } else {
            og.without_csp += 1;
        }
        if let Some(rk) = &relax_keys[i] {
            let rg = by_relax.entry(rk.clone()).or_default();
            if page.has_csp() {
                rg.keys.entry(&page.key).or_default().push(i);
            } else {
                rg.without_csp += 1;
            }
        }
    }

    let mut report = PotentialViolationReport::default();
    for (i, page) in index.pages.iter().enumerate().filter(|(_, p)| p.has_csp()) {
        let origin = &page.record.origin;
        let og = &by_origin[origin];
        let mut evidence = BTreeSet::new();

        let mut same = PeerVerdict::None;
        if og.without_csp > 0 {
            same = PeerVerdict::PeerWithoutCsp;
        } else {
            for (key, members) in &og.keys {
                if **key != page.key {
                    same = PeerVerdict::PeerWithDifferentCsp;
                    let peer = &index.pages[members[0]];
                    evidence.extend(set_difference_directives(&page.policies, &peer.policies));
                }
            }
        }

        let mut relaxed = PeerVerdict::None;
        if same == PeerVerdict::None {
            if let Some(rg) = relax_keys[i].as_ref().map(|k| &by_relax[k]) {
                if rg.without_csp > og.without_csp {
                    relaxed = PeerVerdict::PeerWithoutCsp;
                } else {
                    for (key, members) in &rg.keys {
                        if **key == page.key {
                            continue;
                        }
                        let other_origin = members.iter().find(|&&m| &index.pages[m].record.origin != origin);
                        if let Some(&m) = other_origin {
                            relaxed = PeerVerdict::PeerWithDifferentCsp;
                            evidence.extend(set_difference_directives(&page.policies, &index.pages[m].policies));
                        }
                    }
                }
            }
        }

        report.pages.push(PageVerdict {
            url: page.record.url.to_string(),
            origin: origin.clone(),
            site: page.record.site.clone(),
            same_origin: same,
            relaxed,
            evidence,
        });
    }
    report.table = tabulate_potential(&report.pages);
    report
}

fn tabulate_potential(pages: &[PageVerdict]) -> PotentialTable {
    fn row<'a>(it: impl Iterator<Item = &'a PageVerdict>) -> PotentialRow {
        let mut n = 0;
        let mut origins = BTreeSet::new();
        let mut sites = BTreeSet::new();
        for p in it {
            n += 1;
            origins.insert(&p.origin);
            sites.insert(&p.site);
        }
        PotentialRow {
            pages: n,
            origins: origins.len(),
            sites: sites.len(),
        }
    }
    let all = row(pages.iter());
    let so_none = row(pages.iter().filter(|p| p.same_origin == PeerVerdict::PeerWithoutCsp));
    let so_diff = row(pages.iter().filter(|p| p.same_origin == PeerVerdict::PeerWithDifferentCsp));
    let rx_none = row(pages.iter().filter(|p| p.relaxed == PeerVerdict::PeerWithoutCsp));
    let rx_diff = row(pages.iter().filter(|p| p.relaxed == PeerVerdict::PeerWithDifferentCsp));
    let flagged = row(pages
        .iter()
        .filter(|p| p.same_origin != PeerVerdict::None || p.relaxed != PeerVerdict::None));
    PotentialTable {
        pages_with_csp: all.pages,
        origins_with_csp: all.origins,
        sites_with_csp: all.sites,
        same_origin_no_csp: so_none,
        same_origin_different_csp: so_diff,
        same_origin_total: Count::new(so_none.pages + so_diff.pages, all.pages),
        relaxed_no_csp: rx_none,
        relaxed_different_csp: rx_diff,
        relaxed_total: Count::new(rx_none.pages + rx_diff.pages, all.pages),
        total_pages: Count::new(flagged.pages, all.pages),
        total_origins: Count::new(flagged.origins, all.origins),
        total_sites: Count::new(flagged.sites, all.sites),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mitigation {
    OriginWideCsp,
    DocumentDomainFreeze,
    SandboxDirective,
}

/// Runs before any other script and makes `document.domain` immutable.
pub const DOCUMENT_DOMAIN_FREEZE: &str =
    r#"Object.defineProperty(document, "domain", { __proto__: null, writable: false, configurable: false });"#;

impl Mitigation {
    pub fn key(self) -> &'static str {
        match self {
            Mitigation::OriginWideCsp => "origin-wide-csp",
            Mitigation::DocumentDomainFreeze => "document-domain-freeze",
            Mitigation::SandboxDirective => "sandbox-directive",
        }
    }

    pub fn rationale(self) -> &'static str {
        match self {
            Mitigation::OriginWideCsp => {
                "Deliver one identical enforced CSP on every page of the origin; documents that can script each other only get the protection of the weaker policy."
            }
            Mitigation::DocumentDomainFreeze => {
                "Stop origin relaxation: make document.domain read-only in a script that runs first on the page, so same-site documents on other origins cannot become same-origin."
            }
            Mitigation::SandboxDirective => {
                "If the frame does not need direct DOM access to its parent, isolate it with the CSP sandbox directive (without allow-same-origin); unlike the iframe attribute, the directive cannot be removed by page scripts."
            }
        }
    }

    pub fn snippet(self) -> Option<&'static str> {
        match self {
            Mitigation::DocumentDomainFreeze => Some(DOCUMENT_DOMAIN_FREEZE),
            _ => None,
        }
    }
}

impl Serialize for MitigationAdvice {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let m = self.0;
        let mut s = serializer.serialize_struct("Mitigation", 3)?;
        s.serialize_field("kind", m.key())?;
        s.serialize_field("rationale", m.rationale())?;
        s.serialize_field("snippet", &m.snippet())?;
        s.end()
    }
}

/// Serializes a [`Mitigation`] with its rationale and snippet.
pub struct MitigationAdvice(pub Mitigation);

pub fn recommend(c: &PairClassification) -> Vec<Mitigation> {
    if !c.is_violation() {
        return Vec::new();
    }
    let mut out = vec![Mitigation::OriginWideCsp];
    if c.relation == Relation::Relaxable {
        out.push(Mitigation::DocumentDomainFreeze);
    }
    out.push(Mitigation::SandboxDirective);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawler::Depth;
    use crate::policy::{parse_policy, Delivery, Disposition};
    use url::Url;

    const CSP_A: &str = "default-src 'none'; script-src 'self'; child-src 'self'";

    fn page(url: &str, csp: &[&str]) -> PageRecord {
        let u = Url::parse(url).unwrap();
        let origin = Origin::from_url(&u).unwrap();
        let site = SuffixTable::bundled().site_of(&origin.host).unwrap();
        let mut r = PageRecord::new(u, origin, site, Depth::Home);
        r.policies = csp
            .iter()
            .map(|c| parse_policy(c, Disposition::Enforce, Delivery::HttpHeader))
            .collect();
        r
    }

    #[test]
    fn only_parent_same_origin() {
        let c = classify_pair(
            &page("http://main.com/A.html", &[CSP_A]),
            &page("http://main.com/B.html", &[]),
            SuffixTable::bundled(),
        );
        assert_eq!((c.relation, c.category), (Relation::SameOrigin, Category::OnlyParentCsp));
        assert!(c.is_violation());
    }

    #[test]
    fn no_csp_anywhere() {
        let c = classify_pair(
            &page("http://main.com/A.html", &[]),
            &page("http://main.com/B.html", &[]),
            SuffixTable::bundled(),
        );
        assert_eq!((c.relation, c.category), (Relation::SameOrigin, Category::NoCspAnywhere));
        assert!(!c.is_violation());
    }

    #[test]
    fn relaxable_different_csp() {
        let c = classify_pair(
            &page("http://main.com/A.html", &[CSP_A]),
            &page("http://sub.main.com/B.html", &["default-src 'self'"]),
            SuffixTable::bundled(),
        );
        assert_eq!((c.relation, c.category), (Relation::Relaxable, Category::DifferentCsp));
        assert_eq!(c.relaxed_to.as_ref().unwrap().as_str(), "main.com");
        assert!(c.evidence.contains("script-src"));
        assert!(c.evidence.contains("img-src"));
    }

    #[test]
    fn report_only_is_ignored() {
        let parent = page("http://main.com/A.html", &[]);
        let mut parent_ro = parent.clone();
        parent_ro.policies = vec![parse_policy(CSP_A, Disposition::ReportOnly, Delivery::HttpHeader)];
        let c = classify_pair(&parent_ro, &page("http://main.com/B.html", &[]), SuffixTable::bundled());
        assert_eq!(c.category, Category::NoCspAnywhere);
    }

    #[test]
    fn recommendations() {
        let mk = |relation, category| PairClassification {
            relation,
            category,
            evidence: BTreeSet::from(["x".to_string()]),
            relaxed_to: None,
        };
        assert_eq!(
            recommend(&mk(Relation::SameOrigin, Category::DifferentCsp)),
            vec![Mitigation::OriginWideCsp, Mitigation::SandboxDirective]
        );
        assert!(recommend(&mk(Relation::Relaxable, Category::OnlyParentCsp)).contains(&Mitigation::DocumentDomainFreeze));
        assert!(recommend(&mk(Relation::Unrelated, Category::NoCspAnywhere)).is_empty());
        assert!(recommend(&mk(Relation::SameOrigin, Category::NoViolation)).is_empty());
    }

    #[test]
    fn single_page_has_no_potential_violation() {
        let r = potential_violations(&[page("http://main.com/", &[CSP_A])], SuffixTable::bundled());
        assert_eq!(r.table.total_pages, Count::new(0, 1));
        assert_eq!(r.pages.len(), 1);
    }

    #[test]
    fn same_origin_peer_without_csp() {
        let r = potential_violations(
            &[page("http://main.com/a", &[CSP_A]), page("http://main.com/b", &[])],
            SuffixTable::bundled(),
        );
        assert_eq!(r.table.same_origin_no_csp.pages, 1);
        assert_eq!(r.pages[0].same_origin, PeerVerdict::PeerWithoutCsp);
    }

    #[test]
    fn relaxed_peer_with_different_csp() {
        let r = potential_violations(
            &[page("http://main.com/a", &[CSP_A]), page("http://sub.main.com/b", &["script-src *"])],
            SuffixTable::bundled(),
        );
        assert_eq!(r.table.relaxed_different_csp.pages, 2);
        assert_eq!(r.table.total_sites, Count::new(1, 1));
        assert!(r.pages[0].evidence.contains("script-src"));
    }

    #[test]
    fn sibling_pairs_are_opt_in() {
        let mut parent = page("http://main.com/", &[]);
        parent.iframes_same_site = vec![
            Url::parse("http://main.com/f1").unwrap(),
            Url::parse("http://main.com/f2").unwrap(),
        ];
        let records = vec![parent, page("http://main.com/f1", &[CSP_A]), page("http://main.com/f2", &[])];
        let index = CorpusIndex::new(&records);
        assert_eq!(index.pairs(false).len(), 2);
        let with = index.pairs(true);
        assert_eq!(with.len(), 3);
        assert_eq!(with[2].2, PairKind::Siblings);
    }
}
