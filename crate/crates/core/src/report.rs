//! Aggregate statistics over a corpus and their text / JSON / CSV rendering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::crawler::{Depth, PageRecord};
use crate::detect::{potential_from_index, Category, ClassifiedPair, CorpusIndex, Count, PotentialTable, Relation};
use crate::origin::{Origin, SiteKey, SuffixTable};
use crate::policy;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown format `{0}` (expected text, json or csv)")]
    UnknownFormat(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "text-table" | "table" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct AdoptionReport {
    pub sites_crawled: usize,
    pub pages_visited: usize,
    pub pages_with_same_site_iframes: usize,
    pub pages_with_same_origin_iframes: usize,
    /// Pages with a same-origin iframe where the page or such an iframe has a CSP.
    pub pages_with_same_origin_iframes_and_csp: usize,
    /// Any disposition, over pages visited.
    pub pages_with_csp: Count,
    pub pages_with_enforced_csp: Count,
    pub sites_with_csp_on_home_page: Count,
    pub sites_with_csp_on_some_pages: Count,
}

pub fn adoption_stats(records: &[PageRecord]) -> AdoptionReport {
    adoption_from_index(&CorpusIndex::new(records))
}

fn adoption_from_index(index: &CorpusIndex<'_>) -> AdoptionReport {
    let mut sites: BTreeSet<&SiteKey> = BTreeSet::new();
    let mut sites_home_csp = BTreeSet::new();
    let mut sites_some_csp = BTreeSet::new();
    let mut r = AdoptionReport::default();
    let mut with_csp = 0;
    let mut with_enforced = 0;

    for page in &index.pages {
        let rec = page.record;
        sites.insert(&rec.site);
        if rec.has_csp() {
            with_csp += 1;
            sites_some_csp.insert(&rec.site);
            if rec.depth == Depth::Home {
                sites_home_csp.insert(&rec.site);
            }
        }
        if rec.has_enforced_csp() {
            with_enforced += 1;
        }
        if !rec.iframes_same_site.is_empty() {
            r.pages_with_same_site_iframes += 1;
        }
        let same_origin_frames: Vec<_> = rec
            .iframes_same_site
            .iter()
            .filter(|u| Origin::from_url(u).is_ok_and(|o| o == rec.origin))
            .collect();
        if !same_origin_frames.is_empty() {
            r.pages_with_same_origin_iframes += 1;
            let frame_csp = same_origin_frames
                .iter()
                .any(|u| index.lookup(u.as_str()).is_some_and(|f| f.record.has_csp()));
            if rec.has_csp() || frame_csp {
                r.pages_with_same_origin_iframes_and_csp += 1;
            }
        }
    }

    let pages = index.pages.len();
    r.sites_crawled = sites.len();
    r.pages_visited = pages;
    r.pages_with_csp = Count::new(with_csp, pages);
    r.pages_with_enforced_csp = Count::new(with_enforced, pages);
    r.sites_with_csp_on_home_page = Count::new(sites_home_csp.len(), sites.len());
    r.sites_with_csp_on_some_pages = Count::new(sites_some_csp.len(), sites.len());
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bucket {
    /// Bucket covers (upper - 10, upper] percent; the first one includes 0.
    pub upper_percent: u32,
    pub sites: usize,
}

/// Sites with at least one CSP page, bucketed by the share of their pages
/// carrying a CSP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CspDistribution {
    pub sites: usize,
    pub buckets: Vec<Bucket>,
}

impl CspDistribution {
    pub fn is_empty(&self) -> bool {
        self.sites == 0
    }
}

/// Index (0..10) of the bucket for `with` of `total` pages.
pub fn bucket_index(with: usize, total: usize) -> usize {
    // ceil(10 * with / total), then shift so (0, 10] -> 0
    let tenths = (10 * with).div_ceil(total);
    tenths.clamp(1, 10) - 1
}

pub fn csp_per_site_distribution(records: &[PageRecord]) -> CspDistribution {
    distribution_from_index(&CorpusIndex::new(records))
}

fn distribution_from_index(index: &CorpusIndex<'_>) -> CspDistribution {
    let mut per_site: BTreeMap<&SiteKey, (usize, usize)> = BTreeMap::new();
    for page in &index.pages {
        let e = per_site.entry(&page.record.site).or_default();
        e.1 += 1;
        if page.record.has_csp() {
            e.0 += 1;
        }
    }
    let mut buckets: Vec<Bucket> = (1..=10)
        .map(|i| Bucket {
            upper_percent: i * 10,
            sites: 0,
        })
        .collect();
    let mut sites = 0;
    for &(with, total) in per_site.values() {
        if with > 0 {
            sites += 1;
            buckets[bucket_index(with, total)].sites += 1;
        }
    }
    CspDistribution { sites, buckets }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RelationColumn {
    pub only_parent_csp: usize,
    pub only_iframe_csp: usize,
    pub different_csp: usize,
    pub no_violation: usize,
    pub no_csp_anywhere: usize,
    /// Mismatched couples over couples where at least one side has a CSP.
    pub violations: Count,
}

impl RelationColumn {
    fn add(&mut self, category: Category) {
        match category {
            Category::OnlyParentCsp => self.only_parent_csp += 1,
            Category::OnlyIframeCsp => self.only_iframe_csp += 1,
            Category::DifferentCsp => self.different_csp += 1,
            Category::NoViolation => self.no_violation += 1,
            Category::NoCspAnywhere => self.no_csp_anywhere += 1,
        }
        let mismatched = self.only_parent_csp + self.only_iframe_csp + self.different_csp;
        self.violations = Count::new(mismatched, mismatched + self.no_violation);
    }

    pub fn get(&self, category: Category) -> usize {
        match category {
            Category::OnlyParentCsp => self.only_parent_csp,
            Category::OnlyIframeCsp => self.only_iframe_csp,
            Category::DifferentCsp => self.different_csp,
            Category::NoViolation => self.no_violation,
            Category::NoCspAnywhere => self.no_csp_anywhere,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ViolationTable {
    pub same_origin: RelationColumn,
    pub relaxable: RelationColumn,
    pub total: RelationColumn,
    /// Couples whose origins are neither equal nor relaxable; not counted.
    pub unrelated_pairs: usize,
}

impl ViolationTable {
    pub fn column(&self, relation: Relation) -> Option<&RelationColumn> {
        match relation {
            Relation::SameOrigin => Some(&self.same_origin),
            Relation::Relaxable => Some(&self.relaxable),
            Relation::Unrelated => None,
        }
    }
}

pub fn violation_table(records: &[PageRecord], psl: &SuffixTable) -> ViolationTable {
    tabulate_violations(&CorpusIndex::new(records).classified_pairs(psl, false))
}

pub fn tabulate_violations(pairs: &[ClassifiedPair]) -> ViolationTable {
    let mut t = ViolationTable::default();
    for p in pairs {
        let c = &p.classification;
        match c.relation {
            Relation::SameOrigin => t.same_origin.add(c.category),
            Relation::Relaxable => t.relaxable.add(c.category),
            Relation::Unrelated => {
                t.unrelated_pairs += 1;
                continue;
            }
        }
        t.total.add(c.category);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectiveFrequency {
    pub directive: String,
    pub mismatches: Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DirectiveDiffHistogram {
    /// Number of evidence sets (pairs or pages with a different CSP).
    pub pairs: usize,
    pub directives: Vec<DirectiveFrequency>,
}

/// Directives always listed in the histogram, in display order.
const HISTOGRAM_DIRECTIVES: [&str; 11] = [
    policy::SCRIPT_SRC,
    policy::DEFAULT_SRC,
    policy::STYLE_SRC,
    policy::IMG_SRC,
    policy::FONT_SRC,
    policy::CONNECT_SRC,
    policy::OBJECT_SRC,
    policy::REPORT_URI,
    policy::MEDIA_SRC,
    policy::CHILD_SRC,
    policy::FRAME_ANCESTORS,
];

/// Fraction of evidence sets naming each directive.
pub fn directive_diff_histogram<'a, I>(evidence: I) -> DirectiveDiffHistogram
where
    I: IntoIterator<Item = &'a BTreeSet<String>>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut pairs = 0;
    for set in evidence {
        pairs += 1;
        for d in set {
            *counts.entry(d.as_str()).or_default() += 1;
        }
    }
    if pairs == 0 {
        return DirectiveDiffHistogram::default();
    }
    let mut extra: Vec<&str> = counts
        .keys()
        .copied()
        .filter(|d| !HISTOGRAM_DIRECTIVES.contains(d))
        .collect();
    extra.sort();
    let directives = HISTOGRAM_DIRECTIVES
        .iter()
        .copied()
        .chain(extra)
        .map(|d| DirectiveFrequency {
            directive: d.to_string(),
            mismatches: Count::new(counts.get(d).copied().unwrap_or(0), pairs),
        })
        .collect();
    DirectiveDiffHistogram { pairs, directives }
}

/// Histogram over couples classified as `different-csp` (both sides have a CSP).
pub fn pair_directive_histogram(pairs: &[ClassifiedPair]) -> DirectiveDiffHistogram {
    directive_diff_histogram(
        pairs
            .iter()
            .filter(|p| p.classification.relation != Relation::Unrelated)
            .filter(|p| p.classification.category == Category::DifferentCsp)
            .map(|p| &p.classification.evidence),
    )
}

/// All tables computed from one pass of normalization.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub adoption: AdoptionReport,
    pub distribution: CspDistribution,
    pub violations: ViolationTable,
    pub potential: PotentialTable,
    pub pair_directive_diff: DirectiveDiffHistogram,
    pub peer_directive_diff: DirectiveDiffHistogram,
}

pub fn analyze(records: &[PageRecord], psl: &SuffixTable, include_siblings: bool) -> CorpusReport {
    let index = CorpusIndex::new(records);
    let pairs = index.classified_pairs(psl, include_siblings);
    let potential = potential_from_index(&index, psl);
    let peer_evidence: Vec<&BTreeSet<String>> = potential
        .pages
        .iter()
        .filter(|p| !p.evidence.is_empty())
        .map(|p| &p.evidence)
        .collect();
    CorpusReport {
        adoption: adoption_from_index(&index),
        distribution: distribution_from_index(&index),
        violations: tabulate_violations(&pairs),
        pair_directive_diff: pair_directive_histogram(&pairs),
        peer_directive_diff: directive_diff_histogram(peer_evidence),
        potential: potential.table,
    }
}

/// A renderable table.
#[derive(Debug, Clone)]
pub enum Report {
    Adoption(AdoptionReport),
    Distribution(CspDistribution),
    Violations(ViolationTable),
    Potential(PotentialTable),
    DirectiveDiff(DirectiveDiffHistogram),
}

struct Table {
    title: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn count_cells(c: &Count) -> [String; 3] {
    [c.count.to_string(), c.of.to_string(), format!("{:.2}", c.percent())]
}

impl Report {
    fn table(&self) -> Table {
        match self {
            Report::Adoption(a) => {
                let plain = |label: &str, n: usize| vec![label.to_string(), n.to_string(), String::new(), String::new()];
                let counted = |label: &str, c: &Count| {
                    let [n, of, pct] = count_cells(c);
                    vec![label.to_string(), n, of, pct]
                };
                Table {
                    title: "CSP adoption",
                    header: vec!["metric", "count", "of", "percent"],
                    rows: vec![
                        plain("sites crawled", a.sites_crawled),
                        plain("pages visited", a.pages_visited),
                        plain("pages with same-site iframes", a.pages_with_same_site_iframes),
                        plain("pages with same-origin iframes", a.pages_with_same_origin_iframes),
                        plain(
                            "pages with same-origin iframes, page or iframe with CSP",
                            a.pages_with_same_origin_iframes_and_csp,
                        ),
                        counted("pages with CSP", &a.pages_with_csp),
                        counted("pages with enforced CSP", &a.pages_with_enforced_csp),
                        counted("sites with CSP on home page", &a.sites_with_csp_on_home_page),
                        counted("sites with CSP on some pages", &a.sites_with_csp_on_some_pages),
                    ],
                }
            }
            Report::Distribution(d) => Table {
                title: "Share of pages with CSP per site",
                header: vec!["bucket", "sites"],
                rows: d
                    .buckets
                    .iter()
                    .map(|b| vec![format!("{}-{}%", b.upper_percent - 10, b.upper_percent), b.sites.to_string()])
                    .collect(),
            },
            Report::Violations(v) => {
                let mut rows: Vec<Vec<String>> = Category::ALL
                    .iter()
                    .map(|&c| {
                        vec![
                            c.as_str().to_string(),
                            v.same_origin.get(c).to_string(),
                            v.relaxable.get(c).to_string(),
                            v.total.get(c).to_string(),
                        ]
                    })
                    .collect();
                rows.push(vec![
                    "couples with CSP".to_string(),
                    v.same_origin.violations.of.to_string(),
                    v.relaxable.violations.of.to_string(),
                    v.total.violations.of.to_string(),
                ]);
                rows.push(vec![
                    "violations".to_string(),
                    v.same_origin.violations.to_string(),
                    v.relaxable.violations.to_string(),
                    v.total.violations.to_string(),
                ]);
                Table {
                    title: "CSP violations due to SOP (parent, iframe) couples",
                    header: vec!["category", "same-origin", "relaxable", "total"],
                    rows,
                }
            }
            Report::Potential(p) => {
                let row = |label: &str, r: &crate::detect::PotentialRow| {
                    vec![label.to_string(), r.pages.to_string(), r.origins.to_string(), r.sites.to_string()]
                };
                let dash = || "-".to_string();
                Table {
                    title: "Potential violations among pages with enforced CSP",
                    header: vec!["row", "pages", "origins", "sites"],
                    rows: vec![
                        vec![
                            "pages with CSP".to_string(),
                            p.pages_with_csp.to_string(),
                            p.origins_with_csp.to_string(),
                            p.sites_with_csp.to_string(),
                        ],
                        row("same-origin peer without CSP", &p.same_origin_no_csp),
                        row("same-origin peer with different CSP", &p.same_origin_different_csp),
                        vec!["same-origin total".to_string(), p.same_origin_total.to_string(), dash(), dash()],
                        row("relaxed-origin peer without CSP", &p.relaxed_no_csp),
                        row("relaxed-origin peer with different CSP", &p.relaxed_different_csp),
                        vec!["relaxed-origin total".to_string(), p.relaxed_total.to_string(), dash(), dash()],
                        vec![
                            "potential violations total".to_string(),
                            p.total_pages.to_string(),
                            p.total_origins.to_string(),
                            p.total_sites.to_string(),
                        ],
                    ],
                }
            }
            Report::DirectiveDiff(h) => Table {
                title: "Directive mismatches among couples with different CSPs",
                header: vec!["directive", "mismatches", "of", "percent"],
                rows: h
                    .directives
                    .iter()
                    .map(|d| {
                        let [n, of, pct] = count_cells(&d.mismatches);
                        vec![d.directive.clone(), n, of, pct]
                    })
                    .collect(),
            },
        }
    }

    fn to_json(&self) -> serde_json::Result<String> {
        match self {
            Report::Adoption(x) => serde_json::to_string_pretty(x),
            Report::Distribution(x) => serde_json::to_string_pretty(x),
            Report::Violations(x) => serde_json::to_string_pretty(x),
            Report::Potential(x) => serde_json::to_string_pretty(x),
            Report::DirectiveDiff(x) => serde_json::to_string_pretty(x),
        }
    }
}

fn render_text(t: &Table) -> String {
    let mut widths: Vec<usize> = t.header.iter().map(|h| h.len()).collect();
    for row in &t.rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = String::new();
    out.push_str(t.title);
    out.push('\n');
    out.push_str(&line(&mut t.header.iter().copied()));
    out.push('\n');
    let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in &t.rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

fn render_csv(t: &Table) -> Result<Vec<u8>, ReportError> {
    let err = |e: csv::Error| ReportError::Serialize(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header).map_err(err)?;
    for row in &t.rows {
        w.write_record(row).map_err(err)?;
    }
    w.into_inner().map_err(|e| ReportError::Serialize(e.to_string()))
}

pub fn render(report: &Report, format: Format) -> Result<Vec<u8>, ReportError> {
    match format {
        Format::Text => Ok(render_text(&report.table()).into_bytes()),
        Format::Csv => render_csv(&report.table()),
        Format::Json => {
            let mut s = report.to_json().map_err(|e| ReportError::Serialize(e.to_string()))?;
            s.push('\n');
            Ok(s.into_bytes())
        }
    }
}
