//! Audit Content-Security-Policy coverage across same-origin and
//! same-site (document.domain) boundaries.
//!
//! Policies are parsed ([`policy`]), normalized against the page origin
//! ([`normalize`]) and compared per directive ([`compare`]). [`detect`]
//! classifies parent/iframe couples and same-origin peers found by the
//! [`crawler`], whose output is stored with [`corpus`] and summarised by
//! [`report`]. [`fixtures`] generates browser pages for the srcdoc sandbox
//! check.

pub mod compare;
pub mod corpus;
pub mod crawler;
pub mod detect;
pub mod fixtures;
pub mod normalize;
pub mod origin;
pub mod policy;
pub mod report;

pub use compare::{compare, policy_sets_equal, ComparisonResult};
pub use crawler::{CrawlConfig, Crawler, Depth, FetchStatus, PageRecord};
pub use detect::{classify_pair, potential_violations, recommend, Category, PairClassification, Relation};
pub use normalize::{normalize, NormalizedPolicy};
pub use origin::{relaxable_to, same_origin, site_of, Origin, SiteKey, SuffixTable};
pub use policy::{extract_policies, parse_policy, Delivery, Disposition, Policy};
