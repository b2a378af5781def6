//! Directive-by-directive identity check between normalized policies.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::normalize::NormalizedPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Presence {
    Both,
    OnlyA,
    OnlyB,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectiveDiff {
    pub presence: Presence,
    pub only_in_a: BTreeSet<String>,
    pub only_in_b: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonResult {
    pub equal: bool,
    pub differing_directives: BTreeSet<String>,
    pub detail: BTreeMap<String, DirectiveDiff>,
}

pub fn compare(a: &NormalizedPolicy, b: &NormalizedPolicy) -> ComparisonResult {
    compare_maps(&a.directives, &b.directives)
}

pub(crate) fn compare_maps(
    a: &BTreeMap<String, BTreeSet<String>>,
    b: &BTreeMap<String, BTreeSet<String>>,
) -> ComparisonResult {
    let empty = BTreeSet::new();
    let mut detail = BTreeMap::new();
    let names: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    for name in names {
        let (sa, sb) = (a.get(name), b.get(name));
        let presence = match (sa, sb) {
            (Some(_), Some(_)) => Presence::Both,
            (Some(_), None) => Presence::OnlyA,
            (None, Some(_)) => Presence::OnlyB,
            (None, None) => unreachable!(),
        };
        let (sa, sb) = (sa.unwrap_or(&empty), sb.unwrap_or(&empty));
        if presence == Presence::Both && sa == sb {
            continue;
        }
        detail.insert(
            name.clone(),
            DirectiveDiff {
                presence,
                only_in_a: sa.difference(sb).cloned().collect(),
                only_in_b: sb.difference(sa).cloned().collect(),
            },
        );
    }
    ComparisonResult {
        equal: detail.is_empty(),
        differing_directives: detail.keys().cloned().collect(),
        detail,
    }
}

/// Multiset equality of two policy lists under [`compare`] equality.
pub fn policy_sets_equal(a: &[NormalizedPolicy], b: &[NormalizedPolicy]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut left: Vec<_> = a.iter().map(|p| &p.directives).collect();
    let mut right: Vec<_> = b.iter().map(|p| &p.directives).collect();
    left.sort();
    right.sort();
    left == right
}

/// Names of directives that distinguish two unequal policy lists.
///
/// Policies present on both sides are cancelled first; the remainders are
/// compared pairwise in canonical order, and surplus policies count against
/// an absent counterpart. Non-empty whenever `policy_sets_equal` is false.
pub fn set_difference_directives(a: &[NormalizedPolicy], b: &[NormalizedPolicy]) -> BTreeSet<String> {
    let mut left: Vec<_> = a.iter().map(|p| &p.directives).collect();
    let mut right: Vec<_> = b.iter().map(|p| &p.directives).collect();
    left.sort();
    right.sort();

    let (mut rest_a, mut rest_b) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        match left[i].cmp(right[j]) {
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                rest_a.push(left[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                rest_b.push(right[j]);
                j += 1;
            }
        }
    }
    rest_a.extend(&left[i..]);
    rest_b.extend(&right[j..]);

    let empty = BTreeMap::new();
    let mut out = BTreeSet::new();
    for k in 0..rest_a.len().max(rest_b.len()) {
        let x = rest_a.get(k).copied().unwrap_or(&empty);
        let y = rest_b.get(k).copied().unwrap_or(&empty);
        out.extend(compare_maps(x, y).differing_directives);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::normalize;
    use crate::origin::Origin;
    use crate::policy::{parse_policy, Delivery, Disposition};

    fn norm(raw: &str) -> NormalizedPolicy {
        normalize(
            &parse_policy(raw, Disposition::Enforce, Delivery::HttpHeader),
            &Origin::new("http", "main.com", 80),
        )
    }

    #[test]
    fn reflexive() {
        let n = norm("default-src 'self'; script-src third.com");
        let r = compare(&n, &n);
        assert!(r.equal);
        assert!(r.differing_directives.is_empty());
    }

    #[test]
    fn running_examples_differ() {
        let a = norm("default-src 'self'; script-src third.com; child-src https:");
        let b = norm("default-src 'none'; script-src 'self'; child-src 'self'");
        let r = compare(&a, &b);
        assert!(!r.equal);
        assert!(r.differing_directives.contains("script-src"));
        assert!(r.differing_directives.contains("child-src"));
        assert_eq!(r.detail["script-src"].only_in_b, BTreeSet::from(["http://main.com".to_string()]));
        assert_eq!(r.detail.keys().collect::<Vec<_>>(), r.differing_directives.iter().collect::<Vec<_>>());
    }

    #[test]
    fn order_does_not_matter() {
        assert!(compare(&norm("script-src a.com b.com"), &norm("script-src b.com a.com")).equal);
    }

    #[test]
    fn presence_counts() {
        let r = compare(&norm("frame-ancestors 'none'"), &norm(""));
        assert_eq!(r.differing_directives, BTreeSet::from(["frame-ancestors".to_string()]));
        assert_eq!(r.detail["frame-ancestors"].presence, Presence::OnlyA);
    }

    #[test]
    fn multiset_semantics() {
        let p = norm("script-src a.com");
        let q = norm("img-src 'none'");
        assert!(policy_sets_equal(&[], &[]));
        assert!(!policy_sets_equal(std::slice::from_ref(&p), &[p.clone(), p.clone()]));
        assert!(policy_sets_equal(&[p.clone(), q.clone()], &[q.clone(), p.clone()]));
        assert!(!set_difference_directives(std::slice::from_ref(&p), &[p.clone(), p.clone()]).is_empty());
        assert!(set_difference_directives(&[p.clone(), q.clone()], &[q, p]).is_empty());
    }
}
