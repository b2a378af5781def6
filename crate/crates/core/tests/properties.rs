use proptest::prelude::*;
use proptest::sample::select;

use cspsop::compare::{compare, policy_sets_equal};
use cspsop::crawler::{Depth, PageRecord};
use cspsop::detect::{classify_pair, Category};
use cspsop::normalize::{most_permissive, normalize};
use cspsop::origin::{relaxable_to, same_origin, Origin, SuffixTable};
use cspsop::policy::{parse_policy, Delivery, Disposition};
use url::Url;

const NAMES: &[&str] = &[
    "default-src",
    "script-src",
    "style-src",
    "img-src",
    "child-src",
    "object-src",
    "frame-ancestors",
    "report-uri",
    "sandbox",
];

const SOURCES: &[&str] = &[
    "'self'",
    "'none'",
    "'unsafe-inline'",
    "'unsafe-eval'",
    "'nonce-abc'",
    "'sha256-AAAA'",
    "*",
    "a.com",
    "https://b.com",
    "http://c.com:8080",
    "https:",
    "data:",
    "*.d.com",
    "main.com:443",
    "http://main.com:80/path",
];

const SANDBOX_FLAGS: &[&str] = &["allow-scripts", "allow-same-origin", "allow-forms"];
const REPORT_URIS: &[&str] = &["/report", "https://r.com/x"];

fn directive() -> impl Strategy<Value = String> {
    select(NAMES).prop_flat_map(|name| {
        let values: &'static [&'static str] = match name {
            "sandbox" => SANDBOX_FLAGS,
            "report-uri" => REPORT_URIS,
            _ => SOURCES,
        };
        prop::collection::vec(select(values), 0..4).prop_map(move |v| {
            let mut s = name.to_string();
            for t in v {
                s.push(' ');
                s.push_str(t);
            }
            s
        })
    })
}

fn policy_text() -> impl Strategy<Value = String> {
    prop::collection::vec(directive(), 0..5).prop_map(|d| d.join("; "))
}

fn page_origin() -> impl Strategy<Value = Origin> {
    select(&["http://main.com", "https://main.com", "http://main.com:8080", "http://sub.main.com"][..])
        .prop_map(|u| Origin::from_url(&Url::parse(u).unwrap()).unwrap())
}

fn origin() -> impl Strategy<Value = Origin> {
    (
        select(&["http", "https"][..]),
        select(&["main.com", "sub.main.com", "a.main.com", "other.com", "example.co.uk", "x.example.co.uk"][..]),
        select(&[None, Some(80u16), Some(443), Some(8080)][..]),
    )
        .prop_map(|(scheme, host, port)| {
            let port = port.unwrap_or(if scheme == "http" { 80 } else { 443 });
            Origin::new(scheme, host, port)
        })
}

fn record(o: &Origin, csp: &[String], disposition: Disposition) -> PageRecord {
    let url = Url::parse(&format!("{}://{}:{}/p", o.scheme, o.host, o.port)).unwrap();
    let site = SuffixTable::bundled().site_of(&o.host).unwrap();
    let mut r = PageRecord::new(url, o.clone(), site, Depth::Home);
    r.policies = csp.iter().map(|c| parse_policy(c, disposition, Delivery::HttpHeader)).collect();
    r
}

proptest! {
    #[test]
    fn parse_is_total(raw in ".{0,200}") {
        let p = parse_policy(&raw, Disposition::Enforce, Delivery::HttpHeader);
        let _ = p.serialize();
    }

    #[test]
    fn serialize_round_trips(raw in policy_text()) {
        let p = parse_policy(&raw, Disposition::Enforce, Delivery::HttpHeader);
        let again = parse_policy(&p.serialize(), Disposition::Enforce, Delivery::HttpHeader);
        prop_assert_eq!(&again, &p);
    }

    #[test]
    fn normalize_idempotent_and_clean(raw in policy_text(), o in page_origin()) {
        let n = normalize(&parse_policy(&raw, Disposition::Enforce, Delivery::HttpHeader), &o);
        let again = normalize(&n.reparse(), &o);
        prop_assert_eq!(&again.directives, &n.directives);
        for values in n.directives.values() {
            for v in values {
                prop_assert!(v != "'self'" && v != "'none'");
                prop_assert!(!v.starts_with("'nonce-") && !v.starts_with("'sha"));
            }
        }
        for name in cspsop::policy::FALLBACK_DIRECTIVES {
            prop_assert!(n.directives.contains_key(name));
        }
    }

    #[test]
    fn fallback_copies_default_src(srcs in prop::collection::vec(select(SOURCES), 0..4), o in page_origin()) {
        let default = format!("default-src {}", srcs.join(" "));
        let p = parse_policy(&default, Disposition::Enforce, Delivery::HttpHeader);
        let n = normalize(&p, &o);
        let explicit = normalize(&parse_policy(&format!("{default}; script-src {}", srcs.join(" ")), Disposition::Enforce, Delivery::HttpHeader), &o);
        prop_assert_eq!(n.get("script-src"), explicit.get("script-src"));
    }

    #[test]
    fn absent_script_src_is_most_permissive(raw in policy_text(), o in page_origin()) {
        let p = parse_policy(&raw, Disposition::Enforce, Delivery::HttpHeader);
        prop_assume!(p.get("default-src").is_none());
        let n = normalize(&p, &o);
        if p.get("script-src").is_none() {
            prop_assert_eq!(n.get("script-src").unwrap(), &most_permissive("script-src"));
        }
        prop_assert!(most_permissive("script-src").is_superset(&most_permissive("img-src")));
    }

    #[test]
    fn compare_symmetric_reflexive(a in policy_text(), b in policy_text(), oa in page_origin(), ob in page_origin()) {
        let na = normalize(&parse_policy(&a, Disposition::Enforce, Delivery::HttpHeader), &oa);
        let nb = normalize(&parse_policy(&b, Disposition::Enforce, Delivery::HttpHeader), &ob);
        let ab = compare(&na, &nb);
        let ba = compare(&nb, &na);
        prop_assert_eq!(&ab.differing_directives, &ba.differing_directives);
        prop_assert_eq!(ab.equal, ab.differing_directives.is_empty());
        prop_assert!(ab.detail.keys().eq(ab.differing_directives.iter()));
        prop_assert!(compare(&na, &na).equal);
        prop_assert!(policy_sets_equal(&[na.clone(), nb.clone()], &[nb.clone(), na.clone()]));
    }

    #[test]
    fn origin_relations(a in origin(), b in origin(), c in origin()) {
        let psl = SuffixTable::bundled();
        prop_assert!(same_origin(&a, &a));
        prop_assert_eq!(same_origin(&a, &b), same_origin(&b, &a));
        if same_origin(&a, &b) && same_origin(&b, &c) {
            prop_assert!(same_origin(&a, &c));
        }
        prop_assert_eq!(relaxable_to(&a, &b, psl), relaxable_to(&b, &a, psl));
        prop_assert!(!(same_origin(&a, &b) && relaxable_to(&a, &b, psl).is_some()));
        let site = psl.site_of(&a.host).unwrap();
        prop_assert_eq!(psl.site_of(site.as_str()).unwrap(), site);
    }

    #[test]
    fn classification_partition(
        pa in origin(), pi in origin(),
        cp in prop::collection::vec(policy_text(), 0..3),
        ci in prop::collection::vec(policy_text(), 0..3),
    ) {
        let psl = SuffixTable::bundled();
        let c = classify_pair(&record(&pa, &cp, Disposition::Enforce), &record(&pi, &ci, Disposition::Enforce), psl);
        let expected = match (cp.is_empty(), ci.is_empty()) {
            (true, true) => vec![Category::NoCspAnywhere],
            (false, true) => vec![Category::OnlyParentCsp],
            (true, false) => vec![Category::OnlyIframeCsp],
            (false, false) => vec![Category::DifferentCsp, Category::NoViolation],
        };
        prop_assert!(expected.contains(&c.category));
        prop_assert_eq!(c.category == Category::DifferentCsp, !c.evidence.is_empty());
    }

    #[test]
    fn report_only_never_adds_violations(
        o in origin(),
        cp in prop::collection::vec(policy_text(), 1..3),
        ci in prop::collection::vec(policy_text(), 0..3),
    ) {
        let psl = SuffixTable::bundled();
        let iframe = record(&o, &ci, Disposition::Enforce);
        let enforced = classify_pair(&record(&o, &cp, Disposition::Enforce), &iframe, psl);
        let reported = classify_pair(&record(&o, &cp, Disposition::ReportOnly), &iframe, psl);
        if !enforced.is_violation() {
            prop_assert!(!reported.is_violation() || enforced.category == Category::NoViolation);
        }
        prop_assert!(matches!(reported.category, Category::OnlyIframeCsp | Category::NoCspAnywhere));
    }
}
