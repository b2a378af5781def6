//! Reading a corpus holds one record at a time, checked with a counting
//! allocator.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use cspsop::corpus::{CorpusHeader, CorpusReader, CorpusWriter};
use cspsop::crawler::{Depth, PageRecord};
use cspsop::origin::{Origin, SiteKey};
use cspsop::policy::{parse_policy, Delivery, Disposition};
use url::Url;

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

fn record(i: usize) -> PageRecord {
    let url = Url::parse(&format!("http://site{}.com/page/{i}", i % 97)).unwrap();
    let origin = Origin::from_url(&url).unwrap();
    let mut r = PageRecord::new(url.clone(), origin, SiteKey(format!("site{}.com", i % 97)), Depth::Linked);
    r.policies = vec![parse_policy(
        "default-src 'self'; script-src 'self' https://cdn.example.com 'unsafe-inline'; img-src *",
        Disposition::Enforce,
        Delivery::HttpHeader,
    )];
    r.links_same_site = (0..20).map(|k| url.join(&format!("/l/{k}")).unwrap()).collect();
    r.iframes_same_site = vec![url.join("/frame").unwrap()];
    r
}

#[test]
fn ten_thousand_records_stream_in_bounded_memory() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["big.jsonl", "big.jsonl.gz"] {
        let path = dir.path().join(name);
        let mut w = CorpusWriter::create(&path, &CorpusHeader::new("2016-08-31", "x")).unwrap();
        for i in 0..10_000 {
            w.write(&record(i)).unwrap();
        }
        w.finish().unwrap();

        let base = CURRENT.load(Ordering::Relaxed);
        PEAK.store(base, Ordering::Relaxed);
        let mut n = 0;
        for r in CorpusReader::open(&path).unwrap() {
            let r = r.unwrap();
            assert_eq!(r.links_same_site.len(), 20);
            n += 1;
        }
        let peak = PEAK.load(Ordering::Relaxed) - base;
        let raw_size = if name.ends_with(".gz") {
            std::fs::metadata(dir.path().join("big.jsonl")).unwrap().len()
        } else {
            std::fs::metadata(&path).unwrap().len()
        };
        assert_eq!(n, 10_000);
        assert!(raw_size > 8 * 1024 * 1024, "fixture too small: {raw_size}");
        assert!(peak < 1024 * 1024, "{name}: peak {peak} bytes while reading {raw_size} bytes");
    }
}
