//! Browser test pages checking whether a page's CSP reaches a sandboxed
//! srcdoc iframe.
//!
//! Each case is a page with a meta CSP, one sandboxed srcdoc iframe, and a
//! probe resource served from another origin that the page CSP forbids. A
//! same-origin `harness.js` runs the probe inside the iframe and reports the
//! outcome to the top document, which writes it into the DOM and optionally
//! fires a beacon.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::origin::{Origin, OriginError};
use crate::policy::{self, parse_policy, Delivery, Disposition, Policy};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown sandbox flag `{0}` (allowed: allow-scripts, allow-same-origin)")]
    UnknownFlag(String),
    #[error("sandbox flag `{0}` given twice")]
    DuplicateFlag(String),
    #[error("self-check failed for {case}: {reason}")]
    SelfCheck { case: String, reason: String },
    #[error("bad fixture URL: {0}")]
    Url(String),
    #[error("{0}")]
    Origin(#[from] OriginError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SandboxFlag {
    AllowScripts,
    AllowSameOrigin,
}

impl SandboxFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SandboxFlag::AllowScripts => "allow-scripts",
            SandboxFlag::AllowSameOrigin => "allow-same-origin",
        }
    }
}

impl FromStr for SandboxFlag {
    type Err = FixtureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "allow-scripts" => Ok(SandboxFlag::AllowScripts),
            "allow-same-origin" => Ok(SandboxFlag::AllowSameOrigin),
            _ => Err(FixtureError::UnknownFlag(s.to_string())),
        }
    }
}

/// Subset of {allow-scripts, allow-same-origin}.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SandboxFlags(BTreeSet<SandboxFlag>);

impl SandboxFlags {
    pub fn new(flags: impl IntoIterator<Item = SandboxFlag>) -> Self {
        SandboxFlags(flags.into_iter().collect())
    }

    /// Parses a sandbox attribute value, rejecting unknown or repeated flags.
    pub fn parse(value: &str) -> Result<Self, FixtureError> {
        let mut set = BTreeSet::new();
        for token in value.split_ascii_whitespace() {
            let flag: SandboxFlag = token.parse()?;
            if !set.insert(flag) {
                return Err(FixtureError::DuplicateFlag(token.to_string()));
            }
        }
        Ok(SandboxFlags(set))
    }

    /// All four subsets, smallest first.
    pub fn all_subsets() -> [SandboxFlags; 4] {
        use SandboxFlag::*;
        [
            SandboxFlags::new([]),
            SandboxFlags::new([AllowScripts]),
            SandboxFlags::new([AllowSameOrigin]),
            SandboxFlags::new([AllowScripts, AllowSameOrigin]),
        ]
    }

    pub fn contains(&self, flag: SandboxFlag) -> bool {
        self.0.contains(&flag)
    }

    pub fn iter(&self) -> impl Iterator<Item = SandboxFlag> + '_ {
        self.0.iter().copied()
    }

    /// Attribute value, space separated.
    pub fn attribute(&self) -> String {
        self.iter().map(SandboxFlag::as_str).collect::<Vec<_>>().join(" ")
    }

    fn slug(&self) -> String {
        if self.0.is_empty() {
            "none".to_string()
        } else {
            self.iter().map(SandboxFlag::as_str).collect::<Vec<_>>().join("+")
        }
    }
}

impl fmt::Display for SandboxFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.attribute())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    ExternalScript,
    Image,
    Frame,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 3] = [ProbeKind::ExternalScript, ProbeKind::Image, ProbeKind::Frame];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::ExternalScript => "external-script",
            ProbeKind::Image => "image",
            ProbeKind::Frame => "frame",
        }
    }

    /// Directive governing this load.
    pub fn directive(self) -> &'static str {
        match self {
            ProbeKind::ExternalScript => policy::SCRIPT_SRC,
            ProbeKind::Image => policy::IMG_SRC,
            ProbeKind::Frame => policy::CHILD_SRC,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ProbeKind::ExternalScript => "probe.js",
            ProbeKind::Image => "probe.gif",
            ProbeKind::Frame => "probe.html",
        }
    }

    /// Page CSP: only same-origin scripts, and the probe's directive locked
    /// to 'self'.
    fn page_csp(self) -> String {
        match self {
            ProbeKind::ExternalScript => "script-src 'self'".to_string(),
            other => format!("script-src 'self'; {} 'self'", other.directive()),
        }
    }
}

impl FromStr for ProbeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProbeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown probe kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub kind: ProbeKind,
    pub url: Url,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineFamily {
    Blink,
    WebKit,
    Gecko,
}

impl EngineFamily {
    pub const ALL: [EngineFamily; 3] = [EngineFamily::Blink, EngineFamily::WebKit, EngineFamily::Gecko];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Blocked,
    Allowed,
}

/// Expected probe outcome per engine family.
///
/// Without `allow-scripts` the harness cannot run inside the frame, so
/// nothing is reported and the probe counts as blocked. Blink and WebKit
/// apply the page CSP to every srcdoc frame. Gecko was observed to apply it
/// only when `allow-same-origin` is present.
pub fn expected_outcomes(flags: &SandboxFlags, _probe: ProbeKind) -> BTreeMap<EngineFamily, Outcome> {
    EngineFamily::ALL
        .into_iter()
        .map(|engine| {
            let allowed = engine == EngineFamily::Gecko
                && flags.contains(SandboxFlag::AllowScripts)
                && !flags.contains(SandboxFlag::AllowSameOrigin);
            (engine, if allowed { Outcome::Allowed } else { Outcome::Blocked })
        })
        .collect()
}

/// Where the fixture pages and probe resources are served from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureConfig {
    /// Origin serving the generated directory as the test page.
    pub page_base: Url,
    /// Different origin serving the same directory; probes load from here.
    pub probe_base: Url,
    /// Optional result endpoint; `{case}`, `{probe}` and `{outcome}` are
    /// substituted.
    pub beacon: Option<String>,
    /// Milliseconds before a missing report counts as blocked.
    pub timeout_ms: u32,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            page_base: Url::parse("http://localhost:8000/").unwrap(),
            probe_base: Url::parse("http://127.0.0.1:8001/").unwrap(),
            beacon: None,
            timeout_ms: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureCase {
    pub id: String,
    #[serde(serialize_with = "serialize_policy_raw")]
    pub page_csp: Policy,
    pub sandbox_flags: SandboxFlags,
    pub probe: Probe,
    pub page_url: Url,
    pub harness_url: Url,
    pub expected: BTreeMap<EngineFamily, Outcome>,
}

fn serialize_policy_raw<S: serde::Serializer>(p: &Policy, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&p.serialize())
}

fn join(base: &Url, path: &str) -> Result<Url, FixtureError> {
    base.join(path).map_err(|e| FixtureError::Url(format!("{base} + {path}: {e}")))
}

impl FixtureCase {
    pub fn new(config: &FixtureConfig, flags: SandboxFlags, kind: ProbeKind) -> Result<Self, FixtureError> {
        let id = format!("{}--{}", kind.as_str(), flags.slug());
        let page_url = join(&config.page_base, &format!("{id}/index.html"))?;
        let harness_url = join(&config.page_base, &format!("{id}/harness.js"))?;
        let probe_url = join(&config.probe_base, &format!("{id}/{}", kind.file_name()))?;
        let case = FixtureCase {
            page_csp: parse_policy(&kind.page_csp(), Disposition::Enforce, Delivery::MetaElement),
            expected: expected_outcomes(&flags, kind),
            sandbox_flags: flags,
            probe: Probe { kind, url: probe_url },
            page_url,
            harness_url,
            id,
        };
        case.self_check()?;
        Ok(case)
    }

    /// The probe must be refused by the page CSP at top level, and the
    /// harness must be allowed.
    pub fn self_check(&self) -> Result<(), FixtureError> {
        let fail = |reason: String| FixtureError::SelfCheck {
            case: self.id.clone(),
            reason,
        };
        let origin = Origin::from_url(&self.page_url)?;
        if self.page_csp.allows(self.probe.kind.directive(), &self.probe.url, &origin) {
            return Err(fail(format!(
                "probe {} is allowed by `{}`",
                self.probe.url,
                self.page_csp.serialize()
            )));
        }
        if !self.page_csp.allows(policy::SCRIPT_SRC, &self.harness_url, &origin) {
            return Err(fail(format!("harness {} is blocked by the page CSP", self.harness_url)));
        }
        Ok(())
    }

    fn srcdoc(&self) -> String {
        format!(
            "<!DOCTYPE html><script src=\"{}\" data-role=\"frame\" data-case=\"{}\" data-probe=\"{}\" data-url=\"{}\"></script>",
            self.harness_url,
            self.id,
            self.probe.kind.as_str(),
            self.probe.url
        )
    }

    pub fn index_html(&self) -> String {
        let csp = escape_attr(&self.page_csp.serialize());
        let expected = self
            .expected
            .iter()
            .map(|(e, o)| format!("{e:?}: {o:?}").to_lowercase())
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            r#"<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<meta http-equiv="Content-Security-Policy" content="{csp}">
<title>{id}</title>
</head>
<body>
<h1>{id}</h1>
<p>Page CSP: <code>{csp_text}</code></p>
<p>Sandbox: <code>{sandbox}</code>; probe: {kind} from <code>{probe_url}</code></p>
<p>Expected: {expected}</p>
<p>Result: <output id="result" data-case="{id}">pending</output></p>
<iframe sandbox="{sandbox}" srcdoc="{srcdoc}"></iframe>
<script src="{harness}" data-role="top" data-case="{id}" data-probe="{kind}"></script>
</body>
</html>
"#,
            id = self.id,
            csp_text = escape_text(&self.page_csp.serialize()),
            sandbox = self.sandbox_flags.attribute(),
            kind = self.probe.kind.as_str(),
            probe_url = self.probe.url,
            srcdoc = escape_attr(&self.srcdoc()),
            harness = self.harness_url,
        )
    }
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

const HARNESS_JS: &str = r#"(function () {
  var me = document.currentScript;
  var role = me.getAttribute('data-role');
  var caseId = me.getAttribute('data-case');
  var probe = me.getAttribute('data-probe');
  var BEACON = __BEACON__;
  var TIMEOUT = __TIMEOUT__;

  if (role === 'frame') {
    var url = me.getAttribute('data-url');
    var done = false;
    var report = function (outcome) {
      if (done) return;
      done = true;
      parent.postMessage({ cspsopCase: caseId, outcome: outcome }, '*');
    };
    if (probe === 'frame') {
      window.addEventListener('message', function (e) {
        if (e.data && e.data.cspsopProbe === 'frame') report('allowed');
      });
      var f = document.createElement('iframe');
      f.src = url;
      document.body.appendChild(f);
    } else {
      var el = document.createElement(probe === 'image' ? 'img' : 'script');
      el.onload = function () { report('allowed'); };
      el.onerror = function () { report('blocked'); };
      el.src = url;
      (document.body || document.documentElement).appendChild(el);
    }
    return;
  }

  var out = document.getElementById('result');
  var finished = false;
  var finish = function (outcome, observed) {
    if (finished) return;
    finished = true;
    out.textContent = outcome;
    out.setAttribute('data-outcome', outcome);
    out.setAttribute('data-observed', observed ? 'yes' : 'no');
    if (BEACON) {
      var b = BEACON.replace('{case}', encodeURIComponent(caseId))
        .replace('{probe}', encodeURIComponent(probe))
        .replace('{outcome}', encodeURIComponent(outcome));
      if (navigator.sendBeacon) navigator.sendBeacon(b); else new Image().src = b;
    }
  };
  window.addEventListener('message', function (e) {
    if (e.data && e.data.cspsopCase === caseId) finish(e.data.outcome, true);
  });
  setTimeout(function () { finish('blocked', false); }, TIMEOUT);
})();
"#;

const PROBE_JS: &str = "window.cspsopProbeRan = true;\n";

const PROBE_HTML: &str = "<!DOCTYPE html>\n<script>parent.postMessage({ cspsopProbe: 'frame' }, '*');</script>\n";

/// 1x1 transparent GIF.
const PROBE_GIF: [u8; 43] = [
    0x47, 0x49, 0x46, 0x38, 0x39, 0x61, 0x01, 0x00, 0x01, 0x00, 0x80, 0x00, 0x00, 0x00, 0x00, 0x00, 0xff, 0xff, 0xff,
    0x21, 0xf9, 0x04, 0x01, 0x00, 0x00, 0x00, 0x00, 0x2c, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x01, 0x00, 0x00, 0x02,
    0x02, 0x44, 0x01, 0x00, 0x3b,
];

fn harness_js(config: &FixtureConfig) -> String {
    let beacon = match &config.beacon {
        Some(b) => serde_json::to_string(b).unwrap_or_else(|_| "null".into()),
        None => "null".to_string(),
    };
    HARNESS_JS
        .replace("__BEACON__", &beacon)
        .replace("__TIMEOUT__", &config.timeout_ms.to_string())
}

/// Writes one case under `out_dir/<case id>/` and returns the files created.
pub fn generate_fixture(case: &FixtureCase, config: &FixtureConfig, out_dir: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    case.self_check()?;
    let dir = out_dir.join(&case.id);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<(), FixtureError> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    put("index.html", case.index_html().as_bytes())?;
    put("harness.js", harness_js(config).as_bytes())?;
    put(
        "headers.txt",
        format!("{}: {}\n", "Content-Security-Policy", case.page_csp.serialize()).as_bytes(),
    )?;
    match case.probe.kind {
        ProbeKind::ExternalScript => put(ProbeKind::ExternalScript.file_name(), PROBE_JS.as_bytes())?,
        ProbeKind::Image => put(ProbeKind::Image.file_name(), &PROBE_GIF)?,
        ProbeKind::Frame => put(ProbeKind::Frame.file_name(), PROBE_HTML.as_bytes())?,
    }
    put("expected.json", serde_json::to_string_pretty(case)?.as_bytes())?;
    Ok(files)
}

/// Every flag subset crossed with every probe kind.
pub fn default_suite(config: &FixtureConfig) -> Result<Vec<FixtureCase>, FixtureError> {
    let mut cases = Vec::new();
    for kind in ProbeKind::ALL {
        for flags in SandboxFlags::all_subsets() {
            cases.push(FixtureCase::new(config, flags, kind)?);
        }
    }
    Ok(cases)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    page_base: &'a Url,
    probe_base: &'a Url,
    beacon: &'a Option<String>,
    cases: &'a [FixtureCase],
}

/// Writes the whole suite plus `manifest.json` and a top-level `index.html`.
pub fn generate_suite(config: &FixtureConfig, out_dir: &Path) -> Result<Vec<FixtureCase>, FixtureError> {
    let cases = default_suite(config)?;
    fs::create_dir_all(out_dir)?;
    for case in &cases {
        generate_fixture(case, config, out_dir)?;
    }
    let manifest = Manifest {
        page_base: &config.page_base,
        probe_base: &config.probe_base,
        beacon: &config.beacon,
        cases: &cases,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let mut index = String::from("<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>srcdoc sandbox CSP fixtures</title></head>\n<body>\n<ul>\n");
    for case in &cases {
        index.push_str(&format!("<li><a href=\"{0}/index.html\">{0}</a></li>\n", case.id));
    }
    index.push_str("</ul>\n</body>\n</html>\n");
    fs::write(out_dir.join("index.html"), index)?;
    Ok(cases)
}
