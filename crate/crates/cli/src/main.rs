use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use url::Url;

use cspsop::corpus::{read_corpus, CorpusError, CorpusHeader, CorpusWriter};
use cspsop::crawler::{parse_seeds, CrawlConfig, CrawlError, Crawler, Depth};
use cspsop::detect::{self, recommend, MitigationAdvice, PairClassification};
use cspsop::fixtures::{self, FixtureConfig, FixtureError};
use cspsop::normalize::{normalize, NormalizedPolicy};
use cspsop::origin::{Origin, SuffixTable};
use cspsop::policy::{parse_policy, Delivery, Disposition, Policy};
use cspsop::report::{self, Format, Report};
use cspsop::{compare, PageRecord};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "cspsop", version, about = "Audit CSP consistency across same-origin and same-site pages")]
struct Cli {
    /// Public suffix list file to use instead of the bundled snapshot.
    #[arg(long, global = true, value_name = "FILE")]
    psl: Option<PathBuf>,
    /// Treat the last two host labels as the site (no public suffix list).
    #[arg(long, global = true, conflicts_with = "psl")]
    naive_etld: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a policy and print its directives and warnings.
    Parse(ParseArgs),
    /// Normalize a policy against a page origin.
    Normalize(NormalizeArgs),
    /// Compare two policies after normalization.
    Compare(CompareArgs),
    /// Fetch a parent page and an iframe page and classify the couple.
    AuditPair(AuditPairArgs),
    /// Crawl seed sites into a corpus file.
    Crawl(CrawlArgs),
    /// Print aggregate tables for a corpus.
    Analyze(AnalyzeArgs),
    /// List pages with a same-origin or same-site peer lacking their CSP.
    Potential(PotentialArgs),
    /// Classify a couple from policy strings and print mitigations.
    Recommend(RecommendArgs),
    /// Write the srcdoc sandbox browser fixtures.
    Fixtures(FixturesArgs),
}

#[derive(Args)]
struct PolicyInput {
    /// Policy text.
    #[arg(conflicts_with = "file")]
    policy: Option<String>,
    /// Read the policy text from a file.
    #[arg(long, value_name = "FILE")]
    file: Option<PathBuf>,
    /// Parse as Content-Security-Policy-Report-Only.
    #[arg(long)]
    report_only: bool,
    /// Parse as delivered by a `<meta>` element.
    #[arg(long)]
    meta: bool,
}

#[derive(Args)]
struct ParseArgs {
    #[command(flatten)]
    input: PolicyInput,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct NormalizeArgs {
    #[command(flatten)]
    input: PolicyInput,
    /// URL or origin of the page carrying the policy.
    #[arg(long)]
    origin: String,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, required_unless_present = "a_file")]
    a: Option<String>,
    #[arg(long, value_name = "FILE", conflicts_with = "a")]
    a_file: Option<PathBuf>,
    #[arg(long)]
    origin_a: String,
    #[arg(long, required_unless_present = "b_file")]
    b: Option<String>,
    #[arg(long, value_name = "FILE", conflicts_with = "b")]
    b_file: Option<PathBuf>,
    #[arg(long)]
    origin_b: String,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct NetArgs {
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    /// Route HOST to ADDR (HOST=IP:PORT); repeatable.
    #[arg(long, value_name = "HOST=ADDR", value_parser = parse_resolve)]
    resolve: Vec<(String, SocketAddr)>,
    /// User-Agent header.
    #[arg(long, env = "CSPSOP_USER_AGENT")]
    user_agent: Option<String>,
}

#[derive(Args)]
struct AuditPairArgs {
    #[arg(long)]
    parent: Url,
    #[arg(long)]
    iframe: Url,
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    respect_robots: bool,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct CrawlArgs {
    /// File with one seed URL per line.
    #[arg(long)]
    seeds: PathBuf,
    /// Corpus output; a `.gz` suffix compresses it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    max_pages: usize,
    #[arg(long, default_value_t = 100)]
    max_links: usize,
    #[arg(long, default_value_t = 50)]
    max_iframes: usize,
    /// Concurrent requests per site.
    #[arg(long, default_value_t = 2)]
    parallel: usize,
    /// Concurrent requests overall.
    #[arg(long, default_value_t = 8)]
    parallel_global: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    respect_robots: bool,
    /// Minimum delay between requests to one site, in milliseconds.
    #[arg(long, default_value_t = 500)]
    delay_ms: u64,
    /// Value of the corpus header's `created` field; defaults to now.
    #[arg(long)]
    created: Option<String>,
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Table {
    Adoption,
    Distribution,
    Violations,
    Potential,
    DirectiveDiff,
    PeerDirectiveDiff,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "violations")]
    table: Table,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
    /// Also count sibling iframes of one parent as couples.
    #[arg(long)]
    siblings: bool,
}

#[derive(Args)]
struct PotentialArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    parent: Url,
    #[arg(long)]
    iframe: Url,
    /// Enforced CSP of the parent; repeat for several policies.
    #[arg(long)]
    parent_csp: Vec<String>,
    /// Enforced CSP of the iframe; repeat for several policies.
    #[arg(long)]
    iframe_csp: Vec<String>,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct FixturesArgs {
    #[arg(long)]
    out: PathBuf,
    /// Base URL the output directory will be served from.
    #[arg(long, default_value = "http://localhost:8000/")]
    page_base: Url,
    /// Second base URL serving the same directory from another origin.
    #[arg(long, default_value = "http://127.0.0.1:8001/")]
    probe_base: Url,
    /// Result endpoint template with {case}, {probe} and {outcome}.
    #[arg(long)]
    beacon: Option<String>,
    #[arg(long, default_value_t = 3000)]
    timeout_ms: u32,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse::<Format>().map_err(|e| e.to_string())
}

fn parse_resolve(s: &str) -> Result<(String, SocketAddr), String> {
    let (host, addr) = s.split_once('=').ok_or("expected HOST=IP:PORT")?;
    let addr: SocketAddr = addr.parse().map_err(|e| format!("{addr}: {e}"))?;
    Ok((host.to_string(), addr))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Io(e.to_string())
    }
}


impl From<CrawlError> for CliError {
    fn from(e: CrawlError) -> Self {
        match e {
            CrawlError::Config(_) | CrawlError::Seed { .. } => CliError::Usage(e.to_string()),
            CrawlError::Client(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Io(_) | FixtureError::Json(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<report::ReportError> for CliError {
    fn from(e: report::ReportError) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult = Result<u8, CliError>;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<Vec<PageRecord>, CliError> {
    let (_, records) = read_corpus(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(records)
}

fn origin_arg(s: &str) -> Result<Origin, CliError> {
    let url = Url::parse(s).map_err(|e| CliError::Usage(format!("{s}: {e}")))?;
    Origin::from_url(&url).map_err(|e| CliError::Usage(format!("{s}: {e}")))
}

fn emit(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

fn emit_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    emit(s.as_bytes())
}

fn reject_csv(format: Format) -> Result<(), CliError> {
    if format == Format::Csv {
        return Err(CliError::Usage("csv output is only available for `analyze`".into()));
    }
    Ok(())
}

impl PolicyInput {
    fn load(&self) -> Result<Policy, CliError> {
        let raw = match (&self.policy, &self.file) {
            (Some(p), _) => p.clone(),
            (None, Some(f)) => read_text(f)?,
            (None, None) => return Err(CliError::Usage("give a policy or --file".into())),
        };
        let disposition = if self.report_only {
            Disposition::ReportOnly
        } else {
            Disposition::Enforce
        };
        let delivery = if self.meta {
            Delivery::MetaElement
        } else {
            Delivery::HttpHeader
        };
        Ok(parse_policy(raw.trim(), disposition, delivery))
    }
}

fn policy_json(p: &Policy) -> Value {
    let directives: serde_json::Map<String, Value> = p
        .directives
        .values()
        .map(|d| {
            let tokens: Vec<String> = if d.is_source_list() {
                d.sources.iter().map(|s| s.to_string()).collect()
            } else {
                d.tokens().map(str::to_string).collect()
            };
            (d.name.clone(), json!(tokens))
        })
        .collect();
    json!({
        "policy": p.serialize(),
        "disposition": p.disposition,
        "delivery": p.delivery,
        "directives": directives,
        "warnings": p.warnings,
    })
}

fn normalized_json(n: &NormalizedPolicy) -> Value {
    json!({
        "origin": n.page_origin.to_string(),
        "policy": n.to_policy_string(),
        "directives": n.directives,
    })
}

fn cmd_parse(args: &ParseArgs) -> CliResult {
    reject_csv(args.format)?;
    let p = args.input.load()?;
    if args.format == Format::Json {
        emit_json(&policy_json(&p))?;
        return Ok(0);
    }
    let mut out = String::new();
    for d in p.directives.values() {
        out.push_str(&format!("{d}\n"));
    }
    for w in &p.warnings {
        out.push_str(&format!("warning: {}\n", serde_json::to_string(w).unwrap_or_default()));
    }
    emit(out.as_bytes())?;
    Ok(0)
}

fn cmd_normalize(args: &NormalizeArgs) -> CliResult {
    reject_csv(args.format)?;
    let p = args.input.load()?;
    let n = normalize(&p, &origin_arg(&args.origin)?);
    if args.format == Format::Json {
        emit_json(&normalized_json(&n))?;
    } else {
        let mut out = n.to_policy_string().replace("; ", "\n");
        out.push('\n');
        emit(out.as_bytes())?;
    }
    Ok(0)
}

fn cmd_compare(args: &CompareArgs) -> CliResult {
    reject_csv(args.format)?;
    let text = |inline: &Option<String>, file: &Option<PathBuf>| -> Result<String, CliError> {
        match (inline, file) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(f)) => read_text(f),
            (None, None) => Err(CliError::Usage("missing policy".into())),
        }
    };
    let pa = parse_policy(text(&args.a, &args.a_file)?.trim(), Disposition::Enforce, Delivery::HttpHeader);
    let pb = parse_policy(text(&args.b, &args.b_file)?.trim(), Disposition::Enforce, Delivery::HttpHeader);
    let na = normalize(&pa, &origin_arg(&args.origin_a)?);
    let nb = normalize(&pb, &origin_arg(&args.origin_b)?);
    let result = compare(&na, &nb);
    if args.format == Format::Json {
        emit_json(&result)?;
        return Ok(0);
    }
    let mut out = String::from(if result.equal { "equal\n" } else { "different\n" });
    for (name, diff) in &result.detail {
        let list = |s: &std::collections::BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(" ");
        out.push_str(&format!(
            "{name}: {:?}; only in a: [{}]; only in b: [{}]\n",
            diff.presence,
            list(&diff.only_in_a),
            list(&diff.only_in_b)
        ));
    }
    emit(out.as_bytes())?;
    Ok(0)
}

fn net_config(net: &NetArgs) -> CrawlConfig {
    let mut config = CrawlConfig {
        timeout: Duration::from_secs(net.timeout),
        resolve: net.resolve.clone(),
        ..CrawlConfig::default()
    };
    if let Some(ua) = &net.user_agent {
        config.user_agent = ua.clone();
    }
    config
}

fn classification_json(c: &PairClassification, parent: &str, iframe: &str) -> Value {
    let advice: Vec<MitigationAdvice> = recommend(c).into_iter().map(MitigationAdvice).collect();
    json!({
        "parent": parent,
        "iframe": iframe,
        "classification": c,
        "violation": c.is_violation(),
        "recommendations": advice,
    })
}

fn classification_text(c: &PairClassification, parent: &str, iframe: &str) -> String {
    let mut out = format!(
        "parent:   {parent}\niframe:   {iframe}\nrelation: {}\ncategory: {}\n",
        c.relation.as_str(),
        c.category.as_str()
    );
    if let Some(site) = &c.relaxed_to {
        out.push_str(&format!("relaxes to: {site}\n"));
    }
    if !c.evidence.is_empty() {
        out.push_str(&format!(
            "differing directives: {}\n",
            c.evidence.iter().cloned().collect::<Vec<_>>().join(", ")
        ));
    }
    out.push_str(&format!("violation: {}\n", if c.is_violation() { "yes" } else { "no" }));
    for m in recommend(c) {
        out.push_str(&format!("\n[{}] {}\n", m.key(), m.rationale()));
        if let Some(snippet) = m.snippet() {
            out.push_str(&format!("  <script>{snippet}</script>\n"));
        }
    }
    out
}

fn print_classification(c: &PairClassification, parent: &str, iframe: &str, format: Format) -> CliResult {
    if format == Format::Json {
        emit_json(&classification_json(c, parent, iframe))?;
    } else {
        emit(classification_text(c, parent, iframe).as_bytes())?;
    }
    Ok(if c.is_violation() { EXIT_VIOLATION } else { 0 })
}

fn cmd_audit_pair(args: &AuditPairArgs, psl: &SuffixTable) -> CliResult {
    reject_csv(args.format)?;
    let config = CrawlConfig {
        respect_robots: args.respect_robots,
        ..net_config(&args.net)
    };
    let crawler = Crawler::new(config, psl)?;
    let fetch = |url: &Url, depth| -> Result<PageRecord, CliError> {
        let record = crawler
            .fetch_page(url, depth)?
            .ok_or_else(|| CliError::Io(format!("{url}: disallowed by robots.txt")))?;
        if !record.is_ok() {
            return Err(CliError::Io(format!("{url}: fetch failed ({:?})", record.fetch_status)));
        }
        Ok(record)
    };
    let parent = fetch(&args.parent, Depth::Home)?;
    let iframe = fetch(&args.iframe, Depth::IframeOfHome)?;
    let c = detect::classify_pair(&parent, &iframe, psl);
    print_classification(&c, parent.final_url.as_str(), iframe.final_url.as_str(), args.format)
}

fn now_rfc3339() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

fn cmd_crawl(args: &CrawlArgs, psl: &SuffixTable) -> CliResult {
    let seeds = parse_seeds(&read_text(&args.seeds)?)
        .map_err(|(line, e)| CliError::Usage(format!("{}:{line}: {e}", args.seeds.display())))?;
    let config = CrawlConfig {
        max_pages_per_site: args.max_pages,
        max_links_per_page: args.max_links,
        max_iframes_per_page: args.max_iframes,
        parallel_per_site: args.parallel,
        parallel_global: args.parallel_global,
        respect_robots: args.respect_robots,
        politeness_delay: Duration::from_millis(args.delay_ms),
        ..net_config(&args.net)
    };
    let crawler = Crawler::new(config, psl)?;
    let header = CorpusHeader::new(
        args.created.clone().unwrap_or_else(now_rfc3339),
        crawler.config().fingerprint(),
    );
    let mut writer = CorpusWriter::create(&args.out, &header)?;
    let mut pages = 0;
    for seed in &seeds {
        log::info!("crawling {seed}");
        match crawler.crawl_site(seed) {
            Ok(records) => {
                for r in &records {
                    writer.write(r)?;
                }
                pages += records.len();
            }
            Err(e) => log::warn!("skipping seed: {e}"),
        }
    }
    writer.finish()?;
    eprintln!("{} sites, {pages} records written to {}", seeds.len(), args.out.display());
    Ok(0)
}

fn cmd_analyze(args: &AnalyzeArgs, psl: &SuffixTable) -> CliResult {
    let records = load_corpus(&args.corpus)?;
    let report = match args.table {
        Table::Adoption => Report::Adoption(report::adoption_stats(&records)),
        Table::Distribution => Report::Distribution(report::csp_per_site_distribution(&records)),
        Table::Violations => {
            let pairs = detect::CorpusIndex::new(&records).classified_pairs(psl, args.siblings);
            Report::Violations(report::tabulate_violations(&pairs))
        }
        Table::Potential => Report::Potential(detect::potential_violations(&records, psl).table),
        Table::DirectiveDiff => {
            let pairs = detect::CorpusIndex::new(&records).classified_pairs(psl, args.siblings);
            Report::DirectiveDiff(report::pair_directive_histogram(&pairs))
        }
        Table::PeerDirectiveDiff => {
            Report::DirectiveDiff(report::analyze(&records, psl, args.siblings).peer_directive_diff)
        }
    };
    emit(&report::render(&report, args.format)?)?;
    Ok(0)
}

fn cmd_potential(args: &PotentialArgs, psl: &SuffixTable) -> CliResult {
    reject_csv(args.format)?;
    let records = load_corpus(&args.corpus)?;
    let result = detect::potential_violations(&records, psl);
    if args.format == Format::Json {
        emit_json(&result)?;
        return Ok(0);
    }
    let mut out = report::render(&Report::Potential(result.table.clone()), Format::Text)?;
    out.push(b'\n');
    for page in &result.pages {
        out.extend_from_slice(
            format!(
                "{}  same-origin: {:?}  relaxed: {:?}\n",
                page.url, page.same_origin, page.relaxed
            )
            .as_bytes(),
        );
    }
    emit(&out)?;
    Ok(0)
}

fn cmd_recommend(args: &RecommendArgs, psl: &SuffixTable) -> CliResult {
    reject_csv(args.format)?;
    let record = |url: &Url, csp: &[String], depth| -> Result<PageRecord, CliError> {
        let origin = Origin::from_url(url).map_err(|e| CliError::Usage(format!("{url}: {e}")))?;
        let site = psl
            .site_of(&origin.host)
            .map_err(|e| CliError::Usage(format!("{url}: {e}")))?;
        let mut r = PageRecord::new(url.clone(), origin, site, depth);
        r.policies = csp
            .iter()
            .map(|c| parse_policy(c, Disposition::Enforce, Delivery::HttpHeader))
            .collect();
        Ok(r)
    };
    let parent = record(&args.parent, &args.parent_csp, Depth::Home)?;
    let iframe = record(&args.iframe, &args.iframe_csp, Depth::IframeOfHome)?;
    let c = detect::classify_pair(&parent, &iframe, psl);
    print_classification(&c, args.parent.as_str(), args.iframe.as_str(), args.format)?;
    Ok(0)
}

fn cmd_fixtures(args: &FixturesArgs) -> CliResult {
    let config = FixtureConfig {
        page_base: args.page_base.clone(),
        probe_base: args.probe_base.clone(),
        beacon: args.beacon.clone(),
        timeout_ms: args.timeout_ms,
    };
    let cases = fixtures::generate_suite(&config, &args.out)?;
    eprintln!("{} fixture cases written to {}", cases.len(), args.out.display());
    Ok(0)
}

fn run(cli: Cli) -> CliResult {
    let loaded;
    let psl: &SuffixTable = if let Some(path) = &cli.psl {
        loaded = SuffixTable::load(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        &loaded
    } else if cli.naive_etld {
        SuffixTable::naive_static()
    } else {
        SuffixTable::bundled()
    };
    match &cli.command {
        Command::Parse(a) => cmd_parse(a),
        Command::Normalize(a) => cmd_normalize(a),
        Command::Compare(a) => cmd_compare(a),
        Command::AuditPair(a) => cmd_audit_pair(a, psl),
        Command::Crawl(a) => cmd_crawl(a, psl),
        Command::Analyze(a) => cmd_analyze(a, psl),
        Command::Potential(a) => cmd_potential(a, psl),
        Command::Recommend(a) => cmd_recommend(a, psl),
        Command::Fixtures(a) => cmd_fixtures(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}
