//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; output goes to the writer passed to [`run`] so tests can
//! capture it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    audit, digest, mix_eta, read_dataset, require_debug, role_split, swi_profiles, swip, tpm, write_dataset,
    AttributeSet, EtaMode, FillerPool, SplitStats,
};
use crate::error::{Error, Result};
use crate::hintgen::{GenerationParams, QaType};
use crate::membench::{run_bench, Backends, BenchConfig, SystemClock};
use crate::pipeline::{GenerateConfig, Pipeline};
use crate::qa::TimelineConfig;
use crate::sampler::{sample_profile, Generators, Profile};
use crate::schema::{load_schema, Schema, DAILY_LIFE_SCHEMA};
use crate::surface::llm::{ChatClient, ClientConfig, LlmGenerator, Prompts, Rewriter};
use crate::surface::{parse_lines, TemplateSet};

/// Simulated personal-assistant memory data: profiles, QA trajectories and
/// a memory benchmark.
#[derive(Debug, Parser)]
#[command(name = "memsim", version)]
pub struct Cli {
    /// Log more (repeat for more detail).
    #[arg(long = "verbose", short = 'v', action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a schema, check its graph and report its shape.
    Validate {
        /// Schema file; the shipped daily-life schema when omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Template file to check against the schema.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Draw user profiles.
    SampleProfile {
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// One JSON object per line instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Generate a dataset of QA trajectories.
    Generate {
        /// TOML run configuration; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Trajectories for one type, as TYPE=N. Repeatable.
        #[arg(long = "count", value_parser = parse_count)]
        counts: Vec<(QaType, usize)>,
        /// Worker threads; all logical cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Dilute a dataset with filler posts.
    Mix {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eta: u32,
        #[arg(long, value_enum, default_value = "total")]
        mode: EtaMode,
        #[arg(long)]
        seed: u64,
        /// Filler posts, one per line; the shipped pool when omitted.
        #[arg(long)]
        filler: Option<PathBuf>,
    },
    /// Size and diversity statistics of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        /// Also report value diversity over this many sampled profiles.
        #[arg(long)]
        profiles: Option<usize>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Re-grade every trajectory of a dataset against its plan.
    Audit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the memory benchmark.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory, overriding the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn parse_count(s: &str) -> std::result::Result<(QaType, usize), String> {
    let (t, n) = s.split_once('=').ok_or_else(|| format!("expected TYPE=N, got `{s}`"))?;
    let t: QaType = t.trim().parse().map_err(|e: Error| e.to_string())?;
    let n = n.trim().parse().map_err(|e| format!("bad count in `{s}`: {e}"))?;
    Ok((t, n))
}

/// Chat backend settings for generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub client: ClientConfig,
    /// Paraphrase template text, keeping it only when the checks pass.
    pub rewrite: bool,
    /// Fill external CPDs that have no offline generator.
    pub generators: bool,
    /// Rewrite attempts per text before keeping the template.
    pub budget: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection { client: ClientConfig::default(), rewrite: true, generators: true, budget: 3 }
    }
}

/// The generate configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub schema: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub noise_phrases: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub counts: BTreeMap<QaType, usize>,
    pub params: GenerationParams,
    pub timeline: TimelineConfig,
    pub max_attempts: Option<usize>,
    pub llm: Option<LlmSection>,
}

/// The bench configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchFile {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub bench: BenchConfig,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn toml_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    toml::from_str(&read(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Relative paths in a config file are relative to the file.
fn resolve(base: Option<&Path>, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| match base.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    })
}

fn schema_at(path: Option<&Path>) -> Result<Schema> {
    match path {
        Some(p) => load_schema(&read(p)?),
        None => load_schema(DAILY_LIFE_SCHEMA),
    }
}

fn templates_at(path: Option<&Path>) -> Result<TemplateSet> {
    match path {
        Some(p) => TemplateSet::from_toml(&read(p)?),
        None => Ok(TemplateSet::daily_life()),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 success, 1 usage, 2 validation, 3 runtime, 4 external service.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::from_default_env().filter_level(level).try_init();
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Validate { schema, templates } => cmd_validate(schema.as_deref(), templates.as_deref(), out),
        Command::SampleProfile { schema, seed, count, json } => {
            let schema = schema_at(schema.as_deref())?;
            let gens = Generators::offline();
            for i in 0..count {
                let p = sample_profile(&schema, crate::rng::derive_seed(seed, &format!("profile/{i}")), &gens)?;
                if json {
                    writeln!(out, "{}", serde_json::to_string(&p)?).map_err(io_out)?;
                } else {
                    writeln!(out, "{}", p.render(&schema)).map_err(io_out)?;
                }
            }
            Ok(())
        }
        Command::Generate { config, seed, out: out_dir, schema, templates, counts, jobs } => {
            let mut rc: RunConfig = match &config {
                Some(p) => toml_file(p)?,
                None => RunConfig::default(),
            };
            let base = config.as_deref();
            rc.schema = schema.or(resolve(base, rc.schema));
            rc.templates = templates.or(resolve(base, rc.templates));
            rc.noise_phrases = resolve(base, rc.noise_phrases);
            rc.out = out_dir.or(resolve(base, rc.out));
            rc.seed = seed.or(rc.seed);
            rc.jobs = jobs.or(rc.jobs);
            rc.counts.extend(counts);
            cmd_generate(&rc, out)
        }
        Command::Mix { dataset, out: out_dir, eta, mode, seed, filler } => {
            let ds = read_dataset(&dataset)?;
            let pool = match filler {
                Some(p) => FillerPool::from_file(&p)?,
                None => FillerPool::shipped(),
            };
            let mixed = mix_eta(&ds, &pool, eta, mode, seed)?;
            let m = write_dataset(&out_dir, &mixed)?;
            writeln!(out, "wrote {} trajectories, {} messages to {}", m.total.trajectories, m.total.messages, out_dir.display())
                .map_err(io_out)
        }
        Command::Stats { dataset, profiles, schema, seed, json } => {
            cmd_stats(&dataset, profiles, schema.as_deref(), seed, json, out)
        }
        Command::Audit { dataset, json } => {
            let ds = read_dataset(&dataset)?;
            require_debug(&ds, &dataset)?;
            let report = audit(&ds)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(io_out)?;
            } else {
                write!(out, "{report}").map_err(io_out)?;
                writeln!(
                    out,
                    "reference: LLM-rewritten data has been reported at about 99.8% / 99.5% / 99.8% on average"
                )
                .map_err(io_out)?;
            }
            if report.all_ok() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{} trajectories fail the audit", report.total.failures.len())))
            }
        }
        Command::Bench { config, dataset, out: out_dir, seed, jobs } => {
            cmd_bench(&config, dataset, out_dir, seed, jobs, out)
        }
    }
}

fn cmd_validate(schema: Option<&Path>, templates: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let s = schema_at(schema)?;
    if let Some(t) = templates {
        templates_at(Some(t))?.check_schema(&s)?;
    }
    let roots = role_split(&s, AttributeSet::RoleIrrelevant).len();
    writeln!(
        out,
        "ok: {} entities, {} attributes ({} roots), {} edges",
        s.entities.len(),
        s.attributes.len(),
        roots,
        s.edges.len()
    )
    .map_err(io_out)?;
    writeln!(out, "order: {}", s.order().join(", ")).map_err(io_out)
}

fn cmd_generate(rc: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = rc.seed.ok_or_else(|| Error::Config("generate needs a seed (--seed or `seed` in the config)".into()))?;
    let out_dir = rc.out.clone().ok_or_else(|| Error::Config("generate needs an output directory (--out)".into()))?;
    if rc.counts.is_empty() {
        return Err(Error::Config("no trajectory counts given (--count TYPE=N or [counts])".into()));
    }
    let schema = schema_at(rc.schema.as_deref())?;
    let mut templates = templates_at(rc.templates.as_deref())?;
    if let Some(p) = &rc.noise_phrases {
        templates = templates.with_noise_phrases(parse_lines(&read(p)?))?;
    }
    templates.check_schema(&schema)?;

    let mut gens = Generators::offline();
    let mut rewriter = None;
    if let Some(llm) = &rc.llm {
        if llm.generators {
            gens.set_fallback(Arc::new(LlmGenerator::new(ChatClient::new(llm.client.clone())?, Prompts::shipped())));
        }
        if llm.rewrite {
            rewriter = Some(Rewriter::new(ChatClient::new(llm.client.clone())?, Prompts::shipped(), llm.budget));
        }
    }
    let config = GenerateConfig {
        counts: rc.counts.clone(),
        params: rc.params.clone(),
        timeline: rc.timeline.clone(),
        max_attempts: rc.max_attempts.unwrap_or(GenerateConfig::default().max_attempts),
        ..Default::default()
    };
    let mut pipeline = Pipeline::new(&schema, &templates, &gens);
    pipeline.rewriter = rewriter.as_ref();
    let (mut ds, report) = with_jobs(rc.jobs, || pipeline.generate(&config, seed))??;
    // the output directory and worker count do not change the data
    let digest_of = RunConfig { out: None, jobs: None, ..rc.clone() };
    ds.config_digest = Some(digest(serde_json::to_string(&digest_of)?.as_bytes()));
    let manifest = write_dataset(&out_dir, &ds)?;
    let report_path = out_dir.join("generation_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&report_path, e))?;
    for (split, s) in &manifest.splits {
        let r = &report.splits[split];
        writeln!(
            out,
            "{split:<16} {:>5} trajectories {:>6} messages  tpm {:>5.2}  seeds tried {}",
            s.trajectories, s.messages, s.tpm, r.attempts
        )
        .map_err(io_out)?;
    }
    if let Some(rw) = &report.rewrite {
        writeln!(out, "rewrites: {} requests, {} accepted, {} kept template", rw.requests, rw.accepted, rw.fallbacks)
            .map_err(io_out)?;
    }
    writeln!(out, "wrote {}", out_dir.display()).map_err(io_out)
}

#[derive(Serialize)]
struct StatsOut {
    splits: BTreeMap<String, SplitStats>,
    total: SplitStats,
    tpm: f64,
    swip: Option<f64>,
    swi: Option<BTreeMap<String, f64>>,
}

fn cmd_stats(dir: &Path, profiles: Option<usize>, schema: Option<&Path>, seed: u64, json: bool, out: &mut dyn Write) -> Result<()> {
    let ds = read_dataset(dir)?;
    let m = ds.manifest();
    let swi = match profiles {
        Some(n) => {
            let schema = schema_at(schema)?;
            let gens = Generators::offline();
            let ps: Vec<Profile> = (0..n)
                .map(|i| sample_profile(&schema, crate::rng::derive_seed(seed, &format!("profile/{i}")), &gens))
                .collect::<Result<_>>()?;
            let sets = [
                ("role_relevant", AttributeSet::RoleRelevant),
                ("role_irrelevant", AttributeSet::RoleIrrelevant),
                ("all", AttributeSet::All),
            ];
            Some(sets.iter().map(|(k, s)| (k.to_string(), swi_profiles(&schema, &ps, *s))).collect())
        }
        None => None,
    };
    let stats = StatsOut {
        tpm: tpm(ds.records().map(|r| &r.trajectory)),
        swip: swip(&ds),
        splits: m.splits,
        total: m.total,
        swi,
    };
    if json {
        return writeln!(out, "{}", serde_json::to_string_pretty(&stats)?).map_err(io_out);
    }
    writeln!(out, "{:<16} {:>6} {:>9} {:>9} {:>7}", "type", "n", "messages", "tokens", "tpm").map_err(io_out)?;
    for (k, s) in stats.splits.iter().chain([(&"total".to_string(), &stats.total)]) {
        writeln!(out, "{k:<16} {:>6} {:>9} {:>9} {:>7.2}", s.trajectories, s.messages, s.tokens, s.tpm).map_err(io_out)?;
    }
    match stats.swip {
        Some(v) => writeln!(out, "SWIP {v:.4}"),
        None => writeln!(out, "SWIP n/a (no debug sidecar)"),
    }
    .map_err(io_out)?;
    if let Some(swi) = &stats.swi {
        for (k, v) in swi {
            writeln!(out, "SWI {k:<16} {v:.4}").map_err(io_out)?;
        }
    }
    Ok(())
}

fn cmd_bench(
    config: &Path,
    dataset: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let raw: toml::Value = toml::from_str(&read(config)?).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let has_seed = raw.get("bench").and_then(|b| b.get("seed")).is_some();
    let mut file: BenchFile = toml_file(config)?;
    if let Some(s) = seed {
        file.bench.seed = s;
    } else if !has_seed {
        return Err(Error::Config("bench needs a seed (--seed or `seed` under [bench])".into()));
    }
    file.bench.filler = resolve(Some(config), file.bench.filler);
    file.bench.check()?;
    let dataset = dataset
        .or(resolve(Some(config), file.dataset.clone()))
        .ok_or_else(|| Error::Config("bench needs a dataset (--dataset or `dataset`)".into()))?;
    let schema = schema_at(resolve(Some(config), file.schema.clone()).as_deref())?;
    let templates = templates_at(resolve(Some(config), file.templates.clone()).as_deref())?;
    let ds = read_dataset(&dataset)?;
    let factors = GenerationParams::default().factors;
    let backends = Backends::build(&file.bench, &schema, &templates, &factors)?;
    let clock = SystemClock::default();
    let run = with_jobs(jobs.or(file.jobs), || run_bench(&ds, &file.bench, &backends, &clock))??;
    write!(out, "{}", run.report).map_err(io_out)?;
    if let Some(dir) = out_dir.or(resolve(Some(config), file.out.clone())) {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("report.txt", run.report.to_string())?;
        write("report.json", serde_json::to_string_pretty(&run.report)? + "\n")?;
        let mut lines = String::new();
        for (eta, r) in &run.episodes {
            lines.push_str(&serde_json::to_string(&serde_json::json!({"eta": eta, "episode": r}))?);
            lines.push('\n');
        }
        write("episodes.jsonl", lines)?;
        writeln!(out, "wrote {}", dir.display()).map_err(io_out)?;
    }
    if run.report.partial() {
        let n: usize = run.report.rows.iter().filter(|r| r.qa_type == "all").map(|r| r.errored).sum();
        writeln!(out, "partial report: {n} episodes failed and are excluded").map_err(io_out)?;
    }
    Ok(())
}
