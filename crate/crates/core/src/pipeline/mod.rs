//! Stage orchestration over an output directory.
//!
//! Every stage reads what earlier stages left in the output directory (the
//! corpus snapshot and plain CSV files), writes its own artifacts atomically
//! and refreshes `manifest.json`. Running the stages one by one produces the
//! same files as [`run`].

mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::clustering::{extract_businesses, select_popular_cluster, sweep_k, write_bic_csv, write_cluster_report};
use crate::features::{user_features, write_user_feature_csv, zscore_normalize, FeatureConfig};
use crate::ingest::{load_snapshot, parse_corpus, snapshot, Corpus, IngestError, SnapshotError};
use crate::io_util::write_atomic;
use crate::plot::{box_svg, quarantine_svg, timeline_svg};
use crate::quarantine::{
    quarantine_sweep, trusted_score, write_evidence_csv, write_quarantine_csv, write_trust_csv,
};
use crate::rsd::{read_rsd_csv, spiky_businesses, write_daily_counts_csv, write_fences_csv, write_spike_csv};
use crate::spamscore::{read_scores_csv, score_businesses, score_reviews, write_scores_csv, Orientations, SubjectKind};

pub use config::{ConfigError, PipelineConfig, KEYS as CONFIG_KEYS, OUT_DIR_ENV};
pub use manifest::{Manifest, MANIFEST_FILE, TIMINGS_FILE};

pub const FAILED_MARKER: &str = "FAILED";

pub mod artifacts {
    pub const SNAPSHOT: &str = "corpus.snap";
    pub const USER_FEATURES: &str = "user_features.csv";
    pub const BIC_TABLE: &str = "bic_table.csv";
    pub const CLUSTER_REPORT: &str = "cluster_report.csv";
    pub const CLUSTER_ASSIGNMENTS: &str = "cluster_assignments.csv";
    pub const POPULAR_USERS: &str = "popular_users.csv";
    pub const EXTRACTED: &str = "extracted_businesses.csv";
    pub const DAILY_COUNTS: &str = "daily_counts.csv";
    pub const FENCES: &str = "fences.csv";
    pub const SPIKES: &str = "spikes.csv";
    pub const SPIKY: &str = "spiky_businesses.csv";
    pub const SCORES: &str = "scores.csv";
    pub const TRUST: &str = "trust_scores.csv";
    pub const QUARANTINE: &str = "quarantine.csv";
    pub const EVIDENCE: &str = "evidence.csv";
    pub const PLOTS_DIR: &str = "plots";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Cluster,
    Extract,
    Rsd,
    Score,
    Quarantine,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Cluster,
        Stage::Extract,
        Stage::Rsd,
        Stage::Score,
        Stage::Quarantine,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::Extract => "extract",
            Stage::Rsd => "rsd",
            Stage::Score => "score",
            Stage::Quarantine => "quarantine",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing {artifact} in {dir}; run the `{stage}` stage first")]
    MissingArtifact {
        artifact: String,
        stage: Stage,
        dir: PathBuf,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingArtifact { .. } => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Internal(_) => 3,
        }
    }

    fn data(e: impl fmt::Display) -> Self {
        PipelineError::Data(e.to_string())
    }

    fn write(path: &Path, e: impl fmt::Display) -> Self {
        PipelineError::Internal(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::Data(format!("ingest: {e}"))
    }
}

/// Counts a stage reports; merged into the manifest.
pub type Counts = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: Stage,
    pub counts: Counts,
    pub seconds: f64,
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str, stage: Stage) -> Result<PathBuf, PipelineError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingArtifact {
                artifact: name.to_string(),
                stage,
                dir: self.out.to_path_buf(),
            })
        }
    }

    fn corpus(&self) -> Result<Corpus, PipelineError> {
        let p = self.require(artifacts::SNAPSHOT, Stage::Ingest)?;
        load_snapshot(&p).map_err(|e: SnapshotError| PipelineError::Data(format!("{}: {e}", p.display())))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let p = self.path(name);
        write_atomic(&p, bytes).map_err(|e| PipelineError::write(&p, e))
    }

    fn write_csv<F>(&self, name: &str, f: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| PipelineError::write(&self.path(name), e))?;
        self.write(name, &buf)
    }

    fn read(&self, name: &str, stage: Stage) -> Result<Vec<u8>, PipelineError> {
        let p = self.require(name, stage)?;
        std::fs::read(&p).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))
    }

    fn read_ids(&self, name: &str, stage: Stage) -> Result<BTreeSet<String>, PipelineError> {
        read_id_csv(&self.read(name, stage)?).map_err(|e| PipelineError::Data(format!("{name}: {e}")))
    }

    fn write_ids(&self, name: &str, column: &str, ids: &BTreeSet<String>) -> Result<(), PipelineError> {
        self.write_csv(name, |buf| write_id_csv(buf, column, ids))
    }
}

fn write_id_csv(out: &mut Vec<u8>, column: &str, ids: &BTreeSet<String>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([column])?;
    for id in ids {
        w.write_record([id])?;
    }
    w.flush()?;
    Ok(())
}

fn read_id_csv(bytes: &[u8]) -> Result<BTreeSet<String>, csv::Error> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut out = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        if let Some(id) = rec.get(0) {
            out.insert(id.to_string());
        }
    }
    Ok(out)
}

fn count(v: impl Into<serde_json::Value>) -> serde_json::Value {
    v.into()
}

fn ingest(ctx: &Ctx) -> Result<Counts, PipelineError> {
    let c = ctx.config;
    let (Some(users), Some(reviews), Some(businesses)) = (&c.users, &c.reviews, &c.businesses) else {
        return Err(ConfigError::Invalid("ingest needs the users, reviews and businesses input paths".into()).into());
    };
    let (corpus, report) = parse_corpus(users, reviews, businesses, &c.ingest_options())?;
    for e in report.errors.iter().take(20) {
        log::warn!("{e}");
    }
    let p = ctx.path(artifacts::SNAPSHOT);
    snapshot(&corpus, &p).map_err(|e| PipelineError::write(&p, e))?;
    use crate::ingest::RecordKind;
    Ok(Counts::from([
        ("users".into(), count(corpus.user_count())),
        ("reviews".into(), count(corpus.review_count())),
        ("businesses".into(), count(corpus.business_count())),
        ("rejected_user_lines".into(), count(report.rejected(RecordKind::User))),
        ("rejected_review_lines".into(), count(report.rejected(RecordKind::Review))),
        ("rejected_business_lines".into(), count(report.rejected(RecordKind::Business))),
        ("out_of_window_reviews".into(), count(report.out_of_window_reviews)),
        ("dropped_dangling_reviews".into(), count(report.dropped_dangling_reviews)),
        ("stubbed_users".into(), count(report.stubbed_users)),
        ("stubbed_businesses".into(), count(report.stubbed_businesses)),
    ]))
}

fn cluster(ctx: &Ctx) -> Result<Counts, PipelineError> {
    let corpus = ctx.corpus()?;
    let rows: Vec<(String, crate::features::UserFeatureVector)> =
        corpus.users().map(|u| (u.user_id.clone(), user_features(u))).collect();
    ctx.write_csv(artifacts::USER_FEATURES, |buf| write_user_feature_csv(buf, &rows))?;
    let raw: Vec<[f64; 8]> = rows.iter().map(|(_, v)| v.0).collect();
    let (normalized, params) = zscore_normalize(&raw).map_err(PipelineError::data)?;
    let sweep = sweep_k(&normalized, &ctx.config.sweep()).map_err(PipelineError::data)?;
    let best = sweep.best_clustering();
    let reference_year = ctx
        .config
        .reference_year
        .or_else(|| corpus.max_review_year())
        .unwrap_or(ctx.config.window.end.format("%Y").to_string().parse().unwrap_or(2016));
    let popular = select_popular_cluster(best, &params, reference_year);
    let popular_ids: BTreeSet<String> = popular.members.iter().map(|&i| rows[i].0.clone()).collect();

    ctx.write_csv(artifacts::BIC_TABLE, |buf| write_bic_csv(buf, &sweep))?;
    ctx.write_csv(artifacts::CLUSTER_REPORT, |buf| write_cluster_report(buf, best, &params))?;
    ctx.write_csv(artifacts::CLUSTER_ASSIGNMENTS, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["user_id", "cluster"])?;
        for ((id, _), c) in rows.iter().zip(&best.assignments) {
            w.write_record([id.clone(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    ctx.write_ids(artifacts::POPULAR_USERS, "user_id", &popular_ids)?;
    Ok(Counts::from([
        ("best_k".into(), count(best.k)),
        ("popular_cluster".into(), count(popular.index)),
        ("popular_users".into(), count(popular_ids.len())),
        ("reference_year".into(), count(reference_year)),
    ]))
}

fn extract(ctx: &Ctx) -> Result<Counts, PipelineError> {
    let corpus = ctx.corpus()?;
    let popular = ctx.read_ids(artifacts::POPULAR_USERS, Stage::Cluster)?;
    let extracted = extract_businesses(popular.iter().map(String::as_str), &corpus, ctx.config.min_reviews);
    ctx.write_ids(artifacts::EXTRACTED, "business_id", &extracted)?;
    Ok(Counts::from([("extracted_businesses".into(), count(extracted.len()))]))
}

fn rsd(ctx: &Ctx) -> Result<Counts, PipelineError> {
    let corpus = ctx.corpus()?;
    let extracted = ctx.read_ids(artifacts::EXTRACTED, Stage::Extract)?;
    let report = spiky_businesses(
        extracted.iter().map(String::as_str),
        &corpus,
        ctx.config.window,
        ctx.config.min_active_days,
    )
    .map_err(PipelineError::data)?;
    ctx.write_csv(artifacts::DAILY_COUNTS, |buf| write_daily_counts_csv(buf, &report))?;
    ctx.write_csv(artifacts::FENCES, |buf| write_fences_csv(buf, &report))?;
    ctx.write_csv(artifacts::SPIKES, |buf| write_spike_csv(buf, &report))?;
    ctx.write_ids(artifacts::SPIKY, "business_id", &report.spiky)?;
    Ok(Counts::from([
        ("spiky_businesses".into(), count(report.spiky.len())),
        ("spiky_fraction".into(), count(report.spiky_fraction())),
        ("spikes".into(), count(report.spikes().count())),
        ("rsd_skipped_businesses".into(), count(report.skipped)),
    ]))
}

fn orientations(config: &PipelineConfig) -> Result<Orientations, PipelineError> {
    match &config.orientations {
        None => Ok(Orientations::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                ConfigError::Read {
                    path: p.display().to_string(),
                    message: e.to_string(),
                }
            })?;
            Orientations::parse(&text).map_err(|e| {
                ConfigError::Invalid(format!("{}: {e}", p.display())).into()
            })
        }
    }
}

fn score(ctx: &Ctx) -> Result<Counts, PipelineError> {
    let table = orientations(ctx.config)?;
    let corpus = ctx.corpus()?;
    let extracted = ctx.read_ids(artifacts::EXTRACTED, Stage::Extract)?;
    let features = FeatureConfig::default();
    let s = ctx.config.s_threshold;
    let per_business: Vec<Vec<crate::spamscore::SpamScore>> = extracted
        .par_iter()
        .map(|b| score_reviews(b, &corpus, &features, &table, s))
        .collect::<Result<_, _>>()
        .map_err(PipelineError::data)?;
    let mut scores: Vec<_> = per_business.into_iter().flatten().collect();
    scores.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let reviews_scored = scores.len();
    let reviews_flagged = scores.iter().filter(|x| x.flagged).count();
    let mut businesses_flagged = 0;
    if extracted.len() >= 2 {
        let business = score_businesses(&extracted, &corpus, &features, &table, s).map_err(PipelineError::data)?;
        businesses_flagged = business.iter().filter(|x| x.flagged).count();
        scores.extend(business);
    } else {
        log::warn!("{} extracted business(es); business scores need at least 2", extracted.len());
    }
    ctx.write_csv(artifacts::SCORES, |buf| write_scores_csv(buf, &scores))?;
    Ok(Counts::from([
        ("reviews_scored".into(), count(reviews_scored)),
        ("reviews_flagged".into(), count(reviews_flagged)),
        ("businesses_flagged".into(), count(businesses_flagged)),
    ]))
}

fn quarantine(ctx: &Ctx) -> Result<Counts, PipelineError> {
    let corpus = ctx.corpus()?;
    let popular = ctx.read_ids(artifacts::POPULAR_USERS, Stage::Cluster)?;
    let spiky = ctx.read_ids(artifacts::SPIKY, Stage::Rsd)?;
    let scores = read_scores_csv(ctx.read(artifacts::SCORES, Stage::Score)?.as_slice())
        .map_err(PipelineError::data)?;
    let review_scores: HashMap<String, f64> = scores
        .into_iter()
        .filter(|s| s.kind == SubjectKind::Review)
        .map(|s| (s.subject_id, s.score))
        .collect();
    let trust: BTreeMap<String, crate::quarantine::TrustScore> = spiky
        .par_iter()
        .map(|b| {
            trusted_score(b, &review_scores, &corpus, ctx.config.s_threshold, ctx.config.trust_mode)
                .map(|t| (b.clone(), t))
        })
        .collect::<Result<_, _>>()
        .map_err(PipelineError::data)?;
    let outcome = quarantine_sweep(&popular, &spiky, &trust, &corpus, ctx.config.thetas(), ctx.config.sweep_options())
        .map_err(PipelineError::data)?;
    ctx.write_csv(artifacts::TRUST, |buf| write_trust_csv(buf, &trust))?;
    ctx.write_csv(artifacts::QUARANTINE, |buf| write_quarantine_csv(buf, &outcome))?;
    ctx.write_csv(artifacts::EVIDENCE, |buf| write_evidence_csv(buf, &outcome))?;
    let mut counts = Counts::from([
        ("trust_fallbacks".into(), count(trust.values().filter(|t| t.fallback).count())),
        ("deceptive_ratings".into(), count(outcome.evidence.len())),
    ]);
    for r in &outcome.reports {
        counts.insert(format!("quarantined_at_{}", r.threshold), count(r.quarantined.len()));
    }
    Ok(counts)
}

fn read_quarantine_rows(bytes: &[u8]) -> Result<Vec<(u32, usize, f64)>, PipelineError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(PipelineError::data)?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        rows.push((
            field(0).parse().map_err(PipelineError::data)?,
            field(1).parse().map_err(PipelineError::data)?,
            field(2).parse().map_err(PipelineError::data)?,
        ));
    }
    Ok(rows)
}

fn plot_name(prefix: &str, business_id: &str) -> String {
    let safe: String = business_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{}/{prefix}_{safe}.svg", artifacts::PLOTS_DIR)
}

/// Renders SVGs from the CSV artifacts alone.
fn report(ctx: &Ctx) -> Result<Counts, PipelineError> {
    let fences = ctx.read(artifacts::FENCES, Stage::Rsd)?;
    let daily = ctx.read(artifacts::DAILY_COUNTS, Stage::Rsd)?;
    let rsd = read_rsd_csv(fences.as_slice(), daily.as_slice()).map_err(PipelineError::data)?;
    let plots = ctx.path(artifacts::PLOTS_DIR);
    if plots.exists() {
        std::fs::remove_dir_all(&plots).map_err(|e| PipelineError::write(&plots, e))?;
    }
    let mut written = 0usize;
    for b in rsd.businesses.iter().filter(|b| b.is_spiky()) {
        ctx.write(&plot_name("timeline", b.business_id()), timeline_svg(b).as_bytes())?;
        ctx.write(&plot_name("box", b.business_id()), box_svg(b).as_bytes())?;
        written += 2;
    }
    if ctx.path(artifacts::QUARANTINE).is_file() {
        let rows = read_quarantine_rows(&ctx.read(artifacts::QUARANTINE, Stage::Quarantine)?)?;
        ctx.write(&format!("{}/quarantine.svg", artifacts::PLOTS_DIR), quarantine_svg(&rows).as_bytes())?;
        written += 1;
    }
    Ok(Counts::from([("plots".into(), count(written))]))
}

fn output_dir(config: &PipelineConfig) -> Result<&Path, PipelineError> {
    let out = config.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| PipelineError::write(out, e))?;
    Ok(out)
}

fn mark_failed(out: &Path, stage: Stage, err: &PipelineError) {
    let text = format!("stage={stage}\nexit_code={}\nerror={err}\n", err.exit_code());
    if let Err(e) = write_atomic(&out.join(FAILED_MARKER), text.as_bytes()) {
        log::error!("cannot write failure marker: {e}");
    }
}

/// Runs one stage and records it in the manifest. On failure the output
/// directory keeps whatever was written and gains a `FAILED` marker.
pub fn run_stage(stage: Stage, config: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    config.validate()?;
    let out = output_dir(config)?;
    let ctx = Ctx { config, out };
    let started = Instant::now();
    let result = match stage {
        Stage::Ingest => ingest(&ctx),
        Stage::Cluster => cluster(&ctx),
        Stage::Extract => extract(&ctx),
        Stage::Rsd => rsd(&ctx),
        Stage::Score => score(&ctx),
        Stage::Quarantine => quarantine(&ctx),
        Stage::Report => report(&ctx),
    };
    let seconds = started.elapsed().as_secs_f64();
    let finish = result.and_then(|counts| {
        manifest::record(out, config, stage, &counts, seconds)?;
        Ok(counts)
    });
    match finish {
        Ok(counts) => {
            let marker = out.join(FAILED_MARKER);
            if marker.exists() {
                std::fs::remove_file(&marker).map_err(|e| PipelineError::write(&marker, e))?;
            }
            log::info!("{stage}: done in {seconds:.3}s");
            Ok(StageSummary { stage, counts, seconds })
        }
        Err(e) => {
            mark_failed(out, stage, &e);
            Err(e)
        }
    }
}

/// All stages in order.
pub fn run(config: &PipelineConfig) -> Result<Vec<StageSummary>, PipelineError> {
    Stage::ALL.iter().map(|&s| run_stage(s, config)).collect()
}
