//! Policy × scenario × trace experiment matrices.
//!
//! A [`RunSpec`] is a TOML file:
//!
//! ```toml
//! manifest = "manifest.json"        # or an inline [manifest] synthesis table
//! traces = ["traces/*.csv"]
//! policies = ["sba", "bba", "festive", "osmf"]
//! scenarios = [{ buffer_s = 120, critical_s = 12 }, { buffer_s = 240, critical_s = 12 }]
//! output_dir = "out"
//! seed = 2019
//! parallelism = 0                   # 0: all cores
//! ```
//!
//! Relative paths resolve against the directory holding the spec. Output
//! layout under `output_dir`:
//!
//! ```text
//! logs/<policy>/bs<BS>_lc<Lc>/<trace>.jsonl
//! sessions.csv      one row per session, full precision
//! aggregates.csv    one row per (policy, scenario)
//! table.txt         the comparison table
//! figures/{rebuffering,instability,ssim,bitrate}.csv
//! failures.csv      inputs that could not be used
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abr::{PolicyId, PolicyParams};
use crate::manifest::{load_manifest, synthesize_manifest, BitrateLadder, ManifestError, SaturationProfile, VideoManifest};
use crate::metrics::{aggregate, AggregateReport, SessionReport};
use crate::simulator::{run_session, SessionConfig, SessionEventLog, SimError};
use crate::table::{emit_comparison_table, format_metric};
use crate::trace::{load_trace, BandwidthTrace};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("invalid run spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run spec: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Session(#[from] SimError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticManifestSpec {
    pub chunk_count: usize,
    #[serde(default = "default_chunk_duration")]
    pub chunk_duration_s: f64,
    /// Defaults to the Netflix ladder.
    #[serde(default)]
    pub ladder_kbps: Option<Vec<f64>>,
    #[serde(default = "default_floor")]
    pub q_floor: f64,
    #[serde(default = "default_ceiling")]
    pub q_ceiling: f64,
    #[serde(default = "default_knee")]
    pub knee_kbps: f64,
    #[serde(default = "default_spread")]
    pub per_chunk_spread: f64,
}

fn default_chunk_duration() -> f64 {
    4.0
}
fn default_floor() -> f64 {
    SaturationProfile::default().q_floor
}
fn default_ceiling() -> f64 {
    SaturationProfile::default().q_ceiling
}
fn default_knee() -> f64 {
    SaturationProfile::default().knee_kbps
}
fn default_spread() -> f64 {
    SaturationProfile::default().per_chunk_spread
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestSource {
    Path(PathBuf),
    Synthetic(SyntheticManifestSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub buffer_s: f64,
    pub critical_s: f64,
}

impl Scenario {
    pub fn label(&self) -> String {
        format!("bs{}_lc{}", self.buffer_s, self.critical_s)
    }
}

/// Session settings shared by every run of the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionDefaults {
    pub startup_chunks: usize,
    pub resume_chunks: usize,
    pub tolerance_s: f64,
}

impl Default for SessionDefaults {
    fn default() -> Self {
        let c = SessionConfig::default();
        Self {
            startup_chunks: c.startup_chunks,
            resume_chunks: c.resume_chunks,
            tolerance_s: c.tolerance_s,
        }
    }
}

fn default_policies() -> Vec<PolicyId> {
    PolicyId::ALL.to_vec()
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub manifest: ManifestSource,
    pub traces: Vec<String>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyId>,
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Seeds manifest synthesis.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_true")]
    pub loop_traces: bool,
    #[serde(default)]
    pub session: SessionDefaults,
    #[serde(default)]
    pub policy_params: PolicyParams,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunSpec {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, BatchError> {
        let mut spec: RunSpec = toml::from_str(text)?;
        spec.base_dir = base_dir.into();
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BatchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn resolve(&self, path: impl AsRef<Path>) -> PathBuf {
        let path = path.as_ref();
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn session_config(&self, policy: PolicyId, scenario: Scenario) -> SessionConfig {
        SessionConfig {
            buffer_capacity_s: scenario.buffer_s,
            critical_threshold_s: scenario.critical_s,
            startup_chunks: self.session.startup_chunks,
            resume_chunks: self.session.resume_chunks,
            loop_trace: self.loop_traces,
            policy,
            policy_params: self.policy_params.clone(),
            tolerance_s: self.session.tolerance_s,
        }
    }

    pub fn load_manifest(&self) -> Result<VideoManifest, BatchError> {
        match &self.manifest {
            ManifestSource::Path(p) => Ok(load_manifest(self.resolve(p))?),
            ManifestSource::Synthetic(s) => {
                let ladder = match &s.ladder_kbps {
                    Some(levels) => BitrateLadder::new(levels.clone())?,
                    None => BitrateLadder::netflix(),
                };
                let profile = SaturationProfile {
                    q_floor: s.q_floor,
                    q_ceiling: s.q_ceiling,
                    knee_kbps: s.knee_kbps,
                    jitter_seed: self.seed,
                    per_chunk_spread: s.per_chunk_spread,
                };
                Ok(synthesize_manifest(ladder, s.chunk_count, s.chunk_duration_s, &profile)?)
            }
        }
    }

    fn check_shape(&self) -> Result<(), BatchError> {
        if self.traces.is_empty() {
            return Err(BatchError::Spec("no trace patterns".into()));
        }
        if self.policies.is_empty() {
            return Err(BatchError::Spec("no policies".into()));
        }
        if self.scenarios.is_empty() {
            return Err(BatchError::Spec("no scenarios".into()));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return Err(BatchError::Spec(format!("policy {p} listed twice")));
            }
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if self.scenarios[..i].contains(s) {
                return Err(BatchError::Spec(format!("scenario {} listed twice", s.label())));
            }
        }
        Ok(())
    }
}

/// An input the batch had to skip.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub input: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub trace: String,
    pub report: SessionReport,
    pub log: SessionEventLog,
}

#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub output_dir: PathBuf,
    pub sessions: Vec<SessionRecord>,
    pub aggregates: Vec<AggregateReport>,
    pub failures: Vec<Failure>,
}

impl BatchSummary {
    pub fn truncated_sessions(&self) -> usize {
        self.sessions.iter().filter(|s| s.report.partial).count()
    }

    /// 0 when every input was used and every session finished, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() && self.truncated_sessions() == 0 {
            0
        } else {
            1
        }
    }
}

fn has_wildcards(pattern: &str) -> bool {
    pattern.contains(['*', '?', '['])
}

/// Expands trace patterns, sorted and de-duplicated. Missing literal paths
/// are reported as failures rather than silently dropped.
fn expand_traces(spec: &RunSpec, failures: &mut Vec<Failure>) -> Result<Vec<PathBuf>, BatchError> {
    let mut paths = Vec::new();
    for pattern in &spec.traces {
        let full = spec.resolve(pattern);
        let text = full.to_string_lossy().into_owned();
        if !has_wildcards(pattern) {
            if full.exists() {
                paths.push(full);
            } else {
                failures.push(Failure {
                    input: text,
                    error: "no such file".into(),
                });
            }
            continue;
        }
        let matches = glob::glob(&text)
            .map_err(|e| BatchError::Spec(format!("bad trace pattern {pattern:?}: {e}")))?;
        let mut any = false;
        for entry in matches {
            any = true;
            match entry {
                Ok(p) => paths.push(p),
                Err(e) => failures.push(Failure {
                    input: e.path().to_string_lossy().into_owned(),
                    error: e.error().to_string(),
                }),
            }
        }
        if !any {
            failures.push(Failure {
                input: text,
                error: "pattern matched no files".into(),
            });
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn trace_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

fn write_file(path: &Path, contents: &str) -> Result<(), BatchError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sessions_csv(sessions: &[SessionRecord]) -> String {
    let mut out = String::from(
        "policy,buffer_s,critical_s,trace,partial,rebuffering_s,rebuffer_count,instability,mean_ssim,mean_bitrate_kbps,startup_delay_s,session_duration_s,displayed_chunks\n",
    );
    for s in sessions {
        let r = &s.report;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.policy,
            r.buffer_capacity_s,
            r.critical_threshold_s,
            csv_field(&s.trace),
            r.partial,
            r.rebuffering_total,
            r.rebuffer_count,
            r.instability,
            r.mean_ssim,
            r.mean_bitrate,
            r.startup_delay,
            r.session_duration,
            r.displayed.len(),
        ));
    }
    out
}

fn aggregates_csv(aggregates: &[AggregateReport]) -> String {
    let mut out = String::from("policy,BS,Lc,rebuffering_s,instability,mean_ssim,mean_bitrate_kbps\n");
    for a in aggregates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.policy,
            a.buffer_capacity_s,
            a.critical_threshold_s,
            format_metric(a.rebuffering_s),
            format_metric(a.instability),
            format_metric(a.mean_ssim),
            format_metric(a.mean_bitrate_kbps),
        ));
    }
    out
}

/// One bar-chart dataset: policies down, scenarios across.
fn figure_csv(
    aggregates: &[AggregateReport],
    policies: &[PolicyId],
    scenarios: &[Scenario],
    metric: fn(&AggregateReport) -> f64,
) -> String {
    let mut out = String::from("policy");
    for s in scenarios {
        out.push(',');
        out.push_str(&s.label());
    }
    out.push('\n');
    for p in policies {
        out.push_str(p.as_str());
        for s in scenarios {
            out.push(',');
            if let Some(a) = aggregates.iter().find(|a| {
                a.policy == *p && a.buffer_capacity_s == s.buffer_s && a.critical_threshold_s == s.critical_s
            }) {
                out.push_str(&format_metric(metric(a)));
            }
        }
        out.push('\n');
    }
    out
}

fn failures_csv(failures: &[Failure]) -> String {
    let mut out = String::from("input,error\n");
    for f in failures {
        out.push_str(&format!("{},{}\n", csv_field(&f.input), csv_field(&f.error)));
    }
    out
}

/// Runs every (scenario, policy, trace) session and writes the results.
///
/// Invalid specs abort before anything is written. Traces that cannot be
/// read are skipped and listed in `failures.csv`.
pub fn run_batch(spec: &RunSpec) -> Result<BatchSummary, BatchError> {
    spec.check_shape()?;
    let manifest = spec.load_manifest()?;
    for &scenario in &spec.scenarios {
        for &policy in &spec.policies {
            spec.session_config(policy, scenario).validate(&manifest)?;
        }
    }

    let mut failures = Vec::new();
    let paths = expand_traces(spec, &mut failures)?;
    let mut traces: Vec<(String, BandwidthTrace)> = Vec::new();
    for path in paths {
        let name = trace_name(&path);
        if traces.iter().any(|(n, _)| *n == name) {
            return Err(BatchError::Spec(format!("two traces share the name {name}")));
        }
        match load_trace(&path) {
            Ok(t) => traces.push((name, t)),
            Err(e) => failures.push(Failure {
                input: path.to_string_lossy().into_owned(),
                error: e.to_string(),
            }),
        }
    }
    if traces.is_empty() {
        return Err(BatchError::Spec("no usable traces".into()));
    }

    let n = traces.len();
    let jobs: Vec<(Scenario, PolicyId, usize)> = spec
        .scenarios
        .iter()
        .flat_map(|&s| {
            spec.policies
                .iter()
                .flat_map(move |&p| (0..n).map(move |i| (s, p, i)))
        })
        .collect();
    let run = || -> Result<Vec<SessionRecord>, BatchError> {
        jobs.par_iter()
            .map(|&(scenario, policy, i)| {
                let (name, trace) = &traces[i];
                let outcome = run_session(&manifest, trace, &spec.session_config(policy, scenario))?;
                Ok(SessionRecord {
                    trace: name.clone(),
                    report: outcome.report,
                    log: outcome.log,
                })
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| BatchError::Spec(format!("thread pool: {e}")))?;
    let sessions = pool.install(run)?;

    let mut aggregates = Vec::new();
    for &scenario in &spec.scenarios {
        for &policy in &spec.policies {
            let group: Vec<SessionReport> = sessions
                .iter()
                .filter(|s| {
                    s.report.policy == policy
                        && s.report.buffer_capacity_s == scenario.buffer_s
                        && s.report.critical_threshold_s == scenario.critical_s
                })
                .map(|s| s.report.clone())
                .collect();
            match aggregate(&group) {
                Ok(a) => aggregates.push(a),
                Err(e) => failures.push(Failure {
                    input: format!("{policy}/{}", scenario.label()),
                    error: e.to_string(),
                }),
            }
        }
    }

    let out = spec.output_path();
    for s in &sessions {
        let scenario = Scenario {
            buffer_s: s.report.buffer_capacity_s,
            critical_s: s.report.critical_threshold_s,
        };
        let path = out
            .join("logs")
            .join(s.report.policy.as_str())
            .join(scenario.label())
            .join(format!("{}.jsonl", s.trace));
        write_file(&path, &s.log.to_jsonl())?;
    }
    write_file(&out.join("sessions.csv"), &sessions_csv(&sessions))?;
    write_file(&out.join("aggregates.csv"), &aggregates_csv(&aggregates))?;
    write_file(&out.join("table.txt"), &emit_comparison_table(&aggregates))?;
    type Metric = fn(&AggregateReport) -> f64;
    let figures: [(&str, Metric); 4] = [
        ("rebuffering", |a| a.rebuffering_s),
        ("instability", |a| a.instability),
        ("ssim", |a| a.mean_ssim),
        ("bitrate", |a| a.mean_bitrate_kbps),
    ];
    for (name, metric) in figures {
        write_file(
            &out.join("figures").join(format!("{name}.csv")),
            &figure_csv(&aggregates, &spec.policies, &spec.scenarios, metric),
        )?;
    }
    write_file(&out.join("failures.csv"), &failures_csv(&failures))?;

    Ok(BatchSummary {
        output_dir: out,
        sessions,
        aggregates,
        failures,
    })
}
