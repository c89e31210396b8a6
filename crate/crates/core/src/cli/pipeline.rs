//! The `run` pipeline: simulate or ingest, then inject, detect, score with an
//! LLM and evaluate, recording every artifact hash in `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detectors::{run_detector, DetectorParams, Method};
use crate::error::{Error, Result};
use crate::ingest::{ingest_path, IngestOptions, PoiMap, RawFormat, StayPointParams};
use crate::inject::{inject_imposter, InjectConfig};
use crate::io::{self, sha256_hex};
use crate::llm::client::{LlmClient, LlmEndpointConfig, Provider};
use crate::llm::prompt::{PromptMode, TemplateVersion};
use crate::llm::{oracle_client, run_llm_detection};
use crate::model::{Dataset, LabelSet};
use crate::scores::ScoreTable;
use crate::simulator::{simulate, SimConfig};

pub const MANIFEST: &str = "manifest.json";
pub const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub input: PathBuf,
    pub format: String,
    pub dist_threshold_m: f64,
    pub time_threshold_s: i64,
    pub min_records: usize,
    pub poi_map: Option<PathBuf>,
}

impl Default for IngestSection {
    fn default() -> Self {
        let stay = StayPointParams::default();
        IngestSection {
            input: PathBuf::new(),
            format: "plt".into(),
            dist_threshold_m: stay.dist_threshold_m,
            time_threshold_s: stay.time_threshold_s,
            min_records: 50,
            poi_map: None,
        }
    }
}

impl IngestSection {
    pub fn options(&self) -> Result<IngestOptions> {
        let poi = match &self.poi_map {
            Some(p) => PoiMap::from_jsonl(&io::read_to_string(p)?)?,
            None => PoiMap::default(),
        };
        Ok(IngestOptions {
            format: self.format.parse::<RawFormat>()?,
            stay: StayPointParams { dist_threshold_m: self.dist_threshold_m, time_threshold_s: self.time_threshold_s },
            min_records: self.min_records,
            poi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectSection {
    pub pairs: usize,
    pub switch_fraction: f64,
    pub seed: u64,
}

impl Default for InjectSection {
    fn default() -> Self {
        let d = InjectConfig::default();
        InjectSection { pairs: d.n_outlier_pairs, switch_fraction: d.switch_fraction, seed: d.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub methods: Vec<String>,
    pub params: DetectorParams,
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection { methods: Method::ALL.iter().map(|m| m.to_string()).collect(), params: DetectorParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub modes: Vec<String>,
    pub template: String,
    pub endpoint: LlmEndpointConfig,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            modes: vec!["separate".into()],
            template: TemplateVersion::default().as_str().into(),
            endpoint: LlmEndpointConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub top_k: Vec<usize>,
    /// Labels to evaluate against; defaults to the labels produced upstream.
    pub labels: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { top_k: vec![10, 25, 100], labels: None }
    }
}

/// Whole-run configuration. A stage runs iff its section is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides the seeds of simulate, inject, traod and the networks.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub simulate: Option<SimConfig>,
    pub ingest: Option<IngestSection>,
    pub inject: Option<InjectSection>,
    pub detect: Option<DetectSection>,
    pub llm: Option<LlmSection>,
    pub eval: Option<EvalSection>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.simulate, &self.ingest) {
            (Some(_), Some(_)) => return Err(Error::Config("configure either [simulate] or [ingest], not both".into())),
            (None, None) => return Err(Error::Config("a run needs a [simulate] or [ingest] section".into())),
            _ => {}
        }
        if let Some(s) = &self.simulate {
            s.validate()?;
        }
        if let Some(d) = &self.detect {
            for m in &d.methods {
                m.parse::<Method>()?;
            }
            d.params.traod.validate()?;
        }
        if let Some(l) = &self.llm {
            for m in &l.modes {
                m.parse::<PromptMode>()?;
            }
            l.template.parse::<TemplateVersion>()?;
            l.endpoint.validate()?;
        }
        Ok(())
    }

    /// Pushes the global seed into every seeded stage.
    pub fn apply_seed(&mut self) {
        let Some(seed) = self.seed else { return };
        if let Some(s) = &mut self.simulate {
            s.seed = seed;
        }
        if let Some(i) = &mut self.inject {
            i.seed = seed;
        }
        if let Some(d) = &mut self.detect {
            d.params.traod.seed = seed;
            d.params.nn.seed = seed;
        }
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("run config serializes");
        sha256_hex(text.as_bytes())[..16].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Path (relative to the output directory when inside it) -> sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Outputs depend on a remote endpoint and are not expected to reproduce.
    pub network: bool,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub status: String,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    /// Output hashes of every stage that does not talk to a remote endpoint.
    pub fn reproducible_hashes(&self) -> BTreeMap<String, String> {
        self.stages.iter().filter(|s| !s.network).flat_map(|s| s.outputs.clone()).collect()
    }
}

/// Hash of a file, or of every file below a directory in path order.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = walkdir::WalkDir::new(path)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .collect();
        files.sort();
        let mut buf = String::new();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            buf.push_str(&format!("{}\0{}\n", rel.display(), hash_path(&f)?));
        }
        Ok(sha256_hex(buf.as_bytes()))
    } else {
        Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
    }
}

struct Stage<'a> {
    out_dir: &'a Path,
    rec: StageRecord,
    written: Vec<PathBuf>,
}

impl<'a> Stage<'a> {
    fn new(out_dir: &'a Path, name: &str) -> Self {
        let rec = StageRecord {
            name: name.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            network: false,
            wall_ms: 0,
            error: None,
        };
        Stage { out_dir, rec, written: Vec::new() }
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(self.out_dir).unwrap_or(path).display().to_string()
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let h = hash_path(path)?;
        self.rec.inputs.insert(self.key(path), h);
        Ok(())
    }

    fn output(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(rel);
        self.written.push(path.clone());
        io::write_file(&path, bytes)?;
        self.rec.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    fn dataset(&mut self, rel: &str, ds: &Dataset) -> Result<PathBuf> {
        let path = self.output(rel, io::encode_dataset(ds).as_bytes())?;
        let meta = serde_json::to_string_pretty(&ds.meta)? + "\n";
        let meta_rel = self.key(&io::meta_path(&path));
        self.output(&meta_rel, meta.as_bytes())?;
        Ok(path)
    }

    fn read_dataset(&mut self, path: &Path) -> Result<Dataset> {
        self.input(path)?;
        let mp = io::meta_path(path);
        if mp.exists() {
            self.input(&mp)?;
        }
        io::read_dataset(path)
    }

    fn read_labels(&mut self, path: &Path) -> Result<LabelSet> {
        self.input(path)?;
        io::read_labels(path)
    }

    /// Moves everything this stage wrote aside with the `.partial` suffix.
    fn mark_partial(&self) {
        for p in &self.written {
            if p.exists() {
                let mut name = p.as_os_str().to_owned();
                name.push(PARTIAL_SUFFIX);
                let _ = std::fs::rename(p, PathBuf::from(name));
            }
        }
    }
}

/// Paths produced so far.
#[derive(Default)]
struct State {
    dataset: Option<PathBuf>,
    labels: Option<PathBuf>,
    scores: Vec<PathBuf>,
    report_text: Option<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    /// Plain-text report of the eval stage, when it ran.
    pub report_text: Option<String>,
}

/// Runs every configured stage in order inside `out_dir`. On failure the
/// failing stage's outputs and the manifest get a `.partial` suffix and the
/// error names the stage.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.apply_seed();
    let config_hash = cfg.hash();
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash.clone(),
        seed: cfg.seed,
        status: "ok".into(),
        stages: Vec::new(),
    };
    let mut state = State::default();

    type StageFn = fn(&RunConfig, &str, &mut Stage, &mut State) -> Result<()>;
    let stages: [(&str, bool, StageFn); 6] = [
        ("simulate", cfg.simulate.is_some(), stage_simulate),
        ("ingest", cfg.ingest.is_some(), stage_ingest),
        ("inject", cfg.inject.is_some(), stage_inject),
        ("detect", cfg.detect.is_some(), stage_detect),
        ("llm", cfg.llm.is_some(), stage_llm),
        ("eval", cfg.eval.is_some(), stage_eval),
    ];
    for (name, enabled, f) in stages {
        if !enabled {
            continue;
        }
        log::info!("stage {name} started");
        let mut stage = Stage::new(out_dir, name);
        let started = Instant::now();
        let res = f(&cfg, &config_hash, &mut stage, &mut state);
        stage.rec.wall_ms = started.elapsed().as_millis() as u64;
        if let Err(e) = res {
            stage.mark_partial();
            stage.rec.error = Some(e.to_string());
            manifest.status = format!("failed at {name}");
            manifest.stages.push(stage.rec);
            let text = serde_json::to_string_pretty(&manifest)? + "\n";
            io::write_file(&out_dir.join(format!("{MANIFEST}{PARTIAL_SUFFIX}")), text.as_bytes())?;
            return Err(Error::Stage { stage: name.into(), source: Box::new(e) });
        }
        log::info!("stage {name} finished in {} ms", stage.rec.wall_ms);
        manifest.stages.push(stage.rec);
    }
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    io::write_file(&out_dir.join(MANIFEST), text.as_bytes())?;
    Ok(RunOutcome { manifest, report_text: state.report_text })
}

fn stage_simulate(cfg: &RunConfig, config_hash: &str, st: &mut Stage, state: &mut State) -> Result<()> {
    let out = simulate(cfg.simulate.as_ref().expect("enabled"))?;
    let mut ds = out.dataset;
    ds.meta.insert("run_config_hash".into(), config_hash.into());
    state.dataset = Some(st.dataset("simulate/dataset.jsonl", &ds)?);
    state.labels = Some(st.output("simulate/labels.jsonl", io::encode_labels(&out.labels).as_bytes())?);
    Ok(())
}

fn stage_ingest(cfg: &RunConfig, config_hash: &str, st: &mut Stage, state: &mut State) -> Result<()> {
    let sec = cfg.ingest.as_ref().expect("enabled");
    st.input(&sec.input)?;
    if let Some(p) = &sec.poi_map {
        st.input(p)?;
    }
    let mut ds = ingest_path(&sec.input, &sec.options()?)?;
    ds.meta.insert("run_config_hash".into(), config_hash.into());
    state.dataset = Some(st.dataset("ingest/dataset.jsonl", &ds)?);
    state.labels = None;
    Ok(())
}

fn stage_inject(cfg: &RunConfig, config_hash: &str, st: &mut Stage, state: &mut State) -> Result<()> {
    let sec = cfg.inject.as_ref().expect("enabled");
    let ds = st.read_dataset(state.dataset.as_ref().expect("dataset stage ran"))?;
    let icfg = InjectConfig { n_outlier_pairs: sec.pairs, switch_fraction: sec.switch_fraction, seed: sec.seed };
    let (mut out, labels) = inject_imposter(&ds, &icfg)?;
    out.meta.insert("run_config_hash".into(), config_hash.into());
    state.dataset = Some(st.dataset("inject/dataset.jsonl", &out)?);
    state.labels = Some(st.output("inject/labels.jsonl", io::encode_labels(&labels).as_bytes())?);
    Ok(())
}

/// Dataset and labels of the current state; labels default to empty.
fn load_inputs(st: &mut Stage, state: &State) -> Result<(Dataset, LabelSet)> {
    let ds = st.read_dataset(state.dataset.as_ref().expect("dataset stage ran"))?;
    let labels = match &state.labels {
        Some(p) => st.read_labels(p)?,
        None => LabelSet::default(),
    };
    Ok((ds, labels))
}

fn stage_detect(cfg: &RunConfig, _: &str, st: &mut Stage, state: &mut State) -> Result<()> {
    let sec = cfg.detect.as_ref().expect("enabled");
    let (ds, labels) = load_inputs(st, state)?;
    for m in &sec.methods {
        let method: Method = m.parse()?;
        let table = run_detector(method, &ds, &labels, &sec.params)?;
        log::info!("{method}: scored {} agents, omitted {}", table.len(), table.omitted.len());
        let path = st.output(&format!("detect/{method}.scores.jsonl"), table.to_jsonl().as_bytes())?;
        state.scores.push(path);
    }
    Ok(())
}

fn stage_llm(cfg: &RunConfig, _: &str, st: &mut Stage, state: &mut State) -> Result<()> {
    let sec = cfg.llm.as_ref().expect("enabled");
    let (ds, labels) = load_inputs(st, state)?;
    let version: TemplateVersion = sec.template.parse()?;
    st.rec.network = matches!(sec.endpoint.provider, Provider::Openai | Provider::Anthropic);
    for m in &sec.modes {
        let mode: PromptMode = m.parse()?;
        let client = match sec.endpoint.provider {
            Provider::OracleMock => {
                if labels.is_empty() {
                    return Err(Error::Config("the oracle mock needs labels".into()));
                }
                oracle_client(sec.endpoint.clone(), &ds, &labels, mode, version)?
            }
            _ => LlmClient::from_config(sec.endpoint.clone())?,
        };
        let run = run_llm_detection(&ds, &labels, mode, version, &client)?;
        let cached = run.answers.iter().filter(|a| a.cached).count();
        log::info!(
            "llm {mode}: {} answers ({cached} cached), {} network calls",
            run.answers.len(),
            client.network_calls()
        );
        let mut answers = String::new();
        for a in &run.answers {
            answers.push_str(&serde_json::to_string(a)?);
            answers.push('\n');
        }
        st.output(&format!("llm/llm-{mode}.answers.jsonl"), answers.as_bytes())?;
        let path = st.output(&format!("llm/llm-{mode}.scores.jsonl"), run.table.to_jsonl().as_bytes())?;
        state.scores.push(path);
    }
    Ok(())
}

fn stage_eval(cfg: &RunConfig, _: &str, st: &mut Stage, state: &mut State) -> Result<()> {
    let sec = cfg.eval.as_ref().expect("enabled");
    let labels_path = sec
        .labels
        .clone()
        .or_else(|| state.labels.clone())
        .ok_or_else(|| Error::Config("eval needs labels, but no labels file was produced or configured".into()))?;
    if !labels_path.exists() {
        return Err(Error::Config(format!("labels file {} does not exist", labels_path.display())));
    }
    let labels = st.read_labels(&labels_path)?;
    let mut tables = Vec::new();
    for p in &state.scores {
        st.input(p)?;
        tables.push(ScoreTable::read(p)?);
    }
    let report = crate::eval::make_report(&tables, &labels, &sec.top_k)?;
    let text = report.render_text();
    st.output("eval/report.txt", text.as_bytes())?;
    st.output("eval/report.csv", report.render_csv().as_bytes())?;
    state.report_text = Some(text);
    Ok(())
}
