//! Config-driven pipeline runs: corpus, teachers, students over a grid of
//! variants and seeds, retrieval reports, and a hash manifest of every
//! artifact written.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{generate_synthetic, load_corpus, save_corpus, Corpus, Split, SyntheticSpec, ENGLISH};
use crate::distill::TeacherEnsemble;
use crate::error::{Error, Result};
use crate::eval::{evaluate_retrieval, render_table, RetrievalReport, RunRecall, DEFAULT_KS};
use crate::model::ModelParams;
use crate::train::{train_student, train_teachers, TrainConfig, TrainOutcome};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CORPUS_FILE: &str = "corpus.c2kc";
pub const SUMMARY_FILE: &str = "summary.csv";
/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "C2KD_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Corpus { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    #[serde(default)]
    pub validation: usize,
    pub test: usize,
    /// Shuffle before splitting; records are taken in corpus order when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherMember {
    pub seed: u64,
    /// Overrides `teachers.train.model.embed_dim` for this teacher.
    #[serde(default)]
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSetup {
    #[serde(default)]
    pub train: TrainConfig,
    pub members: Vec<TeacherMember>,
}

impl TeacherSetup {
    /// One NCE configuration per member, trained on English pairs.
    pub fn member_configs(&self) -> Vec<TrainConfig> {
        self.members
            .iter()
            .map(|m| {
                let mut cfg = self.train.clone();
                cfg.seed = m.seed;
                cfg.alpha = 1.0;
                cfg.languages = vec![ENGLISH.to_string()];
                if let Some(d) = m.embed_dim {
                    cfg.model.embed_dim = d;
                }
                cfg
            })
            .collect()
    }
}

/// A named JSON merge patch applied to the base student configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default = "empty_object")]
    pub overrides: Value,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

fn default_variants() -> Vec<Variant> {
    vec![Variant {
        name: "default".into(),
        overrides: empty_object(),
    }]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    /// Defaults to the student's languages.
    #[serde(default)]
    pub languages: Option<Vec<String>>,
}

fn default_ks() -> Vec<usize> {
    DEFAULT_KS.to_vec()
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: default_ks(),
            languages: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub data: DataSource,
    pub split: SplitConfig,
    pub teachers: TeacherSetup,
    #[serde(default)]
    pub student: TrainConfig,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eval: EvalConfig,
}

/// Deserializes `value`, reporting the failing field as a dotted path
/// under `prefix`.
fn from_value_at<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        Error::config(path, e.into_inner().to_string())
    })
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("$", e.to_string()))?;
        match value.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::config(
                    "schema_version",
                    format!("unsupported schema version {v}, expected {SCHEMA_VERSION}"),
                ))
            }
            None => return Err(Error::config("schema_version", "missing or not an integer")),
        }
        let config: Self = from_value_at(value, "")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate().map_err(|e| Error::config("data.synthetic", e.to_string()))?;
        }
        if self.split.train == 0 || self.split.test == 0 {
            return Err(Error::config("split", "train and test splits must be non-empty"));
        }
        if self.teachers.members.is_empty() {
            return Err(Error::config("teachers.members", "at least one teacher is required"));
        }
        for (i, cfg) in self.teachers.member_configs().iter().enumerate() {
            cfg.validate().map_err(|e| Error::config(format!("teachers.members[{i}]"), e.to_string()))?;
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "at least one variant is required"));
        }
        let mut names = BTreeSet::new();
        for (i, v) in self.variants.iter().enumerate() {
            if !valid_name(&v.name) {
                return Err(Error::config(
                    format!("variants[{i}].name"),
                    format!("`{}` must be non-empty and use only [A-Za-z0-9._-]", v.name),
                ));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::config(format!("variants[{i}].name"), format!("duplicate variant `{}`", v.name)));
            }
            self.variant_config(i)?;
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::config("eval.ks", "K values must be at least 1"));
        }
        Ok(())
    }

    /// Student configuration of variant `index` with the merge patch applied.
    pub fn variant_config(&self, index: usize) -> Result<TrainConfig> {
        let variant = self
            .variants
            .get(index)
            .ok_or_else(|| Error::Parameter(format!("no variant {index}")))?;
        let mut value = serde_json::to_value(&self.student)?;
        json_patch::merge(&mut value, &variant.overrides);
        let cfg: TrainConfig = from_value_at(value, &format!("variants[{index}].overrides"))?;
        cfg.validate()
            .map_err(|e| Error::config(format!("variants[{index}] ({})", variant.name), e.to_string()))?;
        Ok(cfg)
    }

    pub fn eval_languages(&self) -> Vec<String> {
        self.eval.languages.clone().unwrap_or_else(|| self.student.languages.clone())
    }

    /// Keeps only the listed seeds, in the given order.
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self> {
        self.seeds = seeds;
        self.validate()?;
        Ok(self)
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenData,
    TrainTeachers,
    TrainStudent,
    Evaluate,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainTeachers => "train-teachers",
            Stage::TrainStudent => "train-student",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// One hashed artifact, path relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub stages: Vec<Stage>,
    pub complete: bool,
    pub error: Option<String>,
    pub artifacts: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join(MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

impl Manifest {
    /// Hashes every file under `out_dir` except the manifest itself.
    pub fn scan(out_dir: &Path, config_sha256: String, stages: Vec<Stage>, error: Option<String>) -> Result<Self> {
        let mut files = Vec::new();
        collect_files(out_dir, out_dir, &mut files)?;
        let mut artifacts = files
            .iter()
            .map(|p| {
                let bytes = fs::read(p)?;
                Ok(ManifestEntry {
                    path: relative(out_dir, p),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self {
            config_sha256,
            stages,
            complete: error.is_none(),
            error,
            artifacts,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(out_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(out_dir.join(MANIFEST_FILE))?)?)
    }

    /// Re-hashes every listed artifact; returns the paths that are missing or
    /// differ.
    pub fn verify(&self, out_dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|a| match fs::read(out_dir.join(&a.path)) {
                Ok(bytes) => sha256_hex(&bytes) != a.sha256 || bytes.len() as u64 != a.bytes,
                Err(_) => true,
            })
            .map(|a| a.path.clone())
            .collect()
    }
}

/// Worker count: the requested jobs, or every available core, capped by
/// `C2KD_THREADS` when set.
pub fn worker_count(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(available).max(1);
    if let Some(cap) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        n = n.min(cap.max(1));
    }
    n
}

/// Everything a run produced, for callers that inspect results directly.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub teacher_report: Option<RetrievalReport>,
    /// `(variant name, report over seeds)` in config order.
    pub reports: Vec<(String, RetrievalReport)>,
}

impl ExperimentOutcome {
    pub fn report(&self, variant: &str) -> Option<&RetrievalReport> {
        self.reports.iter().find(|(n, _)| n == variant).map(|(_, r)| r)
    }

    pub fn table(&self) -> Result<String> {
        variant_table(&self.reports)
    }
}

/// Table of R@K per variant for each evaluated K.
pub fn variant_table(reports: &[(String, RetrievalReport)]) -> Result<String> {
    let rows: Vec<(String, &RetrievalReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    let Some((_, first)) = rows.first() else {
        return Ok(String::new());
    };
    let mut out = String::new();
    for &k in &first.ks {
        out.push_str(&render_table(&rows, k)?);
        out.push('\n');
    }
    Ok(out)
}

/// Runs a pipeline rooted at `out_dir`.
pub struct Experiment {
    config: ExperimentConfig,
    out_dir: PathBuf,
    workers: usize,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn teacher_path(out: &Path, i: usize) -> PathBuf {
    out.join("teachers").join(format!("teacher_{i}.c2km"))
}

fn cell_dir(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join("runs").join(variant).join(format!("seed_{seed}"))
}

impl Experiment {
    pub fn new(config: ExperimentConfig, out_dir: impl Into<PathBuf>, jobs: Option<usize>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            out_dir: out_dir.into(),
            workers: worker_count(jobs),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `stages` in order, then writes the manifest. On failure the
    /// manifest is still written, marked incomplete, and the error names the
    /// failing stage.
    pub fn run(&self, stages: &[Stage]) -> Result<ExperimentOutcome> {
        fs::create_dir_all(&self.out_dir)?;
        let config_json = self.config.to_json()?;
        write_text(&self.out_dir.join("config.resolved.json"), &config_json)?;
        let config_hash = sha256_hex(config_json.as_bytes());

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))?;
        let mut stages = stages.to_vec();
        stages.sort();
        stages.dedup();

        let mut state = RunState::default();
        let mut done = Vec::new();
        let mut failure = None;
        for &stage in &stages {
            match pool.install(|| self.run_stage(stage, &mut state)) {
                Ok(()) => done.push(stage),
                Err(e) => {
                    failure = Some(Error::stage(stage.label(), e));
                    break;
                }
            }
        }
        let manifest = Manifest::scan(&self.out_dir, config_hash, done, failure.as_ref().map(|e| e.to_string()))?;
        manifest.write(&self.out_dir)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(ExperimentOutcome {
                manifest,
                teacher_report: state.teacher_report,
                reports: state.reports,
            }),
        }
    }

    fn run_stage(&self, stage: Stage, state: &mut RunState) -> Result<()> {
        match stage {
            Stage::GenData => state.data(self).map(|_| ()),
            Stage::TrainTeachers => self.stage_teachers(state),
            Stage::TrainStudent => self.stage_students(state),
            Stage::Evaluate => self.stage_evaluate(state),
        }
    }

    /// Materializes the corpus from the config and writes it to the output.
    fn corpus(&self) -> Result<Corpus> {
        let corpus = match &self.config.data {
            DataSource::Synthetic(spec) => generate_synthetic(spec)?,
            DataSource::Corpus { path } => load_corpus(path)?,
        };
        save_corpus(&corpus, self.out_dir.join(CORPUS_FILE))?;
        Ok(corpus)
    }

    fn split(&self, corpus: &Corpus) -> Result<Split> {
        let s = &self.config.split;
        Split::by_counts(corpus, s.train, s.validation, s.test, s.seed)
    }

    fn stage_teachers(&self, state: &mut RunState) -> Result<()> {
        let (corpus, split) = state.data(self)?;
        let configs = self.config.teachers.member_configs();
        let (ensemble, outcomes) = train_teachers(corpus, split, &configs, self.config.student.pooler)?;
        for (i, (model, outcome)) in ensemble.teachers().iter().zip(&outcomes).enumerate() {
            let path = teacher_path(&self.out_dir, i);
            fs::create_dir_all(path.parent().expect("teacher path has a parent"))?;
            model.save(&path)?;
            write_text(&path.with_extension("loss.csv"), &outcome.history_csv())?;
        }
        let report = evaluate_retrieval(
            ensemble.teachers(),
            corpus,
            &split.test,
            &[ENGLISH.to_string()],
            &self.config.eval.ks,
        )?;
        write_text(&self.out_dir.join("teachers").join("report.csv"), &report.to_csv())?;
        state.teacher_report = Some(report);
        state.teachers = Some(ensemble);
        Ok(())
    }

    /// Loads teacher checkpoints from the output directory.
    fn load_teachers(&self) -> Result<TeacherEnsemble> {
        let teachers = (0..self.config.teachers.members.len())
            .map(|i| {
                let path = teacher_path(&self.out_dir, i);
                ModelParams::load(&path).map_err(|e| {
                    Error::Input(format!("cannot load teacher {} (run train-teachers first): {e}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TeacherEnsemble::new(teachers, self.config.student.pooler)
    }

    fn cells(&self) -> Result<Vec<(usize, String, u64, TrainConfig)>> {
        let mut cells = Vec::new();
        for (vi, v) in self.config.variants.iter().enumerate() {
            let base = self.config.variant_config(vi)?;
            for &seed in &self.config.seeds {
                cells.push((vi, v.name.clone(), seed, TrainConfig { seed, ..base.clone() }));
            }
        }
        Ok(cells)
    }

    fn stage_students(&self, state: &mut RunState) -> Result<()> {
        if state.teachers.is_none() {
            state.teachers = Some(self.load_teachers()?);
        }
        state.data(self)?;
        let (corpus, split) = state.data.as_ref().expect("data loaded above");
        let teachers = state.teachers.as_ref().expect("teachers loaded above");
        let cells = self.cells()?;
        let outcomes = cells
            .par_iter()
            .map(|(_, name, seed, cfg)| {
                let ensemble = teachers.with_pooler(cfg.pooler);
                let outcome = train_student(corpus, split, &ensemble, cfg).map_err(|e| Error::Training {
                    context: format!("variant `{name}` seed {seed}"),
                    source: Box::new(e),
                })?;
                let dir = cell_dir(&self.out_dir, name, *seed);
                fs::create_dir_all(&dir)?;
                outcome.params.save(dir.join("student.c2km"))?;
                write_text(&dir.join("loss.csv"), &outcome.history_csv())?;
                if !outcome.validation.is_empty() {
                    let mut csv = String::from("epoch,mean_r1\n");
                    for v in &outcome.validation {
                        let _ = writeln!(csv, "{},{}", v.epoch, v.mean_r1);
                    }
                    write_text(&dir.join("validation.csv"), &csv)?;
                }
                Ok(outcome)
            })
            .collect::<Result<Vec<TrainOutcome>>>()?;
        state.students = Some(outcomes.into_iter().map(|o| o.params).collect());
        Ok(())
    }

    fn stage_evaluate(&self, state: &mut RunState) -> Result<()> {
        let cells = self.cells()?;
        let students = match state.students.take() {
            Some(s) => s,
            None => cells
                .iter()
                .map(|(_, name, seed, _)| {
                    let path = cell_dir(&self.out_dir, name, *seed).join("student.c2km");
                    ModelParams::load(&path).map_err(|e| {
                        Error::Input(format!("cannot load student {} (run train-student first): {e}", path.display()))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let (corpus, split) = state.data(self)?;
        let languages = self.config.eval_languages();
        let ks = &self.config.eval.ks;
        let recalls = students
            .par_iter()
            .map(|m| crate::eval::evaluate_model(m, corpus, &split.test, &languages, ks))
            .collect::<Result<Vec<_>>>()?;

        let mut reports = Vec::new();
        for (vi, variant) in self.config.variants.iter().enumerate() {
            let runs = cells
                .iter()
                .zip(&recalls)
                .filter(|((i, ..), _)| *i == vi)
                .map(|((_, _, seed, _), recall)| RunRecall {
                    label: format!("seed_{seed}"),
                    recall: recall.clone(),
                })
                .collect();
            let report = RetrievalReport::from_runs(ks.clone(), languages.clone(), runs)?;
            write_text(
                &self.out_dir.join("runs").join(&variant.name).join("report.csv"),
                &report.to_csv(),
            )?;
            reports.push((variant.name.clone(), report));
        }
        write_text(&self.out_dir.join(SUMMARY_FILE), &self.summary_csv(&reports)?)?;
        write_text(&self.out_dir.join("summary.txt"), &variant_table(&reports)?)?;
        state.students = Some(students);
        state.reports = reports;
        Ok(())
    }

    /// `variant,objective,alpha,pooler,teacher_input,language,k,mean,std`,
    /// with `avg` and `avg_non_en` pseudo-languages per variant.
    fn summary_csv(&self, reports: &[(String, RetrievalReport)]) -> Result<String> {
        let mut out = String::from("variant,objective,alpha,pooler,teacher_input,language,k,mean,std\n");
        for (vi, (name, report)) in reports.iter().enumerate() {
            let cfg = self.config.variant_config(vi)?;
            let objective = if cfg.alpha >= 1.0 { "none" } else { cfg.objective.label() };
            let teacher_input = serde_json::to_value(cfg.teacher_input)?;
            let prefix = format!(
                "{name},{objective},{},{},{}",
                cfg.alpha,
                cfg.pooler.label(),
                teacher_input.as_str().unwrap_or_default()
            );
            for (l, lang) in report.languages.iter().enumerate() {
                for (ki, k) in report.ks.iter().enumerate() {
                    let _ = writeln!(out, "{prefix},{lang},{k},{},{}", report.mean[l][ki], report.std[l][ki]);
                }
            }
            for &k in &report.ks {
                let _ = writeln!(out, "{prefix},avg,{k},{},", report.average(k)?);
                if report.languages.iter().any(|l| l != ENGLISH) {
                    let _ = writeln!(out, "{prefix},avg_non_en,{k},{},", report.average_excluding(k, &[ENGLISH])?);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct RunState {
    data: Option<(Corpus, Split)>,
    teachers: Option<TeacherEnsemble>,
    students: Option<Vec<ModelParams>>,
    teacher_report: Option<RetrievalReport>,
    reports: Vec<(String, RetrievalReport)>,
}

impl RunState {
    fn data(&mut self, exp: &Experiment) -> Result<(&Corpus, &Split)> {
        if self.data.is_none() {
            let corpus = exp.corpus()?;
            let split = exp.split(&corpus)?;
            self.data = Some((corpus, split));
        }
        let (c, s) = self.data.as_ref().expect("initialized above");
        Ok((c, s))
    }
}
