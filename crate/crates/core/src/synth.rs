//! Three-step synthetic asset generation: taxonomy-driven text expansion,
//! image generation with quality control, and image-to-3D reconstruction,
//! orchestrated against pluggable backends.
//!
//! Real text/image/mesh models are remote services; the deterministic
//! [`MockBackend`] makes the whole pipeline testable offline, including retry
//! and QC behavior. Jobs run sequentially in a fixed order and the ledger
//! carries no wall-clock state, so a run is byte-reproducible.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::Engine;
use image::RgbaImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CategoryPath, Taxonomy};
use crate::filtering::{apply_full_filters, compute_quality_metrics, FilterThresholds, ThinConfig};
use crate::mesh::TriangleMesh;
use crate::watertight::{watertight_pipeline, WatertightConfig};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("prompt count must be at least 1")]
    ZeroPrompts,
    #[error("leaf {0} not in taxonomy")]
    UnknownLeaf(String),
    #[error("backend failed after {attempts} attempts: {message}")]
    BackendExhausted { attempts: u32, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Typed backend failure; retryable failures are retried up to the
/// configured budget, fatal ones abort the stage immediately.
#[derive(Debug, Clone)]
pub struct BackendError {
    pub retryable: bool,
    pub message: String,
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

/// The three generation capabilities. Every call either returns a complete
/// artifact or a typed failure; there are no partial artifacts.
pub trait BackendClient: Send + Sync {
    fn text(&self, prompt: &str) -> Result<String, BackendError>;
    fn image(&self, description: &str) -> Result<RgbaImage, BackendError>;
    fn mesh(&self, image: &RgbaImage) -> Result<TriangleMesh, BackendError>;
}

/// Prompt template implementing the three description goals: physical
/// plausibility, concrete visual attributes and bounded imaginative
/// variation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: "Describe one physically plausible {leaf} as a real product. \
                   Give concrete visual details: overall shape, materials, colors \
                   and size proportions. This is variation {index}: vary the form \
                   and material imaginatively while staying recognizable as a {leaf}."
                .into(),
        }
    }
}

impl PromptTemplate {
    pub fn instantiate(&self, leaf: &str, index: u32) -> String {
        self.text
            .replace("{leaf}", leaf)
            .replace("{index}", &index.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSpec {
    pub sub_category: String,
    pub description: String,
    pub diversity_index: u32,
}

#[derive(Debug, Clone)]
pub struct ExpandedPrompt {
    pub spec: PromptSpec,
    /// Backend calls spent on this prompt (1 = first try succeeded).
    pub attempts: u32,
}

fn call_with_retry<T>(
    mut f: impl FnMut() -> Result<T, BackendError>,
    max_retries: u32,
) -> Result<(T, u32), SynthError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match f() {
            Ok(v) => return Ok((v, attempts)),
            Err(e) if e.retryable && attempts < max_retries => continue,
            Err(e) => {
                return Err(SynthError::BackendExhausted {
                    attempts,
                    message: e.message,
                })
            }
        }
    }
}

/// Generate `n` diverse descriptions for one taxonomy leaf.
pub fn expand_prompts(
    taxonomy: &Taxonomy,
    leaf: &CategoryPath,
    n: usize,
    template: &PromptTemplate,
    backend: &dyn BackendClient,
    max_retries: u32,
) -> Result<Vec<ExpandedPrompt>, SynthError> {
    if n == 0 {
        return Err(SynthError::ZeroPrompts);
    }
    if !taxonomy.contains(leaf) {
        return Err(SynthError::UnknownLeaf(leaf.to_string()));
    }
    let mut out = Vec::with_capacity(n);
    for index in 0..n as u32 {
        let prompt = template.instantiate(&leaf.fine, index);
        let (description, attempts) = call_with_retry(|| backend.text(&prompt), max_retries)?;
        out.push(ExpandedPrompt {
            spec: PromptSpec {
                sub_category: leaf.fine.clone(),
                description,
                diversity_index: index,
            },
            attempts,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcFailure {
    DirtyBackground,
    IncompleteObject,
    OffCenter,
    TooSmall,
    TooLarge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcReport {
    pub pass: bool,
    pub reasons: Vec<QcFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcConfig {
    /// Max per-channel standard deviation of the border ring.
    pub border_sigma_max: f64,
    /// Foreground bbox center must be within this fraction of the image
    /// center (0.1 = central 20% band).
    pub center_tolerance: f64,
    pub min_area_fraction: f64,
    pub max_area_fraction: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            border_sigma_max: 8.0,
            center_tolerance: 0.1,
            min_area_fraction: 0.15,
            max_area_fraction: 0.75,
        }
    }
}

/// Heuristic screening of a generated image: clean background, complete
/// object, sane position and framing.
pub fn image_qc(img: &RgbaImage, config: &QcConfig) -> QcReport {
    let (w, h) = img.dimensions();
    let mut reasons = Vec::new();

    // border-ring statistics (rgb only)
    let mut border: Vec<[f64; 3]> = Vec::new();
    for x in 0..w {
        for y in [0, h - 1] {
            let p = img.get_pixel(x, y);
            border.push([p[0] as f64, p[1] as f64, p[2] as f64]);
        }
    }
    for y in 1..h.saturating_sub(1) {
        for x in [0, w - 1] {
            let p = img.get_pixel(x, y);
            border.push([p[0] as f64, p[1] as f64, p[2] as f64]);
        }
    }
    let n = border.len().max(1) as f64;
    let mut sigma_max = 0.0f64;
    for c in 0..3 {
        let mean = border.iter().map(|p| p[c]).sum::<f64>() / n;
        let var = border.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / n;
        sigma_max = sigma_max.max(var.sqrt());
    }
    if sigma_max > config.border_sigma_max {
        reasons.push(QcFailure::DirtyBackground);
    }

    // foreground: alpha when informative, otherwise difference from the
    // border's mean color
    let uses_alpha = img.pixels().any(|p| p[3] < 255);
    let mean_border = {
        let mut m = [0.0; 3];
        for p in &border {
            for c in 0..3 {
                m[c] += p[c];
            }
        }
        m.map(|v| v / n)
    };
    let is_fg = |x: u32, y: u32| -> bool {
        let p = img.get_pixel(x, y);
        if uses_alpha {
            p[3] > 0
        } else {
            let d: f64 = (0..3)
                .map(|c| (p[c] as f64 - mean_border[c]).abs())
                .sum();
            d > 30.0
        }
    };
    let mut bbox: Option<(u32, u32, u32, u32)> = None;
    let mut fg_count = 0u64;
    for y in 0..h {
        for x in 0..w {
            if is_fg(x, y) {
                fg_count += 1;
                bbox = Some(match bbox {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    match bbox {
        None => reasons.push(QcFailure::TooSmall),
        Some((x0, y0, x1, y1)) => {
            if x0 == 0 || y0 == 0 || x1 == w - 1 || y1 == h - 1 {
                reasons.push(QcFailure::IncompleteObject);
            }
            let cx = (x0 + x1) as f64 / 2.0;
            let cy = (y0 + y1) as f64 / 2.0;
            if (cx - w as f64 / 2.0).abs() > config.center_tolerance * w as f64
                || (cy - h as f64 / 2.0).abs() > config.center_tolerance * h as f64
            {
                reasons.push(QcFailure::OffCenter);
            }
            let area_fraction = fg_count as f64 / (w as f64 * h as f64);
            if area_fraction < config.min_area_fraction {
                reasons.push(QcFailure::TooSmall);
            } else if area_fraction > config.max_area_fraction {
                reasons.push(QcFailure::TooLarge);
            }
        }
    }
    QcReport {
        pass: reasons.is_empty(),
        reasons,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStage {
    Pending,
    TextDone,
    ImageDone,
    QcDone,
    MeshDone,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationJob {
    pub job_id: String,
    pub prompt: PromptSpec,
    pub stage: JobStage,
    /// Backend attempts per stage name.
    pub attempts: BTreeMap<String, u32>,
    /// Role -> relative artifact path under the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub failure: Option<String>,
}

impl GenerationJob {
    pub fn new(job_id: impl Into<String>, prompt: PromptSpec) -> Self {
        GenerationJob {
            job_id: job_id.into(),
            prompt,
            stage: JobStage::Pending,
            attempts: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            failure: None,
        }
    }
}

/// One append-only ledger line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LedgerEvent {
    pub seq: u64,
    pub job_id: String,
    pub stage: JobStage,
    pub attempts: u32,
    pub detail: String,
}

/// Append-only JSON-lines job ledger; replaying a ledger reconstructs the
/// final stage of every job.
pub struct JobLedger {
    path: PathBuf,
    file: std::io::BufWriter<std::fs::File>,
    seq: u64,
}

impl JobLedger {
    pub fn create(path: impl AsRef<Path>) -> Result<JobLedger, SynthError> {
        let path = path.as_ref().to_path_buf();
        let file = std::fs::File::create(&path)?;
        Ok(JobLedger {
            path,
            file: std::io::BufWriter::new(file),
            seq: 0,
        })
    }

    pub fn record(
        &mut self,
        job: &GenerationJob,
        stage: JobStage,
        attempts: u32,
        detail: &str,
    ) -> Result<(), SynthError> {
        let event = LedgerEvent {
            seq: self.seq,
            job_id: job.job_id.clone(),
            stage,
            attempts,
            detail: detail.to_string(),
        };
        self.seq += 1;
        let line = serde_json::to_string(&event)?;
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Parse a ledger file back into its events.
    pub fn replay(path: impl AsRef<Path>) -> Result<Vec<LedgerEvent>, SynthError> {
        let text = std::fs::read_to_string(path)?;
        let mut events = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(line)?);
        }
        Ok(events)
    }

    /// Final stage per job implied by an event stream.
    pub fn final_stages(events: &[LedgerEvent]) -> BTreeMap<String, JobStage> {
        let mut out = BTreeMap::new();
        for e in events {
            out.insert(e.job_id.clone(), e.stage);
        }
        out
    }
}

/// Everything a job needs to run.
pub struct SynthContext<'a> {
    pub backend: &'a dyn BackendClient,
    pub watertight: &'a WatertightConfig,
    pub thresholds: &'a FilterThresholds,
    pub thin: &'a ThinConfig,
    pub qc: &'a QcConfig,
    pub max_retries: u32,
    pub out_dir: &'a Path,
}

/// Drive one job to `mesh_done` or `failed`, appending every transition to
/// the ledger. QC rejection triggers image regeneration; the produced mesh
/// must pass watertight reconstruction and the geometry filters.
pub fn run_job(
    mut job: GenerationJob,
    ctx: &SynthContext,
    ledger: &mut JobLedger,
) -> Result<GenerationJob, SynthError> {
    let job_dir = ctx.out_dir.join(&job.job_id);
    std::fs::create_dir_all(&job_dir)?;
    let rel = |name: &str| format!("{}/{}", job.job_id, name);

    // text stage
    if job.stage < JobStage::TextDone {
        std::fs::write(job_dir.join("description.txt"), &job.prompt.description)?;
        job.artifacts.insert("description".into(), rel("description.txt"));
        job.stage = JobStage::TextDone;
        job.attempts.insert("text".into(), 1);
        ledger.record(&job, JobStage::TextDone, 1, "")?;
    }

    // image stage with QC-driven regeneration
    if job.stage < JobStage::QcDone {
        let mut attempts = 0u32;
        let image = loop {
            attempts += 1;
            match ctx.backend.image(&job.prompt.description) {
                Ok(img) => {
                    let qc = image_qc(&img, ctx.qc);
                    if qc.pass {
                        break Some(img);
                    }
                    if attempts >= ctx.max_retries {
                        job.failure = Some(format!("image qc failed: {:?}", qc.reasons));
                        break None;
                    }
                }
                Err(e) if e.retryable && attempts < ctx.max_retries => continue,
                Err(e) => {
                    job.failure = Some(format!("image backend: {e}"));
                    break None;
                }
            }
        };
        job.attempts.insert("image".into(), attempts);
        match image {
            Some(img) => {
                let path = job_dir.join("image.png");
                img.save_with_format(&path, image::ImageFormat::Png)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                job.artifacts.insert("image".into(), rel("image.png"));
                job.stage = JobStage::ImageDone;
                ledger.record(&job, JobStage::ImageDone, attempts, "")?;
                job.stage = JobStage::QcDone;
                ledger.record(&job, JobStage::QcDone, attempts, "")?;
            }
            None => {
                job.stage = JobStage::Failed;
                let detail = job.failure.clone().unwrap_or_default();
                ledger.record(&job, JobStage::Failed, attempts, &detail)?;
                return Ok(job);
            }
        }
    }

    // mesh stage: generate, watertighten, filter
    if job.stage < JobStage::MeshDone {
        let img = image::open(ctx.out_dir.join(job.artifacts["image"].clone()))
            .map_err(|e| std::io::Error::other(e.to_string()))?
            .into_rgba8();
        let mut attempts = 0u32;
        let mesh = loop {
            attempts += 1;
            match ctx.backend.mesh(&img) {
                Ok(m) => break Some(m),
                Err(e) if e.retryable && attempts < ctx.max_retries => continue,
                Err(e) => {
                    job.failure = Some(format!("mesh backend: {e}"));
                    break None;
                }
            }
        };
        job.attempts.insert("mesh".into(), attempts);
        let Some(mesh) = mesh else {
            job.stage = JobStage::Failed;
            let detail = job.failure.clone().unwrap_or_default();
            ledger.record(&job, JobStage::Failed, attempts, &detail)?;
            return Ok(job);
        };
        let raw_path = job_dir.join("raw.ply");
        crate::io::save_mesh(&mesh, &raw_path).map_err(|e| std::io::Error::other(e.to_string()))?;
        job.artifacts.insert("raw".into(), rel("raw.ply"));

        match watertight_pipeline(&mesh, ctx.watertight) {
            Ok(out) => {
                let metrics = compute_quality_metrics(&out.mesh, ctx.thin)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                let verdict = apply_full_filters(&metrics, ctx.thresholds);
                if !verdict.accepted {
                    job.stage = JobStage::Failed;
                    job.failure = Some(format!("filtered: {:?}", verdict.reasons));
                    let detail = job.failure.clone().unwrap_or_default();
                    ledger.record(&job, JobStage::Failed, attempts, &detail)?;
                    return Ok(job);
                }
                let wt_path = job_dir.join("watertight.ply");
                crate::io::save_mesh(&out.mesh, &wt_path)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                job.artifacts.insert("watertight".into(), rel("watertight.ply"));
                std::fs::write(
                    job_dir.join("report.json"),
                    serde_json::to_vec_pretty(&out.report)?,
                )?;
                job.artifacts.insert("report".into(), rel("report.json"));
                job.stage = JobStage::MeshDone;
                ledger.record(&job, JobStage::MeshDone, attempts, "")?;
            }
            Err(e) => {
                job.stage = JobStage::Failed;
                job.failure = Some(format!("watertight ({}): {e}", e.stage()));
                let detail = job.failure.clone().unwrap_or_default();
                ledger.record(&job, JobStage::Failed, attempts, &detail)?;
            }
        }
    }
    Ok(job)
}

/// Per-leaf job counts and a balance score (min/max over leaves).
pub fn taxonomy_coverage(
    jobs: &[GenerationJob],
    taxonomy: &Taxonomy,
) -> (BTreeMap<String, usize>, f64) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for leaf in taxonomy.leaves() {
        counts.insert(leaf.fine.clone(), 0);
    }
    for job in jobs {
        if let Some(c) = counts.get_mut(&job.prompt.sub_category) {
            *c += 1;
        }
    }
    let populated: Vec<usize> = counts.values().copied().collect();
    let max = populated.iter().copied().max().unwrap_or(0);
    let min = populated.iter().copied().min().unwrap_or(0);
    let balance = if max == 0 { 0.0 } else { min as f64 / max as f64 };
    (counts, balance)
}

/// Run the whole synthesis pipeline over every taxonomy leaf.
pub fn run_synth_pipeline(
    taxonomy: &Taxonomy,
    per_leaf: usize,
    ctx: &SynthContext,
) -> Result<Vec<GenerationJob>, SynthError> {
    std::fs::create_dir_all(ctx.out_dir)?;
    let mut ledger = JobLedger::create(ctx.out_dir.join("jobs.ledger"))?;
    let template = PromptTemplate::default();
    let mut jobs = Vec::new();
    for leaf in taxonomy.leaves() {
        let prompts = expand_prompts(taxonomy, &leaf, per_leaf, &template, ctx.backend, ctx.max_retries)?;
        for expanded in prompts {
            let job_id = format!(
                "{}-{:02}",
                sanitize(&leaf.fine),
                expanded.spec.diversity_index
            );
            let mut job = GenerationJob::new(job_id, expanded.spec);
            job.attempts.insert("text".into(), expanded.attempts);
            let done = run_job(job, ctx, &mut ledger)?;
            jobs.push(done);
        }
    }
    Ok(jobs)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Failure script for one mock capability: fail the first `n` calls.
#[derive(Debug, Default)]
struct FailScript {
    remaining: Mutex<BTreeMap<&'static str, u32>>,
}

impl FailScript {
    fn take(&self, stage: &'static str) -> bool {
        let mut map = self.remaining.lock().unwrap();
        match map.get_mut(stage) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        }
    }
}

/// Deterministic offline backend.
///
/// Text is a pure function of the prompt; images are rendered centered disks;
/// meshes are tori whose proportions derive from the description hash.
/// Failures and bad images can be scripted for retry tests.
pub struct MockBackend {
    pub seed: u64,
    script: FailScript,
    /// Emit this many border-touching (QC-failing) images first.
    bad_images: Mutex<u32>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend {
            seed,
            script: FailScript::default(),
            bad_images: Mutex::new(0),
        }
    }

    /// Fail the first `n` calls of `stage` ("text", "image" or "mesh").
    pub fn fail_first(self, stage: &'static str, n: u32) -> Self {
        self.script.remaining.lock().unwrap().insert(stage, n);
        self
    }

    /// Emit `n` QC-failing images before good ones.
    pub fn bad_images_first(self, n: u32) -> Self {
        *self.bad_images.lock().unwrap() = n;
        self
    }

    fn hash(&self, s: &str) -> u64 {
        use sha2::Digest;
        let mut hasher = sha2::Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(s.as_bytes());
        let out = hasher.finalize();
        u64::from_le_bytes(out[..8].try_into().unwrap())
    }
}

impl BackendClient for MockBackend {
    fn text(&self, prompt: &str) -> Result<String, BackendError> {
        if self.script.take("text") {
            return Err(BackendError {
                retryable: true,
                message: "mock text failure".into(),
            });
        }
        Ok(format!("{} [sample {:016x}]", prompt, self.hash(prompt)))
    }

    fn image(&self, description: &str) -> Result<RgbaImage, BackendError> {
        if self.script.take("image") {
            return Err(BackendError {
                retryable: true,
                message: "mock image failure".into(),
            });
        }
        let size = 256u32;
        let h = self.hash(description);
        let bad = {
            let mut n = self.bad_images.lock().unwrap();
            if *n > 0 {
                *n -= 1;
                true
            } else {
                false
            }
        };
        // centered disk on a transparent background; "bad" images overflow
        // the frame so QC flags IncompleteObject
        let radius = if bad {
            size as f64 * 0.7
        } else {
            size as f64 * (0.28 + 0.06 * ((h % 97) as f64 / 97.0))
        };
        let tint = [(h % 200) as u8 + 30, ((h >> 8) % 200) as u8 + 30, ((h >> 16) % 200) as u8 + 30];
        let mut img = RgbaImage::from_pixel(size, size, image::Rgba([255, 255, 255, 0]));
        let c = size as f64 / 2.0;
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 + 0.5 - c;
                let dy = y as f64 + 0.5 - c;
                if (dx * dx + dy * dy).sqrt() <= radius {
                    img.put_pixel(x, y, image::Rgba([tint[0], tint[1], tint[2], 255]));
                }
            }
        }
        Ok(img)
    }

    fn mesh(&self, image: &RgbaImage) -> Result<TriangleMesh, BackendError> {
        if self.script.take("mesh") {
            return Err(BackendError {
                retryable: true,
                message: "mock mesh failure".into(),
            });
        }
        // derive proportions from the image content so distinct inputs give
        // distinct meshes
        let mut acc = 0u64;
        for p in image.pixels().step_by(97) {
            acc = acc.wrapping_mul(31).wrapping_add(p[0] as u64 + p[3] as u64);
        }
        let minor = 0.15 + 0.08 * ((acc % 101) as f64 / 101.0);
        Ok(crate::shapes::torus(0.6, minor, 48, 24))
    }
}

/// HTTP adapter for remote backends. POSTs JSON and expects JSON back:
/// `{prompt} -> {text}`, `{description} -> {image_b64}` (PNG),
/// `{image_b64} -> {mesh_ply_b64}`. 5xx responses are retryable, other
/// failures are fatal.
pub struct HttpBackend {
    pub text_url: String,
    pub image_url: String,
    pub mesh_url: String,
}

impl HttpBackend {
    fn post(&self, url: &str, body: serde_json::Value) -> Result<serde_json::Value, BackendError> {
        let response = ureq::post(url).send_json(body);
        match response {
            Ok(mut r) => r.body_mut().read_json().map_err(|e| BackendError {
                retryable: false,
                message: format!("bad response body: {e}"),
            }),
            Err(ureq::Error::StatusCode(code)) => Err(BackendError {
                retryable: code >= 500,
                message: format!("http status {code}"),
            }),
            Err(e) => Err(BackendError {
                retryable: true,
                message: format!("transport: {e}"),
            }),
        }
    }

    fn field(v: &serde_json::Value, name: &str) -> Result<String, BackendError> {
        v.get(name)
            .and_then(|s| s.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError {
                retryable: false,
                message: format!("response missing '{name}'"),
            })
    }
}

impl BackendClient for HttpBackend {
    fn text(&self, prompt: &str) -> Result<String, BackendError> {
        let v = self.post(&self.text_url, serde_json::json!({ "prompt": prompt }))?;
        Self::field(&v, "text")
    }

    fn image(&self, description: &str) -> Result<RgbaImage, BackendError> {
        let v = self.post(&self.image_url, serde_json::json!({ "description": description }))?;
        let b64 = Self::field(&v, "image_b64")?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| BackendError {
                retryable: false,
                message: format!("bad base64: {e}"),
            })?;
        image::load_from_memory(&bytes)
            .map(|i| i.into_rgba8())
            .map_err(|e| BackendError {
                retryable: false,
                message: format!("bad image: {e}"),
            })
    }

    fn mesh(&self, image: &RgbaImage) -> Result<TriangleMesh, BackendError> {
        let mut png = std::io::Cursor::new(Vec::new());
        image
            .write_to(&mut png, image::ImageFormat::Png)
            .map_err(|e| BackendError {
                retryable: false,
                message: format!("encode image: {e}"),
            })?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(png.into_inner());
        let v = self.post(&self.mesh_url, serde_json::json!({ "image_b64": b64 }))?;
        let mesh_b64 = Self::field(&v, "mesh_ply_b64")?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(mesh_b64)
            .map_err(|e| BackendError {
                retryable: false,
                message: format!("bad base64: {e}"),
            })?;
        crate::io::parse_ply(&bytes, &crate::io::LoadOptions::default())
            .map(|(mesh, _)| mesh)
            .map_err(|e| BackendError {
                retryable: false,
                message: format!("bad mesh: {e}"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taxonomy() -> Taxonomy {
        serde_json::from_value(serde_json::json!({
            "levels": {
                "Kitchen": {"Drinkware": ["ceramic mug", "glass tumbler"]},
                "Office": {"Desk accessories": ["pen holder"]},
            }
        }))
        .unwrap()
    }

    fn leaf(fine: &str) -> CategoryPath {
        CategoryPath {
            top: "Kitchen".into(),
            mid: "Drinkware".into(),
            fine: fine.into(),
        }
    }

    #[test]
    fn prompts_are_distinct_and_mention_leaf() {
        let tax = taxonomy();
        let backend = MockBackend::new(7);
        let prompts = expand_prompts(
            &tax,
            &leaf("ceramic mug"),
            3,
            &PromptTemplate::default(),
            &backend,
            3,
        )
        .unwrap();
        assert_eq!(prompts.len(), 3);
        let mut seen = std::collections::HashSet::new();
        for p in &prompts {
            assert!(p.spec.description.contains("ceramic mug"));
            assert!(seen.insert(p.spec.description.clone()));
            assert_eq!(p.attempts, 1);
        }
        assert!(matches!(
            expand_prompts(&tax, &leaf("ceramic mug"), 0, &PromptTemplate::default(), &backend, 3),
            Err(SynthError::ZeroPrompts)
        ));
    }

    #[test]
    fn retry_contract() {
        let tax = taxonomy();
        let backend = MockBackend::new(7).fail_first("text", 2);
        let prompts = expand_prompts(
            &tax,
            &leaf("ceramic mug"),
            1,
            &PromptTemplate::default(),
            &backend,
            3,
        )
        .unwrap();
        assert_eq!(prompts[0].attempts, 3);

        let backend = MockBackend::new(7).fail_first("text", 5);
        let err = expand_prompts(
            &tax,
            &leaf("ceramic mug"),
            1,
            &PromptTemplate::default(),
            &backend,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, SynthError::BackendExhausted { attempts: 3, .. }));
    }

    #[test]
    fn qc_on_constructed_images() {
        let config = QcConfig::default();
        // good: centered disk at ~40% area on clean background
        let backend = MockBackend::new(1);
        let good = backend.image("anything").unwrap();
        let report = image_qc(&good, &config);
        assert!(report.pass, "{:?}", report.reasons);

        // touching the border
        let bad = MockBackend::new(1).bad_images_first(1);
        let img = bad.image("anything").unwrap();
        let report = image_qc(&img, &config);
        assert!(!report.pass);
        assert!(report.reasons.contains(&QcFailure::IncompleteObject));

        // tiny foreground
        let mut img = RgbaImage::from_pixel(64, 64, image::Rgba([255, 255, 255, 0]));
        for y in 30..34 {
            for x in 30..34 {
                img.put_pixel(x, y, image::Rgba([200, 30, 30, 255]));
            }
        }
        let report = image_qc(&img, &config);
        assert!(report.reasons.contains(&QcFailure::TooSmall));
    }
}
