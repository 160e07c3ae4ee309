use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{catalog_entry, catalog_hash, NoiseSpec, CATALOG_VERSION};
use super::corpus::{ingest_corpus, ImageRules};
use super::{degrade, derive_seed, variance_for_bsnr_values};
use crate::admm::{run_observed, write_trace_csv, AdmmParams, Reference, TraceRecord};
use crate::denoiser::{training_em_config, training_patches, DenoiserConfig};
use crate::error::{Error, Result, StageContext};
use crate::gmm::{em_fit, load_model, save_model, EmConfig, GmmModel};
use crate::image::{load_image, save_image, Image};
use crate::metrics;
use crate::operators::{build_compressive, build_cyclic, ForwardOperator, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Deblur,
    Compressive,
}

/// Everything needed to reproduce one run. Deblurring runs set `kernel_id`,
/// compressive runs set `measurements` and `matrix_seed`; exactly one of
/// `noise_variance` and `target_bsnr` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub image_path: PathBuf,
    #[serde(default)]
    pub image_rules: ImageRules,
    pub training_corpus: PathBuf,
    #[serde(default)]
    pub corpus_rules: ImageRules,
    /// Pretrained mixture; when set the corpus is not used for training.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    pub components: usize,
    pub training_stride: usize,
    /// Seeded subsample of the training patches; `None` keeps them all.
    #[serde(default)]
    pub max_training_patches: Option<usize>,
    #[serde(default)]
    pub kernel_id: Option<u8>,
    #[serde(default)]
    pub measurements: Option<usize>,
    #[serde(default)]
    pub matrix_seed: Option<u64>,
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default)]
    pub target_bsnr: Option<f64>,
    pub admm: AdmmParams,
    pub denoiser: DenoiserConfig,
    pub em: EmConfig,
    pub noise_seed: u64,
    /// Where the restored image, trace and report go; nothing is written
    /// when absent.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ExperimentKind::Deblur => {
                if self.kernel_id.is_none() || self.measurements.is_some() {
                    return Err(Error::Spec("deblur runs need kernel_id and no measurements".into()));
                }
                catalog_entry(self.kernel_id.unwrap_or(0))?;
            }
            ExperimentKind::Compressive => {
                if self.measurements.is_none() || self.matrix_seed.is_none() || self.kernel_id.is_some() {
                    return Err(Error::Spec(
                        "compressive runs need measurements and matrix_seed and no kernel_id".into(),
                    ));
                }
            }
        }
        match (self.noise_variance, self.target_bsnr) {
            (Some(v), None) if v.is_finite() && v >= 0.0 => {}
            (None, Some(b)) if b.is_finite() => {}
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Spec("exactly one of noise_variance and target_bsnr must be set".into()))
            }
            _ => return Err(Error::Spec("noise level must be finite and non-negative".into())),
        }
        if self.components == 0 || self.training_stride == 0 {
            return Err(Error::Spec("components and training_stride must be positive".into()));
        }
        if self.max_training_patches == Some(0) {
            return Err(Error::Spec("max_training_patches must be positive".into()));
        }
        self.admm.validate()?;
        self.denoiser.validate()?;
        self.em.validate()
    }

    /// Sets the noise level of a deblurring spec from the catalog entry.
    pub fn with_catalog_noise(mut self) -> Result<Self> {
        let id = self
            .kernel_id
            .ok_or_else(|| Error::Spec("catalog noise needs a kernel_id".into()))?;
        match catalog_entry(id)?.noise {
            NoiseSpec::Variance(v) => {
                self.noise_variance = Some(v);
                self.target_bsnr = None;
            }
            NoiseSpec::TargetBsnr(b) => {
                self.noise_variance = None;
                self.target_bsnr = Some(b);
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub input_psnr: Option<f64>,
    pub bsnr: Option<f64>,
    pub psnr: Option<f64>,
    pub isnr: Option<f64>,
    pub nmse_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub spec: ExperimentSpec,
    pub catalog_version: String,
    pub catalog_hash: String,
    /// Variance of the noise actually added.
    pub noise_variance: f64,
    pub denoiser_variance: f64,
    pub training_patches: usize,
    pub metrics: Metrics,
    pub first_primal_residual: f64,
    pub final_primal_residual: f64,
}

pub struct ExperimentRun {
    pub report: ReportRecord,
    pub clean: Image,
    pub observation: Observation,
    pub restored: Image,
    pub trace: Vec<TraceRecord>,
    /// The mixture the run started from.
    pub prior: GmmModel,
}

/// Trains the mixture described by `spec` from its corpus, or loads it from
/// `model_path`. Returns the model and the number of training patches.
pub fn train_prior(spec: &ExperimentSpec) -> Result<(GmmModel, usize)> {
    if let Some(path) = &spec.model_path {
        let model = load_model(path)?;
        if model.dim() != spec.denoiser.dim() {
            return Err(Error::shape(
                format!("model of dimension {}", spec.denoiser.dim()),
                format!("{}", model.dim()),
            ));
        }
        return Ok((model, 0));
    }
    let images = ingest_corpus(&spec.training_corpus, &spec.corpus_rules)?;
    let per_image = images
        .iter()
        .map(|img| training_patches(img, &spec.denoiser, spec.training_stride))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = per_image.iter().map(|p| p.view()).collect();
    let mut patches = concatenate(Axis(0), &views).expect("equal patch dimension");
    if let Some(max) = spec.max_training_patches {
        patches = subsample_rows(patches, max, derive_seed(spec.em.seed, "subsample"));
    }
    let n = patches.nrows();
    let model = em_fit(patches.view(), spec.components, &training_em_config(&spec.denoiser, &spec.em))?;
    Ok((model, n))
}

fn subsample_rows(patches: Array2<f64>, max: usize, seed: u64) -> Array2<f64> {
    if patches.nrows() <= max {
        return patches;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rows = rand::seq::index::sample(&mut rng, patches.nrows(), max).into_vec();
    rows.sort_unstable();
    patches.select(Axis(0), &rows)
}

fn build_operator(spec: &ExperimentSpec, shape: (usize, usize)) -> Result<Box<dyn ForwardOperator>> {
    Ok(match spec.kind {
        ExperimentKind::Deblur => {
            let entry = catalog_entry(spec.kernel_id.expect("validated"))?;
            Box::new(build_cyclic(entry.kernel, shape)?)
        }
        ExperimentKind::Compressive => Box::new(build_compressive(
            shape,
            spec.measurements.expect("validated"),
            spec.admm.mu,
            spec.matrix_seed.expect("validated"),
        )?),
    })
}

/// Runs `spec`, reusing `prior` instead of training when given. `observer`
/// sees every iteration's trace record.
pub fn execute(
    spec: &ExperimentSpec,
    prior: Option<GmmModel>,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<ExperimentRun> {
    spec.validate()?;
    let clean = load_image(&spec.image_path)
        .and_then(|img| spec.image_rules.apply(&img))
        .stage("load image")?;
    let (prior, training_patches) = match prior {
        Some(m) => (m, 0),
        None => train_prior(spec).stage("train prior")?,
    };
    let op = build_operator(spec, clean.shape()).stage("build operator")?;

    let noiseless = op.apply(&clean).stage("degrade")?;
    let noise_variance = match (spec.noise_variance, spec.target_bsnr) {
        (Some(v), _) => v,
        (None, Some(b)) => variance_for_bsnr_values(noiseless.values(), b).stage("degrade")?,
        (None, None) => unreachable!("validated"),
    };
    let observation = degrade(&clean, op.as_ref(), noise_variance, derive_seed(spec.noise_seed, "noise")).stage("degrade")?;

    let mut metrics = Metrics::default();
    let degraded = observation.as_image();
    if let Some(deg) = degraded {
        metrics.input_psnr = Some(metrics::psnr(&clean, deg)?);
        if noise_variance > 0.0 {
            metrics.bsnr = Some(metrics::bsnr(noiseless.as_image().expect("image observation"), noise_variance)?);
        }
    }

    let mut first = None;
    let mut last = f64::NAN;
    let mut track = |r: &TraceRecord| {
        first.get_or_insert(r.primal_residual);
        last = r.primal_residual;
        observer(r);
    };
    let reference = Reference { clean: &clean, degraded };
    let outcome = run_observed(
        op.as_ref(),
        &observation,
        prior.clone(),
        &spec.admm,
        &spec.denoiser,
        Some(reference),
        &mut track,
    )
    .stage("admm")?;
    let restored = outcome.estimate;
    match spec.kind {
        ExperimentKind::Deblur => {
            let deg = degraded.expect("deblurring observes an image");
            metrics.psnr = Some(metrics::psnr(&clean, &restored)?);
            metrics.isnr = Some(metrics::isnr(&clean, deg, &restored)?);
        }
        ExperimentKind::Compressive => metrics.nmse_db = Some(metrics::nmse_db(&clean, &restored)?),
    }

    let report = ReportRecord {
        spec: spec.clone(),
        catalog_version: CATALOG_VERSION.to_string(),
        catalog_hash: catalog_hash(),
        noise_variance,
        denoiser_variance: spec.admm.denoiser_variance.variance(spec.admm.mu),
        training_patches,
        metrics,
        first_primal_residual: first.unwrap_or(f64::NAN),
        final_primal_residual: last,
    };
    if let Some(dir) = &spec.output_dir {
        write_outputs(dir, &report, &observation, &restored, &outcome.trace, &prior, training_patches > 0)
            .stage("write outputs")?;
    }
    Ok(ExperimentRun {
        report,
        clean,
        observation,
        restored,
        trace: outcome.trace,
        prior,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ReportRecord> {
    execute(spec, None, &mut |_| {}).map(|run| run.report)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_outputs(
    dir: &Path,
    report: &ReportRecord,
    observation: &Observation,
    restored: &Image,
    trace: &[TraceRecord],
    prior: &GmmModel,
    trained: bool,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_image(restored, dir.join("restored.png"))?;
    if let Some(deg) = observation.as_image() {
        save_image(deg, dir.join("degraded.png"))?;
    }
    write_trace_csv(trace, dir.join("trace.csv"))?;
    if trained {
        save_model(prior, dir.join("prior.gmm"))?;
    }
    let json = serde_json::to_vec_pretty(report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_atomic(&dir.join("report.json"), &json)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub measurements: usize,
    pub matrix_seed: u64,
    pub nmse_db: f64,
}

/// One compressive run per entry of `measurements`, each with a matrix seed
/// derived from the base spec's seed. The prior is trained once and shared.
/// Each run writes into `output_dir/m<M>` and the table goes to
/// `output_dir/sweep.csv`.
pub fn sweep_measurements(base: &ExperimentSpec, measurements: &[usize]) -> Result<Vec<SweepRow>> {
    sweep_measurements_with(base, measurements, None)
}

/// [`sweep_measurements`] with an already trained prior.
pub fn sweep_measurements_with(
    base: &ExperimentSpec,
    measurements: &[usize],
    prior: Option<GmmModel>,
) -> Result<Vec<SweepRow>> {
    if base.kind != ExperimentKind::Compressive {
        return Err(Error::Spec("sweeps need a compressive spec".into()));
    }
    base.validate()?;
    let base_seed = base.matrix_seed.expect("validated");
    let prior = match prior {
        Some(p) => p,
        None => train_prior(base).stage("train prior")?.0,
    };
    let mut rows = Vec::with_capacity(measurements.len());
    for &m in measurements {
        let mut spec = base.clone();
        spec.measurements = Some(m);
        spec.matrix_seed = Some(derive_seed(base_seed, &format!("measurements={m}")));
        spec.output_dir = base.output_dir.as_ref().map(|d| d.join(format!("m{m}")));
        let run = execute(&spec, Some(prior.clone()), &mut |_| {})?;
        rows.push(SweepRow {
            measurements: m,
            matrix_seed: spec.matrix_seed.expect("set above"),
            nmse_db: run.report.metrics.nmse_db.expect("compressive runs report NMSE"),
        });
    }
    if let Some(dir) = &base.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("measurements,matrix_seed,nmse_db\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.measurements, r.matrix_seed, r.nmse_db));
    }
    out
}
