//! Flag-to-spec resolution. Each function starts from the built-in defaults
//! or the `--spec` file, overlays the flags given explicitly and
//! materialises seeds.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use pnp_gmm::admm::{AdmmParams, VarianceRule};
use pnp_gmm::bench::{derive_seed, Anchor, Crop, ExperimentKind, ExperimentSpec, ImageRules, Size};
use pnp_gmm::denoiser::{DcHandling, DenoiserConfig};
use pnp_gmm::gmm::EmConfig;

use crate::args::*;
use crate::{read_spec, Failure};

pub const DEBLUR_MU: f64 = 0.05;
pub const DEBLUR_BETA: f64 = 0.3;
pub const CS_BETA: f64 = 150.0;

pub struct Env {
    pub data_dir: PathBuf,
    pub spec: Option<PathBuf>,
}

impl Env {
    pub fn from_process(spec: Option<PathBuf>) -> Self {
        Env {
            data_dir: std::env::var_os("PNP_GMM_DATA")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
            spec,
        }
    }

    fn default_corpus(&self) -> PathBuf {
        self.data_dir.join("generic").join("train")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psnr,
    Isnr,
    Nmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub corpus: PathBuf,
    #[serde(default)]
    pub corpus_rules: ImageRules,
    pub denoiser: DenoiserConfig,
    pub components: usize,
    pub training_stride: usize,
    #[serde(default)]
    pub max_training_patches: Option<usize>,
    pub em: EmConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeSpec {
    pub input: PathBuf,
    #[serde(default)]
    pub image_rules: ImageRules,
    #[serde(default)]
    pub kernel_id: Option<u8>,
    #[serde(default)]
    pub kernel_file: Option<PathBuf>,
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default)]
    pub target_bsnr: Option<f64>,
    pub noise_seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseSpec {
    pub input: PathBuf,
    pub model: PathBuf,
    pub noise_variance: f64,
    pub denoiser: DenoiserConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub clean: PathBuf,
    #[serde(default)]
    pub degraded: Option<PathBuf>,
    pub restored: PathBuf,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentSpec,
    pub measurements: Vec<usize>,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require(path: &Path, flag: &str) -> Result<(), Failure> {
    if path.as_os_str().is_empty() {
        Err(usage(format!("{flag} is required (or give --spec)")))
    } else {
        Ok(())
    }
}

fn start<S: serde::de::DeserializeOwned>(env: &Env, defaults: impl FnOnce() -> S) -> Result<(S, bool), Failure> {
    match &env.spec {
        Some(path) => Ok((read_spec(path)?, true)),
        None => Ok((defaults(), false)),
    }
}

fn fresh_seed() -> u64 {
    rand::random()
}

fn parse_size(text: &str) -> Result<(usize, usize), Failure> {
    let bad = || usage(format!("expected WxH, got {text:?}"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
}

pub fn parse_crop(text: &str) -> Result<Crop, Failure> {
    let (size, anchor) = match text.split_once(':') {
        Some((s, a)) => (s, a),
        None => (text, "top-left"),
    };
    let anchor = match anchor {
        "top-left" | "top_left" => Anchor::TopLeft,
        "center" | "centre" => Anchor::Center,
        other => return Err(usage(format!("unknown crop anchor {other:?}"))),
    };
    let (width, height) = parse_size(size)?;
    Ok(Crop { width, height, anchor })
}

fn overlay_rules(rules: &mut ImageRules, crop: &Option<String>, resize: &Option<String>) -> Result<(), Failure> {
    if let Some(c) = crop {
        rules.crop = Some(parse_crop(c)?);
    }
    if let Some(r) = resize {
        let (width, height) = parse_size(r)?;
        rules.resize = Some(Size { width, height });
    }
    Ok(())
}

pub fn parse_list(text: &str) -> Result<Vec<usize>, Failure> {
    if text.trim().is_empty() || text == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| usage(format!("bad list entry {t:?}"))))
        .collect()
}

fn overlay_patch(cfg: &mut DenoiserConfig, a: &PatchArgs) {
    if let Some(p) = a.patch {
        cfg.patch_side = p;
    }
    if let Some(s) = a.stride {
        cfg.stride = s;
    }
    if let Some(dc) = a.dc {
        cfg.dc_handling = match dc {
            DcArg::SubtractMean => DcHandling::SubtractMean,
            DcArg::None => DcHandling::None,
        };
    }
}

pub(crate) fn subsample(patches: Array2<f64>, max: Option<usize>, seed: u64) -> Array2<f64> {
    match max {
        Some(max) if patches.nrows() > max => {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "subsample"));
            let mut rows = rand::seq::index::sample(&mut rng, patches.nrows(), max).into_vec();
            rows.sort_unstable();
            patches.select(Axis(0), &rows)
        }
        _ => patches,
    }
}

pub fn train(a: &TrainArgs, env: &Env) -> Result<TrainSpec, Failure> {
    let (mut s, from_file) = start(env, || TrainSpec {
        corpus: env.default_corpus(),
        corpus_rules: ImageRules::default(),
        denoiser: DenoiserConfig::default(),
        components: 20,
        training_stride: 2,
        max_training_patches: None,
        em: EmConfig::default(),
        out: PathBuf::new(),
    })?;
    let t = &a.training;
    if let Some(c) = &t.corpus {
        s.corpus = c.clone();
    }
    if let Some(k) = t.components {
        s.components = k;
    }
    if let Some(st) = t.training_stride {
        s.training_stride = st;
    }
    if t.max_patches.is_some() {
        s.max_training_patches = t.max_patches;
    }
    if let Some(n) = t.em_iters {
        s.em.max_iterations = n;
    }
    overlay_rules(&mut s.corpus_rules, &t.corpus_crop, &t.corpus_resize)?;
    overlay_patch(&mut s.denoiser, &a.patch);
    if let Some(o) = &a.out {
        s.out = o.clone();
    }
    match a.seed {
        Some(seed) => s.em.seed = seed,
        None if !from_file => s.em.seed = fresh_seed(),
        None => {}
    }
    require(&s.out, "--out")?;
    Ok(s)
}

pub fn degrade(a: &DegradeArgs, env: &Env) -> Result<DegradeSpec, Failure> {
    let (mut s, from_file) = start(env, || DegradeSpec {
        input: PathBuf::new(),
        image_rules: ImageRules::default(),
        kernel_id: None,
        kernel_file: None,
        noise_variance: None,
        target_bsnr: None,
        noise_seed: 0,
        out: PathBuf::new(),
    })?;
    if let Some(i) = &a.image.input {
        s.input = i.clone();
    }
    overlay_rules(&mut s.image_rules, &a.image.crop, &a.image.resize)?;
    if let Some(k) = a.kernel {
        s.kernel_id = Some(k);
        s.kernel_file = None;
    }
    if let Some(f) = &a.kernel_file {
        s.kernel_file = Some(f.clone());
        s.kernel_id = None;
    }
    overlay_noise(&mut s.noise_variance, &mut s.target_bsnr, &a.noise);
    if s.kernel_id.is_none() && s.kernel_file.is_none() {
        s.kernel_id = Some(3);
    }
    if s.noise_variance.is_none() && s.target_bsnr.is_none() {
        if let Some(id) = s.kernel_id {
            let e = pnp_gmm::bench::catalog_entry(id)?;
            s.noise_variance = e.default_noise_variance();
            if s.noise_variance.is_none() {
                if let pnp_gmm::bench::NoiseSpec::TargetBsnr(b) = e.noise {
                    s.target_bsnr = Some(b);
                }
            }
        } else {
            return Err(usage("--kernel-file needs --noise-variance or --bsnr"));
        }
    }
    match a.seed {
        Some(seed) => s.noise_seed = seed,
        None if !from_file => s.noise_seed = fresh_seed(),
        None => {}
    }
    if let Some(o) = &a.out {
        s.out = o.clone();
    }
    require(&s.input, "--input")?;
    require(&s.out, "--out")?;
    Ok(s)
}

fn overlay_noise(variance: &mut Option<f64>, bsnr: &mut Option<f64>, a: &NoiseArgs) {
    if let Some(v) = a.noise_variance {
        *variance = Some(v);
        *bsnr = None;
    }
    if let Some(b) = a.bsnr {
        *bsnr = Some(b);
        *variance = None;
    }
}

fn solver_defaults(env: &Env, kind: ExperimentKind) -> ExperimentSpec {
    let (admm, kernel_id, measurements, matrix_seed, noise_variance, target_bsnr) = match kind {
        ExperimentKind::Deblur => (
            AdmmParams {
                mu: DEBLUR_MU,
                iterations: 200,
                denoiser_variance: VarianceRule::MuScaled { beta: DEBLUR_BETA },
                retrain_schedule: vec![100],
                ..AdmmParams::default()
            },
            Some(3),
            None,
            None,
            None,
            Some(40.0),
        ),
        ExperimentKind::Compressive => (
            AdmmParams {
                mu: 1.0,
                iterations: 50,
                denoiser_variance: VarianceRule::MuScaled { beta: CS_BETA },
                retrain_schedule: vec![25],
                ..AdmmParams::default()
            },
            None,
            Some(5000),
            Some(0),
            Some(0.0),
            None,
        ),
    };
    ExperimentSpec {
        kind,
        image_path: PathBuf::new(),
        image_rules: ImageRules::default(),
        training_corpus: env.default_corpus(),
        corpus_rules: ImageRules::default(),
        model_path: None,
        components: 20,
        training_stride: 2,
        max_training_patches: None,
        kernel_id,
        measurements,
        matrix_seed,
        noise_variance,
        target_bsnr,
        admm,
        denoiser: DenoiserConfig::default(),
        em: EmConfig::default(),
        noise_seed: 0,
        output_dir: None,
    }
}

/// Overwrites every random stream of `spec` with one derived from `seed`.
pub fn seed_experiment(spec: &mut ExperimentSpec, seed: u64) {
    spec.noise_seed = derive_seed(seed, "noise");
    spec.em.seed = derive_seed(seed, "em");
    spec.admm.retrain_em.seed = derive_seed(seed, "retrain");
    if spec.kind == ExperimentKind::Compressive {
        spec.matrix_seed = Some(derive_seed(seed, "matrix"));
    }
}

fn overlay_solver(s: &mut ExperimentSpec, a: &SolverArgs, from_file: bool) -> Result<(), Failure> {
    if let Some(i) = &a.image.input {
        s.image_path = i.clone();
    }
    overlay_rules(&mut s.image_rules, &a.image.crop, &a.image.resize)?;
    let t = &a.training;
    if let Some(c) = &t.corpus {
        s.training_corpus = c.clone();
    }
    if let Some(k) = t.components {
        s.components = k;
    }
    if let Some(st) = t.training_stride {
        s.training_stride = st;
    }
    if t.max_patches.is_some() {
        s.max_training_patches = t.max_patches;
    }
    if let Some(n) = t.em_iters {
        s.em.max_iterations = n;
        s.admm.retrain_em.max_iterations = n;
    }
    overlay_rules(&mut s.corpus_rules, &t.corpus_crop, &t.corpus_resize)?;
    overlay_patch(&mut s.denoiser, &a.patch);
    if let Some(m) = &a.model {
        s.model_path = Some(m.clone());
    }
    if let Some(mu) = a.mu {
        s.admm.mu = mu;
    }
    if let Some(beta) = a.beta {
        s.admm.denoiser_variance = VarianceRule::MuScaled { beta };
    }
    if let Some(value) = a.denoiser_variance {
        s.admm.denoiser_variance = VarianceRule::Fixed { value };
    }
    if let Some(n) = a.iters {
        s.admm.iterations = n;
        s.admm.retrain_schedule.retain(|&t| t < n);
    }
    if let Some(r) = &a.retrain {
        s.admm.retrain_schedule = parse_list(r)?;
    }
    if let Some(st) = a.retrain_stride {
        s.admm.retrain_stride = st;
    }
    overlay_noise(&mut s.noise_variance, &mut s.target_bsnr, &a.noise);
    match a.seed {
        Some(seed) => seed_experiment(s, seed),
        None if !from_file => seed_experiment(s, fresh_seed()),
        None => {}
    }
    if let Some(o) = &a.out {
        s.output_dir = Some(o.clone());
    }
    require(&s.image_path, "--input")?;
    Ok(())
}

fn checked(spec: ExperimentSpec) -> Result<ExperimentSpec, Failure> {
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn deblur(a: &DeblurArgs, env: &Env) -> Result<ExperimentSpec, Failure> {
    let (mut s, from_file) = start(env, || solver_defaults(env, ExperimentKind::Deblur))?;
    if s.kind != ExperimentKind::Deblur {
        return Err(usage("spec is not a deblurring spec"));
    }
    if let Some(k) = a.kernel {
        s.kernel_id = Some(k);
        if a.solver.noise.noise_variance.is_none() && a.solver.noise.bsnr.is_none() {
            s = s.with_catalog_noise().map_err(|e| usage(e.to_string()))?;
        }
    }
    overlay_solver(&mut s, &a.solver, from_file)?;
    checked(s)
}

fn compressive(a: &SolverArgs, measurements: Option<usize>, env: &Env) -> Result<(ExperimentSpec, bool), Failure> {
    let defaults = || solver_defaults(env, ExperimentKind::Compressive);
    let (mut s, from_file) = start(env, defaults)?;
    if s.kind != ExperimentKind::Compressive {
        return Err(usage("spec is not a compressive spec"));
    }
    if let Some(m) = measurements {
        s.measurements = Some(m);
    }
    overlay_solver(&mut s, a, from_file)?;
    Ok((s, from_file))
}

pub fn csrecon(a: &CsArgs, env: &Env) -> Result<ExperimentSpec, Failure> {
    checked(compressive(&a.solver, a.measurements, env)?.0)
}

pub fn sweep(a: &SweepArgs, env: &Env) -> Result<SweepSpec, Failure> {
    let (mut spec, from_file) = match &env.spec {
        Some(path) => (read_spec::<SweepSpec>(path)?, true),
        None => (
            SweepSpec {
                base: solver_defaults(env, ExperimentKind::Compressive),
                measurements: vec![2000, 5000, 8000],
            },
            false,
        ),
    };
    overlay_solver(&mut spec.base, &a.solver, from_file)?;
    if let Some(list) = &a.m_values {
        spec.measurements = parse_list(list)?;
    }
    if spec.measurements.is_empty() {
        return Err(usage("--m-values must list at least one measurement count"));
    }
    spec.base = checked(spec.base)?;
    Ok(spec)
}

pub fn denoise(a: &DenoiseArgs, env: &Env) -> Result<DenoiseSpec, Failure> {
    let (mut s, _) = start(env, || DenoiseSpec {
        input: PathBuf::new(),
        model: PathBuf::new(),
        noise_variance: f64::NAN,
        denoiser: DenoiserConfig::default(),
        out: PathBuf::new(),
    })?;
    if let Some(i) = &a.input {
        s.input = i.clone();
    }
    if let Some(m) = &a.model {
        s.model = m.clone();
    }
    if let Some(v) = a.noise_variance {
        s.noise_variance = v;
    }
    overlay_patch(&mut s.denoiser, &a.patch);
    if let Some(o) = &a.out {
        s.out = o.clone();
    }
    require(&s.input, "--input")?;
    require(&s.model, "--model")?;
    require(&s.out, "--out")?;
    if !(s.noise_variance >= 0.0) {
        return Err(usage("--noise-variance is required and must be non-negative"));
    }
    Ok(s)
}

pub fn eval(a: &EvalArgs, env: &Env) -> Result<EvalSpec, Failure> {
    let (mut s, _) = start(env, || EvalSpec {
        clean: PathBuf::new(),
        degraded: None,
        restored: PathBuf::new(),
        metric: Metric::Psnr,
    })?;
    if let Some(c) = &a.clean {
        s.clean = c.clone();
    }
    if a.degraded.is_some() {
        s.degraded = a.degraded.clone();
    }
    if let Some(r) = &a.restored {
        s.restored = r.clone();
    }
    if let Some(m) = a.metric {
        s.metric = match m {
            MetricArg::Psnr => Metric::Psnr,
            MetricArg::Isnr => Metric::Isnr,
            MetricArg::Nmse => Metric::Nmse,
        };
    }
    require(&s.clean, "--clean")?;
    require(&s.restored, "--restored")?;
    if s.metric == Metric::Isnr && s.degraded.is_none() {
        return Err(usage("--metric isnr needs --degraded"));
    }
    Ok(s)
}
