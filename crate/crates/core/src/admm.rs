//! Plug-and-play ADMM.
//!
//! Each iteration performs
//!
//! ```text
//! x ← (AᵀA + μI)⁻¹ (Aᵀy + μ(v + d))
//! v ← denoise(x − d, σ²)
//! d ← d − (x − v)
//! ```
//!
//! where the denoiser replaces the proximal map of the prior. With the GMM
//! denoiser the mixture can be refit from the current `v` at scheduled
//! iterations.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::{training_em_config, training_patches, Denoiser, DenoiserConfig, GmmDenoiser};
use crate::error::{Error, Result};
use crate::gmm::{em_fit, EmConfig, GmmModel};
use crate::image::Image;
use crate::metrics;
use crate::operators::{ForwardOperator, Observation};

/// How the noise variance handed to the denoiser is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum VarianceRule {
    Fixed { value: f64 },
    /// `σ² = beta / μ`, the variance at which the prox of `beta·(−log p)`
    /// with penalty `μ` is an MMSE-style denoising step.
    MuScaled { beta: f64 },
}

impl VarianceRule {
    pub fn variance(&self, mu: f64) -> f64 {
        match *self {
            VarianceRule::Fixed { value } => value,
            VarianceRule::MuScaled { beta } => beta / mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmParams {
    pub mu: f64,
    pub iterations: usize,
    pub denoiser_variance: VarianceRule,
    /// Refit points: index `t` refits the mixture after `t` iterations have
    /// completed.
    pub retrain_schedule: Vec<usize>,
    pub retrain_em: EmConfig,
    /// Grid stride of the patches used when refitting.
    pub retrain_stride: usize,
    pub record_trace: bool,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            iterations: 50,
            denoiser_variance: VarianceRule::MuScaled { beta: 1.0 },
            retrain_schedule: Vec::new(),
            retrain_em: EmConfig::default(),
            retrain_stride: 1,
            record_trace: true,
        }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!("mu must be positive, got {}", self.mu)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("at least one iteration is required".into()));
        }
        let var = self.denoiser_variance.variance(self.mu);
        if !var.is_finite() || var < 0.0 {
            return Err(Error::InvalidArgument(format!("denoiser variance {var}")));
        }
        if self.retrain_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("retrain schedule must be strictly increasing".into()));
        }
        if self.retrain_schedule.last().is_some_and(|&t| t >= self.iterations) {
            return Err(Error::InvalidArgument("retrain index beyond the iteration count".into()));
        }
        if self.retrain_stride == 0 {
            return Err(Error::InvalidArgument("retrain stride must be positive".into()));
        }
        self.retrain_em.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// `‖x − v‖₂` after the iteration.
    pub primal_residual: f64,
    pub psnr: Option<f64>,
    pub isnr: Option<f64>,
    pub nmse_db: Option<f64>,
    /// Whether the mixture was refit just before this iteration.
    pub retrained: bool,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: Image,
    pub v: Image,
    pub d: Image,
    /// Completed iterations.
    pub iteration: usize,
    pub trace: Vec<TraceRecord>,
}

/// Ground truth used only for monitoring metrics in the trace.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub clean: &'a Image,
    /// Degraded image for ISNR; only meaningful for deblurring.
    pub degraded: Option<&'a Image>,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// The final `v`.
    pub estimate: Image,
    pub trace: Vec<TraceRecord>,
    pub model: GmmModel,
    pub state: AdmmState,
}

pub fn admm_x_update(op: &dyn ForwardOperator, y: &Observation, v: &Image, d: &Image, mu: f64) -> Result<Image> {
    let aty = op.apply_adjoint(y)?;
    x_update_with_adjoint(op, &aty, v, d, mu)
}

fn x_update_with_adjoint(op: &dyn ForwardOperator, aty: &Image, v: &Image, d: &Image, mu: f64) -> Result<Image> {
    let vd = v.add(d)?;
    let rhs = aty.zip_map(&vd, |a, b| a + mu * b)?;
    op.solve_regularized(&rhs, mu)
}

pub fn admm_v_update(denoiser: &dyn Denoiser, x: &Image, d: &Image, variance: f64) -> Result<Image> {
    denoiser.denoise(&x.sub(d)?, variance)
}

pub fn admm_d_update(d: &Image, x: &Image, v: &Image) -> Result<Image> {
    let r = x.sub(v)?;
    d.sub(&r)
}

/// Starting point: `y` itself for image observations, otherwise `Aᵀy`
/// min-max rescaled to `[0, 255]`.
pub fn initial_estimate(op: &dyn ForwardOperator, y: &Observation) -> Result<Image> {
    match y {
        Observation::Image(img) => {
            op.check_input(img)?;
            Ok(img.clone())
        }
        Observation::Measurements(_) => Ok(op.apply_adjoint(y)?.rescale_min_max()),
    }
}

/// Iteration driver independent of the denoiser in use.
pub struct PnpAdmm<'a> {
    op: &'a dyn ForwardOperator,
    aty: Image,
    params: &'a AdmmParams,
    state: AdmmState,
}

impl<'a> PnpAdmm<'a> {
    pub fn new(op: &'a dyn ForwardOperator, y: &Observation, params: &'a AdmmParams) -> Result<Self> {
        params.validate()?;
        op.check_output(y)?;
        let v0 = initial_estimate(op, y)?;
        Self::from_start(op, y, params, v0.clone(), Image::zeros(v0.width(), v0.height()))
    }

    /// Starts from an explicit `(v⁰, d⁰)`; `x⁰` is set to `v⁰`.
    pub fn from_start(op: &'a dyn ForwardOperator, y: &Observation, params: &'a AdmmParams, v0: Image, d0: Image) -> Result<Self> {
        params.validate()?;
        op.check_input(&v0)?;
        v0.ensure_same_shape(&d0)?;
        let aty = op.apply_adjoint(y)?;
        Ok(Self {
            op,
            aty,
            params,
            state: AdmmState {
                x: v0.clone(),
                v: v0,
                d: d0,
                iteration: 0,
                trace: Vec::new(),
            },
        })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn into_state(self) -> AdmmState {
        self.state
    }

    pub fn denoiser_variance(&self) -> f64 {
        self.params.denoiser_variance.variance(self.params.mu)
    }

    /// One x/v/d sweep. Returns the trace record of the iteration.
    pub fn step(&mut self, denoiser: &dyn Denoiser, reference: Option<Reference<'_>>, retrained: bool) -> Result<TraceRecord> {
        let it = self.state.iteration + 1;
        let mu = self.params.mu;
        let x = x_update_with_adjoint(self.op, &self.aty, &self.state.v, &self.state.d, mu)?;
        guard(&x, it, "x")?;
        let v = admm_v_update(denoiser, &x, &self.state.d, self.denoiser_variance())?;
        v.ensure_same_shape(&x)?;
        guard(&v, it, "v")?;
        let d = admm_d_update(&self.state.d, &x, &v)?;
        guard(&d, it, "d")?;

        let primal_residual = x.sub(&v)?.norm();
        let mut record = TraceRecord {
            iteration: it,
            primal_residual,
            psnr: None,
            isnr: None,
            nmse_db: None,
            retrained,
        };
        if let Some(r) = reference {
            record.psnr = Some(metrics::psnr(r.clean, &v)?);
            record.nmse_db = Some(metrics::nmse_db(r.clean, &v)?);
            if let Some(deg) = r.degraded {
                record.isnr = Some(metrics::isnr(r.clean, deg, &v)?);
            }
        }
        self.state.x = x;
        self.state.v = v;
        self.state.d = d;
        self.state.iteration = it;
        if self.params.record_trace {
            self.state.trace.push(record.clone());
        }
        Ok(record)
    }
}

fn guard(img: &Image, iteration: usize, variable: &'static str) -> Result<()> {
    if img.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { iteration, variable })
    }
}

/// Refits a mixture with the same component count on patches of `img`.
pub fn refit_model(img: &Image, components: usize, denoiser_cfg: &DenoiserConfig, stride: usize, em: &EmConfig) -> Result<GmmModel> {
    let patches = training_patches(img, denoiser_cfg, stride)?;
    em_fit(patches.view(), components, &training_em_config(denoiser_cfg, em))
}

pub fn run(
    op: &dyn ForwardOperator,
    y: &Observation,
    model: GmmModel,
    params: &AdmmParams,
    denoiser_cfg: &DenoiserConfig,
) -> Result<AdmmOutcome> {
    run_observed(op, y, model, params, denoiser_cfg, None, &mut |_| {})
}

/// [`run`] with optional ground-truth monitoring and a per-iteration callback.
pub fn run_observed(
    op: &dyn ForwardOperator,
    y: &Observation,
    model: GmmModel,
    params: &AdmmParams,
    denoiser_cfg: &DenoiserConfig,
    reference: Option<Reference<'_>>,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<AdmmOutcome> {
    denoiser_cfg.validate()?;
    if model.dim() != denoiser_cfg.dim() {
        return Err(Error::shape(
            format!("model of dimension {}", denoiser_cfg.dim()),
            format!("{}", model.dim()),
        ));
    }
    let mut driver = PnpAdmm::new(op, y, params)?;
    let mut denoiser = GmmDenoiser {
        model,
        config: *denoiser_cfg,
    };
    let mut schedule = params.retrain_schedule.iter().peekable();
    for t in 0..params.iterations {
        let mut retrained = false;
        if schedule.peek() == Some(&&t) {
            schedule.next();
            let k = denoiser.model.num_components();
            denoiser.model = refit_model(&driver.state().v, k, denoiser_cfg, params.retrain_stride, &params.retrain_em)?;
            retrained = true;
        }
        let record = driver.step(&denoiser, reference, retrained)?;
        observer(&record);
    }
    let state = driver.into_state();
    Ok(AdmmOutcome {
        estimate: state.v.clone(),
        trace: state.trace.clone(),
        model: denoiser.model,
        state,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("iteration,primal_residual,psnr,isnr,nmse_db\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration,
            r.primal_residual,
            opt(r.psnr),
            opt(r.isnr),
            opt(r.nmse_db)
        ));
    }
    out
}

pub fn write_trace_csv(trace: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(trace_csv(trace).as_bytes()).map_err(|e| Error::io(path, e))
}
