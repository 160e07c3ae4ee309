use std::path::{Path, PathBuf};

use pnp_gmm::admm::{AdmmParams, VarianceRule};
use pnp_gmm::bench::{
    catalog_entry, degrade, execute, ingest_corpus, run_experiment, sweep_measurements, variance_for_bsnr, Anchor,
    Crop, ExperimentKind, ExperimentSpec, ImageRules, ReportRecord, Size,
};
use pnp_gmm::denoiser::DenoiserConfig;
use pnp_gmm::gmm::EmConfig;
use pnp_gmm::image::{load_image, save_image, Image};
use pnp_gmm::metrics::{bsnr, psnr};
use pnp_gmm::operators::{build_cyclic, ForwardOperator};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

#[test]
fn cameraman_experiment_3_input_psnr() {
    // Full 256x256 Cameraman, 9x9 uniform blur, BSNR 40 dB.
    let clean = load_image(data("generic/test/cameraman.png")).unwrap();
    assert_eq!(clean.shape(), (256, 256));
    let entry = catalog_entry(3).unwrap();
    let op = build_cyclic(entry.kernel.clone(), clean.shape()).unwrap();
    let blurred = op.blur(&clean).unwrap();
    let var = variance_for_bsnr(&blurred, 40.0).unwrap();
    assert!((bsnr(&blurred, var).unwrap() - 40.0).abs() < 1e-9);
    let y = degrade(&clean, &op, var, 11).unwrap();
    // The bundled Cameraman is a resampled copy, so the input PSNR only
    // roughly matches the usual 20.76 dB.
    let input = psnr(&clean, y.as_image().unwrap()).unwrap();
    assert!((input - 20.76).abs() < 1.5, "input PSNR {input}");
}

#[test]
fn corpus_crop_then_resize() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(300, 300, |r, c| ((r * 7 + c * 3) % 256) as f64);
    save_image(&img, dir.path().join("a.png")).unwrap();
    let rules = ImageRules {
        crop: Some(Crop {
            width: 192,
            height: 192,
            anchor: Anchor::TopLeft,
        }),
        resize: Some(Size {
            width: 128,
            height: 128,
        }),
    };
    let out = ingest_corpus(dir.path(), &rules).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].shape(), (128, 128));
    let expected = img.crop(0, 0, 192, 192).unwrap().resize_bilinear(128, 128).unwrap();
    assert_eq!(out[0], expected);
}

fn small_spec(dir: &Path, kind: ExperimentKind) -> ExperimentSpec {
    let cs = kind == ExperimentKind::Compressive;
    ExperimentSpec {
        kind,
        image_path: data("generic/test/cameraman.png"),
        image_rules: ImageRules {
            crop: None,
            resize: Some(Size {
                width: 32,
                height: 32,
            }),
        },
        training_corpus: data("faces"),
        corpus_rules: ImageRules::default(),
        model_path: None,
        components: 3,
        training_stride: 2,
        max_training_patches: Some(2000),
        kernel_id: (!cs).then_some(5),
        measurements: cs.then_some(400),
        matrix_seed: cs.then_some(4),
        noise_variance: Some(if cs { 0.0 } else { 4.0 }),
        target_bsnr: None,
        admm: AdmmParams {
            mu: if cs { 1.0 } else { 0.05 },
            iterations: 8,
            denoiser_variance: VarianceRule::MuScaled { beta: 2.0 },
            retrain_schedule: vec![4],
            retrain_em: EmConfig {
                max_iterations: 5,
                ..EmConfig::default()
            },
            ..AdmmParams::default()
        },
        denoiser: DenoiserConfig::default(),
        em: EmConfig {
            max_iterations: 10,
            seed: 3,
            ..EmConfig::default()
        },
        noise_seed: 21,
        output_dir: Some(dir.to_path_buf()),
    }
}

#[test]
fn experiment_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&small_spec(a.path(), ExperimentKind::Deblur)).unwrap();
    let rb = run_experiment(&small_spec(b.path(), ExperimentKind::Deblur)).unwrap();
    assert_eq!(ra.metrics, rb.metrics);
    for file in ["restored.png", "degraded.png", "trace.csv", "prior.gmm"] {
        let fa = std::fs::read(a.path().join(file)).unwrap();
        let fb = std::fs::read(b.path().join(file)).unwrap();
        assert!(fa == fb, "{file} differs");
    }
    let report: ReportRecord =
        serde_json::from_slice(&std::fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.metrics, ra.metrics);
    assert_eq!(report.catalog_version, "v1");
    assert_eq!(report.noise_variance, 4.0);
    assert!((report.denoiser_variance - 40.0).abs() < 1e-12);
}

#[test]
fn compressive_run_reports_nmse_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), ExperimentKind::Compressive);
    let run = execute(&spec, None, &mut |_| {}).unwrap();
    let m = &run.report.metrics;
    assert!(m.nmse_db.unwrap().is_finite());
    assert!(m.isnr.is_none());
    assert_eq!(run.trace.len(), 8);
    assert_eq!(run.trace.iter().filter(|t| t.retrained).count(), 1);
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn sweep_writes_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path(), ExperimentKind::Compressive);
    spec.admm.retrain_schedule.clear();
    let rows = sweep_measurements(&spec, &[200, 600]).unwrap();
    assert_eq!(rows.iter().map(|r| r.measurements).collect::<Vec<_>>(), vec![200, 600]);
    assert_ne!(rows[0].matrix_seed, rows[1].matrix_seed);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("m200/report.json").exists());
}

#[test]
fn invalid_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path(), ExperimentKind::Deblur);
    spec.target_bsnr = Some(30.0);
    assert!(spec.validate().is_err());
    let mut spec = small_spec(dir.path(), ExperimentKind::Compressive);
    spec.measurements = Some(32 * 32);
    assert!(execute(&spec, None, &mut |_| {}).is_err());
    let mut spec = small_spec(dir.path(), ExperimentKind::Deblur);
    spec.image_path = data("missing.png");
    assert!(run_experiment(&spec).is_err());
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn catalog_noise_fills_in_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path(), ExperimentKind::Deblur);
    spec.kernel_id = Some(2);
    spec.noise_variance = None;
    let spec = spec.with_catalog_noise().unwrap();
    assert_eq!(spec.noise_variance, Some(8.0));
    let mut spec = small_spec(dir.path(), ExperimentKind::Deblur);
    spec.kernel_id = Some(3);
    spec.noise_variance = None;
    let spec = spec.with_catalog_noise().unwrap();
    assert_eq!(spec.target_bsnr, Some(40.0));
}

#[test]
fn blur_preserves_constant_images() {
    for id in 1..=6 {
        let op = build_cyclic(catalog_entry(id).unwrap().kernel, (32, 36)).unwrap();
        let out = op.apply(&Image::filled(36, 32, 7.5)).unwrap();
        assert!(out.values().iter().all(|v| (v - 7.5).abs() < 1e-10), "kernel {id}");
    }
}
