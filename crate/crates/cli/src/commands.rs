use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use avc_core::audio::{pipeline, wav::read_wav};
use avc_core::corruption::ppm::{encode_ppm, read_ppm, write_ppm};
use avc_core::corruption::{
    enhance, psnr, BrisqueModel, CorruptionMode, CorruptionSpec, Image, QualityReport,
};
use avc_core::ground_truth::{count_from_density, density_from_heads_with_sigma, HeadAnnotations};
use avc_core::model::{gradient_check, AvcModel, ModelConfig, MODEL_STEP};
use avc_core::synth::{generate_dataset, load_dataset, SceneSpec};
use avc_core::tensor::io::save_tensor;
use avc_core::train::{
    evaluate, history_to_csv, samples_from_scenes, train_with, Sample, TrainConfig,
};
use avc_core::{SplitMix64, Tensor};

use crate::{
    Command, CorruptArgs, CorruptionFlags, DensityArgs, EvalArgs, Failure, GradcheckArgs, ModeArg,
    SpectrogramArgs, SweepData, SweepOcclusionArgs, SweepRArgs, SynthArgs, TrainArgs, TrainFlags,
};

/// Corruption index offsets per split, so train, val and test scenes that
/// share a manifest position still draw independent corruption streams.
const TRAIN_OFFSET: u64 = 0;
const VAL_OFFSET: u64 = 1_000_000;
const TEST_OFFSET: u64 = 2_000_000;
const GRADCHECK_TOLERANCE: f64 = 1e-3;

type CmdResult = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Synth(a) => synth(a),
        Command::Spectrogram(a) => spectrogram(a),
        Command::Density(a) => density(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::SweepR(a) => sweep_r(a),
        Command::SweepOcclusion(a) => sweep_occlusion(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn need<V: Copy>(v: Option<V>, flag: &str, mode: &str) -> std::result::Result<V, Failure> {
    v.ok_or_else(|| usage(format!("--mode {} requires --{}", mode, flag)))
}

fn corruption_spec(
    flags: &CorruptionFlags,
    seed: u64,
) -> std::result::Result<Option<CorruptionSpec>, Failure> {
    let Some(mode) = flags.mode else {
        let stray = [flags.r, flags.b, flags.sigma, flags.or]
            .iter()
            .any(Option::is_some)
            || flags.lr_width.is_some()
            || flags.lr_height.is_some();
        if stray {
            return Err(usage("corruption parameters given without --mode"));
        }
        return Ok(None);
    };
    let mode = match mode {
        ModeArg::DarkenNoise => CorruptionMode::DarkenNoise {
            rate: need(flags.r, "R", "darken-noise")?,
            b: need(flags.b, "B", "darken-noise")?,
            deterministic: !flags.random_r,
        },
        ModeArg::Noise => CorruptionMode::FixedNoise {
            sigma: need(flags.sigma, "sigma", "noise")?,
        },
        ModeArg::Occlude => CorruptionMode::Occlude {
            rate: need(flags.or, "or", "occlude")?,
        },
        ModeArg::LowRes => CorruptionMode::LowRes {
            width: need(flags.lr_width, "lr-width", "low-res")?,
            height: need(flags.lr_height, "lr-height", "low-res")?,
        },
    };
    CorruptionSpec::new(mode, seed)
        .map(Some)
        .map_err(|e| usage(e.to_string()))
}

fn synth(a: SynthArgs) -> CmdResult {
    let spec = SceneSpec {
        width: a.width,
        height: a.height,
        n_min: a.n_min,
        n_max: a.n_max,
        blob_radius: a.blob_radius,
        blob_intensity: a.blob_intensity,
        band_lo_hz: a.band_lo,
        band_hi_hz: a.band_hi,
        per_person_rms: a.rms,
        seed: a.seed,
        ..SceneSpec::default()
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    eprintln!("synth: {:?} scenes={} seed={}", spec, a.n, a.seed);
    let rows = generate_dataset(&spec, a.n, &a.out).context("generating dataset")?;
    let people: usize = rows.iter().map(|r| r.count).sum();
    println!(
        "wrote {} scenes ({} people) to {}",
        rows.len(),
        people,
        a.out.display()
    );
    Ok(())
}

fn spectrogram(a: SpectrogramArgs) -> CmdResult {
    eprintln!(
        "spectrogram: in={} out={}",
        a.input.display(),
        a.out.display()
    );
    let clip =
        read_wav::<f64>(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let patch = pipeline(&clip).context("log-mel front-end")?.to_input();
    save_tensor(&a.out, &patch).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "log-mel patch {:?} written to {}",
        patch.dims(),
        a.out.display()
    );
    Ok(())
}

fn density(a: DensityArgs) -> CmdResult {
    eprintln!(
        "density: ann={} {}x{} sigma={}",
        a.ann.display(),
        a.width,
        a.height,
        a.sigma
    );
    let ann = HeadAnnotations::load(&a.ann, a.width, a.height)
        .with_context(|| format!("reading {}", a.ann.display()))?;
    let map =
        density_from_heads_with_sigma::<f64>(&ann, a.sigma).map_err(|e| usage(e.to_string()))?;
    let count = count_from_density(&map);
    save_tensor(&a.out, map.values()).with_context(|| format!("writing {}", a.out.display()))?;
    println!("heads={} density_sum={}", ann.count(), count);
    Ok(())
}

fn corrupt(a: CorruptArgs) -> CmdResult {
    let spec =
        corruption_spec(&a.corruption, a.seed)?.ok_or_else(|| usage("corrupt requires --mode"))?;
    eprintln!(
        "corrupt: {:?} index={} enhance={}",
        spec, a.index, a.enhance
    );
    let model = a
        .brisque_model
        .as_deref()
        .map(BrisqueModel::load)
        .transpose()
        .context("loading BRISQUE model")?;
    let img: Image<f64> =
        read_ppm(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut out = spec.apply(&img, a.index).context("corrupting image")?;
    if a.enhance {
        out = enhance(&out);
    }
    match &a.out {
        Some(path) => {
            write_ppm(path, &out).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let bytes = encode_ppm(&out).context("encoding image")?;
            std::io::stdout()
                .write_all(&bytes)
                .context("writing to stdout")?;
        }
    }
    if (out.width(), out.height()) == (img.width(), img.height()) {
        // BRISQUE needs room for its half-scale pass
        let brisque = if out.width().min(out.height()) >= 32 {
            let q =
                QualityReport::measure(&img, &out, model.as_ref()).context("measuring quality")?;
            q.brisque_score
                .map_or("n/a".to_string(), |s| format!("{:.3}", s))
        } else {
            "n/a".to_string()
        };
        let p = psnr(&img, &out).context("measuring PSNR")?;
        eprintln!("psnr={:.3} brisque={}", p, brisque);
    }
    Ok(())
}

fn load_split(dir: &Path, offset: u64) -> Result<Vec<Sample<f32>>> {
    let scenes = load_dataset::<f32>(dir).with_context(|| format!("loading {}", dir.display()))?;
    let samples = samples_from_scenes(&scenes, offset)
        .with_context(|| format!("preparing {}", dir.display()))?;
    Ok(samples)
}

fn model_config(flags: &TrainFlags) -> std::result::Result<ModelConfig, Failure> {
    let mut cfg = match &flags.model_config {
        Some(p) => ModelConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => ModelConfig::default(),
    };
    if let Some(s) = flags.model_seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn train_config(
    flags: &TrainFlags,
    corruption: Option<CorruptionSpec>,
) -> std::result::Result<TrainConfig, Failure> {
    let cfg = TrainConfig {
        lr: flags.lr,
        lr_decay: flags.lr_decay,
        weight_decay: flags.weight_decay,
        batch_size: flags.batch_size,
        max_epochs: flags.epochs,
        seed: flags.seed,
        corruption,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let mut mcfg = model_config(&a.flags)?;
    if a.vision_only {
        mcfg = mcfg.vision_only();
    }
    let corruption = corruption_spec(&a.corruption, a.flags.corrupt_seed)?;
    let tcfg = train_config(&a.flags, corruption)?;
    eprintln!("train: {}", tcfg);
    eprintln!("model: {}", mcfg.to_string().trim_end().replace('\n', "; "));
    let tr = load_split(&a.train, TRAIN_OFFSET)?;
    let va = load_split(&a.val, VAL_OFFSET)?;
    create_dir(&a.out)?;
    let model = AvcModel::<f32>::new(mcfg.clone()).map_err(|e| usage(e.to_string()))?;
    let out = train_with(model, &tr, &va, &tcfg, |r| {
        eprintln!(
            "epoch {} lr={:e} train_loss={:.6} val_mae={:.4} val_mse={:.4}",
            r.epoch, r.lr, r.train_loss, r.val_mae, r.val_mse
        )
    })
    .context("training")?;
    out.best
        .save(&a.out.join("best.avck"))
        .context("saving checkpoint")?;
    write_file(&a.out.join("model.cfg"), &mcfg.to_string())?;
    write_file(&a.out.join("history.csv"), &history_to_csv(&out.history))?;
    println!(
        "best epoch {} val_mae={} written to {}",
        out.best_epoch,
        out.best_val_mae,
        a.out.display()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CmdResult {
    let mcfg = ModelConfig::load(&a.model_config).map_err(|e| usage(e.to_string()))?;
    let corruption = corruption_spec(&a.corruption, a.corrupt_seed)?;
    eprintln!(
        "eval: checkpoint={} corruption={:?}",
        a.checkpoint.display(),
        corruption
    );
    let model = AvcModel::<f32>::load(mcfg, &a.checkpoint).context("loading checkpoint")?;
    let data = load_split(&a.data, TEST_OFFSET)?;
    let result = evaluate(&model, &data, corruption.as_ref()).context("evaluating")?;
    let csv = result.to_csv();
    match &a.out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{}", csv),
    }
    eprintln!("mae={} mse={}", result.mae, result.mse);
    Ok(())
}

struct Splits {
    train: Vec<Sample<f32>>,
    val: Vec<Sample<f32>>,
    test: Vec<Sample<f32>>,
}

fn load_splits(d: &SweepData) -> Result<Splits> {
    Ok(Splits {
        train: load_split(&d.train, TRAIN_OFFSET)?,
        val: load_split(&d.val, VAL_OFFSET)?,
        test: load_split(&d.test, TEST_OFFSET)?,
    })
}

/// Trains one audiovisual and one vision-only model per setting and writes
/// `sweep.csv` with one row per (setting, variant).
fn sweep(
    name: &str,
    settings: &[(f64, CorruptionSpec)],
    data: &SweepData,
    flags: &TrainFlags,
) -> CmdResult {
    let base = model_config(flags)?;
    let tcfgs = settings
        .iter()
        .map(|(_, spec)| train_config(flags, Some(*spec)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    eprintln!(
        "{}: {} settings, model seed {}, train seed {}",
        name,
        settings.len(),
        base.seed,
        flags.seed
    );
    let splits = load_splits(data)?;
    create_dir(&data.out)?;
    let mut csv = format!("{},variant,best_epoch,val_mae,test_mae,test_mse\n", name);
    for ((value, spec), tcfg) in settings.iter().zip(&tcfgs) {
        for (variant, cfg) in [
            ("audiovisual", base.clone()),
            ("vision", base.vision_only()),
        ] {
            eprintln!("{}={} variant={} {}", name, value, variant, tcfg);
            let model = AvcModel::<f32>::new(cfg).map_err(|e| usage(e.to_string()))?;
            let out = train_with(model, &splits.train, &splits.val, tcfg, |r| {
                eprintln!("  epoch {} val_mae={:.4}", r.epoch, r.val_mae)
            })
            .context("training")?;
            let test = evaluate(&out.best, &splits.test, Some(spec)).context("evaluating")?;
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                value, variant, out.best_epoch, out.best_val_mae, test.mae, test.mse
            )
            .expect("writing to a String");
            let stem = format!("{}_{}_{}", name, value, variant);
            write_file(
                &data.out.join(format!("{}_history.csv", stem)),
                &history_to_csv(&out.history),
            )?;
        }
    }
    let path = data.out.join("sweep.csv");
    write_file(&path, &csv)?;
    print!("{}", csv);
    Ok(())
}

fn sweep_r(a: SweepRArgs) -> CmdResult {
    let settings = a
        .rates
        .iter()
        .map(|&rate| {
            let mode = CorruptionMode::DarkenNoise {
                rate,
                b: a.b,
                deterministic: !a.random_r,
            };
            CorruptionSpec::new(mode, a.flags.corrupt_seed)
                .map(|s| (rate, s))
                .map_err(|e| usage(format!("--R: {}", e)))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    sweep("R", &settings, &a.data, &a.flags)
}

fn sweep_occlusion(a: SweepOcclusionArgs) -> CmdResult {
    let settings = a
        .rates
        .iter()
        .map(|&rate| {
            CorruptionSpec::new(CorruptionMode::Occlude { rate }, a.flags.corrupt_seed)
                .map(|s| (rate, s))
                .map_err(|e| usage(format!("--or: {}", e)))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    sweep("occlusion", &settings, &a.data, &a.flags)
}

fn desk_config() -> ModelConfig {
    ModelConfig::parse(
        "visual = 4,4,M,8,M,8,M,8\naudio = 4,M,8,M,8,M,8,M\nbackend = 8,8,8,6,4,4",
        "built-in",
    )
    .expect("static config")
}

fn random_tensor(rng: &mut SplitMix64, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.uniform(lo, hi)).collect()).expect("static dims")
}

fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let mut cfg = match &a.model_config {
        Some(p) => ModelConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => desk_config(),
    };
    cfg.seed = a.seed;
    if a.entries == 0 {
        return Err(usage("--entries must be positive"));
    }
    eprintln!(
        "gradcheck: seed={} entries={} step={:e}",
        a.seed, a.entries, MODEL_STEP
    );
    let mut model = AvcModel::<f64>::new(cfg.clone()).map_err(|e| usage(e.to_string()))?;
    // off the identity point so the audio path carries gradient
    model.randomize_film_weights(a.seed, 0.05);
    let mut rng = SplitMix64::derive(a.seed, 99);
    let img = random_tensor(&mut rng, &[3, 32, 32], 0.0, 1.0);
    let audio = random_tensor(&mut rng, &[1, 96, 64], -4.0, 2.0);
    let target = random_tensor(&mut rng, &[1, 32, 32], 0.0, 0.05);
    let audio = cfg.audio_enabled.then_some(&audio);
    let report = gradient_check(&model, &img, audio, &target, a.entries, MODEL_STEP, a.seed)
        .context("gradient check")?;
    let mut worst: f64 = 0.0;
    for r in &report {
        println!(
            "{:<28} checked={:<4} rel_error={:.3e}",
            r.name, r.checked, r.rel_error
        );
        worst = worst.max(r.rel_error);
    }
    println!(
        "max rel_error={:.3e} tolerance={:e}",
        worst, GRADCHECK_TOLERANCE
    );
    if !(worst < GRADCHECK_TOLERANCE) {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "gradient check failed: max relative error {:e} >= {:e}",
            worst,
            GRADCHECK_TOLERANCE
        )));
    }
    Ok(())
}
