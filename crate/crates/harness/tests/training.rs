use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simplexvq::quantize::{QuantizerMode, QuantizerSettings};
use simplexvq::regularize::{RegConfig, RegKind};
use simplexvq::Tape;
use simplexvq_harness::checkpoint::Checkpoint;
use simplexvq_harness::config::TemperatureMode;
use simplexvq_harness::eval::{evaluate, EvalData};
use simplexvq_harness::runlog::{read_jsonl, EpochRecord, StepRecord, CHECKPOINT_FILE, METRICS_FILE, STEPS_FILE};
use simplexvq_harness::tasks::{ae_forward, ae_step};
use simplexvq_harness::train::{datasets, eval_seed, Dataset};
use simplexvq_harness::{train, RunConfig, Task, Trainer};

fn small_ae(mode: QuantizerMode, reg: RegKind) -> RunConfig {
    let mut cfg = RunConfig::from_toml("task = \"ae\"\nepochs = 3\nbatch_size = 64\n").unwrap();
    cfg.data.items = 256;
    cfg.data.eval_items = 128;
    cfg.quantizer = QuantizerSettings {
        mode,
        ..QuantizerSettings::default()
    };
    cfg.regularizer = RegConfig {
        kind: reg,
        weight: 0.37,
        ..RegConfig::default()
    };
    cfg.regularizer.knn.k = 2;
    cfg
}

fn small_contrastive() -> RunConfig {
    let mut cfg = RunConfig::from_toml("task = \"contrastive\"\nepochs = 2\nbatch_size = 4\n").unwrap();
    cfg.data.items = 16;
    cfg.data.eval_items = 8;
    cfg.contrastive.mask_fraction = 0.3;
    cfg.codebook.size = 4;
    cfg.codebook.groups = 2;
    cfg.quantizer.mode = QuantizerMode::HardGumbel;
    cfg.regularizer.kind = RegKind::KnnCe;
    cfg.regularizer.knn.k = 2;
    cfg
}

#[test]
fn identical_config_and_seed_give_identical_records() {
    for cfg in [small_ae(QuantizerMode::SoftGumbel, RegKind::KnnL2), small_contrastive()] {
        let a = train(&cfg, None).unwrap();
        let b = train(&cfg, None).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.model, b.model);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(train(&other, None).unwrap().records, a.records);
    }
}

#[test]
fn recorded_total_is_main_plus_weighted_reg() {
    let dir = tempfile::tempdir().unwrap();
    for (i, cfg) in [
        small_ae(QuantizerMode::Softmax, RegKind::KnnCe),
        small_ae(QuantizerMode::Ste, RegKind::Hard),
        small_ae(QuantizerMode::Softmax, RegKind::Ppl),
        small_contrastive(),
    ]
    .into_iter()
    .enumerate()
    {
        let out = dir.path().join(i.to_string());
        train(&cfg, Some(&out)).unwrap();
        let steps: Vec<StepRecord> = read_jsonl(out.join(STEPS_FILE)).unwrap();
        assert!(!steps.is_empty());
        for s in &steps {
            let composed = s.main + cfg.regularizer.weight * s.reg;
            assert!((s.total - composed).abs() <= 1e-12, "{s:?}");
        }
        let epochs: Vec<EpochRecord> = read_jsonl(out.join(METRICS_FILE)).unwrap();
        assert_eq!(epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), (1..=cfg.epochs).collect::<Vec<_>>());
        assert!(epochs.iter().all(|e| e.config_hash == cfg.hash()));
    }
}

#[test]
fn zero_epochs_writes_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_ae(QuantizerMode::Softmax, RegKind::None);
    cfg.epochs = 0;
    let out = train(&cfg, Some(dir.path())).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap(), "");
    let ckpt = Checkpoint::load(dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!((ckpt.epoch, ckpt.steps), (0, 0));
    assert_eq!(ckpt.model().unwrap(), Trainer::new(cfg).unwrap().model);
}

#[test]
fn checkpoint_round_trip_preserves_model_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [small_ae(QuantizerMode::Rotation, RegKind::Hard), small_contrastive()] {
        let out = train(&cfg, Some(dir.path())).unwrap();
        let ckpt = Checkpoint::load(dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(ckpt, out.checkpoint);
        let model = ckpt.model().unwrap();
        assert_eq!(model, out.model);
        let (_, eval) = datasets(&cfg).unwrap();
        let metrics = evaluate(&model, &cfg, eval.as_eval(), eval_seed(cfg.seed)).unwrap();
        assert_eq!(&metrics, &out.records.last().unwrap().eval());
    }
}

#[test]
fn warmup_ends_at_peak_lr() {
    let mut cfg = small_ae(QuantizerMode::Softmax, RegKind::None);
    cfg.optimizer.warmup_steps = 5;
    let trainer = Trainer::new(cfg.clone()).unwrap();
    assert_eq!(trainer.schedule().lr(5), cfg.optimizer.peak_lr);
    assert_eq!(trainer.schedule().total, 4 * cfg.epochs);
}

#[test]
fn annealed_temperature_follows_the_schedule_and_is_not_trained() {
    let mut cfg = small_ae(QuantizerMode::Softmax, RegKind::KnnCe);
    cfg.temperature.mode = TemperatureMode::Annealed;
    cfg.temperature.init = 2.0;
    cfg.temperature.final_ = 0.2;
    let out = train(&cfg, None).unwrap();
    let last = out.records.last().unwrap().temperature[0];
    assert!((last - 0.2).abs() < 1e-9, "{last}");
}

#[test]
fn hard_modes_train_and_eval_quantize_identically() {
    let modes = [QuantizerMode::Ste, QuantizerMode::Rotation, QuantizerMode::HardGumbel];
    for mode in modes {
        let mut cfg = small_ae(mode, RegKind::None);
        cfg.codebook.groups = 2;
        let trainer = Trainer::new(cfg.clone()).unwrap();
        let Dataset::Clusters(data) = &trainer.eval_data else { unreachable!() };
        let model = &trainer.model;
        let tape = Tape::new();
        let vars = model.on_tape(&tape, true);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fwd = ae_forward(model, &vars, tape.constant(data.items.clone()), &cfg, &mut rng).unwrap();
        let train_q = fwd.quantized.quantized.to_tensor();
        let train_ix: Vec<Vec<usize>> = fwd.quantized.groups.iter().map(|g| g.indices.clone()).collect();
        let decoded = model.codebooks.decode(&train_ix);
        let worst = train_q.data().iter().zip(decoded.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // The rotation path reproduces the code only up to rounding.
        assert!(worst <= 1e-9, "{mode:?}: {worst}");
        if mode.is_hard() {
            let eval_ix = model.codebooks.hard_indices(&fwd.z.to_tensor(), &cfg.quantizer).unwrap();
            assert_eq!(train_ix, eval_ix, "{mode:?}");
        }
    }
}

#[test]
fn main_loss_reaches_log_temperature_in_smoothed_modes() {
    for mode in [QuantizerMode::Softmax, QuantizerMode::SoftGumbel, QuantizerMode::HardGumbel] {
        let cfg = small_ae(mode, RegKind::None);
        let trainer = Trainer::new(cfg.clone()).unwrap();
        let Dataset::Clusters(data) = &trainer.train_data else { unreachable!() };
        let tape = Tape::new();
        let vars = trainer.model.on_tape(&tape, true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (losses, _) = ae_step(&tape, &trainer.model, &vars, &data.items, &cfg, &mut rng).unwrap();
        assert_eq!(losses.reg.item(), 0.0);
        let g = tape.backward(losses.total).unwrap();
        assert_ne!(g.get(vars.codebooks[0].log_temperature).item(), 0.0, "{mode:?}");
    }
}

#[test]
fn product_codebooks_report_usage_per_group() {
    let cfg = small_contrastive();
    let out = train(&cfg, None).unwrap();
    for r in &out.records {
        assert_eq!(r.usage.len(), 2);
        assert_eq!(r.temperature.len(), 2);
        assert!(r.accuracy.is_some() && r.hard_rmse.is_none());
    }
}

#[test]
fn evaluation_rejects_mismatched_data() {
    let cfg = small_ae(QuantizerMode::Softmax, RegKind::None);
    let model = Trainer::new(cfg.clone()).unwrap().model;
    let mut wide = cfg.clone();
    wide.data.dim = 5;
    let (_, eval) = datasets(&wide).unwrap();
    assert!(evaluate(&model, &cfg, eval.as_eval(), 0).is_err());
    let (_, seqs) = datasets(&small_contrastive()).unwrap();
    let Dataset::Sequences(s) = &seqs else { unreachable!() };
    assert!(evaluate(&model, &cfg, EvalData::Sequences(s), 0).is_err());
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let mut cfg = small_ae(QuantizerMode::Softmax, RegKind::None);
    cfg.batch_size = 0;
    let err = train(&cfg, None).err().unwrap().to_string();
    assert!(err.contains("batch_size"), "{err}");
    let mut cfg = small_contrastive();
    cfg.task = Task::Contrastive;
    cfg.contrastive.mask_fraction = 1.5;
    assert!(train(&cfg, None).is_err());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let cfg = RunConfig::load(entry.unwrap().path()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        n += 1;
    }
    assert!(n >= 6);
}
