//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speckle_core::checkpoint::{self, CheckpointMeta};
use speckle_core::dataset::Split;
use speckle_core::energy::{duty_cycle_trace, simulate, simulate_with, PumpPolicy};
use speckle_core::imaging::ChannelMode;
use speckle_core::json::to_stable_string;
use speckle_core::metrics::{f1_score, precision_recall_f1_counts, roc_auc};
use speckle_core::nn::{conv2d_forward, Activation, ConvLayer, Layer};
use speckle_core::synth::{generate_dataset, SynthDatasetSpec};
use speckle_core::train::{evaluate, fit, Preprocessing, TrainConfig};
use speckle_core::zoo::{build, ArchitectureId};
use speckle_core::Tensor;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn shape_chain() -> Outcome {
    let t = Instant::now();
    let net = build(ArchitectureId::ch3_material(59, 256)).unwrap();
    let chain = net.shape_chain().unwrap();
    let expected: Vec<Vec<usize>> = vec![
        vec![254, 254, 32],
        vec![127, 127, 32],
        vec![125, 125, 64],
        vec![62, 62, 64],
        vec![60, 60, 128],
        vec![30, 30, 128],
        vec![28, 28, 128],
        vec![14, 14, 128],
        vec![25_088],
    ];
    let ok = chain.len() >= 9 && chain[..9] == expected[..] && within(t.elapsed(), 1.0);
    outcome(ok, format!("{:?}", &chain[..9.min(chain.len())]))
}

fn parameter_counts() -> Outcome {
    let t = Instant::now();
    let net59 = build(ArchitectureId::ch3_material(59, 256)).unwrap();
    let net30 = build(ArchitectureId::ch3_material(30, 256)).unwrap();
    let per_layer: Vec<usize> = net59
        .layers()
        .iter()
        .map(Layer::param_count)
        .filter(|&n| n > 0)
        .collect();
    let ok = net59.param_count() == 13_116_091
        && per_layer == [320, 18_496, 73_856, 147_584, 12_845_568, 30_267]
        && net30.param_count() == 13_101_214
        && within(t.elapsed(), 1.0);
    outcome(
        ok,
        format!("59-class {} {per_layer:?}, 30-class {}", net59.param_count(), net30.param_count()),
    )
}

fn worked_convolution() -> Outcome {
    let t = Instant::now();
    #[rustfmt::skip]
    let input = Tensor::new(vec![5, 5, 1], vec![
        5.0, 1.0, 17.0, 8.0, 5.0,
        5.0, 23.0, 5.0, 11.0, 5.0,
        5.0, 5.0, 5.0, 5.0, 5.0,
        8.0, 7.0, 24.0, 16.0, 8.0,
        2.0, 3.0, 0.0, 4.0, 48.0,
    ]).unwrap();
    let filter = |s| {
        let mut layer = ConvLayer::<f64>::new(1, 1, (3, 3), (s, s), 0, Activation::None).unwrap();
        layer
            .weights
            .data_mut()
            .copy_from_slice(&[-1.0, 1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0]);
        layer
    };
    let o2 = conv2d_forward(&input, &filter(1)).unwrap().data()[1];
    let o2s = conv2d_forward(&input, &filter(2)).unwrap().data()[1];
    outcome(o2 == 21.0 && o2s == 2.0 && within(t.elapsed(), 1.0), format!("O2={o2} O'2={o2s}"))
}

fn metric_tables() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 5e-4;
    let (p, r, f) = precision_recall_f1_counts(90, 8, 10);
    let cardstock = f1_score(0.9479, 0.91);
    let aluminum = f1_score(0.914, 0.85);
    let pvc = f1_score(0.9890, 0.9);
    let ok = close(p, 0.9184)
        && close(r, 0.9)
        && close(f, 0.9091)
        && close(cardstock, 0.9286)
        && close(aluminum, 0.8808)
        && close(pvc, 0.9424);
    outcome(
        ok,
        format!("leather ({p:.4}, {r:.4}, {f:.4}); f1 {cardstock:.4} / {aluminum:.4} / {pvc:.4}"),
    )
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let worst = (0..24).map(common::gradient_check).fold(0.0, f64::max);
    let fused = (0..24).map(common::fused_loss_check).fold(0.0, f64::max);
    let ok = worst < 1e-4 && fused < 1e-4 && within(t.elapsed(), 30.0);
    outcome(
        ok,
        format!("24 nets, max rel err {worst:.2e} (fused loss {fused:.2e}) in {:.2?}", t.elapsed()),
    )
}

/// Everything a training run produces, for the determinism comparison.
#[derive(PartialEq)]
struct RunArtifacts {
    history_csv: String,
    checkpoint: Vec<u8>,
    report: String,
}

struct TrainResult {
    train_acc: f64,
    val_acc: f64,
    val_auc: Option<f64>,
    epochs: usize,
    elapsed: Duration,
    artifacts: RunArtifacts,
}

fn train_run(root: &Path, arch: ArchitectureId, channel: ChannelMode, cfg: &TrainConfig, seed: u64) -> TrainResult {
    let index = speckle_core::dataset::DatasetIndex::scan(root).unwrap();
    let train = index.load(Split::Train).unwrap();
    let val = index.load(Split::Val).unwrap();
    let mut net = build(arch).unwrap();
    net.init_he_uniform(seed);
    let t = Instant::now();
    let history = fit(&mut net, &train, &val, cfg, &Preprocessing::new(channel)).unwrap();
    let elapsed = t.elapsed();
    let train_eval = evaluate(&net, &train, channel).unwrap();
    let val_eval = evaluate(&net, &val, channel).unwrap();
    let val_auc = (val_eval.predictions[0].output.len() == 1).then(|| {
        let scores: Vec<f64> = val_eval.predictions.iter().map(|p| p.output[0] as f64).collect();
        roc_auc(&scores, &val.labels).unwrap().auc
    });
    let meta = CheckpointMeta {
        class_names: train.classes.clone(),
        channel_mode: channel,
        wavelength_nm: Some(650.0),
        architecture: Some(arch),
    };
    let report = serde_json::json!({
        "train_accuracy": train_eval.accuracy,
        "val_accuracy": val_eval.accuracy,
        "val_loss": val_eval.loss,
        "val_auc": val_auc,
    });
    TrainResult {
        train_acc: train_eval.accuracy,
        val_acc: val_eval.accuracy,
        val_auc,
        epochs: history.records.len(),
        elapsed,
        artifacts: RunArtifacts {
            history_csv: history.to_csv(),
            checkpoint: checkpoint::encode(&net, &meta).unwrap(),
            report: to_stable_string(&report).unwrap(),
        },
    }
}

fn material_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs: 50,
        early_stop_patience: 5,
        seed: 7,
        threads: Some(1),
        ..TrainConfig::default()
    }
}

fn smoke_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs: 30,
        early_stop_patience: 5,
        seed: 11,
        threads: Some(1),
        ..TrainConfig::binary()
    }
}

struct TrainingRuns {
    matched: TrainResult,
    mismatched: TrainResult,
    smoke: TrainResult,
}

fn training_runs(work: &Path) -> TrainingRuns {
    let material = work.join("material");
    let smoke = work.join("smoke");
    generate_dataset(&SynthDatasetSpec::material_fixture(60, 64, 650.0, 7), &material).unwrap();
    generate_dataset(&SynthDatasetSpec::smoke_fixture(60, 64, 650.0, 11), &smoke).unwrap();
    let arch = ArchitectureId::ch3_material(4, 64);
    TrainingRuns {
        matched: train_run(&material, arch, ChannelMode::ByWavelength(650.0), &material_cfg(), 7),
        mismatched: train_run(&material, arch, ChannelMode::Green, &material_cfg(), 7),
        smoke: train_run(&smoke, ArchitectureId::smoke_binary(64), ChannelMode::ByWavelength(650.0), &smoke_cfg(), 11),
    }
}

fn desk_training(runs: &TrainingRuns) -> Outcome {
    let (m, g) = (&runs.matched, &runs.mismatched);
    let ok = m.train_acc >= 0.95
        && m.val_acc >= 0.90
        && m.epochs <= 50
        && within(m.elapsed, 300.0)
        && m.val_acc >= g.val_acc;
    outcome(
        ok,
        format!(
            "red: train {:.4} val {:.4} in {} epochs / {:.1?}; green: val {:.4}",
            m.train_acc, m.val_acc, m.epochs, m.elapsed, g.val_acc
        ),
    )
}

fn smoke_detector(runs: &TrainingRuns) -> Outcome {
    let s = &runs.smoke;
    let auc = s.val_auc.unwrap_or(0.0);
    outcome(
        s.val_acc >= 0.95 && auc >= 0.98 && s.epochs <= 30,
        format!("val acc {:.4}, auc {auc:.4}, {} epochs / {:.1?}", s.val_acc, s.epochs, s.elapsed),
    )
}

fn energy_reports() -> Vec<String> {
    let mut out = Vec::new();
    for (material, duty) in [("wood", 0.4334), ("acrylic", 0.38518), ("felt", 0.40460)] {
        let trace = duty_cycle_trace(material, duty, 30_000, 0.1, 750.0);
        out.push(to_stable_string(&simulate(&trace, 0.0).unwrap()).unwrap());
    }
    out
}

fn energy() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut savings = Vec::new();
    for ((material, duty), target) in [("wood", 0.4334), ("acrylic", 0.38518), ("felt", 0.40460)]
        .into_iter()
        .zip([56.66, 71.11, 79.77])
    {
        let r = simulate(&duty_cycle_trace(material, duty, 30_000, 0.1, 750.0), 0.0).unwrap();
        ok &= (r.savings_percent - target).abs() <= 0.01;
        savings.push(r.savings_percent);
    }
    let idle = duty_cycle_trace("wood", 0.0, 30_000, 0.1, 750.0);
    let r = simulate(&idle, 0.0).unwrap();
    ok &= r.e_baseline_ws == 2_250_000.0 && r.e_baseline_kwh == 0.625;
    ok &= r.e_adaptive_ws == 0.0 && r.savings_percent == 100.0;
    let on = simulate_with(&idle, PumpPolicy::AlwaysOn).unwrap().report;
    ok &= on.savings_percent == 0.0;
    ok &= within(t.elapsed(), 1.0);
    outcome(
        ok,
        format!(
            "savings {savings:?}; baseline {} W*s = {} kWh; always-on {}%, idle {}%",
            r.e_baseline_ws, r.e_baseline_kwh, on.savings_percent, r.savings_percent
        ),
    )
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=50usize);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Coarse scores force plenty of ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20u32) as f64 / 20.0).collect();
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        worst = worst.max((auc - wins / pairs).abs());
    }
    outcome(worst < 1e-9, format!("100 sets, max |trapezoid - pairwise| = {worst:.1e}"))
}

fn determinism(work: &Path, first: &TrainingRuns) -> Outcome {
    let second = training_runs(&work.join("repeat"));
    let same_runs = [
        (&first.matched, &second.matched),
        (&first.mismatched, &second.mismatched),
        (&first.smoke, &second.smoke),
    ]
    .iter()
    .all(|(a, b)| a.artifacts == b.artifacts);
    let same_energy = energy_reports() == energy_reports();
    let bytes = &first.matched.artifacts.checkpoint;
    let (net, meta) = checkpoint::decode(bytes).unwrap();
    let round_trip = checkpoint::encode(&net, &meta).unwrap() == *bytes;
    outcome(
        same_runs && same_energy && round_trip,
        format!("runs identical: {same_runs}, energy reports identical: {same_energy}, checkpoint round trip: {round_trip}"),
    )
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "shape chain", shape_chain()),
        (2, "parameter counts", parameter_counts()),
        (3, "worked convolution", worked_convolution()),
        (4, "metric tables", metric_tables()),
        (5, "gradient check", gradients()),
    ];
    for (n, name, o) in &results {
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let runs = training_runs(work.path());
    let later: Vec<(usize, &str, Outcome)> = vec![
        (6, "desk-scale training", desk_training(&runs)),
        (7, "smoke detector", smoke_detector(&runs)),
        (8, "energy savings", energy()),
        (9, "auc pairwise oracle", auc_oracle()),
        (10, "determinism", determinism(work.path(), &runs)),
    ];
    for (n, name, o) in &later {
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    results.extend(later);
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
