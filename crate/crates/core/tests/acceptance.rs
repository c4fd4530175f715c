//! Acceptance gate: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them).
//!
//! Benchmark-scale results from the original PeriodNet study are not
//! reproducible at this scale; the gate is property-based plus convergence
//! on a synthetic task.

use std::time::{Duration, Instant};

use periodnet::attention::{
    build_neighborhood_mask, mha, pam_forward, router_forward, spam_forward, MhaParams,
    PamConfig, PamMode, RouterParams,
};
use periodnet::data::{
    merge_columns, mse, parse_csv, split_chrono, synth_series, SeriesFrame, SplitSpec,
    SynthComponent,
};
use periodnet::model::{GroupingKind, MixerKind, ModelConfig, PeriodNet};
use periodnet::tensor::{finite_diff_check, Activation, Tensor};
use periodnet::train::{
    ablation_run, baseline_repeat_last, evaluate, evaluate_model, history_csv, train,
    AblationArm, Dataset, Predictor, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn randt(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::randn_param(shape, 1.0, rng).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let d = 8;
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &l in &[6usize, 12, 24] {
        for &p in &[2usize, 3, 8] {
            if l % p != 0 {
                continue;
            }
            for seed in 0..10u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let params = MhaParams::init(d, 2, &mut rng).unwrap();
                let x = randt(&mut rng, &[l, d]);

                let pam = pam_forward(&x, &params, &PamConfig::new(p, PamMode::Dense).unwrap())
                    .unwrap();
                let dense = build_neighborhood_mask(l, p, PamMode::Dense).unwrap();
                let pam_oracle = mha(&x, &x, &x, &params, Some(&dense)).unwrap();
                worst = worst.max(max_abs_diff(&pam.data(), &pam_oracle.data()));

                let spam =
                    spam_forward(&x, &params, &PamConfig::new(p, PamMode::PhaseSparse).unwrap())
                        .unwrap();
                let sparse = build_neighborhood_mask(l, p, PamMode::PhaseSparse).unwrap();
                let spam_oracle = mha(&x, &x, &x, &params, Some(&sparse)).unwrap();
                worst = worst.max(max_abs_diff(&spam.data(), &spam_oracle.data()));
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 70, "seven (L, P) pairs x ten seeds");
    assert!(worst < 1e-10, "max |delta| {worst:e}");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "{elapsed:?}");
    println!(
        "criterion 1 (oracle equivalence): PASS — {cases} cases, max |delta| {worst:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_2_gradient_integrity() {
    let start = Instant::now();
    let cfg = ModelConfig {
        c: 2,
        l: 12,
        horizon: 6,
        d: 4,
        heads: 2,
        p_list: vec![3, 3],
        r: 2,
        grouping: GroupingKind::Groups(2),
        g_hidden: None,
        n_enc: 2,
        n_dif: 1,
        ffn_width: 8,
        mixer: MixerKind::Pam,
        // GELU keeps central differences off ReLU's kink.
        activation: Activation::Gelu,
        positional: true,
    };
    let model = PeriodNet::init(cfg, &mut ChaCha8Rng::seed_from_u64(23)).unwrap();
    // Parameters are redrawn at std 0.2: under the 0.02 init some layer norms
    // sit on near-zero-variance rows where the f''' ~ 1/sigma^3 truncation
    // term of central differences swamps the tolerance at h = 1e-5.
    let mut redraw = ChaCha8Rng::seed_from_u64(77);
    for (_, t) in model.named_parameters() {
        let fresh = Tensor::randn_param(&t.shape().to_vec(), 0.2, &mut redraw).unwrap();
        t.set_data(&fresh.data()).unwrap();
    }
    let x = randt(&mut ChaCha8Rng::seed_from_u64(24), &[12, 2]);
    let target = randt(&mut ChaCha8Rng::seed_from_u64(25), &[6, 2]);
    let params = model.named_parameters();
    let report = finite_diff_check(
        || {
            let err = model.forward(&x)?.sub(&target)?;
            err.mul(&err)?.mean()
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(
        report.passed(),
        "max rel err {} worst {:?}",
        report.max_rel_err(),
        report.worst()
    );
    // Every named parameter is covered exactly once.
    assert_eq!(report.entries.len(), params.len());
    for (entry, (name, _)) in report.entries.iter().zip(&params) {
        assert_eq!(&entry.name, name);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");
    println!(
        "criterion 2 (gradient integrity): PASS — {} parameters, max rel err {:.2e}, {elapsed:?}",
        params.len(),
        report.max_rel_err()
    );
}

#[test]
fn criterion_3_receptive_field_exactness() {
    let start = Instant::now();
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let params = MhaParams::init(d, 2, &mut rng).unwrap();

    // One-layer PAM: perturbing a token in block 3 leaves blocks 0-1
    // bit-identical (block 2 neighbors it and may move).
    let pam_cfg = PamConfig::new(2, PamMode::Dense).unwrap();
    let base = randt(&mut rng, &[8, d]);
    let out_a = pam_forward(&base, &params, &pam_cfg).unwrap().data();
    let mut bumped = base.data();
    bumped[7 * d + 1] += 10.0;
    let out_b = pam_forward(&Tensor::from_vec(bumped, &[8, d]).unwrap(), &params, &pam_cfg)
        .unwrap()
        .data();
    for i in 0..2 * 2 * d {
        assert_eq!(out_a[i].to_bits(), out_b[i].to_bits(), "pam leaked to element {i}");
    }

    // One-layer SPAM: perturbing phase 0 leaves every other phase
    // bit-identical.
    let spam_cfg = PamConfig::new(3, PamMode::PhaseSparse).unwrap();
    let base = randt(&mut rng, &[12, d]);
    let out_a = spam_forward(&base, &params, &spam_cfg).unwrap().data();
    let mut bumped = base.data();
    bumped[0] += 10.0; // t = 0 lives on phase 0
    let out_b = spam_forward(&Tensor::from_vec(bumped, &[12, d]).unwrap(), &params, &spam_cfg)
        .unwrap()
        .data();
    for t in 0..12 {
        if t % 3 == 0 {
            continue;
        }
        for j in 0..d {
            assert_eq!(
                out_a[t * d + j].to_bits(),
                out_b[t * d + j].to_bits(),
                "spam leaked across phases at t={t}"
            );
        }
    }

    // Router restores global sensitivity: finite-difference probe from the
    // last input element to the first output element. Probe parameters are
    // drawn at std 0.2 — the 0.02 init chains several near-zero matrices and
    // would push a genuine global sensitivity below the threshold.
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut probe_mha = || MhaParams::<f64> {
        wq: Tensor::randn_param(&[d, d], 0.2, &mut rng).unwrap(),
        wk: Tensor::randn_param(&[d, d], 0.2, &mut rng).unwrap(),
        wv: Tensor::randn_param(&[d, d], 0.2, &mut rng).unwrap(),
        wo: Tensor::randn_param(&[d, d], 0.2, &mut rng).unwrap(),
        heads: 2,
    };
    let mp = probe_mha();
    let collect = probe_mha();
    let broadcast = probe_mha();
    let rp = RouterParams {
        m: Tensor::randn_param(&[4, d], 0.2, &mut ChaCha8Rng::seed_from_u64(18)).unwrap(),
        collect,
        broadcast,
    };
    let pam_cfg = PamConfig::new(3, PamMode::Dense).unwrap();
    let l = 12;
    let base = randt(&mut ChaCha8Rng::seed_from_u64(19), &[l, d]).data();
    let run = |x: &[f64]| {
        let z = Tensor::from_vec(x.to_vec(), &[l, d]).unwrap();
        let zp = pam_forward(&z, &mp, &pam_cfg).unwrap();
        router_forward(&zp, &rp).unwrap().data()[0]
    };
    let h = 1e-4;
    let idx = (l - 1) * d;
    let mut plus = base.clone();
    plus[idx] += h;
    let mut minus = base.clone();
    minus[idx] -= h;
    let sens = (run(&plus) - run(&minus)) / (2.0 * h);
    assert!(sens.abs() > 1e-8, "router sensitivity {sens:e}");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "{elapsed:?}");
    println!(
        "criterion 3 (receptive field): PASS — PAM/SPAM locality bit-exact, router probe {:.2e}, {elapsed:?}"
    , sens.abs());
}

#[test]
fn criterion_4_synthetic_convergence() {
    let start = Instant::now();
    let comps = [
        SynthComponent::new(8.0, 1.0, 0.0),
        SynthComponent::new(24.0, 1.0, 1.0),
    ];
    let frame = synth_series(2000, &comps, 0.0, 0.0, 17).unwrap();
    let data = Dataset::prepare(&frame, SplitSpec::default(), 96, 48, 1).unwrap();

    let mut baseline = 0.0;
    for (x, y) in &data.test {
        baseline += mse(&baseline_repeat_last(x, 48).unwrap(), y).unwrap();
    }
    baseline /= data.test.len() as f64;
    // Sanity: two standardized sinusoids whose periods divide the horizon
    // have near-zero average autocovariance over it, so the repeat-last
    // error is close to 2 * Var = 2.
    assert!((baseline - 2.0).abs() < 0.2, "baseline {baseline}");

    let mut cfg = ModelConfig::new(1, 96, 48);
    cfg.d = 8;
    cfg.heads = 2;
    cfg.p_list = vec![8, 24];
    cfg.r = 4;
    cfg.ffn_width = 16;
    let model = PeriodNet::init(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let tcfg = TrainConfig {
        lr: 1e-3,
        batch: 16,
        max_epochs: 100,
        patience: 8,
        seed: 5,
        max_steps: Some(800),
    };
    let (ckpt, history) = train(&model, &data, &tcfg).unwrap();
    let (test_mse, _) = evaluate(&ckpt, &data.test).unwrap();
    assert!(
        test_mse < 0.5 * baseline,
        "test mse {test_mse} vs threshold {}",
        0.5 * baseline
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(600), "{elapsed:?}");
    println!(
        "criterion 4 (synthetic convergence): PASS — test MSE {test_mse:.4} < 0.5 x baseline {baseline:.4} after {} epochs, {elapsed:?}",
        history.len()
    );
}

fn ablation_corpus() -> SeriesFrame {
    let mut columns = Vec::new();
    for (i, period) in [6.0, 8.0, 12.0].into_iter().enumerate() {
        let mut f = synth_series(
            240,
            &[SynthComponent::new(period, 1.0, 0.3 * i as f64)],
            0.0,
            0.05,
            40 + i as u64,
        )
        .unwrap();
        f.names = vec![format!("v{i}")];
        columns.push(f);
    }
    merge_columns(&columns).unwrap()
}

#[test]
fn criterion_5_ablation_harness() {
    let frame = ablation_corpus();
    let mut base = ModelConfig::new(3, 24, 8);
    base.d = 4;
    base.heads = 2;
    base.p_list = vec![4, 8];
    base.r = 2;
    base.ffn_width = 8;
    let tcfg = TrainConfig {
        batch: 8,
        max_epochs: 2,
        max_steps: Some(20),
        seed: 9,
        ..TrainConfig::default()
    };
    // The group sweep studied by the original PeriodNet work (groups
    // 0,1,2,4,8; 0 = naive joint modeling) plus the PD vs FCN predictor pair.
    let mut arms = vec![];
    for grouping in [
        GroupingKind::Joint,
        GroupingKind::Groups(1),
        GroupingKind::Groups(2),
        GroupingKind::Groups(4),
        GroupingKind::Groups(8),
    ] {
        arms.push(AblationArm { mixer: MixerKind::Pam, predictor: Predictor::Pd, grouping });
    }
    for predictor in [Predictor::Pd, Predictor::Fcn] {
        arms.push(AblationArm {
            mixer: MixerKind::Pam,
            predictor,
            grouping: GroupingKind::Groups(2),
        });
    }
    let report_a = ablation_run(&frame, &base, &tcfg, &arms).unwrap();
    let report_b = ablation_run(&frame, &base, &tcfg, &arms).unwrap();
    // Deterministic up to wall time.
    let fingerprint = |r: &periodnet::train::AblationReport| -> Vec<(String, u64, u64, u32)> {
        r.rows
            .iter()
            .map(|row| (row.arm.label(), row.mse.to_bits(), row.mae.to_bits(), row.prep_hash))
            .collect()
    };
    assert_eq!(fingerprint(&report_a), fingerprint(&report_b), "ablation must be deterministic");
    assert_eq!(report_a.rows.len(), 7);
    for row in &report_a.rows {
        assert!(
            row.mse.is_finite() && row.mae.is_finite(),
            "{}: non-finite metrics",
            row.arm.label()
        );
        assert_eq!(row.prep_hash, report_a.rows[0].prep_hash);
    }
    let parsed = parse_csv(&report_a.to_csv()).unwrap();
    assert_eq!(parsed.len(), 7);
    println!(
        "criterion 5 (ablation harness): PASS — 7 arms deterministic, shared prep hash {:08x}",
        report_a.rows[0].prep_hash
    );
}

#[test]
fn criterion_6_split_and_metric_fidelity() {
    let frame = synth_series(100, &[SynthComponent::new(5.0, 1.0, 0.0)], 0.02, 0.1, 2).unwrap();
    let (tr, va, te) = split_chrono(&frame, SplitSpec::new(6, 2, 2).unwrap()).unwrap();
    assert_eq!((tr.len(), va.len(), te.len()), (60, 20, 20));
    let (tr, va, te) = split_chrono(&frame, SplitSpec::new(7, 1, 2).unwrap()).unwrap();
    assert_eq!((tr.len(), va.len(), te.len()), (70, 10, 20));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = randt(&mut rng, &[9, 2]);
    let t = randt(&mut rng, &[9, 2]);
    let (pd, td) = (p.data(), t.data());
    let mut se = 0.0;
    let mut ae = 0.0;
    for i in 0..pd.len() {
        let d: f64 = pd[i] - td[i];
        se += d * d;
        ae += d.abs();
    }
    let n = pd.len() as f64;
    let mse_err = (mse(&p, &t).unwrap() - se / n).abs();
    let mae_err = (periodnet::data::mae(&p, &t).unwrap() - ae / n).abs();
    assert!(mse_err < 1e-12 && mae_err < 1e-12);
    println!(
        "criterion 6 (split/metric fidelity): PASS — 60/20/20 and 70/10/20 exact, metric deltas {mse_err:.1e}/{mae_err:.1e}"
    );
}

fn quick_run(seed: u64) -> (periodnet::checkpoint::Checkpoint, String, Dataset) {
    let frame = synth_series(120, &[SynthComponent::new(6.0, 1.0, 0.0)], 0.0, 0.05, 3).unwrap();
    let data = Dataset::prepare(&frame, SplitSpec::default(), 8, 4, 1).unwrap();
    let mut cfg = ModelConfig::new(1, 8, 4);
    cfg.d = 4;
    cfg.p_list = vec![4, 4];
    cfg.r = 2;
    cfg.ffn_width = 8;
    let model = PeriodNet::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let tcfg = TrainConfig {
        max_epochs: 3,
        patience: 10,
        seed,
        ..TrainConfig::default()
    };
    let (ckpt, history) = train(&model, &data, &tcfg).unwrap();
    (ckpt, history_csv(&history), data)
}

#[test]
fn criterion_7_persistence() {
    let (ckpt, _, data) = quick_run(21);
    let (mse_a, mae_a) = evaluate(&ckpt, &data.test).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let reloaded = periodnet::checkpoint::Checkpoint::load(&path).unwrap();
    let (mse_b, mae_b) = evaluate(&reloaded, &data.test).unwrap();
    assert_eq!(mse_a.to_bits(), mse_b.to_bits(), "MSE changed across reload");
    assert_eq!(mae_a.to_bits(), mae_b.to_bits(), "MAE changed across reload");

    let second = dir.path().join("model2.ckpt");
    reloaded.save(&second).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&second).unwrap(),
        "save -> load -> save is not byte-identical"
    );
    println!(
        "criterion 7 (persistence): PASS — metrics bit-identical across reload, files byte-identical"
    );
}

#[test]
fn criterion_8_seed_determinism() {
    let (ckpt_a, hist_a, data) = quick_run(33);
    let (ckpt_b, hist_b, _) = quick_run(33);
    assert_eq!(ckpt_a.to_bytes(), ckpt_b.to_bytes(), "checkpoints differ across runs");
    assert_eq!(hist_a, hist_b, "histories differ across runs");
    // And a changed seed must actually change the run.
    let (ckpt_c, _, _) = quick_run(34);
    assert_ne!(ckpt_a.to_bytes(), ckpt_c.to_bytes());
    let (m, a) = evaluate_model(&ckpt_a.restore().unwrap(), &data.test).unwrap();
    assert!(m.is_finite() && a.is_finite());
    println!(
        "criterion 8 (determinism): PASS — identical seed reproduces checkpoint and history bytes"
    );
}
