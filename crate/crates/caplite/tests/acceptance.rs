//! Acceptance suite: one test per shipping criterion, each printing a
//! single PASS line (run with --nocapture to see them; a failure carries
//! the same detail in its panic message). Tolerances and budgets are
//! pinned as constants next to the criterion that uses them.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use caplite::bpe::{decode as bpe_decode, encode as bpe_encode, learn_bpe, Vocab, EOS_ID};
use caplite::decoding::{beam_search, greedy_decode};
use caplite::harness::configfile::{desk_defaults, DESK_BPE_MERGES};
use caplite::harness::dataset::{all_captions, prepare_examples};
use caplite::harness::full_scale_defaults;
use caplite::harness::synth::synth_generate;
use caplite::metrics::{bleu4, cider_d, cider_d_sentence, tokenize, NGramStats, DEFAULT_SIGMA};
use caplite::model::{cgru_step, count_params, ImageContext, ImageFeatures, Model, ModelConfig};
use caplite::numerics::{log_sum_exp, Rng, Tape, Tensor2D};
use caplite::training::{
    evaluate_with_beam, finetune_rl, train_xe, xe_gradcheck_suite, TrainConfig, TrainExample,
    GRADCHECK_TOLERANCE,
};

fn pass(n: usize, name: &str, detail: &str) {
    println!("criterion {n} ({name}): PASS ({detail})");
}

// ---------------------------------------------------------------- 1

/// Budget for the eight-cell gradient suite, seconds.
const GRADCHECK_BUDGET_S: f64 = 120.0;

#[test]
fn criterion_1_gradient_check_suite() {
    let start = Instant::now();
    let cells = xe_gradcheck_suite(8, 16, 20, 32).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    assert_eq!(cells.len(), 8, "expected all eight model variants");
    let mut worst: f64 = 0.0;
    for (label, report) in &cells {
        assert!(
            report.max_rel_err < GRADCHECK_TOLERANCE,
            "{label}: max relative error {:.3e} over tolerance {GRADCHECK_TOLERANCE:.0e}",
            report.max_rel_err
        );
        worst = worst.max(report.max_rel_err);
    }
    assert!(
        elapsed < GRADCHECK_BUDGET_S,
        "suite took {elapsed:.1}s, budget {GRADCHECK_BUDGET_S}s"
    );
    pass(
        1,
        "gradient check suite",
        &format!("8 cells, worst rel err {worst:.3e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------- 2

/// Reference full-scale parameter total and allowed relative deviation.
const PARAM_REFERENCE: f64 = 2_460_000.0;
const PARAM_BAND: f64 = 0.10;

#[test]
fn criterion_2_parameter_count() {
    let config = full_scale_defaults().model;
    let (total, breakdown) = count_params(&config);

    let sum: u64 = breakdown.iter().map(|(_, c)| c).sum();
    assert_eq!(sum, total, "breakdown must sum to the reported total");
    assert!(
        breakdown.iter().all(|(_, c)| *c > 0),
        "no parameter entry may be empty"
    );
    let deviation = (total as f64 - PARAM_REFERENCE).abs() / PARAM_REFERENCE;
    assert!(
        deviation <= PARAM_BAND,
        "total {total} deviates {:.1}% from {PARAM_REFERENCE}, band {:.0}%",
        deviation * 100.0,
        PARAM_BAND * 100.0
    );
    pass(
        2,
        "parameter count",
        &format!("total {total}, {:.1}% from reference", deviation * 100.0),
    );
}

// ----------------------------------------------------------- 3 and 4

/// Desk-run recipe shared by the training criteria. Every seed is pinned;
/// the whole pipeline is bitwise deterministic, so the scores below are
/// stable across runs and machines.
const DESK_N: usize = 500;
const DESK_DATA_SEED: u64 = 7;
const DESK_XE_EPOCH_CAP: usize = 25;
const DESK_XE_SEED: u64 = 13;

/// Criterion 3 bars.
const XE_TRAIN_BLEU_BAR: f64 = 0.90;
const XE_TRAIN_CIDER_BAR: f64 = 8.0;
const XE_HELDOUT_BLEU_BAR: f64 = 0.60;
const XE_EPOCH_BUDGET: usize = 100;
const XE_TIME_BUDGET_S: f64 = 600.0;

/// Criterion 4 recipe and bar.
const RL_LEARNING_RATE: f64 = 1e-4;
const RL_SAMPLES: usize = 2;
const RL_EPOCH_BUDGET: usize = 50;
const RL_SEED: u64 = 11;
const RL_CIDER_GAIN_BAR: f64 = 0.2;

struct DeskRun {
    vocab: Vocab,
    train: Vec<TrainExample<f32>>,
    val: Vec<TrainExample<f32>>,
    test: Vec<TrainExample<f32>>,
    model: Model<f32>,
    epochs: usize,
    elapsed_s: f64,
    train_scores: (f64, f64),
    test_scores: (f64, f64),
    max_len: usize,
}

fn desk_run() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let app = desk_defaults();
        let start = Instant::now();
        let splits = synth_generate(DESK_N, app.model.v_dim, DESK_DATA_SEED).unwrap();
        let captions = all_captions(&splits.train);
        let merges = learn_bpe(&captions, DESK_BPE_MERGES);
        let encoded: Vec<Vec<String>> = captions.iter().map(|c| bpe_encode(c, &merges)).collect();
        let vocab = Vocab::build(&encoded);

        let mut model_config = app.model;
        model_config.vocab_size = vocab.size();
        let max_len = model_config.max_len;
        let train = prepare_examples::<f32>(&splits.train, &merges, &vocab).unwrap();
        let val = prepare_examples::<f32>(&splits.val, &merges, &vocab).unwrap();
        let test = prepare_examples::<f32>(&splits.test, &merges, &vocab).unwrap();

        let train_config = TrainConfig {
            max_epochs: DESK_XE_EPOCH_CAP,
            seed: DESK_XE_SEED,
            ..app.train
        };
        let mut model: Model<f32> = Model::new(model_config, DESK_XE_SEED).unwrap();
        let logs = train_xe(&mut model, &train, &val, &vocab, &train_config).unwrap();
        let elapsed_s = start.elapsed().as_secs_f64();

        let train_scores = evaluate_with_beam(&model, &train, &vocab, 1, max_len).unwrap();
        let test_scores = evaluate_with_beam(&model, &test, &vocab, 1, max_len).unwrap();
        DeskRun {
            vocab,
            train,
            val,
            test,
            model,
            epochs: logs.len(),
            elapsed_s,
            train_scores,
            test_scores,
            max_len,
        }
    })
}

#[test]
fn criterion_3_desk_training() {
    let run = desk_run();
    let (train_bleu, train_cider) = run.train_scores;
    let (test_bleu, test_cider) = run.test_scores;

    assert!(
        train_bleu >= XE_TRAIN_BLEU_BAR,
        "train BLEU-4 {train_bleu:.6} under {XE_TRAIN_BLEU_BAR}"
    );
    assert!(
        train_cider >= XE_TRAIN_CIDER_BAR,
        "train CIDEr-D {train_cider:.6} under {XE_TRAIN_CIDER_BAR}"
    );
    assert!(
        test_bleu >= XE_HELDOUT_BLEU_BAR,
        "held-out BLEU-4 {test_bleu:.6} under {XE_HELDOUT_BLEU_BAR}"
    );
    assert!(
        run.epochs <= XE_EPOCH_BUDGET,
        "{} epochs over the {XE_EPOCH_BUDGET} budget",
        run.epochs
    );
    assert!(
        run.elapsed_s < XE_TIME_BUDGET_S,
        "desk run took {:.1}s, budget {XE_TIME_BUDGET_S}s",
        run.elapsed_s
    );
    pass(
        3,
        "desk training",
        &format!(
            "train BLEU4={train_bleu:.6} CIDErD={train_cider:.6}, held-out BLEU4={test_bleu:.6} \
             CIDErD={test_cider:.6}, {} epochs, {:.1}s",
            run.epochs, run.elapsed_s
        ),
    );
}

#[test]
fn criterion_4_policy_gradient_finetuning() {
    let run = desk_run();
    let rl_config = TrainConfig {
        learning_rate: RL_LEARNING_RATE,
        max_epochs: RL_EPOCH_BUDGET,
        rl_samples: RL_SAMPLES,
        seed: RL_SEED,
        ..desk_defaults().train
    };
    // Start from the criterion-3 model as a checkpoint: the reload drops
    // the teacher-forced optimizer state, exactly like the CLI pipeline.
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("init.ckpt");
    caplite::harness::checkpoint_save(&run.model, &ckpt).unwrap();
    let mut model = caplite::harness::checkpoint_load(&ckpt, &run.model.config).unwrap();
    let logs = finetune_rl(&mut model, &run.train, &run.val, &run.vocab, &rl_config).unwrap();
    assert!(
        logs.len() <= RL_EPOCH_BUDGET,
        "{} epochs over the {RL_EPOCH_BUDGET} budget",
        logs.len()
    );

    let (_, base_cider) = run.test_scores;
    let (rl_bleu, rl_cider) =
        evaluate_with_beam(&model, &run.test, &run.vocab, 1, run.max_len).unwrap();
    let gain = rl_cider - base_cider;
    assert!(
        gain >= RL_CIDER_GAIN_BAR,
        "held-out CIDEr-D gain {gain:.6} ({base_cider:.6} -> {rl_cider:.6}) under {RL_CIDER_GAIN_BAR}"
    );
    pass(
        4,
        "policy-gradient fine-tuning",
        &format!(
            "held-out CIDErD {base_cider:.6} -> {rl_cider:.6} (gain {gain:.6}, BLEU4={rl_bleu:.6}), \
             {} epochs",
            logs.len()
        ),
    );
}

// ---------------------------------------------------------------- 5

/// Monte-Carlo budget, per-coordinate relative tolerance, and RNG seed for
/// the enumerable-policy estimator check.
const TOY_SAMPLES: usize = 50_000;
const TOY_REL_TOLERANCE: f64 = 0.05;
const TOY_SEED: u64 = 905;

#[test]
fn criterion_5_estimator_on_enumerable_policy() {
    let mut toy = common::ToyPolicy::new();
    let exact_grad = toy.expected_reward_gradient();
    let baseline = toy.expected_reward();
    assert!(
        exact_grad.iter().all(|g| g.abs() > 1e-3),
        "fixture must keep every coordinate well away from zero"
    );

    // Per-sample policy-gradient estimates of the loss gradient; its
    // expectation is the negated expected-reward gradient. The baseline
    // rescales each sample without changing that expectation.
    let dim = exact_grad.len();
    let mut rng = Rng::new(TOY_SEED);
    let mut sum_b = vec![0.0; dim];
    let mut sumsq_b = vec![0.0; dim];
    let mut sumsq_zero = vec![0.0; dim];
    let mut sum_zero = vec![0.0; dim];
    for _ in 0..TOY_SAMPLES {
        let (reward, ce_grad) = toy.sample_ce_gradient(&mut rng);
        for i in 0..dim {
            let with_baseline = (reward - baseline) * ce_grad[i];
            let without = reward * ce_grad[i];
            sum_b[i] += with_baseline;
            sumsq_b[i] += with_baseline * with_baseline;
            sum_zero[i] += without;
            sumsq_zero[i] += without * without;
        }
    }

    let n = TOY_SAMPLES as f64;
    let mut worst_rel: f64 = 0.0;
    for i in 0..dim {
        let estimate = -(sum_b[i] / n);
        let rel = (estimate - exact_grad[i]).abs() / exact_grad[i].abs();
        worst_rel = worst_rel.max(rel);
        assert!(
            rel <= TOY_REL_TOLERANCE,
            "coordinate {i}: estimate {estimate:.5} vs exact {:.5}, rel err {rel:.4}",
            exact_grad[i]
        );
    }

    let variance = |sum: &[f64], sumsq: &[f64]| -> f64 {
        (0..dim)
            .map(|i| sumsq[i] / n - (sum[i] / n) * (sum[i] / n))
            .sum()
    };
    let var_baseline = variance(&sum_b, &sumsq_b);
    let var_zero = variance(&sum_zero, &sumsq_zero);
    assert!(
        var_baseline <= var_zero,
        "baseline variance {var_baseline:.4} exceeds zero-baseline {var_zero:.4}"
    );
    pass(
        5,
        "estimator on enumerable policy",
        &format!(
            "{TOY_SAMPLES} samples, worst rel err {worst_rel:.4}, variance {var_baseline:.3} <= {var_zero:.3}"
        ),
    );
}

// ---------------------------------------------------------------- 6

/// Corpus size for the segmentation round trip.
const BPE_ROUND_TRIP_SENTENCES: usize = 1000;

#[test]
fn criterion_6_subword_round_trip() {
    // Half the scene space, both captions each: exactly 1000 sentences.
    let splits = synth_generate(BPE_ROUND_TRIP_SENTENCES / 2, 25, 3).unwrap();
    let mut sentences = Vec::new();
    for split in [&splits.train, &splits.val, &splits.test] {
        for ex in split {
            sentences.extend(ex.captions.iter().cloned());
        }
    }
    assert_eq!(sentences.len(), BPE_ROUND_TRIP_SENTENCES);

    let merges = learn_bpe(&sentences, DESK_BPE_MERGES);
    for s in &sentences {
        let round = bpe_decode(&bpe_encode(s, &merges));
        assert_eq!(&round, s, "segmentation must invert exactly");
    }

    // Hand-derived merge order, including a count tie broken toward the
    // lexicographically smaller pair: with "aa" x3 and "ab" x1 the pairs
    // (a, a) and (a, end-of-word) both count 3, and the end-of-word marker
    // sorts before "a". Merging stops once every pair count drops below 2.
    let oracle_corpus = ["aa aa aa".to_string(), "ab".to_string()];
    let oracle = learn_bpe(&oracle_corpus, 10);
    let expect = [
        ("a".to_string(), "</w>".to_string()),
        ("a".to_string(), "a</w>".to_string()),
    ];
    assert_eq!(
        oracle.merges(),
        expect,
        "merge sequence must match the hand derivation"
    );
    assert_eq!(bpe_encode("aa", &oracle), vec!["aa".to_string()]);
    assert_eq!(
        bpe_encode("ab", &oracle),
        vec!["a@@".to_string(), "b".to_string()]
    );

    pass(
        6,
        "subword round trip",
        &format!(
            "{BPE_ROUND_TRIP_SENTENCES} sentences inverted, {} oracle merges reproduced",
            expect.len()
        ),
    );
}

// ---------------------------------------------------------------- 7

/// Width-1 agreement fixtures: untrained models across several seeds.
const BEAM_EQUIV_MODEL_SEEDS: [u64; 3] = [40, 41, 42];
const BEAM_EQUIV_FEATURE_SEEDS: [u64; 3] = [7, 8, 9];
const EXHAUSTIVE_MAX_LEN: usize = 3;
const EXHAUSTIVE_SCORE_TOLERANCE: f64 = 1e-9;

fn tiny_decode_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        d: 4,
        h: 6,
        v_dim: 8,
        vocab_size,
        max_len: 12,
        dropout_p: 0.0,
        ..ModelConfig::default()
    }
}

fn random_pooled(v_dim: usize, seed: u64) -> ImageFeatures<f32> {
    let mut rng = Rng::new(seed);
    let mut pooled = Tensor2D::zeros(1, v_dim);
    for v in pooled.row_mut(0) {
        *v = rng.uniform_in(-1.0, 1.0) as f32;
    }
    ImageFeatures { pooled, grid: None }
}

/// Score every candidate the decoder could emit within `max_len` steps:
/// content-token strings terminated by EOS plus the cut-at-cap strings,
/// ranked by log probability per emitted token, exactly as the beam ranks.
fn exhaustive_best(
    model: &Model<f32>,
    features: &ImageFeatures<f32>,
    max_len: usize,
) -> (Vec<u32>, f64, usize) {
    let content: Vec<u32> = (0..model.config.vocab_size as u32)
        .filter(|&t| t != 0 && t != 1 && t != 3 && t != EOS_ID)
        .collect();
    let mut sequences: Vec<Vec<u32>> = vec![vec![EOS_ID]];
    let mut prefixes: Vec<Vec<u32>> = vec![Vec::new()];
    for len in 1..=max_len {
        let mut next = Vec::new();
        for p in &prefixes {
            for &t in &content {
                let mut s = p.clone();
                s.push(t);
                next.push(s);
            }
        }
        for s in &next {
            if len < max_len {
                let mut with_eos = s.clone();
                with_eos.push(EOS_ID);
                sequences.push(with_eos);
            } else {
                sequences.push(s.clone());
            }
        }
        prefixes = next;
    }

    let mut best: Option<(f64, Vec<u32>)> = None;
    for seq in &sequences {
        let mut tape = Tape::new();
        let ctx = ImageContext::new(&mut tape, model, features).unwrap();
        let mut h = ctx.h0;
        let mut prev = 1u32;
        let mut total = 0.0;
        for &tok in seq {
            let state = cgru_step(&mut tape, model, &ctx, prev, h, None).unwrap();
            let row = tape.value(state.logits).row(0);
            let allowed: Vec<f32> = row
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != 0 && *i != 1 && *i != 3)
                .map(|(_, &v)| v)
                .collect();
            let lse = log_sum_exp(&allowed) as f64;
            total += row[tok as usize] as f64 - lse;
            h = state.h;
            prev = tok;
        }
        let norm = total / seq.len() as f64;
        if best.as_ref().is_none_or(|(s, _)| norm > *s) {
            best = Some((norm, seq.clone()));
        }
    }
    let (score, mut tokens) = best.unwrap();
    if tokens.last() == Some(&EOS_ID) {
        tokens.pop();
    }
    (tokens, score, sequences.len())
}

#[test]
fn criterion_7_decoding_equivalences() {
    // Width 1 must reproduce greedy decoding exactly.
    let mut nonempty = 0;
    for &ms in &BEAM_EQUIV_MODEL_SEEDS {
        let model: Model<f32> = Model::new(tiny_decode_config(9), ms).unwrap();
        for &fs in &BEAM_EQUIV_FEATURE_SEEDS {
            let features = random_pooled(model.config.v_dim, fs);
            let greedy = greedy_decode(&model, &features, model.config.max_len).unwrap();
            let (beamed, _) = beam_search(&model, &features, 1, model.config.max_len).unwrap();
            assert_eq!(beamed, greedy, "width-1 beam diverged (seeds {ms}/{fs})");
            nonempty += usize::from(!greedy.is_empty());
        }
    }
    assert!(nonempty > 0, "fixtures must exercise nonempty captions");

    // A width of 27 covers the whole three-token, three-step space, so it
    // must return the exhaustive argmax.
    let mut spaces = 0;
    for &ms in &BEAM_EQUIV_MODEL_SEEDS {
        let model: Model<f32> = Model::new(tiny_decode_config(6), ms).unwrap();
        for &fs in &BEAM_EQUIV_FEATURE_SEEDS {
            let features = random_pooled(model.config.v_dim, fs);
            let (expect, expect_score, space) =
                exhaustive_best(&model, &features, EXHAUSTIVE_MAX_LEN);
            let (tokens, score) = beam_search(&model, &features, 27, EXHAUSTIVE_MAX_LEN).unwrap();
            assert_eq!(
                tokens, expect,
                "wide beam missed the argmax (seeds {ms}/{fs})"
            );
            assert!(
                (score - expect_score).abs() < EXHAUSTIVE_SCORE_TOLERANCE,
                "score {score} vs exhaustive {expect_score}"
            );
            spaces = space;
        }
    }
    assert_eq!(
        spaces, 15,
        "3 effective tokens over 3 steps enumerate 15 candidates"
    );

    // The CLI decoder defaults to a width of 3.
    let dir = tempfile::tempdir().unwrap();
    let help = common::run_cli(dir.path(), &["decode", "--help"]);
    assert!(help.status.success());
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(
        text.contains("--beam") && text.contains("[default: 3]"),
        "decode help should document the default width: {text}"
    );

    pass(
        7,
        "decoding equivalences",
        "width 1 == greedy on 9 fixtures, width 27 == exhaustive on 9 fixtures, default width 3",
    );
}

// ---------------------------------------------------------------- 8

/// Tolerance for the hand-computed metric values.
const METRIC_TOLERANCE: f64 = 1e-6;

#[test]
fn criterion_8_metric_oracles() {
    // Three matching words against a four-word reference: precisions all
    // one, the empty 4-gram order drops out, brevity penalty exp(1 - 4/3).
    let cands = vec![tokenize("the cat sat")];
    let refs = vec![vec![tokenize("the cat sat down")]];
    let bleu = bleu4(&cands, &refs).unwrap();
    let bleu_expect = (-1.0f64 / 3.0).exp();
    assert!(
        (bleu - bleu_expect).abs() < METRIC_TOLERANCE,
        "BLEU {bleu} vs hand value {bleu_expect}"
    );

    // Two images, three words each, candidate equal to its reference:
    // orders 1..3 cosine one, order 4 empty, mean 0.75, scaled to 7.5.
    let two_image: Vec<Vec<Vec<String>>> = vec![
        vec![tokenize("a red square")],
        vec![tokenize("a blue circle")],
    ];
    let idf = NGramStats::from_references(&two_image).unwrap();
    let cider = cider_d_sentence(
        &tokenize("a red square"),
        &two_image[0],
        &idf,
        DEFAULT_SIGMA,
    );
    assert!(
        (cider - 7.5).abs() < METRIC_TOLERANCE,
        "CIDEr-D {cider} vs hand value 7.5"
    );

    // Identical corpora sit at both maxima. Captions are five words so
    // every order is populated; the two images share no words, keeping
    // every weight nonzero.
    let refs = vec![
        vec![tokenize("a red square sits here")],
        vec![tokenize("a blue circle floats there")],
    ];
    let cands: Vec<Vec<String>> = refs.iter().map(|r| r[0].clone()).collect();
    let stats = NGramStats::from_references(&refs).unwrap();
    let b = bleu4(&cands, &refs).unwrap();
    let c = cider_d(&cands, &refs, &stats, DEFAULT_SIGMA).unwrap();
    assert!((b - 1.0).abs() < METRIC_TOLERANCE, "identical BLEU {b}");
    assert!((c - 10.0).abs() < METRIC_TOLERANCE, "identical CIDEr-D {c}");

    pass(
        8,
        "metric oracles",
        &format!("BLEU4 {bleu:.9} == exp(-1/3), CIDErD {cider:.6} == 7.5, identical corpora 1.0 and 10.0"),
    );
}

// ---------------------------------------------------------------- 9

/// Small end-to-end configuration for the reproducibility runs.
const REPRO_CONFIG: &str = "d = 16\nh = 32\nv_dim = 32\nmax_epochs = 3\n";
const REPRO_N: &str = "120";
const REPRO_SEED: &str = "5";

/// Epoch logs with the trailing wall-clock column removed; every other
/// column must reproduce bitwise.
fn strip_elapsed(log: &str) -> String {
    log.lines()
        .map(|line| line.rsplit_once('\t').map_or(line, |(rest, _)| rest))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_9_bitwise_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("repro.cfg"), REPRO_CONFIG).unwrap();

    for run in ["a", "b"] {
        std::fs::create_dir(dir.path().join(run)).unwrap();
        common::run_cli_ok(
            dir.path(),
            &[
                "synth-data",
                "--config",
                "repro.cfg",
                "--seed",
                REPRO_SEED,
                "--n",
                REPRO_N,
                "--out-dir",
                &format!("{run}/data"),
            ],
        );
        common::run_cli_ok(
            dir.path(),
            &[
                "bpe-learn",
                "--config",
                "repro.cfg",
                "--data",
                &format!("{run}/data/train.jsonl"),
                "--merges-out",
                &format!("{run}/merges.txt"),
                "--vocab-out",
                &format!("{run}/vocab.txt"),
            ],
        );
        common::run_cli_ok(
            dir.path(),
            &[
                "train",
                "--config",
                "repro.cfg",
                "--seed",
                REPRO_SEED,
                "--data-dir",
                &format!("{run}/data"),
                "--merges",
                &format!("{run}/merges.txt"),
                "--vocab",
                &format!("{run}/vocab.txt"),
                "--checkpoint-out",
                &format!("{run}/model.ckpt"),
                "--log-out",
                &format!("{run}/train.log"),
            ],
        );
    }

    let read = |p: String| std::fs::read(dir.path().join(p)).unwrap();
    let ckpt_a = read("a/model.ckpt".into());
    let ckpt_b = read("b/model.ckpt".into());
    assert!(!ckpt_a.is_empty());
    assert_eq!(ckpt_a, ckpt_b, "checkpoints must be byte-identical");

    for file in [
        "data/train.jsonl",
        "data/val.jsonl",
        "data/test.jsonl",
        "merges.txt",
        "vocab.txt",
    ] {
        assert_eq!(
            read(format!("a/{file}")),
            read(format!("b/{file}")),
            "{file} must be byte-identical"
        );
    }

    let log_a = strip_elapsed(&String::from_utf8(read("a/train.log".into())).unwrap());
    let log_b = strip_elapsed(&String::from_utf8(read("b/train.log".into())).unwrap());
    assert!(!log_a.is_empty());
    assert_eq!(
        log_a, log_b,
        "epoch logs must match outside the wall-clock column"
    );

    pass(
        9,
        "bitwise reproducibility",
        &format!(
            "{} checkpoint bytes and {} log lines identical",
            ckpt_a.len(),
            log_a.lines().count()
        ),
    );
}
