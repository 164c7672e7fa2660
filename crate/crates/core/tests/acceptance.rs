//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use seqrl::data::{Example, EOS};
use seqrl::diagnostics::corpus_metric;
use seqrl::experiment::{cmd_gen_data, cmd_pretrain, cmd_rl, ExperimentConfig, RunSummary};
use seqrl::model::{
    ce_loss_and_grads, greedy_decode, sample_sequence, sequence_log_prob, sequence_log_prob_grad,
    tempered_softmax, Gradients, SeqModel,
};
use seqrl::rewards::{baseline_apply, minmax_scale, mrt_weights, sentence_bleu, BaseReward, BaselineState, RewardTransform};
use seqrl::tensor::{self, AttnShape};
use seqrl::training::{exact_expected_reward, exact_pg_gradient, mrt_risk, pg_gradient, Algorithm, TrainConfig};

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

fn report(id: &str, name: &str, o: &Outcome, failures: &mut usize) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    if !o.pass {
        *failures += 1;
    }
    println!("{tag} {id:>5} {name}: {}", o.detail);
}

fn bleu_reward(h: &[usize], r: &[usize]) -> f64 {
    sentence_bleu(h, r, 4)
}

fn exact_match(h: &[usize], r: &[usize]) -> f64 {
    (h == r) as u8 as f64
}

const TINY_SOURCE: [usize; 2] = [0, 1];
const TINY_REFERENCE: [usize; 2] = [1, 0];

fn tiny_example() -> Example {
    Example {
        source: TINY_SOURCE.to_vec(),
        reference: TINY_REFERENCE.to_vec(),
    }
}

fn estimator_unbiasedness() -> Outcome {
    let model = tiny_policy(11, 1.0);
    let exact = exact_pg_gradient(&model, &TINY_SOURCE, &TINY_REFERENCE, 3, 1.0, bleu_reward).unwrap();
    let ex = tiny_example();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 50_000;
    let mut sum = Gradients::zeros_like(&model);
    let start = Instant::now();
    for _ in 0..n {
        let g = pg_gradient(&model, &[&ex], 1.0, bleu_reward, |r| r.to_vec(), &mut rng).unwrap();
        sum.add_assign(&g.grads);
    }
    sum.scale(1.0 / n as f64);
    let diff: Vec<f64> = sum.flat().iter().zip(exact.flat()).map(|(a, b)| a - b).collect();
    let rel = l2(&diff) / l2(&exact.flat());
    let secs = start.elapsed().as_secs_f64();
    outcome(
        rel <= 0.05 && secs < 300.0,
        format!("relative L2 error {rel:.4} (tol 0.05) over {n} samples in {secs:.1}s"),
    )
}

fn score_function_identity() -> Outcome {
    let mut worst_identity: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for seed in 0..5 {
        let model = tiny_policy(seed, 1.0);
        for tau in [0.8, 1.0, 1.2] {
            let id = exact_pg_gradient(&model, &TINY_SOURCE, &TINY_REFERENCE, 3, tau, |_, _| 1.0).unwrap();
            worst_identity = worst_identity.max(id.max_abs());
            let plain = exact_pg_gradient(&model, &TINY_SOURCE, &TINY_REFERENCE, 3, tau, bleu_reward).unwrap();
            let shifted =
                exact_pg_gradient(&model, &TINY_SOURCE, &TINY_REFERENCE, 3, tau, |h, r| bleu_reward(h, r) - 0.37).unwrap();
            let diff: Vec<f64> = plain.flat().iter().zip(shifted.flat()).map(|(a, b)| a - b).collect();
            worst_shift = worst_shift.max(linf(&diff));
        }
    }
    outcome(
        worst_identity <= 1e-8 && worst_shift <= 1e-8,
        format!("max |Σ p∇log p| {worst_identity:.2e}, max baseline shift effect {worst_shift:.2e} (tol 1e-8)"),
    )
}

/// Summed per-coordinate variance of `n` single-sample estimates.
fn estimator_variance(
    model: &SeqModel,
    ex: &Example,
    n: usize,
    mut weight: impl FnMut(f64) -> f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let dim = model.num_parameters();
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for i in 0..n {
        let g = pg_gradient(model, &[ex], 1.0, exact_match, |r| vec![weight(r[0])], rng).unwrap();
        let flat = g.grads.flat();
        let k = (i + 1) as f64;
        for ((m, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(flat) {
            let d = x - *m;
            *m += d / k;
            *s += d * (x - *m);
        }
    }
    m2.iter().map(|s| s / (n - 1) as f64).sum()
}

/// Expected reward, then summed estimator variance without and with a
/// warmed-up running-mean baseline, and the warmed baseline value.
fn baseline_variances(model: &SeqModel, ex: &Example, rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let expected = exact_expected_reward(model, &ex.source, &ex.reference, 3, 1.0, exact_match).unwrap();
    let n = 10_000;
    let plain = estimator_variance(model, ex, n, |r| r, rng);
    // Warm the running mean up on separate draws before measuring.
    let mut state = BaselineState::default();
    for _ in 0..n {
        let h = sample_sequence(model, &ex.source, 1.0, 3, rng).unwrap();
        state = baseline_apply(exact_match(h.content(), &ex.reference), state).1;
    }
    let warm = state.running_mean;
    let with_baseline = estimator_variance(
        model,
        ex,
        n,
        |r| {
            let (shifted, next) = baseline_apply(r, state);
            state = next;
            shifted
        },
        rng,
    );
    (expected, plain, with_baseline, warm)
}

fn variance_reduction() -> Outcome {
    let model = tiny_policy(11, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ex = Example {
        source: TINY_SOURCE.to_vec(),
        reference: TINY_REFERENCE.to_vec(),
    };
    let (expected, plain, with_baseline, warm) = baseline_variances(&model, &ex, &mut rng);
    // Not part of the verdict: with the greedy output as reference the hit
    // rate is high and a constant baseline can raise the variance.
    let greedy = Example {
        source: TINY_SOURCE.to_vec(),
        reference: greedy_decode(&model, &TINY_SOURCE, 3).unwrap().content().to_vec(),
    };
    let (g_expected, g_plain, g_with, _) = baseline_variances(&model, &greedy, &mut rng);
    outcome(
        with_baseline < plain,
        format!(
            "summed variance {with_baseline:.4e} with baseline vs {plain:.4e} without \
             (E[r] = {expected:.4}, warmed baseline {warm:.4}); greedy reference: \
             {g_with:.4e} vs {g_plain:.4e} (E[r] = {g_expected:.4})"
        ),
    )
}

fn op_checks() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = Vec::new();
    let floor = 1e-6;
    let w45 = random_matrix(4, 5, &mut rng);
    out.push((
        "matmul",
        max_fd_error(&[random_matrix(4, 3, &mut rng), random_matrix(3, 5, &mut rng)], |t, v| {
            let y = t.matmul(v[0], v[1]);
            t.weighted_sum(y, w45.clone())
        }, floor),
    ));
    let w42 = random_matrix(4, 2, &mut rng);
    out.push((
        "matmul_nt",
        max_fd_error(&[random_matrix(4, 3, &mut rng), random_matrix(2, 3, &mut rng)], |t, v| {
            let y = t.matmul_nt(v[0], v[1]);
            t.weighted_sum(y, w42.clone())
        }, floor),
    ));
    let w34 = random_matrix(3, 4, &mut rng);
    let c34 = random_matrix(3, 4, &mut rng);
    let mask = random_matrix(3, 4, &mut rng);
    out.push((
        "add/add_row/add_const/scale/mul_const",
        max_fd_error(
            &[random_matrix(3, 4, &mut rng), random_matrix(3, 4, &mut rng), random_matrix(1, 4, &mut rng)],
            |t, v| {
                let y = t.add(v[0], v[1]);
                let y = t.add_row(y, v[2]);
                let y = t.add_const(y, &c34);
                let y = t.scale(y, 0.7);
                let y = t.mul_const(y, mask.clone());
                t.weighted_sum(y, w34.clone())
            },
            floor,
        ),
    ));
    out.push((
        "relu/affine",
        max_fd_error(
            &[random_matrix(3, 5, &mut rng), random_matrix(5, 4, &mut rng), random_matrix(1, 4, &mut rng)],
            |t, v| {
                let y = t.affine(v[0], v[1], v[2]);
                let y = t.relu(y);
                t.weighted_sum(y, w34.clone())
            },
            floor,
        ),
    ));
    let w35 = random_matrix(3, 5, &mut rng);
    out.push((
        "layer_norm",
        max_fd_error(
            &[random_matrix(3, 5, &mut rng), random_matrix(1, 5, &mut rng), random_matrix(1, 5, &mut rng)],
            |t, v| {
                let y = t.layer_norm(v[0], v[1], v[2]);
                t.weighted_sum(y, w35.clone())
            },
            floor,
        ),
    ));
    let mut worst_attn: f64 = 0.0;
    for causal in [None, Some(0), Some(2)] {
        let e = max_fd_error(
            &[random_matrix(3, 4, &mut rng), random_matrix(5, 4, &mut rng), random_matrix(5, 4, &mut rng)],
            |t, v| {
                let shape = AttnShape {
                    heads: 2,
                    causal_offset: causal,
                };
                let y = t.attention(v[0], v[1], v[2], shape);
                t.weighted_sum(y, w34.clone())
            },
            floor,
        );
        worst_attn = worst_attn.max(e);
    }
    out.push(("attention", worst_attn));
    let w26 = random_matrix(2, 6, &mut rng);
    out.push((
        "softmax/log_softmax",
        max_fd_error(&[random_matrix(2, 6, &mut rng)], |t, v| {
            let s = t.softmax(v[0]);
            let l = t.log_softmax(v[0]);
            let y = t.add(s, l);
            t.weighted_sum(y, w26.clone())
        }, floor),
    ));
    let w36 = random_matrix(3, 6, &mut rng);
    out.push((
        "gather/concat_cols",
        max_fd_error(&[random_matrix(5, 4, &mut rng), random_matrix(3, 2, &mut rng)], |t, v| {
            let e = t.gather(v[0], &[4, 1, 4]);
            let c = t.concat_cols(&[e, v[1]]);
            t.weighted_sum(c, w36.clone())
        }, floor),
    ));
    out
}

fn autodiff_correctness() -> Outcome {
    let tol = 1e-4;
    let floor = 1e-6;
    let mut checks = op_checks();

    let model = SeqModel::with_gain(tiny_config(7, 6), 5, 1.5).unwrap();
    let source = [4, 5, 6];
    let tokens = [5, 4, 6, EOS];
    let mut g = Gradients::zeros_like(&model);
    sequence_log_prob_grad(&model, &source, &tokens, 0.8, 1.0, &mut g).unwrap();
    checks.push((
        "tempered sequence log-prob",
        max_param_fd_error(&model, &g.flat(), |m| sequence_log_prob(m, &source, &tokens, 0.8).unwrap(), floor),
    ));

    let mut smoothed = model.clone();
    smoothed.config.label_smoothing = 0.1;
    let ex = Example {
        source: source.to_vec(),
        reference: vec![6, 5, 4],
    };
    let (_, ce) = ce_loss_and_grads(&smoothed, &[&ex], 0.1, None).unwrap();
    checks.push((
        "label-smoothed cross-entropy",
        max_param_fd_error(&smoothed, &ce.flat(), |m| ce_loss_and_grads(m, &[&ex], 0.1, None).unwrap().0, floor),
    ));

    let samples = vec![vec![4, 5, EOS], vec![6, EOS], vec![5, 5, 6, EOS], vec![4, 4, 4, 4, 4, 4]];
    let rewards = [0.1, 0.9, 0.4, 0.0];
    let mut worst_mrt: f64 = 0.0;
    for alpha in [0.005, 0.5, 1.0] {
        let mut g = Gradients::zeros_like(&model);
        mrt_risk(&model, &source, &samples, &rewards, alpha, Some((&mut g, 1.0))).unwrap();
        let e = max_param_fd_error(
            &model,
            &g.flat(),
            |m| mrt_risk(m, &source, &samples, &rewards, alpha, None).unwrap(),
            floor,
        );
        worst_mrt = worst_mrt.max(e);
    }
    checks.push(("MRT risk through Q", worst_mrt));

    let worst = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    let failing: Vec<&str> = checks.iter().filter(|c| c.1 > tol).map(|c| c.0).collect();
    let detail = if failing.is_empty() {
        format!("{} checks, worst relative error {worst:.2e} (tol {tol:.0e})", checks.len())
    } else {
        format!("worst {worst:.2e} (tol {tol:.0e}); failing: {}", failing.join(", "))
    };
    outcome(failing.is_empty(), detail)
}

fn reward_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cases = 500;
    let mut worst_sentence: f64 = 0.0;
    for _ in 0..cases {
        let alphabet = rng.gen_range(2..6);
        let h = random_sentence(&mut rng, 9, alphabet);
        let r = random_sentence(&mut rng, 9, alphabet);
        let order = rng.gen_range(1..=4);
        worst_sentence = worst_sentence.max((sentence_bleu(&h, &r, order) - oracle_sentence_bleu(&h, &r, order)).abs());
    }
    let mut worst_corpus: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.gen_range(1..6);
        let alphabet = rng.gen_range(2..6);
        let hyps: Vec<Vec<usize>> = (0..n).map(|_| random_sentence(&mut rng, 8, alphabet)).collect();
        let refs: Vec<Vec<usize>> = (0..n).map(|_| random_sentence(&mut rng, 8, alphabet)).collect();
        let got = corpus_metric(&hyps, &refs).unwrap();
        worst_corpus = worst_corpus.max((got - oracle_corpus_bleu(&hyps, &refs)).abs());
    }
    outcome(
        worst_sentence <= 1e-9 && worst_corpus <= 1e-9,
        format!("{cases}+{cases} random cases; max deviation sentence {worst_sentence:.1e}, corpus {worst_corpus:.1e} (tol 1e-9)"),
    )
}

fn transform_exactness() -> Outcome {
    let scaled = minmax_scale(&[0.2, 0.5, 0.8]);
    let minmax_err = linf(&[scaled[0] + 0.5, scaled[1], scaled[2] - 0.5]);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut renorm_err: f64 = 0.0;
    let mut shift_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..8);
        let lp: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..0.0)).collect();
        let w = mrt_weights(&lp, 1.0);
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        for (q, v) in w.q.iter().zip(&lp) {
            renorm_err = renorm_err.max((q - v.exp() / total).abs());
        }
        let c = rng.gen_range(-50.0..50.0);
        let alpha = rng.gen_range(0.001..2.0);
        let shifted: Vec<f64> = lp.iter().map(|v| v + c).collect();
        let (a, b) = (mrt_weights(&lp, alpha), mrt_weights(&shifted, alpha));
        for (x, y) in a.q.iter().zip(&b.q) {
            shift_err = shift_err.max((x - y).abs());
        }
    }

    let mut grad_max: f64 = 0.0;
    for seed in 0..5 {
        let model = SeqModel::with_gain(tiny_config(7, 6), seed, 2.0).unwrap();
        let samples = vec![vec![4, EOS], vec![5, 6, EOS], vec![6, 6, 6, 6, 6, 6], vec![EOS]];
        let r = rng.gen_range(0.0..1.0);
        let mut g = Gradients::zeros_like(&model);
        mrt_risk(&model, &[4, 5], &samples, &[r; 4], 0.005, Some((&mut g, 1.0))).unwrap();
        grad_max = grad_max.max(g.max_abs());
    }
    outcome(
        minmax_err <= 1e-12 && renorm_err <= 1e-9 && shift_err <= 1e-9 && grad_max <= 1e-8,
        format!(
            "minmax deviation {minmax_err:.1e}; Q(α=1) vs renormalized p {renorm_err:.1e}; \
             shift {shift_err:.1e}; equal-reward MRT gradient {grad_max:.1e}"
        ),
    )
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn temperature_behavior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let taus: Vec<f64> = (1..=40).map(|i| i as f64 * 0.125).collect();
    let mut entropy_violations = 0;
    let mut bitwise_mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..20);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let hs: Vec<f64> = taus.iter().map(|&t| entropy(&tempered_softmax(&z, t).unwrap())).collect();
        entropy_violations += hs.windows(2).filter(|w| w[1] < w[0] - 1e-12).count();
        let mut plain = z.clone();
        tensor::softmax_in_place(&mut plain);
        bitwise_mismatches += (tempered_softmax(&z, 1.0).unwrap() != plain) as usize;
    }
    let mut greedy_mismatches = 0;
    for case in 0..1000u64 {
        let model = SeqModel::with_gain(tiny_config(9, 6), case / 10, 3.0).unwrap();
        let len = rng.gen_range(1..=6);
        let source: Vec<usize> = (0..len).map(|_| rng.gen_range(4..9)).collect();
        let g = greedy_decode(&model, &source, 6).unwrap();
        let s = sample_sequence(&model, &source, 1e-3, 6, &mut rng).unwrap();
        greedy_mismatches += (g.tokens != s.tokens) as usize;
    }
    outcome(
        entropy_violations == 0 && bitwise_mismatches == 0 && greedy_mismatches == 0,
        format!(
            "entropy decreases {entropy_violations}/1000 vectors; τ=1 bitwise mismatches {bitwise_mismatches}; \
             τ=1e-3 vs greedy mismatches {greedy_mismatches}/1000"
        ),
    )
}

struct Experiment {
    ckpt: PathBuf,
    cfg: ExperimentConfig,
    root: PathBuf,
}

impl Experiment {
    fn setup(root: &Path) -> Experiment {
        let mut cfg = ExperimentConfig::default();
        cfg.data.dir = root.join("data");
        cfg.run.out_dir = root.join("runs");
        cmd_gen_data(&cfg, None).unwrap();
        let ckpt = cmd_pretrain(&cfg, None, Some(&root.join("pretrain"))).unwrap();
        Experiment {
            ckpt,
            cfg,
            root: root.to_path_buf(),
        }
    }

    fn run(&self, name: &str, edit: impl FnOnce(&mut TrainConfig)) -> RunSummary {
        let mut cfg = self.cfg.clone();
        edit(&mut cfg.train);
        let start = Instant::now();
        let s = cmd_rl(&cfg, &self.ckpt, None, Some(&self.root.join("runs").join(name))).unwrap();
        eprintln!(
            "  {name}: k=1 {} ({:.0}s)",
            s.metric("bleu_k1").unwrap(),
            start.elapsed().as_secs_f64()
        );
        s
    }
}

fn bleu(s: &RunSummary) -> f64 {
    s.metric("bleu_k1").unwrap().mean
}

struct Runs {
    pretrained: f64,
    pg: RunSummary,
    pg_baseline: RunSummary,
    pg_constant: RunSummary,
    self_train: RunSummary,
    mrt: RunSummary,
    fine_tune: RunSummary,
    pg_cold: RunSummary,
    pg_hot: RunSummary,
}

fn run_experiments(root: &Path) -> Runs {
    let start = Instant::now();
    let exp = Experiment::setup(root);
    eprintln!("  pretraining done ({:.0}s)", start.elapsed().as_secs_f64());
    let pg = exp.run("pg", |t| t.algorithm = Algorithm::Pg);
    let pretrained = pg.baseline.beam.at(1).unwrap();
    let runs = Runs {
        pretrained,
        pg_baseline: exp.run("pg-baseline", |t| {
            t.algorithm = Algorithm::Pg;
            t.transform = RewardTransform::Baseline;
        }),
        pg_constant: exp.run("pg-constant", |t| {
            t.algorithm = Algorithm::Pg;
            t.reward = BaseReward::Constant;
            t.learning_rate = 1e-5;
        }),
        self_train: exp.run("self-train", |t| {
            t.algorithm = Algorithm::SelfTrain;
            t.learning_rate = 1e-5;
        }),
        mrt: exp.run("mrt", |t| {
            t.algorithm = Algorithm::Mrt;
            t.n_samples = 5;
        }),
        fine_tune: exp.run("fine-tune", |t| t.algorithm = Algorithm::FineTune),
        pg_cold: exp.run("pg-tau0.8", |t| {
            t.algorithm = Algorithm::Pg;
            t.tau = 0.8;
        }),
        pg_hot: exp.run("pg-tau1.2", |t| {
            t.algorithm = Algorithm::Pg;
            t.tau = 1.2;
        }),
        pg,
    };
    eprintln!("  experiments done ({:.0}s)", start.elapsed().as_secs_f64());
    runs
}

fn variant_ordering(r: &Runs) -> Vec<(&'static str, Outcome)> {
    let base = r.pretrained;
    let pg = bleu(&r.pg);
    let rl = [
        ("pg", pg),
        ("pg+baseline", bleu(&r.pg_baseline)),
        ("pg+constant", bleu(&r.pg_constant)),
        ("mrt", bleu(&r.mrt)),
        ("pg τ=0.8", bleu(&r.pg_cold)),
        ("pg τ=1.2", bleu(&r.pg_hot)),
    ];
    let ft = bleu(&r.fine_tune);
    let best_rl = rl.iter().chain([("self-train", bleu(&r.self_train))].iter()).fold(("", f64::MIN), |a, b| {
        if b.1 > a.1 {
            *b
        } else {
            a
        }
    });
    vec![
        (
            "8a",
            outcome(pg - base >= 2.0, format!("pg {pg:.2} vs pretrained {base:.2} (need +2.00)")),
        ),
        (
            "8b",
            outcome(
                (bleu(&r.pg_constant) - base).abs() <= 0.5 && (bleu(&r.self_train) - base).abs() <= 0.5,
                format!(
                    "pg+constant {:.2}, self-train {:.2}, pretrained {base:.2} (tol ±0.5)",
                    bleu(&r.pg_constant),
                    bleu(&r.self_train)
                ),
            ),
        ),
        (
            "8c",
            outcome(bleu(&r.pg_baseline) >= pg, format!("pg+baseline {:.2} vs pg {pg:.2}", bleu(&r.pg_baseline))),
        ),
        ("8d", outcome(bleu(&r.mrt) >= pg, format!("mrt {:.2} vs pg {pg:.2}", bleu(&r.mrt)))),
        (
            "8e",
            outcome(ft >= best_rl.1, format!("fine-tune {ft:.2} vs best other {} {:.2}", best_rl.0, best_rl.1)),
        ),
    ]
}

fn delta_mode(s: &RunSummary) -> f64 {
    s.metric("delta_p_mode_pct").map(|m| m.mean).unwrap_or(f64::NAN)
}

fn peakiness_ordering(r: &Runs) -> Outcome {
    let (cold, mid, hot) = (delta_mode(&r.pg_cold), delta_mode(&r.pg), delta_mode(&r.pg_hot));
    outcome(
        cold > mid && mid > hot,
        format!("Δp_mode τ=0.8 {cold:+.2}%, τ=1.0 {mid:+.2}%, τ=1.2 {hot:+.2}%"),
    )
}

/// Mean over seeds of the drop in the fraction of gold tokens in `bucket`.
fn bucket_drop(s: &RunSummary, bucket: usize) -> f64 {
    let before = s.baseline.ranks.fractions()[bucket];
    let after: f64 = s.runs.iter().map(|run| run.eval.ranks.fractions()[bucket]).sum::<f64>() / s.runs.len() as f64;
    before - after
}

fn upwards_mobility(r: &Runs) -> Outcome {
    let Some(worst) = r.pg.baseline.ranks.worst_occupied() else {
        return outcome(false, "pretrained histogram is empty");
    };
    let hot = bucket_drop(&r.pg_hot, worst);
    let cold = bucket_drop(&r.pg_cold, worst);
    outcome(
        hot >= cold,
        format!(
            "worst occupied bucket {}: drop {hot:.5} after τ=1.2 vs {cold:.5} after τ=0.8",
            seqrl::diagnostics::RankHistogram::label(worst)
        ),
    )
}

fn beam_gap(s: &RunSummary) -> f64 {
    let g: Vec<f64> = s.runs.iter().map(|r| r.eval.beam.at(5).unwrap() - r.eval.beam.at(50).unwrap()).collect();
    g.iter().sum::<f64>() / g.len() as f64
}

fn beam_curse(r: &Runs) -> Outcome {
    let base = r.pg.baseline.beam.at(5).unwrap() - r.pg.baseline.beam.at(50).unwrap();
    let rl = [
        ("pg", beam_gap(&r.pg)),
        ("pg+baseline", beam_gap(&r.pg_baseline)),
        ("pg+constant", beam_gap(&r.pg_constant)),
        ("mrt", beam_gap(&r.mrt)),
        ("pg τ=0.8", beam_gap(&r.pg_cold)),
        ("pg τ=1.2", beam_gap(&r.pg_hot)),
    ];
    let worst = rl.iter().fold(("", f64::MIN), |a, b| if b.1 > a.1 { *b } else { a });
    outcome(
        rl.iter().all(|(_, g)| *g <= base),
        format!("pretrained gap {base:+.2}; largest RL gap {} {:+.2}", worst.0, worst.1),
    )
}

fn short_config(root: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.dir = root.join("data");
    cfg.data.train_size = 300;
    cfg.data.dev_size = 40;
    cfg.data.test_size = 40;
    cfg.pretrain.max_steps = 30;
    cfg.pretrain.eval_every = 10;
    cfg.train.algorithm = Algorithm::Pg;
    cfg.train.transform = RewardTransform::Baseline;
    cfg.train.max_steps = 20;
    cfg.train.eval_every = 10;
    cfg.eval.beam_sizes = vec![1, 3];
    cfg
}

fn short_run(root: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg = short_config(root);
    cmd_gen_data(&cfg, None).unwrap();
    let ckpt = cmd_pretrain(&cfg, Some(3), Some(&root.join("pretrain"))).unwrap();
    cmd_rl(&cfg, &ckpt, Some(&[5]), Some(&root.join("rl"))).unwrap();
    [
        "pretrain/model.ckpt",
        "pretrain/metrics.jsonl",
        "rl/seed-5/model.ckpt",
        "rl/seed-5/metrics.jsonl",
        "rl/seed-5/result.json",
    ]
    .iter()
    .map(|f| (f.to_string(), fs::read(root.join(f)).unwrap()))
    .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = short_run(a.path());
    let second = short_run(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let bytes: usize = first.iter().map(|f| f.1.len()).sum();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts ({bytes} bytes) identical across two runs", first.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() {
    let mut failures = 0;
    let timed = |f: fn() -> Outcome| {
        let start = Instant::now();
        let mut o = f();
        o.detail.push_str(&format!(" [{:.1}s]", start.elapsed().as_secs_f64()));
        o
    };
    report("1", "estimator unbiasedness", &timed(estimator_unbiasedness), &mut failures);
    report("2", "score-function identity", &timed(score_function_identity), &mut failures);
    report("3", "variance reduction", &timed(variance_reduction), &mut failures);
    report("4", "autodiff correctness", &timed(autodiff_correctness), &mut failures);
    report("5", "reward oracle equivalence", &timed(reward_oracles), &mut failures);
    report("6", "transform exactness", &timed(transform_exactness), &mut failures);
    report("7", "temperature behavior", &timed(temperature_behavior), &mut failures);

    let dir = tempfile::tempdir().unwrap();
    eprintln!("running cross-domain experiments (3 seeds per variant)");
    let runs = run_experiments(dir.path());
    for (id, o) in variant_ordering(&runs) {
        report(id, "cross-domain variant ordering", &o, &mut failures);
    }
    report("9", "peakiness ordering", &peakiness_ordering(&runs), &mut failures);
    report("10", "upwards mobility", &upwards_mobility(&runs), &mut failures);
    report("11", "beam-curse mitigation", &beam_curse(&runs), &mut failures);
    report("12", "determinism", &timed(determinism), &mut failures);

    println!("{failures} criteria failed");
    if failures > 0 {
        std::process::exit(1);
    }
}
