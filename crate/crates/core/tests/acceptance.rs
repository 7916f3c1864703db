//! End-to-end acceptance checks. Runs with its own `main` so that every
//! criterion prints a PASS/FAIL line whether or not it passes.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nclabel::confusion::{zero_one_loss, ClassProbability, CostSensitiveClassifier};
use nclabel::cpe::{self, TrainConfig};
use nclabel::data::{bayes_oracle, Dataset, SyntheticSpec, ORACLE_EVAL_POINTS};
use nclabel::harness::{run_experiment, Algo, DataSource, NoiseSource, RunConfig, RunResult, DEFAULT_TEST_SIZE};
use nclabel::measures::{micro_f1_parts, ConfusionMatrix, MeasureName, MeasureSpec};
use nclabel::ncbs::{self, BsTrace};
use nclabel::ncfw::{self, fw_weights};
use nclabel::{Matrix, NoiseModel, NoiseScheme};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 correction identities", correction_identities),
        ("2 measure golden values", measure_golden_values),
        ("3 gradient correctness", gradient_correctness),
        ("4 exhaustive confusion oracle", exhaustive_confusion_oracle),
        ("5 reduction to uncorrected baselines", reduction_property),
        ("6 bisection and mixture structure", bisection_structure),
        ("7 sample-size and noise trends", sample_size_and_noise_trends),
        ("8 corrected beats uncorrected", baseline_direction),
        ("9 near-Bayes consistency", near_bayes_consistency),
        ("10 estimated noise matrix pathway", estimated_noise_pathway),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({secs:.1}s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({secs:.1}s) {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------- independent helpers ----------

fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = (0..k).map(|l| a[(i, l)] * b[(l, j)]).sum();
        }
    }
    Matrix::new(n, m, out).unwrap()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn frobenius(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn random_confusion(n: usize, rng: &mut impl Rng) -> Matrix {
    let raw: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    Matrix::new(n, n, raw.into_iter().map(|v| v / s).collect()).unwrap()
}

fn random_channel(n: usize, rng: &mut impl Rng) -> NoiseModel {
    let sigma = rng.gen::<f64>() * 0.5 * (n - 1) as f64 / n as f64;
    if rng.gen::<bool>() {
        NoiseModel::uniform(n, sigma).unwrap()
    } else {
        NoiseModel::random_column(n, sigma, rng).unwrap()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn synthetic_config(algo: Algo, measure: MeasureName, sigma: f64, m: usize, seed: u64) -> RunConfig {
    RunConfig {
        algo,
        measure,
        noise: NoiseSource::Scheme { scheme: NoiseScheme::Uniform, sigma },
        noise_estimate: None,
        identity_noise: false,
        steps: None,
        seed,
        data: DataSource::Synthetic { spec: None, m, test_size: DEFAULT_TEST_SIZE },
        train: TrainConfig::default(),
    }
}

fn noisy_sample(sigma: f64, m: usize, seed: u64) -> (Dataset, NoiseModel) {
    let mut r = rng(seed);
    let clean = SyntheticSpec::default().generate(m, &mut r).unwrap();
    let noise = NoiseModel::uniform(3, sigma).unwrap();
    let noisy = clean.relabel(noise.flip_labels(clean.labels(), &mut r)).unwrap();
    (noisy, noise)
}

// ---------- criteria ----------

fn correction_identities() -> Outcome {
    let mut r = rng(1);
    let (mut worst_round_trip, mut worst_f1, mut worst_adjoint) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = r.gen_range(2..=6);
        let noise = random_channel(n, &mut r);
        let c = random_confusion(n, &mut r);
        let noisy = naive_matmul(noise.t(), &c);

        let recovered = noise.correct_confusion(&ConfusionMatrix::new(noisy.clone()).unwrap()).unwrap();
        worst_round_trip = worst_round_trip.max(max_abs_diff(recovered.matrix(), &c));

        let f1 = MeasureSpec::micro_f1(n).unwrap();
        let clean_value = f1.evaluate(&ConfusionMatrix::new(c.clone()).unwrap()).unwrap();
        let corrected_value = f1.evaluate_corrected(&noise, &ConfusionMatrix::new(noisy.clone()).unwrap()).unwrap();
        worst_f1 = worst_f1.max((clean_value - corrected_value).abs());

        let l = Matrix::new(n, n, (0..n * n).map(|_| r.gen::<f64>() * 2.0 - 0.5).collect()).unwrap();
        let lhs = frobenius(&noise.correct_loss(&l).unwrap(), &noisy);
        worst_adjoint = worst_adjoint.max((lhs - frobenius(&l, &c)).abs());
    }
    ensure!(worst_round_trip <= 1e-10, "round trip error {worst_round_trip:e}");
    ensure!(worst_f1 <= 1e-10, "micro F1 identity error {worst_f1:e}");
    ensure!(worst_adjoint <= 1e-10, "adjoint identity error {worst_adjoint:e}");
    Ok(format!(
        "max errors: round trip {worst_round_trip:.1e}, micro F1 {worst_f1:.1e}, adjoint {worst_adjoint:.1e}"
    ))
}

fn measure_golden_values() -> Outcome {
    let c = ConfusionMatrix::from_rows(&[[0.4, 0.1], [0.2, 0.3]]).unwrap();
    // recalls 0.8 and 0.6
    let expected = [
        (MeasureSpec::hmean(2), 1.0 - 2.0 / (1.0 / 0.8 + 1.0 / 0.6), 0.314286),
        (MeasureSpec::qmean(2), ((0.2f64.powi(2) + 0.4f64.powi(2)) / 2.0).sqrt(), 0.316228),
        (MeasureSpec::gmean(2), 1.0 - 0.48f64.sqrt(), 0.307180),
    ];
    for (measure, hand, pinned) in &expected {
        let v = measure.evaluate(&c).map_err(|e| e.to_string())?;
        ensure!((v - pinned).abs() <= 1e-6, "{}: {v} vs {pinned}", measure.name());
        ensure!((v - hand).abs() <= 1e-12, "{}: {v} vs hand {hand}", measure.name());
    }
    let f1c = ConfusionMatrix::from_rows(&[[0.5, 0.0, 0.0], [0.0, 0.2, 0.1], [0.0, 0.1, 0.1]]).unwrap();
    let f1 = MeasureSpec::micro_f1(3).unwrap().evaluate(&f1c).unwrap();
    ensure!((f1 - 0.4).abs() <= 1e-12, "micro F1 {f1}");
    for n in 2..=5 {
        let diag = ConfusionMatrix::new(Matrix::diag(&vec![1.0 / n as f64; n])).unwrap();
        for m in [MeasureName::HMean, MeasureName::QMean, MeasureName::GMean, MeasureName::MicroF1] {
            let v = MeasureSpec::from_name(m, n).unwrap().evaluate(&diag).unwrap();
            ensure!(v.abs() <= 1e-12, "{m} on perfect diagonal (n={n}) = {v}");
        }
    }
    Ok("H 0.314286, Q 0.316228, G 0.307180, micro F1 0.4, perfect diagonals 0".into())
}

fn gradient_correctness() -> Outcome {
    let mut r = rng(3);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for measure in [MeasureSpec::hmean(3), MeasureSpec::qmean(3), MeasureSpec::gmean(3)] {
        for _ in 0..100 {
            let n = measure.n();
            let c = random_confusion(n, &mut r);
            let grad = measure.gradient(&ConfusionMatrix::new(c.clone()).unwrap()).unwrap();
            let mut fd = vec![0.0; n * n];
            for k in 0..n * n {
                let mut plus = c.as_slice().to_vec();
                let mut minus = plus.clone();
                plus[k] += h;
                minus[k] -= h;
                let f = |v: Vec<f64>| measure.evaluate(&ConfusionMatrix::new(Matrix::new(n, n, v).unwrap()).unwrap()).unwrap();
                fd[k] = (f(plus) - f(minus)) / (2.0 * h);
            }
            let err: f64 = grad.as_slice().iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            worst = worst.max(err / scale);
        }
    }
    ensure!(worst < 1e-5, "worst relative error {worst:e}");
    Ok(format!("300 points, worst relative error {worst:.1e}"))
}

/// Probabilities that are the lookup table row `x[0]`.
struct Lookup(Vec<Vec<f64>>);

impl ClassProbability for Lookup {
    fn n_classes(&self) -> usize {
        self.0[0].len()
    }
    fn dim(&self) -> usize {
        1
    }
    fn predict_proba(&self, x: &[f64]) -> nclabel::Result<Vec<f64>> {
        Ok(self.0[x[0] as usize].clone())
    }
}

fn exhaustive_confusion_oracle() -> Outcome {
    // four points with mass 1/4 each and dyadic η, so every sum is exact
    let eta = [[0.75, 0.25, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    let t = Matrix::from_rows(&[[0.5, 0.25, 0.25], [0.25, 0.75, 0.0], [0.25, 0.0, 0.75]]).unwrap();
    let noise = NoiseModel::build(t.clone()).unwrap();
    let prediction = [0usize, 1, 2, 2];

    let mut clean = [[0.0; 3]; 3];
    let mut noisy_enum = [[0.0; 3]; 3];
    for x in 0..4 {
        for y in 0..3 {
            let mass = 0.25 * eta[x][y];
            clean[y][prediction[x]] += mass;
            for ny in 0..3 {
                noisy_enum[ny][prediction[x]] += mass * t[(ny, y)];
            }
        }
    }
    let clean = ConfusionMatrix::from_rows(&clean).unwrap();
    let pushed = noise.push_confusion(&clean).unwrap();
    ensure!(pushed.matrix() == &Matrix::from_rows(&noisy_enum).unwrap(), "T·C {:?} vs enumeration {noisy_enum:?}", pushed);

    // the same distribution as an equally weighted sample: 4 points × 4 clean
    // copies (η in quarters) × 4 noisy copies (T in quarters)
    let clf = CostSensitiveClassifier::argmax(Arc::new(Lookup(vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0],
    ])));
    let (mut xs, mut ys, mut noisy_ys) = (Vec::new(), Vec::new(), Vec::new());
    for x in 0..4 {
        for y in 0..3 {
            for _ in 0..(eta[x][y] * 4.0) as usize {
                for ny in 0..3 {
                    for _ in 0..(t[(ny, y)] * 4.0) as usize {
                        xs.push(x as f64);
                        ys.push(y);
                        noisy_ys.push(ny);
                    }
                }
            }
        }
    }
    ensure!(xs.len() == 64, "expanded sample has {} rows", xs.len());
    let features = Matrix::new(xs.len(), 1, xs).unwrap();
    let clean_sample = Dataset::new(features.clone(), ys, 3).unwrap();
    let noisy_sample = Dataset::new(features, noisy_ys, 3).unwrap();
    let empirical_clean = clf.empirical_confusion(&clean_sample).unwrap();
    let empirical_noisy = clf.empirical_confusion(&noisy_sample).unwrap();
    ensure!(empirical_clean == clean, "sample confusion differs from enumeration");
    ensure!(empirical_noisy == pushed, "noisy sample confusion differs from T·C");

    let recovered = noise.correct_confusion(&empirical_noisy).unwrap();
    let err = max_abs_diff(recovered.matrix(), clean.matrix());
    ensure!(err <= 1e-12, "recovery error {err:e}");
    Ok(format!("noisy confusion exact, recovery error {err:.1e}"))
}

/// Plain Frank-Wolfe without any noise handling.
fn uncorrected_frank_wolfe(measure: &MeasureSpec, sample: &Dataset, steps: usize, seed: u64) -> (Vec<Matrix>, Vec<f64>) {
    let (s1, s2) = sample.split_halves().unwrap();
    let model: Arc<dyn ClassProbability> = Arc::new(cpe::train(&s1, &TrainConfig::default(), &mut rng(seed)).unwrap());
    let confusion = |loss: &Matrix| CostSensitiveClassifier::new(model.clone(), loss.clone()).unwrap().empirical_confusion(&s2).unwrap();
    let mut c = confusion(&zero_one_loss(measure.n())).into_matrix();
    let (mut losses, mut values) = (Vec::new(), Vec::new());
    for t in 1..=steps {
        let grad = measure.gradient(&ConfusionMatrix::new(c.clone()).unwrap()).unwrap();
        let gamma = confusion(&grad);
        c = c.lerp(gamma.matrix(), 2.0 / (t as f64 + 1.0)).unwrap();
        values.push(measure.evaluate(&ConfusionMatrix::new(c.clone()).unwrap()).unwrap());
        losses.push(grad);
    }
    (losses, values)
}

/// Plain bisection without noise handling; f64 midpoints are exact for
/// fewer than 53 steps.
fn uncorrected_bisection(sample: &Dataset, steps: usize, seed: u64) -> (Matrix, Vec<f64>) {
    assert!(steps < 53);
    let (a, b) = micro_f1_parts(3).unwrap();
    let (s1, s2) = sample.split_halves().unwrap();
    let model: Arc<dyn ClassProbability> = Arc::new(cpe::train(&s1, &TrainConfig::default(), &mut rng(seed)).unwrap());
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = zero_one_loss(3);
    let mut gammas = Vec::new();
    for _ in 0..steps {
        let gamma = (lo + hi) / 2.0;
        let loss = a.sub(&b.scale(gamma)).unwrap();
        let c = CostSensitiveClassifier::new(model.clone(), loss.clone()).unwrap().empirical_confusion(&s2).unwrap();
        let value = frobenius(&a, c.matrix()) / frobenius(&b, c.matrix());
        if value <= gamma {
            hi = gamma;
            best = loss;
        } else {
            lo = gamma;
        }
        gammas.push(gamma);
    }
    (best, gammas)
}

fn reduction_property() -> Outcome {
    let identity = NoiseModel::identity(3);
    let cfg = TrainConfig::default();
    for seed in 0..3 {
        let (sample, _) = noisy_sample(0.3, 3000, 100 + seed);
        let qmean = MeasureSpec::qmean(3);
        let (h, trace) = ncfw::run_ncfw(&qmean, &sample, &identity, 300, &cfg, &mut rng(seed)).unwrap();
        let (losses, values) = uncorrected_frank_wolfe(&qmean, &sample, 300, seed);
        let traced: Vec<&Matrix> = trace.steps.iter().map(|s| &s.loss).collect();
        ensure!(traced == losses.iter().collect::<Vec<_>>(), "FW losses differ (seed {seed})");
        let traced_values: Vec<u64> = trace.steps.iter().map(|s| s.corrected_value.to_bits()).collect();
        ensure!(traced_values == values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), "FW values differ (seed {seed})");
        let mixture: Vec<&Matrix> = h.components().iter().map(|(_, c)| c.loss()).collect();
        ensure!(mixture == losses.iter().collect::<Vec<_>>(), "FW mixture differs (seed {seed})");

        let (clf, bs_trace) = ncbs::micro_f1_run(&sample, &identity, 50, &cfg, &mut rng(seed)).unwrap();
        let (best, gammas) = uncorrected_bisection(&sample, 50, seed);
        ensure!(clf.loss() == &best, "BS classifier differs (seed {seed})");
        let traced: Vec<u64> = bs_trace.steps.iter().map(|s| s.gamma.to_bits()).collect();
        ensure!(traced == gammas.iter().map(|g| g.to_bits()).collect::<Vec<_>>(), "BS thresholds differ (seed {seed})");
    }
    for (corrected, plain, measure) in [(Algo::Ncfw, Algo::Fw, MeasureName::QMean), (Algo::Ncbs, Algo::Bs, MeasureName::MicroF1)] {
        let mut cfg = synthetic_config(corrected, measure, 0.4, 4000, 9);
        cfg.identity_noise = true;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&synthetic_config(plain, measure, 0.4, 4000, 9)).unwrap();
        ensure!(
            a.clean_test_loss.to_bits() == b.clean_test_loss.to_bits() && a.noisy_test_loss.to_bits() == b.noisy_test_loss.to_bits(),
            "{corrected} with T=I differs from {plain}"
        );
    }
    Ok("NCFW/NCBS with T=I are bit-identical to hand-rolled FW/BS and to the fw/bs runs".into())
}

fn check_exact_bisection(trace: &BsTrace) -> Result<(), String> {
    let mut lower = BigRational::zero();
    let mut upper = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    for s in &trace.steps {
        let mid = (&lower + &upper) / &two;
        let mid_f = mid.to_f64().unwrap();
        ensure!((mid_f - s.gamma).abs() <= f64::EPSILON * mid_f, "step {}: γ {} vs exact {}", s.step, s.gamma, mid_f);
        if s.accepted {
            upper = mid;
        } else {
            lower = mid;
        }
        let width = BigRational::new(BigInt::one(), BigInt::one() << s.step);
        ensure!(&upper - &lower == width, "step {}: width is not 2^-t", s.step);
        ensure!(s.width == 0.5f64.powi(s.step as i32), "step {}: recorded width {}", s.step, s.width);
        ensure!(s.lower <= s.upper, "step {}: empty interval", s.step);
    }
    Ok(())
}

fn bisection_structure() -> Outcome {
    let cfg = TrainConfig::default();
    let mut traces = 0;
    for (sigma, seed) in [(0.0, 1), (0.1, 2), (0.4, 3), (0.6, 4)] {
        let (sample, noise) = noisy_sample(sigma, 4000, 200 + seed);
        let (_, trace) = ncbs::micro_f1_run(&sample, &noise, 200, &cfg, &mut rng(seed)).unwrap();
        ensure!(trace.steps.len() == 200, "trace length {}", trace.steps.len());
        check_exact_bisection(&trace)?;
        traces += 1;
    }
    for steps in [1usize, 2, 10, 5000] {
        let sum: f64 = fw_weights(steps).iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-9, "weights for {steps} steps sum to {sum}");
    }
    Ok(format!("{traces} traces of 200 steps exact against rational bisection; FW weights sum to 1"))
}

fn losses_by_seed(algo: Algo, measure: MeasureName, sigma: f64, m: usize) -> Vec<f64> {
    (1..=5).map(|seed| run_experiment(&synthetic_config(algo, measure, sigma, m, seed)).unwrap().clean_test_loss).collect()
}

fn wins(a: &[f64], b: &[f64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x <= y).count()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

fn sample_size_and_noise_trends() -> Outcome {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (algo, measure) in [(Algo::Ncfw, MeasureName::QMean), (Algo::Ncbs, MeasureName::MicroF1)] {
        let mut small_by_sigma = Vec::new();
        for sigma in [0.1, 0.4, 0.6] {
            let small = losses_by_seed(algo, measure, sigma, 1_000);
            let large = losses_by_seed(algo, measure, sigma, 100_000);
            let w = wins(&large, &small);
            lines.push(format!("{algo} σ={sigma}: m=1e5 {} vs m=1e3 {} ({w}/5)", fmt(&large), fmt(&small)));
            if w < 3 {
                failures.push(format!("{algo} σ={sigma} improves with m in only {w}/5 seeds"));
            }
            small_by_sigma.push(small);
        }
        let w = wins(&small_by_sigma[0], &small_by_sigma[2]);
        lines.push(format!("{algo} m=1e3: σ=0.6 ≥ σ=0.1 in {w}/5"));
        if w < 3 {
            failures.push(format!("{algo}: σ=0.6 worse than σ=0.1 in only {w}/5 seeds"));
        }
    }
    ensure!(failures.is_empty(), "{}; {}", failures.join("; "), lines.join("; "));
    Ok(lines.join("; "))
}

fn baseline_direction() -> Outcome {
    let ncfw = losses_by_seed(Algo::Ncfw, MeasureName::QMean, 0.4, 10_000);
    let fw = losses_by_seed(Algo::Fw, MeasureName::QMean, 0.4, 10_000);
    let ncbs = losses_by_seed(Algo::Ncbs, MeasureName::MicroF1, 0.4, 10_000);
    let bs = losses_by_seed(Algo::Bs, MeasureName::MicroF1, 0.4, 10_000);
    let (w_fw, w_bs) = (wins(&ncfw, &fw), wins(&ncbs, &bs));
    let detail = format!(
        "NCFW {} vs FW {} ({w_fw}/5); NCBS {} vs BS {} ({w_bs}/5)",
        fmt(&ncfw),
        fmt(&fw),
        fmt(&ncbs),
        fmt(&bs)
    );
    ensure!(w_fw >= 3 && w_bs >= 3, "{detail}");
    Ok(detail)
}

fn near_bayes_consistency() -> Outcome {
    let oracle = bayes_oracle(&SyntheticSpec::default(), &MeasureSpec::qmean(3), ORACLE_EVAL_POINTS, &mut rng(77)).unwrap();
    let run = run_experiment(&synthetic_config(Algo::Ncfw, MeasureName::QMean, 0.0, 100_000, 1)).unwrap();
    let gap = run.clean_test_loss - oracle;
    ensure!(gap.abs() <= 0.03, "NCFW {:.4} vs oracle {oracle:.4}", run.clean_test_loss);
    Ok(format!("NCFW {:.4}, oracle {oracle:.4}, gap {gap:+.4}", run.clean_test_loss))
}

fn write_matrix(m: &Matrix, path: &Path) {
    m.write_csv(path).unwrap();
}

fn estimated_noise_pathway() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let truth = NoiseModel::uniform(3, 0.3).unwrap();
    let exact_path = dir.path().join("t_hat_exact.csv");
    write_matrix(truth.t(), &exact_path);

    let perturbed = {
        let t = truth.t();
        let mut rows = vec![vec![0.0; 3]; 3];
        for j in 0..3 {
            let col: Vec<f64> = (0..3).map(|i| t[(i, j)] + if i == j { 0.05 } else { 0.0 }).collect();
            let s: f64 = col.iter().sum();
            for i in 0..3 {
                rows[i][j] = col[i] / s;
            }
        }
        Matrix::from_rows(&rows).unwrap()
    };
    let perturbed_path = dir.path().join("t_hat_perturbed.csv");
    write_matrix(&perturbed, &perturbed_path);

    let known = run_experiment(&synthetic_config(Algo::Ncfw, MeasureName::QMean, 0.3, 5_000, 4)).unwrap();
    let with_exact = run_experiment(&RunConfig {
        noise_estimate: Some(exact_path),
        ..synthetic_config(Algo::Ncfw, MeasureName::QMean, 0.3, 5_000, 4)
    })
    .unwrap();
    ensure!(with_exact.inverse_gap == Some(0.0), "gap for T̂ = T is {:?}", with_exact.inverse_gap);
    ensure!(
        RunResult { inverse_gap: None, ..with_exact.clone() }.same_outcome(&known),
        "T̂ = T run differs: {} vs {}",
        with_exact.clean_test_loss,
        known.clean_test_loss
    );

    let with_perturbed = run_experiment(&RunConfig {
        noise_estimate: Some(perturbed_path),
        ..synthetic_config(Algo::Ncfw, MeasureName::QMean, 0.3, 5_000, 4)
    })
    .map_err(|e| format!("perturbed run failed: {e}"))?;
    let gap = with_perturbed.inverse_gap.unwrap_or(0.0);
    ensure!(gap > 0.0, "perturbed gap {gap}");
    Ok(format!(
        "T̂ = T reproduces {:.4}; perturbed T̂ gives {:.4} with ‖T̂⁻¹-T⁻¹‖₁ = {gap:.4}",
        known.clean_test_loss, with_perturbed.clean_test_loss
    ))
}
