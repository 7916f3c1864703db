use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nclabel::data::{bayes_oracle, SyntheticSpec, ORACLE_EVAL_POINTS};
use nclabel::harness::{run_experiment, Algo, DataSource, NoiseSource, RunConfig};
use nclabel::{MeasureName, MeasureSpec, NoiseScheme, TrainConfig};

fn oracle(measure: &MeasureSpec, seed: u64) -> f64 {
    bayes_oracle(&SyntheticSpec::default(), measure, ORACLE_EVAL_POINTS, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn trained(algo: Algo, measure: MeasureName, sigma: f64) -> f64 {
    let cfg = RunConfig {
        algo,
        measure,
        noise: NoiseSource::Scheme { scheme: NoiseScheme::Uniform, sigma },
        noise_estimate: None,
        identity_noise: false,
        steps: None,
        seed: 3,
        data: DataSource::Synthetic { spec: None, m: 10_000, test_size: 50_000 },
        train: TrainConfig::default(),
    };
    run_experiment(&cfg).unwrap().clean_test_loss
}

#[test]
fn micro_f1_oracle_is_stable_and_below_trained_classifiers() {
    let f1 = MeasureSpec::micro_f1(3).unwrap();
    let a = oracle(&f1, 1);
    let b = oracle(&f1, 2);
    assert!((a - b).abs() <= 0.01, "{a} vs {b}");
    for (algo, sigma) in [(Algo::Ncbs, 0.2), (Algo::Bs, 0.2), (Algo::Plugin, 0.0), (Algo::NclrBackward, 0.4)] {
        let loss = trained(algo, MeasureName::MicroF1, sigma);
        assert!(a <= loss + 0.02, "{algo}: oracle {a} vs trained {loss}");
    }
}

#[test]
fn qmean_oracle_is_stable_and_below_trained_classifiers() {
    let q = MeasureSpec::qmean(3);
    let a = oracle(&q, 1);
    let b = oracle(&q, 2);
    assert!((a - b).abs() <= 0.01, "{a} vs {b}");
    for (algo, sigma) in [(Algo::Ncfw, 0.3), (Algo::Fw, 0.3), (Algo::NclrForward, 0.0)] {
        let loss = trained(algo, MeasureName::QMean, sigma);
        assert!(a <= loss + 0.02, "{algo}: oracle {a} vs trained {loss}");
    }
}
