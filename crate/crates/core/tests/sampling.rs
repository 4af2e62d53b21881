use fdistill_core::model::sample;
use fdistill_core::{seed, Sequence, TabularARModel, Vocab};

// Chi-square critical value for 7 degrees of freedom at significance 0.001.
const CHI2_7_999: f64 = 24.322;

#[test]
fn sample_frequencies_match_enumerated_probabilities() {
    let vocab = Vocab::new(2).unwrap();
    let model = TabularARModel::random(vocab, 3, 2, false, &mut seed::rng(11), 1.0).unwrap();
    let dist = model.seq_distribution().unwrap();
    let n = 100_000;
    let mut counts = [0usize; 8];
    let mut rng = seed::rng(12);
    for _ in 0..n {
        counts[sample(&model, &mut rng).index(2)] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(dist.probs().iter())
        .map(|(&c, &p)| {
            let expected = p * n as f64;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    assert!(chi2 < CHI2_7_999, "chi-square {chi2}");
}

#[test]
fn samples_never_leave_the_support() {
    let forced = Sequence::new(vec![1, 0, 2, 2]);
    let model = TabularARModel::deterministic(Vocab::new(3).unwrap(), &forced).unwrap();
    let mut rng = seed::rng(3);
    assert!((0..1000).all(|_| sample(&model, &mut rng) == forced));
}
