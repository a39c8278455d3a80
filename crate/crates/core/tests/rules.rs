use perturbnet_core::learners::{
    anp_update, decorrelation_step_batch, np_update, sample_update, DecorrelationAccumulator,
};
use perturbnet_core::{
    standard_normals, Loss, LossDifferential, Matrix, Network, NetworkSpec, NoiseTarget, RngStream,
    RuleConfig, RuleKind, UnitCount, Vector,
};
use proptest::prelude::*;

fn one_hot(classes: usize, class: usize) -> Vector {
    let mut t = Vector::zeros(classes);
    t[class] = 1.0;
    t
}

/// Inputs sharing one latent factor, so every pair of features is correlated.
fn correlated_batch(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let root = RngStream::new(seed);
    (0..n)
        .map(|i| {
            let s = root.derive(i as u64);
            let shared = standard_normals(1, &s.derive(0))[0];
            let own = standard_normals(dim, &s.derive(1));
            own.iter().map(|v| v + 0.8 * shared).collect()
        })
        .collect()
}

fn off_diagonal_second_moment(r: &Matrix, batch: &[Vec<f64>]) -> f64 {
    let n = r.rows();
    let mut m = Matrix::zeros(n, n);
    for x in batch {
        let y = r.mul_vec(x).unwrap();
        m.add_outer(1.0 / batch.len() as f64, &y, &y);
    }
    m.mean_squared_off_diagonal()
}

#[test]
fn decorrelation_shrinks_off_diagonal_moments_on_a_fixed_batch() {
    let batch = correlated_batch(32, 1000, 3);
    let mut r = Matrix::identity(32);
    let start = off_diagonal_second_moment(&r, &batch);
    let mut previous = start;
    let mut decreasing = 0;
    for _ in 0..100 {
        let ys: Vec<Vec<f64>> = batch.iter().map(|x| r.mul_vec(x).unwrap()).collect();
        r = decorrelation_step_batch(&Matrix::identity(32), ys.iter().map(Vec::as_slice), 1e-3)
            .unwrap()
            .matmul(&r)
            .unwrap();
        let now = off_diagonal_second_moment(&r, &batch);
        decreasing += usize::from(now < previous);
        previous = now;
    }
    assert!(decreasing >= 90, "{decreasing}");
    assert!(previous <= 0.5 * start, "{start} -> {previous}");
}

#[test]
fn accumulator_matches_direct_step_on_the_input_layer() {
    let spec = NetworkSpec::new(vec![6, 4, 3]).with_decorrelation(true);
    let mut net = Network::init(spec, &RngStream::new(1)).unwrap();
    let batch = correlated_batch(6, 20, 2);
    let mut acc = DecorrelationAccumulator::new(&net);
    for x in &batch {
        acc.add(&net.forward(x, None).unwrap()).unwrap();
    }
    assert_eq!(acc.count(), 20);
    let expected = decorrelation_step_batch(
        &net.decorrelators()[0],
        batch.iter().map(Vec::as_slice),
        0.01,
    )
    .unwrap();
    acc.apply(&mut net, 0.01).unwrap();
    assert_eq!(net.decorrelators()[0], expected);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_pass_count_matches_cost_model(
        kind in prop::sample::select(RuleKind::ALL.to_vec()),
        k in 1usize..4,
        double in any::<bool>(),
        seed in any::<u64>(),
    ) {
        prop_assume!(!double || matches!(kind, RuleKind::Np | RuleKind::Anp));
        let net = Network::init(NetworkSpec::new(vec![5, 4, 4, 3]).with_linear_output(true), &RngStream::new(seed)).unwrap();
        let mut cfg = RuleConfig::new(kind);
        cfg.resamples = k;
        cfg.double_noisy = double;
        let x = standard_normals(5, &RngStream::new(seed).derive(1));
        let s = sample_update(&net, &x, &one_hot(3, 0), Loss::CrossEntropy, &cfg, &RngStream::new(seed).derive(2)).unwrap();
        let expected = match (kind, double) {
            (RuleKind::Bp, _) => 1,
            (_, true) => 2 * k as u64,
            (RuleKind::Inp, false) => 1 + 3 * k as u64,
            _ => 1 + k as u64,
        };
        prop_assert_eq!(s.forward_passes(), expected);
        prop_assert_eq!(cfg.forward_passes_per_sample(3), expected);
    }

    #[test]
    fn np_and_anp_share_the_first_layer_direction(seed in any::<u64>()) {
        let net = Network::init(NetworkSpec::new(vec![8, 6, 6, 4]).with_linear_output(true), &RngStream::new(seed)).unwrap();
        let x = standard_normals(8, &RngStream::new(seed).derive(1));
        let t = one_hot(4, (seed % 4) as usize);
        let clean = net.forward(&x, None).unwrap();
        let bundle = net.sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(seed).derive(2)).unwrap();
        let noisy = net.forward(&x, Some(&bundle)).unwrap();
        let l0 = Loss::CrossEntropy.value(clean.output(), &t).unwrap();
        let dl = LossDifferential::between(Loss::CrossEntropy.value(noisy.output(), &t).unwrap(), l0);
        prop_assume!(dl.value() != 0.0);
        let np = np_update(&clean, &noisy, dl, 1e-6).unwrap();
        let anp = anp_update(&clean, &noisy, dl, UnitCount::NoisyUnits).unwrap();
        prop_assert!(np.layer_angle_degrees(&anp, 1).unwrap() < 1e-6);
    }

    #[test]
    fn sample_updates_are_reproducible(
        kind in prop::sample::select(RuleKind::ALL.to_vec()),
        seed in any::<u64>(),
    ) {
        let net = Network::init(NetworkSpec::new(vec![5, 4, 3]).with_linear_output(true), &RngStream::new(seed)).unwrap();
        let x = standard_normals(5, &RngStream::new(seed).derive(1));
        let cfg = RuleConfig::new(kind);
        let run = || sample_update(&net, &x, &one_hot(3, 1), Loss::CrossEntropy, &cfg, &RngStream::new(seed).derive(2))
            .unwrap()
            .to_update(&net)
            .unwrap();
        prop_assert_eq!(run(), run());
    }
}
