use neural_galerkin::assembly::{assemble, Regularization};
use neural_galerkin::params::{Architecture, Checkpoint, NetSpec, ParamVector, Role, Unit};
use neural_galerkin::pde::{Domain, PdeKind, PdeProblem};
use neural_galerkin::reduce::tree_reduce;
use neural_galerkin::rng::{seeded, stream};
use neural_galerkin::sampling::{draw, Measure};
use neural_galerkin::suite::{derivative_errors, random_seed, random_spec, random_theta};
use proptest::prelude::*;

fn point(d: usize, rng: &mut neural_galerkin::rng::Rng) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn derivatives_match_finite_differences(seed in any::<u64>(), case in 0usize..4) {
        let mut rng = seeded(seed);
        let spec = random_spec(case, &mut rng);
        let theta = random_theta(&spec, &mut rng).unwrap();
        let x = point(spec.dim, &mut rng);
        let s = random_seed(spec.dim, &mut rng);
        let err = derivative_errors(&spec, &theta, &x, &s).unwrap();
        prop_assert!(err.max() < 1e-5, "{:?} {:?}", spec.architecture, err);
        prop_assert!(err.d3_x.is_none() || spec.dim == 1);
    }

    #[test]
    fn periodic_networks_repeat(seed in any::<u64>(), deep in any::<bool>(), shift in -3i32..=3) {
        let mut rng = seeded(seed);
        let spec = random_spec(if deep { 3 } else { 1 }, &mut rng);
        let theta = random_theta(&spec, &mut rng).unwrap();
        let period = spec.architecture.period().unwrap();
        let x = point(spec.dim, &mut rng);
        for k in 0..spec.dim {
            let mut y = x.clone();
            y[k] += shift as f64 * period;
            let (a, b) = (spec.value(&theta, &x).unwrap(), spec.value(&theta, &y).unwrap());
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn one_dimensional_deep_net_is_reflection_symmetric(seed in any::<u64>(), x in -5.0f64..5.0) {
        let mut rng = seeded(seed);
        let period = rng.random_range(1.5..7.0);
        let spec = NetSpec::new(Architecture::DeepTanhPeriodic { period, layers: rng.random_range(1..=3) }, rng.random_range(1..=4), 1);
        let layout = spec.layout().unwrap();
        let theta = random_theta(&spec, &mut rng).unwrap();
        let bias = layout.entries.iter().find(|e| e.unit == Unit::Layer(1) && e.role == Role::Bias).unwrap();
        let b = theta[bias.range.start];
        let mirrored = period / 2.0 + 2.0 * b - x;
        let (u, v) = (spec.value(&theta, &[x]).unwrap(), spec.value(&theta, &[mirrored]).unwrap());
        prop_assert!((u - v).abs() < 1e-10 * (1.0 + u.abs()));
    }

    #[test]
    fn shallow_value_ignores_node_order(seed in any::<u64>(), case in 0usize..3, rotate in 1usize..4) {
        let mut rng = seeded(seed);
        let spec = random_spec(case, &mut rng);
        let theta = random_theta(&spec, &mut rng).unwrap();
        let stride = spec.dim + 2;
        let mut nodes: Vec<&[f64]> = theta.chunks_exact(stride).collect();
        nodes.rotate_left(rotate % spec.width);
        let permuted: Vec<f64> = nodes.concat();
        let x = point(spec.dim, &mut rng);
        let (a, b) = (spec.value(&theta, &x).unwrap(), spec.value(&permuted, &x).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn mass_matrix_is_symmetric_psd(seed in any::<u64>(), case in 0usize..4, n in 20usize..300) {
        let mut rng = seeded(seed);
        let spec = random_spec(case, &mut rng);
        let theta = random_theta(&spec, &mut rng).unwrap();
        let problem = PdeProblem::new(PdeKind::LinearDecay { rate: 1.0 }, spec.dim, Domain::UnboundedRd).unwrap();
        let samples = draw(&Measure::uniform_cube(spec.dim, -2.0, 2.0).unwrap(), n, &mut rng).unwrap();
        let sys = assemble(&spec, &theta, &problem, 0.0, &samples, None, Regularization::Absolute(0.0)).unwrap();
        let scale = sys.m.trace().max(1e-300);
        prop_assert!((&sys.m - sys.m.transpose()).abs().max() <= 1e-14 * scale);
        let min = sys.m.clone().symmetric_eigenvalues().min();
        prop_assert!(min > -1e-10 * scale, "min eigenvalue {min:e}");
    }

    #[test]
    fn mass_matrix_follows_node_permutation(seed in any::<u64>(), rotate in 1usize..4) {
        let mut rng = seeded(seed);
        let spec = NetSpec::new(Architecture::ShallowGaussian, 4, 2);
        let theta = random_theta(&spec, &mut rng).unwrap();
        let mut nodes: Vec<&[f64]> = theta.chunks_exact(4).collect();
        nodes.rotate_left(rotate);
        let permuted = nodes.concat();
        let problem = PdeProblem::new(PdeKind::LinearDecay { rate: 1.0 }, 2, Domain::UnboundedRd).unwrap();
        let samples = draw(&Measure::uniform_cube(2, -2.0, 2.0).unwrap(), 200, &mut rng).unwrap();
        let a = assemble(&spec, &theta, &problem, 0.0, &samples, None, Regularization::Absolute(0.0)).unwrap();
        let b = assemble(&spec, &permuted, &problem, 0.0, &samples, None, Regularization::Absolute(0.0)).unwrap();
        let p = spec.param_count().unwrap();
        let map = |i: usize| ((i / 4 + rotate) % 4) * 4 + i % 4;
        for i in 0..p {
            prop_assert!((a.f[map(i)] - b.f[i]).abs() <= 1e-12 * (1.0 + a.f[map(i)].abs()));
            for j in 0..p {
                prop_assert!((a.m[(map(i), map(j))] - b.m[(i, j)]).abs() <= 1e-12 * (1.0 + a.m[(map(i), map(j))].abs()));
            }
        }
    }

    #[test]
    fn mixture_density_is_normalized(seed in any::<u64>(), m in 1usize..5) {
        let mut rng = seeded(seed);
        let means: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let stds: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..3.0)).collect();
        let mix = Measure::gaussian_mixture(1, means, stds, weights).unwrap();
        let Measure::GaussianMixture { weights, .. } = &mix else { unreachable!() };
        prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let (lo, hi, k) = (-10.0, 10.0, 20_000);
        let h = (hi - lo) / k as f64;
        let mass: f64 = (0..=k).map(|i| {
            let w = if i == 0 || i == k { 0.5 } else { 1.0 };
            w * mix.density(&[lo + i as f64 * h])
        }).sum::<f64>() * h;
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    }

    #[test]
    fn network_mixture_is_normalized(seed in any::<u64>(), kappa in 0.5f64..3.0) {
        let mut rng = seeded(seed);
        let spec = random_spec(0, &mut rng);
        let theta = random_theta(&spec, &mut rng).unwrap();
        let Measure::GaussianMixture { weights, means, .. } = spec.as_mixture(&theta, kappa).unwrap() else {
            panic!("shallow networks give a mixture");
        };
        prop_assert_eq!(weights.len(), spec.width);
        prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        prop_assert_eq!(means.len(), spec.width * spec.dim);
    }

    #[test]
    fn draws_are_deterministic(seed in any::<u64>(), id in 0u64..10, n in 1usize..200) {
        let mix = Measure::gaussian_mixture(2, vec![0.0, 0.0, 1.0, -1.0], vec![0.5, 0.3], vec![1.0, 2.0]).unwrap();
        let a = draw(&mix, n, &mut stream(seed, id)).unwrap();
        let b = draw(&mix, n, &mut stream(seed, id)).unwrap();
        prop_assert_eq!(a.points, b.points);
    }

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>(), case in 0usize..4, time in -1e3f64..1e3) {
        let mut rng = seeded(seed);
        let spec = random_spec(case, &mut rng);
        let values: Vec<f64> = random_theta(&spec, &mut rng).unwrap().iter().map(|v| v * 1e3f64.powi(rng.random_range(-5..5))).collect();
        let ckpt = Checkpoint { spec: spec.clone(), time, theta: ParamVector::new(&spec, values).unwrap() };
        let back = Checkpoint::from_text(&ckpt.to_text()).unwrap();
        prop_assert_eq!(back, ckpt);
    }

    #[test]
    fn reductions_ignore_pool_size(values in prop::collection::vec(-1e6f64..1e6, 0..3000)) {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
                .install(|| tree_reduce(values.len(), |r| values[r].iter().sum::<f64>(), |a, b| a + b))
        };
        prop_assert_eq!(run(1).to_bits(), run(3).to_bits());
    }
}
