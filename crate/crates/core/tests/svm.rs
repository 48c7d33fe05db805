use cookstate::svm::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn clusters(rng: &mut ChaCha8Rng, per_class: usize) -> FeatureMatrix {
    let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
    let noise = Normal::new(0.0, 0.7).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * 3 {
        let c = i % 3;
        rows.push(centers[c].iter().map(|m| m + noise.sample(rng)).collect::<Vec<f64>>());
        labels.push([2, 5, 8][c]);
    }
    FeatureMatrix::from_rows(&rows, labels).unwrap()
}

#[test]
fn gaussian_clusters_are_learned() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let train = clusters(&mut r, 40);
    let held_out = clusters(&mut r, 100);
    let m = train_multiclass(&train, &KernelSpec::linear(), &SmoConfig::default()).unwrap();
    assert_eq!(m.binaries.len(), 3);
    assert!(m.accuracy(&held_out).unwrap() >= 0.95);
}

#[test]
fn two_classes_reduce_to_one_machine() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![if i % 2 == 0 { -2.0 } else { 2.0 } + r.random_range(-0.5..0.5), r.random()]).collect();
    let f = FeatureMatrix::from_rows(&rows, (0..30).map(|i| if i % 2 == 0 { 3 } else { 7 }).collect()).unwrap();
    let m = train_multiclass(&f, &KernelSpec::quadratic(), &SmoConfig::default()).unwrap();
    assert_eq!(m.binaries.len(), 1);
    for i in 0..30 {
        let x = f.row_f64(i);
        let z = m.standardizer.apply(&x).unwrap();
        let d = m.binaries[0].decision(&z).unwrap();
        assert_eq!(m.predict(&x).unwrap(), if d > 0.0 { 3 } else { 7 });
    }
}

#[test]
fn trained_machines_satisfy_feasibility_and_kkt() {
    let mut r = ChaCha8Rng::seed_from_u64(13);
    for t in 0..30 {
        let n = 10 + t;
        let c = [0.1, 1.0, 10.0][t % 3];
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|p| if p[0] + 0.3 * p[1] + r.random_range(-0.3..0.3) > 0.0 { 1.0 } else { -1.0 }).collect();
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let kernel = KernelSpec { kind: KernelKind::ALL[t % 3], gamma: 1.0 };
        let cfg = SmoConfig { c, ..SmoConfig::default() };
        let m = smo_train_binary(&x, &y, &kernel, &cfg, (0, 1)).unwrap();
        assert!(m.alphas.iter().all(|&a| a > 0.0 && a <= c));
        let s: f64 = m.alphas.iter().zip(&m.sv_labels).map(|(a, l)| a * l).sum();
        assert!(s.abs() <= 1e-8);
        let mut alpha = vec![0.0; n];
        for (sv, a) in m.support_vectors.iter().zip(&m.alphas) {
            let i = x.iter().position(|p| p == sv).unwrap();
            alpha[i] = *a;
        }
        let margins: Vec<f64> = x.iter().zip(&y).map(|(p, yi)| yi * m.decision(p).unwrap()).collect();
        assert_eq!(kkt_violations(&margins, &alpha, c, cfg.tol + 1e-9), 0, "problem {t}");
    }
}

#[test]
fn kernels_are_symmetric_and_scale_consistently() {
    let mut r = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let x: Vec<f64> = (0..5).map(|_| r.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..5).map(|_| r.random_range(-3.0..3.0)).collect();
        for kind in KernelKind::ALL {
            let k = KernelSpec { kind, gamma: 0.3 };
            assert_eq!(kernel_eval(&k, &x, &y).unwrap(), kernel_eval(&k, &y, &x).unwrap());
        }
        let s = r.random_range(0.1..10.0);
        let rbf = KernelSpec::rbf(0.3).unwrap();
        let scaled = KernelSpec::rbf(0.3 / (s * s)).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * s).collect();
        assert!((kernel_eval(&rbf, &x, &y).unwrap() - kernel_eval(&scaled, &xs, &ys).unwrap()).abs() < 1e-12);
        assert_eq!(kernel_eval(&rbf, &x, &x).unwrap(), 1.0);
    }
}

#[test]
fn benchmark_is_deterministic_and_complete() {
    let mut r = ChaCha8Rng::seed_from_u64(15);
    let train = clusters(&mut r, 20);
    let val = clusters(&mut r, 10);
    let a = benchmark_kernels(&train, &val, &KernelKind::ALL, &SmoConfig::default(), None).unwrap();
    let b = benchmark_kernels(&train, &val, &KernelKind::ALL, &SmoConfig::default(), None).unwrap();
    assert_eq!(benchmark_csv(&a), benchmark_csv(&b));
    assert_eq!(a.iter().map(|s| s.kernel).collect::<Vec<_>>(), KernelKind::ALL);
}

#[test]
fn model_json_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(16);
    let f = clusters(&mut r, 10);
    let m = train_multiclass(&f, &KernelSpec::rbf(0.4).unwrap(), &SmoConfig::default()).unwrap();
    let p = dir.path().join("svm.json");
    m.save(&p).unwrap();
    let back = SvmModel::load(&p).unwrap();
    assert_eq!(m.predict_all(&f).unwrap(), back.predict_all(&f).unwrap());
    assert!(m.predict(&[1.0]).is_err());
}
