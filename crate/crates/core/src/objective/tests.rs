use super::*;
use crate::Lcg64;
use alloc::vec;
use proptest::prelude::*;

fn random(rows: usize, cols: usize, rng: &mut Lcg64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Direct evaluation of the loss with explicit sums over i, j and k.
fn naive_loss(z: &Matrix, z2: &Matrix) -> (f64, f64) {
    let (n, d) = z.shape();
    let (mut on, mut off) = (0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let mut c = 0.0;
            for k in 0..n {
                c += z[(k, i)] * z2[(k, j)];
            }
            if i == j {
                on += (c - 1.0) * (c - 1.0);
            } else {
                off += c * c;
            }
        }
    }
    (on / n as f64, off / n as f64)
}

fn finite_diff(f: impl Fn(&Matrix) -> f64, at: &Matrix, h: f64) -> Matrix {
    let mut g = Matrix::zeros(at.rows(), at.cols());
    for r in 0..at.rows() {
        for c in 0..at.cols() {
            let mut p = at.clone();
            p[(r, c)] += h;
            let mut m = at.clone();
            m[(r, c)] -= h;
            g[(r, c)] = (f(&p) - f(&m)) / (2.0 * h);
        }
    }
    g
}

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let scale = b.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    a.max_abs_diff(b) / scale
}

#[test]
fn normalize_hand_example() {
    let raw = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
    let out = normalize_center_guarded(&raw, Normalization::PerDimension).unwrap();
    assert!((out.scaled[(0, 0)] - 0.6).abs() < 1e-15);
    assert!((out.scaled[(1, 0)] - 0.8).abs() < 1e-15);
    assert!((out.z[(0, 0)] + 0.1).abs() < 1e-15);
    assert!((out.z[(1, 0)] - 0.1).abs() < 1e-15);
}

#[test]
fn constant_column_centres_to_zero() {
    let raw = Matrix::from_fn(5, 1, |_, _| 2.5);
    let out = normalize_center_guarded(&raw, Normalization::PerDimension).unwrap();
    for r in 0..5 {
        assert!((out.scaled[(r, 0)] - 1.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!(out.z[(r, 0)].abs() < 1e-15);
    }
}

#[test]
fn zero_column_is_degenerate() {
    let raw = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
    assert_eq!(normalize_center(&raw), Err(Error::DegenerateDimension { index: 1 }));
    let guarded = normalize_center_guarded(&raw, Normalization::PerDimension).unwrap();
    assert_eq!(guarded.degenerate, 1);
    assert!(guarded.z.is_finite());
}

#[test]
fn pseudo_cov_examples() {
    let id = Matrix::identity(2);
    assert_eq!(pseudo_cross_cov(&id, &id).unwrap().c, id);

    let z = normalize_center(&Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 2.0]]).unwrap()).unwrap();
    let cov = pseudo_cross_cov(&z, &z).unwrap();
    let want = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
    assert!(cov.c.max_abs_diff(&want) < 1e-12);
    let loss = swis_loss(&z, &z).unwrap();
    assert!((loss.total - 0.5).abs() < 1e-12);
    assert!((loss.on_diag - 0.5).abs() < 1e-12);

    assert!(matches!(
        pseudo_cross_cov(&Matrix::zeros(2, 3), &Matrix::zeros(3, 3)),
        Err(Error::ShapeViolation(_))
    ));
}

#[test]
fn pseudo_cov_matches_triple_loop() {
    let mut rng = Lcg64::new(5);
    let (z, z2) = (random(6, 4, &mut rng), random(6, 4, &mut rng));
    let cov = pseudo_cross_cov(&z, &z2).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let s: f64 = (0..6).map(|k| z[(k, i)] * z2[(k, j)]).sum();
            assert!((cov.c[(i, j)] - s).abs() < 1e-6);
        }
    }
}

#[test]
fn identity_cov_is_global_minimum() {
    // N = 4 rows, D = 4: orthonormal columns give C = I
    let z = Matrix::identity(4);
    let loss = swis_loss(&z, &z).unwrap();
    assert_eq!(loss.total, 0.0);
    let (_, dz, dz2, _) = swis_loss_grad(&z, &z).unwrap();
    assert!(dz.as_slice().iter().chain(dz2.as_slice()).all(|&g| g == 0.0));
}

#[test]
fn single_sample_batch_costs_d_over_n() {
    let raw = Matrix::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap();
    let z = normalize_center_guarded(&raw, Normalization::PerDimension).unwrap().z;
    assert!(z.as_slice().iter().all(|&v| v == 0.0));
    let loss = swis_loss(&z, &z).unwrap();
    assert_eq!(loss.total, 3.0);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = Lcg64::new(seed);
        let (z, z2) = (random(4, 3, &mut rng), random(4, 3, &mut rng));
        let (_, dz, dz2, _) = swis_loss_grad(&z, &z2).unwrap();
        let fd1 = finite_diff(|m| swis_loss(m, &z2).unwrap().total, &z, 1e-4);
        let fd2 = finite_diff(|m| swis_loss(&z, m).unwrap().total, &z2, 1e-4);
        assert!(rel_err(&dz, &fd1) < 1e-4, "seed {seed}");
        assert!(rel_err(&dz2, &fd2) < 1e-4, "seed {seed}");
        // scaled input: C scales linearly, the oracle still agrees
        let z_doubled = z.scale(2.0);
        let (_, dzd, _, _) = swis_loss_grad(&z_doubled, &z2).unwrap();
        let fdd = finite_diff(|m| swis_loss(m, &z2).unwrap().total, &z_doubled, 1e-4);
        assert!(rel_err(&dzd, &fdd) < 1e-4, "seed {seed}");
    }
}

#[test]
fn normalization_backward_matches_finite_differences() {
    for mode in [Normalization::PerDimension, Normalization::PerVector] {
        let mut rng = Lcg64::new(31);
        let (a, b) = (random(5, 4, &mut rng), random(5, 4, &mut rng));
        let objective = |x: &Matrix| {
            let z = normalize_center_guarded(x, mode).unwrap().z;
            let z2 = normalize_center_guarded(&b, mode).unwrap().z;
            swis_loss(&z, &z2).unwrap().total
        };
        let na = normalize_center_guarded(&a, mode).unwrap();
        let nb = normalize_center_guarded(&b, mode).unwrap();
        let (_, dz, _, _) = swis_loss_grad(&na.z, &nb.z).unwrap();
        let analytic = normalize_center_backward(&na, &dz).unwrap();
        let fd = finite_diff(objective, &a, 1e-5);
        assert!(rel_err(&analytic, &fd) < 1e-5, "{mode:?}");
    }
}

#[test]
fn per_vector_rows_are_unit_before_centering() {
    let mut rng = Lcg64::new(2);
    let raw = random(6, 5, &mut rng);
    let out = normalize_center_guarded(&raw, Normalization::PerVector).unwrap();
    for r in 0..6 {
        let n: f64 = out.scaled.row(r).iter().map(|v| v * v).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn nt_xent_hand_computed() {
    // pairs (e1, e1) and (e2, e2), τ = 1: every anchor sees similarity 1 to
    // its partner and 0 to both negatives
    let v = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
    let want = (core::f64::consts::E + 2.0).ln() - 1.0;
    assert!((nt_xent_loss(&v, 1.0).unwrap() - want).abs() < 1e-12);
}

#[test]
fn nt_xent_degenerate_and_errors() {
    let one_pair = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.1]]).unwrap();
    assert!(nt_xent_loss(&one_pair, 0.5).unwrap().abs() < 1e-12);
    assert_eq!(nt_xent_loss(&one_pair, 0.0), Err(Error::InvalidTemperature(0.0)));
    assert!(nt_xent_loss(&Matrix::zeros(3, 2), 1.0).is_err());
}

#[test]
fn nt_xent_pair_order_invariant_and_gradient() {
    let mut rng = Lcg64::new(12);
    let v = random(6, 4, &mut rng);
    let swapped = v.select_rows(&[4, 5, 0, 1, 2, 3]);
    let a = nt_xent_loss(&v, 0.5).unwrap();
    assert!((a - nt_xent_loss(&swapped, 0.5).unwrap()).abs() < 1e-12);
    let (_, g) = nt_xent_loss_grad(&v, 0.5).unwrap();
    let fd = finite_diff(|m| nt_xent_loss(m, 0.5).unwrap(), &v, 1e-5);
    assert!(rel_err(&g, &fd) < 1e-5);
}

#[test]
fn interleave_round_trip() {
    let mut rng = Lcg64::new(1);
    let (a, b) = (random(3, 2, &mut rng), random(3, 2, &mut rng));
    let m = interleave(&a, &b).unwrap();
    assert_eq!(m.row(1), b.row(0));
    assert_eq!(deinterleave(&m), (a, b));
}

fn pair_strategy() -> impl Strategy<Value = (Matrix, Matrix)> {
    (2usize..10, 1usize..8, any::<u64>()).prop_map(|(n, d, seed)| {
        let mut rng = Lcg64::new(seed);
        (random(n, d, &mut rng), random(n, d, &mut rng))
    })
}

proptest! {
    #[test]
    fn loss_is_nonnegative_and_split_consistent((z, z2) in pair_strategy()) {
        let l = swis_loss(&z, &z2).unwrap();
        prop_assert!(l.total >= 0.0 && l.on_diag >= 0.0 && l.off_diag >= 0.0);
        prop_assert!((l.total - (l.on_diag + l.off_diag)).abs() < 1e-9);
        let (on, off) = naive_loss(&z, &z2);
        prop_assert!((l.on_diag - on).abs() <= 1e-9 * on.max(1.0));
        prop_assert!((l.off_diag - off).abs() <= 1e-9 * off.max(1.0));
    }

    #[test]
    fn transpose_duality((z, z2) in pair_strategy()) {
        let a = pseudo_cross_cov(&z, &z2).unwrap().c;
        let b = pseudo_cross_cov(&z2, &z).unwrap().c;
        prop_assert_eq!(a, b.transpose());
    }

    #[test]
    fn column_permutation_equivariance((z, z2) in pair_strategy(), seed in any::<u64>()) {
        let perm = Lcg64::new(seed).permutation(z.cols());
        let c = pseudo_cross_cov(&z, &z2).unwrap().c;
        let cp = pseudo_cross_cov(&z.select_cols(&perm), &z2.select_cols(&perm)).unwrap().c;
        for i in 0..perm.len() {
            for j in 0..perm.len() {
                prop_assert!((cp[(i, j)] - c[(perm[i], perm[j])]).abs() < 1e-12);
            }
        }
        let l = swis_loss(&z, &z2).unwrap().total;
        let lp = swis_loss(&z.select_cols(&perm), &z2.select_cols(&perm)).unwrap().total;
        prop_assert!((l - lp).abs() <= 1e-9 * l.max(1.0));
    }

    #[test]
    fn joint_row_permutation_invariance(n in 2usize..10, d in 1usize..6, seed in any::<u64>()) {
        let mut rng = Lcg64::new(seed);
        let (z, z2) = (random(n, d, &mut rng), random(n, d, &mut rng));
        // restrict to exactly representable values so summation order is moot
        let q = |m: &Matrix| Matrix::from_fn(m.rows(), m.cols(), |r, c| (m[(r, c)] * 8.0).round() / 8.0);
        let (z, z2) = (q(&z), q(&z2));
        let perm = rng.permutation(n);
        let a = pseudo_cross_cov(&z, &z2).unwrap();
        let b = pseudo_cross_cov(&z.select_rows(&perm), &z2.select_rows(&perm)).unwrap();
        prop_assert_eq!(a.c, b.c);
    }

    #[test]
    fn centred_columns_have_zero_mean(n in 2usize..12, d in 1usize..6, seed in any::<u64>()) {
        let mut rng = Lcg64::new(seed);
        let mut raw = random(n, d, &mut rng);
        // force one constant column
        for r in 0..n { raw[(r, 0)] = 3.0; }
        let out = normalize_center_guarded(&raw, Normalization::PerDimension).unwrap();
        for c in 0..d {
            let mean: f64 = (0..n).map(|r| out.z[(r, c)]).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            let norm: f64 = (0..n).map(|r| out.scaled[(r, c)].powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }
    }
}
