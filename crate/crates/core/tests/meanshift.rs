use approx::assert_relative_eq;
use mslab::meanshift::{
    cluster, converge, kde, mean_shift_step, mean_shift_weights, MeanShift, ASCENT_TOLERANCE,
};
use mslab::{BandwidthMatrix, DataSet, Error, MeanShiftConfig};
use proptest::prelude::*;

fn sample2(n: std::ops::Range<usize>) -> impl Strategy<Value = DataSet> {
    n.prop_flat_map(|n| prop::collection::vec(-3.0f64..3.0, 2 * n))
        .prop_map(|v| DataSet::new(2, v).unwrap())
}

fn spd2() -> impl Strategy<Value = BandwidthMatrix> {
    (0.05f64..1.0, 0.05f64..1.0, -0.8f64..0.8).prop_map(|(a, b, r)| {
        let c = r * (a * b).sqrt();
        BandwidthMatrix::from_rows(2, &[a, c, c, b]).unwrap()
    })
}

fn two_blobs() -> DataSet {
    let mut rows = Vec::new();
    for i in 0..20 {
        let t = i as f64 / 20.0 * std::f64::consts::TAU;
        rows.push([-2.0 + 0.3 * t.cos(), 0.3 * t.sin()]);
        rows.push([2.0 + 0.3 * t.cos(), 1.0 + 0.3 * t.sin()]);
    }
    DataSet::from_rows(&rows).unwrap()
}

#[test]
fn a_single_point_is_reached_in_one_step() {
    let data = DataSet::from_rows(&[[1.0, -2.0]]).unwrap();
    let h = BandwidthMatrix::from_rows(2, &[0.5, 0.1, 0.1, 0.3]).unwrap();
    for start in [[0.0, 0.0], [3.0, 1.0], [1.0, -2.5]] {
        let t = converge(&start, &data, &h, &MeanShiftConfig::default()).unwrap();
        assert_eq!(t.mode, vec![1.0, -2.0]);
        assert_eq!(t.iterations, 1);
        assert!(t.converged);
    }
}

#[test]
fn two_blobs_give_two_clusters() {
    let data = two_blobs();
    let h = BandwidthMatrix::scalar(2, 0.1).unwrap();
    let r = cluster(&data, &data, &h, &MeanShiftConfig::default()).unwrap();
    assert_eq!(r.n_clusters(), 2);
    assert_eq!(r.non_converged(), 0);
    assert!(r.ascent.iter().all(|a| *a));
    for (i, l) in r.labels.iter().enumerate() {
        assert_eq!(*l, i % 2);
    }
    // Every mode is a fixed point of the update within the merge tolerance.
    for m in &r.modes {
        let next = mean_shift_step(m, &data, &h).unwrap();
        let d = mslab::kernels::mahalanobis(m, &next, &h).unwrap().sqrt();
        assert!(d < MeanShiftConfig::default().merge_tol);
    }
}

#[test]
fn affine_equivariance_of_the_limit() {
    let data = two_blobs();
    let h = BandwidthMatrix::from_rows(2, &[0.1, 0.02, 0.02, 0.08]).unwrap();
    let a = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.3, 1.5]);
    let moved = data.affine(&a, &[1.0, -1.0]).unwrap();
    let hm = h.congruence(&a).unwrap();
    let cfg = MeanShiftConfig {
        step_tol: 1e-10,
        merge_tol: 1e-6,
        ..Default::default()
    };
    let y0 = [-1.0, 0.4];
    let t = converge(&y0, &data, &h, &cfg).unwrap();
    let y0m = [2.0 * y0[0] + 0.5 * y0[1] + 1.0, -0.3 * y0[0] + 1.5 * y0[1] - 1.0];
    let tm = converge(&y0m, &moved, &hm, &cfg).unwrap();
    let expect = [
        2.0 * t.mode[0] + 0.5 * t.mode[1] + 1.0,
        -0.3 * t.mode[0] + 1.5 * t.mode[1] - 1.0,
    ];
    assert_relative_eq!(tm.mode[0], expect[0], epsilon = 1e-7);
    assert_relative_eq!(tm.mode[1], expect[1], epsilon = 1e-7);
}

#[test]
fn raising_the_merge_tolerance_never_adds_modes() {
    let data = two_blobs();
    let h = BandwidthMatrix::scalar(2, 0.02).unwrap();
    let mut last = usize::MAX;
    for tol in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        let cfg = MeanShiftConfig {
            merge_tol: tol,
            step_tol: 1e-6,
            ..Default::default()
        };
        let k = cluster(&data, &data, &h, &cfg).unwrap().n_clusters();
        assert!(k <= last);
        last = k;
    }
}

#[test]
fn labels_do_not_depend_on_query_order() {
    let data = two_blobs();
    let h = BandwidthMatrix::scalar(2, 0.15).unwrap();
    let cfg = MeanShiftConfig::default();
    let forward = cluster(&data, &data, &h, &cfg).unwrap();
    let rows: Vec<Vec<f64>> = (0..data.len()).rev().map(|i| data.row(i).to_vec()).collect();
    let reversed = DataSet::from_rows(&rows).unwrap();
    let backward = cluster(&reversed, &data, &h, &cfg).unwrap();
    let n = data.len();
    for i in 0..n {
        for j in 0..n {
            let same_f = forward.labels[i] == forward.labels[j];
            let same_b = backward.labels[n - 1 - i] == backward.labels[n - 1 - j];
            assert_eq!(same_f, same_b);
        }
    }
}

#[test]
fn far_starts_are_flagged_not_fatal() {
    let data = two_blobs();
    let h = BandwidthMatrix::scalar(2, 0.01).unwrap();
    assert!(matches!(
        mean_shift_step(&[1e4, 1e4], &data, &h),
        Err(Error::DensityFloor { .. })
    ));
    let ms = MeanShift::new(&data, &h, &MeanShiftConfig::default()).unwrap();
    let t = ms.converge(&[40.0, 0.0]).unwrap();
    assert!(t.low_density_start);
    assert!(t.mode[0] < 3.0);
}

#[test]
fn invalid_configurations() {
    let bad = MeanShiftConfig {
        step_tol: 0.1,
        merge_tol: 0.01,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    let zero = MeanShiftConfig {
        max_iter: 0,
        ..Default::default()
    };
    assert!(zero.validate().is_err());
    let data = two_blobs();
    let h3 = BandwidthMatrix::identity(3);
    assert!(kde(&[0.0, 0.0], &data, &h3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_form_a_probability_vector(data in sample2(1..30), h in spd2(),
                                         y in prop::collection::vec(-4.0f64..4.0, 2)) {
        let w = mean_shift_weights(&y, &data, &h).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn the_update_stays_in_the_hull_box(data in sample2(1..30), h in spd2(),
                                        y in prop::collection::vec(-4.0f64..4.0, 2)) {
        let next = mean_shift_step(&y, &data, &h).unwrap();
        let (lo, hi) = data.bounds();
        for k in 0..2 {
            prop_assert!(next[k] >= lo[k] - 1e-12 && next[k] <= hi[k] + 1e-12);
        }
    }

    #[test]
    fn trajectories_ascend(data in sample2(2..40), h in spd2(),
                           y in prop::collection::vec(-4.0f64..4.0, 2)) {
        let t = converge(&y, &data, &h, &MeanShiftConfig::default()).unwrap();
        prop_assert!(t.is_ascending(ASCENT_TOLERANCE));
        prop_assert_eq!(t.densities.len(), t.iterations + 1);
    }
}
