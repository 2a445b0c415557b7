use approx::assert_relative_eq;
use mslab::partition::{assignment, distance_in_measure, overlap_matrix};
use mslab::{GridSpec, SpacePartition};
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], 6).unwrap()
}

fn masses(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|m| m / total).collect()
}

fn partition(labels: Vec<usize>) -> SpacePartition {
    let g = grid();
    let m = masses(g.len());
    SpacePartition::new(g, labels, m).unwrap()
}

fn labels(k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, 36)
}

fn permutations(s: usize) -> Vec<Vec<usize>> {
    if s == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(s - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, s - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn grid_cells_tile_the_rectangle() {
    let g = GridSpec::new(vec![-1.0, 2.0], vec![3.0, 2.5], 9).unwrap();
    let total: f64 = (0..g.len()).map(|i| g.cell_volume(i)).sum();
    assert_relative_eq!(total, 4.0 * 0.5, max_relative = 1e-13);
    assert_eq!(g.point(0), vec![-1.0, 2.0]);
    assert_eq!(g.point(g.len() - 1), vec![3.0, 2.5]);
    assert!(GridSpec::new(vec![0.0], vec![0.0], 5).is_err());
    assert!(GridSpec::new(vec![0.0], vec![1.0], 1).is_err());
}

#[test]
fn grid_integration_is_exact_for_bilinear_functions() {
    let g = GridSpec::new(vec![0.0, -1.0], vec![2.0, 1.0], 7).unwrap();
    // int_0^2 int_-1^1 (1 + x + x y) dy dx = 4 + 4 + 0.
    assert_relative_eq!(g.integrate(|p| 1.0 + p[0] + p[0] * p[1]), 8.0, max_relative = 1e-13);
}

#[test]
fn partition_csv_round_trip() {
    let p = partition((0..36).map(|i| i % 3).collect());
    let mut buf = Vec::new();
    p.to_csv_writer(&mut buf).unwrap();
    let back = SpacePartition::from_csv_reader(buf.as_slice()).unwrap();
    assert_eq!(back.labels(), p.labels());
    assert_eq!(back.masses(), p.masses());
    assert_eq!(back.grid().resolution, 6);
    assert_eq!(distance_in_measure(&back, &p).unwrap().distance, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    p.write_csv(&path).unwrap();
    assert_eq!(SpacePartition::read_csv(&path).unwrap().labels(), p.labels());
}

#[test]
fn partition_validation() {
    let g = grid();
    assert!(SpacePartition::new(g.clone(), vec![0; 35], masses(36)).is_err());
    let mut neg = masses(36);
    neg[0] = -0.1;
    assert!(SpacePartition::new(g.clone(), vec![0; 36], neg).is_err());
    let heavy = vec![0.1; 36];
    assert!(SpacePartition::new(g, vec![0; 36], heavy).is_err());
}

#[test]
fn different_grids_are_rejected() {
    let a = partition(vec![0; 36]);
    let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 2.0], 6).unwrap();
    let b = SpacePartition::new(g, vec![0; 36], masses(36)).unwrap();
    assert!(distance_in_measure(&a, &b).is_err());
}

#[test]
fn splitting_one_cluster_costs_the_smaller_half() {
    let a = partition(vec![0; 36]);
    let split: Vec<usize> = (0..36).map(|i| usize::from(i >= 30)).collect();
    let b = partition(split.clone());
    let small: f64 = masses(36).iter().zip(&split).filter(|(_, l)| **l == 1).map(|(m, _)| m).sum();
    let r = distance_in_measure(&a, &b).unwrap();
    assert_relative_eq!(r.distance, small, max_relative = 1e-12);
    assert_eq!(r.clusters_a, 1);
    assert_eq!(r.clusters_b, 2);
}

#[test]
fn assignment_matches_brute_force() {
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for s in 1..=6 {
        for _ in 0..20 {
            let cost: Vec<f64> = (0..s * s).map(|_| next() * 10.0 - 2.0).collect();
            let (perm, total) = assignment(&cost, s).unwrap();
            let best = permutations(s)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i * s + j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(total, best, epsilon = 1e-9);
            let mut seen = perm.clone();
            seen.sort();
            assert_eq!(seen, (0..s).collect::<Vec<_>>());
        }
    }
    assert!(assignment(&[1.0, f64::NAN, 0.0, 1.0], 2).is_err());
    assert!(assignment(&[1.0, 2.0, 3.0], 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distance_is_a_pseudometric(a in labels(4), b in labels(5), c in labels(3)) {
        let (pa, pb, pc) = (partition(a), partition(b), partition(c));
        let ab = distance_in_measure(&pa, &pb).unwrap().distance;
        let ba = distance_in_measure(&pb, &pa).unwrap().distance;
        let bc = distance_in_measure(&pb, &pc).unwrap().distance;
        let ac = distance_in_measure(&pa, &pc).unwrap().distance;
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(distance_in_measure(&pa, &pa).unwrap().distance.abs() < 1e-15);
    }

    #[test]
    fn relabeling_does_not_change_the_distance(a in labels(4), b in labels(4)) {
        let perm = [2usize, 0, 3, 1];
        let pa = partition(a.clone());
        let pb = partition(b);
        let moved = partition(a.iter().map(|l| perm[*l]).collect());
        let d1 = distance_in_measure(&pa, &pb).unwrap().distance;
        let d2 = distance_in_measure(&moved, &pb).unwrap().distance;
        prop_assert!((d1 - d2).abs() < 1e-12);
        prop_assert!(distance_in_measure(&pa, &moved).unwrap().distance.abs() < 1e-15);
    }

    #[test]
    fn overlap_rows_sum_to_cluster_masses(a in labels(4), b in labels(3)) {
        let pa = partition(a);
        let pb = partition(b);
        let (overlap, s) = overlap_matrix(&pa, &pb).unwrap();
        let cm = pa.cluster_masses();
        for i in 0..s {
            let row: f64 = overlap[i * s..(i + 1) * s].iter().sum();
            let want = cm.get(i).copied().unwrap_or(0.0);
            prop_assert!((row - want).abs() < 1e-12);
        }
    }
}
