use fairfront_core::pareto::{frontier_indices, DominanceMode};
use proptest::prelude::*;

fn dominated_by(a: (f64, f64), b: (f64, f64), mode: DominanceMode) -> bool {
    match mode {
        DominanceMode::Weak => b.0 >= a.0 && b.1 >= a.1 && (b.0 > a.0 || b.1 > a.1),
        DominanceMode::Strict => b.0 > a.0 && b.1 > a.1,
    }
}

/// Quadratic filter: keep every point no other point dominates.
fn brute_force(points: &[(f64, f64)], mode: DominanceMode) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|&q| dominated_by(points[i], q, mode)))
        .collect()
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn coarse_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0u8..12, 0u8..12), 0..120).prop_map(|v| {
        v.into_iter()
            .map(|(a, b)| (f64::from(a) / 11.0, f64::from(b) / 11.0))
            .collect()
    })
}

fn fine_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..300)
}

fn any_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop_oneof![coarse_points(), fine_points()]
}

fn mode() -> impl Strategy<Value = DominanceMode> {
    prop_oneof![Just(DominanceMode::Weak), Just(DominanceMode::Strict)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn sweep_matches_brute_force(pts in any_points(), mode in mode()) {
        prop_assert_eq!(sorted(frontier_indices(&pts, mode)), brute_force(&pts, mode));
    }

    #[test]
    fn members_are_mutually_non_dominated(pts in any_points(), mode in mode()) {
        let f = frontier_indices(&pts, mode);
        for &i in &f {
            for &j in &f {
                prop_assert!(!dominated_by(pts[i], pts[j], mode));
            }
        }
    }

    #[test]
    fn every_excluded_point_is_dominated_by_a_member(pts in any_points(), mode in mode()) {
        let f = frontier_indices(&pts, mode);
        for i in 0..pts.len() {
            if !f.contains(&i) {
                prop_assert!(f.iter().any(|&j| dominated_by(pts[i], pts[j], mode)));
            }
        }
    }

    #[test]
    fn extraction_is_idempotent(pts in any_points(), mode in mode()) {
        let f = frontier_indices(&pts, mode);
        let sub: Vec<(f64, f64)> = f.iter().map(|&i| pts[i]).collect();
        prop_assert_eq!(sorted(frontier_indices(&sub, mode)), (0..sub.len()).collect::<Vec<_>>());
    }

    #[test]
    fn strict_frontier_contains_weak_frontier(pts in any_points()) {
        let weak = frontier_indices(&pts, DominanceMode::Weak);
        let strict = frontier_indices(&pts, DominanceMode::Strict);
        for i in weak {
            prop_assert!(strict.contains(&i));
        }
    }

    #[test]
    fn rescaling_preserves_the_frontier(
        pts in any_points(),
        mode in mode(),
        ex in -8i32..8,
        ey in -8i32..8,
    ) {
        // power-of-two factors keep the map exact and strictly increasing
        let (a, b) = (2f64.powi(ex), 2f64.powi(ey));
        let moved: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (a * x, b * y)).collect();
        prop_assert_eq!(frontier_indices(&moved, mode), frontier_indices(&pts, mode));
    }

    #[test]
    fn weak_frontier_is_a_staircase(pts in any_points()) {
        let f = frontier_indices(&pts, DominanceMode::Weak);
        let mut stair: Vec<(f64, f64)> = f.iter().map(|&i| pts[i]).collect();
        stair.dedup();
        for w in stair.windows(2) {
            prop_assert!(w[0].0 < w[1].0, "accuracy must strictly increase: {:?}", w);
            prop_assert!(w[0].1 > w[1].1, "score must strictly decrease: {:?}", w);
        }
    }

    #[test]
    fn input_order_does_not_matter(pts in any_points(), mode in mode(), rot in 0usize..1000) {
        if pts.is_empty() {
            return Ok(());
        }
        let k = rot % pts.len();
        let mut rotated = pts.clone();
        rotated.rotate_left(k);
        let back: Vec<usize> = frontier_indices(&rotated, mode)
            .into_iter()
            .map(|i| (i + k) % pts.len())
            .collect();
        prop_assert_eq!(sorted(back), sorted(frontier_indices(&pts, mode)));
    }
}

#[test]
fn output_is_ordered_by_ascending_accuracy() {
    let pts = [(0.9, 0.1), (0.1, 0.9), (0.5, 0.5), (0.5, 0.5), (0.3, 0.4)];
    let f = frontier_indices(&pts, DominanceMode::Weak);
    assert_eq!(f, vec![1, 2, 3, 0]);
}
