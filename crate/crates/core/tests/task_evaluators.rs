use ccts_core::tasks::{
    eval_circle_packing, eval_heilbronn, eval_kakeya_ratio, eval_squares, heilbronn_triangle, parse_solution,
    repair_point, solution_document, square_grid, square_penetration, squares_overlap, triangle_area, Circle,
    LatticeDistribution, Square,
};
use ccts_core::{TaskConfig, TaskId, TaskSolution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn inside_square(s: &Square, p: [f64; 2]) -> bool {
    let (sin, cos) = s.theta.sin_cos();
    let (dx, dy) = (p[0] - s.cx, p[1] - s.cy);
    let u = dx * cos + dy * sin;
    let v = -dx * sin + dy * cos;
    u.abs() < s.side / 2.0 && v.abs() < s.side / 2.0
}

/// Monte Carlo hit count of the intersection inside the bounding box of `a`.
fn overlap_hits(a: &Square, b: &Square, samples: usize, rng: &mut ChaCha8Rng) -> usize {
    let r = a.side * std::f64::consts::FRAC_1_SQRT_2;
    (0..samples)
        .filter(|_| {
            let p = [a.cx + rng.random_range(-r..r), a.cy + rng.random_range(-r..r)];
            inside_square(a, p) && inside_square(b, p)
        })
        .count()
}

#[test]
fn separating_axis_agrees_with_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut disjoint = 0;
    let mut overlapping = 0;
    for _ in 0..500 {
        let square = |rng: &mut ChaCha8Rng| Square {
            cx: rng.random_range(0.2..0.8),
            cy: rng.random_range(0.2..0.8),
            theta: rng.random_range(0.0..std::f64::consts::PI),
            side: rng.random_range(0.05..0.4),
        };
        let (a, b) = (square(&mut rng), square(&mut rng));
        let pen = square_penetration(&a, &b);
        if pen.abs() <= 1e-6 {
            continue;
        }
        let hits = overlap_hits(&a, &b, 20_000, &mut rng);
        if pen < 0.0 {
            assert_eq!(hits, 0, "{a:?} {b:?}");
            assert!(!squares_overlap(&a, &b));
            disjoint += 1;
        } else {
            if hits > 0 {
                assert!(squares_overlap(&a, &b));
            }
            if pen > 0.02 {
                assert!(hits > 0, "{a:?} {b:?} pen {pen}");
            }
            overlapping += 1;
        }
    }
    assert!(disjoint > 50 && overlapping > 50, "{disjoint} {overlapping}");
}

#[test]
fn circle_pairs_agree_with_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let c = |rng: &mut ChaCha8Rng| {
            let r = rng.random_range(0.01..0.2);
            Circle { x: rng.random_range(r..1.0 - r), y: rng.random_range(r..1.0 - r), r }
        };
        let pair = [c(&mut rng), c(&mut rng)];
        let gap = (pair[0].x - pair[1].x).hypot(pair[0].y - pair[1].y) - pair[0].r - pair[1].r;
        if gap.abs() < 1e-6 {
            continue;
        }
        let score = eval_circle_packing(&pair, 2);
        assert_eq!(score.is_valid(), gap > 0.0);
    }
}

#[test]
fn grids_score_their_width() {
    for k in 1..=6 {
        let score = eval_squares(&square_grid(k)).value.unwrap();
        assert!((score - k as f64).abs() < 1e-12);
        let doc = solution_document(&TaskSolution::Squares(square_grid(k)));
        let config = TaskConfig::new(TaskId::Squares).with_count(k * k);
        assert!((config.score_document(&doc).value.unwrap() - k as f64).abs() < 1e-12);
    }
}

fn random_triangle_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let [a, b, c] = heilbronn_triangle();
    let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    [a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]), a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1])]
}

#[test]
fn heilbronn_ignores_point_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let mut pts: Vec<[f64; 2]> = (0..11).map(|_| random_triangle_point(&mut rng)).collect();
        let before = eval_heilbronn(&pts).value.unwrap();
        pts.shuffle(&mut rng);
        assert!((eval_heilbronn(&pts).value.unwrap() - before).abs() < 1e-15);
    }
}

#[test]
fn heilbronn_triangle_has_unit_area() {
    let [a, b, c] = heilbronn_triangle();
    assert!((triangle_area(a, b, c) - 1.0).abs() < 1e-12);
}

#[test]
fn repair_is_idempotent_and_lands_in_triangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let [a, b, c] = heilbronn_triangle();
    for _ in 0..10_000 {
        let p = [rng.random_range(-2.0..3.0), rng.random_range(-2.0..3.0)];
        let q = repair_point(p);
        assert_eq!(repair_point(q), q);
        // barycentric areas sum to the whole when q is inside or on the boundary
        let parts = triangle_area(q, b, c) + triangle_area(a, q, c) + triangle_area(a, b, q);
        assert!((parts - 1.0).abs() < 1e-9, "{p:?} -> {q:?}");
    }
    let inner = random_triangle_point(&mut rng);
    assert_eq!(repair_point(inner), inner);
}

/// Entropy in bits of `a*X + b*Y`, computed from scratch.
fn entropy_bits(support: &[((i64, i64), f64)], a: i64, b: i64) -> f64 {
    let mut mass: HashMap<i64, f64> = HashMap::new();
    for &((x, y), p) in support {
        *mass.entry(a * x + b * y).or_default() += p;
    }
    -mass.values().map(|p| p * p.log2()).sum::<f64>()
}

fn random_distribution(rng: &mut ChaCha8Rng) -> Vec<((i64, i64), f64)> {
    let mut points: Vec<(i64, i64)> = Vec::new();
    while points.len() < rng.random_range(2..12) {
        let p = (rng.random_range(-4..5), rng.random_range(-4..5));
        if !points.contains(&p) {
            points.push(p);
        }
    }
    let raw: Vec<f64> = points.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    points.into_iter().zip(raw.into_iter().map(|w| w / total)).collect()
}

#[test]
fn kakeya_ratio_matches_base_two_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..300 {
        let support = random_distribution(&mut rng);
        let dist = match LatticeDistribution::new(support.clone()) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let denom = [(1, 0), (1, 1), (1, 2), (0, 1)]
            .iter()
            .map(|&(a, b)| entropy_bits(&support, a, b))
            .fold(0.0, f64::max);
        let oracle = entropy_bits(&support, 1, -1) / denom;
        let ratio = eval_kakeya_ratio(&dist).unwrap();
        assert!((ratio - oracle).abs() < 1e-9, "{ratio} {oracle}");
    }
}

#[test]
fn kakeya_ratio_is_translation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..300 {
        let support = random_distribution(&mut rng);
        let (dx, dy) = (rng.random_range(-50..50), rng.random_range(-50..50));
        let moved: Vec<_> = support.iter().map(|&((x, y), p)| ((x + dx, y + dy), p)).collect();
        let a = eval_kakeya_ratio(&LatticeDistribution::new(support).unwrap()).unwrap();
        let b = eval_kakeya_ratio(&LatticeDistribution::new(moved).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn documents_round_trip_through_parser() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pts: Vec<[f64; 2]> = (0..11).map(|_| random_triangle_point(&mut rng)).collect();
    let solution = TaskSolution::Heilbronn(pts);
    let config = TaskConfig::new(TaskId::Heilbronn);
    let parsed = parse_solution(&config, &solution_document(&solution)).unwrap();
    assert_eq!(parsed, solution);
    assert!(parse_solution(&config, "not json").is_err());
    assert!(parse_solution(&TaskConfig::new(TaskId::Kakeya), &solution_document(&solution)).is_err());
}
