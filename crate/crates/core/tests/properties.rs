mod common;

use common::*;
use lrsurf::analysis::{contour, merge_across_boundaries, ContourBranch, ContourOptions};
use lrsurf::bspline::{eval_tensor, eval_univariate, insert_knot, Side};
use lrsurf::fitting::{
    compute_accuracy, least_squares_fit_weighted, limit_surfaces, mba_increments, weighted_mid_surface, FitConfig,
    ResidualSet, Threshold,
};
use lrsurf::io::{idw_raster, lrsurf_to_string, parse_lrsurf, raster_from_surface, split_to_tp, Raster};
use lrsurf::{GlobalKnotVector, LRSurface, LocalKnots, PointCloud, Rect, ScaledTensorBSpline};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn local_knots() -> impl Strategy<Value = LocalKnots> {
    (1usize..=4)
        .prop_flat_map(|p| prop::collection::vec(0u8..=6, p + 2))
        .prop_filter_map("degenerate", |mut v| {
            v.sort();
            if v[0] == v[v.len() - 1] {
                return None;
            }
            LocalKnots::new(v.into_iter().map(|k| k as f64 * 0.5).collect()).ok()
        })
}

fn unit() -> Rect {
    Rect::new(0.0, 1.0, 0.0, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn boehm_identity(knots in local_knots(), fa in 0.0f64..1.0, fu in 0.0f64..1.0) {
        let (lo, hi) = (knots.first(), knots.last());
        let a = lo + (hi - lo) * (0.001 + 0.998 * fa);
        let u = lo + (hi - lo) * fu;
        let s = insert_knot(&knots, a).unwrap();
        let lhs = eval_univariate(&knots, u, 0);
        let rhs = s.alpha1 * eval_univariate(&s.first, u, 0) + s.alpha2 * eval_univariate(&s.second, u, 0);
        prop_assert!((lhs - rhs).abs() < 1e-12, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn univariate_partition_of_unity(
        p in 1usize..=4,
        gaps in prop::collection::vec(0.1f64..3.0, 1..8),
        fu in 0.0f64..=1.0,
    ) {
        let mut values = vec![0.0; p + 1];
        let mut x = 0.0;
        for g in &gaps {
            x += g;
            values.push(x);
        }
        let last = *values.last().unwrap();
        values.extend(std::iter::repeat(last).take(p));
        let g = GlobalKnotVector::new(values, p).unwrap();
        let (a, b) = g.domain();
        let u = a + (b - a) * fu;
        let sum: f64 = (0..g.num_basis()).map(|i| eval_univariate(&g.local(i), u, 0)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "sum {}", sum);
    }

    #[test]
    fn derivative_matches_finite_difference(knots in local_knots(), fu in 0.0f64..1.0) {
        let (lo, hi) = (knots.first(), knots.last());
        let u = lo + (hi - lo) * fu;
        let h = 1e-6;
        // stay away from knots, where derivatives may jump
        prop_assume!(knots.values().iter().all(|&k| (k - u).abs() > 1e-3));
        let fd = (eval_univariate(&knots, u + h, 0) - eval_univariate(&knots, u - h, 0)) / (2.0 * h);
        let d = eval_univariate(&knots, u, 1);
        prop_assert!((d - fd).abs() <= 1e-5 * d.abs().max(1.0), "{} vs {}", d, fd);
    }

    #[test]
    fn tensor_is_zero_outside_support(ku in local_knots(), kv in local_knots(), u in -1.0f64..4.0, v in -1.0f64..4.0) {
        let b = ScaledTensorBSpline::new(ku, kv, 0.5, 1.0).unwrap();
        let s = b.support();
        prop_assume!(!s.contains(u, v));
        prop_assert_eq!(eval_tensor(&b, u, v, 0, 0), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_keeps_unity_geometry_and_minimal_support(seed in any::<u64>(), count in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tp = random_tp(&mut rng, 8, 2, unit());
        let mut s = LRSurface::from_tensor_product(&tp);
        let pts: Vec<(f64, f64)> = (0..200).map(|_| random_point(&mut rng, unit())).collect();
        let before: Vec<f64> = pts.iter().map(|&(u, v)| s.value(u, v)).collect();
        for _ in 0..count {
            let m = random_meshline(&mut rng, &s);
            s.insert_meshline(m).unwrap();
        }
        for (k, &(u, v)) in pts.iter().enumerate() {
            prop_assert!((s.partition_of_unity(u, v).unwrap() - 1.0).abs() < 1e-10);
            prop_assert!((s.value(u, v) - before[k]).abs() < 1e-10);
        }
        let segments = s.mesh_segments();
        for b in s.bsplines() {
            prop_assert!(b.scale > 0.0);
            let sp = b.support();
            for m in &segments {
                let (knots, lo, hi, a0, a1) = match m.direction {
                    lrsurf::Direction::ConstU => (&b.uknots, sp.u0, sp.u1, sp.v0, sp.v1),
                    lrsurf::Direction::ConstV => (&b.vknots, sp.v0, sp.v1, sp.u0, sp.u1),
                };
                if m.fixed > lo && m.fixed < hi && m.start <= a0 && m.end >= a1 {
                    prop_assert!(
                        knots.multiplicity(m.fixed) >= m.multiplicity,
                        "line {:?} crosses support {:?}", m, sp
                    );
                }
            }
        }
    }

    /// Refinement acts linearly on the coefficients: refining `c1 + t c2`
    /// equals the same combination of the refined `c1` and `c2`.
    #[test]
    fn refinement_is_linear_in_coefficients(seed in any::<u64>(), t in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_refined(&mut rng, 5);
        let n = base.num_coefs();
        let c1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lines: Vec<_> = {
            let mut probe = base.clone();
            (0..15).map(|_| {
                let m = random_meshline(&mut rng, &probe);
                probe.insert_meshline(m).unwrap();
                m
            }).collect()
        };
        let refine = |c: &[f64]| {
            let mut s = base.clone();
            s.set_coefs(c).unwrap();
            s.insert_meshlines(&lines).unwrap();
            s
        };
        let combo: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + t * b).collect();
        let (r1, r2, rc) = (refine(&c1), refine(&c2), refine(&combo));
        prop_assert_eq!(r1.num_coefs(), rc.num_coefs());
        for ((a, b), c) in r1.coefs().iter().zip(r2.coefs()).zip(rc.coefs()) {
            prop_assert!((a + t * b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn mba_is_local(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_refined(&mut rng, 10);
        // points only in the lower-left quarter
        let cloud = sample_cloud(&mut rng, 60, Rect::new(0.0, 0.4, 0.0, 0.4), |x, y| x * y);
        let res = ResidualSet::compute(&s, &cloud);
        let inc = mba_increments(&s, &cloud, &res.residuals, &vec![1.0; cloud.len()]);
        for (k, b) in s.bsplines().iter().enumerate() {
            let sp = b.support();
            let covers = cloud.points.iter().any(|p| sp.contains(p.x, p.y));
            if !covers {
                prop_assert_eq!(inc[k], 0.0);
            }
        }
    }

    #[test]
    fn limit_surfaces_bound_the_data(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_refined(&mut rng, 8);
        let cloud = PointCloud::from_xyz((0..400).map(|_| {
            let (x, y) = random_point(&mut rng, unit());
            (x, y, s.value(x, y) + rng.gen_range(-0.3..0.3))
        }));
        let lim = limit_surfaces(&s, &cloud, 3);
        for p in &cloud.points {
            prop_assert!(lim.lower.value(p.x, p.y) <= p.z + 1e-9);
            prop_assert!(lim.upper.value(p.x, p.y) >= p.z - 1e-9);
        }
    }

    #[test]
    fn weighted_blend_is_convex(seed in any::<u64>(), d1 in -1.0f64..0.0, width in 0.1f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_refined(&mut rng, 6);
        let noise: Vec<f64> = (0..s.num_coefs()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let upper = s.map_coefs(|k, b| b.coef + noise[k]);
        let mid = weighted_mid_surface(&s, &upper, d1, d1 + width).unwrap();
        let (cs, cu, cm) = (s.coefs(), upper.coefs(), mid.coefs());
        for k in 0..cs.len() {
            let (lo, hi) = (cs[k].min(cu[k]), cs[k].max(cu[k]));
            prop_assert!(cm[k] >= lo - 1e-15 && cm[k] <= hi + 1e-15);
        }
    }

    #[test]
    fn more_weight_never_increases_own_residual(seed in any::<u64>(), boost in 1.5f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = LRSurface::from_tensor_product(&random_tp(&mut rng, 5, 2, unit()));
        let cloud = sample_cloud(&mut rng, 150, unit(), |x, y| (6.0 * x).sin() * y);
        let config = FitConfig { alpha1: 1e-6, ..FitConfig::default() };
        let k = rng.gen_range(0..cloud.len());
        let mut w = vec![1.0; cloud.len()];
        let a = least_squares_fit_weighted(&s, &cloud, &w, &config).unwrap();
        w[k] *= boost;
        let b = least_squares_fit_weighted(&s, &cloud, &w, &config).unwrap();
        let p = cloud.points[k];
        let (ra, rb) = ((p.z - a.value(p.x, p.y)).abs(), (p.z - b.value(p.x, p.y)).abs());
        prop_assert!(rb <= ra + 1e-8, "{} -> {}", ra, rb);
    }

    #[test]
    fn accuracy_bands_add_up(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_refined(&mut rng, 5);
        let cloud = sample_cloud(&mut rng, 300, Rect::new(-0.1, 1.1, 0.0, 1.0), |x, y| x - y);
        let (rep, _) = compute_accuracy(&s, &cloud, &Threshold::Fixed(0.5));
        prop_assert_eq!(rep.bands.iter().sum::<usize>() + rep.outside_domain, cloud.len());
        prop_assert!(rep.max_dist >= rep.avg_dist && rep.avg_dist >= 0.0);
    }

    #[test]
    fn split_patches_tile_and_reproduce(seed in any::<u64>(), max_seg in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_refined(&mut rng, 20);
        let set = split_to_tp(&s, max_seg).unwrap();
        let area: f64 = set.patches.iter().map(|p| p.rect.area()).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
        for (i, a) in set.patches.iter().enumerate() {
            for b in &set.patches[i + 1..] {
                let ix = (a.rect.u1.min(b.rect.u1) - a.rect.u0.max(b.rect.u0)).max(0.0);
                let iy = (a.rect.v1.min(b.rect.v1) - a.rect.v0.max(b.rect.v0)).max(0.0);
                prop_assert!(ix * iy == 0.0);
            }
        }
        for _ in 0..200 {
            let (u, v) = random_point(&mut rng, unit());
            prop_assert!((set.evaluate(u, v).unwrap() - s.value(u, v)).abs() < 1e-10);
        }
    }

    #[test]
    fn idw_stays_within_data_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = sample_cloud(&mut rng, 200, Rect::new(0.0, 50.0, 0.0, 30.0), |x, y| (x * 0.3).sin() * y);
        let r = idw_raster(&cloud, 2.0, 8.0).unwrap();
        let (lo, hi) = cloud.z_range().unwrap();
        for row in 0..r.nrows {
            for col in 0..r.ncols {
                if let Some(z) = r.value(col, row) {
                    prop_assert!(z >= lo - 1e-12 && z <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn file_round_trips_are_stable(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_refined(&mut rng, 12);
        let text = lrsurf_to_string(&s);
        prop_assert_eq!(&lrsurf_to_string(&parse_lrsurf(&text, "mem").unwrap()), &text);
        let r = raster_from_surface(&s, 0.07, None).unwrap();
        let asc = r.to_asc_string();
        prop_assert_eq!(&Raster::parse_asc(&asc, "mem").unwrap().to_asc_string(), &asc);
    }

    #[test]
    fn contour_vertices_lie_on_the_level(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_refined(&mut rng, 10);
        let (lo, hi) = s.coef_range();
        let level = lo + (hi - lo) * rng.gen_range(0.3..0.7);
        let opts = ContourOptions::default();
        let set = contour(&s, &[level], &opts).unwrap();
        for b in &set.branches {
            for &(x, y) in &b.points {
                prop_assert!((s.value(x, y) - level).abs() < 1e-6, "{}", s.value(x, y) - level);
            }
        }
    }

    /// Cutting branches into pieces and merging them again conserves length
    /// and reassembles each original branch.
    #[test]
    fn merge_conserves_length(seed in any::<u64>(), cuts in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let r = rng.gen_range(0.1..0.3);
        let mut circle: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                (0.5 + r * t.cos(), 0.5 + r * t.sin())
            })
            .collect();
        circle.push(circle[0]);
        let whole = ContourBranch { level: 1.0, points: circle.clone(), closed: true };
        let mut at: Vec<usize> = (0..cuts).map(|_| rng.gen_range(1..n)).collect();
        at.push(0);
        at.push(n);
        at.sort();
        at.dedup();
        let pieces: Vec<ContourBranch> = at
            .windows(2)
            .map(|w| ContourBranch { level: 1.0, points: circle[w[0]..=w[1]].to_vec(), closed: false })
            .collect();
        let before: f64 = pieces.iter().map(|b| b.length()).sum();
        let merged = merge_across_boundaries(pieces, unit());
        let after: f64 = merged.iter().map(|b| b.length()).sum();
        prop_assert!((before - after).abs() <= 1e-9 * before);
        prop_assert_eq!(merged.len(), 1);
        prop_assert!(merged[0].closed);
        prop_assert!((merged[0].length() - whole.length()).abs() < 1e-12);
    }
}

#[test]
fn side_limits_agree_inside_intervals() {
    let k = LocalKnots::new(vec![0.0, 1.0, 1.0, 2.0]).unwrap();
    assert_eq!(k.eval_side(0.5, 0, Side::Left), k.eval_side(0.5, 0, Side::Right));
}
