use nalgebra::{DMatrix, Rotation2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeshape::clustering::{linkage, Linkage};
use treeshape::metric::{preshape_dissimilarity_sq, register_trees};
use treeshape::srvf::Sampling;
use treeshape::statistics::{
    atlas_from_registered, coefficient_matrix, design_matrix, karcher_mean, tangent_vectors, Atlas,
};
use treeshape::synthetic::{random_tree, SynthParams};
use treeshape::tree::normalize_scale;
use treeshape::*;

fn small() -> AnalysisOptions {
    AnalysisOptions {
        sampling: Sampling { n_main: 40, n_lat: 20 },
        ..Default::default()
    }
}

fn trees(seed: u64, count: usize, params: &SynthParams) -> Vec<RootTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_tree(&mut rng, &format!("r{i}"), params)).collect()
}

fn few_laterals() -> SynthParams {
    SynthParams {
        lateral_count: (1, 2),
        ..Default::default()
    }
}

/// Recomputes every inter-cluster distance from member sets.
fn naive_single_linkage(d: &DistanceMatrix) -> Vec<f64> {
    let mut clusters: Vec<Vec<usize>> = (0..d.len()).map(|i| vec![i]).collect();
    let mut heights = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let h = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| (i, j)))
                    .map(|(i, j)| d.values[i][j])
                    .fold(f64::INFINITY, f64::min);
                if h < best.0 {
                    best = (h, a, b);
                }
            }
        }
        let merged = clusters.remove(best.2);
        clusters[best.1].extend(merged);
        heights.push(best.0);
    }
    heights
}

#[test]
fn single_linkage_matches_naive_agglomeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let pts: Vec<[f64; 2]> = (0..8).map(|_| [rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)]).collect();
        let values = pts
            .iter()
            .map(|a| pts.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()).collect())
            .collect();
        let d = DistanceMatrix::new((0..8).map(|i| i.to_string()).collect(), values).unwrap();
        let got: Vec<f64> = linkage(&d, Linkage::Single).unwrap().merges.iter().map(|m| m.height).collect();
        assert_eq!(got, naive_single_linkage(&d));
    }
}

#[test]
fn distance_is_invariant_to_rigid_motion() {
    let w = Weights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for t in trees(1, 4, &SynthParams::default()) {
        let (angle, dx, dy) = (rng.gen_range(-3.0..3.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let moved = t.map_points(|p| p.rotate(angle).translate(dx, dy));
        let d = distance(&t, &moved, &w, &small()).unwrap();
        assert!(d < 1e-4, "{d}");
    }
}

#[test]
fn normalized_distance_is_scale_invariant() {
    let w = Weights::default();
    for t in trees(2, 3, &SynthParams::default()) {
        let scaled = t.map_points(|p| p.scale(1.7));
        let d = distance(&normalize_scale(&t).unwrap(), &normalize_scale(&scaled).unwrap(), &w, &small()).unwrap();
        assert!(d < 1e-4, "{d}");
    }
}

#[test]
fn registration_is_nearly_symmetric() {
    let w = Weights::default();
    let ts = trees(3, 6, &few_laterals());
    let mut ds = Vec::new();
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            ds.push((distance(&ts[i], &ts[j], &w, &small()).unwrap(), distance(&ts[j], &ts[i], &w, &small()).unwrap()));
        }
    }
    let max = ds.iter().map(|p| p.0.max(p.1)).fold(0.0, f64::max);
    for (a, b) in ds {
        assert!((a - b).abs() / max < 0.05, "{a} vs {b}");
    }
}

#[test]
fn geodesic_path_length_equals_endpoint_distance() {
    let w = Weights::default();
    let ts = trees(4, 2, &few_laterals());
    let g = geodesic(&ts[0], &ts[1], &w, 7, &small()).unwrap();
    let d = distance(&ts[0], &ts[1], &w, &small()).unwrap();
    let len = g.path_length(&w).unwrap();
    assert!((len - d).abs() < 0.01 * d, "{len} vs {d}");
}

#[test]
fn raising_position_weight_never_lowers_fixed_alignment_cost() {
    let ts = trees(5, 2, &few_laterals());
    let base = Weights::default();
    let pair = register_trees(&ts[0], &ts[1], &base, &small()).unwrap();
    let mut last = 0.0;
    for lp in [0.0, 0.5, 1.0, 2.0, 10.0] {
        let w = Weights::new(base.lambda_m, base.lambda_s, lp).unwrap();
        let c = preshape_dissimilarity_sq(&pair.a, &pair.b_registered, &w).unwrap();
        assert!(c >= last);
        last = c;
    }
}

#[test]
fn pairwise_matrix_is_scheduling_independent() {
    let w = Weights::default();
    let ts = trees(6, 4, &few_laterals());
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| pairwise_matrix(&ts, &w, &small()).unwrap())
    };
    let serial = run(1);
    let parallel = run(4);
    assert_eq!(serial, parallel);
    assert_eq!(serial.to_csv(), parallel.to_csv());
    let mut with_dup = ts.clone();
    with_dup.push(ts[0].clone().with_id("dup"));
    let m = pairwise_matrix(&with_dup, &w, &small()).unwrap();
    assert!(m.get(0, 4) < 1e-6);
}

fn small_atlas(seed: u64, m: usize) -> (Atlas, Vec<SrvfTree>, SrvfTree) {
    let w = Weights::default();
    let opts = AnalysisOptions {
        sampling: Sampling { n_main: 24, n_lat: 12 },
        ..Default::default()
    };
    let ts = trees(seed, m, &few_laterals());
    let k = karcher_mean(&ts, &w, &opts, &KarcherOptions { max_iter: 10, ..Default::default() }).unwrap();
    let atlas = atlas_from_registered(&k.mean, &k.registered, &w, opts.sampling, k.ids.clone()).unwrap();
    (atlas, k.registered, k.mean)
}

#[test]
fn gram_eigenvalues_match_dense_covariance() {
    let (atlas, registered, mean) = small_atlas(7, 5);
    let vs = tangent_vectors(&mean, &registered, &atlas.weights).unwrap();
    let dim = vs[0].coords.len();
    let mut k = DMatrix::zeros(dim, dim);
    for v in &vs {
        let col = DMatrix::from_column_slice(dim, 1, &v.coords);
        k += &col * col.transpose();
    }
    k /= (vs.len() - 1) as f64;
    let mut dense: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().cloned().collect();
    dense.sort_by(|a, b| b.total_cmp(a));
    for (i, l) in atlas.eigenvalues.iter().enumerate() {
        assert!((l - dense[i]).abs() < 1e-8, "{l} vs {}", dense[i]);
    }
    // the remaining dense eigenvalues are numerically zero
    assert!(dense[atlas.eigenvalues.len()..].iter().all(|l| l.abs() < 1e-8));
}

#[test]
fn modes_orthonormal_and_reconstruct_training_samples() {
    let (atlas, registered, mean) = small_atlas(8, 6);
    for (i, a) in atlas.modes.iter().enumerate() {
        for (j, b) in atlas.modes.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
    assert!(atlas.retained_ratio() > 0.99);
    let vs = tangent_vectors(&mean, &registered, &atlas.weights).unwrap();
    for (v, b) in vs.iter().zip(&atlas.training_coeffs) {
        let rec = atlas.tangent(b).unwrap();
        let err = rec.coords.iter().zip(&v.coords).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }
}

#[test]
fn regression_recovers_exact_linear_map_and_matches_normal_equations() {
    let (mut atlas, _, _) = small_atlas(10, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (r, l, m) = (atlas.retained.max(1), 2, atlas.training_coeffs.len());
    atlas.retained = r.min(atlas.modes.len());
    let r = atlas.retained;
    let m0 = DMatrix::from_fn(r, l + 1, |_, _| rng.gen_range(-1.0..1.0));
    let params: Vec<Vec<f64>> = (0..m).map(|_| (0..l).map(|_| rng.gen_range(0.0..2.0)).collect()).collect();
    let b = &m0 * design_matrix(&params);
    for i in 0..m {
        for j in 0..r {
            atlas.training_coeffs[i][j] = b[(j, i)];
        }
    }
    let model = fit_regression(&atlas, &params, vec!["x".into(), "y".into()]).unwrap();
    assert!((model.matrix() - &m0).norm() < 1e-8);
    assert!(!model.degenerate);

    // noisy coefficients: compare with the normal equations
    let mut noisy = atlas.clone();
    for row in noisy.training_coeffs.iter_mut() {
        for c in row.iter_mut() {
            *c += rng.gen_range(-0.3..0.3);
        }
    }
    let model = fit_regression(&noisy, &params, vec!["x".into(), "y".into()]).unwrap();
    let p = design_matrix(&params);
    let bn = coefficient_matrix(&noisy);
    let normal = &bn * p.transpose() * (&p * p.transpose()).try_inverse().unwrap();
    assert!((model.matrix() - &normal).norm() < 1e-8);
    let resid = |mm: &DMatrix<f64>| (&bn - mm * &p).norm();
    assert!((model.residual - resid(&normal)).abs() < 1e-8);
    for _ in 0..100 {
        let pert = model.matrix() + DMatrix::from_fn(r, l + 1, |_, _| rng.gen_range(-1e-3..1e-3));
        assert!(resid(&pert) >= model.residual);
    }
}

#[test]
fn constant_coefficients_give_pure_intercept() {
    let (mut atlas, _, _) = small_atlas(11, 5);
    let r = atlas.retained;
    let target: Vec<f64> = (0..r).map(|j| 0.3 * j as f64 - 0.2).collect();
    for row in atlas.training_coeffs.iter_mut() {
        row[..r].copy_from_slice(&target);
    }
    let params: Vec<Vec<f64>> = (0..atlas.training_coeffs.len()).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let model = fit_regression(&atlas, &params, vec!["a".into(), "b".into()]).unwrap();
    for (row, t) in model.m.iter().zip(&target) {
        assert!(row[0].abs() < 1e-10 && row[1].abs() < 1e-10);
        assert!((row[2] - t).abs() < 1e-10);
    }
}

#[test]
fn mode_sweep_is_symmetric_and_valid() {
    let (atlas, _, _) = small_atlas(12, 5);
    let mean = atlas.mean_tree("mean").unwrap();
    let w = atlas.weights;
    let opts = AnalysisOptions {
        sampling: atlas.sampling,
        ..Default::default()
    };
    let plus = statistics::mode_path(&atlas, 0, 1.0).unwrap();
    let minus = statistics::mode_path(&atlas, 0, -1.0).unwrap();
    let (qp, _) = atlas.srvft(&[1.0]).unwrap();
    let (qm, _) = atlas.srvft(&[-1.0]).unwrap();
    let dp = preshape_dissimilarity_sq(&atlas.mean, &qp, &w).unwrap().sqrt();
    let dm = preshape_dissimilarity_sq(&atlas.mean, &qm, &w).unwrap().sqrt();
    assert!((dp - dm).abs() / dp.max(dm) < 0.05);
    assert!(distance(&mean.tree, &plus.tree, &w, &opts).unwrap() > 0.0);
    assert!(distance(&mean.tree, &minus.tree, &w, &opts).unwrap() > 0.0);
    for k in -8..=8 {
        let a = k as f64 / 4.0;
        assert!(statistics::mode_path(&atlas, 0, a).is_ok());
    }
    assert!(statistics::mode_path(&atlas, atlas.retained, 1.0).is_err());
}

#[test]
fn sampled_coefficients_are_centered_and_seeded() {
    let (atlas, _, _) = small_atlas(13, 5);
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_random(&atlas, &mut rng, (-1.0, 1.0), "s").unwrap()
    };
    assert_eq!(draw(5), draw(5));
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sums = vec![0.0; atlas.retained];
    for _ in 0..100 {
        let s = sample_random(&atlas, &mut rng, (-1.0, 1.0), "s").unwrap();
        for (a, b) in sums.iter_mut().zip(&s.coeffs) {
            *a += b / 100.0;
        }
    }
    assert!(sums.iter().all(|m| m.abs() < 0.15), "{sums:?}");
}

#[test]
fn rotated_and_translated_copies_average_to_the_shape() {
    let t = trees(14, 1, &few_laterals()).remove(0);
    let copies = [
        t.clone(),
        t.map_points(|p| p.translate(3.0, -1.0)).with_id("t"),
        t.map_points(|p| p.rotate(0.8)).with_id("r"),
    ];
    let w = Weights::default();
    let k = karcher_mean(&copies, &w, &small(), &KarcherOptions::default()).unwrap();
    let m = srvf::srvft_to_tree(&k.mean, "m").unwrap();
    assert!(distance(&m, &t, &w, &small()).unwrap() < 1e-3);
    assert!(k.objective_history.windows(2).all(|p| p[1] <= p[0]));
}

#[test]
fn rotation_of_srvf_matches_rotation_of_curve() {
    let t = trees(15, 1, &few_laterals()).remove(0);
    let q = srvf::tree_to_srvft(&t, small().sampling).unwrap();
    let rot = Rotation2::new(0.4);
    let q_rot = srvf::tree_to_srvft(&t.map_points(|p| p.rotate(0.4)), small().sampling).unwrap();
    let d = preshape_dissimilarity_sq(&q.rotated(rot.matrix()), &q_rot, &Weights::default()).unwrap();
    assert!(d < 1e-20);
}

#[test]
fn registered_cost_is_rotation_invariant_and_monotone() {
    let w = Weights::default();
    let opts = small();
    let ts = trees(16, 6, &SynthParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for pair in ts.chunks(2) {
        let (a, b) = treeshape::tree::augment_pair(&pair[0], &pair[1]);
        let qa = srvf::tree_to_srvft(&a, opts.sampling).unwrap();
        let qb = srvf::tree_to_srvft(&b, opts.sampling).unwrap();
        let r = register(&qa, &qb, &w, &opts.registration).unwrap();
        assert!(r.cost_history.windows(2).all(|p| p[1] <= p[0]));
        assert!(r.cost <= preshape_dissimilarity_sq(&qa, &qb, &w).unwrap());
        let o = Rotation2::new(rng.gen_range(-3.0..3.0));
        let r2 = register(&qa, &qb.rotated(o.matrix()), &w, &opts.registration).unwrap();
        assert!((r.cost - r2.cost).abs() < 1e-6, "{} vs {}", r.cost, r2.cost);
    }
}
