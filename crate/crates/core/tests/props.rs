//! Property tests for the distribution-estimator and container invariants.

use proptest::prelude::*;

use d2sm::divergence::{divergence_with_grad, kl_divergence, DivergenceVariant, LiveMask};
use d2sm::kernel::{cond_prob_matrix, kernel_matrix};
use d2sm::queue::new_queue_pair;
use d2sm::tensor::{FeatureBatch, ImageTensor, Origin};
use d2sm::{io, PatchSpec};

fn feature_rows(n: std::ops::Range<usize>, d: std::ops::Range<usize>) -> BoxedStrategy<Vec<Vec<f64>>> {
    (n, d)
        .prop_flat_map(|(n, d)| {
            proptest::collection::vec(
                proptest::collection::vec(-3.0f64..3.0, d..d + 1),
                n..n + 1,
            )
        })
        .boxed()
}

fn batch(rows: &[Vec<f64>], origin: Origin) -> FeatureBatch<f64> {
    let (n, d) = (rows.len(), rows[0].len());
    FeatureBatch::new(n, d, rows.iter().flatten().copied().collect(), origin).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_matrix_symmetric_unit_interval_diag_one(rows in feature_rows(2..8, 2..10)) {
        let k = kernel_matrix(&batch(&rows, Origin::Clear)).unwrap();
        let n = k.n();
        for i in 0..n {
            for j in 0..n {
                let v = k.get(i, j);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!((v - k.get(j, i)).abs() < 1e-9);
            }
            let zero_row = rows[i].iter().all(|&x| x == 0.0);
            if !zero_row {
                prop_assert!((k.get(i, i) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cond_prob_columns_stochastic_with_zero_diag(rows in feature_rows(2..8, 2..10)) {
        let p = cond_prob_matrix(&kernel_matrix(&batch(&rows, Origin::Clear)).unwrap());
        let n = p.n();
        for j in 0..n {
            prop_assert_eq!(p.get(j, j), 0.0);
            let mut sum = 0.0;
            for i in 0..n {
                let v = p.get(i, j);
                prop_assert!((0.0..=1.0).contains(&v));
                if i != j {
                    prop_assert!(v > 0.0, "off-diagonal probability not strictly positive");
                    sum += v;
                }
            }
            prop_assert!((sum - 1.0).abs() < 1e-6, "column {} sums to {}", j, sum);
        }
    }

    #[test]
    fn kernel_and_probs_invariant_to_positive_row_scaling(
        rows in feature_rows(3..7, 2..8),
        row_idx in 0usize..6,
        scale in 0.05f64..20.0,
    ) {
        let idx = row_idx % rows.len();
        prop_assume!(rows[idx].iter().any(|&v| v != 0.0));
        let mut scaled = rows.clone();
        for v in &mut scaled[idx] {
            *v *= scale;
        }
        let k0 = kernel_matrix(&batch(&rows, Origin::Clear)).unwrap();
        let k1 = kernel_matrix(&batch(&scaled, Origin::Clear)).unwrap();
        let p0 = cond_prob_matrix(&k0);
        let p1 = cond_prob_matrix(&k1);
        for i in 0..k0.n() {
            for j in 0..k0.n() {
                prop_assert!((k0.get(i, j) - k1.get(i, j)).abs() < 1e-9);
                prop_assert!((p0.get(i, j) - p1.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn joint_permutation_equivariance(rows in feature_rows(3..7, 2..8), rot in 1usize..6) {
        // rotating the rows permutes both indices of K and P identically
        let n = rows.len();
        let rot = rot % n;
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let k0 = kernel_matrix(&batch(&rows, Origin::Clear)).unwrap();
        let k1 = kernel_matrix(&batch(&permuted, Origin::Clear)).unwrap();
        let p0 = cond_prob_matrix(&k0);
        let p1 = cond_prob_matrix(&k1);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((k1.get(i, j) - k0.get(perm[i], perm[j])).abs() < 1e-12);
                prop_assert!((p1.get(i, j) - p0.get(perm[i], perm[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergences_nonnegative_zero_at_equality_js_symmetric(
        rows_x in feature_rows(3..7, 2..8),
        rows_y in feature_rows(3..7, 2..8),
    ) {
        prop_assume!(rows_x.len() == rows_y.len());
        let n = rows_x.len();
        let fx = batch(&rows_x, Origin::Restored);
        let fy = batch(&rows_y, Origin::Clear);
        let live = LiveMask::all_live(n);
        let kl = divergence_with_grad(&fx, &fy, DivergenceVariant::Kl, &live).unwrap();
        let ikl = divergence_with_grad(&fx, &fy, DivergenceVariant::Ikl, &live).unwrap();
        let js = divergence_with_grad(&fx, &fy, DivergenceVariant::Js, &live).unwrap();
        prop_assert!(kl.value >= -1e-9);
        prop_assert!(ikl.value >= -1e-9);
        prop_assert!(js.value >= -1e-9);
        prop_assert!((js.value - 0.5 * (kl.value + ikl.value)).abs() < 1e-12);

        let js_rev = divergence_with_grad(&fy, &fx, DivergenceVariant::Js, &live).unwrap();
        prop_assert!((js.value - js_rev.value).abs() < 1e-9);

        let self_kl = divergence_with_grad(&fx, &fx.clone().with_origin(Origin::Clear),
            DivergenceVariant::Kl, &live).unwrap();
        prop_assert!(self_kl.value.abs() < 1e-9);
    }

    #[test]
    fn divergence_invariant_under_joint_row_permutation(
        rows_x in feature_rows(3..7, 2..8),
        rows_y in feature_rows(3..7, 2..8),
        rot in 1usize..6,
    ) {
        prop_assume!(rows_x.len() == rows_y.len());
        let n = rows_x.len();
        let rot = rot % n;
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let px: Vec<Vec<f64>> = perm.iter().map(|&i| rows_x[i].clone()).collect();
        let py: Vec<Vec<f64>> = perm.iter().map(|&i| rows_y[i].clone()).collect();
        for variant in [DivergenceVariant::Kl, DivergenceVariant::Ikl, DivergenceVariant::Js] {
            let a = kl_like(&rows_x, &rows_y, variant);
            let b = kl_like(&px, &py, variant);
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn divergence_invariant_under_positive_scaling_of_all_rows(
        rows_x in feature_rows(3..6, 2..6),
        rows_y in feature_rows(3..6, 2..6),
        scale in 0.1f64..10.0,
    ) {
        prop_assume!(rows_x.len() == rows_y.len());
        let scaled: Vec<Vec<f64>> = rows_x
            .iter()
            .map(|r| r.iter().map(|&v| v * scale).collect())
            .collect();
        for variant in [DivergenceVariant::Kl, DivergenceVariant::Ikl, DivergenceVariant::Js] {
            let a = kl_like(&rows_x, &rows_y, variant);
            let b = kl_like(&scaled, &rows_y, variant);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tensor_file_round_trip_is_bit_exact(
        values in proptest::collection::vec(-1e6f32..1e6, 1..64),
    ) {
        let dir = std::env::temp_dir().join(format!("d2sm-prop-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("prop.d2t");
        io::write_raw(&path, &[values.len() as u32], &values).unwrap();
        let back = io::read_raw(&path).unwrap();
        prop_assert_eq!(back.dims, vec![values.len() as u32]);
        for (a, b) in values.iter().zip(&back.data) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn queue_occupancy_formula(
        q in 2usize..12,
        n in 1usize..6,
        steps in 1usize..12,
    ) {
        prop_assume!(n <= q);
        let mut qp = new_queue_pair::<f64>(q, 3).unwrap();
        for m in 1..=steps {
            let rows: Vec<Vec<f64>> = (0..n).map(|k| vec![m as f64, k as f64, 1.0]).collect();
            let fb = batch(&rows, Origin::Restored);
            qp.enqueue_batch(&fb, &fb.clone().with_origin(Origin::Clear)).unwrap();
            prop_assert_eq!(qp.occupancy(), (m * n).min(q));
        }
    }

    #[test]
    fn patch_count_formula_holds(
        h in 8usize..40,
        w in 8usize..40,
        k in 2usize..9,
        s in 1usize..9,
    ) {
        prop_assume!(s <= k && k <= h.min(w));
        let grid = d2sm::patch_grid(h, w, PatchSpec::new(k, s).unwrap()).unwrap();
        let expected = ((h - k) / s + 1) * ((w - k) / s + 1);
        prop_assert_eq!(grid.len(), expected);
    }

    #[test]
    fn tiling_round_trip_for_stride_equals_window(
        h_tiles in 1usize..4,
        w_tiles in 1usize..4,
        k in 2usize..6,
        seed in 0u64..1000,
    ) {
        let (h, w) = (h_tiles * k, w_tiles * k);
        let mut rng = d2sm::rng::DetRng::new(seed);
        let img = ImageTensor::new(h, w, 1, (0..h * w).map(|_| rng.next_f64()).collect()).unwrap();
        let grid = d2sm::patch_grid(h, w, PatchSpec::new(k, k).unwrap()).unwrap();
        let patches = d2sm::extract_patches(&img, &grid, k).unwrap();
        let mut rebuilt = ImageTensor::<f64>::zeros(h, w, 1);
        for (patch, &(r0, c0)) in patches.iter().zip(grid.coords()) {
            for r in 0..k {
                for c in 0..k {
                    rebuilt.set(r0 + r, c0 + c, 0, patch.get(r, c, 0));
                }
            }
        }
        prop_assert_eq!(rebuilt, img);
    }
}

/// Value-only divergence helper for the invariance properties.
fn kl_like(rows_x: &[Vec<f64>], rows_y: &[Vec<f64>], variant: DivergenceVariant) -> f64 {
    let fx = batch(rows_x, Origin::Restored);
    let fy = batch(rows_y, Origin::Clear);
    divergence_with_grad(&fx, &fy, variant, &LiveMask::all_live(rows_x.len()))
        .unwrap()
        .value
}
