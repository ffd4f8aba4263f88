//! Integration checks of the stratum machinery: partition totality, frame
//! quality on sampled strata, mass consistency against closed-form measures,
//! and stability of pairings under vanishing offsets.

use mamax::forms::DifferentialForm;
use mamax::ma::{self, TestFunction};
use mamax::scene::{DomainBox, HoloPoly, Scene, SmoothPiece};
use mamax::strata::{self, ActiveSet, SamplingPlan};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

fn disc_scene() -> Scene {
    Scene::new(
        1,
        vec![
            SmoothPiece::Constant { dim: 1, value: 0.0 },
            SmoothPiece::LogSumSquares {
                scale: 1.0,
                polys: vec![HoloPoly::coordinate(1, 0)],
            },
        ],
        DomainBox::centered(1, 2.0),
    )
    .unwrap()
}

#[test]
fn partition_total_and_mostly_open() {
    // classify is total and single-valued on 1e5 random points, and the
    // open strata carry all but an O(tolerance) sliver of the volume
    let scene = Scene::new(
        2,
        vec![
            SmoothPiece::Constant { dim: 2, value: 0.0 },
            SmoothPiece::Affine {
                constant: 0.1,
                coef_x: vec![0.8, -0.3],
                coef_y: vec![0.2, 0.5],
            },
            SmoothPiece::HermitianQuadratic {
                dim: 2,
                constant: -0.2,
                linear: vec![Complex64::new(0.1, 0.0), Complex64::new(0.0, -0.2)],
                hermitian: vec![
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.2, 0.1),
                    Complex64::new(0.2, -0.1),
                    Complex64::new(0.7, 0.0),
                ],
                pluriharmonic: vec![Complex64::default(); 4],
            },
        ],
        DomainBox::centered(2, 1.0),
    )
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let mut point = vec![0.0; 4];
    let mut open = 0u64;
    let n = 100_000u64;
    for _ in 0..n {
        scene.domain.sample(&mut rng, &mut point);
        let j = strata::classify(&scene, &point).expect("classify is total");
        assert!(!j.is_empty());
        if j.len() == 1 {
            open += 1;
        }
    }
    let frac = open as f64 / n as f64;
    assert!(frac > 0.999, "open strata cover {frac}");
}

#[test]
fn stratum_samples_pass_type_invariants() {
    let scene = disc_scene();
    let j = ActiveSet::new(vec![0, 1]).unwrap();
    let plan = SamplingPlan::default()
        .with_proposals(60_000)
        .with_delta_frac(0.01);
    let sampling = strata::sample_stratum(&scene, &j, &plan, 13);
    assert!(sampling.samples.len() > 300);
    for s in &sampling.samples {
        // residuals at the sample point
        let r = (scene.piece_value(0, &s.point) - scene.piece_value(1, &s.point)).abs();
        assert!(r <= 1e-9, "residual {r}");
        // orthonormality to 1e-10
        for (a, va) in s.frame.iter().enumerate() {
            for (b, vb) in s.frame.iter().enumerate() {
                let dot = va.dot(vb);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
        // tangency to the constraint gradient to 1e-8
        let jet0 = scene.piece_jet(0, &s.point).unwrap();
        let jet1 = scene.piece_jet(1, &s.point).unwrap();
        let grad = jet0.sub(&jet1).real_gradient();
        let unit = &grad / grad.norm();
        for v in &s.frame {
            assert!(v.dot(&unit).abs() < 1e-8);
        }
        assert!(s.weight >= 0.0);
    }
}

#[test]
fn disk_area_mass() {
    // the open stratum of the disc scene is the unit disk, area π
    let scene = disc_scene();
    let j = ActiveSet::new(vec![0]).unwrap();
    let plan = SamplingPlan::default().with_proposals(400_000);
    let s = strata::sample_stratum(&scene, &j, &plan, 19);
    let target = std::f64::consts::PI;
    let w = s.total_weight();
    assert!((w - target).abs() < 0.01 * target, "disk mass {w}");
}

#[test]
fn torus_surface_mass() {
    // the joint stratum of the polydisc scene is the torus, surface (2π)²
    let scene = Scene::new(
        2,
        vec![
            SmoothPiece::Constant { dim: 2, value: 0.0 },
            SmoothPiece::LogSumSquares {
                scale: 0.5,
                polys: vec![HoloPoly::coordinate(2, 0)],
            },
            SmoothPiece::LogSumSquares {
                scale: 0.5,
                polys: vec![HoloPoly::coordinate(2, 1)],
            },
        ],
        DomainBox::centered(2, 1.5),
    )
    .unwrap();
    let j = ActiveSet::new(vec![0, 1, 2]).unwrap();
    let plan = SamplingPlan::default()
        .with_proposals(2_000_000)
        .with_delta_frac(0.01);
    let s = strata::sample_stratum(&scene, &j, &plan, 23);
    let target = (2.0 * std::f64::consts::PI).powi(2);
    let w = s.total_weight();
    assert!((w - target).abs() < 0.02 * target, "torus mass {w} vs {target}");
}

#[test]
fn pairing_stable_under_vanishing_offsets() {
    // perturbing by constants and letting the perturbation go to zero
    // reproduces the unperturbed value within combined error bars
    let base = Scene::new(
        1,
        vec![
            SmoothPiece::Constant { dim: 1, value: 0.0 },
            SmoothPiece::Affine {
                constant: 0.0,
                coef_x: vec![1.0],
                coef_y: vec![0.0],
            },
        ],
        DomainBox::centered(1, 1.0),
    )
    .unwrap();
    let phi = TestFunction::Bump {
        center: vec![0.0, 0.0],
        radius: 0.9,
        amplitude: 1.0,
    };
    let plan = SamplingPlan::default()
        .with_proposals(300_000)
        .with_delta_frac(0.02);
    let reference = ma::pair(&base, 1, &phi, &plan, 5).unwrap();
    let mut last = f64::NAN;
    for eps in [0.2, 0.1, 0.05, 0.0] {
        let scene = base.clone().with_offsets(vec![0.0, eps]).unwrap();
        let r = ma::pair(&scene, 1, &phi, &plan, 5).unwrap();
        last = r.value;
        if eps == 0.0 {
            assert_eq!(r.value, reference.value);
        }
    }
    // the ε-sequence values converge onto the reference
    let combined = 3.0 * (2.0f64).sqrt() * reference.stderr + 0.01 * reference.value.abs();
    assert!(
        (last - reference.value).abs() <= combined,
        "offset limit {last} vs {}",
        reference.value
    );
}

#[test]
fn stratum_order_bound_is_enforced() {
    // densities for |J| > n+1 are never defined: the request errors
    let scene = Scene::new(
        1,
        vec![
            SmoothPiece::Constant { dim: 1, value: 0.0 },
            SmoothPiece::Affine {
                constant: 0.0,
                coef_x: vec![1.0],
                coef_y: vec![0.0],
            },
            SmoothPiece::Affine {
                constant: 0.0,
                coef_x: vec![0.0],
                coef_y: vec![1.0],
            },
        ],
        DomainBox::centered(1, 1.0),
    )
    .unwrap();
    let j = ActiveSet::new(vec![0, 1, 2]).unwrap();
    let plan = SamplingPlan::default().with_proposals(200_000).with_delta_frac(0.05);
    let sampling = strata::sample_stratum(&scene, &j, &plan, 3);
    assert!(!sampling.samples.is_empty(), "the triple point should be sampled");
    let complement = DifferentialForm::one(1);
    let err = ma::stratum_density(&scene, &sampling.samples[0], 1, &complement);
    assert!(matches!(err, Err(ma::MaError::StratumOrder { .. })));
}

#[test]
fn smooth_max_keeps_psh_hessians_psd() {
    // softmax smoothing of plurisubharmonic pieces has PSD complex Hessian
    let scene = Scene::new(
        2,
        vec![
            SmoothPiece::Constant { dim: 2, value: 0.0 },
            SmoothPiece::LogSumSquares {
                scale: 0.5,
                polys: vec![HoloPoly::coordinate(2, 0), HoloPoly::coordinate(2, 1)],
            },
            SmoothPiece::HermitianQuadratic {
                dim: 2,
                constant: -0.3,
                linear: vec![Complex64::new(0.2, 0.1), Complex64::default()],
                hermitian: vec![
                    Complex64::new(0.5, 0.0),
                    Complex64::new(0.1, 0.2),
                    Complex64::new(0.1, -0.2),
                    Complex64::new(0.9, 0.0),
                ],
                pluriharmonic: vec![Complex64::default(); 4],
            },
        ],
        DomainBox::centered(2, 1.2),
    )
    .unwrap();
    let piece = scene.smooth_max(0.07);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let mut point = vec![0.0; 4];
    for _ in 0..200 {
        scene.domain.sample(&mut rng, &mut point);
        let jet = match piece.jet(&point) {
            Ok(j) => j,
            Err(_) => continue, // pole of a member away from activity
        };
        // PSD via the real embedding of the Hermitian matrix
        let dim = 2;
        let m = nalgebra::DMatrix::from_fn(2 * dim, 2 * dim, |r, c| {
            let (j, k) = (r % dim, c % dim);
            let h = jet.hessian[j * dim + k];
            match (r / dim, c / dim) {
                (0, 0) | (1, 1) => h.re,
                (1, 0) => h.im,
                (0, 1) => -h.im,
                _ => unreachable!(),
            }
        });
        let lmin = m
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(lmin >= -1e-10 * m.norm().max(1.0), "lmin {lmin}");
    }
}

#[test]
fn fubini_study_square_vanishes_with_fd_oracle() {
    // u = log(|z_1|² + |z_2|²): (dd^c u)² = 0 where u is finite; the
    // analytic Hessian is cross-checked by finite differences
    let piece = SmoothPiece::LogSumSquares {
        scale: 1.0,
        polys: vec![HoloPoly::coordinate(2, 0), HoloPoly::coordinate(2, 1)],
    };
    let pt = [1.0, 0.0, 0.0, 0.0];
    let jet = piece.jet(&pt).unwrap();
    let (_, fd_hessian) = mamax::scene::finite_difference_jet(&piece, &pt, 1e-4);
    for (a, b) in jet.hessian.iter().zip(&fd_hessian) {
        assert!((a - b).norm() < 1e-6, "{a} vs {b}");
    }
    let ddc = mamax::forms::ddc_from_hessian(&jet);
    let square = ddc.power(2).unwrap();
    assert!(
        square.sup_norm() < 1e-12,
        "FS pullback square should vanish: {square:?}"
    );
}
