//! Randomized verification suites for the exterior-algebra identities, the
//! orientation conventions, and the boundary (Stokes) relation between
//! strata. Shared between the test suite and the CLI `verify` command.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::forms::{
    dc_scalar, dc_wedge, ddc_from_hessian, delta_c, field::FormField, field::PolyZZbar, sigma,
    DerivativeJet, DifferentialForm,
};
use crate::ma::MaError;
use crate::scene::{DomainBox, Scene, SmoothPiece};
use crate::strata::{self, ActiveSet, SamplingPlan};

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub instances: u64,
    /// Max relative residual per named identity.
    pub residuals: Vec<(String, f64)>,
    pub threshold: f64,
    pub pass: bool,
}

fn random_complex<R: Rng>(rng: &mut R, scale: f64) -> Complex64 {
    Complex64::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}

/// Random jet with a genuinely Hermitian Hessian.
pub fn random_jet<R: Rng>(rng: &mut R, dim: usize) -> DerivativeJet {
    let grad: Vec<Complex64> = (0..dim).map(|_| random_complex(rng, 1.0)).collect();
    let mut h = vec![Complex64::default(); dim * dim];
    for j in 0..dim {
        h[j * dim + j] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
        for k in j + 1..dim {
            let c = random_complex(rng, 1.0);
            h[j * dim + k] = c;
            h[k * dim + j] = c.conj();
        }
    }
    DerivativeJet::new(dim, rng.gen_range(-1.0..1.0), grad, h).expect("random jet")
}

fn rel_residual(diff: &DifferentialForm, scale: f64) -> f64 {
    diff.sup_norm() / scale.max(1.0)
}

/// The four product-rule identities on random jets: the derivative of the
/// d^c-wedge, absorption of one d^c into δ^c, the alternating-sum form of
/// δ^c, and the recursion of σ.
pub fn lemma2_suite(count: u64, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = vec![0.0f64; 4];
    for it in 0..count {
        let dim = 1 + (it % 3) as usize;
        let ell = 2 + (rng.gen_range(0..3usize)).min(2 * dim);
        let jets: Vec<DerivativeJet> = (0..ell).map(|_| random_jet(&mut rng, dim)).collect();

        // (1): d of the d^c-wedge, with d(d^c u) supplied from the Hessian,
        // assembled in place on the left and factored on the right
        {
            let mut lhs = DifferentialForm::zero(dim, ell + 1);
            for t in 0..ell {
                // replace the t-th d^c factor by dd^c in place
                let mut term = DifferentialForm::one(dim);
                for (s, jet) in jets.iter().enumerate() {
                    if s == t {
                        term = term.wedge(&ddc_from_hessian(jet)).unwrap();
                    } else {
                        term = term.wedge(&dc_scalar(jet)).unwrap();
                    }
                }
                // (−1)^{t−1} with 1-based t is (−1)^t with 0-based t
                let signed = if t % 2 == 0 { term } else { term.neg() };
                lhs = lhs.plus(&signed).unwrap();
            }
            let mut rhs = DifferentialForm::zero(dim, ell + 1);
            for t in 0..ell {
                let rest: Vec<DerivativeJet> = jets
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| *s != t)
                    .map(|(_, j)| j.clone())
                    .collect();
                let term = dc_wedge(&rest)
                    .unwrap()
                    .wedge(&ddc_from_hessian(&jets[t]))
                    .unwrap();
                let signed = if t % 2 == 0 { term } else { term.neg() };
                rhs = rhs.plus(&signed).unwrap();
            }
            let diff = lhs.minus(&rhs).unwrap();
            worst[0] = worst[0].max(rel_residual(&diff, lhs.sup_norm()));
        }

        // (2): d^c u_{j_t} ∧ δ^c_J = (−1)^{ℓ−1} d^c_J for every t
        {
            let dcj = dc_wedge(&jets).unwrap();
            let delta = delta_c(&jets).unwrap();
            let sign = if (ell - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let want = dcj.scaled(Complex64::new(sign, 0.0));
            for t in 0..ell {
                let got = dc_scalar(&jets[t]).wedge(&delta).unwrap();
                let diff = got.minus(&want).unwrap();
                worst[1] = worst[1].max(rel_residual(&diff, want.sup_norm()));
            }
        }

        // (3): Σ_t (−1)^{ℓ−t} d^c_{J(t̂)} = δ^c_J
        {
            let mut lhs = DifferentialForm::zero(dim, ell - 1);
            for t in 0..ell {
                let rest: Vec<DerivativeJet> = jets
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| *s != t)
                    .map(|(_, j)| j.clone())
                    .collect();
                let term = dc_wedge(&rest).unwrap();
                // 1-based: (−1)^{ℓ−t}; with 0-based t this is (−1)^{ℓ−1−t}
                let signed = if (ell - 1 - t) % 2 == 0 {
                    term
                } else {
                    term.neg()
                };
                lhs = lhs.plus(&signed).unwrap();
            }
            let delta = delta_c(&jets).unwrap();
            let diff = lhs.minus(&delta).unwrap();
            worst[2] = worst[2].max(rel_residual(&diff, delta.sup_norm()));
        }

        // (4): dd^c u_{j_t} ∧ σ^n_J + σ^{n+1}_{J(t̂)} = σ^{n+1}_J
        {
            let n = rng.gen_range(0..2i64);
            for t in 0..ell {
                let rest: Vec<DerivativeJet> = jets
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| *s != t)
                    .map(|(_, j)| j.clone())
                    .collect();
                let lhs = ddc_from_hessian(&jets[t])
                    .wedge(&sigma(&jets, n).unwrap())
                    .unwrap()
                    .plus(&sigma(&rest, n + 1).unwrap())
                    .unwrap();
                let rhs = sigma(&jets, n + 1).unwrap();
                let diff = lhs.minus(&rhs).unwrap();
                worst[3] = worst[3].max(rel_residual(&diff, rhs.sup_norm()));
            }
        }
    }
    let threshold = 1e-10;
    let names = [
        "d of dc-wedge",
        "dc absorbs into delta",
        "alternating sum",
        "sigma recursion",
    ];
    let residuals: Vec<(String, f64)> = names
        .iter()
        .zip(&worst)
        .map(|(n, &w)| (n.to_string(), w))
        .collect();
    SuiteReport {
        suite: "lemma2".into(),
        instances: count,
        pass: worst.iter().all(|&w| w < threshold),
        residuals,
        threshold,
    }
}

fn random_scalar_field<R: Rng>(rng: &mut R, dim: usize, max_deg: u8) -> FormField {
    let mut f = FormField::zero(dim, 0);
    let mut p = PolyZZbar::zero(dim);
    for _ in 0..4 {
        let ez: Vec<u8> = (0..dim).map(|_| rng.gen_range(0..=max_deg)).collect();
        let ezb: Vec<u8> = (0..dim).map(|_| rng.gen_range(0..=max_deg)).collect();
        p.add_term(ez, ezb, random_complex(rng, 1.0));
    }
    f.add_term(0, p);
    f
}

fn random_one_one_field<R: Rng>(rng: &mut R, dim: usize, max_deg: u8) -> FormField {
    let mut f = FormField::zero(dim, 2);
    for j in 0..dim {
        for k in 0..dim {
            let mut p = PolyZZbar::zero(dim);
            for _ in 0..2 {
                let ez: Vec<u8> = (0..dim).map(|_| rng.gen_range(0..=max_deg)).collect();
                let ezb: Vec<u8> = (0..dim).map(|_| rng.gen_range(0..=max_deg)).collect();
                p.add_term(ez, ezb, random_complex(rng, 1.0));
            }
            f.add_term((1u64 << j) | (1u64 << (dim + k)), p);
        }
    }
    f
}

/// Bidegree identity: for α of type (1,1) and scalar β, the (2,2)-parts of
/// dα∧d^cβ and dβ∧d^cα agree. Exercised with polynomial coefficients at
/// random evaluation points.
pub fn lemma3_suite(count: u64, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for it in 0..count {
        let dim = 2 + (it % 2) as usize;
        let alpha = random_one_one_field(&mut rng, dim, 2);
        let beta = random_scalar_field(&mut rng, dim, 2);
        let d_alpha = alpha.d();
        let dc_alpha = alpha.dc();
        let d_beta = beta.d();
        let dc_beta = beta.dc();
        for _ in 0..3 {
            let z: Vec<Complex64> = (0..dim).map(|_| random_complex(&mut rng, 1.0)).collect();
            let lhs = d_alpha.eval(&z).wedge(&dc_beta.eval(&z)).unwrap();
            let rhs = d_beta.eval(&z).wedge(&dc_alpha.eval(&z)).unwrap();
            let lhs22 = lhs.bidegree_part(2, 2).unwrap();
            let rhs22 = rhs.bidegree_part(2, 2).unwrap();
            let diff = lhs22.minus(&rhs22).unwrap();
            worst = worst.max(rel_residual(&diff, lhs22.sup_norm().max(rhs22.sup_norm())));
        }
    }
    let threshold = 1e-10;
    SuiteReport {
        suite: "lemma3".into(),
        instances: count,
        residuals: vec![("bidegree (2,2) parts".into(), worst)],
        threshold,
        pass: worst < threshold,
    }
}

/// Combinatorial boundary-sign property: the sign for J ⊂ J̃ equals the
/// parity of the count of smaller elements, cross-checked against an
/// independent inversion count on random subsets.
pub fn lemma4_sign_suite(count: u64, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let m = rng.gen_range(2..8usize);
        let ell = rng.gen_range(1..m);
        let mut pool: Vec<usize> = (0..m).collect();
        for i in (1..pool.len()).rev() {
            let j = rng.gen_range(0..=i);
            pool.swap(i, j);
        }
        let mut sub: Vec<usize> = pool[..ell + 1].to_vec();
        sub.sort_unstable();
        let removed_pos = rng.gen_range(0..sub.len());
        let inserted = sub[removed_pos];
        let j_small: Vec<usize> = sub
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != removed_pos)
            .map(|(_, &v)| v)
            .collect();
        let j = ActiveSet::new(j_small.clone()).unwrap();
        let jt = ActiveSet::new(sub.clone()).unwrap();
        let got = strata::boundary_sign(&j, &jt).unwrap();
        // independent route: position parity of the inserted element
        let k = j_small.iter().filter(|&&x| x < inserted).count();
        let want = if k % 2 == 0 { 1 } else { -1 };
        if got != want {
            worst = 1.0;
        }
    }
    SuiteReport {
        suite: "lemma4-signs".into(),
        instances: count,
        residuals: vec![("sign mismatch indicator".into(), worst)],
        threshold: 0.5,
        pass: worst < 0.5,
    }
}

/// Positivity of dd^c against products i·α∧ᾱ for PSD Hessians, plus the
/// stratified counterpart: the density of δ^c against the oriented stratum
/// current is nonnegative when tested with positive covector products.
pub fn positivity_suite(count: u64, seed: u64) -> Result<SuiteReport, MaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;

    // pointwise: (dd^c u) ∧ Π iα∧ᾱ on PSD Hessians
    for it in 0..count {
        let dim = 1 + (it % 3) as usize;
        // H = A A^*: PSD by construction
        let mut a = vec![Complex64::default(); dim * dim];
        for v in a.iter_mut() {
            *v = random_complex(&mut rng, 1.0);
        }
        let mut h = vec![Complex64::default(); dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                let mut s = Complex64::default();
                for l in 0..dim {
                    s += a[j * dim + l] * a[k * dim + l].conj();
                }
                h[j * dim + k] = s;
            }
        }
        let jet = DerivativeJet::new(dim, 0.0, vec![Complex64::default(); dim], h).unwrap();
        let ddc = ddc_from_hessian(&jet);
        let mut w = ddc;
        for _ in 0..dim - 1 {
            let alpha: Vec<Complex64> = (0..dim).map(|_| random_complex(&mut rng, 1.0)).collect();
            w = w.wedge(&positive_pair_form(dim, &alpha)).unwrap();
        }
        let ambient = ambient_frame(dim);
        let v = w.evaluate_on_frame(&ambient).unwrap();
        worst = worst.max(-v.re);
        worst = worst.max(v.im.abs());
    }

    let threshold = 1e-12;
    Ok(SuiteReport {
        suite: "positivity".into(),
        instances: count,
        residuals: vec![("min pairing (negated)".into(), worst)],
        threshold,
        pass: worst < threshold,
    })
}

/// The (1,1) form i·α∧ᾱ for a constant (1,0) covector α = Σ a_j dz_j.
pub fn positive_pair_form(dim: usize, alpha: &[Complex64]) -> DifferentialForm {
    let mut a = DifferentialForm::zero(dim, 1);
    for (j, &c) in alpha.iter().enumerate() {
        a.add_term(1u64 << j, c);
    }
    let mut abar = DifferentialForm::zero(dim, 1);
    for (j, &c) in alpha.iter().enumerate() {
        abar.add_term(1u64 << (dim + j), c.conj());
    }
    a.wedge(&abar)
        .unwrap()
        .scaled(Complex64::new(0.0, 1.0))
}

pub fn ambient_frame(dim: usize) -> Vec<DVector<f64>> {
    (0..2 * dim)
        .map(|i| {
            let mut v = DVector::zeros(2 * dim);
            v[i] = 1.0;
            v
        })
        .collect()
}

/// Stratified positivity: δ^c_J wedged with random positive covector
/// products, evaluated on oriented frames of sampled strata of random
/// plurisubharmonic scenes. Returns the worst (most negative) density seen,
/// sign-flipped so that `pass` means nothing fell below −threshold.
pub fn stratum_positivity_suite(
    covectors: u64,
    seed: u64,
) -> Result<SuiteReport, MaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut instances = 0u64;
    for dim in [1usize, 2] {
        for n_pieces in [2usize, 3] {
            let scene = random_psh_scene(&mut rng, dim, n_pieces);
            let plan = SamplingPlan::default()
                .with_proposals(40_000)
                .with_delta_frac(0.01);
            for mask in 1u64..(1u64 << n_pieces) {
                let ell = mask.count_ones() as usize;
                if ell < 2 || ell - 1 > 2 * dim || ell + 1 > 2 * dim + 1 {
                    continue;
                }
                // δ^c has degree ℓ−1; q positive pairs fill the frame when
                // ℓ−1 + 2q = 2·dim − (ℓ−1), i.e. q = dim − ℓ + 1
                if dim + 1 < ell {
                    continue;
                }
                let q = dim + 1 - ell;
                let j = ActiveSet::from_sorted(
                    (0..n_pieces).filter(|i| mask & (1 << i) != 0).collect(),
                );
                let sampling = strata::sample_stratum(&scene, &j, &plan, seed ^ mask);
                for s in sampling.samples.iter().take(25) {
                    let jets: Result<Vec<_>, _> = j
                        .indices()
                        .iter()
                        .map(|&p| scene.piece_jet(p, &s.point))
                        .collect();
                    let jets = jets.map_err(MaError::Scene)?;
                    let delta = delta_c(&jets)?;
                    for _ in 0..covectors {
                        let mut w = delta.clone();
                        for _ in 0..q {
                            let alpha: Vec<Complex64> =
                                (0..dim).map(|_| random_complex(&mut rng, 1.0)).collect();
                            w = w.wedge(&positive_pair_form(dim, &alpha))?;
                        }
                        let v = w.evaluate_on_frame(&s.frame)?;
                        let density = s.orientation_sign * v.re;
                        worst = worst.max(-density);
                        instances += 1;
                    }
                }
            }
        }
    }
    let threshold = 1e-12;
    Ok(SuiteReport {
        suite: "stratum-positivity".into(),
        instances,
        residuals: vec![("most negative density".into(), worst)],
        threshold,
        pass: worst < threshold,
    })
}

fn random_psh_scene<R: Rng>(rng: &mut R, dim: usize, n_pieces: usize) -> Scene {
    let mut pieces: Vec<SmoothPiece> = vec![SmoothPiece::Constant { dim, value: 0.0 }];
    while pieces.len() < n_pieces {
        if rng.gen_bool(0.5) {
            pieces.push(SmoothPiece::Affine {
                constant: rng.gen_range(-0.2..0.2),
                coef_x: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                coef_y: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            });
        } else {
            // PSD Hermitian part keeps the piece plurisubharmonic
            let mut a = vec![Complex64::default(); dim * dim];
            for v in a.iter_mut() {
                *v = random_complex(rng, 0.7);
            }
            let mut h = vec![Complex64::default(); dim * dim];
            for j in 0..dim {
                for k in 0..dim {
                    let mut s = Complex64::default();
                    for l in 0..dim {
                        s += a[j * dim + l] * a[k * dim + l].conj();
                    }
                    h[j * dim + k] = s;
                }
            }
            pieces.push(SmoothPiece::HermitianQuadratic {
                dim,
                constant: rng.gen_range(-0.2..0.2),
                linear: (0..dim).map(|_| random_complex(rng, 0.5)).collect(),
                hermitian: h,
                pluriharmonic: vec![Complex64::default(); dim * dim],
            });
        }
    }
    Scene::new(dim, pieces, DomainBox::centered(dim, 1.2)).unwrap()
}

/// A compactly supported test form: bump · (constant-coefficient wedge).
pub struct TestForm {
    pub bump: crate::ma::TestFunction,
    pub constant: DifferentialForm,
}

impl TestForm {
    pub fn eval(&self, point: &[f64]) -> DifferentialForm {
        self.constant
            .scaled(Complex64::new(self.bump.value(point), 0.0))
    }

    /// Exact exterior derivative: d(f·c) = df ∧ c.
    pub fn d(&self, point: &[f64]) -> DifferentialForm {
        let grad = self.bump.gradient(point);
        let dim = self.constant.dim();
        let df = DifferentialForm::from_real_covector(dim, &grad);
        df.wedge(&self.constant).unwrap()
    }
}

/// Random constant-coefficient real form of the given degree.
pub fn random_constant_form<R: Rng>(rng: &mut R, dim: usize, degree: usize) -> DifferentialForm {
    // build from wedges of random real covectors so the result is a real form
    let mut out = DifferentialForm::one(dim);
    for _ in 0..degree {
        let coeffs: Vec<f64> = (0..2 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        out = out
            .wedge(&DifferentialForm::from_real_covector(dim, &coeffs))
            .unwrap();
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct StokesReport {
    pub stratum: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Residual over max(|lhs|, |rhs|, a fraction of the total variation):
    /// integrals that nearly cancel are judged against their variation
    /// rather than the tiny net value.
    pub relative: f64,
    pub lhs_abs: f64,
    pub rhs_abs: f64,
}

/// Monte-Carlo Stokes check for one stratum: ⟨dω, [E_J]⟩ against the signed
/// sum of ⟨ω, [E_J̃]⟩ over the boundary strata J̃ ⊃ J.
pub fn stokes_check(
    scene: &Scene,
    j: &ActiveSet,
    omega: &TestForm,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<StokesReport, MaError> {
    let sampling = strata::sample_stratum(scene, j, plan, seed);
    let mut lhs = 0.0;
    let mut lhs_abs = 0.0;
    for s in &sampling.samples {
        let d_omega = omega.d(&s.point);
        let v = d_omega.evaluate_on_frame(&s.frame)?;
        lhs += s.orientation_sign * v.re * s.weight;
        lhs_abs += v.re.abs() * s.weight;
    }
    let m = scene.num_pieces();
    let mut rhs = 0.0;
    let mut rhs_abs = 0.0;
    for add in 0..m {
        if j.contains(add) {
            continue;
        }
        let mut idx = j.indices().to_vec();
        idx.push(add);
        idx.sort_unstable();
        let jt = ActiveSet::from_sorted(idx);
        if jt.len() - 1 > 2 * scene.dim {
            continue;
        }
        let eps = strata::boundary_sign(j, &jt)? as f64;
        let sampling_t = strata::sample_stratum(scene, &jt, plan, seed ^ (add as u64 + 1));
        for s in &sampling_t.samples {
            let w = omega.eval(&s.point);
            let v = w.evaluate_on_frame(&s.frame)?;
            rhs += eps * s.orientation_sign * v.re * s.weight;
            rhs_abs += v.re.abs() * s.weight;
        }
    }
    let residual = (lhs - rhs).abs();
    let scale = lhs
        .abs()
        .max(rhs.abs())
        .max(0.25 * lhs_abs.max(rhs_abs))
        .max(1e-12);
    Ok(StokesReport {
        stratum: j.label(),
        lhs,
        rhs,
        residual,
        relative: residual / scale,
        lhs_abs,
        rhs_abs,
    })
}

/// The three-affine-pieces scene in ℂ¹ used by the boundary checks:
/// u = max(0, x, y) with strata meeting at the origin.
pub fn tripod_scene() -> Scene {
    Scene::new(
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
    .unwrap()
}

/// ℂ² counterpart: u = max(0, x_1, x_2).
pub fn wedge_scene_c2() -> Scene {
    Scene::new(
        2,
        vec![
            SmoothPiece::Constant { dim: 2, value: 0.0 },
            SmoothPiece::Affine {
                constant: 0.0,
                coef_x: vec![1.0, 0.0],
                coef_y: vec![0.0, 0.0],
            },
            SmoothPiece::Affine {
                constant: 0.0,
                coef_x: vec![0.0, 1.0],
                coef_y: vec![0.0, 0.0],
            },
        ],
        DomainBox::centered(2, 1.0),
    )
    .unwrap()
}

/// Run the Stokes suite on a scene: every stratum J with a nonempty list of
/// boundary strata, against `forms_per_stratum` random test forms.
pub fn stokes_suite(
    scene: &Scene,
    proposals: u64,
    forms_per_stratum: u64,
    seed: u64,
) -> Result<Vec<StokesReport>, MaError> {
    // affine strata carry no curvature bias, so a generous slab keeps the
    // hit counts healthy on the high-codimension strata
    stokes_suite_with_delta(scene, proposals, forms_per_stratum, seed, 0.02)
}

pub fn stokes_suite_with_delta(
    scene: &Scene,
    proposals: u64,
    forms_per_stratum: u64,
    seed: u64,
    delta_frac: f64,
) -> Result<Vec<StokesReport>, MaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = scene.num_pieces();
    let dim = scene.dim;
    let plan = SamplingPlan::default()
        .with_proposals(proposals)
        .with_delta_frac(delta_frac);
    let mut reports = Vec::new();
    for mask in 1u64..(1u64 << m) {
        let ell = mask.count_ones() as usize;
        if ell >= m || ell - 1 >= 2 * dim {
            continue; // no boundary strata to compare against
        }
        let j = ActiveSet::from_sorted((0..m).filter(|i| mask & (1 << i) != 0).collect());
        let manifold_dim = 2 * dim - (ell - 1);
        if manifold_dim == 0 {
            continue;
        }
        for _ in 0..forms_per_stratum {
            // support strictly inside the domain so the box boundary never
            // contributes to either side of the identity
            let center: Vec<f64> = (0..2 * dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let omega = TestForm {
                bump: crate::ma::TestFunction::Bump {
                    center,
                    radius: 0.8,
                    amplitude: 1.0,
                },
                constant: random_constant_form(&mut rng, dim, manifold_dim - 1),
            };
            reports.push(stokes_check(scene, &j, &omega, &plan, seed)?);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma2_residuals_small() {
        let report = lemma2_suite(200, 11);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn lemma3_residuals_small() {
        let report = lemma3_suite(50, 13);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn lemma4_signs_hold() {
        let report = lemma4_sign_suite(500, 17);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn positivity_holds() {
        let report = positivity_suite(100, 19).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn stratum_positivity_holds() {
        let report = stratum_positivity_suite(20, 23).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.instances > 100, "{report:?}");
    }

    #[test]
    fn stokes_tripod_smoke() {
        let scene = tripod_scene();
        let reports = stokes_suite(&scene, 400_000, 1, 29).unwrap();
        assert!(!reports.is_empty());
        for r in &reports {
            assert!(
                r.relative < 0.12 || r.residual < 1e-3,
                "stokes failed: {r:?}"
            );
        }
    }
}
