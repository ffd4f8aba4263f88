//! Stratified Monge-Ampère pairings.
//!
//! On a stratum with active set J of size ℓ the measure `(dd^c u)^n`
//! contributes `σ^{n−ℓ+1}_J ∧ δ^c_J` against the oriented stratum current;
//! strata with ℓ > n+1 contribute nothing. Pairings below top degree use
//! `φ·ω^{dim−n}/(dim−n)!` as the complementary test form, with ω the
//! standard Kähler form.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::forms::{self, DifferentialForm, FormsError};
use crate::scene::{PolyhedronSpec, Scene, SceneError};
use crate::strata::{self, ActiveSet, SamplingPlan, StratumSample, StrataError};

#[derive(Debug, Error)]
pub enum MaError {
    #[error("order n must satisfy 1 <= n <= dim (got n={n}, dim={dim})")]
    BadOrder { n: usize, dim: usize },
    #[error("stratum {j}: |J| = {ell} exceeds n+1 = {max}")]
    StratumOrder { j: String, ell: usize, max: usize },
    #[error("hypothesis violated: stratum {j} meets the complement of K but sum of family sizes {sum} > dim {dim}")]
    HypothesisViolated { j: String, sum: usize, dim: usize },
    #[error("growth hypothesis violated: u - log+|z| deficit grows with |z| (drift {drift:.3} per decade)")]
    GrowthViolated { drift: f64 },
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Strata(#[from] StrataError),
}

/// Test functions with closed-form derivatives.
#[derive(Clone, Debug)]
pub enum TestFunction {
    /// Σ c_α · Π coords^α over the 2·dim real coordinates.
    Polynomial {
        dim: usize,
        terms: Vec<(Vec<u32>, f64)>,
    },
    /// Smooth compactly supported bump: A·exp(1 − 1/(1 − q)) for
    /// q = Σ((t_i − c_i)/R)² < 1, zero outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
    /// Product of per-axis C² plateau ramps: 1 on the inner box, 0 outside
    /// the outer box, quintic smoothstep in between.
    SmoothedBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
        margin: f64,
    },
}

fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

fn smoothstep_d1(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        x * x * (30.0 + x * (-60.0 + 30.0 * x))
    }
}

fn smoothstep_d2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        x * (60.0 + x * (-180.0 + 120.0 * x))
    }
}

impl TestFunction {
    /// Whether the function vanishes near the domain boundary. The inductive
    /// pairing integrates by parts and is only valid for such functions.
    pub fn has_compact_support(&self) -> bool {
        !matches!(self, TestFunction::Polynomial { .. })
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        TestFunction::Polynomial {
            dim,
            terms: vec![(vec![0; 2 * dim], value)],
        }
    }

    /// The square of one real coordinate (axis < 2·dim).
    pub fn coordinate_square(dim: usize, axis: usize) -> Self {
        let mut alpha = vec![0u32; 2 * dim];
        alpha[axis] = 2;
        TestFunction::Polynomial {
            dim,
            terms: vec![(alpha, 1.0)],
        }
    }

    pub fn value(&self, point: &[f64]) -> f64 {
        match self {
            TestFunction::Polynomial { terms, .. } => terms
                .iter()
                .map(|(alpha, c)| {
                    c * alpha
                        .iter()
                        .enumerate()
                        .map(|(i, &e)| point[i].powi(e as i32))
                        .product::<f64>()
                })
                .sum(),
            TestFunction::Bump {
                center,
                radius,
                amplitude,
            } => {
                let q: f64 = point
                    .iter()
                    .zip(center)
                    .map(|(x, c)| ((x - c) / radius).powi(2))
                    .sum();
                if q >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
            TestFunction::SmoothedBox { lo, hi, margin } => {
                let mut v = 1.0;
                for i in 0..point.len() {
                    let a = smoothstep((point[i] - lo[i]) / margin);
                    let b = smoothstep((hi[i] - point[i]) / margin);
                    v *= a * b;
                    if v == 0.0 {
                        break;
                    }
                }
                v
            }
        }
    }

    /// Real gradient (length 2·dim).
    pub fn gradient(&self, point: &[f64]) -> Vec<f64> {
        let n = point.len();
        match self {
            TestFunction::Polynomial { terms, .. } => {
                let mut g = vec![0.0; n];
                for (alpha, c) in terms {
                    for i in 0..n {
                        if alpha[i] == 0 {
                            continue;
                        }
                        let mut v = c * alpha[i] as f64 * point[i].powi(alpha[i] as i32 - 1);
                        for (k, &e) in alpha.iter().enumerate() {
                            if k != i {
                                v *= point[k].powi(e as i32);
                            }
                        }
                        g[i] += v;
                    }
                }
                g
            }
            TestFunction::Bump {
                center,
                radius,
                amplitude,
            } => {
                let q: f64 = point
                    .iter()
                    .zip(center)
                    .map(|(x, c)| ((x - c) / radius).powi(2))
                    .sum();
                let mut g = vec![0.0; n];
                if q < 1.0 {
                    let w = 1.0 - q;
                    let f = amplitude * (1.0 - 1.0 / w).exp();
                    let dgdq = -1.0 / (w * w);
                    for i in 0..n {
                        g[i] = f * dgdq * 2.0 * (point[i] - center[i]) / (radius * radius);
                    }
                }
                g
            }
            TestFunction::SmoothedBox { lo, hi, margin } => {
                let a: Vec<f64> = (0..n)
                    .map(|i| {
                        smoothstep((point[i] - lo[i]) / margin)
                            * smoothstep((hi[i] - point[i]) / margin)
                    })
                    .collect();
                let da: Vec<f64> = (0..n)
                    .map(|i| {
                        (smoothstep_d1((point[i] - lo[i]) / margin)
                            * smoothstep((hi[i] - point[i]) / margin)
                            - smoothstep((point[i] - lo[i]) / margin)
                                * smoothstep_d1((hi[i] - point[i]) / margin))
                            / margin
                    })
                    .collect();
                (0..n)
                    .map(|i| {
                        let mut v = da[i];
                        for k in 0..n {
                            if k != i {
                                v *= a[k];
                            }
                        }
                        v
                    })
                    .collect()
            }
        }
    }

    /// Full real Hessian (2·dim × 2·dim, row-major).
    pub fn real_hessian(&self, point: &[f64]) -> Vec<f64> {
        let n = point.len();
        let mut h = vec![0.0; n * n];
        match self {
            TestFunction::Polynomial { terms, .. } => {
                for (alpha, c) in terms {
                    for i in 0..n {
                        for k in 0..n {
                            let (ei, ek) = (alpha[i], alpha[k]);
                            if i == k {
                                if ei < 2 {
                                    continue;
                                }
                                let mut v =
                                    c * (ei * (ei - 1)) as f64 * point[i].powi(ei as i32 - 2);
                                for (l, &e) in alpha.iter().enumerate() {
                                    if l != i {
                                        v *= point[l].powi(e as i32);
                                    }
                                }
                                h[i * n + i] += v;
                            } else {
                                if ei == 0 || ek == 0 {
                                    continue;
                                }
                                let mut v = c * (ei * ek) as f64
                                    * point[i].powi(ei as i32 - 1)
                                    * point[k].powi(ek as i32 - 1);
                                for (l, &e) in alpha.iter().enumerate() {
                                    if l != i && l != k {
                                        v *= point[l].powi(e as i32);
                                    }
                                }
                                h[i * n + k] += v;
                            }
                        }
                    }
                }
            }
            TestFunction::Bump {
                center,
                radius,
                amplitude,
            } => {
                let q: f64 = point
                    .iter()
                    .zip(center)
                    .map(|(x, c)| ((x - c) / radius).powi(2))
                    .sum();
                if q < 1.0 {
                    let w = 1.0 - q;
                    let f = amplitude * (1.0 - 1.0 / w).exp();
                    let g1 = -1.0 / (w * w); // dg/dq for g = 1 − 1/(1−q)
                    let g2 = -2.0 / (w * w * w);
                    let r2 = radius * radius;
                    for i in 0..n {
                        let qi = 2.0 * (point[i] - center[i]) / r2;
                        for k in 0..n {
                            let qk = 2.0 * (point[k] - center[k]) / r2;
                            let mut v = f * (g1 * g1 + g2) * qi * qk;
                            if i == k {
                                v += f * g1 * 2.0 / r2;
                            }
                            h[i * n + k] = v;
                        }
                    }
                }
            }
            TestFunction::SmoothedBox { lo, hi, margin } => {
                let a: Vec<f64> = (0..n)
                    .map(|i| {
                        smoothstep((point[i] - lo[i]) / margin)
                            * smoothstep((hi[i] - point[i]) / margin)
                    })
                    .collect();
                let da: Vec<f64> = (0..n)
                    .map(|i| {
                        (smoothstep_d1((point[i] - lo[i]) / margin)
                            * smoothstep((hi[i] - point[i]) / margin)
                            - smoothstep((point[i] - lo[i]) / margin)
                                * smoothstep_d1((hi[i] - point[i]) / margin))
                            / margin
                    })
                    .collect();
                let dda: Vec<f64> = (0..n)
                    .map(|i| {
                        let u = (point[i] - lo[i]) / margin;
                        let v = (hi[i] - point[i]) / margin;
                        (smoothstep_d2(u) * smoothstep(v)
                            - 2.0 * smoothstep_d1(u) * smoothstep_d1(v)
                            + smoothstep(u) * smoothstep_d2(v))
                            / (margin * margin)
                    })
                    .collect();
                for i in 0..n {
                    for k in 0..n {
                        let mut v = if i == k { dda[i] } else { da[i] * da[k] };
                        for l in 0..n {
                            if l != i && l != k {
                                v *= a[l];
                            }
                        }
                        h[i * n + k] = v;
                    }
                }
            }
        }
        h
    }

    /// Complex mixed Hessian H_{jk} = ∂²f/∂z_j∂z̄_k from the real Hessian.
    pub fn complex_hessian(&self, point: &[f64]) -> Vec<Complex64> {
        let n = point.len();
        let dim = n / 2;
        let rh = self.real_hessian(point);
        let mut ch = vec![Complex64::default(); dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                let xx = rh[(2 * j) * n + 2 * k];
                let yy = rh[(2 * j + 1) * n + 2 * k + 1];
                let xy = rh[(2 * j) * n + 2 * k + 1];
                let yx = rh[(2 * j + 1) * n + 2 * k];
                ch[j * dim + k] = Complex64::new((xx + yy) / 4.0, (xy - yx) / 4.0);
            }
        }
        ch
    }

    /// `dd^c f` as a pointwise form.
    pub fn ddc_form(&self, point: &[f64]) -> DifferentialForm {
        let dim = point.len() / 2;
        let ch = self.complex_hessian(point);
        let two_i = Complex64::new(0.0, 2.0);
        let mut out = DifferentialForm::zero(dim, 2);
        for j in 0..dim {
            for k in 0..dim {
                out.add_term((1u64 << j) | (1u64 << (dim + k)), two_i * ch[j * dim + k]);
            }
        }
        out.prune(forms::PRUNE_EPS);
        out
    }
}

/// Quality flags carried by a pairing.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum Flag {
    /// A stratum produced degeneracy reports and no usable samples.
    DegenerateStratum { stratum: String },
    /// A stratum produced some degeneracy reports alongside samples.
    PartialDegeneracy { stratum: String, count: u64 },
    /// Pole discards exceeded 0.01% of proposals.
    PoleDiscards { stratum: String, fraction: f64 },
    /// A density evaluation had a non-negligible imaginary part.
    ImaginaryResidue { stratum: String, magnitude: f64 },
}

/// Per-stratum accumulation.
#[derive(Clone, Debug, Serialize)]
pub struct StratumStat {
    #[serde(rename = "J")]
    pub stratum: String,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub n_discarded: u64,
}

/// Value of ⟨measure, test⟩ with Monte-Carlo error estimates.
#[derive(Clone, Debug, Serialize)]
pub struct PairingResult {
    pub value: f64,
    pub stderr: f64,
    pub per_stratum: Vec<StratumStat>,
    pub flags: Vec<Flag>,
}

impl PairingResult {
    pub fn has_hard_flags(&self) -> bool {
        self.flags
            .iter()
            .any(|f| matches!(f, Flag::DegenerateStratum { .. }))
    }
}

/// Retained per-sample data, for support diagnostics and CSV dumps.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub stratum: ActiveSet,
    pub point: Vec<f64>,
    pub weight: f64,
    pub orientation_sign: f64,
    pub density: f64,
    pub contribution: f64,
}

pub struct PairingOutput {
    pub result: PairingResult,
    pub records: Vec<SampleRecord>,
}

/// Density at one stratum sample of the order-n stratified measure against
/// the complementary form (the constant 1 for n = dim).
///
/// Returns the signed real density per unit surface measure; the imaginary
/// residue of the frame evaluation is returned alongside for sanity checks.
pub fn stratum_density(
    scene: &Scene,
    sample: &StratumSample,
    n: usize,
    complement: &DifferentialForm,
) -> Result<(f64, f64), MaError> {
    let ell = sample.active.len();
    if ell > n + 1 {
        return Err(MaError::StratumOrder {
            j: sample.active.label(),
            ell,
            max: n + 1,
        });
    }
    let jets: Result<Vec<_>, SceneError> = sample
        .active
        .indices()
        .iter()
        .map(|&j| scene.piece_jet(j, &sample.point))
        .collect();
    let jets = jets?;
    let sigma = forms::sigma(&jets, (n + 1 - ell) as i64)?;
    let delta = forms::delta_c(&jets)?;
    let w = sigma.wedge(&delta)?.wedge(complement)?;
    let v = w.evaluate_on_frame(&sample.frame)?;
    Ok((sample.orientation_sign * v.re, v.im.abs()))
}

/// Like [`stratum_density`] but also returns the cancellation scale: the sum
/// of absolute per-composition contributions. Used by the vanishing checks.
pub fn stratum_density_with_scale(
    scene: &Scene,
    sample: &StratumSample,
    n: usize,
    complement: &DifferentialForm,
) -> Result<(f64, f64), MaError> {
    let ell = sample.active.len();
    if ell > n + 1 {
        return Err(MaError::StratumOrder {
            j: sample.active.label(),
            ell,
            max: n + 1,
        });
    }
    let jets: Result<Vec<_>, SceneError> = sample
        .active
        .indices()
        .iter()
        .map(|&j| scene.piece_jet(j, &sample.point))
        .collect();
    let jets = jets?;
    let delta = forms::delta_c(&jets)?;
    let s = n + 1 - ell;
    let ddc: Vec<DifferentialForm> = jets.iter().map(forms::ddc_from_hessian).collect();
    let mut total = 0.0;
    let mut scale = 0.0;
    for comp in forms::compositions(s, ell) {
        let mut term = DifferentialForm::one(scene.dim);
        for (idx, &b) in comp.iter().enumerate() {
            for _ in 0..b {
                term = term.wedge(&ddc[idx])?;
            }
        }
        let w = term.wedge(&delta)?.wedge(complement)?;
        let v = w.evaluate_on_frame(&sample.frame)?;
        total += sample.orientation_sign * v.re;
        scale += v.norm();
    }
    Ok((total, scale))
}

struct Accum {
    sum: f64,
    sum_sq: f64,
    n_samples: u64,
}

/// Core strata quadrature: runs `integrand` over every admissible stratum.
/// The integrand returns the per-sample factor multiplying the sample weight.
fn run_strata_quadrature<F>(
    scene: &Scene,
    n: usize,
    plan: &SamplingPlan,
    seed: u64,
    collect: bool,
    integrand: F,
) -> Result<PairingOutput, MaError>
where
    F: Fn(&StratumSample) -> Result<(f64, f64), MaError> + Sync,
{
    let dim = scene.dim;
    if n < 1 || n > dim {
        return Err(MaError::BadOrder { n, dim });
    }
    let m = scene.num_pieces();
    let max_ell = (n + 1).min(m).min(2 * dim + 1);
    let mut subsets: Vec<ActiveSet> = Vec::new();
    for mask in 1u64..(1u64 << m) {
        let ell = mask.count_ones() as usize;
        if ell > max_ell {
            continue;
        }
        let idx: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        subsets.push(ActiveSet::from_sorted(idx));
    }
    subsets.sort();

    let mut per_stratum = Vec::new();
    let mut flags = Vec::new();
    let mut records = Vec::new();
    let mut total = 0.0;
    let mut var = 0.0;
    for j in &subsets {
        let sampling = strata::sample_stratum(scene, j, plan, seed);
        let n_prop = sampling.proposals.max(1);
        let eval: Vec<(f64, f64, Option<SampleRecord>)> = sampling
            .samples
            .par_iter()
            .map(|s| {
                let (density, im) = match integrand(s) {
                    Ok(v) => v,
                    Err(_) => (f64::NAN, 0.0),
                };
                let contribution = density * s.weight;
                let rec = if collect {
                    Some(SampleRecord {
                        stratum: j.clone(),
                        point: s.point.clone(),
                        weight: s.weight,
                        orientation_sign: s.orientation_sign,
                        density,
                        contribution,
                    })
                } else {
                    None
                };
                (contribution, im, rec)
            })
            .collect();
        let mut acc = Accum {
            sum: 0.0,
            sum_sq: 0.0,
            n_samples: 0,
        };
        let mut nan_count = 0u64;
        let mut worst_im = 0.0f64;
        for (contribution, im, rec) in eval {
            if contribution.is_nan() {
                nan_count += 1;
                continue;
            }
            worst_im = worst_im.max(im);
            acc.sum += contribution;
            acc.sum_sq += contribution * contribution;
            acc.n_samples += 1;
            if let Some(r) = rec {
                records.push(r);
            }
        }
        // variance over all proposals, misses contributing zero
        let mean = acc.sum / n_prop as f64;
        let var_j = (acc.sum_sq - acc.sum * mean).max(0.0);
        let stderr = var_j.sqrt();
        let discarded = sampling.discards.total() + nan_count;
        if sampling.discards.degenerate > 0 {
            if acc.n_samples == 0 {
                flags.push(Flag::DegenerateStratum { stratum: j.label() });
            } else {
                flags.push(Flag::PartialDegeneracy {
                    stratum: j.label(),
                    count: sampling.discards.degenerate,
                });
            }
        }
        let pole_fraction = sampling.discards.pole as f64 / n_prop as f64;
        if pole_fraction > 1e-4 {
            flags.push(Flag::PoleDiscards {
                stratum: j.label(),
                fraction: pole_fraction,
            });
        }
        if worst_im > 1e-7 * (1.0 + acc.sum.abs()) {
            flags.push(Flag::ImaginaryResidue {
                stratum: j.label(),
                magnitude: worst_im,
            });
        }
        total += acc.sum;
        var += var_j;
        per_stratum.push(StratumStat {
            stratum: j.label(),
            value: acc.sum,
            stderr,
            n_samples: acc.n_samples,
            n_discarded: discarded,
        });
    }
    Ok(PairingOutput {
        result: PairingResult {
            value: total,
            stderr: var.sqrt(),
            per_stratum,
            flags,
        },
        records,
    })
}

/// Strata quadrature with a caller-supplied per-sample integrand that also
/// receives the jets of the active pieces. The inductive oracle routes its
/// modified integrand through this.
pub fn pair_with_integrand(
    scene: &Scene,
    n: usize,
    plan: &SamplingPlan,
    seed: u64,
    integrand: &(dyn Fn(&StratumSample, &[forms::DerivativeJet]) -> Result<(f64, f64), MaError>
          + Sync),
) -> Result<PairingResult, MaError> {
    let out = run_strata_quadrature(scene, n, plan, seed, false, |s| {
        let jets: Result<Vec<_>, SceneError> = s
            .active
            .indices()
            .iter()
            .map(|&j| scene.piece_jet(j, &s.point))
            .collect();
        integrand(s, &jets?)
    })?;
    Ok(out.result)
}

/// ⟨(dd^c u)^n, φ·ω^{dim−n}/(dim−n)!⟩ by stratified quadrature.
pub fn pair(
    scene: &Scene,
    n: usize,
    phi: &TestFunction,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<PairingResult, MaError> {
    Ok(pair_collect(scene, n, phi, plan, seed, false)?.result)
}

pub fn pair_collect(
    scene: &Scene,
    n: usize,
    phi: &TestFunction,
    plan: &SamplingPlan,
    seed: u64,
    collect: bool,
) -> Result<PairingOutput, MaError> {
    if n < 1 || n > scene.dim {
        return Err(MaError::BadOrder { n, dim: scene.dim });
    }
    let complement = DifferentialForm::kaehler_power_normalized(scene.dim, scene.dim - n);
    run_strata_quadrature(scene, n, plan, seed, collect, |s| {
        let (d, im) = stratum_density(scene, s, n, &complement)?;
        Ok((phi.value(&s.point) * d, im))
    })
}

/// Report on the polyhedron hypotheses: growth of the candidate Green
/// function and the family-size bound on strata meeting the complement of K.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    /// max over sampled shells of (log⁺|z| − u), per shell radius.
    pub growth_deficit_per_shell: Vec<(f64, f64)>,
    pub c_estimate: f64,
    pub growth_ok: bool,
    /// Strata with ΣN_j > dim that were probed for points outside K.
    pub checked_strata: Vec<String>,
}

/// Sample the growth hypothesis u ≥ log⁺|z| − C on spherical shells.
///
/// Random full-dimensional directions never pin a deficit that lives on a
/// coordinate subspace (the deficit there looks radius-independent to them),
/// so every proper coordinate-subspace direction family is probed as well.
pub fn check_growth(spec: &PolyhedronSpec, seed: u64) -> Result<HypothesisReport, MaError> {
    let scene = spec.green_candidate()?;
    let dim = spec.dim;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x67727774);
    // one direction set reused across shells so deficits are comparable
    let mut directions: Vec<Vec<f64>> = Vec::new();
    let gaussian = |rng: &mut rand_chacha::ChaCha8Rng| {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (-2.0 * u1.ln()).sqrt() * u2.cos()
    };
    for _ in 0..400 {
        let v: Vec<f64> = (0..2 * dim).map(|_| gaussian(&mut rng)).collect();
        directions.push(v);
    }
    for mask in 1u64..(1u64 << dim) {
        if mask == (1 << dim) - 1 {
            continue; // full support already covered
        }
        for _ in 0..24 {
            let v: Vec<f64> = (0..2 * dim)
                .map(|i| {
                    if mask & (1 << (i / 2)) != 0 {
                        gaussian(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            directions.push(v);
        }
    }
    for d in directions.iter_mut() {
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in d.iter_mut() {
            *x /= norm;
        }
    }
    let mut per_shell = Vec::new();
    for &r in &[10.0, 100.0, 1000.0] {
        let mut worst = f64::NEG_INFINITY;
        for d in &directions {
            let v: Vec<f64> = d.iter().map(|x| x * r).collect();
            let (u, _) = scene.envelope_value(&v)?;
            worst = worst.max(r.ln().max(0.0) - u);
        }
        per_shell.push((r, worst));
    }
    let c_estimate = per_shell.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    // a genuine growth failure makes the deficit climb by log(10) per decade
    let drift = (per_shell[2].1 - per_shell[0].1) / 2.0;
    let growth_ok = drift < 0.5;
    Ok(HypothesisReport {
        growth_deficit_per_shell: per_shell,
        c_estimate,
        growth_ok,
        checked_strata: Vec::new(),
    })
}

/// Verify both Theorem-2-style hypotheses; errors on violation.
pub fn check_hypotheses(
    spec: &PolyhedronSpec,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<HypothesisReport, MaError> {
    let mut report = check_growth(spec, seed)?;
    if !report.growth_ok {
        let drift = (report.growth_deficit_per_shell[2].1 - report.growth_deficit_per_shell[0].1)
            / 2.0;
        return Err(MaError::GrowthViolated { drift });
    }
    let scene = spec.green_candidate()?;
    let dim = spec.dim;
    let a = spec.families.len();
    // piece index α+1 in the green scene corresponds to family α
    for mask in 1u64..(1u64 << a) {
        let fams: Vec<usize> = (0..a).filter(|i| mask & (1 << i) != 0).collect();
        let sum_n: usize = fams.iter().map(|&i| spec.families[i].n_alpha()).sum();
        if sum_n <= dim {
            continue;
        }
        let j = ActiveSet::from_sorted(fams.iter().map(|&i| i + 1).collect());
        report.checked_strata.push(j.label());
        let probe_plan = plan.clone().with_proposals(plan.proposals.min(200_000));
        let sampling = strata::sample_stratum(&scene, &j, &probe_plan, seed ^ 0x68797065);
        if sampling
            .samples
            .iter()
            .any(|s| !spec.k_contains(&s.point))
        {
            return Err(MaError::HypothesisViolated {
                j: j.label(),
                sum: sum_n,
                dim,
            });
        }
    }
    Ok(report)
}

/// Equilibrium-measure pairing and support diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumResult {
    /// Pairing of ((1/2π) dd^c u)^dim against φ.
    pub normalized: PairingResult,
    /// Raw pairing before the (2π)^dim normalization.
    pub raw_value: f64,
    pub raw_stderr: f64,
    /// Measure mass found outside K, in normalized units, with stderr.
    pub mass_outside_k: f64,
    pub mass_outside_stderr: f64,
    pub hypothesis: HypothesisReport,
}

pub fn equilibrium_pair(
    spec: &PolyhedronSpec,
    phi: &TestFunction,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<EquilibriumResult, MaError> {
    let hypothesis = check_hypotheses(spec, plan, seed)?;
    let scene = spec.green_candidate()?;
    let dim = spec.dim;
    let output = pair_collect(&scene, dim, phi, plan, seed, true)?;
    let norm = (2.0 * std::f64::consts::PI).powi(dim as i32);
    let mut outside = 0.0;
    let mut outside_sq = 0.0;
    for rec in &output.records {
        // slack of 1e-8 absorbs the projection residual at the boundary
        if !spec.k_contains_relaxed(&rec.point, 1e-8) {
            outside += rec.contribution;
            outside_sq += rec.contribution * rec.contribution;
        }
    }
    let n_prop = plan.proposals.max(1) as f64;
    let outside_stderr = (outside_sq - outside * outside / n_prop).max(0.0).sqrt();
    let raw = output.result.clone();
    let normalized = PairingResult {
        value: raw.value / norm,
        stderr: raw.stderr / norm,
        per_stratum: raw
            .per_stratum
            .iter()
            .map(|s| StratumStat {
                stratum: s.stratum.clone(),
                value: s.value / norm,
                stderr: s.stderr / norm,
                n_samples: s.n_samples,
                n_discarded: s.n_discarded,
            })
            .collect(),
        flags: raw.flags.clone(),
    };
    Ok(EquilibriumResult {
        normalized,
        raw_value: raw.value,
        raw_stderr: raw.stderr,
        mass_outside_k: outside / norm,
        mass_outside_stderr: outside_stderr / norm,
        hypothesis,
    })
}

/// Support diagnostics derived from collected sample records.
pub fn mass_within_distance<F>(records: &[SampleRecord], distance: F, cutoff: f64) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut near = 0.0;
    let mut total = 0.0;
    for rec in records {
        let m = rec.contribution.abs();
        total += m;
        if distance(&rec.point) <= cutoff {
            near += m;
        }
    }
    (near, total)
}

/// Report for the vanishing checks on generalized polyhedra.
#[derive(Clone, Debug, Serialize)]
pub struct VanishingReport {
    pub stratum: String,
    pub order: usize,
    pub max_abs_density: f64,
    pub cancellation_scale: f64,
    pub n_samples: u64,
}

/// Max |density| of the order-N stratified term on E_J for a scene built
/// from log-sum-squares families; the contract is vanishing when N is at
/// least the total family size.
pub fn vanishing_check(
    scene: &Scene,
    j: &ActiveSet,
    n: usize,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<VanishingReport, MaError> {
    let dim = scene.dim;
    if n < 1 || n > dim {
        return Err(MaError::BadOrder { n, dim });
    }
    let complement = DifferentialForm::kaehler_power_normalized(dim, dim - n);
    let sampling = strata::sample_stratum(scene, j, plan, seed);
    let mut max_abs = 0.0f64;
    let mut scale = 0.0f64;
    for s in &sampling.samples {
        let (d, sc) = stratum_density_with_scale(scene, s, n, &complement)?;
        max_abs = max_abs.max(d.abs());
        scale = scale.max(sc);
    }
    Ok(VanishingReport {
        stratum: j.label(),
        order: n,
        max_abs_density: max_abs,
        cancellation_scale: scale,
        n_samples: sampling.samples.len() as u64,
    })
}

/// Merge per-stratum maps from two pairings (used by reports).
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Deterministic JSON for a pairing, used by the byte-identity tests.
pub fn pairing_to_json(result: &PairingResult) -> String {
    serde_json::to_string_pretty(result).expect("pairing serialization")
}

/// Write sample records as CSV (point coords, J, weight, sign, density).
pub fn records_to_csv(records: &[SampleRecord]) -> String {
    let mut out = String::from("J,weight,sign,density,contribution,coords\n");
    for r in records {
        let coords: Vec<String> = r.point.iter().map(|x| format!("{x:.17e}")).collect();
        out.push_str(&format!(
            "\"{}\",{:.17e},{},{:.17e},{:.17e},\"{}\"\n",
            r.stratum.label(),
            r.weight,
            r.orientation_sign,
            r.density,
            r.contribution,
            coords.join(";")
        ));
    }
    out
}

pub use crate::strata::stratum_orientation_sign;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{DomainBox, HoloPoly, PolyFamily, SmoothPiece};

    fn halfplane_scene() -> Scene {
        Scene::new(
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
        .unwrap()
    }

    #[test]
    fn halfplane_line_density_is_one() {
        let scene = halfplane_scene();
        let j = ActiveSet::new(vec![0, 1]).unwrap();
        let plan = SamplingPlan::default().with_proposals(2_000).with_delta_frac(0.02);
        let sampling = strata::sample_stratum(&scene, &j, &plan, 17);
        assert!(!sampling.samples.is_empty());
        let complement = DifferentialForm::one(1);
        for s in sampling.samples.iter().take(20) {
            let (d, im) = stratum_density(&scene, s, 1, &complement).unwrap();
            assert!((d - 1.0).abs() < 1e-12, "density {d}");
            assert!(im < 1e-14);
        }
    }

    #[test]
    fn halfplane_mass_is_two() {
        let scene = halfplane_scene();
        let phi = TestFunction::constant(1, 1.0);
        let plan = SamplingPlan::default()
            .with_proposals(400_000)
            .with_delta_frac(0.02);
        let r = pair(&scene, 1, &phi, &plan, 12345).unwrap();
        assert!(
            (r.value - 2.0).abs() < (3.0 * r.stderr).max(0.02 * 2.0),
            "value {} stderr {}",
            r.value,
            r.stderr
        );
        assert!(r.flags.is_empty(), "{:?}", r.flags);
    }

    #[test]
    fn disc_mass_is_four_pi() {
        let scene = Scene::new(
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
        .unwrap();
        let phi = TestFunction::constant(1, 1.0);
        let plan = SamplingPlan::default()
            .with_proposals(400_000)
            .with_delta_frac(0.01);
        let r = pair(&scene, 1, &phi, &plan, 99).unwrap();
        let target = 4.0 * std::f64::consts::PI;
        assert!(
            (r.value - target).abs() < (3.0 * r.stderr).max(0.02 * target),
            "value {} target {target} stderr {}",
            r.value,
            r.stderr
        );
    }

    #[test]
    fn order_bounds_enforced() {
        let scene = halfplane_scene();
        let phi = TestFunction::constant(1, 1.0);
        let plan = SamplingPlan::default().with_proposals(100);
        assert!(pair(&scene, 0, &phi, &plan, 1).is_err());
        assert!(pair(&scene, 2, &phi, &plan, 1).is_err());
    }

    #[test]
    fn scaling_covariance_at_density_level() {
        // multiplying every piece by c > 0 multiplies the order-n density by c^n
        let c = 1.7;
        let base = Scene::new(
            1,
            vec![
                SmoothPiece::Constant { dim: 1, value: 0.0 },
                SmoothPiece::Affine {
                    constant: 0.1,
                    coef_x: vec![1.0],
                    coef_y: vec![-0.5],
                },
            ],
            DomainBox::centered(1, 1.0),
        )
        .unwrap();
        let scaled = Scene::new(
            1,
            vec![
                SmoothPiece::Constant { dim: 1, value: 0.0 },
                SmoothPiece::Affine {
                    constant: c * 0.1,
                    coef_x: vec![c],
                    coef_y: vec![-0.5 * c],
                },
            ],
            DomainBox::centered(1, 1.0),
        )
        .unwrap();
        let j = ActiveSet::new(vec![0, 1]).unwrap();
        let plan = SamplingPlan::default().with_proposals(4_000).with_delta_frac(0.02);
        let s1 = strata::sample_stratum(&base, &j, &plan, 3);
        let complement = DifferentialForm::one(1);
        for s in s1.samples.iter().take(10) {
            // same geometric stratum: reuse the sample point for the scaled scene
            let s2 = StratumSample {
                point: s.point.clone(),
                active: s.active.clone(),
                frame: s.frame.clone(),
                orientation_sign: s.orientation_sign,
                weight: s.weight,
            };
            let (d1, _) = stratum_density(&base, s, 1, &complement).unwrap();
            let (d2, _) = stratum_density(&scaled, &s2, 1, &complement).unwrap();
            assert!((d2 - c * d1).abs() < 1e-10 * d1.abs().max(1.0));
        }
    }

    #[test]
    fn locality_single_stratum() {
        // φ supported where only piece 1 is active
        let scene = halfplane_scene();
        let phi = TestFunction::Bump {
            center: vec![0.5, 0.0],
            radius: 0.3,
            amplitude: 1.0,
        };
        let plan = SamplingPlan::default().with_proposals(100_000);
        let r = pair(&scene, 1, &phi, &plan, 5).unwrap();
        for st in &r.per_stratum {
            assert!(
                st.value.abs() < 1e-12,
                "stratum {} value {}",
                st.stratum,
                st.value
            );
        }
    }

    #[test]
    fn polydisc_equilibrium() {
        let spec = PolyhedronSpec::new(
            2,
            vec![
                PolyFamily {
                    polys: vec![HoloPoly::coordinate(2, 0)],
                },
                PolyFamily {
                    polys: vec![HoloPoly::coordinate(2, 1)],
                },
            ],
            DomainBox::centered(2, 1.5),
        )
        .unwrap();
        let phi = TestFunction::constant(2, 1.0);
        let plan = SamplingPlan::default()
            .with_proposals(1_500_000)
            .with_delta_frac(0.01);
        let r = equilibrium_pair(&spec, &phi, &plan, 2024).unwrap();
        assert!(
            (r.normalized.value - 1.0).abs() < (3.0 * r.normalized.stderr).max(0.02),
            "mass {} stderr {}",
            r.normalized.value,
            r.normalized.stderr
        );
        assert!(
            r.mass_outside_k.abs() <= 3.0 * r.mass_outside_stderr + 1e-12,
            "outside {} stderr {}",
            r.mass_outside_k,
            r.mass_outside_stderr
        );
    }

    #[test]
    fn growth_violation_detected() {
        // single family {z_1} in ℂ²: u has no growth along the z_2 axis
        let spec = PolyhedronSpec::new(
            2,
            vec![PolyFamily {
                polys: vec![HoloPoly::coordinate(2, 0)],
            }],
            DomainBox::centered(2, 1.5),
        )
        .unwrap();
        let r = check_growth(&spec, 7).unwrap();
        assert!(!r.growth_ok, "{r:?}");
    }

    #[test]
    fn family_size_violation_detected() {
        // one family {z, z²} in ℂ¹: N = 2 > dim = 1 and E_1 leaves K
        let spec = PolyhedronSpec::new(
            1,
            vec![PolyFamily {
                polys: vec![
                    HoloPoly::coordinate(1, 0),
                    HoloPoly::new(1, vec![(vec![2], Complex64::new(1.0, 0.0))]).unwrap(),
                ],
            }],
            DomainBox::centered(1, 2.0),
        )
        .unwrap();
        let plan = SamplingPlan::default().with_proposals(50_000);
        let err = check_hypotheses(&spec, &plan, 3).unwrap_err();
        assert!(matches!(err, MaError::HypothesisViolated { .. }), "{err}");
    }
}
