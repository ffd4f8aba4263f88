//! Stratum detection and quadrature.
//!
//! A stratum is the set where exactly the pieces in an [`ActiveSet`] attain
//! the envelope. Strata with ℓ = |J| ≥ 2 are cut out by the ℓ−1 residuals
//! ρ_t = u_{j_t} − u_{j_{t+1}}; samples are drawn by thickened-slab
//! rejection, projected onto {ρ = 0} by Gauss-Newton, and weighted by the
//! co-area correction √det(∇ρ ∇ρᵀ) / (2δ)^{ℓ−1}.
//!
//! Orientation: frames are orthonormal bases of the tangent space ordered so
//! that (Gram-Schmidt'd ∇ρ_1, …, ∇ρ_{ℓ−1}, frame) is positively oriented in
//! the ambient space. [`stratum_orientation_sign`] converts densities
//! evaluated on such frames to the convention in which δ^c_J wedged with the
//! stratum current is positive.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scene::{Scene, SceneError};

#[derive(Debug, Error)]
pub enum StrataError {
    #[error("degenerate stratum: constraint gradients have rank {rank} < {expected}")]
    Degenerate { rank: usize, expected: usize },
    #[error("projection did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("active sets do not form a boundary pair: {0:?} vs {1:?}")]
    NotBoundaryPair(Vec<usize>, Vec<usize>),
    #[error("active set is empty or not strictly increasing")]
    BadActiveSet,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Sorted set of active piece indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self, StrataError> {
        indices.sort_unstable();
        if indices.is_empty() || indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(StrataError::BadActiveSet);
        }
        Ok(ActiveSet(indices))
    }

    pub fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(!indices.is_empty());
        ActiveSet(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &ActiveSet) -> bool {
        self.0.iter().all(|j| other.contains(*j))
    }

    /// Stable bitmask key (piece indices < 64 in practice).
    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &j| m | (1u64 << j))
    }

    pub fn label(&self) -> String {
        let strs: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        format!("{{{}}}", strs.join(","))
    }
}

/// Quadrature node on a stratum.
#[derive(Clone, Debug)]
pub struct StratumSample {
    pub point: Vec<f64>,
    pub active: ActiveSet,
    /// Orthonormal tangent frame, normals-first positively oriented.
    pub frame: Vec<DVector<f64>>,
    /// Sign converting frame densities to the positive-current convention.
    pub orientation_sign: f64,
    /// Surface-measure weight carried by this sample.
    pub weight: f64,
}

/// Discard counters from one sampling pass.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DiscardCounts {
    pub pole: u64,
    pub unconverged: u64,
    pub misclassified: u64,
    pub out_of_domain: u64,
    pub degenerate: u64,
}

impl DiscardCounts {
    pub fn total(&self) -> u64 {
        self.pole + self.unconverged + self.misclassified + self.out_of_domain + self.degenerate
    }

    fn merge(&mut self, other: &DiscardCounts) {
        self.pole += other.pole;
        self.unconverged += other.unconverged;
        self.misclassified += other.misclassified;
        self.out_of_domain += other.out_of_domain;
        self.degenerate += other.degenerate;
    }
}

/// Result of sampling one stratum.
#[derive(Clone, Debug)]
pub struct StratumSampling {
    pub samples: Vec<StratumSample>,
    pub proposals: u64,
    pub discards: DiscardCounts,
    /// Slab half-width used (absolute), 0 for open strata.
    pub delta: f64,
}

impl StratumSampling {
    pub fn total_weight(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }
}

/// Monte-Carlo parameters for stratum quadrature.
#[derive(Clone, Debug, Serialize)]
pub struct SamplingPlan {
    /// Ambient proposals per stratum.
    pub proposals: u64,
    /// Slab half-width as a fraction of the domain diameter.
    pub delta_frac: f64,
    pub max_newton_iters: usize,
    /// Residual tolerance for projection, scaled by (1 + |u|).
    pub tau_proj: f64,
    /// Proposals per deterministic RNG chunk.
    pub chunk: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            proposals: 100_000,
            delta_frac: 1e-3,
            max_newton_iters: 40,
            tau_proj: 1e-10,
            chunk: 8192,
        }
    }
}

impl SamplingPlan {
    pub fn with_proposals(mut self, n: u64) -> Self {
        self.proposals = n;
        self
    }

    pub fn with_delta_frac(mut self, f: f64) -> Self {
        self.delta_frac = f;
        self
    }
}

/// Sign converting a normals-first frame density on a stratum with |J| = ℓ
/// to the positively-oriented current convention.
pub fn stratum_orientation_sign(ell: usize) -> f64 {
    let e = (ell - 1) + ell * (ell - 1) / 2;
    if e % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Active set at a point, per the scene's activity tolerance. Total and
/// single-valued: every non-polar point gets exactly one set.
pub fn classify(scene: &Scene, point: &[f64]) -> Result<ActiveSet, SceneError> {
    let (_, active) = scene.envelope_value(point)?;
    Ok(ActiveSet::from_sorted(active))
}

fn residuals(scene: &Scene, j: &ActiveSet, point: &[f64]) -> Result<(DVector<f64>, f64), SceneError> {
    let idx = j.indices();
    let mut vals = Vec::with_capacity(idx.len());
    let mut scale: f64 = 1.0;
    for &p in idx {
        let v = scene.piece_value(p, point);
        if v == f64::NEG_INFINITY {
            return Err(SceneError::Pole { piece: p });
        }
        scale = scale.max(v.abs());
        vals.push(v);
    }
    let r = DVector::from_fn(idx.len() - 1, |t, _| vals[t] - vals[t + 1]);
    Ok((r, scale))
}

/// Jacobian of the residual map: rows are real gradients of
/// u_{j_t} − u_{j_{t+1}}.
fn residual_jacobian(
    scene: &Scene,
    j: &ActiveSet,
    point: &[f64],
) -> Result<DMatrix<f64>, SceneError> {
    let idx = j.indices();
    let grads: Result<Vec<DVector<f64>>, SceneError> = idx
        .iter()
        .map(|&p| Ok(scene.piece_jet(p, point)?.real_gradient()))
        .collect();
    let grads = grads?;
    let n = point.len();
    let k = idx.len() - 1;
    Ok(DMatrix::from_fn(k, n, |t, c| grads[t][c] - grads[t + 1][c]))
}

/// Tangency detector: a residual whose gradient is anomalously small
/// against its own curvature scale marks a non-transversal (non-generic)
/// stratum. Returns the number of healthy residual rows.
fn healthy_residual_rows(
    scene: &Scene,
    j: &ActiveSet,
    point: &[f64],
) -> Result<usize, SceneError> {
    let idx = j.indices();
    let jets: Result<Vec<crate::forms::DerivativeJet>, SceneError> =
        idx.iter().map(|&p| scene.piece_jet(p, point)).collect();
    let jets = jets?;
    let diam = scene.domain.diameter();
    let mut healthy = 0;
    for t in 0..idx.len() - 1 {
        let diff = jets[t].sub(&jets[t + 1]);
        let grad = diff.real_gradient().norm();
        // the real Hessian of a scalar is within a factor 4 of its complex
        // mixed Hessian for the piece vocabulary used here
        let hess: f64 = 4.0
            * diff
                .hessian
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
        if grad > 1e-5 * diam * hess {
            healthy += 1;
        }
    }
    Ok(healthy)
}

/// Gauss-Newton projection onto the stratum's residual zero set.
///
/// On success the returned point satisfies ‖ρ‖∞ ≤ τ·(1+scale). Rank
/// deficiency of the constraint Jacobian is reported as a degenerate
/// stratum, never silently dropped.
pub fn project(
    scene: &Scene,
    j: &ActiveSet,
    start: &[f64],
    plan: &SamplingPlan,
) -> Result<Vec<f64>, StrataError> {
    let ell = j.len();
    if ell == 1 {
        return Ok(start.to_vec());
    }
    let k = ell - 1;
    let mut x = start.to_vec();
    for _ in 0..plan.max_newton_iters {
        let (r, scale) = residuals(scene, j, &x)?;
        if r.amax() <= plan.tau_proj * (1.0 + scale) {
            let healthy = healthy_residual_rows(scene, j, &x)?;
            if healthy < k {
                return Err(StrataError::Degenerate {
                    rank: healthy,
                    expected: k,
                });
            }
            return Ok(x);
        }
        let jac = residual_jacobian(scene, j, &x)?;
        let grad_scale = scene.gradient_scale(&x);
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-8 * smax.max(1e-8 * (1.0 + grad_scale)))
            .count();
        if rank < k {
            return Err(StrataError::Degenerate { rank, expected: k });
        }
        let step = svd
            .solve(&r, 1e-12 * smax.max(f64::MIN_POSITIVE))
            .map_err(|_| StrataError::Degenerate { rank, expected: k })?;
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi -= si;
        }
    }
    let (r, scale) = residuals(scene, j, &x)?;
    if r.amax() <= plan.tau_proj * (1.0 + scale) {
        let healthy = healthy_residual_rows(scene, j, &x)?;
        if healthy < k {
            return Err(StrataError::Degenerate {
                rank: healthy,
                expected: k,
            });
        }
        Ok(x)
    } else {
        Err(StrataError::NoConvergence(plan.max_newton_iters))
    }
}

/// Gram-Schmidt the constraint gradients in residual order, then complete
/// to an ambient-positive orthonormal basis. Returns the tangent frame and
/// the density conversion sign for this stratum size.
pub fn oriented_frame(
    scene: &Scene,
    j: &ActiveSet,
    point: &[f64],
) -> Result<(Vec<DVector<f64>>, f64), StrataError> {
    let n = point.len();
    let ell = j.len();
    let sign = stratum_orientation_sign(ell);
    if ell == 1 {
        let frame = (0..n)
            .map(|i| {
                let mut v = DVector::zeros(n);
                v[i] = 1.0;
                v
            })
            .collect();
        return Ok((frame, sign));
    }
    let k = ell - 1;
    let healthy = healthy_residual_rows(scene, j, point).map_err(StrataError::Scene)?;
    if healthy < k {
        return Err(StrataError::Degenerate {
            rank: healthy,
            expected: k,
        });
    }
    let jac = residual_jacobian(scene, j, point)?;
    let grad_scale = scene.gradient_scale(point).max(1.0);
    let mut normals: Vec<DVector<f64>> = Vec::with_capacity(k);
    for t in 0..k {
        let mut g = jac.row(t).transpose();
        let orig = g.norm();
        for b in &normals {
            let c = g.dot(b);
            g -= b * c;
        }
        let norm = g.norm();
        if norm <= 1e-8 * orig.max(1e-6 * grad_scale) {
            return Err(StrataError::Degenerate {
                rank: t,
                expected: k,
            });
        }
        normals.push(g / norm);
    }
    // complete with the most independent coordinate directions
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n - k);
    for _ in 0..n - k {
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = 0.0;
        for i in 0..n {
            let mut v = DVector::zeros(n);
            v[i] = 1.0;
            for b in normals.iter().chain(frame.iter()) {
                let c = v.dot(b);
                v -= b * c;
            }
            let norm = v.norm();
            if norm > best_norm {
                best_norm = norm;
                best = Some(v / norm);
            }
        }
        frame.push(best.expect("frame completion"));
    }
    // ambient orientation: det(normals | frame) must be positive. When the
    // stratum is a point there is no frame vector to flip, so the sign of
    // the normals' determinant becomes part of the orientation sign.
    let full = DMatrix::from_fn(n, n, |r, c| {
        if c < k {
            normals[c][r]
        } else {
            frame[c - k][r]
        }
    });
    if full.determinant() < 0.0 {
        if let Some(last) = frame.last_mut() {
            *last = -&*last;
        } else {
            return Ok((frame, -sign));
        }
    }
    Ok((frame, sign))
}

/// √det of the Gram matrix of the constraint gradients (the co-area factor).
fn gram_sqrt_det(jac: &DMatrix<f64>) -> f64 {
    let g = jac * jac.transpose();
    g.determinant().max(0.0).sqrt()
}

fn stream_rng(seed: u64, mask: u64, chunk: u64) -> ChaCha8Rng {
    // splitmix64 expansion of (seed, stratum, chunk) into a 32-byte key
    let mut state = seed ^ mask.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ chunk.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    let mut key = [0u8; 32];
    for w in key.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        w.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Draw quadrature samples on the stratum E_J.
///
/// Open strata (ℓ = 1) use plain rejection in the domain box with weight
/// V/N per retained point. Higher strata use thickened-slab proposals with
/// the co-area weight. Deterministic for a fixed seed, independent of the
/// rayon thread count: proposals are generated in fixed-size chunks, each
/// with its own counter-derived stream, and merged in chunk order.
pub fn sample_stratum(
    scene: &Scene,
    j: &ActiveSet,
    plan: &SamplingPlan,
    seed: u64,
) -> StratumSampling {
    let n = 2 * scene.dim;
    let k = j.len() - 1;
    let volume = scene.domain.volume();
    let delta = plan.delta_frac * scene.domain.diameter();
    let proposals = plan.proposals;
    if k > n {
        // codimension exceeds the ambient dimension: empty by construction
        return StratumSampling {
            samples: Vec::new(),
            proposals: 0,
            discards: DiscardCounts::default(),
            delta,
        };
    }
    let mask = j.mask();
    let n_chunks = proposals.div_ceil(plan.chunk);
    let per_proposal_weight = volume / proposals as f64;
    let slab_scale = if k > 0 {
        1.0 / (2.0 * delta).powi(k as i32)
    } else {
        1.0
    };

    let chunk_results: Vec<(Vec<StratumSample>, DiscardCounts)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk_idx| {
            let mut rng = stream_rng(seed, mask, chunk_idx);
            let lo = chunk_idx * plan.chunk;
            let hi = (lo + plan.chunk).min(proposals);
            let mut samples = Vec::new();
            let mut discards = DiscardCounts::default();
            let mut point = vec![0.0; n];
            for _ in lo..hi {
                scene.domain.sample(&mut rng, &mut point);
                if k == 0 {
                    match classify(scene, &point) {
                        Ok(active) if active == *j => {}
                        Ok(_) => continue,
                        Err(_) => {
                            discards.pole += 1;
                            continue;
                        }
                    }
                    let (frame, sign) = match oriented_frame(scene, j, &point) {
                        Ok(f) => f,
                        Err(_) => {
                            discards.degenerate += 1;
                            continue;
                        }
                    };
                    samples.push(StratumSample {
                        point: point.clone(),
                        active: j.clone(),
                        frame,
                        orientation_sign: sign,
                        weight: per_proposal_weight,
                    });
                    continue;
                }
                // slab test on the raw residuals
                let (r, _) = match residuals(scene, j, &point) {
                    Ok(r) => r,
                    Err(_) => {
                        discards.pole += 1;
                        continue;
                    }
                };
                if r.amax() > delta {
                    continue;
                }
                let projected = match project(scene, j, &point, plan) {
                    Ok(p) => p,
                    Err(StrataError::Degenerate { .. }) => {
                        discards.degenerate += 1;
                        continue;
                    }
                    Err(StrataError::NoConvergence(_)) => {
                        discards.unconverged += 1;
                        continue;
                    }
                    Err(StrataError::Scene(_)) => {
                        discards.pole += 1;
                        continue;
                    }
                    Err(_) => {
                        discards.unconverged += 1;
                        continue;
                    }
                };
                if !scene.domain.contains(&projected) {
                    discards.out_of_domain += 1;
                    continue;
                }
                match classify(scene, &projected) {
                    Ok(active) if active == *j => {}
                    Ok(_) => {
                        discards.misclassified += 1;
                        continue;
                    }
                    Err(_) => {
                        discards.pole += 1;
                        continue;
                    }
                }
                let (frame, sign) = match oriented_frame(scene, j, &projected) {
                    Ok(f) => f,
                    Err(_) => {
                        discards.degenerate += 1;
                        continue;
                    }
                };
                let jac = match residual_jacobian(scene, j, &projected) {
                    Ok(m) => m,
                    Err(_) => {
                        discards.pole += 1;
                        continue;
                    }
                };
                let gram = gram_sqrt_det(&jac);
                samples.push(StratumSample {
                    point: projected,
                    active: j.clone(),
                    frame,
                    orientation_sign: sign,
                    weight: per_proposal_weight * gram * slab_scale,
                });
            }
            (samples, discards)
        })
        .collect();

    let mut samples = Vec::new();
    let mut discards = DiscardCounts::default();
    for (s, d) in chunk_results {
        samples.extend(s);
        discards.merge(&d);
    }
    StratumSampling {
        samples,
        proposals,
        discards,
        delta,
    }
}

/// Total-weight estimates at the slab widths (δ, δ/2, δ/4) plus a Richardson
/// extrapolation; the spread makes the O(δ²) bias visible.
#[derive(Clone, Debug, Serialize)]
pub struct SlabSweep {
    pub deltas: Vec<f64>,
    pub weights: Vec<f64>,
    pub extrapolated: f64,
    pub monotone: bool,
}

pub fn sample_stratum_sweep(
    scene: &Scene,
    j: &ActiveSet,
    plan: &SamplingPlan,
    seed: u64,
) -> SlabSweep {
    let mut deltas = Vec::new();
    let mut weights = Vec::new();
    for factor in [1.0, 0.5, 0.25] {
        let p = plan.clone().with_delta_frac(plan.delta_frac * factor);
        // same seed across widths: the narrower slabs reuse the same
        // proposals, so successive differences isolate the O(δ²) bias
        let s = sample_stratum(scene, j, &p, seed);
        deltas.push(s.delta);
        weights.push(s.total_weight());
    }
    // assuming O(δ²) bias: w(δ) ≈ w + c δ², halving ⇒ Richardson weight 4/3
    let extrapolated = weights[2] + (weights[2] - weights[1]) / 3.0;
    let d01 = weights[1] - weights[0];
    let d12 = weights[2] - weights[1];
    let monotone = d01 * d12 >= 0.0 || d12.abs() < 1e-6 * weights[2].abs().max(1.0);
    SlabSweep {
        deltas,
        weights,
        extrapolated,
        monotone,
    }
}

/// The sign relating a stratum current to one boundary stratum: (−1)^k
/// where k counts the members of J below the inserted index.
pub fn boundary_sign(j: &ActiveSet, j_tilde: &ActiveSet) -> Result<i32, StrataError> {
    if j_tilde.len() != j.len() + 1 || !j.is_subset_of(j_tilde) {
        return Err(StrataError::NotBoundaryPair(
            j.indices().to_vec(),
            j_tilde.indices().to_vec(),
        ));
    }
    let inserted = j_tilde
        .indices()
        .iter()
        .find(|s| !j.contains(**s))
        .copied()
        .expect("subset with one extra element");
    let k = j.indices().iter().filter(|&&x| x < inserted).count();
    Ok(if k % 2 == 0 { 1 } else { -1 })
}
