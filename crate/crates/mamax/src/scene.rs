//! Competing smooth functions, their max envelope, and generalized
//! polynomial polyhedra.
//!
//! Every piece kind has closed-form first and second derivatives; that is
//! what keeps the stratified densities exact at the 1e-10 level. Points are
//! real slices of ℂ^dim laid out as (x_1, y_1, …, x_dim, y_dim).

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{DerivativeJet, FormsError};

/// Activity band: piece j is active at z when u(z) − u_j(z) ≤ τ·(1+|u(z)|).
pub const DEFAULT_ACTIVITY_TOL: f64 = 1e-9;

/// Points where Σ|p_i|² falls below this are treated as the −∞ locus.
pub const POLE_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("piece {piece} hit the -infinity locus of a log-sum-squares term")]
    Pole { piece: usize },
    #[error("all pieces are at -infinity here")]
    AllPolar,
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Forms(#[from] FormsError),
}

/// Convert a real point (x_1, y_1, …) to complex coordinates.
pub fn to_complex(point: &[f64]) -> Vec<Complex64> {
    point
        .chunks_exact(2)
        .map(|xy| Complex64::new(xy[0], xy[1]))
        .collect()
}

/// Axis-aligned box in ℝ^{2·dim}.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DomainBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl DomainBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self, SceneError> {
        if min.len() != max.len() || min.is_empty() {
            return Err(SceneError::Invalid("domain min/max length mismatch".into()));
        }
        if min.iter().zip(&max).any(|(a, b)| !(a < b)) {
            return Err(SceneError::Invalid(
                "domain must satisfy min < max on every axis".into(),
            ));
        }
        Ok(DomainBox { min, max })
    }

    /// Symmetric box [−h, h]^{2·dim}.
    pub fn centered(dim: usize, h: f64) -> Self {
        DomainBox {
            min: vec![-h; 2 * dim],
            max: vec![h; 2 * dim],
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.min.len()
    }

    pub fn volume(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn diameter(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(x, (a, b))| *x >= *a && *x <= *b)
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for (i, x) in out.iter_mut().enumerate() {
            *x = rng.gen_range(self.min[i]..self.max[i]);
        }
    }
}

/// Holomorphic polynomial in multi-index form: Σ c_α z^α.
#[derive(Clone, Debug, PartialEq)]
pub struct HoloPoly {
    dim: usize,
    terms: Vec<(Vec<u32>, Complex64)>,
}

impl HoloPoly {
    pub fn new(dim: usize, terms: Vec<(Vec<u32>, Complex64)>) -> Result<Self, SceneError> {
        for (alpha, _) in &terms {
            if alpha.len() != dim {
                return Err(SceneError::Invalid(format!(
                    "polynomial multi-index has length {} but dim is {}",
                    alpha.len(),
                    dim
                )));
            }
        }
        Ok(HoloPoly { dim, terms })
    }

    /// The coordinate monomial z_j.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut alpha = vec![0u32; dim];
        alpha[j] = 1;
        HoloPoly {
            dim,
            terms: vec![(alpha, Complex64::new(1.0, 0.0))],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<u32>, Complex64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(a, _)| a.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut total = Complex64::default();
        for (alpha, c) in &self.terms {
            let mut v = *c;
            for (j, &e) in alpha.iter().enumerate() {
                v *= z[j].powu(e);
            }
            total += v;
        }
        total
    }

    /// ∂p/∂z_j.
    pub fn grad(&self, j: usize, z: &[Complex64]) -> Complex64 {
        let mut total = Complex64::default();
        for (alpha, c) in &self.terms {
            let e = alpha[j];
            if e == 0 {
                continue;
            }
            let mut v = c * (e as f64) * z[j].powu(e - 1);
            for (k, &ek) in alpha.iter().enumerate() {
                if k != j {
                    v *= z[k].powu(ek);
                }
            }
            total += v;
        }
        total
    }
}

/// One candidate function of the max envelope.
///
/// All kinds have exact jets. `SmoothMax` is the synthetic regularization
/// piece used by the smoothing oracle; it never appears in scene files.
#[derive(Clone, Debug)]
pub enum SmoothPiece {
    Constant {
        dim: usize,
        value: f64,
    },
    /// c + Σ a_j x_j + b_j y_j.
    Affine {
        constant: f64,
        coef_x: Vec<f64>,
        coef_y: Vec<f64>,
    },
    /// Re p(z) for a holomorphic polynomial p (pluriharmonic).
    RePoly {
        poly: HoloPoly,
    },
    /// scale · log Σ_i |p_i(z)|².
    LogSumSquares {
        scale: f64,
        polys: Vec<HoloPoly>,
    },
    /// c + 2 Re(Σ b_j z_j) + Σ A_{jk} z_j z̄_k + Re(Σ S_{jk} z_j z_k)
    /// with A Hermitian and S symmetric (the pluriharmonic quadratic part).
    /// This covers every real quadratic polynomial on ℂ^dim.
    HermitianQuadratic {
        dim: usize,
        constant: f64,
        linear: Vec<Complex64>,
        hermitian: Vec<Complex64>,
        pluriharmonic: Vec<Complex64>,
    },
    /// ε·log Σ_j exp((u_j + offset_j)/ε): the log-sum-exp smoothing of the
    /// envelope. Jets are composed from the member jets via softmax weights.
    SmoothMax {
        pieces: Vec<SmoothPiece>,
        offsets: Vec<f64>,
        epsilon: f64,
    },
}

impl SmoothPiece {
    pub fn dim(&self) -> usize {
        match self {
            SmoothPiece::Constant { dim, .. } => *dim,
            SmoothPiece::Affine { coef_x, .. } => coef_x.len(),
            SmoothPiece::RePoly { poly } => poly.dim(),
            SmoothPiece::LogSumSquares { polys, .. } => polys[0].dim(),
            SmoothPiece::HermitianQuadratic { dim, .. } => *dim,
            SmoothPiece::SmoothMax { pieces, .. } => pieces[0].dim(),
        }
    }

    /// Value at a point; −∞ on the pole locus of log-sum-squares pieces.
    pub fn value(&self, point: &[f64]) -> f64 {
        match self {
            SmoothPiece::Constant { value, .. } => *value,
            SmoothPiece::Affine {
                constant,
                coef_x,
                coef_y,
            } => {
                let mut v = *constant;
                for j in 0..coef_x.len() {
                    v += coef_x[j] * point[2 * j] + coef_y[j] * point[2 * j + 1];
                }
                v
            }
            SmoothPiece::RePoly { poly } => poly.eval(&to_complex(point)).re,
            SmoothPiece::LogSumSquares { scale, polys } => {
                let z = to_complex(point);
                let s: f64 = polys.iter().map(|p| p.eval(&z).norm_sqr()).sum();
                if s < POLE_FLOOR {
                    f64::NEG_INFINITY
                } else {
                    scale * s.ln()
                }
            }
            SmoothPiece::HermitianQuadratic {
                dim,
                constant,
                linear,
                hermitian,
                pluriharmonic,
            } => {
                let z = to_complex(point);
                let mut v = *constant;
                for j in 0..*dim {
                    v += 2.0 * (linear[j] * z[j]).re;
                    for k in 0..*dim {
                        v += (hermitian[j * dim + k] * z[j] * z[k].conj()).re;
                        v += (pluriharmonic[j * dim + k] * z[j] * z[k]).re;
                    }
                }
                v
            }
            SmoothPiece::SmoothMax {
                pieces,
                offsets,
                epsilon,
            } => {
                let vals: Vec<f64> = pieces
                    .iter()
                    .zip(offsets)
                    .map(|(p, o)| p.value(point) + o)
                    .collect();
                let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let s: f64 = vals.iter().map(|v| ((v - m) / epsilon).exp()).sum();
                m + epsilon * s.ln()
            }
        }
    }

    /// Exact jet at a point.
    pub fn jet(&self, point: &[f64]) -> Result<DerivativeJet, SceneError> {
        let dim = self.dim();
        match self {
            SmoothPiece::Constant { value, .. } => {
                Ok(DerivativeJet::zero(dim).offset(*value))
            }
            SmoothPiece::Affine {
                constant: _,
                coef_x,
                coef_y,
            } => {
                let g: Vec<Complex64> = (0..dim)
                    .map(|j| Complex64::new(coef_x[j] / 2.0, -coef_y[j] / 2.0))
                    .collect();
                Ok(DerivativeJet::new(
                    dim,
                    self.value(point),
                    g,
                    vec![Complex64::default(); dim * dim],
                )?)
            }
            SmoothPiece::RePoly { poly } => {
                let z = to_complex(point);
                let g: Vec<Complex64> = (0..dim).map(|j| poly.grad(j, &z) / 2.0).collect();
                Ok(DerivativeJet::new(
                    dim,
                    poly.eval(&z).re,
                    g,
                    vec![Complex64::default(); dim * dim],
                )?)
            }
            SmoothPiece::LogSumSquares { scale, polys } => {
                let z = to_complex(point);
                let vals: Vec<Complex64> = polys.iter().map(|p| p.eval(&z)).collect();
                let s: f64 = vals.iter().map(|v| v.norm_sqr()).sum();
                if s < POLE_FLOOR {
                    return Err(SceneError::Pole { piece: usize::MAX });
                }
                // a_j = Σ_i (∂_j p_i) conj(p_i); B_jk = Σ_i (∂_j p_i) conj(∂_k p_i)
                let grads: Vec<Vec<Complex64>> = polys
                    .iter()
                    .map(|p| (0..dim).map(|j| p.grad(j, &z)).collect())
                    .collect();
                let mut a = vec![Complex64::default(); dim];
                for (i, g) in grads.iter().enumerate() {
                    for j in 0..dim {
                        a[j] += g[j] * vals[i].conj();
                    }
                }
                let g: Vec<Complex64> = a.iter().map(|aj| scale * aj / s).collect();
                let mut h = vec![Complex64::default(); dim * dim];
                for j in 0..dim {
                    for k in 0..dim {
                        let mut b = Complex64::default();
                        for gi in &grads {
                            b += gi[j] * gi[k].conj();
                        }
                        h[j * dim + k] = scale * (b / s - a[j] * a[k].conj() / (s * s));
                    }
                }
                Ok(DerivativeJet::new(dim, scale * s.ln(), g, h)?)
            }
            SmoothPiece::HermitianQuadratic {
                dim,
                constant: _,
                linear,
                hermitian,
                pluriharmonic,
            } => {
                let z = to_complex(point);
                let mut g = vec![Complex64::default(); *dim];
                for j in 0..*dim {
                    g[j] = linear[j];
                    for k in 0..*dim {
                        g[j] += hermitian[j * dim + k] * z[k].conj();
                        // Re(z^T S z) with S symmetric: ∂_j = Σ_k S_{jk} z_k
                        g[j] += pluriharmonic[j * dim + k] * z[k];
                    }
                }
                Ok(DerivativeJet::new(
                    *dim,
                    self.value(point),
                    g,
                    hermitian.clone(),
                )?)
            }
            SmoothPiece::SmoothMax {
                pieces,
                offsets,
                epsilon,
            } => {
                let vals: Vec<f64> = pieces
                    .iter()
                    .zip(offsets)
                    .map(|(p, o)| p.value(point) + o)
                    .collect();
                let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    return Err(SceneError::AllPolar);
                }
                let weights: Vec<f64> =
                    vals.iter().map(|v| ((v - m) / epsilon).exp()).collect();
                let wsum: f64 = weights.iter().sum();
                let mut value = m + epsilon * wsum.ln();
                let mut grad = vec![Complex64::default(); dim];
                let mut hess = vec![Complex64::default(); dim * dim];
                let mut member_grads: Vec<Option<Vec<Complex64>>> = vec![None; pieces.len()];
                for (idx, piece) in pieces.iter().enumerate() {
                    let w = weights[idx] / wsum;
                    if w < 1e-300 {
                        continue; // inactive (or polar) member: zero weight
                    }
                    let jet = piece.jet(point).map_err(|e| match e {
                        SceneError::Pole { .. } => SceneError::Pole { piece: idx },
                        other => other,
                    })?;
                    for j in 0..dim {
                        grad[j] += w * jet.grad_z[j];
                        for k in 0..dim {
                            hess[j * dim + k] += w * jet.hessian_entry(j, k);
                        }
                    }
                    member_grads[idx] = Some(jet.grad_z);
                }
                // softmax covariance term: (1/ε)(Σ w g g* − G G*)
                for j in 0..dim {
                    for k in 0..dim {
                        let mut cov = -grad[j] * grad[k].conj();
                        for (idx, mg) in member_grads.iter().enumerate() {
                            if let Some(g) = mg {
                                let w = weights[idx] / wsum;
                                cov += w * g[j] * g[k].conj();
                            }
                        }
                        hess[j * dim + k] += cov / epsilon;
                    }
                }
                if !value.is_finite() {
                    value = f64::MAX; // unreachable for finite inputs
                }
                Ok(DerivativeJet::new(dim, value, grad, hess)?)
            }
        }
    }

    /// Whether the piece is plurisubharmonic by construction (or, for the
    /// quadratic kind, by a PSD check of its Hermitian part).
    pub fn is_psh(&self) -> bool {
        match self {
            SmoothPiece::Constant { .. }
            | SmoothPiece::Affine { .. }
            | SmoothPiece::RePoly { .. }
            | SmoothPiece::LogSumSquares { .. } => true,
            SmoothPiece::HermitianQuadratic { .. } => self
                .hermitian_min_eigenvalue()
                .map(|l| l >= -1e-12)
                .unwrap_or(true),
            SmoothPiece::SmoothMax { pieces, .. } => pieces.iter().all(|p| p.is_psh()),
        }
    }
}

impl SmoothPiece {
    /// Eigen-check helper: smallest eigenvalue of the Hermitian part, via
    /// the standard real embedding [[Re, −Im],[Im, Re]].
    pub fn hermitian_min_eigenvalue(&self) -> Option<f64> {
        if let SmoothPiece::HermitianQuadratic { dim, hermitian, .. } = self {
            let n = *dim;
            let m = nalgebra::DMatrix::from_fn(2 * n, 2 * n, |r, c| {
                let (j, k) = (r % n, c % n);
                let h = hermitian[j * n + k];
                match (r / n, c / n) {
                    (0, 0) | (1, 1) => h.re,
                    (1, 0) => h.im,
                    (0, 1) => -h.im,
                    _ => unreachable!(),
                }
            });
            m.symmetric_eigenvalues().iter().cloned().reduce(f64::min)
        } else {
            None
        }
    }
}

/// The scene: pieces, their optional constant offsets, and the domain box.
#[derive(Clone, Debug)]
pub struct Scene {
    pub dim: usize,
    pub pieces: Vec<SmoothPiece>,
    pub domain: DomainBox,
    pub offsets: Vec<f64>,
    pub activity_tol: f64,
}

impl Scene {
    pub fn new(dim: usize, pieces: Vec<SmoothPiece>, domain: DomainBox) -> Result<Self, SceneError> {
        if pieces.is_empty() {
            return Err(SceneError::Invalid("scene needs at least one piece".into()));
        }
        if domain.ambient_dim() != 2 * dim {
            return Err(SceneError::Invalid(format!(
                "domain has {} axes, expected {}",
                domain.ambient_dim(),
                2 * dim
            )));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.dim() != dim {
                return Err(SceneError::Invalid(format!(
                    "piece {i} has dim {} but the scene has dim {dim}",
                    p.dim()
                )));
            }
        }
        let m = pieces.len();
        Ok(Scene {
            dim,
            pieces,
            domain,
            offsets: vec![0.0; m],
            activity_tol: DEFAULT_ACTIVITY_TOL,
        })
    }

    pub fn with_offsets(mut self, offsets: Vec<f64>) -> Result<Self, SceneError> {
        if offsets.len() != self.pieces.len() {
            return Err(SceneError::Invalid(
                "offsets length must match the number of pieces".into(),
            ));
        }
        self.offsets = offsets;
        Ok(self)
    }

    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn piece_value(&self, j: usize, point: &[f64]) -> f64 {
        self.pieces[j].value(point) + self.offsets[j]
    }

    pub fn piece_jet(&self, j: usize, point: &[f64]) -> Result<DerivativeJet, SceneError> {
        let jet = self.pieces[j].jet(point).map_err(|e| match e {
            SceneError::Pole { .. } => SceneError::Pole { piece: j },
            other => other,
        })?;
        Ok(jet.offset(self.offsets[j]))
    }

    /// Envelope value and the active set at the configured tolerance.
    pub fn envelope_value(&self, point: &[f64]) -> Result<(f64, Vec<usize>), SceneError> {
        let vals: Vec<f64> = (0..self.pieces.len())
            .map(|j| self.piece_value(j, point))
            .collect();
        let u = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if u == f64::NEG_INFINITY {
            return Err(SceneError::AllPolar);
        }
        let band = self.activity_tol * (1.0 + u.abs());
        let active = (0..vals.len()).filter(|&j| u - vals[j] <= band).collect();
        Ok((u, active))
    }

    /// The log-sum-exp smoothing of the envelope at width ε.
    pub fn smooth_max(&self, epsilon: f64) -> SmoothPiece {
        assert!(epsilon > 0.0);
        SmoothPiece::SmoothMax {
            pieces: self.pieces.clone(),
            offsets: self.offsets.clone(),
            epsilon,
        }
    }

    /// Indices of pieces that are not plurisubharmonic.
    pub fn non_psh_pieces(&self) -> Vec<usize> {
        (0..self.pieces.len())
            .filter(|&i| !self.pieces[i].is_psh())
            .collect()
    }

    /// A gradient magnitude scale for the scene near a point, used by
    /// degeneracy thresholds.
    pub fn gradient_scale(&self, point: &[f64]) -> f64 {
        let mut s: f64 = 0.0;
        for j in 0..self.pieces.len() {
            if let Ok(jet) = self.piece_jet(j, point) {
                s = s.max(jet.real_gradient().norm());
            }
        }
        s
    }
}

/// One family of a generalized polynomial polyhedron.
#[derive(Clone, Debug)]
pub struct PolyFamily {
    pub polys: Vec<HoloPoly>,
}

impl PolyFamily {
    pub fn n_alpha(&self) -> usize {
        self.polys.len()
    }

    pub fn degree(&self) -> u32 {
        self.polys.iter().map(|p| p.degree()).max().unwrap_or(0)
    }
}

/// Generalized polynomial polyhedron K = {max_α Σ_i |p_{α,i}|² ≤ 1}.
#[derive(Clone, Debug)]
pub struct PolyhedronSpec {
    pub dim: usize,
    pub families: Vec<PolyFamily>,
    pub domain: DomainBox,
}

impl PolyhedronSpec {
    pub fn new(
        dim: usize,
        families: Vec<PolyFamily>,
        domain: DomainBox,
    ) -> Result<Self, SceneError> {
        if families.is_empty() {
            return Err(SceneError::Invalid("need at least one family".into()));
        }
        for (a, f) in families.iter().enumerate() {
            if f.polys.is_empty() {
                return Err(SceneError::Invalid(format!("family {a} is empty")));
            }
            for p in &f.polys {
                if p.dim() != dim {
                    return Err(SceneError::Invalid(format!(
                        "family {a} has a polynomial of dim {} in a dim-{dim} spec",
                        p.dim()
                    )));
                }
            }
            if f.degree() == 0 {
                return Err(SceneError::Invalid(format!(
                    "family {a} has degree 0; the scaled log is undefined"
                )));
            }
        }
        if domain.ambient_dim() != 2 * dim {
            return Err(SceneError::Invalid("domain dimension mismatch".into()));
        }
        Ok(PolyhedronSpec {
            dim,
            families,
            domain,
        })
    }

    /// Membership in K.
    pub fn k_contains(&self, point: &[f64]) -> bool {
        self.k_contains_relaxed(point, 0.0)
    }

    /// Membership in K with a relative slack on the defining inequality, for
    /// classifying points produced by projections that stop at a residual
    /// tolerance: genuine boundary points must not count as outside.
    pub fn k_contains_relaxed(&self, point: &[f64], rel_tol: f64) -> bool {
        let z = to_complex(point);
        self.families
            .iter()
            .map(|f| f.polys.iter().map(|p| p.eval(&z).norm_sqr()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
            <= 1.0 + rel_tol
    }

    /// The candidate Green function scene: piece 0 is the constant 0 and
    /// piece α is (1/(2·deg_α))·log Σ_i |p_{α,i}|².
    pub fn green_candidate(&self) -> Result<Scene, SceneError> {
        let mut pieces = vec![SmoothPiece::Constant {
            dim: self.dim,
            value: 0.0,
        }];
        for f in &self.families {
            pieces.push(SmoothPiece::LogSumSquares {
                scale: 1.0 / (2.0 * f.degree() as f64),
                polys: f.polys.clone(),
            });
        }
        Scene::new(self.dim, pieces, self.domain.clone())
    }
}

/// Finite-difference jet of a piece, used only as an oracle in tests.
pub fn finite_difference_jet(
    piece: &SmoothPiece,
    point: &[f64],
    h: f64,
) -> (DVector<f64>, Vec<Complex64>) {
    let n = point.len();
    let dim = piece.dim();
    let f = |p: &[f64]| piece.value(p);
    let mut grad = DVector::zeros(n);
    let mut p1 = point.to_vec();
    for i in 0..n {
        p1.copy_from_slice(point);
        p1[i] = point[i] + h;
        let fp = f(&p1);
        p1[i] = point[i] - h;
        let fm = f(&p1);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    // full real Hessian → complex mixed Hessian
    let mut real_h = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            if i == k {
                p1.copy_from_slice(point);
                p1[i] = point[i] + h;
                let fp = f(&p1);
                p1[i] = point[i] - h;
                let fm = f(&p1);
                real_h[i * n + i] = (fp - 2.0 * f(point) + fm) / (h * h);
            } else {
                let mut val = 0.0;
                for (si, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    p1.copy_from_slice(point);
                    p1[i] += si * h;
                    p1[k] += sk * h;
                    val += si * sk * f(&p1);
                }
                real_h[i * n + k] = val / (4.0 * h * h);
            }
        }
    }
    let mut ch = vec![Complex64::default(); dim * dim];
    for j in 0..dim {
        for k in 0..dim {
            let xx = real_h[(2 * j) * n + 2 * k];
            let yy = real_h[(2 * j + 1) * n + 2 * k + 1];
            let xy = real_h[(2 * j) * n + 2 * k + 1];
            let yx = real_h[(2 * j + 1) * n + 2 * k];
            ch[j * dim + k] = Complex64::new((xx + yy) / 4.0, (xy - yx) / 4.0);
        }
    }
    (grad, ch)
}

pub mod schema;
