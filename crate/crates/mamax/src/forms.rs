//! Pointwise exterior algebra over ℂ^dim in the complexified covector basis.
//!
//! A [`DifferentialForm`] is a homogeneous exterior form at a single point,
//! stored in the basis `dz_1, …, dz_dim, dz̄_1, …, dz̄_dim` with complex
//! coefficients keyed by sorted index subsets (bitmasks). Real-coordinate
//! covectors `dx_j`, `dy_j` are conversion views of the same storage.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!   `d = ∂ + ∂̄`,  `d^c = i(∂̄ − ∂)`,  `dd^c = 2i ∂∂̄`,
//! so that `dd^c |z|² = 2i dz∧dz̄ = 4 dx∧dy` in ℂ¹.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Coefficients with absolute value at or below this are pruned after
/// arithmetic. Small enough not to disturb 1e-10-level identity checks.
pub const PRUNE_EPS: f64 = 1e-14;

/// Relative tolerance for Hermitian-ness of complex Hessians.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FormsError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("frame has {got} vectors, form has degree {want}")]
    FrameArity { got: usize, want: usize },
    #[error("bidegree ({p},{q}) does not split degree {degree}")]
    BidegreeSplit { p: usize, q: usize, degree: usize },
    #[error("complex Hessian is not Hermitian (deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("jet contains a non-finite entry")]
    NonFiniteJet,
    #[error("need at least one jet")]
    EmptyJetList,
    #[error("negative power requested")]
    NegativePower,
}

/// Sign of the permutation that merges two disjoint sorted index sets
/// (given as bitmasks) into one sorted set: (−1)^inversions.
fn merge_sign(a: u64, b: u64) -> f64 {
    let mut inv = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        inv += (a >> (j + 1)).count_ones();
        bb &= bb - 1;
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A homogeneous exterior form at a point of ℂ^dim.
///
/// Basis covector indices: `0..dim` are `dz_1..dz_dim`, `dim..2·dim` are
/// `dz̄_1..dz̄_dim`. Term keys are bitmasks over those `2·dim` indices;
/// antisymmetry is normalized into the coefficient at construction, so only
/// sorted index sets are ever stored.
#[derive(Clone, PartialEq)]
pub struct DifferentialForm {
    dim: usize,
    degree: usize,
    terms: BTreeMap<u64, Complex64>,
}

impl fmt::Debug for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form(dim={}, deg={})[", self.dim, self.degree)?;
        for (mask, c) in &self.terms {
            write!(f, " {:+.3e}{:+.3e}i·", c.re, c.im)?;
            for i in 0..2 * self.dim as u32 {
                if mask & (1 << i) != 0 {
                    if (i as usize) < self.dim {
                        write!(f, "dz{}", i + 1)?;
                    } else {
                        write!(f, "dZ{}", i as usize - self.dim + 1)?;
                    }
                }
            }
        }
        write!(f, " ]")
    }
}

impl DifferentialForm {
    pub fn zero(dim: usize, degree: usize) -> Self {
        DifferentialForm {
            dim,
            degree,
            terms: BTreeMap::new(),
        }
    }

    /// Degree-0 form with the given scalar coefficient.
    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut terms = BTreeMap::new();
        if c.norm() > 0.0 {
            terms.insert(0u64, c);
        }
        DifferentialForm {
            dim,
            degree: 0,
            terms,
        }
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, Complex64::new(1.0, 0.0))
    }

    /// The basis covector `dz_j` (j is 0-based).
    pub fn dz(dim: usize, j: usize) -> Self {
        assert!(j < dim);
        let mut terms = BTreeMap::new();
        terms.insert(1u64 << j, Complex64::new(1.0, 0.0));
        DifferentialForm {
            dim,
            degree: 1,
            terms,
        }
    }

    /// The basis covector `dz̄_j` (j is 0-based).
    pub fn dzbar(dim: usize, j: usize) -> Self {
        assert!(j < dim);
        let mut terms = BTreeMap::new();
        terms.insert(1u64 << (dim + j), Complex64::new(1.0, 0.0));
        DifferentialForm {
            dim,
            degree: 1,
            terms,
        }
    }

    /// `dx_j = (dz_j + dz̄_j)/2`.
    pub fn dx(dim: usize, j: usize) -> Self {
        let half = Complex64::new(0.5, 0.0);
        Self::dz(dim, j).scaled(half).plus(&Self::dzbar(dim, j).scaled(half)).unwrap()
    }

    /// `dy_j = (dz_j − dz̄_j)/(2i)`.
    pub fn dy(dim: usize, j: usize) -> Self {
        let c = Complex64::new(0.0, -0.5); // 1/(2i)
        Self::dz(dim, j)
            .scaled(c)
            .plus(&Self::dzbar(dim, j).scaled(-c))
            .unwrap()
    }

    /// Degree-1 form Σ a_j dx_j + b_j dy_j from real covector coefficients
    /// laid out as (a_1, b_1, a_2, b_2, …).
    pub fn from_real_covector(dim: usize, coeffs: &[f64]) -> Self {
        assert_eq!(coeffs.len(), 2 * dim);
        let mut out = Self::zero(dim, 1);
        for j in 0..dim {
            let a = coeffs[2 * j];
            let b = coeffs[2 * j + 1];
            // a·dx + b·dy = ((a − i b)/2) dz + ((a + i b)/2) dz̄
            out.add_term(1u64 << j, Complex64::new(a / 2.0, -b / 2.0));
            out.add_term(1u64 << (dim + j), Complex64::new(a / 2.0, b / 2.0));
        }
        out.prune(PRUNE_EPS);
        out
    }

    /// The standard Kähler form ω = Σ_j dx_j∧dy_j = (i/2) Σ_j dz_j∧dz̄_j.
    pub fn kaehler_std(dim: usize) -> Self {
        let mut out = Self::zero(dim, 2);
        for j in 0..dim {
            out.add_term((1u64 << j) | (1u64 << (dim + j)), Complex64::new(0.0, 0.5));
        }
        out
    }

    /// ω^q / q! — the complementary test-form factor used for pairings below
    /// top degree. `q = 0` gives the constant 1.
    pub fn kaehler_power_normalized(dim: usize, q: usize) -> Self {
        let mut out = Self::one(dim);
        let omega = Self::kaehler_std(dim);
        let mut fact = 1.0;
        for b in 1..=q {
            fact *= b as f64;
            out = out.wedge(&omega).unwrap();
        }
        out.scaled(Complex64::new(1.0 / fact, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, Complex64)> + '_ {
        self.terms.iter().map(|(m, c)| (*m, *c))
    }

    pub fn coefficient(&self, mask: u64) -> Complex64 {
        self.terms.get(&mask).copied().unwrap_or_default()
    }

    /// Largest coefficient magnitude.
    pub fn sup_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn add_term(&mut self, mask: u64, c: Complex64) {
        debug_assert_eq!(mask.count_ones() as usize, self.degree);
        debug_assert!(mask >> (2 * self.dim) == 0);
        let entry = self.terms.entry(mask).or_insert_with(Complex64::default);
        *entry += c;
        if entry.norm() <= PRUNE_EPS {
            self.terms.remove(&mask);
        }
    }

    pub fn prune(&mut self, eps: f64) {
        self.terms.retain(|_, c| c.norm() > eps);
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.prune(PRUNE_EPS);
        out
    }

    pub fn neg(&self) -> Self {
        self.scaled(Complex64::new(-1.0, 0.0))
    }

    pub fn plus(&self, other: &Self) -> Result<Self, FormsError> {
        if self.dim != other.dim {
            return Err(FormsError::DimensionMismatch(self.dim, other.dim));
        }
        if self.degree != other.degree {
            return Err(FormsError::DegreeMismatch(self.degree, other.degree));
        }
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(*m, *c);
        }
        Ok(out)
    }

    pub fn minus(&self, other: &Self) -> Result<Self, FormsError> {
        self.plus(&other.neg())
    }

    /// Exterior product. Graded-anticommutative, associative; returns the
    /// zero form when the combined degree exceeds 2·dim.
    pub fn wedge(&self, other: &Self) -> Result<Self, FormsError> {
        if self.dim != other.dim {
            return Err(FormsError::DimensionMismatch(self.dim, other.dim));
        }
        let degree = self.degree + other.degree;
        if degree > 2 * self.dim {
            // identically zero, but keep the formal degree so sums line up
            return Ok(Self::zero(self.dim, degree));
        }
        let mut out = Self::zero(self.dim, degree);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if ma & mb != 0 {
                    continue;
                }
                let s = merge_sign(*ma, *mb);
                out.add_term(ma | mb, ca * cb * s);
            }
        }
        Ok(out)
    }

    /// Wedge power (for even-degree forms in practice).
    pub fn power(&self, n: usize) -> Result<Self, FormsError> {
        let mut out = Self::one(self.dim);
        for _ in 0..n {
            out = out.wedge(self)?;
        }
        Ok(out)
    }

    /// Conjugation composed with the dz ↔ dz̄ swap. Forms that are real as
    /// currents are fixed points of this involution.
    pub fn conj_involution(&self) -> Self {
        let dim = self.dim;
        let mut out = Self::zero(dim, self.degree);
        for (mask, c) in &self.terms {
            let mut idx = Vec::with_capacity(self.degree);
            for i in 0..(2 * dim) as u32 {
                if mask & (1u64 << i) != 0 {
                    let i = i as usize;
                    idx.push(if i < dim { i + dim } else { i - dim });
                }
            }
            // parity of the permutation sorting the swapped index list
            let mut inv = 0usize;
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    if idx[a] > idx[b] {
                        inv += 1;
                    }
                }
            }
            let sign = if inv % 2 == 0 { 1.0 } else { -1.0 };
            let mut new_mask = 0u64;
            for i in idx {
                new_mask |= 1u64 << i;
            }
            out.add_term(new_mask, c.conj() * sign);
        }
        out
    }

    /// True when the form equals its own conjugation-involution within a
    /// relative tolerance, i.e. it is real as a current.
    pub fn is_real_current(&self, rel_tol: f64) -> bool {
        let diff = self.minus(&self.conj_involution()).unwrap();
        diff.sup_norm() <= rel_tol * self.sup_norm().max(1.0)
    }

    /// Projection onto the terms with `p` unbarred and `q` barred indices.
    pub fn bidegree_part(&self, p: usize, q: usize) -> Result<Self, FormsError> {
        if p + q != self.degree {
            return Err(FormsError::BidegreeSplit {
                p,
                q,
                degree: self.degree,
            });
        }
        let dim = self.dim;
        let low = (1u64 << dim) - 1;
        let mut out = Self::zero(dim, self.degree);
        for (mask, c) in &self.terms {
            let np = (mask & low).count_ones() as usize;
            if np == p {
                out.add_term(*mask, *c);
            }
        }
        Ok(out)
    }

    /// Evaluate the form on an ordered list of tangent vectors of ℝ^{2·dim}
    /// (coordinates x_1, y_1, …, x_dim, y_dim). Multilinear and antisymmetric;
    /// the caller is responsible for orthonormalizing the frame when the
    /// result is meant as a density per unit surface measure.
    pub fn evaluate_on_frame(&self, frame: &[DVector<f64>]) -> Result<Complex64, FormsError> {
        if frame.len() != self.degree {
            return Err(FormsError::FrameArity {
                got: frame.len(),
                want: self.degree,
            });
        }
        for v in frame {
            if v.len() != 2 * self.dim {
                return Err(FormsError::DimensionMismatch(v.len(), 2 * self.dim));
            }
        }
        if self.degree == 0 {
            return Ok(self.coefficient(0));
        }
        let d = self.degree;
        let dim = self.dim;
        let mut total = Complex64::default();
        let mut idx = Vec::with_capacity(d);
        for (mask, c) in &self.terms {
            idx.clear();
            for i in 0..(2 * dim) as u32 {
                if mask & (1u64 << i) != 0 {
                    idx.push(i as usize);
                }
            }
            let m = DMatrix::from_fn(d, d, |r, col| {
                let i = idx[r];
                let v = &frame[col];
                if i < dim {
                    Complex64::new(v[2 * i], v[2 * i + 1])
                } else {
                    let j = i - dim;
                    Complex64::new(v[2 * j], -v[2 * j + 1])
                }
            });
            total += c * m.determinant();
        }
        Ok(total)
    }
}

/// Value, holomorphic gradient and complex Hessian of a real scalar at a
/// point. For real u the antiholomorphic partials are conjugates of the
/// holomorphic ones, so only the latter are stored.
#[derive(Clone, Debug)]
pub struct DerivativeJet {
    dim: usize,
    pub value: f64,
    /// ∂u/∂z_j, j = 0..dim.
    pub grad_z: Vec<Complex64>,
    /// Row-major dim×dim, `hessian[j*dim+k] = ∂²u/∂z_j ∂z̄_k`. Hermitian.
    pub hessian: Vec<Complex64>,
}

impl DerivativeJet {
    pub fn new(
        dim: usize,
        value: f64,
        grad_z: Vec<Complex64>,
        hessian: Vec<Complex64>,
    ) -> Result<Self, FormsError> {
        assert_eq!(grad_z.len(), dim);
        assert_eq!(hessian.len(), dim * dim);
        if !value.is_finite()
            || grad_z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())
            || hessian.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(FormsError::NonFiniteJet);
        }
        let mut scale: f64 = 0.0;
        let mut dev: f64 = 0.0;
        for j in 0..dim {
            for k in 0..dim {
                let h = hessian[j * dim + k];
                scale = scale.max(h.norm());
                dev = dev.max((h - hessian[k * dim + j].conj()).norm());
            }
        }
        if dev > HERMITIAN_TOL * scale.max(1.0) {
            return Err(FormsError::NonHermitian(dev));
        }
        Ok(DerivativeJet {
            dim,
            value,
            grad_z,
            hessian,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn zero(dim: usize) -> Self {
        DerivativeJet {
            dim,
            value: 0.0,
            grad_z: vec![Complex64::default(); dim],
            hessian: vec![Complex64::default(); dim * dim],
        }
    }

    /// Shift the value by a constant (derivatives unchanged).
    pub fn offset(mut self, c: f64) -> Self {
        self.value += c;
        self
    }

    /// Jet of the difference of two scalars.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        DerivativeJet {
            dim: self.dim,
            value: self.value - other.value,
            grad_z: self
                .grad_z
                .iter()
                .zip(&other.grad_z)
                .map(|(a, b)| a - b)
                .collect(),
            hessian: self
                .hessian
                .iter()
                .zip(&other.hessian)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Real gradient (∂/∂x_j, ∂/∂y_j interleaved) recovered from the
    /// holomorphic partials of a real scalar.
    pub fn real_gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(2 * self.dim);
        for j in 0..self.dim {
            g[2 * j] = 2.0 * self.grad_z[j].re;
            g[2 * j + 1] = -2.0 * self.grad_z[j].im;
        }
        g
    }

    pub fn hessian_entry(&self, j: usize, k: usize) -> Complex64 {
        self.hessian[j * self.dim + k]
    }
}

/// `d u = Σ (∂u/∂z_j) dz_j + (∂u/∂z̄_j) dz̄_j` of a real scalar.
pub fn d_scalar(jet: &DerivativeJet) -> DifferentialForm {
    let dim = jet.dim;
    let mut out = DifferentialForm::zero(dim, 1);
    for j in 0..dim {
        out.add_term(1u64 << j, jet.grad_z[j]);
        out.add_term(1u64 << (dim + j), jet.grad_z[j].conj());
    }
    out.prune(PRUNE_EPS);
    out
}

/// `d^c u = i Σ (∂u/∂z̄_j) dz̄_j − (∂u/∂z_j) dz_j` of a real scalar.
pub fn dc_scalar(jet: &DerivativeJet) -> DifferentialForm {
    let dim = jet.dim;
    let i = Complex64::new(0.0, 1.0);
    let mut out = DifferentialForm::zero(dim, 1);
    for j in 0..dim {
        out.add_term(1u64 << j, -i * jet.grad_z[j]);
        out.add_term(1u64 << (dim + j), i * jet.grad_z[j].conj());
    }
    out.prune(PRUNE_EPS);
    out
}

/// `dd^c u = 2i Σ H_{jk} dz_j ∧ dz̄_k` from the complex Hessian.
pub fn ddc_from_hessian(jet: &DerivativeJet) -> DifferentialForm {
    let dim = jet.dim;
    let two_i = Complex64::new(0.0, 2.0);
    let mut out = DifferentialForm::zero(dim, 2);
    for j in 0..dim {
        for k in 0..dim {
            // indices j < dim + k always: the mask is already sorted
            out.add_term((1u64 << j) | (1u64 << (dim + k)), two_i * jet.hessian_entry(j, k));
        }
    }
    out.prune(PRUNE_EPS);
    out
}

/// δ^c of an ordered active set: the wedge of `d^c` of consecutive
/// differences. For a single jet this is the empty product, the constant 1.
pub fn delta_c(jets: &[DerivativeJet]) -> Result<DifferentialForm, FormsError> {
    let ell = jets.len();
    if ell == 0 {
        return Err(FormsError::EmptyJetList);
    }
    let dim = jets[0].dim;
    let mut out = DifferentialForm::one(dim);
    for t in 0..ell - 1 {
        let diff = jets[t].sub(&jets[t + 1]);
        out = out.wedge(&dc_scalar(&diff))?;
    }
    Ok(out)
}

/// The wedge `d^c u_{j_1} ∧ … ∧ d^c u_{j_ℓ}` (no differences).
pub fn dc_wedge(jets: &[DerivativeJet]) -> Result<DifferentialForm, FormsError> {
    let ell = jets.len();
    if ell == 0 {
        return Err(FormsError::EmptyJetList);
    }
    let dim = jets[0].dim;
    let mut out = DifferentialForm::one(dim);
    for jet in jets {
        out = out.wedge(&dc_scalar(jet))?;
    }
    Ok(out)
}

/// All compositions of `n` into `parts` nonnegative integers, lexicographic.
pub fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for b in 0..=n {
            prefix.push(b);
            rec(n - b, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(n, parts, &mut Vec::new(), &mut out);
    out
}

/// σ^n of the ordered jets: the sum over all compositions β of n of
/// `(dd^c u_{j_1})^{β_1} ∧ … ∧ (dd^c u_{j_ℓ})^{β_ℓ}`. σ^0 = 1.
pub fn sigma(jets: &[DerivativeJet], n: i64) -> Result<DifferentialForm, FormsError> {
    if n < 0 {
        return Err(FormsError::NegativePower);
    }
    let n = n as usize;
    let ell = jets.len();
    if ell == 0 {
        return Err(FormsError::EmptyJetList);
    }
    let dim = jets[0].dim;
    if n == 0 {
        return Ok(DifferentialForm::one(dim));
    }
    // memoized wedge powers of each dd^c u_j, the hot path of the
    // stratified density
    let ddc: Vec<DifferentialForm> = jets.iter().map(ddc_from_hessian).collect();
    let mut powers: Vec<Vec<DifferentialForm>> = Vec::with_capacity(ell);
    for f in &ddc {
        let mut p = Vec::with_capacity(n + 1);
        p.push(DifferentialForm::one(dim));
        for b in 1..=n {
            let next = p[b - 1].wedge(f)?;
            p.push(next);
        }
        powers.push(p);
    }
    let mut out = DifferentialForm::zero(dim, 2 * n);
    for comp in compositions(n, ell) {
        let mut term = DifferentialForm::one(dim);
        for (j, &b) in comp.iter().enumerate() {
            if b > 0 {
                term = term.wedge(&powers[j][b])?;
            }
            if term.is_zero() {
                break;
            }
        }
        if !term.is_zero() {
            out = out.plus(&term)?;
        }
    }
    Ok(out)
}

pub mod field;
