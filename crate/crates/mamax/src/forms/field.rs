//! Form fields with polynomial coefficients in (z, z̄).
//!
//! The randomized identity suites need exterior derivatives of actual form
//! *fields*, not just pointwise forms. A [`FormField`] carries one polynomial
//! coefficient per basis wedge; `d` and `d^c` differentiate those
//! polynomials exactly, and [`FormField::eval`] drops down to a pointwise
//! [`DifferentialForm`] for comparison at sample points.

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{DifferentialForm, PRUNE_EPS};

/// Polynomial in z_1..z_dim and z̄_1..z̄_dim with complex coefficients,
/// keyed by (z-exponents, z̄-exponents).
#[derive(Clone, Debug, Default)]
pub struct PolyZZbar {
    dim: usize,
    terms: BTreeMap<(Vec<u8>, Vec<u8>), Complex64>,
}

impl PolyZZbar {
    pub fn zero(dim: usize) -> Self {
        PolyZZbar {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], vec![0; dim], c);
        p
    }

    pub fn add_term(&mut self, ez: Vec<u8>, ezb: Vec<u8>, c: Complex64) {
        assert_eq!(ez.len(), self.dim);
        assert_eq!(ezb.len(), self.dim);
        let key = (ez, ezb);
        let entry = self.terms.entry(key.clone()).or_default();
        *entry += c;
        if entry.norm() <= PRUNE_EPS {
            self.terms.remove(&key);
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        assert_eq!(z.len(), self.dim);
        let mut total = Complex64::default();
        for ((ez, ezb), c) in &self.terms {
            let mut v = *c;
            for j in 0..self.dim {
                for _ in 0..ez[j] {
                    v *= z[j];
                }
                for _ in 0..ezb[j] {
                    v *= z[j].conj();
                }
            }
            total += v;
        }
        total
    }

    /// ∂/∂z_j.
    pub fn dz(&self, j: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for ((ez, ezb), c) in &self.terms {
            if ez[j] == 0 {
                continue;
            }
            let mut ez2 = ez.clone();
            ez2[j] -= 1;
            out.add_term(ez2, ezb.clone(), c * (ez[j] as f64));
        }
        out
    }

    /// ∂/∂z̄_j.
    pub fn dzbar(&self, j: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for ((ez, ezb), c) in &self.terms {
            if ezb[j] == 0 {
                continue;
            }
            let mut ezb2 = ezb.clone();
            ezb2[j] -= 1;
            out.add_term(ez.clone(), ezb2, c * (ezb[j] as f64));
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Homogeneous form field: basis wedge mask → polynomial coefficient.
#[derive(Clone, Debug)]
pub struct FormField {
    dim: usize,
    degree: usize,
    terms: BTreeMap<u64, PolyZZbar>,
}

impl FormField {
    pub fn zero(dim: usize, degree: usize) -> Self {
        FormField {
            dim,
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn add_term(&mut self, mask: u64, p: PolyZZbar) {
        debug_assert_eq!(mask.count_ones() as usize, self.degree);
        if p.is_zero() {
            return;
        }
        match self.terms.get_mut(&mask) {
            Some(q) => {
                for ((ez, ezb), c) in &p.terms {
                    q.add_term(ez.clone(), ezb.clone(), *c);
                }
                if q.is_zero() {
                    self.terms.remove(&mask);
                }
            }
            None => {
                self.terms.insert(mask, p);
            }
        }
    }

    /// Pointwise value at z.
    pub fn eval(&self, z: &[Complex64]) -> DifferentialForm {
        let mut out = DifferentialForm::zero(self.dim, self.degree);
        for (mask, p) in &self.terms {
            out.add_term(*mask, p.eval(z));
        }
        out.prune(PRUNE_EPS);
        out
    }

    fn derivative_expand(&self, covector_offset: usize, factor: Complex64) -> Self {
        // Σ_j factor·(∂_j coeff)·(covector_j ∧ basis), with the covector
        // prepended: sign = (−1)^{#basis indices below j}
        let mut out = Self::zero(self.dim, self.degree + 1);
        for (mask, p) in &self.terms {
            for j in 0..self.dim {
                let idx = (covector_offset + j) as u64;
                let bit = 1u64 << idx;
                if mask & bit != 0 {
                    continue;
                }
                let deriv = if covector_offset == 0 { p.dz(j) } else { p.dzbar(j) };
                if deriv.is_zero() {
                    continue;
                }
                let below = (mask & (bit - 1)).count_ones();
                let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
                let mut scaled = PolyZZbar::zero(self.dim);
                for ((ez, ezb), c) in &deriv.terms {
                    scaled.add_term(ez.clone(), ezb.clone(), c * factor * sign);
                }
                out.add_term(mask | bit, scaled);
            }
        }
        out
    }

    /// Exterior derivative `d = ∂ + ∂̄`.
    pub fn d(&self) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let mut out = self.derivative_expand(0, one);
        let bar = self.derivative_expand(self.dim, one);
        for (mask, p) in bar.terms {
            out.add_term(mask, p);
        }
        out
    }

    /// `d^c = i(∂̄ − ∂)`.
    pub fn dc(&self) -> Self {
        let i = Complex64::new(0.0, 1.0);
        let mut out = self.derivative_expand(self.dim, i);
        let hol = self.derivative_expand(0, -i);
        for (mask, p) in hol.terms {
            out.add_term(mask, p);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn d_of_zzbar_field() {
        // f = z z̄ (= |z|²) in ℂ¹: d f = z̄ dz + z dz̄
        let mut f = FormField::zero(1, 0);
        let mut p = PolyZZbar::zero(1);
        p.add_term(vec![1], vec![1], c(1.0, 0.0));
        f.add_term(0, p);
        let df = f.d();
        let z = [c(0.4, -0.3)];
        let at = df.eval(&z);
        assert!((at.coefficient(0b01) - z[0].conj()).norm() < 1e-14);
        assert!((at.coefficient(0b10) - z[0]).norm() < 1e-14);
    }

    #[test]
    fn ddc_field_matches_hessian_route() {
        // f = z z̄: d(d^c f) should equal 2i dz∧dz̄ everywhere
        let mut f = FormField::zero(1, 0);
        let mut p = PolyZZbar::zero(1);
        p.add_term(vec![1], vec![1], c(1.0, 0.0));
        f.add_term(0, p);
        let ddc = f.dc().d();
        let at = ddc.eval(&[c(1.7, 0.2)]);
        assert!((at.coefficient(0b11) - c(0.0, 2.0)).norm() < 1e-13);
    }

    #[test]
    fn d_squared_vanishes() {
        let mut f = FormField::zero(2, 1);
        let mut p = PolyZZbar::zero(2);
        p.add_term(vec![2, 0], vec![0, 1], c(0.3, -1.2));
        p.add_term(vec![0, 1], vec![1, 0], c(-0.7, 0.4));
        f.add_term(0b0001, p.clone());
        f.add_term(0b1000, p);
        let dd = f.d().d();
        let at = dd.eval(&[c(0.2, 0.9), c(-1.1, 0.4)]);
        assert!(at.sup_norm() < 1e-12, "{:?}", at);
    }
}
