//! Fourier-spectral truncation: dense matrices of divergence-form operators
//! and of multiplication operators in the basis `{e^{ikx}/√(2π)}`, plus the
//! phased even/odd perturbation basis of the reference operator `1 - Δ`.
//!
//! Mode ordering is the single canonical one, `k = -K, ..., K`; every module
//! indexes matrices the same way.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::{OperatorSpec, TrigPoly};

/// Truncated exponential basis with modes `k = -K..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierBasis {
    cutoff: usize,
}

impl FourierBasis {
    pub fn new(cutoff: usize) -> Self {
        Self { cutoff }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// Modes in canonical order.
    pub fn modes(&self) -> impl Iterator<Item = i64> + '_ {
        -(self.cutoff as i64)..=self.cutoff as i64
    }

    pub fn index_of(&self, k: i64) -> usize {
        (k + self.cutoff as i64) as usize
    }

    pub fn mode_at(&self, idx: usize) -> i64 {
        idx as i64 - self.cutoff as i64
    }
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for r in 0..dim {
            for c in 0..dim {
                m.data[r * dim + c] = f(r, c);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.dim + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.dim + c] += v;
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, other: &ComplexMatrix, factor: Complex64) {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_im_abs(&self) -> f64 {
        self.data.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Matrix-vector product, for residual checks.
    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|r| {
                let row = &self.data[r * self.dim..(r + 1) * self.dim];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub(crate) fn to_faer(&self) -> faer::Mat<Complex64> {
        faer::Mat::from_fn(self.dim, self.dim, |r, c| self.get(r, c))
    }

    /// Text dump for cross-checking: one matrix row per line, entries as
    /// `re,im` pairs in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for r in 0..self.dim {
            let mut line = String::new();
            for c in 0..self.dim {
                let v = self.get(r, c);
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{},{}", v.re, v.im));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// One element of the phased orthonormal eigenbasis of `1 - Δ`: normalized
/// `cos kx` (even), `i · sin kx` (odd), or the constant for `k = 0`. Real
/// linear combinations of these are exactly the PT-symmetric functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbBasisElement {
    pub index: usize,
    pub parity: Parity,
    pub frequency: u32,
    /// `√(k² + 1)`, the square root of the `1 - Δ` eigenvalue.
    pub mu0: f64,
    pub function: TrigPoly,
}

/// All basis elements with `μ⁰ = √(k²+1) ≤ mu_max` and `k ≤ K`, sorted by
/// `μ⁰` with even before odd.
pub fn enumerate_perturb_basis(basis: &FourierBasis, mu_max: f64) -> Vec<PerturbBasisElement> {
    let mut elems = Vec::new();
    let inv_sqrt_tau = 1.0 / TAU.sqrt();
    let half_inv_sqrt_pi = 0.5 / std::f64::consts::PI.sqrt();
    for k in 0..=basis.cutoff() as u32 {
        let mu0 = ((k as f64).powi(2) + 1.0).sqrt();
        if mu0 > mu_max {
            break;
        }
        if k == 0 {
            elems.push(PerturbBasisElement {
                index: elems.len(),
                parity: Parity::Even,
                frequency: 0,
                mu0,
                function: TrigPoly::constant(Complex64::new(inv_sqrt_tau, 0.0)),
            });
            continue;
        }
        // cos(kx)/√π
        let mut even = TrigPoly::zero();
        even.add_term(k as i64, Complex64::new(half_inv_sqrt_pi, 0.0));
        even.add_term(-(k as i64), Complex64::new(half_inv_sqrt_pi, 0.0));
        elems.push(PerturbBasisElement {
            index: elems.len(),
            parity: Parity::Even,
            frequency: k,
            mu0,
            function: even,
        });
        // i·sin(kx)/√π = (e^{ikx} - e^{-ikx})/(2√π)
        let mut odd = TrigPoly::zero();
        odd.add_term(k as i64, Complex64::new(half_inv_sqrt_pi, 0.0));
        odd.add_term(-(k as i64), Complex64::new(-half_inv_sqrt_pi, 0.0));
        elems.push(PerturbBasisElement {
            index: elems.len(),
            parity: Parity::Odd,
            frequency: k,
            mu0,
            function: odd,
        });
    }
    elems
}

/// Matrix of the operator in the exponential basis. Each divergence term
/// contributes `â_{j-k} (hj)^β (hk)^β` at (row j, col k), the potential
/// contributes the Toeplitz block `V̂_{j-k}`.
pub fn assemble_operator(spec: &OperatorSpec, basis: &FourierBasis) -> Result<ComplexMatrix> {
    let dim = basis.dim();
    let cutoff = basis.cutoff() as i64;
    if spec.bandwidth() > 2 * cutoff {
        log::warn!(
            "coefficient bandwidth {} exceeds 2K = {}; higher harmonics are dropped",
            spec.bandwidth(),
            2 * cutoff
        );
    }
    // Construction already checks ellipticity; re-validate in case the
    // spec was deserialized.
    let probe = (0..256)
        .map(|i| spec.principal_coeff(i as f64 * TAU / 256.0).norm())
        .fold(f64::INFINITY, f64::min);
    if probe <= 1e-12 {
        return Err(Error::Ellipticity(
            "principal coefficient vanishes on the circle".into(),
        ));
    }

    let h = spec.h();
    let mut m = ComplexMatrix::zeros(dim);
    for term in spec.div_terms() {
        let b = term.beta as i32;
        for (freq, amp) in term.coeff.terms() {
            if freq.abs() > 2 * cutoff {
                continue;
            }
            // row mode j = k + freq
            for k in (-cutoff).max(-cutoff - freq)..=cutoff.min(cutoff - freq) {
                let j = k + freq;
                let weight = (h * j as f64).powi(b) * (h * k as f64).powi(b);
                m.add_to(basis.index_of(j), basis.index_of(k), amp * weight);
            }
        }
    }
    for (freq, amp) in spec.potential().terms() {
        if freq.abs() > 2 * cutoff {
            continue;
        }
        for k in (-cutoff).max(-cutoff - freq)..=cutoff.min(cutoff - freq) {
            let j = k + freq;
            m.add_to(basis.index_of(j), basis.index_of(k), amp);
        }
    }
    Ok(m)
}

/// Toeplitz matrix of multiplication by `q`: entry (row j, col k) is
/// `q̂_{j-k}`.
pub fn assemble_multiplication(q: &TrigPoly, basis: &FourierBasis) -> ComplexMatrix {
    let dim = basis.dim();
    let cutoff = basis.cutoff() as i64;
    let mut m = ComplexMatrix::zeros(dim);
    for (freq, amp) in q.terms() {
        if freq.abs() > 2 * cutoff {
            log::warn!("multiplication harmonic {freq} exceeds matrix bandwidth; dropped");
            continue;
        }
        for k in (-cutoff).max(-cutoff - freq)..=cutoff.min(cutoff - freq) {
            let j = k + freq;
            m.add_to(basis.index_of(j), basis.index_of(k), amp);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::DivTerm;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn laplace_plus(v: TrigPoly, h: f64) -> OperatorSpec {
        OperatorSpec::new(
            h,
            vec![DivTerm {
                beta: 1,
                coeff: TrigPoly::constant(c(1.0, 0.0)),
            }],
            v,
        )
        .unwrap()
    }

    #[test]
    fn assemble_free_laplacian() {
        let basis = FourierBasis::new(1);
        let m = assemble_operator(&laplace_plus(TrigPoly::zero(), 0.1), &basis).unwrap();
        for (idx, expect) in [(0, 0.01), (1, 0.0), (2, 0.01)] {
            assert_relative_eq!(m.get(idx, idx).re, expect, epsilon = 1e-15);
        }
        assert_eq!(m.get(0, 1), Complex64::ZERO);
    }

    #[test]
    fn assemble_single_harmonic_is_triangular() {
        // V = e^{ix} shifts mode k to k+1: ones on the first subdiagonal.
        let basis = FourierBasis::new(4);
        let spec = laplace_plus(TrigPoly::harmonic(1, c(1.0, 0.0)), 0.1);
        let m = assemble_operator(&spec, &basis).unwrap();
        for r in 0..basis.dim() {
            for col in 0..basis.dim() {
                let v = m.get(r, col);
                if r == col {
                    let k = basis.mode_at(r) as f64;
                    assert_relative_eq!(v.re, (0.1 * k).powi(2), epsilon = 1e-15);
                } else if r == col + 1 {
                    assert_relative_eq!(v.re, 1.0, epsilon = 1e-15);
                } else {
                    assert_eq!(v, Complex64::ZERO);
                }
            }
        }
    }

    /// Quadrature oracle for matrix entries: (1/2π)∫ p̂(x) e^{ikx} e^{-ijx} dx
    /// against the coefficient-shift assembly.
    #[test]
    fn assembly_matches_quadrature_oracle() {
        let basis = FourierBasis::new(3);
        let h = 0.3;
        let mut v = TrigPoly::harmonic(1, c(0.7, 0.0));
        v.add_scaled(&TrigPoly::cosine(2), c(0.4, 0.0));
        let mut a = TrigPoly::constant(c(2.0, 0.0));
        a.add_scaled(&TrigPoly::sine(1), c(0.0, 0.5));
        let spec =
            OperatorSpec::new(h, vec![DivTerm { beta: 1, coeff: a.clone() }], v.clone()).unwrap();
        let m = assemble_operator(&spec, &basis).unwrap();

        let n = 4096;
        for j in basis.modes() {
            for k in basis.modes() {
                let mut acc = Complex64::ZERO;
                for i in 0..n {
                    let x = i as f64 * TAU / n as f64;
                    let integrand = (a.eval(x) * (h * j as f64) * (h * k as f64) + v.eval(x))
                        * Complex64::from_polar(1.0, (k - j) as f64 * x);
                    acc += integrand;
                }
                acc /= n as f64;
                let got = m.get(basis.index_of(j), basis.index_of(k));
                assert!(
                    (got - acc).norm() < 1e-10,
                    "entry ({j},{k}): assembled {got}, quadrature {acc}"
                );
            }
        }
    }

    #[test]
    fn pt_spec_assembles_to_real_matrix() {
        let basis = FourierBasis::new(8);
        let spec = laplace_plus(TrigPoly::harmonic(1, c(1.0, 0.0)), 0.05);
        let m = assemble_operator(&spec, &basis).unwrap();
        assert!(m.max_im_abs() < 1e-14);
    }

    #[test]
    fn multiplication_examples() {
        let basis = FourierBasis::new(1);
        let id = assemble_multiplication(&TrigPoly::constant(c(1.0, 0.0)), &basis);
        for r in 0..3 {
            for col in 0..3 {
                let expect = if r == col { 1.0 } else { 0.0 };
                assert_eq!(id.get(r, col).re, expect);
            }
        }

        let shift = assemble_multiplication(&TrigPoly::harmonic(1, c(1.0, 0.0)), &basis);
        for r in 0..3 {
            for col in 0..3 {
                let expect = if r == col + 1 { 1.0 } else { 0.0 };
                assert_eq!(shift.get(r, col).re, expect, "({r},{col})");
            }
        }

        // Real-coefficient (PT) multiplier gives a real matrix.
        let mut q = TrigPoly::cosine(1);
        q.add_term(0, c(0.3, 0.0));
        let m = assemble_multiplication(&q, &basis);
        assert_eq!(m.max_im_abs(), 0.0);
    }

    #[test]
    fn perturb_basis_enumeration() {
        let basis = FourierBasis::new(8);
        let d1 = enumerate_perturb_basis(&basis, 1.0);
        assert_eq!(d1.len(), 1);
        assert_eq!(d1[0].frequency, 0);
        assert_relative_eq!(d1[0].mu0, 1.0);

        let d3 = enumerate_perturb_basis(&basis, 1.5);
        assert_eq!(d3.len(), 3);
        assert_eq!(
            d3.iter().map(|e| (e.frequency, e.parity)).collect::<Vec<_>>(),
            vec![(0, Parity::Even), (1, Parity::Even), (1, Parity::Odd)]
        );

        let d5 = enumerate_perturb_basis(&basis, 5.0_f64.sqrt());
        assert_eq!(d5.len(), 5);
    }

    #[test]
    fn perturb_basis_orthonormal_and_pt() {
        let basis = FourierBasis::new(16);
        let elems = enumerate_perturb_basis(&basis, 10.0);
        for e in &elems {
            assert!(e.function.is_pt(), "element {} not PT", e.index);
        }
        // Gram matrix by coefficient contraction: ∫ ε_j conj(ε_l) = 2π Σ c c̄.
        for a in &elems {
            for b in &elems {
                let inner: Complex64 = a
                    .function
                    .terms()
                    .map(|(k, ca)| ca * b.function.coeff(k).conj())
                    .sum();
                let expect = if a.index == b.index { 1.0 } else { 0.0 };
                assert!(
                    (inner * TAU - expect).norm() < 1e-12,
                    "gram ({}, {})",
                    a.index,
                    b.index
                );
            }
        }
    }

    #[test]
    fn symmetry_identity_exact() {
        // Divergence-form assembly satisfies P_{jk} = P_{-k,-j} exactly.
        let basis = FourierBasis::new(6);
        let mut a = TrigPoly::constant(c(1.5, 0.0));
        a.add_scaled(&TrigPoly::cosine(2), c(0.25, 0.0));
        a.add_scaled(&TrigPoly::sine(1), c(0.0, 0.125));
        let spec = OperatorSpec::new(
            0.2,
            vec![DivTerm { beta: 1, coeff: a }],
            TrigPoly::harmonic(1, c(0.5, 0.5)),
        )
        .unwrap();
        let m = assemble_operator(&spec, &basis).unwrap();
        for j in basis.modes() {
            for k in basis.modes() {
                assert_eq!(
                    m.get(basis.index_of(j), basis.index_of(k)),
                    m.get(basis.index_of(-k), basis.index_of(-j)),
                    "({j},{k})"
                );
            }
        }
    }

    #[test]
    fn csv_dump_row_major() {
        let m = ComplexMatrix::from_fn(2, |r, c_| Complex64::new(r as f64, c_ as f64));
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,0,0,1\n1,0,1,1\n");
    }
}
