//! Symbol-level algebra on the circle: trigonometric polynomials, operator
//! symbols, PT/symmetry predicates, volume-growth exponents and the
//! level-set nondegeneracy order of `arg` of the principal symbol.
//!
//! Everything here is a pure function of immutable inputs.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::weylgeom::QuadratureGrid;

/// Relative tolerance for coefficient realness tests.
pub const COEFF_TOL: f64 = 1e-12;

/// Finite Fourier series `x ↦ Σ_k c_k e^{ikx}` on the circle of
/// circumference 2π. Coefficients are stored sparsely by frequency.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigPoly {
    coeffs: BTreeMap<i64, Complex64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        Self::harmonic(0, c)
    }

    /// The single term `amp · e^{ikx}`.
    pub fn harmonic(k: i64, amp: Complex64) -> Self {
        let mut p = Self::default();
        p.add_term(k, amp);
        p
    }

    /// `cos(kx)` as a two-term series.
    pub fn cosine(k: i64) -> Self {
        let mut p = Self::default();
        p.add_term(k, Complex64::new(0.5, 0.0));
        p.add_term(-k, Complex64::new(0.5, 0.0));
        p
    }

    /// `sin(kx)` as a two-term series.
    pub fn sine(k: i64) -> Self {
        let mut p = Self::default();
        p.add_term(k, Complex64::new(0.0, -0.5));
        p.add_term(-k, Complex64::new(0.0, 0.5));
        p
    }

    pub fn from_coeffs<I: IntoIterator<Item = (i64, Complex64)>>(iter: I) -> Self {
        let mut p = Self::default();
        for (k, c) in iter {
            p.add_term(k, c);
        }
        p
    }

    /// Adds `amp · e^{ikx}` to the series.
    pub fn add_term(&mut self, k: i64, amp: Complex64) {
        let entry = self.coeffs.entry(k).or_insert(Complex64::ZERO);
        *entry += amp;
        if *entry == Complex64::ZERO {
            self.coeffs.remove(&k);
        }
    }

    /// Adds `factor · other` termwise.
    pub fn add_scaled(&mut self, other: &TrigPoly, factor: Complex64) {
        for (&k, &c) in &other.coeffs {
            self.add_term(k, factor * c);
        }
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        self.coeffs.get(&k).copied().unwrap_or(Complex64::ZERO)
    }

    /// Nonzero terms in ascending frequency order.
    pub fn terms(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (k, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest |frequency| carrying a nonzero coefficient.
    pub fn bandwidth(&self) -> i64 {
        self.coeffs.keys().map(|k| k.abs()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for (&k, &c) in &self.coeffs {
            acc += c * Complex64::from_polar(1.0, k as f64 * x);
        }
        acc
    }

    /// Samples the series on the `n`-point midpoint grid of [0, 2π).
    pub fn sample(&self, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| self.eval((i as f64 + 0.5) * TAU / n as f64))
            .collect()
    }

    fn max_coeff_abs(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// True iff the function is real-valued: `c_{-k} = conj(c_k)` for all k.
    pub fn is_real(&self) -> bool {
        let tol = COEFF_TOL * self.max_coeff_abs().max(1.0);
        self.coeffs
            .iter()
            .all(|(&k, &c)| (self.coeff(-k) - c.conj()).norm() <= tol)
    }

    /// True iff `f(-x) = conj(f(x))`, i.e. all Fourier coefficients are real.
    pub fn is_pt(&self) -> bool {
        let tol = COEFF_TOL * self.max_coeff_abs().max(1.0);
        self.coeffs.values().all(|c| c.im.abs() <= tol)
    }

    /// `(2π Σ_k |c_k|²)^{1/2}`, the L² norm over the circle.
    pub fn l2_norm(&self) -> f64 {
        (TAU * self.coeffs.values().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `Σ_k |c_k|`, an upper bound for the sup norm.
    pub fn sup_bound(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// Semiclassical Sobolev norm `(2π Σ (1+(hk)²)^s |c_k|²)^{1/2}`.
    /// Diagnostic only; no counting result depends on its constants.
    pub fn h_sobolev_norm(&self, h: f64, s: f64) -> f64 {
        let sum: f64 = self
            .coeffs
            .iter()
            .map(|(&k, c)| (1.0 + (h * k as f64).powi(2)).powf(s) * c.norm_sqr())
            .sum();
        (TAU * sum).sqrt()
    }

    /// Coefficientwise complex conjugation composed with reflection,
    /// i.e. the series of `x ↦ conj(f(-x))`.
    pub fn pt_image(&self) -> TrigPoly {
        TrigPoly::from_coeffs(self.coeffs.iter().map(|(&k, &c)| (k, c.conj())))
    }
}

// JSON form: object mapping frequency strings to [re, im] pairs.
impl Serialize for TrigPoly {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.coeffs.len()))?;
        for (k, c) in &self.coeffs {
            map.serialize_entry(&k.to_string(), &[c.re, c.im])?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = TrigPoly;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from frequency strings to [re, im] pairs")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<TrigPoly, A::Error> {
                let mut p = TrigPoly::zero();
                while let Some((key, val)) = access.next_entry::<String, [f64; 2]>()? {
                    let k: i64 = key.parse().map_err(serde::de::Error::custom)?;
                    p.add_term(k, Complex64::new(val[0], val[1]));
                }
                Ok(p)
            }
        }
        deserializer.deserialize_map(V)
    }
}

/// One `(hD)^β a_β(x) (hD)^β` term of a divergence-form operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivTerm {
    /// β; the term contributes 2β to the operator order.
    pub beta: u32,
    pub coeff: TrigPoly,
}

/// A symmetric-form differential operator
/// `Σ_β (hD)^β a_β(x) (hD)^β + V(x)` on the circle, with `D = -i d/dx`.
///
/// Only this symmetric divergence form is admitted: it satisfies the
/// transpose identity exactly at the matrix level, which one-sided terms
/// `a(x)(hD)^α` do not after truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    h: f64,
    div_terms: Vec<DivTerm>,
    potential: TrigPoly,
}

/// Grid resolution used for the construction-time ellipticity check.
const ELLIPTICITY_GRID: usize = 1024;

impl OperatorSpec {
    /// Validates `0 < h ≤ 1`, order ≥ 2 and ellipticity of the principal
    /// coefficient on a dense grid.
    pub fn new(h: f64, div_terms: Vec<DivTerm>, potential: TrigPoly) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "semiclassical parameter h must satisfy 0 < h <= 1, got {h}"
            )));
        }
        let spec = Self {
            h,
            div_terms,
            potential,
        };
        if spec.order() < 2 {
            return Err(Error::InvalidParameter(
                "operator order m = 2 max β must be at least 2".into(),
            ));
        }
        spec.check_ellipticity()?;
        Ok(spec)
    }

    fn check_ellipticity(&self) -> Result<()> {
        let mut min_abs = f64::INFINITY;
        let mut max_abs: f64 = 0.0;
        for i in 0..ELLIPTICITY_GRID {
            let x = i as f64 * TAU / ELLIPTICITY_GRID as f64;
            let a = self.principal_coeff(x).norm();
            min_abs = min_abs.min(a);
            max_abs = max_abs.max(a);
        }
        if min_abs <= 1e-12 * max_abs.max(1.0) {
            return Err(Error::Ellipticity(format!(
                "principal coefficient reaches |a| = {min_abs:.3e} on the circle"
            )));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Operator order `m = 2 max β`.
    pub fn order(&self) -> u32 {
        2 * self.div_terms.iter().map(|t| t.beta).max().unwrap_or(0)
    }

    pub fn div_terms(&self) -> &[DivTerm] {
        &self.div_terms
    }

    pub fn potential(&self) -> &TrigPoly {
        &self.potential
    }

    /// Same operator with a different semiclassical parameter.
    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(h, self.div_terms.clone(), self.potential.clone())
    }

    /// Sum of the coefficients at top order, evaluated at `x`.
    pub fn principal_coeff(&self, x: f64) -> Complex64 {
        let top = self.order() / 2;
        self.div_terms
            .iter()
            .filter(|t| t.beta == top)
            .map(|t| t.coeff.eval(x))
            .sum()
    }

    /// Full symbol `p(x,ξ) = Σ_β a_β(x) ξ^{2β} + V(x)`.
    pub fn symbol(&self, x: f64, xi: f64) -> Complex64 {
        let mut acc = self.potential.eval(x);
        for t in &self.div_terms {
            acc += t.coeff.eval(x) * xi.powi(2 * t.beta as i32);
        }
        acc
    }

    /// Principal symbol `p_m(x,ξ) = a_{m/2}(x) ξ^m`.
    pub fn principal_symbol(&self, x: f64, xi: f64) -> Complex64 {
        self.principal_coeff(x) * xi.powi(self.order() as i32)
    }

    /// Symbol-level symmetry report: `pt` iff every coefficient series has
    /// real Fourier coefficients; `symmetric` is structural for
    /// divergence-form specs and reported for transparency.
    pub fn pt_report(&self) -> SymmetryReport {
        let pt = self.div_terms.iter().all(|t| t.coeff.is_pt()) && self.potential.is_pt();
        SymmetryReport {
            pt,
            symmetric: true,
        }
    }

    /// Largest coefficient bandwidth over all terms and the potential.
    pub fn bandwidth(&self) -> i64 {
        self.div_terms
            .iter()
            .map(|t| t.coeff.bandwidth())
            .chain(std::iter::once(self.potential.bandwidth()))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub pt: bool,
    pub symmetric: bool,
}

/// Volume-growth data for one probe point: samples of
/// `V_z(t) = vol{(x,ξ): |p(x,ξ) - z|² ≤ t}` and the fitted growth exponent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolAnalysis {
    pub z: [f64; 2],
    /// `(t, V_z(t))` pairs, monotone non-decreasing in t.
    pub vz_samples: Vec<(f64, f64)>,
    /// Fitted growth exponent clamped to (0, 1]; falls back to `1/(2m)`
    /// when the samples do not support a fit.
    pub kappa: f64,
}

/// Quadrature of the sublevel volumes `V_z(t)` over the given grid, for
/// every `t` in `t_grid` (positive, increasing).
pub fn vz_curve(
    spec: &OperatorSpec,
    z: Complex64,
    t_grid: &[f64],
    grid: &QuadratureGrid,
) -> Result<SymbolAnalysis> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty t grid".into()));
    }
    if t_grid.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidParameter(
            "vz_curve requires strictly positive t values".into(),
        ));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "vz_curve requires a strictly increasing t grid".into(),
        ));
    }

    // One pass over the grid collecting |p - z|² per cell, then each
    // sublevel count is a rank query in the sorted distances.
    let mut dist2: Vec<f64> = Vec::with_capacity(grid.nx * grid.nxi);
    let dx = TAU / grid.nx as f64;
    let dxi = 2.0 * grid.xi_max / grid.nxi as f64;
    let pot: Vec<Complex64> = (0..grid.nx)
        .map(|i| spec.potential().eval((i as f64 + 0.5) * dx))
        .collect();
    let coeffs: Vec<(i32, Vec<Complex64>)> = spec
        .div_terms()
        .iter()
        .map(|t| {
            let vals = (0..grid.nx)
                .map(|i| t.coeff.eval((i as f64 + 0.5) * dx))
                .collect();
            (2 * t.beta as i32, vals)
        })
        .collect();
    for j in 0..grid.nxi {
        let xi = -grid.xi_max + (j as f64 + 0.5) * dxi;
        for i in 0..grid.nx {
            let mut p = pot[i];
            for (pow, vals) in &coeffs {
                p += vals[i] * xi.powi(*pow);
            }
            dist2.push((p - z).norm_sqr());
        }
    }
    dist2.sort_by(f64::total_cmp);
    let cell = dx * dxi;
    let vz_samples: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| (t, dist2.partition_point(|&d| d <= t) as f64 * cell))
        .collect();

    let fallback = 1.0 / (2.0 * spec.order() as f64);
    let kappa = match kappa_fit_samples(&vz_samples) {
        Ok(k) => k.clamp(f64::MIN_POSITIVE, 1.0),
        Err(_) => fallback,
    };
    Ok(SymbolAnalysis {
        z: [z.re, z.im],
        vz_samples,
        kappa,
    })
}

/// Least-squares slope of `log V` against `log t` over the positive
/// samples. Returns 1 when all samples are zero (vacuous bound), and
/// `InsufficientData` when fewer than 4 samples are positive.
pub fn kappa_fit(analysis: &SymbolAnalysis) -> Result<f64> {
    kappa_fit_samples(&analysis.vz_samples)
}

fn kappa_fit_samples(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.iter().all(|&(_, v)| v == 0.0) {
        return Ok(1.0);
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, v)| v > 0.0)
        .map(|&(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "kappa fit needs at least 4 positive volume samples, got {}",
            pts.len()
        )));
    }
    Ok(least_squares_slope(&pts))
}

/// Slope of the least-squares line through `(x, y)` points.
pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Smallest order `N₀ ≤ n0_max` such that at every point of the level set
/// `{F = θ₀}` on the cosphere (the two circles ξ = ±1), some x-derivative
/// of `F = arg p_m` of order ≤ N₀ is nonzero. Returns `None` when the
/// level set carries a degenerate (locally constant) branch, and `Some(1)`
/// when the level set is empty.
pub fn nondegeneracy_order(
    spec: &OperatorSpec,
    theta0: f64,
    n0_max: usize,
    resolution: usize,
) -> Result<Option<usize>> {
    if n0_max < 1 {
        return Err(Error::InvalidParameter("n0_max must be >= 1".into()));
    }
    let n = resolution.max(64);
    let dx = TAU / n as f64;

    let mut worst: Option<usize> = Some(1);
    let mut any_point = false;
    for &xi in &[1.0_f64, -1.0] {
        let f: Vec<f64> = (0..n)
            .map(|i| spec.principal_symbol(i as f64 * dx, xi).arg())
            .collect();
        let scale = f.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        // 1e-6·scale, floored by the roundoff amplification eps/dx^k of an
        // order-k difference quotient.
        let noise =
            |order: usize| (1e-6 * scale).max(100.0 * f64::EPSILON * dx.powi(-(order as i32)));
        // Wrapped offset from the target level; continuous across arg
        // branch cuts except at the antipode.
        let d: Vec<f64> = f.iter().map(|&v| wrap_angle(v - theta0)).collect();

        let mut level_points: Vec<usize> = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            if d[i].abs() < 1e-9 {
                level_points.push(i);
            } else if d[i] * d[j] < 0.0 && d[i].abs() + d[j].abs() < std::f64::consts::PI {
                level_points.push(if d[i].abs() <= d[j].abs() { i } else { j });
            }
        }
        level_points.dedup();
        if level_points.len() >= n / 2 {
            // The whole circle sits on the level set: F ≡ θ₀ up to noise,
            // every derivative vanishes identically.
            return Ok(None);
        }
        for &i in &level_points {
            any_point = true;
            let mut found: Option<usize> = None;
            for order in 1..=n0_max {
                let deriv = central_derivative(&f, i, order, dx);
                if deriv.abs() > noise(order) {
                    found = Some(order);
                    break;
                }
            }
            match found {
                None => return Ok(None),
                Some(k) => {
                    if worst.is_none_or(|w| k > w) {
                        worst = Some(k);
                    }
                }
            }
        }
    }
    if !any_point {
        // Empty level set: the property holds vacuously.
        return Ok(Some(1));
    }
    Ok(worst)
}

fn wrap_angle(a: f64) -> f64 {
    let mut v = a.rem_euclid(TAU);
    if v > std::f64::consts::PI {
        v -= TAU;
    }
    v
}

/// Central finite difference of the given order at index `i` of a periodic
/// sequence of angles, unwrapped locally around `i`.
fn central_derivative(f: &[f64], i: usize, order: usize, dx: f64) -> f64 {
    let n = f.len();
    let radius = order.div_ceil(2) + 1;
    // Locally unwrap: accumulate wrapped increments away from the center.
    let m = 2 * radius + 1;
    let mut w = vec![0.0_f64; m];
    w[radius] = f[i];
    for s in 1..=radius {
        let prev = w[radius + s - 1];
        let idx = (i + s) % n;
        w[radius + s] = prev + wrap_angle(f[idx] - prev);
        let prev = w[radius - s + 1];
        let idx = (i + n - s % n) % n;
        w[radius - s] = prev + wrap_angle(f[idx] - prev);
    }
    let weights = fd_weights(order, radius);
    let sum: f64 = weights.iter().zip(&w).map(|(c, v)| c * v).sum();
    sum / dx.powi(order as i32)
}

/// Fornberg weights for the `order`-th derivative on the symmetric integer
/// stencil `-radius..=radius` (spacing 1).
fn fd_weights(order: usize, radius: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|v| v as f64)
        .collect();
    let n = nodes.len();
    let m = order;
    // Fornberg's recurrence, specialized to x0 = 0.
    let mut c = vec![vec![0.0_f64; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            for k in (1..=m.min(i)).rev() {
                c[j][k] = (nodes[i] * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = nodes[i] * c[j][0] / c3;
        }
        for k in (1..=m.min(i)).rev() {
            c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - nodes[i - 1] * c[i - 1][k]) / c2;
        }
        c[i][0] = -c1 * nodes[i - 1] * c[i - 1][0] / c2;
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}
