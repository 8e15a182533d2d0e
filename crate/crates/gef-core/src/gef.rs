//! Sampling and evaluation of Gaussian entire functions.
//!
//! A Gaussian entire function (G.E.F.) is the random series
//!
//! ```text
//! f(z) = Σ_k ξ_k z^k / √(k!),      ξ_k i.i.d. standard complex Gaussian,
//! ```
//!
//! and the associated random potential is `U(z) = log|f(z)| − ½|z|²`.
//! This module owns the truncated coefficient model (with a certified tail
//! bound on a disk), deterministic specimen fields used as analytic test
//! fixtures, bundled evaluation of `(f, f′, f″, U, ∇U, det Hess U)`, the
//! shift operators `T_w`, and the closed-form covariance kernels.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};

/// Hard cap on the truncation degree; a tail tolerance that would require
/// more coefficients than this is rejected as a capacity error.
pub const MAX_DEGREE: usize = 1_000_000;

/// What a sample represents: a random draw or one of the deterministic
/// specimen fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleKind {
    /// Random coefficients derived from the seed.
    Random,
    /// `F(z) = z^n/√(n!) · (1 + z/(10R))` with `R = √n`.
    SpecimenRing { n: u32 },
    /// `F(z) = z^n/√(n!)` — the degenerate ring without the correction term;
    /// its potential has an exactly singular circle `|z| = √n`.
    SpecimenMonomial { n: u32 },
    /// Truncated Taylor model of `F(z) = z^n/√(n!) · e^{zR^{δ−1} − R^δ}`.
    SpecimenDrift { n: u32, delta: f64 },
}

/// A Gaussian entire function truncated to degree `N`, valid on the disk
/// `|z| ≤ valid_radius` with a certified coefficient-weight tail bound.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct GefSample {
    kind: SampleKind,
    seed: u64,
    valid_radius: f64,
    tail_tol: f64,
    /// ξ_0 … ξ_N (the coefficients of z^k/√(k!)).
    xi: Vec<Complex64>,
    /// ξ_{k+1}·√(k+1), so that f′(z) = Σ_k d1[k] · z^k/√(k!).
    d1: Vec<Complex64>,
    /// ξ_{k+2}·√((k+1)(k+2)), so that f″(z) = Σ_k d2[k] · z^k/√(k!).
    d2: Vec<Complex64>,
    /// 1/√(k+1), for the term recurrence t_{k+1} = t_k · z / √(k+1).
    inv_sqrt: Vec<f64>,
}

/// Compact reproducible description of a sample; coefficients are re-derived
/// from the seed (or specimen parameters), never stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleManifest {
    #[serde(flatten)]
    pub kind: SampleKind,
    pub seed: u64,
    pub valid_radius: f64,
    pub tail_tol: f64,
    /// Truncation degree, recorded for verification on reload.
    pub degree: usize,
}

/// One-point evaluation bundle of the field and its potential.
///
/// When `at_zero` is set, `u` is `-∞` and `grad_u`/`hessian_det` are NaN;
/// callers must branch on the flag rather than consume the sentinels.
#[derive(Debug, Clone, Copy)]
pub struct FieldJet {
    pub at: Complex64,
    pub f: Complex64,
    pub f_prime: Complex64,
    pub f_second: Complex64,
    /// U(z) = log|f(z)| − ½|z|².
    pub u: f64,
    /// (U_x, U_y) encoded as U_x + iU_y; equals conj(f′/f) − z.
    pub grad_u: Complex64,
    /// det Hess U = 1 − |(f′/f)′|² (the trace is identically −2).
    pub hessian_det: f64,
    pub at_zero: bool,
}

/// Standard-deviation scale of f at z: √E|f(z)|² = e^{|z|²/2}.
///
/// Residual thresholds for root polishing are expressed relative to this.
pub fn gaussian_scale(z: Complex64) -> f64 {
    (0.5 * z.norm_sqr()).exp()
}

/// ξ_k drawn from a counter-based generator keyed by (seed, k); parallel
/// construction order cannot change the result.
fn coefficient(seed: u64, k: u64) -> Complex64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(k);
    // Box-Muller; Re, Im ~ N(0, ½) independent, so E|ξ|² = 1.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(r * theta.cos(), r * theta.sin())
}

/// Least `N` such that the deterministic weight sum `Σ_{k>N} R^k/√(k!)`
/// drops to `tail_tol` or below.
///
/// The sum is evaluated by accumulating terms until the term ratio
/// `R/√(k+1)` falls under ½ and bounding the remainder geometrically.
pub fn truncation_degree(valid_radius: f64, tail_tol: f64) -> Result<usize> {
    let r = valid_radius;
    // Beyond k = 4R² the term ratio R/√(k+1) is < 1/2, so the remainder past
    // any index k_end in that range is bounded by 2·t_{k_end}. Extend the
    // term list until that geometric bound is itself below the tolerance.
    let m_star = (4.0 * r * r).floor() as usize + 1;
    let mut terms = vec![1.0f64];
    let mut t = 1.0f64;
    let mut k = 0usize;
    loop {
        k += 1;
        if k > MAX_DEGREE {
            return Err(GefError::Capacity(format!(
                "tail tolerance {tail_tol} needs more than {MAX_DEGREE} coefficients"
            )));
        }
        t *= r / (k as f64).sqrt();
        terms.push(t);
        if k >= m_star && 2.0 * t <= tail_tol {
            break;
        }
    }
    let k_end = terms.len() - 1;
    // tail(N) = Σ_{N<k<k_end} t_k + 2·t_{k_end}; find the least admissible N.
    let mut tail = 2.0 * terms[k_end];
    let mut n = k_end;
    while n > 0 {
        let candidate = tail + terms[n];
        if candidate > tail_tol {
            break;
        }
        tail = candidate;
        n -= 1;
    }
    Ok(n)
}

/// Draws a random G.E.F. valid on `|z| ≤ valid_radius`.
///
/// The discarded tail satisfies `Σ_{k>N} R^k/√(k!) ≤ tail_tol`, which by the
/// Gaussian tail bound certifies
/// `P{ sup_{|z|≤R} |tail(z)| > t } ≤ 2·exp(−t²/(2·tail_tol²))`.
pub fn sample_gef(seed: u64, valid_radius: f64, tail_tol: f64) -> Result<GefSample> {
    if !(valid_radius > 0.0) {
        return Err(GefError::Domain(format!(
            "valid_radius must be positive, got {valid_radius}"
        )));
    }
    if !(tail_tol > 0.0) {
        return Err(GefError::Domain(format!(
            "tail_tol must be positive, got {tail_tol}"
        )));
    }
    let degree = truncation_degree(valid_radius, tail_tol)?;
    let xi: Vec<Complex64> = (0..=degree as u64).map(|k| coefficient(seed, k)).collect();
    Ok(GefSample::from_xi(
        SampleKind::Random,
        seed,
        valid_radius,
        tail_tol,
        xi,
    ))
}

/// Builds one of the deterministic specimen fields.
///
/// The ring and monomial specimens are exact finite series. The drift
/// specimen stores the Taylor polynomial of degree `M = ⌈20·R^δ⌉` of the
/// exponential factor, which reproduces `F` to relative error `e^{−10R^δ}`
/// on the annulus `R−2 ≤ |z| ≤ R+2`.
pub fn make_specimen(kind: SampleKind) -> Result<GefSample> {
    match kind {
        SampleKind::Random => Err(GefError::Domain(
            "random samples come from sample_gef, not make_specimen".into(),
        )),
        SampleKind::SpecimenRing { n } => {
            let n = check_specimen_n(n)?;
            let r = (n as f64).sqrt();
            let mut xi = vec![Complex64::new(0.0, 0.0); n + 2];
            xi[n] = Complex64::new(1.0, 0.0);
            xi[n + 1] = Complex64::new(((n + 1) as f64).sqrt() / (10.0 * r), 0.0);
            Ok(GefSample::from_xi(kind, 0, r + 4.0, 0.0, xi))
        }
        SampleKind::SpecimenMonomial { n } => {
            let n = check_specimen_n(n)?;
            let r = (n as f64).sqrt();
            let mut xi = vec![Complex64::new(0.0, 0.0); n + 1];
            xi[n] = Complex64::new(1.0, 0.0);
            Ok(GefSample::from_xi(kind, 0, r + 4.0, 0.0, xi))
        }
        SampleKind::SpecimenDrift { n, delta } => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(GefError::Domain(format!(
                    "drift exponent must lie in (0,1), got {delta}"
                )));
            }
            let n = check_specimen_n(n)?;
            let r = (n as f64).sqrt();
            let m = (20.0 * r.powf(delta)).ceil() as usize;
            // a_m = e^{−R^δ} (R^{δm}/m!) R^{−m} √((n+m)!/n!), built iteratively;
            // each factor update multiplies by R^{δ−1}·√(n+m)/m, so a_m stays
            // within (0, 2) and never over/underflows.
            let mut xi = vec![Complex64::new(0.0, 0.0); n + m + 1];
            let mut a = (-r.powf(delta)).exp();
            xi[n] = Complex64::new(a, 0.0);
            for j in 1..=m {
                a *= r.powf(delta - 1.0) * ((n + j) as f64).sqrt() / (j as f64);
                xi[n + j] = Complex64::new(a, 0.0);
            }
            Ok(GefSample::from_xi(kind, 0, r + 4.0, 0.0, xi))
        }
    }
}

fn check_specimen_n(n: u32) -> Result<usize> {
    if n == 0 {
        return Err(GefError::Domain("specimen degree n must be positive".into()));
    }
    Ok(n as usize)
}

impl GefSample {
    /// Test-only constructor with explicit coefficients.
    #[cfg(test)]
    pub(crate) fn from_parts_for_tests(xi: Vec<Complex64>, valid_radius: f64) -> Self {
        GefSample::from_xi(SampleKind::Random, 0, valid_radius, 0.0, xi)
    }

    fn from_xi(
        kind: SampleKind,
        seed: u64,
        valid_radius: f64,
        tail_tol: f64,
        xi: Vec<Complex64>,
    ) -> Self {
        let n = xi.len();
        let mut d1 = Vec::with_capacity(n.saturating_sub(1));
        let mut d2 = Vec::with_capacity(n.saturating_sub(2));
        for k in 0..n.saturating_sub(1) {
            d1.push(xi[k + 1] * ((k + 1) as f64).sqrt());
        }
        for k in 0..n.saturating_sub(2) {
            d2.push(xi[k + 2] * (((k + 1) * (k + 2)) as f64).sqrt());
        }
        let inv_sqrt = (0..n).map(|k| 1.0 / ((k + 1) as f64).sqrt()).collect();
        GefSample {
            kind,
            seed,
            valid_radius,
            tail_tol,
            xi,
            d1,
            d2,
            inv_sqrt,
        }
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Truncation degree N; the coefficient array is ξ_0 … ξ_N.
    pub fn degree(&self) -> usize {
        self.xi.len() - 1
    }

    pub fn valid_radius(&self) -> f64 {
        self.valid_radius
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.xi
    }

    pub fn manifest(&self) -> SampleManifest {
        SampleManifest {
            kind: self.kind,
            seed: self.seed,
            valid_radius: self.valid_radius,
            tail_tol: self.tail_tol,
            degree: self.degree(),
        }
    }

    /// Rebuilds the sample from its manifest and verifies that the derived
    /// truncation degree matches the recorded one.
    pub fn from_manifest(m: &SampleManifest) -> Result<GefSample> {
        let sample = match m.kind {
            SampleKind::Random => sample_gef(m.seed, m.valid_radius, m.tail_tol)?,
            k => make_specimen(k)?,
        };
        if sample.degree() != m.degree {
            return Err(GefError::Inconsistency(format!(
                "manifest records degree {} but reconstruction gives {}",
                m.degree,
                sample.degree()
            )));
        }
        Ok(sample)
    }

    fn check_radius(&self, z: Complex64) -> Result<()> {
        if z.norm() > self.valid_radius {
            return Err(GefError::Domain(format!(
                "|z| = {} exceeds the valid radius {}",
                z.norm(),
                self.valid_radius
            )));
        }
        Ok(())
    }

    /// Evaluates `(f, f′, f″)` in a single pass and fills in the potential,
    /// gradient and Hessian determinant.
    ///
    /// Summation runs over the scaled terms `t_k = z^k/√(k!)` (never the bare
    /// monomial coefficients, which underflow for large k), so the evaluation
    /// is stable up to `|z| ≈ 37`.
    pub fn eval_jet(&self, z: Complex64) -> Result<FieldJet> {
        self.check_radius(z)?;
        Ok(self.eval_jet_unchecked(z))
    }

    /// Same as [`eval_jet`](Self::eval_jet) without the radius guard, for the
    /// integrator hot path where the caller enforces the working window.
    pub fn eval_jet_unchecked(&self, z: Complex64) -> FieldJet {
        let mut f = Complex64::new(0.0, 0.0);
        let mut fp = Complex64::new(0.0, 0.0);
        let mut fpp = Complex64::new(0.0, 0.0);
        let mut t = Complex64::new(1.0, 0.0);
        let n = self.xi.len();
        for k in 0..n {
            f += self.xi[k] * t;
            if k < n - 1 {
                fp += self.d1[k] * t;
            }
            if k + 2 < n {
                fpp += self.d2[k] * t;
            }
            t *= z * self.inv_sqrt[k];
        }
        jet_from_values(z, f, fp, fpp)
    }

    /// `T_w f(z) = f(w+z) e^{−z·conj(w)} e^{−|w|²/2}`.
    pub fn translate_eval(&self, w: Complex64, z: Complex64) -> Result<Complex64> {
        self.check_radius(w + z)?;
        let jet = self.eval_jet_unchecked(w + z);
        Ok(jet.f * (-z * w.conj()).exp() * (-0.5 * w.norm_sqr()).exp())
    }
}

fn jet_from_values(z: Complex64, f: Complex64, fp: Complex64, fpp: Complex64) -> FieldJet {
    if f.re == 0.0 && f.im == 0.0 {
        return FieldJet {
            at: z,
            f,
            f_prime: fp,
            f_second: fpp,
            u: f64::NEG_INFINITY,
            grad_u: Complex64::new(f64::NAN, f64::NAN),
            hessian_det: f64::NAN,
            at_zero: true,
        };
    }
    let log_df = fp / f;
    let u = f.norm().ln() - 0.5 * z.norm_sqr();
    let grad_u = log_df.conj() - z;
    // (f′/f)′ = f″/f − (f′/f)²
    let g = fpp / f - log_df * log_df;
    let hessian_det = 1.0 - g.norm_sqr();
    FieldJet {
        at: z,
        f,
        f_prime: fp,
        f_second: fpp,
        u,
        grad_u,
        hessian_det,
        at_zero: false,
    }
}

impl FieldJet {
    /// `(f′/f)′`, the complex curvature entering the Hessian; NaN at zeros.
    pub fn log_deriv_prime(&self) -> Complex64 {
        if self.at_zero {
            return Complex64::new(f64::NAN, f64::NAN);
        }
        let ld = self.f_prime / self.f;
        self.f_second / self.f - ld * ld
    }

    /// |f| relative to the Gaussian standard deviation scale e^{|z|²/2}.
    pub fn normalized_abs_f(&self) -> f64 {
        self.f.norm() / gaussian_scale(self.at)
    }
}

/// Covariance kernel of the field itself: `E f(z1) conj(f(z2)) = e^{z1·conj(z2)}`.
pub fn kernel_f(z1: Complex64, z2: Complex64) -> Complex64 {
    (z1 * z2.conj()).exp()
}

/// Covariance of ξ(z) = f′(z) − conj(z)·f(z):
/// `E ξ(z1) conj(ξ(z2)) = (1 − |z1−z2|²) e^{z1·conj(z2)}`.
pub fn kernel_xi(z1: Complex64, z2: Complex64) -> Complex64 {
    (1.0 - (z1 - z2).norm_sqr()) * (z1 * z2.conj()).exp()
}

/// Decay bound for covariances of the Taylor coefficients of T_w f:
/// `|E ξ_j(w1) conj(ξ_k(w2))| ≤ 5^{(j+k)/2} e^{−|w1−w2|²/4}`.
pub fn coeff_covariance_bound(j: u32, k: u32, w1: Complex64, w2: Complex64) -> f64 {
    5f64.powf(0.5 * (j + k) as f64) * (-(w1 - w2).norm_sqr() / 4.0).exp()
}

/// k-th Taylor coefficient ξ_k(w) of `T_w f` extracted by a trapezoid Cauchy
/// integral over the circle `|z| = rho`; exact for truncated series up to the
/// (negligible) aliasing term of order rho^points.
pub fn xi_at_by_cauchy(
    sample: &GefSample,
    w: Complex64,
    k: u32,
    rho: f64,
    points: usize,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..points {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / points as f64;
        let z = rho * Complex64::new(theta.cos(), theta.sin());
        let val = sample.translate_eval(w, z)?;
        // divide by z^k on the circle: multiply by rho^{-k} e^{-ikθ}
        let phase = Complex64::new(0.0, -(k as f64) * theta).exp();
        acc += val * phase;
    }
    acc /= points as f64;
    acc *= rho.powi(-(k as i32));
    // ξ_k = √(k!) · (Taylor coefficient of z^k)
    let mut sqrt_fact = 1.0;
    for j in 1..=k {
        sqrt_fact *= (j as f64).sqrt();
    }
    Ok(acc * sqrt_fact)
}

/// Direct evaluation of the drift specimen's target `F(z) = z^n/√(n!)·e^{zR^{δ−1} − R^δ}`,
/// used as the oracle for its truncated Taylor model.
pub fn drift_target(n: u32, delta: f64, z: Complex64) -> Complex64 {
    let r = (n as f64).sqrt();
    let mut half_ln_fact = 0.0;
    for j in 1..=n as u64 {
        half_ln_fact += 0.5 * (j as f64).ln();
    }
    // z^n/√(n!) = exp(n·ln z − ½ ln n!) with the principal branch.
    let log_z = z.ln();
    let lead = (log_z * n as f64 - half_ln_fact).exp();
    lead * (z * r.powf(delta - 1.0) - r.powf(delta)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_gef(1, 0.0, 1e-12).is_err());
        assert!(sample_gef(1, 1.0, 0.0).is_err());
        assert!(make_specimen(SampleKind::SpecimenRing { n: 0 }).is_err());
        assert!(make_specimen(SampleKind::SpecimenDrift { n: 4, delta: 1.0 }).is_err());
    }

    #[test]
    fn truncation_degree_small_radius() {
        let n = truncation_degree(1.0, 1e-12).unwrap();
        assert!(n > 5 && n < 60, "N = {n}");
        // direct check: the remaining weight really is below the tolerance
        let mut t = 1.0;
        let mut tail = 0.0;
        for k in 1..(n + 400) {
            t *= 1.0 / (k as f64).sqrt();
            if k > n {
                tail += t;
            }
        }
        assert!(tail <= 1e-12);
        // and N is least: admitting term n keeps the sum above tolerance
        let mut t = 1.0;
        let mut tail = 0.0;
        for k in 1..(n + 400) {
            t *= 1.0 / (k as f64).sqrt();
            if k >= n {
                tail += t;
            }
        }
        assert!(tail > 1e-12);
    }

    #[test]
    fn truncation_degree_is_beyond_weight_peak() {
        // the weight sequence R^k/√(k!) peaks near k = R²
        let n = truncation_degree(10.0, 1e-9).unwrap();
        assert!(n >= 100, "N = {n}");
    }

    #[test]
    fn truncation_capacity_error() {
        assert!(matches!(
            truncation_degree(600.0, 1e-9),
            Err(GefError::Capacity(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let a = sample_gef(7, 3.0, 1e-12).unwrap();
        let b = sample_gef(7, 3.0, 1e-12).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        let c = sample_gef(8, 3.0, 1e-12).unwrap();
        assert_ne!(a.coefficients()[0], c.coefficients()[0]);
    }

    #[test]
    fn coefficient_normalization() {
        // E|ξ|² = 1 for the standard complex Gaussian convention
        let m = 200_000;
        let mean: f64 = (0..m).map(|k| coefficient(42, k).norm_sqr()).sum::<f64>() / m as f64;
        assert!((mean - 1.0).abs() < 0.01, "E|xi|^2 = {mean}");
    }

    #[test]
    fn constant_field_jet() {
        let sample = GefSample::from_xi(
            SampleKind::Random,
            0,
            5.0,
            1e-12,
            vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        );
        let z = c(0.3, -1.1);
        let jet = sample.eval_jet(z).unwrap();
        assert_relative_eq!(jet.f.re, 2.0, max_relative = 1e-14);
        assert!(jet.f_prime.norm() < 1e-14);
        assert_relative_eq!(jet.grad_u.re, -z.re, epsilon = 1e-14);
        assert_relative_eq!(jet.grad_u.im, -z.im, epsilon = 1e-14);
        assert_relative_eq!(jet.hessian_det, 1.0, epsilon = 1e-14);
        assert_relative_eq!(jet.u, 2.0f64.ln() - 0.5 * z.norm_sqr(), epsilon = 1e-12);
    }

    #[test]
    fn eval_outside_radius_is_rejected() {
        let sample = sample_gef(3, 2.0, 1e-10).unwrap();
        assert!(sample.eval_jet(c(2.5, 0.0)).is_err());
        assert!(sample.translate_eval(c(1.5, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn zero_sentinel_flag() {
        // f(z) = z has an exact zero at the origin
        let sample = GefSample::from_xi(
            SampleKind::Random,
            0,
            5.0,
            1e-12,
            vec![c(0.0, 0.0), c(1.0, 0.0)],
        );
        let jet = sample.eval_jet(c(0.0, 0.0)).unwrap();
        assert!(jet.at_zero);
        assert_eq!(jet.u, f64::NEG_INFINITY);
        assert!(jet.grad_u.re.is_nan());
    }

    #[test]
    fn monomial_specimen_gradient() {
        let n = 16u32;
        let sample = make_specimen(SampleKind::SpecimenMonomial { n }).unwrap();
        for &z in &[c(2.0, 1.0), c(-3.0, 0.5), c(0.7, -2.0)] {
            let jet = sample.eval_jet(z).unwrap();
            let expect = (n as f64) / z.conj() - z;
            assert_relative_eq!(jet.grad_u.re, expect.re, epsilon = 1e-10);
            assert_relative_eq!(jet.grad_u.im, expect.im, epsilon = 1e-10);
        }
        // exactly zero on |z| = √n
        let z = (n as f64).sqrt() * Complex64::new(0.6, 0.8);
        let jet = sample.eval_jet(z).unwrap();
        assert!(jet.grad_u.norm() < 1e-10);
    }

    #[test]
    fn ring_specimen_radial_gradient_vanishes_to_leading_order() {
        let n = 400u32;
        let r = 20.0f64;
        let sample = make_specimen(SampleKind::SpecimenRing { n }).unwrap();
        for theta in [1.2f64, std::f64::consts::FRAC_PI_2, 2.4] {
            let dir = Complex64::new(theta.cos(), theta.sin());
            let jet = sample.eval_jet(r * dir).unwrap();
            // radial part comes only from the 1/(10R) correction
            let radial = (jet.grad_u * dir.conj()).re;
            assert!(radial.abs() <= 2.0 / (10.0 * r), "radial = {radial}");
        }
    }

    #[test]
    fn drift_specimen_matches_target_on_annulus() {
        let n = 144u32; // R = 12
        let delta = 0.4;
        let r = 12.0f64;
        let sample = make_specimen(SampleKind::SpecimenDrift { n, delta }).unwrap();
        let budget = (-10.0 * r.powf(delta)).exp();
        for i in 0..24 {
            let theta = 0.26 * i as f64;
            let rho = r - 2.0 + 4.0 * ((i * 7) % 25) as f64 / 24.0;
            let z = rho * Complex64::new(theta.cos(), theta.sin());
            let jet = sample.eval_jet(z).unwrap();
            let target = drift_target(n, delta, z);
            let rel = (jet.f - target).norm() / target.norm();
            assert!(rel <= budget.max(1e-12) * 4.0, "rel err {rel} vs {budget}");
        }
    }

    #[test]
    fn drift_specimen_angular_component_in_band() {
        // inside the sector around arg z = π/2 the leftward drift R^{δ−1}
        // gives an angular component between ½R^{δ−1} and 2R^{δ−1}
        let n = 144u32;
        let delta = 0.4;
        let r = 12.0f64;
        let sample = make_specimen(SampleKind::SpecimenDrift { n, delta }).unwrap();
        let band = r.powf(delta - 1.0);
        for i in 0..15 {
            let theta = std::f64::consts::FRAC_PI_2 + 0.1 * (i as f64 / 7.0 - 1.0);
            let rho = r - 0.9 + 1.8 * ((i * 11) % 16) as f64 / 15.0;
            let dir = Complex64::new(theta.cos(), theta.sin());
            let jet = sample.eval_jet(rho * dir).unwrap();
            let minus_grad = -jet.grad_u;
            // counter-clockwise tangential direction at z is i·dir
            let angular = (minus_grad * (Complex64::i() * dir).conj()).re;
            assert!(
                angular >= 0.5 * band && angular <= 2.0 * band,
                "angular = {angular}, band = {band}"
            );
        }
    }

    #[test]
    fn shift_identity_lemma() {
        // U(w+z) = log|T_w f(z)| − ½|z|²
        let sample = sample_gef(11, 6.0, 1e-12).unwrap();
        let pairs = [
            (c(0.4, 0.2), c(1.0, -0.5)),
            (c(-1.5, 2.0), c(0.3, 0.3)),
            (c(2.0, -2.0), c(-1.0, 1.0)),
        ];
        for (w, z) in pairs {
            let t = sample.translate_eval(w, z).unwrap();
            let lhs = t.norm().ln() - 0.5 * z.norm_sqr();
            let rhs = sample.eval_jet(w + z).unwrap().u;
            assert!((lhs - rhs).abs() < 1e-10, "lhs {lhs} rhs {rhs}");
        }
        // w = 0 is the identity shift
        let z = c(0.7, 0.7);
        let t = sample.translate_eval(c(0.0, 0.0), z).unwrap();
        let f = sample.eval_jet(z).unwrap().f;
        assert!((t - f).norm() < 1e-12 * f.norm());
    }

    #[test]
    fn shift_cocycle_lemma() {
        // T_{w'+w''} f(z) = e^{i·Im(w'·conj(w''))} · T_{w'}(T_{w''} f)(z)
        let sample = sample_gef(13, 8.0, 1e-12).unwrap();
        let (wp, wpp, z) = (c(0.9, -0.4), c(-0.6, 1.1), c(0.5, 0.25));
        let lhs = sample.translate_eval(wp + wpp, z).unwrap();
        // inner operator expanded through the pointwise formula
        let inner_at = |y: Complex64| {
            sample.eval_jet(wpp + y).unwrap().f
                * (-y * wpp.conj()).exp()
                * (-0.5 * wpp.norm_sqr()).exp()
        };
        let outer = inner_at(wp + z) * (-z * wp.conj()).exp() * (-0.5 * wp.norm_sqr()).exp();
        let phase = Complex64::new(0.0, (wp * wpp.conj()).im).exp();
        let rhs = phase * outer;
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn kernel_values() {
        assert!((kernel_f(c(0.0, 0.0), c(1.5, -2.0)) - c(1.0, 0.0)).norm() < 1e-15);
        assert_relative_eq!(
            kernel_f(c(1.0, 0.0), c(1.0, 0.0)).re,
            std::f64::consts::E,
            max_relative = 1e-14
        );
        // e^{z1·conj(z2)} at (1, i) is e^{-i}
        let v = kernel_f(c(1.0, 0.0), c(0.0, 1.0));
        assert_relative_eq!(v.re, 1f64.cos(), epsilon = 1e-14);
        assert_relative_eq!(v.im, -(1f64.sin()), epsilon = 1e-14);

        assert_relative_eq!(
            kernel_xi(c(0.0, 0.0), c(0.0, 0.0)).re,
            1.0,
            epsilon = 1e-15
        );
        let z = c(0.4, 0.8);
        assert_relative_eq!(
            kernel_xi(z, z).re,
            z.norm_sqr().exp(),
            max_relative = 1e-14
        );
        // |z1 − z2| = 1 annihilates the kernel
        assert!(kernel_xi(c(0.0, 0.0), c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn coeff_bound_values() {
        let w = c(0.0, 0.0);
        assert_relative_eq!(coeff_covariance_bound(0, 0, w, w), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            coeff_covariance_bound(0, 0, w, c(4.0, 0.0)),
            (-4.0f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            coeff_covariance_bound(1, 1, w, w),
            5.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn finite_difference_consistency() {
        // central differences of U reproduce grad_u and hessian_det;
        // sampled away from zeros, where the finite differences converge
        let sample = sample_gef(21, 6.0, 1e-12).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        let mut trial = 0u64;
        while checked < 40 {
            trial += 1;
            let z = c(
                -3.0 + 6.0 * fract(trial as f64 * 0.7548776662),
                -3.0 + 6.0 * fract(trial as f64 * 0.5698402911),
            );
            let jet = sample.eval_jet(z).unwrap();
            // finite differences only converge on the smooth part of U;
            // reject points whose log-derivative curvature is dominated by a
            // nearby zero (|(f'/f)'| ~ 1/dist², so this keeps dist ≳ 0.7)
            if jet.normalized_abs_f() < 0.3 || jet.log_deriv_prime().norm() > 2.0 {
                continue;
            }
            checked += 1;
            let u = |p: Complex64| sample.eval_jet(p).unwrap().u;
            let ux = (u(z + c(h, 0.0)) - u(z - c(h, 0.0))) / (2.0 * h);
            let uy = (u(z + c(0.0, h)) - u(z - c(0.0, h))) / (2.0 * h);
            let gref = jet.grad_u;
            let rel = ((ux - gref.re).hypot(uy - gref.im)) / gref.norm().max(1.0);
            assert!(rel < 1e-5, "grad rel err {rel} at {z}");

            let uc = u(z);
            let uxx = (u(z + c(h, 0.0)) - 2.0 * uc + u(z - c(h, 0.0))) / (h * h);
            let uyy = (u(z + c(0.0, h)) - 2.0 * uc + u(z - c(0.0, h))) / (h * h);
            let uxy = (u(z + c(h, h)) - u(z + c(h, -h)) - u(z + c(-h, h)) + u(z - c(h, h)))
                / (4.0 * h * h);
            let det = uxx * uyy - uxy * uxy;
            assert!(
                (det - jet.hessian_det).abs() / jet.hessian_det.abs().max(1.0) < 1e-4,
                "hessian det fd {det} vs {}",
                jet.hessian_det
            );
            // harmonicity: trace is exactly −2
            assert!((uxx + uyy + 2.0).abs() < 1e-6, "laplacian {}", uxx + uyy);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let sample = sample_gef(99, 4.0, 1e-10).unwrap();
        let m = sample.manifest();
        let json = serde_json::to_string(&m).unwrap();
        let back: SampleManifest = serde_json::from_str(&json).unwrap();
        let rebuilt = GefSample::from_manifest(&back).unwrap();
        assert_eq!(rebuilt.coefficients(), sample.coefficients());

        let spec = make_specimen(SampleKind::SpecimenDrift { n: 25, delta: 0.4 }).unwrap();
        let m2 = spec.manifest();
        let back2: SampleManifest =
            serde_json::from_str(&serde_json::to_string(&m2).unwrap()).unwrap();
        let rebuilt2 = GefSample::from_manifest(&back2).unwrap();
        assert_eq!(rebuilt2.coefficients(), spec.coefficients());
    }

    fn fract(x: f64) -> f64 {
        x - x.floor()
    }

    #[test]
    fn cauchy_extraction_recovers_coefficients() {
        let sample = sample_gef(5, 6.0, 1e-12).unwrap();
        // at w = 0 the extracted ξ_k are the raw coefficients
        for k in 0..3u32 {
            let got = xi_at_by_cauchy(&sample, c(0.0, 0.0), k, 0.8, 64).unwrap();
            let want = sample.coefficients()[k as usize];
            assert!((got - want).norm() < 1e-10, "k={k}: {got} vs {want}");
        }
    }
}
