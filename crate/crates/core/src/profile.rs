//! Damping profile, potential, problem parameters, and initial data.
//!
//! The damping coefficient is `w(r) = 1/r` outside a cap radius `r0` and is
//! extended below `r0` by the linear cap `w(r) = (2 r0 − r)/r0²`, the
//! simplest decreasing C¹ continuation with closed-form antiderivative. The
//! potential is tied to the damping by `V = −w′ + w²`, which is what makes
//! the second-order operator factorize into the two characteristic
//! transport operators.

use std::sync::Arc;

use thiserror::Error;

use crate::transport::RadialField;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("cap radius must be positive, got {0}")]
    NonPositiveCapRadius(f64),
    #[error("spatial dimension must be at least 2, got {0}")]
    DimensionTooSmall(u32),
    #[error("nonlinearity power must exceed 1, got {0}")]
    PowerTooSmall(f64),
    #[error("data amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("data decay rate must be positive, got {0}")]
    NonPositiveDecay(f64),
    #[error("point (t={t}, r={r}) lies outside the field grid")]
    OutOfGrid { t: f64, r: f64 },
}

/// Japanese bracket ⟨x⟩ = sqrt(1 + x²).
#[inline]
pub fn jbracket(x: f64) -> f64 {
    x.hypot(1.0)
}

/// The damping coefficient `w`, its antiderivative `W`, and the matched
/// potential `V`, all determined by the cap radius `r0`.
///
/// Immutable after construction; shared freely across worker threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingProfile {
    r0: f64,
}

impl DampingProfile {
    /// Builds the linearly capped profile with `w(r) = 1/r` for `r ≥ r0`.
    pub fn capped(r0: f64) -> Result<Self, ProfileError> {
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(ProfileError::NonPositiveCapRadius(r0));
        }
        Ok(Self { r0 })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Damping coefficient `w(r)`, positive and non-increasing on `[0, ∞)`.
    #[inline]
    pub fn w(&self, r: f64) -> f64 {
        if r >= self.r0 {
            1.0 / r
        } else {
            (2.0 * self.r0 - r) / (self.r0 * self.r0)
        }
    }

    /// Antiderivative `W(r) = ∫₀ʳ w`, so `W(0) = 0` and
    /// `W(r) = W(r0) + ln(r/r0)` for `r ≥ r0`.
    #[inline]
    pub fn big_w(&self, r: f64) -> f64 {
        if r >= self.r0 {
            1.5 + (r / self.r0).ln()
        } else {
            (2.0 * self.r0 - 0.5 * r) * r / (self.r0 * self.r0)
        }
    }

    /// Potential `V(r) = −w′(r) + w(r)²`, non-negative everywhere.
    #[inline]
    pub fn potential(&self, r: f64) -> f64 {
        if r >= self.r0 {
            2.0 / (r * r)
        } else {
            let w = self.w(r);
            1.0 / (self.r0 * self.r0) + w * w
        }
    }
}

/// Critical power for dimension `n`: the positive root of
/// `p((n−1)/2·p − (n+1)/2) = 1`.
pub fn critical_exponent(n: u32) -> Result<f64, ProfileError> {
    if n < 2 {
        return Err(ProfileError::DimensionTooSmall(n));
    }
    let n = n as f64;
    let b = n + 1.0;
    Ok((b + (b * b + 8.0 * (n - 1.0)).sqrt()) / (2.0 * (n - 1.0)))
}

/// Recovers the unreduced amplitude `U(t, r) = u(t, r)/r`; at `r = 0` the
/// one-sided difference quotient at the first grid node is used.
pub fn unreduce(u: &RadialField, t: f64, r: f64) -> Result<f64, ProfileError> {
    if !(r >= 0.0) || r > u.r_max() + 1e-12 || !(t >= 0.0) || t > u.t_max() + 1e-12 {
        return Err(ProfileError::OutOfGrid { t, r });
    }
    let dr = u.dr();
    if r < dr {
        Ok(u.interp(t, dr) / dr)
    } else {
        Ok(u.interp(t, r) / r)
    }
}

/// Nonlinearity power, data amplitude, source scale, and data decay rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub p: f64,
    pub epsilon: f64,
    /// Source sign/scale; the radial reduction fixes it to 1.
    pub lambda: f64,
    pub kappa_decay: f64,
}

impl ProblemParams {
    pub fn new(p: f64, epsilon: f64, kappa_decay: f64) -> Result<Self, ProfileError> {
        if !(p > 1.0) {
            return Err(ProfileError::PowerTooSmall(p));
        }
        if !(epsilon > 0.0) {
            return Err(ProfileError::NonPositiveAmplitude(epsilon));
        }
        if !(kappa_decay > 0.0) {
            return Err(ProfileError::NonPositiveDecay(kappa_decay));
        }
        Ok(Self { p, epsilon, lambda: 1.0, kappa_decay })
    }

    /// True when the power sits above the shifted critical exponent and the
    /// data decay is strong enough for the contraction argument.
    pub fn certified_mode(&self) -> bool {
        let p0 = critical_exponent(5).expect("n=5 is valid");
        self.p > p0 && self.kappa_decay >= 2.0 * self.p - 3.0 - 1e-12
    }
}

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Initial data in reduced variables: `φ(r) = r·f̃₀(r)`, `ψ(r) = r·f̃₁(r)`.
///
/// The amplitude ε is *not* baked in; solvers scale the data themselves.
#[derive(Clone)]
pub struct InitialData {
    phi: RadialFn,
    phi_prime: RadialFn,
    psi: RadialFn,
    c0: f64,
    kappa: f64,
    support: Option<f64>,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialData")
            .field("c0", &self.c0)
            .field("kappa", &self.kappa)
            .field("support", &self.support)
            .finish()
    }
}

/// C^∞ bump: `exp(1 − 1/(1 − x²))` on (−1, 1), zero outside.
pub fn smooth_bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

impl InitialData {
    pub fn zero() -> Self {
        Self {
            phi: Arc::new(|_| 0.0),
            phi_prime: Arc::new(|_| 0.0),
            psi: Arc::new(|_| 0.0),
            c0: 0.0,
            kappa: 1.0,
            support: Some(0.0),
        }
    }

    /// Existence-mode data with algebraic decay rate `kappa`:
    /// `f̃₀ = ⟨r⟩^(−κ−2)`, `f̃₁ = ⟨r⟩^(−κ−3)`.
    pub fn decaying(kappa: f64) -> Result<Self, ProfileError> {
        if !(kappa > 0.0) {
            return Err(ProfileError::NonPositiveDecay(kappa));
        }
        let phi = move |r: f64| r * jbracket(r).powf(-kappa - 2.0);
        let phi_prime = move |r: f64| {
            let br = jbracket(r);
            br.powf(-kappa - 2.0) - (kappa + 2.0) * r * r * br.powf(-kappa - 4.0)
        };
        let psi = move |r: f64| r * jbracket(r).powf(-kappa - 3.0);
        Ok(Self {
            phi: Arc::new(phi),
            phi_prime: Arc::new(phi_prime),
            psi: Arc::new(psi),
            c0: kappa + 2.0,
            kappa,
            support: None,
        })
    }

    /// Blow-up-mode data: `φ ≡ 0` and `ψ(r) = height·r·bump(r/radius)`,
    /// positive on `(0, radius)` and zero beyond.
    pub fn bump(height: f64, radius: f64) -> Result<Self, ProfileError> {
        if !(height > 0.0) {
            return Err(ProfileError::NonPositiveAmplitude(height));
        }
        if !(radius > 0.0) {
            return Err(ProfileError::NonPositiveDecay(radius));
        }
        let psi = move |r: f64| height * r * smooth_bump(r / radius);
        Ok(Self {
            phi: Arc::new(|_| 0.0),
            phi_prime: Arc::new(|_| 0.0),
            psi: Arc::new(psi),
            c0: height * radius.max(1.0),
            kappa: 1.0,
            support: Some(radius),
        })
    }

    /// Fully custom data; callers supply `φ`, `φ′`, `ψ`, the envelope
    /// constant, the decay rate, and the support radius if compact.
    pub fn custom(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c0: f64,
        kappa: f64,
        support: Option<f64>,
    ) -> Self {
        Self {
            phi: Arc::new(phi),
            phi_prime: Arc::new(phi_prime),
            psi: Arc::new(psi),
            c0,
            kappa,
            support,
        }
    }

    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        (self.phi)(r)
    }

    #[inline]
    pub fn phi_prime(&self, r: f64) -> f64 {
        (self.phi_prime)(r)
    }

    #[inline]
    pub fn psi(&self, r: f64) -> f64 {
        (self.psi)(r)
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn support(&self) -> Option<f64> {
        self.support
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature, used as the independent oracle for the
    /// closed-form antiderivative.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
            }
        }
        if a == b {
            return 0.0;
        }
        rec(f, a, b, simpson(f, a, b), tol, 40)
    }

    #[test]
    fn big_w_examples() {
        let prof = DampingProfile::capped(1.0).unwrap();
        assert_eq!(prof.big_w(0.0), 0.0);
        assert!((prof.big_w(1.0) - 1.5).abs() < 1e-15);
        assert!((prof.big_w(2.0) - (1.5 + 2.0_f64.ln())).abs() < 1e-15);
        assert!((prof.big_w(0.5) - 0.875).abs() < 1e-15);
    }

    #[test]
    fn big_w_matches_quadrature_oracle() {
        for r0 in [0.5, 1.0, 2.5] {
            let prof = DampingProfile::capped(r0).unwrap();
            for r in [0.1, 0.5, r0, 1.7 * r0, 10.0 * r0] {
                let oracle = adaptive_simpson(&|x| prof.w(x), 0.0, r, 1e-13);
                assert!(
                    (prof.big_w(r) - oracle).abs() < 1e-10 * (1.0 + oracle.abs()),
                    "W({r}) mismatch for r0={r0}: closed={} oracle={}",
                    prof.big_w(r),
                    oracle
                );
            }
        }
    }

    #[test]
    fn potential_examples() {
        let prof = DampingProfile::capped(1.0).unwrap();
        assert!((prof.potential(2.0) - 0.5).abs() < 1e-15);
        assert!((prof.potential(0.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn potential_matches_finite_difference_of_w() {
        // V = −w′ + w² with w′ taken by central differences away from r0.
        let prof = DampingProfile::capped(1.0).unwrap();
        let h = 1e-6;
        for r in [0.2, 0.7, 1.5, 3.0, 20.0] {
            let wp = (prof.w(r + h) - prof.w(r - h)) / (2.0 * h);
            let v = -wp + prof.w(r) * prof.w(r);
            assert!(
                (prof.potential(r) - v).abs() < 1e-6,
                "V({r}): closed={} fd={}",
                prof.potential(r),
                v
            );
        }
    }

    #[test]
    fn w_positive_nonincreasing_on_log_grid() {
        let prof = DampingProfile::capped(1.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let r = 10f64.powf(-3.0 + 6.0 * k as f64 / 199.0);
            let w = prof.w(r);
            assert!(w > 0.0);
            assert!(w <= prev + 1e-15);
            prev = w;
        }
    }

    #[test]
    fn w_c1_at_cap_radius() {
        for r0 in [0.5, 1.0, 3.0] {
            let prof = DampingProfile::capped(r0).unwrap();
            let h = 1e-6 * r0;
            assert!((prof.w(r0 - 1e-12) - prof.w(r0 + 1e-12)).abs() < 1e-10);
            let left = (prof.w(r0) - prof.w(r0 - h)) / h;
            let right = (prof.w(r0 + h) - prof.w(r0)) / h;
            assert!(
                ((left - right) / left.abs()).abs() < 1e-4,
                "one-sided slopes at r0={r0}: {left} vs {right}"
            );
        }
    }

    #[test]
    fn big_w_strictly_increasing_and_log_tail() {
        let prof = DampingProfile::capped(1.0).unwrap();
        let mut prev = -1.0;
        for k in 0..100 {
            let r = 0.05 * (k + 1) as f64;
            let w = prof.big_w(r);
            assert!(w > prev);
            prev = w;
        }
        for r in [1.0, 2.0, 7.0, 100.0] {
            assert!((prof.big_w(r) - (prof.big_w(1.0) + r.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_nonnegative_everywhere_sampled() {
        for r0 in [0.3, 1.0, 4.0] {
            let prof = DampingProfile::capped(r0).unwrap();
            for k in 0..500 {
                let r = 10f64.powf(-3.0 + 6.0 * k as f64 / 499.0);
                assert!(prof.potential(r) >= 0.0);
            }
        }
    }

    #[test]
    fn exp_w_comparable_to_bracket() {
        // e^(W(r)) = e^(W(r0)) r/r0 beyond the cap, so e^W/⟨r⟩ stays in a
        // positive bounded band over the whole axis.
        let prof = DampingProfile::capped(1.0).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for k in 0..2000 {
            let r = 10f64.powf(-4.0 + 8.0 * k as f64 / 1999.0);
            let ratio = prof.big_w(r).exp() / jbracket(r);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        assert!(lo > 0.0 && hi.is_finite() && lo <= hi);
        // Empirical band for r0 = 1 (exact limits are 1 at r→0 and e^1.5 at r→∞).
        assert!(lo >= 0.99 && hi <= 1.5_f64.exp() * 1.01, "band [{lo}, {hi}]");
    }

    #[test]
    fn exp_w_exact_linear_growth_beyond_cap() {
        let prof = DampingProfile::capped(2.0).unwrap();
        let base = prof.big_w(2.0).exp();
        for r in [2.0, 3.0, 11.0, 250.0] {
            let expected = base * (r / 2.0);
            assert!((prof.big_w(r).exp() - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn critical_exponent_examples() {
        let p5 = critical_exponent(5).unwrap();
        assert!((p5 - (3.0 + 17f64.sqrt()) / 4.0).abs() < 1e-15);
        assert!((p5 - 1.7807764).abs() < 1e-7);
        let p3 = critical_exponent(3).unwrap();
        assert!((p3 - (1.0 + 2f64.sqrt())).abs() < 1e-14);
        let p2 = critical_exponent(2).unwrap();
        assert!((p2 - (3.0 + 17f64.sqrt()) / 2.0).abs() < 1e-14);
        assert_eq!(critical_exponent(1), Err(ProfileError::DimensionTooSmall(1)));
    }

    #[test]
    fn critical_exponent_solves_quadratic() {
        for n in 2..=12u32 {
            let p = critical_exponent(n).unwrap();
            let nf = n as f64;
            let residual = p * ((nf - 1.0) / 2.0 * p - (nf + 1.0) / 2.0) - 1.0;
            assert!(residual.abs() < 1e-12, "n={n}: residual {residual}");
        }
    }

    #[test]
    fn jbracket_values() {
        assert_eq!(jbracket(0.0), 1.0);
        assert!((jbracket(1.0) - 2f64.sqrt()).abs() < 1e-15);
        assert!((jbracket(-3.0) - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(jbracket(-2.0), jbracket(2.0));
    }

    #[test]
    fn capped_rejects_bad_radius() {
        assert!(DampingProfile::capped(0.0).is_err());
        assert!(DampingProfile::capped(-1.0).is_err());
        assert!(DampingProfile::capped(f64::NAN).is_err());
    }

    #[test]
    fn unreduce_examples() {
        let lin = RadialField::from_fn(0.25, 0.25, 2.0, 4.0, |_, r| r);
        assert!((unreduce(&lin, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((unreduce(&lin, 0.7, 0.0).unwrap() - 1.0).abs() < 1e-14);

        let decay = RadialField::from_fn(0.25, 0.25, 2.0, 4.0, |t, r| r * (-t).exp());
        assert!((unreduce(&decay, 0.0, 1.5).unwrap() - 1.0).abs() < 1e-14);

        let sq = RadialField::from_fn(0.25, 0.25, 2.0, 4.0, |_, r| r * r);
        assert!((unreduce(&sq, 1.0, 2.0).unwrap() - 2.0).abs() < 1e-14);

        assert!(unreduce(&lin, 1.0, 5.0).is_err());
        assert!(unreduce(&lin, 3.0, 1.0).is_err());
    }

    #[test]
    fn decaying_data_satisfies_envelopes() {
        let data = InitialData::decaying(1.4).unwrap();
        let c0 = data.c0();
        for k in 0..300 {
            let r = 0.1 * k as f64;
            let br = jbracket(r).powf(-1.4 - 2.0);
            assert!(data.phi(r).abs() <= c0 * r * br + 1e-15);
            assert!(data.phi_prime(r).abs() + data.psi(r).abs() <= c0 * br + 1e-15);
        }
    }

    #[test]
    fn decaying_phi_prime_matches_difference_quotient() {
        let data = InitialData::decaying(2.0).unwrap();
        let h = 1e-6;
        for r in [0.0, 0.3, 1.0, 4.0, 9.5] {
            let fd = (data.phi(r + h) - data.phi((r - h).max(0.0))) / (if r == 0.0 { h } else { 2.0 * h });
            assert!(
                (data.phi_prime(r) - fd).abs() < 1e-5,
                "phi'({r}): {} vs fd {}",
                data.phi_prime(r),
                fd
            );
        }
    }

    #[test]
    fn bump_data_positive_inside_zero_outside() {
        let data = InitialData::bump(2.0, 1.0).unwrap();
        for k in 1..40 {
            let r = k as f64 / 41.0;
            assert!(data.psi(r) > 0.0, "psi({r}) should be positive");
        }
        for r in [1.0, 1.5, 10.0] {
            assert_eq!(data.psi(r), 0.0);
        }
        assert_eq!(data.phi(0.5), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(2.2, 0.01, 1.4).is_ok());
        assert!(ProblemParams::new(1.0, 0.01, 1.4).is_err());
        assert!(ProblemParams::new(2.0, 0.0, 1.4).is_err());
        assert!(ProblemParams::new(2.0, 0.1, 0.0).is_err());
        let p = ProblemParams::new(2.2, 0.01, 1.4).unwrap();
        assert_eq!(p.lambda, 1.0);
        assert!(p.certified_mode());
        assert!(!ProblemParams::new(1.5, 0.5, 1.0).unwrap().certified_mode());
    }
}
