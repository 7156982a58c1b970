//! Characteristic kernels and quadrature over the backward influence region.
//!
//! The region Δ₋(t, r) = {(σ, y) : |t−r| < σ+y < t+r, σ−y < t−r, σ, y > 0}
//! is a polygon in the characteristic coordinates α = σ+y, β = σ−y, which
//! is where the quadrature lives: no cells are cut by the boundary, and the
//! Jacobian of (α, β) ↦ (σ, y) is 1/2.

use thiserror::Error;

use crate::profile::{jbracket, DampingProfile};
use crate::quad::{pairwise_sum, GAUSS4_NODES, GAUSS4_WEIGHTS};

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel evaluated outside its validity region: y={y} < t-r={tr}")]
    BelowLightCone { y: f64, tr: f64 },
    #[error("cone apex must have t, r > 0, got (t={t}, r={r})")]
    BadApex { t: f64, r: f64 },
    #[error("integrand returned a non-finite value at (sigma={sigma}, y={y})")]
    NonFiniteSample { sigma: f64, y: f64 },
    #[error("quadrature resolution must be at least 1")]
    ZeroResolution,
}

/// Backward influence region Δ₋(t, r) at apex `(t, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeDomain {
    t: f64,
    r: f64,
}

impl ConeDomain {
    pub fn new(t: f64, r: f64) -> Result<Self, KernelError> {
        if !(t > 0.0) || !(r > 0.0) {
            return Err(KernelError::BadApex { t, r });
        }
        Ok(Self { t, r })
    }

    pub fn apex(&self) -> (f64, f64) {
        (self.t, self.r)
    }

    /// Range of α = σ + y: the open interval (|t−r|, t+r).
    pub fn alpha_range(&self) -> (f64, f64) {
        ((self.t - self.r).abs(), self.t + self.r)
    }

    /// Range of β = σ − y at fixed α: the open interval (−α, min(t−r, α)).
    pub fn beta_range(&self, alpha: f64) -> (f64, f64) {
        (-alpha, (self.t - self.r).min(alpha))
    }

    /// Strict membership test for (σ, y).
    pub fn contains(&self, sigma: f64, y: f64) -> bool {
        in_delta_minus(self.t, self.r, sigma, y)
    }
}

/// Characteristic kernel
/// `E₋(t, r, y) = exp(−W(r)) exp(2W((y−t+r)/2)) exp(−W(y))`,
/// valid for `y ≥ t − r`; strictly positive there.
pub fn e_minus(profile: &DampingProfile, t: f64, r: f64, y: f64) -> Result<f64, KernelError> {
    if y < t - r {
        return Err(KernelError::BelowLightCone { y, tr: t - r });
    }
    Ok(e_minus_raw(profile, t, r, y))
}

/// Unchecked kernel evaluation; callers must guarantee `y ≥ t − r`.
#[inline]
pub(crate) fn e_minus_raw(profile: &DampingProfile, t: f64, r: f64, y: f64) -> f64 {
    let z = 0.5 * (y - t + r);
    (-profile.big_w(r) + 2.0 * profile.big_w(z.max(0.0)) - profile.big_w(y)).exp()
}

/// Bracket comparison kernel `Ẽ₋(t, r, y) = ⟨r−t+y⟩² / (⟨r⟩⟨y⟩)`.
pub fn e_tilde(t: f64, r: f64, y: f64) -> Result<f64, KernelError> {
    if y < t - r {
        return Err(KernelError::BelowLightCone { y, tr: t - r });
    }
    Ok(e_tilde_raw(t, r, y))
}

#[inline]
pub(crate) fn e_tilde_raw(t: f64, r: f64, y: f64) -> f64 {
    let b = jbracket(r - t + y);
    b * b / (jbracket(r) * jbracket(y))
}

/// Strict membership in Δ₋(t, r).
#[inline]
pub fn in_delta_minus(t: f64, r: f64, sigma: f64, y: f64) -> bool {
    sigma > 0.0
        && y > 0.0
        && sigma + y > (t - r).abs()
        && sigma + y < t + r
        && sigma - y < t - r
}

/// Composite Gauss quadrature of `integrand(σ, y)` over Δ₋(t, r).
///
/// `resolution` is the cell count per characteristic direction. Gauss nodes
/// are interior, so the integrand is never sampled on the boundary (in
/// particular never at y = 0). Cell sums are combined pairwise in a fixed
/// order, so the value is bit-stable regardless of threading.
pub fn quad_over_delta_minus<F>(
    t: f64,
    r: f64,
    resolution: usize,
    integrand: F,
) -> Result<f64, KernelError>
where
    F: Fn(f64, f64) -> f64,
{
    quad_over_delta_minus_split(t, r, resolution, &[], None, integrand)
}

/// Same rule with the domain split along known non-smooth lines of the
/// integrand: constant-α breaks and, per α, an optional break in β. The
/// transport layer uses this to keep full order across the cap-radius
/// kinks of the kernel (which sit on α = t−r+2r0 and β = α−2r0).
pub(crate) fn quad_over_delta_minus_split<F>(
    t: f64,
    r: f64,
    resolution: usize,
    alpha_breaks: &[f64],
    beta_break_shift: Option<f64>,
    integrand: F,
) -> Result<f64, KernelError>
where
    F: Fn(f64, f64) -> f64,
{
    if resolution == 0 {
        return Err(KernelError::ZeroResolution);
    }
    let domain = ConeDomain::new(t, r)?;
    let (a_lo, a_hi) = domain.alpha_range();
    if !(a_hi > a_lo) {
        return Ok(0.0);
    }
    let mut a_cuts: Vec<f64> =
        alpha_breaks.iter().copied().filter(|&x| x > a_lo && x < a_hi).collect();
    a_cuts.sort_by(f64::total_cmp);
    a_cuts.dedup();
    let mut a_pieces = Vec::with_capacity(a_cuts.len() + 1);
    let mut lo = a_lo;
    for c in a_cuts {
        a_pieces.push((lo, c));
        lo = c;
    }
    a_pieces.push((lo, a_hi));

    // Cells per α-piece proportional to its share of the range.
    let mut piece_sums = Vec::new();
    for &(p_lo, p_hi) in &a_pieces {
        let frac = (p_hi - p_lo) / (a_hi - a_lo);
        let cells = ((resolution as f64 * frac).ceil() as usize).max(2);
        let da = (p_hi - p_lo) / cells as f64;
        for ca in 0..cells {
            let a_mid = p_lo + (ca as f64 + 0.5) * da;
            let a_half = 0.5 * da;
            let mut cell = 0.0;
            for (an, aw) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
                let alpha = a_mid + a_half * an;
                let (b_lo, b_hi) = domain.beta_range(alpha);
                if !(b_hi > b_lo) {
                    continue;
                }
                let b_cut = beta_break_shift
                    .map(|s| alpha - s)
                    .filter(|&b| b > b_lo && b < b_hi);
                let b_pieces: [(f64, f64); 2] = match b_cut {
                    Some(b) => [(b_lo, b), (b, b_hi)],
                    None => [(b_lo, b_hi), (b_hi, b_hi)],
                };
                let mut along_alpha = 0.0;
                for &(q_lo, q_hi) in &b_pieces {
                    if !(q_hi > q_lo) {
                        continue;
                    }
                    let db = (q_hi - q_lo) / resolution as f64;
                    let mut line = 0.0;
                    for cb in 0..resolution {
                        let b_mid = q_lo + (cb as f64 + 0.5) * db;
                        let b_half = 0.5 * db;
                        for (bn, bw) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
                            let beta = b_mid + b_half * bn;
                            let sigma = 0.5 * (alpha + beta);
                            let y = 0.5 * (alpha - beta);
                            let v = integrand(sigma, y);
                            if !v.is_finite() {
                                return Err(KernelError::NonFiniteSample { sigma, y });
                            }
                            line += bw * v;
                        }
                    }
                    // all β-cells of a piece share one width
                    along_alpha += line * (0.5 * db);
                }
                cell += aw * along_alpha;
            }
            piece_sums.push(cell * a_half);
        }
    }
    // Jacobian dσ dy = ½ dα dβ.
    Ok(0.5 * pairwise_sum(&piece_sums))
}
