//! Independent finite-difference solver of the reduced radial equation,
//! used to cross-validate the kernel representation and as the
//! time-stepper for blow-up runs.
//!
//! The scheme is an explicit three-level leapfrog, centered in time and
//! space; the damping term couples only the new time level diagonally, so
//! each node update solves a scalar `(1 + wΔt)` factor. The nonlinear
//! source `|u|^p / r^(p−1)` is evaluated as `(|u|/r)^p · r`, which stays
//! finite at the axis because `u(t, 0) = 0`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::profile::{DampingProfile, InitialData, ProblemParams};
use crate::transport::{BlowupFlag, RadialField};

#[derive(Debug, Error)]
pub enum FdmError {
    #[error("CFL ratio must lie in (0, 1], got {0}")]
    BadCfl(f64),
    #[error("grid spacing must be positive, got dr={0}")]
    BadSpacing(f64),
    #[error("domain [0,{t_max}]x(0,{r_max}] cannot contain data support {support} plus horizon")]
    DomainTooSmall { r_max: f64, t_max: f64, support: f64 },
    #[error("time horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("evaluation patch must keep r bounded away from 0 (r_lo={0})")]
    PatchTouchesAxis(f64),
    #[error("step h={h} too coarse for patch of extent {extent}")]
    StepTooCoarse { h: f64, extent: f64 },
}

type SourceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Grid and scheme configuration for [`fdm_solve`].
#[derive(Clone)]
pub struct FdmConfig {
    pub dr: f64,
    /// Δt/Δr ratio in (0, 1].
    pub cfl: f64,
    pub r_max: f64,
    pub t_max: f64,
    pub nonlinear: bool,
    /// Extra manufactured forcing, added to the source term.
    pub forcing: Option<SourceFn>,
    /// Amplitude monitor value that flags the run as blown up.
    pub overflow_limit: f64,
}

impl FdmConfig {
    pub fn new(dr: f64, r_max: f64, t_max: f64, nonlinear: bool) -> Self {
        Self {
            dr,
            cfl: 0.9,
            r_max,
            t_max,
            nonlinear,
            forcing: None,
            overflow_limit: 1e12,
        }
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn with_forcing(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    fn validate(&self, data: &InitialData) -> Result<(), FdmError> {
        if !(self.dr > 0.0) {
            return Err(FdmError::BadSpacing(self.dr));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(FdmError::BadCfl(self.cfl));
        }
        if !(self.t_max > 0.0) {
            return Err(FdmError::BadHorizon(self.t_max));
        }
        if let Some(support) = data.support() {
            if self.r_max < support + self.t_max {
                return Err(FdmError::DomainTooSmall {
                    r_max: self.r_max,
                    t_max: self.t_max,
                    support,
                });
            }
        }
        Ok(())
    }
}

/// One explicit update with possibly unequal steps: `dt_new` ahead of the
/// current level, `dt_old` behind it. Writes the new row into `next`.
#[allow(clippy::too_many_arguments)]
fn step_row(
    profile: &DampingProfile,
    params: &ProblemParams,
    cfg: &FdmConfig,
    t_cur: f64,
    prev: &[f64],
    cur: &[f64],
    next: &mut [f64],
    dt_new: f64,
    dt_old: f64,
) {
    let nr = cur.len() - 1;
    let dr2 = cfg.dr * cfg.dr;
    let a = dt_new;
    let b = dt_old;
    // Second-difference weights for unequal steps; for a = b they reduce to
    // the classical (1, -2, 1)/a².
    let c_plus = 2.0 / (a * (a + b));
    let c_zero = -2.0 / (a * b);
    let c_minus = 2.0 / (b * (a + b));
    let p = params.p;
    let forcing = cfg.forcing.as_deref();

    next[0] = 0.0;
    next[nr] = 0.0;
    let body = &mut next[1..nr];
    body.par_iter_mut().enumerate().for_each(|(k, out)| {
        let j = k + 1;
        let r = j as f64 * cfg.dr;
        let w = profile.w(r);
        let v = profile.potential(r);
        let lap = (cur[j + 1] - 2.0 * cur[j] + cur[j - 1]) / dr2;
        let mut source = 0.0;
        if cfg.nonlinear {
            source += params.lambda * (cur[j].abs() / r).powf(p) * r;
        }
        if let Some(f) = forcing {
            source += f(t_cur, r);
        }
        let rhs = -c_zero * cur[j] - c_minus * prev[j] + 2.0 * w * prev[j] / (a + b) + lap
            - v * cur[j]
            + source;
        *out = rhs / (c_plus + 2.0 * w / (a + b));
    });
}

/// Seeds the first time level by Taylor expansion of the equation:
/// `u¹ = εφ + Δt·εψ + Δt²/2 (D²(εφ) − 2w·εψ − V·εφ + S(0))`.
fn first_level(
    profile: &DampingProfile,
    params: &ProblemParams,
    data: &InitialData,
    cfg: &FdmConfig,
    level0: &[f64],
    dt: f64,
) -> Vec<f64> {
    let nr = level0.len() - 1;
    let dr2 = cfg.dr * cfg.dr;
    let eps = params.epsilon;
    let mut out = vec![0.0; nr + 1];
    for j in 1..nr {
        let r = j as f64 * cfg.dr;
        let w = profile.w(r);
        let v = profile.potential(r);
        let psi = eps * data.psi(r);
        let lap = (level0[j + 1] - 2.0 * level0[j] + level0[j - 1]) / dr2;
        let mut source = 0.0;
        if cfg.nonlinear {
            source += params.lambda * (level0[j].abs() / r).powf(params.p) * r;
        }
        if let Some(f) = cfg.forcing.as_deref() {
            source += f(0.0, r);
        }
        let utt = lap - 2.0 * w * psi - v * level0[j] + source;
        out[j] = level0[j] + dt * psi + 0.5 * dt * dt * utt;
    }
    out
}

fn monitor_sup_amplitude(row: &[f64], dr: f64) -> f64 {
    let mut m = 0.0f64;
    for (j, &u) in row.iter().enumerate().skip(1) {
        m = m.max(u.abs() / (j as f64 * dr));
    }
    m
}

/// Solves the reduced radial problem on a uniform grid, storing the whole
/// history. If the amplitude monitor overflows, the field is flagged with
/// the first-overflow time and later rows stay zero.
pub fn fdm_solve(
    profile: &DampingProfile,
    params: &ProblemParams,
    data: &InitialData,
    cfg: &FdmConfig,
) -> Result<RadialField, FdmError> {
    cfg.validate(data)?;
    let dt = cfg.cfl * cfg.dr;
    let mut field = RadialField::zeros(dt, cfg.dr, cfg.t_max, cfg.r_max);
    let nt = field.nt();
    let nr = field.nr();

    let eps = params.epsilon;
    let mut level0 = vec![0.0; nr + 1];
    for (j, slot) in level0.iter_mut().enumerate().skip(1).take(nr - 1) {
        *slot = eps * data.phi(j as f64 * cfg.dr);
    }
    field.row_mut(0).copy_from_slice(&level0);
    if nt == 0 {
        return Ok(field);
    }
    let level1 = first_level(profile, params, data, cfg, &level0, dt);
    field.row_mut(1).copy_from_slice(&level1);

    let mut prev = level0;
    let mut cur = level1;
    let mut next = vec![0.0; nr + 1];
    for i in 1..nt {
        let t_cur = i as f64 * dt;
        step_row(profile, params, cfg, t_cur, &prev, &cur, &mut next, dt, dt);
        let m = monitor_sup_amplitude(&next, cfg.dr);
        if !m.is_finite() || m > cfg.overflow_limit {
            field.mark_blowup(BlowupFlag { time: t_cur + dt, sup: m });
            return Ok(field);
        }
        field.row_mut(i + 1).copy_from_slice(&next);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(field)
}

/// Time-step policy for blow-up chasing: halve Δt each time the amplitude
/// monitor doubles, down to a floor.
///
/// Halving engages only inside the final `doublings_before_threshold`
/// amplitude doublings below the smallest detection threshold; the smooth
/// transient far below the threshold runs at the full step. Power-law
/// blow-ups then cost only a few thousand extra steps while the crossing
/// time is resolved to a fraction of a percent.
#[derive(Debug, Clone, Copy)]
pub struct DtPolicy {
    pub dt0: f64,
    pub floor: f64,
    pub shrink_trigger: f64,
    pub doublings_before_threshold: u32,
}

impl DtPolicy {
    pub fn new(dt0: f64, floor: f64) -> Self {
        Self { dt0, floor, shrink_trigger: 2.0, doublings_before_threshold: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// All requested thresholds were crossed.
    Threshold,
    /// The horizon was reached with the monitor below the first threshold.
    Horizon,
    /// The step floor was hit before the monitor crossed everything.
    StepCollapse,
}

/// Outcome of a monitored adaptive run.
#[derive(Debug, Clone)]
pub struct MonitoredRun {
    /// First crossing time per requested threshold, in input order.
    pub crossings: Vec<Option<f64>>,
    pub reason: Termination,
    pub end_time: f64,
    pub final_dt: f64,
    pub final_sup: f64,
    pub steps: usize,
}

/// Runs the solver keeping only three time levels, shrinking Δt near
/// blow-up per `policy`, and recording first-crossing times of the
/// amplitude monitor `sup_r |u|/r` for each threshold.
pub fn fdm_solve_monitored(
    profile: &DampingProfile,
    params: &ProblemParams,
    data: &InitialData,
    cfg: &FdmConfig,
    policy: DtPolicy,
    thresholds: &[f64],
) -> Result<MonitoredRun, FdmError> {
    cfg.validate(data)?;
    if !(policy.dt0 > 0.0) || !(policy.dt0 <= cfg.cfl * cfg.dr) {
        return Err(FdmError::BadCfl(policy.dt0 / cfg.dr));
    }
    let nr = (cfg.r_max / cfg.dr).round() as usize;
    let eps = params.epsilon;

    let mut prev = vec![0.0; nr + 1];
    for (j, slot) in prev.iter_mut().enumerate().skip(1).take(nr - 1) {
        *slot = eps * data.phi(j as f64 * cfg.dr);
    }
    let mut dt = policy.dt0;
    let mut cur = first_level(profile, params, data, cfg, &prev, dt);
    let mut t = dt;
    let mut dt_old = dt;
    let mut next = vec![0.0; nr + 1];

    let mut crossings: Vec<Option<f64>> = vec![None; thresholds.len()];
    let mut monitor = monitor_sup_amplitude(&cur, cfg.dr);
    let min_threshold = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let engage_scale = if min_threshold.is_finite() {
        min_threshold / 2f64.powi(policy.doublings_before_threshold as i32)
    } else {
        f64::INFINITY
    };
    let mut monitor_ref = monitor.max(engage_scale).max(1e-300);
    let mut steps = 0usize;

    let record = |crossings: &mut Vec<Option<f64>>, m: f64, time: f64| {
        for (slot, &thr) in crossings.iter_mut().zip(thresholds) {
            if slot.is_none() && m >= thr {
                *slot = Some(time);
            }
        }
    };
    record(&mut crossings, monitor, t);

    while t < cfg.t_max {
        // Shrink the step when the monitor has doubled since the last shrink.
        while monitor >= policy.shrink_trigger * monitor_ref {
            if dt * 0.5 < policy.floor {
                return Ok(MonitoredRun {
                    crossings,
                    reason: Termination::StepCollapse,
                    end_time: t,
                    final_dt: dt,
                    final_sup: monitor,
                    steps,
                });
            }
            dt *= 0.5;
            monitor_ref *= policy.shrink_trigger;
        }
        step_row(profile, params, cfg, t, &prev, &cur, &mut next, dt, dt_old);
        t += dt;
        steps += 1;
        monitor = monitor_sup_amplitude(&next, cfg.dr);
        if !monitor.is_finite() {
            // The jump past every threshold happened within one step.
            record(&mut crossings, f64::INFINITY, t);
            return Ok(MonitoredRun {
                crossings,
                reason: Termination::Threshold,
                end_time: t,
                final_dt: dt,
                final_sup: f64::INFINITY,
                steps,
            });
        }
        record(&mut crossings, monitor, t);
        if crossings.iter().all(|c| c.is_some()) {
            return Ok(MonitoredRun {
                crossings,
                reason: Termination::Threshold,
                end_time: t,
                final_dt: dt,
                final_sup: monitor,
                steps,
            });
        }
        dt_old = dt;
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(MonitoredRun {
        crossings,
        reason: Termination::Horizon,
        end_time: t,
        final_dt: dt,
        final_sup: monitor,
        steps,
    })
}

/// Rectangular evaluation patch for the factorization check.
#[derive(Debug, Clone, Copy)]
pub struct Patch {
    pub t_lo: f64,
    pub t_hi: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

/// Measures `sup |(P₋P₊u)_h − (∂t² + 2w∂t − ∂r² + V)u_h|` over the patch
/// with centered differences at step `h`. Both sides discretize the same
/// operator, so the gap must shrink at second order as `h` halves.
pub fn factorization_residual(
    profile: &DampingProfile,
    u: impl Fn(f64, f64) -> f64,
    patch: Patch,
    h: f64,
) -> Result<f64, FdmError> {
    if patch.r_lo <= 0.0 {
        return Err(FdmError::PatchTouchesAxis(patch.r_lo));
    }
    let extent = (patch.t_hi - patch.t_lo).min(patch.r_hi - patch.r_lo);
    if !(h > 0.0) || extent < 6.0 * h {
        return Err(FdmError::StepTooCoarse { h, extent });
    }
    // P₊ with centered differences.
    let p_plus = |t: f64, r: f64| {
        (u(t + h, r) - u(t - h, r)) / (2.0 * h) + (u(t, r + h) - u(t, r - h)) / (2.0 * h)
            + profile.w(r) * u(t, r)
    };
    let nested = |t: f64, r: f64| {
        (p_plus(t + h, r) - p_plus(t - h, r)) / (2.0 * h)
            - (p_plus(t, r + h) - p_plus(t, r - h)) / (2.0 * h)
            + profile.w(r) * p_plus(t, r)
    };
    let direct = |t: f64, r: f64| {
        (u(t + h, r) - 2.0 * u(t, r) + u(t - h, r)) / (h * h)
            + 2.0 * profile.w(r) * (u(t + h, r) - u(t - h, r)) / (2.0 * h)
            - (u(t, r + h) - 2.0 * u(t, r) + u(t, r - h)) / (h * h)
            + profile.potential(r) * u(t, r)
    };
    // Keep the nested 2h-stencil inside the patch.
    let nt = (((patch.t_hi - patch.t_lo) / h).floor() as usize).saturating_sub(4);
    let nr = (((patch.r_hi - patch.r_lo) / h).floor() as usize).saturating_sub(4);
    let mut sup = 0.0f64;
    for i in 0..=nt {
        let t = patch.t_lo + (i + 2) as f64 * h;
        for j in 0..=nr {
            let r = patch.r_lo + (j + 2) as f64 * h;
            sup = sup.max((nested(t, r) - direct(t, r)).abs());
        }
    }
    Ok(sup)
}

/// Dumps every `stride`-th time level as CSV rows `t, r, u`.
pub fn snapshot_csv(field: &RadialField, stride: usize, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "t,r,u")?;
    let stride = stride.max(1);
    for i in (0..=field.nt()).step_by(stride) {
        for j in 0..=field.nr() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                field.t_of(i),
                field.r_of(j),
                field.value(i, j)
            )?;
        }
    }
    Ok(())
}
