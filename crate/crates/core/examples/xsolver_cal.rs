// Scratch: cross-solver discrepancy calibration at several grid steps.
use dampedwave::fdm::{fdm_solve, FdmConfig};
use dampedwave::profile::smooth_bump;
use dampedwave::transport::homogeneous_u0;
use dampedwave::{DampingProfile, InitialData, ProblemParams};
use rayon::prelude::*;

fn data(width: f64) -> InitialData {
    let c = width;
    let f0 = move |r: f64| smooth_bump((r - c) / c);
    let f0p = move |r: f64| {
        let x = (r - c) / c;
        if x.abs() < 1.0 {
            let den = 1.0 - x * x;
            smooth_bump(x) * (-2.0 * x / (den * den)) / c
        } else {
            0.0
        }
    };
    InitialData::custom(
        move |r| r * f0(r),
        move |r| f0(r) + r * f0p(r),
        move |r| 0.5 * r * f0(r),
        4.0,
        2.0,
        Some(2.0 * c),
    )
}

fn main() {
    let prof = DampingProfile::capped(1.0).unwrap();
    let params = ProblemParams::new(2.0, 1.0, 1.0).unwrap();
    for width in [1.0f64] {
        let d = data(width);
        for h in [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
            let start = std::time::Instant::now();
            let cfg = FdmConfig::new(h, 8.0, 4.0, false).with_cfl(0.5);
            let u = fdm_solve(&prof, &params, &d, &cfg).unwrap();
            let t_fdm = start.elapsed();
            let nt = u.nt();
            let nr = u.nr();
            let (sup_ref, sup_diff) = (0..=nt)
                .into_par_iter()
                .map(|i| {
                    let t = u.t_of(i);
                    let mut m_ref = 0.0f64;
                    let mut m_diff = 0.0f64;
                    for j in 1..=nr {
                        let r = u.r_of(j);
                        let v_fdm = u.value(i, j);
                        let v_rep = homogeneous_u0(&prof, &d, t, r);
                        m_ref = m_ref.max(v_fdm.abs());
                        m_diff = m_diff.max((v_fdm - v_rep).abs());
                    }
                    (m_ref, m_diff)
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            println!(
                "width={width} h=1/{:.0}: sup_ref={sup_ref:.6e} sup_diff={sup_diff:.6e} rel={:.6e} [fdm {:?} total {:?}]",
                1.0 / h,
                sup_diff / sup_ref,
                t_fdm,
                start.elapsed()
            );
        }
    }
}
