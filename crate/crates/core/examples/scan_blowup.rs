// Scratch calibration: scan bump heights and epsilons for blow-up times.
use dampedwave::fdm::{fdm_solve_monitored, DtPolicy, FdmConfig};
use dampedwave::{DampingProfile, InitialData, ProblemParams};

fn main() {
    let prof = DampingProfile::capped(1.0).unwrap();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let heights: Vec<f64> = if args.is_empty() {
        vec![1.0, 2.0, 4.0, 8.0, 16.0]
    } else {
        args.iter().map(|s| s.parse().unwrap()).collect()
    };
    let p = 1.5;
    for &h in &heights {
        for &eps in &[1.0, 0.5, 0.25] {
            let data = InitialData::bump(h, 1.0).unwrap();
            let params = ProblemParams::new(p, eps, 1.0).unwrap();
            let horizon = 400.0;
            let dr = 0.05;
            let cfg = FdmConfig::new(dr, 1.0 + horizon + 1.0, horizon, true);
            let policy = DtPolicy::new(0.9 * dr, 1e-9);
            let start = std::time::Instant::now();
            let run = fdm_solve_monitored(&prof, &params, &data, &cfg, policy, &[1e6, 1e7]).unwrap();
            println!(
                "height={h} eps={eps}: reason={:?} t*={:?} t*10={:?} sup_end={:.3e} steps={} [{:.1?}]",
                run.reason,
                run.crossings[0],
                run.crossings[1],
                run.final_sup,
                run.steps,
                start.elapsed()
            );
        }
    }
}
