// Scratch calibration driver for the regime experiments (removed before release).
use std::time::Instant;

use twinwave::*;

fn main() {
    let which: String = std::env::args().nth(1).unwrap_or_else(|| "all".into());

    if which == "point" || which == "all" {
        // cost of a single resolvent point at the acceptance mesh
        let cfg = SystemConfig::default_demo().validate().unwrap();
        let mesh = build_mesh(&cfg, 0.01).unwrap();
        let gen = GeneratorOperator::assemble(&cfg, &mesh).unwrap();
        println!("n = {}, state dim = {}", gen.n(), gen.state_dim());
        for lambda in [1.0, 7.3, 24.0, 49.0] {
            let t0 = Instant::now();
            let p = resolvent_norm(&gen, lambda);
            println!("lambda {lambda}: norm {:.4e} in {:?}", p.norm, t0.elapsed());
        }
    }

    if which == "spectrum" || which == "all" {
        for a2 in [1.0, 2.0] {
            let mut raw = SystemConfig::default_demo();
            raw.a2 = a2;
            let cfg = raw.validate().unwrap();
            let mesh = build_mesh(&cfg, 0.01).unwrap();
            let gen = GeneratorOperator::assemble(&cfg, &mesh).unwrap();
            let t0 = Instant::now();
            let spec = eigenvalues(&gen).unwrap();
            println!(
                "a2={a2}: abscissa {:.6e}, gap {:.6e} ({} eigenvalues, {:?})",
                spec.spectral_abscissa,
                spec.imag_axis_gap,
                spec.eigenvalues.len(),
                t0.elapsed()
            );
        }
    }

    if which == "decay1" || which == "all" {
        let cfg = SystemConfig::default_demo().validate().unwrap();
        let mesh = build_mesh(&cfg, 0.02).unwrap();
        let gen = GeneratorOperator::assemble(&cfg, &mesh).unwrap();
        let u0 = project_initial_data(&mesh, &InitialProfiles::interface_sine(cfg.l0)).unwrap();
        let t0 = Instant::now();
        let trace = simulate(&gen, &u0, 0.01, 200.0, SampleSchedule::EveryK(5)).unwrap();
        println!(
            "a2=1 sim: {} samples, E0 {:.3e} -> {:.3e}, max residual {:.2e}, {:?}",
            trace.len(),
            trace.energies[0],
            trace.energies.last().unwrap(),
            trace.max_balance_residual(),
            t0.elapsed()
        );
        println!("classify: {:?}", classify_decay(&trace));
    }

    if which == "decay2" || which == "all" {
        let mut raw = SystemConfig::default_demo();
        raw.a2 = 2.0;
        let cfg = raw.validate().unwrap();
        let mesh = build_mesh(&cfg, 0.02).unwrap();
        let gen = GeneratorOperator::assemble(&cfg, &mesh).unwrap();
        let profiles = InitialProfiles::multiscale_velocity(cfg.l, 40, 1.6);
        let u0 = project_initial_data(&mesh, &profiles).unwrap();
        let t0 = Instant::now();
        let trace = simulate(&gen, &u0, 0.01, 2000.0, SampleSchedule::PerDecade(120)).unwrap();
        println!(
            "a2=2 sim: {} samples, E0 {:.3e} -> {:.3e}, graph norm {:.3e}, max residual {:.2e}, {:?}",
            trace.len(),
            trace.energies[0],
            trace.energies.last().unwrap(),
            trace.initial_graph_norm,
            trace.max_balance_residual(),
            t0.elapsed()
        );
        println!("classify: {:?}", classify_decay(&trace));
        if let Some(w) = tail_window(&trace) {
            println!("tail window: [{:.3}, {:.1}]", w.t_start, w.t_end);
            match fit_polynomial(&trace, w) {
                Ok(fit) => {
                    // t*E flatness over the tail
                    let gn2 = trace.initial_graph_norm.powi(2);
                    let te: Vec<f64> = trace
                        .times
                        .iter()
                        .zip(&trace.energies)
                        .filter(|(&t, _)| t >= w.t_start)
                        .map(|(&t, &e)| t * e / gn2)
                        .collect();
                    let max = te.iter().copied().fold(f64::MIN, f64::max);
                    let min = te.iter().copied().fold(f64::MAX, f64::min);
                    println!(
                        "poly fit: slope {:.4}, R2 {:.5}, bound {:.3e}, tE max/min {:.2}",
                        fit.rate,
                        fit.r_squared,
                        fit.poly_bound.unwrap_or(f64::NAN),
                        max / min
                    );
                }
                Err(e) => println!("poly fit failed: {e}"),
            }
            match fit_exponential(&trace, w) {
                Ok(fit) => println!("exp fit: rate {:.4}, R2 {:.5}", fit.rate, fit.r_squared),
                Err(e) => println!("exp fit failed: {e}"),
            }
        }
    }

    if which == "sweep1" || which == "sweep2" || which == "all" {
        for a2 in [1.0, 2.0] {
            if which == "sweep1" && a2 != 1.0 {
                continue;
            }
            if which == "sweep2" && a2 != 2.0 {
                continue;
            }
            let mut raw = SystemConfig::default_demo();
            raw.a2 = a2;
            let cfg = raw.validate().unwrap();
            let mesh = build_mesh(&cfg, 0.01).unwrap();
            let gen = GeneratorOperator::assemble(&cfg, &mesh).unwrap();
            let grid = log_grid(1.0, 50.0, 400);
            let t0 = Instant::now();
            match resolvent_sweep(&gen, &grid) {
                Ok(samples) => {
                    let fit = samples.fit.unwrap();
                    println!(
                        "a2={a2} sweep: exponent {:.3}, R2 {:.4}, {} envelope pts, {:?}",
                        fit.exponent,
                        fit.r_squared,
                        fit.n_envelope,
                        t0.elapsed()
                    );
                }
                Err(e) => println!("a2={a2} sweep failed: {e} ({:?})", t0.elapsed()),
            }
        }
    }
}
