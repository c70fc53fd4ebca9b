use twinwave::*;
fn main() {
    let cfg = SystemConfig::default_demo().validate().unwrap();
    let mesh = build_mesh(&cfg, 0.02).unwrap();
    let gen = GeneratorOperator::assemble(&cfg, &mesh).unwrap();
    let band = valid_band(&gen);
    let (lambda, u0) = least_damped_mode_state(&gen, band.1).unwrap();
    println!("modal lambda = {lambda}, E0 = {}", energy(gen.mats(), &u0).unwrap());
    let t0 = std::time::Instant::now();
    let trace = simulate(&gen, &u0, 0.01, 200.0, SampleSchedule::EveryK(5)).unwrap();
    println!("sim {:?}; E {:.3e} -> {:.3e}", t0.elapsed(), trace.energies[0], trace.energies.last().unwrap());
    println!("classify: {:?}", classify_decay(&trace));
    if let Some(w) = tail_window(&trace) {
        let f = fit_exponential(&trace, w).unwrap();
        println!("exp fit: rate {:.6}, 2|Re lambda| = {:.6}, R2 {:.6}", f.rate, 2.0 * lambda.re.abs(), f.r_squared);
    }
}
