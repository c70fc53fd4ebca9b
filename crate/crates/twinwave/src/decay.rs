//! Decay-law fitting and regime classification of energy traces.
//!
//! Exponential fits regress `log E` on `t`; polynomial fits regress `log E`
//! on `log t`. Classification compares both fits on the tail window (the
//! last 60% of the trace in log-time, where initial transients have died
//! out) and declares the better model only with a clear goodness margin.

use thiserror::Error;

use crate::spectrum::resolvent::least_squares;
use crate::timestep::EnergyTrace;

/// Energies below this are dropped from fits (floating-point floor).
pub const ENERGY_FLOOR: f64 = 1e-300;

const MIN_EXP_SAMPLES: usize = 20;
const MIN_POLY_SAMPLES: usize = 8;
const POLY_MIN_DECADES: f64 = 2.0;
const R2_ACCEPT: f64 = 0.98;
const R2_MARGIN: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecayError {
    #[error("fit window unusable: {detail}")]
    WindowTooSmall { detail: String },

    #[error("only {usable} samples above the energy floor; need {needed}")]
    EnergyUnderflow { usable: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    Exponential,
    Polynomial,
}

/// A fitted decay law.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Exponential: decay rate (positive means decay). Polynomial: slope of
    /// `log E` vs `log t` (negative means decay).
    pub rate: f64,
    pub r_squared: f64,
    pub window: FitWindow,
    /// Polynomial fits report `sup t E(t) / |U0|_{D(A)}^2` over the window.
    pub poly_bound: Option<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecayClass {
    Exponential { rate: f64, r_squared: f64 },
    Polynomial { slope: f64, r_squared: f64 },
    Inconclusive { reason: String },
}

fn window_samples<'a>(trace: &'a EnergyTrace, window: &FitWindow) -> Vec<(f64, f64)> {
    trace
        .times
        .iter()
        .zip(&trace.energies)
        .filter(|(&t, _)| t >= window.t_start && t <= window.t_end)
        .map(|(&t, &e)| (t, e))
        .collect()
}

/// Least-squares exponential fit `E ~ exp(-rate t)` on the window.
pub fn fit_exponential(trace: &EnergyTrace, window: FitWindow) -> Result<DecayFit, DecayError> {
    let samples = window_samples(trace, &window);
    if samples.len() < MIN_EXP_SAMPLES {
        return Err(DecayError::WindowTooSmall {
            detail: format!("{} samples in window; need {MIN_EXP_SAMPLES}", samples.len()),
        });
    }
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, e)| *e > ENERGY_FLOOR)
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if usable.len() < MIN_EXP_SAMPLES {
        return Err(DecayError::EnergyUnderflow { usable: usable.len(), needed: MIN_EXP_SAMPLES });
    }
    let (slope, _, r_squared) = least_squares(&usable);
    Ok(DecayFit {
        model: DecayModel::Exponential,
        rate: -slope,
        r_squared,
        window,
        poly_bound: None,
        n_samples: usable.len(),
    })
}

/// Least-squares power-law fit `E ~ t^slope` on the window, which must span
/// at least two decades of time.
pub fn fit_polynomial(trace: &EnergyTrace, window: FitWindow) -> Result<DecayFit, DecayError> {
    if !(window.t_start > 0.0) || window.t_end / window.t_start < 10f64.powf(POLY_MIN_DECADES) {
        return Err(DecayError::WindowTooSmall {
            detail: format!(
                "window [{}, {}] spans fewer than {POLY_MIN_DECADES} decades",
                window.t_start, window.t_end
            ),
        });
    }
    let samples = window_samples(trace, &window);
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(t, e)| *t > 0.0 && *e > ENERGY_FLOOR)
        .map(|&(t, e)| (t.ln(), e.ln()))
        .collect();
    if usable.len() < MIN_POLY_SAMPLES {
        return Err(DecayError::EnergyUnderflow { usable: usable.len(), needed: MIN_POLY_SAMPLES });
    }
    let (slope, _, r_squared) = least_squares(&usable);

    let gn = trace.initial_graph_norm;
    let poly_bound = if gn > 0.0 {
        Some(
            samples
                .iter()
                .filter(|(t, _)| *t > 0.0)
                .map(|(t, e)| t * e / (gn * gn))
                .fold(0.0, f64::max),
        )
    } else {
        None
    };

    Ok(DecayFit {
        model: DecayModel::Polynomial,
        rate: slope,
        r_squared,
        window,
        poly_bound,
        n_samples: usable.len(),
    })
}

/// Tail window: the last 60% of the trace in log-time.
pub fn tail_window(trace: &EnergyTrace) -> Option<FitWindow> {
    let t_first = trace.times.iter().copied().find(|&t| t > 0.0)?;
    let t_end = *trace.times.last()?;
    if t_end <= t_first {
        return None;
    }
    let t_start = t_first * (t_end / t_first).powf(0.4);
    Some(FitWindow { t_start, t_end })
}

/// Compares both decay models on the tail window. A verdict requires the
/// better model to reach `R^2 >= 0.98`, beat the other by at least 0.02, and
/// decay in the right direction; anything else is inconclusive.
pub fn classify_decay(trace: &EnergyTrace) -> DecayClass {
    let window = match tail_window(trace) {
        Some(w) => w,
        None => {
            return DecayClass::Inconclusive { reason: "trace has no usable tail".to_string() }
        }
    };
    let exp_fit = fit_exponential(trace, window).ok();
    let poly_fit = fit_polynomial(trace, window).ok();

    let exp_r2 = exp_fit.as_ref().map(|f| f.r_squared).unwrap_or(f64::NEG_INFINITY);
    let poly_r2 = poly_fit.as_ref().map(|f| f.r_squared).unwrap_or(f64::NEG_INFINITY);

    if exp_r2 >= poly_r2 {
        if let Some(f) = exp_fit {
            if f.r_squared >= R2_ACCEPT && f.r_squared >= poly_r2 + R2_MARGIN && f.rate > 0.0 {
                return DecayClass::Exponential { rate: f.rate, r_squared: f.r_squared };
            }
        }
    } else if let Some(f) = poly_fit {
        if f.r_squared >= R2_ACCEPT && f.r_squared >= exp_r2 + R2_MARGIN && f.rate < 0.0 {
            return DecayClass::Polynomial { slope: f.rate, r_squared: f.r_squared };
        }
    }
    DecayClass::Inconclusive {
        reason: format!("exponential R^2 {exp_r2:.4}, polynomial R^2 {poly_r2:.4}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(times: &[f64], energy: impl Fn(f64) -> f64) -> EnergyTrace {
        EnergyTrace {
            times: times.to_vec(),
            energies: times.iter().map(|&t| energy(t)).collect(),
            balance_residuals: vec![0.0; times.len()],
            initial_graph_norm: 1.0,
            config_tag: "synthetic".to_string(),
        }
    }

    fn linear_times(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
    }

    fn log_times(t0: f64, t_end: f64, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| t0 * (t_end / t0).powf(i as f64 / n as f64))
            .collect()
    }

    #[test]
    fn exponential_fit_recovers_the_exact_rate() {
        let trace = synthetic(&linear_times(10.0, 400), |t| (-2.0 * t).exp());
        let fit = fit_exponential(&trace, FitWindow { t_start: 0.0, t_end: 10.0 }).unwrap();
        assert!((fit.rate - 2.0).abs() <= 1e-9, "rate {}", fit.rate);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn exponential_fit_flags_model_mismatch_on_wide_windows() {
        let times = log_times(0.01, 100.0, 600);
        let trace = synthetic(&times, |t| 1.0 / (1.0 + t));
        let fit = fit_exponential(&trace, FitWindow { t_start: 0.01, t_end: 100.0 }).unwrap();
        assert!(fit.r_squared < 0.95, "R^2 {}", fit.r_squared);
    }

    #[test]
    fn polynomial_fit_recovers_the_exact_slope() {
        let times = log_times(0.1, 1000.0, 500);
        let trace = synthetic(&times, |t| 1.0 / t);
        let fit = fit_polynomial(&trace, FitWindow { t_start: 0.1, t_end: 1000.0 }).unwrap();
        assert!((fit.rate + 1.0).abs() <= 1e-9, "slope {}", fit.rate);
        assert!(fit.r_squared > 1.0 - 1e-12);
        // t * E = 1 identically here
        assert!((fit.poly_bound.unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn polynomial_fit_diverges_on_exponential_data() {
        // on successively later windows the fitted log-log slope of an
        // exponential keeps steepening
        let times = log_times(0.1, 4000.0, 2000);
        let trace = synthetic(&times, |t| (-t).exp());
        let early = fit_polynomial(&trace, FitWindow { t_start: 0.1, t_end: 40.0 }).unwrap();
        let late = fit_polynomial(&trace, FitWindow { t_start: 4.0, t_end: 1600.0 }).unwrap();
        assert!(late.rate < 2.0 * early.rate, "slopes {} vs {}", early.rate, late.rate);
        assert!(late.rate < -10.0);
    }

    #[test]
    fn narrow_windows_are_rejected() {
        let trace = synthetic(&linear_times(10.0, 400), |t| (-t).exp());
        assert!(matches!(
            fit_exponential(&trace, FitWindow { t_start: 9.9, t_end: 10.0 }),
            Err(DecayError::WindowTooSmall { .. })
        ));
        assert!(matches!(
            fit_polynomial(&trace, FitWindow { t_start: 1.0, t_end: 50.0 }),
            Err(DecayError::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn underflowed_energies_are_rejected() {
        let times = linear_times(10.0, 100);
        let trace = synthetic(&times, |t| if t < 0.5 { 1.0 } else { 0.0 });
        assert!(matches!(
            fit_exponential(&trace, FitWindow { t_start: 0.0, t_end: 10.0 }),
            Err(DecayError::EnergyUnderflow { .. })
        ));
    }

    #[test]
    fn fitters_are_affine_equivariant_in_the_energy_scale() {
        let times = log_times(0.1, 500.0, 300);
        let trace = synthetic(&times, |t| 3.7 * (-0.8 * t).exp());
        let scaled = synthetic(&times, |t| 1e6 * 3.7 * (-0.8 * t).exp());
        let w = FitWindow { t_start: 0.1, t_end: 500.0 };
        let f1 = fit_exponential(&trace, w).unwrap();
        let f2 = fit_exponential(&scaled, w).unwrap();
        assert!((f1.rate - f2.rate).abs() <= 1e-12 * f1.rate.abs());
        let p1 = fit_polynomial(&trace, w).unwrap();
        let p2 = fit_polynomial(&scaled, w).unwrap();
        assert!((p1.rate - p2.rate).abs() <= 1e-12 * p1.rate.abs().max(1.0));
    }

    #[test]
    fn classification_separates_the_canonical_laws() {
        let times = log_times(0.05, 200.0, 800);
        let exp_trace = synthetic(&times, |t| (-0.5 * t).exp());
        match classify_decay(&exp_trace) {
            DecayClass::Exponential { rate, .. } => {
                assert!((rate - 0.5).abs() < 0.01, "rate {rate}")
            }
            other => panic!("expected exponential, got {other:?}"),
        }

        let times = log_times(0.05, 5000.0, 800);
        let poly_trace = synthetic(&times, |t| 3.0 / t.max(1e-9));
        match classify_decay(&poly_trace) {
            DecayClass::Polynomial { slope, .. } => {
                assert!((slope + 1.0).abs() < 0.01, "slope {slope}")
            }
            other => panic!("expected polynomial, got {other:?}"),
        }

        let flat_trace = synthetic(&log_times(0.05, 200.0, 400), |_| 2.5);
        match classify_decay(&flat_trace) {
            DecayClass::Inconclusive { .. } => {}
            other => panic!("expected inconclusive, got {other:?}"),
        }
    }

    #[test]
    fn classification_recovers_rates_across_magnitudes() {
        for rate in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
            // horizon matched to the rate so the trace decays visibly
            let t_end = 8.0 / rate;
            let times = log_times(t_end * 1e-4, t_end, 600);
            let trace = synthetic(&times, |t| (-rate * t).exp());
            match classify_decay(&trace) {
                DecayClass::Exponential { rate: fitted, .. } => {
                    assert!(
                        (fitted - rate).abs() <= 0.02 * rate,
                        "rate {rate}: fitted {fitted}"
                    );
                }
                other => panic!("rate {rate}: got {other:?}"),
            }
        }
    }
}
