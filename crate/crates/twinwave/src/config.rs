//! Physical configuration of the coupled transmission system.
//!
//! The domain is `(0, L)` split at the interface `L0`. The left interval
//! carries a weakly coupled wave pair (displacement coupling `c1` supported
//! on `(alpha1, alpha3)`, frictional damping `d1` on `(alpha2, alpha4)`);
//! the right interval carries a strongly coupled pair (velocity coupling
//! `c2` on `(beta1, beta3)`, damping `d2` on `(beta2, beta4)`). All
//! coefficients are piecewise constant and their breakpoints must be
//! strictly ordered around the interface:
//!
//! `0 < alpha1 < .. < alpha4 < L0 < beta1 < .. < beta4 < L`.
//!
//! Validation additionally enforces the coercivity condition `|c1| < 1/C0`
//! with `C0 = (L0/pi)^2` the Poincare constant of `(0, L0)`; it keeps the
//! cross term of the energy norm dominated by the stiffness terms.

use thiserror::Error;

/// Raw user-facing configuration. Field names match the on-disk config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Interface position.
    pub l0: f64,
    /// Total length, `l > l0`.
    pub l: f64,
    /// Squared wave speed of the first left equation.
    pub a1: f64,
    /// Squared wave speed of the first right equation. `a2 == 1` selects the
    /// uniformly damped regime, `a2 != 1` the polynomially damped one.
    pub a2: f64,
    /// Left damping magnitude (kept at 0 in the analytically covered regime).
    pub d1: f64,
    /// Right damping magnitude.
    pub d2: f64,
    /// Displacement coupling magnitude on the left interval.
    pub c1: f64,
    /// Velocity coupling magnitude on the right interval.
    pub c2: f64,
    /// Ascending breakpoints in `(0, l0)`.
    pub alpha: [f64; 4],
    /// Ascending breakpoints in `(l0, l)`.
    pub beta: [f64; 4],
}

/// Which piecewise coefficient to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    D1,
    C1,
    D2,
    C2,
}

/// A piecewise-constant coefficient: `value` on the open support, 0 outside.
///
/// Supports are evaluated half-open (0 at the endpoints); the endpoints are
/// mesh nodes after meshing, so element integrals never see the boundary
/// values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseCoefficient {
    pub support: (f64, f64),
    pub value: f64,
}

impl PiecewiseCoefficient {
    pub fn eval(&self, x: f64) -> f64 {
        if x > self.support.0 && x < self.support.1 {
            self.value
        } else {
            0.0
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("field {field} must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },

    #[error("breakpoint ordering violated: {detail}")]
    OrderingViolation { detail: String },

    #[error("{field} = {value} violates positivity requirement")]
    NonpositiveCoefficient { field: &'static str, value: f64 },

    #[error("|c1| = {c1} >= 1/C0 = {threshold}: energy norm loses coercivity")]
    CoercivityViolation { c1: f64, threshold: f64 },

    #[error("length must be positive, got {value}")]
    NonpositiveLength { value: f64 },

    #[error("position {x} outside the domain [0, {l}]")]
    OutOfDomain { x: f64, l: f64 },
}

/// Accepted configurations outside the regime covered by the decay claims.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegimeWarning {
    /// `d1 != 0`: accepted as an experimental mode, decay claims unverified.
    LeftDampingActive,
    /// A coupling or the right damping vanishes; the system degenerates
    /// towards decoupled or conservative behavior.
    DegenerateCoefficient(&'static str),
}

impl std::fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeWarning::LeftDampingActive => {
                write!(f, "d1 != 0: outside the verified regime, claims unchecked")
            }
            RegimeWarning::DegenerateCoefficient(name) => {
                write!(f, "{name} = 0: degenerate (decoupled/conservative) regime")
            }
        }
    }
}

/// A configuration that passed all invariants. Immutable afterwards; safe to
/// share read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    cfg: SystemConfig,
    c0: f64,
    coercivity_margin: f64,
    warnings: Vec<RegimeWarning>,
}

/// Poincare constant of `(0, l0)`: the smallest `C0` with
/// `int |f|^2 <= C0 int |f_x|^2` over functions vanishing at both ends,
/// i.e. the reciprocal of the first Dirichlet eigenvalue `(pi/l0)^2`.
pub fn poincare_constant(l0: f64) -> Result<f64, ConfigError> {
    if !l0.is_finite() || l0 <= 0.0 {
        return Err(ConfigError::NonpositiveLength { value: l0 });
    }
    Ok((l0 / std::f64::consts::PI).powi(2))
}

/// Validates all configuration invariants and seals the result.
pub fn validate_config(raw: SystemConfig) -> Result<ValidatedConfig, ConfigError> {
    let fields = [
        ("L0", raw.l0),
        ("L", raw.l),
        ("a1", raw.a1),
        ("a2", raw.a2),
        ("d1", raw.d1),
        ("d2", raw.d2),
        ("c1", raw.c1),
        ("c2", raw.c2),
        ("alpha1", raw.alpha[0]),
        ("alpha2", raw.alpha[1]),
        ("alpha3", raw.alpha[2]),
        ("alpha4", raw.alpha[3]),
        ("beta1", raw.beta[0]),
        ("beta2", raw.beta[1]),
        ("beta3", raw.beta[2]),
        ("beta4", raw.beta[3]),
    ];
    for (field, value) in fields {
        if !value.is_finite() {
            return Err(ConfigError::NonFinite { field, value });
        }
    }

    let chain = [
        ("0", 0.0),
        ("alpha1", raw.alpha[0]),
        ("alpha2", raw.alpha[1]),
        ("alpha3", raw.alpha[2]),
        ("alpha4", raw.alpha[3]),
        ("L0", raw.l0),
        ("beta1", raw.beta[0]),
        ("beta2", raw.beta[1]),
        ("beta3", raw.beta[2]),
        ("beta4", raw.beta[3]),
        ("L", raw.l),
    ];
    for pair in chain.windows(2) {
        if pair[0].1 >= pair[1].1 {
            return Err(ConfigError::OrderingViolation {
                detail: format!(
                    "{} = {} must be < {} = {}",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                ),
            });
        }
    }

    if raw.a1 <= 0.0 {
        return Err(ConfigError::NonpositiveCoefficient { field: "a1", value: raw.a1 });
    }
    if raw.a2 <= 0.0 {
        return Err(ConfigError::NonpositiveCoefficient { field: "a2", value: raw.a2 });
    }
    if raw.d1 < 0.0 {
        return Err(ConfigError::NonpositiveCoefficient { field: "d1", value: raw.d1 });
    }
    if raw.d2 < 0.0 {
        return Err(ConfigError::NonpositiveCoefficient { field: "d2", value: raw.d2 });
    }

    let c0 = poincare_constant(raw.l0)?;
    let threshold = 1.0 / c0;
    if raw.c1.abs() >= threshold {
        return Err(ConfigError::CoercivityViolation { c1: raw.c1, threshold });
    }

    let mut warnings = Vec::new();
    if raw.d1 != 0.0 {
        warnings.push(RegimeWarning::LeftDampingActive);
    }
    if raw.c1 == 0.0 {
        warnings.push(RegimeWarning::DegenerateCoefficient("c1"));
    }
    if raw.c2 == 0.0 {
        warnings.push(RegimeWarning::DegenerateCoefficient("c2"));
    }
    if raw.d2 == 0.0 {
        warnings.push(RegimeWarning::DegenerateCoefficient("d2"));
    }

    let coercivity_margin = 1.0 - raw.c1.abs() * c0;
    Ok(ValidatedConfig { cfg: raw, c0, coercivity_margin, warnings })
}

impl SystemConfig {
    /// Demonstration configuration satisfying every invariant. `a2` stays a
    /// free knob: 1 for the uniform regime, 2 for the polynomial one.
    pub fn default_demo() -> Self {
        SystemConfig {
            l0: 1.0,
            l: 2.0,
            a1: 1.0,
            a2: 1.0,
            d1: 0.0,
            d2: 1.0,
            c1: 0.5,
            c2: 1.0,
            alpha: [0.1, 0.2, 0.3, 0.4],
            beta: [1.1, 1.2, 1.3, 1.4],
        }
    }

    pub fn validate(self) -> Result<ValidatedConfig, ConfigError> {
        validate_config(self)
    }
}

impl ValidatedConfig {
    pub fn raw(&self) -> &SystemConfig {
        &self.cfg
    }

    /// Poincare constant `C0 = (L0/pi)^2` recorded at validation time.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `1 - |c1|*C0`, in `(0, 1]`; how far the cross term sits from the
    /// coercivity threshold.
    pub fn coercivity_margin(&self) -> f64 {
        self.coercivity_margin
    }

    pub fn warnings(&self) -> &[RegimeWarning] {
        &self.warnings
    }

    /// Whether the configuration is in the regime the decay claims cover
    /// (`d1 == 0`).
    pub fn in_verified_regime(&self) -> bool {
        self.cfg.d1 == 0.0
    }

    pub fn piecewise(&self, which: CoefficientKind) -> PiecewiseCoefficient {
        let c = &self.cfg;
        match which {
            CoefficientKind::D1 => PiecewiseCoefficient {
                support: (c.alpha[1], c.alpha[3]),
                value: c.d1,
            },
            CoefficientKind::C1 => PiecewiseCoefficient {
                support: (c.alpha[0], c.alpha[2]),
                value: c.c1,
            },
            CoefficientKind::D2 => PiecewiseCoefficient {
                support: (c.beta[1], c.beta[3]),
                value: c.d2,
            },
            CoefficientKind::C2 => PiecewiseCoefficient {
                support: (c.beta[0], c.beta[2]),
                value: c.c2,
            },
        }
    }

    /// Pointwise value of the selected piecewise coefficient.
    pub fn coefficient_at(&self, which: CoefficientKind, x: f64) -> Result<f64, ConfigError> {
        if !(0.0..=self.cfg.l).contains(&x) {
            return Err(ConfigError::OutOfDomain { x, l: self.cfg.l });
        }
        Ok(self.piecewise(which).eval(x))
    }

    /// Squared wave speed of the first chain at `x`: `a1` left of the
    /// interface, `a2` right of it.
    pub fn wave_speed_sq_at(&self, x: f64) -> Result<f64, ConfigError> {
        if !(0.0..=self.cfg.l).contains(&x) {
            return Err(ConfigError::OutOfDomain { x, l: self.cfg.l });
        }
        Ok(if x < self.cfg.l0 { self.cfg.a1 } else { self.cfg.a2 })
    }

    /// All segment boundaries `0, alpha.., L0, beta.., L` in ascending order.
    pub fn breakpoints(&self) -> [f64; 11] {
        let c = &self.cfg;
        [
            0.0, c.alpha[0], c.alpha[1], c.alpha[2], c.alpha[3], c.l0, c.beta[0], c.beta[1],
            c.beta[2], c.beta[3], c.l,
        ]
    }

    /// Marker of the decay regime selected by `a2`.
    pub fn regime_tag(&self) -> String {
        if self.cfg.a2 == 1.0 {
            "a2=1".to_string()
        } else {
            format!("a2={}", self.cfg.a2)
        }
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = SystemConfig;

    fn deref(&self) -> &SystemConfig {
        &self.cfg
    }
}
