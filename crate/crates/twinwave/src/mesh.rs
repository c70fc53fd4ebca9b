//! Breakpoint-aligned 1D mesh on `(0, L)`.
//!
//! Every coefficient breakpoint and the interface `L0` become mesh nodes, so
//! all piecewise coefficients are constant on every element and midpoint
//! evaluation integrates them exactly.

use thiserror::Error;

use crate::config::{CoefficientKind, ValidatedConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("target element size must be positive and finite, got {value}")]
    HTooCoarse { value: f64 },
}

/// Coefficient values on one element (constant by alignment).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementCoefficients {
    pub a: f64,
    pub d1: f64,
    pub c1: f64,
    pub d2: f64,
    pub c2: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<f64>,
    interface_index: usize,
    elements: Vec<ElementCoefficients>,
}

/// Subdivides each segment between consecutive breakpoints uniformly so that
/// its elements are no longer than `h_target`, with at least one element per
/// segment. Breakpoints and the interface are nodes exactly.
pub fn build_mesh(cfg: &ValidatedConfig, h_target: f64) -> Result<Mesh, MeshError> {
    if !h_target.is_finite() || h_target <= 0.0 {
        return Err(MeshError::HTooCoarse { value: h_target });
    }

    let breakpoints = cfg.breakpoints();
    let mut nodes = vec![0.0];
    for seg in breakpoints.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        // the relative guard keeps float dirt in the segment width from
        // spilling into one extra subdivision
        let ratio = (hi - lo) / h_target;
        let parts = (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        for k in 1..=parts {
            let t = k as f64 / parts as f64;
            // endpoints land exactly on the breakpoints
            let x = if k == parts { hi } else { lo + t * (hi - lo) };
            nodes.push(x);
        }
    }

    let interface_index = nodes
        .iter()
        .position(|&x| x == cfg.l0)
        .expect("interface is a segment boundary");

    let elements = nodes
        .windows(2)
        .map(|e| {
            let mid = 0.5 * (e[0] + e[1]);
            ElementCoefficients {
                a: cfg.wave_speed_sq_at(mid).expect("midpoint inside domain"),
                d1: cfg.coefficient_at(CoefficientKind::D1, mid).expect("in domain"),
                c1: cfg.coefficient_at(CoefficientKind::C1, mid).expect("in domain"),
                d2: cfg.coefficient_at(CoefficientKind::D2, mid).expect("in domain"),
                c2: cfg.coefficient_at(CoefficientKind::C2, mid).expect("in domain"),
            }
        })
        .collect();

    Ok(Mesh { nodes, interface_index, elements })
}

impl Mesh {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node index of the interface `L0`.
    pub fn interface_index(&self) -> usize {
        self.interface_index
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Interior degrees of freedom per chain (Dirichlet ends eliminated).
    pub fn interior_dof_count(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn element_span(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    pub fn element_len(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn element_coefficients(&self, e: usize) -> &ElementCoefficients {
        &self.elements[e]
    }

    /// Largest element length; sets the resolved frequency band.
    pub fn max_element_len(&self) -> f64 {
        (0..self.element_count())
            .map(|e| self.element_len(e))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;

    fn default_cfg() -> ValidatedConfig {
        SystemConfig::default_demo().validate().unwrap()
    }

    #[test]
    fn breakpoints_are_nodes_exactly() {
        let cfg = default_cfg();
        let mesh = build_mesh(&cfg, 0.05).unwrap();
        for bp in cfg.breakpoints() {
            assert!(mesh.nodes().contains(&bp), "missing breakpoint {bp}");
        }
        assert_eq!(mesh.nodes()[mesh.interface_index()], 1.0);
        assert_eq!(mesh.nodes()[0], 0.0);
        assert_eq!(*mesh.nodes().last().unwrap(), cfg.l);
    }

    #[test]
    fn coarse_target_degrades_to_one_element_per_segment() {
        let cfg = default_cfg();
        let mesh = build_mesh(&cfg, 10.0).unwrap();
        // 10 segments between the 11 breakpoints
        assert_eq!(mesh.element_count(), 10);
    }

    #[test]
    fn nonpositive_target_is_rejected() {
        let cfg = default_cfg();
        assert!(matches!(build_mesh(&cfg, 0.0), Err(MeshError::HTooCoarse { .. })));
        assert!(matches!(build_mesh(&cfg, f64::NAN), Err(MeshError::HTooCoarse { .. })));
    }

    #[test]
    fn halving_target_doubles_element_count_up_to_segment_rounding() {
        let cfg = default_cfg();
        let coarse = build_mesh(&cfg, 0.05).unwrap().element_count() as i64;
        let fine = build_mesh(&cfg, 0.025).unwrap().element_count() as i64;
        let segments = 10i64;
        assert!(
            (fine - 2 * coarse).abs() <= segments,
            "coarse {coarse}, fine {fine}"
        );
    }

    #[test]
    fn element_size_bound_holds() {
        let cfg = default_cfg();
        let mesh = build_mesh(&cfg, 0.03).unwrap();
        assert!(mesh.max_element_len() <= 0.03 * (1.0 + 1e-9));
    }

    #[test]
    fn coefficients_constant_on_each_element() {
        let cfg = default_cfg();
        let mesh = build_mesh(&cfg, 0.07).unwrap();
        for e in 0..mesh.element_count() {
            let (lo, hi) = mesh.element_span(e);
            let stored = *mesh.element_coefficients(e);
            for k in 1..100 {
                let x = lo + (hi - lo) * k as f64 / 100.0;
                assert_eq!(cfg.coefficient_at(CoefficientKind::D1, x).unwrap(), stored.d1);
                assert_eq!(cfg.coefficient_at(CoefficientKind::C1, x).unwrap(), stored.c1);
                assert_eq!(cfg.coefficient_at(CoefficientKind::D2, x).unwrap(), stored.d2);
                assert_eq!(cfg.coefficient_at(CoefficientKind::C2, x).unwrap(), stored.c2);
                assert_eq!(cfg.wave_speed_sq_at(x).unwrap(), stored.a);
            }
        }
    }
}
