//! Discrete semigroup generator of the first-order evolution.
//!
//! In the flat layout `(p_w, p_s, q_w, q_s)` the generator acts as
//!
//! ```text
//! A (p, q) = (q, -M2^-1 (K p + C q)),
//! K = [[S_w, C1], [C1, S_s]],   C = [[D1 + D2, C2], [-C2, 0]],
//! ```
//!
//! with `M2 = diag(M, M)`. The velocity coupling enters antisymmetrically
//! (`+C2` in the first chain, `-C2` in the second), mirroring the signs of
//! the continuous system; flipping either sign would make the coupling leak
//! energy. The exact dissipation identity is
//!
//! `<A U, U>_H = -q_w^T (D1 + D2) q_w <= 0`,
//!
//! so only the damped chain-w velocity drains energy (with `D1 = 0` in the
//! covered regime).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::fem::{assemble_matrices, energy_gram, FemError, GramMatrix, StateVector, SystemMatrices};
use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("state dimension {got} does not match system dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("static block system is singular")]
    SingularSystem,

    #[error(transparent)]
    Gram(#[from] FemError),
}

/// Decay regime selected by the right wave speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `a2 == 1`: uniform (exponential) damping of the whole spectrum.
    SameSpeed,
    /// `a2 != 1`: high-frequency modes lose damping; polynomial decay.
    DifferentSpeed,
}

/// Immutable generator with its reusable factorizations. Apply and solve
/// operations are reentrant.
pub struct GeneratorOperator {
    cfg: ValidatedConfig,
    mats: SystemMatrices,
    gram: GramMatrix,
    mass_chol: Cholesky<f64, Dyn>,
    a_dense: DMatrix<f64>,
    a_lu: LU<f64, Dyn, Dyn>,
    mesh_h: f64,
    regime: Regime,
}

impl GeneratorOperator {
    /// Assembles matrices, Gram and factorizations for a config/mesh pair.
    pub fn assemble(cfg: &ValidatedConfig, mesh: &Mesh) -> Result<Self, GeneratorError> {
        let mats = assemble_matrices(mesh, cfg);
        Self::from_matrices(cfg, mats, mesh.max_element_len())
    }

    pub fn from_matrices(
        cfg: &ValidatedConfig,
        mats: SystemMatrices,
        mesh_h: f64,
    ) -> Result<Self, GeneratorError> {
        let gram = energy_gram(&mats)?;
        let mass_chol = mats
            .mass
            .clone()
            .cholesky()
            .ok_or(FemError::IndefiniteGram)?;

        let n = mats.n();
        let dim = 4 * n;
        let stiff = mats.position_block();
        let damp = mats.damping_block();
        // dense action [[0, I], [-M2^-1 K, -M2^-1 C]]
        let mut a_dense = DMatrix::zeros(dim, dim);
        for i in 0..2 * n {
            a_dense[(i, 2 * n + i)] = 1.0;
        }
        let minv_k = solve_mass2(&mass_chol, &stiff);
        let minv_c = solve_mass2(&mass_chol, &damp);
        a_dense.view_mut((2 * n, 0), (2 * n, 2 * n)).copy_from(&(-&minv_k));
        a_dense
            .view_mut((2 * n, 2 * n), (2 * n, 2 * n))
            .copy_from(&(-&minv_c));

        let a_lu = a_dense.clone().lu();
        if !a_lu.is_invertible() {
            return Err(GeneratorError::SingularSystem);
        }

        let regime = if cfg.a2 == 1.0 { Regime::SameSpeed } else { Regime::DifferentSpeed };
        Ok(GeneratorOperator {
            cfg: cfg.clone(),
            mats,
            gram,
            mass_chol,
            a_dense,
            a_lu,
            mesh_h,
            regime,
        })
    }

    pub fn n(&self) -> usize {
        self.mats.n()
    }

    /// Dimension of the flat state, `4n`.
    pub fn state_dim(&self) -> usize {
        4 * self.mats.n()
    }

    pub fn cfg(&self) -> &ValidatedConfig {
        &self.cfg
    }

    pub fn mats(&self) -> &SystemMatrices {
        &self.mats
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Dense matrix of the generator action.
    pub fn dense_matrix(&self) -> &DMatrix<f64> {
        &self.a_dense
    }

    pub fn mesh_h(&self) -> f64 {
        self.mesh_h
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Blockwise generator action.
    pub fn apply(&self, u: &StateVector) -> Result<StateVector, GeneratorError> {
        if !u.is_consistent() || u.n() != self.n() {
            return Err(GeneratorError::DimensionMismatch { expected: self.n(), got: u.n() });
        }
        let m = &self.mats;
        let rw = &m.stiff_w * &u.p_w
            + &m.c1 * &u.p_s
            + &m.d1 * &u.q_w
            + &m.d2 * &u.q_w
            + &m.c2 * &u.q_s;
        let rs = &m.stiff_s * &u.p_s + &m.c1 * &u.p_w - &m.c2 * &u.q_w;
        Ok(StateVector {
            p_w: u.q_w.clone(),
            p_s: u.q_s.clone(),
            q_w: -self.mass_chol.solve(&rw),
            q_s: -self.mass_chol.solve(&rs),
        })
    }

    /// Generator action on the flat layout via the dense matrix.
    pub fn apply_packed(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.a_dense * u
    }

    /// Left side `<A U, U>_H` and right side `-q_w^T (D1 + D2) q_w` of the
    /// dissipation identity, computed along independent routes.
    pub fn dissipation_identity(&self, u: &StateVector) -> (f64, f64) {
        let au = self.apply(u).expect("dimension checked by caller");
        let lhs = self.gram.inner(&au.pack(), &u.pack());
        let rhs = -(u.q_w.dot(&(&self.mats.d2 * &u.q_w)) + u.q_w.dot(&(&self.mats.d1 * &u.q_w)));
        (lhs, rhs)
    }

    /// Solves the static problem `-A U = F` by one block LU solve plus a
    /// refinement pass. The generator is invertible (zero is in the
    /// resolvent set), so failure here means a broken system.
    pub fn static_solve(&self, f: &StateVector) -> Result<StateVector, GeneratorError> {
        if !f.is_consistent() || f.n() != self.n() {
            return Err(GeneratorError::DimensionMismatch { expected: self.n(), got: f.n() });
        }
        let rhs = -f.pack();
        let mut u = self.a_lu.solve(&rhs).ok_or(GeneratorError::SingularSystem)?;
        // one step of iterative refinement pushes the residual to roundoff
        let residual = &rhs - &self.a_dense * &u;
        if let Some(correction) = self.a_lu.solve(&residual) {
            u += correction;
        }
        Ok(StateVector::unpack(&u))
    }

    /// Graph norm `sqrt(|U|_H^2 + |A U|_H^2)`; finite initial data in this
    /// norm is what the polynomial decay bound weighs against.
    pub fn graph_norm(&self, u: &StateVector) -> f64 {
        let au = self.apply(u).expect("dimension checked by caller");
        let nu = self.gram.norm_state(u);
        let nau = self.gram.norm_state(&au);
        (nu * nu + nau * nau).sqrt()
    }
}

/// Solves `diag(M, M) X = B` for a `2n x 2n` right-hand side.
fn solve_mass2(mass_chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n2 = b.nrows();
    let n = n2 / 2;
    let mut x = DMatrix::zeros(n2, n2);
    for j in 0..n2 {
        let top = b.view((0, j), (n, 1)).into_owned();
        let bottom = b.view((n, j), (n, 1)).into_owned();
        let xt = mass_chol.solve(&top);
        let xb = mass_chol.solve(&bottom);
        x.view_mut((0, j), (n, 1)).copy_from(&xt);
        x.view_mut((n, j), (n, 1)).copy_from(&xb);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::mesh::build_mesh;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn build(cfg: SystemConfig, h: f64) -> (ValidatedConfig, Mesh, GeneratorOperator) {
        let v = cfg.validate().unwrap();
        let mesh = build_mesh(&v, h).unwrap();
        let gen = GeneratorOperator::assemble(&v, &mesh).unwrap();
        (v, mesh, gen)
    }

    fn random_state(n: usize, rng: &mut StdRng) -> StateVector {
        let mut u = StateVector::zero(n);
        for i in 0..n {
            u.p_w[i] = rng.random::<f64>() - 0.5;
            u.p_s[i] = rng.random::<f64>() - 0.5;
            u.q_w[i] = rng.random::<f64>() - 0.5;
            u.q_s[i] = rng.random::<f64>() - 0.5;
        }
        u
    }

    #[test]
    fn zero_state_maps_to_zero() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.05);
        let u = StateVector::zero(mesh.interior_dof_count());
        let au = gen.apply(&u).unwrap();
        assert_eq!(au, StateVector::zero(mesh.interior_dof_count()));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (_, _, gen) = build(SystemConfig::default_demo(), 0.05);
        let u = StateVector::zero(3);
        assert!(matches!(gen.apply(&u), Err(GeneratorError::DimensionMismatch { .. })));
        assert!(matches!(gen.static_solve(&u), Err(GeneratorError::DimensionMismatch { .. })));
    }

    #[test]
    fn decoupled_undamped_action_is_a_pure_wave_rotation() {
        let mut raw = SystemConfig::default_demo();
        raw.c1 = 0.0;
        raw.c2 = 0.0;
        raw.d2 = 0.0;
        let (_, mesh, gen) = build(raw, 0.05);
        let n = mesh.interior_dof_count();
        let mut rng = StdRng::seed_from_u64(7);
        let mut u = StateVector::zero(n);
        for i in 0..n {
            u.p_w[i] = rng.random::<f64>() - 0.5;
            u.p_s[i] = rng.random::<f64>() - 0.5;
        }
        let au = gen.apply(&u).unwrap();
        assert_eq!(au.p_w, DVector::zeros(n));
        assert_eq!(au.p_s, DVector::zeros(n));
        // velocities are -M^-1 S p
        let expect_w = -gen
            .mats()
            .mass
            .clone()
            .cholesky()
            .unwrap()
            .solve(&(&gen.mats().stiff_w * &u.p_w));
        assert_relative_eq!(au.q_w, expect_w, max_relative = 1e-12);
    }

    #[test]
    fn blockwise_and_dense_actions_agree() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.05);
        let mut rng = StdRng::seed_from_u64(11);
        let u = random_state(mesh.interior_dof_count(), &mut rng);
        let block = gen.apply(&u).unwrap().pack();
        let dense = gen.apply_packed(&u.pack());
        assert_relative_eq!(block, dense, epsilon = 1e-11);
    }

    #[test]
    fn symmetrized_inner_product_matches_damping_form() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.05);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..100 {
            let u = random_state(mesh.interior_dof_count(), &mut rng);
            let au = gen.apply(&u).unwrap();
            let forward = gen.gram().inner(&au.pack(), &u.pack());
            let backward = gen.gram().inner(&u.pack(), &au.pack());
            let damping = u.q_w.dot(&(&gen.mats().d1 * &u.q_w))
                + u.q_w.dot(&(&gen.mats().d2 * &u.q_w));
            let scale = gen.gram().norm_state(&u).powi(2);
            assert!(
                (forward + backward + 2.0 * damping).abs() <= 1e-12 * scale,
                "adjoint identity violated"
            );
        }
    }

    #[test]
    fn dissipation_vanishes_off_the_damping_support() {
        let (cfg, mesh, gen) = build(SystemConfig::default_demo(), 0.02);
        let n = mesh.interior_dof_count();
        let nodes = mesh.nodes();
        let mut u = StateVector::zero(n);
        // chain-w velocity bump strictly left of beta2
        for i in 0..n {
            let x = nodes[i + 1];
            if x < cfg.beta[1] {
                u.q_w[i] = (x * 3.0).sin();
            }
        }
        let (lhs, rhs) = gen.dissipation_identity(&u);
        assert_eq!(rhs, 0.0);
        assert!(lhs.abs() < 1e-12);
    }

    #[test]
    fn dissipation_is_negative_on_the_damping_support() {
        let (cfg, mesh, gen) = build(SystemConfig::default_demo(), 0.02);
        let n = mesh.interior_dof_count();
        let nodes = mesh.nodes();
        let mut u = StateVector::zero(n);
        for i in 0..n {
            let x = nodes[i + 1];
            if x > cfg.beta[1] && x < cfg.beta[3] {
                u.q_w[i] = 1.0;
            }
        }
        let (lhs, rhs) = gen.dissipation_identity(&u);
        assert!(rhs < 0.0);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
    }

    #[test]
    fn velocity_coupling_is_energy_neutral() {
        // same states, different c2: the inner product <AU,U>_H must not move
        let mut raw_weak = SystemConfig::default_demo();
        raw_weak.c2 = 1.0;
        let mut raw_strong = SystemConfig::default_demo();
        raw_strong.c2 = 5.0;
        let (_, mesh, gen_weak) = build(raw_weak, 0.05);
        let (_, _, gen_strong) = build(raw_strong, 0.05);
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..20 {
            let u = random_state(mesh.interior_dof_count(), &mut rng);
            let (lhs_weak, _) = gen_weak.dissipation_identity(&u);
            let (lhs_strong, _) = gen_strong.dissipation_identity(&u);
            let scale = gen_weak.gram().norm_state(&u).powi(2);
            assert!(
                (lhs_weak - lhs_strong).abs() <= 1e-11 * scale,
                "coupling strength leaked into the energy balance"
            );
        }
    }

    #[test]
    fn static_solve_of_zero_is_zero() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.05);
        let f = StateVector::zero(mesh.interior_dof_count());
        let u = gen.static_solve(&f).unwrap();
        assert_eq!(u.pack().norm(), 0.0);
    }

    #[test]
    fn static_solve_recovers_manufactured_solution() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.02);
        let nodes = mesh.nodes();
        let n = mesh.interior_dof_count();
        let mut target = StateVector::zero(n);
        for i in 0..n {
            let x = nodes[i + 1];
            target.p_w[i] = (std::f64::consts::PI * x / 2.0).sin();
            target.p_s[i] = x * (2.0 - x);
            target.q_w[i] = (x - 1.0).powi(2) - 1.0;
            target.q_s[i] = (3.0 * x).cos() - 1.0;
        }
        let minus_a_target = gen.apply(&target).unwrap();
        let f = StateVector::unpack(&(-minus_a_target.pack()));
        let solved = gen.static_solve(&f).unwrap();
        let err = (solved.pack() - target.pack()).norm() / target.pack().norm();
        assert!(err < 1e-10, "relative recovery error {err}");
    }

    #[test]
    fn static_solve_residual_is_at_roundoff() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.02);
        let mut rng = StdRng::seed_from_u64(5);
        let f = random_state(mesh.interior_dof_count(), &mut rng);
        let u = gen.static_solve(&f).unwrap();
        let residual = gen.apply(&u).unwrap().pack() + f.pack();
        let rel = gen.gram().norm(&residual) / gen.gram().norm(&f.pack());
        assert!(rel <= 1e-10, "relative residual {rel}");
    }

    #[test]
    fn static_solve_inverts_the_negated_action() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.05);
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let u = random_state(mesh.interior_dof_count(), &mut rng);
            let f = StateVector::unpack(&(-gen.apply(&u).unwrap().pack()));
            let back = gen.static_solve(&f).unwrap();
            let rel = (back.pack() - u.pack()).norm() / u.pack().norm();
            assert!(rel < 1e-9, "round trip error {rel}");
        }
    }

    /// Decoupled closed-form benchmark: unit forcing of the first left
    /// equation with all couplings off. The chain-w displacement solves
    /// a piecewise two-point problem with a quadratic/linear solution.
    #[test]
    fn static_solve_converges_to_closed_form_at_second_order() {
        let mut raw = SystemConfig::default_demo();
        raw.c1 = 0.0;
        raw.c2 = 0.0;
        let cfg = raw.validate().unwrap();
        let (a1, a2, l0, l) = (cfg.a1, cfg.a2, cfg.l0, cfg.l);
        // u = -x^2/(2 a1) + b x on the left, phi = c (L - x) on the right;
        // value continuity and flux matching at L0 fix the two constants:
        //   L0 b - (L - L0) c = L0^2 / (2 a1)
        //   a1 b + a2 c      = L0
        let c = l0 * l0 / (2.0 * (l0 * a2 + a1 * (l - l0)));
        let b = (l0 - a2 * c) / a1;
        let exact_w = |x: f64| -> f64 {
            if x <= l0 {
                -x * x / (2.0 * a1) + b * x
            } else {
                c * (l - x)
            }
        };

        let mut errors = Vec::new();
        for h in [0.04, 0.02, 0.01] {
            let mesh = build_mesh(&cfg, h).unwrap();
            let gen = GeneratorOperator::assemble(&cfg, &mesh).unwrap();
            let n = mesh.interior_dof_count();
            // rhs: unit load on (0, L0) against chain-w test functions,
            // assembled exactly, then mapped through M^-1 to state form
            let nodes = mesh.nodes();
            let mut load = DVector::zeros(n);
            for e in 0..mesh.element_count() {
                let (lo, hi) = mesh.element_span(e);
                if lo >= l0 {
                    continue;
                }
                let he = hi - lo;
                for node in [e, e + 1] {
                    if node == 0 || node == nodes.len() - 1 {
                        continue;
                    }
                    load[node - 1] += he / 2.0;
                }
            }
            let minv_load = gen.mats().mass.clone().cholesky().unwrap().solve(&load);
            let mut f = StateVector::zero(n);
            f.q_w = minv_load;
            let u = gen.static_solve(&f).unwrap();
            // L2 error of the chain-w displacement against the closed form
            let mut err_sq = 0.0;
            for e in 0..mesh.element_count() {
                let (lo, hi) = mesh.element_span(e);
                let he = hi - lo;
                let val = |node: usize| if node == 0 || node == nodes.len() - 1 { 0.0 } else { u.p_w[node - 1] };
                // two-point Gauss on the element
                for g in [-1.0 / f64::sqrt(3.0), 1.0 / f64::sqrt(3.0)] {
                    let x = 0.5 * (lo + hi) + 0.5 * he * g;
                    let t = (x - lo) / he;
                    let uh = (1.0 - t) * val(e) + t * val(e + 1);
                    err_sq += 0.5 * he * (uh - exact_w(x)).powi(2);
                }
            }
            errors.push(err_sq.sqrt());
        }
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        assert!(order1 >= 1.8 && order2 >= 1.8, "orders {order1}, {order2}, errors {errors:?}");
    }

    #[test]
    fn graph_norm_dominates_energy_norm() {
        let (_, mesh, gen) = build(SystemConfig::default_demo(), 0.05);
        assert_eq!(gen.graph_norm(&StateVector::zero(mesh.interior_dof_count())), 0.0);
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let u = random_state(mesh.interior_dof_count(), &mut rng);
            assert!(gen.graph_norm(&u) >= gen.gram().norm_state(&u));
        }
    }
}
