//! P1 finite elements for the two conforming chains.
//!
//! The discretization glues each displacement pair across the interface into
//! one chain over the whole domain: chain `w` carries the first pair (left
//! displacement / right displacement sharing the node at `L0`), chain `s`
//! the second. Interface continuity therefore holds by construction and the
//! flux matching is a natural condition of the weak form; no penalty or
//! mortar terms appear. Both ends of both chains are clamped, so the
//! boundary rows/columns are eliminated and every assembled matrix acts on
//! the interior degrees of freedom only.
//!
//! With the mesh aligned to the coefficient breakpoints, all coefficients
//! are element-constant and the 2x2 element integrals are exact:
//! mass `h/6 [[2,1],[1,2]]`, stiffness `w/h [[1,-1],[-1,1]]`.

use std::io;

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("state dimension {got} does not match system dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("energy Gram matrix is not positive definite (coercivity lost)")]
    IndefiniteGram,
}

/// Discrete state `(p_w, p_s, q_w, q_s)`: displacements and velocities of the
/// two chains, each over the `n` interior nodes. The interface degree of
/// freedom is a single shared entry per chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub p_w: DVector<f64>,
    pub p_s: DVector<f64>,
    pub q_w: DVector<f64>,
    pub q_s: DVector<f64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        StateVector {
            p_w: DVector::zeros(n),
            p_s: DVector::zeros(n),
            q_w: DVector::zeros(n),
            q_s: DVector::zeros(n),
        }
    }

    /// Interior DOF count per chain.
    pub fn n(&self) -> usize {
        self.p_w.len()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.p_w.len();
        self.p_s.len() == n && self.q_w.len() == n && self.q_s.len() == n
    }

    /// Flat layout `(p_w, p_s, q_w, q_s)` of dimension `4n`.
    pub fn pack(&self) -> DVector<f64> {
        let n = self.n();
        let mut v = DVector::zeros(4 * n);
        v.rows_mut(0, n).copy_from(&self.p_w);
        v.rows_mut(n, n).copy_from(&self.p_s);
        v.rows_mut(2 * n, n).copy_from(&self.q_w);
        v.rows_mut(3 * n, n).copy_from(&self.q_s);
        v
    }

    pub fn unpack(v: &DVector<f64>) -> Self {
        let n = v.len() / 4;
        StateVector {
            p_w: v.rows(0, n).into_owned(),
            p_s: v.rows(n, n).into_owned(),
            q_w: v.rows(2 * n, n).into_owned(),
            q_s: v.rows(3 * n, n).into_owned(),
        }
    }
}

/// Assembled interior-DOF matrices of the coupled system.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    n: usize,
    /// Consistent mass matrix (shared by both chains).
    pub mass: DMatrix<f64>,
    /// Stiffness of chain `w`, weighted by the piecewise wave speed.
    pub stiff_w: DMatrix<f64>,
    /// Stiffness of chain `s`, weight 1.
    pub stiff_s: DMatrix<f64>,
    /// Displacement-coupling mass matrix, weight `c1(x)`.
    pub c1: DMatrix<f64>,
    /// Velocity-coupling mass matrix, weight `c2(x)`.
    pub c2: DMatrix<f64>,
    /// Left damping mass matrix, weight `d1(x)`.
    pub d1: DMatrix<f64>,
    /// Right damping mass matrix, weight `d2(x)`.
    pub d2: DMatrix<f64>,
}

/// Exact P1 assembly over a breakpoint-aligned mesh.
pub fn assemble_matrices(mesh: &Mesh, cfg: &ValidatedConfig) -> SystemMatrices {
    debug_assert_eq!(mesh.nodes()[mesh.interface_index()], cfg.l0);
    let n = mesh.interior_dof_count();
    let mut mass = DMatrix::zeros(n, n);
    let mut stiff_w = DMatrix::zeros(n, n);
    let mut stiff_s = DMatrix::zeros(n, n);
    let mut c1 = DMatrix::zeros(n, n);
    let mut c2 = DMatrix::zeros(n, n);
    let mut d1 = DMatrix::zeros(n, n);
    let mut d2 = DMatrix::zeros(n, n);

    let n_nodes = mesh.nodes().len();
    for e in 0..mesh.element_count() {
        let h = mesh.element_len(e);
        let coef = mesh.element_coefficients(e);
        // local nodes e, e+1; interior dof = node - 1
        let local = [e, e + 1];
        let mass_local = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let stiff_local = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        for (li, &ni) in local.iter().enumerate() {
            if ni == 0 || ni == n_nodes - 1 {
                continue;
            }
            for (lj, &nj) in local.iter().enumerate() {
                if nj == 0 || nj == n_nodes - 1 {
                    continue;
                }
                let (i, j) = (ni - 1, nj - 1);
                mass[(i, j)] += mass_local[li][lj];
                stiff_w[(i, j)] += coef.a * stiff_local[li][lj];
                stiff_s[(i, j)] += stiff_local[li][lj];
                c1[(i, j)] += coef.c1 * mass_local[li][lj];
                c2[(i, j)] += coef.c2 * mass_local[li][lj];
                d1[(i, j)] += coef.d1 * mass_local[li][lj];
                d2[(i, j)] += coef.d2 * mass_local[li][lj];
            }
        }
    }

    SystemMatrices { n, mass, stiff_w, stiff_s, c1, c2, d1, d2 }
}

impl SystemMatrices {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Position-block Gram `[[S_w, C1], [C1, S_s]]` of dimension `2n`.
    pub fn position_block(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        k.view_mut((0, 0), (n, n)).copy_from(&self.stiff_w);
        k.view_mut((0, n), (n, n)).copy_from(&self.c1);
        k.view_mut((n, 0), (n, n)).copy_from(&self.c1);
        k.view_mut((n, n), (n, n)).copy_from(&self.stiff_s);
        k
    }

    /// First-order damping/gyroscopic block `[[D1 + D2, C2], [-C2, 0]]`.
    pub fn damping_block(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(&(&self.d1 + &self.d2));
        c.view_mut((0, n), (n, n)).copy_from(&self.c2);
        c.view_mut((n, 0), (n, n)).copy_from(&(-&self.c2));
        c
    }

    /// Matrices with stable names, for export.
    pub fn named(&self) -> [(&'static str, &DMatrix<f64>); 7] {
        [
            ("mass", &self.mass),
            ("stiff_w", &self.stiff_w),
            ("stiff_s", &self.stiff_s),
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("d1", &self.d1),
            ("d2", &self.d2),
        ]
    }
}

/// Writes the nonzero entries as `row col value` lines (coordinate triplets).
pub fn write_matrix_triplets<W: io::Write>(m: &DMatrix<f64>, out: &mut W) -> io::Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(out, "{} {} {}", i, j, v)?;
            }
        }
    }
    Ok(())
}

/// Energy Gram matrix `H`: position block `[[S_w, C1], [C1, S_s]]`, velocity
/// block `[[M, 0], [0, M]]`. The discrete energy is `E = 1/2 U^T H U`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    h: DMatrix<f64>,
    l_factor: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Builds the Gram matrix and its Cholesky factor. Fails with
/// `IndefiniteGram` when the cross term destroys positivity, which the
/// coupling bound `|c1| < 1/C0` rules out for validated configurations.
pub fn energy_gram(mats: &SystemMatrices) -> Result<GramMatrix, FemError> {
    let n = mats.n;
    let dim = 4 * n;
    let mut h = DMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&mats.position_block());
    h.view_mut((2 * n, 2 * n), (n, n)).copy_from(&mats.mass);
    h.view_mut((3 * n, 3 * n), (n, n)).copy_from(&mats.mass);
    let chol = h.clone().cholesky().ok_or(FemError::IndefiniteGram)?;
    let l_factor = chol.l();
    Ok(GramMatrix { h, l_factor, chol })
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Lower-triangular factor with `H = L L^T`.
    pub fn l_factor(&self) -> &DMatrix<f64> {
        &self.l_factor
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `<u, v>_H = v^T H u`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.h * u))
    }

    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn norm_state(&self, u: &StateVector) -> f64 {
        self.norm(&u.pack())
    }

    /// `sqrt(x^* H x)` for complex vectors over the real Gram matrix.
    pub fn norm_complex(&self, x: &DVector<Complex<f64>>) -> f64 {
        let hx = map_complex(&self.h, x);
        x.dotc(&hx).re.max(0.0).sqrt()
    }
}

/// Real-matrix times complex-vector product.
pub(crate) fn map_complex(m: &DMatrix<f64>, x: &DVector<Complex<f64>>) -> DVector<Complex<f64>> {
    let n = m.nrows();
    let mut y = DVector::from_element(n, Complex::new(0.0, 0.0));
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj.re == 0.0 && xj.im == 0.0 {
            continue;
        }
        let col = m.column(j);
        for i in 0..n {
            let mij = col[i];
            if mij != 0.0 {
                y[i] += Complex::new(mij * xj.re, mij * xj.im);
            }
        }
    }
    y
}

/// Discrete energy `E = 1/2 U^T H U`, evaluated blockwise.
pub fn energy(mats: &SystemMatrices, u: &StateVector) -> Result<f64, FemError> {
    if !u.is_consistent() || u.n() != mats.n {
        return Err(FemError::DimensionMismatch { expected: mats.n, got: u.n() });
    }
    let pos = u.p_w.dot(&(&mats.stiff_w * &u.p_w))
        + u.p_s.dot(&(&mats.stiff_s * &u.p_s))
        + 2.0 * u.p_w.dot(&(&mats.c1 * &u.p_s));
    let vel = u.q_w.dot(&(&mats.mass * &u.q_w)) + u.q_s.dot(&(&mats.mass * &u.q_s));
    Ok(0.5 * (pos + vel))
}

/// One-sided flux mismatch of a chain displacement at the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxJump {
    /// `a1 w_x(L0-) - a2 w_x(L0+)` for the first chain.
    pub chain_w: f64,
    /// `s_x(L0-) - s_x(L0+)` for the second chain (unit weights).
    pub chain_s: f64,
}

/// Reconstructs the transmission flux jump from one-sided P1 slopes at `L0`.
/// Exact transmission would give zero; the discrete mismatch decays with the
/// mesh size.
pub fn interface_flux_jump(mesh: &Mesh, cfg: &ValidatedConfig, u: &StateVector) -> FluxJump {
    let idx = mesh.interface_index();
    let nodes = mesh.nodes();
    let last = nodes.len() - 1;
    let value = |p: &DVector<f64>, node: usize| -> f64 {
        if node == 0 || node == last {
            0.0
        } else {
            p[node - 1]
        }
    };
    let slope = |p: &DVector<f64>, from: usize, to: usize| -> f64 {
        (value(p, to) - value(p, from)) / (nodes[to] - nodes[from])
    };
    let left_w = slope(&u.p_w, idx - 1, idx);
    let right_w = slope(&u.p_w, idx, idx + 1);
    let left_s = slope(&u.p_s, idx - 1, idx);
    let right_s = slope(&u.p_s, idx, idx + 1);
    FluxJump {
        chain_w: cfg.a1 * left_w - cfg.a2 * right_w,
        chain_s: left_s - right_s,
    }
}

/// Nodal interpolation of chain functions onto the interior DOFs.
pub fn interpolate_chains(
    mesh: &Mesh,
    w: impl Fn(f64) -> f64,
    s: impl Fn(f64) -> f64,
) -> (DVector<f64>, DVector<f64>) {
    let nodes = mesh.nodes();
    let n = mesh.interior_dof_count();
    let mut pw = DVector::zeros(n);
    let mut ps = DVector::zeros(n);
    for i in 0..n {
        pw[i] = w(nodes[i + 1]);
        ps[i] = s(nodes[i + 1]);
    }
    (pw, ps)
}
