//! Hermite cubic finite elements for the clamped beam.
//!
//! Global degrees of freedom are ordered `[q_1, r_1, q_2, r_2, ...]` (value and
//! slope per node). Clamping removes the first and last node pairs, so a field on
//! the free DOFs has length `2 * n_nodes - 4`.

use std::ops::{Deref, DerefMut};

use thiserror::Error;

use crate::banded::{BandCholesky, BandError, SymBand};
use crate::quadrature::gauss_legendre_unit;

/// Half bandwidth of the assembled Hermite matrices.
pub const HALF_BANDWIDTH: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("domain length must be positive, got {0}")]
    BadLength(f64),
    #[error("field has non-finite entry at DOF {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Band(#[from] BandError),
}

/// Uniform mesh of `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub length: f64,
    pub n_nodes: usize,
    pub h: f64,
}

impl Mesh {
    pub fn new(length: f64, n_nodes: usize) -> Result<Self, FemError> {
        if n_nodes < 3 {
            return Err(FemError::TooFewNodes(n_nodes));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(FemError::BadLength(length));
        }
        Ok(Self {
            length,
            n_nodes,
            h: length / (n_nodes - 1) as f64,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_nodes - 1
    }

    /// Coordinate of node `i` (zero-based).
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_nodes {
            self.length
        } else {
            i as f64 * self.h
        }
    }

    pub fn n_free(&self) -> usize {
        2 * self.n_nodes - 4
    }
}

/// Coefficients of a finite-element function on the free DOFs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField(pub Vec<f64>);

impl NodalField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Shape function values and their second `x`-derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeValues {
    pub values: [f64; 4],
    pub second: [f64; 4],
}

/// Hermite cubic shape functions on the reference element, `xi ∈ [0, 1]`.
pub fn shape_functions(xi: f64, h: f64) -> ShapeValues {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    let values = [
        1.0 - 3.0 * x2 + 2.0 * x3,
        h * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        h * (-x2 + x3),
    ];
    let s = 1.0 / (h * h);
    let second = [
        s * (-6.0 + 12.0 * xi),
        s * h * (-4.0 + 6.0 * xi),
        s * (6.0 - 12.0 * xi),
        s * h * (-2.0 + 6.0 * xi),
    ];
    ShapeValues { values, second }
}

/// Consistent element mass matrix.
pub fn element_mass(h: f64) -> [[f64; 4]; 4] {
    let c = h / 420.0;
    let h2 = h * h;
    [
        [156.0 * c, 22.0 * h * c, 54.0 * c, -13.0 * h * c],
        [22.0 * h * c, 4.0 * h2 * c, 13.0 * h * c, -3.0 * h2 * c],
        [54.0 * c, 13.0 * h * c, 156.0 * c, -22.0 * h * c],
        [-13.0 * h * c, -3.0 * h2 * c, -22.0 * h * c, 4.0 * h2 * c],
    ]
}

/// Element bending stiffness matrix.
pub fn element_stiffness(h: f64) -> [[f64; 4]; 4] {
    let c = 1.0 / (h * h * h);
    let h2 = h * h;
    [
        [12.0 * c, 6.0 * h * c, -12.0 * c, 6.0 * h * c],
        [6.0 * h * c, 4.0 * h2 * c, -6.0 * h * c, 2.0 * h2 * c],
        [-12.0 * c, -6.0 * h * c, 12.0 * c, -6.0 * h * c],
        [6.0 * h * c, 2.0 * h2 * c, -6.0 * h * c, 4.0 * h2 * c],
    ]
}

/// Global mass and stiffness before the clamped DOFs are removed.
pub fn assemble_full(mesh: &Mesh) -> (SymBand, SymBand) {
    let n = 2 * mesh.n_nodes;
    let mut m = SymBand::zeros(n, HALF_BANDWIDTH);
    let mut k = SymBand::zeros(n, HALF_BANDWIDTH);
    let me = element_mass(mesh.h);
    let ke = element_stiffness(mesh.h);
    for e in 0..mesh.n_elements() {
        let base = 2 * e;
        for a in 0..4 {
            for b in 0..=a {
                m.add(base + a, base + b, me[a][b]);
                k.add(base + a, base + b, ke[a][b]);
            }
        }
    }
    (m, k)
}

#[derive(Debug, Clone)]
struct GaussPoint {
    weight: f64,
    phi: [f64; 4],
}

/// Assembled and clamped beam discretization. Immutable after assembly.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub mesh: Mesh,
    pub mass: SymBand,
    pub stiffness: SymBand,
    pub n_free: usize,
    gauss: Vec<GaussPoint>,
}

/// Builds the clamped system for `mesh`.
pub fn assemble(mesh: &Mesh) -> Result<FemSystem, FemError> {
    if mesh.n_nodes < 3 {
        return Err(FemError::TooFewNodes(mesh.n_nodes));
    }
    let (m, k) = assemble_full(mesh);
    let n_free = mesh.n_free();
    let gauss = gauss_legendre_unit()
        .iter()
        .map(|&(xi, w)| GaussPoint {
            weight: w * mesh.h,
            phi: shape_functions(xi, mesh.h).values,
        })
        .collect();
    Ok(FemSystem {
        mesh: *mesh,
        mass: m.principal(2, n_free),
        stiffness: k.principal(2, n_free),
        n_free,
        gauss,
    })
}

impl FemSystem {
    pub fn new(length: f64, n_nodes: usize) -> Result<Self, FemError> {
        assemble(&Mesh::new(length, n_nodes)?)
    }

    /// Local coefficients `[q_e, r_e, q_{e+1}, r_{e+1}]`, zero on clamped DOFs.
    #[inline]
    pub fn element_coeffs(&self, field: &[f64], e: usize) -> [f64; 4] {
        let mut c = [0.0; 4];
        for (k, ck) in c.iter_mut().enumerate() {
            let g = 2 * e + k;
            if g >= 2 && g - 2 < self.n_free {
                *ck = field[g - 2];
            }
        }
        c
    }

    /// Value of the finite-element function at `x`.
    pub fn evaluate(&self, field: &[f64], x: f64) -> f64 {
        let h = self.mesh.h;
        let e = ((x / h).floor() as usize).min(self.mesh.n_elements() - 1);
        let xi = ((x - e as f64 * h) / h).clamp(0.0, 1.0);
        let c = self.element_coeffs(field, e);
        let s = shape_functions(xi, h);
        (0..4).map(|k| c[k] * s.values[k]).sum()
    }

    /// Node coordinates paired with nodal values (clamped ends included).
    pub fn nodal_values(&self, field: &[f64]) -> Vec<(f64, f64)> {
        (0..self.mesh.n_nodes)
            .map(|i| {
                let g = 2 * i;
                let v = if g >= 2 && g - 2 < self.n_free {
                    field[g - 2]
                } else {
                    0.0
                };
                (self.mesh.x(i), v)
            })
            .collect()
    }

    pub fn sup_norm(&self, field: &[f64]) -> f64 {
        field.iter().step_by(2).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest mismatch between `f`, `f'` and the clamped boundary values.
    pub fn clamp_mismatch(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
        let l = self.mesh.length;
        [f(0.0), f(l), df(0.0), df(l)]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Hermite interpolant of `f` with slope `df`, restricted to the free DOFs.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> NodalField {
        let mismatch = self.clamp_mismatch(&f, &df);
        if mismatch > 1e-12 {
            log::warn!(
                "interpolated data violates the clamped boundary conditions (mismatch {mismatch:.3e}); boundary values dropped"
            );
        }
        let mut out = NodalField::zeros(self.n_free);
        for i in 1..self.mesh.n_nodes - 1 {
            let x = self.mesh.x(i);
            out[2 * i - 2] = f(x);
            out[2 * i - 1] = df(x);
        }
        out
    }

    /// Load vector of `v|v|^{p-2}` tested against every free shape function.
    pub fn nonlinear_force_into(&self, q: &[f64], p: f64, out: &mut [f64]) -> Result<(), FemError> {
        if let Some(i) = q.iter().position(|v| !v.is_finite()) {
            return Err(FemError::NonFinite(i));
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let pm2 = p - 2.0;
        for e in 0..self.mesh.n_elements() {
            let c = self.element_coeffs(q, e);
            if c.iter().all(|v| *v == 0.0) {
                continue;
            }
            let mut local = [0.0; 4];
            for gp in &self.gauss {
                let v = c[0] * gp.phi[0] + c[1] * gp.phi[1] + c[2] * gp.phi[2] + c[3] * gp.phi[3];
                let g = gp.weight * v * v.abs().powf(pm2);
                for k in 0..4 {
                    local[k] += g * gp.phi[k];
                }
            }
            for (k, lk) in local.iter().enumerate() {
                let gidx = 2 * e + k;
                if gidx >= 2 && gidx - 2 < self.n_free {
                    out[gidx - 2] += lk;
                }
            }
        }
        Ok(())
    }

    pub fn nonlinear_force(&self, q: &[f64], p: f64) -> Result<NodalField, FemError> {
        let mut out = NodalField::zeros(self.n_free);
        self.nonlinear_force_into(q, p, &mut out)?;
        Ok(out)
    }

    /// `∫₀ᴸ |v_h|^p dx` by element-wise Gauss quadrature.
    pub fn lp_integral(&self, q: &[f64], p: f64) -> f64 {
        let mut acc = 0.0;
        for e in 0..self.mesh.n_elements() {
            let c = self.element_coeffs(q, e);
            for gp in &self.gauss {
                let v = c[0] * gp.phi[0] + c[1] * gp.phi[1] + c[2] * gp.phi[2] + c[3] * gp.phi[3];
                acc += gp.weight * v.abs().powf(p);
            }
        }
        acc
    }

    pub fn mass_norm_sq(&self, v: &[f64]) -> f64 {
        self.mass.quad_form(v)
    }

    /// `K q` assembled from element curvatures rather than the banded `K`.
    pub fn stiffness_apply(&self, q: &[f64]) -> Vec<f64> {
        let h = self.mesh.h;
        let (left, right) = (shape_functions(0.0, h).second, shape_functions(1.0, h).second);
        let mut out = vec![0.0; self.n_free];
        for e in 0..self.mesh.n_elements() {
            let c = self.element_coeffs(q, e);
            let a: f64 = (0..4).map(|k| c[k] * left[k]).sum();
            let b: f64 = (0..4).map(|k| c[k] * right[k]).sum();
            for k in 0..4 {
                let g = 2 * e + k;
                if g >= 2 && g - 2 < self.n_free {
                    out[g - 2] += h * ((2.0 * a + b) * left[k] + (a + 2.0 * b) * right[k]) / 6.0;
                }
            }
        }
        out
    }

    /// `qᵀ K q` summed from element curvatures, `∫ (w'')²`.
    ///
    /// Equal to `stiffness.quad_form(q)` in exact arithmetic, but a sum of
    /// squares, so it does not lose digits to the `1/h³` entries of `K`.
    pub fn stiffness_norm_sq(&self, q: &[f64]) -> f64 {
        let h = self.mesh.h;
        let (left, right) = (shape_functions(0.0, h).second, shape_functions(1.0, h).second);
        let mut acc = 0.0;
        for e in 0..self.mesh.n_elements() {
            let c = self.element_coeffs(q, e);
            let a: f64 = (0..4).map(|k| c[k] * left[k]).sum();
            let b: f64 = (0..4).map(|k| c[k] * right[k]).sum();
            // w'' is linear on the element
            acc += h * (0.25 * (a + b).powi(2) + (a - b).powi(2) / 12.0);
        }
        acc
    }

    /// Smallest eigenpair of `K x = μ M x` by inverse iteration.
    pub fn lowest_eigenpair(&self) -> Result<(f64, NodalField), FemError> {
        let kf: BandCholesky = self.stiffness.cholesky()?;
        let mut x: Vec<f64> = (0..self.n_free)
            .map(|i| if i % 2 == 0 { 1.0 } else { 0.0 })
            .collect();
        let mut mu = 0.0;
        for _ in 0..500 {
            let mut y = self.mass.mul_vec(&x);
            kf.solve_in_place(&mut y)?;
            let norm = self.mass.quad_form(&y).sqrt();
            y.iter_mut().for_each(|v| *v /= norm);
            let next = self.stiffness.quad_form(&y);
            x = y;
            if (next - mu).abs() <= 1e-15 * next {
                mu = next;
                break;
            }
            mu = next;
        }
        Ok((mu, NodalField(x)))
    }
}
