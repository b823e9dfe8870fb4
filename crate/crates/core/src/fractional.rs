//! Diffusive (extended-variable) approximation of the tempered Caputo damping.
//!
//! The memory kernel is replaced by a family of first-order modes
//! `G_t + (ξ² + ϑ) G = μ(ξ) v`, sampled on a uniform grid of `(0, R]`. The
//! continuous representation integrates over all of ℝ; the weight `μ` is even,
//! so every sum over the half-line grid carries a factor 2.

use std::f64::consts::PI;

use crate::fem::NodalField;

/// Uniform half-line grid `ξ_ℓ = ℓ Δξ`, `ℓ = 1..=M`, with weights `μ_ℓ = ξ_ℓ^{(2θ-1)/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiGrid {
    pub theta: f64,
    pub r: f64,
    pub dxi: f64,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
}

impl XiGrid {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

pub fn build_grid(theta: f64, r: f64, m_xi: usize) -> XiGrid {
    debug_assert!(theta > 0.0 && theta < 1.0 && r > 0.0 && m_xi >= 1);
    let dxi = r / m_xi as f64;
    let expo = (2.0 * theta - 1.0) / 2.0;
    let xi: Vec<f64> = (1..=m_xi).map(|l| l as f64 * dxi).collect();
    let mu = xi.iter().map(|x| x.powf(expo)).collect();
    XiGrid {
        theta,
        r,
        dxi,
        xi,
        mu,
    }
}

/// `A₀ = ∫_ℝ β²(α)/(α² + ϑ) dα = (π / sin θπ) ϑ^{θ-1}`.
pub fn analytic_a0(theta: f64, vartheta: f64) -> f64 {
    PI / (theta * PI).sin() * vartheta.powf(theta - 1.0)
}

/// Grid approximation of `A₀`: `2 Σ μ_ℓ² / (ξ_ℓ² + ϑ) Δξ`.
pub fn quadrature_a0(grid: &XiGrid, vartheta: f64) -> f64 {
    2.0 * grid
        .xi
        .iter()
        .zip(&grid.mu)
        .map(|(x, m)| m * m / (x * x + vartheta))
        .sum::<f64>()
        * grid.dxi
}

/// Mode amplitudes, one row of nodal coefficients per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusiveField {
    m_xi: usize,
    n_free: usize,
    data: Vec<f64>,
}

impl DiffusiveField {
    pub fn zeros(m_xi: usize, n_free: usize) -> Self {
        Self {
            m_xi,
            n_free,
            data: vec![0.0; m_xi * n_free],
        }
    }

    pub fn m_xi(&self) -> usize {
        self.m_xi
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.n_free..(l + 1) * self.n_free]
    }

    pub fn row_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[l * self.n_free..(l + 1) * self.n_free]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_free)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `α·self + other`.
    pub fn axpy(&self, alpha: f64, other: &DiffusiveField) -> DiffusiveField {
        assert_eq!(self.data.len(), other.data.len());
        DiffusiveField {
            m_xi: self.m_xi,
            n_free: self.n_free,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + b)
                .collect(),
        }
    }

    /// `Σ_ℓ w_ℓ G_ℓ` with the rows accumulated in grid order.
    pub fn weighted_sum(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.m_xi);
        let mut out = vec![0.0; self.n_free];
        for (row, w) in self.rows().zip(weights) {
            for (o, g) in out.iter_mut().zip(row) {
                *o += w * g;
            }
        }
        out
    }
}

/// Crank–Nicolson coefficients of the mode equations for a fixed `Δt`.
#[derive(Debug, Clone)]
pub struct AuxScheme {
    /// `(2 − Δt(ξ²+ϑ)) / (2 + Δt(ξ²+ϑ))`
    pub decay: Vec<f64>,
    /// `2Δt μ / (2 + Δt(ξ²+ϑ))`
    pub gain: Vec<f64>,
    /// `decay · μ`
    pub mu_tilde: Vec<f64>,
    pub dxi: f64,
}

impl AuxScheme {
    pub fn new(grid: &XiGrid, vartheta: f64, dt: f64) -> Self {
        let mut decay = Vec::with_capacity(grid.len());
        let mut gain = Vec::with_capacity(grid.len());
        let mut mu_tilde = Vec::with_capacity(grid.len());
        for (x, mu) in grid.xi.iter().zip(&grid.mu) {
            let a = dt * (x * x + vartheta);
            let c = (2.0 - a) / (2.0 + a);
            decay.push(c);
            gain.push(2.0 * dt * mu / (2.0 + a));
            mu_tilde.push(c * mu);
        }
        Self {
            decay,
            gain,
            mu_tilde,
            dxi: grid.dxi,
        }
    }

    /// Advances every mode one step with the midpoint velocity `v_half`.
    pub fn update_in_place(&self, field: &mut DiffusiveField, v_half: &[f64]) {
        assert_eq!(v_half.len(), field.n_free);
        for l in 0..field.m_xi {
            let (c, d) = (self.decay[l], self.gain[l]);
            for (g, v) in field.row_mut(l).iter_mut().zip(v_half) {
                *g = c * *g + d * v;
            }
        }
    }

    /// Part of the next-step fractional force known from the current modes:
    /// `2b Σ μ̃_ℓ G_ℓ Δξ`.
    pub fn history_force(&self, field: &DiffusiveField, b: f64) -> Vec<f64> {
        let s = 2.0 * b * self.dxi;
        let mut out = field.weighted_sum(&self.mu_tilde);
        out.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// One Crank–Nicolson step of all modes.
pub fn update_aux(
    grid: &XiGrid,
    field: &DiffusiveField,
    vartheta: f64,
    dt: f64,
    v_half: &[f64],
) -> DiffusiveField {
    let mut next = field.clone();
    AuxScheme::new(grid, vartheta, dt).update_in_place(&mut next, v_half);
    next
}

/// Nodal coefficients of the fractional-derivative approximation `2b Σ μ_ℓ G_ℓ Δξ`.
pub fn fractional_force(grid: &XiGrid, field: &DiffusiveField, b: f64) -> NodalField {
    let s = 2.0 * b * grid.dxi;
    let mut out = field.weighted_sum(&grid.mu);
    out.iter_mut().for_each(|v| *v *= s);
    NodalField(out)
}

/// Scalar multiplying the mass matrix in the augmented damping operator:
/// `Δt b Σ 2μ_ℓ² Δξ / (2 + Δt(ξ_ℓ² + ϑ))`.
pub fn c_augm_coeff(grid: &XiGrid, vartheta: f64, dt: f64, b: f64) -> f64 {
    dt * b
        * grid
            .xi
            .iter()
            .zip(&grid.mu)
            .map(|(x, mu)| 2.0 * mu * mu * grid.dxi / (2.0 + dt * (x * x + vartheta)))
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_grid(0.5, 10.0, 5);
        assert_eq!(g.xi, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(g.dxi, 2.0);
        assert!(g.mu.iter().all(|m| *m == 1.0));
        let g = build_grid(0.75, 3.0, 3);
        assert_eq!(g.mu[0], 1.0);
        assert!(g.mu.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn analytic_a0_examples() {
        assert!((analytic_a0(0.5, 0.3) - 5.735_737_209_545_476).abs() < 1e-12);
        assert!((analytic_a0(0.5, 1.0) - PI).abs() < 1e-15);
        for th in [0.2, 0.45, 0.8] {
            assert!((analytic_a0(th, 1.0) - PI / (th * PI).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn quadrature_a0_single_point() {
        let g = build_grid(0.5, 1.0, 1);
        assert!((quadrature_a0(&g, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_a0_refinement_improves() {
        let exact = analytic_a0(0.5, 0.3);
        let mut prev = f64::INFINITY;
        let (mut r, mut m) = (25.0, 500usize);
        for _ in 0..4 {
            let err = (quadrature_a0(&build_grid(0.5, r, m), 0.3) - exact).abs();
            assert!(err < prev, "error {err} did not improve on {prev}");
            prev = err;
            r *= 2.0;
            m *= 4;
        }
        let err = (quadrature_a0(&build_grid(0.5, 200.0, 40_000), 0.3) - exact).abs();
        assert!(err / exact < 1e-2);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = build_grid(0.4, 50.0, 30);
        let f = DiffusiveField::zeros(30, 4);
        let next = update_aux(&g, &f, 0.3, 1e-2, &[0.0; 4]);
        assert_eq!(next, f);
        assert!(fractional_force(&g, &f, 0.7).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decay_factor_is_contractive() {
        let g = build_grid(0.3, 500.0, 1000);
        for dt in [1e-5, 1e-3, 0.1, 10.0] {
            let s = AuxScheme::new(&g, 0.01, dt);
            assert!(s.decay.iter().all(|c| c.abs() < 1.0));
            for (mt, mu) in s.mu_tilde.iter().zip(&g.mu) {
                assert!(mt.abs() <= *mu);
            }
        }
    }

    #[test]
    fn constant_drive_converges_to_fixed_point() {
        let g = build_grid(0.6, 5.0, 5);
        let vt = 0.3;
        let c = 1.7;
        let s = AuxScheme::new(&g, vt, 0.01);
        let mut f = DiffusiveField::zeros(5, 1);
        for _ in 0..20_000 {
            s.update_in_place(&mut f, &[c]);
        }
        for l in 0..5 {
            let target = g.mu[l] * c / (g.xi[l] * g.xi[l] + vt);
            assert!((f.row(l)[0] - target).abs() < 1e-12 * target.max(1.0));
        }
    }

    #[test]
    fn fractional_force_is_linear() {
        let g = build_grid(0.35, 20.0, 7);
        let mut a = DiffusiveField::zeros(7, 3);
        let mut b = DiffusiveField::zeros(7, 3);
        for l in 0..7 {
            for i in 0..3 {
                a.row_mut(l)[i] = (l * 3 + i) as f64 * 0.1 - 0.4;
                b.row_mut(l)[i] = ((l + i) % 4) as f64 - 1.5;
            }
        }
        let alpha = -2.5;
        let lhs = fractional_force(&g, &a.axpy(alpha, &b), 0.9);
        let fa = fractional_force(&g, &a, 0.9);
        let fb = fractional_force(&g, &b, 0.9);
        for i in 0..3 {
            assert!((lhs[i] - (alpha * fa[i] + fb[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn c_augm_examples() {
        let g = XiGrid {
            theta: 0.5,
            r: 1.0,
            dxi: 1.0,
            xi: vec![1.0],
            mu: vec![1.0],
        };
        assert!((c_augm_coeff(&g, 1.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        let g = build_grid(0.5, 200.0, 400);
        let small = c_augm_coeff(&g, 0.3, 1e-12, 1.0);
        assert!((small / 1e-12 - 200.0).abs() < 1e-5);
    }

    #[test]
    fn c_augm_is_a_shifted_a0_sum() {
        // Δt b Σ 2μ²Δξ/(2 + Δt(ξ²+ϑ)) = b Σ 2μ²Δξ/(ξ² + ϑ + 2/Δt)
        let g = build_grid(0.5, 200.0, 4000);
        for dt in [1e-4, 1e-3, 1e-1] {
            let c = c_augm_coeff(&g, 0.3, dt, 0.8);
            let shifted = 0.8 * quadrature_a0(&g, 0.3 + 2.0 / dt);
            assert!((c - shifted).abs() < 1e-12 * shifted);
        }
    }

    #[test]
    fn unforced_mode_energy_decays() {
        let g = build_grid(0.7, 30.0, 12);
        let s = AuxScheme::new(&g, 0.2, 0.05);
        let mut f = DiffusiveField::zeros(12, 2);
        for l in 0..12 {
            f.row_mut(l).copy_from_slice(&[1.0 + l as f64, -0.5]);
        }
        let energy = |f: &DiffusiveField| -> f64 {
            f.rows()
                .zip(&g.mu)
                .map(|(r, m)| m * r.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                * g.dxi
        };
        let mut e = energy(&f);
        for _ in 0..200 {
            s.update_in_place(&mut f, &[0.0, 0.0]);
            let next = energy(&f);
            assert!(next <= e);
            e = next;
        }
    }
}
