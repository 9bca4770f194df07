//! Dense brute-force oracles built from scratch with nalgebra.
//!
//! Nothing here calls into the library's assembly, quadrature or basis
//! code: edge numbering is recomputed, the RT0 basis is obtained by
//! inverting the flux functionals on monomials, and all integrals use a
//! hard-coded Gauss rule.

#![allow(dead_code)]

use mixwave::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};

/// 2-point Gauss on [0, 1]; exact for cubics.
const G2: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];

/// 5-point Gauss on [-1, 1].
const G5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Composite 5-point Gauss over `[a, b] × [c, d]` with `k × k` cells.
pub fn integrate_box(a: f64, b: f64, c: f64, d: f64, k: usize, f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let (hx, hy) = ((b - a) / k as f64, (d - c) / k as f64);
    let mut sum = 0.0;
    for ci in 0..k {
        for cj in 0..k {
            let (x0, y0) = (a + ci as f64 * hx, c + cj as f64 * hy);
            for &(sx, wx) in &G5 {
                for &(sy, wy) in &G5 {
                    let x = x0 + 0.5 * hx * (sx + 1.0);
                    let y = y0 + 0.5 * hy * (sy + 1.0);
                    sum += wx * wy * f(x, y);
                }
            }
        }
    }
    sum * 0.25 * hx * hy
}

/// Boundary sides carrying a pressure condition (velocity dof kept free).
#[derive(Debug, Clone, Copy)]
pub struct PressureSides {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl PressureSides {
    pub const NONE: Self = Self {
        left: false,
        right: false,
        bottom: false,
        top: false,
    };
    pub const ALL: Self = Self {
        left: true,
        right: true,
        bottom: true,
        top: true,
    };
}

pub struct DenseOracle {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub hx: f64,
    pub hy: f64,
    /// Global edge indices of the unknowns, ascending.
    pub free: Vec<usize>,
    /// Per element: local edge (left, right, bottom, top) → global edge.
    pub element_edges: Vec<[usize; 4]>,
    /// Monomial coefficients of the local basis: `coef[(m, k)]`.
    pub coef: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub d: DMatrix<f64>,
}

impl DenseOracle {
    pub fn build(
        nx: usize,
        ny: usize,
        extents: [f64; 4],
        pressure: PressureSides,
        rho: &[f64],
        lambda: &[f64],
    ) -> Self {
        let hx = (extents[1] - extents[0]) / nx as f64;
        let hy = (extents[3] - extents[2]) / ny as f64;
        let nv = (nx + 1) * ny;
        let ne = nv + nx * (ny + 1);
        let vert = |i: usize, j: usize| j * (nx + 1) + i;
        let horiz = |i: usize, j: usize| nv + j * nx + i;

        let mut keep = vec![true; ne];
        for j in 0..ny {
            keep[vert(0, j)] = pressure.left;
            keep[vert(nx, j)] = pressure.right;
        }
        for i in 0..nx {
            keep[horiz(i, 0)] = pressure.bottom;
            keep[horiz(i, ny)] = pressure.top;
        }
        let free: Vec<usize> = (0..ne).filter(|&e| keep[e]).collect();
        let mut slot = vec![usize::MAX; ne];
        for (k, &e) in free.iter().enumerate() {
            slot[e] = k;
        }

        // flux functionals applied to (1,0), (s,0), (0,1), (0,r) in local coordinates
        let mut v = DMatrix::<f64>::zeros(4, 4);
        let flux_x = |s: f64, m: usize| match m {
            0 => hy,
            1 => s * hy,
            _ => 0.0,
        };
        let flux_y = |r: f64, m: usize| match m {
            2 => hx,
            3 => r * hx,
            _ => 0.0,
        };
        for m in 0..4 {
            v[(0, m)] = flux_x(0.0, m);
            v[(1, m)] = flux_x(hx, m);
            v[(2, m)] = flux_y(0.0, m);
            v[(3, m)] = flux_y(hy, m);
        }
        let coef = v.try_inverse().expect("flux functionals are unisolvent");

        let nel = nx * ny;
        let mut element_edges = Vec::with_capacity(nel);
        let mut a = DMatrix::zeros(free.len(), free.len());
        let mut d = DMatrix::zeros(nel, free.len());
        let mut c = DVector::zeros(nel);
        let area = hx * hy;
        for j in 0..ny {
            for i in 0..nx {
                let e = j * nx + i;
                let edges = [vert(i, j), vert(i + 1, j), horiz(i, j), horiz(i, j + 1)];
                element_edges.push(edges);
                c[e] = area / lambda[e];
                let phi = |k: usize, s: f64, r: f64| {
                    [coef[(0, k)] + coef[(1, k)] * s, coef[(2, k)] + coef[(3, k)] * r]
                };
                for (k, &ek) in edges.iter().enumerate() {
                    if !keep[ek] {
                        continue;
                    }
                    d[(e, slot[ek])] += (coef[(1, k)] + coef[(3, k)]) * area;
                    for (l, &el) in edges.iter().enumerate() {
                        if !keep[el] {
                            continue;
                        }
                        let mut sum = 0.0;
                        for &(gx, wx) in &G2 {
                            for &(gy, wy) in &G2 {
                                let (s, r) = (gx * hx, gy * hy);
                                let (p, q) = (phi(k, s, r), phi(l, s, r));
                                sum += wx * wy * (p[0] * q[0] + p[1] * q[1]);
                            }
                        }
                        a[(slot[ek], slot[el])] += rho[e] * sum * area;
                    }
                }
            }
        }
        Self {
            nx,
            ny,
            x0: extents[0],
            y0: extents[2],
            hx,
            hy,
            free,
            element_edges,
            coef,
            a,
            c,
            d,
        }
    }

    pub fn uniform(n: usize, pressure: PressureSides) -> Self {
        let ones = vec![1.0; n * n];
        Self::build(n, n, [0.0, 1.0, 0.0, 1.0], pressure, &ones, &ones)
    }

    pub fn schur(&self, coeff: f64) -> DMatrix<f64> {
        let cinv = DMatrix::from_diagonal(&self.c.map(|x| 1.0 / x));
        &self.a + coeff * self.d.transpose() * cinv * &self.d
    }

    /// `(f, φ_k)` for a load that is at most cubic in each variable.
    pub fn load(&self, f: &dyn Fn(f64, f64) -> [f64; 2]) -> DVector<f64> {
        let mut out = DVector::zeros(self.free.len());
        for (e, edges) in self.element_edges.iter().enumerate() {
            let (i, j) = (e % self.nx, e / self.nx);
            let (xa, ya) = (self.x0 + i as f64 * self.hx, self.y0 + j as f64 * self.hy);
            for (k, &ek) in edges.iter().enumerate() {
                let Some(slot) = self.free.iter().position(|&g| g == ek) else {
                    continue;
                };
                let mut sum = 0.0;
                for &(gx, wx) in &G2 {
                    for &(gy, wy) in &G2 {
                        let (s, r) = (gx * self.hx, gy * self.hy);
                        let phi = [
                            self.coef[(0, k)] + self.coef[(1, k)] * s,
                            self.coef[(2, k)] + self.coef[(3, k)] * r,
                        ];
                        let fv = f(xa + s, ya + r);
                        sum += wx * wy * (fv[0] * phi[0] + fv[1] * phi[1]);
                    }
                }
                out[slot] += sum * self.hx * self.hy;
            }
        }
        out
    }

    /// Solves the mixed system
    /// `A U + κ Dᵀ P = rhs`, `C P − D U = 0` without forming a Schur complement.
    pub fn saddle_solve(&self, kappa: f64, rhs: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (nu, np) = (self.free.len(), self.c.len());
        let mut k = DMatrix::zeros(nu + np, nu + np);
        k.view_mut((0, 0), (nu, nu)).copy_from(&self.a);
        k.view_mut((0, nu), (nu, np)).copy_from(&(kappa * self.d.transpose()));
        k.view_mut((nu, 0), (np, nu)).copy_from(&(-&self.d));
        for e in 0..np {
            k[(nu + e, nu + e)] = self.c[e];
        }
        let mut b = DVector::zeros(nu + np);
        b.rows_mut(0, nu).copy_from(rhs);
        let x = k.lu().solve(&b).expect("saddle system is nonsingular");
        (x.rows(0, nu).into_owned(), x.rows(nu, np).into_owned())
    }

    /// Largest `μ` with `Dᵀ C⁻¹ D v = μ A v`.
    pub fn max_generalized_eigenvalue(&self) -> f64 {
        let cinv = DMatrix::from_diagonal(&self.c.map(|x| 1.0 / x));
        let k = self.d.transpose() * cinv * &self.d;
        let chol = self.a.clone().cholesky().expect("A is SPD");
        let l = chol.l();
        let linv = l.clone().try_inverse().expect("triangular factor invertible");
        let sym = &linv * k * linv.transpose();
        let sym = (&sym + sym.transpose()) * 0.5;
        sym.symmetric_eigen().eigenvalues.max()
    }
}

pub fn dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m.get(i, j))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

pub fn vec_diff(a: &[f64], b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// One line of the acceptance report.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {id}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
