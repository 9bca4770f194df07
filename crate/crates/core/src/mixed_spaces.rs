//! Lowest-order Raviart–Thomas velocity space and piecewise-constant pressure
//! space on a [`RectMesh`], the assembled bilinear forms, loads and the two
//! interpolants Π_h (edge fluxes) and P_h (element averages).
//!
//! A velocity dof is the integrated normal flux across its edge in the
//! global normal direction, so every divergence coupling is exactly `±1`.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryPartition, DofMap, LocalEdge, Orientation, RectMesh};
use crate::quadrature::{RectRule, Rule1d, ASSEMBLY_POINTS, PROJECTION_POINTS};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Element-wise constant density ρ and Lamé parameter λ with their global bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField<T> {
    pub rho: Vec<T>,
    pub lambda: Vec<T>,
    pub rho0: T,
    pub rho1: T,
    pub lambda0: T,
    pub lambda1: T,
}

impl<T: Scalar> MaterialField<T> {
    pub fn uniform(mesh: &RectMesh<T>, rho: T, lambda: T) -> Result<Self> {
        let m = Self {
            rho: vec![rho; mesh.num_elements()],
            lambda: vec![lambda; mesh.num_elements()],
            rho0: rho,
            rho1: rho,
            lambda0: lambda,
            lambda1: lambda,
        };
        m.validate(mesh)?;
        Ok(m)
    }

    /// Samples ρ and λ at element centroids; `bounds` is `[ρ0, ρ1, λ0, λ1]`.
    pub fn from_fns(
        mesh: &RectMesh<T>,
        rho: impl Fn(T, T) -> T,
        lambda: impl Fn(T, T) -> T,
        bounds: [T; 4],
    ) -> Result<Self> {
        let centroids: Vec<(T, T)> = (0..mesh.num_elements())
            .map(|e| mesh.element_centroid(e))
            .collect();
        let m = Self {
            rho: centroids.iter().map(|&(x, y)| rho(x, y)).collect(),
            lambda: centroids.iter().map(|&(x, y)| lambda(x, y)).collect(),
            rho0: bounds[0],
            rho1: bounds[1],
            lambda0: bounds[2],
            lambda1: bounds[3],
        };
        m.validate(mesh)?;
        Ok(m)
    }

    pub fn validate(&self, mesh: &RectMesh<T>) -> Result<()> {
        let n = mesh.num_elements();
        if self.rho.len() != n || self.lambda.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "material has {} / {} values for {} elements",
                self.rho.len(),
                self.lambda.len(),
                n
            )));
        }
        if !(self.rho0 > T::zero()) || !(self.lambda0 > T::zero()) {
            return Err(Error::MaterialBounds {
                element: 0,
                detail: format!(
                    "lower bounds must be positive (rho0 = {}, lambda0 = {})",
                    self.rho0, self.lambda0
                ),
            });
        }
        for e in 0..n {
            let (r, l) = (self.rho[e], self.lambda[e]);
            if !(r >= self.rho0 && r <= self.rho1) {
                return Err(Error::MaterialBounds {
                    element: e,
                    detail: format!("rho = {r} not in [{}, {}]", self.rho0, self.rho1),
                });
            }
            if !(l >= self.lambda0 && l <= self.lambda1) {
                return Err(Error::MaterialBounds {
                    element: e,
                    detail: format!("lambda = {l} not in [{}, {}]", self.lambda0, self.lambda1),
                });
            }
        }
        Ok(())
    }
}

/// Value of the local RT0 shape function `k` of the element with lower-left
/// corner `(xa, ya)`. No bounds checking.
#[inline]
pub(crate) fn local_shape<T: Scalar>(mesh: &RectMesh<T>, xa: T, ya: T, k: LocalEdge, x: T, y: T) -> [T; 2] {
    let area = mesh.element_area();
    match k {
        LocalEdge::Left => [(xa + mesh.hx - x) / area, T::zero()],
        LocalEdge::Right => [(x - xa) / area, T::zero()],
        LocalEdge::Bottom => [T::zero(), (ya + mesh.hy - y) / area],
        LocalEdge::Top => [T::zero(), (y - ya) / area],
    }
}

/// RT0 shape function of `element` attached to `local_edge` (0 = left,
/// 1 = right, 2 = bottom, 3 = top), evaluated at `(x, y)`.
///
/// Its flux across the own edge in the global normal direction is 1 and
/// vanishes across the other three edges.
pub fn rt0_basis_eval<T: Scalar>(
    mesh: &RectMesh<T>,
    element: usize,
    local_edge: usize,
    x: T,
    y: T,
) -> Result<[T; 2]> {
    let k = LocalEdge::from_index(local_edge)?;
    if element >= mesh.num_elements() || !mesh.contains(element, x, y) {
        return Err(Error::PointOutsideElement {
            element,
            x: x.as_f64(),
            y: y.as_f64(),
        });
    }
    let (xa, ya) = mesh.element_origin(element);
    Ok(local_shape(mesh, xa, ya, k, x, y))
}

/// The three assembled forms over free velocity dofs.
#[derive(Debug, Clone)]
pub struct MixedOperators<T> {
    /// `(ρ φ_i, φ_j)`
    pub a: CsrMatrix<T>,
    /// `(λ⁻¹ w_q, w_q) = |T| / λ_T`
    pub c_diag: Vec<T>,
    /// `(∇·φ_i, w_q)`, one row per element.
    pub d: CsrMatrix<T>,
    /// `Dᵀ`, kept for the pressure term of the momentum equation.
    pub d_t: CsrMatrix<T>,
    pub dofs: DofMap,
}

impl<T: Scalar> MixedOperators<T> {
    pub fn num_velocity(&self) -> usize {
        self.dofs.num_free()
    }

    pub fn num_pressure(&self) -> usize {
        self.c_diag.len()
    }

    /// `P = C⁻¹ D U`, the pressure consistent with a velocity vector.
    pub fn pressure_from_velocity(&self, u: &[T]) -> Vec<T> {
        let mut p = vec![T::zero(); self.num_pressure()];
        self.d.spmv_into(u, &mut p);
        for (pi, &c) in p.iter_mut().zip(&self.c_diag) {
            *pi /= c;
        }
        p
    }

    /// `‖C P − D U‖_∞`
    pub fn constraint_residual(&self, u: &[T], p: &[T]) -> T {
        let mut du = vec![T::zero(); self.num_pressure()];
        self.d.spmv_into(u, &mut du);
        du.iter()
            .zip(p.iter().zip(&self.c_diag))
            .fold(T::zero(), |m, (&d, (&pi, &c))| m.max((c * pi - d).abs()))
    }

    /// `xᵀ A x`
    pub fn velocity_norm_sq(&self, x: &[T]) -> T {
        let mut ax = vec![T::zero(); x.len()];
        self.a.spmv_into(x, &mut ax);
        crate::scalar::dot(x, &ax)
    }

    /// `qᵀ C q`
    pub fn pressure_norm_sq(&self, q: &[T]) -> T {
        q.iter().zip(&self.c_diag).map(|(&v, &c)| c * v * v).sum()
    }
}

/// Assembles `A`, `C` and `D`; Γ_N edges are removed from the velocity space.
pub fn assemble_operators<T: Scalar>(
    mesh: &RectMesh<T>,
    bc: &BoundaryPartition,
    material: &MaterialField<T>,
) -> Result<MixedOperators<T>> {
    material.validate(mesh)?;
    let dofs = mesh.classify_edges(bc);
    let n = dofs.num_free();
    let rule = RectRule::gauss(ASSEMBLY_POINTS);
    let area = mesh.element_area();

    let mut a_trip = Vec::with_capacity(mesh.num_elements() * 8);
    let mut d_trip = Vec::with_capacity(mesh.num_elements() * 4);
    let mut c_diag = Vec::with_capacity(mesh.num_elements());

    for e in 0..mesh.num_elements() {
        let (xa, ya) = mesh.element_origin(e);
        let edges = mesh.element_edges(e);
        let free: [Option<usize>; 4] = edges.map(|g| dofs.free_index(g));
        let mut local = [[T::zero(); 4]; 4];
        for (x, y, w) in rule.points_on(xa, ya, mesh.hx, mesh.hy) {
            let phi = LocalEdge::ALL.map(|k| local_shape(mesh, xa, ya, k, x, y));
            for a in 0..4 {
                for b in 0..4 {
                    local[a][b] += w * (phi[a][0] * phi[b][0] + phi[a][1] * phi[b][1]);
                }
            }
        }
        let rho = material.rho[e];
        for a in 0..4 {
            let Some(i) = free[a] else { continue };
            for b in 0..4 {
                let Some(j) = free[b] else { continue };
                // x- and y-shape functions are orthogonal; skip exact zeros
                if local[a][b] != T::zero() {
                    a_trip.push((i, j, rho * local[a][b]));
                }
            }
            let sign = if LocalEdge::ALL[a].outward_sign() > 0 { T::one() } else { -T::one() };
            d_trip.push((e, i, sign));
        }
        c_diag.push(area / material.lambda[e]);
    }

    let a = CsrMatrix::from_triplets(n, n, a_trip)?;
    let d = CsrMatrix::from_triplets(mesh.num_elements(), n, d_trip)?;
    let d_t = d.transpose();
    Ok(MixedOperators {
        a,
        c_diag,
        d,
        d_t,
        dofs,
    })
}

/// `(f(·, t), φ_i)` for every free velocity dof.
pub fn assemble_load<T: Scalar>(
    mesh: &RectMesh<T>,
    dofs: &DofMap,
    f: &dyn Fn(T, T, T) -> [T; 2],
    t: T,
) -> Vec<T> {
    let rule = RectRule::gauss(ASSEMBLY_POINTS);
    let mut load = vec![T::zero(); dofs.num_free()];
    for e in 0..mesh.num_elements() {
        let (xa, ya) = mesh.element_origin(e);
        let edges = mesh.element_edges(e);
        for (x, y, w) in rule.points_on(xa, ya, mesh.hx, mesh.hy) {
            let fv = f(x, y, t);
            for k in LocalEdge::ALL {
                if let Some(i) = dofs.free_index(edges[k as usize]) {
                    let phi = local_shape(mesh, xa, ya, k, x, y);
                    load[i] += w * (fv[0] * phi[0] + fv[1] * phi[1]);
                }
            }
        }
    }
    load
}

/// Π_h: integrated normal flux `∫_e z·ν ds` on every free edge.
pub fn project_velocity<T: Scalar>(
    mesh: &RectMesh<T>,
    dofs: &DofMap,
    z: &dyn Fn(T, T) -> [T; 2],
) -> Vec<T> {
    let rule = Rule1d::gauss(PROJECTION_POINTS);
    dofs.free_edges()
        .iter()
        .map(|&edge| {
            let ((xs, ys), (xe, ye)) = mesh.edge_endpoints(edge);
            match mesh.edge_orientation(edge) {
                Orientation::Vertical => rule.integrate(ys, ye, |y| z(xs, y)[0]),
                Orientation::Horizontal => rule.integrate(xs, xe, |x| z(x, ys)[1]),
            }
        })
        .collect()
}

/// P_h: element averages of `phi`.
pub fn project_pressure<T: Scalar>(mesh: &RectMesh<T>, phi: &dyn Fn(T, T) -> T) -> Vec<T> {
    let rule = RectRule::gauss(PROJECTION_POINTS);
    let area = mesh.element_area();
    (0..mesh.num_elements())
        .map(|e| {
            let (xa, ya) = mesh.element_origin(e);
            rule.integrate(xa, ya, mesh.hx, mesh.hy, phi) / area
        })
        .collect()
}

/// Value of the discrete velocity field at `(x, y)` inside `element`.
pub fn velocity_value<T: Scalar>(
    mesh: &RectMesh<T>,
    dofs: &DofMap,
    coeffs: &[T],
    element: usize,
    x: T,
    y: T,
) -> [T; 2] {
    let (xa, ya) = mesh.element_origin(element);
    let edges = mesh.element_edges(element);
    let mut v = [T::zero(); 2];
    for k in LocalEdge::ALL {
        if let Some(i) = dofs.free_index(edges[k as usize]) {
            let phi = local_shape(mesh, xa, ya, k, x, y);
            v[0] += coeffs[i] * phi[0];
            v[1] += coeffs[i] * phi[1];
        }
    }
    v
}

/// `‖ρ^{1/2}(u − U)‖` by element quadrature.
pub fn velocity_error_l2<T: Scalar>(
    mesh: &RectMesh<T>,
    dofs: &DofMap,
    material: &MaterialField<T>,
    coeffs: &[T],
    exact: &dyn Fn(T, T) -> [T; 2],
) -> T {
    let rule = RectRule::gauss(ASSEMBLY_POINTS);
    let mut acc = T::zero();
    for e in 0..mesh.num_elements() {
        let (xa, ya) = mesh.element_origin(e);
        let local = rule.integrate(xa, ya, mesh.hx, mesh.hy, |x, y| {
            let u = exact(x, y);
            let v = velocity_value(mesh, dofs, coeffs, e, x, y);
            let (dx, dy) = (u[0] - v[0], u[1] - v[1]);
            dx * dx + dy * dy
        });
        acc += material.rho[e] * local;
    }
    acc.sqrt()
}

/// `‖λ^{-1/2}(p − P)‖` by element quadrature.
pub fn pressure_error_l2<T: Scalar>(
    mesh: &RectMesh<T>,
    material: &MaterialField<T>,
    coeffs: &[T],
    exact: &dyn Fn(T, T) -> T,
) -> T {
    let rule = RectRule::gauss(ASSEMBLY_POINTS);
    let mut acc = T::zero();
    for e in 0..mesh.num_elements() {
        let (xa, ya) = mesh.element_origin(e);
        let local = rule.integrate(xa, ya, mesh.hx, mesh.hy, |x, y| {
            let d = exact(x, y) - coeffs[e];
            d * d
        });
        acc += local / material.lambda[e];
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryPartition;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> RectMesh<f64> {
        RectMesh::unit_square(n).unwrap()
    }

    #[test]
    fn basis_normalization_on_unit_square() {
        let m = unit(1);
        for y in [0.0, 0.3, 1.0] {
            assert_eq!(rt0_basis_eval(&m, 0, 1, 1.0, y).unwrap(), [1.0, 0.0]);
            assert_eq!(rt0_basis_eval(&m, 0, 1, 0.0, y).unwrap(), [0.0, 0.0]);
        }
    }

    #[test]
    fn basis_on_scaled_element() {
        let h = 0.3;
        let m = RectMesh::new(1, 1, [0.0, h, 0.0, h]).unwrap();
        for (x, y) in [(0.1, 0.2), (0.25, 0.0), (0.3, 0.3)] {
            let v = rt0_basis_eval(&m, 0, 1, x, y).unwrap();
            assert_relative_eq!(v[0], x / (h * h), epsilon = 1e-14);
            assert_eq!(v[1], 0.0);
        }
    }

    #[test]
    fn basis_errors() {
        let m = unit(2);
        assert!(matches!(rt0_basis_eval(&m, 0, 4, 0.1, 0.1), Err(Error::InvalidLocalEdge(4))));
        assert!(matches!(
            rt0_basis_eval(&m, 0, 0, 0.9, 0.1),
            Err(Error::PointOutsideElement { .. })
        ));
    }

    #[test]
    fn basis_fluxes_are_kronecker() {
        // flux of each shape function through the four edges of a 2x3 element
        let m = RectMesh::new(1, 1, [1.0, 3.0, -1.0, 2.0]).unwrap();
        let rule = Rule1d::<f64>::gauss(4);
        for k in 0..4 {
            let f = |x: f64, y: f64| rt0_basis_eval(&m, 0, k, x, y).unwrap();
            let fluxes = [
                rule.integrate(-1.0, 2.0, |y| f(1.0, y)[0]),
                rule.integrate(-1.0, 2.0, |y| f(3.0, y)[0]),
                rule.integrate(1.0, 3.0, |x| f(x, -1.0)[1]),
                rule.integrate(1.0, 3.0, |x| f(x, 2.0)[1]),
            ];
            for (j, flux) in fluxes.iter().enumerate() {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(*flux, expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn single_element_divergence_and_pressure_mass() {
        let m = unit(1);
        let bc = BoundaryPartition::all_dirichlet();
        let ops = assemble_operators(&m, &bc, &MaterialField::uniform(&m, 1.0, 1.0).unwrap()).unwrap();
        let row: Vec<f64> = (0..4).map(|j| ops.d.get(0, j)).collect();
        assert_eq!(row, vec![-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(ops.c_diag, vec![1.0]);

        let ops4 = assemble_operators(&m, &bc, &MaterialField::uniform(&m, 1.0, 4.0).unwrap()).unwrap();
        assert_eq!(ops4.c_diag, vec![0.25]);
    }

    #[test]
    fn material_bounds_are_enforced() {
        let m = unit(2);
        let bad = MaterialField::from_fns(&m, |x, _| 1.0 + x, |_, _| 1.0, [1.0, 1.2, 1.0, 1.0]);
        assert!(matches!(bad, Err(Error::MaterialBounds { .. })));
        let good = MaterialField::from_fns(&m, |x, _| 1.0 + x, |_, _| 1.0, [1.0, 2.0, 1.0, 1.0]).unwrap();
        assert_eq!(good.rho, vec![1.25, 1.75, 1.25, 1.75]);
        assert!(MaterialField::uniform(&m, 0.0, 1.0).is_err());
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let m = unit(5);
        let mat = MaterialField::from_fns(&m, |x, y| 1.0 + x * y, |_, _| 2.0, [1.0, 2.0, 2.0, 2.0]).unwrap();
        let ops = assemble_operators(&m, &BoundaryPartition::all_neumann(), &mat).unwrap();
        assert!(ops.a.max_asymmetry() <= 1e-14);
        assert!(ops.c_diag.iter().all(|&c| c > 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v: Vec<f64> = (0..ops.num_velocity()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(ops.velocity_norm_sq(&v) > 0.0);
        }
        for i in 0..ops.a.nrows() {
            assert!(ops.a.row(i).count() <= 7);
        }
    }

    #[test]
    fn divergence_columns_follow_the_divergence_theorem() {
        let m = unit(4);
        let ops = assemble_operators(
            &m,
            &BoundaryPartition::all_dirichlet(),
            &MaterialField::uniform(&m, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let dt = &ops.d_t;
        for (k, &edge) in ops.dofs.free_edges().iter().enumerate() {
            let sum: f64 = dt.row(k).map(|(_, v)| v).sum();
            let count = dt.row(k).count();
            if m.edge_side(edge).is_some() {
                assert_eq!(count, 1);
                assert_eq!(sum.abs(), 1.0);
            } else {
                assert_eq!(count, 2);
                assert_eq!(sum, 0.0);
            }
        }
    }

    #[test]
    fn constant_load_on_unit_square() {
        let m = unit(1);
        let dofs = m.classify_edges(&BoundaryPartition::all_dirichlet());
        let c = 3.0;
        let load = assemble_load(&m, &dofs, &|_, _, _| [c, 0.0], 0.0);
        assert_relative_eq!(load[0], c / 2.0, epsilon = 1e-14);
        assert_relative_eq!(load[1], c / 2.0, epsilon = 1e-14);
        assert_eq!(load[2], 0.0);
        assert_eq!(load[3], 0.0);
        let zero = assemble_load(&m, &dofs, &|_, _, _| [0.0, 0.0], 1.0);
        assert_eq!(zero, vec![0.0; 4]);
    }

    #[test]
    fn flux_interpolant_of_simple_fields() {
        let m = unit(1);
        let dofs = m.classify_edges(&BoundaryPartition::all_dirichlet());
        assert_eq!(project_velocity(&m, &dofs, &|_, _| [1.0, 0.0]), vec![1.0, 1.0, 0.0, 0.0]);
        let lin = project_velocity(&m, &dofs, &|x, y| [x, y]);
        for (got, want) in lin.iter().zip([0.0, 1.0, 0.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn flux_interpolant_drops_constrained_edges() {
        let m = unit(2);
        let dofs = m.classify_edges(&BoundaryPartition::all_neumann());
        let v = project_velocity(&m, &dofs, &|_, _| [1.0, 2.0]);
        assert_eq!(v.len(), dofs.num_free());
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn pressure_averages() {
        let m = unit(3);
        assert!(project_pressure(&m, &|_, _| 5.0).iter().all(|&v| (v - 5.0).abs() < 1e-14));
        let strip = RectMesh::new(2, 1, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let avg = project_pressure(&strip, &|x, _| x);
        assert_relative_eq!(avg[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(avg[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn reconstruction_reproduces_rt0_fields() {
        // (a + b x, c + d y) lies in RT0, so interpolation is exact
        let m = RectMesh::new(3, 2, [0.0, 1.5, 0.0, 1.0]).unwrap();
        let dofs = m.classify_edges(&BoundaryPartition::all_dirichlet());
        let field = |x: f64, y: f64| [0.5 - 2.0 * x, 1.0 + 3.0 * y];
        let coeffs = project_velocity(&m, &dofs, &field);
        let mat = MaterialField::uniform(&m, 1.0, 1.0).unwrap();
        assert!(velocity_error_l2(&m, &dofs, &mat, &coeffs, &field) < 1e-13);
        let p = project_pressure(&m, &|_, _| 2.0);
        assert!(pressure_error_l2(&m, &mat, &p, &|_, _| 2.0) < 1e-13);
    }
}
