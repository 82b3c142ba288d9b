//! Element assembly for P1 and Q1 discretizations.
//!
//! All assembled operators are restricted to interior DOFs: homogeneous
//! Dirichlet conditions are imposed by elimination, which keeps the mass
//! matrix symmetric positive definite and the stiffness matrix nonsingular
//! as the interior point solver and its preconditioner assume.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::fem::mesh::Mesh2D;
use crate::fem::sources::{GaussianSourceGrid, PatchGrid};
use crate::linalg::CsrMatrix;

/// Dunavant 6-point rule on the reference triangle, exact for degree 4.
/// Barycentric coordinates with weights that sum to one (scale by area).
const TRI_Q4: [([f64; 3], f64); 6] = [
    (
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        0.223381589678011,
    ),
    (
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        0.109951743655322,
    ),
];

const GAUSS_2: [f64; 2] = [-0.577350269189626, 0.577350269189626];

struct Triangle {
    verts: [usize; 3],
    area: f64,
    /// Gradients of the three barycentric basis functions.
    grads: [[f64; 2]; 3],
}

fn triangle_geometry(mesh: &Mesh2D, t: &[usize; 3]) -> Triangle {
    let p: Vec<[f64; 2]> = t.iter().map(|&v| mesh.coords[v]).collect();
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det.abs();
    let inv = 1.0 / det;
    let grads = [
        [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
        [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
        [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
    ];
    Triangle {
        verts: *t,
        area,
        grads,
    }
}

/// Assembles the interior-restricted P1 mass and stiffness matrices.
pub fn p1_mass_stiffness(mesh: &Mesh2D) -> Result<(CsrMatrix, CsrMatrix)> {
    let n = mesh.interior_count();
    let mut trip_m = Vec::with_capacity(9 * mesh.triangles.len());
    let mut trip_k = Vec::with_capacity(9 * mesh.triangles.len());
    for t in &mesh.triangles {
        let tri = triangle_geometry(mesh, t);
        for i in 0..3 {
            let Some(gi) = mesh.interior_index[tri.verts[i]] else {
                continue;
            };
            for j in 0..3 {
                let Some(gj) = mesh.interior_index[tri.verts[j]] else {
                    continue;
                };
                let me = tri.area / 12.0 * if i == j { 2.0 } else { 1.0 };
                let ke = tri.area
                    * (tri.grads[i][0] * tri.grads[j][0] + tri.grads[i][1] * tri.grads[j][1]);
                trip_m.push((gi, gj, me));
                trip_k.push((gi, gj, ke));
            }
        }
    }
    Ok((
        CsrMatrix::from_triplets(n, n, &trip_m)?,
        CsrMatrix::from_triplets(n, n, &trip_k)?,
    ))
}

/// Nodal evaluation of the Gaussian sources at the interior vertices,
/// one column per source.
pub fn gaussian_nodal_matrix(mesh: &Mesh2D, grid: &GaussianSourceGrid) -> DMatrix<f64> {
    let n = mesh.interior_count();
    let l = grid.len();
    DMatrix::from_fn(n, l, |row, col| grid.eval(col, mesh.coords[mesh.interior[row]]))
}

/// SUPG stabilization parameter for one element:
/// `tau = h/(2|w|) (coth(Pe) - 1/Pe)` with `Pe = |w| h / 2` (unit diffusion).
fn supg_tau(h: f64, wind_norm: f64) -> f64 {
    let pe = wind_norm * h / 2.0;
    if pe < 1e-4 {
        // Series limit: tau -> h^2/12 as the wind vanishes.
        h * h / 12.0 * (1.0 - pe * pe / 15.0)
    } else {
        h / (2.0 * wind_norm) * (1.0 / pe.tanh() - 1.0 / pe)
    }
}

struct Q1Point {
    /// Quadrature weight times Jacobian determinant.
    w: f64,
    coords: [f64; 2],
    shape: [f64; 4],
    grad: [[f64; 2]; 4],
}

fn q1_points(mesh: &Mesh2D, quad: &[usize; 4]) -> Vec<Q1Point> {
    let h = mesh.h;
    let p0 = mesh.coords[quad[0]];
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut pts = Vec::with_capacity(4);
    for &xi in &GAUSS_2 {
        for &eta in &GAUSS_2 {
            let mut shape = [0.0; 4];
            let mut grad = [[0.0; 2]; 4];
            for (i, &(cx, cy)) in corners.iter().enumerate() {
                shape[i] = 0.25 * (1.0 + cx * xi) * (1.0 + cy * eta);
                // Physical gradient on an axis-aligned square of side h.
                grad[i] = [
                    0.25 * cx * (1.0 + cy * eta) * 2.0 / h,
                    0.25 * cy * (1.0 + cx * xi) * 2.0 / h,
                ];
            }
            pts.push(Q1Point {
                w: h * h / 4.0,
                coords: [p0[0] + (xi + 1.0) * h / 2.0, p0[1] + (eta + 1.0) * h / 2.0],
                shape,
                grad,
            });
        }
    }
    pts
}

/// Assembles the interior-restricted Q1 mass matrix and SUPG-stabilized
/// convection-diffusion stiffness matrix for a given wind field.
pub fn q1_supg_mass_stiffness(
    mesh: &Mesh2D,
    wind: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Result<(CsrMatrix, CsrMatrix)> {
    let n = mesh.interior_count();
    let mut trip_m = Vec::with_capacity(16 * mesh.quads.len());
    let mut trip_k = Vec::with_capacity(16 * mesh.quads.len());
    for quad in &mesh.quads {
        let pts = q1_points(mesh, quad);
        let center = [
            mesh.coords[quad[0]][0] + mesh.h / 2.0,
            mesh.coords[quad[0]][1] + mesh.h / 2.0,
        ];
        let wc = wind(center);
        let tau = supg_tau(mesh.h, (wc[0] * wc[0] + wc[1] * wc[1]).sqrt());
        let mut me = [[0.0f64; 4]; 4];
        let mut ke = [[0.0f64; 4]; 4];
        for pt in &pts {
            let w = wind(pt.coords);
            for i in 0..4 {
                let wgi = w[0] * pt.grad[i][0] + w[1] * pt.grad[i][1];
                for j in 0..4 {
                    let wgj = w[0] * pt.grad[j][0] + w[1] * pt.grad[j][1];
                    me[i][j] += pt.w * pt.shape[i] * pt.shape[j];
                    ke[i][j] += pt.w
                        * (pt.grad[i][0] * pt.grad[j][0]
                            + pt.grad[i][1] * pt.grad[j][1]
                            + wgj * pt.shape[i]
                            + tau * wgi * wgj);
                }
            }
        }
        for i in 0..4 {
            let Some(gi) = mesh.interior_index[quad[i]] else {
                continue;
            };
            for j in 0..4 {
                let Some(gj) = mesh.interior_index[quad[j]] else {
                    continue;
                };
                trip_m.push((gi, gj, me[i][j]));
                trip_k.push((gi, gj, ke[i][j]));
            }
        }
    }
    Ok((
        CsrMatrix::from_triplets(n, n, &trip_m)?,
        CsrMatrix::from_triplets(n, n, &trip_k)?,
    ))
}

/// SUPG-consistent load vector for a scalar source evaluated at quadrature
/// points: `l_i = sum_e int f (phi_i + tau w . grad phi_i)`.
pub fn q1_supg_load(
    mesh: &Mesh2D,
    wind: &dyn Fn([f64; 2]) -> [f64; 2],
    source: &dyn Fn([f64; 2]) -> f64,
) -> DVector<f64> {
    let n = mesh.interior_count();
    let mut load = DVector::zeros(n);
    for quad in &mesh.quads {
        let pts = q1_points(mesh, quad);
        let center = [
            mesh.coords[quad[0]][0] + mesh.h / 2.0,
            mesh.coords[quad[0]][1] + mesh.h / 2.0,
        ];
        let wc = wind(center);
        let tau = supg_tau(mesh.h, (wc[0] * wc[0] + wc[1] * wc[1]).sqrt());
        for pt in &pts {
            let f = source(pt.coords);
            if f == 0.0 {
                continue;
            }
            let w = wind(pt.coords);
            for i in 0..4 {
                let Some(gi) = mesh.interior_index[quad[i]] else {
                    continue;
                };
                let wgi = w[0] * pt.grad[i][0] + w[1] * pt.grad[i][1];
                load[gi] += pt.w * f * (pt.shape[i] + tau * wgi);
            }
        }
    }
    load
}

/// Load vectors of the patch-indicator sources, one column per patch.
/// Patches must align with the mesh (`m` divides `1/h`), so each cell lies
/// wholly inside one patch.
pub fn patch_load_matrix(
    mesh: &Mesh2D,
    patches: &PatchGrid,
    wind: &dyn Fn([f64; 2]) -> [f64; 2],
) -> DMatrix<f64> {
    let n = mesh.interior_count();
    let l = patches.len();
    let mut phi = DMatrix::zeros(n, l);
    for col in 0..l {
        let the_patch = col;
        let load = q1_supg_load(mesh, wind, &|x| {
            if patches.patch_of(x) == the_patch {
                1.0
            } else {
                0.0
            }
        });
        phi.set_column(col, &load);
    }
    phi
}

/// Galerkin vector of the quadratic term: `N(y)_j = int (y_h)^2 phi_j`,
/// integrated with the degree-4 triangle rule (exact for the cubic
/// integrand). Coefficients are interior; boundary values are zero.
pub fn p1_quadratic_term(mesh: &Mesh2D, y: &DVector<f64>) -> DVector<f64> {
    let n = mesh.interior_count();
    let mut out = DVector::zeros(n);
    for t in &mesh.triangles {
        let tri = triangle_geometry(mesh, t);
        let yv: Vec<f64> = tri
            .verts
            .iter()
            .map(|&v| mesh.interior_index[v].map_or(0.0, |g| y[g]))
            .collect();
        for (bary, w) in TRI_Q4 {
            let yq = yv[0] * bary[0] + yv[1] * bary[1] + yv[2] * bary[2];
            let common = tri.area * w * yq * yq;
            for i in 0..3 {
                if let Some(gi) = mesh.interior_index[tri.verts[i]] {
                    out[gi] += common * bary[i];
                }
            }
        }
    }
    out
}

/// Weighted mass matrix `W(y)_{ij} = int y_h phi_i phi_j`; the Jacobian of
/// the quadratic term is `2 W(y)`.
pub fn p1_weighted_mass(mesh: &Mesh2D, y: &DVector<f64>) -> Result<CsrMatrix> {
    let n = mesh.interior_count();
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for t in &mesh.triangles {
        let tri = triangle_geometry(mesh, t);
        let yv: Vec<f64> = tri
            .verts
            .iter()
            .map(|&v| mesh.interior_index[v].map_or(0.0, |g| y[g]))
            .collect();
        let mut we = [[0.0f64; 3]; 3];
        for (bary, w) in TRI_Q4 {
            let yq = yv[0] * bary[0] + yv[1] * bary[1] + yv[2] * bary[2];
            for i in 0..3 {
                for j in 0..3 {
                    we[i][j] += tri.area * w * yq * bary[i] * bary[j];
                }
            }
        }
        for i in 0..3 {
            let Some(gi) = mesh.interior_index[tri.verts[i]] else {
                continue;
            };
            for j in 0..3 {
                let Some(gj) = mesh.interior_index[tri.verts[j]] else {
                    continue;
                };
                trip.push((gi, gj, we[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

/// L2 norm over the mesh of `y_h - y_exact` for an interior coefficient
/// vector (boundary values zero), via the degree-4 triangle rule.
pub fn p1_l2_error(
    mesh: &Mesh2D,
    y: &DVector<f64>,
    exact: &dyn Fn([f64; 2]) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for t in &mesh.triangles {
        let tri = triangle_geometry(mesh, t);
        let yv: Vec<f64> = tri
            .verts
            .iter()
            .map(|&v| mesh.interior_index[v].map_or(0.0, |g| y[g]))
            .collect();
        let pv: Vec<[f64; 2]> = tri.verts.iter().map(|&v| mesh.coords[v]).collect();
        for (bary, w) in TRI_Q4 {
            let yq = yv[0] * bary[0] + yv[1] * bary[1] + yv[2] * bary[2];
            let xq = [
                pv[0][0] * bary[0] + pv[1][0] * bary[1] + pv[2][0] * bary[2],
                pv[0][1] * bary[0] + pv[1][1] * bary[1] + pv[2][1] * bary[2],
            ];
            let diff = yq - exact(xq);
            acc += tri.area * w * diff * diff;
        }
    }
    acc.sqrt()
}
