//! Uniform structured meshes of the unit square.

use crate::error::{Error, Result};

/// Uniform mesh of `[0,1]^2` with dyadic step size `h = 2^-k`.
///
/// Vertices are numbered lexicographically (`x` fastest); every cell carries
/// both its quadrilateral connectivity (Q1) and the two triangles obtained by
/// splitting along the cell diagonal (P1). Homogeneous Dirichlet conditions
/// are imposed by restricting to interior vertices, whose ordering follows
/// the vertex numbering.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub h: f64,
    /// Cells per side, `1/h`.
    pub cells_per_side: usize,
    /// Total vertex count `(1/h + 1)^2`.
    pub vertex_count: usize,
    pub coords: Vec<[f64; 2]>,
    /// Triangles (P1): each cell split into two.
    pub triangles: Vec<[usize; 3]>,
    /// Quadrilaterals (Q1): counter-clockwise corner ordering.
    pub quads: Vec<[usize; 4]>,
    pub is_boundary: Vec<bool>,
    /// Interior vertex ids in vertex order; position = interior DOF index.
    pub interior: Vec<usize>,
    /// Vertex id -> interior DOF index.
    pub interior_index: Vec<Option<usize>>,
}

/// Builds the uniform mesh for a dyadic step size `h = 2^-k`, `k >= 2`.
pub fn build_mesh(h: f64) -> Result<Mesh2D> {
    if !(h > 0.0) || h > 0.25 {
        return Err(Error::InvalidStepSize(h));
    }
    let inv = 1.0 / h;
    let n = inv.round() as usize;
    if (n as f64 - inv).abs() > 1e-12 || !n.is_power_of_two() || n < 4 {
        return Err(Error::InvalidStepSize(h));
    }

    let side = n + 1;
    let vertex_count = side * side;
    let mut coords = Vec::with_capacity(vertex_count);
    let mut is_boundary = vec![false; vertex_count];
    for j in 0..side {
        for i in 0..side {
            coords.push([i as f64 * h, j as f64 * h]);
            if i == 0 || j == 0 || i == n || j == n {
                is_boundary[j * side + i] = true;
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    let mut quads = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let a = j * side + i;
            let b = a + 1;
            let c = a + side + 1;
            let d = a + side;
            quads.push([a, b, c, d]);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut interior = Vec::with_capacity((n - 1) * (n - 1));
    let mut interior_index = vec![None; vertex_count];
    for (v, &bnd) in is_boundary.iter().enumerate() {
        if !bnd {
            interior_index[v] = Some(interior.len());
            interior.push(v);
        }
    }

    Ok(Mesh2D {
        h,
        cells_per_side: n,
        vertex_count,
        coords,
        triangles,
        quads,
        is_boundary,
        interior,
        interior_index,
    })
}

impl Mesh2D {
    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    /// Vertex id for grid position `(i, j)`.
    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        j * (self.cells_per_side + 1) + i
    }
}
