//! Finite element discretization: meshes, source layouts, assembled systems
//! and forward solves.

pub mod assemble;
pub mod mesh;
pub mod sources;
pub mod system;

pub use mesh::{build_mesh, Mesh2D};
pub use sources::{
    gaussian_width_from_neighbor_fraction, GaussianSourceGrid, PatchGrid, SourceDescriptor,
};
pub use system::{
    assemble_convection_diffusion, assemble_convection_diffusion_with_wind,
    assemble_nonlinear_poisson, assemble_poisson, manufactured_solution_error, recirculating_wind,
    Factors, FemSystem, PdeKind,
};

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn desk_poisson(h: f64, m: usize) -> FemSystem {
        let mesh = build_mesh(h).unwrap();
        let grid = GaussianSourceGrid::standard(m).unwrap();
        assemble_poisson(mesh, grid).unwrap()
    }

    #[test]
    fn mass_matrix_is_positive() {
        let sys = desk_poisson(2f64.powi(-4), 3);
        let n = sys.n_dofs();
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            if v.norm() == 0.0 {
                continue;
            }
            let quad = v.dot(&sys.mass.mul_vec(&v));
            assert!(quad > 0.0);
        }
        assert!(sys.mass.is_symmetric(1e-12));
        for i in 0..n {
            assert!(sys.mass.get(i, i) > 0.0);
        }
    }

    #[test]
    fn poisson_stiffness_symmetric_with_zero_row_sums_inside() {
        let sys = desk_poisson(2f64.powi(-4), 3);
        assert!(sys.stiffness.is_symmetric(1e-12));
        // Rows of vertices whose whole P1 stencil is interior sum to zero
        // (constants lie in the kernel of the Laplacian stencil).
        let mesh = &sys.mesh;
        let side = mesh.cells_per_side;
        let mut checked = 0;
        for j in 2..side - 1 {
            for i in 2..side - 1 {
                let dof = mesh.interior_index[mesh.vertex_id(i, j)].unwrap();
                let (_, vals) = sys.stiffness.row(dof);
                let sum: f64 = vals.iter().sum();
                assert!(sum.abs() < 1e-12, "row sum {sum}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn zero_control_gives_zero_state() {
        for sys in [
            desk_poisson(2f64.powi(-4), 3),
            assemble_convection_diffusion(
                build_mesh(2f64.powi(-4)).unwrap(),
                PatchGrid::new(4).unwrap(),
            )
            .unwrap(),
            assemble_nonlinear_poisson(
                build_mesh(2f64.powi(-4)).unwrap(),
                GaussianSourceGrid::standard(3).unwrap(),
            )
            .unwrap(),
        ] {
            let u = DVector::zeros(sys.n_controls());
            let y = sys.solve_state(&u).unwrap();
            assert_eq!(y.norm(), 0.0);
        }
    }

    #[test]
    fn solve_state_is_linear_for_linear_kinds() {
        let sys = desk_poisson(2f64.powi(-4), 3);
        let mut rng = StdRng::seed_from_u64(2);
        let l = sys.n_controls();
        let u1 = DVector::from_fn(l, |_, _| rng.gen_range(0.0..1.0));
        let u2 = DVector::from_fn(l, |_, _| rng.gen_range(0.0..1.0));
        let y1 = sys.solve_state(&u1).unwrap();
        let y2 = sys.solve_state(&u2).unwrap();
        let y12 = sys.solve_state(&(&u1 + &u2)).unwrap();
        let diff = (&y1 + &y2 - &y12).norm();
        assert!(diff <= 1e-10 * y12.norm().max(1.0), "diff {diff}");
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let e3 = manufactured_solution_error(2f64.powi(-3)).unwrap();
        let e4 = manufactured_solution_error(2f64.powi(-4)).unwrap();
        let r = e3 / e4;
        assert!((3.2..=4.8).contains(&r), "ratio {r}");
    }

    #[test]
    fn gaussian_column_symmetric_under_reflection() {
        // Source at the grid's center of symmetry: the nodal column is
        // symmetric under the x-mirror, and the load vector under the
        // diagonal reflection (the symmetry the criss-cross triangulation
        // actually possesses).
        let mesh = build_mesh(2f64.powi(-4)).unwrap();
        let grid = GaussianSourceGrid::standard(3).unwrap();
        let center_source = 4; // (0.5, 0.5) on the 3x3 grid
        assert_eq!(grid.centers[center_source], [0.5, 0.5]);
        let sys = assemble_poisson(mesh, grid).unwrap();
        let mesh = &sys.mesh;
        let side = mesh.cells_per_side;
        let mut max_asym = 0.0f64;
        for j in 1..side {
            for i in 1..side {
                let a = mesh.interior_index[mesh.vertex_id(i, j)].unwrap();
                let mirror = mesh.interior_index[mesh.vertex_id(side - i, j)].unwrap();
                let transpose = mesh.interior_index[mesh.vertex_id(j, i)].unwrap();
                max_asym =
                    max_asym.max((sys.phi[(a, center_source)] - sys.phi[(mirror, center_source)]).abs());
                max_asym = max_asym.max(
                    (sys.control_load[(a, center_source)] - sys.control_load[(transpose, center_source)]).abs(),
                );
            }
        }
        assert!(max_asym <= 1e-12, "asymmetry {max_asym}");
    }

    #[test]
    fn zero_wind_reduces_to_symmetric_diffusion() {
        let mesh = build_mesh(2f64.powi(-4)).unwrap();
        let sys = assemble_convection_diffusion_with_wind(
            mesh,
            PatchGrid::new(4).unwrap(),
            &|_| [0.0, 0.0],
        )
        .unwrap();
        let k = &sys.stiffness;
        let kt = k.transpose();
        let mut asym = 0.0f64;
        for (i, j, v) in k.iter() {
            asym = asym.max((v - kt.get(i, j)).abs());
        }
        assert!(asym <= 1e-12 * k.max_abs());
    }

    #[test]
    fn patch_columns_sum_to_patch_area() {
        let mesh = build_mesh(2f64.powi(-5)).unwrap();
        let patches = PatchGrid::new(4).unwrap();
        let sys = assemble_convection_diffusion(mesh, patches).unwrap();
        let l = sys.n_controls();
        let area = 1.0 / l as f64;
        for c in 0..l {
            let sum: f64 = sys.phi.column(c).iter().sum();
            // Patches touching the boundary lose the boundary test functions
            // to the Dirichlet restriction; interior patches are exact.
            let (ix, jy) = (c % 4, c / 4);
            if ix > 0 && ix < 3 && jy > 0 && jy < 3 {
                assert!((sum - area).abs() <= 1e-10, "column {c}: {sum}");
            } else {
                // Boundary patches lose the Dirichlet-eliminated test
                // functions along each touched edge, about h/2 per unit
                // length (doubled at corners).
                assert!((sum - area).abs() <= 0.15 * area, "column {c}: {sum}");
            }
        }
    }

    #[test]
    fn patch_misalignment_is_rejected() {
        let mesh = build_mesh(2f64.powi(-4)).unwrap(); // 16 cells per side
        assert!(assemble_convection_diffusion(mesh, PatchGrid::new(3).unwrap()).is_err());
    }

    #[test]
    fn nonlinear_matches_linear_to_first_order() {
        // Richardson check: the deviation from the linear solution scales
        // quadratically with the load amplitude.
        let mesh = build_mesh(2f64.powi(-4)).unwrap();
        let grid = GaussianSourceGrid::standard(3).unwrap();
        let sys = assemble_nonlinear_poisson(mesh, grid).unwrap();
        let l = sys.n_controls();
        let mut rng = StdRng::seed_from_u64(3);
        let u = DVector::from_fn(l, |_, _| rng.gen_range(0.2..1.0));
        let dev = |s: f64| -> f64 {
            let us = &u * s;
            let y_nl = sys.solve_state(&us).unwrap();
            let y_lin = sys
                .factors()
                .unwrap()
                .stiffness
                .solve(&sys.load_for_control(&us));
            (y_nl - y_lin).norm()
        };
        let d1 = dev(1e-3);
        let d2 = dev(5e-4);
        let ratio = d1 / d2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn nonlinear_residual_and_jacobian_consistency() {
        let mesh = build_mesh(2f64.powi(-3)).unwrap();
        let grid = GaussianSourceGrid::standard(3).unwrap();
        let sys = assemble_nonlinear_poisson(mesh, grid).unwrap();
        let n = sys.n_dofs();
        let l = sys.n_controls();
        let mut rng = StdRng::seed_from_u64(4);
        let u = DVector::from_fn(l, |_, _| rng.gen_range(0.0..1.0));
        // y = 0: F(0, u) = -B u and F'_y = K.
        let y0 = DVector::zeros(n);
        let f0 = sys.nonlinear_residual(&y0, &u);
        assert!((&f0 + sys.load_for_control(&u)).norm() < 1e-14);
        let j0 = sys.state_jacobian(&y0).unwrap();
        let mut dev = 0.0f64;
        for (i, j, v) in j0.iter() {
            dev = dev.max((v - sys.stiffness.get(i, j)).abs());
        }
        assert!(dev <= 1e-14 * sys.stiffness.max_abs());
        // Central finite differences of F match F'_y columns.
        let y = DVector::from_fn(n, |i, _| 0.5 * ((i as f64) * 0.05).sin());
        let jac = sys.state_jacobian(&y).unwrap();
        let eps = 1e-6;
        for &col in &[0usize, n / 3, n - 1] {
            let mut yp = y.clone();
            yp[col] += eps;
            let mut ym = y.clone();
            ym[col] -= eps;
            let fd = (sys.nonlinear_residual(&yp, &u) - sys.nonlinear_residual(&ym, &u)) / (2.0 * eps);
            let mut exact = DVector::zeros(n);
            for (i, j, v) in jac.iter() {
                if j == col {
                    exact[i] += v;
                }
            }
            let rel = (fd - &exact).norm() / exact.norm().max(1e-12);
            assert!(rel <= 1e-5, "column {col}: rel {rel}");
        }
        // F'_u = -B exactly.
        let fu = sys.control_jacobian();
        assert_eq!(fu, -sys.control_load.clone());
    }
}
