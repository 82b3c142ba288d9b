//! Problem-instance files and the test-set generator.
//!
//! An instance records the discretization (PDE kind, step size, source grid
//! dimension), the knapsack bound, the desired-state recipe and the seed it
//! was generated from. Desired states are recomputed on load from the
//! recipe, so instance files stay small and exact.

use anyhow::{bail, Context};
use mipdeco::fem::{self, FemSystem, GaussianSourceGrid, PatchGrid};
use mipdeco::{build_mesh, MipdecoProblem, SourceDescriptor};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PdeKindSpec {
    Poisson,
    ConvectionDiffusion,
    NonlinearPoisson,
}

/// How the desired state is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DesiredStateRecipe {
    /// Forward solve with sources at the given centers: off-grid Gaussians
    /// with the grid's height and width for the Poisson kinds, axis-aligned
    /// squares of patch size for the convection-diffusion kind.
    RandomCenters { centers: Vec<[f64; 2]> },
    /// Forward solve of a binary grid control (the recovery recipe).
    GridControl { active: Vec<usize> },
    /// Explicit interior coefficient vector.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub pde: PdeKindSpec,
    pub h: f64,
    /// Source grid dimension; `l = m^2`.
    pub m: usize,
    pub s: usize,
    pub recipe: DesiredStateRecipe,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading instance {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Key identifying the discretization, used to share assembled systems.
    pub fn system_key(&self) -> (PdeKindSpec, u64, usize) {
        (self.pde, self.h.to_bits(), self.m)
    }

    pub fn build_system(&self) -> anyhow::Result<Arc<FemSystem>> {
        let mesh = build_mesh(self.h)?;
        let sys = match self.pde {
            PdeKindSpec::Poisson => {
                fem::assemble_poisson(mesh, GaussianSourceGrid::standard(self.m)?)?
            }
            PdeKindSpec::NonlinearPoisson => {
                fem::assemble_nonlinear_poisson(mesh, GaussianSourceGrid::standard(self.m)?)?
            }
            PdeKindSpec::ConvectionDiffusion => {
                fem::assemble_convection_diffusion(mesh, PatchGrid::new(self.m)?)?
            }
        };
        Ok(Arc::new(sys))
    }

    /// Computes the desired state from the recipe and wraps everything into
    /// a problem definition.
    pub fn build_problem(&self, sys: Arc<FemSystem>) -> anyhow::Result<MipdecoProblem> {
        let y_d = match &self.recipe {
            DesiredStateRecipe::GridControl { active } => {
                let mut u = DVector::zeros(sys.n_controls());
                for &i in active {
                    if i >= sys.n_controls() {
                        bail!("active source {i} out of range");
                    }
                    u[i] = 1.0;
                }
                sys.solve_state(&u)?
            }
            DesiredStateRecipe::Explicit { values } => {
                if values.len() != sys.n_dofs() {
                    bail!(
                        "explicit desired state has {} values, expected {}",
                        values.len(),
                        sys.n_dofs()
                    );
                }
                DVector::from_vec(values.clone())
            }
            DesiredStateRecipe::RandomCenters { centers } => {
                let load = match &sys.sources {
                    SourceDescriptor::Gaussian(grid) => {
                        let nodal = DVector::from_fn(sys.n_dofs(), |i, _| {
                            let x = sys.mesh.coords[sys.mesh.interior[i]];
                            centers.iter().map(|&c| grid.eval_free(c, x)).sum::<f64>()
                        });
                        sys.mass.mul_vec(&nodal)
                    }
                    SourceDescriptor::Patches(patches) => {
                        let half = patches.spacing() / 2.0;
                        fem::assemble::q1_supg_load(&sys.mesh, &fem::recirculating_wind, &|x| {
                            centers
                                .iter()
                                .filter(|c| {
                                    (x[0] - c[0]).abs() <= half && (x[1] - c[1]).abs() <= half
                                })
                                .count() as f64
                        })
                    }
                };
                sys.solve_for_load(&load)?
            }
        };
        Ok(MipdecoProblem::new(sys, y_d, self.s)?)
    }
}

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub pde: PdeKindSpec,
    pub h: f64,
    pub m: usize,
    pub s_values: Vec<usize>,
    pub count_per_s: usize,
    /// true: recovery instances from random binary grid controls;
    /// false: random-centers desired states with `S` sources.
    pub grid_exact: bool,
}

/// Writes one instance file per (S, index) pair; fully determined by the
/// seed. Returns the written paths.
pub fn generate_test_set(
    spec: &GenSpec,
    seed: u64,
    out_dir: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let l = spec.m * spec.m;
    let mut paths = Vec::new();
    let mut index = 0u64;
    for &s in &spec.s_values {
        if s == 0 || s > l {
            bail!("knapsack bound {s} outside 1..={l}");
        }
        for i in 0..spec.count_per_s {
            let inst_seed = crate::derive_seed(seed, index);
            index += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(inst_seed);
            let recipe = if spec.grid_exact {
                let mut idx: Vec<usize> = (0..l).collect();
                for k in 0..s {
                    let j = rng.gen_range(k..l);
                    idx.swap(k, j);
                }
                let mut active = idx[..s].to_vec();
                active.sort_unstable();
                DesiredStateRecipe::GridControl { active }
            } else {
                let (lo, hi) = match spec.pde {
                    // Gaussian centers sample the source subdomain; patch
                    // centers keep the square inside the domain.
                    PdeKindSpec::Poisson | PdeKindSpec::NonlinearPoisson => (0.1, 0.9),
                    PdeKindSpec::ConvectionDiffusion => {
                        let half = 0.5 / spec.m as f64;
                        (half, 1.0 - half)
                    }
                };
                let centers = (0..s)
                    .map(|_| [rng.gen_range(lo..hi), rng.gen_range(lo..hi)])
                    .collect();
                DesiredStateRecipe::RandomCenters { centers }
            };
            let inst = InstanceSpec {
                pde: spec.pde,
                h: spec.h,
                m: spec.m,
                s,
                recipe,
                seed: inst_seed,
            };
            let path = out_dir.join(format!("instance_s{s}_{i:03}.json"));
            inst.save(&path)?;
            paths.push(path);
        }
    }
    Ok(paths)
}
