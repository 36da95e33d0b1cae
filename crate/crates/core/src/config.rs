//! Run configuration read from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::continuation::DEFAULT_SCHEDULE;
use crate::error::{Error, Result};
use crate::force::ForcePotential;
use crate::gas::GasLaw;
use crate::mesh::{generate_annulus_2d, generate_disk_2d, generate_shell_3d, load_mesh, BodyMesh, ExteriorMesh};
use crate::solver::{Problem, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum GasSection {
    Gamma {
        kappa: f64,
        gamma: f64,
    },
    Isothermal {
        kappa: f64,
    },
    /// Two-column `rho p` file.
    Tabulated {
        table: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceSection {
    Constant {
        value: f64,
    },
    /// Rows `[x, y, z, strength]`; ψ = Σ strength/|x − y|.
    PointSources {
        sources: Vec<[f64; 4]>,
    },
    /// Uniform ball (3D) or disk (2D) filling the obstacle.
    NewtonianBody {
        density: f64,
        gravity: f64,
        #[serde(default = "default_body_level")]
        level: usize,
        #[serde(default = "default_body_radial")]
        n_radial: usize,
    },
    /// Two-column `r psi` file.
    RadialProfile {
        path: PathBuf,
    },
}

fn default_body_level() -> usize {
    1
}

fn default_body_radial() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSection {
    Annulus {
        inner_radius: f64,
        outer_radius: f64,
        n_radial: usize,
        n_angular: usize,
        /// Ratio of consecutive radial spacings; log-uniform rings when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grading: Option<f64>,
    },
    Disk {
        radius: f64,
        n_radial: usize,
        n_angular: usize,
    },
    Shell {
        inner_radius: f64,
        outer_radius: f64,
        level: usize,
        n_radial: usize,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffSection {
    pub theta: f64,
    pub schedule: Vec<f64>,
}

impl Default for CutoffSection {
    fn default() -> Self {
        Self {
            theta: 0.1,
            schedule: DEFAULT_SCHEDULE.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub cg_rel_tol: f64,
    pub deterministic: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            cg_rel_tol: d.cg_rel_tol,
            deterministic: d.deterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub q_infinity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSection {
    pub q_list: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSection {
    pub n_steps: usize,
    /// Critical speed estimate; computed by bisection when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_hat: Option<f64>,
    pub n_bumps: usize,
    pub seed: u64,
    pub n_annuli: usize,
    /// Integrability exponent and weight of ∇ψ, for the predicted decay rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_beta: Option<f64>,
}

impl Default for LimitSection {
    fn default() -> Self {
        Self {
            n_steps: 4,
            q_hat: None,
            n_bumps: 10,
            seed: 7,
            n_annuli: 8,
            decay_q: None,
            decay_beta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    Vtk,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub format: FieldFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            format: FieldFormat::Vtk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gas: GasSection,
    pub force: ForceSection,
    pub mesh: MeshSection,
    #[serde(default)]
    pub cutoff: CutoffSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub limit: LimitSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory against which relative paths resolve.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn positive(key: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {x}")))
    }
}

fn at_least(key: &str, n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be at least {min}, got {n}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            Error::config(key, e.to_string().trim().replace('\n', " "))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_files(&self) -> Result<()> {
        let files: Vec<(&str, &PathBuf)> = [
            match &self.gas {
                GasSection::Tabulated { table } => Some(("gas.table", table)),
                _ => None,
            },
            match &self.force {
                ForceSection::RadialProfile { path } => Some(("force.path", path)),
                _ => None,
            },
            match &self.mesh {
                MeshSection::File { path } => Some(("mesh.path", path)),
                _ => None,
            },
        ]
        .into_iter()
        .flatten()
        .collect();
        for (key, p) in files {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::config(key, format!("file {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    /// Parameter checks that need no file access or solve.
    pub fn validate(&self) -> Result<()> {
        match &self.gas {
            GasSection::Gamma { kappa, gamma } => {
                positive("gas.kappa", *kappa)?;
                if !(*gamma > 1.0 && gamma.is_finite()) {
                    return Err(Error::config(
                        "gas.gamma",
                        format!("adiabatic exponent must exceed 1, got {gamma}"),
                    ));
                }
            }
            GasSection::Isothermal { kappa } => positive("gas.kappa", *kappa)?,
            GasSection::Tabulated { .. } => {}
        }
        match &self.mesh {
            MeshSection::Annulus {
                inner_radius,
                outer_radius,
                n_radial,
                n_angular,
                grading,
            } => {
                positive("mesh.inner_radius", *inner_radius)?;
                if !(inner_radius < outer_radius) {
                    return Err(Error::config(
                        "mesh.inner_radius",
                        format!("inner radius {inner_radius} must be smaller than outer radius {outer_radius}"),
                    ));
                }
                at_least("mesh.n_radial", *n_radial, 4)?;
                at_least("mesh.n_angular", *n_angular, 4)?;
                if let Some(g) = grading {
                    if !(*g >= 1.0 && g.is_finite()) {
                        return Err(Error::config("mesh.grading", format!("must be at least 1, got {g}")));
                    }
                }
            }
            MeshSection::Disk {
                radius,
                n_radial,
                n_angular,
            } => {
                positive("mesh.radius", *radius)?;
                at_least("mesh.n_radial", *n_radial, 2)?;
                at_least("mesh.n_angular", *n_angular, 4)?;
            }
            MeshSection::Shell {
                inner_radius,
                outer_radius,
                n_radial,
                ..
            } => {
                positive("mesh.inner_radius", *inner_radius)?;
                if !(inner_radius < outer_radius) {
                    return Err(Error::config(
                        "mesh.inner_radius",
                        format!("inner radius {inner_radius} must be smaller than outer radius {outer_radius}"),
                    ));
                }
                at_least("mesh.n_radial", *n_radial, 1)?;
            }
            MeshSection::File { .. } => {}
        }
        match &self.force {
            ForceSection::NewtonianBody { density, .. } => positive("force.density", *density)?,
            ForceSection::PointSources { sources } if sources.is_empty() => {
                return Err(Error::config("force.sources", "needs at least one source"));
            }
            _ => {}
        }
        let theta = self.cutoff.theta;
        if !(theta > 0.0 && theta < 0.5) {
            return Err(Error::config("cutoff.theta", format!("theta {theta} outside (0, 1/2)")));
        }
        crate::continuation::validate_schedule(&self.cutoff.schedule)
            .map_err(|e| Error::config("cutoff.schedule", e.to_string()))?;
        positive("solver.tol", self.solver.tol)?;
        positive("solver.cg_rel_tol", self.solver.cg_rel_tol)?;
        at_least("solver.max_iter", self.solver.max_iter, 1)?;
        if !(self.flow.q_infinity >= 0.0 && self.flow.q_infinity.is_finite()) {
            return Err(Error::config(
                "flow.q_infinity",
                format!("must be finite and nonnegative, got {}", self.flow.q_infinity),
            ));
        }
        if self.continuation.q_list.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::config("continuation.q_list", "speeds must be nonnegative"));
        }
        if self.continuation.q_list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(
                "continuation.q_list",
                "speeds must be strictly increasing",
            ));
        }
        if let Some(t) = self.continuation.tol_q {
            positive("continuation.tol_q", t)?;
        }
        if let Some(c) = self.continuation.q_cap {
            positive("continuation.q_cap", c)?;
        }
        at_least("limit.n_steps", self.limit.n_steps, 3)?;
        at_least("limit.n_annuli", self.limit.n_annuli, 5)?;
        if let Some(q) = self.limit.q_hat {
            positive("limit.q_hat", q)?;
        }
        Ok(())
    }

    pub fn build_gas(&self) -> Result<GasLaw> {
        match &self.gas {
            GasSection::Gamma { kappa, gamma } => GasLaw::gamma_law(*kappa, *gamma),
            GasSection::Isothermal { kappa } => GasLaw::isothermal(*kappa),
            GasSection::Tabulated { table } => GasLaw::load_table(self.resolve(table)),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.mesh {
            MeshSection::Annulus { .. } | MeshSection::Disk { .. } => Some(2),
            MeshSection::Shell { .. } => Some(3),
            MeshSection::File { .. } => None,
        }
    }

    pub fn build_mesh(&self) -> Result<ExteriorMesh> {
        let mesh = match &self.mesh {
            MeshSection::Annulus {
                inner_radius,
                outer_radius,
                n_radial,
                n_angular,
                grading,
            } => {
                let g = grading.unwrap_or_else(|| (outer_radius / inner_radius).powf(1.0 / *n_radial as f64));
                generate_annulus_2d(*inner_radius, *outer_radius, *n_radial, *n_angular, g)?
            }
            MeshSection::Disk {
                radius,
                n_radial,
                n_angular,
            } => generate_disk_2d(*radius, *n_radial, *n_angular)?,
            MeshSection::Shell {
                inner_radius,
                outer_radius,
                level,
                n_radial,
            } => generate_shell_3d(*inner_radius, *outer_radius, *level, *n_radial)?,
            MeshSection::File { path } => load_mesh(self.resolve(path))?,
        };
        if let ForceSection::NewtonianBody {
            density,
            level,
            n_radial,
            ..
        } = &self.force
        {
            let r = mesh
                .obstacle_radius()
                .ok_or_else(|| Error::config("force.kind", "a Newtonian body needs a mesh with an obstacle"))?;
            let body = if mesh.dim() == 3 {
                BodyMesh::ball(r, *level, *n_radial, *density)?
            } else {
                BodyMesh::disk(r, 16 << *level, *n_radial, *density)?
            };
            return Ok(mesh.with_obstacle_interior(body));
        }
        Ok(mesh)
    }

    pub fn build_force(&self, mesh: &ExteriorMesh) -> Result<ForcePotential> {
        let dim = mesh.dim();
        match &self.force {
            ForceSection::Constant { value } => Ok(ForcePotential::constant(dim, *value)),
            ForceSection::PointSources { sources } => Ok(ForcePotential::point_sources(
                dim,
                sources.iter().map(|s| ([s[0], s[1], s[2]], s[3])).collect(),
            )),
            ForceSection::NewtonianBody { gravity, .. } => {
                let body = mesh
                    .obstacle_interior()
                    .cloned()
                    .ok_or_else(|| Error::config("force.kind", "mesh has no obstacle interior"))?;
                ForcePotential::newtonian(body, *gravity)
            }
            ForceSection::RadialProfile { path } => ForcePotential::load_radial_profile(dim, self.resolve(path)),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            cg_rel_tol: self.solver.cg_rel_tol,
            deterministic: self.solver.deterministic,
            ..Default::default()
        }
    }

    /// Gas, mesh, force and cut-off, with an inadmissible force range reported
    /// against the `force` key.
    pub fn build_problem(&self) -> Result<Problem> {
        let law = self.build_gas()?;
        let mesh = self.build_mesh()?;
        let force = self.build_force(&mesh)?;
        Problem::new(Arc::new(mesh), law, force, self.cutoff.theta, self.solver_options()).map_err(|e| match e {
            Error::Admissibility { .. } => {
                Error::config("force", format!("force potential range is inadmissible: {e}"))
            }
            other => other,
        })
    }
}
