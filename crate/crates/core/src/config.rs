//! Run configuration: one JSON document per run. Unknown keys are
//! rejected everywhere.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::ContinuationOptions;
use crate::energy::ProblemParams;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solve::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Certify,
    Solve,
    SweepRho,
    SweepB,
    SweepC,
    Soliton,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    #[serde(default = "one")]
    pub rho: f64,
    /// Absolute mass. Exactly one of `c` and `c_fraction_of_cstar` is set.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub c_fraction_of_cstar: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Side lengths, one per dimension (1 or 2).
    pub extents: Vec<f64>,
    /// Interior nodes per axis.
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub values: Vec<f64>,
    /// For `sweep_c`: values are fractions of `cstar`.
    #[serde(default)]
    pub relative_to_cstar: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonBlock {
    pub b: f64,
    pub p: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisBlock {
    pub morse: bool,
    pub theta: f64,
    /// Blow-up diagnostics for solutions with `λ > 0`.
    pub blowup: bool,
    pub blowup_radius: f64,
    /// Write the solution field to `solution.csv`.
    pub write_field: bool,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        Self {
            morse: true,
            theta: 0.0,
            blowup: true,
            blowup_radius: 3.0,
            write_field: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub problem: Option<ProblemBlock>,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub soliton: Option<SolitonBlock>,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub continuation: ContinuationOptions,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Seeds the randomized trial fields (GN estimate, boundary sampling).
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn needs_problem(&self) -> bool {
        self.experiment != Experiment::Soliton
    }

    pub fn validate(&self) -> Result<()> {
        if self.needs_problem() {
            let pb = self.problem.as_ref().ok_or_else(|| cfg_err("missing `problem` block"))?;
            match (pb.c, pb.c_fraction_of_cstar) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(cfg_err("set exactly one of `problem.c` and `problem.c_fraction_of_cstar`")),
            }
            if let Some(f) = pb.c_fraction_of_cstar {
                if !(f > 0.0 && f.is_finite()) {
                    return Err(cfg_err(format!("c_fraction_of_cstar must be positive, got {f}")));
                }
            }
            let gb = self.grid.as_ref().ok_or_else(|| cfg_err("missing `grid` block"))?;
            if gb.extents.len() != gb.n.len() {
                return Err(cfg_err("grid.extents and grid.n differ in length"));
            }
            // parameter ranges are checked by the constructors
            let grid = self.build_grid()?;
            ProblemParams::new(pb.a, pb.b, pb.c.unwrap_or(1.0), pb.p, pb.rho, grid)
                .map_err(|e| cfg_err(e.to_string()))?;
        }
        match self.experiment {
            Experiment::SweepRho | Experiment::SweepB | Experiment::SweepC => {
                let sw = self.sweep.as_ref().ok_or_else(|| cfg_err("missing `sweep` block"))?;
                if sw.values.is_empty() {
                    return Err(cfg_err("sweep.values is empty"));
                }
                if sw.values.iter().any(|v| !v.is_finite()) {
                    return Err(cfg_err("sweep.values must be finite"));
                }
            }
            Experiment::Soliton => {
                if self.soliton.is_none() {
                    return Err(cfg_err("missing `soliton` block"));
                }
            }
            _ => {}
        }
        if self.solver.path.samples < 3 || self.solver.path.max_samples < self.solver.path.samples {
            return Err(cfg_err("solver.path: need 3 <= samples <= max_samples"));
        }
        if !(self.analysis.theta >= 0.0) {
            return Err(cfg_err("analysis.theta must be >= 0"));
        }
        if !(self.analysis.blowup_radius > 0.0) {
            return Err(cfg_err("analysis.blowup_radius must be positive"));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        let gb = self.grid.as_ref().ok_or_else(|| cfg_err("missing `grid` block"))?;
        Grid::new(&gb.extents, &gb.n)
            .map(Arc::new)
            .map_err(|e| cfg_err(e.to_string()))
    }

    /// Problem parameters with mass `c` (the resolved absolute mass).
    pub fn params_with_c(&self, c: f64) -> Result<ProblemParams> {
        let pb = self.problem.as_ref().ok_or_else(|| cfg_err("missing `problem` block"))?;
        ProblemParams::new(pb.a, pb.b, c, pb.p, pb.rho, self.build_grid()?)
    }
}
