//! CSV rows and writers for every artifact a run produces.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::{DensityGrid, StepDiagnostics};
use crate::reductions::Cluster;
use crate::sde::AgentPopulation;

#[derive(Debug, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub agent_id: usize,
    pub age: f64,
    pub opinion: f64,
    pub entry_time: f64,
}

#[derive(Debug, Serialize)]
pub struct SnapshotRow {
    pub t: f64,
    pub age_index: usize,
    pub opinion_index: usize,
    pub density: f64,
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub min_density: f64,
    pub mean_opinion: f64,
    pub boundary_density_lo: f64,
    pub boundary_density_hi: f64,
}

impl From<&StepDiagnostics> for DiagnosticsRow {
    fn from(d: &StepDiagnostics) -> Self {
        Self {
            t: d.t,
            mass: d.mass,
            min_density: d.min_density,
            mean_opinion: d.mean_opinion,
            boundary_density_lo: d.boundary_density_lo,
            boundary_density_hi: d.boundary_density_hi,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TotalsRow {
    pub t: f64,
    pub opinion_index: usize,
    pub total_density: f64,
}

#[derive(Debug, Serialize)]
pub struct SteadyDensityRow {
    pub age_index: usize,
    pub opinion_index: usize,
    pub density: f64,
}

#[derive(Debug, Serialize)]
pub struct LambdaRow {
    pub opinion_index: usize,
    pub mass: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceRow {
    pub iteration: usize,
    pub residual_inf: f64,
}

#[derive(Debug, Serialize)]
pub struct VarianceRow {
    pub t: f64,
    pub age_index: usize,
    pub v_numeric: f64,
    pub v_closed_form: f64,
}

#[derive(Debug, Serialize)]
pub struct ClusterRow {
    pub t: f64,
    pub cluster_id: usize,
    pub position: f64,
    pub mass: f64,
}

/// Collects files under one output directory and remembers their relative names.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    files: Vec<String>,
}

impl ArtifactWriter {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn csv<R: Serialize, I: IntoIterator<Item = R>>(&mut self, name: &str, rows: I) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
        let mut empty = true;
        for r in rows {
            w.serialize(r).map_err(csv_error)?;
            empty = false;
        }
        if empty {
            return Err(Error::InvalidParams(format!("{name}: no rows to write")));
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn trajectory_rows(frames: &[AgentPopulation]) -> impl Iterator<Item = TrajectoryRow> + '_ {
    frames.iter().flat_map(|f| {
        (0..f.len()).map(move |i| TrajectoryRow {
            t: f.time,
            agent_id: i,
            age: f.ages[i],
            opinion: f.opinions[i],
            entry_time: f.entry_times[i],
        })
    })
}

pub fn snapshot_rows(t: f64, g: &DensityGrid) -> impl Iterator<Item = SnapshotRow> + '_ {
    (0..g.na()).flat_map(move |k| {
        g.column(k).iter().enumerate().map(move |(j, &density)| SnapshotRow {
            t,
            age_index: k,
            opinion_index: j,
            density,
        })
    })
}

pub fn steady_rows(g: &DensityGrid) -> impl Iterator<Item = SteadyDensityRow> + '_ {
    snapshot_rows(0.0, g).map(|r| SteadyDensityRow {
        age_index: r.age_index,
        opinion_index: r.opinion_index,
        density: r.density,
    })
}

pub fn lambda_rows(lambda: &[f64]) -> impl Iterator<Item = LambdaRow> + '_ {
    lambda.iter().enumerate().map(|(opinion_index, &mass)| LambdaRow { opinion_index, mass })
}

pub fn convergence_rows(history: &[f64]) -> impl Iterator<Item = ConvergenceRow> + '_ {
    history.iter().enumerate().map(|(i, &residual_inf)| ConvergenceRow {
        iteration: i + 1,
        residual_inf,
    })
}

pub fn cluster_rows(t: f64, clusters: &[Cluster]) -> impl Iterator<Item = ClusterRow> + '_ {
    clusters.iter().enumerate().map(move |(cluster_id, c)| ClusterRow {
        t,
        cluster_id,
        position: c.position,
        mass: c.mass,
    })
}
