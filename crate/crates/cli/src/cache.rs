//! On-disk cache of cell solutions keyed by a content hash.

use std::path::{Path, PathBuf};

use homogbl_core::cell::{solve_cell_problems, CellSolutions};
use homogbl_core::grid::{build_cell_grid, CoefficientField};
use homogbl_core::solver::SolverConfig;
use homogbl_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::output::write_atomic;

const FORMAT: &str = "cells-v1";

#[derive(Serialize)]
struct Key<'a> {
    format: &'static str,
    coefficient: &'a CoefficientField,
    n: usize,
    solver: &'a SolverConfig,
}

/// Hex digest of everything the cell solutions depend on.
pub fn cache_key(coeff: &CoefficientField, n: usize, solver: &SolverConfig) -> String {
    let key = Key {
        format: FORMAT,
        coefficient: coeff,
        n,
        solver,
    };
    let bytes = serde_json::to_vec(&key).expect("key serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn cache_path(
    dir: &Path,
    coeff: &CoefficientField,
    n: usize,
    solver: &SolverConfig,
) -> PathBuf {
    dir.join(format!("cells-{}.json", cache_key(coeff, n, solver)))
}

/// Where a cell solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// The entry existed but could not be read back.
    Recomputed,
    Disabled,
}

#[derive(Debug, Clone)]
pub struct CellCache {
    pub dir: Option<PathBuf>,
}

impl CellCache {
    pub fn disabled() -> Self {
        Self { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
        }
    }

    pub fn load(
        &self,
        coeff: &CoefficientField,
        n: usize,
        solver: &SolverConfig,
    ) -> Option<CellSolutions> {
        let path = cache_path(self.dir.as_ref()?, coeff, n, solver);
        let text = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<CellSolutions>(&text) {
            Ok(c) if c.n == n && c.a_hom.is_some() && c.chi2.is_some() => Some(c),
            _ => {
                eprintln!("warning: ignoring corrupt cache entry {}", path.display());
                None
            }
        }
    }

    pub fn store(
        &self,
        coeff: &CoefficientField,
        cells: &CellSolutions,
        solver: &SolverConfig,
    ) -> std::io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let bytes = serde_json::to_vec(cells).map_err(std::io::Error::other)?;
        write_atomic(&cache_path(dir, coeff, cells.n, solver), &bytes)
    }

    /// Loads the cell solutions, solving and storing them on a miss.
    pub fn get_or_solve(
        &self,
        coeff: &CoefficientField,
        n: usize,
        solver: &SolverConfig,
    ) -> Result<(CellSolutions, CacheOutcome)> {
        let Some(dir) = &self.dir else {
            let grid = build_cell_grid(n, coeff)?;
            return Ok((
                solve_cell_problems(&grid, coeff, solver)?,
                CacheOutcome::Disabled,
            ));
        };
        let existed = cache_path(dir, coeff, n, solver).exists();
        if let Some(c) = self.load(coeff, n, solver) {
            return Ok((c, CacheOutcome::Hit));
        }
        let grid = build_cell_grid(n, coeff)?;
        let cells = solve_cell_problems(&grid, coeff, solver)?;
        if let Err(e) = self.store(coeff, &cells, solver) {
            eprintln!("warning: could not write cache in {}: {e}", dir.display());
        }
        Ok((
            cells,
            if existed {
                CacheOutcome::Recomputed
            } else {
                CacheOutcome::Miss
            },
        ))
    }
}
