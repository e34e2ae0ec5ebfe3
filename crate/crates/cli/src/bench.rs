//! `bench`: solve every grid cell and write one CSV row per (cell, seed, method).

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use choifit::instance_io::{ReportRow, ReportWriter};
use choifit::{assemble_operator, generate_from_seed, solve, HermitianMatrix, SolveTrace, SolverConfig};

use crate::config::BenchGrid;

pub fn run(grid: &BenchGrid, base: &SolverConfig, out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout()),
    };
    let mut writer = ReportWriter::new(sink)?;
    if let Some(dir) = &grid.traces {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    for &cell in &grid.cells {
        for &seed in &grid.seeds {
            let spec = grid.spec(cell, seed);
            let prepared = generate_from_seed(&spec).and_then(|(inst, _)| assemble_operator(&inst));
            for &method in &grid.methods {
                let mut row = ReportRow {
                    m: spec.m,
                    n: spec.n,
                    k: spec.k,
                    r: spec.r,
                    method: method.name().to_string(),
                    iters: None,
                    converged: false,
                    residual: None,
                    max_cos: None,
                    rank: None,
                    psd_seconds: None,
                    affine_seconds: None,
                    wall_seconds: 0.0,
                };
                let label = format!("n={} k={} r={} seed={} {}", spec.n, spec.k, spec.r, seed, method);
                let outcome = prepared.as_ref().map_err(|e| e.to_string()).and_then(|op| {
                    let dim = op.dim();
                    let start = HermitianMatrix::scaled_identity(dim, dim as f64);
                    let clock = Instant::now();
                    let trace = solve(op, &start, &base.clone().with_method(method)).map_err(|e| e.to_string())?;
                    Ok((trace, clock.elapsed().as_secs_f64()))
                });
                match outcome {
                    Ok((trace, wall)) => {
                        fill(&mut row, &trace, wall);
                        eprintln!(
                            "{label}: {} iterations, residual {:.3e}, converged {}",
                            trace.iterations, trace.final_residual, trace.converged
                        );
                        if let Some(dir) = &grid.traces {
                            let name = format!("n{}_k{}_r{}_s{}_{}.json", spec.n, spec.k, spec.r, seed, method);
                            crate::write_json(&dir.join(name), &trace)?;
                        }
                    }
                    Err(message) => eprintln!("{label}: failed: {message}"),
                }
                writer.write_row(&row)?;
            }
        }
    }
    writer.into_inner()?.flush()?;
    Ok(())
}

fn fill(row: &mut ReportRow, trace: &SolveTrace, wall: f64) {
    row.iters = Some(trace.iterations);
    row.converged = trace.converged;
    row.residual = Some(trace.final_residual);
    row.max_cos = Some(trace.max_cos);
    row.rank = Some(trace.final_rank);
    row.psd_seconds = Some(trace.psd_projection_seconds);
    row.affine_seconds = Some(trace.affine_projection_seconds);
    row.wall_seconds = wall;
}
