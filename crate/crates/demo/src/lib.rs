//! WebAssembly bindings for the browser demo. Each export returns a JSON
//! string; failures become JavaScript exceptions.

use cheaptalk_core::classify::classify;
use cheaptalk_core::equilibrium::{solve_fixed_point, solve_scalar_biased, SolverConfig};
use cheaptalk_core::geometry::assign_action;
use cheaptalk_core::sources::{conditional_mean_curve, x1_range, Budget, CurveMethod, SourceModel};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Cells per axis of the partition picture.
const PARTITION_CELLS: usize = 96;
/// Points on the density and curve plots.
const PLOT_POINTS: usize = 121;
/// Quadrature nodes per best-response sweep; small enough to stay interactive.
const DEMO_QUADRATURE: usize = 40_000;

fn source(family: &str, dim: usize) -> Result<SourceModel, String> {
    let model = match family {
        "gaussian" => SourceModel::iid_gaussian(dim, 0.0, 1.0),
        "uniform" => SourceModel::iid_uniform(dim, 0.0, 1.0),
        "exponential" => SourceModel::iid_exponential(dim, 1.0),
        "laplace" => SourceModel::iid_laplace(dim, 0.0, 1.0),
        other => return Err(format!("unknown family {other:?}")),
    };
    model.map_err(|e| e.to_string())
}

fn interior_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points + 1) as f64;
    (1..=points).map(|i| lo + i as f64 * step).collect()
}

pub fn scalar_diagram_json(family: &str, beta: f64, k: usize) -> Result<String, String> {
    let src = source(family, 1)?;
    let q = solve_scalar_biased(&src, beta, k).map_err(|e| e.to_string())?;
    let law = src.marginal(0);
    let (lo, hi) = law.truncated_support(src.epsilon());
    let density: Vec<[f64; 2]> = interior_grid(lo, hi, PLOT_POINTS).into_iter().map(|x| [x, law.pdf(x)]).collect();
    Ok(json!({ "support": [lo, hi], "boundaries": q.boundaries, "actions": q.actions, "density": density }).to_string())
}

pub fn partition_json(family: &str, b1: f64, b2: f64, k: usize, seed: u64) -> Result<String, String> {
    let src = source(family, 2)?;
    let b = [b1, b2];
    let config = SolverConfig {
        budget: Budget { quadrature_points: DEMO_QUADRATURE, ..Budget::with_samples(20_000, seed) },
        max_iterations: 300,
        tolerance: 1e-6,
        ..SolverConfig::default()
    };
    let out = solve_fixed_point(&src, &b, k, &config).map_err(|e| e.to_string())?;
    let (lo, hi) = src.marginal(0).truncated_support(1e-3);
    let width = (hi - lo) / PARTITION_CELLS as f64;
    let mut cells = Vec::with_capacity(PARTITION_CELLS * PARTITION_CELLS);
    // Row 0 is the top of the picture.
    for row in 0..PARTITION_CELLS {
        let m2 = hi - (row as f64 + 0.5) * width;
        for col in 0..PARTITION_CELLS {
            let m1 = lo + (col as f64 + 0.5) * width;
            cells.push(assign_action(&[m1, m2], &out.actions, &b).map_err(|e| e.to_string())?);
        }
    }
    Ok(json!({
        "actions": out.actions.to_vecs(),
        "status": out.status,
        "iterations": out.iterations,
        "box": [lo, hi],
        "cells": PARTITION_CELLS,
        "assignment": cells,
    })
    .to_string())
}

pub fn curve_json(family: &str, b1: f64, b2: f64) -> Result<String, String> {
    let src = source(family, 2)?;
    let b = [b1, b2];
    let verdict = classify(&src, &b).map_err(|e| e.to_string())?;
    let (lo, hi) = x1_range(&src, &b).map_err(|e| e.to_string())?;
    let grid = interior_grid(lo, hi, PLOT_POINTS);
    let curve = conditional_mean_curve(&src, &b, &grid, &Budget::default(), CurveMethod::Quadrature)
        .map_err(|e| e.to_string())?;
    let values: Vec<f64> = curve.iter().map(|c| c.value).collect();
    let verdict: Value = serde_json::to_value(&verdict).map_err(|e| e.to_string())?;
    Ok(json!({ "verdict": verdict, "grid": grid, "values": values }).to_string())
}

/// Boundaries and actions of the `k`-bin equilibrium on one coordinate,
/// with the density for plotting.
#[wasm_bindgen(js_name = scalarDiagram)]
pub fn scalar_diagram(family: &str, beta: f64, k: usize) -> Result<String, JsError> {
    scalar_diagram_json(family, beta, k).map_err(|e| JsError::new(&e))
}

/// A `k`-action equilibrium of an iid pair found by best-response
/// iteration, with the cell each pixel reports. The seed is 32-bit so JS
/// can pass a plain number.
#[wasm_bindgen]
pub fn partition(family: &str, b1: f64, b2: f64, k: usize, seed: u32) -> Result<String, JsError> {
    partition_json(family, b1, b2, k, seed.into()).map_err(|e| JsError::new(&e))
}

/// `E[X2 | X1 = t] − E[X2]` along the revealed coordinate, with the
/// existence verdict for a linear equilibrium.
#[wasm_bindgen]
pub fn curve(family: &str, b1: f64, b2: f64) -> Result<String, JsError> {
    curve_json(family, b1, b2).map_err(|e| JsError::new(&e))
}
