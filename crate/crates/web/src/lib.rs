//! WebAssembly bindings for the browser demo in `www/`.

use fracsys_core::experiment::{run_experiment, ExperimentConfig, RunStatus};
use fracsys_core::operator::ball_torsion_constant;
use fracsys_core::{build_grid, Domain, ExponentPair, FractionalOperator};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Torsion function of (−1, 1): returns `[x, w, exact]` triples flattened,
/// where w solves (−Δ)^s w = 1 on the grid and exact is (1 − x²)^s / K.
#[wasm_bindgen]
pub fn torsion_profile(s: f64, resolution: usize) -> Result<Vec<f64>, String> {
    let grid = build_grid(Domain::interval(-1.0, 1.0).map_err(|e| e.to_string())?, resolution).map_err(|e| e.to_string())?;
    let op = FractionalOperator::assemble(&grid, s).map_err(|e| e.to_string())?;
    let w = op.solve_linear(&grid.constant(1.0)).map_err(|e| e.to_string())?;
    let k = ball_torsion_constant(1, s);
    Ok(grid.coords().iter().zip(w.values()).flat_map(|(x, &wi)| [x[0], wi, (1.0 - x[0] * x[0]).powf(s) / k]).collect())
}

/// Regime and Rellich factor of (p, q) as a JSON object.
#[wasm_bindgen]
pub fn classify(p: f64, q: f64, n: usize, s: f64) -> String {
    match ExponentPair::new(p, q) {
        Ok(e) if n >= 1 && s > 0.0 && s < 1.0 => json!({
            "regime": e.regime(n, s),
            "rhs_factor": e.rhs_factor(n, s),
            "hyperbole_gap": e.hyperbole_gap(n, s),
        })
        .to_string(),
        Ok(_) => json!({"error": "need n >= 1 and 0 < s < 1"}).to_string(),
        Err(e) => json!({"error": e.to_string()}).to_string(),
    }
}

/// Solves the system on (−1, 1) and returns the record summary plus x, u, v as JSON.
#[wasm_bindgen]
pub fn solve_interval(p: f64, q: f64, s: f64, resolution: usize) -> String {
    let domain = match Domain::interval(-1.0, 1.0) {
        Ok(d) => d,
        Err(e) => return json!({"error": e.to_string()}).to_string(),
    };
    let cfg = ExperimentConfig::new(domain, resolution, s, p, q);
    match run_experiment(&cfg) {
        Ok(exp) => {
            let r = &exp.record;
            let (x, u, v): (Vec<f64>, Vec<f64>, Vec<f64>) = match &exp.solution {
                Some(pair) => (exp.grid.coords().iter().map(|c| c[0]).collect(), pair.u.values().to_vec(), pair.v.values().to_vec()),
                None => Default::default(),
            };
            json!({
                "regime": r.regime,
                "status": r.status,
                "converged": r.status == RunStatus::Converged,
                "message": r.message,
                "solver": r.solver,
                "energy": r.energy.map(|e| e.value),
                "residual": r.residual_u.zip(r.residual_v).map(|(a, b)| a.max(b)),
                "rellich_residual": r.rellich.as_ref().map(|x| x.relative_residual),
                "x": x,
                "u": u,
                "v": v,
            })
            .to_string()
        }
        Err(e) => json!({"error": e.to_string()}).to_string(),
    }
}
