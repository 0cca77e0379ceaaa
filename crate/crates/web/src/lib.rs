//! Browser bindings: every function takes plain numbers and returns a JSON
//! string for `main.js` to draw.

use std::sync::Arc;

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use drumkit::eigen::solve_eigs;
use drumkit::fem::{build_laplacian, BcKind};
use drumkit::geometry::{build_propeller_pair, CopyLayout, Isometry, Point2, Triangle};
use drumkit::mesh::{mesh_layout, Mesh};
use drumkit::pipeline::{analyze, AnalysisOptions};
use drumkit::transplant::{find_transplantation_matrix, lift_transplantation, multi_copy_operator};
use drumkit::Result;

/// Refinement for the operator demo; coarser meshes have no vertex far
/// enough from the boundary to factor a Dirichlet operator.
const LEVEL: usize = 3;

fn template(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> Result<Triangle> {
    Triangle::new(Point2::new(ax, ay), Point2::new(bx, by), Point2::new(cx, cy))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

fn copies(l: &CopyLayout) -> Value {
    (1..=l.n_copies())
        .map(|i| {
            let t = l.copy_triangle(i);
            json!({ "i": i, "vertices": t.vertices() })
        })
        .collect()
}

fn mesh_json(m: &Mesh, values: &[f64]) -> Value {
    json!({ "vertices": m.vertices(), "triangles": m.triangles(), "values": values })
}

/// Both drums of the propeller pair with their transplantation matrix.
#[wasm_bindgen]
pub fn propeller(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> std::result::Result<String, JsError> {
    to_js((|| {
        let (l1, l2) = build_propeller_pair(&template(ax, ay, bx, by, cx, cy)?)?;
        let t = find_transplantation_matrix(&l1, &l2)?;
        Ok(json!({
            "drum1": copies(&l1),
            "drum2": copies(&l2),
            "area": l1.area(),
            "transplant": t.t,
            "det": t.det() as f64,
        }))
    })())
}

/// The `k` lowest Dirichlet eigenvalues of both drums and eigenfunction
/// `mode` (1-based) of each, on the level-`level` meshes.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn eigenvalues(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64, level: usize, k: usize, mode: usize) -> std::result::Result<String, JsError> {
    to_js((|| {
        let (l1, l2) = build_propeller_pair(&template(ax, ay, bx, by, cx, cy)?)?;
        let mut out = Vec::new();
        for l in [&l1, &l2] {
            let (m, _) = mesh_layout(l, level)?;
            let lap = build_laplacian(Arc::new(m), BcKind::Dirichlet, None)?;
            let s = solve_eigs(&lap, k.max(mode).max(1), 1e-10)?;
            let shown = s.mode_on_vertices(mode.clamp(1, s.len()) - 1);
            out.push((s.eigenvalues, mesh_json(&lap.mesh, &shown)));
        }
        let gaps: Vec<f64> = out[0].0.iter().zip(&out[1].0).map(|(a, b)| (a - b).abs() / a).collect();
        Ok(json!({
            "lambda1": out[0].0,
            "lambda2": out[1].0,
            "rel_gaps": gaps,
            "mesh1": out[0].1,
            "mesh2": out[1].1,
        }))
    })())
}

/// Runs the operator analysis on either the lifted transplantation between
/// the drums (`"transplant"`) or a rigid copy of drum 1 rotated by `angle`
/// (`"rigid"`), and returns the verdict and recovered motion.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn analyze_operator(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64, which: &str, angle: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js((|| {
        let (l1, l2) = build_propeller_pair(&template(ax, ay, bx, by, cx, cy)?)?;
        let (m1, nc1) = mesh_layout(&l1, LEVEL)?;
        let (m2, u) = if which == "rigid" {
            let g = Isometry::rotation(angle, Point2::new(0.0, 0.0));
            let m2 = m1.transformed(&g)?;
            let u = multi_copy_operator(&[g.inverse()], &[1.0], &m1, &m2, BcKind::Dirichlet)?;
            (m2, u)
        } else {
            let (m2, nc2) = mesh_layout(&l2, LEVEL)?;
            let t = find_transplantation_matrix(&l1, &l2)?;
            let u = lift_transplantation(&t, &nc1, &m1, &nc2, &m2)?;
            (m2, u)
        };
        let opts = AnalysisOptions {
            seed,
            lambda1: false,
            ..AnalysisOptions::default()
        };
        let rep = analyze(&u, &m1, &m2, &opts);
        let dj = rep.disjointness.as_ref();
        let c = rep.congruence.as_ref();
        let witness = dj.and_then(|d| d.witness.as_ref()).map(|w| {
            let v1 = m1.vertices();
            let v2 = m2.vertices();
            json!({
                "f_support": w.f_support.iter().map(|&i| v1[i]).collect::<Vec<_>>(),
                "g_support": w.g_support.iter().map(|&i| v1[i]).collect::<Vec<_>>(),
                "at": v2[w.at_vertex],
                "overlap": w.overlap,
            })
        });
        Ok(json!({
            "exit_code": rep.exit_code,
            "verdict": dj.map(|d| format!("{:?}", d.verdict)),
            "max_overlap": dj.map(|d| d.max_overlap),
            "witness": witness,
            "congruent": c.map(|c| c.congruent),
            "criterion": c.map(|c| format!("{:?}", c.criterion_fired)),
            "isometry": c.and_then(|c| c.isometry),
            "fit_rms": c.and_then(|c| c.fit_rms),
            "error": rep.error,
            "mesh1": mesh_json(&m1, &[]),
            "mesh2": mesh_json(&m2, &[]),
        }))
    })())
}
