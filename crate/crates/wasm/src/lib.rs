//! Browser bindings: a 1-D density comparison, a 2-D chain trace and a
//! spherical polygon membership query.

use mrbm::constraints::{lonlat_to_unit, ConstraintSet, SphericalPolygon};
use mrbm::diagnostics::{histogram, histogram_tv, rbm_density_1d, TvReference};
use mrbm::geometry::{Manifold, Point};
use mrbm::samplers::{run_chain, ChainBatch, Sampler, StepSchedule};
use wasm_bindgen::prelude::*;

fn sampler(name: &str) -> Result<Sampler, JsError> {
    match name {
        "metropolis" => Ok(Sampler::Metropolis),
        "rejection" => Ok(Sampler::Rejection),
        "reflected" => Ok(Sampler::Reflected),
        other => Err(JsError::new(&format!("unknown sampler '{other}'"))),
    }
}

fn js(e: mrbm::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Runs `chains` chains on `[0, 1]` from `x0` for time `t` with step `gamma`.
///
/// Returns `[tv, empirical_0.., oracle_0..]`, densities at the `bins`
/// cell midpoints.
#[wasm_bindgen]
pub fn density1d(sampler_name: &str, x0: f64, t: f64, gamma: f64, chains: usize, bins: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    if !(x0 > 0.0 && x0 < 1.0 && t > 0.0 && gamma > 0.0) || chains == 0 || bins == 0 {
        return Err(JsError::new("need 0 < x0 < 1, t > 0, gamma > 0 and positive counts"));
    }
    let steps = (t / gamma).round() as usize;
    if steps.saturating_mul(chains) > 50_000_000 {
        return Err(JsError::new("too much work for the browser; raise gamma or lower chains"));
    }
    let m = Manifold::euclidean(1);
    let c = ConstraintSet::hypercube(1, 0.0, 1.0);
    let mut batch = ChainBatch::replicate(&m, &c, &Point(vec![x0]), chains, seed, "demo").map_err(js)?;
    batch.advance(sampler(sampler_name)?, &vec![gamma; steps]).map_err(js)?;
    let xs = batch.coordinate(0);
    let oracle = |x: f64| rbm_density_1d(x, t, x0, 1e-14).unwrap_or(f64::NAN);
    let tv = histogram_tv(&xs, TvReference::Density(&oracle), 0.0, 1.0, bins).map_err(js)?;
    let w = 1.0 / bins as f64;
    let mut out = vec![tv];
    out.extend(histogram(&xs, 0.0, 1.0, bins).iter().map(|p| p / w));
    out.extend((0..bins).map(|i| oracle((i as f64 + 0.5) * w)));
    Ok(out)
}

/// One chain in the square `[−1, 1]²` (`domain = "square"`) or the
/// triangle `{x, y > 0, x + y < 1}` (`"simplex"`), as `[x0, y0, x1, y1, …]`.
#[wasm_bindgen]
pub fn trace2d(sampler_name: &str, domain: &str, x: f64, y: f64, gamma: f64, steps: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    if steps > 200_000 {
        return Err(JsError::new("at most 200000 steps"));
    }
    let m = Manifold::euclidean(2);
    let c = match domain {
        "square" => ConstraintSet::hypercube(2, -1.0, 1.0),
        "simplex" => ConstraintSet::simplex(2),
        other => return Err(JsError::new(&format!("unknown domain '{other}'"))),
    };
    let traj = run_chain(
        &m,
        &c,
        &Point(vec![x, y]),
        sampler(sampler_name)?,
        &StepSchedule::constant(gamma, steps),
        None,
        seed,
        0,
    )
    .map_err(js)?;
    Ok(traj.states.iter().flat_map(|s| s.point.0.iter().copied()).collect())
}

/// Membership of `(lon, lat)` in the polygon with vertices
/// `[lon0, lat0, lon1, lat1, …]` and an interior reference point.
///
/// Returns 1 inside, 0 outside and −1 on an edge.
#[wasm_bindgen]
pub fn polygon_contains(vertices: &[f64], ref_lon: f64, ref_lat: f64, lon: f64, lat: f64) -> Result<i32, JsError> {
    if vertices.len() % 2 != 0 {
        return Err(JsError::new("vertices must be lon/lat pairs"));
    }
    let v: Vec<(f64, f64)> = vertices.chunks(2).map(|p| (p[0], p[1])).collect();
    let poly = SphericalPolygon::from_lonlat(&v, (ref_lon, ref_lat)).map_err(js)?;
    match poly.contains(&lonlat_to_unit(lon, lat)) {
        Ok(true) => Ok(1),
        Ok(false) => Ok(0),
        Err(mrbm::Error::BoundaryAmbiguous) => Ok(-1),
        Err(e) => Err(js(e)),
    }
}
