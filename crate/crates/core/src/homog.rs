//! Scaled-limit experiments: solve the front equations at scale `eps`
//! (unscaled internally, reported in scaled variables `t = eps T`,
//! `x = eps X`) and compare against the homogenized predictions built from
//! a pre-estimated spreading shape — set inclusions for the reaction
//! fronts, the sup-dilation formula for the level-set fronts.

use serde::Serialize;

use crate::env::{EnvironmentRealization, EnvironmentSpec, ReactionSpec};
use crate::error::{CoreError, Result};
use crate::geq::{init_from_fn, GeqStepper};
use crate::grid::Grid;
use crate::pde::{KppStepper, SolutionField};
use crate::wulff::{
    dist_to_polygon_boundary, erode_convex, minkowski_sum, point_in_polygon, GSet, WulffShape,
};

/// Parameters of one scaled experiment family.
#[derive(Clone, Debug, Serialize)]
pub struct ScaledExperiment {
    pub g: GSet,
    /// Datum height in (0, 1].
    pub theta: f64,
    /// Mask level for the inclusion checks.
    pub theta_prime: f64,
    /// Sandwich slack delta in (0, 1); the checks run inside `B_{1/delta}`.
    pub delta: f64,
    /// Datum perturbation radius schedule `rho(eps) = rho_coeff sqrt(eps)`.
    pub rho_coeff: f64,
    /// Shift bound: `y_eps = +-(lambda/2) e1`, alternating with the eps
    /// index.
    pub shift_lambda: f64,
    /// Unscaled grid spacing.
    pub h: f64,
}

impl ScaledExperiment {
    pub fn rho(&self, eps: f64) -> f64 {
        self.rho_coeff * eps.sqrt()
    }

    pub fn y_shift(&self, eps_index: usize) -> [f64; 2] {
        let s = if eps_index % 2 == 0 { 1.0 } else { -1.0 };
        [s * self.shift_lambda / 2.0, 0.0]
    }
}

/// Result of the sandwich inclusions at one scaled time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SandwichResult {
    pub eps: f64,
    pub seed: u64,
    pub t: f64,
    pub inner: bool,
    pub outer: bool,
    /// Radial clearances (scaled units; diagnostic, from a ray sweep).
    pub margin_inner: f64,
    pub margin_outer: f64,
}

/// Box sizing for the scaled runs. `contained = false` keeps the whole
/// front inside the box (boundary guard active). `contained = true` sizes
/// the box only so that boundary influence cannot reach the check region
/// `B_{1/delta}` within the horizon: the Dirichlet deficit starts when the
/// front tail touches the wall and travels inward no faster than the
/// spreading rate, while the saturated bulk behind the front damps it; the
/// guard is then disabled on purpose.
fn kpp_grid_for(
    spec: &EnvironmentSpec,
    exp: &ScaledExperiment,
    eps: f64,
    t_max: f64,
    contained: bool,
) -> Result<(Grid<f64>, bool)> {
    let rate = 2.0 * (spec.lambda_max * spec.g_max).sqrt() + spec.b_max;
    let tail = (1e6f64).ln() * (spec.lambda_max / spec.g_min).sqrt();
    let src = (exp.g.bounding_radius() + exp.shift_lambda / 2.0) / eps;
    let t_un = t_max / eps;
    let hw_free = src + rate * t_un + tail + 2.0;
    let dt = crate::grid::kpp_stable_dt(
        spec.dimension,
        exp.h,
        spec.lambda_max,
        spec.b_max,
        spec.g_max,
    );
    if !contained {
        return Ok((Grid::new(spec.dimension, exp.h, hw_free, dt)?, false));
    }
    let check = (1.0 / exp.delta) / eps;
    let hw_contained = ((rate * t_un + src + check) / 2.0 + 2.0)
        .max(src + 3.0)
        .max(check + 2.0);
    if hw_free <= hw_contained * 1.05 {
        Ok((Grid::new(spec.dimension, exp.h, hw_free, dt)?, false))
    } else {
        Ok((Grid::new(spec.dimension, exp.h, hw_contained, dt)?, true))
    }
}

/// The scaled datum: `theta` on the inner-eroded shifted set
/// `(G + y_eps)^0_rho`, zero elsewhere, laid out on the unscaled grid.
fn scaled_datum(
    grid: &Grid<f64>,
    exp: &ScaledExperiment,
    eps: f64,
    y: [f64; 2],
    t0: f64,
) -> Result<SolutionField<f64>> {
    let rho = exp.rho(eps);
    let mut u = vec![0.0; grid.len()];
    match &exp.g {
        GSet::Ball { center, radius } => {
            let r = (radius - rho).max(0.0) / eps;
            let c = [(center[0] + y[0]) / eps, (center[1] + y[1]) / eps];
            if r > 0.0 {
                for idx in grid.ball_nodes(c, r) {
                    u[idx as usize] = exp.theta;
                }
            }
        }
        GSet::Polygon(p) => {
            let eroded = erode_convex(p, rho)?;
            let scaled: Vec<[f64; 2]> = eroded
                .iter()
                .map(|v| [(v[0] + y[0]) / eps, (v[1] + y[1]) / eps])
                .collect();
            for i in 0..grid.len() {
                let pos = grid.pos(i);
                if point_in_polygon(pos, &scaled) {
                    u[i] = exp.theta;
                }
            }
        }
    }
    Ok(SolutionField { grid: *grid, t0, t: 0.0, u, steps: 0 })
}

/// Radial clearance sweep used for the diagnostic margins: the largest
/// covered radius along each of `rays` directions from `center` (scaled).
fn radial_mask_profile(
    sol: &SolutionField<f64>,
    level: f64,
    eps: f64,
    y: [f64; 2],
    center: [f64; 2],
    rays: usize,
    r_max: f64,
) -> Vec<f64> {
    let grid = &sol.grid;
    let mut out = Vec::with_capacity(rays);
    for k in 0..rays {
        let a = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
        let e = [a.cos(), a.sin()];
        let mut covered = 0.0;
        let step = eps * grid.h * 0.9;
        let mut r = 0.0;
        while r <= r_max {
            // scaled point -> unscaled node
            let x = [center[0] + r * e[0] + y[0], center[1] + r * e[1] + y[1]];
            let node = grid.nearest([x[0] / eps, x[1] / eps]);
            match node {
                Some((ix, iy)) => {
                    if sol.u[grid.idx(ix, iy)] >= level {
                        covered = r;
                    }
                }
                None => break,
            }
            r += step;
        }
        out.push(covered);
    }
    out
}

/// Runs one seed of the sandwich experiment: solves from the scaled datum
/// and, at each requested scaled time, checks
/// `(G + (1-delta) t S) cap B_{1/delta}  subset  mask  subset  (G + (1+delta) t S)`
/// for the `theta_prime` mask in the shifted frame.
pub fn sandwich_run(
    spec: &EnvironmentSpec,
    reaction: ReactionSpec,
    exp: &ScaledExperiment,
    shape: &WulffShape,
    eps: f64,
    eps_index: usize,
    seed: u64,
    times: &[f64],
) -> Result<Vec<SandwichResult>> {
    let t_max = times.iter().cloned().fold(0.0f64, f64::max);
    let (grid, wall_contact_allowed) = kpp_grid_for(spec, exp, eps, t_max, true)?;
    let env = EnvironmentRealization::new(spec, seed)?;
    let y = exp.y_shift(eps_index);
    let mut sol = scaled_datum(&grid, exp, eps, y, 0.0)?;
    let mut stepper = KppStepper::new(&env, reaction, grid)?;
    if wall_contact_allowed {
        stepper.ring_guard = f64::INFINITY;
    }

    let g_center = match &exp.g {
        GSet::Ball { center, .. } => *center,
        GSet::Polygon(_) => [0.0, 0.0],
    };
    let ball_cut = 1.0 / exp.delta;
    let mut results = Vec::with_capacity(times.len());
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for &t in &sorted {
        stepper.solve_until(&mut sol, t / eps)?;
        let inner_poly = minkowski_sum(&exp.g, (1.0 - exp.delta) * t, shape)?;
        let outer_poly = minkowski_sum(&exp.g, (1.0 + exp.delta) * t, shape)?;

        let mut inner_ok = true;
        let mut outer_ok = true;
        for i in 0..grid.len() {
            let pos = grid.pos(i);
            // Scaled coordinate in the shifted frame.
            let x = [eps * pos[0] - y[0], eps * pos[1] - y[1]];
            if x[0] * x[0] + x[1] * x[1] > ball_cut * ball_cut {
                continue;
            }
            let covered = sol.u[i] >= exp.theta_prime;
            if !covered && inner_ok && point_in_polygon(x, &inner_poly) {
                inner_ok = false;
            }
            if covered && outer_ok && !point_in_polygon(x, &outer_poly) {
                outer_ok = false;
            }
            if !inner_ok && !outer_ok {
                break;
            }
        }

        // Diagnostic radial margins around the datum center.
        let rays = 48;
        let profile = radial_mask_profile(
            &sol,
            exp.theta_prime,
            eps,
            y,
            g_center,
            rays,
            ball_cut.min(exp.g.bounding_radius() + (1.0 + exp.delta) * t * shape.max_speed() + 1.0),
        );
        let mut margin_inner = f64::INFINITY;
        let mut margin_outer = f64::INFINITY;
        for (k, &r_mask) in profile.iter().enumerate() {
            let a = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
            let e = [a.cos(), a.sin()];
            let r_in = polygon_ray_extent(&inner_poly, g_center, e);
            let r_out = polygon_ray_extent(&outer_poly, g_center, e);
            margin_inner = margin_inner.min(r_mask - r_in);
            margin_outer = margin_outer.min(r_out - r_mask);
        }

        results.push(SandwichResult {
            eps,
            seed,
            t,
            inner: inner_ok,
            outer: outer_ok,
            margin_inner,
            margin_outer,
        });
    }
    Ok(results)
}

/// Farthest boundary intersection of a ray from `c` in direction `e`.
fn polygon_ray_extent(poly: &[[f64; 2]], c: [f64; 2], e: [f64; 2]) -> f64 {
    let n = poly.len();
    let mut best = 0.0f64;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let d = [b[0] - a[0], b[1] - a[1]];
        let det = e[0] * (-d[1]) - e[1] * (-d[0]);
        if det.abs() < 1e-14 {
            continue;
        }
        let w = [a[0] - c[0], a[1] - c[1]];
        let r = (w[0] * (-d[1]) - w[1] * (-d[0])) / det;
        let s = (e[0] * w[1] - e[1] * w[0]) / det;
        if r >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
            best = best.max(r);
        }
    }
    best
}

/// Probe classification against the limit indicator of `G + t S` with a
/// clearance band around the moving boundary.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProbeResult {
    pub t: f64,
    pub x: [f64; 2],
    /// `Some(true)` = expected filled, `Some(false)` = expected empty,
    /// `None` = inside the clearance band (not judged).
    pub expect_inside: Option<bool>,
    pub value: f64,
    pub pass: bool,
}

/// Pointwise limit check for the reaction fronts: at probes `(t, x)` with
/// clearance `kappa` from the moving boundary, filled points must carry
/// `u >= 1 - tol_val` and empty points `u <= tol_val`.
pub fn pointwise_limit_check(
    spec: &EnvironmentSpec,
    reaction: ReactionSpec,
    exp: &ScaledExperiment,
    shape: &WulffShape,
    eps: f64,
    eps_index: usize,
    seed: u64,
    probes: &[(f64, [f64; 2])],
    clearance: f64,
    tol_val: f64,
) -> Result<Vec<ProbeResult>> {
    let t_max = probes.iter().map(|p| p.0).fold(0.0f64, f64::max);
    let (grid, _) = kpp_grid_for(spec, exp, eps, t_max, false)?;
    let env = EnvironmentRealization::new(spec, seed)?;
    let y = exp.y_shift(eps_index);
    let mut sol = scaled_datum(&grid, exp, eps, y, 0.0)?;
    let mut stepper = KppStepper::new(&env, reaction, grid)?;

    let mut ordered: Vec<(usize, f64, [f64; 2])> =
        probes.iter().enumerate().map(|(i, &(t, x))| (i, t, x)).collect();
    ordered.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    let mut out: Vec<Option<ProbeResult>> = vec![None; probes.len()];
    for (idx, t, x) in ordered {
        stepper.solve_until(&mut sol, t / eps)?;
        let poly = minkowski_sum(&exp.g, t, shape)?;
        let inside = point_in_polygon(x, &poly);
        let bdist = dist_to_polygon_boundary(x, &poly);
        let expect_inside = if bdist < clearance { None } else { Some(inside) };
        let node = grid
            .nearest([(x[0] + y[0]) / eps, (x[1] + y[1]) / eps])
            .ok_or_else(|| CoreError::BoxTooSmall("probe outside box".into()))?;
        let value = sol.u[grid.idx(node.0, node.1)];
        let pass = match expect_inside {
            Some(true) => value >= 1.0 - tol_val,
            Some(false) => value <= tol_val,
            None => true,
        };
        out[idx] = Some(ProbeResult { t, x, expect_inside, value, pass });
    }
    Ok(out.into_iter().map(|r| r.unwrap()).collect())
}

/// Offset sampler for the sup-dilation `sup_{y in x - t S} u0(y)`: a cover
/// of `t S` by points at pitch `pitch` (plus the vertices).
pub struct DilationSampler {
    offsets: Vec<[f64; 2]>,
}

impl DilationSampler {
    pub fn new(shape: &WulffShape, t: f64, pitch: f64) -> Self {
        let mut offsets = Vec::new();
        if t <= 0.0 {
            offsets.push([0.0, 0.0]);
            return Self { offsets };
        }
        let poly: Vec<[f64; 2]> = shape.vertices.iter().map(|v| [t * v[0], t * v[1]]).collect();
        let r = t * shape.max_speed();
        let n = (2.0 * r / pitch).ceil() as i64 + 1;
        for iy in -n..=n {
            for ix in -n..=n {
                let p = [ix as f64 * pitch, iy as f64 * pitch];
                if point_in_polygon(p, &poly) {
                    offsets.push(p);
                }
            }
        }
        offsets.extend_from_slice(&poly);
        offsets.push([0.0, 0.0]);
        Self { offsets }
    }

    /// `sup u0(x - o)` over the sampled offsets.
    pub fn eval(&self, u0: &dyn Fn([f64; 2]) -> f64, x: [f64; 2]) -> f64 {
        self.offsets
            .iter()
            .map(|o| u0([x[0] - o[0], x[1] - o[1]]))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One probe of the level-set scaled limit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GeqProbeResult {
    pub t: f64,
    pub x: [f64; 2],
    pub value: f64,
    pub dilated: f64,
    pub error: f64,
}

/// Solves the scaled level-set equation from data within `rho(eps)` of
/// `u0(. - y_eps)` and compares probe values against the sup-dilation of
/// `u0` by `t S`.
#[allow(clippy::too_many_arguments)]
pub fn geq_limit_run(
    spec: &EnvironmentSpec,
    exp: &ScaledExperiment,
    shape: &WulffShape,
    eps: f64,
    eps_index: usize,
    seed: u64,
    u0: &(dyn Fn([f64; 2]) -> f64 + Sync),
    u0_radius: f64,
    probes: &[(f64, [f64; 2])],
) -> Result<Vec<GeqProbeResult>> {
    let t_max = probes.iter().map(|p| p.0).fold(0.0f64, f64::max);
    let probe_r = probes
        .iter()
        .map(|p| (p.1[0].powi(2) + p.1[1].powi(2)).sqrt())
        .fold(0.0f64, f64::max);
    let rate = spec.c_max + spec.v_max();
    let hw = (u0_radius.max(probe_r) + exp.shift_lambda / 2.0) / eps + rate * t_max / eps + 4.0;
    let dt = crate::grid::geq_stable_dt(spec.dimension, exp.h, spec.v_max(), spec.c_max);
    let grid = Grid::new(spec.dimension, exp.h, hw, dt)?;
    let env = EnvironmentRealization::new(spec, seed)?;
    let y = exp.y_shift(eps_index);

    // Datum: u0 shifted by y_eps plus a deterministic perturbation within
    // the rho(eps) allowance.
    let pert_amp = exp.rho(eps).min(0.02);
    let mut lf = init_from_fn(&grid, 0.0, |p: [f64; 2]| {
        let x = [eps * p[0] - y[0], eps * p[1] - y[1]];
        u0(x) + pert_amp * (3.0 * x[0]).sin() * (2.0 * x[1]).cos()
    });
    let mut stepper = GeqStepper::new(&env, grid)?;
    // Level data are O(1) and bounded; the guard only needs to catch the
    // (impossible by box sizing) case of front values reaching the ring.
    stepper.ring_guard_level = f64::INFINITY;

    let mut ordered: Vec<(usize, f64, [f64; 2])> =
        probes.iter().enumerate().map(|(i, &(t, x))| (i, t, x)).collect();
    ordered.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    let pitch = (eps * exp.h).max(0.02);
    let mut out: Vec<Option<GeqProbeResult>> = vec![None; probes.len()];
    let mut sampler_t = f64::NAN;
    let mut sampler: Option<DilationSampler> = None;
    for (idx, t, x) in ordered {
        stepper.solve_until(&mut lf, t / eps)?;
        if sampler.is_none() || (sampler_t - t).abs() > 1e-12 {
            sampler = Some(DilationSampler::new(shape, t, pitch));
            sampler_t = t;
        }
        let dilated = sampler.as_ref().unwrap().eval(u0, x);
        let node = grid
            .nearest([(x[0] + y[0]) / eps, (x[1] + y[1]) / eps])
            .ok_or_else(|| CoreError::BoxTooSmall("probe outside box".into()))?;
        let value = lf.phi[grid.idx(node.0, node.1)];
        out[idx] = Some(GeqProbeResult { t, x, value, dilated, error: (value - dilated).abs() });
    }
    Ok(out.into_iter().map(|r| r.unwrap()).collect())
}
