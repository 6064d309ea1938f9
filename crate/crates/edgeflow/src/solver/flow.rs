//! Short-time solver for the conformal-factor evolution on a feasible edge
//! space, by two independent routes.
//!
//! The equation, in the rescaled time variable `t' = (m - 1) t`, is
//!
//! ```text
//! du/dt' + Delta u = B(u) + Q(u),   u(., 0) = 0,
//! B(u) = -e^{-2u} scal0 / (2(m-1)),
//! Q(u) = -u G(u) Delta u + (m-2)/2 e^{-2u} |grad u|^2,
//! ```
//!
//! where `e^{-2u} = 1 + u G(u)` and `|grad u|^2` is assembled from the
//! rigid-metric edge derivatives. The primary route iterates the Duhamel
//! map `Psi u = int_0^t e^{-(t-s) Delta} (B(u) + Q(u)) ds` to its fixed
//! point inside the ball `{u(., 0) = 0, ||u||_{2k+alpha} <= mu}`; the
//! independent oracle integrates the same method-of-lines system by an
//! implicit trapezoid rule with damped Newton steps and an analytic
//! Jacobian. Both report in **physical** (unrescaled) time: internally the
//! time-change factor `m - 1` is folded into the semigroup and the forcing
//! (see [`DiscreteLaplacian::convolve_scaled`]), which reproduces the
//! rescaled solve sample for sample, so the constant-curvature law
//! `e^{2u(t)} = 1 - S0 t` holds in reported time for every dimension.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{conformal_scal, edge_distance_parts, EdgeConfig};
use crate::grid::{time_derivative, Grid, GridParams, SpaceTimeField};
use crate::holder::{higher_holder_norm, holder_norm, edge_derivative_set, PairScanParams};
use crate::linalg::solve_dense;
use crate::scalar::Scalar;
use crate::solver::laplacian::{build_laplacian, DiscreteLaplacian};
use crate::spectral::{check_feasibility, FeasibilityReport};

/// Which solver produces the returned trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Duhamel fixed-point iteration (the primary route).
    Picard,
    /// Implicit method-of-lines cross-check.
    ImplicitOracle,
}

/// Parameters of a flow solve. `t_final` is the requested horizon in
/// physical time; the accepted horizon may be smaller after halvings.
#[derive(Debug, Clone, Serialize)]
pub struct SolverParams<T> {
    /// Norm order: convergence is measured in the `2k + alpha` norm.
    pub k: usize,
    /// Hoelder exponent; must lie below the configuration's ceiling.
    pub alpha: T,
    /// Ball radius for the fixed-point argument; must be below 1.
    pub mu: T,
    /// Requested physical-time horizon.
    pub t_final: T,
    /// Fixed-point iteration budget per horizon attempt.
    pub max_iters: usize,
    /// Stopping tolerance on successive differences in the `2k + alpha`
    /// norm.
    pub tol: T,
    pub backend: Backend,
}

impl<T: Scalar> SolverParams<T> {
    /// Defaults: `k = 1`, `mu = 0.5`, `tol = 1e-8`, 30 iterations, Picard.
    pub fn new(alpha: T, t_final: T) -> Self {
        SolverParams {
            k: 1,
            alpha,
            mu: T::lit(0.5),
            t_final,
            max_iters: 30,
            tol: T::lit(1e-8),
            backend: Backend::Picard,
        }
    }

    /// Checks the configuration-independent invariants. The remaining one,
    /// `alpha` below the feasibility ceiling, needs the geometry and is
    /// checked by the solvers.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput(
                "norm order k must be >= 1 (the quadratic term is measured two orders down)"
                    .into(),
            ));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.mu > T::zero() && self.mu < T::one()) {
            return Err(Error::Domain(format!(
                "ball radius mu must lie in (0, 1), got {}",
                self.mu
            )));
        }
        if !(self.t_final > T::zero()) {
            return Err(Error::Domain(format!(
                "horizon must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("iteration budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of a solve's progress log.
///
/// For the Picard backend, `diff_norm` is `||u_{n+1} - u_n||_{2k+alpha}`,
/// `ratio` the quotient of successive differences, and `iterate_norm` the
/// `2k + alpha` norm of the new iterate. For the oracle backend one record
/// is written per sample interval: `diff_norm` is the sup change of the
/// slice, `ratio` is absent, and `iterate_norm` is the running sup of the
/// trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord<T> {
    pub iter: usize,
    pub diff_norm: T,
    pub ratio: Option<T>,
    pub iterate_norm: T,
    /// Whether `iterate_norm <= mu`. Violations along the way are logged,
    /// not fatal; only the accepted solution must lie in the ball.
    pub in_ball: bool,
}

/// An accepted flow trajectory with its diagnostics.
#[derive(Debug, Clone)]
pub struct FlowState<T> {
    /// Conformal factor on the solve grid; times are physical for the
    /// public entry points. `u(., 0) = 0` exactly.
    pub u: SpaceTimeField<T>,
    /// Accepted physical horizon (`params.t_final / 2^halvings`).
    pub t_final: T,
    /// Time-change factor folded into the operator and forcing (`m - 1`
    /// for the public entry points).
    pub time_scale: T,
    /// Ball radius the solve was accepted against.
    pub mu: T,
    pub halvings: usize,
    pub iteration_log: Vec<IterationRecord<T>>,
    /// `||u||_{2k+alpha}` of the accepted solution.
    pub norm: T,
    /// `||Psi u - u||_{2k+alpha}` of the returned fixed point (Picard
    /// backend only).
    pub fixed_point_residual: Option<T>,
    /// Scalar curvature of `e^{2u} g0` per grid point.
    pub scal: SpaceTimeField<T>,
    /// Spatial Hoelder norm (order alpha) of each time slice.
    pub slice_norms: Vec<T>,
}

const MAX_HALVINGS: usize = 8;

/// `G(u) = (e^{-2u} - 1)/u`, the factor in `e^{-2u} = 1 + u G(u)`, with the
/// Taylor branch `-2 + 2u - (4/3)u^2 + (2/3)u^3` below `|u| = 1e-6` where
/// the quotient cancels.
pub fn g_series<T: Scalar>(u: T) -> T {
    if u.abs() < T::lit(1e-6) {
        let c3 = T::lit(2.0 / 3.0);
        let c2 = T::lit(-4.0 / 3.0);
        let c1 = T::lit(2.0);
        let c0 = T::lit(-2.0);
        ((c3 * u + c2) * u + c1) * u + c0
    } else {
        (-(u + u)).exp_m1() / u
    }
}

fn require_field_grids<T: Scalar>(
    a: &SpaceTimeField<T>,
    b: &SpaceTimeField<T>,
) -> Result<()> {
    if !Arc::ptr_eq(a.grid(), b.grid()) {
        return Err(Error::InvalidInput(
            "fields live on different grids".into(),
        ));
    }
    Ok(())
}

/// Reaction term `B(u) = -e^{-2u} scal0 / (2(m-1))` pointwise.
pub fn b_op<T: Scalar>(
    u: &SpaceTimeField<T>,
    scal0: &SpaceTimeField<T>,
    m: usize,
) -> Result<SpaceTimeField<T>> {
    require_field_grids(u, scal0)?;
    let denom = T::lit(2.0) * T::of_usize(m - 1);
    let mut out = u.clone();
    for (o, &s) in out.data.iter_mut().zip(scal0.data.iter()) {
        *o = -(-(*o + *o)).exp() * s / denom;
    }
    Ok(out)
}

/// Quadratic term `Q(u) = -u G(u) Delta u + (m-2)/2 e^{-2u} |grad u|^2`,
/// with the gradient taken in the rigid metric:
/// `|grad u|^2 = (d_x u)^2 + x^{-2} (d_z u)^2 + (d_y u)^2`.
pub fn q_op<T: Scalar>(
    u: &SpaceTimeField<T>,
    lap: &DiscreteLaplacian<T>,
    m: usize,
) -> Result<SpaceTimeField<T>> {
    let derivs = edge_derivative_set(u, lap)?;
    let gs = gradient_square(&derivs.dx, derivs.dz_over_x.as_ref(), derivs.dy.as_ref());
    let half_m2 = T::lit(0.5) * T::of_usize(m - 2);
    let mut out = u.clone();
    for i in 0..out.data.len() {
        let v = u.data[i];
        let e2 = (-(v + v)).exp();
        out.data[i] = -v * g_series(v) * derivs.lap.data[i] + half_m2 * e2 * gs[i];
    }
    Ok(out)
}

fn gradient_square<T: Scalar>(
    dx: &SpaceTimeField<T>,
    dz_over_x: Option<&SpaceTimeField<T>>,
    dy: Option<&SpaceTimeField<T>>,
) -> Vec<T> {
    let mut gs: Vec<T> = dx.data.iter().map(|&d| d * d).collect();
    if let Some(dz) = dz_over_x {
        for (g, &d) in gs.iter_mut().zip(dz.data.iter()) {
            *g += d * d;
        }
    }
    if let Some(dy) = dy {
        for (g, &d) in gs.iter_mut().zip(dy.data.iter()) {
            *g += d * d;
        }
    }
    gs
}

/// Samples a spatial curvature profile `(x, link_arc, base_arc) -> scal0`
/// onto every time slice of the grid, rejecting non-finite values.
pub fn sample_scal0<T: Scalar>(
    grid: &Arc<Grid<T>>,
    scal0: &mut dyn FnMut(T, T, T) -> T,
) -> Result<SpaceTimeField<T>> {
    let field = SpaceTimeField::from_fn(grid, |_, x, z, y| scal0(x, z, y));
    if field.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "initial scalar curvature evaluates to a non-finite sample".into(),
        ));
    }
    Ok(field)
}

/// One application of the Duhamel map:
/// `Psi u = int_0^t e^{-(t-s) c Delta} c (B(u) + Q(u)) ds` with
/// `c = time_scale`. The output vanishes at `t = 0` by construction. Ball
/// membership of the input is the caller's concern (the solve loop logs
/// violations; they are not fatal here).
pub fn picard_map<T: Scalar>(
    u: &SpaceTimeField<T>,
    lap: &DiscreteLaplacian<T>,
    scal0: &SpaceTimeField<T>,
    time_scale: T,
) -> Result<SpaceTimeField<T>> {
    require_field_grids(u, scal0)?;
    let m = lap.grid().cfg.m();
    let b = b_op(u, scal0, m)?;
    let q = q_op(u, lap, m)?;
    let mut forcing = b;
    forcing.axpy(T::one(), &q);
    Ok(lap.convolve_scaled(&forcing.to_modes(), time_scale).to_points())
}

fn field_diff<T: Scalar>(a: &SpaceTimeField<T>, b: &SpaceTimeField<T>) -> SpaceTimeField<T> {
    let mut d = a.clone();
    d.axpy(-T::one(), b);
    d
}

fn audit_and_check<T: Scalar>(
    cfg: &EdgeConfig<T>,
    params: &SolverParams<T>,
) -> Result<FeasibilityReport<T>> {
    params.validate()?;
    let audit = check_feasibility(cfg)?;
    if !audit.feasible {
        return Err(Error::Infeasible(format!(
            "configuration fails the flow audit (alpha ceiling {})",
            audit.alpha0
        )));
    }
    if !(params.alpha < audit.alpha0) {
        return Err(Error::Domain(format!(
            "alpha = {} is not below the admissible ceiling {}",
            params.alpha, audit.alpha0
        )));
    }
    Ok(audit)
}

fn fmt<T: Scalar>(v: T) -> String {
    format!("{:.3e}", v.to_f64().unwrap_or(f64::NAN))
}

/// Solves by Picard iteration in physical time: the time-change factor
/// `m - 1` is folded into the semigroup and forcing, so the returned grid
/// carries unrescaled time samples. `resolution.t_final` is ignored — the
/// horizon comes from `params.t_final` and is halved on failure.
pub fn picard_solve<T: Scalar>(
    cfg: &EdgeConfig<T>,
    resolution: &GridParams<T>,
    scal0: &mut dyn FnMut(T, T, T) -> T,
    params: &SolverParams<T>,
) -> Result<FlowState<T>> {
    let scale = T::of_usize(cfg.m() - 1);
    picard_solve_scaled(cfg, resolution, scal0, params, scale)
}

/// [`picard_solve`] with an explicit time-change factor. `time_scale = 1`
/// solves the plain rescaled equation on the grid's own clock; the public
/// entry uses `m - 1`. Solving here with factor `c` at horizon `T` equals
/// solving with factor 1 at horizon `c T` sample for sample, which the
/// covariance tests exercise.
pub fn picard_solve_scaled<T: Scalar>(
    cfg: &EdgeConfig<T>,
    resolution: &GridParams<T>,
    scal0: &mut dyn FnMut(T, T, T) -> T,
    params: &SolverParams<T>,
    time_scale: T,
) -> Result<FlowState<T>> {
    audit_and_check(cfg, params)?;
    if !(time_scale > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "time-change factor must be positive, got {time_scale}"
        )));
    }
    let scan = PairScanParams::default();
    let mut attempt_notes: Vec<String> = Vec::new();
    let mut horizon = params.t_final;
    for attempt in 0..=MAX_HALVINGS {
        let grid = Grid::new(
            cfg.clone(),
            GridParams { t_final: horizon, ..*resolution },
        )?;
        let lap = build_laplacian(&grid, false)?;
        let s0 = sample_scal0(&grid, scal0)?;

        let mut u = SpaceTimeField::zeros(&grid);
        let mut log: Vec<IterationRecord<T>> = Vec::new();
        let mut prev_diff: Option<T> = None;
        let mut converged = false;
        let mut in_ball = false;
        for iter in 1..=params.max_iters {
            let next = picard_map(&u, &lap, &s0, time_scale)?;
            let diff = higher_holder_norm(
                &field_diff(&next, &u),
                &lap,
                params.k,
                params.alpha,
                &scan,
            )?;
            let norm = higher_holder_norm(&next, &lap, params.k, params.alpha, &scan)?;
            let ratio = prev_diff.map(|p| diff / p);
            log.push(IterationRecord {
                iter,
                diff_norm: diff,
                ratio,
                iterate_norm: norm,
                in_ball: norm <= params.mu,
            });
            u = next;
            if !diff.is_finite() || diff > T::lit(1e6) {
                break;
            }
            if diff <= params.tol {
                converged = true;
                in_ball = norm <= params.mu;
                break;
            }
            prev_diff = Some(diff);
        }

        if converged && in_ball {
            let residual = higher_holder_norm(
                &field_diff(&picard_map(&u, &lap, &s0, time_scale)?, &u),
                &lap,
                params.k,
                params.alpha,
                &scan,
            )?;
            let norm = log.last().map(|r| r.iterate_norm).unwrap_or_else(T::zero);
            return finalize_state(
                u,
                &lap,
                &s0,
                params,
                time_scale,
                horizon,
                attempt,
                log,
                norm,
                Some(residual),
            );
        }

        let last = log.last();
        let ratios: Vec<String> = log
            .iter()
            .rev()
            .take(4)
            .filter_map(|r| r.ratio)
            .map(fmt)
            .collect();
        attempt_notes.push(format!(
            "T={}: {} iterations, last diff {}, last norm {}{}, recent ratios [{}]",
            fmt(horizon),
            log.len(),
            last.map(|r| fmt(r.diff_norm)).unwrap_or_default(),
            last.map(|r| fmt(r.iterate_norm)).unwrap_or_default(),
            if converged { format!(" (converged outside the mu={} ball)", fmt(params.mu)) } else { String::new() },
            ratios.join(", "),
        ));
        horizon = horizon * T::lit(0.5);
    }
    Err(Error::NoConvergence(format!(
        "Picard iteration failed through {MAX_HALVINGS} horizon halvings; {}",
        attempt_notes.join("; ")
    )))
}

#[allow(clippy::too_many_arguments)]
fn finalize_state<T: Scalar>(
    u: SpaceTimeField<T>,
    lap: &DiscreteLaplacian<T>,
    s0: &SpaceTimeField<T>,
    params: &SolverParams<T>,
    time_scale: T,
    horizon: T,
    halvings: usize,
    log: Vec<IterationRecord<T>>,
    norm: T,
    residual: Option<T>,
) -> Result<FlowState<T>> {
    let m = lap.grid().cfg.m();
    let derivs = edge_derivative_set(&u, lap)?;
    let gs = gradient_square(&derivs.dx, derivs.dz_over_x.as_ref(), derivs.dy.as_ref());
    let mut scal = u.clone();
    for i in 0..scal.data.len() {
        scal.data[i] = conformal_scal(m, u.data[i], gs[i], derivs.lap.data[i], s0.data[i]);
    }
    let slice_norms = slice_holder_norms(&u, params.alpha);
    Ok(FlowState {
        u,
        t_final: horizon,
        time_scale,
        mu: params.mu,
        halvings,
        iteration_log: log,
        norm,
        fixed_point_residual: residual,
        scal,
        slice_norms,
    })
}

/// Spatial Hoelder norm (sup plus order-alpha seminorm over same-time
/// pairs) of each time slice. Slices with many spatial points are strided
/// down to at most 600 for the seminorm part.
fn slice_holder_norms<T: Scalar>(u: &SpaceTimeField<T>, alpha: T) -> Vec<T> {
    let grid = u.grid();
    let (nt, nx, nl, nb) = grid.dims();
    let n_space = nx * nl * nb;
    let stride = n_space.div_ceil(600);
    let sampled: Vec<usize> = (0..n_space).step_by(stride).collect();
    let coords: Vec<(T, usize, usize)> = sampled
        .iter()
        .map(|&s| {
            let ix = s / (nl * nb);
            let rem = s % (nl * nb);
            (grid.radial.nodes[ix], rem / nb, rem % nb)
        })
        .collect();
    (0..nt)
        .map(|it| {
            let slice = u.time_slice(it);
            let sup = slice.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let mut semi = T::zero();
            for a in 0..sampled.len() {
                for b in (a + 1)..sampled.len() {
                    let du = (slice[sampled[a]] - slice[sampled[b]]).abs();
                    if du == T::zero() {
                        continue;
                    }
                    let (xa, la, ba) = coords[a];
                    let (xb, lb, bb) = coords[b];
                    let dy = grid.base.arc_distance(ba, bb);
                    let d = edge_distance_parts(
                        xa - xb,
                        xa + xb,
                        grid.link.arc_distance(la, lb),
                        dy * dy,
                    );
                    if d > T::zero() {
                        semi = semi.max(du / d.powf(alpha));
                    }
                }
            }
            sup + semi
        })
        .collect()
}

/// Sup norm of the discrete flow residual
/// `d_t u + c (Delta u - B(u) - Q(u))` with `c = state.time_scale`,
/// evaluated with the stencil time derivative. For an accepted solution
/// this measures time-integration consistency only — the spatial operator
/// in the residual is the one the solve used.
pub fn flow_pde_residual<T: Scalar>(
    u: &SpaceTimeField<T>,
    lap: &DiscreteLaplacian<T>,
    scal0: &SpaceTimeField<T>,
    time_scale: T,
) -> Result<T> {
    require_field_grids(u, scal0)?;
    let m = lap.grid().cfg.m();
    let b = b_op(u, scal0, m)?;
    let q = q_op(u, lap, m)?;
    let dtu = time_derivative(u);
    let lap_u = lap.apply_points(u);
    let mut worst = T::zero();
    for i in 0..u.data.len() {
        let r = dtu.data[i] + time_scale * (lap_u.data[i] - b.data[i] - q.data[i]);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

struct OracleMatrices<T> {
    a: Vec<Vec<T>>,
    dx: Vec<Vec<T>>,
    dz: Option<Vec<Vec<T>>>,
    dy: Option<Vec<Vec<T>>>,
}

/// Assembles dense spatial matrices (Laplacian and first derivatives) by
/// probing the shared stencil routines with basis vectors on a 3-slice
/// clone of the grid, so the oracle linearizes exactly the operators the
/// Picard route applies.
fn oracle_matrices<T: Scalar>(
    cfg: &EdgeConfig<T>,
    resolution: &GridParams<T>,
    horizon: T,
) -> Result<OracleMatrices<T>> {
    let probe_grid = Grid::new(
        cfg.clone(),
        GridParams { n_time: 3, t_final: horizon, ..*resolution },
    )?;
    let lap = build_laplacian(&probe_grid, false)?;
    let s = probe_grid.space_len();
    let (_, _, nl, nb) = probe_grid.dims();
    let mut a = vec![vec![T::zero(); s]; s];
    let mut dx = vec![vec![T::zero(); s]; s];
    let mut dz = (nl > 1).then(|| vec![vec![T::zero(); s]; s]);
    let mut dy = (nb > 1).then(|| vec![vec![T::zero(); s]; s]);
    for j in 0..s {
        let mut probe = SpaceTimeField::zeros(&probe_grid);
        probe.data[j] = T::one();
        let derivs = edge_derivative_set(&probe, &lap)?;
        for i in 0..s {
            a[i][j] = derivs.lap.data[i];
            dx[i][j] = derivs.dx.data[i];
        }
        if let (Some(dzm), Some(dzf)) = (dz.as_mut(), derivs.dz_over_x.as_ref()) {
            for i in 0..s {
                dzm[i][j] = dzf.data[i];
            }
        }
        if let (Some(dym), Some(dyf)) = (dy.as_mut(), derivs.dy.as_ref()) {
            for i in 0..s {
                dym[i][j] = dyf.data[i];
            }
        }
    }
    Ok(OracleMatrices { a, dx, dz, dy })
}

fn matvec<T: Scalar>(m: &[Vec<T>], v: &[T], out: &mut [T]) {
    for (o, row) in out.iter_mut().zip(m.iter()) {
        *o = row.iter().zip(v.iter()).map(|(&a, &b)| a * b).sum();
    }
}

struct OracleRhs<T> {
    f: Vec<T>,
    av: Vec<T>,
    gx: Vec<T>,
    gz: Vec<T>,
    gy: Vec<T>,
    gs: Vec<T>,
    e2: Vec<T>,
}

fn oracle_rhs<T: Scalar>(
    mats: &OracleMatrices<T>,
    s0: &[T],
    m: usize,
    v: &[T],
) -> OracleRhs<T> {
    let s = v.len();
    let mut av = vec![T::zero(); s];
    matvec(&mats.a, v, &mut av);
    let mut gx = vec![T::zero(); s];
    matvec(&mats.dx, v, &mut gx);
    let mut gz = vec![T::zero(); s];
    if let Some(dz) = &mats.dz {
        matvec(dz, v, &mut gz);
    }
    let mut gy = vec![T::zero(); s];
    if let Some(dy) = &mats.dy {
        matvec(dy, v, &mut gy);
    }
    let denom = T::lit(2.0) * T::of_usize(m - 1);
    let half_m2 = T::lit(0.5) * T::of_usize(m - 2);
    let mut e2 = vec![T::zero(); s];
    let mut gs = vec![T::zero(); s];
    let mut f = vec![T::zero(); s];
    for i in 0..s {
        e2[i] = (-(v[i] + v[i])).exp();
        gs[i] = gx[i] * gx[i] + gz[i] * gz[i] + gy[i] * gy[i];
        let b = -e2[i] * s0[i] / denom;
        let q = -v[i] * g_series(v[i]) * av[i] + half_m2 * e2[i] * gs[i];
        f[i] = -av[i] + b + q;
    }
    OracleRhs { f, av, gx, gz, gy, gs, e2 }
}

/// Implicit method-of-lines cross-check: trapezoid steps in (physical)
/// time on `d_t u = c (-Delta u + B(u) + Q(u))`, each solved by damped
/// Newton with the analytic Jacobian. `substep` caps the internal step; it
/// is rounded down to divide the grid's sampling interval, and defaults to
/// a quarter of it. The horizon is taken from `params.t_final` as given —
/// no halvings.
pub fn implicit_oracle_solve<T: Scalar>(
    cfg: &EdgeConfig<T>,
    resolution: &GridParams<T>,
    scal0: &mut dyn FnMut(T, T, T) -> T,
    params: &SolverParams<T>,
    substep: Option<T>,
) -> Result<FlowState<T>> {
    audit_and_check(cfg, params)?;
    let horizon = params.t_final;
    let grid = Grid::new(
        cfg.clone(),
        GridParams { t_final: horizon, ..*resolution },
    )?;
    let lap = build_laplacian(&grid, false)?;
    let s0_field = sample_scal0(&grid, scal0)?;
    let m = cfg.m();
    let scale = T::of_usize(m - 1);
    let mats = oracle_matrices(cfg, resolution, horizon)?;
    let s = grid.space_len();
    let s0: Vec<T> = s0_field.time_slice(0).to_vec();
    let (nt, _, _, _) = grid.dims();
    let dt = grid.dt();
    let cap = match substep {
        Some(c) if !(c > T::zero()) => {
            return Err(Error::InvalidInput(format!(
                "oracle substep must be positive, got {c}"
            )));
        }
        Some(c) => c,
        None => dt / T::lit(4.0),
    };
    let per = (dt / cap).ceil().to_f64().unwrap_or(1.0).max(1.0) as usize;
    let h = dt / T::of_usize(per);
    let hc = h * scale;
    let half_hc = hc * T::lit(0.5);

    let mut u = SpaceTimeField::zeros(&grid);
    let mut log: Vec<IterationRecord<T>> = Vec::new();
    let mut v = vec![T::zero(); s];
    let mut running_sup = T::zero();
    for n in 0..nt - 1 {
        let prev = v.clone();
        for _ in 0..per {
            v = trapezoid_newton_step(&mats, &s0, m, &v, half_hc, hc)?;
        }
        u.time_slice_mut(n + 1).copy_from_slice(&v);
        let mut change = T::zero();
        for (a, b) in v.iter().zip(prev.iter()) {
            change = change.max((*a - *b).abs());
            running_sup = running_sup.max(a.abs());
        }
        log.push(IterationRecord {
            iter: n + 1,
            diff_norm: change,
            ratio: None,
            iterate_norm: running_sup,
            in_ball: true,
        });
    }

    let scan = PairScanParams::default();
    let norm = higher_holder_norm(&u, &lap, params.k, params.alpha, &scan)?;
    if !(norm <= params.mu) {
        return Err(Error::NoConvergence(format!(
            "oracle trajectory norm {} exceeds the ball radius {}",
            fmt(norm),
            fmt(params.mu)
        )));
    }
    for rec in &mut log {
        rec.in_ball = true;
    }
    finalize_state(u, &lap, &s0_field, params, scale, horizon, 0, log, norm, None)
}

fn trapezoid_newton_step<T: Scalar>(
    mats: &OracleMatrices<T>,
    s0: &[T],
    m: usize,
    v: &[T],
    half_hc: T,
    hc: T,
) -> Result<Vec<T>> {
    let s = v.len();
    let f_prev = oracle_rhs(mats, s0, m, v).f;
    // Explicit predictor, then Newton on
    // R(w) = w - v - (hc/2)(F(v) + F(w)).
    let mut w: Vec<T> = v
        .iter()
        .zip(f_prev.iter())
        .map(|(&a, &f)| a + hc * f)
        .collect();
    let residual = |w: &[T], fw: &[T]| -> Vec<T> {
        (0..s)
            .map(|i| w[i] - v[i] - half_hc * (f_prev[i] + fw[i]))
            .collect()
    };
    let sup = |r: &[T]| r.iter().fold(T::zero(), |a, &b| a.max(b.abs()));

    let mut rhs = oracle_rhs(mats, s0, m, &w);
    let mut r = residual(&w, &rhs.f);
    let mut rn = sup(&r);
    for _ in 0..30 {
        let v_scale = T::one() + sup(&w);
        let tol = v_scale * T::lit(1e-13).max(T::epsilon() * T::lit(8.0));
        if rn <= tol {
            return Ok(w);
        }
        let jac = oracle_jacobian(mats, s0, m, &w, &rhs, half_hc);
        let rhs_neg: Vec<T> = r.iter().map(|&x| -x).collect();
        let delta = solve_dense(jac, rhs_neg)?;
        let mut lambda = T::one();
        let mut improved = false;
        for _ in 0..9 {
            let trial: Vec<T> = w
                .iter()
                .zip(delta.iter())
                .map(|(&a, &d)| a + lambda * d)
                .collect();
            let trial_rhs = oracle_rhs(mats, s0, m, &trial);
            let trial_r = residual(&trial, &trial_rhs.f);
            let trial_rn = sup(&trial_r);
            if trial_rn < rn * (T::one() - lambda * T::lit(0.25)) || trial_rn <= tol {
                w = trial;
                rhs = trial_rhs;
                r = trial_r;
                rn = trial_rn;
                improved = true;
                break;
            }
            lambda = lambda * T::lit(0.5);
        }
        if !improved {
            return Err(Error::NoConvergence(format!(
                "implicit step: Newton line search stalled at residual {}",
                fmt(rn)
            )));
        }
    }
    Err(Error::NoConvergence(format!(
        "implicit step: Newton did not reach tolerance (residual {})",
        fmt(rn)
    )))
}

/// Jacobian of the trapezoid residual: `I - (hc/2) F'(w)` with
/// `F'(w) = -e^{-2w} A + diag(e^{-2w} scal0/(m-1) + 2 e^{-2w} Aw
/// - (m-2) e^{-2w} |grad w|^2) + (m-2) e^{-2w} (gx Dx + gz Dz + gy Dy)`.
fn oracle_jacobian<T: Scalar>(
    mats: &OracleMatrices<T>,
    s0: &[T],
    m: usize,
    w: &[T],
    rhs: &OracleRhs<T>,
    half_hc: T,
) -> Vec<Vec<T>> {
    let s = w.len();
    let m1 = T::of_usize(m - 1);
    let m2 = T::of_usize(m - 2);
    let mut jac = vec![vec![T::zero(); s]; s];
    for i in 0..s {
        let e2 = rhs.e2[i];
        let grad_coef = m2 * e2;
        let row = &mut jac[i];
        for jj in 0..s {
            let mut df = -mats.a[i][jj] * e2 + grad_coef * rhs.gx[i] * mats.dx[i][jj];
            if let Some(dz) = &mats.dz {
                df += grad_coef * rhs.gz[i] * dz[i][jj];
            }
            if let Some(dy) = &mats.dy {
                df += grad_coef * rhs.gy[i] * dy[i][jj];
            }
            row[jj] = -half_hc * df;
        }
        let diag = e2 * s0[i] / m1 + T::lit(2.0) * e2 * rhs.av[i] - m2 * e2 * rhs.gs[i];
        row[i] += T::one() - half_hc * diag;
    }
    jac
}

/// Solves with the configured backend and checks that the evolved metric
/// `e^{2u} g0` stays admissible: the conformal factor, its edge
/// derivatives, and the evolved scalar curvature must remain finite and
/// the solution inside the ball. The returned state carries the
/// `scal(g(t))` trajectory as its diagnostic field.
pub fn yamabe_flow_run<T: Scalar>(
    cfg: &EdgeConfig<T>,
    resolution: &GridParams<T>,
    scal0: &mut dyn FnMut(T, T, T) -> T,
    params: &SolverParams<T>,
) -> Result<FlowState<T>> {
    let state = match params.backend {
        Backend::Picard => picard_solve(cfg, resolution, scal0, params)?,
        Backend::ImplicitOracle => {
            implicit_oracle_solve(cfg, resolution, scal0, params, None)?
        }
    };
    if !state.norm.is_finite()
        || state.scal.data.iter().any(|v| !v.is_finite())
        || state.slice_norms.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Domain(
            "evolved metric left the admissible class: non-finite conformal data".into(),
        ));
    }
    Ok(state)
}

/// Spatially constant initial scalar curvature.
pub fn constant_curvature<T: Scalar>(s0: T) -> impl FnMut(T, T, T) -> T {
    move |_, _, _| s0
}

/// Link-constant Gaussian curvature bump centered in the radial collar.
pub fn radial_bump<T: Scalar>(
    amplitude: T,
    center: T,
    width: T,
) -> impl FnMut(T, T, T) -> T {
    move |x, _, _| {
        let r = (x - center) / width;
        amplitude * (-r * r).exp()
    }
}

/// In-ball trajectory samples for estimate audits and contraction probes:
/// smooth seeded random bump combinations, each vanishing at `t = 0` and
/// scaled to a norm between `0.25 mu` and `0.95 mu`.
pub fn ball_samples<T: Scalar>(
    lap: &DiscreteLaplacian<T>,
    count: usize,
    seed: u64,
    params: &SolverParams<T>,
    scan: &PairScanParams,
) -> Result<Vec<SpaceTimeField<T>>> {
    use rand::{Rng, SeedableRng};
    let grid = lap.grid().clone();
    let t_final = grid.t_final();
    let link_len = grid.link.circumference;
    let base_len = grid.base.circumference;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let c1 = T::lit(rng.gen_range(0.25..0.75));
        let w1 = T::lit(rng.gen_range(0.15..0.35));
        let a1 = T::lit(rng.gen_range(-1.0..1.0));
        let c2 = T::lit(rng.gen_range(0.25..0.75));
        let w2 = T::lit(rng.gen_range(0.15..0.35));
        let a2 = T::lit(rng.gen_range(-1.0..1.0));
        let lk = rng.gen_range(1..3usize);
        let lphase = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
        let bk = rng.gen_range(1..3usize);
        let bphase = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
        let target = params.mu * T::lit(rng.gen_range(0.25..0.95));
        let mut field = SpaceTimeField::from_fn(&grid, |t, x, z, y| {
            let ramp = t / t_final;
            let r1 = (x - c1) / w1;
            let r2 = (x - c2) / w2;
            let mut v = a1 * (-r1 * r1).exp() + a2 * (-r2 * r2).exp();
            if let Some(l) = link_len {
                let ang = T::lit(std::f64::consts::TAU) * T::of_usize(lk) * z / l;
                v = v * (T::one() + T::lit(0.5) * (ang + lphase).cos());
            }
            if let Some(l) = base_len {
                let ang = T::lit(std::f64::consts::TAU) * T::of_usize(bk) * y / l;
                v = v * (T::one() + T::lit(0.5) * (ang + bphase).cos());
            }
            ramp * v
        });
        let norm = higher_holder_norm(&field, lap, params.k, params.alpha, scan)?;
        if norm > T::zero() {
            field.scale(target / norm);
        }
        out.push(field);
    }
    Ok(out)
}

/// Empirical maxima of one quotient family, at half and full sample size.
/// The full set contains the half set, so `max_full >= max_half` and
/// `growth` is the one-sided relative increase.
#[derive(Debug, Clone, Serialize)]
pub struct QuotientStat<T> {
    pub max_half: T,
    pub max_full: T,
    pub growth: T,
    pub finite: bool,
    pub stable: bool,
}

impl<T: Scalar> QuotientStat<T> {
    fn build(values: &[T], half: usize) -> Self {
        let max_of = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a.max(b));
        let max_half = max_of(&values[..half.min(values.len())]);
        let max_full = max_of(values);
        let growth = if max_half > T::zero() {
            (max_full - max_half) / max_half
        } else if max_full > T::zero() {
            T::infinity()
        } else {
            T::zero()
        };
        let finite = max_full.is_finite();
        QuotientStat {
            max_half,
            max_full,
            growth,
            finite,
            stable: finite && growth <= T::lit(0.25),
        }
    }
}

/// Result of [`estimate_audit`].
#[derive(Debug, Clone, Serialize)]
pub struct EstimateAuditReport<T> {
    pub mu: T,
    pub pairs: usize,
    /// Pairs with `u = u'`, skipped by the Lipschitz families.
    pub degenerate_skips: usize,
    /// `||Q u||_{2(k-1)+alpha} / ||u||^2_{2k+alpha}` over all sample fields.
    pub quadratic: QuotientStat<T>,
    /// `||Q u - Q u'||_{2(k-1)+alpha} /
    /// (max(||u||, ||u'||)_{2k+alpha} ||u - u'||_{2k+alpha})`.
    pub quadratic_lipschitz: QuotientStat<T>,
    /// `||B u - B u'||_{2k+alpha} / ||u - u'||_{2k+alpha}`.
    pub curvature_lipschitz: QuotientStat<T>,
}

/// Measures the quadratic and Lipschitz behavior of the nonlinear terms on
/// in-ball sample pairs and reports the empirical constants with their
/// stability under doubling the sample set (the first half of `pairs`
/// versus all of it). Samples outside the `mu` ball are rejected.
pub fn estimate_audit<T: Scalar>(
    pairs: &[(SpaceTimeField<T>, SpaceTimeField<T>)],
    lap: &DiscreteLaplacian<T>,
    scal0: &SpaceTimeField<T>,
    params: &SolverParams<T>,
    scan: &PairScanParams,
) -> Result<EstimateAuditReport<T>> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("estimate audit needs sample pairs".into()));
    }
    let m = lap.grid().cfg.m();
    let k = params.k;
    let alpha = params.alpha;
    let slack = params.mu * (T::one() + T::lit(1e-9));
    let lower_norm = |f: &SpaceTimeField<T>| -> Result<T> {
        if k == 1 {
            Ok(holder_norm(f, alpha, scan)?.norm_alpha)
        } else {
            higher_holder_norm(f, lap, k - 1, alpha, scan)
        }
    };

    let mut quad = Vec::new();
    let mut quad_lip = Vec::new();
    let mut b_lip = Vec::new();
    let mut quad_half = 0usize;
    let mut lip_half = 0usize;
    let mut degenerate = 0usize;
    let half_pairs = pairs.len() / 2;
    for (idx, (u, v)) in pairs.iter().enumerate() {
        require_field_grids(u, scal0)?;
        require_field_grids(v, scal0)?;
        let nu = higher_holder_norm(u, lap, k, alpha, scan)?;
        let nv = higher_holder_norm(v, lap, k, alpha, scan)?;
        if nu > slack || nv > slack {
            return Err(Error::InvalidInput(format!(
                "sample pair {idx} leaves the mu = {} ball (norms {}, {})",
                fmt(params.mu),
                fmt(nu),
                fmt(nv)
            )));
        }
        let qu = q_op(u, lap, m)?;
        let qv = q_op(v, lap, m)?;
        for (f, n) in [(&qu, nu), (&qv, nv)] {
            if n > T::zero() {
                quad.push(lower_norm(f)? / (n * n));
            } else {
                degenerate += 1;
            }
        }
        let du = higher_holder_norm(&field_diff(u, v), lap, k, alpha, scan)?;
        if du > T::zero() {
            quad_lip.push(lower_norm(&field_diff(&qu, &qv))? / (nu.max(nv) * du));
            let bu = b_op(u, scal0, m)?;
            let bv = b_op(v, scal0, m)?;
            b_lip.push(higher_holder_norm(&field_diff(&bu, &bv), lap, k, alpha, scan)? / du);
        } else {
            degenerate += 1;
        }
        if idx + 1 == half_pairs {
            quad_half = quad.len();
            lip_half = quad_lip.len();
        }
    }
    Ok(EstimateAuditReport {
        mu: params.mu,
        pairs: pairs.len(),
        degenerate_skips: degenerate,
        quadratic: QuotientStat::build(&quad, quad_half),
        quadratic_lipschitz: QuotientStat::build(&quad_lip, lip_half),
        curvature_lipschitz: QuotientStat::build(&b_lip, lip_half),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BaseSpec, LinkSpec, PerturbationDecay, SpectralLevel};

    fn cone_cfg() -> EdgeConfig<f64> {
        EdgeConfig::new(
            1,
            LinkSpec::circle_from_cone_angle(std::f64::consts::FRAC_PI_6).unwrap(),
            BaseSpec::Point,
            PerturbationDecay::QuadraticDecay,
        )
        .unwrap()
    }

    /// f = 2 link with an explicit spectrum meeting the curvature
    /// obstruction, so the whole audit passes and m = 3.
    fn feasible_m3_cfg() -> EdgeConfig<f64> {
        EdgeConfig::new(
            2,
            LinkSpec::ExplicitSpectrum {
                levels: vec![
                    SpectralLevel { lambda: 0.0, multiplicity: 1 },
                    SpectralLevel { lambda: 4.0, multiplicity: 3 },
                ],
                scal_kappa: 2.0,
            },
            BaseSpec::Point,
            PerturbationDecay::QuadraticDecay,
        )
        .unwrap()
    }

    fn resolution(nx: usize, nt: usize) -> GridParams<f64> {
        GridParams {
            n_radial: nx,
            grading: 2.0,
            n_link_points: 1,
            n_base_points: 1,
            n_time: nt,
            t_final: 1.0,
        }
    }

    fn default_params(t_final: f64) -> SolverParams<f64> {
        SolverParams::new(0.3, t_final)
    }

    #[test]
    fn g_series_matches_closed_form_and_identity() {
        assert_eq!(g_series(0.0f64), -2.0);
        let direct = (f64::exp(-1.0) - 1.0) / 0.5;
        assert!((g_series(0.5f64) - direct).abs() < 1e-15);
        for i in 0..41 {
            let u = -1.0 + 0.05 * i as f64;
            let lhs = 1.0 + u * g_series(u);
            assert!((lhs - (-2.0 * u).exp()).abs() < 1e-14, "identity fails at u = {u}");
        }
    }

    #[test]
    fn g_series_is_continuous_across_the_branch() {
        for &u in &[1e-6f64 - 1e-12, 1e-6 + 1e-12, -1e-6 + 1e-12, -1e-6 - 1e-12] {
            let series = g_series(u);
            let direct = ((-2.0 * u).exp_m1()) / u;
            assert!(
                (series - direct).abs() < 1e-12,
                "branch mismatch at u = {u}: {series} vs {direct}"
            );
        }
    }

    #[test]
    fn b_op_pointwise_values() {
        let grid = Grid::new(feasible_m3_cfg(), resolution(16, 5)).unwrap();
        let s0 = SpaceTimeField::from_fn(&grid, |_, _, _, _| 1.0);
        let zero = SpaceTimeField::zeros(&grid);
        let b0 = b_op(&zero, &s0, 3).unwrap();
        assert!(b0.data.iter().all(|&v| (v + 0.25).abs() < 1e-15));

        let no_curv = SpaceTimeField::zeros(&grid);
        let b_zero = b_op(&zero, &no_curv, 3).unwrap();
        assert!(b_zero.data.iter().all(|&v| v == 0.0));

        // e^{-2u} = 2 at u = -ln(2)/2, with scal0 = 1 and m = 3: -2/4.
        let u = SpaceTimeField::from_fn(&grid, |_, _, _, _| -f64::ln(2.0) / 2.0);
        let b = b_op(&u, &s0, 3).unwrap();
        assert!(b.data.iter().all(|&v| (v + 0.5).abs() < 1e-14));
    }

    #[test]
    fn q_op_annihilates_constants_exactly() {
        let grid = Grid::new(cone_cfg(), resolution(24, 5)).unwrap();
        let lap = build_laplacian(&grid, false).unwrap();
        let zero = SpaceTimeField::zeros(&grid);
        assert!(q_op(&zero, &lap, 2).unwrap().data.iter().all(|&v| v == 0.0));
        let c = SpaceTimeField::from_fn(&grid, |_, _, _, _| 0.37);
        assert!(q_op(&c, &lap, 2).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn q_op_is_quadratic_at_small_amplitude() {
        let grid = Grid::new(feasible_m3_cfg(), resolution(32, 5)).unwrap();
        let lap = build_laplacian(&grid, false).unwrap();
        let shape = SpaceTimeField::from_fn(&grid, |t, x, _, _| {
            t * (-((x - 0.5) / 0.2) * ((x - 0.5) / 0.2)).exp()
        });
        let sup_q = |eps: f64| {
            let mut field = shape.clone();
            field.scale(eps);
            q_op(&field, &lap, 3).unwrap().sup_norm()
        };
        let (e1, e2) = (1e-2, 1.25e-3);
        let slope = (sup_q(e1) / sup_q(e2)).ln() / (e1 / e2).ln();
        assert!(
            (slope - 2.0).abs() < 0.05,
            "expected quadratic smallness, log-log slope {slope}"
        );
    }

    #[test]
    fn picard_map_of_zero_is_the_linear_heat_response() {
        let cfg = feasible_m3_cfg();
        let grid = Grid::new(cfg.clone(), resolution(24, 9)).unwrap();
        let lap = build_laplacian(&grid, false).unwrap();
        let s0 = SpaceTimeField::from_fn(&grid, |_, _, _, _| 1.0);
        let zero = SpaceTimeField::zeros(&grid);
        let scale = 2.0; // m - 1
        let psi = picard_map(&zero, &lap, &s0, scale).unwrap();
        // Constant forcing B(0) = -1/4 stays in the semigroup's kernel
        // mode, so Psi 0 = scale * B(0) * t exactly (the integrator is
        // exact for forcing linear in t).
        let (nt, nx, nl, nb) = grid.dims();
        for it in 0..nt {
            let expect = -0.25 * scale * grid.times[it];
            for ix in 0..nx {
                for il in 0..nl {
                    for ib in 0..nb {
                        assert!(
                            (psi.at(it, ix, il, ib) - expect).abs() < 1e-12,
                            "slice {it} deviates from the exact heat response"
                        );
                    }
                }
            }
        }

        let no_curv = SpaceTimeField::zeros(&grid);
        let psi0 = picard_map(&zero, &lap, &no_curv, scale).unwrap();
        assert!(psi0.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_curvature_converges_immediately_to_zero() {
        let state = picard_solve(
            &cone_cfg(),
            &resolution(24, 9),
            &mut constant_curvature(0.0),
            &default_params(0.1),
        )
        .unwrap();
        assert_eq!(state.iteration_log.len(), 1);
        assert_eq!(state.u.sup_norm(), 0.0);
        assert_eq!(state.halvings, 0);
        assert_eq!(state.fixed_point_residual, Some(0.0));
        assert!(state.scal.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_curvature_matches_the_exact_law() {
        let mut params = default_params(0.1);
        params.mu = 0.9;
        let state = picard_solve(
            &cone_cfg(),
            &resolution(32, 17),
            &mut constant_curvature(1.0),
            &params,
        )
        .unwrap();
        assert_eq!(state.halvings, 0);
        let grid = state.u.grid().clone();
        let (nt, nx, _, _) = grid.dims();
        let mut worst_u = 0.0f64;
        let mut worst_scal = 0.0f64;
        for it in 0..nt {
            let t = grid.times[it];
            let exact_u = 0.5 * (1.0 - t).ln();
            let exact_scal = 1.0 / (1.0 - t);
            for ix in 0..nx {
                worst_u = worst_u.max((state.u.at(it, ix, 0, 0) - exact_u).abs());
                worst_scal = worst_scal.max((state.scal.at(it, ix, 0, 0) - exact_scal).abs());
            }
        }
        assert!(worst_u < 1e-4, "conformal factor error {worst_u}");
        assert!(worst_scal < 1e-3, "evolved curvature error {worst_scal}");
        let ratios: Vec<f64> = state.iteration_log.iter().filter_map(|r| r.ratio).collect();
        assert!(!ratios.is_empty());
        assert!(ratios.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn implicit_oracle_matches_the_exact_law() {
        let mut params = default_params(0.05);
        params.mu = 0.9;
        params.backend = Backend::ImplicitOracle;
        let state = implicit_oracle_solve(
            &cone_cfg(),
            &resolution(24, 9),
            &mut constant_curvature(-1.0),
            &params,
            Some(1e-3),
        )
        .unwrap();
        let grid = state.u.grid().clone();
        let (nt, nx, _, _) = grid.dims();
        let mut worst = 0.0f64;
        for it in 0..nt {
            let exact = 0.5 * (1.0 + grid.times[it]).ln();
            for ix in 0..nx {
                worst = worst.max((state.u.at(it, ix, 0, 0) - exact).abs());
            }
        }
        assert!(worst < 1e-6, "oracle error {worst}");
        assert!(state.fixed_point_residual.is_none());
    }

    #[test]
    fn backends_agree_on_the_radial_bump() {
        let cfg = cone_cfg();
        let res = resolution(32, 17);
        let params = default_params(0.1);
        let picard = picard_solve(&cfg, &res, &mut radial_bump(0.15, 0.5, 0.2), &params).unwrap();
        let oracle = implicit_oracle_solve(
            &cfg,
            &res,
            &mut radial_bump(0.15, 0.5, 0.2),
            &params,
            Some(1e-3),
        )
        .unwrap();
        assert_eq!(picard.halvings, 0, "bump preset should not need halvings");
        let gap = picard.u.sup_distance(&oracle.u);
        assert!(gap < 1e-3, "backend disagreement {gap}");
    }

    #[test]
    fn contraction_ratios_are_small_on_the_bump() {
        let state = picard_solve(
            &cone_cfg(),
            &resolution(32, 17),
            &mut radial_bump(0.15, 0.5, 0.2),
            &default_params(0.1),
        )
        .unwrap();
        let ratios: Vec<f64> = state.iteration_log.iter().filter_map(|r| r.ratio).collect();
        assert!(!ratios.is_empty());
        assert!(
            ratios.iter().all(|&r| r < 0.5),
            "ratios not uniformly below 1/2: {ratios:?}"
        );
        assert!(state.fixed_point_residual.unwrap() <= state.mu * 1e-8 + 1e-8);
        assert!(state.iteration_log.iter().all(|r| r.in_ball));
    }

    #[test]
    fn time_rescaling_is_covariant() {
        let cfg = feasible_m3_cfg();
        let res = resolution(24, 9);
        let mut params = default_params(0.06);
        params.mu = 0.9;
        let physical = picard_solve(&cfg, &res, &mut radial_bump(0.4, 0.5, 0.2), &params).unwrap();
        assert_eq!(physical.time_scale, 2.0);

        let mut rescaled_params = params.clone();
        rescaled_params.t_final = 0.12;
        let rescaled = picard_solve_scaled(
            &cfg,
            &res,
            &mut radial_bump(0.4, 0.5, 0.2),
            &rescaled_params,
            1.0,
        )
        .unwrap();
        assert_eq!(physical.halvings, 0);
        assert_eq!(rescaled.halvings, 0);
        let worst = physical
            .u
            .data
            .iter()
            .zip(rescaled.u.data.iter())
            .fold(0.0f64, |acc, (&a, &b)| acc.max((a - b).abs()));
        assert!(worst < 1e-10, "covariance violated by {worst}");
    }

    #[test]
    fn discrete_pde_residual_is_time_integration_sized() {
        let cfg = cone_cfg();
        let mut sizes = Vec::new();
        for (nx, nt) in [(32usize, 17usize), (64, 33)] {
            let state = picard_solve(
                &cfg,
                &resolution(nx, nt),
                &mut radial_bump(0.15, 0.5, 0.2),
                &default_params(0.1),
            )
            .unwrap();
            let grid = state.u.grid().clone();
            let lap = build_laplacian(&grid, false).unwrap();
            let s0 = sample_scal0(&grid, &mut radial_bump(0.15, 0.5, 0.2)).unwrap();
            let r = flow_pde_residual(&state.u, &lap, &s0, state.time_scale).unwrap();
            sizes.push(r);
        }
        assert!(sizes[0] < 5e-3, "coarse residual {}", sizes[0]);
        assert!(sizes[1] < sizes[0], "residual did not shrink: {sizes:?}");
    }

    #[test]
    fn ball_exit_exhausts_halvings_with_a_ratio_log() {
        let mut params = default_params(0.1);
        params.mu = 0.05;
        params.max_iters = 20;
        let err = picard_solve(
            &cone_cfg(),
            &resolution(24, 9),
            &mut constant_curvature(1.0),
            &params,
        )
        .unwrap_err();
        match err {
            Error::NoConvergence(msg) => {
                assert!(msg.contains("halvings"), "message: {msg}");
                assert!(msg.contains("ball"), "message: {msg}");
                assert!(msg.contains("ratios"), "message: {msg}");
            }
            other => panic!("expected a no-convergence error, got {other}"),
        }
    }

    #[test]
    fn solver_params_are_validated() {
        let mut p = default_params(0.1);
        p.mu = 1.0;
        assert!(p.validate().is_err());
        let mut p = default_params(0.1);
        p.alpha = 0.0;
        assert!(p.validate().is_err());
        let mut p = default_params(-0.1);
        p.t_final = -0.1;
        assert!(p.validate().is_err());
        let mut p = default_params(0.1);
        p.k = 0;
        assert!(p.validate().is_err());

        // The ceiling check needs the geometry: alpha0 = sqrt(3) - 1 here.
        let mut p = default_params(0.1);
        p.alpha = 0.9;
        let err = picard_solve(
            &cone_cfg(),
            &resolution(24, 9),
            &mut constant_curvature(0.0),
            &p,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn quadratic_quotient_has_a_finite_small_amplitude_limit() {
        // ||Q u||_alpha / ||u||^2_{2+alpha} settles instead of blowing up
        // as the sample amplitude shrinks.
        let grid = Grid::new(cone_cfg(), resolution(24, 9)).unwrap();
        let lap = build_laplacian(&grid, false).unwrap();
        let scan = PairScanParams::default();
        let shape = SpaceTimeField::from_fn(&grid, |t, x, _, _| {
            (t / 0.1) * (-((x - 0.5) / 0.2) * ((x - 0.5) / 0.2)).exp()
        });
        let quotient = |eps: f64| {
            let mut f = shape.clone();
            f.scale(eps);
            let n = higher_holder_norm(&f, &lap, 1, 0.3, &scan).unwrap();
            let q = q_op(&f, &lap, 2).unwrap();
            holder_norm(&q, 0.3, &scan).unwrap().norm_alpha / (n * n)
        };
        let coarse = quotient(1e-2);
        let fine = quotient(1.25e-3);
        assert!(coarse.is_finite() && fine.is_finite());
        assert!(
            fine <= coarse * 1.5 && fine >= coarse / 1.5,
            "quotient drifts at small amplitude: {coarse} vs {fine}"
        );
    }

    #[test]
    fn estimate_audit_handles_degenerate_and_zero_cases() {
        let cfg = cone_cfg();
        let grid = Grid::new(cfg, resolution(24, 9)).unwrap();
        let lap = build_laplacian(&grid, false).unwrap();
        let params = default_params(0.1);
        let scan = PairScanParams::default();
        let samples = ball_samples(&lap, 2, 7, &params, &scan).unwrap();
        let zero_curv = SpaceTimeField::zeros(&grid);
        let pairs = vec![
            (samples[0].clone(), samples[0].clone()),
            (samples[0].clone(), samples[1].clone()),
        ];
        let report = estimate_audit(&pairs, &lap, &zero_curv, &params, &scan).unwrap();
        assert_eq!(report.degenerate_skips, 1);
        assert_eq!(report.curvature_lipschitz.max_full, 0.0);
        assert!(report.curvature_lipschitz.stable);
        assert!(report.quadratic.finite);
    }

    #[test]
    fn estimate_audit_is_finite_and_monotone_under_doubling() {
        let cfg = cone_cfg();
        let grid = Grid::new(cfg, resolution(24, 9)).unwrap();
        let lap = build_laplacian(&grid, false).unwrap();
        let params = default_params(0.1);
        let scan = PairScanParams::default();
        let fields = ball_samples(&lap, 8, 11, &params, &scan).unwrap();
        let s0 = sample_scal0(&grid, &mut radial_bump(0.15, 0.5, 0.2)).unwrap();
        let pairs: Vec<_> = fields
            .chunks_exact(2)
            .map(|c| (c[0].clone(), c[1].clone()))
            .collect();
        let report = estimate_audit(&pairs, &lap, &s0, &params, &scan).unwrap();
        for stat in [
            &report.quadratic,
            &report.quadratic_lipschitz,
            &report.curvature_lipschitz,
        ] {
            assert!(stat.finite);
            assert!(stat.max_full >= stat.max_half);
            assert!(stat.max_full > 0.0);
        }
        assert_eq!(report.degenerate_skips, 0);
    }

    #[test]
    fn out_of_ball_samples_are_rejected_by_the_audit() {
        let cfg = cone_cfg();
        let grid = Grid::new(cfg, resolution(24, 9)).unwrap();
        let lap = build_laplacian(&grid, false).unwrap();
        let params = default_params(0.1);
        let scan = PairScanParams::default();
        let mut big = ball_samples(&lap, 1, 3, &params, &scan).unwrap().remove(0);
        big.scale(10.0);
        let s0 = SpaceTimeField::zeros(&grid);
        let err = estimate_audit(
            &[(big.clone(), big)],
            &lap,
            &s0,
            &params,
            &scan,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn flow_run_dispatches_and_reports_stationary_zero_curvature() {
        let mut params = default_params(0.05);
        params.backend = Backend::ImplicitOracle;
        let state = yamabe_flow_run(
            &cone_cfg(),
            &resolution(24, 9),
            &mut constant_curvature(0.0),
            &params,
        )
        .unwrap();
        assert_eq!(state.u.sup_norm(), 0.0);
        assert!(state.scal.data.iter().all(|&v| v == 0.0));
        assert!(state.slice_norms.iter().all(|&v| v == 0.0));
    }
}
