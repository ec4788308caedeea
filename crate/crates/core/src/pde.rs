//! Explicit monotone finite differences for the one-dimensional HJB system
//! `∂_t u^i + ½ ∂_xx u^i + H_i(t, x, ∂_x u) = 0`, `u(T, ·) = g`.
//!
//! The domain is truncated to `[x_min, x_max]`; at both ends the gradient is
//! frozen at its terminal value (`u_0 = u_1 − (g(x_1) − g(x_0))`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{linspace, GameSpec, Theta, ZMatrix};
use crate::hamiltonian::isaacs_unchecked;
use crate::selectors::Selector;

/// Fraction of the parabolic stability limit `dx²/2` used as time step.
pub const CFL_SAFETY: f64 = 0.9;
/// Upper bound on the number of stored time levels.
const MAX_STORED_LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    /// Interior points; the grid has `nx + 2` nodes including both ends.
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub horizon: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, nx: usize, horizon: f64) -> Result<Self> {
        if !(x_min < 0.0 && 0.0 < x_max && x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "domain [{x_min}, {x_max}] must contain 0 in its interior"
            )));
        }
        if nx < 1 {
            return Err(Error::InvalidArgument("grid needs at least one interior point".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
        }
        let dx = (x_max - x_min) / (nx + 1) as f64;
        let steps = (horizon / (CFL_SAFETY * dx * dx / 2.0)).ceil() as usize;
        Ok(Grid1D {
            x_min,
            x_max,
            nx,
            dx,
            dt: horizon / steps as f64,
            steps,
            horizon,
        })
    }

    /// Grid with spacing as close to `dx` as the domain allows.
    pub fn with_dx(x_min: f64, x_max: f64, dx: f64, horizon: f64) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidArgument(format!("dx = {dx} must be positive")));
        }
        let cells = ((x_max - x_min) / dx).round().max(2.0) as usize;
        Self::new(x_min, x_max, cells - 1, horizon)
    }

    pub fn points(&self) -> usize {
        self.nx + 2
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    /// Both step constraints: `dt ≤ 0.9·dx²/2` and `L·dx ≤ 1`.
    pub fn check_cfl(&self, lipschitz: f64) -> Result<()> {
        if self.dt > CFL_SAFETY * self.dx * self.dx / 2.0 * (1.0 + 1e-12) {
            return Err(Error::Cfl(format!(
                "dt = {} exceeds {}·dx²/2 with dx = {}",
                self.dt, CFL_SAFETY, self.dx
            )));
        }
        if lipschitz * self.dx > 1.0 {
            return Err(Error::Cfl(format!(
                "L·dx = {} > 1 (L = {lipschitz}, dx = {}); refine the grid",
                lipschitz * self.dx,
                self.dx
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PDESolution {
    pub grid: Grid1D,
    pub width: usize,
    pub label: String,
    /// Stored time levels, increasing, always including `0` and `T`.
    pub times: Vec<f64>,
    /// `levels[k][j * width + i] = u^i(times[k], x_j)`.
    pub levels: Vec<Vec<f64>>,
    pub boundary: String,
}

impl PDESolution {
    pub fn at(&self, level: usize, j: usize) -> &[f64] {
        &self.levels[level][j * self.width..(j + 1) * self.width]
    }

    pub fn initial(&self) -> &[f64] {
        &self.levels[0]
    }

    /// Largest `|∂_x u|` (central differences) over the stored levels.
    pub fn max_gradient(&self) -> f64 {
        let (w, dx) = (self.width, self.grid.dx);
        let mut best: f64 = 0.0;
        for level in &self.levels {
            for j in 1..self.grid.points() - 1 {
                for i in 0..w {
                    let g = (level[(j + 1) * w + i] - level[(j - 1) * w + i]) / (2.0 * dx);
                    best = best.max(g.abs());
                }
            }
        }
        best
    }
}

const BOUNDARY_NOTE: &str = "truncated domain, gradient frozen at terminal slope at both ends";

/// Core explicit stepper; `ham(t, x, z, out)` writes `H(t, x, z)` for the
/// gradient vector `z = ∂_x u`.
fn march<H, G>(grid: &Grid1D, width: usize, label: String, terminal: G, ham: H) -> Result<PDESolution>
where
    H: Fn(f64, f64, &[f64], &mut [f64]) -> Result<()> + Sync,
    G: Fn(f64) -> Result<Vec<f64>>,
{
    let np = grid.points();
    let mut u = Vec::with_capacity(np * width);
    for j in 0..np {
        let g = terminal(grid.x(j))?;
        if g.len() != width || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("terminal value {g:?} at x = {}", grid.x(j))));
        }
        u.extend(g);
    }
    let left: Vec<f64> = (0..width).map(|i| u[width + i] - u[i]).collect();
    let right: Vec<f64> = (0..width)
        .map(|i| u[(np - 1) * width + i] - u[(np - 2) * width + i])
        .collect();

    let stride = grid.steps.div_ceil(MAX_STORED_LEVELS).max(1);
    let mut times = vec![grid.horizon];
    let mut levels = vec![u.clone()];
    let mut next = u.clone();
    let (dt, dx) = (grid.dt, grid.dx);
    let (half_over_dx2, over_2dx) = (0.5 / (dx * dx), 0.5 / dx);

    for n in 0..grid.steps {
        let t = grid.horizon - n as f64 * dt;
        let cur = &u;
        next[width..(np - 1) * width]
            .par_chunks_mut(width)
            .with_min_len(256)
            .enumerate()
            .try_for_each_init(
                || (vec![0.0; width], vec![0.0; width]),
                |(z, h), (k, out)| -> Result<()> {
                    let j = k + 1;
                    let (lo, mid, hi) = ((j - 1) * width, j * width, (j + 1) * width);
                    for i in 0..width {
                        z[i] = (cur[hi + i] - cur[lo + i]) * over_2dx;
                    }
                    let x = grid.x(j);
                    ham(t, x, z, h)?;
                    for i in 0..width {
                        let lap = (cur[hi + i] - 2.0 * cur[mid + i] + cur[lo + i]) * half_over_dx2;
                        out[i] = cur[mid + i] + dt * (lap + h[i]);
                        if !out[i].is_finite() {
                            return Err(Error::NonFinite(format!("update at t = {t}, x = {x}")));
                        }
                    }
                    Ok(())
                },
            )?;
        for i in 0..width {
            next[i] = next[width + i] - left[i];
            next[(np - 1) * width + i] = next[(np - 2) * width + i] + right[i];
        }
        std::mem::swap(&mut u, &mut next);
        let done = n + 1;
        if done == grid.steps || done % stride == 0 {
            times.push(if done == grid.steps {
                0.0
            } else {
                grid.horizon - done as f64 * dt
            });
            levels.push(u.clone());
        }
    }
    times.reverse();
    levels.reverse();
    Ok(PDESolution {
        grid: *grid,
        width,
        label,
        times,
        levels,
        boundary: BOUNDARY_NOTE.into(),
    })
}

/// Solves the HJB system driven by a state-dependent selector.
pub fn solve_hjb_system<G>(selector: &Selector, terminal: G, grid: &Grid1D) -> Result<PDESolution>
where
    G: Fn(f64) -> Result<Vec<f64>>,
{
    if !selector.is_state_dependent() {
        return Err(Error::Precondition(format!(
            "selector '{}' is path dependent; the PDE needs a state-dependent one",
            selector.label()
        )));
    }
    grid.check_cfl(selector.lipschitz())?;
    let width = terminal(grid.x(0))?.len();
    march(grid, width, selector.label().to_string(), terminal, |t, x, z, out| {
        let v = selector.evaluate_state(t, &[x], &ZMatrix::row(z))?;
        if v.len() != out.len() {
            return Err(Error::InvalidArgument(format!(
                "selector returned {} components, terminal has {}",
                v.len(),
                out.len()
            )));
        }
        out.copy_from_slice(&v);
        Ok(())
    })
}

/// Bilinear interpolation in `(t, x)` between stored levels and grid nodes.
pub fn sample_value(sol: &PDESolution, t: f64, x: f64) -> Result<Vec<f64>> {
    let g = &sol.grid;
    if !(t >= 0.0 && t <= g.horizon && x >= g.x_min && x <= g.x_max) {
        return Err(Error::OutOfHull { t, x });
    }
    let k = sol.times.partition_point(|&s| s <= t).clamp(1, sol.times.len() - 1) - 1;
    let (t0, t1) = (sol.times[k], sol.times[k + 1]);
    let wt = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    let j = (((x - g.x_min) / g.dx).floor() as usize).min(g.points() - 2);
    let wx = ((x - g.x(j)) / g.dx).clamp(0.0, 1.0);
    let blend = |level: usize, i: usize| {
        let a = sol.at(level, j)[i];
        let b = sol.at(level, j + 1)[i];
        if wx == 0.0 {
            a
        } else {
            (1.0 - wx) * a + wx * b
        }
    };
    Ok((0..sol.width)
        .map(|i| {
            let lo = blend(k, i);
            if wt == 0.0 {
                lo
            } else if wt == 1.0 {
                blend(k + 1, i)
            } else {
                (1.0 - wt) * lo + wt * blend(k + 1, i)
            }
        })
        .collect())
}

/// Range of `z` probed for the Isaacs condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IsaacsRange {
    /// `[−m, m]` with `m` the largest gradient of a selector-free pre-solve.
    Attained,
    /// `[−z_max, z_max]`.
    Strict { z_max: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroSumOutcome {
    /// `u_1(0, 0)` when the Isaacs condition held on the whole lattice.
    pub u1_root: Option<f64>,
    pub isaacs_ok: bool,
    pub failures: Vec<Theta>,
    pub z_max: f64,
    pub solution: Option<PDESolution>,
}

impl ZeroSumOutcome {
    pub fn u2_root(&self) -> Option<f64> {
        self.u1_root.map(|u| -u)
    }
}

fn require_scalar_state(spec: &GameSpec) -> Result<()> {
    if spec.brownian_dim() != 1 {
        return Err(Error::Precondition(format!(
            "the PDE solver is one-dimensional, game has d = {}",
            spec.brownian_dim()
        )));
    }
    Ok(())
}

/// Maximum gradient of the heat flow of `g_i` on the grid.
pub fn attained_gradient(spec: &GameSpec, grid: &Grid1D, player: usize) -> Result<f64> {
    let heat = march(
        grid,
        1,
        "heat".into(),
        |x| Ok(vec![spec.evaluate_terminal(&[x])?[player]]),
        |_, _, _, out| {
            out[0] = 0.0;
            Ok(())
        },
    )?;
    Ok(heat.max_gradient())
}

/// `sup_{a1} inf_{a2} h_1(t, x, (z, −z), a)` computed from coefficient rows.
fn supinf_h1(spec: &GameSpec, t: f64, x: f64, z: f64) -> Result<f64> {
    let (m1, m2) = (spec.action_grid(0).len(), spec.action_grid(1).len());
    let mut b = [0.0];
    let mut f = [0.0, 0.0];
    let mut best = f64::NEG_INFINITY;
    for a1 in 0..m1 {
        let mut worst = f64::INFINITY;
        for a2 in 0..m2 {
            spec.coefficients_into(t, &[x], a1 * m2 + a2, &mut b, &mut f)?;
            worst = worst.min(f[0] + b[0] * z);
        }
        best = best.max(worst);
    }
    Ok(best)
}

/// Value of a two-player zero-sum game: checks the Isaacs condition on a
/// `5 × 9 × 9` lattice of `(t, x, z_1)` with `z_2 = −z_1`, and when it holds
/// solves the scalar equation for `u_1` with `H_1 = sup inf h_1`.
pub fn zero_sum_value(spec: &GameSpec, grid: &Grid1D, range: IsaacsRange) -> Result<ZeroSumOutcome> {
    require_scalar_state(spec)?;
    if spec.num_players() != 2 || !spec.is_zero_sum() {
        return Err(Error::Precondition(
            "zero-sum value needs a two-player zero-sum game".into(),
        ));
    }
    let grid = Grid1D::new(grid.x_min, grid.x_max, grid.nx, spec.horizon())?;
    let z_max = match range {
        IsaacsRange::Attained => attained_gradient(spec, &grid, 0)?,
        IsaacsRange::Strict { z_max } => z_max.abs(),
    };
    let mut failures = Vec::new();
    for &t in &linspace(0.0, spec.horizon(), 5) {
        for &x in &linspace(grid.x_min, grid.x_max, 9) {
            for &z in &linspace(-z_max, z_max, 9) {
                let theta = Theta::scalar(t, x, &[z, -z]);
                if !isaacs_unchecked(spec, &theta)?.holds {
                    failures.push(theta);
                }
            }
        }
    }
    if !failures.is_empty() {
        return Ok(ZeroSumOutcome {
            u1_root: None,
            isaacs_ok: false,
            failures,
            z_max,
            solution: None,
        });
    }
    let lipschitz = spec.coefficient_bounds(&spec.default_probe_box())?.z_lipschitz(1);
    grid.check_cfl(lipschitz)?;
    let sol = march(
        &grid,
        1,
        "zero-sum supinf".into(),
        |x| Ok(vec![spec.evaluate_terminal(&[x])?[0]]),
        |t, x, z, out| {
            out[0] = supinf_h1(spec, t, x, z[0])?;
            Ok(())
        },
    )?;
    let u1 = sample_value(&sol, 0.0, 0.0)?[0];
    Ok(ZeroSumOutcome {
        u1_root: Some(u1),
        isaacs_ok: true,
        failures,
        z_max,
        solution: Some(sol),
    })
}

/// Single-player HJB with `H(t, x, z) = max_a h(t, x, z, a)` over the grid.
pub fn solve_control_hjb(spec: &GameSpec, grid: &Grid1D) -> Result<PDESolution> {
    require_scalar_state(spec)?;
    if spec.num_players() != 1 {
        return Err(Error::Precondition(format!(
            "control value needs one player, game has {}",
            spec.num_players()
        )));
    }
    let grid = Grid1D::new(grid.x_min, grid.x_max, grid.nx, spec.horizon())?;
    let lipschitz = spec.coefficient_bounds(&spec.default_probe_box())?.z_lipschitz(1);
    grid.check_cfl(lipschitz)?;
    march(
        &grid,
        1,
        "control max".into(),
        |x| spec.evaluate_terminal(&[x]),
        |t, x, z, out| {
            let mut b = [0.0];
            let mut f = [0.0];
            let mut best = f64::NEG_INFINITY;
            for k in 0..spec.profile_count() {
                spec.coefficients_into(t, &[x], k, &mut b, &mut f)?;
                best = best.max(f[0] + b[0] * z[0]);
            }
            out[0] = best;
            Ok(())
        },
    )
}

pub fn control_value(spec: &GameSpec, grid: &Grid1D) -> Result<f64> {
    Ok(sample_value(&solve_control_hjb(spec, grid)?, 0.0, 0.0)?[0])
}

/// `E[g(m + σ·N(0,1))]` by composite Simpson on `m ± 12σ`.
pub fn gaussian_expectation(g: impl Fn(f64) -> f64, mean: f64, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        return g(mean);
    }
    let n = 8000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let phi = |s: f64| (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let term = |s: f64| g(mean + std_dev * s) * phi(s);
    let mut acc = term(lo) + term(hi);
    for k in 1..n {
        let s = lo + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * term(s);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desk;
    use crate::game::GameSpecBuilder;
    use crate::selectors::{make_singleton_selector, Selector};
    use proptest::prelude::*;
    use std::sync::Arc;

    /// `E[tanh(B_1 − 0.5)]`, evaluated offline with adaptive quadrature.
    const Q: f64 = -0.29545287705173745;

    fn tanh_shift(x: f64) -> Result<Vec<f64>> {
        Ok(vec![(x - 0.5).tanh()])
    }

    #[test]
    fn grid_layout() {
        let g = Grid1D::with_dx(-6.0, 6.0, 0.01, 1.0).unwrap();
        assert_eq!(g.nx, 1199);
        assert!((g.dx - 0.01).abs() < 1e-15);
        assert!(g.dt <= 0.9 * g.dx * g.dx / 2.0);
        assert!((g.dt * g.steps as f64 - 1.0).abs() < 1e-12);
        assert!(Grid1D::new(0.0, 1.0, 10, 1.0).is_err());
        assert!(g.check_cfl(101.0).is_err());
        assert!(g.check_cfl(99.0).is_ok());
    }

    #[test]
    fn heat_flow_matches_quadrature() {
        let grid = Grid1D::with_dx(-6.0, 6.0, 0.05, 1.0).unwrap();
        let sol = solve_hjb_system(&Selector::constant("zero", vec![0.0]), tanh_shift, &grid).unwrap();
        let u = sample_value(&sol, 0.0, 0.0).unwrap()[0];
        assert!((u - Q).abs() < 5e-3, "{u}");
        assert_eq!(sol.times[0], 0.0);
        assert_eq!(*sol.times.last().unwrap(), 1.0);
        assert!(sol.times.len() <= MAX_STORED_LEVELS + 2);
    }

    #[test]
    fn constant_selector_integrates_exactly() {
        let grid = Grid1D::new(-2.0, 2.0, 39, 1.5).unwrap();
        let sel = Selector::constant("c", vec![0.7, -1.0]);
        let sol = solve_hjb_system(&sel, |_| Ok(vec![0.0, 0.0]), &grid).unwrap();
        for j in 0..grid.points() {
            let v = sol.at(0, j);
            assert!((v[0] - 1.05).abs() < 1e-12 && (v[1] + 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_rules() {
        let grid = Grid1D::new(-1.0, 1.0, 9, 1.0).unwrap();
        let sel = Selector::constant("zero", vec![0.0]);
        let sol = solve_hjb_system(&sel, |x| Ok(vec![2.0 * x + 1.0]), &grid).unwrap();
        let level = sol.times.len() - 1;
        assert_eq!(sample_value(&sol, 1.0, grid.x(3)).unwrap()[0], sol.at(level, 3)[0]);
        let mid = 0.5 * (grid.x(3) + grid.x(4));
        let want = 0.5 * (sol.at(level, 3)[0] + sol.at(level, 4)[0]);
        assert!((sample_value(&sol, 1.0, mid).unwrap()[0] - want).abs() < 1e-14);
        assert!(matches!(sample_value(&sol, 1.1, 0.0), Err(Error::OutOfHull { .. })));
        assert!(matches!(sample_value(&sol, 0.5, -1.5), Err(Error::OutOfHull { .. })));
    }

    #[test]
    fn rejects_bad_selectors() {
        let grid = Grid1D::new(-1.0, 1.0, 9, 1.0).unwrap();
        let path = Selector::from_path_fn("p", 0.0, true, Arc::new(|_, _, _| Ok(vec![0.0])));
        assert!(matches!(
            solve_hjb_system(&path, |_| Ok(vec![0.0]), &grid),
            Err(Error::Precondition(_))
        ));
        let steep = Selector::from_state_fn("s", 50.0, true, Arc::new(|_, _, z| Ok(vec![50.0 * z.col(0)[0]])));
        assert!(matches!(
            solve_hjb_system(&steep, |_| Ok(vec![0.0]), &grid),
            Err(Error::Cfl(_))
        ));
    }

    #[test]
    fn zero_sum_examples() {
        let grid = Grid1D::with_dx(-6.0, 6.0, 0.05, 1.0).unwrap();
        let out = zero_sum_value(&desk::e1(), &grid, IsaacsRange::Attained).unwrap();
        assert!(out.isaacs_ok && out.failures.is_empty());
        let u1 = out.u1_root.unwrap();
        assert!((u1 - Q).abs() < 5e-3);
        assert_eq!(out.u2_root(), Some(-u1));

        let out = zero_sum_value(&desk::e3(), &grid, IsaacsRange::Attained).unwrap();
        assert!(!out.isaacs_ok && out.u1_root.is_none());
        assert!(out.failures.iter().all(|th| th.z.col(0)[0] != 0.0));
        assert_eq!(out.failures.len(), 5 * 9 * 8);

        let flat = GameSpecBuilder::new(2, 1, 1.0)
            .scalar_actions(&[0.0, 1.0])
            .scalar_actions(&[0.0, 1.0])
            .drift(&["0"])
            .running(&["0", "0"])
            .terminal(&["x1^2", "0 - x1^2"])
            .build()
            .unwrap();
        let out = zero_sum_value(&flat, &grid, IsaacsRange::Strict { z_max: 3.0 }).unwrap();
        assert!((out.u1_root.unwrap() - 1.0).abs() < 5e-3);
        assert!(matches!(
            zero_sum_value(&desk::e2(), &grid, IsaacsRange::Attained),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn control_examples() {
        let grid = Grid1D::with_dx(-6.0, 6.0, 0.05, 1.0).unwrap();
        assert!(control_value(&desk::e4(), &grid).unwrap() > 0.05);

        let still = GameSpecBuilder::new(1, 1, 1.0)
            .scalar_actions(&[0.0])
            .drift(&["0"])
            .running(&["0"])
            .terminal(&["tanh(x1 - 0.5)"])
            .build()
            .unwrap();
        assert!((control_value(&still, &grid).unwrap() - Q).abs() < 5e-3);

        let running = GameSpecBuilder::new(1, 1, 2.0)
            .scalar_actions(&[-1.0, 1.0])
            .drift(&["0"])
            .running(&["1"])
            .terminal(&["0"])
            .build()
            .unwrap();
        assert!((control_value(&running, &grid).unwrap() - 2.0).abs() < 1e-10);
        assert!(matches!(control_value(&desk::e1(), &grid), Err(Error::Precondition(_))));
    }

    #[test]
    fn singleton_selector_drives_the_pde() {
        let grid = Grid1D::with_dx(-4.0, 4.0, 0.1, 1.0).unwrap();
        let e4 = Arc::new(desk::e4());
        let sel = make_singleton_selector(e4.clone(), &[Theta::scalar(0.0, 0.0, &[0.5])]).unwrap();
        let a = solve_hjb_system(&sel, |x| e4.evaluate_terminal(&[x]), &grid).unwrap();
        let b = solve_control_hjb(&e4, &grid).unwrap();
        assert!((sample_value(&a, 0.0, 0.0).unwrap()[0] - sample_value(&b, 0.0, 0.0).unwrap()[0]).abs() < 1e-12);
    }

    #[test]
    fn gaussian_quadrature_helper() {
        assert!((gaussian_expectation(|x| (x - 0.5).tanh(), 0.0, 1.0) - Q).abs() < 1e-10);
        assert!((gaussian_expectation(|x| x * x, 1.0, 2.0) - 5.0).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

        /// Terminal pairs differ by a nonnegative bump that vanishes near the
        /// ends, so both share the frozen boundary slopes.
        #[test]
        fn comparison_principle(
            a in 0.2..3.0f64,
            c in -1.0..1.0f64,
            height in 0.0..1.0f64,
            centre in -1.0..1.0f64,
            lift in 0.0..0.5f64,
            scale in 0.0..1.5f64,
        ) {
            let grid = Grid1D::with_dx(-4.0, 4.0, 0.1, 0.5).unwrap();
            let sel = Selector::from_state_fn("ham", scale, true, Arc::new(move |_, _, z| Ok(vec![scale * z.col(0)[0].abs()])));
            let g = move |x: f64| (a * (x - c)).tanh();
            let bump = move |x: f64| height * (-(x - centre).powi(2) * 4.0).exp();
            let lo = solve_hjb_system(&sel, |x| Ok(vec![g(x)]), &grid).unwrap();
            let hi = solve_hjb_system(&sel, |x| Ok(vec![g(x) + bump(x) + lift]), &grid).unwrap();
            for (l, h) in lo.levels.iter().zip(&hi.levels) {
                for (p, q) in l.iter().zip(h) {
                    prop_assert!(p <= &(q + 1e-12));
                }
            }
        }
    }
}
