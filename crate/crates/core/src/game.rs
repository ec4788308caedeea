//! Game data: drift `b`, running payoff `f`, terminal payoff `g`, finite
//! action grids, and the static-game payoffs `h` and best responses `h̄`.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dsl::{parse_str, CompiledExpr};
use crate::error::{Error, Result};

/// One point of a player's action space (a vector with one or more components).
pub type Action = Vec<f64>;

/// Gradient block `z ∈ R^{d×N}`, stored column-major so that column `i`
/// (player `i`'s gradient `z^i`) is contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZMatrix {
    dim: usize,
    players: usize,
    data: Vec<f64>,
}

impl ZMatrix {
    pub fn zeros(dim: usize, players: usize) -> Self {
        ZMatrix {
            dim,
            players,
            data: vec![0.0; dim * players],
        }
    }

    /// Builds a `1×N` block from one scalar gradient per player.
    pub fn row(values: &[f64]) -> Self {
        ZMatrix {
            dim: 1,
            players: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * columns.len());
        for c in columns {
            if c.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "z column has {} entries, expected {dim}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(ZMatrix {
            dim,
            players: columns.len(),
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn col(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn col_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn distance(&self, other: &ZMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A point `θ = (t, x, z)` of the extended state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub t: f64,
    pub x: Vec<f64>,
    pub z: ZMatrix,
}

impl Theta {
    pub fn new(t: f64, x: Vec<f64>, z: ZMatrix) -> Self {
        Theta { t, x, z }
    }

    /// One-dimensional convenience constructor: scalar `x`, one gradient per player.
    pub fn scalar(t: f64, x: f64, z: &[f64]) -> Self {
        Theta {
            t,
            x: vec![x],
            z: ZMatrix::row(z),
        }
    }

    /// Euclidean distance in `(t, x, z)`.
    pub fn distance(&self, other: &Theta) -> f64 {
        let dt = self.t - other.t;
        let dx: f64 = self.x.iter().zip(&other.x).map(|(a, b)| (a - b) * (a - b)).sum();
        let dz = self.z.distance(&other.z);
        (dt * dt + dx + dz * dz).sqrt()
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "θ(t={}, x={:?}, z={:?})", self.t, self.x, self.z.as_slice())
    }
}

/// One grid index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionProfile {
    pub indices: Vec<usize>,
}

impl ActionProfile {
    pub fn new(spec: &GameSpec, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != spec.num_players() {
            return Err(Error::InvalidArgument(format!(
                "profile has {} entries for {} players",
                indices.len(),
                spec.num_players()
            )));
        }
        for (i, &k) in indices.iter().enumerate() {
            if k >= spec.action_grid(i).len() {
                return Err(Error::InvalidArgument(format!(
                    "action index {k} outside player {}'s grid",
                    i + 1
                )));
            }
        }
        Ok(ActionProfile { indices })
    }

    /// Looks up each player's action value on its grid (exact match within 1e-12).
    pub fn from_values(spec: &GameSpec, values: &[Action]) -> Result<Self> {
        if values.len() != spec.num_players() {
            return Err(Error::InvalidArgument(format!(
                "profile has {} actions for {} players",
                values.len(),
                spec.num_players()
            )));
        }
        let mut indices = Vec::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            let k = spec
                .action_grid(i)
                .iter()
                .position(|g| g.len() == v.len() && g.iter().zip(v).all(|(a, b)| (a - b).abs() <= 1e-12))
                .ok_or_else(|| Error::InvalidArgument(format!("action {v:?} is not on player {}'s grid", i + 1)))?;
            indices.push(k);
        }
        Ok(ActionProfile { indices })
    }

    pub fn from_scalars(spec: &GameSpec, values: &[f64]) -> Result<Self> {
        let v: Vec<Action> = values.iter().map(|&a| vec![a]).collect();
        Self::from_values(spec, &v)
    }

    pub fn values(&self, spec: &GameSpec) -> Vec<Action> {
        self.indices
            .iter()
            .enumerate()
            .map(|(i, &k)| spec.action_grid(i)[k].clone())
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Running {
    Exprs(Vec<CompiledExpr>),
    /// Payoff vector per profile, in linear profile order.
    Table(Vec<Vec<f64>>),
}

/// Axis-aligned box of `(t, x)` probed on a uniform lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBox {
    pub t: (f64, f64),
    pub x: Vec<(f64, f64)>,
    pub points_per_axis: usize,
}

impl ProbeBox {
    pub fn new(t: (f64, f64), x: Vec<(f64, f64)>, points_per_axis: usize) -> Self {
        ProbeBox { t, x, points_per_axis }
    }

    /// Lattice points `(t, x)`, t slowest.
    pub fn lattice(&self) -> Vec<(f64, Vec<f64>)> {
        let ts = linspace(self.t.0, self.t.1, self.points_per_axis);
        let axes: Vec<Vec<f64>> = self
            .x
            .iter()
            .map(|&(lo, hi)| linspace(lo, hi, self.points_per_axis))
            .collect();
        let mut xs: Vec<Vec<f64>> = vec![vec![]];
        for axis in &axes {
            xs = xs
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        ts.iter()
            .flat_map(|&t| xs.iter().map(move |x| (t, x.clone())))
            .collect()
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive (`lo` alone when `n == 1`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Sup-norms (max absolute component) of the coefficients over a probe lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBounds {
    pub sup_b: f64,
    pub sup_f: f64,
    pub sup_g: f64,
}

impl CoefficientBounds {
    /// Constant `C` with `|h(θ,a)| ≤ C (1 + |z|)` (Euclidean / Frobenius norms).
    pub fn growth_constant(&self, num_players: usize, dim: usize) -> f64 {
        (num_players as f64).sqrt() * self.sup_f + (dim as f64).sqrt() * self.sup_b
    }

    /// Bound on the z-Lipschitz constant of `h(·, a)`: `|b|₂ ≤ √d · sup|b|`.
    pub fn z_lipschitz(&self, dim: usize) -> f64 {
        (dim as f64).sqrt() * self.sup_b
    }
}

#[derive(Debug, Clone)]
pub struct GameSpec {
    num_players: usize,
    brownian_dim: usize,
    horizon: f64,
    action_grids: Vec<Vec<Action>>,
    drift: Vec<CompiledExpr>,
    running: Running,
    terminal: Vec<CompiledExpr>,
    /// Slot of the first component of each player's action in the layout.
    action_slots: Vec<usize>,
    layout_len: usize,
    strides: Vec<usize>,
    profile_count: usize,
    /// `[b (d entries), f (N entries)]` per profile when neither depends on `(t, x)`.
    static_coefficients: Option<Vec<f64>>,
    zero_sum: OnceLock<bool>,
}

/// Assembles a [`GameSpec`] from expression strings.
#[derive(Debug, Clone)]
pub struct GameSpecBuilder {
    num_players: usize,
    brownian_dim: usize,
    horizon: f64,
    action_grids: Vec<Vec<Action>>,
    drift: Vec<String>,
    running: Vec<String>,
    table: Vec<(Vec<Action>, Vec<f64>)>,
    terminal: Vec<String>,
}

impl GameSpecBuilder {
    pub fn new(num_players: usize, brownian_dim: usize, horizon: f64) -> Self {
        GameSpecBuilder {
            num_players,
            brownian_dim,
            horizon,
            action_grids: Vec::new(),
            drift: Vec::new(),
            running: Vec::new(),
            table: Vec::new(),
            terminal: Vec::new(),
        }
    }

    pub fn actions(mut self, grid: Vec<Action>) -> Self {
        self.action_grids.push(grid);
        self
    }

    pub fn scalar_actions(self, grid: &[f64]) -> Self {
        self.actions(grid.iter().map(|&a| vec![a]).collect())
    }

    pub fn drift<S: AsRef<str>>(mut self, exprs: &[S]) -> Self {
        self.drift = exprs.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn running<S: AsRef<str>>(mut self, exprs: &[S]) -> Self {
        self.running = exprs.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn table_row(mut self, actions: Vec<Action>, payoff: Vec<f64>) -> Self {
        self.table.push((actions, payoff));
        self
    }

    pub fn terminal<S: AsRef<str>>(mut self, exprs: &[S]) -> Self {
        self.terminal = exprs.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn build(self) -> Result<GameSpec> {
        let n = self.num_players;
        let d = self.brownian_dim;
        if n == 0 || d == 0 {
            return Err(Error::MalformedSpec("N and d must be positive".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::MalformedSpec(format!(
                "horizon T = {} must be positive",
                self.horizon
            )));
        }
        if self.action_grids.len() != n {
            return Err(Error::MalformedSpec(format!(
                "{} action grids for {n} players",
                self.action_grids.len()
            )));
        }
        let mut layout: Vec<String> = vec!["t".into()];
        layout.extend((1..=d).map(|k| format!("x{k}")));
        let mut action_slots = Vec::with_capacity(n);
        for (i, grid) in self.action_grids.iter().enumerate() {
            if grid.is_empty() {
                return Err(Error::MalformedSpec(format!(
                    "player {} has an empty action grid",
                    i + 1
                )));
            }
            let width = grid[0].len();
            if width == 0
                || grid
                    .iter()
                    .any(|a| a.len() != width || a.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::MalformedSpec(format!(
                    "player {}'s actions must be finite with a common dimension",
                    i + 1
                )));
            }
            action_slots.push(layout.len());
            if width == 1 {
                layout.push(format!("a{}", i + 1));
            } else {
                layout.extend((1..=width).map(|j| format!("a{}_{j}", i + 1)));
            }
        }
        let compile_all = |exprs: &[String], layout: &[String], what: &str| -> Result<Vec<CompiledExpr>> {
            exprs
                .iter()
                .map(|s| {
                    let e = parse_str(s)?;
                    e.compile(layout)
                        .map_err(|err| Error::MalformedSpec(format!("{what} '{s}': {err}")))
                })
                .collect()
        };
        if self.drift.len() != d {
            return Err(Error::MalformedSpec(format!(
                "dimension mismatch: {} drift expressions for d = {d}",
                self.drift.len()
            )));
        }
        let drift = compile_all(&self.drift, &layout, "drift")?;

        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.action_grids[i + 1].len();
        }
        let profile_count = strides[0] * self.action_grids[0].len();

        let running = match (self.running.is_empty(), self.table.is_empty()) {
            (false, true) => {
                if self.running.len() != n {
                    return Err(Error::MalformedSpec(format!(
                        "dimension mismatch: {} running payoffs for N = {n}",
                        self.running.len()
                    )));
                }
                Running::Exprs(compile_all(&self.running, &layout, "running payoff")?)
            }
            (true, false) => {
                let mut rows: Vec<Option<Vec<f64>>> = vec![None; profile_count];
                for (actions, payoff) in &self.table {
                    if payoff.len() != n || payoff.iter().any(|v| !v.is_finite()) {
                        return Err(Error::MalformedSpec(format!(
                            "table payoff {payoff:?} must have {n} finite entries"
                        )));
                    }
                    let profile = lookup_profile(&self.action_grids, actions)?;
                    let lin: usize = profile.iter().zip(&strides).map(|(k, s)| k * s).sum();
                    if rows[lin].is_some() {
                        return Err(Error::MalformedSpec(format!("duplicate table row {actions:?}")));
                    }
                    rows[lin] = Some(payoff.clone());
                }
                let rows = rows
                    .into_iter()
                    .enumerate()
                    .map(|(lin, r)| r.ok_or_else(|| Error::MalformedSpec(format!("table misses profile #{lin}"))))
                    .collect::<Result<Vec<_>>>()?;
                Running::Table(rows)
            }
            (false, false) => {
                return Err(Error::MalformedSpec(
                    "running payoff given both as expressions and as a table".into(),
                ))
            }
            (true, true) => return Err(Error::MalformedSpec("missing running payoff".into())),
        };

        if self.terminal.len() != n {
            return Err(Error::MalformedSpec(format!(
                "dimension mismatch: {} terminal payoffs for N = {n}",
                self.terminal.len()
            )));
        }
        let x_layout: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        let terminal = compile_all(&self.terminal, &x_layout, "terminal payoff")?;

        let mut spec = GameSpec {
            num_players: n,
            brownian_dim: d,
            horizon: self.horizon,
            action_grids: self.action_grids,
            drift,
            running,
            terminal,
            action_slots,
            layout_len: layout.len(),
            strides,
            profile_count,
            static_coefficients: None,
            zero_sum: OnceLock::new(),
        };
        spec.static_coefficients = spec.tabulate_static()?;
        Ok(spec)
    }
}

fn lookup_profile(grids: &[Vec<Action>], actions: &[Action]) -> Result<Vec<usize>> {
    if actions.len() != grids.len() {
        return Err(Error::MalformedSpec(format!(
            "table key {actions:?} has {} actions for {} players",
            actions.len(),
            grids.len()
        )));
    }
    actions
        .iter()
        .zip(grids)
        .enumerate()
        .map(|(i, (a, grid))| {
            grid.iter()
                .position(|g| g.len() == a.len() && g.iter().zip(a).all(|(p, q)| (p - q).abs() <= 1e-12))
                .ok_or_else(|| Error::MalformedSpec(format!("table action {a:?} is not on player {}'s grid", i + 1)))
        })
        .collect()
}

impl GameSpec {
    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn action_grid(&self, player: usize) -> &[Action] {
        &self.action_grids[player]
    }

    pub fn profile_count(&self) -> usize {
        self.profile_count
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn linear_index(&self, a: &ActionProfile) -> usize {
        a.indices.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn profile(&self, linear: usize) -> ActionProfile {
        let indices = self
            .strides
            .iter()
            .zip(&self.action_grids)
            .map(|(s, g)| (linear / s) % g.len())
            .collect();
        ActionProfile { indices }
    }

    /// All profiles in lexicographic index order (player 1 slowest).
    pub fn profiles(&self) -> impl Iterator<Item = ActionProfile> + '_ {
        (0..self.profile_count).map(move |k| self.profile(k))
    }

    pub fn has_payoff_table(&self) -> bool {
        matches!(self.running, Running::Table(_))
    }

    /// True when `b` and `f` do not depend on `(t, x)`.
    pub fn is_state_independent(&self) -> bool {
        self.static_coefficients.is_some()
    }

    fn tabulate_static(&self) -> Result<Option<Vec<f64>>> {
        let state = 0..1 + self.brownian_dim;
        let depends = self.drift.iter().any(|e| e.depends_on_any(state.clone()))
            || match &self.running {
                Running::Exprs(es) => es.iter().any(|e| e.depends_on_any(state.clone())),
                Running::Table(_) => false,
            };
        if depends {
            return Ok(None);
        }
        let (d, n) = (self.brownian_dim, self.num_players);
        let mut table = vec![0.0; self.profile_count * (d + n)];
        let x = vec![0.0; d];
        for k in 0..self.profile_count {
            let (b, f) = table[k * (d + n)..(k + 1) * (d + n)].split_at_mut(d);
            self.eval_coefficients(0.0, &x, k, b, f)?;
        }
        Ok(Some(table))
    }

    fn eval_coefficients(&self, t: f64, x: &[f64], linear: usize, b: &mut [f64], f: &mut [f64]) -> Result<()> {
        let mut slots = vec![0.0; self.layout_len];
        slots[0] = t;
        slots[1..1 + self.brownian_dim].copy_from_slice(x);
        for (i, grid) in self.action_grids.iter().enumerate() {
            let k = (linear / self.strides[i]) % grid.len();
            let start = self.action_slots[i];
            slots[start..start + grid[k].len()].copy_from_slice(&grid[k]);
        }
        for (out, e) in b.iter_mut().zip(&self.drift) {
            *out = e.eval(&slots)?;
        }
        match &self.running {
            Running::Exprs(es) => {
                for (out, e) in f.iter_mut().zip(es) {
                    *out = e.eval(&slots)?;
                }
            }
            Running::Table(rows) => f.copy_from_slice(&rows[linear]),
        }
        Ok(())
    }

    /// Writes `b(t,x,a)` and `f(t,x,a)` for the profile with the given linear index.
    pub fn coefficients_into(&self, t: f64, x: &[f64], linear: usize, b: &mut [f64], f: &mut [f64]) -> Result<()> {
        match &self.static_coefficients {
            Some(table) => {
                let (d, n) = (self.brownian_dim, self.num_players);
                let row = &table[linear * (d + n)..(linear + 1) * (d + n)];
                b.copy_from_slice(&row[..d]);
                f.copy_from_slice(&row[d..]);
                Ok(())
            }
            None => self.eval_coefficients(t, x, linear, b, f),
        }
    }

    pub(crate) fn check_point(&self, t: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.brownian_dim {
            return Err(Error::InvalidArgument(format!(
                "state has {} components, expected {}",
                x.len(),
                self.brownian_dim
            )));
        }
        if !(t.is_finite() && (-1e-12..=self.horizon + 1e-12).contains(&t)) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite state".into()));
        }
        Ok(())
    }

    /// Checks the shape and finiteness of `θ` against this game.
    pub fn check_theta(&self, theta: &Theta) -> Result<()> {
        self.check_parts(theta.t, &theta.x, &theta.z)
    }

    pub(crate) fn check_parts(&self, t: f64, x: &[f64], z: &ZMatrix) -> Result<()> {
        self.check_point(t, x)?;
        if z.dim() != self.brownian_dim || z.players() != self.num_players {
            return Err(Error::InvalidArgument(format!(
                "z is {}x{}, expected {}x{}",
                z.dim(),
                z.players(),
                self.brownian_dim,
                self.num_players
            )));
        }
        if z.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite z".into()));
        }
        Ok(())
    }

    pub fn evaluate_coefficients(&self, t: f64, x: &[f64], a: &ActionProfile) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_point(t, x)?;
        let mut b = vec![0.0; self.brownian_dim];
        let mut f = vec![0.0; self.num_players];
        self.coefficients_into(t, x, self.linear_index(a), &mut b, &mut f)?;
        Ok((b, f))
    }

    pub fn evaluate_terminal(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.brownian_dim || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad terminal state {x:?}")));
        }
        self.terminal.iter().map(|e| Ok(e.eval(x)?)).collect()
    }

    /// `h(θ, a)` for every profile, `profile_count × N` row-major.
    pub fn payoff_table(&self, theta: &Theta) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.profile_count * self.num_players];
        self.payoff_table_into(theta.t, &theta.x, &theta.z, &mut out)?;
        Ok(out)
    }

    /// [`payoff_table`](Self::payoff_table) into a caller-owned buffer of
    /// length `profile_count × N`; no shape checks on `z`.
    pub fn payoff_table_into(&self, t: f64, x: &[f64], z: &ZMatrix, out: &mut [f64]) -> Result<()> {
        let (d, n) = (self.brownian_dim, self.num_players);
        let mut bf = [0.0; 16];
        let mut heap = Vec::new();
        let scratch: &mut [f64] = if d + n <= bf.len() {
            &mut bf[..d + n]
        } else {
            heap.resize(d + n, 0.0);
            &mut heap
        };
        let (b, f) = scratch.split_at_mut(d);
        for k in 0..self.profile_count {
            self.coefficients_into(t, x, k, b, f)?;
            for i in 0..n {
                let zi = z.col(i);
                out[k * n + i] = f[i] + b.iter().zip(zi).map(|(p, q)| p * q).sum::<f64>();
            }
        }
        Ok(())
    }

    /// Player `i`'s best-response envelope from a payoff table: the max of
    /// `h_i` over `i`'s own grid with the other players' indices of `linear` fixed.
    pub fn hbar_from_table(&self, table: &[f64], linear: usize, i: usize) -> f64 {
        let n = self.num_players;
        let stride = self.strides[i];
        let len = self.action_grids[i].len();
        let own = (linear / stride) % len;
        let base = linear - own * stride;
        (0..len)
            .map(|k| table[(base + k * stride) * n + i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norms of `b`, `f`, `g` over the probe lattice and all action profiles.
    pub fn coefficient_bounds(&self, probe: &ProbeBox) -> Result<CoefficientBounds> {
        let mut bounds = CoefficientBounds {
            sup_b: 0.0,
            sup_f: 0.0,
            sup_g: 0.0,
        };
        let mut b = vec![0.0; self.brownian_dim];
        let mut f = vec![0.0; self.num_players];
        let lattice = probe.lattice();
        for (t, x) in &lattice {
            for k in 0..self.profile_count {
                self.coefficients_into(*t, x, k, &mut b, &mut f)?;
                bounds.sup_b = b.iter().fold(bounds.sup_b, |m, v| m.max(v.abs()));
                bounds.sup_f = f.iter().fold(bounds.sup_f, |m, v| m.max(v.abs()));
            }
            let g = self.evaluate_terminal(x)?;
            bounds.sup_g = g.iter().fold(bounds.sup_g, |m, v| m.max(v.abs()));
        }
        Ok(bounds)
    }

    /// Default probe box: `t ∈ [0, T]`, `x ∈ [-3, 3]^d`, five points per axis.
    pub fn default_probe_box(&self) -> ProbeBox {
        ProbeBox::new((0.0, self.horizon), vec![(-3.0, 3.0); self.brownian_dim], 5)
    }

    /// Largest `|f_1 + f_2|` or `|g_1 + g_2|` seen on the probe lattice
    /// (infinite when `N ≠ 2`).
    pub fn zero_sum_defect(&self, probe: &ProbeBox) -> Result<f64> {
        if self.num_players != 2 {
            return Ok(f64::INFINITY);
        }
        let mut b = vec![0.0; self.brownian_dim];
        let mut f = vec![0.0; 2];
        let mut defect: f64 = 0.0;
        for (t, x) in probe.lattice() {
            for k in 0..self.profile_count {
                self.coefficients_into(t, &x, k, &mut b, &mut f)?;
                defect = defect.max((f[0] + f[1]).abs());
            }
            let g = self.evaluate_terminal(&x)?;
            defect = defect.max((g[0] + g[1]).abs());
        }
        Ok(defect)
    }

    /// Two-player zero-sum check on the default probe box (tolerance 1e-10), cached.
    pub fn is_zero_sum(&self) -> bool {
        *self.zero_sum.get_or_init(|| {
            self.zero_sum_defect(&self.default_probe_box())
                .map(|d| d <= 1e-10)
                .unwrap_or(false)
        })
    }
}

/// `h(θ, a)`: component `i` is `f_i(t,x,a) + b(t,x,a)·z^i`.
pub fn hamiltonian_h(spec: &GameSpec, theta: &Theta, a: &ActionProfile) -> Result<Vec<f64>> {
    spec.check_theta(theta)?;
    let (b, f) = spec.evaluate_coefficients(theta.t, &theta.x, a)?;
    Ok((0..spec.num_players())
        .map(|i| f[i] + b.iter().zip(theta.z.col(i)).map(|(p, q)| p * q).sum::<f64>())
        .collect())
}

/// `h̄_i(θ, a) = max over player i's grid of h_i(θ, (a^{-i}, ã_i))`; ignores `a_i`.
pub fn best_response_hbar(spec: &GameSpec, theta: &Theta, a: &ActionProfile, i: usize) -> Result<f64> {
    if i >= spec.num_players() {
        return Err(Error::InvalidArgument(format!("player index {i} out of range")));
    }
    let mut deviation = a.clone();
    let mut best = f64::NEG_INFINITY;
    for k in 0..spec.action_grid(i).len() {
        deviation.indices[i] = k;
        best = best.max(hamiltonian_h(spec, theta, &deviation)?[i]);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desk;
    use proptest::prelude::*;

    #[test]
    fn coefficient_examples() {
        let e1 = desk::e1();
        let a = ActionProfile::from_scalars(&e1, &[1.0, -1.0]).unwrap();
        let (b, f) = e1.evaluate_coefficients(0.0, &[0.0], &a).unwrap();
        assert_eq!(b, vec![0.0]);
        assert_eq!(f, vec![0.0, 0.0]);

        let e2 = desk::e2();
        let a = ActionProfile::from_scalars(&e2, &[0.0, 0.0]).unwrap();
        let (b, f) = e2.evaluate_coefficients(0.7, &[-2.0], &a).unwrap();
        assert_eq!(b, vec![0.0]);
        assert_eq!(f, vec![2.0, 1.0]);

        let e4 = desk::e4();
        let a = ActionProfile::from_scalars(&e4, &[-1.0]).unwrap();
        let (b, f) = e4.evaluate_coefficients(0.0, &[0.0], &a).unwrap();
        assert_eq!(b, vec![-1.0]);
        assert_eq!(f, vec![0.0]);
    }

    #[test]
    fn terminal_examples() {
        let e1 = desk::e1();
        assert_eq!(e1.evaluate_terminal(&[0.5]).unwrap(), vec![0.0, 0.0]);
        let g = e1.evaluate_terminal(&[1.5]).unwrap();
        assert_eq!(g, vec![1f64.tanh(), -(1f64.tanh())]);
        assert_eq!(desk::e2().evaluate_terminal(&[3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hamiltonian_examples() {
        let e1 = desk::e1();
        let theta = Theta::scalar(0.0, 0.0, &[0.5, -0.3]);
        let a = ActionProfile::from_scalars(&e1, &[1.0, -1.0]).unwrap();
        assert_eq!(hamiltonian_h(&e1, &theta, &a).unwrap(), vec![0.0, 0.0]);
        let a = ActionProfile::from_scalars(&e1, &[1.0, 1.0]).unwrap();
        assert_eq!(hamiltonian_h(&e1, &theta, &a).unwrap(), vec![1.0, -0.6]);

        let e2 = desk::e2();
        let a = ActionProfile::from_scalars(&e2, &[1.0, 1.0]).unwrap();
        let theta = Theta::scalar(0.3, 1.0, &[4.0, -7.0]);
        assert_eq!(hamiltonian_h(&e2, &theta, &a).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn best_response_examples() {
        let e2 = desk::e2();
        let theta = Theta::scalar(0.0, 0.0, &[0.0, 0.0]);
        for a1 in [0.0, 1.0] {
            let a = ActionProfile::from_scalars(&e2, &[a1, 0.0]).unwrap();
            assert_eq!(best_response_hbar(&e2, &theta, &a, 0).unwrap(), 2.0);
        }
        let e1 = desk::e1();
        let theta = Theta::scalar(0.0, 0.0, &[0.5, 0.0]);
        let a = ActionProfile::from_scalars(&e1, &[-1.0, 1.0]).unwrap();
        assert_eq!(best_response_hbar(&e1, &theta, &a, 0).unwrap(), 1.0);
        let e4 = desk::e4();
        let theta = Theta::scalar(0.0, 0.0, &[-2.0]);
        let a = ActionProfile::from_scalars(&e4, &[1.0]).unwrap();
        assert_eq!(best_response_hbar(&e4, &theta, &a, 0).unwrap(), 2.0);
    }

    #[test]
    fn bounds_examples() {
        let probe = ProbeBox::new((0.0, 1.0), vec![(-1.0, 1.0)], 9);
        assert_eq!(desk::e2().coefficient_bounds(&probe).unwrap().sup_b, 0.0);
        let b = desk::e1().coefficient_bounds(&probe).unwrap();
        assert_eq!(b.sup_b, 2.0);
        assert_eq!(b.sup_g, 1.5f64.tanh());
    }

    #[test]
    fn builder_rejects_malformed_games() {
        let base = || GameSpecBuilder::new(1, 1, 1.0).scalar_actions(&[0.0, 1.0]);
        assert!(matches!(
            base().drift(&["a1", "a1"]).running(&["0"]).terminal(&["x1"]).build(),
            Err(Error::MalformedSpec(_))
        ));
        assert!(matches!(
            base().drift(&["a1"]).running(&["0"]).terminal(&["a1"]).build(),
            Err(Error::MalformedSpec(_))
        ));
        assert!(matches!(
            GameSpecBuilder::new(1, 1, 1.0)
                .actions(vec![])
                .drift(&["0"])
                .running(&["0"])
                .terminal(&["0"])
                .build(),
            Err(Error::MalformedSpec(_))
        ));
        assert!(matches!(
            base().drift(&["a1 +"]).running(&["0"]).terminal(&["x1"]).build(),
            Err(Error::Dsl(_))
        ));
        let bad = base().drift(&["1/(a1 - a1)"]).running(&["0"]).terminal(&["x1"]).build();
        assert!(matches!(bad, Err(Error::Eval(_))));
    }

    #[test]
    fn zero_sum_detection() {
        assert!(desk::e1().is_zero_sum());
        assert!(desk::e3().is_zero_sum());
        assert!(!desk::e2().is_zero_sum());
        assert!(!desk::e4().is_zero_sum());
    }

    #[test]
    fn multi_component_actions_bind_indexed_names() {
        let spec = GameSpecBuilder::new(1, 1, 1.0)
            .actions(vec![vec![1.0, 2.0], vec![-1.0, 0.5]])
            .drift(&["a1_1 * a1_2 + t"])
            .running(&["a1_2"])
            .terminal(&["x1"])
            .build()
            .unwrap();
        assert!(!spec.is_state_independent());
        let a = ActionProfile::new(&spec, vec![1]).unwrap();
        let (b, f) = spec.evaluate_coefficients(0.5, &[0.0], &a).unwrap();
        assert_eq!(b, vec![0.0]);
        assert_eq!(f, vec![0.5]);
    }

    fn arb_theta() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        (0.0..1.0f64, -2.0..2.0f64, -3.0..3.0f64, -3.0..3.0f64)
    }

    proptest! {
        #[test]
        fn hbar_dominates_and_ignores_own_action((t, x, z1, z2) in arb_theta(), k in 0usize..9, i in 0usize..2) {
            let spec = desk::e1();
            let theta = Theta::scalar(t, x, &[z1, z2]);
            let a = spec.profile(k);
            let h = hamiltonian_h(&spec, &theta, &a).unwrap();
            let hbar = best_response_hbar(&spec, &theta, &a, i).unwrap();
            prop_assert!(h[i] <= hbar);
            let best_own = (0..3).map(|m| {
                let mut dev = a.clone();
                dev.indices[i] = m;
                hamiltonian_h(&spec, &theta, &dev).unwrap()[i]
            }).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(h[i] == hbar, h[i] == best_own);
            for m in 0..3 {
                let mut dev = a.clone();
                dev.indices[i] = m;
                prop_assert_eq!(best_response_hbar(&spec, &theta, &dev, i).unwrap(), hbar);
            }
        }

        #[test]
        fn h_is_affine_in_z((t, x, z1, z2) in arb_theta(), w in -2.0..2.0f64, k in 0usize..9) {
            let spec = desk::e1();
            let a = spec.profile(k);
            let theta = Theta::scalar(t, x, &[z1, z2]);
            let shifted = Theta::scalar(t, x, &[z1 + w, z2]);
            let (b, _) = spec.evaluate_coefficients(t, &[x], &a).unwrap();
            let h0 = hamiltonian_h(&spec, &theta, &a).unwrap();
            let h1 = hamiltonian_h(&spec, &shifted, &a).unwrap();
            prop_assert!((h1[0] - h0[0] - b[0] * w).abs() <= 1e-12);
            prop_assert_eq!(h1[1], h0[1]);
        }

        #[test]
        fn h_is_lipschitz_in_z_with_drift_bound((t, x, z1, z2) in arb_theta(), w1 in -2.0..2.0f64, w2 in -2.0..2.0f64, k in 0usize..9) {
            let spec = desk::e1();
            let probe = ProbeBox::new((0.0, 1.0), vec![(-2.0, 2.0)], 5);
            let c = spec.coefficient_bounds(&probe).unwrap().z_lipschitz(1);
            let a = spec.profile(k);
            let th = Theta::scalar(t, x, &[z1, z2]);
            let tt = Theta::scalar(t, x, &[z1 + w1, z2 + w2]);
            let h0 = hamiltonian_h(&spec, &th, &a).unwrap();
            let h1 = hamiltonian_h(&spec, &tt, &a).unwrap();
            let diff = ((h0[0] - h1[0]).powi(2) + (h0[1] - h1[1]).powi(2)).sqrt();
            prop_assert!(diff <= c * th.z.distance(&tt.z) + 1e-12);
        }
    }
}
