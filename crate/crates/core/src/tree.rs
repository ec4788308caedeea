//! Backward induction for vector BSDEs on a non-recombining binary tree
//! driven by `X = B` (one Brownian dimension), plus tilted payoffs,
//! equilibrium certificates and the regeneration-time control construction.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionProfile, GameSpec, Theta, ZMatrix};
use crate::hamiltonian::{cloud_with_realizers, dist_point_cloud, euclid, hamiltonian_cloud, hausdorff, SetCloud};
use crate::selectors::{PathPrefix, Selector};

pub const MAX_DEPTH: usize = 22;

/// Scenario tree in heap order: node `k` has children `2k+1` (down) and
/// `2k+2` (up); the state moves by `∓√dt`.
#[derive(Debug, Clone)]
pub struct BinTree {
    depth: usize,
    horizon: f64,
    dt: f64,
    sqrt_dt: f64,
    states: Vec<f64>,
}

impl BinTree {
    pub fn new(horizon: f64, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("tree depth must be >= 1".into()));
        }
        if depth > MAX_DEPTH {
            return Err(Error::DepthTooLarge { depth, max: MAX_DEPTH });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
        }
        let dt = horizon / depth as f64;
        let sqrt_dt = dt.sqrt();
        let count = (1usize << (depth + 1)) - 1;
        let mut states = vec![0.0; count];
        for k in 1..count {
            let parent = states[(k - 1) / 2];
            states[k] = if k % 2 == 0 { parent + sqrt_dt } else { parent - sqrt_dt };
        }
        Ok(BinTree {
            depth,
            horizon,
            dt,
            sqrt_dt,
            states,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.sqrt_dt
    }

    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    /// Nodes with children, i.e. all levels below the leaves.
    pub fn internal_count(&self) -> usize {
        (1usize << self.depth) - 1
    }

    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        ((1usize << level) - 1)..((1usize << (level + 1)) - 1)
    }

    pub fn leaves(&self) -> std::ops::Range<usize> {
        self.level_range(self.depth)
    }

    pub fn level(&self, node: usize) -> usize {
        (usize::BITS - 1 - (node + 1).leading_zeros()) as usize
    }

    pub fn time(&self, node: usize) -> f64 {
        self.level(node) as f64 * self.dt
    }

    pub fn state(&self, node: usize) -> f64 {
        self.states[node]
    }

    /// States from the root down to `node`.
    pub fn path(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.level(node) + 1];
        let mut k = node;
        for slot in out.iter_mut().rev() {
            *slot = self.states[k];
            k = k.saturating_sub(1) / 2;
        }
        out
    }

    /// Probability of `node` under the symmetric walk.
    pub fn uniform_weight(&self, node: usize) -> f64 {
        0.5f64.powi(self.level(node) as i32)
    }
}

/// A non-terminal node handed to generators.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub node: usize,
    pub level: usize,
    pub t: f64,
    pub path: PathPrefix<'a>,
}

impl NodeView<'_> {
    pub fn x(&self) -> f64 {
        self.path.current()[0]
    }
}

/// An `R^width` value per internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeValues {
    width: usize,
    data: Vec<f64>,
}

impl NodeValues {
    pub fn constant(tree: &BinTree, value: &[f64]) -> Self {
        NodeValues {
            width: value.len(),
            data: value.repeat(tree.internal_count()),
        }
    }

    pub fn from_fn(tree: &BinTree, width: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(width * tree.internal_count());
        for node in 0..tree.internal_count() {
            let v = f(node);
            if v.len() != width {
                return Err(Error::InvalidArgument(format!(
                    "node value of length {} where {width} expected",
                    v.len()
                )));
            }
            data.extend(v);
        }
        Ok(NodeValues { width, data })
    }

    pub fn from_data(tree: &BinTree, width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || data.len() != width * tree.internal_count() {
            return Err(Error::InvalidArgument(format!(
                "{} node values do not fit {} internal nodes of width {width}",
                data.len(),
                tree.internal_count()
            )));
        }
        Ok(NodeValues { width, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, node: usize) -> &[f64] {
        &self.data[node * self.width..(node + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn check_fits(&self, tree: &BinTree, width: usize, what: &str) -> Result<()> {
        if self.width != width || self.len() != tree.internal_count() {
            return Err(Error::InvalidArgument(format!(
                "{what}: expected {} nodes of width {width}, got {} of width {}",
                tree.internal_count(),
                self.len(),
                self.width
            )));
        }
        Ok(())
    }
}

/// Solution of a backward recursion: `Y` at every node; `Z` and the
/// generator value at every internal node.
#[derive(Debug, Clone)]
pub struct TreeSolution {
    width: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    generator: Vec<f64>,
}

impl TreeSolution {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn y(&self, node: usize) -> &[f64] {
        &self.y[node * self.width..(node + 1) * self.width]
    }

    pub fn root(&self) -> &[f64] {
        self.y(0)
    }

    pub fn z(&self, node: usize) -> &[f64] {
        &self.z[node * self.width..(node + 1) * self.width]
    }

    pub fn z_matrix(&self, node: usize) -> ZMatrix {
        ZMatrix::row(self.z(node))
    }

    pub fn generator_value(&self, node: usize) -> &[f64] {
        &self.generator[node * self.width..(node + 1) * self.width]
    }

    pub fn z_field(&self) -> NodeValues {
        NodeValues {
            width: self.width,
            data: self.z.clone(),
        }
    }

    /// The generator values along the solve, as a node field.
    pub fn generator_field(&self) -> NodeValues {
        NodeValues {
            width: self.width,
            data: self.generator.clone(),
        }
    }
}

fn non_finite(what: &str, node: usize, v: &[f64]) -> Error {
    Error::NonFinite(format!("{what} {v:?} at node {node}"))
}

/// Backward recursion `Z = (Y⁺ − Y⁻)/(2√dt)`, `Y = (Y⁺ + Y⁻)/2 + g(t, path, Z)·dt`.
pub fn solve_bsde<G, T>(tree: &BinTree, generator: G, terminal: T) -> Result<TreeSolution>
where
    G: Fn(&NodeView<'_>, &ZMatrix) -> Result<Vec<f64>> + Sync,
    T: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let width = terminal(&[tree.state(tree.leaves().start)])?.len();
    if width == 0 {
        return Err(Error::InvalidArgument("terminal map has no components".into()));
    }
    let mut y = vec![0.0; tree.node_count() * width];
    let mut z = vec![0.0; tree.internal_count() * width];
    let mut gen = vec![0.0; tree.internal_count() * width];

    let leaf_start = tree.leaves().start;
    y[leaf_start * width..]
        .par_chunks_mut(width)
        .enumerate()
        .try_for_each(|(k, out)| -> Result<()> {
            let node = leaf_start + k;
            let v = terminal(&[tree.state(node)])?;
            if v.len() != width || v.iter().any(|x| !x.is_finite()) {
                return Err(non_finite("terminal value", node, &v));
            }
            out.copy_from_slice(&v);
            Ok(())
        })?;

    let (dt, two_sqrt_dt) = (tree.dt(), 2.0 * tree.sqrt_dt());
    for level in (0..tree.depth()).rev() {
        let range = tree.level_range(level);
        let t = level as f64 * dt;
        let (lower, children) = y.split_at_mut(range.end * width);
        let here = &mut lower[range.start * width..];
        let child_start = range.end;
        here.par_chunks_mut(width)
            .zip(z[range.start * width..range.end * width].par_chunks_mut(width))
            .zip(gen[range.start * width..range.end * width].par_chunks_mut(width))
            .enumerate()
            .try_for_each(|(k, ((y_out, z_out), g_out))| -> Result<()> {
                let node = range.start + k;
                let down = (2 * node + 1 - child_start) * width;
                let up = down + width;
                for i in 0..width {
                    z_out[i] = (children[up + i] - children[down + i]) / two_sqrt_dt;
                }
                let path = tree.path(node);
                let view = NodeView {
                    node,
                    level,
                    t,
                    path: PathPrefix::scalar(&path),
                };
                let g = generator(&view, &ZMatrix::row(z_out))?;
                if g.len() != width || g.iter().any(|v| !v.is_finite()) {
                    return Err(non_finite("generator value", node, &g));
                }
                for i in 0..width {
                    y_out[i] = 0.5 * (children[up + i] + children[down + i]) + g[i] * dt;
                }
                g_out.copy_from_slice(&g);
                Ok(())
            })?;
    }
    Ok(TreeSolution {
        width,
        y,
        z,
        generator: gen,
    })
}

/// `dt·L < 1` for the declared selector bound.
pub fn check_depth_for_lipschitz(tree: &BinTree, lipschitz: f64) -> Result<()> {
    if tree.dt() * lipschitz >= 1.0 {
        return Err(Error::DepthTooSmall {
            min_depth: (tree.horizon() * lipschitz).floor() as usize + 1,
        });
    }
    Ok(())
}

pub fn spec_terminal(spec: &GameSpec) -> impl Fn(&[f64]) -> Result<Vec<f64>> + Sync + '_ {
    move |x| spec.evaluate_terminal(x)
}

fn require_scalar_state(spec: &GameSpec) -> Result<()> {
    if spec.brownian_dim() != 1 {
        return Err(Error::Precondition(format!(
            "the tree carries one Brownian dimension, game has {}",
            spec.brownian_dim()
        )));
    }
    Ok(())
}

/// `Y^H` for a selector `H` with the game's terminal payoff.
pub fn solve_with_selector(tree: &BinTree, spec: &GameSpec, sel: &Selector) -> Result<TreeSolution> {
    require_scalar_state(spec)?;
    check_depth_for_lipschitz(tree, sel.lipschitz())?;
    solve_bsde(
        tree,
        |v: &NodeView<'_>, z: &ZMatrix| sel.evaluate(v.t, v.path, z),
        spec_terminal(spec),
    )
}

/// `Y^η` for a node field `η` (the generator ignores `z`).
pub fn solve_with_eta(tree: &BinTree, spec: &GameSpec, eta: &NodeValues) -> Result<TreeSolution> {
    require_scalar_state(spec)?;
    eta.check_fits(tree, spec.num_players(), "η")?;
    solve_bsde(
        tree,
        |v: &NodeView<'_>, _: &ZMatrix| Ok(eta.get(v.node).to_vec()),
        spec_terminal(spec),
    )
}

/// A closed-loop control: one action profile (by linear index) per internal node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlProfile {
    profiles: Vec<usize>,
}

impl ControlProfile {
    pub fn constant(tree: &BinTree, spec: &GameSpec, a: &ActionProfile) -> Self {
        ControlProfile {
            profiles: vec![spec.linear_index(a); tree.internal_count()],
        }
    }

    pub fn from_fn(tree: &BinTree, spec: &GameSpec, mut f: impl FnMut(usize) -> ActionProfile) -> Self {
        ControlProfile {
            profiles: (0..tree.internal_count()).map(|k| spec.linear_index(&f(k))).collect(),
        }
    }

    pub fn from_linear(tree: &BinTree, spec: &GameSpec, profiles: Vec<usize>) -> Result<Self> {
        if profiles.len() != tree.internal_count() {
            return Err(Error::InvalidArgument(format!(
                "control has {} nodes, tree has {} internal nodes",
                profiles.len(),
                tree.internal_count()
            )));
        }
        if let Some(&bad) = profiles.iter().find(|&&k| k >= spec.profile_count()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: spec.profile_count(),
            });
        }
        Ok(ControlProfile { profiles })
    }

    pub fn linear(&self, node: usize) -> usize {
        self.profiles[node]
    }

    pub fn action(&self, spec: &GameSpec, node: usize) -> ActionProfile {
        spec.profile(self.profiles[node])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.profiles
    }

    fn check_fits(&self, tree: &BinTree, spec: &GameSpec) -> Result<()> {
        Self::from_linear(tree, spec, self.profiles.clone()).map(|_| ())
    }
}

/// `J(α)` as the expectation under the tilted walk with up-probability
/// `(1 + b√dt)/2`, with running payoffs accumulated along paths.
pub fn payoff_girsanov(tree: &BinTree, spec: &GameSpec, alpha: &ControlProfile) -> Result<Vec<f64>> {
    require_scalar_state(spec)?;
    alpha.check_fits(tree, spec)?;
    let n = spec.num_players();
    let mut prob = vec![0.0; tree.node_count()];
    prob[0] = 1.0;
    let mut total = vec![0.0; n];
    let mut b = [0.0];
    let mut f = vec![0.0; n];
    for node in 0..tree.internal_count() {
        spec.coefficients_into(tree.time(node), &[tree.state(node)], alpha.linear(node), &mut b, &mut f)?;
        let p = 0.5 * (1.0 + b[0] * tree.sqrt_dt());
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DepthTooSmall {
                min_depth: (tree.horizon() * b[0] * b[0]).floor() as usize + 1,
            });
        }
        let w = prob[node];
        for i in 0..n {
            total[i] += w * f[i] * tree.dt();
        }
        prob[2 * node + 2] = w * p;
        prob[2 * node + 1] = w * (1.0 - p);
    }
    for leaf in tree.leaves() {
        let g = spec.evaluate_terminal(&[tree.state(leaf)])?;
        for i in 0..n {
            total[i] += prob[leaf] * g[i];
        }
    }
    if total.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("payoff", 0, &total));
    }
    Ok(total)
}

/// `Y^α`: generator `h(t, x, z, α(node))`, one column per player.
pub fn solve_under_control(tree: &BinTree, spec: &GameSpec, alpha: &ControlProfile) -> Result<TreeSolution> {
    require_scalar_state(spec)?;
    alpha.check_fits(tree, spec)?;
    let n = spec.num_players();
    solve_bsde(
        tree,
        |v: &NodeView<'_>, z: &ZMatrix| {
            let mut b = [0.0];
            let mut f = vec![0.0; n];
            spec.coefficients_into(v.t, &[v.x()], alpha.linear(v.node), &mut b, &mut f)?;
            Ok((0..n).map(|i| f[i] + b[0] * z.col(i)[0]).collect())
        },
        spec_terminal(spec),
    )
}

/// `Ȳ^{α,i}_0`: player `i` (0-based) best-responds to the others' `α`.
pub fn best_response_root(tree: &BinTree, spec: &GameSpec, alpha: &ControlProfile, i: usize) -> Result<f64> {
    require_scalar_state(spec)?;
    alpha.check_fits(tree, spec)?;
    let n = spec.num_players();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let stride = spec.strides()[i];
    let len = spec.action_grid(i).len();
    let sol = solve_bsde(
        tree,
        |v: &NodeView<'_>, z: &ZMatrix| {
            let linear = alpha.linear(v.node);
            let base = linear - ((linear / stride) % len) * stride;
            let mut b = [0.0];
            let mut f = vec![0.0; n];
            let mut best = f64::NEG_INFINITY;
            for k in 0..len {
                spec.coefficients_into(v.t, &[v.x()], base + k * stride, &mut b, &mut f)?;
                best = best.max(f[i] + b[0] * z.col(0)[0]);
            }
            Ok(vec![best])
        },
        |x: &[f64]| Ok(vec![spec.evaluate_terminal(x)?[i]]),
    )?;
    Ok(sol.root()[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsCertificate {
    /// `Ȳ^{α,i}_0 − Y^{α,i}_0` per player.
    pub gaps: Vec<f64>,
    pub epsilon: f64,
}

pub fn certify_equilibrium(tree: &BinTree, spec: &GameSpec, alpha: &ControlProfile) -> Result<EpsCertificate> {
    let own = solve_under_control(tree, spec, alpha)?;
    let gaps = (0..spec.num_players())
        .map(|i| Ok(best_response_root(tree, spec, alpha, i)? - own.root()[i]))
        .collect::<Result<Vec<f64>>>()?;
    let epsilon = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EpsCertificate { gaps, epsilon })
}

fn theta_at(tree: &BinTree, z: &NodeValues, node: usize) -> Theta {
    Theta::new(tree.time(node), vec![tree.state(node)], ZMatrix::row(z.get(node)))
}

/// Uniform `δ`-box partition of `(θ, η)`-space restricted to a bounding box.
struct Partition {
    delta: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Partition {
    fn cell(&self, coords: &[f64]) -> Result<Vec<i64>> {
        let inside = coords
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (l, h))| c.is_finite() && *c >= l - 1e-12 && *c <= h + 1e-12);
        if !inside {
            return Err(Error::OutsideCover(format!("{coords:?}")));
        }
        Ok(coords.iter().map(|c| (c / self.delta).floor() as i64).collect())
    }

    fn anchor(&self, cell: &[i64]) -> Vec<f64> {
        cell.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&k, (l, h))| ((k as f64 + 0.5) * self.delta).clamp(*l, *h))
            .collect()
    }
}

struct Regeneration {
    theta: Theta,
    cloud: SetCloud,
    eta: Vec<f64>,
    profile: usize,
}

/// Builds a closed-loop control that tracks the target `η`: at each
/// regeneration time (when `θ`, its cloud or `η` moved by `δ` since the last
/// one) the action switches to the equilibrium attached to the partition
/// cell of the current `(θ, η)`. That equilibrium realizes the cloud point
/// nearest to `η` at the cell anchor.
pub fn construct_control(
    tree: &BinTree,
    spec: &GameSpec,
    eta: &NodeValues,
    z: &NodeValues,
    delta: f64,
) -> Result<ControlProfile> {
    require_scalar_state(spec)?;
    let n = spec.num_players();
    eta.check_fits(tree, n, "η")?;
    z.check_fits(tree, n, "Z")?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidArgument(format!("δ = {delta} must be positive")));
    }
    let coords = |node: usize| -> Vec<f64> {
        let mut c = vec![tree.time(node), tree.state(node)];
        c.extend_from_slice(z.get(node));
        c.extend_from_slice(eta.get(node));
        c
    };
    let width = 2 + 2 * n;
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for node in 0..tree.internal_count() {
        for (k, c) in coords(node).into_iter().enumerate() {
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    let partition = Partition { delta, lo, hi };
    let mut cells: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut assign = |c: &[f64]| -> Result<usize> {
        let key = partition.cell(c)?;
        if let Some(&a) = cells.get(&key) {
            return Ok(a);
        }
        let anchor = partition.anchor(&key);
        let theta = Theta::new(anchor[0], vec![anchor[1]], ZMatrix::row(&anchor[2..2 + n]));
        let (cloud, realizers) = cloud_with_realizers(spec, &theta, 0.0)?;
        let k = cloud
            .nearest(&anchor[2 + n..])
            .ok_or_else(|| Error::EmptyHamiltonian(theta.to_string()))?;
        cells.insert(key, realizers[k]);
        Ok(realizers[k])
    };

    let mut profiles = vec![0usize; tree.internal_count()];
    let mut stack: Vec<(usize, Option<std::rc::Rc<Regeneration>>)> = vec![(0, None)];
    while let Some((node, last)) = stack.pop() {
        let theta = theta_at(tree, z, node);
        let cloud = hamiltonian_cloud(spec, &theta, 0.0)?;
        if cloud.is_empty() {
            return Err(Error::EmptyHamiltonian(theta.to_string()));
        }
        let here = eta.get(node);
        let keep =
            last.filter(|r| theta.distance(&r.theta) + hausdorff(&cloud, &r.cloud) + euclid(here, &r.eta) < delta);
        let current = match keep {
            Some(r) => r,
            None => std::rc::Rc::new(Regeneration {
                profile: assign(&coords(node))?,
                theta,
                cloud,
                eta: here.to_vec(),
            }),
        };
        profiles[node] = current.profile;
        if tree.level(node) + 1 < tree.depth() {
            stack.push((2 * node + 2, Some(current.clone())));
            stack.push((2 * node + 1, Some(current)));
        }
    }
    ControlProfile::from_linear(tree, spec, profiles)
}

/// Per-node distance from `η` to the cloud at `(t, x, Z^η)`, with `Z^η` from
/// the generator-`η` solve.
fn eta_distances(tree: &BinTree, spec: &GameSpec, eta: &NodeValues) -> Result<Vec<f64>> {
    let sol = solve_with_eta(tree, spec, eta)?;
    (0..tree.internal_count())
        .into_par_iter()
        .map(|node| {
            let theta = Theta::new(tree.time(node), vec![tree.state(node)], sol.z_matrix(node));
            let cloud = hamiltonian_cloud(spec, &theta, 0.0)?;
            if cloud.is_empty() {
                return Err(Error::EmptyHamiltonian(theta.to_string()));
            }
            Ok(dist_point_cloud(eta.get(node), &cloud))
        })
        .collect()
}

/// `E[Σ_k d^{3/2}(η, ℍ(t_k, x, Z^η))·dt]` under the symmetric walk.
pub fn xi_deficit(tree: &BinTree, spec: &GameSpec, eta: &NodeValues) -> Result<f64> {
    let dist = eta_distances(tree, spec, eta)?;
    Ok(dist
        .iter()
        .enumerate()
        .map(|(node, d)| tree.uniform_weight(node) * d.powf(1.5) * tree.dt())
        .sum())
}

/// True iff `η` lies within 1e-9 of the exact cloud at every internal node.
pub fn raw_value_check(tree: &BinTree, spec: &GameSpec, eta: &NodeValues) -> Result<bool> {
    Ok(eta_distances(tree, spec, eta)?.iter().all(|&d| d <= 1e-9))
}
