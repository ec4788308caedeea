//! Selectors of the set-valued Hamiltonian: maps `(t, path, z) → R^N`
//! whose values lie in `ℍ(t, x_t, z)`, with a declared z-Lipschitz bound.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, Theta, ZMatrix};
use crate::hamiltonian::{dist_point_cloud, euclid, hamiltonian_cloud, singleton_point};

/// A discrete state history `x_0, …, x_k`, each point in `R^dim`.
#[derive(Debug, Clone, Copy)]
pub struct PathPrefix<'a> {
    dim: usize,
    states: &'a [f64],
}

impl<'a> PathPrefix<'a> {
    pub fn new(dim: usize, states: &'a [f64]) -> Self {
        assert!(dim > 0 && states.len().is_multiple_of(dim) && !states.is_empty());
        PathPrefix { dim, states }
    }

    pub fn scalar(states: &'a [f64]) -> Self {
        Self::new(1, states)
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn point(&self, k: usize) -> &'a [f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// The current state `x_t` (last point of the history).
    pub fn current(&self) -> &'a [f64] {
        self.point(self.len() - 1)
    }

    pub fn states(&self) -> &'a [f64] {
        self.states
    }
}

pub type StateFn = Arc<dyn Fn(f64, &[f64], &ZMatrix) -> Result<Vec<f64>> + Send + Sync>;
pub type PathFn = Arc<dyn Fn(f64, PathPrefix<'_>, &ZMatrix) -> Result<Vec<f64>> + Send + Sync>;
/// A target process `η(t, path)`.
pub type EtaMap = Arc<dyn Fn(f64, PathPrefix<'_>) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum SelectorMap {
    State(StateFn),
    Path(PathFn),
}

#[derive(Clone)]
pub struct Selector {
    map: SelectorMap,
    lipschitz: f64,
    label: String,
    exact: bool,
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Selector")
            .field("label", &self.label)
            .field("lipschitz", &self.lipschitz)
            .field("state_dependent", &self.is_state_dependent())
            .field("exact", &self.exact)
            .finish()
    }
}

fn finite_output(label: &str, v: Vec<f64>) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("selector '{label}' output {v:?}")))
    }
}

impl Selector {
    /// A state-dependent selector `(t, x, z) ↦ H(t, x, z)`.
    pub fn from_state_fn(label: impl Into<String>, lipschitz: f64, exact: bool, f: StateFn) -> Self {
        Selector {
            map: SelectorMap::State(f),
            lipschitz,
            label: label.into(),
            exact,
        }
    }

    pub fn from_path_fn(label: impl Into<String>, lipschitz: f64, exact: bool, f: PathFn) -> Self {
        Selector {
            map: SelectorMap::Path(f),
            lipschitz,
            label: label.into(),
            exact,
        }
    }

    /// Constant selector; exact only if the value lies in the Hamiltonian, which
    /// is the caller's claim.
    pub fn constant(label: impl Into<String>, value: Vec<f64>) -> Self {
        Self::from_state_fn(label, 0.0, true, Arc::new(move |_, _, _| Ok(value.clone())))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn claims_exact(&self) -> bool {
        self.exact
    }

    pub fn is_state_dependent(&self) -> bool {
        matches!(self.map, SelectorMap::State(_))
    }

    pub fn evaluate(&self, t: f64, path: PathPrefix<'_>, z: &ZMatrix) -> Result<Vec<f64>> {
        let v = match &self.map {
            SelectorMap::State(f) => f(t, path.current(), z)?,
            SelectorMap::Path(f) => f(t, path, z)?,
        };
        finite_output(&self.label, v)
    }

    /// Evaluation from the current state alone; fails for path-dependent selectors.
    pub fn evaluate_state(&self, t: f64, x: &[f64], z: &ZMatrix) -> Result<Vec<f64>> {
        match &self.map {
            SelectorMap::State(f) => finite_output(&self.label, f(t, x, z)?),
            SelectorMap::Path(_) => Err(Error::Precondition(format!(
                "selector '{}' is path dependent",
                self.label
            ))),
        }
    }
}

/// Adapted index map `(t, path) → {1, 2, …}` choosing a family member.
#[derive(Clone)]
pub struct IndexMap {
    f: Arc<dyn Fn(f64, PathPrefix<'_>) -> usize + Send + Sync>,
    label: String,
}

impl fmt::Debug for IndexMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IndexMap({})", self.label)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl IndexMap {
    pub fn from_fn(label: impl Into<String>, f: impl Fn(f64, PathPrefix<'_>) -> usize + Send + Sync + 'static) -> Self {
        IndexMap {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    pub fn constant(k: usize) -> Self {
        Self::from_fn(format!("const({k})"), move |_, _| k)
    }

    /// `indices[j]` on the j-th time interval cut by the sorted `breaks`
    /// (`indices.len() == breaks.len() + 1`).
    pub fn time_switch(breaks: Vec<f64>, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != breaks.len() + 1 || breaks.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(
                "time switch needs sorted breaks and one more index than breaks".into(),
            ));
        }
        let label = format!("switch({breaks:?} -> {indices:?})");
        Ok(Self::from_fn(label, move |t, _| {
            indices[breaks.iter().take_while(|&&b| b <= t).count()]
        }))
    }

    /// `nonneg` when the first component of the current state is `>= 0`, else `neg`.
    pub fn path_sign(nonneg: usize, neg: usize) -> Self {
        Self::from_fn(format!("sign({nonneg},{neg})"), move |_, p| {
            if p.current()[0] >= 0.0 {
                nonneg
            } else {
                neg
            }
        })
    }

    /// Pseudo-random adapted map: a hash of `seed` and the signs of the path
    /// increments, so the choice depends only on the history so far.
    pub fn random_adapted(seed: u64, family_len: usize) -> Self {
        assert!(family_len > 0);
        Self::from_fn(format!("random({seed})"), move |_, p| {
            let mut h = splitmix64(seed);
            for k in 1..p.len() {
                let up = p.point(k)[0] > p.point(k - 1)[0];
                h = splitmix64(h.wrapping_add(1 + up as u64));
            }
            1 + (h % family_len as u64) as usize
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn index(&self, t: f64, path: PathPrefix<'_>) -> usize {
        (self.f)(t, path)
    }
}

fn theta_at(t: f64, x: &[f64], z: &ZMatrix) -> Theta {
    Theta::new(t, x.to_vec(), z.clone())
}

/// The unique Hamiltonian point, for games whose `ℍ` is a singleton.
pub fn make_singleton_selector(spec: Arc<GameSpec>, probes: &[Theta]) -> Result<Selector> {
    let unique = |spec: &GameSpec, theta: &Theta| -> Result<Vec<f64>> {
        let cloud = hamiltonian_cloud(spec, theta, 0.0)?;
        match cloud.len() {
            0 => Err(Error::EmptyHamiltonian(theta.to_string())),
            1 => Ok(cloud.points()[0].clone()),
            _ => Err(Error::NotSingleton(theta.to_string())),
        }
    };
    let mut lipschitz: f64 = 0.0;
    let step = 1e-4;
    for theta in probes {
        let base = unique(&spec, theta)?;
        for k in 0..theta.z.as_slice().len() {
            for dir in [-1.0, 1.0] {
                let mut moved = theta.clone();
                let (col, row) = (k / theta.z.dim(), k % theta.z.dim());
                moved.z.col_mut(col)[row] += dir * step;
                if let Ok(v) = unique(&spec, &moved) {
                    lipschitz = lipschitz.max(euclid(&v, &base) / step);
                }
            }
        }
    }
    let f: StateFn = Arc::new(move |t, x, z| {
        spec.check_parts(t, x, z)?;
        singleton_point(&spec, t, x, z)
    });
    Ok(Selector::from_state_fn("singleton", lipschitz, true, f))
}

/// `H^I(t, path, z) = family[I(t, path)](t, x_t, z)`.
pub fn make_indexed_selector(family: Vec<Selector>, index_map: IndexMap) -> Result<Selector> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty selector family".into()));
    }
    if let Some(s) = family.iter().find(|s| !s.is_state_dependent()) {
        return Err(Error::InvalidArgument(format!(
            "family member '{}' must be state dependent",
            s.label()
        )));
    }
    let lipschitz = family.iter().map(|s| s.lipschitz()).fold(0.0, f64::max);
    let exact = family.iter().all(|s| s.claims_exact());
    let label = format!("indexed[{}]", index_map.label());
    let f: PathFn = Arc::new(move |t, path, z| {
        let k = index_map.index(t, path);
        if k == 0 || k > family.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: family.len(),
            });
        }
        family[k - 1].evaluate_state(t, path.current(), z)
    });
    Ok(Selector::from_path_fn(label, lipschitz, exact, f))
}

pub type CenterFn = Arc<dyn Fn(f64, &[f64], &ZMatrix) -> Vec<f64> + Send + Sync>;
pub type RadiusFn = Arc<dyn Fn(f64, &[f64], &ZMatrix) -> f64 + Send + Sync>;

/// A ball-valued Hamiltonian `{o + ι r ζ : |ζ| ≤ 1, 0 ≤ ι ≤ 1}` with `o` and
/// `r` both `lipschitz`-Lipschitz in `z`.
#[derive(Clone)]
pub struct BallHamiltonianSpec {
    pub players: usize,
    pub center: CenterFn,
    pub radius: RadiusFn,
    pub lipschitz: f64,
}

impl BallHamiltonianSpec {
    fn center_radius(&self, t: f64, x: &[f64], z: &ZMatrix) -> Result<(Vec<f64>, f64)> {
        let o = (self.center)(t, x, z);
        let r = (self.radius)(t, x, z);
        if o.len() != self.players || o.iter().any(|v| !v.is_finite()) || !r.is_finite() {
            return Err(Error::NonFinite(format!("ball center {o:?} / radius {r}")));
        }
        if r < 0.0 {
            return Err(Error::InvalidArgument(format!("negative ball radius {r}")));
        }
        Ok((o, r))
    }
}

/// Projection of `η` onto the ball; declared `4·L0`-Lipschitz in `z`.
pub fn make_projection_selector(ball: BallHamiltonianSpec, eta_map: EtaMap) -> Selector {
    let lipschitz = 4.0 * ball.lipschitz;
    let f: PathFn = Arc::new(move |t, path, z| {
        let (o, r) = ball.center_radius(t, path.current(), z)?;
        let eta = eta_map(t, path);
        let gap = euclid(&eta, &o);
        if gap <= r {
            Ok(eta)
        } else {
            Ok(o.iter().zip(&eta).map(|(c, e)| c + r * (e - c) / gap).collect())
        }
    });
    Selector::from_path_fn("ball-projection", lipschitz, true, f)
}

/// The cloud point of `ℍ(t, x_t, z)` nearest to `η(t, path)`; ties go to the
/// lexicographically smallest point.
///
/// The declared bound is the drift bound `√d·sup|b|` on the default probe box,
/// which holds wherever the nearest equilibrium branch does not switch.
pub fn make_nearest_point_selector(spec: Arc<GameSpec>, eta_map: EtaMap) -> Result<Selector> {
    let lipschitz = spec
        .coefficient_bounds(&spec.default_probe_box())?
        .z_lipschitz(spec.brownian_dim());
    let f: PathFn = Arc::new(move |t, path, z| {
        let theta = theta_at(t, path.current(), z);
        let cloud = hamiltonian_cloud(&spec, &theta, 0.0)?;
        let eta = eta_map(t, path);
        let k = cloud
            .nearest(&eta)
            .ok_or_else(|| Error::EmptyHamiltonian(theta.to_string()))?;
        Ok(cloud.points()[k].clone())
    });
    Ok(Selector::from_path_fn("nearest-point", lipschitz, true, f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbe {
    pub t: f64,
    /// Scalar path history `x_0, …, x_k`.
    pub path: Vec<f64>,
    pub z: ZMatrix,
    pub z_alt: ZMatrix,
}

/// Largest observed `|H(z) − H(z′)| / |z − z′|` over the probe pairs.
pub fn estimate_lipschitz_z(sel: &Selector, probes: &[LipschitzProbe]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for p in probes {
        let dz = p.z.distance(&p.z_alt);
        if dz == 0.0 {
            return Err(Error::InvalidArgument("Lipschitz probe with z = z′".into()));
        }
        let path = PathPrefix::scalar(&p.path);
        let a = sel.evaluate(p.t, path, &p.z)?;
        let b = sel.evaluate(p.t, path, &p.z_alt)?;
        best = best.max(euclid(&a, &b) / dz);
    }
    Ok(best)
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().all(|p| !c.is_multiple_of(*p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// Unit directions in `R^n`: the first is `e_1`; then evenly spaced angles for
/// `n = 2`, alternating signs for `n = 1`, normalized Halton points otherwise.
pub fn unit_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(count);
    match n {
        1 => {
            for k in 0..count {
                dirs.push(vec![if k % 2 == 0 { 1.0 } else { -1.0 }]);
            }
        }
        2 => {
            for k in 0..count {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                dirs.push(vec![a.cos(), a.sin()]);
            }
        }
        _ => {
            let primes = first_primes(n);
            let mut e1 = vec![0.0; n];
            e1[0] = 1.0;
            if count > 0 {
                dirs.push(e1);
            }
            let mut k = 1u64;
            while dirs.len() < count {
                let p: Vec<f64> = primes.iter().map(|&b| 2.0 * radical_inverse(k, b) - 1.0).collect();
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-9 {
                    dirs.push(p.into_iter().map(|v| v / norm).collect());
                }
                k += 1;
            }
        }
    }
    dirs
}

/// The family `H_{n,m} = o + ι_m r ζ_n` over `n_dirs` directions and
/// `n_radii` scalings (`ι = 1` alone, or `n_radii` points spanning `[0, 1]`).
pub fn enumerate_ball_family(ball: &BallHamiltonianSpec, n_dirs: usize, n_radii: usize) -> Result<Vec<Selector>> {
    if n_dirs == 0 || n_radii == 0 {
        return Err(Error::InvalidArgument("family counts must be >= 1".into()));
    }
    let iotas: Vec<f64> = if n_radii == 1 {
        vec![1.0]
    } else {
        crate::game::linspace(0.0, 1.0, n_radii)
    };
    let mut family = Vec::with_capacity(n_dirs * n_radii);
    for (n, zeta) in unit_directions(ball.players, n_dirs).into_iter().enumerate() {
        for (m, &iota) in iotas.iter().enumerate() {
            let b = ball.clone();
            let zeta = zeta.clone();
            let f: StateFn = Arc::new(move |t, x, z| {
                let (o, r) = b.center_radius(t, x, z)?;
                Ok(o.iter().zip(&zeta).map(|(c, d)| c + iota * r * d).collect())
            });
            family.push(Selector::from_state_fn(
                format!("ball[{n},{m}]"),
                2.0 * ball.lipschitz,
                true,
                f,
            ));
        }
    }
    Ok(family)
}

/// Checks that the selector stays within the exact cloud (plus 1e-9) at each
/// probe `(t, path, z)`.
pub fn validate_selector(spec: &GameSpec, sel: &Selector, probes: &[(f64, Vec<f64>, ZMatrix)]) -> Result<()> {
    for (t, path, z) in probes {
        let prefix = PathPrefix::new(spec.brownian_dim(), path);
        let v = sel.evaluate(*t, prefix, z)?;
        let theta = theta_at(*t, prefix.current(), z);
        let cloud = hamiltonian_cloud(spec, &theta, 0.0)?;
        if dist_point_cloud(&v, &cloud) > cloud.radius() + 1e-9 {
            return Err(Error::SelectorInvalid {
                label: sel.label().to_string(),
                at: theta.to_string(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desk;
    use proptest::prelude::*;

    fn z2(a: f64, b: f64) -> ZMatrix {
        ZMatrix::row(&[a, b])
    }

    fn const_eta(v: Vec<f64>) -> EtaMap {
        Arc::new(move |_, _| v.clone())
    }

    fn ball(o: Vec<f64>, r: f64) -> BallHamiltonianSpec {
        BallHamiltonianSpec {
            players: o.len(),
            center: Arc::new(move |_, _, _| o.clone()),
            radius: Arc::new(move |_, _, _| r),
            lipschitz: 0.0,
        }
    }

    #[test]
    fn singleton_selector_examples() {
        let e1 = Arc::new(desk::e1());
        let probes: Vec<Theta> = [0.0, 0.5, -1.0, 2.0]
            .iter()
            .map(|&z| Theta::scalar(0.3, 0.1, &[z, -z]))
            .collect();
        let sel = make_singleton_selector(e1, &probes).unwrap();
        let path = [0.0, 0.2];
        assert_eq!(
            sel.evaluate(0.5, PathPrefix::scalar(&path), &z2(0.7, -0.7)).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(sel.lipschitz(), 0.0);

        let e4 = Arc::new(desk::e4());
        let probes: Vec<Theta> = [-1.0, 0.0, 0.5]
            .iter()
            .map(|&z| Theta::scalar(0.0, 0.0, &[z]))
            .collect();
        let sel = make_singleton_selector(e4, &probes).unwrap();
        for z in [-2.0, -0.3, 0.0, 0.8] {
            assert_eq!(
                sel.evaluate_state(0.1, &[0.0], &ZMatrix::row(&[z])).unwrap(),
                vec![f64::abs(z)]
            );
        }
        assert!((sel.lipschitz() - 1.0).abs() < 1e-9);

        let e2 = Arc::new(desk::e2());
        let err = make_singleton_selector(e2, &[Theta::scalar(0.0, 0.0, &[0.0, 0.0])]);
        assert!(matches!(err, Err(Error::NotSingleton(_))));
    }

    fn e2_family() -> Vec<Selector> {
        vec![
            Selector::constant("H1", vec![2.0, 1.0]),
            Selector::constant("H2", vec![1.0, 2.0]),
        ]
    }

    #[test]
    fn indexed_selector_examples() {
        let z = z2(0.0, 0.0);
        let sel = make_indexed_selector(e2_family(), IndexMap::constant(1)).unwrap();
        assert_eq!(
            sel.evaluate(0.9, PathPrefix::scalar(&[0.0]), &z).unwrap(),
            vec![2.0, 1.0]
        );

        let sw = IndexMap::time_switch(vec![0.5], vec![1, 2]).unwrap();
        let sel = make_indexed_selector(e2_family(), sw).unwrap();
        assert_eq!(
            sel.evaluate(0.49, PathPrefix::scalar(&[0.0]), &z).unwrap(),
            vec![2.0, 1.0]
        );
        assert_eq!(
            sel.evaluate(0.5, PathPrefix::scalar(&[0.0]), &z).unwrap(),
            vec![1.0, 2.0]
        );

        let sel = make_indexed_selector(e2_family(), IndexMap::path_sign(1, 2)).unwrap();
        assert_eq!(
            sel.evaluate(0.2, PathPrefix::scalar(&[0.0, -0.3, 0.1]), &z).unwrap(),
            vec![2.0, 1.0]
        );
        assert_eq!(
            sel.evaluate(0.2, PathPrefix::scalar(&[0.0, 0.3, -0.1]), &z).unwrap(),
            vec![1.0, 2.0]
        );
        assert!(!sel.is_state_dependent());
        assert!(sel.evaluate_state(0.2, &[0.0], &z).is_err());

        let sel = make_indexed_selector(e2_family(), IndexMap::constant(3)).unwrap();
        assert!(matches!(
            sel.evaluate(0.0, PathPrefix::scalar(&[0.0]), &z),
            Err(Error::IndexOutOfRange { index: 3, len: 2 })
        ));
        assert!(make_indexed_selector(vec![], IndexMap::constant(1)).is_err());
    }

    #[test]
    fn random_index_map_is_adapted() {
        let m = IndexMap::random_adapted(7, 3);
        let a = [0.0, 0.1, 0.0, 0.1];
        let b = [0.0, 0.1, 0.0, -0.1];
        // same prefix, same index
        assert_eq!(
            m.index(0.2, PathPrefix::scalar(&a[..3])),
            m.index(0.2, PathPrefix::scalar(&b[..3]))
        );
        let seen: std::collections::BTreeSet<usize> = (0..64u32)
            .map(|bits| {
                let mut p = vec![0.0];
                for k in 0..6 {
                    let last = *p.last().unwrap();
                    p.push(last + if bits >> k & 1 == 1 { 0.1 } else { -0.1 });
                }
                m.index(0.6, PathPrefix::scalar(&p))
            })
            .collect();
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn projection_examples() {
        let z = z2(0.0, 0.0);
        let p = PathPrefix::scalar(&[0.0]);
        let sel = make_projection_selector(ball(vec![0.0, 0.0], 1.0), const_eta(vec![0.5, 0.0]));
        assert_eq!(sel.evaluate(0.0, p, &z).unwrap(), vec![0.5, 0.0]);
        let sel = make_projection_selector(ball(vec![0.0, 0.0], 1.0), const_eta(vec![3.0, 4.0]));
        let v = sel.evaluate(0.0, p, &z).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        for eta in [vec![1.0, 1.0], vec![-3.0, 2.0]] {
            let sel = make_projection_selector(ball(vec![1.0, 1.0], 0.0), const_eta(eta));
            assert_eq!(sel.evaluate(0.0, p, &z).unwrap(), vec![1.0, 1.0]);
        }
    }

    #[test]
    fn nearest_point_examples() {
        let e2 = Arc::new(desk::e2());
        let z = z2(0.4, -0.2);
        let p = PathPrefix::scalar(&[0.0]);
        for (eta, want) in [
            (vec![2.0, 1.0], vec![2.0, 1.0]),
            (vec![1.6, 1.4], vec![2.0, 1.0]),
            (vec![1.5, 1.5], vec![1.0, 2.0]),
        ] {
            let sel = make_nearest_point_selector(e2.clone(), const_eta(eta)).unwrap();
            assert_eq!(sel.evaluate(0.3, p, &z).unwrap(), want);
        }
        let e3 = Arc::new(desk::e3());
        let sel = make_nearest_point_selector(e3, const_eta(vec![0.0, 0.0])).unwrap();
        assert!(matches!(
            sel.evaluate(0.0, p, &z2(1.0, -1.0)),
            Err(Error::EmptyHamiltonian(_))
        ));
    }

    #[test]
    fn lipschitz_estimates() {
        let probes: Vec<LipschitzProbe> = [(-0.5, 0.25), (-0.01, 0.02), (0.3, 1.0)]
            .iter()
            .map(|&(a, b)| LipschitzProbe {
                t: 0.1,
                path: vec![0.0],
                z: ZMatrix::row(&[a]),
                z_alt: ZMatrix::row(&[b]),
            })
            .collect();
        let c = Selector::constant("c", vec![3.0]);
        assert_eq!(estimate_lipschitz_z(&c, &probes).unwrap(), 0.0);
        let e4 = Arc::new(desk::e4());
        let sel = make_singleton_selector(e4, &[Theta::scalar(0.0, 0.0, &[1.0])]).unwrap();
        assert!((estimate_lipschitz_z(&sel, &probes).unwrap() - 1.0).abs() < 1e-12);
        let bad = [LipschitzProbe {
            t: 0.0,
            path: vec![0.0],
            z: ZMatrix::row(&[1.0]),
            z_alt: ZMatrix::row(&[1.0]),
        }];
        assert!(estimate_lipschitz_z(&c, &bad).is_err());
    }

    #[test]
    fn ball_family_examples() {
        let b = ball(vec![0.5, -0.5], 2.0);
        let fam = enumerate_ball_family(&b, 1, 1).unwrap();
        assert_eq!(fam.len(), 1);
        assert_eq!(
            fam[0].evaluate_state(0.0, &[0.0], &z2(0.0, 0.0)).unwrap(),
            vec![2.5, -0.5]
        );
        assert_eq!(fam[0].lipschitz(), 0.0);

        let fam = enumerate_ball_family(&b, 3, 2).unwrap();
        for (k, s) in fam.iter().enumerate() {
            if k % 2 == 0 {
                assert_eq!(s.evaluate_state(0.0, &[0.0], &z2(0.0, 0.0)).unwrap(), vec![0.5, -0.5]);
            }
        }

        let unit = ball(vec![0.0, 0.0], 1.0);
        let fam = enumerate_ball_family(&unit, 4, 1).unwrap();
        let vals: Vec<Vec<f64>> = fam
            .iter()
            .map(|s| s.evaluate_state(0.0, &[0.0], &z2(0.0, 0.0)).unwrap())
            .collect();
        let want = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (v, w) in vals.iter().zip(want) {
            assert!(euclid(v, &w) < 1e-15);
        }
        for dirs in [unit_directions(1, 3), unit_directions(3, 10), unit_directions(5, 7)] {
            for d in dirs {
                assert!((d.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(enumerate_ball_family(&unit, 0, 1).is_err());
    }

    #[test]
    fn validation_catches_foreign_values() {
        let e2 = desk::e2();
        let probes = vec![(0.1, vec![0.0], z2(0.0, 0.0))];
        validate_selector(&e2, &Selector::constant("ok", vec![2.0, 1.0]), &probes).unwrap();
        assert!(matches!(
            validate_selector(&e2, &Selector::constant("bad", vec![1.5, 1.5]), &probes),
            Err(Error::SelectorInvalid { .. })
        ));
    }

    /// o and r are `l0`-Lipschitz in z by construction.
    fn wavy_ball(l0: f64) -> BallHamiltonianSpec {
        let s = l0 / std::f64::consts::SQRT_2;
        BallHamiltonianSpec {
            players: 2,
            center: Arc::new(move |_, _, z| vec![s * z.col(0)[0].sin(), s * z.col(1)[0].sin()]),
            radius: Arc::new(move |_, _, z| 0.5 + s * (z.col(0)[0] + z.col(1)[0]).sin().abs()),
            lipschitz: l0,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

        #[test]
        fn projection_is_lipschitz_and_distance_minimal(
            l0 in 0.1..3.0f64,
            eta in prop::collection::vec(-4.0..4.0f64, 2),
            za in prop::collection::vec(-3.0..3.0f64, 2),
            dz in prop::collection::vec(-0.5..0.5f64, 2),
        ) {
            prop_assume!(dz[0].abs() + dz[1].abs() > 1e-6);
            let b = wavy_ball(l0);
            let sel = make_projection_selector(b.clone(), const_eta(eta.clone()));
            let zb = vec![za[0] + dz[0], za[1] + dz[1]];
            let probe = LipschitzProbe { t: 0.0, path: vec![0.0], z: ZMatrix::row(&za), z_alt: ZMatrix::row(&zb) };
            let est = estimate_lipschitz_z(&sel, &[probe]).unwrap();
            prop_assert!(est <= 4.0 * l0 * 1.05);
            for z in [&za, &zb] {
                let zm = ZMatrix::row(z);
                let h = sel.evaluate(0.0, PathPrefix::scalar(&[0.0]), &zm).unwrap();
                let o = (b.center)(0.0, &[0.0], &zm);
                let r = (b.radius)(0.0, &[0.0], &zm);
                let want = (euclid(&eta, &o) - r).max(0.0);
                prop_assert!((euclid(&eta, &h) - want).abs() <= 1e-12);
            }
        }

        #[test]
        fn indexed_preserves_common_lipschitz(
            l0 in 0.1..2.0f64,
            za in prop::collection::vec(-3.0..3.0f64, 2),
            dz in prop::collection::vec(-0.5..0.5f64, 2),
            path in prop::collection::vec(-1.0..1.0f64, 1..6),
            seed in 0u64..1000,
        ) {
            prop_assume!(dz[0].abs() + dz[1].abs() > 1e-6);
            let fam = enumerate_ball_family(&wavy_ball(l0), 4, 3).unwrap();
            let l = fam[0].lipschitz();
            let sel = make_indexed_selector(fam, IndexMap::random_adapted(seed, 12)).unwrap();
            let zb = vec![za[0] + dz[0], za[1] + dz[1]];
            let probe = LipschitzProbe { t: 0.3, path, z: ZMatrix::row(&za), z_alt: ZMatrix::row(&zb) };
            prop_assert!(estimate_lipschitz_z(&sel, &[probe]).unwrap() <= l + 1e-9);
        }

        #[test]
        fn ball_family_stays_in_ball(l0 in 0.1..2.0f64, z in prop::collection::vec(-3.0..3.0f64, 2), nd in 1usize..9, nr in 1usize..5) {
            let b = wavy_ball(l0);
            let zm = ZMatrix::row(&z);
            let o = (b.center)(0.0, &[0.0], &zm);
            let r = (b.radius)(0.0, &[0.0], &zm);
            for s in enumerate_ball_family(&b, nd, nr).unwrap() {
                let v = s.evaluate_state(0.0, &[0.0], &zm).unwrap();
                prop_assert!(euclid(&v, &o) <= r + 1e-12);
            }
        }

        #[test]
        fn nearest_point_is_in_cloud(eta in prop::collection::vec(-3.0..3.0f64, 2), z in prop::collection::vec(-2.0..2.0f64, 2), which in 0usize..2) {
            let spec = Arc::new([desk::e1(), desk::e2()][which].clone());
            let sel = make_nearest_point_selector(spec.clone(), const_eta(eta)).unwrap();
            let zm = ZMatrix::row(&z);
            let v = sel.evaluate(0.5, PathPrefix::scalar(&[0.0, 0.1]), &zm).unwrap();
            let cloud = hamiltonian_cloud(&spec, &Theta::new(0.5, vec![0.1], zm), 0.0).unwrap();
            prop_assert_eq!(dist_point_cloud(&v, &cloud), 0.0);
        }
    }
}
