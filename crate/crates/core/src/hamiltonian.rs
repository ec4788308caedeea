//! Static-game equilibria, set-valued Hamiltonian clouds and Hausdorff geometry.
//!
//! On finite action grids the set-valued Hamiltonian equals its raw
//! counterpart, so `hamiltonian_cloud(spec, θ, 0)` is exact. For `ε > 0` the
//! cloud carries `ε` as a radius: it stands for the union of open `ε`-balls
//! around the `ε`-equilibrium payoffs.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionProfile, GameSpec, Theta, ZMatrix};

const DEDUP_TOL: f64 = 1e-12;

/// Finite point set in `R^N` with a tolerance radius around each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCloud {
    points: Vec<Vec<f64>>,
    radius: f64,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

impl SetCloud {
    /// Sorts lexicographically and drops points within 1e-12 of an earlier one.
    pub fn new(mut points: Vec<Vec<f64>>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("cloud radius {radius} must be >= 0")));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cloud point".into()));
        }
        points.sort_by(|a, b| lex_cmp(a, b));
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if !kept.iter().any(|q| euclid(q, &p) <= DEDUP_TOL) {
                kept.push(p);
            }
        }
        Ok(SetCloud { points: kept, radius })
    }

    pub fn empty() -> Self {
        SetCloud {
            points: Vec::new(),
            radius: 0.0,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the point nearest to `y`; ties go to the lexicographically smallest.
    pub fn nearest(&self, y: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, p) in self.points.iter().enumerate() {
            let d = euclid(p, y);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        best.map(|(k, _)| k)
    }
}

/// All grid profiles `a` with `h_i(θ,a) ≥ h̄_i(θ,a) − ε` for every player,
/// as linear indices, from a precomputed payoff table.
pub fn equilibrium_indices(spec: &GameSpec, table: &[f64], eps: f64) -> Vec<usize> {
    let n = spec.num_players();
    (0..spec.profile_count())
        .filter(|&k| (0..n).all(|i| table[k * n + i] >= spec.hbar_from_table(table, k, i) - eps))
        .collect()
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("ε = {eps} must be a nonnegative real")))
    }
}

/// Brute-force `ε`-Nash equilibria of the static game `a ↦ h(θ, a)`.
pub fn eps_equilibria(spec: &GameSpec, theta: &Theta, eps: f64) -> Result<Vec<ActionProfile>> {
    check_eps(eps)?;
    spec.check_theta(theta)?;
    let table = spec.payoff_table(theta)?;
    Ok(equilibrium_indices(spec, &table, eps)
        .into_iter()
        .map(|k| spec.profile(k))
        .collect())
}

/// The unique point of `ℍ(t, x, z)`, without building a cloud. Errors with
/// `EmptyHamiltonian` or `NotSingleton` otherwise.
pub(crate) fn singleton_point(spec: &GameSpec, t: f64, x: &[f64], z: &ZMatrix) -> Result<Vec<f64>> {
    thread_local! {
        static TABLE: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
    }
    let n = spec.num_players();
    let describe = || Theta::new(t, x.to_vec(), z.clone()).to_string();
    TABLE.with(|cell| {
        let mut table = cell.borrow_mut();
        table.resize(spec.profile_count() * n, 0.0);
        spec.payoff_table_into(t, x, z, &mut table)?;
        let mut found: Option<usize> = None;
        for k in 0..spec.profile_count() {
            if (0..n).all(|i| table[k * n + i] >= spec.hbar_from_table(&table, k, i)) {
                match found {
                    None => found = Some(k),
                    Some(j) if euclid(&table[j * n..(j + 1) * n], &table[k * n..(k + 1) * n]) <= DEDUP_TOL => {}
                    Some(_) => return Err(Error::NotSingleton(describe())),
                }
            }
        }
        let k = found.ok_or_else(|| Error::EmptyHamiltonian(describe()))?;
        Ok(table[k * n..(k + 1) * n].to_vec())
    })
}

/// Cloud of equilibrium payoffs together with one realizing profile per
/// canonical point (the first profile in grid order reaching it).
pub fn cloud_with_realizers(spec: &GameSpec, theta: &Theta, eps: f64) -> Result<(SetCloud, Vec<usize>)> {
    check_eps(eps)?;
    let n = spec.num_players();
    let table = spec.payoff_table(theta)?;
    let eq = equilibrium_indices(spec, &table, eps);
    let cloud = SetCloud::new(eq.iter().map(|&k| table[k * n..(k + 1) * n].to_vec()).collect(), eps)?;
    let realizers = cloud
        .points()
        .iter()
        .map(|p| {
            *eq.iter()
                .find(|&&k| euclid(&table[k * n..(k + 1) * n], p) <= DEDUP_TOL)
                .expect("every canonical point comes from an equilibrium")
        })
        .collect();
    Ok((cloud, realizers))
}

/// `ℍ_ε(θ)` as a cloud: equilibrium payoffs with radius `ε`; `ε = 0` gives `ℍ(θ)`.
pub fn hamiltonian_cloud(spec: &GameSpec, theta: &Theta, eps: f64) -> Result<SetCloud> {
    spec.check_theta(theta)?;
    Ok(cloud_with_realizers(spec, theta, eps)?.0)
}

/// Distance from `y` to the union of the cloud's balls; `+∞` for an empty cloud.
pub fn dist_point_cloud(y: &[f64], cloud: &SetCloud) -> f64 {
    if cloud.is_empty() {
        return f64::INFINITY;
    }
    let nearest = cloud
        .points()
        .iter()
        .map(|p| euclid(p, y))
        .fold(f64::INFINITY, f64::min);
    (nearest - cloud.radius()).max(0.0)
}

fn directed(from: &SetCloud, to: &SetCloud) -> f64 {
    from.points()
        .iter()
        .map(|p| {
            let nearest = to.points().iter().map(|q| euclid(p, q)).fold(f64::INFINITY, f64::min);
            (nearest + from.radius() - to.radius()).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Hausdorff distance between clouds; `+∞` if either is empty.
pub fn hausdorff(a: &SetCloud, b: &SetCloud) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    directed(a, b).max(directed(b, a))
}

/// `ρ_K(ε) = max over θ ∈ K of d(ℍ_ε(θ), ℍ(θ))`.
pub fn rho_k(spec: &GameSpec, probes: &[Theta], eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε = {eps} must be positive")));
    }
    let per_probe: Vec<Result<f64>> = probes
        .par_iter()
        .map(|theta| {
            spec.check_theta(theta)?;
            let n = spec.num_players();
            let table = spec.payoff_table(theta)?;
            let cloud_of = |e: f64| {
                SetCloud::new(
                    equilibrium_indices(spec, &table, e)
                        .into_iter()
                        .map(|k| table[k * n..(k + 1) * n].to_vec())
                        .collect(),
                    e,
                )
            };
            let exact = cloud_of(0.0)?;
            if exact.is_empty() {
                return Err(Error::EmptyHamiltonian(theta.to_string()));
            }
            Ok(hausdorff(&cloud_of(eps)?, &exact))
        })
        .collect();
    let mut rho: f64 = 0.0;
    for r in per_probe {
        rho = rho.max(r?);
    }
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub probes: Vec<Theta>,
    pub ladder: Vec<f64>,
    pub rho: Vec<f64>,
    /// `ρ` nonincreasing down the (decreasing) ladder, within 1e-12.
    pub monotone: bool,
}

pub fn continuity_report(spec: &GameSpec, probes: &[Theta], ladder: &[f64]) -> Result<ContinuityReport> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty ε ladder".into()));
    }
    if ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "ε ladder {ladder:?} must be positive and strictly decreasing"
        )));
    }
    let rho = ladder
        .iter()
        .map(|&e| rho_k(spec, probes, e))
        .collect::<Result<Vec<_>>>()?;
    let monotone = rho.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(ContinuityReport {
        probes: probes.to_vec(),
        ladder: ladder.to_vec(),
        rho,
        monotone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsaacsOutcome {
    pub supinf: f64,
    pub infsup: f64,
    pub holds: bool,
}

/// Grid sup-inf and inf-sup of `h_1(θ, ·)` for a two-player zero-sum game.
pub fn isaacs_check(spec: &GameSpec, theta: &Theta) -> Result<IsaacsOutcome> {
    if spec.num_players() != 2 || !spec.is_zero_sum() {
        return Err(Error::Precondition(
            "Isaacs check needs a two-player zero-sum game".into(),
        ));
    }
    isaacs_unchecked(spec, theta)
}

pub(crate) fn isaacs_unchecked(spec: &GameSpec, theta: &Theta) -> Result<IsaacsOutcome> {
    spec.check_theta(theta)?;
    let table = spec.payoff_table(theta)?;
    let (m1, m2) = (spec.action_grid(0).len(), spec.action_grid(1).len());
    let h1 = |a1: usize, a2: usize| table[(a1 * m2 + a2) * 2];
    let supinf = (0..m1)
        .map(|a1| (0..m2).map(|a2| h1(a1, a2)).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let infsup = (0..m2)
        .map(|a2| (0..m1).map(|a1| h1(a1, a2)).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    Ok(IsaacsOutcome {
        supinf,
        infsup,
        holds: (supinf - infsup).abs() <= 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desk;
    use crate::game::{hamiltonian_h, ProbeBox};
    use proptest::prelude::*;

    fn cloud(points: &[&[f64]], r: f64) -> SetCloud {
        SetCloud::new(points.iter().map(|p| p.to_vec()).collect(), r).unwrap()
    }

    /// Independent brute force over all deviations.
    fn brute_equilibria(spec: &GameSpec, theta: &Theta, eps: f64) -> Vec<ActionProfile> {
        spec.profiles()
            .filter(|a| {
                let h = hamiltonian_h(spec, theta, a).unwrap();
                (0..spec.num_players()).all(|i| {
                    (0..spec.action_grid(i).len()).all(|k| {
                        let mut dev = a.clone();
                        dev.indices[i] = k;
                        hamiltonian_h(spec, theta, &dev).unwrap()[i] <= h[i] + eps
                    })
                })
            })
            .collect()
    }

    #[test]
    fn equilibria_examples() {
        let e2 = desk::e2();
        let theta = Theta::scalar(0.2, 0.4, &[1.0, -3.0]);
        let eq = eps_equilibria(&e2, &theta, 0.0).unwrap();
        assert_eq!(eq, brute_equilibria(&e2, &theta, 0.0));
        let values: Vec<_> = eq.iter().map(|a| a.values(&e2)).collect();
        assert_eq!(values, vec![vec![vec![0.0], vec![0.0]], vec![vec![1.0], vec![1.0]]]);

        let e3 = desk::e3();
        let theta = Theta::scalar(0.0, 0.0, &[1.0, -1.0]);
        assert!(eps_equilibria(&e3, &theta, 0.5).unwrap().is_empty());
        assert!(brute_equilibria(&e3, &theta, 0.5).is_empty());

        let e1 = desk::e1();
        let theta = Theta::scalar(0.0, 0.0, &[0.0, 0.0]);
        assert_eq!(eps_equilibria(&e1, &theta, 0.0).unwrap().len(), 9);
    }

    #[test]
    fn cloud_examples() {
        let e2 = desk::e2();
        let c = hamiltonian_cloud(&e2, &Theta::scalar(0.0, 0.0, &[0.3, 0.1]), 0.0).unwrap();
        assert_eq!(c, cloud(&[&[1.0, 2.0], &[2.0, 1.0]], 0.0));

        let e1 = desk::e1();
        let c = hamiltonian_cloud(&e1, &Theta::scalar(0.0, 0.0, &[0.5, -0.3]), 0.0).unwrap();
        assert_eq!(c, cloud(&[&[0.0, 0.0]], 0.0));

        let e3 = desk::e3();
        let c = hamiltonian_cloud(&e3, &Theta::scalar(0.0, 0.0, &[1.0, -1.0]), 0.0).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn cloud_canonicalizes() {
        let c = cloud(&[&[2.0, 1.0], &[1.0, 2.0], &[2.0, 1.0 + 1e-13]], 0.0);
        assert_eq!(c.points(), &[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(SetCloud::new(vec![vec![0.0]], -1.0).is_err());
        assert!(SetCloud::new(vec![], 0.0).unwrap().is_empty());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dist_point_cloud(&[0.0, 0.0], &cloud(&[&[3.0, 4.0]], 0.0)), 5.0);
        assert_eq!(dist_point_cloud(&[0.0, 0.0], &cloud(&[&[3.0, 4.0]], 1.0)), 4.0);
        assert_eq!(
            dist_point_cloud(&[1.0, 1.0], &cloud(&[&[1.0, 1.0], &[9.0, 9.0]], 0.0)),
            0.0
        );
        assert_eq!(dist_point_cloud(&[1.0, 1.0], &SetCloud::empty()), f64::INFINITY);
    }

    #[test]
    fn hausdorff_examples() {
        let s = cloud(&[&[0.0, 0.0], &[1.0, 0.0]], 0.0);
        assert_eq!(hausdorff(&s, &s), 0.0);
        assert_eq!(hausdorff(&cloud(&[&[0.0, 0.0]], 0.0), &cloud(&[&[3.0, 4.0]], 0.0)), 5.0);
        assert_eq!(hausdorff(&s, &cloud(&[&[0.0, 0.0]], 0.0)), 1.0);
        assert_eq!(hausdorff(&s, &SetCloud::empty()), f64::INFINITY);
    }

    fn lattice_e1(z_points: usize) -> Vec<Theta> {
        let zs = crate::game::linspace(-1.0, 1.0, z_points);
        let mut out = Vec::new();
        for (t, x) in ProbeBox::new((0.0, 1.0), vec![(-1.0, 1.0)], 3).lattice() {
            for &z1 in &zs {
                for &z2 in &zs {
                    out.push(Theta::new(t, x.clone(), crate::game::ZMatrix::row(&[z1, z2])));
                }
            }
        }
        out
    }

    #[test]
    fn rho_examples() {
        let e2 = desk::e2();
        let probes = vec![
            Theta::scalar(0.0, 0.0, &[0.0, 0.0]),
            Theta::scalar(0.5, 1.0, &[2.0, -1.0]),
        ];
        for eps in [0.9, 0.5, 0.1] {
            assert!(rho_k(&e2, &probes, eps).unwrap() <= eps + 1e-15);
        }
        let e1 = desk::e1();
        let zero = vec![Theta::scalar(0.3, 0.1, &[0.0, 0.0])];
        assert!(rho_k(&e1, &zero, 0.2).unwrap() <= 0.2);
        assert!(rho_k(&e1, &lattice_e1(5), 0.01).unwrap() <= 0.02);

        let e3 = desk::e3();
        let bad = vec![Theta::scalar(0.0, 0.0, &[1.0, -1.0])];
        assert!(matches!(rho_k(&e3, &bad, 0.1), Err(Error::EmptyHamiltonian(_))));
    }

    #[test]
    fn continuity_report_examples() {
        let e2 = desk::e2();
        let probes = vec![Theta::scalar(0.0, 0.0, &[0.0, 0.0])];
        let rep = continuity_report(&e2, &probes, &[0.5, 0.1, 0.01]).unwrap();
        assert!(rep.monotone);
        assert_eq!(rep.rho.len(), 3);
        let rep = continuity_report(&desk::e1(), &lattice_e1(5), &[0.5, 0.1, 0.01]).unwrap();
        assert!(rep.monotone);
        assert!(rep.rho[2] <= 0.02);
        let rep = continuity_report(&e2, &probes, &[0.3]).unwrap();
        assert_eq!(rep.rho.len(), 1);
        assert!(continuity_report(&e2, &probes, &[0.1, 0.5]).is_err());
    }

    #[test]
    fn isaacs_examples() {
        let out = isaacs_check(&desk::e1(), &Theta::scalar(0.0, 0.0, &[0.5, -0.5])).unwrap();
        assert_eq!(
            out,
            IsaacsOutcome {
                supinf: 0.0,
                infsup: 0.0,
                holds: true
            }
        );
        let out = isaacs_check(&desk::e3(), &Theta::scalar(0.0, 0.0, &[1.0, -1.0])).unwrap();
        assert_eq!(
            out,
            IsaacsOutcome {
                supinf: -1.0,
                infsup: 1.0,
                holds: false
            }
        );
        let out = isaacs_check(&desk::e3(), &Theta::scalar(0.0, 0.0, &[0.0, 0.0])).unwrap();
        assert!(out.holds && out.supinf == 0.0);
        assert!(matches!(
            isaacs_check(&desk::e2(), &Theta::scalar(0.0, 0.0, &[0.0, 0.0])),
            Err(Error::Precondition(_))
        ));
    }

    fn arb_cloud() -> impl Strategy<Value = SetCloud> {
        (
            prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 1..6),
            0.0..1.0f64,
        )
            .prop_map(|(p, r)| SetCloud::new(p, r).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

        #[test]
        fn distance_stability(y in prop::collection::vec(-6.0..6.0f64, 2), a in arb_cloud(), b in arb_cloud()) {
            let lhs = (dist_point_cloud(&y, &a) - dist_point_cloud(&y, &b)).abs();
            prop_assert!(lhs <= hausdorff(&a, &b) + 1e-12);
        }

        #[test]
        fn hausdorff_pseudometric(a in arb_cloud(), b in arb_cloud(), c in arb_cloud()) {
            prop_assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
            prop_assert_eq!(hausdorff(&a, &a), 0.0);
            prop_assert!(hausdorff(&a, &c) <= hausdorff(&a, &b) + hausdorff(&b, &c) + 1e-12);
        }

        #[test]
        fn equilibria_monotone_in_eps(t in 0.0..1.0f64, x in -2.0..2.0f64, z1 in -2.0..2.0f64, z2 in -2.0..2.0f64,
                                      e1 in 0.0..1.0f64, de in 0.0..1.0f64, which in 0usize..3) {
            let spec = [desk::e1(), desk::e2(), desk::e3()][which].clone();
            let theta = Theta::scalar(t, x, &[z1, z2]);
            let small = eps_equilibria(&spec, &theta, e1).unwrap();
            let large = eps_equilibria(&spec, &theta, e1 + de).unwrap();
            prop_assert!(small.iter().all(|a| large.contains(a)));
            prop_assert_eq!(&small, &brute_equilibria(&spec, &theta, e1));
            let cs = hamiltonian_cloud(&spec, &theta, e1).unwrap();
            let cl = hamiltonian_cloud(&spec, &theta, e1 + de).unwrap();
            prop_assert!(cs.points().iter().all(|p| cl.points().iter().any(|q| euclid(p, q) <= 1e-12)));
        }

        #[test]
        fn cloud_growth_bound(t in 0.0..1.0f64, x in -3.0..3.0f64, z1 in -5.0..5.0f64, z2 in -5.0..5.0f64, which in 0usize..3) {
            let spec = [desk::e1(), desk::e2(), desk::e3()][which].clone();
            let c = spec.coefficient_bounds(&spec.default_probe_box()).unwrap().growth_constant(2, 1);
            let theta = Theta::scalar(t, x, &[z1, z2]);
            for y in hamiltonian_cloud(&spec, &theta, 0.0).unwrap().points() {
                let norm = (y[0] * y[0] + y[1] * y[1]).sqrt();
                prop_assert!(norm <= c * (1.0 + theta.z.norm()) + 1e-12);
            }
        }

        #[test]
        fn isaacs_means_zero_sum_singleton(t in 0.0..1.0f64, x in -2.0..2.0f64, z in -2.0..2.0f64, which in 0usize..2) {
            let spec = [desk::e1(), desk::e3()][which].clone();
            let theta = Theta::scalar(t, x, &[z, -z]);
            let out = isaacs_check(&spec, &theta).unwrap();
            if out.holds {
                let c = hamiltonian_cloud(&spec, &theta, 0.0).unwrap();
                prop_assert_eq!(c.points(), &[vec![out.supinf, -out.supinf]]);
            }
        }
    }
}
