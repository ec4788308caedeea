//! Value clouds sampled from indexed selector families, `Ξ_ε` membership,
//! target shifts and emptiness scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, Theta, ZMatrix};
use crate::hamiltonian::{dist_point_cloud, euclid, hamiltonian_cloud, SetCloud};
use crate::pde::{attained_gradient, Grid1D};
use crate::selectors::{make_indexed_selector, IndexMap, Selector};
use crate::tree::{
    certify_equilibrium, check_depth_for_lipschitz, construct_control, payoff_girsanov, solve_bsde, solve_with_eta,
    spec_terminal, BinTree, EpsCertificate, NodeValues, NodeView,
};

pub use crate::tree::{raw_value_check, xi_deficit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub constants: usize,
    pub switches: usize,
    pub random: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn total(&self) -> usize {
        self.constants + self.switches + self.random
    }
}

/// `k`-th point of the base-2 van der Corput sequence, starting at 1/2.
fn van_der_corput(mut k: u64) -> f64 {
    k += 1;
    let (mut out, mut scale) = (0.0, 0.5);
    while k > 0 {
        if k & 1 == 1 {
            out += scale;
        }
        k >>= 1;
        scale *= 0.5;
    }
    out
}

/// The index maps a plan prescribes for a family of `family_len` members:
/// constants cycle through the family; switches cycle through ordered pairs
/// with switch times `T/2, T/4, 3T/4, …`; random maps draw their seeds from
/// one ChaCha stream.
pub fn plan_index_maps(plan: &SamplingPlan, family_len: usize, horizon: f64) -> Result<Vec<IndexMap>> {
    if plan.total() == 0 {
        return Err(Error::InvalidArgument("sampling plan draws no index maps".into()));
    }
    if family_len == 0 {
        return Err(Error::InvalidArgument("empty selector family".into()));
    }
    let mut maps = Vec::with_capacity(plan.total());
    for j in 0..plan.constants {
        maps.push(IndexMap::constant(j % family_len + 1));
    }
    let pairs: Vec<(usize, usize)> = (1..=family_len)
        .flat_map(|p| (1..=family_len).filter(move |&q| q != p).map(move |q| (p, q)))
        .collect();
    if !pairs.is_empty() {
        for j in 0..plan.switches {
            let (p, q) = pairs[j % pairs.len()];
            let at = horizon * van_der_corput((j / pairs.len()) as u64);
            maps.push(IndexMap::time_switch(vec![at], vec![p, q])?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    for _ in 0..plan.random {
        maps.push(IndexMap::random_adapted(rng.gen(), family_len));
    }
    Ok(maps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub label: String,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMetadata {
    pub seed: u64,
    pub constants: usize,
    pub switches: usize,
    pub random: usize,
    pub family_size: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueCloud {
    pub cloud: SetCloud,
    /// Label of the first sample reaching each cloud point.
    pub provenance: Vec<String>,
    pub samples: Vec<SampleRecord>,
    pub metadata: SamplingMetadata,
    /// The generator process `η = H^I(t, path, Z)` of each sample.
    #[serde(skip)]
    pub etas: Vec<NodeValues>,
}

/// Root values `Y^{H^I}_0` over the plan's index maps; every selector value is
/// checked against the exact cloud at the node where it is used.
pub fn estimate_set_value(
    tree: &BinTree,
    spec: &GameSpec,
    family: &[Selector],
    plan: &SamplingPlan,
) -> Result<ValueCloud> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty selector family".into()));
    }
    let lipschitz = family.iter().map(|s| s.lipschitz()).fold(0.0, f64::max);
    check_depth_for_lipschitz(tree, lipschitz)?;
    let maps = plan_index_maps(plan, family.len(), tree.horizon())?;

    let solved: Vec<(SampleRecord, NodeValues)> = maps
        .par_iter()
        .map(|map| {
            let indexed = make_indexed_selector(family.to_vec(), map.clone())?;
            let sol = solve_bsde(
                tree,
                |v: &NodeView<'_>, z: &ZMatrix| {
                    let value = indexed.evaluate(v.t, v.path, z)?;
                    let theta = Theta::new(v.t, vec![v.x()], z.clone());
                    let cloud = hamiltonian_cloud(spec, &theta, 0.0)?;
                    if dist_point_cloud(&value, &cloud) > 1e-9 {
                        let k = map.index(v.t, v.path);
                        return Err(Error::SelectorInvalid {
                            label: family[k - 1].label().to_string(),
                            at: theta.to_string(),
                        });
                    }
                    Ok(value)
                },
                spec_terminal(spec),
            )?;
            Ok((
                SampleRecord {
                    label: indexed.label().to_string(),
                    point: sol.root().to_vec(),
                },
                sol.generator_field(),
            ))
        })
        .collect::<Result<_>>()?;
    let (samples, etas): (Vec<SampleRecord>, Vec<NodeValues>) = solved.into_iter().unzip();

    let cloud = SetCloud::new(samples.iter().map(|s| s.point.clone()).collect(), 0.0)?;
    let provenance = cloud
        .points()
        .iter()
        .map(|p| {
            samples
                .iter()
                .find(|s| euclid(&s.point, p) <= 1e-12)
                .map(|s| s.label.clone())
                .unwrap_or_default()
        })
        .collect();
    Ok(ValueCloud {
        cloud,
        provenance,
        samples,
        metadata: SamplingMetadata {
            seed: plan.seed,
            constants: plan.constants,
            switches: plan.switches,
            random: plan.random,
            family_size: family.len(),
            depth: tree.depth(),
        },
        etas,
    })
}

pub fn xi_membership(tree: &BinTree, spec: &GameSpec, eta: &NodeValues, eps: f64) -> Result<bool> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε = {eps} must be positive")));
    }
    Ok(xi_deficit(tree, spec, eta)? <= eps)
}

/// `η̃ = η + (y − Y^η_0)/T`, whose root value is exactly `y`.
pub fn shift_to_target(tree: &BinTree, spec: &GameSpec, eta: &NodeValues, y: &[f64]) -> Result<NodeValues> {
    let root = solve_with_eta(tree, spec, eta)?.root().to_vec();
    if y.len() != root.len() {
        return Err(Error::InvalidArgument(format!(
            "target has {} components, game has {}",
            y.len(),
            root.len()
        )));
    }
    let shift: Vec<f64> = y.iter().zip(&root).map(|(a, b)| (a - b) / tree.horizon()).collect();
    NodeValues::from_data(
        tree,
        eta.width(),
        eta.as_slice()
            .chunks(eta.width())
            .flat_map(|v| v.iter().zip(&shift).map(|(a, s)| a + s))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmptinessVerdict {
    /// Some probe inside the attained-gradient range has no `ε`-equilibrium.
    Empty,
    /// No failures, and the probes cover the attained-gradient range.
    NonEmptyOnProbes,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmptinessReport {
    pub failures: Vec<Theta>,
    pub attained_range: f64,
    pub verdict: EmptinessVerdict,
    pub warning: Option<String>,
}

/// Attained gradient range: largest heat-flow gradient of any terminal
/// payoff on `[−6, 6]` with `dx = 0.05`; infinite when `d ≠ 1`.
pub fn default_attained_range(spec: &GameSpec) -> Result<f64> {
    if spec.brownian_dim() != 1 {
        return Ok(f64::INFINITY);
    }
    let grid = Grid1D::with_dx(-6.0, 6.0, 0.05, spec.horizon())?;
    (0..spec.num_players()).try_fold(0.0f64, |m, i| Ok(m.max(attained_gradient(spec, &grid, i)?)))
}

/// Probes with an empty `ε`-equilibrium set, and a verdict on `𝕍 = ∅`.
pub fn emptiness_scan(
    spec: &GameSpec,
    probes: &[Theta],
    eps: f64,
    attained_range: Option<f64>,
) -> Result<EmptinessReport> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("emptiness scan needs probes".into()));
    }
    let range = match attained_range {
        Some(r) => r,
        None => default_attained_range(spec)?,
    };
    let mut failures = Vec::new();
    for theta in probes {
        if hamiltonian_cloud(spec, theta, eps)?.is_empty() {
            failures.push(theta.clone());
        }
    }
    let in_range = |th: &Theta| th.z.max_abs() <= range + 1e-12;
    let reach = probes.iter().map(|th| th.z.max_abs()).fold(0.0, f64::max);
    let (verdict, warning) = if failures.iter().any(in_range) {
        (EmptinessVerdict::Empty, None)
    } else if !failures.is_empty() {
        (
            EmptinessVerdict::Inconclusive,
            Some(format!("all failures lie beyond the attained gradient range {range}")),
        )
    } else if reach + 1e-12 < range {
        (
            EmptinessVerdict::Inconclusive,
            Some(format!(
                "probes reach |z| = {reach}, below the attained gradient range {range}"
            )),
        )
    } else {
        (EmptinessVerdict::NonEmptyOnProbes, None)
    };
    Ok(EmptinessReport {
        failures,
        attained_range: range,
        verdict,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub target: Vec<f64>,
    pub payoff: Vec<f64>,
    pub certificate: EpsCertificate,
}

impl BandCheck {
    pub fn payoff_error(&self) -> f64 {
        euclid(&self.target, &self.payoff)
    }
}

/// Builds a control tracking `η`, then certifies it and prices it.
pub fn certify_target(tree: &BinTree, spec: &GameSpec, eta: &NodeValues, delta: f64) -> Result<BandCheck> {
    let sol = solve_with_eta(tree, spec, eta)?;
    let alpha = construct_control(tree, spec, eta, &sol.z_field(), delta)?;
    Ok(BandCheck {
        target: sol.root().to_vec(),
        payoff: payoff_girsanov(tree, spec, &alpha)?,
        certificate: certify_equilibrium(tree, spec, &alpha)?,
    })
}
