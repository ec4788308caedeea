//! Subcommand orchestration.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sdgame_core::game::{linspace, GameSpec, Theta, ZMatrix};
use sdgame_core::hamiltonian::{cloud_with_realizers, continuity_report, hausdorff, isaacs_check};
use sdgame_core::pde::{
    gaussian_expectation, sample_value, solve_control_hjb, solve_hjb_system, zero_sum_value, Grid1D, IsaacsRange,
};
use sdgame_core::selectors::{make_singleton_selector, Selector, StateFn};
use sdgame_core::set_value::{certify_target, estimate_set_value, xi_deficit, SamplingPlan};
use sdgame_core::tree::{
    certify_equilibrium, construct_control, payoff_girsanov, solve_with_eta, BinTree, ControlProfile, NodeValues,
};

use crate::error::{CliError, EXIT_NO_VALUE, EXIT_OK};
use crate::export::{load_cloud, CloudTable};
use crate::spec_file::load_spec;
use crate::{Command, RunConfig};

/// Result of one subcommand: the JSON document, an optional point table for
/// CSV, human-readable notes and the exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub json: Value,
    pub table: Option<CloudTable>,
    pub notes: Vec<String>,
    pub exit: i32,
}

impl Outcome {
    fn ok(json: Value) -> Self {
        Outcome {
            json,
            table: None,
            notes: Vec::new(),
            exit: EXIT_OK,
        }
    }
}

const DOMAIN: (f64, f64) = (-6.0, 6.0);

fn spec_of(cfg: &RunConfig) -> Result<GameSpec, CliError> {
    let path = cfg
        .spec
        .as_ref()
        .ok_or_else(|| CliError::Usage("this subcommand needs --spec <file>".into()))?;
    load_spec(path)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{what}: '{s}' is not a number")))
        })
        .collect()
}

fn profile_label(spec: &GameSpec, linear: usize) -> String {
    let values = spec.profile(linear).values(spec);
    let parts: Vec<String> = values
        .iter()
        .map(|a| {
            if a.len() == 1 {
                format!("{}", a[0])
            } else {
                format!("({})", a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
            }
        })
        .collect();
    format!("a=({})", parts.join(" "))
}

fn theta_json(theta: &Theta) -> Value {
    json!({ "t": theta.t, "x": theta.x, "z": theta.z.as_slice() })
}

/// `5` times in `[0, T]`, `9` states per axis and `9` values per `z` entry in `[−1, 1]`.
fn theta_lattice(spec: &GameSpec) -> Vec<Theta> {
    let (d, n) = (spec.brownian_dim(), spec.num_players());
    let axis = linspace(-1.0, 1.0, 9);
    let product = |dims: usize| -> Vec<Vec<f64>> {
        (0..dims).fold(vec![Vec::new()], |acc, _| {
            acc.iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect()
        })
    };
    let xs = product(d);
    let zs = product(d * n);
    let mut out = Vec::with_capacity(5 * xs.len() * zs.len());
    for &t in &linspace(0.0, spec.horizon(), 5) {
        for x in &xs {
            for z in &zs {
                let cols: Vec<Vec<f64>> = z.chunks(d).map(<[f64]>::to_vec).collect();
                out.push(Theta::new(
                    t,
                    x.clone(),
                    ZMatrix::from_columns(d, &cols).expect("lattice shape"),
                ));
            }
        }
    }
    out
}

fn hamiltonian(cfg: &RunConfig, theta: &Option<String>, eps: f64) -> Result<Outcome, CliError> {
    let spec = spec_of(cfg)?;
    if let Some(text) = theta {
        let (d, n) = (spec.brownian_dim(), spec.num_players());
        let v = parse_list(text, "--theta")?;
        if v.len() != 1 + d + d * n {
            return Err(CliError::Usage(format!(
                "--theta needs {} numbers (t, x, z)",
                1 + d + d * n
            )));
        }
        let cols: Vec<Vec<f64>> = v[1 + d..].chunks(d).map(<[f64]>::to_vec).collect();
        let theta = Theta::new(v[0], v[1..1 + d].to_vec(), ZMatrix::from_columns(d, &cols)?);
        spec.check_theta(&theta)?;
        let (cloud, realizers) = cloud_with_realizers(&spec, &theta, eps)?;
        let provenance: Vec<String> = realizers.iter().map(|&k| profile_label(&spec, k)).collect();
        let empty = cloud.is_empty();
        let mut out = Outcome::ok(json!({
            "theta": theta_json(&theta),
            "eps": eps,
            "points": cloud.points(),
            "radius": cloud.radius(),
            "provenance": provenance,
            "verdict": if empty { "empty" } else { "nonempty" },
        }));
        out.table = Some(CloudTable {
            points: cloud.points().to_vec(),
            provenance,
        });
        if empty {
            out.exit = EXIT_NO_VALUE;
            out.notes.push(format!("no ε-equilibrium at {theta} (ε = {eps})"));
        }
        return Ok(out);
    }

    let ladder = parse_list(&cfg.eps_ladder, "--eps-ladder")?;
    let probes = theta_lattice(&spec);
    let mut clouds = Vec::with_capacity(probes.len());
    let mut table = CloudTable {
        points: Vec::new(),
        provenance: Vec::new(),
    };
    let mut empty = 0usize;
    for theta in &probes {
        let (cloud, realizers) = cloud_with_realizers(&spec, theta, 0.0)?;
        empty += cloud.is_empty() as usize;
        for (p, &k) in cloud.points().iter().zip(&realizers) {
            table.points.push(p.clone());
            table.provenance.push(format!("{theta} {}", profile_label(&spec, k)));
        }
        clouds.push(json!({ "theta": theta_json(theta), "points": cloud.points() }));
    }
    let mut out = Outcome::ok(Value::Null);
    let continuity = if empty == 0 {
        let report = continuity_report(&spec, &probes, &ladder)?;
        out.notes.push(format!(
            "rho over {} probes: {:?} (monotone: {})",
            report.probes.len(),
            report.rho,
            report.monotone
        ));
        json!({ "ladder": report.ladder, "rho": report.rho, "monotone": report.monotone })
    } else {
        out.notes
            .push(format!("{empty} of {} probes have an empty Hamiltonian", probes.len()));
        Value::Null
    };
    out.json = json!({
        "probes": probes.len(),
        "empty_probes": empty,
        "eps_ladder": ladder,
        "continuity": continuity,
        "clouds": clouds,
        "verdict": if empty == 0 { "nonempty" } else { "empty" },
    });
    out.table = Some(table);
    Ok(out)
}

fn isaacs(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = spec_of(cfg)?;
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for &t in &linspace(0.0, spec.horizon(), 5) {
        for &x in &linspace(-1.0, 1.0, 9) {
            for &z in &linspace(-1.0, 1.0, 9) {
                let theta = Theta::scalar(t, x, &[z, -z]);
                let outcome = isaacs_check(&spec, &theta)?;
                checked += 1;
                if !outcome.holds {
                    failures.push(json!({
                        "theta": theta_json(&theta),
                        "supinf": outcome.supinf,
                        "infsup": outcome.infsup,
                    }));
                }
            }
        }
    }
    let holds = failures.is_empty();
    let mut out = Outcome::ok(json!({
        "checked": checked,
        "failures": failures,
        "verdict": if holds { "isaacs-holds" } else { "no-value" },
    }));
    if holds {
        out.notes
            .push(format!("Isaacs condition holds at all {checked} lattice points"));
    } else {
        out.exit = EXIT_NO_VALUE;
        out.notes.push(format!(
            "Isaacs condition fails at {} of {checked} lattice points: no value",
            out.json["failures"].as_array().map_or(0, Vec::len)
        ));
    }
    Ok(out)
}

/// State selectors picking the cloud point nearest to each anchor, the
/// anchors being the cloud at `(t, x, z) = 0`.
fn anchor_family(spec: &Arc<GameSpec>) -> Result<Vec<Selector>, CliError> {
    let (d, n) = (spec.brownian_dim(), spec.num_players());
    let origin = Theta::new(0.0, vec![0.0; d], ZMatrix::zeros(d, n));
    let (anchors, _) = cloud_with_realizers(spec, &origin, 0.0)?;
    if anchors.is_empty() {
        return Err(sdgame_core::Error::EmptyHamiltonian(origin.to_string()).into());
    }
    let lipschitz = spec.coefficient_bounds(&spec.default_probe_box())?.z_lipschitz(d);
    Ok(anchors
        .points()
        .iter()
        .map(|anchor| {
            let (spec, anchor) = (spec.clone(), anchor.clone());
            let label = format!("nearest({anchor:?})");
            let f: StateFn = Arc::new(move |t, x, z| {
                let theta = Theta::new(t, x.to_vec(), z.clone());
                let (cloud, _) = cloud_with_realizers(&spec, &theta, 0.0)?;
                let k = cloud
                    .nearest(&anchor)
                    .ok_or_else(|| sdgame_core::Error::EmptyHamiltonian(theta.to_string()))?;
                Ok(cloud.points()[k].clone())
            });
            Selector::from_state_fn(label, lipschitz, true, f)
        })
        .collect())
}

fn set_value(cfg: &RunConfig, band: usize, delta: f64) -> Result<Outcome, CliError> {
    let spec = Arc::new(spec_of(cfg)?);
    let tree = BinTree::new(spec.horizon(), cfg.depth)?;
    let family = anchor_family(&spec)?;
    let k = family.len();
    let plan = SamplingPlan {
        constants: k,
        switches: k * (k - 1),
        random: cfg.samples,
        seed: cfg.seed,
    };
    let vc = estimate_set_value(&tree, &spec, &family, &plan)?;
    let picks = band.min(vc.samples.len());
    let mut band_rows = Vec::with_capacity(picks);
    let mut worst = (0.0f64, 0.0f64);
    for j in 0..picks {
        let s = j * vc.samples.len() / picks;
        let check = certify_target(&tree, &spec, &vc.etas[s], delta)?;
        worst = (
            worst.0.max(check.certificate.epsilon),
            worst.1.max(check.payoff_error()),
        );
        band_rows.push(json!({
            "point": vc.samples[s].point,
            "label": vc.samples[s].label,
            "payoff": check.payoff,
            "epsilon": check.certificate.epsilon,
            "payoff_error": check.payoff_error(),
        }));
    }
    let mut out = Outcome::ok(json!({
        "points": vc.cloud.points(),
        "radius": 0.0,
        "provenance": vc.provenance,
        "metadata": vc.metadata,
        "delta": delta,
        "band": band_rows,
        "verdict": "nonempty",
    }));
    out.notes.push(format!(
        "{} distinct points from {} index maps at depth {}; band over {picks} points: max ε = {:.3e}, max payoff error = {:.3e}",
        vc.cloud.len(),
        vc.samples.len(),
        tree.depth(),
        worst.0,
        worst.1
    ));
    out.table = Some(CloudTable {
        points: vc.cloud.points().to_vec(),
        provenance: vc.provenance.clone(),
    });
    Ok(out)
}

fn quadrature(spec: &GameSpec) -> Result<Vec<f64>, CliError> {
    let sd = spec.horizon().sqrt();
    (0..spec.num_players())
        .map(|i| {
            // the terminal payoff is validated finite on the probe box; outside it a
            // failed evaluation counts as zero weight
            Ok(gaussian_expectation(
                |x| spec.evaluate_terminal(&[x]).map(|g| g[i]).unwrap_or(0.0),
                0.0,
                sd,
            ))
        })
        .collect()
}

fn pde(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = Arc::new(spec_of(cfg)?);
    if spec.brownian_dim() != 1 {
        return Err(sdgame_core::Error::Precondition("the PDE solver is one-dimensional".into()).into());
    }
    let grid = Grid1D::new(DOMAIN.0, DOMAIN.1, cfg.nx, spec.horizon())?;
    let quad = quadrature(&spec)?;
    let mut out = Outcome::ok(Value::Null);
    let (mode, value, boundary) = if spec.num_players() == 1 {
        let sol = solve_control_hjb(&spec, &grid)?;
        let v = sample_value(&sol, 0.0, 0.0)?;
        out.notes.push(format!(
            "control value u(0,0) = {:.10}; quadrature E[g(B_T)] = {:.10} (no-control baseline); gain = {:.3e}",
            v[0],
            quad[0],
            v[0] - quad[0]
        ));
        ("control", v, sol.boundary)
    } else if spec.num_players() == 2 && spec.is_zero_sum() {
        let zs = zero_sum_value(&spec, &grid, IsaacsRange::Attained)?;
        if !zs.isaacs_ok {
            out.exit = EXIT_NO_VALUE;
            out.notes.push(format!(
                "Isaacs condition fails at {} lattice points (|z| <= {:.4}): no value",
                zs.failures.len(),
                zs.z_max
            ));
            out.json = json!({
                "mode": "zero-sum",
                "verdict": "no-value",
                "z_max": zs.z_max,
                "failures": zs.failures.iter().map(theta_json).collect::<Vec<_>>(),
            });
            return Ok(out);
        }
        let u1 = zs.u1_root.expect("value exists when Isaacs holds");
        out.notes.push(format!(
            "zero-sum value (u1, u2)(0,0) = ({u1:.10}, {:.10}); quadrature E[g1(B_T)] = {:.10}; |u1 - quadrature| = {:.3e}",
            -u1,
            quad[0],
            (u1 - quad[0]).abs()
        ));
        let boundary = zs.solution.map(|s| s.boundary).unwrap_or_default();
        ("zero-sum", vec![u1, -u1], boundary)
    } else {
        let probes = theta_lattice(&spec);
        let sel = make_singleton_selector(spec.clone(), &probes)?;
        let sol = solve_hjb_system(&sel, |x| spec.evaluate_terminal(&[x]), &grid)?;
        let v = sample_value(&sol, 0.0, 0.0)?;
        out.notes.push(format!(
            "singleton-selector value u(0,0) = {v:?}; quadrature E[g(B_T)] = {quad:?}"
        ));
        ("singleton", v, sol.boundary)
    };
    out.json = json!({
        "mode": mode,
        "value": value,
        "quadrature": quad,
        "grid": grid,
        "boundary": boundary,
        "verdict": "value",
    });
    Ok(out)
}

/// Control profile file: a constant profile (per-player grid indices) or
/// one linear profile index per internal node in heap order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFile {
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<usize>>,
}

/// Target process file: a constant vector or one vector per internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaFile {
    pub depth: usize,
    #[serde(default)]
    pub constant: Option<Vec<f64>>,
    #[serde(default)]
    pub values: Option<Vec<Vec<f64>>>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn load_control(spec: &GameSpec, file: &ControlFile) -> Result<(BinTree, ControlProfile), CliError> {
    let tree = BinTree::new(spec.horizon(), file.depth)?;
    let alpha = match (&file.constant, &file.linear) {
        (Some(indices), None) => {
            let a = sdgame_core::game::ActionProfile::new(spec, indices.clone())?;
            ControlProfile::constant(&tree, spec, &a)
        }
        (None, Some(linear)) => ControlProfile::from_linear(&tree, spec, linear.clone())?,
        _ => {
            return Err(CliError::Usage(
                "control file needs exactly one of \"constant\" or \"linear\"".into(),
            ))
        }
    };
    Ok((tree, alpha))
}

fn certify(cfg: &RunConfig, control: &Path) -> Result<Outcome, CliError> {
    let spec = spec_of(cfg)?;
    let (tree, alpha) = load_control(&spec, &read_json(control)?)?;
    let cert = certify_equilibrium(&tree, &spec, &alpha)?;
    let payoff = payoff_girsanov(&tree, &spec, &alpha)?;
    let mut out = Outcome::ok(json!({ "certificate": cert, "payoff": payoff, "depth": tree.depth() }));
    out.notes.push(format!(
        "ε = {:.6e}, gaps = {:?}, payoff = {payoff:?}",
        cert.epsilon, cert.gaps
    ));
    Ok(out)
}

fn construct(cfg: &RunConfig, eta_path: &Path, delta: f64) -> Result<Outcome, CliError> {
    let spec = spec_of(cfg)?;
    let file: EtaFile = read_json(eta_path)?;
    let tree = BinTree::new(spec.horizon(), file.depth)?;
    let eta = match (&file.constant, &file.values) {
        (Some(c), None) => NodeValues::constant(&tree, c),
        (None, Some(values)) => NodeValues::from_data(&tree, spec.num_players(), values.concat())?,
        _ => {
            return Err(CliError::Usage(
                "η file needs exactly one of \"constant\" or \"values\"".into(),
            ))
        }
    };
    let sol = solve_with_eta(&tree, &spec, &eta)?;
    let alpha = construct_control(&tree, &spec, &eta, &sol.z_field(), delta)?;
    let cert = certify_equilibrium(&tree, &spec, &alpha)?;
    let payoff = payoff_girsanov(&tree, &spec, &alpha)?;
    let deficit = xi_deficit(&tree, &spec, &eta)?;
    let control = ControlFile {
        depth: tree.depth(),
        constant: None,
        linear: Some(alpha.as_slice().to_vec()),
    };
    let mut out = Outcome::ok(json!({
        "control": control,
        "certificate": cert,
        "payoff": payoff,
        "target": sol.root(),
        "xi_deficit": deficit,
        "delta": delta,
    }));
    out.notes.push(format!(
        "target {:?}, payoff {payoff:?}, ε = {:.6e}, deficit = {deficit:.6e}",
        sol.root(),
        cert.epsilon
    ));
    Ok(out)
}

fn hausdorff_cmd(a: &Path, b: &Path) -> Result<Outcome, CliError> {
    let (ca, cb) = (load_cloud(a)?, load_cloud(b)?);
    let d = hausdorff(&ca, &cb);
    let mut out = Outcome::ok(json!({
        "distance": if d.is_finite() { json!(d) } else { json!("inf") },
        "sizes": [ca.len(), cb.len()],
    }));
    out.notes.push(format!("hausdorff distance = {d}"));
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match &cfg.command {
        Command::Hamiltonian { theta, eps } => hamiltonian(cfg, theta, *eps),
        Command::Isaacs => isaacs(cfg),
        Command::SetValue { band, delta } => set_value(cfg, *band, *delta),
        Command::Pde => pde(cfg),
        Command::Certify { control } => certify(cfg, control),
        Command::Construct { eta, delta } => construct(cfg, eta, *delta),
        Command::Hausdorff { a, b } => hausdorff_cmd(a, b),
    }
}
