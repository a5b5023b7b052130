use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qlin::goals::{check_bae, find_dfs, find_qnd, Goal, GoalVerdict, Tolerances};
use qlin::interconnect::{cf_type1, cf_type2, QuantumController};
use qlin::io::{self, ControllerSpec, ModelDoc};
use qlin::nogo::{close_loop, plant_splits, verify_nogo};
use qlin::structural::{controllable_subspace, observable_subspace, Subspace};
use qlin::xfer::{self, GwParams, NoiseVariances};
use qlin::{Error, StateSpaceModel};

#[derive(Parser)]
#[command(name = "qlin", version, about = "Structural analysis of linear quantum feedback networks")]
struct Cli {
    /// Relative Markov-parameter tolerance.
    #[arg(long, global = true, env = "QLIN_TOL")]
    tol: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Subspace dimensions and goal verdicts for a system or state-space file.
    Analyze {
        path: PathBuf,
        #[arg(long, default_value = "all")]
        goal: String,
        /// Back-action port(s); defaults to `P` plus unmeasured channels.
        #[arg(long = "ba-port")]
        ba_port: Vec<String>,
        /// Measured output used for BAE and QND.
        #[arg(long = "output-port", default_value = "y")]
        output_port: String,
        /// Noise port(s) for QND and DFS.
        #[arg(long = "noise-port")]
        noise_port: Vec<String>,
        /// Output field port(s) for DFS.
        #[arg(long = "field-port")]
        field_port: Vec<String>,
        /// Restrict QND/DFS to the first N state coordinates.
        #[arg(long = "restrict-dim")]
        restrict_dim: Option<usize>,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Close a loop and print the resulting model.
    Closedloop {
        plant: PathBuf,
        controller: PathBuf,
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Noise spectrum as CSV.
    Spectrum {
        path: PathBuf,
        #[arg(long, default_value = "y")]
        output: String,
        #[arg(long = "omega-min", default_value_t = 1e-3)]
        omega_min: f64,
        #[arg(long = "omega-max", default_value_t = 1e1)]
        omega_max: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// `PORT:r`, e.g. `Q:1`.
        #[arg(long)]
        squeeze: Vec<String>,
        /// `m,L`: refer the output to strain and add the SQL column.
        #[arg(long)]
        sql: Option<String>,
        /// Probe strength used by the strain normalization.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Randomized no-go check with classical measurement feedback.
    Nogo {
        path: PathBuf,
        #[arg(long)]
        goal: String,
        #[arg(long)]
        scheme: String,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit a built-in example system.
    Scenario {
        name: String,
        /// `key=value` parameter override.
        #[arg(long = "param")]
        param: Vec<String>,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Inconsistent(_) | Error::Singular { .. } => 3,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn user_error(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn read(path: &Path) -> Result<(String, String), Failure> {
    let bytes = std::fs::read(path).map_err(|e| user_error(format!("{}: {e}", path.display())))?;
    let hash: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let text = String::from_utf8(bytes).map_err(|_| user_error(format!("{}: not UTF-8", path.display())))?;
    Ok((text, hash))
}

fn tolerances(tol: Option<f64>) -> Result<Tolerances, Failure> {
    let mut t = Tolerances::default();
    if let Some(x) = tol {
        if !(x > 0.0 && x.is_finite()) {
            return Err(user_error(format!("tolerance must be positive, got {x}")));
        }
        t.markov_rel = x;
    }
    Ok(t)
}

#[derive(Serialize)]
struct PortSummary {
    name: String,
    width: usize,
}

#[derive(Serialize)]
struct SystemSummary {
    state_dim: usize,
    modes: Option<usize>,
    channels: Option<usize>,
    inputs: Vec<PortSummary>,
    outputs: Vec<PortSummary>,
}

#[derive(Serialize)]
struct SubspaceSummary {
    controllable: BTreeMap<String, usize>,
    observable: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct VerdictEntry {
    inputs: Vec<String>,
    output: Vec<String>,
    #[serde(flatten)]
    verdict: GoalVerdict,
}

#[derive(Serialize)]
struct Provenance {
    input_sha256: String,
    tool_version: &'static str,
    tolerances: Tolerances,
}

#[derive(Serialize)]
struct AnalysisReport {
    system: SystemSummary,
    subspaces: SubspaceSummary,
    verdicts: Vec<VerdictEntry>,
    provenance: Provenance,
}

fn ports(list: &[qlin::Port]) -> Vec<PortSummary> {
    list.iter().map(|p| PortSummary { name: p.name.clone(), width: p.width }).collect()
}

fn present<'a>(model: &StateSpaceModel, names: &'a [String], input: bool) -> Vec<&'a str> {
    names
        .iter()
        .map(String::as_str)
        .filter(|n| if input { model.has_input(n) } else { model.has_output(n) })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    path: &Path,
    goal: &str,
    ba_port: Vec<String>,
    output_port: String,
    noise_port: Vec<String>,
    field_port: Vec<String>,
    restrict_dim: Option<usize>,
    format: &str,
    tol: Tolerances,
) -> Result<String, Failure> {
    let (text, hash) = read(path)?;
    let goals: Vec<Goal> = match goal {
        "all" => vec![Goal::Bae, Goal::Qnd, Goal::Dfs],
        g => vec![g.parse()?],
    };
    let (model, modes, channels, default_ba) = match io::parse_model(&text)? {
        ModelDoc::System(sys) => {
            let ba = sys.ba_ports();
            (sys.to_state_space()?, Some(sys.modes()), Some(sys.channel_count()), ba)
        }
        ModelDoc::StateSpace(m) => (m, None, None, vec!["P".to_string()]),
    };
    let n = model.state_dim();
    let restrict = match restrict_dim {
        Some(k) if k > n => return Err(user_error(format!("restriction {k} exceeds state dimension {n}"))),
        Some(k) => Some(Subspace::coordinate_block(n, 0, k)),
        None => None,
    };
    for p in ba_port.iter().chain(&noise_port) {
        model.input(p)?;
    }
    for p in field_port.iter() {
        model.output(p)?;
    }
    let ba = if ba_port.is_empty() { default_ba } else { ba_port };
    let noise = if noise_port.is_empty() { vec!["W".to_string()] } else { noise_port };
    let fields = if field_port.is_empty() { vec!["Wout".to_string()] } else { field_port };
    // Systems without measured channels have no `y`; fall back to the field.
    let meas = if model.has_output(&output_port) { output_port } else { "Wout".to_string() };
    model.output(&meas)?;

    let mut controllable = BTreeMap::new();
    for p in model.inputs() {
        controllable.insert(p.name.clone(), controllable_subspace(&model, &[&p.name])?.rank());
    }
    let mut observable = BTreeMap::new();
    for p in model.outputs() {
        observable.insert(p.name.clone(), observable_subspace(&model, &[&p.name])?.rank());
    }

    let mut verdicts = Vec::new();
    for g in goals {
        let entry = match g {
            Goal::Bae => {
                let mut ins = present(&model, &ba, true);
                if ins.is_empty() {
                    ins = vec!["W"];
                }
                let v = check_bae(&model, &ins, &meas, &tol)?;
                VerdictEntry { inputs: ins.iter().map(|s| s.to_string()).collect(), output: vec![meas.clone()], verdict: v }
            }
            Goal::Qnd => {
                let ins: Vec<&str> = noise.iter().map(String::as_str).collect();
                let v = find_qnd(&model, &ins, &meas, restrict.as_ref(), &tol)?;
                VerdictEntry { inputs: noise.clone(), output: vec![meas.clone()], verdict: v }
            }
            Goal::Dfs => {
                let ins: Vec<&str> = noise.iter().map(String::as_str).collect();
                let outs: Vec<&str> = fields.iter().map(String::as_str).collect();
                let v = find_dfs(&model, &ins, &outs, restrict.as_ref(), &tol)?;
                VerdictEntry { inputs: noise.clone(), output: fields.clone(), verdict: v }
            }
        };
        verdicts.push(entry);
    }
    let report = AnalysisReport {
        system: SystemSummary { state_dim: n, modes, channels, inputs: ports(model.inputs()), outputs: ports(model.outputs()) },
        subspaces: SubspaceSummary { controllable, observable },
        verdicts,
        provenance: Provenance { input_sha256: hash, tool_version: env!("CARGO_PKG_VERSION"), tolerances: tol },
    };
    let out = match format {
        "json" => serde_json::to_string_pretty(&report).expect("report serializes"),
        "text" => render_text(&report),
        f => return Err(user_error(format!("unknown format `{f}` (json or text)"))),
    };
    if let Some(bad) = report.verdicts.iter().find(|v| !v.verdict.method_agreement) {
        return Err(Failure {
            code: 3,
            msg: format!(
                "{out}\nnumerical inconsistency: {} verdict routes disagree (geometric dim {}, Markov dim {})",
                bad.verdict.goal, bad.verdict.geometric_dim, bad.verdict.markov_dim
            ),
        });
    }
    Ok(out)
}

fn render_text(r: &AnalysisReport) -> String {
    let mut s = format!("state dimension {}\n", r.system.state_dim);
    for v in &r.verdicts {
        let g = &v.verdict;
        s += &format!(
            "{}: {} ({} -> {}; residual {:.3e}, dim {}, routes {})\n",
            g.goal,
            if g.achieved { "achieved" } else { "not achieved" },
            v.inputs.join("+"),
            v.output.join("+"),
            g.residual,
            g.geometric_dim,
            if g.method_agreement { "agree" } else { "DISAGREE" }
        );
        for w in &g.witnesses {
            let parts: Vec<String> = w.iter().map(|x| format!("{x:.16e}")).collect();
            s += &format!("  witness [{}]\n", parts.join(", "));
        }
    }
    s += &format!("input sha256 {}\n", r.provenance.input_sha256);
    s
}

fn cmd_closedloop(plant: &Path, controller: &Path, scheme: Option<String>) -> Result<String, Failure> {
    let (ptext, _) = read(plant)?;
    let (ctext, _) = read(controller)?;
    let sys = io::parse_system(&ptext)?;
    let spec = io::parse_controller(&ctext, &sys)?;
    let declared = match &spec {
        ControllerSpec::Classical { scheme, .. } => scheme.to_string(),
        ControllerSpec::Quantum(QuantumController::Type1 { .. }) => "cf1".into(),
        ControllerSpec::Quantum(QuantumController::Type2 { .. }) => "cf2".into(),
    };
    if let Some(s) = scheme {
        if !s.eq_ignore_ascii_case(&declared) {
            return Err(user_error(format!("--scheme {s} does not match the controller file ({declared})")));
        }
    }
    match spec {
        ControllerSpec::Classical { scheme, ctrl } => {
            let splits = plant_splits(&sys, scheme)?;
            Ok(io::model_to_json(&close_loop(&sys, &ctrl, scheme, &splits)?))
        }
        ControllerSpec::Quantum(q @ QuantumController::Type1 { .. }) => Ok(io::system_to_json(&cf_type1(&sys, &q)?)),
        ControllerSpec::Quantum(q @ QuantumController::Type2 { .. }) => Ok(io::system_to_json(&cf_type2(&sys, &q)?)),
    }
}

fn parse_pair(s: &str, sep: char, what: &str) -> Result<(String, f64), Failure> {
    let (k, v) = s.split_once(sep).ok_or_else(|| user_error(format!("{what}: expected `key{sep}value`, got `{s}`")))?;
    let x: f64 = v.trim().parse().map_err(|_| user_error(format!("{what}: `{v}` is not a number")))?;
    Ok((k.trim().to_string(), x))
}

#[allow(clippy::too_many_arguments)]
fn cmd_spectrum(
    path: &Path,
    output: &str,
    omega_min: f64,
    omega_max: f64,
    points: usize,
    squeeze: Vec<String>,
    sql: Option<String>,
    lambda: f64,
) -> Result<String, Failure> {
    if !(omega_min > 0.0) || !(omega_max >= omega_min) || !omega_max.is_finite() {
        return Err(Error::Domain(format!("frequency range must satisfy 0 < min ≤ max, got [{omega_min}, {omega_max}]")).into());
    }
    let (text, _) = read(path)?;
    let per_channel = squeeze.iter().any(|s| s.split(':').next().is_some_and(|p| p.contains('.')));
    let (model, mut vars): (StateSpaceModel, NoiseVariances) = match io::parse_model(&text)? {
        ModelDoc::System(sys) => {
            let v = if per_channel { xfer::vacuum_quadratures(&sys) } else { xfer::vacuum_partition(&sys) };
            (sys.to_state_space()?, v)
        }
        ModelDoc::StateSpace(m) => {
            let v = if m.has_input("Q") && m.has_input("P") && !m.has_input("W") {
                xfer::vacuum(&["Q", "P"])
            } else if squeeze.is_empty() {
                xfer::vacuum(&["W"])
            } else {
                xfer::vacuum(&["Q", "P"])
            };
            (m, v)
        }
    };
    for s in &squeeze {
        let (port, r) = parse_pair(s, ':', "--squeeze")?;
        xfer::squeeze(&mut vars, &port, r)?;
    }
    let omegas = xfer::logspace(omega_min, omega_max, points);
    if points > 1 && omega_max == omega_min {
        return Err(user_error("a single frequency needs --points 1"));
    }
    let csv = match sql {
        Some(spec) => {
            let (m, l) = spec
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
                .ok_or_else(|| user_error(format!("--sql expects `m,L`, got `{spec}`")))?;
            let reference = xfer::sql_curve(m, l, &omegas)?;
            let chain = xfer::normalized_gw_signal(&model, output, GwParams { lambda, length: l, mass: m })?;
            chain.spectrum(&vars, &omegas)?.to_csv(Some(&reference))
        }
        None => {
            let nm = xfer::NoiseModel::new(&model, output, &vars)?;
            let values = omegas.iter().map(|&w| nm.power(w)).collect::<qlin::Result<Vec<_>>>()?;
            xfer::SpectrumCurve::new(omegas, values, BTreeMap::new())?.to_csv(None)
        }
    };
    Ok(csv)
}

fn cmd_nogo(path: &Path, goal: &str, scheme: &str, trials: usize, seed: u64, tol: Tolerances) -> Result<String, Failure> {
    let (text, _) = read(path)?;
    let sys = io::parse_system(&text)?;
    let mut report = verify_nogo(&sys, goal.parse()?, scheme.parse()?, trials, seed, &tol)?;
    if let Some(stem) = path.file_stem() {
        report.plant_id = stem.to_string_lossy().into_owned();
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if report.violations > 0 || report.disagreements > 0 {
        return Err(Failure {
            code: 3,
            msg: format!("{json}\nno-go check found {} violation(s), {} disagreement(s)", report.violations, report.disagreements),
        });
    }
    Ok(json)
}

fn cmd_scenario(name: &str, params: Vec<String>) -> Result<String, Failure> {
    let mut overrides = BTreeMap::new();
    for p in &params {
        let (k, v) = parse_pair(p, '=', "--param")?;
        overrides.insert(k, v);
    }
    Ok(io::system_to_json(&qlin::scenarios::by_name(name, &overrides)?))
}

fn run(cli: Cli) -> Result<String, Failure> {
    let tol = tolerances(cli.tol)?;
    match cli.cmd {
        Cmd::Analyze { path, goal, ba_port, output_port, noise_port, field_port, restrict_dim, format } => {
            cmd_analyze(&path, &goal, ba_port, output_port, noise_port, field_port, restrict_dim, &format, tol)
        }
        Cmd::Closedloop { plant, controller, scheme } => cmd_closedloop(&plant, &controller, scheme),
        Cmd::Spectrum { path, output, omega_min, omega_max, points, squeeze, sql, lambda } => {
            cmd_spectrum(&path, &output, omega_min, omega_max, points, squeeze, sql, lambda)
        }
        Cmd::Nogo { path, goal, scheme, trials, seed } => cmd_nogo(&path, &goal, &scheme, trials, seed, tol),
        Cmd::Scenario { name, param } => cmd_scenario(&name, param),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let mut stdout = std::io::stdout().lock();
            let _ = if out.ends_with('\n') { write!(stdout, "{out}") } else { writeln!(stdout, "{out}") };
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
