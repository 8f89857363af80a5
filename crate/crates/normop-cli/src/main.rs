//! Command-line front end: spectral decomposition, theory membership,
//! model comparison, type distances, independence, limits, functional
//! calculus, perturbation bounds, and type nets — one JSON report per run.
//!
//! Exit codes: 0 when the checked property holds (or the computation
//! succeeds), 1 when a well-formed input fails the property, 2 for usage
//! and input errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use normop::Complex64;
use serde_json::{json, Value};

use normop::calculus::{builtin_map, functional_calculus, mobius_pole_check, separated_projection};
use normop::equivalence::{
    aue_align, axiom_residuals, limit_theory, perturbation_distance, spectrally_equivalent,
    TheoryDescriptor,
};
use normop::independence::indep;
use normop::linalg::{decompose_normal, ComplexMatrix};
use normop::measure::hellinger_sq;
use normop::model::{Multiplicity, Region, SpectralModel};
use normop::typespace::{epsilon_net, type_distance, type_of, TypeDescriptor};
use normop::Error as LibError;

#[derive(Parser)]
#[command(name = "normop", version, about = "Spectral models of a bounded normal operator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Numeric tolerance for property checks.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,

    /// Print a one-line human summary to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    /// Seed for sampling-based checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Also write the JSON report to this path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decompose a numeric normal matrix into a spectral model.
    Decompose {
        /// Matrix JSON: {"rows", "cols", "re": [...], "im": [...]}.
        matrix: PathBuf,
    },
    /// Evaluate the theory axioms in a model at a net resolution.
    Axioms {
        model: PathBuf,
        theory: PathBuf,
        /// Net resolution for perfect-part and multiplicity checks.
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
        /// Optional JSON list of probe points [{"re", "im"}, ...].
        #[arg(long)]
        probes: Option<PathBuf>,
    },
    /// Spectral equivalence of two models within the tolerance.
    Equiv { a: PathBuf, b: PathBuf },
    /// Bottleneck coordinate alignment between two models.
    Align { a: PathBuf, b: PathBuf },
    /// Limit theory of a convergent model sequence.
    Limit {
        /// Model files in sequence order.
        #[arg(required = true, num_args = 1..)]
        models: Vec<PathBuf>,
        /// Comma-separated ball radii, strictly decreasing.
        #[arg(long, default_value = "1.0,0.5,0.25,0.125")]
        schedule: String,
        /// Hausdorff tail tolerance for accepting convergence.
        #[arg(long, default_value_t = 0.1)]
        conv_tol: f64,
    },
    /// Distance between two 1-type descriptors.
    TypeDist { p: PathBuf, q: PathBuf },
    /// Forking-independence test: tuple A vs parameters C over B.
    Indep {
        model: PathBuf,
        /// JSON array of vectors (the tuple).
        a: PathBuf,
        /// JSON array of vectors (the base parameters).
        b: PathBuf,
        /// JSON array of vectors (the side parameters).
        c: PathBuf,
    },
    /// Apply a named spectrum map to a model.
    Calc {
        model: PathBuf,
        /// square | modulus-squared | mobius | scale | bump.
        #[arg(long)]
        map: String,
        /// Comma-separated real parameters (mobius: re,im of a,b,c,d).
        #[arg(long)]
        params: Option<String>,
        /// For bump: JSON {"inside": region, "outside": region}.
        #[arg(long)]
        regions: Option<PathBuf>,
        /// For bump: required separation between the regions' atoms.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Upper bound on the perturbation distance between two 1-types.
    Pert {
        p: PathBuf,
        q: PathBuf,
        model: PathBuf,
    },
    /// Finite eps-net of 1-types over parameters, with a sampled coverage check.
    Net {
        model: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Norm cap for the sampled vectors.
        #[arg(long, default_value_t = 1.0)]
        cap: f64,
        /// Optional JSON array of parameter vectors.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Number of sampled types in the coverage check.
        #[arg(long, default_value_t = 200)]
        samples: u32,
    },
}

fn main() {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(&cli) {
        Ok((report, exit_code, summary)) => {
            emit(&report, out.as_deref());
            if cli.verbose {
                eprintln!("{summary}");
            }
            std::process::exit(exit_code);
        }
        Err(err) => {
            if let Some(lib) = err.downcast_ref::<LibError>() {
                if lib.is_verdict() {
                    let report = json!({
                        "v": 1,
                        "error": { "kind": kind(lib), "message": lib.to_string() },
                    });
                    emit(&report, out.as_deref());
                    if cli.verbose {
                        eprintln!("failed: {lib}");
                    }
                    std::process::exit(1);
                }
            }
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn emit(report: &Value, out: Option<&Path>) {
    let mut text = serde_json::to_string_pretty(report).expect("report serialization");
    text.push('\n');
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, &text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            std::process::exit(2);
        }
    }
    let mut stdout = std::io::stdout();
    stdout.write_all(text.as_bytes()).expect("stdout");
    stdout.flush().expect("stdout flush");
}

/// Stable machine-readable tag for a verdict error.
fn kind(e: &LibError) -> &'static str {
    match e {
        LibError::NotNormal { .. } => "not-normal",
        LibError::NotHermitian { .. } => "not-hermitian",
        LibError::NoConvergence { .. } => "no-convergence",
        LibError::Accuracy { .. } => "accuracy",
        LibError::Separation { .. } => "separation",
        LibError::NoAlignment { .. } => "no-alignment",
        LibError::Divergence { .. } => "divergence",
        LibError::NetBudget { .. } => "net-budget",
        LibError::Budget { .. } => "budget",
        LibError::FiniteResidual { .. } => "finite-residual",
        _ => "error",
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display()))
}

/// Loads a data file that may be either the bare object or a report
/// wrapping it under the given key (so reports can be piped back in).
fn load_wrapped<T: serde::de::DeserializeOwned>(path: &Path, key: &str) -> anyhow::Result<T> {
    let text = read_text(path)?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display()))?;
    let inner = match &value {
        Value::Object(map) if map.contains_key("v") && map.contains_key(key) => &map[key],
        _ => &value,
    };
    serde_json::from_value(inner.clone())
        .with_context(|| format!("malformed {key} JSON in {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<SpectralModel> {
    load_wrapped(path, "model")
}

fn load_vectors(path: &Path) -> anyhow::Result<Vec<normop::model::ModelVector>> {
    load_json(path)
}

#[derive(serde::Deserialize)]
struct PointRepr {
    re: f64,
    im: f64,
}

fn complex_value(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

fn parse_schedule(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .with_context(|| format!("bad schedule entry '{tok}'"))
        })
        .collect()
}

fn parse_params(s: Option<&str>) -> anyhow::Result<Vec<f64>> {
    match s {
        None => Ok(vec![]),
        Some(s) => s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad parameter '{tok}'"))
            })
            .collect(),
    }
}

fn run(cli: &Cli) -> anyhow::Result<(Value, i32, String)> {
    match &cli.cmd {
        Cmd::Decompose { matrix } => decompose_cmd(matrix, cli.tol),
        Cmd::Axioms {
            model,
            theory,
            resolution,
            probes,
        } => axioms_cmd(model, theory, *resolution, probes.as_deref()),
        Cmd::Equiv { a, b } => equiv_cmd(a, b, cli.tol),
        Cmd::Align { a, b } => align_cmd(a, b),
        Cmd::Limit {
            models,
            schedule,
            conv_tol,
        } => limit_cmd(models, schedule, *conv_tol),
        Cmd::TypeDist { p, q } => type_dist_cmd(p, q),
        Cmd::Indep { model, a, b, c } => indep_cmd(model, a, b, c, cli.tol),
        Cmd::Calc {
            model,
            map,
            params,
            regions,
            eps,
        } => calc_cmd(model, map, params.as_deref(), regions.as_deref(), *eps),
        Cmd::Pert { p, q, model } => pert_cmd(p, q, model),
        Cmd::Net {
            model,
            eps,
            cap,
            params,
            samples,
        } => net_cmd(model, *eps, *cap, params.as_deref(), *samples, cli.seed),
    }
}

fn decompose_cmd(matrix: &Path, tol: f64) -> anyhow::Result<(Value, i32, String)> {
    let t: ComplexMatrix = load_json(matrix)?;
    let dec = decompose_normal(&t, tol)?;

    // Group repeated eigenvalues (canonical rounding) into blocks.
    let mut groups: std::collections::BTreeMap<normop::common::AtomKey, (Complex64, u32)> =
        Default::default();
    for &ev in &dec.eigenvalues {
        let e = groups.entry(normop::common::atom_key(ev)).or_insert((ev, 0));
        e.1 += 1;
    }
    let spec: Vec<(Complex64, Multiplicity)> = groups
        .into_values()
        .map(|(z, c)| (z, Multiplicity::Finite(c)))
        .collect();
    let model = SpectralModel::build(&spec, "decomposed")?;

    let max_abs = dec
        .eigenvalues
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if max_abs > 1.0 + 1e-12 {
        eprintln!("warning: spectrum exceeds the closed unit disk (max |lambda| = {max_abs})");
    }

    let n = t.rows();
    let gram = dec.unitary.adjoint().mul(&dec.unitary)?;
    let eye = ComplexMatrix::identity(n);
    let unitary_defect = gram.sub(&eye)?.max_norm();
    let recon_residual = dec.reconstruct()?.sub(&t)?.max_norm();

    let report = json!({
        "v": 1,
        "eigenvalues": dec.eigenvalues.iter().map(|&z| complex_value(z)).collect::<Vec<_>>(),
        "cluster_tolerance": dec.cluster_tolerance,
        "unitary": serde_json::to_value(&dec.unitary)?,
        "checks": { "unitary_defect": unitary_defect, "reconstruction_residual": recon_residual },
        "model": serde_json::to_value(&model)?,
    });
    let summary = format!(
        "decompose: {} eigenvalues, reconstruction residual {recon_residual:.3e}",
        dec.eigenvalues.len()
    );
    Ok((report, 0, summary))
}

fn axioms_cmd(
    model: &Path,
    theory: &Path,
    resolution: f64,
    probes: Option<&Path>,
) -> anyhow::Result<(Value, i32, String)> {
    let m = load_model(model)?;
    let th: TheoryDescriptor = load_wrapped(theory, "theory")?;
    let extra: Vec<Complex64> = match probes {
        None => vec![],
        Some(p) => load_json::<Vec<PointRepr>>(p)?
            .into_iter()
            .map(|p| Complex64::new(p.re, p.im))
            .collect(),
    };
    let rep = axiom_residuals(&m, &th, resolution, &extra)?;
    let code = if rep.satisfied { 0 } else { 1 };
    let summary = format!("axioms: satisfied={} at resolution {resolution}", rep.satisfied);
    let mut value = serde_json::to_value(&rep)?;
    value["v"] = json!(1);
    Ok((value, code, summary))
}

fn equiv_cmd(a: &Path, b: &Path, tol: f64) -> anyhow::Result<(Value, i32, String)> {
    let ma = load_model(a)?;
    let mb = load_model(b)?;
    let rep = spectrally_equivalent(&ma, &mb, tol);
    let code = if rep.equivalent { 0 } else { 1 };
    let summary = format!(
        "equiv: equivalent={} bottleneck={:.3e}",
        rep.equivalent, rep.bottleneck
    );
    let mut value = serde_json::to_value(&rep)?;
    value["v"] = json!(1);
    Ok((value, code, summary))
}

fn align_cmd(a: &Path, b: &Path) -> anyhow::Result<(Value, i32, String)> {
    let ma = load_model(a)?;
    let mb = load_model(b)?;
    let cert = aue_align(&ma, &mb)?;
    let summary = format!("align: residual={:.3e}", cert.residual);
    let mut value = serde_json::to_value(&cert)?;
    value["v"] = json!(1);
    Ok((value, 0, summary))
}

fn limit_cmd(models: &[PathBuf], schedule: &str, conv_tol: f64) -> anyhow::Result<(Value, i32, String)> {
    let seq: Vec<SpectralModel> = models
        .iter()
        .map(|p| load_model(p))
        .collect::<anyhow::Result<_>>()?;
    let radii = parse_schedule(schedule)?;
    let (theory, rep) = limit_theory(&seq, &radii, conv_tol)?;
    let report = json!({
        "v": 1,
        "theory": serde_json::to_value(&theory)?,
        "tail_variation": rep.tail_variation,
        "atoms": serde_json::to_value(&rep.atoms)?,
    });
    let summary = format!(
        "limit: {} atoms, tail variation {:.3e}",
        theory.atoms.len(),
        rep.tail_variation
    );
    Ok((report, 0, summary))
}

fn type_dist_cmd(p: &Path, q: &Path) -> anyhow::Result<(Value, i32, String)> {
    let tp: TypeDescriptor = load_wrapped(p, "type")?;
    let tq: TypeDescriptor = load_wrapped(q, "type")?;
    let d = type_distance(&tp, &tq)?;
    let base_gap = tp.base[0].dist(&tq.base[0])?;
    let hell = hellinger_sq(tp.residual_measure()?, tq.residual_measure()?)?;
    let report = json!({
        "v": 1,
        "distance": d,
        "base_gap": base_gap,
        "hellinger_sq": hell,
    });
    Ok((report, 0, format!("type-dist: {d}")))
}

fn indep_cmd(
    model: &Path,
    a: &Path,
    b: &Path,
    c: &Path,
    tol: f64,
) -> anyhow::Result<(Value, i32, String)> {
    let m = load_model(model)?;
    let va = load_vectors(a)?;
    let vb = load_vectors(b)?;
    let vc = load_vectors(c)?;
    let rep = indep(&m, &va, &vb, &vc, tol)?;
    let code = if rep.independent { 0 } else { 1 };
    let report = json!({
        "v": 1,
        "independent": rep.independent,
        "residuals": rep.residuals,
        "tol": rep.tol,
    });
    let summary = format!("indep: independent={}", rep.independent);
    Ok((report, code, summary))
}

#[derive(serde::Deserialize)]
struct RegionPair {
    inside: Region,
    outside: Region,
}

fn calc_cmd(
    model: &Path,
    map: &str,
    params: Option<&str>,
    regions: Option<&Path>,
    eps: Option<f64>,
) -> anyhow::Result<(Value, i32, String)> {
    let m = load_model(model)?;
    if map == "bump" {
        let regions =
            regions.ok_or_else(|| anyhow::anyhow!("bump needs --regions <file> with inside/outside"))?;
        let eps = eps.ok_or_else(|| anyhow::anyhow!("bump needs --eps <separation>"))?;
        let pair: RegionPair = load_json(regions)?;
        let sp = separated_projection(&m, &pair.inside, &pair.outside, eps)?;
        // Indicator of the inside part, keyed by canonical atom identity.
        let member: std::collections::BTreeMap<normop::common::AtomKey, bool> = m
            .blocks()
            .iter()
            .zip(&sp.membership)
            .map(|(b, &is_in)| (normop::common::atom_key(b.lambda), is_in))
            .collect();
        let f = move |z: Complex64| {
            let inside = member
                .get(&normop::common::atom_key(z))
                .copied()
                .unwrap_or(false);
            Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
        };
        let out_model = functional_calculus(&m, f, &format!("{}.bump", m.label()))?;
        let report = json!({
            "v": 1,
            "map": "bump",
            "model": serde_json::to_value(&out_model)?,
            "projector": sp.projector.coeffs.iter().map(|&c| complex_value(c)).collect::<Vec<_>>(),
            "witness": serde_json::to_value(&sp.witness)?,
        });
        let summary = format!(
            "calc bump: witness degree {} error {:.3e}",
            sp.witness.degree, sp.witness.error
        );
        return Ok((report, 0, summary));
    }

    let canonical = match map {
        "modulus-squared" => "modsq",
        other => other,
    };
    let ps = parse_params(params)?;
    if canonical == "mobius" && ps.len() == 8 {
        mobius_pole_check(
            &m,
            Complex64::new(ps[4], ps[5]),
            Complex64::new(ps[6], ps[7]),
        )?;
    }
    let f = builtin_map(canonical, &ps)?;
    let out_model = functional_calculus(&m, f, &format!("{}.{}", m.label(), canonical))?;
    let report = json!({
        "v": 1,
        "map": canonical,
        "model": serde_json::to_value(&out_model)?,
    });
    let summary = format!("calc {}: {} blocks", canonical, out_model.blocks().len());
    Ok((report, 0, summary))
}

fn pert_cmd(p: &Path, q: &Path, model: &Path) -> anyhow::Result<(Value, i32, String)> {
    let tp: TypeDescriptor = load_wrapped(p, "type")?;
    let tq: TypeDescriptor = load_wrapped(q, "type")?;
    let m = load_model(model)?;
    let rep = perturbation_distance(&tp, &tq, &m)?;
    let mut value = serde_json::to_value(&rep)?;
    value["v"] = json!(1);
    let summary = format!("pert: bound {:.6e}", rep.bound);
    Ok((value, 0, summary))
}

fn net_cmd(
    model: &Path,
    eps: f64,
    cap: f64,
    params: Option<&Path>,
    samples: u32,
    seed: u64,
) -> anyhow::Result<(Value, i32, String)> {
    let m = load_model(model)?;
    let params: Vec<normop::model::ModelVector> = match params {
        None => vec![],
        Some(p) => load_vectors(p)?,
    };
    let label = if params.is_empty() { "" } else { "B" };
    let net = epsilon_net(&m, &params, label, eps, cap)?;

    // Sampled coverage check: random vectors of norm <= cap must land
    // within eps of the net.
    let mut rng = normop::testkit::rng(seed);
    let mut max_gap = 0.0f64;
    for _ in 0..samples {
        let raw = normop::testkit::random_vector(&m, &mut rng, false);
        let norm = raw.norm();
        let target = normop::testkit::uniform(&mut rng, 0.0, cap);
        let v = if norm > 1e-12 {
            raw.scale(Complex64::new(target / norm, 0.0))
        } else {
            raw
        };
        let t = type_of(&m, &[v], &params, label)?;
        let gap = net
            .iter()
            .map(|n| type_distance(&t, n).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        max_gap = max_gap.max(gap);
    }
    let covered = max_gap <= eps;
    let report = json!({
        "v": 1,
        "size": net.len(),
        "eps": eps,
        "cap": cap,
        "samples": samples,
        "max_gap": max_gap,
        "covered": covered,
    });
    let code = if covered { 0 } else { 1 };
    let summary = format!("net: {} types, sampled max gap {max_gap:.4}", net.len());
    Ok((report, code, summary))
}
