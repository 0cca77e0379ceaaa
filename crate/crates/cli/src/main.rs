use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use drumkit::congruence::{exit_code_for, EXIT_CONGRUENT, EXIT_INCONSISTENT};
use drumkit::eigen::{solve_eigs_with, weyl_constant, weyl_fit_values, EigOptions, DEFAULT_SEED};
use drumkit::fem::{build_laplacian, BcKind, BoundaryFunction, NodalSpace, SpaceKind};
use drumkit::geometry::{build_propeller_pair, CopyLayout, Triangle};
use drumkit::mesh::{mesh_layout, refine, Mesh};
use drumkit::pipeline::{analyze, AnalysisOptions};
use drumkit::transplant::{find_transplantation_matrix_with, lift_transplantation, spectral_intertwiner, OperatorMatrix};
use drumkit::DrumError;

#[derive(Parser)]
#[command(name = "drumkit", version, about = "Isospectral drums, transplantation and congruence analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the propeller pair from a template triangle and search its transplantation.
    Pair {
        /// JSON object {"a": [x, y], "b": [x, y], "c": [x, y]}.
        template: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Eigenvalues on a mesh or copy layout over several refinement levels.
    Eig {
        /// Mesh JSON or layout JSON.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "dirichlet")]
        kind: Kind,
        /// Constant Robin coefficient.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Finest refinement level; the two levels below it are solved too.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Disjointness test, factorization, decomposition and congruence decision.
    Analyze {
        /// Operator in Matrix Market format, rows on mesh2 and columns on mesh1.
        operator: PathBuf,
        mesh1: PathBuf,
        mesh2: PathBuf,
        #[arg(long, default_value_t = drumkit::opanalysis::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = drumkit::opanalysis::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Weyl-law table and fitted dimension and volume from a spectrum CSV.
    Weyl {
        spectrum: PathBuf,
        /// Known area, to report the ratio against the Weyl constant.
        #[arg(long)]
        area: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the meshes of the propeller pair and an operator between them.
    Transplant {
        template: PathBuf,
        #[arg(long, value_enum, default_value = "lift")]
        operator: OperatorKind,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        /// Eigenpairs used by the spectral intertwiner.
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Dirichlet,
    Neumann,
    Robin,
}

impl From<Kind> for BcKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Dirichlet => BcKind::Dirichlet,
            Kind::Neumann => BcKind::Neumann,
            Kind::Robin => BcKind::Robin,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorKind {
    /// Nodal lift of the 7×7 transplantation matrix.
    Lift,
    /// Maps the first k eigenfunctions of one drum onto the other's.
    Spectral,
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("DRUMKIT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<DrumError>().map_or(EXIT_INCONSISTENT, exit_code_for);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<i32> {
    match cmd {
        Command::Pair { template, out } => cmd_pair(&template, &out),
        Command::Eig {
            input,
            kind,
            beta,
            k,
            levels,
            tol,
            seed,
            out,
        } => cmd_eig(&input, kind.into(), beta, k, levels, tol, seed, &out),
        Command::Analyze {
            operator,
            mesh1,
            mesh2,
            seed,
            trials,
            out,
        } => cmd_analyze(&operator, &mesh1, &mesh2, seed, trials, &out),
        Command::Weyl { spectrum, area, out } => cmd_weyl(&spectrum, area, &out),
        Command::Transplant {
            template,
            operator,
            levels,
            k,
            tol,
            out,
        } => cmd_transplant(&template, operator, levels, k, tol, &out),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(dir: &Path, name: &str, body: &[u8]) -> anyhow::Result<()> {
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
}

fn out_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn read_template(path: &Path) -> anyhow::Result<Triangle> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing template {}", path.display()))
}

fn cmd_pair(template: &Path, out: &Path) -> anyhow::Result<i32> {
    let t = read_template(template)?;
    let (l1, l2) = build_propeller_pair(&t)?;
    let (tm, search) = find_transplantation_matrix_with(&l1, &l2, BcKind::Dirichlet, 3)?;
    out_dir(out)?;
    write(out, "layout1.json", serde_json::to_string_pretty(&l1)?.as_bytes())?;
    write(out, "layout2.json", serde_json::to_string_pretty(&l2)?.as_bytes())?;
    write(out, "transplant.json", tm.to_json()?.as_bytes())?;
    let mut log = search.log.join("\n");
    log.push_str(&format!(
        "\ncandidates {}\nsolutions {}\ndet {}\n",
        search.candidates,
        search.solutions.len(),
        tm.det()
    ));
    write(out, "search.log", log.as_bytes())?;
    println!("areas {:.6} {:.6}; {} transplantation(s)", l1.area(), l2.area(), search.solutions.len());
    Ok(EXIT_CONGRUENT)
}

/// Mesh at level `l`: a layout is meshed afresh, a mesh is refined `l` times.
enum Domain {
    Layout(CopyLayout),
    Mesh(Mesh),
}

impl Domain {
    fn load(path: &Path) -> anyhow::Result<Domain> {
        let s = read(path)?;
        if let Ok(l) = serde_json::from_str::<CopyLayout>(&s) {
            return Ok(Domain::Layout(l));
        }
        Ok(Domain::Mesh(Mesh::from_json(&s).with_context(|| format!("{} is neither a layout nor a mesh", path.display()))?))
    }

    fn at_level(&self, l: usize) -> anyhow::Result<Mesh> {
        Ok(match self {
            Domain::Layout(layout) => mesh_layout(layout, l)?.0,
            Domain::Mesh(m) => {
                let mut m = m.clone();
                for _ in 0..l {
                    m = refine(&m)?;
                }
                m
            }
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eig(input: &Path, kind: BcKind, beta: Option<f64>, k: usize, levels: usize, tol: f64, seed: u64, out: &Path) -> anyhow::Result<i32> {
    if k == 0 {
        bail!(DrumError::InvalidArgument("k must be at least 1".into()));
    }
    let beta = match (kind, beta) {
        (BcKind::Robin, Some(b)) => Some(BoundaryFunction::Constant(b)),
        (BcKind::Robin, None) => bail!(DrumError::BoundaryDataMissing("robin needs --beta".into())),
        _ => None,
    };
    let domain = Domain::load(input)?;
    let opts = EigOptions { seed, ..EigOptions::default() };
    let mut rows: Vec<Vec<(f64, f64)>> = Vec::new();
    let first = levels.saturating_sub(2);
    for l in first..=levels {
        let lap = build_laplacian(Arc::new(domain.at_level(l)?), kind, beta.clone())?;
        let kl = k.min(lap.n_dof());
        if kl == 0 {
            rows.push(Vec::new());
            continue;
        }
        let s = solve_eigs_with(&lap, kl, tol, &opts)?;
        rows.push(s.eigenvalues.iter().copied().zip(s.residuals.iter().copied()).collect());
    }
    out_dir(out)?;
    let mut csv = String::from("level,k,lambda,residual,order\n");
    for (i, level) in rows.iter().enumerate() {
        for (j, &(lam, res)) in level.iter().enumerate() {
            // observed order from three successive levels
            let order = if i >= 2 && j < rows[i - 1].len() && j < rows[i - 2].len() {
                let (a, b) = (rows[i - 2][j].0 - rows[i - 1][j].0, rows[i - 1][j].0 - lam);
                if a != 0.0 && b != 0.0 {
                    format!("{:.4}", (a / b).abs().log2())
                } else {
                    String::new()
                }
            } else {
                String::new()
            };
            csv.push_str(&format!("{},{},{:e},{:e},{}\n", first + i, j + 1, lam, res, order));
        }
    }
    write(out, "spectrum.csv", csv.as_bytes())?;
    if let Some(top) = rows.last() {
        let head: Vec<String> = top.iter().take(5).map(|(l, _)| format!("{l:.6}")).collect();
        println!("level {levels}: {}", head.join(" "));
    }
    Ok(EXIT_CONGRUENT)
}

fn cmd_analyze(operator: &Path, mesh1: &Path, mesh2: &Path, seed: u64, trials: usize, out: &Path) -> anyhow::Result<i32> {
    let m1 = Mesh::from_json(&read(mesh1)?)?;
    let m2 = Mesh::from_json(&read(mesh2)?)?;
    let file = fs::File::open(operator).with_context(|| format!("opening {}", operator.display()))?;
    let dims = market_dims(&read(operator)?)?;
    let src = space_for(&m1, dims.1).context("columns do not match mesh1")?;
    let dst = space_for(&m2, dims.0).context("rows do not match mesh2")?;
    let u = OperatorMatrix::read_matrix_market(BufReader::new(file), src, dst, "U")?.with_meshes(&m1, &m2);
    let opts = AnalysisOptions {
        trials,
        seed,
        ..AnalysisOptions::default()
    };
    let rep = analyze(&u, &m1, &m2, &opts);
    out_dir(out)?;
    write(out, "report.json", serde_json::to_string_pretty(&rep)?.as_bytes())?;
    if let Some(c) = &rep.congruence {
        println!("congruent: {}; criterion: {:?}; components: {}", c.congruent, c.criterion_fired, c.n_components);
    }
    if let Some(e) = &rep.error {
        eprintln!("{e}");
    }
    println!("exit {}", rep.exit_code);
    Ok(rep.exit_code)
}

/// Rows and columns from the Matrix Market size line.
fn market_dims(s: &str) -> anyhow::Result<(usize, usize)> {
    let line = s
        .lines()
        .find(|l| !l.starts_with('%') && !l.trim().is_empty())
        .ok_or_else(|| DrumError::Parse("empty Matrix Market file".into()))?;
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next()) {
        (Some(Ok(r)), Some(Ok(c))) => Ok((r, c)),
        _ => bail!(DrumError::Parse(format!("bad size line: {line}"))),
    }
}

/// All vertices or interior vertices, whichever has `n` entries.
fn space_for(m: &Mesh, n: usize) -> anyhow::Result<NodalSpace> {
    for kind in [SpaceKind::Full, SpaceKind::Dirichlet] {
        let s = NodalSpace::new(m, kind);
        if s.dim() == n {
            return Ok(s);
        }
    }
    bail!(DrumError::MeshMismatch(format!(
        "{n} rows/columns but the mesh has {} vertices, {} interior",
        m.n_vertices(),
        m.interior_vertex_ids().len()
    )))
}

/// Eigenvalues of the finest level when the CSV carries a level column.
fn spectrum_values(s: &str) -> anyhow::Result<Vec<f64>> {
    let mut lines = s.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').map(str::trim).collect(),
        None => bail!(DrumError::InsufficientData("empty spectrum file".into())),
    };
    let col = |name: &str| header.iter().position(|h| *h == name);
    let lam = col("lambda").ok_or_else(|| DrumError::Parse("spectrum CSV lacks a lambda column".into()))?;
    let mut rows = Vec::new();
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        let get = |i: usize| f.get(i).and_then(|v| v.trim().parse::<f64>().ok());
        let v = get(lam).ok_or_else(|| DrumError::Parse(format!("bad spectrum row: {l}")))?;
        let level = col("level").and_then(get).unwrap_or(0.0);
        rows.push((level, v));
    }
    let top = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(rows.into_iter().filter(|r| r.0 == top).map(|r| r.1).collect())
}

fn cmd_weyl(spectrum: &Path, area: Option<f64>, out: &Path) -> anyhow::Result<i32> {
    let mut values = spectrum_values(&read(spectrum)?)?;
    values.sort_by(f64::total_cmp);
    let fit = weyl_fit_values(&values)?;
    let half = fit.d_est as f64 / 2.0;
    out_dir(out)?;
    let mut csv = String::from("lambda,count,ratio\n");
    for (i, &l) in values.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let n = values.partition_point(|&v| v <= l).max(i + 1);
        csv.push_str(&format!("{:e},{},{:e}\n", l, n, n as f64 / l.powf(half)));
    }
    write(out, "weyl.csv", csv.as_bytes())?;
    let mut fit_json = serde_json::to_value(fit)?;
    let c = weyl_constant(fit.d_est);
    fit_json["weyl_constant"] = c.into();
    if let Some(a) = area {
        fit_json["expected_ratio"] = (c * a).into();
        fit_json["volume_rel_error"] = ((fit.vol_est - a) / a).into();
    }
    write(out, "weyl.json", serde_json::to_string_pretty(&fit_json)?.as_bytes())?;
    println!("d_est {} (d_raw {:.4}), vol_est {:.6}", fit.d_est, fit.d_raw, fit.vol_est);
    Ok(EXIT_CONGRUENT)
}

fn cmd_transplant(template: &Path, op: OperatorKind, levels: usize, k: usize, tol: f64, out: &Path) -> anyhow::Result<i32> {
    let t = read_template(template)?;
    let (l1, l2) = build_propeller_pair(&t)?;
    let (m1, nc1) = mesh_layout(&l1, levels)?;
    let (m2, nc2) = mesh_layout(&l2, levels)?;
    let u = match op {
        OperatorKind::Lift => {
            let (tm, _) = find_transplantation_matrix_with(&l1, &l2, BcKind::Dirichlet, 3)?;
            lift_transplantation(&tm, &nc1, &m1, &nc2, &m2)?
        }
        OperatorKind::Spectral => {
            let a1 = build_laplacian(Arc::new(m1.clone()), BcKind::Dirichlet, None)?;
            let a2 = build_laplacian(Arc::new(m2.clone()), BcKind::Dirichlet, None)?;
            let s1 = drumkit::eigen::solve_eigs(&a1, k, tol)?;
            let s2 = drumkit::eigen::solve_eigs(&a2, k, tol)?;
            spectral_intertwiner(&s1, &s2, &a1.mass, &a2.mass)?
        }
    };
    out_dir(out)?;
    write(out, "mesh1.json", m1.to_json()?.as_bytes())?;
    write(out, "mesh2.json", m2.to_json()?.as_bytes())?;
    let mut buf = Vec::new();
    u.write_matrix_market(&mut buf)?;
    write(out, "U.mtx", &buf)?;
    let mut so = std::io::stdout().lock();
    writeln!(so, "{}×{} operator, {} and {} vertices", u.nrows(), u.ncols(), m2.n_vertices(), m1.n_vertices())?;
    Ok(EXIT_CONGRUENT)
}
