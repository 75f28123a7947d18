use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use gelfand_core::branch::{BranchPoint, Eigenpair};
use gelfand_core::green::{Domain, GreenOracle, NumericGreen};
use gelfand_core::grid2d::Grid2D;
use gelfand_core::hamiltonian::{find_critical, CriticalOptions, Point};
use gelfand_core::harness::{emit, read_jsonl, run_study, write_csv, Format, HarnessError, StudyConfig};
use gelfand_core::solver1d::{amplitude_schedule, continue_radial, radial_step, Branch1dOptions};
use gelfand_core::solver2d::{continue_planar, Branch2dOptions, Eig2dOptions, Planar, Truncation};
use gelfand_core::vexpr::VExpr;

#[derive(Parser)]
#[command(name = "gelfand", version, about = "Blow-up branches and spectra of -Δv = λVe^v")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    #[value(name = "1d")]
    Radial,
    #[value(name = "2d")]
    Planar,
}

#[derive(Subcommand)]
enum Command {
    /// Green's function, its regular part and the Robin function at two points.
    Green {
        #[arg(long, default_value = "disk")]
        domain: Domain,
        #[arg(long, value_parser = parse_point)]
        x: Point,
        #[arg(long, value_parser = parse_point)]
        y: Point,
        /// Nodes per side for numeric (rectangle) Green's functions.
        #[arg(long, default_value_t = 129)]
        n: usize,
        /// Also write the regular part H(·, y) as a CSV grid.
        #[arg(long)]
        grid_csv: Option<PathBuf>,
    },
    /// Critical configuration of the m-point Hamiltonian with its constants.
    Hamiltonian {
        #[arg(long, default_value = "disk")]
        domain: Domain,
        #[arg(long = "V")]
        v: String,
        #[arg(long)]
        m: usize,
        /// CSV with one `x,y` row per starting point.
        #[arg(long)]
        starts: PathBuf,
        #[arg(long, default_value_t = 129)]
        n: usize,
    },
    /// Radial blow-up branch on the unit disk, one JSON record per point.
    Branch1d {
        #[arg(long = "V")]
        v: String,
        #[arg(long, default_value_t = 1.0)]
        s_min: f64,
        #[arg(long, default_value_t = 40.0)]
        s_max: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        /// Coarse cells; the fine grid has twice as many.
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Directory for `(r, w)` eigenfield CSVs, one file per point.
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// Two-dimensional branch through m anchor points.
    Branch2d {
        #[arg(long, default_value = "disk")]
        domain: Domain,
        #[arg(long = "V")]
        v: String,
        #[arg(long)]
        m: usize,
        /// CSV with one `x,y` row per peak, used to seed the critical search.
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long, default_value_t = 257)]
        n: usize,
        #[arg(long, default_value_t = 8.0)]
        s_min: f64,
        #[arg(long, default_value_t = 14.0)]
        s_max: f64,
        #[arg(long, default_value_t = 0.25)]
        step: f64,
        #[arg(long, default_value_t = 7)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Directory for `(x, y, v, w1, ...)` CSV grids, one file per point.
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// Linearized eigenvalues at one amplitude.
    Eigs {
        #[arg(long, default_value = "disk")]
        domain: Domain,
        #[arg(long = "V")]
        v: String,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 6)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Solver::Radial)]
        solver: Solver,
        /// Radial cells (1d) or nodes per side (2d).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Runs a study config and its checks; exit 0 on pass, 2 on any failure.
    Verify {
        config: PathBuf,
        /// Overrides the config's JSONL path.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        /// Overrides the config's CSV path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Summarizes a JSONL report and optionally flattens it to CSV.
    Report {
        input: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> Result<Point, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts[..] {
        [a, b] => Ok([
            a.parse().map_err(|e| format!("{a}: {e}"))?,
            b.parse().map_err(|e| format!("{b}: {e}"))?,
        ]),
        _ => Err(format!("expected `x,y`, got `{s}`")),
    }
}

fn read_points(path: &Path) -> Result<Vec<Point>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut pts = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}: expected two columns, got {}", path.display(), rec.len());
        }
        // a header row is allowed
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => pts.push([x, y]),
            _ if pts.is_empty() => continue,
            _ => bail!("{}: bad row {:?}", path.display(), rec),
        }
    }
    Ok(pts)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn oracle(domain: Domain, n: usize) -> Result<GreenOracle> {
    Ok(GreenOracle::for_domain(domain, n)?)
}

fn record_json(bp: &BranchPoint, pairs: &[Eigenpair], radii: &[f64]) -> serde_json::Value {
    let sigma: Vec<_> = radii
        .iter()
        .map(|&r| json!({"radius": r, "sigma": gelfand_core::diagnostics::ball_mass(bp, 0, r)}))
        .collect();
    json!({
        "s": bp.s,
        "lambda": bp.lambda,
        "delta": bp.peaks.iter().map(|p| p.delta).collect::<Vec<_>>(),
        "total_mass": bp.total_mass,
        "sigma_R": sigma,
        "mu": pairs.iter().map(|p| p.mu).collect::<Vec<_>>(),
        "multiplicity": pairs.iter().map(|p| p.multiplicity).collect::<Vec<_>>(),
        "record": bp.record(),
    })
}

fn write_fields(dir: &Path, k: usize, bp: &BranchPoint, pairs: &[Eigenpair]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(create(&dir.join(format!("point_{k:03}.csv")))?);
    let mut header = vec!["x".to_string(), "y".to_string(), "v".to_string()];
    header.extend((1..=pairs.len()).map(|n| format!("w{n}")));
    w.write_record(&header)?;
    for u in 0..bp.space.len() {
        let p = bp.space.point(u);
        let mut row = vec![p[0].to_string(), p[1].to_string(), bp.v[u].to_string()];
        row.extend(pairs.iter().map(|e| e.w[u].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Green { domain, x, y, n, grid_csv } => {
            let o = oracle(domain, n)?;
            let out = json!({
                "domain": domain.to_string(),
                "x": x,
                "y": y,
                "G": o.g(x, y)?,
                "K": o.k(x, y)?,
                "R_x": o.r(x)?,
                "R_y": o.r(y)?,
            });
            println!("{out}");
            if let Some(path) = grid_csv {
                let field = NumericGreen::new(domain, n)?.regular_part(y)?;
                create(&path)?.write_all(field.to_csv().as_bytes())?;
            }
        }
        Command::Hamiltonian { domain, v, m, starts, n } => {
            let vexpr = VExpr::parse(&v)?;
            let pts = read_points(&starts)?;
            if pts.len() != m {
                bail!("{} holds {} points for m = {m}", starts.display(), pts.len());
            }
            let sys = find_critical(&pts, &oracle(domain, n)?, &vexpr, &CriticalOptions::default())?;
            println!("{}", serde_json::to_string(&sys)?);
        }
        Command::Branch1d { v, s_min, s_max, step, n, count, out, fields } => {
            let vexpr = VExpr::parse(&v)?;
            if !vexpr.is_radial() {
                bail!("branch1d needs a radial V, got `{v}`");
            }
            let opts = Branch1dOptions {
                n,
                nmax: count,
                ..Branch1dOptions::default()
            };
            let mut w = create(&out)?;
            let mut io: Result<()> = Ok(());
            let mut k = 0;
            let (_, err) = continue_radial(&vexpr, &amplitude_schedule(s_min, s_max, step), &opts, |st| {
                if io.is_ok() {
                    io = (|| {
                        serde_json::to_writer(&mut w, &record_json(&st.point, &st.eigen, &opts.radii))?;
                        w.write_all(b"\n")?;
                        if let Some(dir) = &fields {
                            write_fields(dir, k, &st.point, &st.eigen)?;
                        }
                        Ok(())
                    })();
                }
                k += 1;
            });
            io?;
            w.flush()?;
            if let Some(e) = err {
                log::warn!("branch stopped after {k} points: {e}");
                if k == 0 {
                    bail!("first branch point failed: {e}");
                }
            }
        }
        Command::Branch2d {
            domain,
            v,
            m,
            anchors,
            n,
            s_min,
            s_max,
            step,
            count,
            seed,
            out,
            fields,
        } => {
            let vexpr = VExpr::parse(&v)?;
            let starts = read_points(&anchors)?;
            if starts.len() != m {
                bail!("{} holds {} points for m = {m}", anchors.display(), starts.len());
            }
            let o = oracle(domain, 129)?;
            let sys = find_critical(&starts, &o, &vexpr, &CriticalOptions::default())?;
            let planar = Planar::new(Arc::new(Grid2D::new(domain, n)?))?;
            let opts = Branch2dOptions {
                count,
                eig: Eig2dOptions {
                    seed,
                    ..Eig2dOptions::default()
                },
                ..Branch2dOptions::default()
            };
            let mut w = create(&out)?;
            let mut io: Result<()> = Ok(());
            let mut k = 0;
            let schedule = amplitude_schedule(s_min, s_max, step);
            let (_, trunc) = continue_planar(&planar, &o, &vexpr, &sys.points, &schedule, &opts, |st| {
                if io.is_ok() {
                    io = (|| {
                        let mut rec = record_json(&st.point, &st.eigen.pairs, &[]);
                        rec["orthogonality"] = json!(st.eigen.orthogonality);
                        serde_json::to_writer(&mut w, &rec)?;
                        w.write_all(b"\n")?;
                        if let Some(dir) = &fields {
                            write_fields(dir, k, &st.point, &st.eigen.pairs)?;
                        }
                        Ok(())
                    })();
                }
                k += 1;
            });
            io?;
            w.flush()?;
            match trunc {
                None => {}
                Some(Truncation::Depth { s, delta, limit }) => {
                    log::warn!("depth limit at s = {s}: δ = {delta:.3e} < {limit:.3e}")
                }
                Some(Truncation::Failed(e)) if k == 0 => bail!("first branch point failed: {e}"),
                Some(Truncation::Failed(e)) => log::warn!("branch stopped after {k} points: {e}"),
            }
        }
        Command::Eigs { domain, v, s, count, solver, n } => {
            let vexpr = VExpr::parse(&v)?;
            match solver {
                Solver::Radial => {
                    if domain != Domain::UnitDisk || !vexpr.is_radial() {
                        bail!("the 1d solver needs the disk and a radial V");
                    }
                    let opts = Branch1dOptions {
                        n: n.unwrap_or(2048),
                        nmax: count,
                        ..Branch1dOptions::default()
                    };
                    let st = radial_step(s, &vexpr, None, &opts)?;
                    println!(
                        "{}",
                        json!({"s": s, "lambda": st.point.lambda, "spectrum": st.spectrum, "orthogonality": st.orthogonality})
                    );
                }
                Solver::Planar => {
                    let planar = Planar::new(Arc::new(Grid2D::new(domain, n.unwrap_or(257))?))?;
                    let [x0, x1, y0, y1] = domain.bounding_box();
                    let centre = [0.5 * (x0 + x1), 0.5 * (y0 + y1)];
                    let opts = Branch2dOptions {
                        count,
                        ..Branch2dOptions::default()
                    };
                    let o = oracle(domain, 129)?;
                    let (steps, trunc) = continue_planar(&planar, &o, &vexpr, &[centre], &[s], &opts, |_| {});
                    let st = match (steps.into_iter().next(), trunc) {
                        (Some(st), _) => st,
                        (None, Some(Truncation::Failed(e))) => return Err(e.into()),
                        (None, _) => bail!("no solution at s = {s}"),
                    };
                    println!(
                        "{}",
                        json!({
                            "s": s,
                            "lambda": st.point.lambda,
                            "mu": st.eigen.pairs.iter().map(|p| p.mu).collect::<Vec<_>>(),
                            "orthogonality": st.eigen.orthogonality,
                            "inertia": st.eigen.inertia,
                        })
                    );
                }
            }
        }
        Command::Verify { config, jsonl, csv } => {
            let cfg = StudyConfig::load(&config)?;
            let report = run_study(&cfg)?;
            for a in &report.assertions {
                println!(
                    "{} criterion {} {}: measured {} [{}] {}",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.criterion,
                    a.name,
                    a.measured.map_or("n/a".into(), |x| format!("{x:.6e}")),
                    a.band,
                    a.detail
                );
            }
            if let Some(t) = &report.truncation {
                println!("truncated: {t}");
            }
            // output paths in the config are relative to the config file
            let base = config.parent().unwrap_or(Path::new("."));
            let jsonl = jsonl.or_else(|| cfg.output.jsonl.as_ref().map(|p| base.join(p)));
            let csv = csv.or_else(|| cfg.output.csv.as_ref().map(|p| base.join(p)));
            if let Some(p) = jsonl {
                emit(&report, p, Format::Jsonl)?;
            }
            if let Some(p) = csv {
                emit(&report, p, Format::Csv)?;
            }
            return Ok(ExitCode::from(report.exit_code() as u8));
        }
        Command::Report { input, csv } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let report = read_jsonl(BufReader::new(file))?;
            let passed = report.assertions.iter().filter(|a| a.passed).count();
            println!(
                "{} ({}): {} rows, {}/{} checks passed",
                report.name,
                report.config_hash,
                report.rows.len(),
                passed,
                report.assertions.len()
            );
            for a in report.assertions.iter().filter(|a| !a.passed) {
                println!("FAIL {}: {}", a.name, a.band);
            }
            if let Some(path) = csv {
                write_csv(&report, create(&path)?).map_err(|e| HarnessError::Stage(e.to_string()))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
