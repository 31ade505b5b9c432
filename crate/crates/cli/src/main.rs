//! `rmtldp` command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, unreadable or malformed
//! model files, wrong model kind), 1 on numerical failures.

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use rmtldp::dyson::{edge_solve, sigma_density, sigma_edges, sigma_measure, sigma_zero_atom, SigmaGrid};
use rmtldp::montecarlo::{sample_replicas, write_mc_csv, write_spectra_binary};
use rmtldp::rate::{approx_sweep, rate_table, rate_variational};
use rmtldp::wigner::{dw_branches, dw_edge, dw_rate_with_edge, free_convolution_density, DeformedWignerModel};
use rmtldp::{CovarianceModel, Error, Extended, Model};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "rmtldp", version, about = "Large-deviation rate functions for the largest eigenvalue")]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "RMTLDP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Edge quantities of a covariance model as JSON.
    Edge(#[command(flatten)] Common),
    /// Rate table `x,G,Gbar,I` on `[r(sigma), xmax]`.
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        xmax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Limiting spectral density `x,density` of a covariance model.
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 400)]
        points: usize,
        /// Distance from the real axis; defaults to 1e-9 times the support width.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Primal rate against the variational form at the given points.
    Variational {
        #[command(flatten)]
        common: Common,
        /// Comma-separated evaluation points.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
    /// Edge-truncation sweep `eps,r_sigma_eps,sup_error`.
    Approx {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, descending truncation widths.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Right end of the comparison grid, which starts at r(sigma) + 0.5.
        #[arg(long, default_value_t = 25.0)]
        xmax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Monte Carlo largest eigenvalues `replica,n,m,lambda_max`.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        replicas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write every spectrum as little-endian f64, one row per replica.
        #[arg(long)]
        spectra: Option<PathBuf>,
    },
    /// Edge quantities of a deformed Wigner model as JSON.
    WignerEdge(#[command(flatten)] Common),
    /// Deformed Wigner rate table `x,G,Gbar,I` on `[r_edge, xmax]`.
    WignerRate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        xmax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Density `x,density` of the semicircle law freely convolved with the deformation.
    WignerDensity {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long)]
        eta: Option<f64>,
    },
}

/// Why a run failed, mapped onto the exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Json(_) | Error::InvalidMeasure(_) | Error::InvalidModel(_) | Error::EdgeIntegrability(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(format!("i/o: {e}"))
    }
}

type Run = std::result::Result<(), Failure>;

fn load(path: &Path) -> std::result::Result<Model, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Model::from_json_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn covariance(path: &Path, command: &str) -> std::result::Result<CovarianceModel, Failure> {
    match load(path)? {
        Model::Covariance(m) => Ok(m),
        other => Err(Failure::Usage(format!(
            "`{command}` needs a covariance model; {} has kind '{}'",
            path.display(),
            other.kind()
        ))),
    }
}

fn wigner(path: &Path, command: &str) -> std::result::Result<DeformedWignerModel, Failure> {
    match load(path)? {
        Model::DeformedWigner(m) => Ok(m),
        other => Err(Failure::Usage(format!(
            "`{command}` needs a deformed-wigner model; {} has kind '{}'",
            path.display(),
            other.kind()
        ))),
    }
}

/// Writes to `out` atomically (temporary file in the same directory, then rename),
/// or to standard output.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Run {
    match out {
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(bytes)?;
            s.flush()?;
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| Failure::from(e.error))?;
        }
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_ext(v: Extended) -> String {
    match v {
        Extended::Finite(x) => fmt(x),
        Extended::PosInf => "inf".into(),
    }
}

fn grid(a: f64, b: f64, points: usize) -> std::result::Result<Vec<f64>, Failure> {
    if points < 2 {
        return Err(Failure::Usage("--points must be at least 2".into()));
    }
    Ok((0..points)
        .map(|k| if k == points - 1 { b } else { a + (b - a) * k as f64 / (points - 1) as f64 })
        .collect())
}

fn density_csv(xs: &[f64], f: impl Fn(f64) -> rmtldp::Result<f64> + Sync) -> std::result::Result<String, Failure> {
    let values: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect::<rmtldp::Result<_>>()?;
    let mut s = String::from("x,density\n");
    for (x, d) in xs.iter().zip(values) {
        s.push_str(&format!("{},{}\n", fmt(*x), fmt(d)));
    }
    Ok(s)
}

fn run(cli: Cli) -> Run {
    match cli.command {
        Command::Edge(c) => {
            let m = covariance(&c.model, "edge")?;
            let edge = edge_solve(&m)?;
            let mut text = serde_json::to_string(&edge).map_err(|e| Failure::Numeric(e.to_string()))?;
            text.push('\n');
            emit(c.out.as_deref(), text.as_bytes())
        }
        Command::Rate { common, xmax, points } => {
            let m = covariance(&common.model, "rate")?;
            let table = rate_table(&m, xmax, points).map_err(|e| match e {
                Error::Degenerate => Failure::Numeric(format!(
                    "{e}; `rmtldp edge --model {}` reports degenerate=true, so the rate is 0 at 0 and +inf elsewhere",
                    common.model.display()
                )),
                other => other.into(),
            })?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            emit(common.out.as_deref(), &buf)
        }
        Command::Density { common, points, eta } => {
            let m = covariance(&common.model, "density")?;
            let (l, r) = sigma_edges(&m)?;
            let eta = eta.unwrap_or(1e-9 * (r - l).max(f64::MIN_POSITIVE));
            let atom = sigma_zero_atom(&m);
            if atom > 0.0 {
                eprintln!("note: the limiting law also has an atom of mass {atom} at 0");
            }
            let csv = density_csv(&grid(l, r, points)?, |x| sigma_density(&m, x, eta))?;
            emit(common.out.as_deref(), csv.as_bytes())
        }
        Command::Variational { common, x } => {
            let m = covariance(&common.model, "variational")?;
            let edge = edge_solve(&m)?;
            let sigma = sigma_measure(&m, SigmaGrid::default())?;
            let rows: Vec<String> = x
                .par_iter()
                .map(|&x| {
                    let v = rate_variational(&m, &edge, &sigma, x)?;
                    let p = rmtldp::rate::rate_with_edge(&m, &edge, x)?;
                    Ok(format!(
                        "{},{},{},{},{}\n",
                        fmt(x),
                        fmt_ext(p),
                        fmt(v.value),
                        fmt(v.theta_x),
                        fmt(v.scan_max)
                    ))
                })
                .collect::<rmtldp::Result<_>>()?;
            let mut s = String::from("x,I,I_variational,theta_x,scan_max\n");
            s.extend(rows);
            emit(common.out.as_deref(), s.as_bytes())
        }
        Command::Approx {
            common,
            eps,
            xmax,
            points,
        } => {
            let m = covariance(&common.model, "approx")?;
            if eps.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Failure::Usage("--eps must be a strictly descending list".into()));
            }
            let r = edge_solve(&m)?.r_sigma()?;
            let xs = grid(r + 0.5, xmax, points)?;
            let sweep = approx_sweep(&m, &eps, &xs)?;
            for l in &sweep.levels {
                if l.nudged {
                    eprintln!("note: eps = {} hit an atom and was nudged to {}", l.eps, l.eps_used);
                }
            }
            let mut buf = Vec::new();
            sweep.write_csv(&mut buf)?;
            emit(common.out.as_deref(), &buf)
        }
        Command::Mc {
            common,
            n,
            replicas,
            seed,
            spectra,
        } => {
            let m = load(&common.model)?;
            if replicas == 0 {
                return Err(Failure::Usage("--replicas must be at least 1".into()));
            }
            let samples = sample_replicas(&m, n, replicas, seed)?;
            let mut buf = Vec::new();
            write_mc_csv(&samples, &mut buf)?;
            emit(common.out.as_deref(), &buf)?;
            if let Some(path) = spectra {
                let mut bin = Vec::new();
                write_spectra_binary(&samples, &mut bin)?;
                emit(Some(&path), &bin)?;
            }
            Ok(())
        }
        Command::WignerEdge(c) => {
            let m = wigner(&c.model, "wigner-edge")?;
            let edge = dw_edge(&m)?;
            let mut text = serde_json::to_string(&edge).map_err(|e| Failure::Numeric(e.to_string()))?;
            text.push('\n');
            emit(c.out.as_deref(), text.as_bytes())
        }
        Command::WignerRate { common, xmax, points } => {
            let m = wigner(&common.model, "wigner-rate")?;
            let edge = dw_edge(&m)?;
            if !(xmax > edge.r_edge) {
                return Err(Failure::Usage(format!("--xmax must exceed the edge {}", edge.r_edge)));
            }
            let xs = grid(edge.r_edge, xmax, points)?;
            let rows: Vec<String> = xs
                .par_iter()
                .map(|&x| {
                    let (g, gbar) = dw_branches(&m, &edge, x)?;
                    let i = dw_rate_with_edge(&m, &edge, x)?;
                    Ok(format!("{},{},{},{}\n", fmt(x), fmt(g), fmt(gbar), fmt_ext(i)))
                })
                .collect::<rmtldp::Result<_>>()?;
            let mut s = String::from("x,G,Gbar,I\n");
            s.extend(rows);
            emit(common.out.as_deref(), s.as_bytes())
        }
        Command::WignerDensity { common, points, eta } => {
            let m = wigner(&common.model, "wigner-density")?;
            let right = dw_edge(&m)?.r_edge;
            let reflected = DeformedWignerModel {
                mu_d: m.mu_d.pushforward_scale(-1.0)?,
                ..m.clone()
            };
            let left = -dw_edge(&reflected)?.r_edge;
            let eta = eta.unwrap_or(1e-9 * (right - left));
            let csv = density_csv(&grid(left, right, points)?, |x| free_convolution_density(&m, x, eta))?;
            emit(common.out.as_deref(), csv.as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
