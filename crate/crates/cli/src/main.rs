use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seqpa::bounds::{evaluate_bound, BoundKind, BoundParams, BoundSpec};
use seqpa::covering::{grid_cover, msoa_cover, rounding_cover, DEFAULT_COVER_CAP};
use seqpa::experts::{DsFamily, ExpertFamily, FamilyTable, Feature, GlmFamily};
use seqpa::harness::{bench, run_experiment, write_summary, BenchConfig};
use seqpa::shtarkov::{block_design_features, shtarkov_sum, SupOracle};

#[derive(Parser)]
#[command(name = "seqpa", version, about = "Sequential probability assignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one cell of a configuration and write its transcript.
    Predict(PredictArgs),
    /// Exact log Shtarkov sum on a fixed design.
    Shtarkov(ShtarkovArgs),
    /// Evaluate a closed-form bound.
    Bound(BoundArgs),
    /// Build a global cover and write it in tabular form.
    Cover(CoverArgs),
    /// Run every cell of a configuration and write the summary CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Transcript CSV path; stdout gets the summary row.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShtarkovArgs {
    /// `table`, `constant-bernoulli` or `ds`.
    #[arg(long)]
    kind: String,
    /// Tabular family file for `table`.
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long = "T")]
    t: usize,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    kind: String,
    /// Parameters as `name=value`, e.g. `T=100 d=2 R=1 L=1`.
    params: Vec<String>,
}

#[derive(Args)]
struct CoverArgs {
    /// `grid` (logistic), `rounding` or `msoa` (tabular family).
    #[arg(long)]
    method: String,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    lipschitz: f64,
    /// Horizon of an M-SOA cover.
    #[arg(long = "T", default_value_t = 4)]
    t: usize,
    #[arg(long, default_value_t = DEFAULT_COVER_CAP)]
    cap: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for transcripts and `summary.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Predict(a) => predict(a),
        Command::Shtarkov(a) => shtarkov(a),
        Command::Bound(a) => bound(a),
        Command::Cover(a) => cover(a),
        Command::Bench(a) => run_bench(a),
    }
}

fn predict(a: PredictArgs) -> Result<ExitCode> {
    let cfg = BenchConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cell = cfg.cells().into_iter().next().context("configuration has no cells")?;
    if let Some(d) = a.d {
        cell.d = d;
    }
    if let Some(t) = a.t {
        cell.t = t;
    }
    if let Some(k) = a.adversary {
        cell.adversary.kind = k;
    }
    if let Some(s) = a.seed {
        cell.seed = s;
    }
    let row = match &a.out {
        Some(path) => {
            let dir = tempfile_dir(path)?;
            let row = run_experiment(&cell, Some(&dir))?;
            std::fs::rename(dir.join(format!("{}.csv", row.digest)), path)?;
            std::fs::remove_dir_all(&dir).ok();
            row
        }
        None => run_experiment(&cell, None)?,
    };
    write_summary(std::slice::from_ref(&row), std::io::stdout().lock())?;
    Ok(if row.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn tempfile_dir(target: &std::path::Path) -> Result<PathBuf> {
    let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    let dir = parent.join(format!(".seqpa-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn shtarkov(a: ShtarkovArgs) -> Result<ExitCode> {
    let (oracle, xs) = match a.kind.as_str() {
        "table" => {
            let path = a.family.context("--family is required for `table`")?;
            let family = FamilyTable::read(&path)?.into_family()?;
            let xs: Vec<Feature> = match &family {
                ExpertFamily::FiniteStatic(f) => {
                    let dom = f.domain().features();
                    (0..a.t).map(|i| dom[i % dom.len()].clone()).collect()
                }
                ExpertFamily::FiniteSequential(f) => match f.design() {
                    Some((design, _)) => design.iter().take(a.t).cloned().collect(),
                    None => bail!("sequential family without a design"),
                },
                _ => unreachable!(),
            };
            (SupOracle::finite_max(&family, &xs)?, xs)
        }
        "constant-bernoulli" => (SupOracle::ConstantBernoulliMle, block_design_features(1, a.t)?),
        "ds" => {
            DsFamily::new(a.t, a.s)?;
            (SupOracle::DsClosedForm { s: a.s }, (0..a.t).map(|i| Feature::basis(a.t, i)).collect())
        }
        other => bail!("unknown Shtarkov kind {other:?}"),
    };
    let value = shtarkov_sum(&oracle, &xs)?;
    println!("oracle,T,ln_shtarkov");
    println!("{},{},{}", oracle.name(), xs.len(), value.get());
    Ok(ExitCode::SUCCESS)
}

fn bound(a: BoundArgs) -> Result<ExitCode> {
    let kind: BoundKind = a.kind.parse()?;
    let mut params = BoundParams::default();
    for p in &a.params {
        let (k, v) = p.split_once('=').with_context(|| format!("parameter {p:?} is not name=value"))?;
        let v: f64 = v.parse().with_context(|| format!("value of {k}"))?;
        params.set(k, v)?;
    }
    let value = evaluate_bound(&BoundSpec::new(kind, params))?;
    let used = params.used_by(kind);
    let names: Vec<&str> = used.iter().map(|(n, _)| *n).collect();
    let values: Vec<String> = used.iter().map(|(_, v)| v.to_string()).collect();
    println!("kind,{},value", names.join(","));
    println!("{kind},{},{value}", values.join(","));
    Ok(ExitCode::SUCCESS)
}

fn cover(a: CoverArgs) -> Result<ExitCode> {
    let load_static = || -> Result<seqpa::experts::FiniteStatic> {
        let path = a.family.as_ref().context("--family is required for this method")?;
        match FamilyTable::read(path)?.into_family()? {
            ExpertFamily::FiniteStatic(f) => Ok(f),
            _ => bail!("cover methods `rounding` and `msoa` need a static (`features`) table"),
        }
    };
    let (cover, design) = match a.method.as_str() {
        "grid" => {
            let fam = ExpertFamily::GeneralizedLinear(GlmFamily::logistic(a.d, a.radius, a.lipschitz)?);
            let cover = grid_cover(&fam, a.alpha, a.cap)?;
            if let Some(out) = &a.out {
                let pts = cover.grid_points().unwrap_or_default();
                let lines: Vec<String> = pts
                    .iter()
                    .map(|w| w.iter().map(f64::to_string).collect::<Vec<_>>().join(" "))
                    .collect();
                std::fs::write(out, lines.join("\n") + "\n")?;
            }
            (cover, None)
        }
        "rounding" => {
            let fam = load_static()?;
            (rounding_cover(&fam, a.alpha)?, Some(fam.domain().features().to_vec()))
        }
        "msoa" => {
            let fam = load_static()?;
            let dom = fam.domain().features();
            let design: Vec<Feature> = (0..a.t).map(|i| dom[i % dom.len()].clone()).collect();
            (msoa_cover(&fam, a.alpha, a.t, a.cap)?, Some(design))
        }
        other => bail!("unknown cover method {other:?}"),
    };
    if let (Some(out), Some(design)) = (&a.out, &design) {
        cover.to_table(design)?.write(out)?;
    }
    println!("method,scale,members");
    println!("{},{},{}", a.method, cover.scale, cover.len());
    Ok(ExitCode::SUCCESS)
}

fn run_bench(a: BenchArgs) -> Result<ExitCode> {
    let cfg = BenchConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let report = bench(&cfg, Some(&a.out))?;
    let failures = report.failures();
    println!("cells,failures,summary");
    println!("{},{failures},{}", report.rows.len(), a.out.join("summary.csv").display());
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
