use std::fmt::Display;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::ArrayView2;
use serde::Serialize;
use serde_json::{json, Value};
use simlearn::io::{load_matrix, save_matrix};
use simlearn::{
    certify, generate_synthetic, run_coverage_experiment, train, validate_distance_matrix, DistanceMatrix64, Error,
    KernelFamily, KernelSpec64, Model64, ModelClass64, SampleMatrix64, SyntheticSpec64, TrainConfig64,
};

const DISTANCE_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "simlearn", version, about = "Similarity learning by distance regression, with generalization certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic problem.
    Gen {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit a linear or kernel map to a distance matrix.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        distances: PathBuf,
        #[command(flatten)]
        class: ClassArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Initialization seed [default: config file, else 0]
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compute the generalization certificate of a trained model.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        distances: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the seeded coverage experiment; exits 5 if coverage falls below 1 - delta.
    Verify {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        class: ClassArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Held-out sample size per trial [default: 10 m]
        #[arg(long)]
        holdout: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SpecArgs {
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k_true: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    map_norm: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the hidden map [default: --seed]
    #[arg(long)]
    map_seed: Option<u64>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<SyntheticSpec64, Failure> {
        let spec = SyntheticSpec64 {
            m: self.m,
            n: self.n,
            k_true: self.k_true,
            radius_r: self.radius,
            target_map_norm: self.map_norm,
            noise_sigma: self.noise,
            seed: self.seed,
            map_seed: Some(self.map_seed.unwrap_or(self.seed)),
        };
        spec.validate().map_err(Failure::usage)?;
        Ok(spec)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ClassKind {
    Linear,
    Kernel,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KernelKind {
    Rbf,
    Linear,
    Poly,
}

#[derive(Args, Debug)]
struct ClassArgs {
    #[arg(long, value_enum, default_value_t = ClassKind::Linear)]
    class: ClassKind,
    #[arg(long, default_value_t = 1.0)]
    lambda_cap: f64,
    /// Embedding dimension [default: min(N, m)]
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value_t = KernelKind::Rbf)]
    kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, default_value_t = 1.0)]
    coef0: f64,
}

impl ClassArgs {
    fn resolve(&self, n: usize, m: usize) -> Result<ModelClass64, Failure> {
        let k = self.k.unwrap_or(n.min(m));
        if k == 0 {
            return Err(Failure::usage("--k must be >= 1"));
        }
        if !(self.lambda_cap >= 0.0) || !self.lambda_cap.is_finite() {
            return Err(Failure::usage(format!("--lambda-cap must be finite and >= 0, got {}", self.lambda_cap)));
        }
        Ok(match self.class {
            ClassKind::Linear => ModelClass64::Linear { k, lambda_cap: self.lambda_cap },
            ClassKind::Kernel => {
                let family = match self.kernel {
                    KernelKind::Rbf => KernelFamily::Rbf,
                    KernelKind::Linear => KernelFamily::Linear,
                    KernelKind::Poly => KernelFamily::Polynomial,
                };
                let kernel = KernelSpec64 { family, gamma: self.gamma, degree: self.degree, coef0: self.coef0 };
                kernel.validate().map_err(Failure::usage)?;
                ModelClass64::Kernel { kernel, k, lambda_cap: self.lambda_cap }
            }
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON TrainConfig; explicit flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
}

impl TrainArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<TrainConfig64, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig64::default(),
        };
        if let Some(v) = self.penalty {
            cfg.penalty_lambda = v;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        if let Some(v) = self.step_size {
            cfg.step_size = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.grad_tol {
            cfg.grad_tol = v;
        }
        if let Some(v) = self.eps {
            cfg.smoothing_eps = v;
        }
        cfg.validate().map_err(Failure::usage)?;
        Ok(cfg)
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(msg: impl Display) -> Self {
        Self { code: 2, message: msg.to_string() }
    }

    fn io(path: &Path, err: impl Display) -> Self {
        Self { code: 3, message: format!("{}: {err}", path.display()) }
    }

    fn validation(msg: impl Display) -> Self {
        Self { code: 4, message: msg.to_string() }
    }

    /// Library errors while reading `path`: I/O problems exit 3, bad content 4.
    fn reading(path: &Path, err: Error) -> Self {
        let io = match &err {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        };
        if io {
            Self::io(path, err)
        } else {
            Self::validation(format!("{}: {err}", path.display()))
        }
    }
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::validation)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
    Ok(path)
}

fn write_csv(dir: &Path, name: &str, m: ArrayView2<'_, f64>) -> Result<(), Failure> {
    let path = dir.join(name);
    save_matrix(&path, m).map_err(|e| Failure::io(&path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn load_problem(features: &Path, distances: &Path) -> Result<(SampleMatrix64, DistanceMatrix64), Failure> {
    let x = load_matrix::<f64>(features).map_err(|e| Failure::reading(features, e))?;
    let d = load_matrix::<f64>(distances).map_err(|e| Failure::reading(distances, e))?;
    if x.nrows() != d.nrows() {
        return Err(Failure::validation(format!(
            "{} has {} rows but {} has {}",
            features.display(),
            x.nrows(),
            distances.display(),
            d.nrows()
        )));
    }
    let s = SampleMatrix64::new(x).map_err(|e| Failure::validation(format!("{}: {e}", features.display())))?;
    let d = validate_distance_matrix(d, DISTANCE_TOL)
        .map_err(|e| Failure::validation(format!("{}: {e}", distances.display())))?;
    Ok((s, d))
}

fn check_delta(delta: f64) -> Result<(), Failure> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--delta must lie in (0, 1), got {delta}")))
    }
}

fn cmd_gen(spec: &SpecArgs, out: &Path) -> Result<(), Failure> {
    let spec = spec.resolve()?;
    let data = generate_synthetic(&spec).map_err(Failure::validation)?;
    ensure_dir(out)?;
    write_csv(out, "features.csv", data.samples.view())?;
    write_csv(out, "distances.csv", data.distances.view())?;
    write_csv(out, "wtrue.csv", data.w_true.view())?;
    let manifest = json!({
        "command": "gen",
        "seed": spec.seed,
        "spec": spec,
        "files": ["features.csv", "distances.csv", "wtrue.csv"],
    });
    write_json(out, "manifest.json", &manifest)?;
    Ok(())
}

fn cmd_train(
    features: &Path,
    distances: &Path,
    class: &ClassArgs,
    train_args: &TrainArgs,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let (s, d) = load_problem(features, distances)?;
    let class = class.resolve(s.dim(), s.len())?;
    let cfg = train_args.resolve(seed)?;
    let (model, report) = train(&s, &d, &class, &cfg).map_err(Failure::validation)?;
    ensure_dir(out)?;

    let meta = json!({
        "seed": cfg.seed,
        "class": class,
        "train_config": cfg,
        "features": features,
        "distances": distances,
    });
    let mut doc = serde_json::to_value(&model).map_err(Failure::validation)?;
    if let Value::Object(map) = &mut doc {
        map.insert("meta".into(), meta);
    }
    write_json(out, "model.json", &doc)?;

    let mut rep = serde_json::to_value(&report).map_err(Failure::validation)?;
    if let Value::Object(map) = &mut rep {
        map.insert("seed".into(), json!(cfg.seed));
        map.insert("class".into(), json!(class));
        map.insert("train_config".into(), json!(cfg));
    }
    write_json(out, "train_report.json", &rep)?;
    if report.diverged {
        eprintln!("warning: training diverged (final risk {})", report.final_risk);
    } else if !report.converged {
        eprintln!("warning: no convergence after {} iterations", report.iterations_used);
    }
    println!("final_risk {} after {} iterations", report.final_risk, report.iterations_used);
    Ok(())
}

fn cmd_certify(model: &Path, features: &Path, distances: &Path, delta: f64, out: &Path) -> Result<(), Failure> {
    check_delta(delta)?;
    let text = fs::read_to_string(model).map_err(|e| Failure::io(model, e))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", model.display())))?;
    let h: Model64 =
        serde_json::from_value(raw.clone()).map_err(|e| Failure::validation(format!("{}: {e}", model.display())))?;
    let (s, d) = load_problem(features, distances)?;
    let cert = certify(&h, &s, &d, delta).map_err(Failure::validation)?;
    ensure_dir(out)?;
    let mut doc = serde_json::to_value(&cert).map_err(Failure::validation)?;
    if let Value::Object(map) = &mut doc {
        map.insert("seed".into(), raw.pointer("/meta/seed").cloned().unwrap_or(Value::Null));
        map.insert("model".into(), json!(model));
        map.insert("features".into(), json!(features));
        map.insert("distances".into(), json!(distances));
    }
    write_json(out, "certificate.json", &doc)?;
    println!("bound {} = empirical risk {} + slack {}", cert.bound, cert.empirical_risk, cert.slack);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    spec: &SpecArgs,
    class: &ClassArgs,
    train_args: &TrainArgs,
    delta: f64,
    trials: usize,
    holdout: Option<usize>,
    out: &Path,
) -> Result<bool, Failure> {
    check_delta(delta)?;
    if trials == 0 {
        return Err(Failure::usage("--trials must be >= 1"));
    }
    let spec = spec.resolve()?;
    let class = class.resolve(spec.n, spec.m)?;
    let cfg = train_args.resolve(Some(spec.seed))?;
    let n_holdout = holdout.unwrap_or(10 * spec.m);
    if n_holdout < 2 {
        return Err(Failure::usage("--holdout must be >= 2"));
    }
    let report = run_coverage_experiment(&spec, &class, &cfg, delta, trials, n_holdout).map_err(Failure::validation)?;
    ensure_dir(out)?;
    write_json(out, "report.json", &report)?;
    let path = out.join("trials.csv");
    let file = File::create(&path).map_err(|e| Failure::io(&path, e))?;
    report.write_trials_csv(BufWriter::new(file)).map_err(|e| Failure::io(&path, e))?;
    println!(
        "coverage {} over {} trials (required {}), mean gap {}, mean slack {}",
        report.coverage_rate,
        report.n_trials,
        1.0 - delta,
        report.mean_gap,
        report.mean_slack
    );
    Ok(report.passed)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Gen { spec, out } => cmd_gen(&spec, &out).map(|_| 0),
        Command::Train { features, distances, class, train, seed, out } => {
            cmd_train(&features, &distances, &class, &train, seed, &out).map(|_| 0)
        }
        Command::Certify { model, features, distances, delta, out } => {
            cmd_certify(&model, &features, &distances, delta, &out).map(|_| 0)
        }
        Command::Verify { spec, class, train, delta, trials, holdout, out } => {
            cmd_verify(&spec, &class, &train, delta, trials, holdout, &out).map(|ok| if ok { 0 } else { 5 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
