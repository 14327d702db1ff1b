use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fedlga::checkpoint::write_checkpoint;
use fedlga::config::{parse_config, validate, ConfigError};
use fedlga::metrics::{write_jsonl, write_metrics_csv};
use fedlga::server::Strategy;
use fedlga::simulation::{rounds_to_target, ExperimentConfig, Federation};
use fedlga::verify::{
    approximation_error_study, degeneracy_check, gradient_study, hessian_study, partition_study,
    sampling_study, StudyConfig,
};
use fedlga::Error;

/// Federated learning simulator with straggler gradient compensation.
#[derive(Parser, Debug)]
#[command(name = "fedlga", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its metrics CSV
    Run {
        /// key=value config file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides master_seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Write the final parameters here
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the cross product of the listed values, one CSV per cell
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        rho: Vec<f64>,
        /// Local steps E (tau_max follows as E-1)
        #[arg(long, value_delimiter = ',')]
        e: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// fedlga, fedavg, fedprox or fednova
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run verification suites; exits 1 if any fails
    Check {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Append one JSON report per suite
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Print each shard's class set and size
    PartitionInfo {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Suite {
    Degeneracy,
    Gradient,
    Hessian,
    Partition,
    Sampling,
    Approx,
    All,
}

enum Failure {
    Config(String),
    Verification,
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            Ok(parse_config(&text)?)
        }
    }
}

fn parse_strategy(name: &str, base: &Strategy) -> Result<Strategy, Failure> {
    let eta_g = match base {
        Strategy::FedLga { eta_g } | Strategy::FedNova { eta_g } => *eta_g,
        _ => 1.0,
    };
    let mu = match base {
        Strategy::FedProx { mu } => *mu,
        _ => 1.0,
    };
    Ok(match name {
        "fedlga" => Strategy::FedLga { eta_g },
        "fedavg" => Strategy::FedAvg,
        "fedprox" => Strategy::FedProx { mu },
        "fednova" => Strategy::FedNova { eta_g },
        other => {
            return Err(Failure::Config(format!(
                "key \"strategy\": unknown strategy {other:?}"
            )))
        }
    })
}

fn write_csv(path: &Path, seed: u64, records: &[fedlga::simulation::RoundRecord]) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path)?);
    write_metrics_csv(&mut out, seed, records)?;
    out.flush()?;
    Ok(())
}

fn run(config: Option<PathBuf>, seed: Option<u64>, out: PathBuf, checkpoint: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = load_config(config.as_deref())?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    validate(&cfg)?;
    let result = Federation::new(cfg.clone())?.run()?;
    fs::create_dir_all(&out)?;
    let path = out.join(format!("{}_seed{}.csv", cfg.strategy.tag(), cfg.master_seed));
    write_csv(&path, cfg.master_seed, &result.records)?;
    if let Some(ckpt) = checkpoint {
        write_checkpoint(&result.final_params, &ckpt).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    println!("wrote {}", path.display());
    Ok(())
}

struct Cell {
    name: String,
    config: ExperimentConfig,
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    config: Option<PathBuf>,
    rho: Vec<f64>,
    e: Vec<usize>,
    k: Vec<usize>,
    n: Vec<usize>,
    strategy: Vec<String>,
    seed: Vec<u64>,
    out: PathBuf,
) -> Result<(), Failure> {
    let base = load_config(config.as_deref())?;
    let or_base = |v: Vec<f64>, b: f64| if v.is_empty() { vec![b] } else { v };
    let or_base_u = |v: Vec<usize>, b: usize| if v.is_empty() { vec![b] } else { v };
    let rhos = or_base(rho, base.rho);
    let es = or_base_u(e.clone(), base.local_epochs);
    let ks = or_base_u(k, base.k_selected);
    let ns = or_base_u(n, base.n_devices);
    let strategies: Vec<Strategy> = if strategy.is_empty() {
        vec![base.strategy]
    } else {
        strategy
            .iter()
            .map(|s| parse_strategy(s.trim(), &base.strategy))
            .collect::<Result<_, _>>()?
    };
    let seeds = if seed.is_empty() { vec![base.master_seed] } else { seed };

    let mut cells = Vec::new();
    for &n in &ns {
        for &k in &ks {
            for &e_val in &es {
                for &r in &rhos {
                    for s in &strategies {
                        for &sd in &seeds {
                            let mut c = ExperimentConfig {
                                n_devices: n,
                                k_selected: k,
                                local_epochs: e_val,
                                rho: r,
                                strategy: *s,
                                master_seed: sd,
                                ..base.clone()
                            };
                            if !e.is_empty() {
                                c.tau_max = e_val.saturating_sub(1);
                            }
                            validate(&c)?;
                            cells.push(Cell {
                                name: format!("{}_n{n}_k{k}_e{e_val}_rho{r}_seed{sd}", s.tag()),
                                config: c,
                            });
                        }
                    }
                }
            }
        }
    }

    fs::create_dir_all(&out)?;
    let results: Vec<Result<(Option<usize>, f64), Failure>> = cells
        .par_iter()
        .map(|cell| {
            let res = Federation::new(cell.config.clone())?.run()?;
            write_csv(&out.join(format!("{}.csv", cell.name)), cell.config.master_seed, &res.records)?;
            let reached = cell
                .config
                .target_accuracy
                .and_then(|target| rounds_to_target(&res.records, target));
            let last = res.records.last().map_or(f64::NAN, |r| r.test_accuracy);
            Ok((reached, last))
        })
        .collect();

    let mut summary = BufWriter::new(File::create(out.join("summary.csv"))?);
    writeln!(
        summary,
        "file,strategy,n_devices,k_selected,local_epochs,rho,seed,rounds_to_target,final_test_acc"
    )?;
    for (cell, res) in cells.iter().zip(results) {
        let (reached, last) = res?;
        let c = &cell.config;
        writeln!(
            summary,
            "{}.csv,{},{},{},{},{},{},{},{}",
            cell.name,
            c.strategy.tag(),
            c.n_devices,
            c.k_selected,
            c.local_epochs,
            c.rho,
            c.master_seed,
            reached.map_or(String::new(), |r| r.to_string()),
            last
        )?;
    }
    summary.flush()?;
    println!("wrote {} cells to {}", cells.len(), out.display());
    Ok(())
}

fn report<T: serde::Serialize>(sink: &mut Option<BufWriter<File>>, name: &str, passed: bool, item: &T) -> Result<(), Failure> {
    println!("{} {name}", if passed { "PASS" } else { "FAIL" });
    if let Some(out) = sink {
        let value = serde_json::json!({ "suite": name, "passed": passed, "report": item });
        write_jsonl(&mut *out, &[value])?;
    }
    Ok(())
}

fn check(suite: Suite, config: Option<PathBuf>, jsonl: Option<PathBuf>) -> Result<(), Failure> {
    let base = load_config(config.as_deref())?;
    validate(&base)?;
    let mut sink = match jsonl {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let wants = |s: Suite| suite == s || suite == Suite::All;
    let mut ok = true;

    if wants(Suite::Degeneracy) {
        let r = degeneracy_check(&ExperimentConfig {
            rho: 0.0,
            strategy: Strategy::FedLga { eta_g: 1.0 },
            rounds: 50,
            ..base.clone()
        })?;
        let passed = r.identical && r.records_identical;
        ok &= passed;
        report(&mut sink, "degeneracy", passed, &r)?;
    }
    if wants(Suite::Gradient) {
        let r = gradient_study(200, 1e-5, base.master_seed)?;
        let passed = r.max_rel_error < 1e-5;
        ok &= passed;
        report(&mut sink, "gradient", passed, &r)?;
    }
    if wants(Suite::Hessian) {
        let r = hessian_study(1000, 50, base.master_seed)?;
        let passed = r.max_abs_error <= 1e-12;
        ok &= passed;
        report(&mut sink, "hessian", passed, &r)?;
    }
    if wants(Suite::Partition) {
        let cases = partition_study(2..=10, 1..=20, base.data_seed)?;
        let passed = cases.iter().all(|c| c.ok());
        ok &= passed;
        report(&mut sink, "partition", passed, &cases)?;
    }
    if wants(Suite::Sampling) {
        let r = sampling_study(base.n_devices, base.k_selected, 100_000, base.master_seed)?;
        let passed = r.within_threshold();
        ok &= passed;
        report(&mut sink, "sampling", passed, &r)?;
    }
    if wants(Suite::Approx) {
        let study = StudyConfig {
            seed: base.master_seed,
            ..StudyConfig::default_for(&base)
        };
        let r = approximation_error_study(&base, &study)?;
        let passed = (1.5..=2.5).contains(&r.eta_exponent)
            && r.tau_medians_nondecreasing()
            && r.win_rate > 0.5;
        ok &= passed;
        println!(
            "  eta exponent {:.3}, tau exponent {:.3}, win rate {:.3}, M {:.3e}",
            r.eta_exponent, r.tau_exponent, r.win_rate, r.empirical_m
        );
        report(&mut sink, "approx", passed, &r)?;
    }
    if let Some(out) = sink.as_mut() {
        out.flush()?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn partition_info(config: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(config.as_deref())?;
    validate(&cfg)?;
    let fed = Federation::new(cfg)?;
    println!("device,size,classes");
    for s in &fed.shards {
        let classes: Vec<String> = s.class_set.iter().map(|c| c.to_string()).collect();
        println!("{},{},{}", s.device_id, s.len(), classes.join(" "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            checkpoint,
        } => run(config, seed, out, checkpoint),
        Command::Sweep {
            config,
            rho,
            e,
            k,
            n,
            strategy,
            seed,
            out,
        } => sweep(config, rho, e, k, n, strategy, seed, out),
        Command::Check { suite, config, jsonl } => check(suite, config, jsonl),
        Command::PartitionInfo { config } => partition_info(config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
