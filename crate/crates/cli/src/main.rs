use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use trajsynth::io::{read_trajectories, write_atomic, write_trajectories};
use trajsynth::metrics::{evaluate, heatmap_csv, MetricParams};
use trajsynth::pipeline::{run_experiment, validate_config, RunConfig, HEATMAP_SIZE};
use trajsynth::synthgen::{builtin_world, generate_toy_dataset};
use trajsynth::{Error, Rng};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "synth", version, about = "Differentially private trajectory synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a JSON config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a builtin toy world dataset.
    GenToy {
        world: String,
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of trajectories (world default when omitted).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Score a synthetic dataset against an original one.
    Metrics {
        original: PathBuf,
        synthetic: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        mu: Option<usize>,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        radius_min: Option<f64>,
        #[arg(long)]
        radius_max: Option<f64>,
        #[arg(long)]
        pattern_grid: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write 80×80 heatmaps of both datasets into this directory.
        #[arg(long)]
        heatmap_dir: Option<PathBuf>,
    },
    /// Check a config and list every problem found.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Each flag replaces the config key of the same name.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    input_path: Option<PathBuf>,
    #[arg(long)]
    world: Option<String>,
    #[arg(long)]
    toy_trajectories: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Budget split as three comma-separated fractions.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    first_layer_k: Option<usize>,
    #[arg(long)]
    pop: Option<f64>,
    #[arg(long)]
    kappa_denom: Option<f64>,
    #[arg(long)]
    theta1: Option<f64>,
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    n_syn: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Ablation preset, `ablation1` … `ablation5`.
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    dense_order2: bool,
    #[arg(long)]
    noise_disabled: bool,
    #[arg(long)]
    unsafe_no_dp: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    heatmap: bool,
}

impl Overrides {
    fn apply(&self, obj: &mut Map<String, Value>) {
        let mut set = |k: &str, v: Value| {
            obj.insert(k.to_string(), v);
        };
        if let Some(v) = &self.input_path {
            set("input_path", json!(v));
        }
        if let Some(v) = &self.world {
            set("world", json!(v));
        }
        if let Some(v) = self.toy_trajectories {
            set("toy_trajectories", json!(v));
        }
        if let Some(v) = self.epsilon {
            set("epsilon", json!(v));
        }
        if let Some(v) = &self.ratios {
            set("ratios", json!(v));
        }
        if let Some(v) = self.c {
            set("c", json!(v));
        }
        if let Some(v) = self.first_layer_k {
            set("first_layer_k", json!(v));
        }
        if let Some(v) = self.pop {
            set("pop", json!(v));
        }
        if let Some(v) = self.kappa_denom {
            set("kappa_denom", json!(v));
        }
        if let Some(v) = self.theta1 {
            set("theta1", json!(v));
        }
        if let Some(v) = self.theta2 {
            set("theta2", json!(v));
        }
        if let Some(v) = self.n_syn {
            set("n_syn", json!(v));
        }
        if let Some(v) = self.max_len {
            set("max_len", json!(v));
        }
        if let Some(v) = self.seed {
            set("seed", json!(v));
        }
        if let Some(v) = self.repetitions {
            set("repetitions", json!(v));
        }
        if let Some(v) = &self.ablation {
            set("ablation", json!(v));
        }
        if self.dense_order2 {
            set("dense_order2", json!(true));
        }
        if self.noise_disabled {
            set("noise_disabled", json!(true));
        }
        if self.unsafe_no_dp {
            set("unsafe_no_dp", json!(true));
        }
        if let Some(v) = &self.out_dir {
            set("out_dir", json!(v));
        }
        if self.heatmap {
            let metrics = obj
                .entry("metrics")
                .or_insert_with(|| Value::Object(Map::new()));
            if let Value::Object(m) = metrics {
                m.insert("heatmap".into(), json!(true));
            }
        }
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(vec![format!("{}: invalid JSON: {e}", path.display())]))?;
    let Value::Object(obj) = &mut value else {
        return Err(Error::Config(vec![format!("{}: config must be a JSON object", path.display())]));
    };
    overrides.apply(obj);
    serde_json::from_value(value).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, overrides } => {
            let config = load_config(&config, &overrides)?;
            let (result, dir) = run_experiment(&config)?;
            for entry in &result.privacy_ledger {
                eprintln!("privacy: {} epsilon={}", entry.mechanism, entry.epsilon);
            }
            for (name, mean) in &result.mean {
                eprintln!("{name}: {mean:.6} ± {:.6}", result.std[name]);
            }
            println!("{}", dir.display());
        }
        Command::GenToy { world, out, seed, n } => {
            let mut spec = builtin_world(&world)?;
            if let Some(n) = n {
                if n == 0 {
                    return Err(Error::Config(vec!["--n must be at least 1".into()]));
                }
                spec = spec.with_size(n);
            }
            let dataset = generate_toy_dataset(&spec, &Rng::new(seed).derive("dataset"))?;
            write_trajectories(&out, &dataset)?;
            eprintln!("wrote {} trajectories to {}", dataset.len(), out.display());
        }
        Command::Metrics {
            original,
            synthetic,
            bins,
            queries,
            mu,
            phi,
            radius_min,
            radius_max,
            pattern_grid,
            seed,
            heatmap_dir,
        } => {
            let d = MetricParams::default();
            let params = MetricParams {
                bins: bins.unwrap_or(d.bins),
                queries: queries.unwrap_or(d.queries),
                mu: mu.unwrap_or(d.mu),
                phi: phi.or(d.phi),
                radius_range: [radius_min.unwrap_or(d.radius_range[0]), radius_max.unwrap_or(d.radius_range[1])],
                pattern_grid: pattern_grid.unwrap_or(d.pattern_grid),
                heatmap: heatmap_dir.is_some(),
            };
            let problems = params.validate();
            if !problems.is_empty() {
                return Err(Error::Config(problems));
            }
            let d_o = read_trajectories(&original)?;
            let d_s = read_trajectories(&synthetic)?;
            let report = evaluate(&d_o, &d_s, &params, &mut Rng::new(seed).derive("metrics"))?;
            if let Some(dir) = heatmap_dir {
                let bbox = d_o.bbox().union(d_s.bbox());
                write_atomic(&dir.join("heatmap_original.csv"), heatmap_csv(&d_o, &bbox, HEATMAP_SIZE)?.as_bytes())?;
                write_atomic(&dir.join("heatmap_synthetic.csv"), heatmap_csv(&d_s, &bbox, HEATMAP_SIZE)?.as_bytes())?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Validate { config, overrides } => {
            let config = load_config(&config, &overrides)?;
            let problems = validate_config(&config);
            if !problems.is_empty() {
                return Err(Error::Config(problems));
            }
            println!("config is valid");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(problems)) => {
            for p in problems {
                eprintln!("config error: {p}");
            }
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) if e.is_config() => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
