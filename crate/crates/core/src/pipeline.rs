//! End-to-end runs: configuration, the synthesis pipeline, and repeated
//! experiments with metric aggregation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discretization::{
    build_two_layer_grid, choose_first_layer_k, dataset_to_states, DensityVector, GridParams,
    TwoLayerGrid, DEFAULT_KAPPA_DENOM,
};
use crate::error::{Error, Result};
use crate::generation::{
    default_max_len, default_thresholds, generate_dataset, Generator, ModelPolicy, SelectionThresholds,
    StartSource, WalkStats,
};
use crate::geometry::TrajectoryDataset;
use crate::io::{format_trajectories, read_trajectories, write_atomic};
use crate::markov::{augment, learn_model, AugmentedSequence, ReleasedModel, Sym};
use crate::metrics::{evaluate, heatmap_csv, MetricParams, MetricReport, METRIC_NAMES};
use crate::privacy::{ledger, split_budget, LedgerEntry, PrivacyBudget, DEFAULT_RATIOS};
use crate::rng::Rng;
use crate::synthgen::{builtin_world, generate_toy_dataset, BUILTIN_WORLDS};
use crate::trip::{
    build_state_graph, estimate_trip_distribution_with, shortest_path_lengths, SolverOptions, SolverReport,
    TripMatrix,
};

pub const DEFAULT_WORLD: &str = "corridor";
pub const HEATMAP_SIZE: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TripEstimation {
    #[default]
    Optimized,
    RawStartEnd,
}

/// Component switches. The default is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub model: ModelPolicy,
    pub second_layer_states: bool,
    pub trip_estimation: TripEstimation,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            model: ModelPolicy::Adaptive,
            second_layer_states: true,
            trip_estimation: TripEstimation::Optimized,
        }
    }
}

pub const ABLATION_PRESETS: [&str; 5] = ["ablation1", "ablation2", "ablation3", "ablation4", "ablation5"];

impl Ablation {
    pub fn preset(name: &str) -> Option<Self> {
        let reduced = |model| Ablation {
            model,
            second_layer_states: false,
            trip_estimation: TripEstimation::RawStartEnd,
        };
        Some(match name {
            "ablation1" => reduced(ModelPolicy::FirstOnly),
            "ablation2" => reduced(ModelPolicy::SecondOnly),
            "ablation3" => reduced(ModelPolicy::Adaptive),
            "ablation4" => Ablation {
                second_layer_states: true,
                ..reduced(ModelPolicy::Adaptive)
            },
            "ablation5" => Ablation::default(),
            _ => return None,
        })
    }

    /// Names of the switches that differ from the full method.
    pub fn diff_from_full(&self) -> Vec<String> {
        let full = Ablation::default();
        let mut v = Vec::new();
        if self.model != full.model {
            v.push("model".to_string());
        }
        if self.second_layer_states != full.second_layer_states {
            v.push("second_layer_states".to_string());
        }
        if self.trip_estimation != full.trip_estimation {
            v.push("trip_estimation".to_string());
        }
        v
    }
}

/// Either a preset name (`"ablation1"` … `"ablation5"`) or explicit switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AblationSetting {
    Preset(String),
    Custom(Ablation),
}

impl Default for AblationSetting {
    fn default() -> Self {
        AblationSetting::Custom(Ablation::default())
    }
}

impl AblationSetting {
    pub fn resolve(&self) -> Result<Ablation> {
        match self {
            AblationSetting::Custom(a) => Ok(*a),
            AblationSetting::Preset(name) => Ablation::preset(name).ok_or_else(|| {
                Error::Config(vec![format!(
                    "unknown ablation preset '{name}' (known: {})",
                    ABLATION_PRESETS.join(", ")
                )])
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Trajectory file; when absent a builtin world is generated.
    pub input_path: Option<PathBuf>,
    pub world: Option<String>,
    /// Size of the generated world dataset (builtin default when absent).
    pub toy_trajectories: Option<usize>,
    pub epsilon: f64,
    pub ratios: [f64; 3],
    /// Trajectories per first-layer cell, `K = round(sqrt(n / c))`.
    pub c: Option<f64>,
    /// Fixes `K` directly, overriding `c`.
    pub first_layer_k: Option<usize>,
    pub pop: Option<f64>,
    pub kappa_denom: f64,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub n_syn: Option<usize>,
    pub max_len: Option<usize>,
    pub seed: u64,
    pub repetitions: usize,
    pub metrics: MetricParams,
    pub ablation: AblationSetting,
    pub dense_order2: bool,
    pub noise_disabled: bool,
    pub unsafe_no_dp: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_path: None,
            world: None,
            toy_trajectories: None,
            epsilon: 1.0,
            ratios: DEFAULT_RATIOS,
            c: None,
            first_layer_k: None,
            pop: None,
            kappa_denom: DEFAULT_KAPPA_DENOM,
            theta1: None,
            theta2: None,
            n_syn: None,
            max_len: None,
            seed: 0,
            repetitions: 10,
            metrics: MetricParams::default(),
            ablation: AblationSetting::default(),
            dense_order2: false,
            noise_disabled: false,
            unsafe_no_dp: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("invalid config: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    pub fn world_name(&self) -> Option<&str> {
        match (&self.input_path, &self.world) {
            (Some(_), _) => None,
            (None, Some(w)) => Some(w.as_str()),
            (None, None) => Some(DEFAULT_WORLD),
        }
    }

    pub fn budget(&self) -> Result<PrivacyBudget> {
        if self.noise_disabled {
            Ok(PrivacyBudget::disabled())
        } else {
            split_budget(self.epsilon, self.ratios)
        }
    }

    /// Hex SHA-256 prefix of the canonical JSON form, used to name the
    /// output directory.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// All problems with `config`; empty when it is valid.
pub fn validate_config(config: &RunConfig) -> Vec<String> {
    let mut d = Vec::new();
    if !(config.epsilon > 0.0) || !config.epsilon.is_finite() {
        d.push("epsilon must be positive".to_string());
    }
    if config.ratios.iter().any(|r| !(*r > 0.0)) {
        d.push("ratios must be positive".to_string());
    }
    if (config.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        d.push("ratios must sum to 1".to_string());
    }
    if config.input_path.is_some() && config.world.is_some() {
        d.push("set either input_path or world, not both".to_string());
    }
    if let Some(w) = config.world_name() {
        if !BUILTIN_WORLDS.contains(&w) {
            d.push(format!("unknown world '{w}' (known: {})", BUILTIN_WORLDS.join(", ")));
        }
    }
    if config.input_path.is_some() {
        if config.pop.is_none() {
            d.push("pop is required when reading trajectories from a file".to_string());
        }
        if config.c.is_none() && config.first_layer_k.is_none() {
            d.push("c or first_layer_k is required when reading trajectories from a file".to_string());
        }
        if config.toy_trajectories.is_some() {
            d.push("toy_trajectories only applies to builtin worlds".to_string());
        }
    }
    if matches!(config.toy_trajectories, Some(0)) {
        d.push("toy_trajectories must be at least 1".to_string());
    }
    if let Some(c) = config.c {
        if !(c > 0.0) || !c.is_finite() {
            d.push("c must be positive".to_string());
        }
    }
    if matches!(config.first_layer_k, Some(0)) {
        d.push("first_layer_k must be at least 1".to_string());
    }
    if let Some(pop) = config.pop {
        if !(pop > 0.0) || !pop.is_finite() {
            d.push("pop must be positive".to_string());
        }
    }
    if !(config.kappa_denom > 0.0) || !config.kappa_denom.is_finite() {
        d.push("kappa_denom must be positive".to_string());
    }
    if let Some(t) = config.theta1 {
        if !(t >= 0.0) || !t.is_finite() {
            d.push("theta1 must be nonnegative".to_string());
        }
    }
    if let Some(t) = config.theta2 {
        if !(t > 1.0) {
            d.push("theta2 must be greater than 1".to_string());
        }
    }
    if matches!(config.n_syn, Some(0)) {
        d.push("n_syn must be at least 1".to_string());
    }
    if matches!(config.max_len, Some(0)) {
        d.push("max_len must be at least 1".to_string());
    }
    if config.repetitions == 0 {
        d.push("repetitions must be at least 1".to_string());
    }
    if config.noise_disabled && !config.unsafe_no_dp {
        d.push("noise_disabled removes all privacy protection and requires unsafe_no_dp".to_string());
    }
    if let Err(Error::Config(mut v)) = config.ablation.resolve() {
        d.append(&mut v);
    }
    d.extend(config.metrics.validate());
    d
}

/// Parameters of one synthesis run, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSettings {
    pub budget: PrivacyBudget,
    pub k: usize,
    pub pop: f64,
    pub kappa_denom: f64,
    pub ablation: Ablation,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub n_syn: Option<usize>,
    pub max_len: Option<usize>,
    pub dense_order2: bool,
}

pub struct PipelineOutput {
    pub synthetic: TrajectoryDataset,
    pub grid: TwoLayerGrid,
    pub noisy_density: DensityVector,
    pub m1: ReleasedModel,
    pub m2: ReleasedModel,
    pub trips: Option<TripMatrix>,
    pub solver: Option<SolverReport>,
    pub thresholds: SelectionThresholds,
    pub max_len: usize,
    pub stats: WalkStats,
}

/// Start-row and end-column of the first-order model: the
/// length-normalized number of trajectories starting / ending in each state.
pub fn start_end_marginals(m1: &ReleasedModel) -> (Vec<f64>, Vec<f64>) {
    let m = m1.num_states();
    let b = match m1.row(&[Sym::Start]) {
        Some(r) => r[..m].to_vec(),
        None => vec![0.0; m],
    };
    let q = (0..m)
        .map(|s| m1.row(&[Sym::State(s as u32)]).map_or(0.0, |r| r[m]))
        .collect();
    (b, q)
}

/// Discretize, learn both models, estimate trips and generate.
pub fn synthesize(original: &TrajectoryDataset, s: &PipelineSettings, rng: &Rng) -> Result<PipelineOutput> {
    let budget = &s.budget;
    let params = GridParams {
        k: s.k,
        pop: s.pop,
        kappa_denom: s.kappa_denom,
        expand: s.ablation.second_layer_states,
    };
    let (grid, noisy_density) =
        build_two_layer_grid(original, &params, budget.epsilon1, &mut rng.derive("discretization"))?;
    let m = grid.num_states();
    let sequences: Vec<AugmentedSequence> = dataset_to_states(original, &grid)?
        .iter()
        .map(|s| augment(s))
        .collect::<Result<_>>()?;
    let m1 = learn_model(&sequences, 1, m, budget.epsilon2, false, &mut rng.derive("model-1"))?;
    let m2 = learn_model(&sequences, 2, m, budget.epsilon3, s.dense_order2, &mut rng.derive("model-2"))?;
    drop(sequences);

    let graph = build_state_graph(&grid);
    let lengths = shortest_path_lengths(&graph);
    let max_len = s.max_len.unwrap_or_else(|| default_max_len(lengths.max_length()));
    let (start, trips, solver) = match s.ablation.trip_estimation {
        TripEstimation::Optimized => {
            let (b, q) = start_end_marginals(&m1);
            let (t, report) = estimate_trip_distribution_with(
                &b,
                &q,
                &lengths.with_virtual_endpoints(),
                original.len() as f64,
                &SolverOptions::default(),
            )?;
            (StartSource::Trips(t.clone()), Some(t), Some(report))
        }
        TripEstimation::RawStartEnd => (StartSource::StartRow, None, None),
    };
    let defaults = default_thresholds(budget.epsilon2, m);
    let thresholds = SelectionThresholds {
        theta1: s.theta1.unwrap_or(defaults.theta1),
        theta2: s.theta2.unwrap_or(defaults.theta2),
    };
    let n_syn = s.n_syn.unwrap_or_else(|| match &trips {
        Some(t) => (t.total().round() as usize).max(1),
        None => original.len(),
    });
    let generator = Generator::new(&m1, &m2, &start, s.ablation.model, thresholds, max_len)?;
    let (synthetic, stats) = generate_dataset(&generator, &grid, n_syn, &rng.derive("generation"))?;
    drop(generator);
    Ok(PipelineOutput {
        synthetic,
        grid,
        noisy_density,
        m1,
        m2,
        trips,
        solver,
        thresholds,
        max_len,
        stats,
    })
}

/// The original dataset plus the defaults it implies.
pub struct LoadedInput {
    pub dataset: TrajectoryDataset,
    pub suggested_c: Option<f64>,
    pub suggested_pop: Option<f64>,
}

pub fn load_input(config: &RunConfig, root: &Rng) -> Result<LoadedInput> {
    match (&config.input_path, config.world_name()) {
        (Some(path), _) => Ok(LoadedInput {
            dataset: read_trajectories(path)?,
            suggested_c: None,
            suggested_pop: None,
        }),
        (None, Some(name)) => {
            let mut spec = builtin_world(name)?;
            if let Some(n) = config.toy_trajectories {
                spec = spec.with_size(n);
            }
            Ok(LoadedInput {
                dataset: generate_toy_dataset(&spec, &root.derive("dataset"))?,
                suggested_c: Some(spec.suggested_c),
                suggested_pop: Some(spec.suggested_pop),
            })
        }
        (None, None) => unreachable!("world_name is always set without an input path"),
    }
}

pub fn resolve_settings(config: &RunConfig, input: &LoadedInput) -> Result<PipelineSettings> {
    let n = input.dataset.len();
    let k = match (config.first_layer_k, config.c.or(input.suggested_c)) {
        (Some(k), _) => k,
        (None, Some(c)) => choose_first_layer_k(n, c),
        (None, None) => return Err(Error::Config(vec!["c or first_layer_k is required".into()])),
    };
    let pop = config
        .pop
        .or(input.suggested_pop)
        .ok_or_else(|| Error::Config(vec!["pop is required".into()]))?;
    Ok(PipelineSettings {
        budget: config.budget()?,
        k,
        pop,
        kappa_denom: config.kappa_denom,
        ablation: config.ablation.resolve()?,
        theta1: config.theta1,
        theta2: config.theta2,
        n_syn: config.n_syn,
        max_len: config.max_len,
        dense_order2: config.dense_order2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionSummary {
    pub repetition: usize,
    pub metrics: MetricReport,
    pub first_layer_k: usize,
    pub num_states: usize,
    pub expanded_cells: usize,
    pub n_syn: usize,
    pub max_len: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub walk_stats: WalkStats,
    pub solver: Option<SolverReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub original_trajectories: usize,
    /// Ablation switches that differ from the full method.
    pub ablation_diff: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub provenance: Provenance,
    pub budget: PrivacyBudget,
    pub privacy_ledger: Vec<LedgerEntry>,
    pub ablation: Ablation,
    pub repetitions: Vec<RepetitionSummary>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

/// Mean and sample standard deviation of each metric.
pub fn aggregate(reports: &[MetricReport]) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    let n = reports.len() as f64;
    for (i, name) in METRIC_NAMES.iter().enumerate() {
        let vals: Vec<f64> = reports.iter().map(|r| r.values()[i]).collect();
        let mu = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean.insert(name.to_string(), mu);
        std.insert(name.to_string(), var.sqrt());
    }
    (mean, std)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn run_repetition(
    k: usize,
    original: &TrajectoryDataset,
    settings: &PipelineSettings,
    config: &RunConfig,
    root: &Rng,
    dir: &Path,
) -> Result<RepetitionSummary> {
    let rng = root.derive("repetition").derive_index(k as u64);
    let out = synthesize(original, settings, &rng)?;
    let metrics = evaluate(original, &out.synthetic, &config.metrics, &mut rng.derive("metrics"))?;
    let rep_dir = dir.join(format!("rep{k}"));
    write_atomic(&rep_dir.join("synthetic.txt"), format_trajectories(&out.synthetic).as_bytes())?;
    write_atomic(&rep_dir.join("grid.txt"), out.grid.export_text().as_bytes())?;
    write_atomic(&rep_dir.join("model1.txt"), out.m1.dump_text().as_bytes())?;
    write_atomic(&rep_dir.join("model2.txt"), out.m2.dump_text().as_bytes())?;
    if let Some(t) = &out.trips {
        write_atomic(&rep_dir.join("trips.csv"), t.to_csv().as_bytes())?;
    }
    if config.metrics.heatmap {
        let bbox = original.bbox().union(out.synthetic.bbox());
        write_atomic(
            &rep_dir.join("heatmap_original.csv"),
            heatmap_csv(original, &bbox, HEATMAP_SIZE)?.as_bytes(),
        )?;
        write_atomic(
            &rep_dir.join("heatmap_synthetic.csv"),
            heatmap_csv(&out.synthetic, &bbox, HEATMAP_SIZE)?.as_bytes(),
        )?;
    }
    write_json(&rep_dir.join("metrics.json"), &metrics)?;
    Ok(RepetitionSummary {
        repetition: k,
        metrics,
        first_layer_k: settings.k,
        num_states: out.grid.num_states(),
        expanded_cells: out.grid.num_expanded(),
        n_syn: out.synthetic.len(),
        max_len: out.max_len,
        theta1: out.thresholds.theta1,
        theta2: out.thresholds.theta2,
        walk_stats: out.stats,
        solver: out.solver,
    })
}

/// Runs all repetitions and writes `out_dir/<config hash>/` with one
/// `rep<k>/` directory per repetition, `result.json`, and `timing.json`
/// (wall-clock times are kept apart so the other files are reproducible).
pub fn run_experiment(config: &RunConfig) -> Result<(ExperimentResult, PathBuf)> {
    let problems = validate_config(config);
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let started = SystemTime::now();
    let root = Rng::new(config.seed);
    let input = load_input(config, &root)?;
    let settings = resolve_settings(config, &input)?;
    let hash = config.hash();
    let dir = config.out_dir.join(&hash);
    let original = &input.dataset;
    if config.input_path.is_none() {
        write_atomic(&dir.join("original.txt"), format_trajectories(original).as_bytes())?;
    }
    write_json(&dir.join("config.json"), config)?;

    let repetitions: Vec<RepetitionSummary> = (0..config.repetitions)
        .into_par_iter()
        .map(|k| run_repetition(k, original, &settings, config, &root, &dir))
        .collect::<Result<_>>()?;
    let reports: Vec<MetricReport> = repetitions.iter().map(|r| r.metrics.clone()).collect();
    let (mean, std) = aggregate(&reports);
    let result = ExperimentResult {
        provenance: Provenance {
            config_hash: hash,
            seed: config.seed,
            original_trajectories: original.len(),
            ablation_diff: settings.ablation.diff_from_full(),
        },
        budget: settings.budget,
        privacy_ledger: ledger(&settings.budget),
        ablation: settings.ablation,
        repetitions,
        mean,
        std,
    };
    write_json(&dir.join("result.json"), &result)?;
    let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let timing = serde_json::json!({
        "started_unix": secs(started),
        "finished_unix": secs(SystemTime::now()),
    });
    write_json(&dir.join("timing.json"), &timing)?;
    Ok((result, dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(validate_config(&RunConfig::default()).is_empty());
        let parsed = RunConfig::from_json("{}").unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn diagnostics() {
        let bad_ratios = RunConfig {
            ratios: [0.5, 0.5, 0.5],
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&bad_ratios), vec!["ratios must sum to 1"]);
        let neg = RunConfig {
            epsilon: -1.0,
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&neg), vec!["epsilon must be positive"]);
        let unsafe_missing = RunConfig {
            noise_disabled: true,
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&unsafe_missing).len(), 1);
        let file = RunConfig {
            input_path: Some("x.txt".into()),
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&file).len(), 2);
        let preset = RunConfig {
            ablation: AblationSetting::Preset("ablation9".into()),
            ..RunConfig::default()
        };
        assert_eq!(validate_config(&preset).len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"epsilon": 1.0, "epsilonn": 2}"#).is_err());
    }

    #[test]
    fn ablation_presets() {
        let a3 = Ablation::preset("ablation3").unwrap();
        let a4 = Ablation::preset("ablation4").unwrap();
        let a5 = Ablation::preset("ablation5").unwrap();
        assert_eq!(a5, Ablation::default());
        assert_eq!(a4.diff_from_full(), vec!["trip_estimation"]);
        assert_eq!(a3.diff_from_full(), vec!["second_layer_states", "trip_estimation"]);
        assert_eq!(Ablation::preset("ablation1").unwrap().model, ModelPolicy::FirstOnly);
        assert_eq!(Ablation::preset("ablation2").unwrap().model, ModelPolicy::SecondOnly);
        let parsed = RunConfig::from_json(r#"{"ablation": "ablation2"}"#).unwrap();
        assert_eq!(parsed.ablation.resolve().unwrap().model, ModelPolicy::SecondOnly);
        let parsed = RunConfig::from_json(r#"{"ablation": {"model": "first_only"}}"#).unwrap();
        assert_eq!(parsed.ablation.resolve().unwrap().model, ModelPolicy::FirstOnly);
    }

    #[test]
    fn budget_follows_ratios() {
        let c = RunConfig {
            epsilon: 2.0,
            ..RunConfig::default()
        };
        let b = c.budget().unwrap();
        assert_eq!(b.epsilon1 + b.epsilon2 + b.epsilon3, 2.0);
    }

    #[test]
    fn hash_changes_with_config() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn aggregation() {
        let mk = |v: f64| MetricReport {
            length_jsd: v,
            diameter_jsd: v,
            density_are: v,
            pattern_are: v,
            bins: 50,
            queries: 500,
            mu: 200,
            mu_used: 200,
            phi: 1.0,
            radius_min: 0.05,
            radius_max: 0.25,
            pattern_grid: 20,
        };
        let (mean, std) = aggregate(&[mk(1.0), mk(3.0)]);
        assert_eq!(mean["pattern_are"], 2.0);
        assert!((std["pattern_are"] - 2f64.sqrt()).abs() < 1e-15);
        let (_, std) = aggregate(&[mk(1.0)]);
        assert_eq!(std["length_jsd"], 0.0);
    }
}
