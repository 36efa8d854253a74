use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use quatrope::checkpoint;
use quatrope::diagnose::{
    diagnose_scenes, proximity_agreement, saturation_case, score_case, DiagnoseConfig, ProbeKind,
};
use quatrope::encoding::{false_nearby_case, per_axis_pair_score};
use quatrope::igre::{MaskKind, ScoreMatrix, ScoreMatrixExport};
use quatrope::scenegen::{
    generate_dataset, knn_relation_recall, read_jsonl, relation_budget, write_jsonl, DatasetHeader,
    GenConfig, Relation, SceneRecord,
};
use quatrope::seeds::sha256_hex;
use quatrope::toy::{
    self, examples_from, experiment_data, paired_comparison, ExperimentConfig, PositionalMode,
    RunResult, TrainConfig,
};
use quatrope::{
    pair_score, Axis, Error, FrequencySpec, Result, SegmentFrequencyPlan, SegmentedVector,
    TokenRole,
};

#[derive(Parser)]
#[command(
    name = "quatrope",
    version,
    about = "3-D rotary encodings for object tokens"
)]
struct Cli {
    /// JSON file with parameters for the subcommand. Flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory. Defaults to runs/<subcommand>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite and print a pass/fail table.
    Selftest,
    /// Object-object score matrices for scenes in a JSONL file.
    Score(ScoreArgs),
    /// False-nearby agreement per aspect-ratio stratum.
    Diagnose(DiagnoseArgs),
    /// Relation counts for full and KNN-pruned scene graphs.
    Budget(BudgetArgs),
    /// Generate synthetic scenes with grounding queries.
    Gen(GenArgs),
    /// Train the grounding model.
    Train(TrainArgs),
    /// Evaluate one or more checkpoints on held-out queries.
    Eval(EvalArgs),
    /// Train and evaluate every positional mode over several seeds.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// Scene JSONL file.
    scene: Option<PathBuf>,
    #[arg(long)]
    frequency: Option<f64>,
    #[arg(long)]
    segments: Option<usize>,
    /// Also emit independent per-axis rotation scores.
    #[arg(long)]
    per_axis: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    frequency: Option<f64>,
}

#[derive(Args)]
struct BudgetArgs {
    n: Option<u64>,
    k: Option<u64>,
    /// Scene JSONL file; when given, KNN recall of its queries is reported.
    #[arg(long)]
    scenes: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n_scenes: Option<usize>,
    #[arg(long)]
    queries_per_scene: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training scenes (JSONL). Generated from the seed when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    mode: Option<PositionalMode>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint files.
    checkpoints: Vec<PathBuf>,
    /// Held-out scenes (JSONL). Generated per checkpoint seed when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ScoreParams {
    scene: Option<PathBuf>,
    frequency: f64,
    segments: usize,
    base_vector: [f64; 3],
    per_axis: bool,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            scene: None,
            frequency: FrequencySpec::DEFAULT,
            segments: 3,
            base_vector: [1.0, 0.0, 0.0],
            per_axis: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BudgetParams {
    n: u64,
    k: u64,
    scenes: Option<PathBuf>,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self {
            n: 554,
            k: 2,
            scenes: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainParams {
    data: Option<PathBuf>,
    relations: Vec<Relation>,
    train_scenes: usize,
    gen: GenConfig,
    train: TrainConfig,
}

impl Default for TrainParams {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            data: None,
            relations: e.relations,
            train_scenes: e.train_scenes,
            gen: e.gen,
            train: e.train,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalParams {
    checkpoints: Vec<PathBuf>,
    data: Option<PathBuf>,
    relations: Vec<Relation>,
    eval_queries: usize,
    low_delta: f64,
    gen: GenConfig,
}

impl Default for EvalParams {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            checkpoints: Vec::new(),
            data: None,
            relations: e.relations,
            eval_queries: e.eval_queries,
            low_delta: e.low_delta,
            gen: e.gen,
        }
    }
}

#[derive(Serialize)]
struct Resolved<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    threads: usize,
    params: &'a P,
}

struct Run {
    seed: u64,
    threads: usize,
    out: PathBuf,
}

impl Run {
    fn start<P: Serialize>(&self, command: &str, params: &P) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        let resolved = Resolved {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.seed,
            threads: self.threads,
            params,
        };
        write_json(&self.out.join("resolved_config.json"), &resolved)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn load_params<P: DeserializeOwned + Default>(path: Option<&Path>) -> Result<P> {
    let Some(path) = path else {
        return Ok(P::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_scenes(path: &Path) -> Result<(Option<DatasetHeader>, Vec<SceneRecord>)> {
    read_jsonl(
        BufReader::new(File::open(path)?),
        &path.display().to_string(),
    )
}

fn round10(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

/// `12345` -> `"12,345"`.
fn grouped(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[derive(Serialize)]
struct SceneScores {
    scene_id: u64,
    quatrope: ScoreMatrixExport,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_axis: Option<ScoreMatrixExport>,
}

fn cmd_score(run: &Run, cli: &Cli, args: &ScoreArgs) -> Result<i32> {
    let mut p: ScoreParams = load_params(cli.config.as_deref())?;
    if let Some(s) = &args.scene {
        p.scene = Some(s.clone());
    }
    if let Some(f) = args.frequency {
        p.frequency = f;
    }
    if let Some(s) = args.segments {
        p.segments = s;
    }
    p.per_axis |= args.per_axis;
    let path = p
        .scene
        .clone()
        .ok_or_else(|| Error::Config("score needs a scene file".into()))?;
    let spec = FrequencySpec::uniform(p.frequency)?;
    let plan = SegmentFrequencyPlan::constant(spec, p.segments);
    let probe = SegmentedVector::tiled(p.base_vector, p.segments)?;
    if p.per_axis && !p.segments.is_multiple_of(3) {
        return Err(Error::AxisGrouping {
            segments: p.segments,
        });
    }
    let (_, records) = read_scenes(&path)?;
    run.start("score", &p)?;
    let mut out = Vec::with_capacity(records.len());
    for r in &records {
        let scene = &r.scene;
        let wrapping = spec.wrapping_axes(scene.extent.span());
        if !wrapping.is_empty() {
            let axes: String = wrapping.iter().map(|a| a.label()).collect();
            eprintln!(
                "warning: wrapping risk in scene {}: frequency {} exceeds a half turn across the extent on axes {axes}",
                scene.scene_id, p.frequency
            );
        }
        let roles: Vec<TokenRole> = scene
            .objects
            .iter()
            .map(|o| TokenRole::Object {
                position: o.center,
                object_id: o.object_id,
            })
            .collect();
        let seq: Vec<usize> = (0..roles.len()).collect();
        let n = scene.len();
        let centers: Vec<_> = scene.objects.iter().map(|o| o.center).collect();
        let matrix =
            |f: &(dyn Fn(usize, usize) -> Result<f64> + Sync)| -> Result<ScoreMatrixExport> {
                let m = ScoreMatrix::build(n, MaskKind::Full, |i, j| {
                    f(i, j).map(round10).unwrap_or(f64::NAN)
                });
                if m.logits.iter().any(|v| v.is_nan()) {
                    return Err(Error::NonFinite("score matrix"));
                }
                Ok(ScoreMatrixExport::new(&m, &roles, &seq, 1.0))
            };
        let quatrope = matrix(&|i, j| pair_score(&probe, &probe, centers[i], centers[j], &plan))?;
        let per_axis = if p.per_axis {
            Some(matrix(&|i, j| {
                per_axis_pair_score(&probe, &probe, centers[i], centers[j], &plan)
            })?)
        } else {
            None
        };
        out.push(SceneScores {
            scene_id: scene.scene_id,
            quatrope,
            per_axis,
        });
    }
    write_json(&run.path("scores.json"), &out)?;
    println!(
        "wrote {} score matrices to {}",
        out.len(),
        run.path("scores.json").display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct CaseReport {
    label: &'static str,
    probe: ProbeKind,
    quatrope_far: f64,
    quatrope_near: f64,
    per_axis_far: f64,
    per_axis_near: f64,
    quatrope_correct: bool,
    per_axis_correct: bool,
}

fn cmd_diagnose(run: &Run, cli: &Cli, args: &DiagnoseArgs) -> Result<i32> {
    let mut p: DiagnoseConfig = load_params(cli.config.as_deref())?;
    if let Some(n) = args.scenes {
        p.n_scenes = n;
    }
    if let Some(f) = args.frequency {
        p.frequency = f;
    }
    run.start("diagnose", &p)?;
    let spec = FrequencySpec::uniform(p.frequency)?;
    let scenes = diagnose_scenes(run.seed, &p)?;
    let rows = proximity_agreement(&scenes, spec);
    let mut w = csv::Writer::from_path(run.path("strata.csv"))?;
    w.write_record([
        "stratum",
        "quatrope_agreement",
        "per_axis_agreement",
        "n",
        "pairs",
    ])?;
    for r in &rows {
        w.write_record([
            r.threshold.to_string(),
            format!("{:.6}", r.quatrope_agreement),
            format!("{:.6}", r.per_axis_agreement),
            r.n.to_string(),
            r.pairs.to_string(),
        ])?;
        println!(
            "delta<={:<5} quatrope={:.4} per_axis={:.4} n={}",
            r.threshold, r.quatrope_agreement, r.per_axis_agreement, r.n
        );
    }
    w.flush()?;

    let mut cases = Vec::new();
    let constructed = false_nearby_case(p.near_distance, p.far_distance, Axis::Z)?;
    let saturated = saturation_case(Axis::X, spec.fx, 2.6)?;
    for (label, case) in [("constructed", constructed), ("saturated", saturated)] {
        for probe in [ProbeKind::AllOnes, ProbeKind::Neutral] {
            let s = score_case(&case, spec, probe)?;
            cases.push(CaseReport {
                label,
                probe,
                quatrope_far: s.quatrope_far,
                quatrope_near: s.quatrope_near,
                per_axis_far: s.per_axis_far,
                per_axis_near: s.per_axis_near,
                quatrope_correct: s.quatrope_correct(),
                per_axis_correct: s.per_axis_correct(),
            });
        }
    }
    write_json(&run.path("false_nearby.json"), &cases)?;
    Ok(0)
}

#[derive(Serialize)]
struct BudgetReport {
    #[serde(flatten)]
    budget: quatrope::scenegen::RelationBudget,
    queries: usize,
}

fn cmd_budget(run: &Run, cli: &Cli, args: &BudgetArgs) -> Result<i32> {
    let mut p: BudgetParams = load_params(cli.config.as_deref())?;
    if let Some(n) = args.n {
        p.n = n;
    }
    if let Some(k) = args.k {
        p.k = k;
    }
    if let Some(s) = &args.scenes {
        p.scenes = Some(s.clone());
    }
    run.start("budget", &p)?;
    let mut budget = relation_budget(p.n, p.k)?;
    let mut queries = 0;
    if let Some(path) = &p.scenes {
        let (_, records) = read_scenes(path)?;
        let mut hits = 0.0;
        for r in &records {
            hits +=
                knn_relation_recall(&r.scene, &r.queries, p.k as usize) * r.queries.len() as f64;
            queries += r.queries.len();
        }
        budget.knn_recall = Some(if queries == 0 {
            1.0
        } else {
            hits / queries as f64
        });
    }
    println!("n={} k={}", budget.n_objects, budget.k);
    println!("full={}", grouped(budget.full_pair_count));
    println!("directed={}", grouped(budget.directed_pair_count));
    println!("knn_edges={}", grouped(budget.knn_edge_count));
    if let Some(r) = budget.knn_recall {
        println!("knn_recall={r:.4} over {queries} queries");
    }
    write_json(&run.path("budget.json"), &BudgetReport { budget, queries })?;
    Ok(0)
}

fn cmd_gen(run: &Run, cli: &Cli, args: &GenArgs) -> Result<i32> {
    let mut p: GenConfig = load_params(cli.config.as_deref())?;
    if let Some(n) = args.n_scenes {
        p.n_scenes = n;
    }
    if let Some(q) = args.queries_per_scene {
        p.queries_per_scene = q;
    }
    p.validate()?;
    run.start("gen", &p)?;
    let records = generate_dataset(run.seed, &p)?;
    let path = run.path("scenes.jsonl");
    let w = BufWriter::new(File::create(&path)?);
    write_jsonl(w, &DatasetHeader::new(run.seed, p), &records)?;
    let queries: usize = records.iter().map(|r| r.queries.len()).sum();
    println!(
        "wrote {} scenes, {queries} queries to {}",
        records.len(),
        path.display()
    );
    Ok(0)
}

fn cmd_train(run: &Run, cli: &Cli, args: &TrainArgs) -> Result<i32> {
    let mut p: TrainParams = load_params(cli.config.as_deref())?;
    if let Some(d) = &args.data {
        p.data = Some(d.clone());
    }
    if let Some(m) = args.mode {
        p.train.mode = m;
    }
    if let Some(s) = args.steps {
        p.train.steps = s;
    }
    if let Some(lr) = args.learning_rate {
        p.train.learning_rate = lr;
    }
    p.train.seed = run.seed;
    p.train.validate()?;
    run.start("train", &p)?;
    let examples = match &p.data {
        Some(path) => examples_from(&read_scenes(path)?.1, &p.relations),
        None => {
            let e = ExperimentConfig {
                relations: p.relations.clone(),
                train_scenes: p.train_scenes,
                eval_queries: 0,
                gen: p.gen.clone(),
                ..ExperimentConfig::default()
            };
            experiment_data(&e, run.seed)?.0
        }
    };
    let outcome = toy::train(&examples, &p.train)?;
    let ckpt = run.path("checkpoint.bin");
    checkpoint::save(&ckpt, &outcome.params, &p.train)?;
    let mut w = csv::Writer::from_path(run.path("curve.csv"))?;
    w.write_record(["step", "loss"])?;
    for (step, loss) in outcome.curve.iter().enumerate() {
        w.write_record([step.to_string(), format!("{loss:.17e}")])?;
    }
    w.flush()?;
    let digest = sha256_hex(&std::fs::read(&ckpt)?);
    let last = outcome.curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} on {} examples, final batch loss {last:.4}, checkpoint sha256 {digest}",
        p.train.mode.name(),
        examples.len()
    );
    Ok(0)
}

#[derive(Serialize)]
struct EvalRow {
    checkpoint: PathBuf,
    #[serde(flatten)]
    result: RunResult,
}

#[derive(Serialize)]
struct SeedGap {
    seed: u64,
    mode: PositionalMode,
    minus_none: f64,
}

fn cmd_eval(run: &Run, cli: &Cli, args: &EvalArgs) -> Result<i32> {
    let mut p: EvalParams = load_params(cli.config.as_deref())?;
    if !args.checkpoints.is_empty() {
        p.checkpoints = args.checkpoints.clone();
    }
    if let Some(d) = &args.data {
        p.data = Some(d.clone());
    }
    if p.checkpoints.is_empty() {
        return Err(Error::Config("eval needs at least one checkpoint".into()));
    }
    run.start("eval", &p)?;
    let fixed = match &p.data {
        Some(path) => Some(examples_from(&read_scenes(path)?.1, &p.relations)),
        None => None,
    };
    let mut rows = Vec::new();
    for path in &p.checkpoints {
        let (header, params) = checkpoint::load(path)?;
        let data = match &fixed {
            Some(d) => d.clone(),
            None => {
                let e = ExperimentConfig {
                    relations: p.relations.clone(),
                    train_scenes: 0,
                    eval_queries: p.eval_queries,
                    gen: p.gen.clone(),
                    ..ExperimentConfig::default()
                };
                experiment_data(&e, header.seed)?.1
            }
        };
        let hits = toy::predictions(&params, &data, &header.config)?;
        let low: Vec<bool> = toy::low_delta_subset(&data, p.low_delta)
            .into_iter()
            .map(|i| hits[i])
            .collect();
        let result = RunResult {
            seed: header.seed,
            mode: header.config.mode,
            accuracy: toy::accuracy(&hits),
            low_delta_accuracy: toy::accuracy(&low),
            low_delta_n: low.len(),
            final_loss: f64::NAN,
            chance: toy::chance_level(&data),
        };
        println!(
            "{} seed={} mode={} accuracy={:.4} low_delta={:.4} (n={}) chance={:.4}",
            path.display(),
            result.seed,
            result.mode.name(),
            result.accuracy,
            result.low_delta_accuracy,
            result.low_delta_n,
            result.chance
        );
        rows.push(EvalRow {
            checkpoint: path.clone(),
            result,
        });
    }
    let mut gaps = Vec::new();
    for row in &rows {
        let r = &row.result;
        if let Some(none) = rows
            .iter()
            .find(|o| o.result.seed == r.seed && o.result.mode == PositionalMode::None)
        {
            if r.mode != PositionalMode::None {
                let minus_none = r.accuracy - none.result.accuracy;
                println!(
                    "seed={} {} - none = {:+.4}",
                    r.seed,
                    r.mode.name(),
                    minus_none
                );
                gaps.push(SeedGap {
                    seed: r.seed,
                    mode: r.mode,
                    minus_none,
                });
            }
        }
    }
    #[derive(Serialize)]
    struct Report<'a> {
        runs: &'a [EvalRow],
        gaps: &'a [SeedGap],
    }
    write_json(
        &run.path("eval.json"),
        &Report {
            runs: &rows,
            gaps: &gaps,
        },
    )?;
    Ok(0)
}

fn cmd_experiment(run: &Run, cli: &Cli, args: &ExperimentArgs) -> Result<i32> {
    let mut p: ExperimentConfig = load_params(cli.config.as_deref())?;
    if let Some(s) = args.steps {
        p.train.steps = s;
    }
    if let Some(seeds) = &args.seeds {
        p.seeds = seeds.clone();
    }
    p.train.validate()?;
    run.start("experiment", &p)?;
    let results = toy::run_experiment(&p)?;
    let mut w = csv::Writer::from_path(run.path("runs.csv"))?;
    w.write_record([
        "seed",
        "mode",
        "accuracy",
        "low_delta_accuracy",
        "low_delta_n",
        "final_loss",
        "chance",
    ])?;
    for r in &results {
        w.write_record([
            r.seed.to_string(),
            r.mode.name().to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.low_delta_accuracy),
            r.low_delta_n.to_string(),
            format!("{:.6}", r.final_loss),
            format!("{:.6}", r.chance),
        ])?;
        println!(
            "seed={} {:<15} acc={:.4} low_delta={:.4} loss={:.4}",
            r.seed,
            r.mode.name(),
            r.accuracy,
            r.low_delta_accuracy,
            r.final_loss
        );
    }
    w.flush()?;
    use PositionalMode::*;
    let comparisons = vec![
        paired_comparison(&results, QuatropeIgre, None, false),
        paired_comparison(&results, QuatropeIgre, PerAxis, true),
        paired_comparison(&results, QuatropeIgre, PerAxis, false),
        paired_comparison(&results, PerAxis, RawCoordsAdd, false),
        paired_comparison(&results, RawCoordsAdd, None, false),
    ];
    for c in &comparisons {
        println!(
            "{} vs {}: mean {:+.4}, wins {}/{}, sign-test p={:.4}",
            c.better.name(),
            c.worse.name(),
            c.mean_difference,
            c.wins,
            c.differences.len(),
            c.sign_test_p
        );
    }
    write_json(&run.path("comparisons.json"), &comparisons)?;
    Ok(0)
}

fn cmd_selftest() -> i32 {
    let results = quatrope::selftest::run();
    print!("{}", quatrope::selftest::render_table(&results));
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
    for f in &failed {
        eprintln!("failed invariant: {}/{}", f.group, f.name);
    }
    i32::from(!failed.is_empty())
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let name = match &cli.command {
        Command::Selftest => "selftest",
        Command::Score(_) => "score",
        Command::Diagnose(_) => "diagnose",
        Command::Budget(_) => "budget",
        Command::Gen(_) => "gen",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Experiment(_) => "experiment",
    };
    let run = Run {
        seed: cli.seed,
        threads: cli.threads,
        out: cli
            .out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(name)),
    };
    match &cli.command {
        Command::Selftest => Ok(cmd_selftest()),
        Command::Score(a) => cmd_score(&run, cli, a),
        Command::Diagnose(a) => cmd_diagnose(&run, cli, a),
        Command::Budget(a) => cmd_budget(&run, cli, a),
        Command::Gen(a) => cmd_gen(&run, cli, a),
        Command::Train(a) => cmd_train(&run, cli, a),
        Command::Eval(a) => cmd_eval(&run, cli, a),
        Command::Experiment(a) => cmd_experiment(&run, cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
