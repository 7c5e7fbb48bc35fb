use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sclm_core::adjudicator::{score_prompt, simulate_pool, ScorerKind, SelectionReport};
use sclm_core::config::{Config, DatasetSection};
use sclm_core::datagen::{dataset_suite, generate_dataset, write_datasets, DatasetConfig, DATASET_SIGMA, DATASET_WEIGHTS};
use sclm_core::dsl::RewardExpression;
use sclm_core::eval::{parse_records, run_matrix, write_outputs, Evaluator, Report};
use sclm_core::generator::{evolve, parse_pool, BackendKind, EvolveContext, PreferenceClause, PreferencePrompt, ReflectStrategy};
use sclm_core::par::{derive_seed, Execution};
use sclm_core::rmab::{compute_indices, RewardTable, RmabInstance, Simulator, WhittleCache};

#[derive(Parser)]
#[command(name = "sclm", version, about = "Reward design and social-choice selection for restless bandits")]
struct Cli {
    /// JSON config with dataset / generator / adjudicator / eval sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Template backend and mock or replayed language-model replies only.
    #[arg(long, global = true)]
    offline: bool,

    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic RMAB datasets and a checksum manifest.
    GenData(GenData),
    /// Whittle indices of every arm under a reward expression.
    Whittle(InstanceReward),
    /// Simulate the index policy of a reward expression.
    Simulate(Simulate),
    /// Run the evolutionary generator for a prompt and write the pool.
    Propose(Propose),
    /// Score a pool clause by clause and select with a welfare function.
    Adjudicate(Adjudicate),
    /// Evaluation metrics of one reward expression against the default policy.
    Evaluate(Evaluate),
    /// Run every method over datasets x instances x prompts.
    RunMatrix(RunMatrix),
    /// Rebuild the aggregate report from per-cell records.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenData {
    /// 1, 2 or 3; all three when omitted.
    #[arg(long)]
    dataset: Option<usize>,
    #[arg(long)]
    n_arms: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
    /// N = 2100, K = 210.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct InstanceReward {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "state")]
    reward: String,
}

#[derive(Args)]
struct Simulate {
    #[command(flatten)]
    target: InstanceReward,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Template,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReflectArg {
    Llm,
    Adjudicator,
}

#[derive(Args)]
struct Propose {
    #[arg(long)]
    instance: PathBuf,
    /// Prompt id, e.g. `A:low+C:high` or `A:low+noshift:B+maxutil`.
    #[arg(long)]
    prompt: String,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, value_enum)]
    reflect: Option<ReflectArg>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    proposals: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Simulator,
    Llm,
}

#[derive(Args)]
struct Adjudicate {
    #[arg(long)]
    instance: PathBuf,
    /// JSON-lines pool written by `propose`.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    prompt: String,
    /// utilitarian, nash, egalitarian or p=<value>; defaults to the config.
    #[arg(long)]
    welfare: Option<String>,
    #[arg(long, value_enum, default_value = "simulator")]
    scorer: ScorerArg,
    /// Proxy reward of a prioritisation clause, `A:low=<expression>`.
    /// Missing proxies come from a generator run on the singular prompt.
    #[arg(long)]
    proxy: Vec<String>,
}

#[derive(Args)]
struct Evaluate {
    #[command(flatten)]
    target: InstanceReward,
    #[arg(long)]
    prompt: String,
}

#[derive(Args)]
struct RunMatrix {
    /// Full-scale instances (N = 2100, K = 210).
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Records file; defaults to `<out-dir>/records.jsonl`.
    #[arg(long)]
    records: Option<PathBuf>,
}

struct Env {
    cfg: Config,
    out_dir: PathBuf,
    offline: bool,
    exec: Execution,
}

impl Env {
    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn seeds(&self) -> Vec<u64> {
        self.cfg.matrix_config(self.offline).scoring_seed_list()
    }

    fn simulator<'a>(&self, cache: &'a WhittleCache) -> Simulator<'a> {
        Simulator::new(self.cfg.adjudicator.solver, Some(cache), self.exec)
    }
}

fn load_instance(path: &Path) -> Result<RmabInstance> {
    RmabInstance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn parse_prompt(s: &str) -> Result<PreferencePrompt> {
    s.parse().with_context(|| format!("reading prompt {s:?}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.generator.master_seed = s;
    }
    if cli.offline {
        cfg.generator.backend = BackendKind::Template;
    }
    let env = Env {
        cfg,
        out_dir: cli.out_dir,
        offline: cli.offline,
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    match cli.command {
        Command::GenData(a) => gen_data(&env, a),
        Command::Whittle(a) => whittle(&env, a),
        Command::Simulate(a) => simulate(&env, a),
        Command::Propose(a) => propose(&env, a),
        Command::Adjudicate(a) => adjudicate(&env, a),
        Command::Evaluate(a) => evaluate(&env, a),
        Command::RunMatrix(a) => matrix(&env, a),
        Command::Report(a) => report(&env, a),
    }
}

fn dataset_section(env: &Env, full_scale: bool) -> DatasetSection {
    if full_scale {
        DatasetSection { datasets: env.cfg.dataset.datasets.clone(), ..DatasetSection::full_scale() }
    } else {
        env.cfg.dataset.clone()
    }
}

fn gen_data(env: &Env, a: GenData) -> Result<()> {
    let mut section = dataset_section(env, a.full_scale);
    section.n_arms = a.n_arms.unwrap_or(section.n_arms);
    section.budget = a.budget.unwrap_or(section.budget);
    section.horizon = a.horizon.unwrap_or(section.horizon);
    section.n_instances = a.instances.unwrap_or(section.n_instances);
    let shape = section.shape();
    let datasets = match a.dataset {
        None => dataset_suite(env.cfg.seed, &shape, env.exec)?,
        Some(d) if (1..=3).contains(&d) => {
            let cfg = DatasetConfig {
                weights: DATASET_WEIGHTS[d - 1],
                sigma: DATASET_SIGMA,
                master_seed: derive_seed(env.cfg.seed, d as u64),
                ..shape
            };
            vec![generate_dataset(d, &cfg, env.exec)?]
        }
        Some(d) => bail!("--dataset must be 1, 2 or 3, got {d}"),
    };
    let manifest = write_datasets(&datasets, &env.out_dir)?;
    for e in &manifest.instances {
        println!("{}  {}  clamp={:.3}", e.sha256, e.path, e.clamp_rate);
    }
    println!("wrote {}", env.out_dir.join("manifest.json").display());
    Ok(())
}

fn reward_table(inst: &RmabInstance, src: &str) -> Result<(RewardExpression, RewardTable)> {
    let expr = RewardExpression::parse(src, inst.schema.len())?;
    if let Err(e) = expr.check_monotone(inst) {
        log::warn!("{e}");
    }
    let table = expr.to_reward_table(inst)?;
    Ok((expr, table))
}

fn whittle(env: &Env, a: InstanceReward) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let (_, table) = reward_table(&inst, &a.reward)?;
    let set = compute_indices(&inst, &table, &env.cfg.adjudicator.solver, None, env.exec)?;
    if !set.flagged.is_empty() {
        log::warn!("{} arm(s) hit the subsidy bracket", set.flagged.len());
    }
    env.write("whittle.json", &(serde_json::to_string_pretty(&set)? + "\n"))?;
    Ok(())
}

fn simulate(env: &Env, a: Simulate) -> Result<()> {
    let inst = load_instance(&a.target.instance)?;
    let (_, table) = reward_table(&inst, &a.target.reward)?;
    let cfg = sclm_core::eval::MatrixConfig { scoring_seeds: a.seeds, ..env.cfg.matrix_config(env.offline) };
    let seeds = cfg.scoring_seed_list();
    let cache = WhittleCache::new(env.cfg.adjudicator.solver);
    let out = env.simulator(&cache).run(&inst, &table, std::slice::from_ref(&table), &seeds)?;
    println!("discounted total: {:.4}", out.totals[0]);
    print!("{}", out.utility.describe());
    env.write("simulation.json", &(serde_json::to_string_pretty(&out)? + "\n"))?;
    env.write("utility.csv", &out.utility.to_csv())?;
    Ok(())
}

fn propose(env: &Env, a: Propose) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let prompt = parse_prompt(&a.prompt)?;
    let mut gcfg = env.cfg.generator.clone();
    gcfg.backend = match a.backend {
        Some(BackendArg::Llm) if env.offline => bail!("--backend llm needs a network backend; drop --offline"),
        Some(BackendArg::Llm) => BackendKind::Llm,
        Some(BackendArg::Template) => BackendKind::Template,
        None => gcfg.backend,
    };
    gcfg.reflect = match a.reflect {
        Some(ReflectArg::Llm) => ReflectStrategy::Llm,
        Some(ReflectArg::Adjudicator) => ReflectStrategy::Adjudicator,
        None => gcfg.reflect,
    };
    gcfg.rounds = a.rounds.unwrap_or(gcfg.rounds);
    gcfg.proposals_per_round = a.proposals.unwrap_or(gcfg.proposals_per_round);
    let client = env.cfg.eval.llm.client(env.offline)?;
    let cache = WhittleCache::new(env.cfg.adjudicator.solver);
    let seeds = env.seeds();
    let ctx = EvolveContext { sim: env.simulator(&cache), seeds: &seeds, llm: Some(&client) };
    let pool = evolve(&inst, &prompt, &gcfg, &ctx)?;
    for c in &pool.candidates {
        let mark = if pool.round_choices.contains(&c.id) { "*" } else { " " };
        println!("{mark} {:>2} r{} {}", c.id, c.round, c.expression.source());
    }
    env.write("pool.jsonl", &pool.to_jsonl())?;
    env.write("pool_manifest.json", &(serde_json::to_string_pretty(&pool.manifest())? + "\n"))?;
    Ok(())
}

fn proxy_for(env: &Env, inst: &RmabInstance, clause: &PreferenceClause, given: &[(String, String)]) -> Result<RewardExpression> {
    let label = clause.label();
    let id = PreferencePrompt { clauses: vec![clause.clone()] }.id();
    if let Some((_, src)) = given.iter().find(|(k, _)| *k == id || *k == label) {
        return Ok(RewardExpression::parse(src, inst.schema.len())?);
    }
    log::info!("generating proxy reward for {label}");
    let mut gcfg = env.cfg.generator.clone();
    gcfg.reflect = ReflectStrategy::Llm;
    let client = env.cfg.eval.llm.client(env.offline)?;
    let cache = WhittleCache::new(env.cfg.adjudicator.solver);
    let seeds = env.seeds();
    let ctx = EvolveContext { sim: env.simulator(&cache), seeds: &seeds, llm: Some(&client) };
    let pool = evolve(inst, &PreferencePrompt { clauses: vec![clause.clone()] }, &gcfg, &ctx)?;
    Ok(pool.final_choice().context("empty proxy pool")?.expression.clone())
}

fn adjudicate(env: &Env, a: Adjudicate) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let prompt = parse_prompt(&a.prompt)?;
    prompt.validate(&inst.schema)?;
    let text = std::fs::read_to_string(&a.pool).with_context(|| format!("reading {}", a.pool.display()))?;
    let records = parse_pool(&text)?;
    let pool = records.iter().map(|r| r.parse(inst.schema.len())).collect::<Result<Vec<_>, _>>()?;
    let sources: Vec<String> = pool.iter().map(|e| e.source().to_string()).collect();
    let given = a
        .proxy
        .iter()
        .map(|p| p.split_once('=').map(|(k, v)| (k.trim().to_string(), v.to_string())).context("--proxy expects CLAUSE=EXPR"))
        .collect::<Result<Vec<_>>>()?;

    let mut tables = Vec::new();
    let mut index = Vec::new();
    let kind = match a.scorer {
        ScorerArg::Simulator => ScorerKind::Simulator,
        ScorerArg::Llm => ScorerKind::Llm,
    };
    for clause in &prompt.clauses {
        if kind == ScorerKind::Simulator && matches!(clause, PreferenceClause::Prioritize { .. }) {
            index.push(Some(tables.len()));
            tables.push(proxy_for(env, &inst, clause, &given)?.to_reward_table(&inst)?);
        } else {
            index.push(None);
        }
    }
    let cache = WhittleCache::new(env.cfg.adjudicator.solver);
    let seeds = env.seeds();
    let sim = simulate_pool(&inst, &pool, &tables, &seeds, &env.simulator(&cache))?;
    let client = env.cfg.eval.llm.client(env.offline)?;
    let llm = (kind == ScorerKind::Llm).then_some((&client, sources.as_slice()));
    let matrix = score_prompt(&prompt, &sim, &index, kind, llm)?;
    let welfare = match &a.welfare {
        Some(w) => sclm_core::adjudicator::WelfareFunction::from_name(w)?,
        None => env.cfg.adjudicator.welfare()?,
    };
    let report = SelectionReport::new(&matrix, &welfare, Some(&sources))?;
    println!("{} chose #{}: {}", report.welfare_function, report.chosen, sources[report.chosen]);
    env.write("scores.csv", &matrix.to_csv())?;
    env.write("selection.json", &(report.to_json() + "\n"))?;
    Ok(())
}

fn evaluate(env: &Env, a: Evaluate) -> Result<()> {
    let inst = load_instance(&a.target.instance)?;
    let prompt = parse_prompt(&a.prompt)?;
    prompt.validate(&inst.schema)?;
    let (expr, _) = reward_table(&inst, &a.target.reward)?;
    let cfg = env.cfg.matrix_config(env.offline);
    let seeds = cfg.eval_seed_list();
    let cache = WhittleCache::new(env.cfg.adjudicator.solver);
    let evaluator = Evaluator::new(&inst, &seeds, env.simulator(&cache))?;
    let metrics = evaluator.evaluate(&expr, &prompt, &cfg.ks)?;
    for s in &metrics.scores {
        println!("k={}: clauses {:?} sum {:.3} min {:.3}", s.k, s.clauses, s.sum, s.min);
    }
    println!("shift {:.4}  utility change {:.3}%", metrics.shift, metrics.utility_change);
    env.write("evaluation.json", &(serde_json::to_string_pretty(&metrics)? + "\n"))?;
    Ok(())
}

fn matrix(env: &Env, a: RunMatrix) -> Result<()> {
    let section = dataset_section(env, a.full_scale);
    let shape = section.shape();
    let suite = dataset_suite(env.cfg.seed, &shape, env.exec)?;
    let datasets: Vec<_> = suite.into_iter().filter(|d| section.datasets.contains(&d.id)).collect();
    let prompts = env.cfg.prompts();
    let cfg = env.cfg.matrix_config(env.offline);
    let started = std::time::Instant::now();
    let out = run_matrix(&datasets, &prompts, &cfg, env.exec)?;
    log::info!("run matrix finished in {:.1?}", started.elapsed());
    for path in write_outputs(&out, &env.out_dir)? {
        println!("wrote {}", path.display());
    }
    print!("{}", out.report.to_csv());
    Ok(())
}

fn report(env: &Env, a: ReportArgs) -> Result<()> {
    let path = a.records.unwrap_or_else(|| env.out_dir.join("records.jsonl"));
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = Report::from_records(&parse_records(&text)?);
    env.write("report.json", &report.to_json())?;
    env.write("report.csv", &report.to_csv())?;
    Ok(())
}
