use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::report::records_to_jsonl;
use super::suite::{plan_cells, Cell};
use super::{EvalError, EvaluationRecord, Evaluator, Extension, Method, Preset, Report};
use crate::adjudicator::{
    pareto_front, score_prompt, select, simulate_pool, PoolSimulation, ScoreMatrix, ScorerKind, WelfareFunction,
};
use crate::datagen::Dataset;
use crate::dsl::RewardExpression;
use crate::generator::llm::{HttpTransport, LlmClient, MockTransport, ReplayTransport};
use crate::generator::{
    evolve, CandidatePool, EvolveContext, GeneratorConfig, PreferenceClause, PreferencePrompt, ReflectStrategy,
    ReflectStyle,
};
use crate::par::{derive_seed, stable_hash, Execution};
use crate::rmab::{RewardTable, RmabInstance, Simulator, SolverConfig, WhittleCache};

/// Where language-model replies come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LlmSource {
    Mock { salt: u64 },
    Replay { path: PathBuf },
    Http { endpoint: String, timeout_secs: u64 },
}

impl Default for LlmSource {
    fn default() -> Self {
        LlmSource::Mock { salt: 0 }
    }
}

impl LlmSource {
    pub fn client(&self, offline: bool) -> Result<LlmClient, EvalError> {
        match self {
            LlmSource::Mock { salt } => Ok(LlmClient::new(Arc::new(MockTransport::new(*salt)))),
            LlmSource::Replay { path } => {
                let replay = ReplayTransport::load(path)
                    .map_err(|e| EvalError::MissingTranscripts(format!("{}: {e}", path.display())))?;
                Ok(LlmClient::new(Arc::new(replay)))
            }
            LlmSource::Http { .. } if offline => Err(EvalError::MissingTranscripts(
                "an HTTP language model was requested in offline mode; use a replay transcript".into(),
            )),
            LlmSource::Http { endpoint, timeout_secs } => {
                Ok(LlmClient::new(Arc::new(HttpTransport::new(endpoint, Duration::from_secs(*timeout_secs)))))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub methods: Vec<Method>,
    pub generator: GeneratorConfig,
    pub solver: SolverConfig,
    /// Seeds used while generating and scoring candidates.
    pub scoring_seeds: usize,
    /// Independent seeds used to evaluate the picks.
    pub eval_seeds: usize,
    pub ks: Vec<usize>,
    pub llm: LlmSource,
    pub seed: u64,
    pub offline: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            methods: Method::all(),
            generator: GeneratorConfig::default(),
            solver: SolverConfig::default(),
            scoring_seeds: 10,
            eval_seeds: 10,
            ks: vec![1, 2, 3],
            llm: LlmSource::default(),
            seed: 0,
            offline: true,
        }
    }
}

impl MatrixConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.methods.is_empty() {
            return Err(EvalError::Config("no methods selected".into()));
        }
        if self.scoring_seeds == 0 || self.eval_seeds == 0 {
            return Err(EvalError::Config("scoring_seeds and eval_seeds must be at least 1".into()));
        }
        if let Some(k) = self.ks.iter().find(|k| !(1..=3).contains(*k)) {
            return Err(EvalError::InvalidK(*k));
        }
        self.generator.validate()?;
        Ok(())
    }

    pub fn scoring_seed_list(&self) -> Vec<u64> {
        let base = derive_seed(self.seed, 1);
        (0..self.scoring_seeds as u64).map(|s| derive_seed(base, s)).collect()
    }

    pub fn eval_seed_list(&self) -> Vec<u64> {
        let base = derive_seed(self.seed, 2);
        (0..self.eval_seeds as u64).map(|s| derive_seed(base, s)).collect()
    }

    fn cell_seed(&self, dataset: usize, instance: usize, prompt: &PreferencePrompt) -> u64 {
        let key = format!("{dataset}/{instance}/{}", prompt.id());
        derive_seed(derive_seed(self.seed, 3), stable_hash(key.as_bytes()))
    }

    fn proxy_seed(&self, dataset: usize, instance: usize, clause: &PreferenceClause) -> u64 {
        let key = format!("{dataset}/{instance}/{}", clause.label());
        derive_seed(derive_seed(self.seed, 4), stable_hash(key.as_bytes()))
    }

    /// Generator settings of a baseline run: reflection by the language model.
    fn baseline_generator(&self, master_seed: u64, style: ReflectStyle) -> GeneratorConfig {
        GeneratorConfig { master_seed, reflect: ReflectStrategy::Llm, reflect_style: style, ..self.generator.clone() }
    }

    fn needs_proxies(&self) -> bool {
        self.methods
            .iter()
            .any(|m| matches!(m, Method::SclmSim(_) | Method::SclmFull | Method::SclmExtended(_)))
    }
}

/// One point of the per-cell scatter: a base-pool candidate's normalised
/// simulator scores on the two clauses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub dataset: usize,
    pub instance: usize,
    pub prompt: String,
    pub candidate: usize,
    pub x: f64,
    pub y: f64,
    pub pareto: bool,
    pub chosen_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutput {
    pub cells: Vec<Cell>,
    pub records: Vec<EvaluationRecord>,
    pub scatter: Vec<ScatterPoint>,
    pub report: Report,
}

impl MatrixOutput {
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("dataset,instance,prompt,candidate,x,y,pareto,chosen_by\n");
        for p in &self.scatter {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{},{}",
                p.dataset,
                p.instance,
                p.prompt,
                p.candidate,
                p.x,
                p.y,
                p.pareto,
                p.chosen_by.join(";")
            );
        }
        out
    }
}

/// Writes `records.jsonl`, `report.json`, `report.csv` and `pareto.csv`.
pub fn write_outputs(out: &MatrixOutput, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("records.jsonl", records_to_jsonl(&out.records)),
        ("report.json", out.report.to_json()),
        ("report.csv", out.report.to_csv()),
        ("pareto.csv", out.scatter_csv()),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

type ProxyKey = (usize, usize, String);

struct Shared<'a> {
    cfg: &'a MatrixConfig,
    datasets: &'a [Dataset],
    prompts: &'a [PreferencePrompt],
    client: LlmClient,
    scoring_seeds: Vec<u64>,
    eval_seeds: Vec<u64>,
    proxies: BTreeMap<ProxyKey, RewardExpression>,
    exec: Execution,
}

impl Shared<'_> {
    fn instance(&self, dataset: usize, instance: usize) -> Result<&RmabInstance, EvalError> {
        self.datasets
            .iter()
            .find(|d| d.id == dataset)
            .and_then(|d| d.instances.get(instance))
            .map(|g| &g.instance)
            .ok_or_else(|| EvalError::Config(format!("no instance {instance} in dataset {dataset}")))
    }

    /// Accounting tables of the prompt's proxy rewards plus the clause to
    /// table mapping.
    fn proxy_tables(
        &self,
        dataset: usize,
        instance: usize,
        inst: &RmabInstance,
        prompt: &PreferencePrompt,
    ) -> Result<(Vec<RewardTable>, Vec<Option<usize>>), EvalError> {
        let mut tables = Vec::new();
        let mut index = Vec::with_capacity(prompt.clauses.len());
        for clause in &prompt.clauses {
            if matches!(clause, PreferenceClause::Prioritize { .. }) {
                let key = (dataset, instance, clause.label());
                let proxy = self
                    .proxies
                    .get(&key)
                    .ok_or_else(|| EvalError::Config(format!("no proxy reward for {}", clause.label())))?;
                index.push(Some(tables.len()));
                tables.push(proxy.to_reward_table(inst)?);
            } else {
                index.push(None);
            }
        }
        Ok((tables, index))
    }
}

fn proxy_jobs(datasets: &[Dataset], prompts: &[PreferencePrompt]) -> Vec<(usize, usize, PreferenceClause)> {
    let mut clauses: Vec<&PreferenceClause> = Vec::new();
    for c in prompts.iter().flat_map(|p| &p.clauses) {
        if matches!(c, PreferenceClause::Prioritize { .. }) && !clauses.contains(&c) {
            clauses.push(c);
        }
    }
    let mut jobs = Vec::new();
    for d in datasets {
        for i in 0..d.instances.len() {
            jobs.extend(clauses.iter().map(|c| (d.id, i, (*c).clone())));
        }
    }
    jobs
}

/// Runs every method on every (dataset, instance, prompt) cell.
///
/// Proxy rewards for simulator scoring come from a plain-reflection run on
/// the clause's singular prompt, once per instance and clause.
pub fn run_matrix(
    datasets: &[Dataset],
    prompts: &[PreferencePrompt],
    cfg: &MatrixConfig,
    exec: Execution,
) -> Result<MatrixOutput, EvalError> {
    cfg.validate()?;
    if prompts.is_empty() {
        return Err(EvalError::Config("no prompts".into()));
    }
    let mut shared = Shared {
        cfg,
        datasets,
        prompts,
        client: cfg.llm.client(cfg.offline)?,
        scoring_seeds: cfg.scoring_seed_list(),
        eval_seeds: cfg.eval_seed_list(),
        proxies: BTreeMap::new(),
        exec,
    };

    if cfg.needs_proxies() {
        let jobs = proxy_jobs(datasets, prompts);
        let picks = exec
            .map(&jobs, |(d, i, clause)| -> Result<RewardExpression, EvalError> {
                let inst = shared.instance(*d, *i)?;
                let prompt = PreferencePrompt { clauses: vec![clause.clone()] };
                let cache = WhittleCache::new(cfg.solver);
                let ctx = EvolveContext {
                    sim: Simulator::new(cfg.solver, Some(&cache), exec),
                    seeds: &shared.scoring_seeds,
                    llm: Some(&shared.client),
                };
                let gcfg = cfg.baseline_generator(cfg.proxy_seed(*d, *i, clause), ReflectStyle::Standard);
                let pool = evolve(inst, &prompt, &gcfg, &ctx)?;
                Ok(pool.final_choice().expect("evolve returns a non-empty pool").expression.clone())
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        for ((d, i, clause), expr) in jobs.into_iter().zip(picks) {
            shared.proxies.insert((d, i, clause.label()), expr);
        }
    }

    let counts: Vec<usize> = datasets.iter().map(|d| d.instances.len()).collect();
    let mut cells = Vec::new();
    for (d, n) in datasets.iter().zip(&counts) {
        cells.extend(plan_cells(&[d.id], *n, prompts.len()));
    }
    let outputs = exec
        .map(&cells, |cell| run_cell(&shared, *cell))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let mut scatter = Vec::new();
    for (r, s) in outputs {
        records.extend(r);
        scatter.extend(s);
    }
    let report = Report::from_records(&records);
    Ok(MatrixOutput { cells, records, scatter, report })
}

struct Pick {
    method: Method,
    expression: RewardExpression,
    candidate: Option<usize>,
}

fn final_expression(pool: &CandidatePool) -> RewardExpression {
    pool.final_choice().expect("evolve returns a non-empty pool").expression.clone()
}

fn run_cell(shared: &Shared<'_>, cell: Cell) -> Result<(Vec<EvaluationRecord>, Vec<ScatterPoint>), EvalError> {
    let cfg = shared.cfg;
    let inst = shared.instance(cell.dataset, cell.instance)?;
    let prompt = &shared.prompts[cell.prompt];
    let cache = WhittleCache::new(cfg.solver);
    let sim = Simulator::new(cfg.solver, Some(&cache), shared.exec);
    let ctx = EvolveContext { sim, seeds: &shared.scoring_seeds, llm: Some(&shared.client) };
    let seed = cfg.cell_seed(cell.dataset, cell.instance, prompt);
    let methods = &cfg.methods;

    let run = |p: &PreferencePrompt, style: ReflectStyle| evolve(inst, p, &cfg.baseline_generator(seed, style), &ctx);
    let simulate = |p: &PreferencePrompt, pool: &CandidatePool| -> Result<(PoolSimulation, Vec<Option<usize>>), EvalError> {
        let (tables, index) = shared.proxy_tables(cell.dataset, cell.instance, inst, p)?;
        Ok((simulate_pool(inst, &pool.expressions(), &tables, &shared.scoring_seeds, &sim)?, index))
    };
    let pick_sim = |p: &PreferencePrompt, ps: &PoolSimulation, index: &[Option<usize>], w: &WelfareFunction| {
        let matrix = score_prompt(p, ps, index, ScorerKind::Simulator, None)?;
        Ok::<_, EvalError>((select(&matrix, w)?.chosen, matrix))
    };

    let base = run(prompt, ReflectStyle::Standard)?;
    let base_sim = if methods.iter().any(|m| matches!(m, Method::SclmSim(_) | Method::SclmFull)) {
        Some(simulate(prompt, &base)?)
    } else {
        None
    };
    let mut sim_matrix: Option<ScoreMatrix> = None;
    let mut llm_matrix: Option<ScoreMatrix> = None;
    let mut extended: BTreeMap<Extension, (PreferencePrompt, CandidatePool)> = BTreeMap::new();
    let mut picks = Vec::with_capacity(methods.len());

    for &method in methods {
        let from_base = |i: usize| Pick { method, expression: base.candidates[i].expression.clone(), candidate: Some(i) };
        let pick = match method {
            Method::SclmSim(preset) => {
                let (ps, index) = base_sim.as_ref().expect("simulated");
                let (chosen, matrix) = pick_sim(prompt, ps, index, &preset.welfare())?;
                sim_matrix.get_or_insert(matrix);
                from_base(chosen)
            }
            Method::SclmLlm(preset) => {
                if llm_matrix.is_none() {
                    let ps = simulate_pool(inst, &base.expressions(), &[], &shared.scoring_seeds, &sim)?;
                    let sources = base.sources();
                    llm_matrix =
                        Some(score_prompt(prompt, &ps, &[], ScorerKind::Llm, Some((&shared.client, &sources)))?);
                }
                from_base(select(llm_matrix.as_ref().expect("scored"), &preset.welfare())?.chosen)
            }
            Method::Dlm => from_base(*base.round_choices.last().expect("non-empty pool")),
            Method::LlmZeroshot => from_base(0),
            Method::SclmFull => {
                let full = prompt.with_no_shift(&inst.schema).with_max_utility();
                let (ps, _) = base_sim.as_ref().expect("simulated");
                let (_, index) = shared.proxy_tables(cell.dataset, cell.instance, inst, &full)?;
                from_base(pick_sim(&full, ps, &index, &Preset::Util.welfare())?.0)
            }
            Method::DlmPromptEngg => {
                let pool = run(prompt, ReflectStyle::PromptEngineering)?;
                Pick { method, expression: final_expression(&pool), candidate: None }
            }
            Method::DlmExtended(e) | Method::SclmExtended(e) => {
                if let std::collections::btree_map::Entry::Vacant(slot) = extended.entry(e) {
                    let p = match e {
                        Extension::Fair => prompt.with_no_shift(&inst.schema),
                        Extension::Util => prompt.with_max_utility(),
                    };
                    let pool = run(&p, ReflectStyle::Standard)?;
                    slot.insert((p, pool));
                }
                let (p, pool) = &extended[&e];
                let expression = if matches!(method, Method::DlmExtended(_)) {
                    final_expression(pool)
                } else {
                    let (ps, index) = simulate(p, pool)?;
                    pool.candidates[pick_sim(p, &ps, &index, &Preset::Util.welfare())?.0].expression.clone()
                };
                Pick { method, expression, candidate: None }
            }
        };
        picks.push(pick);
    }

    // evaluate each distinct pick once on the held-out seeds
    let evaluator = Evaluator::new(inst, &shared.eval_seeds, sim)?;
    let mut distinct: Vec<&RewardExpression> = Vec::new();
    for p in &picks {
        if !distinct.iter().any(|e| e.source() == p.expression.source()) {
            distinct.push(&p.expression);
        }
    }
    let metrics = shared
        .exec
        .map(&distinct, |e| evaluator.evaluate(e, prompt, &cfg.ks))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let prompt_id = prompt.id();
    let records = picks
        .iter()
        .map(|p| {
            let at = distinct.iter().position(|e| e.source() == p.expression.source()).expect("evaluated");
            EvaluationRecord {
                dataset: cell.dataset,
                instance: cell.instance,
                prompt: prompt_id.clone(),
                method: p.method.to_string(),
                chosen: p.expression.source().to_string(),
                candidate: p.candidate,
                metrics: metrics[at].clone(),
            }
        })
        .collect();

    let mut scatter = Vec::new();
    if let Some(matrix) = sim_matrix.filter(|m| m.columns.len() == 2) {
        let front = pareto_front(&matrix)?;
        for c in 0..matrix.n_candidates {
            scatter.push(ScatterPoint {
                dataset: cell.dataset,
                instance: cell.instance,
                prompt: prompt_id.clone(),
                candidate: c,
                x: matrix.columns[0].normalized[c],
                y: matrix.columns[1].normalized[c],
                pareto: front.contains(&c),
                chosen_by: picks.iter().filter(|p| p.candidate == Some(c)).map(|p| p.method.to_string()).collect(),
            });
        }
    }
    Ok((records, scatter))
}
