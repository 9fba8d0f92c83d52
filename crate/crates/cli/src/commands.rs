use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use orchestrator_core::config::AppConfig;
use orchestrator_core::dataset::{ecommerce_spec, generate_data, ingest_hierarchical_csv, read_jsonl, write_jsonl};
use orchestrator_core::evaluation::eval_router;
use orchestrator_core::lora::{create_arm, memory_report, Activation, LoraArm, LoraBase};
use orchestrator_core::orchestrator::{build_groups, route, AgentSpec, LabeledPrompt, Registry};
use orchestrator_core::pipeline::{eval_planner, reference_examples, standard_plans, synthesize_traces, Copilot};
use orchestrator_core::planner::{train_tree, FeatureSchema};
use orchestrator_core::ranker::train_with;
use orchestrator_core::runtime::{AgentHost, ConversationState};
use orchestrator_core::Exec;
use serde_json::json;

use crate::artifacts;
use crate::cli::*;
use crate::error::CliError;
use crate::service;

/// Pretty JSON on stdout; a closed pipe is not an error.
fn print_json(v: &impl serde::Serialize) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(CliError::data),
        _ => Ok(()),
    }
}

fn read_prompts(path: &Path) -> Result<Vec<LabeledPrompt>, CliError> {
    read_jsonl(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn generate(cfg: &AppConfig, seed: u64, args: &GenerateArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out).map_err(CliError::data)?;
    let embedder = artifacts::embedder(cfg)?;
    let (train, test, registry, held): (Vec<LabeledPrompt>, Vec<LabeledPrompt>, Registry, Vec<AgentSpec>) = match &args.from_csv {
        Some(csv) => {
            let file = std::fs::File::open(csv).map_err(|e| CliError::Data(format!("{}: {e}", csv.display())))?;
            let (mut prompts, registry) =
                ingest_hierarchical_csv(file, embedder.as_ref(), &cfg.router.separator_domain).map_err(CliError::data)?;
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            prompts.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let n_test = (prompts.len() as f64 * args.holdout).round() as usize;
            let train = prompts.split_off(n_test);
            (train, prompts, registry, vec![])
        }
        None => {
            let withheld: Vec<&str> = args.withhold.iter().map(String::as_str).collect();
            let mut spec = ecommerce_spec(args.prompts_per_class, seed, &withheld);
            spec.holdout_fraction = args.holdout;
            let (train, test) = generate_data(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
            let registry = spec.registry(embedder.as_ref(), &cfg.router.separator_domain, false).map_err(CliError::data)?;
            let held = spec.classes.iter().filter(|c| spec.withheld_classes.contains(&c.agent_id)).map(|c| spec.agent_spec(c)).collect();
            (train, test, registry, held)
        }
    };
    write_jsonl(&args.out.join("train.jsonl"), &train).map_err(CliError::data)?;
    write_jsonl(&args.out.join("test.jsonl"), &test).map_err(CliError::data)?;
    registry.save(&args.out.join("registry.json")).map_err(CliError::data)?;
    std::fs::write(args.out.join("heldout_agents.json"), serde_json::to_string_pretty(&held).expect("serializable"))
        .map_err(CliError::data)?;
    if train.is_empty() && test.is_empty() {
        log::warn!("no prompts generated");
    }
    print_json(&json!({"train": train.len(), "test": test.len(), "agents": registry.len(), "held_out_agents": held.len(), "out": args.out}));
    Ok(())
}

pub fn train_router(cfg: &AppConfig, args: &TrainRouterArgs) -> Result<(), CliError> {
    let embedder = artifacts::embedder(cfg)?;
    let prompts = read_prompts(&args.train)?;
    let registry = match &args.registry {
        Some(p) => artifacts::load_registry(p, embedder.as_ref())?,
        None => ecommerce_spec(1, 0, &[]).registry(embedder.as_ref(), &cfg.router.separator_domain, true).map_err(CliError::data)?,
    };
    let groups = build_groups(&prompts, &registry, embedder.as_ref()).map_err(CliError::data)?;
    let model = train_with(&groups, &cfg.router.train, Exec::Parallel).map_err(CliError::runtime)?;
    ensure_parent(&cfg.router.model_path)?;
    ensure_parent(&cfg.router.registry_path)?;
    model.save(&cfg.router.model_path).map_err(CliError::runtime)?;
    registry.save(&cfg.router.registry_path).map_err(CliError::runtime)?;
    print_json(&json!({
        "groups": groups.len(),
        "final_loss": model.final_loss,
        "model": cfg.router.model_path,
        "registry": cfg.router.registry_path,
    }));
    Ok(())
}

fn router_parts(cfg: &AppConfig) -> Result<(Arc<dyn orchestrator_core::embedding::Embedder>, Registry, orchestrator_core::ranker::RankerModel), CliError> {
    let embedder = artifacts::embedder(cfg)?;
    let registry = artifacts::load_registry(&cfg.router.registry_path, embedder.as_ref())?;
    let model = artifacts::load_model(&cfg.router.model_path, embedder.as_ref())?;
    Ok((embedder, registry, model))
}

pub fn eval_router_cmd(cfg: &AppConfig, args: &EvalRouterArgs) -> Result<(), CliError> {
    let (embedder, registry, model) = router_parts(cfg)?;
    let mut prompts = read_prompts(&args.test)?;
    if !args.classes.is_empty() {
        prompts.retain(|p| args.classes.contains(&p.positive_path[0]));
    }
    let report = eval_router(&model, &registry, embedder.as_ref(), &prompts, Exec::Parallel).map_err(CliError::data)?;
    print_json(&report);
    Ok(())
}

pub fn route_cmd(cfg: &AppConfig, text: &str) -> Result<(), CliError> {
    let (embedder, registry, model) = router_parts(cfg)?;
    let decision = route(&model, &registry, embedder.as_ref(), text).map_err(|e| match e {
        orchestrator_core::orchestrator::OrchestratorError::EmbeddingFailure(_) => CliError::Usage(e.to_string()),
        other => CliError::runtime(other),
    })?;
    print_json(&decision);
    Ok(())
}

/// At most `n` prompts per gold leaf, in file order.
fn cap_per_class(prompts: Vec<LabeledPrompt>, n: usize) -> Vec<LabeledPrompt> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    prompts
        .into_iter()
        .filter(|p| {
            let c = seen.entry(p.positive_path[0].clone()).or_default();
            *c += 1;
            *c <= n
        })
        .collect()
}

pub fn train_planner(cfg: &AppConfig, args: &PromptFile) -> Result<(), CliError> {
    let (embedder, registry, model) = router_parts(cfg)?;
    let catalog = artifacts::catalog(cfg)?;
    let gazetteer = artifacts::gazetteer(cfg, &catalog)?;
    let host = AgentHost::builtin(catalog);
    let prompts = cap_per_class(read_prompts(&args.path)?, cfg.planner.prompts_per_class);
    let plans = standard_plans();
    let examples = reference_examples(&prompts, &registry, &model, embedder.as_ref(), &host, &plans).map_err(CliError::runtime)?;
    let schema = FeatureSchema::new(registry.ids());
    let traces = synthesize_traces(&examples, &registry, &model, embedder.as_ref(), &host, &gazetteer, &schema, &plans, Exec::Parallel)
        .map_err(CliError::runtime)?;
    let tree = train_tree(&traces, schema, plans, cfg.planner.params()).map_err(CliError::data)?;
    ensure_parent(&cfg.planner.tree_path)?;
    tree.save(&cfg.planner.tree_path).map_err(CliError::runtime)?;
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &traces {
        *labels.entry(t.best_plan_label.as_str()).or_default() += 1;
    }
    print_json(&json!({"records": traces.len(), "labels": labels, "depth": tree.depth, "leaves": tree.leaf_count(), "tree": cfg.planner.tree_path}));
    Ok(())
}

pub fn eval_planner_cmd(cfg: &AppConfig, args: &PromptFile) -> Result<(), CliError> {
    let copilot = artifacts::load_copilot(cfg)?;
    let prompts = cap_per_class(read_prompts(&args.path)?, cfg.planner.prompts_per_class);
    let plans = standard_plans();
    let examples = reference_examples(&prompts, &copilot.registry, &copilot.model, copilot.embedder.as_ref(), &copilot.host, &plans)
        .map_err(CliError::runtime)?;
    let traces = synthesize_traces(
        &examples,
        &copilot.registry,
        &copilot.model,
        copilot.embedder.as_ref(),
        &copilot.host,
        &copilot.gazetteer,
        &copilot.tree.schema,
        &plans,
        Exec::Parallel,
    )
    .map_err(CliError::runtime)?;
    let report = eval_planner(&copilot, &examples, &traces).map_err(CliError::runtime)?;
    print_json(&report);
    Ok(())
}

fn copilot_for(cfg: &AppConfig, demo: bool, seed: u64) -> Result<Copilot, CliError> {
    if demo {
        artifacts::demo_copilot(cfg, seed)
    } else {
        artifacts::load_copilot(cfg)
    }
}

/// Line-oriented chat. `:quit` or end of input ends the session.
pub fn chat_loop(copilot: &Copilot, locale: &str, input: impl BufRead, mut out: impl Write) -> std::io::Result<()> {
    let mut state = ConversationState::new("repl").with_locale(locale);
    write!(out, "> ")?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        if text == ":quit" {
            break;
        }
        if !text.is_empty() {
            match copilot.handle_turn(&mut state, text, None) {
                Ok(o) => {
                    writeln!(out, "selected: [{}]", o.routing.selected.join(", "))?;
                    writeln!(out, "plan: {} [{}]", o.plan_label, o.plan.agent_ids().join(" -> "))?;
                    match o.result {
                        Ok(r) => {
                            writeln!(out, "{}", r.response_text)?;
                            for a in &r.actions {
                                writeln!(out, "action: {}", serde_json::to_string(a).expect("serializable"))?;
                            }
                            writeln!(out, "used_default_path: {}", r.used_default_path)?;
                        }
                        Err(e) => {
                            writeln!(out, "{}", orchestrator_core::runtime::APOLOGY)?;
                            writeln!(out, "error: {e}")?;
                            writeln!(out, "used_default_path: true")?;
                        }
                    }
                }
                Err(e) => writeln!(out, "error: {e}")?,
            }
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn chat(cfg: &AppConfig, seed: u64, args: &RunArgs) -> Result<(), CliError> {
    if !orchestrator_core::runtime::is_known_locale(&args.locale) {
        return Err(CliError::Usage(format!("unknown locale {}", args.locale)));
    }
    let copilot = copilot_for(cfg, args.demo, seed)?;
    let stdin = std::io::stdin();
    chat_loop(&copilot, &args.locale, stdin.lock(), std::io::stdout()).map_err(CliError::runtime)
}

pub fn serve(cfg: &AppConfig, seed: u64, args: &ServeArgs) -> Result<(), CliError> {
    let copilot = copilot_for(cfg, args.demo, seed)?;
    let loader: service::Loader = if args.demo {
        let fixed = copilot.clone();
        Box::new(move || Ok(fixed.clone()))
    } else {
        let cfg = cfg.clone();
        Box::new(move || artifacts::load_copilot(&cfg).map_err(|e| e.to_string()))
    };
    let state = service::AppState::new(copilot, loader);
    let bind = args.bind.clone().unwrap_or_else(|| cfg.service.bind.clone());
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(service::serve(state, &bind)).map_err(|e| CliError::Runtime(format!("serving on {bind}: {e}")))
}

pub fn report_memory(args: &MemoryArgs) -> Result<(), CliError> {
    let base = match &args.base {
        Some(p) => LoraBase::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => LoraBase::random("base", &args.dims, Activation::Identity, 0).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let arms: Vec<LoraArm> = if args.arm_files.is_empty() {
        (0..args.arms)
            .map(|i| create_arm(&base, format!("arm{i}"), args.rank, None, i as u64))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        args.arm_files
            .iter()
            .map(|p| LoraArm::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
            .collect::<Result<_, _>>()?
    };
    print_json(&memory_report(&base, &arms.iter().collect::<Vec<_>>()));
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p).map_err(|e| match e {
            orchestrator_core::config::ConfigError::Io { .. } => CliError::data(e),
            other => CliError::Usage(other.to_string()),
        })?,
        None => AppConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.router.train.seed);
    if cli.seed.is_some() {
        cfg.router.train.seed = seed;
    }
    match &cli.command {
        Command::GenerateData(a) => generate(&cfg, seed, a),
        Command::TrainRouter(a) => train_router(&cfg, a),
        Command::EvalRouter(a) => eval_router_cmd(&cfg, a),
        Command::Route { text } => route_cmd(&cfg, text),
        Command::TrainPlanner(a) => train_planner(&cfg, a),
        Command::EvalPlanner(a) => eval_planner_cmd(&cfg, a),
        Command::Chat(a) => chat(&cfg, seed, a),
        Command::Serve(a) => serve(&cfg, seed, a),
        Command::ReportMemory(a) => report_memory(a),
    }
}
