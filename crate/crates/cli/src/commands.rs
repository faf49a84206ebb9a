use std::fs;
use std::io::{self, IsTerminal};
use std::path::Path;

use anyhow::{bail, Context, Result};
use octo_core::encoder::{check_gradients, random_problem, save_model, train, LossConfig, TrainConfig, FD_STEP};
use octo_core::eval::{
    emit_report, run_guessing, run_sorting, training_metrics, EvalConfig, EvalReport, Pool, Variant,
};
use octo_core::generate::{generate_dataset, GeneratorSpec};
use octo_core::index::{augment_description, build_index, save_index, IndexEntry, RetrievalConfig};
use octo_core::io::write_dataset;
use octo_core::llm::{LanguageModel, LlmBackend, Recorder};
use octo_core::pipeline::read_video;
use octo_core::saliency::SaliencyConfig;
use octo_core::session::{Reply, Session, SessionEnv, SessionError};
use octo_core::Split;
use serde::Serialize;
use serde_json::json;

use crate::artifacts::{self, usage};
use crate::{
    repl, server, BuildIndexArgs, ChatArgs, Cli, Command, EvalArgs, EvalTask, GenDatasetArgs, GradCheckArgs, GuessArgs,
    LlmArgs, ModelIndexArgs, QueryArgs, ServeArgs, SortArgs, TeachArgs, TrainArgs, EXIT_OK, EXIT_RUNTIME,
};

pub fn dispatch(cli: &Cli) -> Result<i32> {
    let json = cli.json;
    match &cli.command {
        Command::GenDataset(a) => gen_dataset(a, json),
        Command::Train(a) => train_cmd(a, json),
        Command::GradCheck(a) => grad_check(a, json),
        Command::BuildIndex(a) => build_index_cmd(a, json),
        Command::Query(a) => query(a, json),
        Command::Teach(a) => teach(a, json),
        Command::Guess(a) => guess(a, json),
        Command::Sort(a) => sort(a, json),
        Command::Eval(a) => eval(a, json),
        Command::Chat(a) => chat(a),
        Command::Serve(a) => serve(a),
    }
}

fn emit(json: bool, value: &impl Serialize, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
    } else {
        println!("{}", text());
    }
}

fn gen_dataset(a: &GenDatasetArgs, json: bool) -> Result<i32> {
    let mut spec = GeneratorSpec::with_seed(a.seed);
    let overrides = [
        (a.objects, &mut spec.num_objects),
        (a.parts, &mut spec.parts_per_object),
        (a.samples_per_part, &mut spec.samples_per_part),
        (a.frames, &mut spec.frames_per_video),
        (a.grid, &mut spec.grid_size),
        (a.val_objects, &mut spec.val_objects),
        (a.test_objects, &mut spec.test_objects),
        (a.holdout, &mut spec.holdout_per_part),
    ];
    for (value, field) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    if let Some(p) = a.pad_mix {
        spec.pad_mix = p;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let dataset = generate_dataset(&spec)?;
    write_dataset(&dataset, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let count = |s| dataset.videos_in(s).count();
    let summary = json!({
        "out": a.out,
        "seed": a.seed,
        "objects": dataset.objects.len(),
        "samples": dataset.videos.len(),
        "train_samples": count(Split::Train),
        "val_samples": count(Split::Val),
        "test_samples": count(Split::Test),
    });
    emit(json, &summary, || {
        format!(
            "wrote {} objects and {} samples ({} train, {} val, {} test) to {}",
            dataset.objects.len(),
            dataset.videos.len(),
            count(Split::Train),
            count(Split::Val),
            count(Split::Test),
            a.out.display()
        )
    });
    Ok(EXIT_OK)
}

fn train_cmd(a: &TrainArgs, json: bool) -> Result<i32> {
    let dataset = artifacts::dataset(&a.dataset)?;
    let mut cfg = TrainConfig::default();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.temperature {
        cfg.temperature = v;
    }
    if let Some(v) = a.contrastive_weight {
        cfg.contrastive_weight = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden_dim = v;
    }
    if let Some(v) = a.embed {
        cfg.embed_dim = v;
    }
    if let Some(v) = a.salient_frames {
        cfg.saliency.k = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (model, log) = train(&dataset, &cfg)?;
    save_model(&model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.log {
        let text = serde_json::to_string_pretty(&log)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let metrics = training_metrics(&dataset, &model, &cfg.saliency)?;
    let best = log.best();
    let summary = json!({
        "out": a.out,
        "epochs": log.epochs.len(),
        "best_epoch": log.best_epoch,
        "best_val": best.val,
        "metrics": metrics,
    });
    emit(json, &summary, || {
        format!(
            "trained {} epochs, kept epoch {} (val regression {:.4}, contrastive {:.4})\n\
             held-out MAE {:.3} over {} samples; validation cosine same part {:.3}, different object {:.3}\n\
             wrote {}",
            log.epochs.len(),
            log.best_epoch,
            best.val.regression,
            best.val.contrastive,
            metrics.heldout_mae,
            metrics.heldout_samples,
            metrics.same_part_cosine,
            metrics.different_object_cosine,
            a.out.display()
        )
    });
    Ok(EXIT_OK)
}

fn grad_check(a: &GradCheckArgs, json: bool) -> Result<i32> {
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let cfg = LossConfig::default();
    let mut rows = Vec::new();
    for seed in a.first_seed..a.first_seed + a.seeds {
        let (params, batch) = random_problem(seed);
        let report = check_gradients(&params, &batch, &cfg, FD_STEP)?;
        rows.push((seed, report));
    }
    let passed = rows.iter().all(|(_, r)| r.passed());
    let value = json!({
        "passed": passed,
        "step": FD_STEP,
        "seeds": rows.iter().map(|(s, r)| json!({ "seed": s, "passed": r.passed(), "report": r })).collect::<Vec<_>>(),
    });
    emit(json, &value, || {
        let mut out: Vec<String> = rows
            .iter()
            .map(|(s, r)| {
                format!(
                    "seed {s:>3}: {} worst relative error {:.2e}",
                    if r.passed() { "ok  " } else { "FAIL" },
                    r.worst()
                )
            })
            .collect();
        out.push(if passed {
            "all gradients match".into()
        } else {
            "gradient mismatch".into()
        });
        out.join("\n")
    });
    Ok(if passed { EXIT_OK } else { EXIT_RUNTIME })
}

fn build_index_cmd(a: &BuildIndexArgs, json: bool) -> Result<i32> {
    let dataset = artifacts::dataset(&a.dataset)?;
    let model = artifacts::model(&a.model)?;
    let splits: Vec<Split> = a.splits.iter().map(|&s| s.into()).collect();
    let index = build_index(&dataset, &model, &splits, &artifacts::saliency_of(&model))?;
    save_index(&index, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let value = json!({ "out": a.out, "entries": index.len(), "objects": index.object_ids().len() });
    emit(json, &value, || {
        format!(
            "indexed {} samples of {} objects into {}",
            index.len(),
            index.object_ids().len(),
            a.out.display()
        )
    });
    Ok(EXIT_OK)
}

fn sample_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn query(a: &QueryArgs, json: bool) -> Result<i32> {
    if a.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let model = artifacts::model(&a.artifacts.model)?;
    let index = artifacts::index(&a.artifacts.index)?;
    let name = sample_name(&a.sample);
    let video = artifacts::tact(&a.sample)?.into_video(name.clone(), "query", "query")?;
    let reading = read_video(&model, &video, &artifacts::saliency_of(&model))?;
    let result = index.retrieve(&reading.embedding, &RetrievalConfig { top_k: a.top_k })?;
    let description = augment_description(&reading.adjectives, &result)?;
    let value = json!({ "sample": name, "reading": reading, "retrieval": result, "description": description });
    emit(json, &value, || {
        let mut out = vec![
            format!("salient frames: {:?}", reading.salient_frames),
            format!("hardness {:.2}, roughness {:.2}", reading.hardness, reading.roughness),
        ];
        for (i, o) in result.objects.iter().enumerate() {
            out.push(format!(
                "{}. {} [{}] {} of {} samples, best similarity {:.4}",
                i + 1,
                o.label,
                o.object_id,
                o.retrieved_sample_count,
                result.samples.len(),
                o.max_similarity
            ));
        }
        out.push(String::new());
        out.push(description.clone());
        out.join("\n")
    });
    Ok(EXIT_OK)
}

fn teach(a: &TeachArgs, json: bool) -> Result<i32> {
    let label = a.label.as_str();
    if label.is_empty() || label != label.trim() || label.contains(['\n', ';']) {
        return Err(usage(format!("invalid label `{label}`")));
    }
    let model = artifacts::model(&a.artifacts.model)?;
    let mut index = artifacts::index(&a.artifacts.index)?;
    let saliency = artifacts::saliency_of(&model);
    let mut entries = Vec::new();
    for path in &a.sample {
        let name = sample_name(path);
        let payload = artifacts::tact(path)?;
        let pad_type = payload.pad_type;
        let sample_id = format!("taught/{label}/{name}");
        let video = payload.into_video(sample_id.clone(), format!("taught/{label}"), name.clone())?;
        let reading = read_video(&model, &video, &saliency)?;
        entries.push(IndexEntry {
            sample_id,
            object_id: format!("taught/{label}"),
            part_id: name,
            label: label.to_owned(),
            adjectives: reading.adjectives,
            embedding: reading.embedding,
            pad_type,
        });
    }
    let added = entries.len();
    index.insert_all(entries)?;
    let out = a.out.as_ref().unwrap_or(&a.artifacts.index);
    save_index(&index, out).with_context(|| format!("writing {}", out.display()))?;
    let value = json!({ "label": label, "added": added, "entries": index.len(), "out": out });
    emit(json, &value, || {
        format!(
            "taught {added} samples as {label}; the index now holds {} samples ({})",
            index.len(),
            out.display()
        )
    });
    Ok(EXIT_OK)
}

fn session_env(artifacts_args: &ModelIndexArgs, llm: &LlmArgs) -> Result<SessionEnv> {
    let knowledge = llm.knowledge.as_deref().map(artifacts::dataset).transpose()?;
    let backend = llm.backend.build_shared(knowledge.as_ref())?;
    artifacts::session_env(&artifacts_args.model, &artifacts_args.index, backend, !llm.no_rag)
}

/// Session errors caused by the arguments exit with the usage status.
fn session_error(e: SessionError) -> anyhow::Error {
    match e {
        SessionError::BadCandidates(_) | SessionError::BadLabel(_) | SessionError::BadSample(_) => usage(e.to_string()),
        other => other.into(),
    }
}

fn guess(a: &GuessArgs, json: bool) -> Result<i32> {
    if a.attempts == 0 {
        return Err(usage("--attempts must be at least 1"));
    }
    let mut session = Session::new("cli", session_env(&a.artifacts, &a.llm)?);
    session
        .message(&format!("candidates {}", a.candidates))
        .map_err(session_error)?;
    session
        .touch(&sample_name(&a.sample), artifacts::tact(&a.sample)?)
        .map_err(session_error)?;
    let mut replies: Vec<Reply> = Vec::new();
    for _ in 0..a.attempts {
        match session.message("guess") {
            Ok(r) => replies.push(r),
            Err(SessionError::NoOptionsLeft) if !replies.is_empty() => break,
            Err(e) => return Err(session_error(e)),
        }
    }
    let guesses: Vec<Option<&str>> = replies.iter().map(|r| r.guess.as_deref()).collect();
    emit(json, &json!({ "guesses": guesses, "replies": replies }), || {
        replies.iter().map(|r| r.text.as_str()).collect::<Vec<_>>().join("\n\n")
    });
    Ok(if guesses.iter().all(Option::is_some) {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    })
}

fn sort(a: &SortArgs, json: bool) -> Result<i32> {
    let mut session = Session::new("cli", session_env(&a.artifacts, &a.llm)?);
    for path in &a.samples {
        session
            .touch(&sample_name(path), artifacts::tact(path)?)
            .map_err(session_error)?;
    }
    let reply = session
        .message(&format!("sort {}", a.property))
        .map_err(session_error)?;
    let samples: Vec<String> = a.samples.iter().map(|p| p.display().to_string()).collect();
    emit(
        json,
        &json!({ "samples": samples, "property": a.property, "reply": reply }),
        || reply.text.clone(),
    );
    Ok(if reply.ranking.is_some() { EXIT_OK } else { EXIT_RUNTIME })
}

fn eval_config(a: &EvalArgs, saliency: SaliencyConfig) -> Result<EvalConfig> {
    let mut cfg = EvalConfig {
        saliency,
        ..EvalConfig::default()
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.objects_per_category {
        if n < 2 {
            return Err(usage("--objects-per-category must be at least 2"));
        }
        let mut seen_offset = 0;
        for c in &mut cfg.categories {
            c.objects = n;
            c.offset = match c.pool {
                Pool::Seen => {
                    seen_offset += n;
                    seen_offset - n
                }
                Pool::Unseen => 0,
            };
        }
    }
    if let Some(t) = a.sort_trials {
        cfg.sort_trials = t;
    }
    if let Some(g) = a.sort_gap {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(usage("--sort-gap must be a non-negative number"));
        }
        cfg.sort_gap = g;
    }
    Ok(cfg)
}

fn percent(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| format!("{:.2}", 100.0 * v))
}

/// Variants as rows, categories as columns.
fn report_table(report: &EvalReport) -> String {
    let mut categories: Vec<&str> = Vec::new();
    let mut variants: Vec<&str> = Vec::new();
    for s in &report.summaries {
        if !categories.contains(&s.category.as_str()) {
            categories.push(&s.category);
        }
        if !variants.contains(&s.variant.as_str()) {
            variants.push(&s.variant);
        }
    }
    variants.sort_by_key(|v| v.parse::<Variant>().ok());
    let mut out = format!("{:<18}", report.task);
    for c in &categories {
        out.push_str(&format!("{c:>22}"));
    }
    for v in &variants {
        out.push_str(&format!("\n{v:<18}"));
        for c in &categories {
            let cell = report.summary(v, c).map_or_else(
                || "-".to_owned(),
                |s| match (s.exact_correct, s.exact_total) {
                    (Some(ec), Some(et)) => format!("{} ({}/{} exact)", percent(s.accuracy), ec, et),
                    _ => format!("{} ({}/{})", percent(s.accuracy), s.correct, s.total),
                },
            );
            out.push_str(&format!("{cell:>22}"));
        }
    }
    out
}

fn eval(a: &EvalArgs, json: bool) -> Result<i32> {
    let dataset = artifacts::dataset(&a.dataset)?;
    let model = artifacts::model(&a.artifacts.model)?;
    let index = artifacts::index(&a.artifacts.index)?;
    let cfg = eval_config(a, artifacts::saliency_of(&model))?;
    let backend: LlmBackend = a.backend.build(Some(&dataset))?;
    let name = backend.name();
    let recorder = Recorder::new(backend);
    let llm: &dyn LanguageModel = &recorder;
    let report = match a.task {
        EvalTask::Guessing => {
            let variants = if a.variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                a.variants.clone()
            };
            run_guessing(&dataset, &model, &index, llm, name, &variants, &cfg)?
        }
        EvalTask::Sorting => {
            let variants = if a.variants.is_empty() {
                vec![Variant::LlmNoRag, Variant::LlmRag]
            } else {
                a.variants.clone()
            };
            if let Some(v) = variants
                .iter()
                .find(|v| !matches!(v, Variant::LlmNoRag | Variant::LlmRag))
            {
                return Err(usage(format!(
                    "variant `{v}` does not apply to sorting (use llm-no-rag or llm-rag)"
                )));
            }
            run_sorting(&dataset, &model, &index, llm, name, &variants, a.property, &cfg)?
        }
    };
    if let Some(path) = &a.out {
        emit_report(&report, path)?;
    }
    if let Some(path) = &a.record {
        recorder
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    emit(json, &report, || {
        let mut text = report_table(&report);
        if a.task == EvalTask::Sorting {
            text = format!("{} pairwise accuracy, %\n{text}", a.property);
        }
        if let Some(path) = &a.out {
            text.push_str(&format!("\nreport written to {}", path.display()));
        }
        text
    });
    Ok(EXIT_OK)
}

fn chat(a: &ChatArgs) -> Result<i32> {
    let mut session = Session::new("local", session_env(&a.artifacts, &a.llm)?);
    let stdin = io::stdin();
    let echo = a.echo || !stdin.is_terminal();
    repl::chat_loop(&mut session, stdin.lock(), &mut io::stdout().lock(), echo)?;
    Ok(EXIT_OK)
}

fn serve(a: &ServeArgs) -> Result<i32> {
    let env = session_env(&a.artifacts, &a.llm)?;
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            bail!("static directory {} does not exist", dir.display());
        }
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        println!("listening on http://{}", listener.local_addr()?);
        let app = server::router(server::AppState::new(env), a.static_dir.clone());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(EXIT_OK)
}
