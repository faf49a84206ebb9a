//! Acceptance suite on the seeded acceptance dataset (24 train, 6 validation
//! and 6 unseen objects, 12 samples per part, seed 2025). Prints one PASS or
//! FAIL line per criterion and fails if any criterion fails.

mod common;

#[path = "../../core/tests/common/oracles.rs"]
#[allow(dead_code)]
mod oracles;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{fresh_dir, octo};
use octo_core::encoder::{
    check_gradients, load_model, random_problem, save_model, train, EncoderModel, LossConfig, FD_STEP,
    GRAD_REL_TOLERANCE,
};
use octo_core::eval::{
    emit_report, read_report, run_guessing, run_sorting, training_metrics, EvalConfig, EvalReport, Variant,
};
use octo_core::generate::{generate_dataset, GeneratorSpec};
use octo_core::index::{build_index, load_index, save_index, IndexEntry, RetrievalConfig, TactileIndex};
use octo_core::io::{read_dataset, write_dataset};
use octo_core::llm::{LlmBackend, MockRules, ScriptedMock};
use octo_core::saliency::{select_salient_frames, SaliencyConfig};
use octo_core::{Dataset, Embedding, PadType, Split, TactileFrame};
use oracles::{retrieval_oracle, salient_oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ACCEPTANCE_SEED: u64 = 2025;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (params, batch) = random_problem(seed);
        let report = check_gradients(&params, &batch, &LossConfig::default(), FD_STEP).map_err(|e| e.to_string())?;
        if report.groups.len() != 6 || !report.passed() {
            return Err(format!("seed {seed}: worst relative error {:.2e}", report.worst()));
        }
        worst = worst.max(report.worst());
    }
    let elapsed = start.elapsed();
    check(
        worst < GRAD_REL_TOLERANCE && within(elapsed, Duration::from_secs(30)),
        format!("20 seeds, 6 groups, step {FD_STEP:e}, worst {worst:.2e}, {elapsed:.2?}"),
    )
}

fn random_video(rng: &mut ChaCha8Rng) -> Vec<TactileFrame> {
    let (h, w) = (rng.random_range(1..5u32), rng.random_range(1..5u32));
    let n = rng.random_range(1..40usize);
    let levels = rng.random_range(2..5u32);
    let coarse = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            let values = (0..h * w)
                .map(|_| {
                    if coarse {
                        rng.random_range(0..levels) as f32 / (levels - 1) as f32
                    } else {
                        rng.random::<f32>()
                    }
                })
                .collect();
            TactileFrame::new(h, w, values).unwrap()
        })
        .collect()
}

fn saliency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let frames = random_video(&mut rng);
        let k = rng.random_range(1..16usize);
        let got = select_salient_frames(&frames, &SaliencyConfig::with_k(k)).map_err(|e| e.to_string())?;
        if got != salient_oracle(&frames, k) {
            return Err(format!("random case {case} (k={k}) differs"));
        }
    }
    let palette = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let mut exhaustive = 0usize;
    for n in 1..=8u32 {
        for code in 0..4usize.pow(n) {
            let frames: Vec<TactileFrame> = (0..n)
                .map(|i| TactileFrame::new(1, 2, palette[(code >> (2 * i)) & 3].to_vec()).unwrap())
                .collect();
            for k in 1..=n as usize {
                let got = select_salient_frames(&frames, &SaliencyConfig::with_k(k)).map_err(|e| e.to_string())?;
                if got != salient_oracle(&frames, k) {
                    return Err(format!("two-level video n={n} code={code} k={k} differs"));
                }
                exhaustive += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        within(elapsed, Duration::from_secs(10)),
        format!("1000 random videos and {exhaustive} exhaustive two-level cases match, {elapsed:.2?}"),
    )
}

fn random_embedding(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = if rng.random_bool(0.5) {
            // axis-aligned vectors make exact ties common
            let mut v = vec![0.0; dim];
            v[rng.random_range(0..dim)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            v
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        if let Some(e) = Embedding::normalized_from(&v) {
            return e;
        }
    }
}

fn retrieval() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 4;
    for case in 0..500 {
        let n = rng.random_range(1..=64usize);
        let entries: Vec<IndexEntry> = (0..n)
            .map(|i| {
                let object = rng.random_range(0..6);
                IndexEntry {
                    sample_id: format!("s{:03}", (i * 37) % 101),
                    object_id: format!("o{object}"),
                    part_id: "p1".into(),
                    label: format!("object {object}"),
                    adjectives: vec!["hard".into()],
                    embedding: random_embedding(&mut rng, dim),
                    pad_type: PadType::Plain,
                }
            })
            .collect();
        let mut index = TactileIndex::new(dim);
        index.insert_all(entries.clone()).map_err(|e| e.to_string())?;
        let query = random_embedding(&mut rng, dim);
        let top_k = rng.random_range(1..12);
        let got = index
            .retrieve(&query, &RetrievalConfig { top_k })
            .map_err(|e| e.to_string())?;
        if got != retrieval_oracle(&entries, &query, top_k) {
            return Err(format!("case {case} ({n} entries, top_k {top_k}) differs"));
        }
    }
    let elapsed = start.elapsed();
    check(
        within(elapsed, Duration::from_secs(10)),
        format!("500 random indices of at most 64 entries match, {elapsed:.2?}"),
    )
}

struct Trained {
    dataset: Dataset,
    model: EncoderModel,
    index: TactileIndex,
    elapsed: Duration,
}

fn trained() -> Trained {
    let start = Instant::now();
    let dataset = generate_dataset(&GeneratorSpec::with_seed(ACCEPTANCE_SEED)).unwrap();
    let (model, _) = train(&dataset, &Default::default()).unwrap();
    let elapsed = start.elapsed();
    let index = build_index(&dataset, &model, &[Split::Train], &SaliencyConfig::default()).unwrap();
    Trained {
        dataset,
        model,
        index,
        elapsed,
    }
}

fn training(t: &Trained) -> Outcome {
    let seen = t.dataset.objects_in(Split::Train);
    let val = t.dataset.objects_in(Split::Val).len();
    let unseen = t.dataset.objects_in(Split::Test).difference(&seen).count();
    let m = training_metrics(&t.dataset, &t.model, &SaliencyConfig::default()).map_err(|e| e.to_string())?;
    check(
        m.heldout_mae <= 1.0 && m.cosine_gap() >= 0.2 && within(t.elapsed, Duration::from_secs(180)),
        format!(
            "{}/{}/{} train/val/unseen objects, held-out MAE {:.3}, cosine gap {:.3} ({:.3} vs {:.3}), {:.2?}",
            seen.len(),
            val,
            unseen,
            m.heldout_mae,
            m.cosine_gap(),
            m.same_part_cosine,
            m.different_object_cosine,
            t.elapsed
        ),
    )
}

fn mock(dataset: &Dataset) -> LlmBackend {
    LlmBackend::ScriptedMock(ScriptedMock::new(MockRules::from_dataset(dataset)))
}

fn accuracy(report: &EvalReport, variant: Variant, category: &str) -> Result<f64, String> {
    report
        .summary(&variant.to_string(), category)
        .and_then(|s| s.accuracy)
        .ok_or_else(|| format!("no {variant} result for {category}"))
}

fn guessing_report(t: &Trained) -> Result<EvalReport, String> {
    let llm = mock(&t.dataset);
    run_guessing(
        &t.dataset,
        &t.model,
        &t.index,
        &llm,
        llm.name(),
        &Variant::ALL,
        &EvalConfig::default(),
    )
    .map_err(|e| e.to_string())
}

fn baseline(report: &EvalReport) -> Outcome {
    let balls = accuracy(report, Variant::EncoderBaseline, "balls")?;
    let fruits = accuracy(report, Variant::EncoderBaseline, "fruits")?;
    let unseen = accuracy(report, Variant::EncoderBaseline, "unseen")?;
    check(
        balls >= 0.8 && fruits >= 0.8 && unseen >= 0.9,
        format!(
            "balls {:.1}%, fruits {:.1}%, unseen after teaching {:.1}%",
            100.0 * balls,
            100.0 * fruits,
            100.0 * unseen
        ),
    )
}

fn rag_ordering(report: &EvalReport) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut strict = false;
    for category in ["balls", "fruits", "unseen"] {
        let no_rag = accuracy(report, Variant::LlmNoRag, category)?;
        let rag = accuracy(report, Variant::LlmRag, category)?;
        ok &= rag >= no_rag;
        strict |= rag > no_rag;
        parts.push(format!("{category} {:.1}% -> {:.1}%", 100.0 * no_rag, 100.0 * rag));
    }
    let rag = accuracy(report, Variant::LlmRag, "unseen")?;
    let taught = accuracy(report, Variant::LlmRagTeach, "unseen")?;
    ok &= taught >= rag;
    strict |= taught > rag;
    parts.push(format!(
        "unseen after teaching {:.1}% -> {:.1}%",
        100.0 * rag,
        100.0 * taught
    ));
    check(ok && strict, parts.join("; "))
}

fn sorting(t: &Trained) -> Outcome {
    let llm = mock(&t.dataset);
    let cfg = EvalConfig::default();
    let report = run_sorting(
        &t.dataset,
        &t.model,
        &t.index,
        &llm,
        llm.name(),
        &[Variant::LlmNoRag, Variant::LlmRag],
        octo_core::adjectives::Property::Hardness,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for variant in [Variant::LlmNoRag, Variant::LlmRag] {
        let seen = report
            .summary(&variant.to_string(), "seen")
            .ok_or_else(|| format!("no seen result for {variant}"))?;
        let acc = seen.accuracy.ok_or("no seen pairs")?;
        ok &= acc >= 0.9;
        parts.push(format!(
            "{variant} seen {:.1}% ({}/{} pairs)",
            100.0 * acc,
            seen.correct,
            seen.total
        ));
        if let Some(unseen) = report.summary(&variant.to_string(), "unseen") {
            parts.push(format!(
                "unseen {} ({}/{} pairs, reported only)",
                unseen.accuracy.map_or("n/a".into(), |a| format!("{:.1}%", 100.0 * a)),
                unseen.correct,
                unseen.total
            ));
        }
    }
    check(ok, format!("gap {}: {}", cfg.sort_gap, parts.join("; ")))
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pipeline_run(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "gen-dataset".into(),
            "--out".into(),
            p("ds"),
            "--seed".into(),
            ACCEPTANCE_SEED.to_string(),
        ],
        vec![
            "train".into(),
            "--dataset".into(),
            p("ds"),
            "--out".into(),
            p("model.json"),
            "--log".into(),
            p("log.json"),
        ],
        vec![
            "build-index".into(),
            "--dataset".into(),
            p("ds"),
            "--model".into(),
            p("model.json"),
            "--out".into(),
            p("index.json"),
        ],
        vec![
            "eval".into(),
            "guessing".into(),
            "--out".into(),
            p("guessing.json"),
            "--record".into(),
            p("fixture.json"),
        ],
        vec!["eval".into(), "sorting".into(), "--out".into(), p("sorting.json")],
    ];
    for mut args in steps {
        if args[0] == "eval" {
            args.extend(
                ["--dataset", "--model", "--index"]
                    .iter()
                    .zip(["ds", "model.json", "index.json"])
                    .flat_map(|(flag, name)| [flag.to_string(), p(name)]),
            );
        }
        let o = octo(&args);
        if !o.status.success() {
            return Err(format!("{}: {}", args[0], String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(files_under(dir))
}

fn determinism() -> Outcome {
    let first = pipeline_run(&fresh_dir("acceptance-run-a"))?;
    let second = pipeline_run(&fresh_dir("acceptance-run-b"))?;
    let files = first.len();
    let bytes: usize = first.iter().map(|f| f.1.len()).sum();
    check(
        first == second && files > 7,
        format!("gen-dataset, train, build-index, eval guessing and sorting: {files} files, {bytes} bytes identical across runs"),
    )
}

fn round_trips(t: &Trained, report: &EvalReport) -> Outcome {
    let dir = fresh_dir("acceptance-formats");
    let err = |e: &dyn std::fmt::Display| e.to_string();

    write_dataset(&t.dataset, &dir.join("a")).map_err(|e| err(&e))?;
    let loaded = read_dataset(&dir.join("a")).map_err(|e| err(&e))?;
    write_dataset(&loaded, &dir.join("b")).map_err(|e| err(&e))?;
    let dataset_ok = loaded == t.dataset && files_under(&dir.join("a")) == files_under(&dir.join("b"));

    let same_bytes = |a: &str, b: &str| fs::read(dir.join(a)).unwrap() == fs::read(dir.join(b)).unwrap();
    save_model(&t.model, &dir.join("m1")).map_err(|e| err(&e))?;
    let model = load_model(&dir.join("m1")).map_err(|e| err(&e))?;
    save_model(&model, &dir.join("m2")).map_err(|e| err(&e))?;
    let model_ok = model.raw_params() == t.model.raw_params() && same_bytes("m1", "m2");

    save_index(&t.index, &dir.join("i1")).map_err(|e| err(&e))?;
    let index = load_index(&dir.join("i1")).map_err(|e| err(&e))?;
    save_index(&index, &dir.join("i2")).map_err(|e| err(&e))?;
    let index_ok = index == t.index && same_bytes("i1", "i2");

    emit_report(report, &dir.join("r1")).map_err(|e| err(&e))?;
    let back = read_report(&dir.join("r1")).map_err(|e| err(&e))?;
    emit_report(&back, &dir.join("r2")).map_err(|e| err(&e))?;
    let report_ok = &back == report && same_bytes("r1", "r2");

    check(
        dataset_ok && model_ok && index_ok && report_ok,
        format!("dataset {dataset_ok}, model {model_ok}, index {index_ok}, report {report_ok}"),
    )
}

#[test]
fn acceptance() {
    let mut out = std::io::stdout();
    writeln!(out).unwrap();
    let mut failures = Vec::new();
    let mut record = |name: &str, outcome: Outcome| {
        let line = match &outcome {
            Ok(detail) => format!("PASS {name}: {detail}"),
            Err(detail) => format!("FAIL {name}: {detail}"),
        };
        writeln!(out, "{line}").unwrap();
        if outcome.is_err() {
            failures.push(line);
        }
    };
    record("gradient correctness", gradients());
    record("saliency oracle", saliency());
    record("retrieval oracle", retrieval());
    let t = trained();
    record("training outcome", training(&t));
    match guessing_report(&t) {
        Ok(report) => {
            record("baseline accuracy", baseline(&report));
            record("rag ordering", rag_ordering(&report));
            record("format round-trips", round_trips(&t, &report));
        }
        Err(e) => {
            record("baseline accuracy", Err(e.clone()));
            record("rag ordering", Err(e.clone()));
            record("format round-trips", Err(e));
        }
    }
    record("sorting", sorting(&t));
    record("determinism", determinism());
    assert!(failures.is_empty(), "{failures:#?}");
}
