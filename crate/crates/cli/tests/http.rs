//! HTTP service: status codes, session isolation, schema conformance and
//! parity with the chat REPL.

mod common;

use std::fs;
use std::path::Path;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;

use common::{artifacts, chat_script, fresh_dir};
use octo_cli::{artifacts as load, repl, server};
use octo_core::llm::{ChatMessage, LanguageModel, LlmBackend, LlmError, MockRules, ScriptedMock, Transcript};
use octo_core::session::{Reply, Session, SessionEnv};
use serde_json::{json, Value};

struct Server {
    base: String,
    _runtime: tokio::runtime::Runtime,
}

impl Server {
    fn start(env: SessionEnv, static_dir: Option<&Path>) -> Self {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = server::router(server::AppState::new(env), static_dir.map(Path::to_path_buf));
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Server {
            base,
            _runtime: runtime,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn get(&self, path: &str) -> (u16, Value) {
        read(agent().get(&self.url(path)).call())
    }

    fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        read(
            agent()
                .post(&self.url(path))
                .header("content-type", "application/json")
                .send(body.to_string()),
        )
    }

    fn post_raw(&self, path: &str, content_type: &str, body: &[u8]) -> (u16, Value) {
        read(
            agent()
                .post(&self.url(path))
                .header("content-type", content_type)
                .send(body),
        )
    }

    fn create(&self) -> String {
        let (status, v) = self.post_raw("/sessions", "application/json", b"");
        assert_eq!(status, 201, "{v}");
        v["session_id"].as_str().unwrap().to_owned()
    }

    fn touch(&self, id: &str, file: &Path) -> (u16, Value) {
        let name = file.file_name().unwrap().to_str().unwrap();
        self.post_raw(
            &format!("/sessions/{id}/touch?name={name}"),
            "application/octet-stream",
            &fs::read(file).unwrap(),
        )
    }

    fn message(&self, id: &str, text: &str) -> (u16, Value) {
        self.post_json(&format!("/sessions/{id}/message"), &json!({ "text": text }))
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn read(r: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
    let mut r = r.unwrap();
    let status = r.status().as_u16();
    let text = r.body_mut().read_to_string().unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::String(text));
    (status, value)
}

fn mock() -> Arc<dyn LanguageModel> {
    let dataset = load::dataset(&artifacts().dataset).unwrap();
    Arc::new(LlmBackend::ScriptedMock(ScriptedMock::new(MockRules::from_dataset(
        &dataset,
    ))))
}

fn env_with(llm: Arc<dyn LanguageModel>) -> SessionEnv {
    let a = artifacts();
    load::session_env(&a.model, &a.index, llm, true).unwrap()
}

fn schema() -> &'static Value {
    static S: OnceLock<Value> = OnceLock::new();
    S.get_or_init(|| {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/http-api.v1.json");
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    })
}

#[track_caller]
fn conforms(def: &str, value: &Value) {
    let mut doc = schema().clone();
    doc["$ref"] = json!(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&doc).unwrap();
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?}\n{value}");
}

#[track_caller]
fn error_status(expected: u16, (status, body): (u16, Value)) -> String {
    assert_eq!(status, expected, "{body}");
    conforms("ErrorBody", &body);
    body["error"].as_str().unwrap().to_owned()
}

fn reply((status, body): (u16, Value)) -> Reply {
    assert_eq!(status, 200, "{body}");
    conforms("Reply", &body);
    serde_json::from_value(body).unwrap()
}

#[test]
fn schema_lists_exactly_the_served_endpoints() {
    let endpoints: Vec<(String, String)> = schema()["endpoints"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["method"].as_str().unwrap().into(), e["path"].as_str().unwrap().into()))
        .collect();
    let expected = [
        ("GET", "/healthz"),
        ("POST", "/sessions"),
        ("GET", "/sessions/{id}"),
        ("POST", "/sessions/{id}/touch"),
        ("POST", "/sessions/{id}/message"),
        ("POST", "/sessions/{id}/teach"),
        ("GET", "/sessions/{id}/retrieval"),
    ];
    assert_eq!(endpoints, expected.map(|(m, p)| (m.to_owned(), p.to_owned())));
    assert_eq!(schema()["version"], server::API_VERSION);
}

#[test]
fn healthz_reports_version() {
    let s = Server::start(env_with(mock()), None);
    let (status, body) = s.get("/healthz");
    assert_eq!(status, 200);
    conforms("Health", &body);
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn unknown_sessions_are_404() {
    let s = Server::start(env_with(mock()), None);
    let sample = artifacts().sample("o000-p1-s000");
    error_status(404, s.get("/sessions/nope"));
    error_status(404, s.get("/sessions/nope/retrieval"));
    error_status(404, s.touch("nope", &sample));
    error_status(404, s.message("nope", "guess"));
    error_status(404, s.post_json("/sessions/nope/teach", &json!({ "label": "x" })));
}

#[test]
fn malformed_payloads_are_4xx() {
    let s = Server::start(env_with(mock()), None);
    let id = s.create();
    error_status(
        400,
        s.post_raw(
            &format!("/sessions/{id}/touch"),
            "application/octet-stream",
            b"not a tact file",
        ),
    );
    error_status(400, s.post_raw("/sessions", "application/json", b"{\"rag\": \"yes\"}"));
    for body in [&b"{"[..], b"{\"txt\": \"guess\"}", b"[]"] {
        let (status, _) = s.post_raw(&format!("/sessions/{id}/message"), "application/json", body);
        assert!((400..500).contains(&status), "{status}");
    }
    let (status, _) = s.post_raw(&format!("/sessions/{id}/message"), "text/plain", b"guess");
    assert!((400..500).contains(&status), "{status}");
    error_status(
        422,
        s.post_json(&format!("/sessions/{id}/teach"), &json!({ "label": "" })),
    );
    error_status(422, s.message(&id, "touch o000-p1-s000.tact"));
    error_status(422, s.message(&id, "guess"));
    let (status, view) = s.get(&format!("/sessions/{id}"));
    assert_eq!(status, 200);
    conforms("SessionView", &view);
    assert!(view["touches"].as_array().unwrap().is_empty());
}

#[test]
fn retrieval_is_null_until_touched() {
    let s = Server::start(env_with(mock()), None);
    let id = s.create();
    let (status, body) = s.get(&format!("/sessions/{id}/retrieval"));
    assert_eq!(status, 200);
    conforms("RetrievalBody", &body);
    assert!(body["retrieval"].is_null());
    reply(s.touch(&id, &artifacts().sample("o004-p1-s000")));
    let (_, body) = s.get(&format!("/sessions/{id}/retrieval"));
    conforms("RetrievalBody", &body);
    assert_eq!(body["retrieval"]["objects"][0]["object_id"], "o004");
}

/// Blocks every completion until released, announcing each one.
struct Gate {
    inner: ScriptedMock,
    entered: Mutex<Sender<()>>,
    release: Mutex<Receiver<()>>,
}

impl LanguageModel for Gate {
    fn complete(&self, transcript: &Transcript) -> Result<ChatMessage, LlmError> {
        self.entered.lock().unwrap().send(()).unwrap();
        self.release.lock().unwrap().recv().unwrap();
        self.inner.complete(transcript)
    }
}

#[test]
fn concurrent_mutation_of_one_session_is_409() {
    let (entered_tx, entered_rx) = channel();
    let (release_tx, release_rx) = channel();
    let gate = Gate {
        inner: ScriptedMock::new(MockRules::default()),
        entered: Mutex::new(entered_tx),
        release: Mutex::new(release_rx),
    };
    let s = Arc::new(Server::start(env_with(Arc::new(gate)), None));
    let id = s.create();
    let other = s.create();
    reply(s.touch(&id, &artifacts().sample("o000-p1-s000")));

    let busy = {
        let (s, id) = (s.clone(), id.clone());
        thread::spawn(move || s.message(&id, "describe"))
    };
    entered_rx.recv().unwrap();
    error_status(409, s.message(&id, "candidates a; b"));
    error_status(409, s.touch(&id, &artifacts().sample("o001-p1-s000")));
    error_status(409, s.get(&format!("/sessions/{id}")));
    reply(s.touch(&other, &artifacts().sample("o001-p1-s000")));
    release_tx.send(()).unwrap();
    let done = reply(busy.join().unwrap());
    assert!(done.text.starts_with("Object 1: "));
    let (_, view) = s.get(&format!("/sessions/{id}"));
    assert_eq!(view["touches"].as_array().unwrap().len(), 1);
}

struct Failing;

impl LanguageModel for Failing {
    fn complete(&self, _: &Transcript) -> Result<ChatMessage, LlmError> {
        Err(LlmError::Transport("endpoint unreachable".into()))
    }
}

#[test]
fn model_failures_are_502_and_leave_state_unchanged() {
    let s = Server::start(env_with(Arc::new(Failing)), None);
    let id = s.create();
    reply(s.touch(&id, &artifacts().sample("o000-p1-s000")));
    let (_, before) = s.get(&format!("/sessions/{id}"));
    let msg = error_status(502, s.message(&id, "describe"));
    assert!(msg.contains("endpoint unreachable"), "{msg}");
    let (_, after) = s.get(&format!("/sessions/{id}"));
    assert_eq!(before["transcript"], after["transcript"]);
    assert_eq!(before["touches"], after["touches"]);
}

#[test]
fn parallel_sessions_never_see_each_others_probes() {
    let s = Arc::new(Server::start(env_with(mock()), None));
    let plans = [
        ("o000", "a new baseball's seams; a plush ball; a tennis ball"),
        (
            "o004",
            "an unpeeled, ripe apple; a partially ripe kiwi; an unpeeled, ripe orange",
        ),
    ];
    let workers: Vec<_> = plans
        .iter()
        .map(|&(object, candidates)| {
            let s = s.clone();
            thread::spawn(move || {
                let id = s.create();
                reply(s.message(&id, &format!("candidates {candidates}")));
                let mut names = Vec::new();
                for k in 0..6 {
                    let file = artifacts().sample(&format!("{object}-p1-s{k:03}"));
                    reply(s.touch(&id, &file));
                    names.push(file.file_name().unwrap().to_string_lossy().into_owned());
                    reply(s.message(&id, "guess"));
                }
                (id, names)
            })
        })
        .collect();
    let results: Vec<_> = workers.into_iter().map(|w| w.join().unwrap()).collect();
    assert_ne!(results[0].0, results[1].0);
    for (id, names) in &results {
        let (_, view) = s.get(&format!("/sessions/{id}"));
        let seen: Vec<&str> = view["touches"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["name"].as_str().unwrap())
            .collect();
        assert_eq!(seen, names.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(view["log"].as_array().unwrap().len(), 13);
    }
}

/// Runs the chat script through the REPL and over HTTP on fresh, identical
/// environments and compares every outcome.
#[test]
fn http_matches_repl_for_the_chat_script() {
    let a = artifacts();
    let mut session = Session::new("local", env_with(mock()));
    let s = Server::start(env_with(mock()), None);
    let id = s.create();
    let mut compared = 0;
    for line in chat_script() {
        let line = line.trim();
        if line == "quit" {
            break;
        }
        let (cli, http) = if let Some(file) = line.strip_prefix("touch ") {
            let path = a.dataset.join(file);
            if !path.exists() {
                continue;
            }
            (
                repl::handle_line(&mut session, &format!("touch {}", path.display())),
                s.touch(&id, &path),
            )
        } else {
            (repl::handle_line(&mut session, line), s.message(&id, line))
        };
        match cli {
            Ok(expected) => assert_eq!(reply(http), expected, "{line}"),
            Err(expected) => {
                let (status, body) = http;
                assert!(status == 422, "{line}: {status} {body}");
                conforms("ErrorBody", &body);
                assert_eq!(body["error"], expected, "{line}");
            }
        }
        compared += 1;
    }
    assert!(compared >= 20);
    let (_, view) = s.get(&format!("/sessions/{id}"));
    conforms("SessionView", &view);
    assert_eq!(
        serde_json::to_value(session.transcript().resolved_messages()).unwrap(),
        view["transcript"]
    );
    assert_eq!(serde_json::to_value(session.log()).unwrap(), view["log"]);
}

#[test]
fn touch_then_guess_matches_the_cli() {
    let a = artifacts();
    let candidates = "a new baseball's seams; a plush ball; a tennis ball";
    let sample = a.sample("o002-p1-s006");
    let mut args = vec!["--json".to_owned(), "guess".into()];
    args.extend(a.model_index());
    args.extend([
        "--knowledge".into(),
        a.dataset.display().to_string(),
        "--sample".into(),
        sample.display().to_string(),
        "--candidates".into(),
        candidates.into(),
        "--attempts".into(),
        "2".into(),
    ]);
    let cli: Value = serde_json::from_slice(&common::ok(common::octo(&args)).stdout).unwrap();

    let s = Server::start(env_with(mock()), None);
    let id = s.create();
    reply(s.message(&id, &format!("candidates {candidates}")));
    reply(s.touch(&id, &sample));
    let first = reply(s.message(&id, "guess"));
    let second = reply(s.message(&id, "guess again"));
    assert_eq!(cli["replies"], serde_json::to_value([first, second]).unwrap());
}

#[test]
fn teach_endpoint_matches_teach_message() {
    let a = artifacts();
    let unseen = a.sample("o014-p1-s000");
    let s = Server::start(env_with(mock()), None);
    let (by_endpoint, by_message) = (s.create(), s.create());
    reply(s.touch(&by_endpoint, &unseen));
    reply(s.touch(&by_message, &unseen));
    let one = reply(s.post_json(
        &format!("/sessions/{by_endpoint}/teach"),
        &json!({ "label": "a hairbrush handle" }),
    ));
    let two = reply(s.message(&by_message, "teach a hairbrush handle"));
    assert!(one.text.starts_with("Learned object 1 as a hairbrush handle."));
    assert!(two.text.starts_with("Learned object 1 as a hairbrush handle."));
    let (_, body) = s.get(&format!("/sessions/{by_endpoint}/retrieval"));
    let labels: Vec<&str> = body["retrieval"]["objects"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["label"].as_str().unwrap())
        .collect();
    assert!(labels.contains(&"a hairbrush handle"), "{labels:?}");
}

#[test]
fn create_session_can_disable_rag() {
    let s = Server::start(env_with(mock()), None);
    let (status, body) = s.post_json("/sessions", &json!({ "rag": false }));
    assert_eq!(status, 201);
    conforms("Created", &body);
    let id = body["session_id"].as_str().unwrap();
    reply(s.message(id, "candidates a new baseball's seams; a plush ball"));
    reply(s.touch(id, &artifacts().sample("o001-p1-s000")));
    reply(s.message(id, "guess"));
    let (_, view) = s.get(&format!("/sessions/{id}"));
    let prompts: Vec<&str> = view["transcript"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["content"].as_str().unwrap())
        .collect();
    assert!(prompts.iter().all(|p| !p.contains("Most similar objects")));
}

#[test]
fn static_files_are_served_beside_the_api() {
    let dir = fresh_dir("http-static");
    fs::write(dir.join("index.html"), "<h1>console</h1>").unwrap();
    let s = Server::start(env_with(mock()), Some(&dir));
    let (status, body) = s.get("/index.html");
    assert_eq!(status, 200);
    assert_eq!(body, Value::String("<h1>console</h1>".into()));
    assert_eq!(s.get("/healthz").0, 200);
}
