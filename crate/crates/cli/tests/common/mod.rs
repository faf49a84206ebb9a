#![allow(dead_code)]

use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub const OCTO: &str = env!("CARGO_BIN_EXE_octo");

pub fn octo<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    Command::new(OCTO).args(args).output().expect("octo runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[track_caller]
pub fn ok(o: Output) -> Output {
    assert_eq!(
        o.status.code(),
        Some(0),
        "stdout:\n{}\nstderr:\n{}",
        stdout(&o),
        stderr(&o)
    );
    o
}

/// Flags for a small dataset that trains in well under a second.
pub const SMALL_DATASET: [&str; 14] = [
    "--objects",
    "16",
    "--val-objects",
    "2",
    "--test-objects",
    "3",
    "--samples-per-part",
    "8",
    "--holdout",
    "3",
    "--frames",
    "16",
    "--grid",
    "10",
];

pub struct Artifacts {
    pub root: PathBuf,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub index: PathBuf,
}

impl Artifacts {
    pub fn sample(&self, id: &str) -> PathBuf {
        self.dataset.join(format!("{id}.tact"))
    }

    pub fn model_index(&self) -> Vec<String> {
        vec![
            "--model".into(),
            self.model.display().to_string(),
            "--index".into(),
            self.index.display().to_string(),
        ]
    }
}

pub fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Dataset, model and train index for the small dataset, built once per
/// test binary.
pub fn artifacts() -> &'static Artifacts {
    static A: OnceLock<Artifacts> = OnceLock::new();
    A.get_or_init(|| {
        let root = fresh_dir("octo-artifacts");
        let a = Artifacts {
            dataset: root.join("ds"),
            model: root.join("model.json"),
            index: root.join("index.json"),
            root,
        };
        let mut gen = vec![
            "gen-dataset".to_owned(),
            "--out".into(),
            a.dataset.display().to_string(),
        ];
        gen.extend(SMALL_DATASET.iter().map(|s| s.to_string()));
        ok(octo(&gen));
        ok(octo([
            OsStr::new("train"),
            "--dataset".as_ref(),
            a.dataset.as_os_str(),
            "--out".as_ref(),
            a.model.as_os_str(),
        ]));
        ok(octo([
            OsStr::new("build-index"),
            "--dataset".as_ref(),
            a.dataset.as_os_str(),
            "--model".as_ref(),
            a.model.as_os_str(),
            "--out".as_ref(),
            a.index.as_os_str(),
        ]));
        a
    })
}

/// Lines of the scripted chat session, run from inside the dataset directory.
pub fn chat_script() -> Vec<String> {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/chat.script"))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}
