//! Interactive session state shared by the chat REPL and the HTTP service.
//!
//! A session holds candidate labels, the objects touched so far, guess
//! exclusions and one append-only transcript. Every command either succeeds
//! and commits its changes or fails and leaves the session untouched.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjectives::Property;
use crate::encoder::EncoderModel;
use crate::index::{IndexEntry, IndexError, RetrievalConfig, RetrievalResult, SharedIndex};
use crate::io::TactPayload;
use crate::llm::{
    build_guess_prompt, build_sort_prompt, converse, parse_answer, parse_ranking, LanguageModel, LlmError, PromptError,
    Transcript, SYSTEM_PROMPT,
};
use crate::pipeline::{describe, description_text, read_video, PipelineError, TactileReading};
use crate::saliency::SaliencyConfig;
use crate::tactile::{PadType, TactileError};

pub const TOUCH_REQUEST: &str = "Please use the gripper to grab the item.";
pub const TOUCH_DONE: &str = "Finished collecting tactile data.";

pub const HELP: &str = "Commands:
  candidates <label>; <label>; ...   set the options for guessing (no labels: list them)
  touch <file.tact>                  grasp an object (REPL) or upload it (HTTP)
  describe                           describe the last touched object
  guess                              guess the last touched object; repeat to guess again
  sort [hardness|roughness]          rank the touched objects (default hardness)
  describe and rank the objects by their hardness   same as `sort hardness`
  teach <label>                      add the last touched object to the index under <label>
  show-prompts                       print the prompts exchanged so far
  reset                              forget touched objects, candidates and exclusions
  help                               show this text";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown command `{0}`; type `help` for the list")]
    UnknownCommand(String),
    #[error("usage: {0}")]
    Usage(&'static str),
    #[error("touch an object first")]
    NoTouch,
    #[error("set at least two candidates first, e.g. `candidates an apple; a kiwi`")]
    NoCandidates,
    #[error("sorting needs at least two touched objects, {0} touched so far")]
    TooFewObjects(usize),
    #[error("fewer than two candidates remain unguessed; use `reset` or set new candidates")]
    NoOptionsLeft,
    #[error("invalid candidates: {0}")]
    BadCandidates(String),
    #[error("invalid label `{0}`")]
    BadLabel(String),
    #[error("invalid tactile sample: {0}")]
    BadSample(#[from] TactileError),
    #[error("model replied with something unusable: {0}")]
    Unparseable(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Pipeline(PipelineError),
}

impl From<PipelineError> for SessionError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Llm(e) => SessionError::Llm(e),
            PipelineError::Index(e) => SessionError::Index(e),
            PipelineError::Prompt(e) => SessionError::Unparseable(e.to_string()),
            other => SessionError::Pipeline(other),
        }
    }
}

impl SessionError {
    /// Whether the request itself was at fault rather than a backend.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, SessionError::Llm(_) | SessionError::Pipeline(_))
    }
}

/// Everything a session reads but does not own.
#[derive(Clone)]
pub struct SessionEnv {
    pub model: Arc<EncoderModel>,
    pub index: SharedIndex,
    pub llm: Arc<dyn LanguageModel>,
    pub retrieval: RetrievalConfig,
    pub saliency: SaliencyConfig,
    /// Whether descriptions are augmented with retrieved neighbours.
    pub rag: bool,
}

/// A parsed text command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Candidates(Option<Vec<String>>),
    Describe,
    Guess,
    Sort(Property),
    Teach(String),
    ShowPrompts,
    Reset,
    Help,
}

impl Command {
    pub fn parse(line: &str) -> Result<Self, SessionError> {
        let line = line.trim();
        let lower = line.to_lowercase();
        if lower.starts_with("describe and rank") || lower.starts_with("rank ") {
            let last = lower.trim_end_matches(['.', '?', '!']).rsplit(' ').next().unwrap_or("");
            return match last {
                "hardness" | "roughness" => Ok(Command::Sort(last.parse().expect("property name"))),
                _ => Err(SessionError::Usage(
                    "describe and rank the objects by their hardness|roughness",
                )),
            };
        }
        let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match word.to_lowercase().as_str() {
            "candidates" if rest.is_empty() => Ok(Command::Candidates(None)),
            "candidates" => Ok(Command::Candidates(Some(
                rest.split(';')
                    .map(|s| s.trim().to_owned())
                    .filter(|s| !s.is_empty())
                    .collect(),
            ))),
            "describe" if rest.is_empty() => Ok(Command::Describe),
            "guess" if rest.is_empty() || rest == "again" => Ok(Command::Guess),
            "sort" if rest.is_empty() => Ok(Command::Sort(Property::Hardness)),
            "sort" => rest
                .parse()
                .map(Command::Sort)
                .map_err(|_| SessionError::Usage("sort [hardness|roughness]")),
            "teach" if rest.is_empty() => Err(SessionError::Usage("teach <label>")),
            "teach" => Ok(Command::Teach(rest.to_owned())),
            "show-prompts" if rest.is_empty() => Ok(Command::ShowPrompts),
            "reset" if rest.is_empty() => Ok(Command::Reset),
            "help" | "?" => Ok(Command::Help),
            "describe" | "guess" | "show-prompts" | "reset" => {
                Err(SessionError::Usage("the command takes no arguments"))
            }
            "touch" => Err(SessionError::Usage("touch <file.tact> (over HTTP, upload to /touch)")),
            _ => Err(SessionError::UnknownCommand(word.to_owned())),
        }
    }
}

/// A touched object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Touch {
    pub object_number: usize,
    pub name: String,
    pub sample_id: String,
    pub pad_type: PadType,
    pub reading: TactileReading,
    pub adjectives: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guess: Option<String>,
    /// Touched object numbers in decreasing order of the sorted property.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub salient_frames: Option<Vec<usize>>,
}

impl Reply {
    fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }
}

/// One input and what came of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub input: String,
    pub reply: Result<Reply, String>,
}

#[derive(Clone)]
pub struct Session {
    id: String,
    env: SessionEnv,
    state: State,
    log: Vec<LogEntry>,
}

#[derive(Debug, Clone)]
struct State {
    candidates: Vec<String>,
    touches: Vec<Touch>,
    next_object: usize,
    excluded: Vec<String>,
    transcript: Transcript,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("state", &self.state)
            .field("log", &self.log.len())
            .finish()
    }
}

impl Session {
    pub fn new(id: impl Into<String>, env: SessionEnv) -> Self {
        Self {
            id: id.into(),
            env,
            state: State {
                candidates: Vec::new(),
                touches: Vec::new(),
                next_object: 1,
                excluded: Vec::new(),
                transcript: Transcript::with_system(SYSTEM_PROMPT).expect("system prompt is valid"),
            },
            log: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn candidates(&self) -> &[String] {
        &self.state.candidates
    }

    pub fn touches(&self) -> &[Touch] {
        &self.state.touches
    }

    pub fn excluded(&self) -> &[String] {
        &self.state.excluded
    }

    pub fn transcript(&self) -> &Transcript {
        &self.state.transcript
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Current retrieval for the last touched object; `None` before any
    /// touch or while the index is empty.
    pub fn retrieval(&self) -> Result<Option<RetrievalResult>, SessionError> {
        let Some(touch) = self.state.touches.last() else {
            return Ok(None);
        };
        let index = self.env.index.read().expect("index lock");
        if index.is_empty() {
            return Ok(None);
        }
        Ok(Some(index.retrieve(&touch.reading.embedding, &self.env.retrieval)?))
    }

    fn record(&mut self, input: String, outcome: &Result<Reply, SessionError>) {
        self.log.push(LogEntry {
            input,
            reply: outcome.as_ref().map(Clone::clone).map_err(ToString::to_string),
        });
    }

    /// Registers a grasped object. `name` only labels the log.
    pub fn touch(&mut self, name: &str, payload: TactPayload) -> Result<Reply, SessionError> {
        let outcome = self.try_touch(name, payload);
        self.record(format!("touch {name}"), &outcome);
        outcome
    }

    fn try_touch(&mut self, name: &str, payload: TactPayload) -> Result<Reply, SessionError> {
        let n = self.state.next_object;
        let sample_id = format!("{}/touch-{n}", self.id);
        let video = payload.into_video(sample_id.clone(), "touched", format!("touch-{n}"))?;
        let reading = read_video(&self.env.model, &video, &self.env.saliency)?;
        let salient = reading.salient_frames.clone();
        self.state.touches.push(Touch {
            object_number: n,
            name: name.to_owned(),
            sample_id,
            pad_type: video.pad_type,
            reading,
            adjectives: None,
        });
        self.state.next_object += 1;
        self.state.excluded.clear();
        Ok(Reply {
            text: format!("{TOUCH_REQUEST}\n{TOUCH_DONE}"),
            salient_frames: Some(salient),
            ..Reply::default()
        })
    }

    /// Runs one text command.
    pub fn message(&mut self, line: &str) -> Result<Reply, SessionError> {
        let outcome = Command::parse(line).and_then(|c| self.run(c));
        self.record(line.trim().to_owned(), &outcome);
        outcome
    }

    pub fn run(&mut self, command: Command) -> Result<Reply, SessionError> {
        let mut next = self.state.clone();
        let reply = match command {
            Command::Help => Reply::text(HELP),
            Command::ShowPrompts => Reply::text(next.transcript.pretty().trim_end().to_owned()),
            Command::Candidates(None) if next.candidates.is_empty() => Reply::text("No candidates set."),
            Command::Candidates(None) => Reply::text(format!("Candidates: {}.", next.candidates.join("; "))),
            Command::Candidates(Some(labels)) => {
                validate_candidates(&labels)?;
                next.candidates = labels;
                next.excluded.clear();
                Reply::text(format!("Candidates: {}.", next.candidates.join("; ")))
            }
            Command::Reset => {
                next.candidates.clear();
                next.touches.clear();
                next.excluded.clear();
                Reply::text("Cleared touched objects and candidates.")
            }
            Command::Describe => {
                let i = next.touches.len().checked_sub(1).ok_or(SessionError::NoTouch)?;
                let adjectives = self.ensure_described(&mut next, i)?;
                Reply::text(format!(
                    "Object {}: {}.",
                    next.touches[i].object_number,
                    adjectives.join(", ")
                ))
            }
            Command::Guess => self.guess(&mut next)?,
            Command::Sort(property) => self.sort(&mut next, property)?,
            Command::Teach(label) => self.teach(&next, &label)?,
        };
        self.state = next;
        Ok(reply)
    }

    fn rag(&self) -> Option<(&SharedIndex, &RetrievalConfig)> {
        self.env.rag.then_some((&self.env.index, &self.env.retrieval))
    }

    fn ensure_described(&self, next: &mut State, i: usize) -> Result<Vec<String>, SessionError> {
        if let Some(a) = &next.touches[i].adjectives {
            return Ok(a.clone());
        }
        let touch = &next.touches[i];
        let adjectives = describe(
            self.env.llm.as_ref(),
            &mut next.transcript,
            touch.object_number,
            &touch.reading,
        )?;
        next.touches[i].adjectives = Some(adjectives.clone());
        Ok(adjectives)
    }

    fn description(&self, touch: &Touch) -> Result<String, SessionError> {
        let adjectives = touch.adjectives.as_deref().unwrap_or_default();
        match self.rag() {
            Some((index, cfg)) => {
                let index = index.read().expect("index lock");
                if index.is_empty() {
                    return Ok(adjectives.join(", "));
                }
                Ok(description_text(adjectives, Some((&index, cfg)), &touch.reading.embedding)?.0)
            }
            None => Ok(description_text(adjectives, None, &touch.reading.embedding)?.0),
        }
    }

    fn guess(&self, next: &mut State) -> Result<Reply, SessionError> {
        let i = next.touches.len().checked_sub(1).ok_or(SessionError::NoTouch)?;
        if next.candidates.len() < 2 {
            return Err(SessionError::NoCandidates);
        }
        if next.candidates.iter().filter(|c| !next.excluded.contains(c)).count() < 2 {
            return Err(SessionError::NoOptionsLeft);
        }
        self.ensure_described(next, i)?;
        let touch = &next.touches[i];
        let description = self.description(touch)?;
        let prompt = build_guess_prompt(touch.object_number, &next.candidates, &description, &next.excluded)
            .map_err(|e| SessionError::BadCandidates(e.to_string()))?;
        prompt.prompt.push_into(&mut next.transcript).map_err(LlmError::from)?;
        let reply = converse(self.env.llm.as_ref(), &mut next.transcript)?;
        let guess = parse_answer(&reply.content, prompt.options.len())
            .ok()
            .map(|k| prompt.options[k].clone());
        if let Some(g) = &guess {
            next.excluded.push(g.clone());
        }
        Ok(Reply {
            text: reply.content,
            guess,
            ..Reply::default()
        })
    }

    fn sort(&self, next: &mut State, property: Property) -> Result<Reply, SessionError> {
        let n = next.touches.len();
        if n < 2 {
            return Err(SessionError::TooFewObjects(n));
        }
        let mut descriptions = Vec::with_capacity(n);
        for i in 0..n {
            self.ensure_described(next, i)?;
            descriptions.push(self.description(&next.touches[i])?);
        }
        build_sort_prompt(&descriptions, property)
            .map_err(|e| SessionError::Unparseable(e.to_string()))?
            .push_into(&mut next.transcript)
            .map_err(LlmError::from)?;
        let reply = converse(self.env.llm.as_ref(), &mut next.transcript)?;
        let ranking = parse_ranking(&reply.content, property, n)
            .ok()
            .map(|order| order.into_iter().map(|k| next.touches[k - 1].object_number).collect());
        Ok(Reply {
            text: reply.content,
            ranking,
            ..Reply::default()
        })
    }

    fn teach(&self, next: &State, label: &str) -> Result<Reply, SessionError> {
        let touch = next.touches.last().ok_or(SessionError::NoTouch)?;
        if label.is_empty() || label.contains(['\n', ';']) || label != label.trim() {
            return Err(SessionError::BadLabel(label.to_owned()));
        }
        let entry = IndexEntry {
            sample_id: touch.sample_id.clone(),
            object_id: format!("taught/{label}"),
            part_id: format!("touch-{}", touch.object_number),
            label: label.to_owned(),
            adjectives: touch.reading.adjectives.clone(),
            embedding: touch.reading.embedding.clone(),
            pad_type: touch.pad_type,
        };
        let mut index = self.env.index.write().expect("index lock");
        index.insert(entry)?;
        Ok(Reply::text(format!(
            "Learned object {} as {label}. The index now holds {} samples.",
            touch.object_number,
            index.len()
        )))
    }
}

fn validate_candidates(labels: &[String]) -> Result<(), SessionError> {
    build_guess_prompt(1, labels, "", &[]).map(|_| ()).or_else(|e| match e {
        PromptError::TooFewOptions(_) => Err(SessionError::BadCandidates("at least two labels".into())),
        other => Err(SessionError::BadCandidates(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{train, TrainConfig};
    use crate::generate::{generate_dataset, GeneratorSpec};
    use crate::index::build_index;
    use crate::llm::{LlmBackend, MockRules, Role, ScriptedMock};
    use crate::tactile::{Dataset, Split};

    fn fixture() -> (Dataset, SessionEnv) {
        let d = generate_dataset(&GeneratorSpec {
            num_objects: 8,
            parts_per_object: 2,
            samples_per_part: 4,
            frames_per_video: 6,
            grid_size: 6,
            pad_mix: 0.0,
            seed: 5,
            val_objects: 2,
            test_objects: 2,
            holdout_per_part: 1,
        })
        .unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            hidden_dim: 6,
            embed_dim: 4,
            saliency: SaliencyConfig::with_k(3),
            ..TrainConfig::default()
        };
        let (model, _) = train(&d, &cfg).unwrap();
        let index = build_index(&d, &model, &[Split::Train], &cfg.saliency).unwrap();
        let env = SessionEnv {
            model: Arc::new(model),
            index: index.into_shared(),
            llm: Arc::new(LlmBackend::ScriptedMock(ScriptedMock::new(MockRules::from_dataset(&d)))),
            retrieval: RetrievalConfig::default(),
            saliency: cfg.saliency,
            rag: true,
        };
        (d, env)
    }

    fn payload(d: &Dataset, i: usize) -> TactPayload {
        let v = &d.videos[i];
        TactPayload {
            pad_type: v.pad_type,
            frames: v.frames().to_vec(),
        }
    }

    #[test]
    fn commands_parse() {
        assert_eq!(
            Command::parse("candidates an apple; a kiwi ;").unwrap(),
            Command::Candidates(Some(vec!["an apple".into(), "a kiwi".into()]))
        );
        assert_eq!(
            Command::parse("  SORT roughness").unwrap(),
            Command::Sort(Property::Roughness)
        );
        assert_eq!(Command::parse("guess again").unwrap(), Command::Guess);
        assert_eq!(
            Command::parse("teach a red ball").unwrap(),
            Command::Teach("a red ball".into())
        );
        assert_eq!(
            Command::parse("Describe and rank the objects by their hardness.").unwrap(),
            Command::Sort(Property::Hardness)
        );
        assert!(matches!(
            Command::parse("rank them by weight"),
            Err(SessionError::Usage(_))
        ));
        assert!(matches!(Command::parse("sort softness"), Err(SessionError::Usage(_))));
        assert!(matches!(Command::parse("teach"), Err(SessionError::Usage(_))));
        assert!(matches!(Command::parse("dance"), Err(SessionError::UnknownCommand(_))));
    }

    #[test]
    fn prerequisites_leave_state_unchanged() {
        let (d, env) = fixture();
        let mut s = Session::new("t", env);
        let before = s.transcript().clone();
        assert!(matches!(s.message("guess"), Err(SessionError::NoTouch)));
        assert!(matches!(s.message("describe"), Err(SessionError::NoTouch)));
        assert!(matches!(s.message("teach a cup"), Err(SessionError::NoTouch)));
        s.touch("x.tact", payload(&d, 0)).unwrap();
        assert!(matches!(s.message("guess"), Err(SessionError::NoCandidates)));
        assert!(matches!(s.message("sort"), Err(SessionError::TooFewObjects(1))));
        assert!(matches!(
            s.message("candidates a; a"),
            Err(SessionError::BadCandidates(_))
        ));
        assert_eq!(s.transcript(), &before);
        assert!(s.candidates().is_empty());
        assert_eq!(s.log().len(), 7);
        assert!(s.log()[0].reply.is_err());
    }

    #[test]
    fn touch_replies_and_reports_salient_frames() {
        let (d, env) = fixture();
        let mut s = Session::new("t", env);
        let r = s.touch("x.tact", payload(&d, 0)).unwrap();
        assert_eq!(r.text, format!("{TOUCH_REQUEST}\n{TOUCH_DONE}"));
        assert_eq!(r.salient_frames.unwrap().len(), 3);
        assert!(s.retrieval().unwrap().is_some());
        assert_eq!(s.touches()[0].sample_id, "t/touch-1");
    }

    #[test]
    fn guess_again_omits_the_previous_answer() {
        let (d, env) = fixture();
        let labels: Vec<String> = d.objects.iter().take(3).map(|o| o.label.clone()).collect();
        let mut s = Session::new("t", env);
        s.message(&format!("candidates {}", labels.join("; "))).unwrap();
        s.touch("x.tact", payload(&d, 0)).unwrap();
        let first = s.message("guess").unwrap().guess.unwrap();
        let second = s.message("guess").unwrap().guess.unwrap();
        assert_ne!(first, second);
        let last_user = s
            .transcript()
            .messages()
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .unwrap();
        assert!(last_user.content.contains(crate::llm::GUESS_AGAIN_NOTE));
        assert!(!last_user.content.lines().any(|l| l.ends_with(&format!(") {first}"))));
        assert_eq!(s.excluded(), &[first, second][..]);
        assert!(matches!(s.message("guess"), Err(SessionError::NoOptionsLeft)));
        s.touch("y.tact", payload(&d, 1)).unwrap();
        assert!(s.excluded().is_empty());
    }

    #[test]
    fn sort_ranks_every_touched_object() {
        let (d, env) = fixture();
        let mut s = Session::new("t", env);
        for i in [0, 5, 9] {
            s.touch("x.tact", payload(&d, i)).unwrap();
        }
        let r = s.message("sort hardness").unwrap();
        let mut ranking = r.ranking.unwrap();
        assert!(r.text.lines().last().unwrap().contains(" > "));
        ranking.sort();
        assert_eq!(ranking, vec![1, 2, 3]);
        assert!(s
            .message("show-prompts")
            .unwrap()
            .text
            .contains("Describe and rank the objects by their hardness."));
    }

    #[test]
    fn teaching_makes_the_object_retrievable() {
        let (d, env) = fixture();
        let index = env.index.clone();
        let train = d.objects_in(Split::Train);
        let unseen = d.videos.iter().position(|v| !train.contains(&v.object_id)).unwrap();
        let mut s = Session::new("t", env);
        s.touch("x.tact", payload(&d, unseen)).unwrap();
        let before = index.read().unwrap().len();
        s.message("teach a mystery widget").unwrap();
        assert_eq!(index.read().unwrap().len(), before + 1);
        let result = s.retrieval().unwrap().unwrap();
        assert_eq!(result.samples[0].sample_id, "t/touch-1");
        assert!(result.objects.iter().any(|o| o.label == "a mystery widget"));
        assert!(matches!(
            s.message("teach a mystery widget"),
            Err(SessionError::Index(_))
        ));
        assert!(matches!(s.message("teach bad;label"), Err(SessionError::BadLabel(_))));
    }

    #[test]
    fn replaying_inputs_reproduces_outputs() {
        let (d, env) = fixture();
        let labels: Vec<String> = d.objects.iter().take(3).map(|o| o.label.clone()).collect();
        let run = |env: SessionEnv| {
            let mut s = Session::new("t", env);
            s.message(&format!("candidates {}", labels.join("; "))).unwrap();
            s.touch("x.tact", payload(&d, 2)).unwrap();
            s.message("describe").unwrap();
            s.message("guess").unwrap();
            s.touch("y.tact", payload(&d, 7)).unwrap();
            s.message("sort roughness").unwrap();
            (s.log().to_vec(), s.transcript().render())
        };
        assert_eq!(run(env.clone()), run(env));
    }
}
