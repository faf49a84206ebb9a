//! Line-oriented chat over a [`Session`].

use std::io::{self, BufRead, Write};
use std::path::Path;

use octo_core::session::{Reply, Session};

use crate::artifacts;

pub const BANNER: &str = "Tactile chat. Type `help` for commands, `quit` to leave.";

/// Runs one input line. `touch <path>` reads a `.tact` file; everything else
/// goes to the session as a text command.
pub fn handle_line(session: &mut Session, line: &str) -> Result<Reply, String> {
    let line = line.trim();
    let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    if word.eq_ignore_ascii_case("touch") {
        let path = rest.trim();
        if path.is_empty() {
            return Err("usage: touch <file.tact>".into());
        }
        let payload = artifacts::tact(Path::new(path)).map_err(|e| format!("{e:#}"))?;
        let name = Path::new(path)
            .file_name()
            .map_or(path.to_owned(), |n| n.to_string_lossy().into_owned());
        return session.touch(&name, payload).map_err(|e| e.to_string());
    }
    session.message(line).map_err(|e| e.to_string())
}

/// Reads commands until end of input or `quit`. With `echo`, each input is
/// written back after a `> ` prompt so the output reads as a transcript.
pub fn chat_loop(session: &mut Session, input: impl BufRead, out: &mut impl Write, echo: bool) -> io::Result<()> {
    writeln!(out, "{BANNER}")?;
    if !echo {
        write!(out, "> ")?;
        out.flush()?;
    }
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if echo && !trimmed.is_empty() {
            writeln!(out, "> {trimmed}")?;
        }
        if matches!(trimmed, "quit" | "exit") {
            break;
        }
        if !trimmed.is_empty() {
            match handle_line(session, trimmed) {
                Ok(reply) => writeln!(out, "{}", reply.text)?,
                Err(e) => writeln!(out, "error: {e}")?,
            }
            writeln!(out)?;
        }
        if !echo {
            write!(out, "> ")?;
            out.flush()?;
        }
    }
    Ok(())
}
