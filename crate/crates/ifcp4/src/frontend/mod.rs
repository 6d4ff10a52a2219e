//! Text formats: programs (`.mp4`), policies (`.pol`), contracts (`.ctr`)
//! and concrete states.

mod lexer;
mod policy_file;
mod printer;
mod program;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::lang_ast::Diagnostic;

pub use policy_file::{parse_contracts, parse_policy, parse_state, CaseKind, PolicyFile};
pub use printer::{print_expr, print_program, print_stmt};
pub use program::{parse_expr, parse_program};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{}", render_diags(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("{line}: {message}")]
    Semantic { line: usize, message: String },
}

fn render_diags(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

impl FrontendError {
    pub(crate) fn syntax(line: usize, col: usize, expected: &str, found: &str) -> FrontendError {
        FrontendError::Syntax {
            line,
            col,
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn semantic(line: usize, message: impl Into<String>) -> FrontendError {
        FrontendError::Semantic {
            line,
            message: message.into(),
        }
    }
}

/// A loaded text file with line lookup.
#[derive(Clone, Debug)]
pub struct SourceFile {
    pub path: PathBuf,
    pub text: String,
    line_starts: Vec<usize>,
}

impl SourceFile {
    pub fn new(path: impl Into<PathBuf>, text: String) -> SourceFile {
        let line_starts = std::iter::once(0)
            .chain(text.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        SourceFile {
            path: path.into(),
            text,
            line_starts,
        }
    }

    pub fn read(path: &Path) -> std::io::Result<SourceFile> {
        Ok(SourceFile::new(path, std::fs::read_to_string(path)?))
    }

    /// 1-based line and column of a byte offset.
    pub fn position(&self, offset: usize) -> (usize, usize) {
        let line = self.line_starts.partition_point(|s| *s <= offset);
        let start = self.line_starts[line - 1];
        (
            line,
            self.text[start..offset.min(self.text.len())]
                .chars()
                .count()
                + 1,
        )
    }

    pub fn line(&self, n: usize) -> Option<&str> {
        self.text.lines().nth(n.checked_sub(1)?)
    }
}

impl fmt::Display for SourceFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())
    }
}
