//! Errors as JSON lines on standard error, each with its exit code.

use std::fmt;
use std::path::Path;

use locpar_core::syntax::SyntaxError;
use locpar_core::typecheck::ProgramError;
use serde::Serialize;

/// What went wrong, which decides the exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Syntax,
    Type,
    Semantics,
    Usage,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Syntax | Kind::Type => 1,
            Kind::Semantics => 2,
            Kind::Usage | Kind::Io => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpanOut {
    pub line: u32,
    pub col: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: Kind,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<SpanOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
}

impl Diagnostic {
    pub fn new(kind: Kind, code: &str, message: impl fmt::Display) -> Self {
        Diagnostic {
            kind,
            code: code.to_owned(),
            message: message.to_string(),
            file: None,
            span: None,
            function: None,
        }
    }

    pub fn in_file(mut self, path: &Path) -> Self {
        self.file = Some(path.display().to_string());
        self
    }

    pub fn io(path: &Path, e: &std::io::Error) -> Self {
        Diagnostic::new(Kind::Io, "Io", e).in_file(path)
    }

    pub fn syntax(path: &Path, e: &SyntaxError) -> Self {
        let mut d = Diagnostic::new(Kind::Syntax, "SyntaxError", &e.message).in_file(path);
        d.span = Some(SpanOut {
            line: e.span.line,
            col: e.span.col,
        });
        d
    }

    pub fn typing(path: &Path, e: &ProgramError) -> Self {
        let mut d = Diagnostic::new(Kind::Type, e.error.code(), &e.error).in_file(path);
        d.function = Some(
            e.function
                .as_ref()
                .map_or("main", |f| f.as_str())
                .to_owned(),
        );
        d
    }

    pub fn semantics(code: &str, message: impl fmt::Display) -> Self {
        Diagnostic::new(Kind::Semantics, code, message)
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        Diagnostic::new(Kind::Usage, "Usage", message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("diagnostics serialize")
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for Diagnostic {}
