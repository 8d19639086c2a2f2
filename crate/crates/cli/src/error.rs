use std::fmt;

use ptm_energy::gradients::GradientError;
use ptm_energy::hallucination::{ConfigError, DesignError};
use ptm_energy::metrics::{FilterError, MetricsError};
use ptm_energy::screening::ScreeningError;
use ptm_energy::tensor_io::{ChainMapError, NpyError, ShapeError, TableError};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Validation,
    Io,
    Invariant,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Validation => 1,
            Category::Io => 2,
            Category::Invariant => 3,
        }
    }
}

/// The one structured error a failed run reports.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub category: Category,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            category,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn validation(kind: &str, message: impl Into<String>) -> Self {
        Self::new(Category::Validation, kind, message)
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        Self::new(Category::Io, "Io", format!("{}: {err}", path.display()))
    }

    /// Prefix the message with the file it came from.
    pub fn at(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Variant name of an error enum, taken from its `Debug` form.
fn variant<E: fmt::Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or("Error")
        .to_string()
}

fn classify<E: fmt::Debug + fmt::Display>(e: E, io: bool) -> CliError {
    let category = if io { Category::Io } else { Category::Validation };
    CliError::new(category, variant(&e), e.to_string())
}

impl From<NpyError> for CliError {
    fn from(e: NpyError) -> Self {
        let io = matches!(e, NpyError::Io(_));
        classify(e, io)
    }
}

impl From<ChainMapError> for CliError {
    fn from(e: ChainMapError) -> Self {
        let io = matches!(e, ChainMapError::Io(_));
        classify(e, io)
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        let io = matches!(e, TableError::Io(_));
        classify(e, io)
    }
}

impl From<ShapeError> for CliError {
    fn from(e: ShapeError) -> Self {
        classify(e, false)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        classify(e, false)
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        classify(e, false)
    }
}

impl From<GradientError> for CliError {
    fn from(e: GradientError) -> Self {
        match e {
            GradientError::Metrics(m) => m.into(),
            other => classify(other, false),
        }
    }
}

impl From<ScreeningError> for CliError {
    fn from(e: ScreeningError) -> Self {
        let io = matches!(e, ScreeningError::Candidate { io: true, .. });
        classify(e, io)
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::Config(ConfigError::Io(io)) => CliError::new(Category::Io, "Io", io.to_string()),
            DesignError::Config(c) => classify(c, false),
            DesignError::Loss(l) => classify(l, false),
            DesignError::Gradient(g) => g.into(),
            other => classify(other, false),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        DesignError::Config(e).into()
    }
}
