use std::fmt;
use std::path::Path;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or parameter values (exit 1).
    Usage(String),
    /// Unreadable, unwritable or malformed files (exit 2).
    Io(String),
    /// The numerics refused the input (exit 3).
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<bvg_core::Error> for CliError {
    fn from(e: bvg_core::Error) -> Self {
        use bvg_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParams(_) | E::UnderResolved(_) => CliError::Usage(msg),
            E::GridMismatch { .. } | E::Format(_) | E::Io(_) => CliError::Io(msg),
            E::NonZeroMean { .. } => CliError::Numerical(msg),
        }
    }
}

/// Attaches a file name to core errors raised while handling it.
pub trait Context<T> {
    fn with_path(self, path: &Path) -> CliResult<T>;
}

impl<T> Context<T> for bvg_core::Result<T> {
    fn with_path(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| match CliError::from(e) {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
            CliError::Numerical(m) => CliError::Numerical(format!("{}: {m}", path.display())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let cases = [
            (bvg_core::Error::invalid("x"), 1),
            (bvg_core::Error::Format("bad".into()), 2),
            (bvg_core::Error::GridMismatch { left: "a".into(), right: "b".into() }, 2),
            (bvg_core::Error::NonZeroMean { mean: 1.0, tolerance: 0.0 }, 3),
        ];
        for (e, code) in cases {
            assert_eq!(CliError::from(e).exit_code(), code);
        }
    }

    #[test]
    fn path_is_prepended() {
        let r: bvg_core::Result<()> = Err(bvg_core::Error::Format("short header".into()));
        let e = r.with_path(Path::new("in.pgm")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().starts_with("in.pgm: "));
    }
}
