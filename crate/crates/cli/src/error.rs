use fisheye3d::analysis::AnalysisError;
use fisheye3d::data::DataError;
use fisheye3d::evaluation::EvalError;
use fisheye3d::frustum::FrustumError;
use fisheye3d::geometry::GeometryError;
use fisheye3d::warp::WarpError;
use std::path::Path;

/// Failure class; decides the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: Kind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: Kind::Data, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: Kind::Numerical, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Numerical => 4,
        }
    }

    /// Single-line JSON record for stderr.
    pub fn to_line(&self) -> String {
        let kind = match self.kind {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Numerical => "numerical",
        };
        serde_json::json!({ "error": kind, "code": self.exit_code(), "message": self.message }).to_string()
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidConfig(_) => Self::usage(e.to_string()),
            EvalError::InvalidReport(_) => Self::numerical(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<WarpError> for CliError {
    fn from(e: WarpError) -> Self {
        match e {
            WarpError::InvalidSpec(_) => Self::usage(e.to_string()),
            WarpError::Io(_) => Self::data(e.to_string()),
            _ => Self::numerical(e.to_string()),
        }
    }
}

impl From<FrustumError> for CliError {
    fn from(e: FrustumError) -> Self {
        match e {
            FrustumError::InvalidBinning(_) | FrustumError::InvalidBev(_) => Self::usage(e.to_string()),
            FrustumError::Io(_) => Self::data(e.to_string()),
            _ => Self::numerical(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Io(_) | AnalysisError::MissingLensType(_) | AnalysisError::TooFewPoints(_) => Self::data(e.to_string()),
            AnalysisError::InvalidFraction(_) => Self::usage(e.to_string()),
            _ => Self::numerical(e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        Self::numerical(e.to_string())
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        Self::data(e.to_string())
    }
}
