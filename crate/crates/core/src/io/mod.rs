//! On-disk formats: avatar container, expression streams, display profiles
//! and PNG images. Loaders reject malformed input instead of repairing it.

mod container;
mod expression;
mod png;
mod profile;

pub use container::{load_avatar, save_avatar, MAGIC};
pub use expression::{load_expression_stream, ExpressionRecord, ExpressionStream, StreamTail};
pub use png::{
    encode_png, load_quilt, parse_quilt_suffix, quilt_path, quilt_suffix, read_image_png, save_quilt,
    write_image_png, QuiltSidecar,
};
pub use profile::{load_profile, load_profile_file, ProfileFile};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: not a GSAV1 avatar container")]
    BadMagic,
    #[error("truncated payload in {field}: need {expected} bytes, found {actual}")]
    TruncatedPayload {
        field: String,
        expected: usize,
        actual: usize,
    },
    #[error("schema violation in {field}: {detail}")]
    SchemaViolation { field: String, detail: String },
    #[error("line {line}: frame {frame} does not follow frame {previous}")]
    NonMonotoneFrames { line: usize, frame: u64, previous: u64 },
    #[error("line {line}: psi has {actual} weights, stream started with {expected}")]
    InconsistentK {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image encoding failed: {0}")]
    Encode(String),
}

impl FormatError {
    pub(crate) fn schema(field: impl Into<String>, detail: impl Into<String>) -> Self {
        FormatError::SchemaViolation {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
