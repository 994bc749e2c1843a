//! Line-delimited JSON expression streams.
//!
//! One record per line:
//!
//! ```text
//! {"frame":0,"t":0.0,"psi":[0.1,0.0],"head_rotation":[1,0,0,0],"head_translation":[0,0,0]}
//! ```

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::avatar::{ExpressionFrame, UNIT_NORM_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionRecord {
    pub frame: u64,
    pub t: f64,
    pub psi: Vec<f32>,
    pub head_rotation: [f32; 4],
    pub head_translation: [f32; 3],
}

impl ExpressionRecord {
    pub fn to_frame(&self) -> ExpressionFrame {
        ExpressionFrame {
            psi: self.psi.clone(),
            head_rotation: self.head_rotation,
            head_translation: self.head_translation,
            timestamp: self.t,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpressionStream {
    pub records: Vec<ExpressionRecord>,
}

impl ExpressionStream {
    /// Blend-shape count, taken from the first record.
    pub fn k(&self) -> Option<usize> {
        self.records.first().map(|r| r.psi.len())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(ExpressionRecord::to_line).collect()
    }
}

/// Validation state carried across lines, shared by full loads and tails.
#[derive(Debug, Clone, Default)]
struct Validator {
    k: Option<usize>,
    last_frame: Option<u64>,
    line: usize,
}

impl Validator {
    fn accept(&mut self, text: &str) -> Result<Option<ExpressionRecord>, FormatError> {
        self.line += 1;
        let line = self.line;
        let text = text.trim_end_matches('\r');
        if text.trim().is_empty() {
            return Ok(None);
        }
        let rec: ExpressionRecord = serde_json::from_str(text).map_err(|e| FormatError::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some(expected) = self.k {
            if rec.psi.len() != expected {
                return Err(FormatError::InconsistentK {
                    line,
                    expected,
                    actual: rec.psi.len(),
                });
            }
        }
        if let Some(previous) = self.last_frame {
            if rec.frame <= previous {
                return Err(FormatError::NonMonotoneFrames {
                    line,
                    frame: rec.frame,
                    previous,
                });
            }
        }
        let finite = rec.t.is_finite()
            && rec.psi.iter().all(|v| v.is_finite())
            && rec.head_translation.iter().all(|v| v.is_finite());
        if !finite {
            return Err(FormatError::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        let norm = rec
            .head_rotation
            .iter()
            .map(|&c| f64::from(c) * f64::from(c))
            .sum::<f64>()
            .sqrt();
        if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
            return Err(FormatError::Parse {
                line,
                message: format!("head_rotation norm {norm} is not 1"),
            });
        }
        self.k = Some(rec.psi.len());
        self.last_frame = Some(rec.frame);
        Ok(Some(rec))
    }
}

/// Parses a whole stream. Blank lines are skipped; a final line without a
/// trailing newline is parsed like any other.
pub fn load_expression_stream(bytes: &[u8]) -> Result<ExpressionStream, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FormatError::Parse {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    let mut validator = Validator::default();
    let mut records = Vec::new();
    for line in text.lines() {
        if let Some(rec) = validator.accept(line)? {
            records.push(rec);
        }
    }
    Ok(ExpressionStream { records })
}

/// Follows a stream file that a producer may still be appending to. Each
/// [`StreamTail::poll`] returns the records completed since the last call;
/// a trailing partial line waits for its newline.
#[derive(Debug)]
pub struct StreamTail {
    path: PathBuf,
    offset: u64,
    pending: Vec<u8>,
    validator: Validator,
}

impl StreamTail {
    pub fn new(path: impl AsRef<Path>) -> Self {
        Self {
            path: path.as_ref().to_path_buf(),
            offset: 0,
            pending: Vec::new(),
            validator: Validator::default(),
        }
    }

    pub fn poll(&mut self) -> Result<Vec<ExpressionRecord>, FormatError> {
        let mut file = File::open(&self.path).map_err(|e| FormatError::io(&self.path, e))?;
        file.seek(SeekFrom::Start(self.offset))
            .map_err(|e| FormatError::io(&self.path, e))?;
        let mut fresh = Vec::new();
        file.read_to_end(&mut fresh)
            .map_err(|e| FormatError::io(&self.path, e))?;
        self.offset += fresh.len() as u64;
        self.pending.extend_from_slice(&fresh);

        let mut out = Vec::new();
        while let Some(pos) = self.pending.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.pending.drain(..=pos).collect();
            let text = std::str::from_utf8(&line[..line.len() - 1]).map_err(|_| FormatError::Parse {
                line: self.validator.line + 1,
                message: "invalid UTF-8".into(),
            })?;
            if let Some(rec) = self.validator.accept(text)? {
                out.push(rec);
            }
        }
        Ok(out)
    }
}
