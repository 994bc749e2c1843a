//! Wire protocol for live sessions.
//!
//! Clients send JSON text frames ([`ControlMessage`]); the server answers with
//! JSON text ([`ServerMessage`]) and pushes rendered images as binary frames
//! starting with an 18-byte little-endian [`FrameHeader`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_MAGIC: &[u8; 4] = b"HQFR";
pub const FRAME_HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Quilt,
    Native,
    Observer,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::Quilt => 0,
            Mode::Native => 1,
            Mode::Observer => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Mode::Quilt),
            1 => Some(Mode::Native),
            2 => Some(Mode::Observer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaybackAction {
    Play,
    Pause,
    Seek,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    SetExpression {
        psi: Vec<f32>,
    },
    SetPose {
        rotation: [f32; 4],
        translation: [f32; 3],
    },
    SetViewer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        angle_deg: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distance_m: Option<f64>,
    },
    SetMode {
        mode: Mode,
    },
    Playback {
        action: PlaybackAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<u64>,
    },
}

impl ControlMessage {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Sent once on connect so clients can build their controls.
    Hello {
        k: usize,
        names: Vec<String>,
        view_cone_deg: f64,
        total_views: usize,
        mode: Mode,
        stream_frames: Option<usize>,
    },
    Error {
        detail: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    RawRgba8,
    Png,
}

impl Encoding {
    pub fn code(self) -> u8 {
        match self {
            Encoding::RawRgba8 => 0,
            Encoding::Png => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Encoding::RawRgba8),
            1 => Some(Encoding::Png),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_id: u64,
    pub mode: Mode,
    pub width: u16,
    pub height: u16,
    pub encoding: Encoding,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame shorter than the {FRAME_HEADER_LEN}-byte header")]
    Short,
    #[error("bad frame magic")]
    BadMagic,
    #[error("unknown mode code {0}")]
    BadMode(u8),
    #[error("unknown encoding code {0}")]
    BadEncoding(u8),
    #[error("raw payload is {actual} bytes, expected {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("image of {0}x{1} does not fit the u16 header fields")]
    TooLarge(usize, usize),
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; FRAME_HEADER_LEN] {
        let mut out = [0u8; FRAME_HEADER_LEN];
        out[0..4].copy_from_slice(FRAME_MAGIC);
        out[4..12].copy_from_slice(&self.frame_id.to_le_bytes());
        out[12] = self.mode.code();
        out[13..15].copy_from_slice(&self.width.to_le_bytes());
        out[15..17].copy_from_slice(&self.height.to_le_bytes());
        out[17] = self.encoding.code();
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(FrameError::Short);
        }
        if &bytes[0..4] != FRAME_MAGIC {
            return Err(FrameError::BadMagic);
        }
        let mode = Mode::from_code(bytes[12]).ok_or(FrameError::BadMode(bytes[12]))?;
        let encoding = Encoding::from_code(bytes[17]).ok_or(FrameError::BadEncoding(bytes[17]))?;
        Ok(Self {
            frame_id: u64::from_le_bytes(bytes[4..12].try_into().unwrap()),
            mode,
            width: u16::from_le_bytes([bytes[13], bytes[14]]),
            height: u16::from_le_bytes([bytes[15], bytes[16]]),
            encoding,
        })
    }
}

/// A complete binary frame: header followed by payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMessage {
    pub header: FrameHeader,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    pub fn new(
        frame_id: u64,
        mode: Mode,
        width: usize,
        height: usize,
        encoding: Encoding,
        payload: Vec<u8>,
    ) -> Result<Self, FrameError> {
        let (w, h) = match (u16::try_from(width), u16::try_from(height)) {
            (Ok(w), Ok(h)) => (w, h),
            _ => return Err(FrameError::TooLarge(width, height)),
        };
        let msg = Self {
            header: FrameHeader {
                frame_id,
                mode,
                width: w,
                height: h,
                encoding,
            },
            payload,
        };
        msg.check_payload()?;
        Ok(msg)
    }

    fn check_payload(&self) -> Result<(), FrameError> {
        if self.header.encoding == Encoding::RawRgba8 {
            let expected = usize::from(self.header.width) * usize::from(self.header.height) * 4;
            if self.payload.len() != expected {
                return Err(FrameError::PayloadLength {
                    expected,
                    actual: self.payload.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.encode());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FrameError> {
        let header = FrameHeader::decode(bytes)?;
        let msg = Self {
            header,
            payload: bytes[FRAME_HEADER_LEN..].to_vec(),
        };
        msg.check_payload()?;
        Ok(msg)
    }
}
