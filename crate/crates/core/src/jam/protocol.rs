use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::SequenceKind;

/// Largest accepted frame body.
pub const MAX_FRAME_BYTES: usize = 16 << 20;

/// One message on the wire. Bodies are JSON objects tagged by `type`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum JamMessage {
    Hello {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        seq: u64,
        timestamp_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
    },
    HelloAck {
        session: String,
        seq: u64,
        timestamp_ms: u64,
        kind: SequenceKind,
        n_s: usize,
        n_d: usize,
        n_z: usize,
        std: f64,
    },
    Bars {
        session: String,
        seq: u64,
        timestamp_ms: u64,
        /// `N_s` frames of `N_d` values.
        bars: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
    },
    Response {
        session: String,
        seq: u64,
        timestamp_ms: u64,
        bars: Vec<Vec<f64>>,
        latent: Vec<f64>,
        latent3d: [f64; 3],
        human_latent: Vec<f64>,
        human_latent3d: [f64; 3],
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        message: String,
    },
}

impl JamMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            JamMessage::Hello { .. } => "hello",
            JamMessage::HelloAck { .. } => "hello-ack",
            JamMessage::Bars { .. } => "bars",
            JamMessage::Response { .. } => "response",
            JamMessage::Error { .. } => "error",
        }
    }

    pub fn error(session: Option<String>, seq: Option<u64>, message: impl Into<String>) -> Self {
        JamMessage::Error {
            session,
            seq,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    pub fn from_json(body: &str) -> Result<Self> {
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("bad message: {e}")))
    }

    /// Length-prefixed frame: 4-byte big-endian body size, then the JSON body.
    pub fn encode_frame(&self) -> Vec<u8> {
        let body = self.to_json().into_bytes();
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }
}

pub fn write_frame(w: &mut impl Write, msg: &JamMessage) -> Result<()> {
    w.write_all(&msg.encode_frame())?;
    w.flush()?;
    Ok(())
}

/// Read one frame body. `Ok(None)` on a clean end of stream.
pub fn read_frame_body(r: &mut impl Read) -> Result<Option<String>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!(
            "frame of {n} bytes exceeds the {MAX_FRAME_BYTES} byte limit"
        )));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    String::from_utf8(body)
        .map(Some)
        .map_err(|_| Error::Protocol("frame body is not UTF-8".into()))
}

pub fn read_frame(r: &mut impl Read) -> Result<Option<JamMessage>> {
    read_frame_body(r)?
        .map(|b| JamMessage::from_json(&b))
        .transpose()
}
