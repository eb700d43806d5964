//! Binary framing.
//!
//! ```text
//! offset 0  magic   "GPSL"
//!        4  version u8 (1)
//!        5  tag     u8
//!        6  length  u32 LE
//!       10  body    `length` bytes
//! ```
//!
//! Matrix bodies (activations, activation gradients, evaluation results) are
//! `round u32, client_id u16, rows u32, cols u32` followed by `rows·cols`
//! little-endian `f32` values. Activations may carry a trailing label block,
//! `count u32` then `count` `u32` labels, with `count == rows`.

use thiserror::Error;

use crate::error::Result as CrateResult;
use crate::nn::Matrix;

pub const MAGIC: [u8; 4] = *b"GPSL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const MAX_BODY: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    Hello = 1,
    Config = 2,
    Activations = 3,
    ActGrads = 4,
    EvalRequest = 5,
    EvalResult = 6,
    Metrics = 7,
    Bye = 8,
}

impl Tag {
    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Tag::Hello,
            2 => Tag::Config,
            3 => Tag::Activations,
            4 => Tag::ActGrads,
            5 => Tag::EvalRequest,
            6 => Tag::EvalResult,
            7 => Tag::Metrics,
            8 => Tag::Bye,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPayload {
    pub round: u32,
    pub client_id: u16,
    pub rows: u32,
    pub cols: u32,
    pub values: Vec<f32>,
}

impl MatrixPayload {
    pub fn from_matrix(round: u32, client_id: u16, m: &Matrix<f32>) -> Self {
        Self { round, client_id, rows: m.rows() as u32, cols: m.cols() as u32, values: m.as_slice().to_vec() }
    }

    pub fn into_matrix(self) -> CrateResult<Matrix<f32>> {
        Matrix::from_vec(self.rows as usize, self.cols as usize, self.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Hello { client_id: u16 },
    /// Experiment configuration as `key = value` text.
    Config { text: String },
    Activations { payload: MatrixPayload, labels: Option<Vec<u32>> },
    ActGrads(MatrixPayload),
    EvalRequest { round: u32, client_id: u16 },
    EvalResult(MatrixPayload),
    Metrics { round: u32, client_id: u16, text: String },
    Bye,
}

impl WireMessage {
    pub fn tag(&self) -> Tag {
        match self {
            WireMessage::Hello { .. } => Tag::Hello,
            WireMessage::Config { .. } => Tag::Config,
            WireMessage::Activations { .. } => Tag::Activations,
            WireMessage::ActGrads(_) => Tag::ActGrads,
            WireMessage::EvalRequest { .. } => Tag::EvalRequest,
            WireMessage::EvalResult(_) => Tag::EvalResult,
            WireMessage::Metrics { .. } => Tag::Metrics,
            WireMessage::Bye => Tag::Bye,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameErrorKind {
    BadMagic,
    BadVersion(u8),
    UnknownTag(u8),
    TooLarge(usize),
    Truncated,
    TrailingBytes,
    NonFinite,
    BadUtf8,
    ShapeMismatch,
}

impl std::fmt::Display for FrameErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrameErrorKind::BadMagic => write!(f, "bad magic, expected \"GPSL\""),
            FrameErrorKind::BadVersion(v) => write!(f, "unsupported version {v}"),
            FrameErrorKind::UnknownTag(t) => write!(f, "unknown tag {t}"),
            FrameErrorKind::TooLarge(n) => write!(f, "body of {n} bytes exceeds the {MAX_BODY} byte cap"),
            FrameErrorKind::Truncated => write!(f, "body shorter than its layout"),
            FrameErrorKind::TrailingBytes => write!(f, "unexpected bytes after body layout"),
            FrameErrorKind::NonFinite => write!(f, "non-finite float"),
            FrameErrorKind::BadUtf8 => write!(f, "text is not UTF-8"),
            FrameErrorKind::ShapeMismatch => write!(f, "declared shape does not match payload"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("frame error at byte {offset}: {kind}")]
pub struct FrameError {
    pub offset: usize,
    pub kind: FrameErrorKind,
}

fn err(offset: usize, kind: FrameErrorKind) -> FrameError {
    FrameError { offset, kind }
}

fn put_matrix(body: &mut Vec<u8>, p: &MatrixPayload) -> Result<(), FrameError> {
    if p.values.len() as u64 != p.rows as u64 * p.cols as u64 {
        return Err(err(0, FrameErrorKind::ShapeMismatch));
    }
    if let Some(i) = p.values.iter().position(|v| !v.is_finite()) {
        return Err(err(HEADER_LEN + 14 + 4 * i, FrameErrorKind::NonFinite));
    }
    body.extend_from_slice(&p.round.to_le_bytes());
    body.extend_from_slice(&p.client_id.to_le_bytes());
    body.extend_from_slice(&p.rows.to_le_bytes());
    body.extend_from_slice(&p.cols.to_le_bytes());
    for v in &p.values {
        body.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode(message: &WireMessage) -> Result<Vec<u8>, FrameError> {
    let mut body = Vec::new();
    match message {
        WireMessage::Hello { client_id } => body.extend_from_slice(&client_id.to_le_bytes()),
        WireMessage::Config { text } => body.extend_from_slice(text.as_bytes()),
        WireMessage::Activations { payload, labels } => {
            put_matrix(&mut body, payload)?;
            if let Some(labels) = labels {
                if labels.len() != payload.rows as usize {
                    return Err(err(0, FrameErrorKind::ShapeMismatch));
                }
                body.extend_from_slice(&(labels.len() as u32).to_le_bytes());
                for l in labels {
                    body.extend_from_slice(&l.to_le_bytes());
                }
            }
        }
        WireMessage::ActGrads(p) | WireMessage::EvalResult(p) => put_matrix(&mut body, p)?,
        WireMessage::EvalRequest { round, client_id } => {
            body.extend_from_slice(&round.to_le_bytes());
            body.extend_from_slice(&client_id.to_le_bytes());
        }
        WireMessage::Metrics { round, client_id, text } => {
            body.extend_from_slice(&round.to_le_bytes());
            body.extend_from_slice(&client_id.to_le_bytes());
            body.extend_from_slice(text.as_bytes());
        }
        WireMessage::Bye => {}
    }
    if body.len() > MAX_BODY {
        return Err(err(6, FrameErrorKind::TooLarge(body.len())));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(message.tag() as u8);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Bounded reader over a frame body; offsets are reported from frame start.
struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Body<'a> {
    fn offset(&self) -> usize {
        HEADER_LEN + self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.bytes.len() - self.pos < n {
            return Err(err(self.offset(), FrameErrorKind::Truncated));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }

    fn text(&mut self) -> Result<String, FrameError> {
        let at = self.offset();
        String::from_utf8(self.rest().to_vec()).map_err(|_| err(at, FrameErrorKind::BadUtf8))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn finish(&self) -> Result<(), FrameError> {
        if self.remaining() > 0 {
            Err(err(self.offset(), FrameErrorKind::TrailingBytes))
        } else {
            Ok(())
        }
    }

    fn matrix(&mut self) -> Result<MatrixPayload, FrameError> {
        let round = self.u32()?;
        let client_id = self.u16()?;
        let rows = self.u32()?;
        let cols = self.u32()?;
        let n = rows as usize * cols as usize;
        if n.checked_mul(4).is_none_or(|b| b > self.remaining()) {
            return Err(err(self.offset(), FrameErrorKind::Truncated));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let at = self.offset();
            let v = f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(err(at, FrameErrorKind::NonFinite));
            }
            values.push(v);
        }
        Ok(MatrixPayload { round, client_id, rows, cols, values })
    }
}

/// Parses one frame from the front of `bytes`.
///
/// Returns `Ok(None)` when more bytes are needed, otherwise the message and
/// the number of bytes it occupied. Never reads past the declared length.
pub fn decode(bytes: &[u8]) -> Result<Option<(WireMessage, usize)>, FrameError> {
    let head = &bytes[..bytes.len().min(4)];
    if head != &MAGIC[..head.len()] {
        return Err(err(0, FrameErrorKind::BadMagic));
    }
    if let Some(&v) = bytes.get(4) {
        if v != VERSION {
            return Err(err(4, FrameErrorKind::BadVersion(v)));
        }
    }
    let tag = match bytes.get(5) {
        Some(&t) => Tag::from_u8(t).ok_or(err(5, FrameErrorKind::UnknownTag(t)))?,
        None => return Ok(None),
    };
    if bytes.len() < HEADER_LEN {
        return Ok(None);
    }
    let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    if len > MAX_BODY {
        return Err(err(6, FrameErrorKind::TooLarge(len)));
    }
    if bytes.len() < HEADER_LEN + len {
        return Ok(None);
    }
    let mut body = Body { bytes: &bytes[HEADER_LEN..HEADER_LEN + len], pos: 0 };
    let message = match tag {
        Tag::Hello => WireMessage::Hello { client_id: body.u16()? },
        Tag::Config => WireMessage::Config { text: body.text()? },
        Tag::Activations => {
            let payload = body.matrix()?;
            let labels = if body.remaining() > 0 {
                let at = body.offset();
                let count = body.u32()?;
                if count != payload.rows {
                    return Err(err(at, FrameErrorKind::ShapeMismatch));
                }
                Some((0..count).map(|_| body.u32()).collect::<Result<Vec<_>, _>>()?)
            } else {
                None
            };
            WireMessage::Activations { payload, labels }
        }
        Tag::ActGrads => WireMessage::ActGrads(body.matrix()?),
        Tag::EvalRequest => WireMessage::EvalRequest { round: body.u32()?, client_id: body.u16()? },
        Tag::EvalResult => WireMessage::EvalResult(body.matrix()?),
        Tag::Metrics => WireMessage::Metrics { round: body.u32()?, client_id: body.u16()?, text: body.text()? },
        Tag::Bye => WireMessage::Bye,
    };
    body.finish()?;
    Ok(Some((message, HEADER_LEN + len)))
}
