//! Client/server message layer: bit-exact framing plus a TCP channel.

mod frame;
mod tcp;

pub use frame::{decode, encode, FrameError, FrameErrorKind, MatrixPayload, Tag, WireMessage, HEADER_LEN, MAGIC, MAX_BODY, VERSION};
pub use tcp::{accept_hello, connect, Connection, Server, HANDSHAKE_TIMEOUT};
