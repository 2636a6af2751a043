//! Shared discrete vocabulary for text, rasters and control symbols, the
//! interleaved plan sequence built from it, and its binary file format.

pub mod raster;
pub mod sequence;
pub mod text;
pub mod vocab;
pub mod vstq;
pub mod window;

pub use raster::{detokenize_raster, tokenize_raster};
pub use sequence::{assemble, context_tokens, parse, stage_tokens, validate, ParsedSequence, TokenSequence};
pub use text::{detokenize_text, normalize, tokenize_text};
pub use vocab::VOCAB_SIZE;
pub use vstq::{decode_sequences, encode_sequences, read_sequences, write_sequences};
pub use window::{pack_episode, sample_window, Window};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("position {position} not an image token")]
    NotImage { position: usize },
    #[error("position {position} holds undeclared palette code {code}")]
    UndeclaredPalette { position: usize, code: u8 },
    #[error("a raster needs 256 tokens, got {0}")]
    RasterLength(usize),
    #[error("position {position} holds token {token}, which is not a text token")]
    NotText { position: usize, token: u32 },
    #[error("grammar violation at position {position}: {message}")]
    Grammar { position: usize, message: String },
    #[error("sequence needs {required} {what} but the budget is {available}")]
    Budget { what: &'static str, required: usize, available: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("bad magic: not a sequence file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("vocabulary layout mismatch")]
    LayoutMismatch,
    #[error("truncated file at byte offset {offset}: needed {needed} bytes, {available} left")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("unexpected trailing bytes after the last sequence at byte offset {offset}")]
    TrailingBytes { offset: usize },
    #[error("sequence at byte offset {offset} is invalid: {source}")]
    Corrupt { offset: usize, source: Box<CodecError> },
    #[error("io: {0}")]
    Io(String),
}
