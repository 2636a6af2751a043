//! Token id layout shared by text, images and control symbols.

use std::sync::OnceLock;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::toyworld::render::PALETTE_SLOTS;

pub const BOS: u32 = 0;
pub const SEQ_END: u32 = 1;
pub const BOT: u32 = 2;
pub const EOT: u32 = 3;
pub const BOI_HEAD: u32 = 4;
pub const BOI_WRIST: u32 = 5;
pub const EOI: u32 = 6;
pub const STAGE_END: u32 = 7;
pub const PAD: u32 = 8;
pub const CONTROL_COUNT: u32 = 16;

pub const WORD_BASE: u32 = 16;
pub const WORD_COUNT: u32 = 2000;
pub const FALLBACK_BASE: u32 = WORD_BASE + WORD_COUNT;
pub const FALLBACK_COUNT: u32 = 48;
pub const IMAGE_BASE: u32 = FALLBACK_BASE + FALLBACK_COUNT;
pub const IMAGE_COUNT: u32 = PALETTE_SLOTS as u32;
pub const VOCAB_SIZE: u32 = IMAGE_BASE + IMAGE_COUNT;

/// Fallback symbols: `a`..`z`, `0`..`9`, then a separator that splits two
/// consecutive spelled-out words. Slots after the separator are reserved.
pub const FALLBACK_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";
pub const FALLBACK_SEPARATOR: u32 = FALLBACK_BASE + FALLBACK_ALPHABET.len() as u32;

pub const CONTROL_NAMES: [(&str, u32); 9] = [
    ("BOS", BOS),
    ("SEQ_END", SEQ_END),
    ("BOT", BOT),
    ("EOT", EOT),
    ("BOI_HEAD", BOI_HEAD),
    ("BOI_WRIST", BOI_WRIST),
    ("EOI", EOI),
    ("STAGE_END", STAGE_END),
    ("PAD", PAD),
];

/// Word vocabulary; ids are assigned in this order from `WORD_BASE`. The
/// remaining word slots are reserved and never emitted.
pub const WORDS: &[&str] = &[
    "the", "a", "an", "to", "on", "onto", "in", "into", "of", "and", "with", "at", "from", "toward",
    "up", "down", "over", "under", "near", "next", "left", "right", "front", "back", "top", "bottom",
    "approach", "pick", "place", "put", "move", "adjust", "lift", "lower", "grasp", "release", "open",
    "close", "push", "pull", "rotate", "turn", "hold", "drop", "reach", "retreat", "stack", "slide",
    "gripper", "plate", "table", "object", "tablecloth", "bowl", "basket", "tray", "drawer", "shelf",
    "apple", "banana", "cup", "egg", "orange", "bottle", "bread", "box", "carton", "lemon", "grape",
    "can", "sponge", "pear", "mug", "peach", "fruit", "container", "red", "green", "blue", "yellow",
    "white", "black", "small", "large", "other", "then", "again", "it", "this", "that", "is", "by",
    "first", "second", "third", "last", "task", "done", "finish", "stop", "wait", "step",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Control,
    Word,
    Fallback,
    Image,
}

pub fn classify(token: u32) -> Option<TokenClass> {
    match token {
        t if t < CONTROL_COUNT => Some(TokenClass::Control),
        t if t < FALLBACK_BASE => Some(TokenClass::Word),
        t if t < IMAGE_BASE => Some(TokenClass::Fallback),
        t if t < VOCAB_SIZE => Some(TokenClass::Image),
        _ => None,
    }
}

pub fn is_image(token: u32) -> bool {
    classify(token) == Some(TokenClass::Image)
}

/// True for word or fallback tokens that carry meaning in text spans.
pub fn is_text(token: u32) -> bool {
    (WORD_BASE..WORD_BASE + WORDS.len() as u32).contains(&token)
        || (FALLBACK_BASE..=FALLBACK_SEPARATOR).contains(&token)
}

pub fn word_token(word: &str) -> Option<u32> {
    static INDEX: OnceLock<std::collections::HashMap<&'static str, u32>> = OnceLock::new();
    INDEX
        .get_or_init(|| WORDS.iter().enumerate().map(|(i, w)| (*w, WORD_BASE + i as u32)).collect())
        .get(word)
        .copied()
}

#[derive(Serialize)]
struct Range {
    name: &'static str,
    start: u32,
    end: u32,
}

#[derive(Serialize)]
struct LayoutTable {
    vocab_size: u32,
    ranges: Vec<Range>,
    control: Vec<(&'static str, u32)>,
    words: &'static [&'static str],
    fallback_alphabet: &'static str,
    fallback_separator: u32,
}

fn layout_table() -> LayoutTable {
    LayoutTable {
        vocab_size: VOCAB_SIZE,
        ranges: vec![
            Range { name: "control", start: 0, end: CONTROL_COUNT },
            Range { name: "word", start: WORD_BASE, end: FALLBACK_BASE },
            Range { name: "fallback", start: FALLBACK_BASE, end: IMAGE_BASE },
            Range { name: "image", start: IMAGE_BASE, end: VOCAB_SIZE },
        ],
        control: CONTROL_NAMES.to_vec(),
        words: WORDS,
        fallback_alphabet: FALLBACK_ALPHABET,
        fallback_separator: FALLBACK_SEPARATOR,
    }
}

/// The layout as canonical JSON, for cross-implementation checks.
pub fn layout_json() -> String {
    serde_json::to_string_pretty(&layout_table()).expect("layout serializes")
}

/// First eight bytes of SHA-256 over the compact canonical layout JSON.
pub fn layout_digest() -> [u8; 8] {
    static DIGEST: OnceLock<[u8; 8]> = OnceLock::new();
    *DIGEST.get_or_init(|| {
        let json = serde_json::to_string(&layout_table()).expect("layout serializes");
        let hash = Sha256::digest(json.as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&hash[..8]);
        out
    })
}
