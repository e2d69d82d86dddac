//! Word segmentation and fixed-width subword chunking.
//!
//! Words are maximal runs of alphanumeric characters, lowercased. Each word
//! is cut into consecutive chunks of at most `max_piece_len` characters; the
//! first chunk is bare and later chunks carry [`CONTINUATION`] so that the
//! word can be rebuilt from its pieces.

use serde::{Deserialize, Serialize};

/// Prefix marking a chunk that continues the previous one.
pub const CONTINUATION: &str = "##";

/// Default chunk width used by the CLI and the synthetic corpus.
pub const DEFAULT_MAX_PIECE_LEN: usize = 4;

/// One subword token and the index of the word it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subword {
    pub piece: String,
    pub word_index: usize,
}

impl Subword {
    /// The chunk text with any continuation marker removed.
    pub fn stripped(&self) -> &str {
        self.piece
            .strip_prefix(CONTINUATION)
            .unwrap_or(self.piece.as_str())
    }
}

/// Split `text` into lowercase words and their aligned subword chunks.
///
/// `max_piece_len` is clamped to at least one character.
pub fn tokenize(text: &str, max_piece_len: usize) -> (Vec<String>, Vec<Subword>) {
    let max_piece_len = max_piece_len.max(1);
    let mut words = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }

    let mut subwords = Vec::with_capacity(words.len());
    for (word_index, word) in words.iter().enumerate() {
        let chars: Vec<char> = word.chars().collect();
        for (chunk_index, chunk) in chars.chunks(max_piece_len).enumerate() {
            let mut piece = String::with_capacity(chunk.len() + CONTINUATION.len());
            if chunk_index > 0 {
                piece.push_str(CONTINUATION);
            }
            piece.extend(chunk);
            subwords.push(Subword { piece, word_index });
        }
    }
    (words, subwords)
}
