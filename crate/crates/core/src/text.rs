//! Name normalization shared by graph deduplication, embedding and parsing.

/// Lowercase, trim and collapse runs of whitespace to a single space.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// [`normalize_name`] plus punctuation stripping. Punctuation becomes a
/// separator, so "heart-rate" and "heart rate" coincide.
pub fn normalize_text(s: &str) -> String {
    let spaced: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    normalize_name(&spaced)
}

/// Snake-case slug used for node identifiers.
pub fn slug(s: &str) -> String {
    normalize_text(s).replace(' ', "_")
}
