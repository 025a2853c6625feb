//! Small string normalizations shared across stages.

/// Merge key for attribute names: trimmed, trailing colons removed, inner
/// whitespace collapsed, lowercased.
pub fn normalize_attribute(name: &str) -> String {
    let trimmed = name.trim().trim_end_matches(':').trim();
    collapse_whitespace(trimmed).to_lowercase()
}

/// Lowercase with runs of whitespace collapsed to one space.
pub fn normalize_value(value: &str) -> String {
    collapse_whitespace(value).to_lowercase()
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identifier-safe form of an attribute for `get_<field>_field` names.
pub fn function_field(attribute: &str) -> String {
    let mut field: String = attribute
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if field.chars().next().is_none_or(|c| c.is_ascii_digit()) {
        field.insert(0, '_');
    }
    field
}

/// Case-insensitive, whitespace-insensitive containment.
pub fn mentions(haystack: &str, needle: &str) -> bool {
    let needle = normalize_value(needle);
    !needle.is_empty() && normalize_value(haystack).contains(&needle)
}
