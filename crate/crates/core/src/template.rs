//! `[PLACEHOLDER]` substitution shared by the prompt templates.

use std::collections::BTreeMap;

/// Replaces every `[NAME]` token (upper-case letters, digits, underscores).
/// A token without a value fails with its name.
pub fn render_template(template: &str, values: &BTreeMap<&str, String>) -> Result<String, String> {
    let mut out = String::with_capacity(template.len() + 512);
    let mut rest = template;
    while let Some(start) = rest.find('[') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after.find(']');
        let name = end.map(|e| &after[..e]);
        match name {
            Some(n) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_') => {
                let v = values.get(n).ok_or_else(|| n.to_string())?;
                out.push_str(v);
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
