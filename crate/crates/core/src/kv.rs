//! `key=value` text files with `#` comments.

use crate::error::{Error, Result};

/// `(key, value, 1-based line)` for every non-blank, non-comment line.
pub(crate) fn pairs(text: &str) -> Result<Vec<(&str, &str, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: format!("expected key=value, got {line:?}"),
        })?;
        out.push((k.trim(), v.trim(), i + 1));
    }
    Ok(out)
}

/// Render `key=value` lines.
pub fn render<K: AsRef<str>, V: std::fmt::Display>(pairs: &[(K, V)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k.as_ref());
        s.push('=');
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}
