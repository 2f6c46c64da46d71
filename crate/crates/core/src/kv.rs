//! Flat `key = value` text documents with `#` comments.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: key {key:?} appears twice")]
    Duplicate { line: usize, key: String },
}

/// One parsed entry, remembering its 1-based line for diagnostics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<KvEntry>, KvError> {
    let mut entries = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(KvError::Malformed {
                line,
                text: raw.to_string(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError::Malformed {
                line,
                text: raw.to_string(),
            });
        }
        if seen.insert(key.to_string(), line).is_some() {
            return Err(KvError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        entries.push(KvEntry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_blank_lines() {
        let entries = parse("# header\n\nK = 5 # trailing\n  T_M=0.8\n").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].key, "K");
        assert_eq!(entries[0].value, "5");
        assert_eq!(entries[1].line, 4);
    }

    #[test]
    fn rejects_missing_equals_and_duplicates() {
        assert!(matches!(parse("K 5"), Err(KvError::Malformed { line: 1, .. })));
        assert!(matches!(
            parse("K = 5\nK = 6"),
            Err(KvError::Duplicate { line: 2, .. })
        ));
    }
}
