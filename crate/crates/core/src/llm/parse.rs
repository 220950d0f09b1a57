//! Response parsing.
//!
//! Rules, applied in order:
//! 1. The first balanced `{...}` in the text is the answer object; code
//!    fences and prose around it are ignored. No such object is a
//!    [`ParseError::NoJson`].
//! 2. The object is read as JSON. If that fails (models often copy the
//!    template's missing/trailing commas), the `"Reasoning"` and `"MMI"`
//!    members are pulled out by pattern instead. Key names are matched
//!    case-insensitively.
//! 3. `Reasoning` must be a non-empty string and `MMI` must be present,
//!    else [`ParseError::Schema`].
//! 4. In the `MMI` value, the first token made only of the letters I, V and
//!    X (any case) is the numeral. `I` to `XII` gives the level, anything else
//!    (`XIII`, `IIII`) is a [`ParseError::Value`]. Ranges such as
//!    "IV to V" therefore resolve to their first numeral. A value with no
//!    numeral, including bare arabic digits, is also a value error.

use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use crate::mmi::MmiLevel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object in response")]
    NoJson,
    #[error("schema: {0}")]
    Schema(String),
    #[error("value: {0}")]
    Value(String),
}

/// Byte range of the first balanced `{...}`, respecting JSON string quoting.
fn first_object(raw: &str) -> Option<&str> {
    let bytes = raw.as_bytes();
    let mut search = 0;
    while let Some(off) = raw[search..].find('{') {
        let start = search + off;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&raw[start..=i]);
                    }
                }
                _ => {}
            }
        }
        search = start + 1;
    }
    None
}

enum Field {
    Text(String),
    Other(String),
}

fn fields_from_json(obj: &serde_json::Map<String, Value>) -> (Option<Field>, Option<Field>) {
    let get = |name: &str| {
        obj.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| match v {
            Value::String(s) => Field::Text(s.clone()),
            other => Field::Other(other.to_string()),
        })
    };
    (get("reasoning"), get("mmi"))
}

fn fields_by_pattern(obj: &str) -> (Option<Field>, Option<Field>) {
    let grab = |name: &str| {
        let re = Regex::new(&format!(r#"(?i)"{name}"\s*:\s*(?:"((?:[^"\\]|\\.)*)"|([^,}}\s][^,}}\n]*))"#)).expect("static regex");
        re.captures(obj).map(|c| match (c.get(1), c.get(2)) {
            (Some(s), _) => Field::Text(serde_json::from_str(&format!("\"{}\"", s.as_str())).unwrap_or_else(|_| s.as_str().to_string())),
            (_, Some(o)) => Field::Other(o.as_str().trim().to_string()),
            _ => Field::Other(String::new()),
        })
    };
    (grab("reasoning"), grab("mmi"))
}

fn roman_value(token: &str) -> Option<u8> {
    let digit = |c: char| match c.to_ascii_uppercase() {
        'I' => 1,
        'V' => 5,
        'X' => 10,
        _ => 0,
    };
    let values: Vec<i32> = token.chars().map(digit).collect();
    let mut total = 0i32;
    for (i, v) in values.iter().enumerate() {
        if values.get(i + 1).is_some_and(|next| next > v) {
            total -= v;
        } else {
            total += v;
        }
    }
    let total = u8::try_from(total).ok()?;
    // only canonical spellings count
    MmiLevel::new(total).filter(|l| l.roman().eq_ignore_ascii_case(token)).map(|l| l.value())
}

/// Reads an MMI level out of a short free-text value.
pub fn parse_mmi_value(text: &str) -> Result<MmiLevel, ParseError> {
    let token = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .find(|t| !t.is_empty() && t.chars().all(|c| matches!(c.to_ascii_uppercase(), 'I' | 'V' | 'X')));
    match token {
        Some(t) => roman_value(t)
            .and_then(MmiLevel::new)
            .ok_or_else(|| ParseError::Value(format!("{t:?} is not a numeral in I-XII"))),
        None if text.chars().any(|c| c.is_ascii_digit()) => {
            Err(ParseError::Value(format!("arabic value {text:?}; expected a Roman numeral")))
        }
        None => Err(ParseError::Value(format!("no Roman numeral in {text:?}"))),
    }
}

/// Extracts the level and reasoning from a raw model response.
pub fn parse_response(raw: &str) -> Result<(MmiLevel, String), ParseError> {
    let obj = first_object(raw).ok_or(ParseError::NoJson)?;
    let (reasoning, mmi) = match serde_json::from_str::<Value>(obj) {
        Ok(Value::Object(map)) => fields_from_json(&map),
        _ => fields_by_pattern(obj),
    };
    let reasoning = match reasoning {
        Some(Field::Text(s)) if !s.trim().is_empty() => s.trim().to_string(),
        Some(_) => return Err(ParseError::Schema("\"Reasoning\" is empty or not a string".into())),
        None => return Err(ParseError::Schema("missing \"Reasoning\"".into())),
    };
    let level = match mmi {
        Some(Field::Text(s)) | Some(Field::Other(s)) if s.trim().is_empty() => {
            return Err(ParseError::Schema("\"MMI\" is empty".into()))
        }
        Some(Field::Text(s)) | Some(Field::Other(s)) => parse_mmi_value(&s)?,
        None => return Err(ParseError::Schema("missing \"MMI\"".into())),
    };
    Ok((level, reasoning))
}

/// Canonical answer text for a level; `parse_response` inverts it.
pub fn serialize_response(level: MmiLevel, reasoning: &str) -> String {
    serde_json::json!({ "Reasoning": reasoning, "MMI": level.roman() }).to_string()
}
