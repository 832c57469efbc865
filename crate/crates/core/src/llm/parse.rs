//! Lenient extraction of numeric forecasts from free-text replies.
//!
//! Tokenizer rule, applied in order before numbers are collected:
//! 1. a leading list marker on a line (`1.`, `2)`, `(3)`, `-`, `*`) is dropped;
//! 2. ISO dates (`2023-10-01`, `2023-10`) and slash dates (`10/01`, `10/1/2023`) are dropped;
//! 3. ordinals (`1st`, `15th`) are dropped;
//! 4. a month name with its following day or year (`October 1`, `Oct. 2023`) is dropped;
//! 5. a step label with its number (`Day 3`, `Month 12`, `Week 2`, `Step 4`) is dropped.
//!
//! Remaining tokens match `-?(\d+(\.\d+)?|\.\d+)`. A token directly after a letter
//! or underscore (`v1`, `H2O`) is skipped, as is any bare four-digit integer in
//! 1800..=2199 (a year). A `-` right after a digit is a range dash, not a sign.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedForecast {
    pub values: Vec<f64>,
    pub raw_reply: String,
    pub attempts: u32,
}

static LIST_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:[-*\u{2022}]|\(?\d{1,3}[.)])[ \t]+").unwrap());
static ISO_DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d{4}-\d{1,2}(?:-\d{1,2})?\b").unwrap());
static SLASH_DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d{1,2}/\d{1,2}(?:/\d{2,4})?\b").unwrap());
static ORDINAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b\d+(?:st|nd|rd|th)\b").unwrap());
static MONTH_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|nov|dec)\.?\s+\d{1,4}(?:,\s*\d{4})?\b",
    )
    .unwrap()
});
static STEP_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:day|month|week|step)\s*#?\s*\d+").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?(?:\d+(?:\.\d+)?|\.\d+)").unwrap());

fn blank(re: &Regex, text: &str) -> String {
    re.replace_all(text, |c: &regex::Captures| " ".repeat(c[0].chars().count()))
        .into_owned()
}

/// Every numeric token that survives the tokenizer rule, in reading order.
pub fn extract_numbers(reply: &str) -> Vec<f64> {
    let mut text = reply.to_string();
    for re in [
        &*LIST_MARKER,
        &*ISO_DATE,
        &*SLASH_DATE,
        &*ORDINAL,
        &*MONTH_DATE,
        &*STEP_LABEL,
    ] {
        text = blank(re, &text);
    }
    let mut out = Vec::new();
    for m in NUMBER.find_iter(&text) {
        let mut token = m.as_str();
        let before = text[..m.start()].chars().next_back();
        if let Some(c) = before {
            if c.is_alphabetic() || c == '_' {
                continue;
            }
        }
        if token.starts_with('-') && before.is_some_and(|c| c.is_ascii_digit()) {
            token = &token[1..];
        }
        let digits = token.trim_start_matches('-');
        if digits.len() == 4 && !digits.contains('.') {
            if let Ok(y) = digits.parse::<u32>() {
                if (1800..=2199).contains(&y) {
                    continue;
                }
            }
        }
        if let Ok(v) = token.parse::<f64>() {
            out.push(v);
        }
    }
    out
}

/// Accepts the reply iff exactly `expected` numbers remain and none is negative.
pub fn parse_forecast(reply: &str, expected: usize) -> Result<ParsedForecast, LlmError> {
    let values = extract_numbers(reply);
    if values.len() != expected {
        return Err(LlmError::CountMismatch {
            found: values.len(),
            expected,
        });
    }
    if let Some(&v) = values.iter().find(|v| **v < 0.0) {
        return Err(LlmError::NegativeValue(v));
    }
    Ok(ParsedForecast {
        values: values.into_iter().map(|v| v + 0.0).collect(),
        raw_reply: reply.to_string(),
        attempts: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn comma_list() {
        let reply = "0.0, 0.1, 0.0, 2.3, 5, 0, 0, 0.4, 1.25, 0, 0, 0, 3.3, 0.2, 0.0";
        let p = parse_forecast(reply, 15).unwrap();
        assert_eq!(p.values[3], 2.3);
        assert_eq!(p.values[8], 1.25);
    }

    #[test]
    fn markdown_list_indices_are_dropped() {
        let reply: String = (1..=15).map(|i| format!("{i}. 0.{i}\n")).collect();
        let p = parse_forecast(&reply, 15).unwrap();
        assert_eq!(p.values[0], 0.1);
        assert_eq!(p.values[14], 0.15);
    }

    #[test]
    fn date_labels_and_units() {
        let reply = "Forecast for Atlanta, GA (2023-10-01 to 2023-10-15):\n\
            October 1, 2023: 1.2 mm\nOct 2: 0 mm\n10/03: 3.5mm\nDay 4: 0.7 mm\n5th: 0.0\n";
        assert_eq!(extract_numbers(reply), vec![1.2, 0.0, 3.5, 0.7, 0.0]);
    }

    #[test]
    fn years_and_placeholders() {
        assert_eq!(
            extract_numbers("In 2024 expect v1 = 12.5 and 2024.5"),
            vec![12.5, 2024.5]
        );
        assert_eq!(extract_numbers("between 1-3 mm"), vec![1.0, 3.0]);
    }

    #[test]
    fn wrong_count_and_negatives() {
        let fourteen = vec!["0.5"; 14].join(", ");
        assert_eq!(
            parse_forecast(&fourteen, 15),
            Err(LlmError::CountMismatch {
                found: 14,
                expected: 15
            })
        );
        assert_eq!(parse_forecast("1, -2, 3", 3), Err(LlmError::NegativeValue(-2.0)));
        assert_eq!(
            parse_forecast("-0.0, 1, 2", 3).unwrap().values[0].to_bits(),
            0f64.to_bits()
        );
    }

    proptest! {
        #[test]
        fn shortest_format_round_trips(values in prop::collection::vec(0.0f64..500.0, 12..=15)) {
            let reply = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            let p = parse_forecast(&reply, values.len()).unwrap();
            prop_assert_eq!(p.values, values);
        }
    }
}
