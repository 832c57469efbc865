//! Prompt templates for the five experiment kinds.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::calendar::Frequency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    #[serde(rename = "exp1")]
    Exp1,
    #[serde(rename = "exp2")]
    Exp2,
    #[serde(rename = "exp3")]
    Exp3,
    #[serde(rename = "exp4")]
    Exp4,
    #[serde(rename = "exp5")]
    Exp5Std,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::Exp1,
        PromptKind::Exp2,
        PromptKind::Exp3,
        PromptKind::Exp4,
        PromptKind::Exp5Std,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PromptKind::Exp1 => "exp1",
            PromptKind::Exp2 => "exp2",
            PromptKind::Exp3 => "exp3",
            PromptKind::Exp4 => "exp4",
            PromptKind::Exp5Std => "exp5",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Numeric vectors substituted into the template, one per named block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub rainfall: Option<Vec<f64>>,
    pub tmin: Option<Vec<f64>>,
    pub tmax: Option<Vec<f64>>,
    pub nino34: Option<Vec<f64>>,
    pub pdo: Option<Vec<f64>>,
    pub nao: Option<Vec<f64>>,
    pub std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub city: String,
    pub frequency: Frequency,
    pub period: Vec<NaiveDate>,
    pub payload: Payload,
}

const PREAMBLE: &str = "You are a climate data prediction system focused primarily on forecasting rainfall for selected cities. Your timestamp is September 30, 2023, meaning you only consider information available prior to this date.";
const NUMBERS_ONLY: &str =
    "For the time being, please ignore narrative responses; I am only interested in numerical results.";
const CLOSING: &str = "Please use the supplied data to predict the rainfall for the above period.";
const RULE: &str = "\u{2014}";

/// Payload number format: rounded to 4 significant digits, then the shortest
/// decimal that reads back to the rounded value.
pub fn format_value(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.3e}").parse().expect("scientific format parses");
    rounded.to_string()
}

pub fn format_values(xs: &[f64]) -> String {
    xs.iter().map(|&x| format_value(x)).collect::<Vec<_>>().join(",")
}

/// "October 1, 2023, to October 15, 2023" (daily) or "October 2023 to
/// September 2024" (monthly). The Exp5 daily form has no comma after the first date.
pub fn period_text(kind: PromptKind, frequency: Frequency, first: NaiveDate, last: NaiveDate) -> String {
    match frequency {
        Frequency::Daily => {
            let sep = if kind == PromptKind::Exp5Std { " to " } else { ", to " };
            format!("{}{sep}{}", first.format("%B %-d, %Y"), last.format("%B %-d, %Y"))
        }
        Frequency::Monthly => format!("{} to {}", first.format("%B %Y"), last.format("%B %Y")),
    }
}

fn granularity(frequency: Frequency) -> &'static str {
    match frequency {
        Frequency::Daily => "daily",
        Frequency::Monthly => "monthly",
    }
}

fn require<'a>(spec: &'a PromptSpec, name: &str, v: &'a Option<Vec<f64>>) -> Result<&'a [f64], LlmError> {
    let v = v
        .as_deref()
        .ok_or_else(|| LlmError::MissingPayload(format!("{} requires {name}", spec.kind)))?;
    if v.len() != spec.period.len() {
        return Err(LlmError::MissingPayload(format!(
            "{name} has {} values for a {}-step period",
            v.len(),
            spec.period.len()
        )));
    }
    Ok(v)
}

pub fn render_prompt(spec: &PromptSpec) -> Result<String, LlmError> {
    let (first, last) = match (spec.period.first(), spec.period.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(LlmError::MissingPayload("empty period".into())),
    };
    let period = period_text(spec.kind, spec.frequency, first, last);
    let gran = granularity(spec.frequency);
    let city = &spec.city;
    let p = &spec.payload;

    let text = match spec.kind {
        PromptKind::Exp1 => format!(
            "{PREAMBLE} Please make a final forecast based on your knowledge, including historical trends, regional variations, and potential future scenarios. {NUMBERS_ONLY} Please predict for {city} during {period}.\n\n{RULE}\n{CLOSING}\n"
        ),
        PromptKind::Exp2 => {
            let rain = format_values(require(spec, "rainfall", &p.rainfall)?);
            format!(
                "{PREAMBLE} I will provide you with a potential {gran} prediction for the period {period} based on a deep learning model for the {city}. Please consider the results of the model and combine them with your knowledge to make a final forecast. {NUMBERS_ONLY}\n\n{RULE} potential forecast {RULE}\n\nPeriod: {period}\n\nRainfall:\n\n{rain}\n\n{RULE}\n{CLOSING}\n"
            )
        }
        PromptKind::Exp3 => {
            let tmin = format_values(require(spec, "tmin", &p.tmin)?);
            let tmax = format_values(require(spec, "tmax", &p.tmax)?);
            format!(
                "{PREAMBLE} I will provide you with a potential {gran} prediction for the period {period} based on a deep learning model for the {city}. These predictions include {gran} maximum and minimum temperatures. Please consider the relationship between these climate data and potential rainfall. Integrate this information with your knowledge to make a final prediction. {NUMBERS_ONLY}\n\n{RULE} potential forecast {RULE}\n\nPeriod: {period}\n\nTmin: {tmin}\n\nTmax:\n\n{tmax}\n\n{RULE}\n{CLOSING}\n"
            )
        }
        PromptKind::Exp4 => {
            let nino = format_values(require(spec, "nino34", &p.nino34)?);
            let pdo = format_values(require(spec, "pdo", &p.pdo)?);
            let nao = format_values(require(spec, "nao", &p.nao)?);
            format!(
                "{PREAMBLE} I will provide you with the Nino3.4, Pacific Decadal Oscillation (PDO), and North Atlantic Oscillation (NAO) indices for the prediction period {period}. Please integrate this information, consider their climate teleconnection relationship with potential regional rainfall, and combine it with your own knowledge to make a final prediction. {NUMBERS_ONLY}\n\n{RULE} potential forecast {RULE}\n\nPeriod: {period}\n\nNino3.4:\n\n{nino}\n\nPDO: {pdo}\n\nNAO: {nao}\n\n{RULE}\n{CLOSING}\n"
            )
        }
        PromptKind::Exp5Std => {
            let rain = format_values(require(spec, "rainfall", &p.rainfall)?);
            let std = format_values(require(spec, "std", &p.std)?);
            format!(
                "{PREAMBLE} I will provide you with a potential {gran} prediction for the period {period} based on a deep learning model for the {city}. The standard deviation here can be used as a measure of uncertainty. A smaller standard deviation indicates higher predictability, suggesting that my model\u{2019}s result has lower uncertainty. Conversely, a larger standard deviation indicates greater difficulty in prediction, meaning higher uncertainty in my model\u{2019}s results. Please focus on this measure of uncertainty, and combine it with your knowledge, such as historical trends, to make the final prediction. Please consider the results of the model and combine them with your knowledge to make a final forecast. {NUMBERS_ONLY}\n\n{RULE} potential forecast{RULE}\n\nPeriod: {period}\n\nRainfall:\n\n{rain}\n\nStandard Deviation:\n\n{std}\n\n{RULE}\n\n{CLOSING}\n"
            )
        }
    };
    Ok(text)
}

/// Appended to the original prompt when a reply had the wrong number of values.
pub fn corrective_suffix(expected: usize, found: usize) -> String {
    format!(
        "\nYour previous reply contained {found} numbers. Reply with exactly {expected} comma-separated rainfall values in mm, one per period step, and nothing else.\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn october() -> Vec<NaiveDate> {
        (1..=15)
            .map(|d| NaiveDate::from_ymd_opt(2023, 10, d).unwrap())
            .collect()
    }

    fn spec(kind: PromptKind, payload: Payload) -> PromptSpec {
        PromptSpec {
            kind,
            city: "Atlanta, GA".into(),
            frequency: Frequency::Daily,
            period: october(),
            payload,
        }
    }

    #[test]
    fn exp1_sentences() {
        let text = render_prompt(&spec(PromptKind::Exp1, Payload::default())).unwrap();
        assert!(text.starts_with("You are a climate data prediction system"));
        assert!(text.contains("Your timestamp is September 30, 2023"));
        assert!(text.contains("Please predict for Atlanta, GA during October 1, 2023, to October 15, 2023."));
    }

    #[test]
    fn exp2_rainfall_block() {
        let rain: Vec<f64> = (0..15).map(|i| i as f64 * 0.1).collect();
        let text = render_prompt(&spec(
            PromptKind::Exp2,
            Payload {
                rainfall: Some(rain),
                ..Default::default()
            },
        ))
        .unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let at = lines.iter().position(|l| *l == "Rainfall:").unwrap();
        assert_eq!(lines[at + 2].split(',').count(), 15);
        assert!(lines[at + 2].starts_with("0,0.1,0.2,0.3"));
    }

    #[test]
    fn exp5_block_order_and_period() {
        let text = render_prompt(&spec(
            PromptKind::Exp5Std,
            Payload {
                rainfall: Some(vec![1.0; 15]),
                std: Some(vec![2.5; 15]),
                ..Default::default()
            },
        ))
        .unwrap();
        assert!(text.contains("The standard deviation here can be used as a measure of uncertainty"));
        assert!(text.contains("Period: October 1, 2023 to October 15, 2023\n"));
        assert!(text.find("Rainfall:").unwrap() < text.find("Standard Deviation:").unwrap());
    }

    #[test]
    fn missing_and_short_payloads() {
        assert!(matches!(
            render_prompt(&spec(PromptKind::Exp3, Payload::default())),
            Err(LlmError::MissingPayload(_))
        ));
        let short = Payload {
            rainfall: Some(vec![1.0; 14]),
            ..Default::default()
        };
        assert!(matches!(
            render_prompt(&spec(PromptKind::Exp2, short)),
            Err(LlmError::MissingPayload(_))
        ));
    }

    #[test]
    fn monthly_period() {
        let start = NaiveDate::from_ymd_opt(2023, 10, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2024, 9, 1).unwrap();
        assert_eq!(
            period_text(PromptKind::Exp2, Frequency::Monthly, start, end),
            "October 2023 to September 2024"
        );
    }

    #[test]
    fn value_format() {
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(-0.0), "0");
        assert_eq!(format_value(0.123456), "0.1235");
        assert_eq!(format_value(12345.6), "12350");
        assert_eq!(format_value(2.5), "2.5");
        assert_eq!(format_value(-1.23449), "-1.234");
        assert_eq!(format_value(1e-7), "0.0000001");
    }
}
