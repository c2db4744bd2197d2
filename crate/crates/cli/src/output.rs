use std::fmt::Write as _;

use redd_core::eval::MetricsDoc;
use serde::Serialize;
use serde_json::Value;

use crate::args::Format;

/// A command result rendered either as plain text or as JSON.
pub struct Output {
    text: String,
    json: Value,
}

impl Output {
    pub fn new(text: impl Into<String>, json: impl Serialize) -> Self {
        Output {
            text: text.into(),
            json: serde_json::to_value(json).expect("output serializes"),
        }
    }

    /// One `name value` line per metric.
    pub fn metrics(doc: &MetricsDoc) -> Self {
        Output::new(metrics_text(doc), doc)
    }

    pub fn print(&self, format: Format) {
        match format {
            Format::Text => {
                print!("{}", self.text);
                if !self.text.ends_with('\n') {
                    println!();
                }
            }
            Format::Json => println!(
                "{}",
                serde_json::to_string_pretty(&self.json).expect("json")
            ),
        }
    }
}

pub fn metrics_text(doc: &MetricsDoc) -> String {
    let mut s = String::new();
    for (k, v) in doc {
        let _ = writeln!(s, "{k} {v}");
    }
    s
}
