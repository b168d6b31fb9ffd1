//! JSON mirror of the MATPOWER matrices:
//!
//! ```json
//! { "baseMVA": 100, "bus": [[...], ...], "gen": [[...], ...], "branch": [[...], ...] }
//! ```
//!
//! Rows carry the same columns, in the same units, as the `mpc` text format.

use super::{ParsedCase, RawCase};
use crate::error::Result;

const KNOWN: [&str; 5] = ["baseMVA", "bus", "gen", "branch", "version"];

pub fn parse_case_json(text: &str) -> Result<ParsedCase> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let mut warnings = Vec::new();
    if let Some(obj) = value.as_object() {
        for key in obj.keys() {
            if !KNOWN.contains(&key.as_str()) {
                warnings.push(format!("mpc.{key} ignored"));
            }
        }
    }
    let raw: RawCase = serde_json::from_value(value)?;
    let case = raw.into_network(&mut warnings)?;
    Ok(ParsedCase { case, warnings })
}

impl RawCase {
    /// Render as the JSON mirror format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numeric data serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case_matpower;

    #[test]
    fn json_matches_text() {
        let text = r#"
mpc.baseMVA = 100;
mpc.bus = [1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
           2 1 50 10 0 0 1 1 0 230 1 1.05 0.95];
mpc.gen = [1 0 0 100 -100 1 100 1 200 0];
mpc.branch = [1 2 0.01 0.1 0.02 100 0 0 0 0 1 -360 360];
"#;
        let json = r#"{
  "baseMVA": 100,
  "bus": [[1,3,0,0,0,0,1,1,0,230,1,1.1,0.9],[2,1,50,10,0,0,1,1,0,230,1,1.05,0.95]],
  "gen": [[1,0,0,100,-100,1,100,1,200,0]],
  "branch": [[1,2,0.01,0.1,0.02,100,0,0,0,0,1,-360,360]],
  "gencost": []
}"#;
        let a = parse_case_matpower(text).unwrap();
        let b = parse_case_json(json).unwrap();
        assert_eq!(a.case, b.case);
        assert_eq!(b.warnings, vec!["mpc.gencost ignored".to_string()]);
    }
}
