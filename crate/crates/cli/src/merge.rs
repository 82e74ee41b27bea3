// SPDX-License-Identifier: Apache-2.0

//! Summary table over result JSONs of one experiment kind.

use std::collections::HashMap;
use std::path::Path;

use serde_json::Value;

use crate::{CliResult, Failure};

pub const HEADER: &str = "model_id,rho,fitted_rate,bound_satisfied,z_score";

fn cell(v: Option<&Value>) -> String {
    match v {
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::Bool(b)) => b.to_string(),
        Some(Value::String(s)) => s.replace(',', ";"),
        _ => String::new(),
    }
}

/// Builds the merged CSV. Rejects mixed experiment kinds; duplicate model
/// ids get a numeric suffix and a warning on stderr.
pub fn merge(docs: &[(String, Value)]) -> CliResult<String> {
    let mut out = String::from(HEADER);
    out.push('\n');
    let mut kind: Option<&str> = None;
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (name, doc) in docs {
        let k = doc
            .get("experiment")
            .and_then(Value::as_str)
            .ok_or_else(|| Failure::Validation(format!("{name}: missing experiment kind")))?;
        match kind {
            None => kind = Some(k),
            Some(prev) if prev != k => {
                return Err(Failure::Validation(format!(
                    "{name}: kind {k} differs from {prev}"
                )));
            }
            _ => {}
        }
        let base = cell(doc.get("model_id"));
        let count = seen.entry(base.clone()).or_insert(0);
        *count += 1;
        let id = if *count == 1 {
            base
        } else {
            let id = format!("{base}_{count}");
            eprintln!("ergo: warning: duplicate model id {base:?} in {name}, renamed to {id:?}");
            id
        };
        out.push_str(&format!(
            "{id},{},{},{},{}\n",
            cell(doc.get("rho")),
            cell(doc.get("fitted_rate")),
            cell(doc.get("bound_satisfied")),
            cell(doc.get("z_score")),
        ));
    }
    Ok(out)
}

pub fn run(inputs: &[std::path::PathBuf], out: Option<&Path>) -> CliResult<()> {
    let mut docs = Vec::with_capacity(inputs.len());
    for p in inputs {
        let src = std::fs::read_to_string(p)
            .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&src)
            .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
        docs.push((p.display().to_string(), v));
    }
    let table = merge(&docs)?;
    match out {
        Some(path) => std::fs::write(path, table).map_err(|e| Failure::Runtime(e.to_string())),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_is_header_only() {
        assert_eq!(merge(&[]).unwrap(), format!("{HEADER}\n"));
    }

    #[test]
    fn duplicates_suffixed_and_kinds_checked() {
        let a = json!({"experiment": "decay-study", "model_id": "ou", "rho": 1.0, "fitted_rate": 1.0, "bound_satisfied": true, "z_score": 0.0});
        let t = merge(&[("a".into(), a.clone()), ("b".into(), a.clone())]).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[1], "ou,1.0,1.0,true,0.0");
        assert!(lines[2].starts_with("ou_2,"));
        let other = json!({"experiment": "eigen", "model_id": "x"});
        assert!(merge(&[("a".into(), a), ("c".into(), other)]).is_err());
    }
}
