use crate::diag::{DiagClass, Diagnostic, Span};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// Stimulus for one simulation, as read from an inputs file.
///
/// ```json
/// { "scalars": {"x": 3},
///   "tensors": {"A": [[1, 2], [3, 4]]},
///   "ports":   {"F": [{"cycle": 4, "index": [0], "data": 7}]},
///   "trace":   ["s"],
///   "max_cycles": 10000 }
/// ```
///
/// Tensors may be flat or nested row-major arrays; `null` leaves a cell
/// uninitialized. Port scripts write into an argument's tensor from outside
/// the design at the end of the given cycle.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimInputs {
    #[serde(default)]
    pub scalars: BTreeMap<String, i64>,
    #[serde(default)]
    pub tensors: BTreeMap<String, Value>,
    #[serde(default)]
    pub ports: BTreeMap<String, Vec<ScriptTxn>>,
    /// Names of top-level values whose buses go into the trace.
    #[serde(default)]
    pub trace: Vec<String>,
    pub max_cycles: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTxn {
    pub cycle: u64,
    pub index: Vec<u64>,
    pub data: i64,
}

impl SimInputs {
    pub fn from_json(text: &str) -> Result<Self, Diagnostic> {
        serde_json::from_str(text).map_err(|e| input_error(format!("malformed inputs: {e}")))
    }

    pub fn scalar(mut self, name: &str, v: i64) -> Self {
        self.scalars.insert(name.to_string(), v);
        self
    }

    pub fn tensor(mut self, name: &str, data: &[i64]) -> Self {
        self.tensors.insert(name.to_string(), Value::from(data.to_vec()));
        self
    }
}

pub(crate) fn input_error(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(DiagClass::SimInput, Span::default(), msg)
}

/// Flattens a (possibly nested) JSON array of integers or nulls.
pub(crate) fn flatten(name: &str, v: &Value, out: &mut Vec<Option<i64>>) -> Result<(), Diagnostic> {
    match v {
        Value::Array(items) => {
            for i in items {
                flatten(name, i, out)?;
            }
            Ok(())
        }
        Value::Null => {
            out.push(None);
            Ok(())
        }
        Value::Number(n) => match n.as_i64().or_else(|| n.as_u64().map(|u| u as i64)) {
            Some(x) => {
                out.push(Some(x));
                Ok(())
            }
            None => Err(input_error(format!("tensor '{name}': {n} is not an integer"))),
        },
        other => Err(input_error(format!("tensor '{name}': unexpected {other}"))),
    }
}
