use serde_json::{Map, Value};

use super::spec::{json_kind_name, ParamKind, ToolSpec};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ArgError {
    #[error("missing required argument '{0}'")]
    MissingRequired(String),
    #[error("argument '{name}' must be {expected}, got {got}")]
    WrongKind {
        name: String,
        expected: String,
        got: String,
    },
    #[error("unknown argument '{0}'")]
    UnknownKey(String),
}

/// Checks `args` against the runtime params of `spec` and returns them with
/// omitted optionals filled from their defaults.
pub fn validate_args(spec: &ToolSpec, args: &Map<String, Value>) -> Result<Map<String, Value>, ArgError> {
    for key in args.keys() {
        if !spec.runtime_params().any(|p| &p.name == key) {
            return Err(ArgError::UnknownKey(key.clone()));
        }
    }

    let mut normalized = Map::new();
    for p in spec.runtime_params() {
        match args.get(&p.name) {
            Some(value) => {
                if !p.kind.accepts(value) {
                    return Err(ArgError::WrongKind {
                        name: p.name.clone(),
                        expected: p.kind.to_string(),
                        got: json_kind_name(value).to_string(),
                    });
                }
                if let (Some(item), Value::Array(items)) = (p.item_kind, value) {
                    if let Some(bad) = items.iter().find(|v| !item.accepts(v)) {
                        return Err(ArgError::WrongKind {
                            name: p.name.clone(),
                            expected: format!("array of {item}"),
                            got: format!("array containing {}", json_kind_name(bad)),
                        });
                    }
                }
                normalized.insert(p.name.clone(), normalize(p.kind, value));
            }
            None if p.required => return Err(ArgError::MissingRequired(p.name.clone())),
            None => {
                if let Some(d) = &p.default {
                    normalized.insert(p.name.clone(), normalize(p.kind, d));
                }
            }
        }
    }
    Ok(normalized)
}

fn normalize(kind: ParamKind, value: &Value) -> Value {
    // whole-valued floats passed for integer params become integers
    if kind == ParamKind::Integer {
        if let Some(f) = value.as_f64().filter(|_| !value.is_i64() && !value.is_u64()) {
            if f.abs() < 9.0e15 {
                return Value::from(f as i64);
            }
        }
    }
    value.clone()
}
