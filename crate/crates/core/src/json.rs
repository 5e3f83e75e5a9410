//! Schema-stable JSON: sorted keys, floats rounded to 6 significant digits.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}

fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"), 6);
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(normalize).collect()),
        // serde_json's default map is ordered by key.
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

pub fn to_stable_value<T: Serialize>(value: &T) -> Result<Value> {
    Ok(normalize(serde_json::to_value(value)?))
}

pub fn to_stable_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&to_stable_value(value)?)?;
    s.push('\n');
    Ok(s)
}
