use serde_json::Value;

/// Tolerance for floating-point leaves, applied both absolutely and
/// relatively.
pub const FLOAT_TOLERANCE: f64 = 1e-6;

fn numbers_match(a: &serde_json::Number, b: &serde_json::Number) -> bool {
    if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
        return x == y;
    }
    if let (Some(x), Some(y)) = (a.as_u64(), b.as_u64()) {
        return x == y;
    }
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => {
            let diff = (x - y).abs();
            diff <= FLOAT_TOLERANCE || diff <= FLOAT_TOLERANCE * y.abs().max(x.abs())
        }
        _ => false,
    }
}

/// Structural equality of JSON values with tolerant numeric leaves. Booleans
/// never equal numbers; integers and floats compare by value.
pub fn values_match(actual: &Value, expected: &Value) -> bool {
    match (actual, expected) {
        (Value::Null, Value::Null) => true,
        (Value::Bool(a), Value::Bool(b)) => a == b,
        (Value::Number(a), Value::Number(b)) => numbers_match(a, b),
        (Value::String(a), Value::String(b)) => a == b,
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_match(x, y))
        }
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| values_match(v, w)))
        }
        _ => false,
    }
}
