//! Engineering-notation number literals: `5u`, `1m`, `500k`, `0.4`, `1e-3`.
//!
//! Accepted suffixes are `f p n u m k M G` (plus `µ` for `u`). They are
//! case-sensitive except that `K` is read as `k`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("empty number")]
    Empty,
    #[error("malformed number `{0}`")]
    Malformed(String),
    #[error("unknown unit suffix `{suffix}` in `{text}` (expected one of f p n u m k M G)")]
    UnknownSuffix { text: String, suffix: String },
}

/// Decimal exponent of a suffix.
pub fn suffix_exponent(c: char) -> Option<i32> {
    Some(match c {
        'f' => -15,
        'p' => -12,
        'n' => -9,
        'u' | 'µ' => -6,
        'm' => -3,
        'k' | 'K' => 3,
        'M' => 6,
        'G' => 9,
        _ => return None,
    })
}

/// Splits `text` into its numeric mantissa and trailing suffix.
fn split_number(text: &str) -> (&str, &str) {
    let bytes = text.as_bytes();
    let mut end = 0;
    let mut seen_e = false;
    while end < bytes.len() {
        let c = bytes[end];
        let ok = c.is_ascii_digit()
            || c == b'.'
            || ((c == b'+' || c == b'-') && (end == 0 || matches!(bytes[end - 1], b'e' | b'E')))
            || ((c == b'e' || c == b'E')
                && !seen_e
                && end > 0
                && bytes
                    .get(end + 1)
                    .is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+'));
        if !ok {
            break;
        }
        if c == b'e' || c == b'E' {
            seen_e = true;
        }
        end += 1;
    }
    text.split_at(end)
}

/// Parses an engineering-notation literal into an SI value.
pub fn parse_quantity(text: &str) -> Result<f64, UnitError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(UnitError::Empty);
    }
    let (num, suffix) = split_number(t);
    if !num.bytes().any(|b| b.is_ascii_digit()) {
        return Err(UnitError::Malformed(t.to_string()));
    }
    let mut chars = suffix.chars();
    let shift = match (chars.next(), chars.next()) {
        (None, _) => 0,
        (Some(c), None) => suffix_exponent(c).ok_or_else(|| UnitError::UnknownSuffix {
            text: t.to_string(),
            suffix: suffix.to_string(),
        })?,
        _ => {
            return Err(UnitError::UnknownSuffix {
                text: t.to_string(),
                suffix: suffix.to_string(),
            })
        }
    };
    let malformed = || UnitError::Malformed(t.to_string());
    // Shift the decimal exponent so `5u` parses exactly like `5e-6`.
    let (mantissa, exp) = match num.find(['e', 'E']) {
        Some(k) => (
            &num[..k],
            num[k + 1..].parse::<i32>().map_err(|_| malformed())?,
        ),
        None => (num, 0),
    };
    if mantissa.is_empty() || mantissa == "-" || mantissa == "+" {
        return Err(malformed());
    }
    let value: f64 = format!("{mantissa}e{}", exp + shift)
        .parse()
        .map_err(|_| malformed())?;
    if !value.is_finite() {
        return Err(malformed());
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_quantity("5u").unwrap(), 5e-6);
        assert_eq!(parse_quantity("1").unwrap(), 1.0);
        assert_eq!(parse_quantity("1m").unwrap(), 1e-3);
        assert_eq!(parse_quantity("500k").unwrap(), 500e3);
        assert_eq!(parse_quantity("500K").unwrap(), 500e3);
        assert_eq!(parse_quantity("0.4").unwrap(), 0.4);
        assert_eq!(parse_quantity("2M").unwrap(), 2e6);
        assert_eq!(parse_quantity("-2.5n").unwrap(), -2.5e-9);
        assert_eq!(parse_quantity("1e-3").unwrap(), 1e-3);
        assert_eq!(parse_quantity("1.5e3k").unwrap(), 1.5e6);
        assert_eq!(parse_quantity("3µ").unwrap(), 3e-6);
        assert_eq!(parse_quantity("10f").unwrap(), 10e-15);
        assert_eq!(parse_quantity("7p").unwrap(), 7e-12);
        assert_eq!(parse_quantity("1G").unwrap(), 1e9);
    }

    #[test]
    fn rejects_bad_literals() {
        assert!(matches!(
            parse_quantity("5 potato"),
            Err(UnitError::UnknownSuffix { .. })
        ));
        assert!(matches!(
            parse_quantity("5x"),
            Err(UnitError::UnknownSuffix { .. })
        ));
        // case-sensitive: capital U is not micro
        assert!(parse_quantity("5U").is_err());
        assert!(parse_quantity("5mm").is_err());
        assert!(matches!(parse_quantity(""), Err(UnitError::Empty)));
        assert!(matches!(
            parse_quantity("abc"),
            Err(UnitError::Malformed(_))
        ));
    }
}
