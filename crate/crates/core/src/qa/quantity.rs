//! Canonical numeric phrasing.
//!
//! Rounding is decimal half-up (away from zero) applied to the shortest decimal
//! representation of the value, so 2.345 prints as 2.35 even though the nearest binary
//! double is slightly below it.

/// Rounds `value * 10^shift` to `places` decimals and returns the decimal text.
fn round_shifted(value: f64, shift: i32, places: usize) -> String {
    assert!(value.is_finite(), "cannot format {value}");
    let repr = format!("{}", value.abs());
    let (int, frac) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes()).map(|b| b - b'0').collect();
    // Position of the decimal point within `digits`.
    let mut point = int.len() as i64 + shift as i64;
    while point < 1 {
        digits.insert(0, 0);
        point += 1;
    }
    let keep = point as usize + places;
    while digits.len() < keep + 1 {
        digits.push(0);
    }
    let round_up = digits[keep] >= 5;
    digits.truncate(keep);
    if round_up {
        let mut k = keep;
        loop {
            if k == 0 {
                digits.insert(0, 1);
                point += 1;
                break;
            }
            k -= 1;
            if digits[k] == 9 {
                digits[k] = 0;
            } else {
                digits[k] += 1;
                break;
            }
        }
    }
    let point = point as usize;
    let mut int_part: String = digits[..point].iter().map(|d| (b'0' + d) as char).collect();
    let trimmed = int_part.trim_start_matches('0');
    int_part = if trimmed.is_empty() { "0".into() } else { trimmed.into() };
    let frac_part: String = digits[point..].iter().map(|d| (b'0' + d) as char).collect();
    let zero = digits.iter().all(|d| *d == 0);
    let sign = if value < 0.0 && !zero { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

/// Decimal text of `value` rounded half-up to `places` decimals.
pub fn format_decimal(value: f64, places: usize) -> String {
    round_shifted(value, 0, places)
}

/// "2.35 meters" at or above one meter, "42 centimeters" below.
pub fn format_quantity(meters: f64) -> String {
    if meters.abs() < 1.0 {
        let cm = round_shifted(meters, 2, 0);
        match cm.as_str() {
            "100" => return "1.00 meters".into(),
            "-100" => return "-1.00 meters".into(),
            "1" | "-1" => return format!("{cm} centimeter"),
            _ => return format!("{cm} centimeters"),
        }
    }
    format!("{} meters", format_decimal(meters, 2))
}

/// "(0.12, -0.30, 2.45) meters".
pub fn format_point(xyz: [f64; 3]) -> String {
    format!("{} meters", format_vector(xyz))
}

/// "(0.71, 0.00, 0.71)".
pub fn format_vector(xyz: [f64; 3]) -> String {
    format!("({}, {}, {})", format_decimal(xyz[0], 2), format_decimal(xyz[1], 2), format_decimal(xyz[2], 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(format_quantity(2.345), "2.35 meters");
        assert_eq!(format_quantity(0.42), "42 centimeters");
        assert_eq!(format_quantity(1.0), "1.00 meters");
        assert_eq!(format_quantity(0.995), "1.00 meters");
        assert_eq!(format_quantity(0.994), "99 centimeters");
        assert_eq!(format_quantity(0.015), "2 centimeters");
        assert_eq!(format_quantity(0.01), "1 centimeter");
        assert_eq!(format_quantity(9.995), "10.00 meters");
        assert_eq!(format_quantity(123.4), "123.40 meters");
    }

    #[test]
    fn decimals() {
        assert_eq!(format_decimal(0.125, 2), "0.13");
        assert_eq!(format_decimal(-0.125, 2), "-0.13");
        assert_eq!(format_decimal(-0.001, 2), "0.00");
        assert_eq!(format_decimal(0.0, 2), "0.00");
        assert_eq!(format_decimal(99.999, 2), "100.00");
        assert_eq!(format_decimal(1e-7, 2), "0.00");
        assert_eq!(format_decimal(2.5, 0), "3");
        assert_eq!(format_point([0.123, -0.3, 2.449]), "(0.12, -0.30, 2.45) meters");
    }

    proptest! {
        #[test]
        fn matches_exact_decimal_rounding(cents in 0u64..100_000, tail in 0u32..1000) {
            // value = cents/100 + tail/100000, with the half-way case at tail == 500.
            let text = format!("{}.{:02}{:03}", cents / 100, cents % 100, tail);
            let v: f64 = text.parse().unwrap();
            let expected = cents + u64::from(tail >= 500);
            prop_assert_eq!(format_decimal(v, 2), format!("{}.{:02}", expected / 100, expected % 100));
        }
    }
}
