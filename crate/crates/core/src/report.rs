//! Fixed-precision text output shared by the CLI and simulation tables.

/// Formats `x` with six significant digits, without exponent for
/// moderate magnitudes. Non-finite values print as `NaN`, `inf`, `-inf`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let e = format!("{x:.5e}");
    let mag: i32 = e
        .split_once('e')
        .and_then(|(_, p)| p.parse().ok())
        .unwrap_or(0);
    if !(-5..=15).contains(&mag) {
        return e;
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Percentage with one decimal, e.g. `23.4%`.
pub fn percent(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}
