//! CSV emission with fixed, platform-independent number formatting.

use std::io::Write;

use crate::montecarlo::{ErrorEstimate, ReceiverKind};

pub const SIMULATE_HEADER: [&str; 9] = [
    "sweep_var",
    "value",
    "receiver",
    "trials",
    "errors",
    "p_hat",
    "ci_low",
    "ci_high",
    "analytic_ref",
];

/// Formats `x` in positional notation with exactly nine significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x.abs());
    let (mantissa, exponent) = sci
        .split_once('e')
        .expect("scientific notation has an exponent");
    let exponent: i32 = exponent.parse().expect("exponent is an integer");
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if x < 0.0 { "-" } else { "" };
    let body = if exponent < 0 {
        format!("0.{}{}", "0".repeat((-exponent - 1) as usize), digits)
    } else {
        let split = exponent as usize + 1;
        if split >= digits.len() {
            format!("{}{}", digits, "0".repeat(split - digits.len()))
        } else {
            format!("{}.{}", &digits[..split], &digits[split..])
        }
    };
    format!("{sign}{body}")
}

/// One result row: a receiver at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_var: String,
    pub value: f64,
    pub receiver: ReceiverKind,
    pub estimate: ErrorEstimate,
}

impl ResultRow {
    fn fields(&self) -> [String; 9] {
        let e = &self.estimate;
        [
            self.sweep_var.clone(),
            format_sig9(self.value),
            self.receiver.as_str().to_string(),
            e.trials.to_string(),
            e.errors.to_string(),
            format_sig9(e.p_hat),
            format_sig9(e.ci_low),
            format_sig9(e.ci_high),
            e.analytic_ref.map(format_sig9).unwrap_or_default(),
        ]
    }
}

/// Writes the header and rows as UTF-8 CSV with LF line endings.
pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> csv::Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(SIMULATE_HEADER)?;
    for row in rows {
        writer.write_record(row.fields())?;
    }
    writer.flush()?;
    Ok(())
}
