//! Arithmetic-primitive cost model for PWL activation implementations,
//! reported side-by-side with published FPGA synthesis figures.
//!
//! The model counts comparisons, multiplies, adds, and stored coefficients
//! per activation evaluation. It makes no attempt to predict LUT/FF counts;
//! the published numbers are embedded verbatim for comparison only.

use crate::error::{Error, Result};

/// Primitive-operation counts for one activation implementation variant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub variant: String,
    pub comparisons: u32,
    pub multiplies: u32,
    pub adds: u32,
    pub stored_coefficients: u32,
    pub shift_add_mode: bool,
}

/// Published FPGA resource row: (variant, DSP slices, LUT, FF).
pub type ResourceRow = (&'static str, u32, u32, u32);

/// Published synthesis results for the tanh implementation variants:
/// original floating-point plus 3/5/7/9-segment PWL.
pub const RESOURCE_TABLE: [ResourceRow; 5] = [
    ("original", 26, 3849, 3020),
    ("3-segment", 0, 203, 34),
    ("5-segment", 0, 570, 98),
    ("7-segment", 0, 1076, 164),
    ("9-segment", 0, 1374, 230),
];

/// The published resource table (copy).
pub fn reference_table() -> Vec<ResourceRow> {
    RESOURCE_TABLE.to_vec()
}

/// Cost model of one K-segment PWL evaluation.
///
/// - comparisons: K - 1 (worst-case sequential breakpoint compare);
/// - multiplies: 1, or 0 when the shift-add decomposition replaces the
///   multiplier;
/// - adds: 1, plus ceil(log2(K)) decomposition adds in shift-add mode
///   (a documented modeling convention, not a synthesis result);
/// - stored coefficients: K slopes + K intercepts + (K - 1) breakpoints.
pub fn pwl_cost(segments: u32, shift_add_mode: bool) -> Result<CostReport> {
    if segments < 2 {
        return Err(Error::Argument(format!("pwl_cost needs >= 2 segments, got {segments}")));
    }
    let decomposition_adds = if shift_add_mode {
        (segments as f64).log2().ceil() as u32
    } else {
        0
    };
    Ok(CostReport {
        variant: format!("{segments}-segment"),
        comparisons: segments - 1,
        multiplies: if shift_add_mode { 0 } else { 1 },
        adds: 1 + decomposition_adds,
        stored_coefficients: 2 * segments + (segments - 1),
        shift_add_mode,
    })
}

/// CSV header of [`cost_report`].
pub const COST_CSV_HEADER: &str =
    "variant,dsp_published,lut_published,ff_published,comparisons_model,multiplies_model,adds_model,stored_model";

/// Merges the cost model with the published table into one CSV: published
/// columns verbatim, model columns from [`pwl_cost`] (empty for the
/// original floating-point variant, which the model does not cover).
pub fn cost_report(segments: &[u32], shift_add_mode: bool) -> Result<String> {
    let mut out = String::from(COST_CSV_HEADER);
    out.push('\n');
    for &(variant, dsp, lut, ff) in RESOURCE_TABLE.iter() {
        let model = if variant == "original" {
            None
        } else {
            let k: u32 = variant
                .strip_suffix("-segment")
                .and_then(|s| s.parse().ok())
                .expect("table variants are K-segment");
            if segments.contains(&k) {
                Some(pwl_cost(k, shift_add_mode)?)
            } else {
                None
            }
        };
        match model {
            Some(m) => out.push_str(&format!(
                "{variant},{dsp},{lut},{ff},{},{},{},{}\n",
                m.comparisons, m.multiplies, m.adds, m.stored_coefficients
            )),
            None => out.push_str(&format!("{variant},{dsp},{lut},{ff},,,,\n")),
        }
    }
    Ok(out)
}
