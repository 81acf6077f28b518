use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

pub const BOUND_REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerBound {
    /// 1-based.
    pub layer: usize,
    pub family: String,
    pub mixing: bool,
    pub n_in: usize,
    pub width: usize,
    pub r_struct: usize,
    pub clamped: bool,
    /// Fresh directions gained at this layer.
    pub g: usize,
    pub u: usize,
    pub k: usize,
    #[serde(with = "decimal")]
    pub factor: BigUint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub version: u32,
    pub d0: usize,
    /// Which span value caps `k_l`.
    pub h_rule: String,
    pub layers: Vec<LayerBound>,
    #[serde(with = "decimal")]
    pub total: BigUint,
    /// Depth overhead in blocks; absent when the budget stalls.
    pub l_overhead: Option<usize>,
    pub l_overhead_layers: Option<usize>,
    pub overhead_stalled: bool,
    pub warnings: Vec<String>,
}

impl BoundReport {
    pub fn log10_total(&self) -> f64 {
        log10_big(&self.total)
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["log10_total"] = serde_json::json!(round6(self.log10_total()));
        for (row, l) in v["layers"].as_array_mut().expect("layers array").iter_mut().zip(&self.layers) {
            row["log10_factor"] = serde_json::json!(round6(log10_big(&l.factor)));
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    /// One row per layer, then `total`, `log10_total` and `L_overhead` footer rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,family,r_struct,u,k,factor,log10_factor\n");
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6}",
                l.layer,
                l.family,
                l.r_struct,
                l.u,
                l.k,
                l.factor,
                log10_big(&l.factor)
            );
        }
        let _ = writeln!(out, "total,{}", self.total);
        let _ = writeln!(out, "log10_total,{:.6}", self.log10_total());
        let overhead = self.l_overhead.map_or_else(|| "stalled".to_string(), |t| t.to_string());
        let _ = writeln!(out, "L_overhead,{overhead}");
        out
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// `log10(x)` for integers far beyond `f64` range, from the top 64 bits.
pub fn log10_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = bits.saturating_sub(64);
    let top = (x >> shift).to_f64().expect("64-bit value converts");
    top.log10() + shift as f64 * std::f64::consts::LOG10_2
}

/// Big integers as decimal strings.
mod decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 10).ok_or_else(|| D::Error::custom(format!("not a decimal integer: {s}")))
    }
}
