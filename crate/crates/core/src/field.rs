//! Real fields on a torus and their binary / CSV serialisation.
//!
//! Binary layout (all little-endian): `d: u32`, `L: u32`, `tag: u32`,
//! `seed: u64`, then `L^d` `f64` values in row-major site order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::Torus;

/// How a field was generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldTag {
    ExactGaussian = 0,
    Mcmc = 1,
    Dynamics = 2,
}

impl FieldTag {
    fn from_u32(x: u32) -> Result<Self> {
        match x {
            0 => Ok(FieldTag::ExactGaussian),
            1 => Ok(FieldTag::Mcmc),
            2 => Ok(FieldTag::Dynamics),
            _ => invalid(format!("unknown field tag {x}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    pub torus: Torus,
    pub values: Vec<f64>,
    pub tag: FieldTag,
    pub seed: u64,
}

impl TorusField {
    pub fn new(torus: Torus, values: Vec<f64>, tag: FieldTag, seed: u64) -> Result<Self> {
        if values.len() != torus.volume() {
            return invalid("field length does not match torus volume");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("field values must be finite");
        }
        Ok(TorusField {
            torus,
            values,
            tag,
            seed,
        })
    }

    pub fn zeros(torus: Torus) -> Self {
        TorusField {
            torus,
            values: vec![0.0; torus.volume()],
            tag: FieldTag::Dynamics,
            seed: 0,
        }
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.values)
    }

    /// Subtracts the mean so the zero mode vanishes.
    pub fn pin_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }

    /// `ω(x) - ω(x + e)` for direction index `dir`.
    pub fn gradient(&self, x: usize, dir: usize) -> f64 {
        self.values[x] - self.values[self.torus.neighbor(x, dir)]
    }

    /// `ω → -ω`.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = -*v);
        out
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&(self.torus.d as u32).to_le_bytes())?;
        out.write_all(&(self.torus.l as u32).to_le_bytes())?;
        out.write_all(&(self.tag as u32).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut w4 = [0u8; 4];
        let mut w8 = [0u8; 8];
        input.read_exact(&mut w4)?;
        let d = u32::from_le_bytes(w4) as usize;
        input.read_exact(&mut w4)?;
        let l = u32::from_le_bytes(w4) as usize;
        input.read_exact(&mut w4)?;
        let tag = FieldTag::from_u32(u32::from_le_bytes(w4))?;
        input.read_exact(&mut w8)?;
        let seed = u64::from_le_bytes(w8);
        let torus = Torus::new(d, l)?;
        let mut values = Vec::with_capacity(torus.volume());
        for _ in 0..torus.volume() {
            input.read_exact(&mut w8)?;
            values.push(f64::from_le_bytes(w8));
        }
        TorusField::new(torus, values, tag, seed)
    }

    /// One row per site: coordinates then value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let names: Vec<String> = (1..=self.torus.d).map(|a| format!("x{a}")).collect();
        writeln!(out, "{},value", names.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let c: Vec<String> = self.torus.coords(i).iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{v:.17e}", c.join(","))?;
        }
        Ok(())
    }
}
