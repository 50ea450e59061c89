//! Square-law MOSFET and memristor cell models.
//!
//! Every circuit-level module evaluates transistors through [`mos_eval`]. The
//! model is first-order strong inversion: zero current below threshold, the
//! triode expression below pinch-off and the quadratic law with channel-length
//! modulation above it. PMOS devices use the same formulas on |Vgs| and |Vds|.

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Nmos,
    Pmos,
}

/// Square-law transistor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosParams {
    /// Transconductance parameter in A/V².
    pub beta: f64,
    /// Threshold voltage magnitude in V.
    pub vt: f64,
    /// Channel-length modulation in 1/V.
    pub lambda: f64,
    pub polarity: Polarity,
}

impl MosParams {
    pub fn nmos(beta: f64, vt: f64, lambda: f64) -> Self {
        Self {
            beta,
            vt,
            lambda,
            polarity: Polarity::Nmos,
        }
    }

    pub fn pmos(beta: f64, vt: f64, lambda: f64) -> Self {
        Self {
            beta,
            vt,
            lambda,
            polarity: Polarity::Pmos,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta must be positive and finite"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be non-negative and finite"));
        }
        if !self.vt.is_finite() {
            return Err(Error::invalid("vt must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Cutoff,
    Triode,
    Saturation,
}

/// Result of evaluating a transistor at one bias point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosEval {
    pub current: f64,
    pub region: Region,
    /// dI/dVgs
    pub gm: f64,
    /// dI/dVds
    pub gds: f64,
    /// 1/gds, infinite when gds is zero.
    #[serde(with = "crate::report::inf_as_null")]
    pub ro: f64,
}

/// Evaluates the square-law model at (|Vgs|, |Vds|), `vds >= 0`.
///
/// `gm` and `gds` are the analytic partial derivatives of the returned
/// current. In saturation the `(1 + lambda*vds)` factor applies; the triode
/// branch omits it, so with `lambda > 0` the current steps by
/// `lambda*vds` relative at the pinch-off boundary.
pub fn mos_eval(p: &MosParams, vgs: f64, vds: f64) -> MosEval {
    debug_assert!(vds >= 0.0, "mos_eval expects vds >= 0, got {vds}");
    let vov = vgs - p.vt;
    if vov <= 0.0 {
        return MosEval {
            current: 0.0,
            region: Region::Cutoff,
            gm: 0.0,
            gds: 0.0,
            ro: f64::INFINITY,
        };
    }
    if vds < vov {
        let current = p.beta * (vov * vds - 0.5 * vds * vds);
        let gm = p.beta * vds;
        let gds = p.beta * (vov - vds);
        MosEval {
            current,
            region: Region::Triode,
            gm,
            gds,
            ro: recip(gds),
        }
    } else {
        let clm = 1.0 + p.lambda * vds;
        let current = 0.5 * p.beta * vov * vov * clm;
        let gm = p.beta * vov * clm;
        let gds = 0.5 * p.beta * vov * vov * p.lambda;
        MosEval {
            current,
            region: Region::Saturation,
            gm,
            gds,
            ro: recip(gds),
        }
    }
}

fn recip(g: f64) -> f64 {
    if g > 0.0 {
        1.0 / g
    } else {
        f64::INFINITY
    }
}

/// Channel current with source/drain symmetry for `vds < 0`.
///
/// Returns `(i, di/dvgs, di/dvds)` in the device's own sign convention.
/// Nonlinear solvers use this so intermediate iterates may reverse a device.
pub(crate) fn channel_current(p: &MosParams, vgs: f64, vds: f64) -> (f64, f64, f64) {
    if vds >= 0.0 {
        let e = mos_eval(p, vgs, vds);
        (e.current, e.gm, e.gds)
    } else {
        // Source and drain swap: vgs' = vgs - vds, vds' = -vds, i = -i'.
        let e = mos_eval(p, vgs - vds, -vds);
        (-e.current, -e.gm, e.gm + e.gds)
    }
}

/// A programmable resistive cross-point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorCell {
    pub g: f64,
    pub g_min: f64,
    pub g_max: f64,
    /// Set when the requested conductance fell outside `[g_min, g_max]`.
    pub clamped: bool,
}

pub fn clamp_conductance(g_raw: f64, g_min: f64, g_max: f64) -> Result<MemristorCell, Error> {
    if !(g_min > 0.0) {
        return Err(Error::invalid("g_min must be positive"));
    }
    if g_max < g_min {
        return Err(Error::invalid("g_max must not be below g_min"));
    }
    let g = g_raw.clamp(g_min, g_max);
    Ok(MemristorCell {
        g,
        g_min,
        g_max,
        clamped: g != g_raw,
    })
}
