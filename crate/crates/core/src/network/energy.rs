//! Per-inference energy accounting and a digital MAC baseline.
//!
//! All quantities are SI (J, W, s). Calibration energy is a one-time cost
//! amortized over `n_inferences`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::inf_as_null;

use super::{InferenceOutput, PreparedNetwork};

/// What one inference exercised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_neurons: usize,
    /// Mean power in crossbar cells and wires during evaluation (W).
    pub crossbar_power: f64,
    pub n_mac: usize,
    pub n_activations: usize,
    /// Nodes (input and output DACs) tuned by calibration.
    pub n_calibrated_nodes: usize,
    pub sar_nbits: u32,
}

impl RunRecord {
    /// Counts for `net` with the crossbar power averaged over `outputs`.
    /// Every neuron has an input and an output node to calibrate.
    pub fn from_inference(
        net: &PreparedNetwork,
        outputs: &[InferenceOutput],
        sar_nbits: u32,
    ) -> Self {
        let power = if outputs.is_empty() {
            0.0
        } else {
            outputs.iter().map(|o| o.crossbar_power).sum::<f64>() / outputs.len() as f64
        };
        let n_neurons = net.n_neurons();
        Self {
            n_neurons,
            crossbar_power: power,
            n_mac: net.layers.iter().map(|l| l.n_in() * l.n_out()).sum(),
            n_activations: n_neurons,
            n_calibrated_nodes: 2 * n_neurons,
            sar_nbits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub t_eval: f64,
    pub t_sar_step: f64,
    pub p_neuron: f64,
    pub p_sar: f64,
    /// Inferences over which calibration is amortized.
    pub n_inferences: f64,
    /// Digital baseline: energy per multiply-accumulate.
    pub e_mac: f64,
    /// Digital baseline: energy per activation.
    pub e_act: f64,
    /// Where each value came from ("default" or "explicit").
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl Default for EnergyParams {
    fn default() -> Self {
        let provenance = [
            "t_eval",
            "t_sar_step",
            "p_neuron",
            "p_sar",
            "n_inferences",
            "e_mac",
            "e_act",
        ]
        .into_iter()
        .map(|k| (k.to_string(), "default".to_string()))
        .collect();
        Self {
            t_eval: 10e-9,
            t_sar_step: 100e-9,
            p_neuron: 43e-6,
            p_sar: 50e-6,
            n_inferences: 1e6,
            e_mac: 1e-12,
            e_act: 0.5e-12,
            provenance,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("t_eval", self.t_eval),
            ("t_sar_step", self.t_sar_step),
            ("p_neuron", self.p_neuron),
            ("p_sar", self.p_sar),
            ("e_mac", self.e_mac),
            ("e_act", self.e_act),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        if !(self.n_inferences >= 1.0) {
            return Err(Error::invalid("n_inferences must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "e_crossbar_j")]
    pub e_crossbar: f64,
    #[serde(rename = "e_neurons_j")]
    pub e_neurons: f64,
    #[serde(rename = "e_sar_j")]
    pub e_sar: f64,
    #[serde(rename = "e_total_j")]
    pub e_total: f64,
    #[serde(rename = "t_eval_s")]
    pub t_eval: f64,
    #[serde(rename = "baseline_j")]
    pub baseline: f64,
    /// `baseline / e_total`; null when the analog total is zero.
    #[serde(with = "inf_as_null")]
    pub ratio: f64,
    pub assumptions: BTreeMap<String, String>,
}

pub fn digital_baseline(n_mac: usize, e_mac: f64, n_act: usize, e_act: f64) -> f64 {
    n_mac as f64 * e_mac + n_act as f64 * e_act
}

pub fn energy_estimate(run: &RunRecord, p: &EnergyParams) -> Result<EnergyReport> {
    p.validate()?;
    if !(run.crossbar_power >= 0.0 && run.crossbar_power.is_finite()) {
        return Err(Error::invalid("crossbar power must be finite and >= 0"));
    }
    let e_crossbar = run.crossbar_power * p.t_eval;
    let e_neurons = run.n_neurons as f64 * p.p_neuron * p.t_eval;
    let t_cal = run.n_calibrated_nodes as f64 * f64::from(run.sar_nbits) * p.t_sar_step;
    let e_sar = t_cal * p.p_sar / p.n_inferences;
    let e_total = e_crossbar + e_neurons + e_sar;
    let baseline = digital_baseline(run.n_mac, p.e_mac, run.n_activations, p.e_act);
    let ratio = if e_total > 0.0 {
        baseline / e_total
    } else {
        f64::INFINITY
    };
    let mut assumptions: BTreeMap<String, String> = p
        .provenance
        .iter()
        .map(|(k, v)| (format!("{k}_source"), v.clone()))
        .collect();
    assumptions.insert(
        "ratio_note".into(),
        "ratio depends on the digital baseline e_mac/e_act and on amortization".into(),
    );
    Ok(EnergyReport {
        e_crossbar,
        e_neurons,
        e_sar,
        e_total,
        t_eval: p.t_eval,
        baseline,
        ratio,
        assumptions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(n: usize, power: f64) -> RunRecord {
        RunRecord {
            n_neurons: n,
            crossbar_power: power,
            n_mac: 0,
            n_activations: 0,
            n_calibrated_nodes: 0,
            sar_nbits: 6,
        }
    }

    #[test]
    fn single_neuron() {
        let r = energy_estimate(&run(1, 0.0), &EnergyParams::default()).unwrap();
        let want = 0.43e-12;
        assert!((r.e_neurons - want).abs() <= 4.0 * f64::EPSILON * want);
        assert_eq!(r.e_total, r.e_crossbar + r.e_neurons + r.e_sar);
    }

    #[test]
    fn zero_duration() {
        let p = EnergyParams {
            t_eval: 0.0,
            t_sar_step: 0.0,
            ..EnergyParams::default()
        };
        let mut rec = run(4, 1e-6);
        rec.n_calibrated_nodes = 8;
        let r = energy_estimate(&rec, &p).unwrap();
        assert_eq!(
            (r.e_crossbar, r.e_neurons, r.e_sar, r.e_total),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert!(r.ratio.is_infinite());
    }

    #[test]
    fn sar_amortized() {
        let mut rec = run(0, 0.0);
        rec.n_calibrated_nodes = 2;
        let p = EnergyParams {
            n_inferences: 1.0,
            ..EnergyParams::default()
        };
        let r = energy_estimate(&rec, &p).unwrap();
        assert!((r.e_sar - 2.0 * 6.0 * 100e-9 * 50e-6).abs() < 1e-24);
    }

    #[test]
    fn rejects_negative() {
        let p = EnergyParams {
            p_neuron: -1.0,
            ..EnergyParams::default()
        };
        assert!(energy_estimate(&run(1, 0.0), &p).is_err());
    }

    #[test]
    fn baseline() {
        assert_eq!(digital_baseline(64, 1e-12, 8, 0.5e-12), 64e-12 + 4e-12);
    }
}
