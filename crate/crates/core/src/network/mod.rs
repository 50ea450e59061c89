//! Feed-forward networks on crossbar tiles.
//!
//! Weight `w[i][j]` connects input `i` to neuron `j`. Signed weights use two
//! physical columns per neuron: the positive part programs the `g_plus`
//! column, the negative part the `g_minus` column, and the neuron takes the
//! difference of the two column currents. The unused side of each pair sits
//! at `g_min`, which cancels in the difference.
//!
//! Three fidelities share one interface:
//!
//! - `IdealMath`: floating-point products of the unquantized weights.
//! - `CircuitIdeal`: ideal crossbar currents into the nominal neuron's
//!   linear transimpedance, then an ideal comparator.
//! - `CircuitNonIdeal`: nodal crossbar solve with wire resistance, each
//!   neuron's own input impedance and DC offset, mismatched neurons (after
//!   optional SAR calibration) re-solved per input.

pub mod energy;

use serde::{Deserialize, Serialize};

use crate::crossbar::{
    ideal_dissipation, output_currents_ideal, solve_nonideal, ConductanceMatrix, Excitation,
    NonIdealSpec,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::neuron::{small_signal, solve_dc, sweep, transfer_curve, DacCodes, RgcParams};
use crate::sar::{calibrate_array, CalibrationSchedule, CalibrationTarget};
use crate::seed;
use crate::variability::{run_rng, sample_params, MismatchSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Linear,
    /// Digital output `z >= threshold`.
    Threshold {
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// `n_in` rows of `n_out` weights.
    pub weights: Vec<Vec<f64>>,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(weights: Vec<Vec<f64>>, activation: Activation) -> Result<Self> {
        let n_out = weights.first().map_or(0, Vec::len);
        if weights.is_empty() || n_out == 0 {
            return Err(Error::dim("layer needs at least one input and one output"));
        }
        if weights.iter().any(|r| r.len() != n_out) {
            return Err(Error::dim("ragged weight matrix"));
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite weight"));
        }
        Ok(Self {
            weights,
            activation,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weights.len()
    }

    pub fn n_out(&self) -> usize {
        self.weights[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedLayer {
    pub g_plus: ConductanceMatrix,
    pub g_minus: ConductanceMatrix,
    /// Signed quantization level of each weight, row-major.
    pub levels: Vec<i64>,
    pub bits: u32,
    /// Siemens per unit weight.
    pub scale: f64,
    pub g_min: f64,
    pub g_max: f64,
    /// Largest weight magnitude, mapped to `g_max`.
    pub w_max: f64,
    /// Original weights, kept for the floating-point reference path.
    pub weights: Vec<Vec<f64>>,
    pub activation: Activation,
}

impl MappedLayer {
    pub fn n_in(&self) -> usize {
        self.g_plus.n_rows()
    }

    pub fn n_out(&self) -> usize {
        self.g_plus.n_cols()
    }

    fn max_level(&self) -> f64 {
        ((1u64 << self.bits) - 1) as f64
    }

    /// Quantized weight in weight units.
    pub fn quantized(&self, i: usize, j: usize) -> f64 {
        self.levels[i * self.n_out() + j] as f64 * self.w_max / self.max_level()
    }

    /// `(g_plus - g_minus) / scale`.
    pub fn dequantized(&self, i: usize, j: usize) -> f64 {
        (self.g_plus.get(i, j) - self.g_minus.get(i, j)) / self.scale
    }

    /// Half of one quantization step, in weight units.
    pub fn half_lsb(&self) -> f64 {
        0.5 * self.w_max / self.max_level()
    }

    /// Interleaved physical crossbar: column `2j` is `g_plus[:, j]`,
    /// column `2j + 1` is `g_minus[:, j]`.
    pub fn physical(&self) -> ConductanceMatrix {
        let (n_in, n_out) = (self.n_in(), self.n_out());
        let mut g = Vec::with_capacity(n_in * n_out * 2);
        for i in 0..n_in {
            for j in 0..n_out {
                g.push(self.g_plus.get(i, j));
                g.push(self.g_minus.get(i, j));
            }
        }
        ConductanceMatrix::new(n_in, 2 * n_out, g).expect("dimensions follow from the layer")
    }
}

/// Uniform magnitude quantization to `2^bits` levels across `[g_min, g_max]`,
/// rounding to nearest with ties away from zero.
pub fn map_weights(spec: &LayerSpec, bits: u32, g_min: f64, g_max: f64) -> Result<MappedLayer> {
    if !(1..=24).contains(&bits) {
        return Err(Error::invalid(format!("bits {bits} not in [1, 24]")));
    }
    if !(g_min > 0.0 && g_max > g_min && g_max.is_finite()) {
        return Err(Error::invalid("need 0 < g_min < g_max"));
    }
    let (n_in, n_out) = (spec.n_in(), spec.n_out());
    let w_max = spec
        .weights
        .iter()
        .flatten()
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let max_level = ((1u64 << bits) - 1) as f64;
    let step = (g_max - g_min) / max_level;
    let norm = if w_max > 0.0 { max_level / w_max } else { 0.0 };
    let mut levels = Vec::with_capacity(n_in * n_out);
    let mut gp = Vec::with_capacity(n_in * n_out);
    let mut gm = Vec::with_capacity(n_in * n_out);
    for row in &spec.weights {
        for &w in row {
            let level = (w * norm).round();
            let mag = level.abs();
            let g_on = if mag == max_level {
                g_max
            } else {
                g_min + mag * step
            };
            if level >= 0.0 {
                gp.push(g_on);
                gm.push(g_min);
            } else {
                gp.push(g_min);
                gm.push(g_on);
            }
            levels.push(level as i64);
        }
    }
    Ok(MappedLayer {
        g_plus: ConductanceMatrix::new(n_in, n_out, gp)?,
        g_minus: ConductanceMatrix::new(n_in, n_out, gm)?,
        levels,
        bits,
        scale: if w_max > 0.0 {
            (g_max - g_min) / w_max
        } else {
            g_max - g_min
        },
        g_min,
        g_max,
        w_max,
        weights: spec.weights.clone(),
        activation: spec.activation,
    })
}

pub fn map_network(
    layers: &[LayerSpec],
    bits: u32,
    g_min: f64,
    g_max: f64,
) -> Result<Vec<MappedLayer>> {
    for pair in layers.windows(2) {
        if pair[0].n_out() != pair[1].n_in() {
            return Err(Error::dim(format!(
                "layer outputs {} feed a layer with {} inputs",
                pair[0].n_out(),
                pair[1].n_in()
            )));
        }
    }
    layers
        .iter()
        .map(|l| map_weights(l, bits, g_min, g_max))
        .collect()
}

/// Circuit-level settings shared by the circuit fidelities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSetup {
    pub neuron: RgcParams,
    /// Row voltage per unit input, upper bound (V).
    pub v_read: f64,
    /// Largest differential column current a layer may produce (A).
    pub i_max: f64,
    pub target: CalibrationTarget,
}

impl Default for CircuitSetup {
    fn default() -> Self {
        Self {
            neuron: RgcParams::reference(),
            v_read: 0.1,
            i_max: 2e-6,
            target: CalibrationTarget {
                vref_in: 0.65,
                vref_out: 0.92,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonIdealNetwork {
    pub r_wire_row: f64,
    pub r_wire_col: f64,
    pub mismatch: MismatchSpec,
    pub seed: u64,
    /// Run the shared-SAR calibration on every mismatched neuron.
    pub calibrate: bool,
}

impl Default for NonIdealNetwork {
    fn default() -> Self {
        Self {
            r_wire_row: 1.0,
            r_wire_col: 1.0,
            mismatch: MismatchSpec::default(),
            seed: 0,
            calibrate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fidelity {
    IdealMath,
    CircuitIdeal,
    CircuitNonIdeal(NonIdealNetwork),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NeuronInstance {
    params: RgcParams,
    codes: DacCodes,
    /// Input-node offset from the nominal virtual ground (V).
    offset: f64,
    zin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PreparedLayer {
    /// Volts per unit input.
    v_scale: f64,
    /// Bound on |input| used for scaling.
    x_max: f64,
    /// Comparator reference per neuron (V).
    vref_cmp: Vec<f64>,
    neurons: Vec<NeuronInstance>,
}

/// A mapped network ready for repeated inference at one fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedNetwork {
    pub layers: Vec<MappedLayer>,
    pub fidelity: Fidelity,
    pub setup: CircuitSetup,
    /// Quiescent output of the calibrated nominal neuron (V).
    pub v_quiescent: f64,
    /// Transimpedance from the linear fit of the nominal transfer curve (Ω).
    pub transimpedance: f64,
    pub nominal_codes: DacCodes,
    /// Per-neuron calibration failures found while preparing.
    pub calibration_failures: Vec<String>,
    prepared: Vec<PreparedLayer>,
}

/// Result of one inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutput {
    /// Final-layer outputs: bits as 0/1 for threshold layers, values otherwise.
    pub outputs: Vec<f64>,
    /// Comparator decisions per layer (empty for linear layers).
    pub bits: Vec<Vec<bool>>,
    /// Pre-activations per layer in weight units. In circuit modes these are
    /// recovered from the neuron output voltage.
    pub pre_activations: Vec<Vec<f64>>,
    /// Power dissipated in all crossbar cells and wires (W).
    pub crossbar_power: f64,
    pub failures: Vec<String>,
}

impl PreparedNetwork {
    pub fn new(layers: Vec<MappedLayer>, fidelity: Fidelity, setup: CircuitSetup) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("network has no layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::dim("consecutive layer sizes disagree"));
            }
        }
        setup.neuron.validate()?;
        let nominal = setup.neuron;

        // Calibrate the nominal neuron once; its codes serve as the design
        // setting of uncalibrated instances.
        let sched = calibrate_array(&[nominal], CalibrationSchedule::uniform(1, setup.target))?;
        let nom_cal = sched.results[0].clone().expect("one neuron scheduled");
        if !nom_cal.ok() {
            return Err(Error::Sar(format!(
                "nominal neuron calibration failed: {}",
                nom_cal.errors.join("; ")
            )));
        }
        let nominal_codes = nom_cal.codes;
        let v_quiescent = solve_dc(&nominal, 0.0, nominal_codes)?.v_out;
        let tc = transfer_curve(
            &nominal,
            nominal_codes,
            &sweep(0.0, setup.i_max, 11),
            Exec::Sequential,
        );
        if tc.n_infeasible > 0 {
            return Err(Error::invalid(format!(
                "nominal neuron cannot accept ±{:.3e} A input",
                setup.i_max
            )));
        }
        let transimpedance = tc.slope;

        let mut prepared = Vec::with_capacity(layers.len());
        let mut failures = Vec::new();
        let mut x_max = 1.0;
        for (l, layer) in layers.iter().enumerate() {
            let col_sum = (0..layer.n_out())
                .map(|j| {
                    (0..layer.n_in())
                        .map(|i| layer.quantized(i, j).abs())
                        .sum::<f64>()
                })
                .fold(0.0f64, f64::max);
            let worst = layer.scale * col_sum * x_max;
            let v_scale = if worst > 0.0 {
                setup.v_read.min(setup.i_max / worst)
            } else {
                setup.v_read
            };
            let vref_cmp = (0..layer.n_out())
                .map(|_| match layer.activation {
                    Activation::Threshold { threshold } => {
                        v_quiescent + transimpedance * threshold * v_scale * layer.scale
                    }
                    Activation::Linear => v_quiescent,
                })
                .collect();
            let neurons = match &fidelity {
                Fidelity::CircuitNonIdeal(ni) => {
                    let (inst, errs) =
                        instantiate_layer(&setup, ni, l, layer.n_out(), nominal_codes)?;
                    failures.extend(errs);
                    inst
                }
                _ => Vec::new(),
            };
            prepared.push(PreparedLayer {
                v_scale,
                x_max,
                vref_cmp,
                neurons,
            });
            x_max = match layer.activation {
                Activation::Threshold { .. } => 1.0,
                Activation::Linear => col_sum * x_max,
            };
        }
        Ok(Self {
            layers,
            fidelity,
            setup,
            v_quiescent,
            transimpedance,
            nominal_codes,
            calibration_failures: failures,
            prepared,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.layers.iter().map(MappedLayer::n_out).sum()
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in()
    }

    /// Column full scale `Σ_i |w_ij| * x_max` per neuron of each layer.
    pub fn full_scale(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .zip(&self.prepared)
            .map(|(layer, pl)| {
                (0..layer.n_out())
                    .map(|j| {
                        (0..layer.n_in())
                            .map(|i| layer.weights[i][j].abs())
                            .sum::<f64>()
                            * pl.x_max
                    })
                    .collect()
            })
            .collect()
    }

    pub fn infer(&self, input: &[f64]) -> Result<InferenceOutput> {
        if input.len() != self.n_inputs() {
            return Err(Error::dim(format!(
                "{} inputs for a network with {}",
                input.len(),
                self.n_inputs()
            )));
        }
        let mut x = input.to_vec();
        let mut out = InferenceOutput {
            outputs: Vec::new(),
            bits: Vec::new(),
            pre_activations: Vec::new(),
            crossbar_power: 0.0,
            failures: Vec::new(),
        };
        for (l, (layer, pl)) in self.layers.iter().zip(&self.prepared).enumerate() {
            let (z, bits) = match &self.fidelity {
                Fidelity::IdealMath => ideal_math_layer(layer, &x),
                Fidelity::CircuitIdeal => self.circuit_ideal_layer(layer, pl, &x, &mut out)?,
                Fidelity::CircuitNonIdeal(ni) => {
                    self.circuit_nonideal_layer(l, layer, pl, ni, &x, &mut out)?
                }
            };
            x = match layer.activation {
                Activation::Threshold { .. } => {
                    bits.iter().map(|b| f64::from(u8::from(*b))).collect()
                }
                Activation::Linear => z.clone(),
            };
            out.pre_activations.push(z);
            out.bits.push(bits);
        }
        out.outputs = x;
        Ok(out)
    }

    /// Independent inferences, merged in input order.
    pub fn infer_batch(&self, inputs: &[Vec<f64>], exec: Exec) -> Result<Vec<InferenceOutput>> {
        exec.map(inputs.len(), |k| self.infer(&inputs[k]))
            .into_iter()
            .collect()
    }

    fn circuit_ideal_layer(
        &self,
        layer: &MappedLayer,
        pl: &PreparedLayer,
        x: &[f64],
        out: &mut InferenceOutput,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        let v: Vec<f64> = x.iter().map(|xi| xi * pl.v_scale).collect();
        let exc = Excitation::voltages(v);
        let ip = output_currents_ideal(&layer.g_plus, &exc)?;
        let im = output_currents_ideal(&layer.g_minus, &exc)?;
        out.crossbar_power +=
            ideal_dissipation(&layer.g_plus, &exc)? + ideal_dissipation(&layer.g_minus, &exc)?;
        let mut z = Vec::with_capacity(layer.n_out());
        let mut bits = Vec::new();
        for j in 0..layer.n_out() {
            let i_in = ip[j] - im[j];
            let v_out = self.v_quiescent + self.transimpedance * i_in;
            z.push(self.recover(layer, pl, v_out));
            if let Activation::Threshold { .. } = layer.activation {
                bits.push(v_out >= pl.vref_cmp[j]);
            }
        }
        Ok((z, bits))
    }

    fn circuit_nonideal_layer(
        &self,
        l: usize,
        layer: &MappedLayer,
        pl: &PreparedLayer,
        ni: &NonIdealNetwork,
        x: &[f64],
        out: &mut InferenceOutput,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        let v: Vec<f64> = x.iter().map(|xi| xi * pl.v_scale).collect();
        let phys = layer.physical();
        let spec = NonIdealSpec {
            r_wire_row: ni.r_wire_row,
            r_wire_col: ni.r_wire_col,
            r_neuron_in: pl.neurons.iter().flat_map(|n| [n.zin, n.zin]).collect(),
            v_neuron_offset: pl
                .neurons
                .iter()
                .flat_map(|n| [n.offset, n.offset])
                .collect(),
        };
        let sol = solve_nonideal(&phys, &Excitation::voltages(v), &spec)?;
        out.crossbar_power += sol.dissipated;
        let mut z = Vec::with_capacity(layer.n_out());
        let mut bits = Vec::new();
        for (j, n) in pl.neurons.iter().enumerate() {
            let i_in = sol.currents[2 * j] - sol.currents[2 * j + 1];
            let v_out = match solve_dc(&n.params, i_in, n.codes) {
                Ok(op) => op.v_out,
                Err(e) => {
                    out.failures.push(format!("layer {l} neuron {j}: {e}"));
                    // An unsolvable neuron reads as its quiescent level.
                    self.v_quiescent
                }
            };
            z.push(self.recover(layer, pl, v_out));
            if let Activation::Threshold { .. } = layer.activation {
                bits.push(v_out >= pl.vref_cmp[j]);
            }
        }
        Ok((z, bits))
    }

    fn recover(&self, layer: &MappedLayer, pl: &PreparedLayer, v_out: f64) -> f64 {
        (v_out - self.v_quiescent) / (self.transimpedance * pl.v_scale * layer.scale)
    }
}

fn ideal_math_layer(layer: &MappedLayer, x: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut z = vec![0.0; layer.n_out()];
    for (xi, row) in x.iter().zip(&layer.weights) {
        for (acc, w) in z.iter_mut().zip(row) {
            *acc += xi * w;
        }
    }
    let bits = match layer.activation {
        Activation::Threshold { threshold } => z.iter().map(|v| *v >= threshold).collect(),
        Activation::Linear => Vec::new(),
    };
    (z, bits)
}

fn instantiate_layer(
    setup: &CircuitSetup,
    ni: &NonIdealNetwork,
    layer: usize,
    n: usize,
    nominal_codes: DacCodes,
) -> Result<(Vec<NeuronInstance>, Vec<String>)> {
    let net_seed = seed::split(ni.seed, seed::streams::NETWORK_MISMATCH);
    let params: Vec<RgcParams> = (0..n)
        .map(|j| {
            let mut rng = run_rng(net_seed, ((layer as u64) << 32) | j as u64);
            sample_params(&setup.neuron, &ni.mismatch, &mut rng)
        })
        .collect();
    let mut errors = Vec::new();
    let codes: Vec<DacCodes> = if ni.calibrate {
        let sched = calibrate_array(&params, CalibrationSchedule::uniform(n, setup.target))?;
        sched
            .results
            .iter()
            .map(|r| {
                let r = r.as_ref().expect("scheduled");
                if !r.ok() {
                    errors.push(format!(
                        "layer {layer} neuron {}: {}",
                        r.neuron_id,
                        r.errors.join("; ")
                    ));
                }
                r.codes
            })
            .collect()
    } else {
        vec![nominal_codes; n]
    };
    let mut out = Vec::with_capacity(n);
    for (j, (p, c)) in params.into_iter().zip(codes).enumerate() {
        let op = solve_dc(&p, 0.0, c).map_err(|e| {
            Error::from(e).context(format!("layer {layer} neuron {j} quiescent point"))
        })?;
        let zin = small_signal(&p, &op).map(|s| s.zin).unwrap_or(0.0);
        out.push(NeuronInstance {
            params: p,
            codes: c,
            offset: op.v_in - setup.target.vref_in,
            zin,
        });
    }
    Ok((out, errors))
}

/// Fraction of threshold decisions in `a` matching `b`, over all layers.
pub fn bit_agreement(a: &InferenceOutput, b: &InferenceOutput) -> (usize, usize) {
    let mut same = 0;
    let mut total = 0;
    for (la, lb) in a.bits.iter().zip(&b.bits) {
        for (x, y) in la.iter().zip(lb) {
            total += 1;
            same += usize::from(x == y);
        }
    }
    (same, total)
}

/// Smallest `|z - threshold| / full_scale` over every threshold neuron of an
/// `IdealMath` result; inputs below a margin are knife-edge cases.
pub fn decision_margin(net: &PreparedNetwork, ideal: &InferenceOutput) -> f64 {
    let fs = net.full_scale();
    let mut m = f64::INFINITY;
    for ((layer, z), fs) in net.layers.iter().zip(&ideal.pre_activations).zip(&fs) {
        if let Activation::Threshold { threshold } = layer.activation {
            for (zj, f) in z.iter().zip(fs) {
                if *f > 0.0 {
                    m = m.min((zj - threshold).abs() / f);
                }
            }
        }
    }
    m
}
