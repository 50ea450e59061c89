//! Successive-approximation search.
//!
//! Two forms live here. The normalized recurrence
//! `x_i = x_{i-1} - s(x_{i-1} - x) / 2^i` with `x_0 = 0` and `s(0) = +1`
//! approximates `x` in `[-1, 1]` to within `2^-n` after `n` steps. The
//! circuit-facing form drives a binary-weighted DAC code MSB-first against a
//! monotone plant (code -> node voltage) and an ideal comparator.
//!
//! The array scheduler calibrates one neuron at a time through a shared SAR:
//! every input node first, then every output node (or interleaved per
//! neuron when configured).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{solve_dc, DacCodes, RgcParams};

/// `+1` for `v >= 0`, `-1` otherwise.
#[inline]
pub fn signum(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// One step of the normalized recurrence, `i >= 1`.
#[inline]
pub fn sar_normalized_step(x_prev: f64, x: f64, i: u32) -> f64 {
    debug_assert!(i >= 1);
    x_prev - signum(x_prev - x) / 2f64.powi(i as i32)
}

/// State of the normalized recurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedSar {
    pub x: f64,
    pub x_i: f64,
    pub i: u32,
}

impl NormalizedSar {
    pub fn new(x: f64) -> Self {
        Self { x, x_i: 0.0, i: 0 }
    }

    pub fn step(&mut self) -> f64 {
        self.i += 1;
        self.x_i = sar_normalized_step(self.x_i, self.x, self.i);
        self.x_i
    }

    /// `2^-i`, the guaranteed error bound after `i >= 1` steps.
    pub fn bound(&self) -> f64 {
        2f64.powi(-(self.i as i32))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrace {
    pub x_n: f64,
    /// `x_1 ..= x_n`.
    pub trajectory: Vec<f64>,
}

pub fn sar_normalized_converge(x: f64, n: u32) -> NormalizedTrace {
    let mut s = NormalizedSar::new(x);
    let trajectory: Vec<f64> = (0..n).map(|_| s.step()).collect();
    NormalizedTrace {
        x_n: s.x_i,
        trajectory,
    }
}

/// Max `|x_n - x|` over an evenly spaced grid of `points` values in `[-1, 1]`,
/// for each `n` in `1..=max_n`. Index `n - 1` holds the result for `n`.
pub fn normalized_grid_max_error(points: usize, max_n: u32) -> Vec<f64> {
    let mut worst = vec![0.0f64; max_n as usize];
    for k in 0..points {
        let x = if points == 1 {
            0.0
        } else {
            -1.0 + 2.0 * k as f64 / (points - 1) as f64
        };
        let t = sar_normalized_converge(x, max_n);
        for (w, xi) in worst.iter_mut().zip(&t.trajectory) {
            *w = w.max((xi - x).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SarPhase {
    Idle,
    Converging,
    Done,
}

/// The N-bit successive-approximation register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SarState {
    pub nbits: u32,
    /// Number of bits already decided; the trial bit is `nbits - 1 - bit_index`.
    pub bit_index: u32,
    pub code: u32,
    pub phase: SarPhase,
}

impl SarState {
    pub fn new(nbits: u32) -> Self {
        assert!((1..=24).contains(&nbits));
        Self {
            nbits,
            bit_index: 0,
            code: 0,
            phase: SarPhase::Idle,
        }
    }

    /// Sets the register to midscale (MSB only).
    pub fn start(&mut self) {
        self.bit_index = 0;
        self.code = 1 << (self.nbits - 1);
        self.phase = SarPhase::Converging;
    }

    pub fn trial_bit(&self) -> Option<u32> {
        (self.phase == SarPhase::Converging).then(|| self.nbits - 1 - self.bit_index)
    }

    /// Applies one comparator decision to the trial bit and moves down.
    pub fn decide(&mut self, keep: bool) {
        let bit = self.trial_bit().expect("decide() outside a conversion");
        if !keep {
            self.code &= !(1 << bit);
        }
        self.bit_index += 1;
        if bit == 0 {
            self.phase = SarPhase::Done;
        } else {
            self.code |= 1 << (bit - 1);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Larger codes raise the plant output.
    Increasing,
    /// Larger codes lower the plant output.
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rail {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SarOptions {
    /// Added to the plant output before comparison (V).
    pub comparator_offset: f64,
    /// Sweep every code before converting to detect non-monotone plants and
    /// decide range exactly. These evaluations are diagnostics, not
    /// comparator cycles.
    pub verify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarStep {
    pub bit: u32,
    pub trial_code: u32,
    pub plant: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarOutcome {
    pub code: u32,
    pub comparisons: usize,
    pub transcript: Vec<SarStep>,
    /// Set when the search ended at code 0 or full scale.
    pub rail: Option<Rail>,
    /// True when the reference is known to lie outside the plant range.
    pub out_of_range: bool,
}

impl SarOutcome {
    /// `step,bit,trial_code,plant_v,kept`
    pub fn transcript_csv(&self) -> String {
        let mut s = String::from("step,bit,trial_code,plant_v,kept\n");
        for (k, st) in self.transcript.iter().enumerate() {
            s.push_str(&format!(
                "{k},{},{},{:.17e},{}\n",
                st.bit, st.trial_code, st.plant, st.kept as u8
            ));
        }
        s
    }
}

/// MSB-first search for the code that brings `plant(code)` to `vref`.
///
/// With an increasing plant a trial bit is cleared when the plant output
/// exceeds the reference, so the result is the largest code whose output
/// does not exceed `vref` (the mirror image for decreasing plants). Exactly
/// `nbits` plant evaluations are made outside verify mode.
pub fn sar_calibrate<F>(
    mut plant: F,
    vref: f64,
    nbits: u32,
    direction: Direction,
    opts: SarOptions,
) -> Result<SarOutcome>
where
    F: FnMut(u32) -> Result<f64>,
{
    if !vref.is_finite() {
        return Err(Error::invalid("non-finite reference voltage"));
    }
    if !(1..=24).contains(&nbits) {
        return Err(Error::invalid(format!("nbits {nbits} not in [1, 24]")));
    }
    let max_code = (1u32 << nbits) - 1;
    let mut range_low = None;
    if opts.verify {
        let values = (0..=max_code).map(&mut plant).collect::<Result<Vec<_>>>()?;
        for c in 0..max_code as usize {
            let ok = match direction {
                Direction::Increasing => values[c + 1] > values[c],
                Direction::Decreasing => values[c + 1] < values[c],
            };
            if !ok {
                return Err(Error::Sar(format!(
                    "plant not strictly {direction:?} between codes {c} and {}",
                    c + 1
                )));
            }
        }
        range_low = Some(match direction {
            Direction::Increasing => vref < values[0],
            Direction::Decreasing => vref > values[0],
        });
    }

    let mut reg = SarState::new(nbits);
    reg.start();
    let mut transcript = Vec::with_capacity(nbits as usize);
    while let Some(bit) = reg.trial_bit() {
        let trial_code = reg.code;
        let v = plant(trial_code)? + opts.comparator_offset;
        let keep = match direction {
            Direction::Increasing => v <= vref,
            Direction::Decreasing => v >= vref,
        };
        transcript.push(SarStep {
            bit,
            trial_code,
            plant: v,
            kept: keep,
        });
        reg.decide(keep);
    }
    let code = reg.code;
    let rail = if code == 0 {
        Some(Rail::Low)
    } else if code == max_code {
        Some(Rail::High)
    } else {
        None
    };
    let out_of_range = match rail {
        Some(Rail::High) => {
            let last = transcript.last().map(|s| s.plant).unwrap_or(vref);
            match direction {
                Direction::Increasing => last < vref,
                Direction::Decreasing => last > vref,
            }
        }
        Some(Rail::Low) => range_low.unwrap_or(false),
        None => false,
    };
    Ok(SarOutcome {
        code,
        comparisons: transcript.len(),
        transcript,
        rail,
        out_of_range,
    })
}

/// Exhaustive oracle: the code minimizing `|plant(code) - vref|`.
pub fn exhaustive_best_code<F>(mut plant: F, vref: f64, nbits: u32) -> Result<u32>
where
    F: FnMut(u32) -> Result<f64>,
{
    let mut best = (0u32, f64::INFINITY);
    for c in 0..(1u32 << nbits) {
        let d = (plant(c)? - vref).abs();
        if d < best.1 {
            best = (c, d);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub vref_in: f64,
    pub vref_out: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassOrder {
    /// All input nodes, then all output nodes.
    #[default]
    InputThenOutput,
    /// Input then output for each neuron before moving on.
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronCalibration {
    pub neuron_id: usize,
    pub codes: DacCodes,
    /// Input node after the input pass (V).
    pub v_in_calibrated: Option<f64>,
    /// Input node after both passes (V).
    pub v_in: Option<f64>,
    pub v_out: Option<f64>,
    /// Change of the input node caused by the output calibration (V).
    pub v_in_drift: Option<f64>,
    pub comparisons: usize,
    pub rail_in: Option<Rail>,
    pub rail_out: Option<Rail>,
    pub errors: Vec<String>,
}

impl NeuronCalibration {
    fn new(neuron_id: usize) -> Self {
        Self {
            neuron_id,
            codes: DacCodes::default(),
            v_in_calibrated: None,
            v_in: None,
            v_out: None,
            v_in_drift: None,
            comparisons: 0,
            rail_in: None,
            rail_out: None,
            errors: Vec::new(),
        }
    }

    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// One-active-neuron calibration sequence over an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSchedule {
    pub neuron_ids: Vec<usize>,
    /// Position in `neuron_ids` of the neuron currently connected to the SAR.
    pub active_index: Option<usize>,
    pub targets: Vec<CalibrationTarget>,
    pub results: Vec<Option<NeuronCalibration>>,
    pub order: PassOrder,
    pub directions: (Direction, Direction),
    pub options: SarOptions,
    /// `(neuron_id, node)` in activation order.
    pub activations: Vec<(usize, Node)>,
}

impl CalibrationSchedule {
    /// Schedule visiting neurons `0..n` in order, all with the same targets.
    pub fn uniform(n: usize, target: CalibrationTarget) -> Self {
        Self::new((0..n).collect(), vec![target; n])
    }

    pub fn new(neuron_ids: Vec<usize>, targets: Vec<CalibrationTarget>) -> Self {
        let n = neuron_ids.len();
        Self {
            neuron_ids,
            active_index: None,
            targets,
            results: vec![None; n],
            order: PassOrder::default(),
            directions: (Direction::Increasing, Direction::Increasing),
            options: SarOptions::default(),
            activations: Vec::new(),
        }
    }

    pub fn with_order(mut self, order: PassOrder) -> Self {
        self.order = order;
        self
    }

    /// Calibration result for a neuron id.
    pub fn result_for(&self, id: usize) -> Option<&NeuronCalibration> {
        self.results.iter().flatten().find(|r| r.neuron_id == id)
    }

    pub fn total_comparisons(&self) -> usize {
        self.results.iter().flatten().map(|r| r.comparisons).sum()
    }
}

/// Runs the shared SAR over the array. `neurons[id]` is the circuit of the
/// neuron with that id. Failures are recorded per neuron; the remaining
/// neurons are still processed. The SAR width is each DAC's bit count.
pub fn calibrate_array(
    neurons: &[RgcParams],
    mut schedule: CalibrationSchedule,
) -> Result<CalibrationSchedule> {
    if schedule.targets.len() != schedule.neuron_ids.len() {
        return Err(Error::dim("one calibration target per scheduled neuron"));
    }
    if let Some(&bad) = schedule.neuron_ids.iter().find(|&&id| id >= neurons.len()) {
        return Err(Error::dim(format!(
            "neuron id {bad} not in array of {}",
            neurons.len()
        )));
    }
    schedule.results = schedule
        .neuron_ids
        .iter()
        .map(|&id| Some(NeuronCalibration::new(id)))
        .collect();
    schedule.activations.clear();

    let n = schedule.neuron_ids.len();
    let steps: Vec<(usize, Node)> = match schedule.order {
        PassOrder::InputThenOutput => (0..n)
            .map(|k| (k, Node::Input))
            .chain((0..n).map(|k| (k, Node::Output)))
            .collect(),
        PassOrder::Interleaved => (0..n)
            .flat_map(|k| [(k, Node::Input), (k, Node::Output)])
            .collect(),
    };
    for (k, node) in steps {
        schedule.active_index = Some(k);
        let id = schedule.neuron_ids[k];
        schedule.activations.push((id, node));
        let p = &neurons[id];
        let target = schedule.targets[k];
        let (dir_in, dir_out) = schedule.directions;
        let opts = schedule.options;
        let res = schedule.results[k].as_mut().expect("initialized above");
        match node {
            Node::Input => {
                let out_code = res.codes.output;
                let sar = sar_calibrate(
                    |c| Ok(solve_dc(p, 0.0, DacCodes::new(c, out_code))?.v_in),
                    target.vref_in,
                    p.dac.nbits,
                    dir_in,
                    opts,
                );
                match sar {
                    Ok(o) => {
                        res.codes.input = o.code;
                        res.comparisons += o.comparisons;
                        res.rail_in = o.rail;
                        match solve_dc(p, 0.0, res.codes) {
                            Ok(op) => res.v_in_calibrated = Some(op.v_in),
                            Err(e) => res.errors.push(format!("input settle: {e}")),
                        }
                    }
                    Err(e) => res.errors.push(format!("input: {e}")),
                }
            }
            Node::Output => {
                let in_code = res.codes.input;
                let sar = sar_calibrate(
                    |c| Ok(solve_dc(p, 0.0, DacCodes::new(in_code, c))?.v_out),
                    target.vref_out,
                    p.dac_out.nbits,
                    dir_out,
                    opts,
                );
                match sar {
                    Ok(o) => {
                        res.codes.output = o.code;
                        res.comparisons += o.comparisons;
                        res.rail_out = o.rail;
                    }
                    Err(e) => res.errors.push(format!("output: {e}")),
                }
                // Re-settle both nodes once; the input drift is reported, not iterated.
                match solve_dc(p, 0.0, res.codes) {
                    Ok(op) => {
                        res.v_in = Some(op.v_in);
                        res.v_out = Some(op.v_out);
                        res.v_in_drift = res.v_in_calibrated.map(|v| op.v_in - v);
                    }
                    Err(e) => res.errors.push(format!("output settle: {e}")),
                }
            }
        }
    }
    schedule.active_index = None;
    Ok(schedule)
}

/// `n_neurons * nodes_per_neuron * nbits * t_step`: one comparison period
/// per bit per node, one neuron at a time.
pub fn calibration_latency(
    n_neurons: usize,
    nodes_per_neuron: usize,
    nbits: u32,
    t_step: f64,
) -> f64 {
    n_neurons as f64 * nodes_per_neuron as f64 * nbits as f64 * t_step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recurrence_examples() {
        assert_eq!(sar_normalized_step(0.0, 0.3, 1), 0.5);
        assert_eq!(sar_normalized_step(0.5, 0.3, 2), 0.25);
        // s(0) = +1
        assert_eq!(sar_normalized_step(0.3, 0.3, 3), 0.3 - 0.125);
    }

    #[test]
    fn four_step_convergence() {
        let t = sar_normalized_converge(0.3, 4);
        assert_eq!(t.trajectory, vec![0.5, 0.25, 0.375, 0.3125]);
        assert_eq!(t.x_n, 0.3125);
        assert!((t.x_n - 0.3).abs() <= 1.0 / 16.0);
    }

    #[test]
    fn symmetric_point() {
        let t = sar_normalized_converge(0.0, 8);
        assert!(t.x_n.abs() <= 1.0 / 256.0);
    }

    #[test]
    fn register_walks_msb_first() {
        let mut r = SarState::new(4);
        assert_eq!(r.phase, SarPhase::Idle);
        r.start();
        assert_eq!(r.code, 0b1000);
        assert_eq!(r.trial_bit(), Some(3));
        r.decide(false);
        assert_eq!(r.code, 0b0100);
        r.decide(true);
        assert_eq!(r.code, 0b0110);
        r.decide(false);
        assert_eq!(r.code, 0b0101);
        r.decide(false);
        assert_eq!(r.code, 0b0100);
        assert_eq!(r.phase, SarPhase::Done);
        assert_eq!(r.bit_index, 4);
        assert_eq!(r.trial_bit(), None);
    }

    #[test]
    fn linear_plant_example() {
        let o = sar_calibrate(
            |c| Ok(c as f64 / 16.0),
            0.3,
            4,
            Direction::Increasing,
            SarOptions::default(),
        )
        .unwrap();
        assert_eq!(o.code, 4);
        let trials: Vec<u32> = o.transcript.iter().map(|s| s.trial_code).collect();
        assert_eq!(trials, vec![8, 4, 6, 5]);
        assert_eq!(o.comparisons, 4);
        assert!((0.25f64 - 0.3).abs() <= 0.0625);
    }

    #[test]
    fn lower_boundary() {
        let o = sar_calibrate(
            |c| Ok(c as f64 / 16.0),
            0.0,
            4,
            Direction::Increasing,
            SarOptions {
                verify: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(o.code, 0);
        assert_eq!(o.rail, Some(Rail::Low));
        assert!(!o.out_of_range);
    }

    #[test]
    fn out_of_range_flags() {
        let hi = sar_calibrate(
            |c| Ok(c as f64),
            100.0,
            4,
            Direction::Increasing,
            SarOptions::default(),
        )
        .unwrap();
        assert_eq!(hi.code, 15);
        assert!(hi.out_of_range);
        let lo = sar_calibrate(
            |c| Ok(c as f64 + 1.0),
            0.0,
            4,
            Direction::Increasing,
            SarOptions {
                verify: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(lo.code, 0);
        assert!(lo.out_of_range);
    }

    #[test]
    fn decreasing_plant() {
        let o = sar_calibrate(
            |c| Ok(1.0 - c as f64 / 16.0),
            0.7,
            4,
            Direction::Decreasing,
            SarOptions::default(),
        )
        .unwrap();
        // largest code with plant >= 0.7: 1 - 4/16 = 0.75, 1 - 5/16 = 0.6875
        assert_eq!(o.code, 4);
    }

    #[test]
    fn verify_detects_non_monotone_plant() {
        let r = sar_calibrate(
            |c| Ok(if c == 5 { 0.0 } else { c as f64 }),
            3.0,
            4,
            Direction::Increasing,
            SarOptions {
                verify: true,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::Sar(_))));
    }

    #[test]
    fn comparator_offset_shifts_decision() {
        let o = sar_calibrate(
            |c| Ok(c as f64 / 16.0),
            0.3,
            4,
            Direction::Increasing,
            SarOptions {
                comparator_offset: -0.1,
                verify: false,
            },
        )
        .unwrap();
        // plant - 0.1 <= 0.3  <=>  plant <= 0.4: code 6
        assert_eq!(o.code, 6);
    }

    #[test]
    fn latency_examples() {
        assert!((calibration_latency(1, 1, 4, 1e-6) - 4e-6).abs() < 1e-18);
        assert!((calibration_latency(16, 2, 6, 100e-9) - 19.2e-6).abs() < 1e-15);
        assert_eq!(calibration_latency(0, 2, 6, 1e-6), 0.0);
    }

    #[test]
    fn transcript_csv_header() {
        let o = sar_calibrate(
            |c| Ok(c as f64),
            3.0,
            2,
            Direction::Increasing,
            SarOptions::default(),
        )
        .unwrap();
        let csv = o.transcript_csv();
        assert!(csv.starts_with("step,bit,trial_code,plant_v,kept\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
