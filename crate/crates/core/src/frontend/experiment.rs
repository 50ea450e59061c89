//! Experiment dispatch: config in, [`ReportRecord`] out.

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::crossbar::{
    ideal_dissipation, output_currents_ideal, solve_nonideal, Excitation, NonIdealSpec,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::network::energy::{energy_estimate, RunRecord};
use crate::network::{
    bit_agreement, decision_margin, map_network, CircuitSetup, Fidelity, NonIdealNetwork,
    PreparedNetwork,
};
use crate::neuron::{
    gain_numeric, rout_numeric, small_signal, solve_dc, sweep, transfer_curve, zin_numeric,
    DacCodes, RgcParams,
};
use crate::report::{ExperimentKind, ReportRecord, Table};
use crate::sar::{
    calibrate_array, calibration_latency, normalized_grid_max_error, CalibrationSchedule,
    CalibrationTarget,
};
use crate::seed;
use crate::variability::{run_mc, run_rng, sample_params, McConfig};

use super::config::{FidelityKind, InputSource, NetworkConfig, SimConfig};
use super::ConfigError;

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn target(cfg: &SimConfig) -> CalibrationTarget {
    CalibrationTarget {
        vref_in: cfg.sar.vref_in,
        vref_out: cfg.sar.vref_out,
    }
}

pub fn run_experiment(cfg: &SimConfig, kind: ExperimentKind) -> Result<ReportRecord> {
    let (payload, table) = match kind {
        ExperimentKind::Op => op(cfg),
        ExperimentKind::SmallSignal => small(cfg),
        ExperimentKind::Sar => sar(cfg),
        ExperimentKind::Mc => mc(cfg),
        ExperimentKind::Infer => infer(cfg),
        ExperimentKind::Energy => energy(cfg),
    }
    .map_err(|e| match e {
        e @ Error::Config(_) => e,
        e => e.context(format!("{} experiment", kind.name())),
    })?;
    Ok(ReportRecord {
        kind,
        inputs_digest: cfg.digest(),
        payload,
        table,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
    })
}

/// Codes from the `op` section, or from calibrating the nominal neuron.
fn op_codes(cfg: &SimConfig) -> Result<DacCodes> {
    if !cfg.op.calibrate {
        return Ok(DacCodes::new(cfg.op.code_in, cfg.op.code_out));
    }
    let sched = calibrate_array(&[cfg.neuron], CalibrationSchedule::uniform(1, target(cfg)))?;
    let r = sched.results[0].as_ref().expect("scheduled");
    if !r.ok() {
        return Err(Error::Sar(r.errors.join("; ")));
    }
    Ok(r.codes)
}

fn op(cfg: &SimConfig) -> Result<(Value, Option<Table>)> {
    let codes = op_codes(cfg)?;
    let point = solve_dc(&cfg.neuron, cfg.op.i_in, codes)?;
    let tc = transfer_curve(
        &cfg.neuron,
        codes,
        &sweep(cfg.op.i_in, cfg.op.sweep_half, cfg.op.sweep_points.max(2)),
        Exec::Parallel,
    );
    let table = Table {
        header: vec!["i_in".into(), "v_out".into()],
        rows: tc
            .points
            .iter()
            .map(|p| vec![json!(p.i_in), p.v_out.map_or(Value::Null, |v| json!(v))])
            .collect(),
    };
    let payload = json!({
        "operating_point": to_json(&point),
        "transfer": {
            "slope": tc.slope,
            "intercept": tc.intercept,
            "max_fit_deviation": tc.max_fit_deviation,
            "n_infeasible": tc.n_infeasible,
        },
    });
    Ok((payload, Some(table)))
}

fn small(cfg: &SimConfig) -> Result<(Value, Option<Table>)> {
    let codes = op_codes(cfg)?;
    let p = &cfg.neuron;
    let point = solve_dc(p, cfg.op.i_in, codes)?;
    let hand = small_signal(p, &point)?;
    let dv = 1e-4;
    let payload = json!({
        "operating_point": to_json(&point),
        "formula": to_json(&hand),
        "numeric": {
            "a": gain_numeric(p, &point, dv),
            "zin": zin_numeric(p, codes, cfg.op.i_in, 1e-9).ok(),
            "rout": rout_numeric(p, &point, dv),
        },
    });
    Ok((payload, None))
}

fn array_neurons(cfg: &SimConfig) -> Vec<RgcParams> {
    let n = cfg.sar.n_neurons;
    if n == 1 {
        return vec![cfg.neuron];
    }
    let s = seed::split(cfg.seed, seed::streams::SAR_ARRAY);
    (0..n)
        .map(|k| sample_params(&cfg.neuron, &cfg.mismatch, &mut run_rng(s, k as u64)))
        .collect()
}

fn sar(cfg: &SimConfig) -> Result<(Value, Option<Table>)> {
    let errs = normalized_grid_max_error(cfg.sar.grid_points, cfg.sar.grid_max_n);
    let bound_holds = errs
        .iter()
        .enumerate()
        .all(|(k, e)| *e <= 0.5f64.powi(k as i32 + 1));
    let neurons = array_neurons(cfg);
    let mut sched =
        CalibrationSchedule::uniform(neurons.len(), target(cfg)).with_order(cfg.sar.order);
    sched.options.comparator_offset = cfg.sar.comparator_offset;
    sched.options.verify = cfg.sar.verify;
    let done = calibrate_array(&neurons, sched)?;
    let bits = cfg.neuron.dac.nbits.max(cfg.neuron.dac_out.nbits);
    let table = Table {
        header: [
            "neuron_id",
            "code_in",
            "code_out",
            "v_in",
            "v_out",
            "comparisons",
        ]
        .map(String::from)
        .to_vec(),
        rows: done
            .results
            .iter()
            .flatten()
            .map(|r| {
                vec![
                    json!(r.neuron_id),
                    json!(r.codes.input),
                    json!(r.codes.output),
                    r.v_in.map_or(Value::Null, |v| json!(v)),
                    r.v_out.map_or(Value::Null, |v| json!(v)),
                    json!(r.comparisons),
                ]
            })
            .collect(),
    };
    let payload = json!({
        "grid": {
            "points": cfg.sar.grid_points,
            "max_error": errs,
            "max_error_overall": errs.iter().copied().fold(0.0, f64::max),
            "bound_holds": bound_holds,
        },
        "calibration": {
            "results": to_json(&done.results),
            "total_comparisons": done.total_comparisons(),
            "latency_s": calibration_latency(neurons.len(), 2, bits, cfg.sar.t_step),
        },
    });
    Ok((payload, Some(table)))
}

fn mc(cfg: &SimConfig) -> Result<(Value, Option<Table>)> {
    let study = seed::split(cfg.seed, seed::streams::MONTE_CARLO);
    let mut m = McConfig::new(cfg.mc.runs, study, cfg.sar.vref_in);
    m.calibrate = cfg.mc.calibrate;
    m.vref_out = Some(cfg.sar.vref_out);
    m.sar.comparator_offset = cfg.sar.comparator_offset;
    m.sar.verify = cfg.sar.verify;
    let r = run_mc(&cfg.neuron, &cfg.mismatch, &m)?;
    let table = Table {
        header: ["run_index", "v_in_pre", "v_in_post", "code"]
            .map(String::from)
            .to_vec(),
        rows: r
            .samples
            .iter()
            .map(|s| {
                vec![
                    json!(s.run_index),
                    json!(s.v_in_pre),
                    s.v_in_post.map_or(Value::Null, |v| json!(v)),
                    s.code.map_or(Value::Null, |c| json!(c)),
                ]
            })
            .collect(),
    };
    let payload = json!({
        "n_runs": r.n_runs,
        "excluded": to_json(&r.excluded),
        "v_in_pre": to_json(&r.v_in_pre),
        "v_in_post": to_json(&r.v_in_post),
        "v_out_pre": to_json(&r.v_out_pre),
        "v_out_post": to_json(&r.v_out_post),
        "n_out_of_range": r.n_out_of_range,
        "reduction": to_json(&r.reduction()),
    });
    Ok((payload, Some(table)))
}

fn prepare(
    cfg: &SimConfig,
    net: &NetworkConfig,
    fidelity: FidelityKind,
) -> Result<PreparedNetwork> {
    let layers = map_network(&net.layers, net.bits, net.g_min, net.g_max)?;
    let fid = match fidelity {
        FidelityKind::IdealMath => Fidelity::IdealMath,
        FidelityKind::CircuitIdeal => Fidelity::CircuitIdeal,
        FidelityKind::CircuitNonideal => Fidelity::CircuitNonIdeal(NonIdealNetwork {
            r_wire_row: net.r_wire_row,
            r_wire_col: net.r_wire_col,
            mismatch: cfg.mismatch,
            seed: cfg.seed,
            calibrate: net.calibrate,
        }),
    };
    let setup = CircuitSetup {
        neuron: cfg.neuron,
        v_read: net.v_read,
        i_max: net.i_max,
        target: target(cfg),
    };
    PreparedNetwork::new(layers, fid, setup)
}

fn network_inputs(cfg: &SimConfig, net: &NetworkConfig) -> Vec<Vec<f64>> {
    match &net.inputs {
        InputSource::Explicit(rows) => rows.clone(),
        InputSource::Random(n) => {
            let mut rng = seed::rng(cfg.seed, seed::streams::NETWORK_INPUTS);
            let n_in = net.layers[0].n_in();
            (0..*n)
                .map(|_| (0..n_in).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect()
        }
    }
}

fn infer(cfg: &SimConfig) -> Result<(Value, Option<Table>)> {
    let net = cfg
        .network
        .as_ref()
        .ok_or_else(|| ConfigError::MissingSection("network".into()))?;
    let inputs = network_inputs(cfg, net);
    let sim = prepare(cfg, net, net.fidelity)?;
    let reference = prepare(cfg, net, FidelityKind::IdealMath)?;
    let got = sim.infer_batch(&inputs, Exec::Parallel)?;
    let want = reference.infer_batch(&inputs, Exec::Parallel)?;
    let (mut same, mut total, mut same_m, mut total_m) = (0, 0, 0, 0);
    let mut table = Table {
        header: ["input_index", "layer", "neuron", "pre_activation", "bit"]
            .map(String::from)
            .to_vec(),
        rows: Vec::new(),
    };
    let mut per_input = Vec::with_capacity(inputs.len());
    for (k, (g, w)) in got.iter().zip(&want).enumerate() {
        let (s, t) = bit_agreement(g, w);
        same += s;
        total += t;
        let margin = decision_margin(&reference, w);
        if margin > 0.02 {
            same_m += s;
            total_m += t;
        }
        for (l, z) in g.pre_activations.iter().enumerate() {
            for (j, zj) in z.iter().enumerate() {
                let bit = g.bits[l]
                    .get(j)
                    .map_or(Value::Null, |b| json!(u8::from(*b)));
                table
                    .rows
                    .push(vec![json!(k), json!(l), json!(j), json!(zj), bit]);
            }
        }
        per_input.push(json!({
            "outputs": g.outputs,
            "reference_outputs": w.outputs,
            "margin": if margin.is_finite() { json!(margin) } else { Value::Null },
            "failures": g.failures,
        }));
    }
    let frac = |s: usize, t: usize| {
        if t > 0 {
            json!(s as f64 / t as f64)
        } else {
            Value::Null
        }
    };
    let payload = json!({
        "fidelity": to_json(&net.fidelity),
        "n_inputs": inputs.len(),
        "bit_agreement": frac(same, total),
        "bit_agreement_margin_filtered": frac(same_m, total_m),
        "n_bits_compared": total,
        "transimpedance_ohm": sim.transimpedance,
        "v_quiescent": sim.v_quiescent,
        "calibration_failures": sim.calibration_failures,
        "results": per_input,
    });
    Ok((payload, Some(table)))
}

fn energy(cfg: &SimConfig) -> Result<(Value, Option<Table>)> {
    let nbits = cfg.neuron.dac.nbits.max(cfg.neuron.dac_out.nbits);
    let (run, source) = if let Some(net) = &cfg.network {
        let inputs = network_inputs(cfg, net);
        if inputs.is_empty() {
            return Err(Error::invalid("energy needs at least one network input"));
        }
        let sim = prepare(cfg, net, net.fidelity)?;
        let outs = sim.infer_batch(&inputs, Exec::Parallel)?;
        (RunRecord::from_inference(&sim, &outs, nbits), "network")
    } else if let Some(xb) = &cfg.crossbar {
        let exc = Excitation {
            mode: xb.mode,
            values: xb.inputs.clone(),
        };
        let ideal = xb.r_wire_row == 0.0 && xb.r_wire_col == 0.0 && xb.r_neuron_in == 0.0;
        let power = if ideal {
            // Current mode dissipation follows from the row voltages it sets.
            let _ = output_currents_ideal(&xb.g, &exc)?;
            ideal_dissipation(&xb.g, &exc)?
        } else {
            let spec = NonIdealSpec::uniform(xb.g.n_cols(), 0.0, xb.r_neuron_in);
            let spec = NonIdealSpec {
                r_wire_row: xb.r_wire_row,
                r_wire_col: xb.r_wire_col,
                ..spec
            };
            solve_nonideal(&xb.g, &exc, &spec)?.dissipated
        };
        let n = xb.g.n_cols();
        (
            RunRecord {
                n_neurons: n,
                crossbar_power: power,
                n_mac: xb.g.n_rows() * n,
                n_activations: n,
                n_calibrated_nodes: 2 * n,
                sar_nbits: nbits,
            },
            "crossbar",
        )
    } else {
        return Err(ConfigError::MissingSection("network (or crossbar)".into()).into());
    };
    let report = energy_estimate(&run, &cfg.energy)?;
    let mut payload = to_json(&report);
    payload["run"] = to_json(&run);
    payload["source"] = json!(source);
    Ok((payload, None))
}
