//! Regulated-cascode (RGC) transimpedance neuron.
//!
//! Circuit, all NMOS, referenced to ground:
//!
//! ```text
//!            vdd                     vdd          vdd
//!             |                       |            |
//!        I_B2 + DAC (|| ro_b2)      r_load      output DAC
//!             |                       |            |
//!   g1 o------+                 out o-+------------+
//!      |      |                       |
//!      |    M2 drain               M3 drain   (gate = vb3)
//!      |    M2 gate = in           M3 source = mid
//!      |    M2 source = gnd           |
//!      +----------------------> M1 gate, M1 drain = mid
//!                                  M1 source = in <--- i_in (crossbar)
//!                                     |
//!                                    I_B (sink)
//! ```
//!
//! M1 is the common-gate input device, M2 the common-source feedback
//! amplifier that senses the input node and drives M1's gate, and M3 a
//! cascode on M1's drain. The binary-weighted calibration DAC adds current
//! to the M2 branch, shifting M2's Vgs and with it the input DC level. A
//! second DAC sources current into the output node. M5 is the gain device of
//! the single-transistor regulated-cascode transconductor and only enters
//! the tuned-Gm calculation.

use serde::{Deserialize, Serialize};

use crate::device::{channel_current, mos_eval, MosEval, MosParams, Region};
use crate::error::{Error, SolveError};
use crate::exec::Exec;
use crate::linalg::{self, DenseMatrix};

/// Binary-weighted current DAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacSpec {
    /// LSB current (A).
    pub i_unit: f64,
    pub nbits: u32,
}

impl DacSpec {
    pub fn max_code(&self) -> u32 {
        ((1u64 << self.nbits) - 1) as u32
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(1..=24).contains(&self.nbits) {
            return Err(Error::invalid(format!(
                "dac nbits {} not in [1, 24]",
                self.nbits
            )));
        }
        if !(self.i_unit > 0.0 && self.i_unit.is_finite()) {
            return Err(Error::invalid("dac i_unit must be positive"));
        }
        Ok(())
    }
}

/// `code * i_unit`.
pub fn dac_current(dac: &DacSpec, code: u32) -> Result<f64, Error> {
    if code > dac.max_code() {
        return Err(Error::invalid(format!(
            "dac code {code} out of range for {} bits",
            dac.nbits
        )));
    }
    Ok(code as f64 * dac.i_unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgcParams {
    pub m1: MosParams,
    pub m2: MosParams,
    pub m3: MosParams,
    pub m5: MosParams,
    /// Main bias current through M1 (A).
    pub ib: f64,
    /// Feedback-branch bias current (A).
    pub ib2: f64,
    /// Incremental resistance of the I_B2 source (Ω); infinite for an ideal source.
    #[serde(with = "crate::report::inf_as_null")]
    pub ro_b2: f64,
    /// Control voltage of the transconductor.
    pub vc: f64,
    /// Control current of the transconductor.
    pub ic: f64,
    pub vdd: f64,
    /// Cascode gate bias.
    pub vb3: f64,
    /// Output load resistor (Ω).
    pub r_load: f64,
    /// Input-node calibration DAC, summing into the M2 branch.
    pub dac: DacSpec,
    /// Output-node calibration DAC, sourcing into the output node.
    pub dac_out: DacSpec,
}

impl RgcParams {
    /// Reference configuration: vdd = 1 V and ib = 5 µA, with a documented
    /// nominal device set. M1/M3 are wide low-threshold devices so the
    /// three-high stack fits the 1 V supply.
    pub fn reference() -> Self {
        Self {
            m1: MosParams::nmos(4e-3, 0.15, 0.05),
            m2: MosParams::nmos(200e-6, 0.4, 0.05),
            m3: MosParams::nmos(4e-3, 0.15, 0.05),
            m5: MosParams::nmos(200e-6, 0.4, 0.05),
            ib: 5e-6,
            ib2: 4e-6,
            ro_b2: 1e6,
            vc: 0.2,
            ic: 4e-6,
            vdd: 1.0,
            vb3: 1.0,
            r_load: 20e3,
            dac: DacSpec {
                i_unit: 62.5e-9,
                nbits: 6,
            },
            dac_out: DacSpec {
                i_unit: 25e-9,
                nbits: 6,
            },
        }
    }

    /// Same circuit with every lambda zeroed and an ideal I_B2 source.
    pub fn ideal_devices(mut self) -> Self {
        for m in [&mut self.m1, &mut self.m2, &mut self.m3, &mut self.m5] {
            m.lambda = 0.0;
        }
        self.ro_b2 = f64::INFINITY;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, m) in [
            ("m1", &self.m1),
            ("m2", &self.m2),
            ("m3", &self.m3),
            ("m5", &self.m5),
        ] {
            m.validate().map_err(|e| e.context(name))?;
        }
        for (name, v) in [("ib", self.ib), ("ib2", self.ib2), ("ic", self.ic)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.vdd > 0.0 && self.vdd.is_finite()) {
            return Err(Error::invalid("vdd must be positive"));
        }
        if !(self.ro_b2 > 0.0) {
            return Err(Error::invalid("ro_b2 must be positive"));
        }
        if !(self.r_load > 0.0 && self.r_load.is_finite()) {
            return Err(Error::invalid("r_load must be positive"));
        }
        if !(self.vc.is_finite() && self.vb3.is_finite()) {
            return Err(Error::invalid("vc and vb3 must be finite"));
        }
        self.dac.validate().map_err(|e| e.context("dac"))?;
        self.dac_out.validate().map_err(|e| e.context("dac_out"))?;
        Ok(())
    }

    fn g_b2(&self) -> f64 {
        if self.ro_b2.is_finite() {
            1.0 / self.ro_b2
        } else {
            0.0
        }
    }
}

/// Calibration DAC settings for one neuron.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DacCodes {
    pub input: u32,
    pub output: u32,
}

impl DacCodes {
    pub fn new(input: u32, output: u32) -> Self {
        Self { input, output }
    }
}

impl From<u32> for DacCodes {
    fn from(input: u32) -> Self {
        Self { input, output: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Input node, equal to V_DS1 of the transconductor view (V).
    pub v_in: f64,
    pub v_gate1: f64,
    pub v_mid: f64,
    pub v_out: f64,
    pub i_in: f64,
    pub i_m1: f64,
    pub i_m2: f64,
    pub i_m3: f64,
    /// Current delivered by the I_B2 source including its Norton resistance.
    pub i_load2: f64,
    pub i_dac: f64,
    pub i_dac_out: f64,
    pub m1: MosEval,
    pub m2: MosEval,
    pub m3: MosEval,
    pub codes: DacCodes,
    /// Newton iterations used.
    pub iterations: usize,
    /// Max KCL residual over the four nodes (A).
    pub residual: f64,
    /// Compliance warnings, e.g. a node above the supply.
    pub warnings: Vec<String>,
}

const KCL_TOL: f64 = 1e-12;
const STEP_TOL: f64 = 1e-13;
/// Residuals below this are roundoff; further steps cannot improve them.
const KCL_FLOOR: f64 = 1e-18;
const RAIL_MARGIN: f64 = 0.01;
const MAX_ITER: usize = 200;
const MAX_HALVINGS: usize = 20;
const MAX_STEP: f64 = 0.25;

struct Bias {
    i_in: f64,
    i_dac: f64,
    i_dac_out: f64,
}

fn residual_and_jacobian(p: &RgcParams, b: &Bias, x: &[f64; 4]) -> ([f64; 4], DenseMatrix) {
    let [v_in, v_g1, v_mid, v_out] = *x;
    let (i1, gm1, gds1) = channel_current(&p.m1, v_g1 - v_in, v_mid - v_in);
    let (i2, gm2, gds2) = channel_current(&p.m2, v_in, v_g1);
    let (i3, gm3, gds3) = channel_current(&p.m3, p.vb3 - v_mid, v_out - v_mid);
    let gb2 = p.g_b2();
    let gl = 1.0 / p.r_load;
    let i_load2 = p.ib2 + b.i_dac + (p.vdd - v_g1) * gb2;

    let f = [
        i1 + b.i_in - p.ib,
        i_load2 - i2,
        i3 - i1,
        (p.vdd - v_out) * gl + b.i_dac_out - i3,
    ];
    let mut j = DenseMatrix::zeros(4);
    j.set(0, 0, -gm1 - gds1);
    j.set(0, 1, gm1);
    j.set(0, 2, gds1);
    j.set(1, 0, -gm2);
    j.set(1, 1, -gb2 - gds2);
    j.set(2, 0, gm1 + gds1);
    j.set(2, 1, -gm1);
    j.set(2, 2, -gm3 - gds3 - gds1);
    j.set(2, 3, gds3);
    j.set(3, 2, gm3 + gds3);
    j.set(3, 3, -gl - gds3);
    (f, j)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn initial_guess(p: &RgcParams, b: &Bias) -> [f64; 4] {
    let i1 = (p.ib - b.i_in).max(1e-12);
    let v_in = p.m2.vt + (2.0 * (p.ib2 + b.i_dac) / p.m2.beta).sqrt();
    let v_g1 = v_in + p.m1.vt + (2.0 * i1 / p.m1.beta).sqrt();
    let v_mid = (p.vb3 - p.m3.vt - (2.0 * i1 / p.m3.beta).sqrt())
        .max(v_in + 1.1 * (2.0 * i1 / p.m1.beta).sqrt());
    let v_out = (p.vdd - p.r_load * (i1 - b.i_dac_out)).max(v_mid + 0.05);
    [v_in, v_g1, v_mid, v_out]
}

/// DC operating point by damped Newton iteration on the four node KCL
/// equations. Converges to a max residual of 1 pA; a step is halved (up to
/// 20 times) whenever it would increase the residual norm.
pub fn solve_dc(
    p: &RgcParams,
    i_in: f64,
    codes: impl Into<DacCodes>,
) -> Result<OperatingPoint, SolveError> {
    let codes = codes.into();
    let bias = Bias {
        i_in,
        i_dac: dac_current(&p.dac, codes.input)
            .map_err(|e| SolveError::Precondition(e.to_string()))?,
        i_dac_out: dac_current(&p.dac_out, codes.output)
            .map_err(|e| SolveError::Precondition(e.to_string()))?,
    };
    if p.ib2 + bias.i_dac <= 0.0 {
        return Err(SolveError::Infeasible {
            device: "m2".into(),
            detail: "feedback branch has no bias current".into(),
        });
    }
    if p.ib - i_in <= 0.0 {
        return Err(SolveError::Infeasible {
            device: "m1".into(),
            detail: format!(
                "input current {i_in:.4e} A leaves no bias for the input device (ib = {:.4e} A)",
                p.ib
            ),
        });
    }

    let mut x = initial_guess(p, &bias);
    let (mut f, mut jac) = residual_and_jacobian(p, &bias, &x);
    let mut res = norm_inf(&f);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = match linalg::solve(jac.clone(), rhs.clone()) {
            Ok(dx) => dx,
            Err(_) => {
                // A device in cutoff leaves a zero row; regularize the
                // Jacobian only, which keeps the fixed point unchanged.
                let mut reg = jac.clone();
                for k in 0..4 {
                    reg.add(k, k, -1e-9);
                }
                linalg::solve(reg, rhs).map_err(|_| SolveError::NonConvergence {
                    iterations,
                    residual: res,
                })?
            }
        };
        let mut dx: [f64; 4] = [dx[0], dx[1], dx[2], dx[3]];
        let big = norm_inf(&dx);
        if big > MAX_STEP {
            let k = MAX_STEP / big;
            dx.iter_mut().for_each(|d| *d *= k);
        }
        let step = norm_inf(&dx);

        let mut alpha = 1.0;
        let mut trial;
        let mut halvings = 0;
        loop {
            trial = [
                x[0] + alpha * dx[0],
                x[1] + alpha * dx[1],
                x[2] + alpha * dx[2],
                x[3] + alpha * dx[3],
            ];
            let (tf, tj) = residual_and_jacobian(p, &bias, &trial);
            let tres = norm_inf(&tf);
            if tres <= res || halvings >= MAX_HALVINGS || res <= KCL_TOL {
                f = tf;
                jac = tj;
                res = tres;
                break;
            }
            alpha *= 0.5;
            halvings += 1;
        }
        x = trial;
        if res <= KCL_TOL && (step * alpha <= STEP_TOL || res <= KCL_FLOOR) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolveError::NonConvergence {
            iterations,
            residual: res,
        });
    }

    let [v_in, v_gate1, v_mid, v_out] = x;
    for (name, vds) in [("m1", v_mid - v_in), ("m2", v_gate1), ("m3", v_out - v_mid)] {
        if vds < 0.0 {
            return Err(SolveError::Infeasible {
                device: name.into(),
                detail: format!("drain below source by {:.4e} V", -vds),
            });
        }
    }
    let m1 = mos_eval(&p.m1, v_gate1 - v_in, v_mid - v_in);
    let m2 = mos_eval(&p.m2, v_in, v_gate1);
    let m3 = mos_eval(&p.m3, p.vb3 - v_mid, v_out - v_mid);
    for (name, e) in [("m1", &m1), ("m2", &m2), ("m3", &m3)] {
        if e.region == Region::Cutoff {
            return Err(SolveError::Infeasible {
                device: name.into(),
                detail: "in cutoff at the solved operating point".into(),
            });
        }
    }
    // The current sources feeding g1 and out (and the sink at in) cannot
    // drive their node past the rails.
    for (name, v, bad) in [
        ("i_b2", v_gate1, v_gate1 > p.vdd),
        ("r_load", v_out, v_out > p.vdd),
        ("i_b", v_in, v_in < 0.0),
    ] {
        if bad {
            return Err(SolveError::Infeasible {
                device: name.into(),
                detail: format!("out of compliance with its node at {v:.4} V"),
            });
        }
    }
    let mut warnings = Vec::new();
    for (name, v) in [("g1", v_gate1), ("out", v_out)] {
        if v > p.vdd - RAIL_MARGIN {
            warnings.push(format!(
                "node {name} at {v:.4} V is within {RAIL_MARGIN} V of vdd"
            ));
        }
    }
    Ok(OperatingPoint {
        v_in,
        v_gate1,
        v_mid,
        v_out,
        i_in,
        i_m1: m1.current,
        i_m2: m2.current,
        i_m3: m3.current,
        i_load2: p.ib2 + bias.i_dac + (p.vdd - v_gate1) * p.g_b2(),
        i_dac: bias.i_dac,
        i_dac_out: bias.i_dac_out,
        m1,
        m2,
        m3,
        codes,
        iterations,
        residual: res,
        warnings,
    })
}

/// Per-node KCL residuals of an operating point, recomputed from scratch.
pub fn kcl_residuals(p: &RgcParams, op: &OperatingPoint) -> [f64; 4] {
    let bias = Bias {
        i_in: op.i_in,
        i_dac: op.i_dac,
        i_dac_out: op.i_dac_out,
    };
    residual_and_jacobian(p, &bias, &[op.v_in, op.v_gate1, op.v_mid, op.v_out]).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallSignalReport {
    /// Feedback-amplifier gain `gm2 (ro2 || ro_b2)`.
    pub a: f64,
    /// Input impedance `1 / (a gm1)` (Ω).
    pub zin: f64,
    /// Cascode output impedance `gm3 ro3 ro1` (Ω).
    pub rout: f64,
    /// Tuned transconductance `beta1 * V_DS1` of the regulated transconductor (S).
    pub gm_tuned: f64,
    /// V_DS1 set by the control voltage and current.
    pub vds1_tuned: f64,
    pub m1_region: Region,
}

fn parallel(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => a * b / (a + b),
        (true, false) => a,
        (false, true) => b,
        (false, false) => f64::INFINITY,
    }
}

/// V_DS1 of the regulated transconductor with M5 in saturation:
/// `V_DS1 = V_C + sqrt(2 I_C / beta5) + V_T5`.
pub fn tuned_vds1(p: &RgcParams) -> f64 {
    p.vc + (2.0 * p.ic / p.m5.beta).sqrt() + p.m5.vt
}

/// `beta1 * V_DS1`; rises with either control input.
pub fn tuned_gm(p: &RgcParams) -> f64 {
    p.m1.beta * tuned_vds1(p)
}

/// Hand-analysis small-signal quantities at a solved operating point.
///
/// Requires M2 (gain) and M3 (output impedance) in saturation; M1 may be in
/// either region and its region is reported.
pub fn small_signal(p: &RgcParams, op: &OperatingPoint) -> Result<SmallSignalReport, SolveError> {
    let mut bad = Vec::new();
    if op.m2.region != Region::Saturation {
        bad.push(format!("m2 in {:?}", op.m2.region));
    }
    if op.m3.region != Region::Saturation {
        bad.push(format!("m3 in {:?}", op.m3.region));
    }
    if op.m1.region == Region::Cutoff {
        bad.push("m1 in Cutoff".to_string());
    }
    if !bad.is_empty() {
        return Err(SolveError::Precondition(bad.join(", ")));
    }
    let a = op.m2.gm * parallel(op.m2.ro, p.ro_b2);
    let zin = 1.0 / (a * op.m1.gm);
    let rout = op.m3.gm * op.m3.ro * op.m1.ro;
    Ok(SmallSignalReport {
        a,
        zin,
        rout,
        gm_tuned: tuned_gm(p),
        vds1_tuned: tuned_vds1(p),
        m1_region: op.m1.region,
    })
}

/// Central-difference input impedance `dv_in / di_in` from two full solves.
pub fn zin_numeric(
    p: &RgcParams,
    codes: impl Into<DacCodes>,
    i_in: f64,
    delta_i: f64,
) -> Result<f64, SolveError> {
    let codes = codes.into();
    let hi = solve_dc(p, i_in + delta_i, codes)?;
    let lo = solve_dc(p, i_in - delta_i, codes)?;
    Ok((hi.v_in - lo.v_in) / (2.0 * delta_i))
}

/// Bisection for an increasing function on `[lo, hi]`; `None` without a sign change.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let rising = fhi > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Measured feedback gain `-dv_g1/dv_in` with the input node forced to
/// `v_in ± dv` and the gate node re-solved.
pub fn gain_numeric(p: &RgcParams, op: &OperatingPoint, dv: f64) -> Option<f64> {
    let gate = |v_in: f64| {
        let kcl = |v_g1: f64| {
            let i_load = p.ib2 + op.i_dac + (p.vdd - v_g1) * p.g_b2();
            channel_current(&p.m2, v_in, v_g1).0 - i_load
        };
        bisect(kcl, 0.0, 4.0 * p.vdd)
    };
    let hi = gate(op.v_in + dv)?;
    let lo = gate(op.v_in - dv)?;
    Some(-(hi - lo) / (2.0 * dv))
}

/// Measured output impedance looking into M3's drain with the input port
/// held at its DC potential: M1's gate and source stay at their operating
/// values while the output node is forced to `v_out ± dv`.
pub fn rout_numeric(p: &RgcParams, op: &OperatingPoint, dv: f64) -> Option<f64> {
    let current = |v_out: f64| {
        let kcl = |v_mid: f64| {
            let i1 = channel_current(&p.m1, op.v_gate1 - op.v_in, v_mid - op.v_in).0;
            let i3 = channel_current(&p.m3, p.vb3 - v_mid, v_out - v_mid).0;
            i1 - i3
        };
        let v_mid = bisect(kcl, op.v_in, v_out)?;
        Some(channel_current(&p.m3, p.vb3 - v_mid, v_out - v_mid).0)
    };
    let hi = current(op.v_out + dv)?;
    let lo = current(op.v_out - dv)?;
    Some(2.0 * dv / (hi - lo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPoint {
    pub i_in: f64,
    pub v_out: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCurve {
    pub points: Vec<TransferPoint>,
    /// Least-squares slope dv_out/di_in over the central 80% (Ω).
    pub slope: f64,
    pub intercept: f64,
    /// Max |v_out - fit| over the central 80%, as a fraction of the full
    /// output swing of the sweep.
    pub max_fit_deviation: f64,
    pub n_infeasible: usize,
}

/// Output voltage across an input-current sweep. Infeasible points are
/// flagged and excluded from the fit.
pub fn transfer_curve(
    p: &RgcParams,
    codes: impl Into<DacCodes>,
    sweep: &[f64],
    exec: Exec,
) -> TransferCurve {
    let codes = codes.into();
    let points: Vec<TransferPoint> = exec.map(sweep.len(), |k| {
        let i_in = sweep[k];
        match solve_dc(p, i_in, codes) {
            Ok(op) => TransferPoint {
                i_in,
                v_out: Some(op.v_out),
                error: None,
            },
            Err(e) => TransferPoint {
                i_in,
                v_out: None,
                error: Some(e.to_string()),
            },
        }
    });
    let n = points.len();
    let trim = n / 10;
    let central: Vec<(f64, f64)> = points[trim..n - trim]
        .iter()
        .filter_map(|pt| pt.v_out.map(|v| (pt.i_in, v)))
        .collect();
    let (slope, intercept) = linear_fit(&central);
    let outs: Vec<f64> = points.iter().filter_map(|pt| pt.v_out).collect();
    let swing = outs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - outs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_dev = central
        .iter()
        .map(|(x, y)| (y - (slope * x + intercept)).abs())
        .fold(0.0, f64::max);
    TransferCurve {
        n_infeasible: points.iter().filter(|pt| pt.v_out.is_none()).count(),
        points,
        slope,
        intercept,
        max_fit_deviation: if swing > 0.0 { max_dev / swing } else { 0.0 },
    }
}

pub(crate) fn linear_fit(xy: &[(f64, f64)]) -> (f64, f64) {
    let n = xy.len() as f64;
    if xy.len() < 2 {
        return (0.0, xy.first().map_or(0.0, |p| p.1));
    }
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Evenly spaced sweep of `n` points over `[center - half, center + half]`.
pub fn sweep(center: f64, half: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![center];
    }
    (0..n)
        .map(|k| center - half + 2.0 * half * k as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form_params() -> RgcParams {
        let mut p = RgcParams::reference().ideal_devices();
        p.m2 = MosParams::nmos(200e-6, 0.4, 0.0);
        p.ib2 = 4e-6;
        p.dac = DacSpec {
            i_unit: 0.125e-6,
            nbits: 6,
        };
        p
    }

    #[test]
    fn dac_codes() {
        let d = DacSpec {
            i_unit: 0.125e-6,
            nbits: 6,
        };
        assert_eq!(dac_current(&d, 0).unwrap(), 0.0);
        assert!((dac_current(&d, 63).unwrap() - 7.875e-6).abs() < 1e-18);
        assert!((dac_current(&d, 32).unwrap() - 4e-6).abs() < 1e-18);
        assert!(dac_current(&d, 64).is_err());
        for c in 0..63 {
            assert!(dac_current(&d, c + 1).unwrap() > dac_current(&d, c).unwrap());
        }
    }

    #[test]
    fn closed_form_code_zero() {
        let op = solve_dc(&closed_form_params(), 0.0, 0).unwrap();
        assert!((op.v_in - 0.6).abs() < 1e-12, "{}", op.v_in);
        assert!(op.residual <= 1e-12);
    }

    #[test]
    fn closed_form_with_dac() {
        // code 32 at 0.125 µA = 4 µA extra, branch current 8 µA
        let op = solve_dc(&closed_form_params(), 0.0, 32).unwrap();
        let want = 0.4 + (2.0 * 8e-6 / 200e-6f64).sqrt();
        assert!((op.v_in - want).abs() < 1e-12);
        assert!((op.v_in - 0.68284).abs() < 1e-5);
    }

    #[test]
    fn reference_point_is_in_saturation() {
        let p = RgcParams::reference();
        let op = solve_dc(&p, 0.0, 0).unwrap();
        assert_eq!(op.m1.region, Region::Saturation);
        assert_eq!(op.m2.region, Region::Saturation);
        assert_eq!(op.m3.region, Region::Saturation);
        assert!(op.warnings.is_empty(), "{:?}", op.warnings);
        for r in kcl_residuals(&p, &op) {
            assert!(r.abs() <= 1e-12);
        }
        // M1 carries ib - i_in; output is the resistive drop.
        assert!((op.i_m1 - p.ib).abs() < 1e-12);
        assert!((op.v_out - (p.vdd - p.r_load * p.ib)).abs() < 1e-6);
    }

    #[test]
    fn full_code_range_solvable_and_monotone() {
        let p = RgcParams::reference();
        let mut last = f64::NEG_INFINITY;
        for c in 0..=p.dac.max_code() {
            let op = solve_dc(&p, 0.0, c).unwrap();
            assert!(op.v_in > last);
            last = op.v_in;
        }
        let mut last = f64::NEG_INFINITY;
        for c in 0..=p.dac_out.max_code() {
            let op = solve_dc(&p, 0.0, DacCodes::new(20, c)).unwrap();
            assert!(op.v_out > last);
            last = op.v_out;
        }
    }

    #[test]
    fn excessive_input_current_is_infeasible() {
        let p = RgcParams::reference();
        assert!(matches!(
            solve_dc(&p, 6e-6, 0),
            Err(SolveError::Infeasible { .. })
        ));
        assert!(matches!(
            solve_dc(&p, 0.0, 64),
            Err(SolveError::Precondition(_))
        ));
    }

    #[test]
    fn small_signal_arithmetic() {
        // gm2 = 100 µS, ro2 = ro_b2 = 500 kΩ, gm1 = 100 µS
        let mut p = RgcParams::reference();
        p.ro_b2 = 500e3;
        let mut op = solve_dc(&p, 0.0, 0).unwrap();
        op.m2.gm = 100e-6;
        op.m2.ro = 500e3;
        op.m1.gm = 100e-6;
        op.m3.gm = 100e-6;
        op.m3.ro = 500e3;
        op.m1.ro = 500e3;
        let s = small_signal(&p, &op).unwrap();
        assert!((s.a - 25.0).abs() < 1e-9);
        assert!((s.zin - 400.0).abs() < 1e-6);
        assert!((s.rout - 25e6).abs() < 1e-3);
    }

    #[test]
    fn tuned_transconductance() {
        let mut p = RgcParams::reference();
        p.vc = 0.2;
        p.ic = 4e-6;
        p.m5 = MosParams::nmos(200e-6, 0.4, 0.0);
        assert!((tuned_vds1(&p) - 0.8).abs() < 1e-12);
        assert!((tuned_gm(&p) - p.m1.beta * 0.8).abs() < 1e-15);
        // M5 in saturation carrying I_C at V_GS5 = V_DS1 - V_C (bisection check)
        let vds1 = bisect(
            |v| mos_eval(&p.m5, v - p.vc, 1.0).current - p.ic,
            p.vc + p.m5.vt,
            p.vdd + 1.0,
        )
        .unwrap();
        assert!((vds1 - tuned_vds1(&p)).abs() < 1e-12);
        let mut q = p;
        q.vc += 0.01;
        assert!(tuned_gm(&q) > tuned_gm(&p));
        q = p;
        q.ic *= 1.1;
        assert!(tuned_gm(&q) > tuned_gm(&p));
    }

    #[test]
    fn precondition_reports_device() {
        let p = RgcParams::reference();
        let mut op = solve_dc(&p, 0.0, 0).unwrap();
        op.m3.region = Region::Triode;
        match small_signal(&p, &op) {
            Err(SolveError::Precondition(msg)) => assert!(msg.contains("m3")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zin_step_robust() {
        let p = RgcParams::reference();
        let a = zin_numeric(&p, 0, 0.0, 1e-9).unwrap();
        let b = zin_numeric(&p, 0, 0.0, 0.5e-9).unwrap();
        assert!(((a - b) / a).abs() < 1e-3);
    }

    #[test]
    fn transfer_curve_is_linear_and_stateless() {
        let p = RgcParams::reference();
        let s = sweep(0.0, 2e-6, 11);
        let t = transfer_curve(&p, 0, &s, Exec::Sequential);
        assert_eq!(t.n_infeasible, 0);
        assert!(t.max_fit_deviation <= 0.02);
        let q = solve_dc(&p, 0.0, 0).unwrap();
        assert_eq!(t.points[5].v_out, Some(q.v_out));
        let rev: Vec<f64> = s.iter().rev().copied().collect();
        let t2 = transfer_curve(&p, 0, &rev, Exec::Parallel);
        for (a, b) in t.points.iter().zip(t2.points.iter().rev()) {
            assert_eq!(a.v_out, b.v_out);
        }
    }
}
