//! Seeded Monte Carlo mismatch analysis of the neuron DC point, with and
//! without SAR calibration.
//!
//! Run `k` of a study seeded with `s` draws from
//! `ChaCha8Rng::seed_from_u64(seed::split(s, k))`, so each run is
//! reproducible on its own and the result is independent of worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::device::MosParams;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::neuron::{bisect, solve_dc, DacCodes, RgcParams};
use crate::sar::{sar_calibrate, Direction, SarOptions};
use crate::seed;

/// Independent Gaussian device mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchSpec {
    /// Std of the threshold shift (V).
    pub sigma_vt: f64,
    /// Relative std of beta.
    pub sigma_beta_rel: f64,
    /// Relative std of the output load resistor.
    pub sigma_load_rel: f64,
}

impl Default for MismatchSpec {
    /// Fitted defaults: 10 mV / 2 % put the uncalibrated input spread near
    /// 10 mV for the reference neuron.
    fn default() -> Self {
        Self {
            sigma_vt: 10e-3,
            sigma_beta_rel: 0.02,
            sigma_load_rel: 0.01,
        }
    }
}

impl MismatchSpec {
    pub fn none() -> Self {
        Self {
            sigma_vt: 0.0,
            sigma_beta_rel: 0.0,
            sigma_load_rel: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_vt", self.sigma_vt),
            ("sigma_beta_rel", self.sigma_beta_rel),
            ("sigma_load_rel", self.sigma_load_rel),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

fn perturb_device<R: Rng>(m: &mut MosParams, spec: &MismatchSpec, rng: &mut R) {
    let zv: f64 = rng.sample(StandardNormal);
    let zb: f64 = rng.sample(StandardNormal);
    m.vt += spec.sigma_vt * zv;
    m.beta *= (1.0 + spec.sigma_beta_rel * zb).max(1e-3);
}

/// Draws one mismatched instance. Devices are perturbed in the order
/// m1, m2, m3, m5 (vt then beta each), then the load resistor.
pub fn sample_params<R: Rng>(nominal: &RgcParams, spec: &MismatchSpec, rng: &mut R) -> RgcParams {
    let mut p = *nominal;
    for m in [&mut p.m1, &mut p.m2, &mut p.m3, &mut p.m5] {
        perturb_device(m, spec, rng);
    }
    let zr: f64 = rng.sample(StandardNormal);
    p.r_load *= (1.0 + spec.sigma_load_rel * zr).max(1e-3);
    p
}

/// RNG for run `run_index` of a study seeded with `seed`.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed::split(seed, run_index))
}

/// Mean and unbiased (n - 1) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    /// Welford's single-pass update.
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for x in xs {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let std = if n > 1 {
            (m2 / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_runs: usize,
    pub seed: u64,
    pub calibrate: bool,
    pub vref_in: f64,
    /// Also calibrate the output node to this level.
    pub vref_out: Option<f64>,
    /// DAC setting of the uncalibrated circuit.
    pub uncalibrated_codes: DacCodes,
    pub sar: SarOptions,
    #[serde(skip)]
    pub exec: Exec,
}

impl McConfig {
    pub fn new(n_runs: usize, seed: u64, vref_in: f64) -> Self {
        Self {
            n_runs,
            seed,
            calibrate: true,
            vref_in,
            vref_out: None,
            uncalibrated_codes: DacCodes::default(),
            sar: SarOptions::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub run_index: usize,
    pub v_in_pre: f64,
    pub v_in_post: Option<f64>,
    pub code: Option<u32>,
    pub v_out_pre: f64,
    pub v_out_post: Option<f64>,
    pub code_out: Option<u32>,
    /// `|v_in(code + 1) - v_in(code)|` at the returned code (V).
    pub lsb_step: Option<f64>,
    /// The calibrated node misses the reference by more than one local step.
    pub out_of_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub n_runs: usize,
    pub seed: u64,
    pub samples: Vec<McSample>,
    pub excluded: Vec<(usize, String)>,
    pub v_in_pre: Stats,
    pub v_in_post: Option<Stats>,
    pub v_out_pre: Stats,
    pub v_out_post: Option<Stats>,
    pub n_out_of_range: usize,
}

impl McResult {
    /// `run_index,v_in_pre,v_in_post,code`; empty cells without calibration.
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("run_index,v_in_pre,v_in_post,code\n");
        for r in &self.samples {
            s.push_str(&format!(
                "{},{:.17e},{},{}\n",
                r.run_index,
                r.v_in_pre,
                r.v_in_post.map(|v| format!("{v:.17e}")).unwrap_or_default(),
                r.code.map(|c| c.to_string()).unwrap_or_default()
            ));
        }
        s
    }

    /// Uncalibrated over calibrated input-node spread.
    pub fn reduction(&self) -> Option<StatsComparison> {
        self.v_in_post
            .map(|post| compare_stats(&self.v_in_pre, &post))
    }
}

fn run_one(nominal: &RgcParams, spec: &MismatchSpec, cfg: &McConfig, k: usize) -> Result<McSample> {
    let mut rng = run_rng(cfg.seed, k as u64);
    let p = sample_params(nominal, spec, &mut rng);
    let pre = solve_dc(&p, 0.0, cfg.uncalibrated_codes)?;
    let mut s = McSample {
        run_index: k,
        v_in_pre: pre.v_in,
        v_in_post: None,
        code: None,
        v_out_pre: pre.v_out,
        v_out_post: None,
        code_out: None,
        lsb_step: None,
        out_of_range: false,
    };
    if !cfg.calibrate {
        return Ok(s);
    }
    let out_code = cfg.uncalibrated_codes.output;
    let sar = sar_calibrate(
        |c| Ok(solve_dc(&p, 0.0, DacCodes::new(c, out_code))?.v_in),
        cfg.vref_in,
        p.dac.nbits,
        Direction::Increasing,
        cfg.sar,
    )?;
    let mut codes = DacCodes::new(sar.code, out_code);
    if let Some(vref_out) = cfg.vref_out {
        let o = sar_calibrate(
            |c| Ok(solve_dc(&p, 0.0, DacCodes::new(sar.code, c))?.v_out),
            vref_out,
            p.dac_out.nbits,
            Direction::Increasing,
            cfg.sar,
        )?;
        codes.output = o.code;
        s.code_out = Some(o.code);
    }
    let post = solve_dc(&p, 0.0, codes)?;
    let neighbour = if codes.input < p.dac.max_code() {
        codes.input + 1
    } else {
        codes.input - 1
    };
    let other = solve_dc(&p, 0.0, DacCodes::new(neighbour, codes.output))?;
    let step = (other.v_in - post.v_in).abs();
    s.v_in_post = Some(post.v_in);
    s.v_out_post = Some(post.v_out);
    s.code = Some(codes.input);
    s.lsb_step = Some(step);
    s.out_of_range = (post.v_in - cfg.vref_in).abs() > step;
    Ok(s)
}

/// Monte Carlo over `cfg.n_runs` mismatched instances. Solver failures are
/// excluded from the statistics and listed; out-of-range runs are kept and
/// counted.
pub fn run_mc(nominal: &RgcParams, spec: &MismatchSpec, cfg: &McConfig) -> Result<McResult> {
    if cfg.n_runs < 2 {
        return Err(Error::invalid(format!(
            "n_runs must be >= 2, got {}",
            cfg.n_runs
        )));
    }
    nominal.validate()?;
    spec.validate()?;
    let runs = cfg.exec.map(cfg.n_runs, |k| run_one(nominal, spec, cfg, k));
    let mut samples = Vec::with_capacity(cfg.n_runs);
    let mut excluded = Vec::new();
    for (k, r) in runs.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => excluded.push((k, e.to_string())),
        }
    }
    let v_in_pre = Stats::from_samples(samples.iter().map(|s| s.v_in_pre));
    let v_out_pre = Stats::from_samples(samples.iter().map(|s| s.v_out_pre));
    let (v_in_post, v_out_post) = if cfg.calibrate {
        (
            Some(Stats::from_samples(
                samples.iter().filter_map(|s| s.v_in_post),
            )),
            Some(Stats::from_samples(
                samples.iter().filter_map(|s| s.v_out_post),
            )),
        )
    } else {
        (None, None)
    };
    Ok(McResult {
        n_runs: cfg.n_runs,
        seed: cfg.seed,
        n_out_of_range: samples.iter().filter(|s| s.out_of_range).count(),
        samples,
        excluded,
        v_in_pre,
        v_in_post,
        v_out_pre,
        v_out_post,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsComparison {
    /// `a.std / b.std`; infinite when `b.std` is zero and `a.std` is not.
    #[serde(with = "crate::report::inf_as_null")]
    pub factor: f64,
    pub summary: [String; 2],
}

pub fn compare_stats(a: &Stats, b: &Stats) -> StatsComparison {
    let factor = if a.std == b.std {
        1.0
    } else if b.std == 0.0 {
        f64::INFINITY
    } else {
        a.std / b.std
    };
    StatsComparison {
        factor,
        summary: [
            format!(
                "before: mean {:.6} V, std {:.4} mV over {} runs",
                a.mean,
                a.std * 1e3,
                a.n
            ),
            format!(
                "after:  mean {:.6} V, std {:.4} mV, reduction x{:.3}",
                b.mean,
                b.std * 1e3,
                factor
            ),
        ],
    }
}

/// Resizes the input DAC so the nominal neuron reaches `vref - half_span`
/// at code 0 and `vref + half_span` at full scale.
pub fn size_dac_for_span(nominal: &RgcParams, vref: f64, half_span: f64) -> Result<RgcParams> {
    let mut p = *nominal;
    let lo_target = vref - half_span;
    let hi_target = vref + half_span;
    let v_at = |p: &RgcParams, code: u32| solve_dc(p, 0.0, code).map(|op| op.v_in);
    let ib2 = bisect(
        |ib2| {
            let mut q = p;
            q.ib2 = ib2;
            v_at(&q, 0).map_or(1.0, |v| v - lo_target)
        },
        1e-9,
        1e-3,
    )
    .ok_or_else(|| Error::invalid("no feedback bias reaches the lower span edge"))?;
    p.ib2 = ib2;
    let max = p.dac.max_code();
    let i_unit = bisect(
        |iu| {
            let mut q = p;
            q.dac.i_unit = iu;
            v_at(&q, max).map_or(1.0, |v| v - hi_target)
        },
        1e-15,
        1e-5,
    )
    .ok_or_else(|| Error::invalid("no DAC step reaches the upper span edge"))?;
    p.dac.i_unit = i_unit;
    Ok(p)
}
