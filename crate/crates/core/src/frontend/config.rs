//! Typed, validated configuration built from a syntax tree.
//!
//! Every key is optional; missing keys take the reference defaults, and the
//! source of each resolved value is kept in [`SimConfig::provenance`].
//! Unknown keys are errors with a nearest-match suggestion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::crossbar::{read_numeric_csv, ConductanceMatrix, ExcitationMode};
use crate::device::{MosParams, Polarity};
use crate::error::Error;
use crate::network::energy::EnergyParams;
use crate::network::{Activation, LayerSpec};
use crate::neuron::{DacSpec, RgcParams};
use crate::report::{to_canonical_json, Format};
use crate::sar::PassOrder;
use crate::units::parse_quantity;
use crate::variability::MismatchSpec;

use super::syntax::{self, Node, Spanned};
use super::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Explicit,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpConfig {
    /// Input current for the operating point (A).
    pub i_in: f64,
    pub code_in: u32,
    pub code_out: u32,
    /// Calibrate to the SAR targets instead of using the codes above.
    pub calibrate: bool,
    /// Transfer-curve sweep half range (A) and point count.
    pub sweep_half: f64,
    pub sweep_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SarConfig {
    pub t_step: f64,
    pub vref_in: f64,
    pub vref_out: f64,
    pub grid_points: usize,
    pub grid_max_n: u32,
    pub order: PassOrder,
    pub comparator_offset: f64,
    pub verify: bool,
    /// Neurons in the calibrated array (mismatched when > 1).
    pub n_neurons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSection {
    pub runs: usize,
    pub calibrate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossbarConfig {
    pub g: ConductanceMatrix,
    pub g_min: f64,
    pub g_max: f64,
    pub mode: ExcitationMode,
    pub inputs: Vec<f64>,
    pub r_wire_row: f64,
    pub r_wire_col: f64,
    pub r_neuron_in: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityKind {
    IdealMath,
    CircuitIdeal,
    CircuitNonideal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Explicit(Vec<Vec<f64>>),
    /// `count` vectors uniform in [-1, 1] from the input stream of the seed.
    Random(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    pub bits: u32,
    pub g_min: f64,
    pub g_max: f64,
    pub v_read: f64,
    pub i_max: f64,
    pub fidelity: FidelityKind,
    pub r_wire_row: f64,
    pub r_wire_col: f64,
    pub calibrate: bool,
    pub inputs: InputSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub neuron: RgcParams,
    pub op: OpConfig,
    pub sar: SarConfig,
    pub mismatch: MismatchSpec,
    pub mc: McSection,
    pub crossbar: Option<CrossbarConfig>,
    pub network: Option<NetworkConfig>,
    pub energy: EnergyParams,
    pub output: OutputConfig,
    /// Key path to where its value came from.
    #[serde(skip)]
    pub provenance: BTreeMap<String, Provenance>,
    /// Canonical text of the explicit settings; parsing it yields this config.
    #[serde(skip)]
    pub source_text: String,
}

impl SimConfig {
    /// The reference preset with nothing overridden.
    pub fn reference() -> Self {
        parse_config("").expect("empty config is valid")
    }

    /// Canonical config text; `parse_config(&cfg.emit())` equals `cfg`.
    pub fn emit(&self) -> String {
        self.source_text.clone()
    }

    /// SHA-256 over the canonical JSON of the resolved settings.
    pub fn digest(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let hash = Sha256::digest(to_canonical_json(&v).as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance_of(&self, path: &str) -> Option<Provenance> {
        self.provenance.get(path).copied()
    }
}

pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    parse_with_base(text, Path::new("."))
}

/// Parses a file; relative file references resolve against its directory.
pub fn parse_config_file(path: &Path) -> Result<SimConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_with_base(&text, base).map_err(|e| {
        Error::Config(ConfigError::InFile {
            file: path.display().to_string(),
            source: Box::new(e),
        })
    })
}

fn parse_with_base(text: &str, base: &Path) -> Result<SimConfig, ConfigError> {
    let tree = syntax::parse(text)?;
    let mut ctx = Ctx {
        prov: BTreeMap::new(),
        base: base.to_path_buf(),
    };
    let cfg = build(&tree, &mut ctx)?;
    Ok(SimConfig {
        provenance: ctx.prov,
        source_text: syntax::emit(&tree),
        ..cfg
    })
}

struct Ctx {
    prov: BTreeMap<String, Provenance>,
    base: PathBuf,
}

struct Section<'a> {
    path: String,
    members: &'a [(String, Spanned)],
    known: Vec<&'static str>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_err(path: String, v: &Spanned, expected: &str) -> ConfigError {
    ConfigError::Type {
        path,
        line: v.line,
        col: v.col,
        expected: expected.into(),
        found: v.type_name().into(),
    }
}

fn range(path: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        path: path.into(),
        msg: msg.into(),
    }
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, v: Option<&'a Spanned>) -> Result<Self, ConfigError> {
        let path = path.into();
        let members: &[(String, Spanned)] = match v {
            None => &[],
            Some(Spanned {
                node: Node::Obj(m), ..
            }) => m,
            Some(other) => return Err(type_err(path, other, "object")),
        };
        Ok(Self {
            path,
            members,
            known: Vec::new(),
        })
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Spanned> {
        self.known.push(key);
        self.members.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn present(&self) -> bool {
        !self.members.is_empty()
    }

    fn sub(&mut self, key: &'static str) -> Result<Section<'a>, ConfigError> {
        let v = self.get(key);
        Section::new(join(&self.path, key), v)
    }

    fn mark(&self, ctx: &mut Ctx, key: &str, explicit: bool) {
        ctx.prov.insert(
            join(&self.path, key),
            if explicit {
                Provenance::Explicit
            } else {
                Provenance::Default
            },
        );
    }

    fn num(&mut self, ctx: &mut Ctx, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        let v = self.get(key);
        self.mark(ctx, key, v.is_some());
        match v {
            None => Ok(default),
            Some(Spanned {
                node: Node::Num(x), ..
            }) => Ok(*x),
            // Quoted quantities such as "20k" for strict-JSON configs.
            Some(Spanned {
                node: Node::Str(t),
                line,
                col,
            }) => parse_quantity(t).map_err(|e| ConfigError::Unit {
                path: join(&self.path, key),
                line: *line,
                col: *col,
                msg: e.to_string(),
            }),
            Some(other) => Err(type_err(join(&self.path, key), other, "number")),
        }
    }

    fn positive(
        &mut self,
        ctx: &mut Ctx,
        key: &'static str,
        default: f64,
    ) -> Result<f64, ConfigError> {
        let x = self.num(ctx, key, default)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(range(
                join(&self.path, key),
                format!("must be finite and > 0, got {x}"),
            ));
        }
        Ok(x)
    }

    fn non_negative(
        &mut self,
        ctx: &mut Ctx,
        key: &'static str,
        default: f64,
    ) -> Result<f64, ConfigError> {
        let x = self.num(ctx, key, default)?;
        if !(x >= 0.0 && x.is_finite()) {
            return Err(range(
                join(&self.path, key),
                format!("must be finite and >= 0, got {x}"),
            ));
        }
        Ok(x)
    }

    fn uint(&mut self, ctx: &mut Ctx, key: &'static str, default: u64) -> Result<u64, ConfigError> {
        let v = self.get(key);
        self.mark(ctx, key, v.is_some());
        match v {
            None => Ok(default),
            Some(
                s @ Spanned {
                    node: Node::Num(x), ..
                },
            ) => {
                if *x >= 0.0 && x.fract() == 0.0 && *x < 2f64.powi(64) {
                    Ok(*x as u64)
                } else {
                    Err(type_err(join(&self.path, key), s, "non-negative integer"))
                }
            }
            Some(other) => Err(type_err(
                join(&self.path, key),
                other,
                "non-negative integer",
            )),
        }
    }

    fn boolean(
        &mut self,
        ctx: &mut Ctx,
        key: &'static str,
        default: bool,
    ) -> Result<bool, ConfigError> {
        let v = self.get(key);
        self.mark(ctx, key, v.is_some());
        match v {
            None => Ok(default),
            Some(Spanned {
                node: Node::Bool(b),
                ..
            }) => Ok(*b),
            Some(other) => Err(type_err(join(&self.path, key), other, "boolean")),
        }
    }

    /// A string restricted to `choices`.
    fn choice(
        &mut self,
        ctx: &mut Ctx,
        key: &'static str,
        default: &'static str,
        choices: &[&'static str],
    ) -> Result<&'static str, ConfigError> {
        let v = self.get(key);
        self.mark(ctx, key, v.is_some());
        let s = match v {
            None => return Ok(default),
            Some(Spanned {
                node: Node::Str(s), ..
            }) => s,
            Some(other) => return Err(type_err(join(&self.path, key), other, "string")),
        };
        choices.iter().find(|c| **c == s).copied().ok_or_else(|| {
            range(
                join(&self.path, key),
                format!("`{s}` is not one of {}", choices.join(", ")),
            )
        })
    }

    /// Rejects members that no accessor asked for.
    fn finish(self) -> Result<(), ConfigError> {
        for (k, v) in self.members {
            if !self.known.iter().any(|n| n == k) {
                let suggestion = self
                    .known
                    .iter()
                    .map(|n| (strsim::jaro_winkler(k, n), *n))
                    .filter(|(score, _)| *score >= 0.75)
                    .max_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, n)| join(&self.path, n));
                return Err(ConfigError::UnknownKey {
                    path: join(&self.path, k),
                    line: v.line,
                    col: v.col,
                    suggestion,
                });
            }
        }
        Ok(())
    }
}

fn matrix(path: &str, v: &Spanned) -> Result<Vec<Vec<f64>>, ConfigError> {
    let Node::Arr(rows) = &v.node else {
        return Err(type_err(
            path.into(),
            v,
            "matrix (array of arrays) or CSV path",
        ));
    };
    rows.iter()
        .map(|r| match &r.node {
            Node::Arr(xs) => xs
                .iter()
                .map(|x| match x.node {
                    Node::Num(n) => Ok(n),
                    _ => Err(type_err(path.into(), x, "number")),
                })
                .collect(),
            _ => Err(type_err(path.into(), r, "array")),
        })
        .collect()
}

fn vector(path: &str, v: &Spanned) -> Result<Vec<f64>, ConfigError> {
    match &v.node {
        Node::Arr(xs) => xs
            .iter()
            .map(|x| match x.node {
                Node::Num(n) => Ok(n),
                _ => Err(type_err(path.into(), x, "number")),
            })
            .collect(),
        _ => Err(type_err(path.into(), v, "array of numbers")),
    }
}

/// Inline matrix or CSV file reference.
fn matrix_or_csv(ctx: &Ctx, path: &str, v: &Spanned) -> Result<Vec<Vec<f64>>, ConfigError> {
    match &v.node {
        Node::Str(file) => {
            let full = ctx.base.join(file);
            let f = std::fs::File::open(&full).map_err(|e| ConfigError::File {
                path: path.into(),
                file: full.display().to_string(),
                msg: e.to_string(),
            })?;
            read_numeric_csv(f).map_err(|e| ConfigError::File {
                path: path.into(),
                file: full.display().to_string(),
                msg: e.to_string(),
            })
        }
        _ => matrix(path, v),
    }
}

fn mos(ctx: &mut Ctx, mut s: Section, d: MosParams) -> Result<MosParams, ConfigError> {
    let polarity = match s.choice(ctx, "polarity", "", &["nmos", "pmos"])? {
        "nmos" => Polarity::Nmos,
        "pmos" => Polarity::Pmos,
        _ => d.polarity,
    };
    let m = MosParams {
        beta: s.num(ctx, "beta", d.beta)?,
        vt: s.num(ctx, "vt", d.vt)?,
        lambda: s.num(ctx, "lambda", d.lambda)?,
        polarity,
    };
    let path = s.path.clone();
    s.finish()?;
    m.validate().map_err(|e| range(path, e.to_string()))?;
    Ok(m)
}

fn dac(ctx: &mut Ctx, mut s: Section, d: DacSpec) -> Result<DacSpec, ConfigError> {
    let out = DacSpec {
        i_unit: s.positive(ctx, "i_unit", d.i_unit)?,
        nbits: s.uint(ctx, "nbits", u64::from(d.nbits))? as u32,
    };
    let path = s.path.clone();
    s.finish()?;
    out.validate().map_err(|e| range(path, e.to_string()))?;
    Ok(out)
}

fn neuron(ctx: &mut Ctx, mut s: Section) -> Result<RgcParams, ConfigError> {
    let d = RgcParams::reference();
    let p = RgcParams {
        m1: mos(ctx, s.sub("m1")?, d.m1)?,
        m2: mos(ctx, s.sub("m2")?, d.m2)?,
        m3: mos(ctx, s.sub("m3")?, d.m3)?,
        m5: mos(ctx, s.sub("m5")?, d.m5)?,
        ib: s.positive(ctx, "ib", d.ib)?,
        ib2: s.positive(ctx, "ib2", d.ib2)?,
        ro_b2: {
            let r = s.num(ctx, "ro_b2", d.ro_b2)?;
            if !(r > 0.0) {
                return Err(range(
                    "neuron.ro_b2",
                    "must be > 0 (inf for an ideal source)",
                ));
            }
            r
        },
        vc: s.num(ctx, "vc", d.vc)?,
        ic: s.positive(ctx, "ic", d.ic)?,
        vdd: s.positive(ctx, "vdd", d.vdd)?,
        vb3: s.num(ctx, "vb3", d.vb3)?,
        r_load: s.positive(ctx, "r_load", d.r_load)?,
        dac: dac(ctx, s.sub("dac")?, d.dac)?,
        dac_out: dac(ctx, s.sub("dac_out")?, d.dac_out)?,
    };
    s.finish()?;
    p.validate().map_err(|e| range("neuron", e.to_string()))?;
    Ok(p)
}

fn build(tree: &Spanned, ctx: &mut Ctx) -> Result<SimConfig, ConfigError> {
    let mut top = Section::new("", Some(tree))?;
    match top.choice(ctx, "preset", "reference", &["reference"])? {
        "reference" => {}
        _ => unreachable!(),
    }
    let seed = top.uint(ctx, "seed", 0)?;
    let mut neuron = neuron(ctx, top.sub("neuron")?)?;

    let op = {
        let mut s = top.sub("op")?;
        let o = OpConfig {
            i_in: s.num(ctx, "i_in", 0.0)?,
            code_in: s.uint(ctx, "code_in", 0)? as u32,
            code_out: s.uint(ctx, "code_out", 0)? as u32,
            calibrate: s.boolean(ctx, "calibrate", false)?,
            sweep_half: s.non_negative(ctx, "sweep_half", 2e-6)?,
            sweep_points: s.uint(ctx, "sweep_points", 21)? as usize,
        };
        s.finish()?;
        if o.code_in > neuron.dac.max_code() || o.code_out > neuron.dac_out.max_code() {
            return Err(range("op", "code exceeds the DAC range"));
        }
        o
    };

    let sar = {
        let mut s = top.sub("sar")?;
        // An explicit resolution re-splits both DACs at constant full scale.
        if s.get("nbits").is_some() {
            let bits = s.uint(ctx, "nbits", 0)? as u32;
            if !(1..=16).contains(&bits) {
                return Err(range("sar.nbits", "must be in [1, 16]"));
            }
            for d in [&mut neuron.dac, &mut neuron.dac_out] {
                let full = d.i_unit * f64::from(d.max_code());
                d.nbits = bits;
                d.i_unit = full / f64::from(d.max_code());
            }
        } else {
            s.mark(ctx, "nbits", false);
        }
        let order = match s.choice(
            ctx,
            "order",
            "input_then_output",
            &["input_then_output", "interleaved"],
        )? {
            "interleaved" => PassOrder::Interleaved,
            _ => PassOrder::InputThenOutput,
        };
        let c = SarConfig {
            t_step: s.non_negative(ctx, "t_step", 100e-9)?,
            vref_in: s.num(ctx, "vref_in", 0.65)?,
            vref_out: s.num(ctx, "vref_out", 0.92)?,
            grid_points: s.uint(ctx, "grid_points", 2001)? as usize,
            grid_max_n: s.uint(ctx, "grid_max_n", 16)? as u32,
            order,
            comparator_offset: s.num(ctx, "comparator_offset", 0.0)?,
            verify: s.boolean(ctx, "verify", false)?,
            n_neurons: s.uint(ctx, "n_neurons", 1)? as usize,
        };
        s.finish()?;
        if c.grid_points < 2 {
            return Err(range("sar.grid_points", "must be >= 2"));
        }
        if !(1..=52).contains(&c.grid_max_n) {
            return Err(range("sar.grid_max_n", "must be in [1, 52]"));
        }
        if c.n_neurons == 0 {
            return Err(range("sar.n_neurons", "must be >= 1"));
        }
        c
    };

    let mismatch = {
        let mut s = top.sub("mismatch")?;
        let d = MismatchSpec::default();
        let m = MismatchSpec {
            sigma_vt: s.non_negative(ctx, "sigma_vt", d.sigma_vt)?,
            sigma_beta_rel: s.non_negative(ctx, "sigma_beta_rel", d.sigma_beta_rel)?,
            sigma_load_rel: s.non_negative(ctx, "sigma_load_rel", d.sigma_load_rel)?,
        };
        s.finish()?;
        m
    };

    let mc = {
        let mut s = top.sub("mc")?;
        let m = McSection {
            runs: s.uint(ctx, "runs", 500)? as usize,
            calibrate: s.boolean(ctx, "calibrate", true)?,
        };
        s.finish()?;
        m
    };

    let crossbar = {
        let mut s = top.sub("crossbar")?;
        if s.present() {
            let g_rows = match (s.get("g"), s.get("csv")) {
                (Some(v), None) => matrix("crossbar.g", v)?,
                (None, Some(v)) => matrix_or_csv(ctx, "crossbar.csv", v)?,
                _ => return Err(range("crossbar", "give exactly one of `g` or `csv`")),
            };
            let g = ConductanceMatrix::from_rows(&g_rows)
                .map_err(|e| range("crossbar.g", e.to_string()))?;
            let rows = s.uint(ctx, "rows", g.n_rows() as u64)? as usize;
            let cols = s.uint(ctx, "cols", g.n_cols() as u64)? as usize;
            if (rows, cols) != (g.n_rows(), g.n_cols()) {
                return Err(range(
                    "crossbar",
                    format!(
                        "declared {rows}x{cols} but matrix is {}x{}",
                        g.n_rows(),
                        g.n_cols()
                    ),
                ));
            }
            let mode = match s.choice(ctx, "mode", "voltage", &["voltage", "current"])? {
                "current" => ExcitationMode::Current,
                _ => ExcitationMode::Voltage,
            };
            let inputs = match s.get("inputs") {
                Some(v) => vector("crossbar.inputs", v)?,
                None => vec![0.0; g.n_rows()],
            };
            s.mark(ctx, "inputs", s.members.iter().any(|(k, _)| k == "inputs"));
            if inputs.len() != g.n_rows() {
                return Err(range("crossbar.inputs", "length must equal the row count"));
            }
            let c = CrossbarConfig {
                g_min: s.non_negative(ctx, "g_min", 0.0)?,
                g_max: s.positive(ctx, "g_max", 1.0)?,
                mode,
                inputs,
                r_wire_row: s.non_negative(ctx, "r_wire_row", 0.0)?,
                r_wire_col: s.non_negative(ctx, "r_wire_col", 0.0)?,
                r_neuron_in: s.non_negative(ctx, "r_neuron_in", 0.0)?,
                g,
            };
            c.g.check_bounds(c.g_min, c.g_max)
                .map_err(|e| range("crossbar.g", e.to_string()))?;
            s.finish()?;
            Some(c)
        } else {
            s.finish()?;
            None
        }
    };

    let network = {
        let mut s = top.sub("network")?;
        if s.present() {
            let layers_v = s
                .get("layers")
                .ok_or_else(|| range("network.layers", "required"))?;
            let Node::Arr(items) = &layers_v.node else {
                return Err(type_err(
                    "network.layers".into(),
                    layers_v,
                    "array of layer objects",
                ));
            };
            let mut layers = Vec::with_capacity(items.len());
            for (k, item) in items.iter().enumerate() {
                let mut ls = Section::new(format!("network.layers[{k}]"), Some(item))?;
                let wpath = format!("network.layers[{k}].weights");
                let w = match ls.get("weights") {
                    Some(v) => matrix_or_csv(ctx, &wpath, v)?,
                    None => return Err(range(wpath, "required")),
                };
                let act = ls.choice(ctx, "activation", "threshold", &["linear", "threshold"])?;
                let threshold = ls.num(ctx, "threshold", 0.0)?;
                let activation = match act {
                    "linear" => Activation::Linear,
                    _ => Activation::Threshold { threshold },
                };
                let path = ls.path.clone();
                ls.finish()?;
                layers.push(LayerSpec::new(w, activation).map_err(|e| range(path, e.to_string()))?);
            }
            if layers.is_empty() {
                return Err(range("network.layers", "needs at least one layer"));
            }
            for (k, pair) in layers.windows(2).enumerate() {
                if pair[0].n_out() != pair[1].n_in() {
                    return Err(range(
                        format!("network.layers[{}]", k + 1),
                        format!(
                            "{} inputs but the previous layer has {} outputs",
                            pair[1].n_in(),
                            pair[0].n_out()
                        ),
                    ));
                }
            }
            let fidelity = match s.choice(
                ctx,
                "fidelity",
                "circuit_ideal",
                &["ideal_math", "circuit_ideal", "circuit_nonideal"],
            )? {
                "ideal_math" => FidelityKind::IdealMath,
                "circuit_nonideal" => FidelityKind::CircuitNonideal,
                _ => FidelityKind::CircuitIdeal,
            };
            let inputs = match s.get("inputs") {
                None => InputSource::Random(20),
                Some(Spanned {
                    node: Node::Num(n), ..
                }) if *n >= 0.0 && n.fract() == 0.0 => InputSource::Random(*n as usize),
                Some(v) => InputSource::Explicit(matrix_or_csv(ctx, "network.inputs", v)?),
            };
            s.mark(ctx, "inputs", s.members.iter().any(|(k, _)| k == "inputs"));
            if let InputSource::Explicit(rows) = &inputs {
                if rows.iter().any(|r| r.len() != layers[0].n_in()) {
                    return Err(range(
                        "network.inputs",
                        "each row needs one value per network input",
                    ));
                }
            }
            let c = NetworkConfig {
                bits: s.uint(ctx, "bits", 8)? as u32,
                g_min: s.positive(ctx, "g_min", 10e-9)?,
                g_max: s.positive(ctx, "g_max", 1e-6)?,
                v_read: s.positive(ctx, "v_read", 0.1)?,
                i_max: s.positive(ctx, "i_max", 2e-6)?,
                fidelity,
                r_wire_row: s.non_negative(ctx, "r_wire_row", 1.0)?,
                r_wire_col: s.non_negative(ctx, "r_wire_col", 1.0)?,
                calibrate: s.boolean(ctx, "calibrate", true)?,
                inputs,
                layers,
            };
            s.finish()?;
            if !(1..=24).contains(&c.bits) {
                return Err(range("network.bits", "must be in [1, 24]"));
            }
            if c.g_max <= c.g_min {
                return Err(range("network", "g_max must exceed g_min"));
            }
            Some(c)
        } else {
            s.finish()?;
            None
        }
    };

    let energy = {
        let mut s = top.sub("energy")?;
        let d = EnergyParams::default();
        let mut e = EnergyParams {
            t_eval: s.non_negative(ctx, "t_eval", d.t_eval)?,
            t_sar_step: s.non_negative(ctx, "t_sar_step", d.t_sar_step)?,
            p_neuron: s.non_negative(ctx, "p_neuron", d.p_neuron)?,
            p_sar: s.non_negative(ctx, "p_sar", d.p_sar)?,
            n_inferences: s.num(ctx, "n_inferences", d.n_inferences)?,
            e_mac: s.non_negative(ctx, "e_mac", d.e_mac)?,
            e_act: s.non_negative(ctx, "e_act", d.e_act)?,
            provenance: BTreeMap::new(),
        };
        for k in [
            "t_eval",
            "t_sar_step",
            "p_neuron",
            "p_sar",
            "n_inferences",
            "e_mac",
            "e_act",
        ] {
            let p = ctx.prov[&join("energy", k)];
            let tag = if p == Provenance::Explicit {
                "explicit"
            } else {
                "default"
            };
            e.provenance.insert(k.to_string(), tag.to_string());
        }
        s.finish()?;
        e.validate()
            .map_err(|err| range("energy", err.to_string()))?;
        e
    };

    let output = {
        let mut s = top.sub("output")?;
        let path = match s.get("path") {
            None => None,
            Some(Spanned {
                node: Node::Str(p), ..
            }) => Some(PathBuf::from(p)),
            Some(other) => return Err(type_err("output.path".into(), other, "string")),
        };
        s.mark(ctx, "path", path.is_some());
        let format = match s.choice(ctx, "format", "json", &["json", "csv", "text"])? {
            "csv" => Format::Csv,
            "text" => Format::Text,
            _ => Format::Json,
        };
        s.finish()?;
        OutputConfig { path, format }
    };

    top.finish()?;
    Ok(SimConfig {
        seed,
        neuron,
        op,
        sar,
        mismatch,
        mc,
        crossbar,
        network,
        energy,
        output,
        provenance: BTreeMap::new(),
        source_text: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_reference() {
        let c = parse_config("").unwrap();
        assert_eq!(c.neuron, RgcParams::reference());
        assert_eq!(c.provenance_of("neuron.ib"), Some(Provenance::Default));
        assert!(c.network.is_none());
    }

    #[test]
    fn suffixes_and_provenance() {
        let c = parse_config("neuron = { ib = 5u, vdd = 1 }").unwrap();
        assert_eq!(c.neuron.ib, 5e-6);
        assert_eq!(c.neuron.vdd, 1.0);
        assert_eq!(c.provenance_of("neuron.ib"), Some(Provenance::Explicit));
        assert_eq!(c.provenance_of("neuron.ib2"), Some(Provenance::Default));
    }

    #[test]
    fn unit_error_names_key() {
        match parse_config("neuron = { ib = 5 potato }") {
            Err(ConfigError::Unit { path, .. }) => assert_eq!(path, "neuron.ib"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_suggests() {
        match parse_config("neuron.vddd = 1") {
            Err(ConfigError::UnknownKey {
                path, suggestion, ..
            }) => {
                assert_eq!(path, "neuron.vddd");
                assert_eq!(suggestion.as_deref(), Some("neuron.vdd"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn range_violation() {
        assert!(matches!(
            parse_config("neuron.ib = -1u"),
            Err(ConfigError::Range { .. })
        ));
        assert!(matches!(
            parse_config("preset = other"),
            Err(ConfigError::Range { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let text = "seed = 3\nneuron = {ib = 5u, m2 = {lambda = 0}, ro_b2 = inf}\nsar.nbits = 5\n\
                    network = {layers = [{weights = [[1, -1], [0.5, 0]], activation = threshold}], inputs = 4}";
        let a = parse_config(text).unwrap();
        let b = parse_config(&a.emit()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn sar_nbits_keeps_full_scale() {
        let c = parse_config("sar.nbits = 8").unwrap();
        let r = RgcParams::reference();
        assert_eq!(c.neuron.dac.nbits, 8);
        let full = |d: &DacSpec| d.i_unit * f64::from(d.max_code());
        assert!((full(&c.neuron.dac) - full(&r.dac)).abs() < 1e-18);
    }

    #[test]
    fn quoted_quantity() {
        let cfg = parse_config(r#"{"neuron": {"r_load": "20K", "ib": "5u"}}"#).unwrap();
        assert_eq!((cfg.neuron.r_load, cfg.neuron.ib), (20e3, 5e-6));
        assert!(matches!(
            parse_config(r#"{"neuron": {"ib": "lots"}}"#),
            Err(ConfigError::Unit { .. })
        ));
    }
}
