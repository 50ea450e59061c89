//! Crossbar output currents, ideal and with wire / neuron-input parasitics.
//!
//! Row `i` carries the input excitation, column `j` feeds neuron `j`. The
//! ideal model holds every column at virtual ground so `I_j = Σ_i G_ij V_i`.
//! The non-ideal model assembles the full resistive network and solves it
//! by nodal analysis.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

/// Row-major `n_rows x n_cols` conductances in siemens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceMatrix {
    n_rows: usize,
    n_cols: usize,
    g: Vec<f64>,
}

impl ConductanceMatrix {
    pub fn new(n_rows: usize, n_cols: usize, g: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::dim("crossbar needs at least one row and one column"));
        }
        if g.len() != n_rows * n_cols {
            return Err(Error::dim(format!(
                "{} conductances for a {n_rows}x{n_cols} crossbar",
                g.len()
            )));
        }
        if let Some(bad) = g.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "conductance at row {} col {} is {}",
                bad / n_cols,
                bad % n_cols,
                g[bad]
            )));
        }
        Ok(Self { n_rows, n_cols, g })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::dim("ragged conductance rows"));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub fn filled(n_rows: usize, n_cols: usize, g: f64) -> Result<Self> {
        Self::new(n_rows, n_cols, vec![g; n_rows * n_cols])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.g[row * self.n_cols + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.g
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.g[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// Checks every entry against the cell bounds `[g_min, g_max]`.
    pub fn check_bounds(&self, g_min: f64, g_max: f64) -> Result<()> {
        for (k, &v) in self.g.iter().enumerate() {
            if v < g_min || v > g_max {
                return Err(Error::invalid(format!(
                    "conductance {v:e} at row {} col {} outside [{g_min:e}, {g_max:e}]",
                    k / self.n_cols,
                    k % self.n_cols
                )));
            }
        }
        Ok(())
    }

    /// Reads a row-major CSV. A first line that does not parse as numbers is
    /// taken as a header. Engineering suffixes are accepted.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_numeric_csv(reader)?;
        Self::from_rows(&rows)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(f).map_err(|e| e.context(format!("{}", path.display())))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses a numeric CSV body into rows, skipping an optional header line.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().map(crate::units::parse_quantity).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::invalid(format!("csv line {}: {e}", line + 1)));
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationMode {
    /// Ideal voltage sources on the rows, values in volts.
    Voltage,
    /// Ideal current sources into the rows, values in amperes.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub mode: ExcitationMode,
    pub values: Vec<f64>,
}

impl Excitation {
    pub fn voltages(values: Vec<f64>) -> Self {
        Self {
            mode: ExcitationMode::Voltage,
            values,
        }
    }

    pub fn currents(values: Vec<f64>) -> Self {
        Self {
            mode: ExcitationMode::Current,
            values,
        }
    }

    fn check(&self, g: &ConductanceMatrix) -> Result<()> {
        if self.values.len() != g.n_rows() {
            return Err(Error::dim(format!(
                "{} excitation values for {} rows",
                self.values.len(),
                g.n_rows()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite excitation value"));
        }
        Ok(())
    }
}

/// Parasitics of a physical crossbar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonIdealSpec {
    /// Resistance of one row-wire segment between adjacent cross-points (Ω).
    pub r_wire_row: f64,
    /// Resistance of one column-wire segment (Ω).
    pub r_wire_col: f64,
    /// Input resistance of each column's neuron (Ω).
    pub r_neuron_in: Vec<f64>,
    /// DC offset of each neuron's input node from the ideal virtual ground (V).
    /// Empty means all zero.
    #[serde(default)]
    pub v_neuron_offset: Vec<f64>,
}

impl NonIdealSpec {
    pub fn ideal(n_cols: usize) -> Self {
        Self {
            r_wire_row: 0.0,
            r_wire_col: 0.0,
            r_neuron_in: vec![0.0; n_cols],
            v_neuron_offset: Vec::new(),
        }
    }

    pub fn uniform(n_cols: usize, r_wire: f64, r_neuron_in: f64) -> Self {
        Self {
            r_wire_row: r_wire,
            r_wire_col: r_wire,
            r_neuron_in: vec![r_neuron_in; n_cols],
            v_neuron_offset: Vec::new(),
        }
    }

    /// Every resistance multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            r_wire_row: self.r_wire_row * k,
            r_wire_col: self.r_wire_col * k,
            r_neuron_in: self.r_neuron_in.iter().map(|r| r * k).collect(),
            v_neuron_offset: self.v_neuron_offset.clone(),
        }
    }

    fn check(&self, n_cols: usize) -> Result<()> {
        if self.r_neuron_in.len() != n_cols {
            return Err(Error::dim(format!(
                "{} neuron input resistances for {n_cols} columns",
                self.r_neuron_in.len()
            )));
        }
        if !self.v_neuron_offset.is_empty() && self.v_neuron_offset.len() != n_cols {
            return Err(Error::dim("neuron offset vector length"));
        }
        let all = [self.r_wire_row, self.r_wire_col]
            .into_iter()
            .chain(self.r_neuron_in.iter().copied());
        for r in all {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::invalid(format!(
                    "resistance {r} must be finite and >= 0"
                )));
            }
        }
        if self.v_neuron_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite neuron offset"));
        }
        Ok(())
    }

    fn offset(&self, j: usize) -> f64 {
        self.v_neuron_offset.get(j).copied().unwrap_or(0.0)
    }
}

/// `I_j = Σ_i G_ij V_i` with every column at virtual ground.
///
/// Current-mode rows divide their injected current over the row's cells,
/// giving `V_i = I_i / Σ_j G_ij`.
pub fn output_currents_ideal(g: &ConductanceMatrix, x: &Excitation) -> Result<Vec<f64>> {
    x.check(g)?;
    let v = row_voltages_ideal(g, x)?;
    let mut out = vec![0.0; g.n_cols()];
    for (i, vi) in v.iter().enumerate() {
        if *vi == 0.0 {
            continue;
        }
        for (acc, gij) in out.iter_mut().zip(g.row(i)) {
            *acc += gij * vi;
        }
    }
    Ok(out)
}

fn row_voltages_ideal(g: &ConductanceMatrix, x: &Excitation) -> Result<Vec<f64>> {
    match x.mode {
        ExcitationMode::Voltage => Ok(x.values.clone()),
        ExcitationMode::Current => (0..g.n_rows())
            .map(|i| {
                let gsum: f64 = g.row(i).iter().sum();
                if gsum > 0.0 {
                    Ok(x.values[i] / gsum)
                } else if x.values[i] == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::Singular {
                        node: format!("row {i} (floating current-driven row)"),
                    })
                }
            })
            .collect(),
    }
}

/// Power dissipated in the cells of an ideal voltage-mode crossbar, `Σ_ij V_i² G_ij`.
pub fn ideal_dissipation(g: &ConductanceMatrix, x: &Excitation) -> Result<f64> {
    x.check(g)?;
    let v = row_voltages_ideal(g, x)?;
    Ok(v.iter()
        .enumerate()
        .map(|(i, vi)| vi * vi * g.row(i).iter().sum::<f64>())
        .sum())
}

/// Solved non-ideal crossbar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalSolution {
    /// Current entering each neuron input (A).
    pub currents: Vec<f64>,
    /// Total power delivered by all sources (W).
    pub source_power: f64,
    /// Total power dissipated in all resistive elements (W).
    pub dissipated: f64,
    pub n_unknowns: usize,
}

#[derive(Clone, Copy)]
enum Node {
    Known(f64),
    Unknown(usize),
}

struct Network {
    nodes: Vec<Node>,
    names: Vec<String>,
    n_unknowns: usize,
    edges: Vec<(usize, usize, f64)>,
    injections: Vec<(usize, f64)>,
}

impl Network {
    fn known(&mut self, v: f64, name: String) -> usize {
        self.nodes.push(Node::Known(v));
        self.names.push(name);
        self.nodes.len() - 1
    }

    fn unknown(&mut self, name: String) -> usize {
        self.nodes.push(Node::Unknown(self.n_unknowns));
        self.n_unknowns += 1;
        self.names.push(name);
        self.nodes.len() - 1
    }

    fn edge(&mut self, a: usize, b: usize, g: f64) {
        self.edges.push((a, b, g));
    }

    fn voltage(&self, x: &[f64], node: usize) -> f64 {
        match self.nodes[node] {
            Node::Known(v) => v,
            Node::Unknown(k) => x[k],
        }
    }
}

/// Solves the full resistive network: row wires, cross-point cells, column
/// wires, and each neuron's input resistance to its (possibly offset)
/// virtual-ground node. Zero resistances collapse their nodes.
pub fn solve_nonideal(
    g: &ConductanceMatrix,
    x: &Excitation,
    spec: &NonIdealSpec,
) -> Result<NodalSolution> {
    x.check(g)?;
    spec.check(g.n_cols())?;
    let (nr, nc) = (g.n_rows(), g.n_cols());
    let mut net = Network {
        nodes: Vec::new(),
        names: Vec::new(),
        n_unknowns: 0,
        edges: Vec::new(),
        injections: Vec::new(),
    };

    let sources: Vec<usize> = (0..nr)
        .map(|i| match x.mode {
            ExcitationMode::Voltage => net.known(x.values[i], format!("source row {i}")),
            ExcitationMode::Current => {
                let id = net.unknown(format!("source row {i}"));
                net.injections.push((id, x.values[i]));
                id
            }
        })
        .collect();

    let mut row_node = vec![0usize; nr * nc];
    for i in 0..nr {
        for j in 0..nc {
            row_node[i * nc + j] = if spec.r_wire_row == 0.0 {
                sources[i]
            } else {
                net.unknown(format!("row {i} col {j} (row wire)"))
            };
        }
        if spec.r_wire_row > 0.0 {
            let gw = 1.0 / spec.r_wire_row;
            net.edge(sources[i], row_node[i * nc], gw);
            for j in 1..nc {
                net.edge(row_node[i * nc + j - 1], row_node[i * nc + j], gw);
            }
        }
    }

    // Neuron input nodes and the r_in elements feeding their references.
    let mut neuron_node = vec![0usize; nc];
    let mut neuron_edge = vec![None; nc];
    for j in 0..nc {
        let r_in = spec.r_neuron_in[j];
        if r_in == 0.0 {
            neuron_node[j] = net.known(spec.offset(j), format!("neuron {j} input"));
        } else {
            neuron_node[j] = net.unknown(format!("neuron {j} input"));
            let reference = net.known(spec.offset(j), format!("neuron {j} reference"));
            neuron_edge[j] = Some(net.edges.len());
            net.edge(neuron_node[j], reference, 1.0 / r_in);
        }
    }

    let mut col_node = vec![0usize; nr * nc];
    for j in 0..nc {
        for i in 0..nr {
            col_node[i * nc + j] = if spec.r_wire_col == 0.0 {
                neuron_node[j]
            } else {
                net.unknown(format!("row {i} col {j} (column wire)"))
            };
        }
        if spec.r_wire_col > 0.0 {
            let gw = 1.0 / spec.r_wire_col;
            for i in 1..nr {
                net.edge(col_node[(i - 1) * nc + j], col_node[i * nc + j], gw);
            }
            net.edge(col_node[(nr - 1) * nc + j], neuron_node[j], gw);
        }
    }

    for i in 0..nr {
        for j in 0..nc {
            net.edge(row_node[i * nc + j], col_node[i * nc + j], g.get(i, j));
        }
    }

    let n = net.n_unknowns;
    let mut a = DenseMatrix::zeros(n);
    let mut b = vec![0.0; n];
    for &(p, q, ge) in &net.edges {
        match (net.nodes[p], net.nodes[q]) {
            (Node::Unknown(u), Node::Unknown(w)) => {
                a.add(u, u, ge);
                a.add(w, w, ge);
                a.add(u, w, -ge);
                a.add(w, u, -ge);
            }
            (Node::Unknown(u), Node::Known(v)) | (Node::Known(v), Node::Unknown(u)) => {
                a.add(u, u, ge);
                b[u] += ge * v;
            }
            (Node::Known(_), Node::Known(_)) => {}
        }
    }
    for &(node, i) in &net.injections {
        if let Node::Unknown(u) = net.nodes[node] {
            b[u] += i;
        }
    }
    let sol = linalg::solve(a, b).map_err(|k| {
        let name = net
            .nodes
            .iter()
            .position(|nd| matches!(nd, Node::Unknown(u) if *u == k))
            .map(|id| net.names[id].clone())
            .unwrap_or_else(|| format!("unknown {k}"));
        Error::Singular { node: name }
    })?;

    let currents = (0..nc)
        .map(|j| match neuron_edge[j] {
            Some(e) => {
                let (p, q, ge) = net.edges[e];
                ge * (net.voltage(&sol, p) - net.voltage(&sol, q))
            }
            None => {
                let nj = neuron_node[j];
                net.edges
                    .iter()
                    .map(|&(p, q, ge)| {
                        if q == nj && p != nj {
                            ge * (net.voltage(&sol, p) - net.voltage(&sol, q))
                        } else if p == nj && q != nj {
                            ge * (net.voltage(&sol, q) - net.voltage(&sol, p))
                        } else {
                            0.0
                        }
                    })
                    .sum()
            }
        })
        .collect();

    let mut dissipated = 0.0;
    let mut source_power = 0.0;
    for &(p, q, ge) in &net.edges {
        let (vp, vq) = (net.voltage(&sol, p), net.voltage(&sol, q));
        let i = ge * (vp - vq);
        dissipated += i * (vp - vq);
        // Known nodes are ideal voltage sources: they deliver V times the
        // current leaving them into the network.
        if let Node::Known(v) = net.nodes[p] {
            source_power += v * i;
        }
        if let Node::Known(v) = net.nodes[q] {
            source_power -= v * i;
        }
    }
    for &(node, i) in &net.injections {
        source_power += net.voltage(&sol, node) * i;
    }

    Ok(NodalSolution {
        currents,
        source_power,
        dissipated,
        n_unknowns: n,
    })
}

pub fn output_currents_nonideal(
    g: &ConductanceMatrix,
    x: &Excitation,
    spec: &NonIdealSpec,
) -> Result<Vec<f64>> {
    Ok(solve_nonideal(g, x, spec)?.currents)
}

/// Per-column `|I_nonideal - I_ideal| / |I_ideal|`; zero where both vanish.
pub fn dot_product_error(
    g: &ConductanceMatrix,
    x: &Excitation,
    spec: &NonIdealSpec,
) -> Result<Vec<f64>> {
    let ideal = output_currents_ideal(g, x)?;
    let real = output_currents_nonideal(g, x, spec)?;
    Ok(ideal
        .iter()
        .zip(&real)
        .map(|(i, r)| {
            let d = (r - i).abs();
            if d == 0.0 {
                0.0
            } else if *i == 0.0 {
                f64::INFINITY
            } else {
                d / i.abs()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn example() -> ConductanceMatrix {
        ConductanceMatrix::from_rows(&[vec![1e-3, 2e-3], vec![3e-3, 4e-3]]).unwrap()
    }

    #[test]
    fn two_by_two_dot_product() {
        let i = output_currents_ideal(&example(), &Excitation::voltages(vec![0.1, 0.2])).unwrap();
        assert!(rel(i[0], 0.7e-3) < 1e-12);
        assert!(rel(i[1], 1.0e-3) < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let i = output_currents_ideal(&example(), &Excitation::voltages(vec![0.0, 0.0])).unwrap();
        assert_eq!(i, vec![0.0, 0.0]);
    }

    #[test]
    fn one_hot_on_diagonal() {
        let g = ConductanceMatrix::from_rows(&[
            vec![5e-4, 0.0, 0.0],
            vec![0.0, 5e-4, 0.0],
            vec![0.0, 0.0, 5e-4],
        ])
        .unwrap();
        let i = output_currents_ideal(&g, &Excitation::voltages(vec![0.0, 1.0, 0.0])).unwrap();
        assert_eq!(i, vec![0.0, 5e-4, 0.0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(
            output_currents_ideal(&example(), &Excitation::voltages(vec![0.1])),
            Err(Error::Dimension(_))
        ));
        let spec = NonIdealSpec::uniform(3, 1.0, 1.0);
        assert!(matches!(
            output_currents_nonideal(&example(), &Excitation::voltages(vec![0.1, 0.2]), &spec),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn degenerate_spec_matches_ideal() {
        let x = Excitation::voltages(vec![0.1, 0.2]);
        let a = output_currents_ideal(&example(), &x).unwrap();
        let b = output_currents_nonideal(&example(), &x, &NonIdealSpec::ideal(2)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!(rel(*q, *p) < 1e-12);
        }
        let e = dot_product_error(&example(), &x, &NonIdealSpec::ideal(2)).unwrap();
        assert!(e.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn single_cell_series_divider() {
        let g = ConductanceMatrix::from_rows(&[vec![1e-3]]).unwrap();
        let x = Excitation::voltages(vec![1.0]);
        let spec = NonIdealSpec::uniform(1, 0.0, 1e3);
        let i = output_currents_nonideal(&g, &x, &spec).unwrap();
        assert!(rel(i[0], 0.5e-3) < 1e-12);
        let e = dot_product_error(&g, &x, &spec).unwrap();
        assert!(rel(e[0], 0.5) < 1e-12);
    }

    #[test]
    fn neuron_offset_shifts_column_voltage() {
        // 1 mS cell, 1 V drive, neuron node held at 0.1 V: I = 0.9 mA.
        let g = ConductanceMatrix::from_rows(&[vec![1e-3]]).unwrap();
        let mut spec = NonIdealSpec::ideal(1);
        spec.v_neuron_offset = vec![0.1];
        let s = solve_nonideal(&g, &Excitation::voltages(vec![1.0]), &spec).unwrap();
        assert!(rel(s.currents[0], 0.9e-3) < 1e-12);
        assert!(rel(s.dissipated, s.source_power) < 1e-12);
    }

    #[test]
    fn current_mode_ideal_divides_row_current() {
        let i = output_currents_ideal(&example(), &Excitation::currents(vec![3e-6, 0.0])).unwrap();
        assert!(rel(i[0], 1e-6) < 1e-12);
        assert!(rel(i[1], 2e-6) < 1e-12);
        let n = output_currents_nonideal(
            &example(),
            &Excitation::currents(vec![3e-6, 0.0]),
            &NonIdealSpec::uniform(2, 0.0, 0.0),
        )
        .unwrap();
        assert!(rel(n[0], 1e-6) < 1e-12);
    }

    #[test]
    fn floating_current_row_is_singular() {
        let g = ConductanceMatrix::from_rows(&[vec![0.0, 0.0], vec![1e-3, 1e-3]]).unwrap();
        let r = output_currents_nonideal(
            &g,
            &Excitation::currents(vec![1e-6, 1e-6]),
            &NonIdealSpec::uniform(2, 0.0, 10.0),
        );
        match r {
            Err(Error::Singular { node }) => assert!(node.contains("row 0"), "{node}"),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn csv_with_and_without_header() {
        let a = ConductanceMatrix::read_csv("g0,g1\n1m,2m\n3m,4m\n".as_bytes()).unwrap();
        let b = ConductanceMatrix::read_csv("0.001,0.002\n0.003,0.004\n".as_bytes()).unwrap();
        assert_eq!(a.n_rows(), 2);
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!(rel(*p, *q) < 1e-15);
        }
        let back = ConductanceMatrix::read_csv(b.to_csv().as_bytes()).unwrap();
        assert_eq!(back, b);
        assert!(ConductanceMatrix::read_csv("1,2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn bounds_check() {
        assert!(example().check_bounds(1e-6, 1e-2).is_ok());
        assert!(example().check_bounds(2e-3, 1e-2).is_err());
    }
}
