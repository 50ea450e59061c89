//! Independent reference implementations for the integration tests.
//!
//! Nothing here calls the solvers under test: the device law is re-derived,
//! the neuron is solved by nested bisection, and the crossbar by a separate
//! nodal assembly factored with nalgebra.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use xbarsim::crossbar::ConductanceMatrix;
use xbarsim::neuron::RgcParams;

/// Square-law NMOS current, forward bias only (`vds >= 0`).
pub fn square_law(beta: f64, vt: f64, lambda: f64, vgs: f64, vds: f64) -> f64 {
    let vov = vgs - vt;
    if vov <= 0.0 {
        0.0
    } else if vds < vov {
        beta * (vov * vds - 0.5 * vds * vds)
    } else {
        0.5 * beta * vov * vov * (1.0 + lambda * vds)
    }
}

/// Root of an increasing function by 200 halvings.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) <= 0.0 && f(hi) >= 0.0, "no bracket on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Node voltages `[v_in, v_g1, v_mid, v_out]` of the neuron.
///
/// M1 carries `ib - i_in`, which fixes `v_out` through the load and `v_mid`
/// through M3. For a trial `v_in`, M1's gate follows from its current; the
/// remaining unknown is the balance of M2 against its load.
pub fn neuron_oracle(p: &RgcParams, i_in: f64, i_dac: f64, i_dac_out: f64) -> [f64; 4] {
    let i1 = p.ib - i_in;
    let v_out = p.vdd - p.r_load * (i1 - i_dac_out);
    let (m1, m2, m3) = (p.m1, p.m2, p.m3);
    let v_mid = bisect_increasing(
        |vm| i1 - square_law(m3.beta, m3.vt, m3.lambda, p.vb3 - vm, v_out - vm),
        -1.0,
        (p.vb3 - m3.vt).min(v_out),
    );
    let gate1 = |v_in: f64| {
        bisect_increasing(
            |vg| square_law(m1.beta, m1.vt, m1.lambda, vg - v_in, v_mid - v_in) - i1,
            v_in + m1.vt,
            v_in + m1.vt + 50.0,
        )
    };
    let g_b2 = if p.ro_b2.is_finite() {
        1.0 / p.ro_b2
    } else {
        0.0
    };
    let v_in = bisect_increasing(
        |vi| {
            let vg = gate1(vi);
            let load = p.ib2 + i_dac + (p.vdd - vg) * g_b2;
            square_law(m2.beta, m2.vt, m2.lambda, vi, vg) - load
        },
        m2.vt,
        v_mid - 0.05,
    );
    [v_in, gate1(v_in), v_mid, v_out]
}

/// `Σ_i G_ij V_i` by plain loops.
pub fn dense_dot(g: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n_cols = g[0].len();
    (0..n_cols)
        .map(|j| g.iter().zip(v).map(|(row, vi)| row[j] * vi).sum())
        .collect()
}

pub struct CrossbarOracle {
    pub currents: Vec<f64>,
    pub source_power: f64,
    pub dissipated: f64,
}

/// Nodal solve of a voltage-driven crossbar with every wire segment and
/// neuron resistance strictly positive.
///
/// Unknowns: row-wire nodes `(i, j)`, then column-wire nodes `(i, j)`, then
/// neuron input nodes `j`. Row `i` is driven at its left end; column `j`
/// drains from its bottom cell through one more segment into neuron `j`,
/// whose input resistance returns to `offset[j]`.
pub fn crossbar_oracle(
    g: &[Vec<f64>],
    v: &[f64],
    r_row: f64,
    r_col: f64,
    r_in: &[f64],
    offset: &[f64],
) -> CrossbarOracle {
    let nr = g.len();
    let nc = g[0].len();
    let row = |i: usize, j: usize| i * nc + j;
    let col = |i: usize, j: usize| nr * nc + i * nc + j;
    let neu = |j: usize| 2 * nr * nc + j;
    let n = 2 * nr * nc + nc;
    let mut y = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let stamp = |y: &mut DMatrix<f64>, a: usize, b: usize, ge: f64| {
        y[(a, a)] += ge;
        y[(b, b)] += ge;
        y[(a, b)] -= ge;
        y[(b, a)] -= ge;
    };
    let (gr, gc) = (1.0 / r_row, 1.0 / r_col);
    for i in 0..nr {
        y[(row(i, 0), row(i, 0))] += gr;
        rhs[row(i, 0)] += gr * v[i];
        for j in 1..nc {
            stamp(&mut y, row(i, j - 1), row(i, j), gr);
        }
        for j in 0..nc {
            stamp(&mut y, row(i, j), col(i, j), g[i][j]);
        }
    }
    for j in 0..nc {
        for i in 1..nr {
            stamp(&mut y, col(i - 1, j), col(i, j), gc);
        }
        stamp(&mut y, col(nr - 1, j), neu(j), gc);
        y[(neu(j), neu(j))] += 1.0 / r_in[j];
        rhs[neu(j)] += offset[j] / r_in[j];
    }
    let x = y.lu().solve(&rhs).expect("oracle system is nonsingular");

    let currents: Vec<f64> = (0..nc).map(|j| (x[neu(j)] - offset[j]) / r_in[j]).collect();
    let mut dissipated = 0.0;
    let mut source_power = 0.0;
    for i in 0..nr {
        let i_src = (v[i] - x[row(i, 0)]) * gr;
        source_power += v[i] * i_src;
        dissipated += (v[i] - x[row(i, 0)]).powi(2) * gr;
        for j in 1..nc {
            dissipated += (x[row(i, j - 1)] - x[row(i, j)]).powi(2) * gr;
        }
        for j in 0..nc {
            dissipated += (x[row(i, j)] - x[col(i, j)]).powi(2) * g[i][j];
        }
    }
    for j in 0..nc {
        for i in 1..nr {
            dissipated += (x[col(i - 1, j)] - x[col(i, j)]).powi(2) * gc;
        }
        dissipated += (x[col(nr - 1, j)] - x[neu(j)]).powi(2) * gc;
        dissipated += currents[j] * currents[j] * r_in[j];
        // The reference absorbs the neuron current at its own potential.
        source_power -= offset[j] * currents[j];
    }
    CrossbarOracle {
        currents,
        source_power,
        dissipated,
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, nr: usize, nc: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..nr)
        .map(|_| (0..nc).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

pub fn to_matrix(rows: &[Vec<f64>]) -> ConductanceMatrix {
    ConductanceMatrix::from_rows(rows).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Strictly increasing plant over `2^nbits` codes with random step sizes.
pub fn random_monotone_plant<R: Rng>(rng: &mut R, nbits: u32) -> Vec<f64> {
    let n = 1usize << nbits;
    let mut v = Vec::with_capacity(n);
    let mut acc = rng.random_range(-1.0..1.0);
    for _ in 0..n {
        v.push(acc);
        acc += rng.random_range(1e-4..1e-2);
    }
    v
}

/// `Σ_i x_i w_ij` followed by `z >= θ` for threshold layers.
pub fn dense_forward(layers: &[(Vec<Vec<f64>>, Option<f64>)], x: &[f64]) -> Vec<Vec<f64>> {
    let mut cur = x.to_vec();
    let mut pre = Vec::new();
    for (w, th) in layers {
        let z = dense_dot(w, &cur);
        cur = match th {
            Some(t) => z.iter().map(|v| if *v >= *t { 1.0 } else { 0.0 }).collect(),
            None => z.clone(),
        };
        pre.push(z);
    }
    pre
}
