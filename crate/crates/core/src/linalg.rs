//! Dense LU factorization with partial pivoting.
//!
//! Nodal systems here are at most a few thousand unknowns, so a row-major
//! dense factorization is sufficient and keeps results bit-deterministic.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] += v;
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }
}

/// Solves `a x = b` in place. On a zero pivot returns the offending column.
pub fn solve(mut a: DenseMatrix, mut b: Vec<f64>) -> Result<Vec<f64>, usize> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = scale * 1e-300_f64.max(f64::EPSILON * 1e-6);
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|r| (r, a.get(r, k).abs()))
            .fold(
                (k, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        if !(pmax > tiny) {
            return Err(k);
        }
        if piv != k {
            for c in 0..n {
                a.data.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a.get(k, k);
        for r in (k + 1)..n {
            let f = a.get(r, k) / d;
            if f == 0.0 {
                continue;
            }
            a.set(r, k, 0.0);
            let (top, bottom) = a.data.split_at_mut(r * n);
            let src = &top[k * n + k + 1..k * n + n];
            let dst = &mut bottom[k + 1..n];
            for (x, y) in dst.iter_mut().zip(src) {
                *x -= f * y;
            }
            b[r] -= f * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for (c, bc) in b.iter().enumerate().skip(k + 1) {
            s -= a.get(k, c) * bc;
        }
        b[k] = s / a.get(k, k);
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = DenseMatrix::zeros(3);
        let rows = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                a.set(r, c, *v);
            }
        }
        let x = solve(a, vec![8.0, -11.0, -3.0]).unwrap();
        for (got, want) in x.iter().zip([2.0, 3.0, -1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_column() {
        let mut a = DenseMatrix::zeros(2);
        a.set(0, 0, 1.0);
        a.set(1, 0, 2.0);
        assert_eq!(solve(a, vec![1.0, 2.0]), Err(1));
    }
}
