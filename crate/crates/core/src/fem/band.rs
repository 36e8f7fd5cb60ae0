//! Banded storage and Gaussian elimination with partial pivoting.

/// Square matrix with `lower` sub- and `upper` super-diagonals, plus room for
/// the fill-in produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        BandMatrix {
            n,
            lower,
            upper,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.lower >= r && c <= r + self.upper + self.lower);
        r * self.width + c + self.lower - r
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.lower < r || c > r + self.upper + self.lower {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.lower >= r && c <= r + self.upper,
            "entry ({r}, {c}) outside band"
        );
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.data[i] = v;
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.lower);
                let hi = (r + self.upper + self.lower).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    /// Replaces row `r` by the identity row and moves column `r` times `value`
    /// into the right-hand side of every other row.
    pub fn impose_dirichlet(&mut self, rhs: &mut [f64], r: usize, value: f64) {
        let lo = r.saturating_sub(self.upper);
        let hi = (r + self.lower).min(self.n - 1);
        for row in lo..=hi {
            if row == r {
                continue;
            }
            let i = self.idx(row, r);
            rhs[row] -= self.data[i] * value;
            self.data[i] = 0.0;
        }
        let start = r * self.width;
        self.data[start..start + self.width]
            .iter_mut()
            .for_each(|v| *v = 0.0);
        self.set(r, r, 1.0);
        rhs[r] = value;
    }

    /// Solves A x = rhs in place, destroying the matrix. Returns `None` for a
    /// numerically singular system.
    pub fn solve_in_place(&mut self, rhs: &mut [f64]) -> Option<()> {
        let n = self.n;
        let reach = self.upper + self.lower;
        for k in 0..n {
            let last = (k + self.lower).min(n - 1);
            let mut pivot = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return None;
            }
            let right = (k + reach).min(n - 1);
            if pivot != k {
                for c in k..=right {
                    let a = self.idx(k, c);
                    let b = self.idx(pivot, c);
                    self.data.swap(a, b);
                }
                rhs.swap(k, pivot);
            }
            let diag = self.data[self.idx(k, k)];
            let span = right - k;
            let pivot_start = self.idx(k, k) + 1;
            let (head, tail) = self.data.split_at_mut((k + 1) * self.width);
            let pivot_row = &head[pivot_start..pivot_start + span];
            for r in k + 1..=last {
                // row r starts at column r - lower within its storage slot
                let base = (r - k - 1) * self.width + k + self.lower - r;
                let f = tail[base] / diag;
                if f == 0.0 {
                    continue;
                }
                tail[base] = 0.0;
                for (d, s) in tail[base + 1..base + 1 + span].iter_mut().zip(pivot_row) {
                    *d -= f * s;
                }
                rhs[r] -= f * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let right = (k + reach).min(n - 1);
            let start = self.idx(k, k);
            let row = &self.data[start + 1..start + 1 + right - k];
            let s = row.iter().zip(&rhs[k + 1..=right]).fold(rhs[k], |s, (a, x)| s - a * x);
            rhs[k] = s / self.data[start];
        }
        Some(())
    }
}
