//! Label-noise models: class-conditional transition matrices and injection.
//!
//! A transition matrix `T` is row-stochastic with `T[i][j] = P(observed = j |
//! true = i)`. Injection draws each observed label independently from the row
//! of its true label, using one derived substream per sample, so results do
//! not depend on how the loop is parallelized.

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::rng;

/// Row sums may deviate from 1 by at most this much.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: Vec<f64>,
    c: usize,
}

impl TransitionMatrix {
    /// Identity matrix: labels pass through unchanged.
    pub fn identity(c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::Invalid("transition matrix needs >= 1 class".into()));
        }
        let mut entries = vec![0.0; c * c];
        for i in 0..c {
            entries[i * c + i] = 1.0;
        }
        Ok(TransitionMatrix { entries, c })
    }

    /// Uniform (symmetric) flipping: stay with probability `1 - tau`, move to
    /// each other class with probability `tau / (c - 1)`.
    pub fn uniform(c: usize, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if c < 2 && tau > 0.0 {
            return Err(Error::Invalid(
                "uniform flipping with tau > 0 needs >= 2 classes".into(),
            ));
        }
        let mut m = TransitionMatrix::identity(c)?;
        if tau == 0.0 {
            return Ok(m);
        }
        let off = tau / (c - 1) as f64;
        for i in 0..c {
            for j in 0..c {
                m.entries[i * c + j] = if i == j { 1.0 - tau } else { off };
            }
        }
        m.warn_if_diagonal_weak();
        Ok(m)
    }

    /// Pair flipping: class `i` moves only to `pairing[i]` with probability
    /// `tau`. The default pairing is the cycle `i -> (i + 1) mod c`, which has
    /// no fixed points. A custom pairing must be a fixed-point-free map.
    pub fn pair(c: usize, tau: f64, pairing: Option<&[usize]>) -> Result<Self> {
        check_tau(tau)?;
        if c < 2 && tau > 0.0 {
            return Err(Error::Invalid(
                "pair flipping with tau > 0 needs >= 2 classes".into(),
            ));
        }
        let mut m = TransitionMatrix::identity(c)?;
        if tau == 0.0 {
            return Ok(m);
        }
        let default: Vec<usize> = (0..c).map(|i| (i + 1) % c).collect();
        let pairing = pairing.unwrap_or(&default);
        if pairing.len() != c {
            return Err(Error::Invalid(format!(
                "pairing has {} entries for {} classes",
                pairing.len(),
                c
            )));
        }
        for (i, &j) in pairing.iter().enumerate() {
            if j >= c {
                return Err(Error::Invalid(format!(
                    "pairing target {j} out of range for {c} classes"
                )));
            }
            if j == i {
                return Err(Error::Invalid(format!(
                    "pairing maps class {i} to itself; pair flipping needs a fixed-point-free map"
                )));
            }
            m.entries[i * c + i] = 1.0 - tau;
            m.entries[i * c + j] = tau;
        }
        m.warn_if_diagonal_weak();
        Ok(m)
    }

    /// Build from explicit rows, enforcing row-stochasticity.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.len();
        if c == 0 {
            return Err(Error::Invalid("transition matrix needs >= 1 class".into()));
        }
        let mut entries = Vec::with_capacity(c * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Invalid(format!(
                    "transition row has {} entries, expected {c}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        let m = TransitionMatrix { entries, c };
        m.validate()?;
        m.warn_if_diagonal_weak();
        Ok(m)
    }

    /// Check entries lie in `[0, 1]` and rows sum to 1 within tolerance.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.c {
            let row = self.row(i);
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(&v) {
                    return Err(Error::Invalid(format!(
                        "transition entry ({i},{j}) = {v} outside [0, 1]"
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "transition row {i} sums to {sum}, expected 1 within {ROW_SUM_TOLERANCE}"
                )));
            }
        }
        Ok(())
    }

    /// Identifiability wants every diagonal entry above 1/2; violations are
    /// legal inputs, so they only log a warning.
    fn warn_if_diagonal_weak(&self) {
        for i in 0..self.c {
            let d = self.get(i, i);
            if d <= 0.5 {
                log::warn!(
                    "transition diagonal ({i},{i}) = {d} <= 0.5; noise is not identifiable and theory guarantees do not apply"
                );
            }
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.c + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.c..(i + 1) * self.c]
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.c).map(|i| self.row(i).to_vec()).collect()
    }

    /// Binary off-diagonal rates `(t01, t10)` where `t01 = T[0][1]`.
    pub fn binary_rates(&self) -> Result<(f64, f64)> {
        if self.c != 2 {
            return Err(Error::Invalid(format!(
                "binary rates need a 2-class matrix, got {} classes",
                self.c
            )));
        }
        Ok((self.get(0, 1), self.get(1, 0)))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Invalid(format!("tau = {tau} outside [0, 1]")));
    }
    Ok(())
}

fn draw_from_row(row: &[f64], u: f64) -> u32 {
    let mut cum = 0.0;
    for (j, &p) in row.iter().enumerate() {
        cum += p;
        if u < cum {
            return j as u32;
        }
    }
    // Floating-point residue: fall back to the last positive-probability class.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1) as u32
}

/// Draw an observed label for each true label from `t`'s rows. Sample `i`
/// uses substream `i` of `seed`, so output is a pure function of
/// `(labels, t, seed)` regardless of thread count.
pub fn inject_noise(labels: &[u32], t: &TransitionMatrix, seed: u64) -> Result<Vec<u32>> {
    t.validate()?;
    let c = t.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::Invalid(format!(
            "label {bad} out of range for {c}-class transition matrix"
        )));
    }
    Ok(par::map_indexed(labels.len(), |i| {
        let row = t.row(labels[i] as usize);
        let u: f64 = rng::substream(seed, i as u64).gen();
        draw_from_row(row, u)
    }))
}
