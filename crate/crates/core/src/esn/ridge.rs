use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Feature rows `[x; u]` with targets, capped as a ring.
///
/// The normal-equation sums `Φᵀ Φ` and `Φᵀ Y` are kept up to date as rows
/// enter and leave, so refitting costs one `(N+K)^3` solve regardless of
/// buffer length.
#[derive(Debug, Clone)]
pub struct TrainingBuffer {
    dim: usize,
    outputs: usize,
    capacity: usize,
    rows: VecDeque<(Vec<f64>, Vec<f64>)>,
    /// upper triangle is authoritative
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
}

impl TrainingBuffer {
    pub fn new(dim: usize, outputs: usize, capacity: usize) -> Self {
        TrainingBuffer {
            dim,
            outputs,
            capacity: capacity.max(1),
            rows: VecDeque::new(),
            gram: DMatrix::zeros(dim, dim),
            cross: DMatrix::zeros(dim, outputs),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.rows.iter().map(|(f, y)| (f.as_slice(), y.as_slice()))
    }

    pub fn push(&mut self, features: Vec<f64>, target: Vec<f64>) {
        assert_eq!(features.len(), self.dim, "feature length");
        assert_eq!(target.len(), self.outputs, "target length");
        if self.rows.len() == self.capacity {
            let (f, y) = self.rows.pop_front().expect("non-empty");
            self.accumulate(&f, &y, -1.0);
        }
        self.accumulate(&features, &target, 1.0);
        self.rows.push_back((features, target));
    }

    fn accumulate(&mut self, f: &[f64], y: &[f64], sign: f64) {
        for j in 0..self.dim {
            let fj = sign * f[j];
            if fj == 0.0 {
                continue;
            }
            let col = &mut self.gram.as_mut_slice()[j * self.dim..(j + 1) * self.dim];
            for i in 0..=j {
                col[i] += fj * f[i];
            }
        }
        for (l, &yl) in y.iter().enumerate() {
            for (j, &fj) in f.iter().enumerate() {
                self.cross[(j, l)] += sign * fj * yl;
            }
        }
    }

    /// `Φᵀ Φ` as a full symmetric matrix.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = self.gram.clone();
        for j in 0..self.dim {
            for i in 0..j {
                g[(j, i)] = g[(i, j)];
            }
        }
        g
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// Root-mean-square one-step error of a readout over the stored rows.
    pub fn rmse(&self, w_out: &DMatrix<f64>) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let mut sse = 0.0;
        for (f, y) in &self.rows {
            for (l, &yl) in y.iter().enumerate() {
                let pred: f64 = w_out.row(l).iter().zip(f).map(|(w, x)| w * x).sum();
                sse += (pred - yl).powi(2);
            }
        }
        (sse / (self.rows.len() * self.outputs) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitOutcome {
    Fitted(DMatrix<f64>),
    /// fewer rows than features; the previous readout should be kept
    InsufficientData {
        rows: usize,
        needed: usize,
    },
}

/// Ridge readout `W_out = Yᵀ Φ (Φᵀ Φ + βI)⁻¹`, via a Cholesky solve of the
/// normal equations.
pub fn fit_readout(buffer: &TrainingBuffer, ridge: f64) -> Result<FitOutcome> {
    if buffer.len() < buffer.dim {
        return Ok(FitOutcome::InsufficientData {
            rows: buffer.len(),
            needed: buffer.dim,
        });
    }
    let mut a = buffer.gram();
    for i in 0..buffer.dim {
        a[(i, i)] += ridge;
    }
    let max_diag = (0..buffer.dim).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let chol = Cholesky::new(a).ok_or(Error::Singular { ridge })?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d * d)
        .fold(f64::INFINITY, f64::min);
    if ridge == 0.0 && min_pivot <= 1e-13 * max_diag {
        return Err(Error::Singular { ridge });
    }
    let mut w = DMatrix::zeros(buffer.outputs, buffer.dim);
    for l in 0..buffer.outputs {
        let b = DVector::from_iterator(buffer.dim, buffer.cross.column(l).iter().copied());
        let sol = chol.solve(&b);
        w.row_mut(l).copy_from(&sol.transpose());
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { ridge });
    }
    Ok(FitOutcome::Fitted(w))
}
