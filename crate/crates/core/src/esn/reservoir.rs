use nalgebra::{DMatrix, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EsnHyper;
use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// Row-compressed sparse square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j as u32);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k] as usize)] = self.vals[k];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out[i] += sum_j W[i,j] * x[j]`
    #[inline]
    pub fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *o += acc;
        }
    }

    /// Batched product over `lanes` interleaved vectors: `x[j * lanes + s]`.
    #[inline]
    pub(crate) fn mul_add_lanes(&self, lanes: usize, x: &[f64], out: &mut [f64]) {
        match lanes {
            1 => self.mul_add(x, out),
            2 => self.mul_add_fixed::<2>(x, out),
            4 => self.mul_add_fixed::<4>(x, out),
            6 => self.mul_add_fixed::<6>(x, out),
            8 => self.mul_add_fixed::<8>(x, out),
            _ => {
                for i in 0..self.dim {
                    let o = &mut out[i * lanes..(i + 1) * lanes];
                    for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                        let w = self.vals[k];
                        let xj = &x[self.cols[k] as usize * lanes..][..lanes];
                        for (acc, &v) in o.iter_mut().zip(xj) {
                            *acc += w * v;
                        }
                    }
                }
            }
        }
    }

    fn mul_add_fixed<const L: usize>(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            let mut acc = [0.0; L];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.vals[k];
                let xj: &[f64; L] = x[self.cols[k] as usize * L..][..L]
                    .try_into()
                    .expect("lane width");
                for s in 0..L {
                    acc[s] += w * xj[s];
                }
            }
            for (o, a) in out[i * L..(i + 1) * L].iter_mut().zip(acc) {
                *o += a;
            }
        }
    }

    fn scale(&mut self, f: f64) {
        for v in &mut self.vals {
            *v *= f;
        }
    }
}

/// Largest eigenvalue modulus of a square matrix, from its real Schur form.
pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let schur = Schur::try_new(m.clone(), 1e-14, SCHUR_MAX_ITER).ok_or(Error::NoConvergence {
        iterations: SCHUR_MAX_ITER,
    })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Fixed reservoir weights plus the learned readout.
#[derive(Debug, Clone)]
pub struct EsnWeights {
    /// N x K, row-major
    pub(crate) w_in: Vec<f64>,
    pub(crate) w: SparseMatrix,
    /// L x (N + K), set by fitting
    pub(crate) w_out: Option<DMatrix<f64>>,
    pub(crate) n: usize,
    pub(crate) k: usize,
}

impl EsnWeights {
    pub fn reservoir_size(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.k
    }

    pub fn input_weights(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.k, &self.w_in)
    }

    pub fn reservoir(&self) -> &SparseMatrix {
        &self.w
    }

    pub fn w_out(&self) -> Option<&DMatrix<f64>> {
        self.w_out.as_ref()
    }

    pub fn set_w_out(&mut self, w_out: DMatrix<f64>) -> Result<()> {
        if w_out.ncols() != self.n + self.k {
            return Err(Error::InvalidInput(format!(
                "readout has {} columns, expected {}",
                w_out.ncols(),
                self.n + self.k
            )));
        }
        self.w_out = Some(w_out);
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.w_out.is_some()
    }
}

/// Draws `W_in` uniform in `[-input_scale, input_scale]` and a sparse `W`
/// with uniform `[-1, 1]` entries, rescaled to the target spectral radius.
pub fn init_esn(hyper: &EsnHyper, seed: u64) -> Result<EsnWeights> {
    hyper.validate()?;
    let (n, k) = (hyper.reservoir_size, hyper.input_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_in: Vec<f64> = (0..n * k)
        .map(|_| rng.gen_range(-hyper.input_scale..=hyper.input_scale))
        .collect();

    let mut dense = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if rng.gen_bool(hyper.connectivity) {
                dense[(i, j)] = rng.gen_range(-1.0..=1.0);
            }
        }
    }
    let radius = spectral_radius(&dense)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reservoir with seed {seed} has zero spectral radius; raise connectivity"
        )));
    }
    let mut w = SparseMatrix::from_dense(&dense);
    w.scale(hyper.spectral_radius / radius);
    Ok(EsnWeights {
        w_in,
        w,
        w_out: None,
        n,
        k,
    })
}

/// Hidden activations, the last input and a step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t: usize,
}

impl EsnState {
    pub fn zeros(n: usize, k: usize) -> Self {
        EsnState {
            x: vec![0.0; n],
            u: vec![0.0; k],
            t: 0,
        }
    }

    /// `[x; u]`
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.x.len() + self.u.len());
        f.extend_from_slice(&self.x);
        f.extend_from_slice(&self.u);
        f
    }
}

/// `tanh` through a single `exp`; within one ulp of `f64::tanh` and about
/// twice as fast, which matters because rollouts are dominated by it.
#[inline]
pub fn activation(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// One leaky update with input `u` (already normalized).
pub fn update_state(state: &EsnState, weights: &EsnWeights, u: &[f64], leak: f64) -> EsnState {
    let mut next = state.clone();
    advance_in_place(&mut next, weights, u, leak);
    next
}

pub(crate) fn advance_in_place(state: &mut EsnState, weights: &EsnWeights, u: &[f64], leak: f64) {
    let (n, k) = (weights.n, weights.k);
    debug_assert_eq!(u.len(), k);
    let mut pre = vec![0.0; n];
    for (i, p) in pre.iter_mut().enumerate() {
        *p = weights.w_in[i * k..(i + 1) * k]
            .iter()
            .zip(u)
            .map(|(w, v)| w * v)
            .sum();
    }
    weights.w.mul_add(&state.x, &mut pre);
    for (x, p) in state.x.iter_mut().zip(&pre) {
        *x = (1.0 - leak) * *x + leak * activation(*p);
    }
    state.u.copy_from_slice(u);
    state.t += 1;
}

/// `W_out [x; u]`, in normalized output units.
pub fn readout(state: &EsnState, weights: &EsnWeights) -> Result<Vec<f64>> {
    let w_out = weights.w_out.as_ref().ok_or(Error::NotFitted)?;
    let n = weights.n;
    Ok((0..w_out.nrows())
        .map(|l| {
            let row = w_out.row(l);
            let hidden: f64 = (0..n).map(|j| row[j] * state.x[j]).sum();
            let input: f64 = state
                .u
                .iter()
                .enumerate()
                .map(|(j, u)| row[n + j] * u)
                .sum();
            hidden + input
        })
        .collect())
}
