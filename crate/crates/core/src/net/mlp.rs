use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};

pub const DEFAULT_WIDTH: usize = 512;

/// Two affine layers with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Leaves of one MLP on a tape.
#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn all(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

impl Mlp {
    /// Uniform fan-in initialization: every entry in `±1/√fan_in`.
    pub fn init(rng: &mut ChaCha8Rng, d_in: usize, hidden: usize, d_out: usize) -> Self {
        let b1 = 1.0 / (d_in.max(1) as f64).sqrt();
        let b2 = 1.0 / (hidden.max(1) as f64).sqrt();
        Self {
            w1: uniform(rng, hidden, d_in, b1),
            b1: uniform(rng, hidden, 1, b1).column(0).into_owned(),
            w2: uniform(rng, d_out, hidden, b2),
            b2: uniform(rng, d_out, 1, b2).column(0).into_owned(),
        }
    }

    /// Exact identity map: `W₁ = [I; −I]`, `W₂ = [I, −I]`, zero biases,
    /// using `relu(x) − relu(−x) = x`.
    pub fn identity(d: usize) -> Self {
        let eye = DMatrix::<f64>::identity(d, d);
        let mut w1 = DMatrix::zeros(2 * d, d);
        w1.rows_mut(0, d).copy_from(&eye);
        w1.rows_mut(d, d).copy_from(&(-&eye));
        let mut w2 = DMatrix::zeros(d, 2 * d);
        w2.columns_mut(0, d).copy_from(&eye);
        w2.columns_mut(d, d).copy_from(&(-&eye));
        Self {
            w1,
            b1: DVector::zeros(2 * d),
            w2,
            b2: DVector::zeros(d),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `(w1, b1, w2, b2)` as matrices (biases are columns).
    pub fn tensors(&self) -> [DMatrix<f64>; 4] {
        [
            self.w1.clone(),
            DMatrix::from_column_slice(self.b1.len(), 1, self.b1.as_slice()),
            self.w2.clone(),
            DMatrix::from_column_slice(self.b2.len(), 1, self.b2.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }

    /// Pre-activations of the hidden layer for column inputs.
    pub fn hidden_preactivation(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.w1 * x;
        for mut c in z.column_iter_mut() {
            c += &self.b1;
        }
        z
    }

    /// Applies the MLP to every column of `x`.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let hidden = self.hidden_preactivation(x).map(|v| v.max(0.0));
        let mut out = &self.w2 * hidden;
        for mut c in out.column_iter_mut() {
            c += &self.b2;
        }
        out
    }

    pub fn forward_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        self.forward(&m).column(0).into_owned()
    }

    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        let [w1, b1, w2, b2] = self.tensors();
        MlpVars {
            w1: tape.leaf(w1),
            b1: tape.leaf(b1),
            w2: tape.leaf(w2),
            b2: tape.leaf(b2),
        }
    }
}

pub(crate) fn mlp_on_tape(tape: &mut Tape, vars: &MlpVars, x: Var) -> Var {
    let z = tape.affine(vars.w1, x, vars.b1);
    let h = tape.relu(z);
    tape.affine(vars.w2, h, vars.b2)
}
