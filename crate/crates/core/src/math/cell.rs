use super::{check_dim, check_finite, dot, sigmoid, Mat, MathError, SplitRng};

/// Gate order inside the stacked weight matrix.
const INPUT_GATE: usize = 0;
const FORGET_GATE: usize = 1;
const OUTPUT_GATE: usize = 2;
const CANDIDATE: usize = 3;

/// Parameters of an LSTM-style gated cell with hidden size `N` and input size `I`.
///
/// The four gate matrices (input, forget, output, candidate), each `N x (I+N)`
/// acting on `[x; h]`, are stacked row-wise into one `4N x (I+N)` matrix; the
/// biases likewise into one `4N` vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedCellParams {
    hidden: usize,
    input: usize,
    weights: Mat,
    bias: Vec<f32>,
}

impl GatedCellParams {
    pub fn param_count(hidden: usize, input: usize) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            hidden,
            input,
            weights: Mat::zeros(4 * hidden, input + hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Weights ~ N(0, std^2), biases zero except the forget gate at 1.0.
    pub fn init(hidden: usize, input: usize, std: f32, rng: &mut SplitRng) -> Self {
        let mut p = Self::zeros(hidden, input);
        rng.fill_normal(p.weights.as_mut_slice(), std);
        p.bias[FORGET_GATE * hidden..(FORGET_GATE + 1) * hidden].fill(1.0);
        p
    }

    /// Reads weights (row-major) followed by biases.
    pub fn from_flat(hidden: usize, input: usize, flat: &[f32]) -> Result<Self, MathError> {
        check_dim("GatedCellParams::from_flat", Self::param_count(hidden, input), flat.len())?;
        let nw = 4 * hidden * (input + hidden);
        Ok(Self {
            hidden,
            input,
            weights: Mat::from_vec(4 * hidden, input + hidden, flat[..nw].to_vec())?,
            bias: flat[nw..].to_vec(),
        })
    }

    pub fn write_flat(&self, out: &mut Vec<f32>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// `N x (I+N)` weight block of one gate (0 input, 1 forget, 2 output, 3 candidate).
    pub fn gate_weights(&self, gate: usize) -> Mat {
        let cols = self.input + self.hidden;
        let rows = &self.weights.as_slice()[gate * self.hidden * cols..(gate + 1) * self.hidden * cols];
        Mat::from_vec(self.hidden, cols, rows.to_vec()).expect("gate block shape")
    }

    /// One cell update: returns `(h', c')`.
    pub fn step(&self, h: &[f32], c: &[f32], x: &[f32]) -> Result<(Vec<f32>, Vec<f32>), MathError> {
        check_dim("gated cell: h", self.hidden, h.len())?;
        check_dim("gated cell: c", self.hidden, c.len())?;
        check_dim("gated cell: x", self.input, x.len())?;
        check_finite("gated cell inputs", h)?;
        check_finite("gated cell inputs", c)?;
        check_finite("gated cell inputs", x)?;
        let mut xh = Vec::with_capacity(self.input + self.hidden);
        xh.extend_from_slice(x);
        xh.extend_from_slice(h);
        let mut pre = vec![0.0; 4 * self.hidden];
        self.weights.affine_into(&self.bias, &xh, &mut pre);
        let mut h_out = vec![0.0; self.hidden];
        let mut c_out = c.to_vec();
        self.apply_gates(&pre, &mut h_out, &mut c_out);
        check_finite("gated cell output", &h_out)?;
        check_finite("gated cell output", &c_out)?;
        Ok((h_out, c_out))
    }

    /// Adds `W[:, cols] * v` to `pre` for a contiguous block of input columns.
    ///
    /// Lets callers split the pre-activation into pieces that are shared
    /// between many cells (the grid rows and columns of the symmetric agent).
    pub(crate) fn accumulate_columns(&self, first_col: usize, v: &[f32], pre: &mut [f32]) {
        let cols = self.input + self.hidden;
        let w = self.weights.as_slice();
        for (r, p) in pre.iter_mut().enumerate() {
            let start = r * cols + first_col;
            *p += dot(&w[start..start + v.len()], v);
        }
    }

    /// Column index where the recurrent `h` block starts.
    pub(crate) fn hidden_offset(&self) -> usize {
        self.input
    }

    /// Applies the gate nonlinearities to a full pre-activation; `c` is updated in place.
    pub(crate) fn apply_gates(&self, pre: &[f32], h: &mut [f32], c: &mut [f32]) {
        let n = self.hidden;
        for k in 0..n {
            let i = sigmoid(pre[INPUT_GATE * n + k]);
            let f = sigmoid(pre[FORGET_GATE * n + k]);
            let o = sigmoid(pre[OUTPUT_GATE * n + k]);
            let g = pre[CANDIDATE * n + k].tanh();
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }
}
