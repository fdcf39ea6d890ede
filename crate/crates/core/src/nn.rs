//! Minimal neural substrate shared by the scorer, the downstream models, and
//! the policy networks.
//!
//! There is deliberately no general autodiff graph here. Each composition the
//! crate needs (MLP, LSTM cell, bilinear scores, the downstream aggregations)
//! has an explicit forward that records a tape and an explicit backward that
//! consumes it. Backwards *accumulate* into [`ParamBlock::grad`]; callers
//! zero gradients between steps. Every gradient path is validated against
//! central finite differences via [`finite_diff_check`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("non-finite {what} encountered")]
    NonFinite { what: &'static str },
}

/// One trainable tensor: values, accumulated gradient, and first/second
/// moment state for the adaptive optimizer. Stored row-major as
/// `rows x cols`; vectors are `n x 1`.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl ParamBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        ParamBlock {
            rows,
            cols,
            values: vec![0.0; n],
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// Uniform init in `±1/sqrt(fan_in)` where `fan_in = cols`.
    pub fn uniform<R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut block = Self::zeros(rows, cols);
        let bound = 1.0 / (cols as f64).sqrt();
        for v in &mut block.values {
            *v = rng.gen_range(-bound..bound);
        }
        block
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn grad_row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.grad[row * self.cols..(row + 1) * self.cols]
    }
}

/// Gradient-descent flavour applied by [`Optimizer::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Adaptive moments; the default everywhere.
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Plain gradient descent, available behind a config switch.
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Optimizer {
    /// Applies one update with learning rate `lr` using the gradient
    /// accumulated in `block`. Rejects non-finite gradients.
    pub fn step(&self, block: &mut ParamBlock, lr: f64) -> Result<(), NnError> {
        if block.grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { what: "gradient" });
        }
        match *self {
            Optimizer::Sgd => {
                for (v, g) in block.values.iter_mut().zip(&block.grad) {
                    *v -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                block.step += 1;
                let t = block.step as i32;
                let bias1 = 1.0 - beta1.powi(t);
                let bias2 = 1.0 - beta2.powi(t);
                for i in 0..block.values.len() {
                    let g = block.grad[i];
                    block.m[i] = beta1 * block.m[i] + (1.0 - beta1) * g;
                    block.v[i] = beta2 * block.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = block.m[i] / bias1;
                    let v_hat = block.v[i] / bias2;
                    block.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    /// One update over several blocks, zeroing gradients afterwards.
    pub fn step_all(&self, blocks: &mut [&mut ParamBlock], lr: f64) -> Result<(), NnError> {
        for block in blocks.iter_mut() {
            self.step(block, lr)?;
        }
        for block in blocks.iter_mut() {
            block.zero_grad();
        }
        Ok(())
    }
}

fn matvec(w: &ParamBlock, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.cols, x.len());
    let mut out = vec![0.0; w.rows];
    for r in 0..w.rows {
        let row = w.row(r);
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        out[r] = acc;
    }
    out
}

/// `out[c] += sum_r w[r][c] * dz[r]`, the transpose product used when
/// pushing gradients back through a linear layer.
fn matvec_transpose_acc(w: &ParamBlock, dz: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.rows, dz.len());
    debug_assert_eq!(w.cols, out.len());
    for r in 0..w.rows {
        let row = w.row(r);
        let d = dz[r];
        for (c, a) in row.iter().enumerate() {
            out[c] += a * d;
        }
    }
}

fn outer_acc(grad: &mut ParamBlock, dz: &[f64], x: &[f64]) {
    debug_assert_eq!(grad.rows, dz.len());
    debug_assert_eq!(grad.cols, x.len());
    for r in 0..dz.len() {
        let row = grad.grad_row_mut(r);
        let d = dz[r];
        for (c, xv) in x.iter().enumerate() {
            row[c] += d * xv;
        }
    }
}

/// Layer widths of an MLP, `[input, hidden.., output]`. Hidden layers use
/// ReLU, the output layer is identity.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        MlpSpec { widths }
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// MLP parameters: blocks `[W0, b0, W1, b1, ..]` with `W` of shape
/// `out x in` and `b` of shape `out x 1`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub blocks: Vec<ParamBlock>,
}

/// Intermediate activations recorded by [`Mlp::forward`].
#[derive(Debug)]
pub struct MlpTape {
    /// Layer inputs `a_0 = x, a_1, .., a_{L-1}`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations `z_1, .., z_L`.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn init<R: rand::Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut blocks = Vec::new();
        for l in 0..spec.widths.len() - 1 {
            let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
            blocks.push(ParamBlock::uniform(fan_out, fan_in, rng));
            // Biases start at zero; only weights get the fan-in init.
            blocks.push(ParamBlock::zeros(fan_out, 1));
        }
        Mlp { spec, blocks }
    }

    /// All-zero parameters (useful for closed-form checks).
    pub fn zeros(spec: MlpSpec) -> Self {
        let mut blocks = Vec::new();
        for l in 0..spec.widths.len() - 1 {
            blocks.push(ParamBlock::zeros(spec.widths[l + 1], spec.widths[l]));
            blocks.push(ParamBlock::zeros(spec.widths[l + 1], 1));
        }
        Mlp { spec, blocks }
    }

    /// Square single-layer identity map, for hand-checkable tests.
    pub fn identity(width: usize) -> Self {
        let mut mlp = Mlp::zeros(MlpSpec::new(vec![width, width]));
        for i in 0..width {
            mlp.blocks[0].values[i * width + i] = 1.0;
        }
        mlp
    }

    fn n_layers(&self) -> usize {
        self.spec.widths.len() - 1
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpTape), NnError> {
        if x.len() != self.spec.input() {
            return Err(NnError::Shape {
                expected: format!("input of width {}", self.spec.input()),
                got: format!("width {}", x.len()),
            });
        }
        let layers = self.n_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = x.to_vec();
        for l in 0..layers {
            let w = &self.blocks[2 * l];
            let b = &self.blocks[2 * l + 1];
            let mut z = matvec(w, &a);
            for (zi, bi) in z.iter_mut().zip(&b.values) {
                *zi += bi;
            }
            inputs.push(a);
            a = if l + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
            };
            pre.push(z);
        }
        Ok((a, MlpTape { inputs, pre }))
    }

    /// Accumulates parameter gradients for `d(loss)/d(output) = upstream`
    /// and returns `d(loss)/d(input)`.
    pub fn backward(&mut self, tape: &MlpTape, upstream: &[f64]) -> Vec<f64> {
        let layers = self.n_layers();
        assert_eq!(upstream.len(), self.spec.output(), "upstream width mismatch");
        let mut d = upstream.to_vec();
        for l in (0..layers).rev() {
            if l + 1 != layers {
                for (di, zi) in d.iter_mut().zip(&tape.pre[l]) {
                    if *zi <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
            let x = &tape.inputs[l];
            let mut dx = vec![0.0; x.len()];
            {
                let w = &self.blocks[2 * l];
                matvec_transpose_acc(w, &d, &mut dx);
            }
            outer_acc(&mut self.blocks[2 * l], &d, x);
            for (g, di) in self.blocks[2 * l + 1].grad.iter_mut().zip(&d) {
                *g += di;
            }
            d = dx;
        }
        d
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut ParamBlock> {
        self.blocks.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.zero_grad();
        }
    }
}

/// Input/hidden widths of an LSTM cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmSpec {
    pub input: usize,
    pub hidden: usize,
}

/// LSTM cell parameters: per gate (input, forget, output, candidate) a
/// `W (hidden x input)`, `U (hidden x hidden)`, and `b (hidden x 1)` block,
/// stored in that gate order.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub spec: LstmSpec,
    pub blocks: Vec<ParamBlock>,
}

/// Values recorded by [`LstmCell::forward`] for the backward pass.
#[derive(Debug)]
pub struct LstmTape {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
}

impl LstmCell {
    pub fn init<R: rand::Rng>(spec: LstmSpec, rng: &mut R) -> Self {
        let mut blocks = Vec::new();
        for _ in 0..4 {
            blocks.push(ParamBlock::uniform(spec.hidden, spec.input, rng));
            blocks.push(ParamBlock::uniform(spec.hidden, spec.hidden, rng));
            blocks.push(ParamBlock::zeros(spec.hidden, 1));
        }
        LstmCell { spec, blocks }
    }

    pub fn zeros(spec: LstmSpec) -> Self {
        let mut blocks = Vec::new();
        for _ in 0..4 {
            blocks.push(ParamBlock::zeros(spec.hidden, spec.input));
            blocks.push(ParamBlock::zeros(spec.hidden, spec.hidden));
            blocks.push(ParamBlock::zeros(spec.hidden, 1));
        }
        LstmCell { spec, blocks }
    }

    /// One cell application. With all-zero parameters every gate sigmoid is
    /// 0.5 and the candidate tanh is 0, so `c = 0.5*c_prev` and
    /// `h = 0.5*tanh(0.5*c_prev)`.
    pub fn forward(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, LstmTape), NnError> {
        if x.len() != self.spec.input || h_prev.len() != self.spec.hidden || c_prev.len() != self.spec.hidden {
            return Err(NnError::Shape {
                expected: format!("input {} / hidden {}", self.spec.input, self.spec.hidden),
                got: format!("input {} / hidden {} and {}", x.len(), h_prev.len(), c_prev.len()),
            });
        }
        let gate = |idx: usize, squash: fn(f64) -> f64| -> Vec<f64> {
            let w = &self.blocks[3 * idx];
            let u = &self.blocks[3 * idx + 1];
            let b = &self.blocks[3 * idx + 2];
            let mut z = matvec(w, x);
            let uh = matvec(u, h_prev);
            for k in 0..z.len() {
                z[k] = squash(z[k] + uh[k] + b.values[k]);
            }
            z
        };
        let i = gate(0, sigmoid);
        let f = gate(1, sigmoid);
        let o = gate(2, sigmoid);
        let g = gate(3, f64::tanh);
        let mut c = vec![0.0; self.spec.hidden];
        let mut h = vec![0.0; self.spec.hidden];
        for k in 0..self.spec.hidden {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            h[k] = o[k] * c[k].tanh();
        }
        let tape = LstmTape {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            g,
            c: c.clone(),
        };
        Ok((h, c, tape))
    }

    /// Accumulates parameter gradients given `d(loss)/dh` and `d(loss)/dc`
    /// and returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(&mut self, tape: &LstmTape, dh: &[f64], dc_in: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.spec.hidden;
        assert_eq!(dh.len(), n);
        assert_eq!(dc_in.len(), n);
        let mut dc = vec![0.0; n];
        let mut d_o = vec![0.0; n];
        for k in 0..n {
            let tc = tape.c[k].tanh();
            d_o[k] = dh[k] * tc;
            dc[k] = dc_in[k] + dh[k] * tape.o[k] * (1.0 - tc * tc);
        }
        let mut di = vec![0.0; n];
        let mut df = vec![0.0; n];
        let mut dg = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            df[k] = dc[k] * tape.c_prev[k];
            di[k] = dc[k] * tape.g[k];
            dg[k] = dc[k] * tape.i[k];
            dc_prev[k] = dc[k] * tape.f[k];
        }
        // Through the gate nonlinearities.
        let mut dz = [di, df, d_o, dg];
        for k in 0..n {
            dz[0][k] *= tape.i[k] * (1.0 - tape.i[k]);
            dz[1][k] *= tape.f[k] * (1.0 - tape.f[k]);
            dz[2][k] *= tape.o[k] * (1.0 - tape.o[k]);
            dz[3][k] *= 1.0 - tape.g[k] * tape.g[k];
        }
        let mut dx = vec![0.0; self.spec.input];
        let mut dh_prev = vec![0.0; n];
        for (idx, dz_g) in dz.iter().enumerate() {
            matvec_transpose_acc(&self.blocks[3 * idx], dz_g, &mut dx);
            matvec_transpose_acc(&self.blocks[3 * idx + 1], dz_g, &mut dh_prev);
            outer_acc(&mut self.blocks[3 * idx], dz_g, &tape.x);
            outer_acc(&mut self.blocks[3 * idx + 1], dz_g, &tape.h_prev);
            for (gacc, d) in self.blocks[3 * idx + 2].grad.iter_mut().zip(dz_g) {
                *gacc += d;
            }
        }
        (dx, dh_prev, dc_prev)
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.zero_grad();
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy on a raw logit. Returns `(loss, dloss/dlogit)`.
pub fn logistic_loss(logit: f64, label: f64) -> (f64, f64) {
    (softplus(logit) - label * logit, sigmoid(logit) - label)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against a one-hot target. Returns
/// `(loss, probabilities, dloss/dlogits)`.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>, Vec<f64>) {
    assert!(target < logits.len());
    let p = softmax(logits);
    let loss = -p[target].max(1e-300).ln();
    let mut d = p.clone();
    d[target] -= 1.0;
    (loss, p, d)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard normal draw via Box-Muller, so noisy baselines need no extra
/// distribution machinery.
pub fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Appends one tab-separated row of 9-digit values per block row, the
/// layout shared by every checkpoint format in this crate.
pub fn dump_rows(out: &mut String, block: &ParamBlock) {
    for r in 0..block.rows {
        let cells: Vec<String> = block.row(r).iter().map(|&v| crate::fmt9(v)).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
}

/// Reads `rows` lines of `cols` tab-separated values from `lines`. The
/// error is a bare message; callers wrap it with file context.
pub fn parse_rows<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    rows: usize,
    cols: usize,
) -> Result<ParamBlock, String> {
    let mut block = ParamBlock::zeros(rows, cols);
    for r in 0..rows {
        let line = lines.next().ok_or_else(|| format!("expected {rows} rows, found {r}"))?;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != cols {
            return Err(format!("row {r} has {} values, expected {cols}", cells.len()));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| format!("row {r}: bad value {cell:?}"))?;
            if !v.is_finite() {
                return Err(format!("row {r}: non-finite value"));
            }
            block.row_mut(r)[c] = v;
        }
    }
    Ok(block)
}

/// Outcome of a finite-difference audit.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub worst_rel_err: f64,
}

impl FdReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.worst_rel_err < tol
    }
}

/// Central-difference step used by [`finite_diff_check`].
pub const FD_STEP: f64 = 1e-4;

/// Maximum number of coordinates sampled per audit.
pub const FD_MAX_COORDS: usize = 64;

/// Compares the gradients accumulated in `blocks` against central finite
/// differences of `loss`, on up to [`FD_MAX_COORDS`] sampled coordinates.
/// `loss` must be a pure function of the block values.
pub fn finite_diff_check<R: rand::Rng>(
    blocks: &mut [ParamBlock],
    loss: impl Fn(&[ParamBlock]) -> f64,
    rng: &mut R,
) -> FdReport {
    let coords: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(bi, b)| (0..b.len()).map(move |ci| (bi, ci)))
        .collect();
    let picked: Vec<(usize, usize)> = if coords.len() <= FD_MAX_COORDS {
        coords
    } else {
        rand::seq::index::sample(rng, coords.len(), FD_MAX_COORDS)
            .into_iter()
            .map(|i| coords[i])
            .collect()
    };
    let mut worst: f64 = 0.0;
    for (bi, ci) in picked.iter().copied() {
        let orig = blocks[bi].values[ci];
        blocks[bi].values[ci] = orig + FD_STEP;
        let plus = loss(blocks);
        blocks[bi].values[ci] = orig - FD_STEP;
        let minus = loss(blocks);
        blocks[bi].values[ci] = orig;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let analytic = blocks[bi].grad[ci];
        let denom = fd.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max((fd - analytic).abs() / denom);
    }
    FdReport { checked: picked.len(), worst_rel_err: worst }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_matches_closed_form() {
        let mut block = ParamBlock::zeros(1, 1);
        block.grad[0] = 1.0;
        Optimizer::default().step(&mut block, 0.1).unwrap();
        assert_eq!(block.values[0], -(0.1 / (1.0 + 1e-8)));
    }

    #[test]
    fn sgd_switch_is_plain_descent() {
        let mut block = ParamBlock::zeros(1, 1);
        block.values[0] = 1.0;
        block.grad[0] = 2.0;
        Optimizer::Sgd.step(&mut block, 0.25).unwrap();
        assert_eq!(block.values[0], 0.5);
    }

    #[test]
    fn optimizer_rejects_non_finite_gradient() {
        let mut block = ParamBlock::zeros(1, 1);
        block.grad[0] = f64::NAN;
        assert!(matches!(
            Optimizer::default().step(&mut block, 0.1),
            Err(NnError::NonFinite { .. })
        ));
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        // loss = sum v^2, so d/dv = 2v; at v = 3 the tape yields 6.
        let mut blocks = vec![ParamBlock::zeros(1, 1)];
        blocks[0].values[0] = 3.0;
        blocks[0].grad[0] = 2.0 * blocks[0].values[0];
        let report = finite_diff_check(
            &mut blocks,
            |bs| bs[0].values.iter().map(|v| v * v).sum(),
            &mut crate::rng(0),
        );
        assert_eq!(blocks[0].grad[0], 6.0);
        assert!(report.worst_rel_err < 1e-8, "worst {}", report.worst_rel_err);
    }

    #[test]
    fn shared_parameter_branches_accumulate() {
        // loss = v^2 + 2v built from two branches over one block: the two
        // backward passes must accumulate to 2v + 2.
        let mut blocks = vec![ParamBlock::zeros(1, 1)];
        blocks[0].values[0] = 1.5;
        blocks[0].grad[0] += 2.0 * blocks[0].values[0];
        blocks[0].grad[0] += 2.0;
        let report = finite_diff_check(
            &mut blocks,
            |bs| {
                let v = bs[0].values[0];
                v * v + 2.0 * v
            },
            &mut crate::rng(0),
        );
        assert_eq!(blocks[0].grad[0], 5.0);
        assert!(report.worst_rel_err < 1e-8);
    }

    #[test]
    fn identity_mlp_passes_input_through() {
        let mlp = Mlp::identity(3);
        let (out, _) = mlp.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn mlp_rejects_wrong_input_width() {
        let mlp = Mlp::zeros(MlpSpec::new(vec![3, 2]));
        assert!(matches!(mlp.forward(&[1.0]), Err(NnError::Shape { .. })));
    }

    #[test]
    fn relu_blocks_gradient_below_kink() {
        // Single hidden unit forced negative: no gradient reaches the input.
        let mut mlp = Mlp::zeros(MlpSpec::new(vec![1, 1, 1]));
        mlp.blocks[0].values[0] = 1.0; // hidden weight
        mlp.blocks[1].values[0] = -5.0; // hidden bias drives z negative
        mlp.blocks[2].values[0] = 1.0; // output weight
        let (out, tape) = mlp.forward(&[2.0]).unwrap();
        assert_eq!(out, vec![0.0]);
        let dx = mlp.backward(&tape, &[1.0]);
        assert_eq!(dx, vec![0.0]);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = crate::rng(7);
        let mut mlp = Mlp::init(MlpSpec::new(vec![4, 8, 3]), &mut rng);
        let x = vec![0.3, -1.2, 0.8, 0.1];
        let (out, tape) = mlp.forward(&x).unwrap();
        let (_, dlogit) = logistic_loss(out[1], 1.0);
        let mut upstream = vec![0.0; 3];
        upstream[1] = dlogit;
        mlp.backward(&tape, &upstream);

        let spec = mlp.spec.clone();
        let mut blocks = std::mem::take(&mut mlp.blocks);
        let report = finite_diff_check(
            &mut blocks,
            |bs| {
                let probe = Mlp { spec: spec.clone(), blocks: bs.to_vec() };
                let (out, _) = probe.forward(&x).unwrap();
                logistic_loss(out[1], 1.0).0
            },
            &mut rng,
        );
        assert!(report.ok(1e-4), "worst {}", report.worst_rel_err);
    }

    #[test]
    fn zero_lstm_closed_form() {
        let cell = LstmCell::zeros(LstmSpec { input: 3, hidden: 2 });
        let c_prev = vec![0.4, -1.0];
        let (h, c, _) = cell.forward(&[1.0, 2.0, 3.0], &[0.0, 0.0], &c_prev).unwrap();
        for k in 0..2 {
            assert!((c[k] - 0.5 * c_prev[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c_prev[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = crate::rng(13);
        let spec = LstmSpec { input: 3, hidden: 4 };
        let mut cell = LstmCell::init(spec, &mut rng);
        let x = vec![0.5, -0.25, 1.0];
        let h_prev = vec![0.1, 0.2, -0.3, 0.4];
        let c_prev = vec![-0.5, 0.0, 0.25, 1.0];
        // Scalar loss: sum of h.
        let (_, _, tape) = cell.forward(&x, &h_prev, &c_prev).unwrap();
        cell.backward(&tape, &[1.0, 1.0, 1.0, 1.0], &[0.0; 4]);

        let mut blocks = std::mem::take(&mut cell.blocks);
        let report = finite_diff_check(
            &mut blocks,
            |bs| {
                let probe = LstmCell { spec, blocks: bs.to_vec() };
                let (h, _, _) = probe.forward(&x, &h_prev, &c_prev).unwrap();
                h.iter().sum()
            },
            &mut rng,
        );
        assert!(report.ok(1e-4), "worst {}", report.worst_rel_err);
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let mut mlp = Mlp::identity(2);
        let (_, tape) = mlp.forward(&[1.0, 2.0]).unwrap();
        mlp.backward(&tape, &[1.0, 0.0]);
        let once = mlp.blocks[0].grad.clone();
        let (_, tape) = mlp.forward(&[1.0, 2.0]).unwrap();
        mlp.backward(&tape, &[1.0, 0.0]);
        for (twice, one) in mlp.blocks[0].grad.iter().zip(&once) {
            assert_eq!(*twice, 2.0 * one);
        }
        mlp.zero_grad();
        assert!(mlp.blocks[0].grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cross_entropy_gradient_is_probability_minus_onehot() {
        let logits = vec![0.2, -0.1, 1.3];
        let (_, p, d) = cross_entropy(&logits, 2);
        assert!((d[0] - p[0]).abs() < 1e-15);
        assert!((d[2] - (p[2] - 1.0)).abs() < 1e-15);
        let sum: f64 = d.iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0, 1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
