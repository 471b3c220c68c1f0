//! Spatially biased self-attention, alignment and language-model losses,
//! analytic gradients and finite-difference checking.
//!
//! Forward pass for `K` objects of width `D`:
//!
//! ```text
//! Q = O W_Q,  K = O W_K,  V = O W_V
//! B_ij = w2 · tanh(W1ᵀ f_ij + b1) + b2
//! O' = softmax(Q Kᵀ / √D + B) V
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{pairwise_features, SpatialFeature};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite gradient for {param}[{index}]")]
    NonFiniteGradient { param: String, index: usize },
    #[error("epsilon must be in (0, 1e-3], got {0}")]
    Epsilon(f64),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AlignError> {
        if rows == 0 || cols == 0 {
            return Err(AlignError::Shape(format!("{rows}x{cols} matrix has no entries")));
        }
        if data.len() != rows * cols {
            return Err(AlignError::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(AlignError::NonFinite(format!("entry {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Entries drawn uniformly from `[-scale, scale)`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, AlignError> {
        if self.cols != other.rows {
            return Err(AlignError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    *out.at(i, j) += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Projection weights plus the two-layer bias MLP `5 -> H -> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    /// 5 x H.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// H x 1.
    pub w2: Matrix,
    pub b2: f64,
}

pub const DEFAULT_HIDDEN: usize = 8;

impl AttentionParams {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            w1: Matrix::zeros(5, h),
            b1: vec![0.0; h],
            w2: Matrix::zeros(h, 1),
            b2: 0.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, h: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            w_q: Matrix::random(d, d, scale, rng),
            w_k: Matrix::random(d, d, scale, rng),
            w_v: Matrix::random(d, d, scale, rng),
            w1: Matrix::random(5, h, scale, rng),
            b1: (0..h).map(|_| rng.random_range(-scale..scale)).collect(),
            w2: Matrix::random(h, 1, scale, rng),
            b2: rng.random_range(-scale..scale),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        let d = self.dim();
        let h = self.hidden();
        for (name, m, r, c) in [
            ("w_q", &self.w_q, d, d),
            ("w_k", &self.w_k, d, d),
            ("w_v", &self.w_v, d, d),
            ("w1", &self.w1, 5, h),
            ("w2", &self.w2, h, 1),
        ] {
            if (m.rows, m.cols) != (r, c) {
                return Err(AlignError::Shape(format!("{name} is {}x{}, expected {r}x{c}", m.rows, m.cols)));
            }
        }
        if self.flat().iter().any(|x| !x.is_finite()) {
            return Err(AlignError::NonFinite("attention parameters".into()));
        }
        Ok(())
    }

    /// Named parameter blocks in a fixed order.
    fn blocks(&self) -> [(&'static str, &[f64]); 7] {
        [
            ("w_q", &self.w_q.data),
            ("w_k", &self.w_k.data),
            ("w_v", &self.w_v.data),
            ("w1", &self.w1.data),
            ("b1", &self.b1),
            ("w2", &self.w2.data),
            ("b2", std::slice::from_ref(&self.b2)),
        ]
    }

    fn block_mut(&mut self, index: usize) -> &mut [f64] {
        match index {
            0 => &mut self.w_q.data,
            1 => &mut self.w_k.data,
            2 => &mut self.w_v.data,
            3 => &mut self.w1.data,
            4 => &mut self.b1,
            5 => &mut self.w2.data,
            _ => std::slice::from_mut(&mut self.b2),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, flat_index: usize) -> (usize, usize) {
        let mut rest = flat_index;
        for (b, (_, block)) in self.blocks().iter().enumerate() {
            if rest < block.len() {
                return (b, rest);
            }
            rest -= block.len();
        }
        panic!("parameter index {flat_index} out of range");
    }

    fn flat_name(&self, flat_index: usize) -> (String, usize) {
        let (b, i) = self.locate(flat_index);
        (self.blocks()[b].0.to_string(), i)
    }

    fn nudge(&mut self, flat_index: usize, delta: f64) {
        let (b, i) = self.locate(flat_index);
        self.block_mut(b)[i] += delta;
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Hidden activations `tanh(W1ᵀ f_ij + b1)`, indexed `[i][j]`.
    pub hidden: Vec<Vec<Vec<f64>>>,
    pub bias: Matrix,
    /// Row-softmax attention weights.
    pub weights: Matrix,
    pub output: Matrix,
}

fn check_features(k: usize, f: &[Vec<SpatialFeature>]) -> Result<(), AlignError> {
    if f.len() != k || f.iter().any(|row| row.len() != k) {
        return Err(AlignError::Shape(format!("feature matrix must be {k}x{k}")));
    }
    Ok(())
}

pub fn spatial_attention_trace(
    o: &Matrix,
    f: &[Vec<SpatialFeature>],
    params: &AttentionParams,
) -> Result<AttentionTrace, AlignError> {
    params.validate()?;
    let k = o.rows;
    let d = params.dim();
    if o.cols != d {
        return Err(AlignError::Shape(format!("O has width {}, weights expect {d}", o.cols)));
    }
    check_features(k, f)?;
    let h = params.hidden();
    let q = o.matmul(&params.w_q)?;
    let kk = o.matmul(&params.w_k)?;
    let v = o.matmul(&params.w_v)?;
    let scale = 1.0 / (d as f64).sqrt();

    let mut hidden = vec![vec![vec![0.0; h]; k]; k];
    let mut bias = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let x = f[i][j].to_array();
            let mut b = params.b2;
            for c in 0..h {
                let z = params.b1[c] + (0..5).map(|a| x[a] * params.w1.get(a, c)).sum::<f64>();
                let t = z.tanh();
                hidden[i][j][c] = t;
                b += params.w2.get(c, 0) * t;
            }
            *bias.at(i, j) = b;
        }
    }

    let mut weights = Matrix::zeros(k, k);
    for i in 0..k {
        let logits: Vec<f64> = (0..k)
            .map(|j| {
                let dot: f64 = q.row(i).iter().zip(kk.row(j)).map(|(a, b)| a * b).sum();
                dot * scale + bias.get(i, j)
            })
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        for j in 0..k {
            *weights.at(i, j) = exps[j] / z;
        }
    }
    let output = weights.matmul(&v)?;
    if output.data.iter().any(|x| !x.is_finite()) {
        return Err(AlignError::NonFinite("attention output".into()));
    }
    Ok(AttentionTrace {
        q,
        k: kk,
        v,
        hidden,
        bias,
        weights,
        output,
    })
}

/// `softmax(Q Kᵀ / √D + MLP(F)) V` over the `K` rows of `o`.
pub fn spatial_attention_forward(
    o: &Matrix,
    f: &[Vec<SpatialFeature>],
    params: &AttentionParams,
) -> Result<Matrix, AlignError> {
    spatial_attention_trace(o, f, params).map(|t| t.output)
}

/// Mean over all entries of the squared difference.
pub fn mse_align_loss(attended: &Matrix, targets: &Matrix) -> Result<f64, AlignError> {
    if (attended.rows, attended.cols) != (targets.rows, targets.cols) {
        return Err(AlignError::Shape(format!(
            "{}x{} vs {}x{}",
            attended.rows, attended.cols, targets.rows, targets.cols
        )));
    }
    let n = attended.data.len() as f64;
    Ok(attended.data.iter().zip(&targets.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// Mean negative log-likelihood of `targets` under row-softmax of `logits`.
pub fn cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<f64, AlignError> {
    if targets.len() != logits.rows {
        return Err(AlignError::Shape(format!("{} targets for {} rows", targets.len(), logits.rows)));
    }
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        if t >= logits.cols {
            return Err(AlignError::Index(format!("target {t} in row {i} with vocabulary {}", logits.cols)));
        }
        let row = logits.row(i);
        let (arg, m) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, x)| if x > best.1 { (j, x) } else { best });
        let tail: f64 = row.iter().enumerate().filter(|(j, _)| *j != arg).map(|(_, x)| (x - m).exp()).sum();
        total += (m - row[t]) + tail.ln_1p();
    }
    Ok(total / targets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub lm: f64,
    pub align: f64,
    pub total: f64,
}

/// Unweighted sum of the language-model and alignment losses.
pub fn joint_loss(lm: f64, align: f64) -> LossReport {
    LossReport {
        lm,
        align,
        total: lm + align,
    }
}

/// Object features, their spatial relations, and text embeddings to align to.
#[derive(Debug, Clone)]
pub struct AlignProblem {
    pub objects: Matrix,
    pub features: Vec<Vec<SpatialFeature>>,
    pub targets: Matrix,
}

impl AlignProblem {
    pub fn loss(&self, params: &AttentionParams) -> Result<f64, AlignError> {
        mse_align_loss(&spatial_attention_forward(&self.objects, &self.features, params)?, &self.targets)
    }

    /// Random instance with object centers spread over a room-sized box.
    pub fn random<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Self {
        let centers: Vec<[f64; 3]> = (0..k)
            .map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(0.0..2.0)])
            .collect();
        Self {
            objects: Matrix::random(k, d, 1.0, rng),
            features: pairwise_features(&centers),
            targets: Matrix::random(k, d, 1.0, rng),
        }
    }
}

/// Analytic gradient of `mse_align_loss ∘ spatial_attention_forward` with
/// respect to every parameter, laid out like [`AttentionParams`].
pub fn align_loss_gradient(problem: &AlignProblem, params: &AttentionParams) -> Result<(f64, AttentionParams), AlignError> {
    let o = &problem.objects;
    let tr = spatial_attention_trace(o, &problem.features, params)?;
    let loss = mse_align_loss(&tr.output, &problem.targets)?;
    let k = o.rows;
    let d = params.dim();
    let h = params.hidden();
    let n = (k * d) as f64;
    let scale = 1.0 / (d as f64).sqrt();

    let d_out = Matrix::from_fn(k, d, |i, j| 2.0 * (tr.output.get(i, j) - problem.targets.get(i, j)) / n);
    let d_p = d_out.matmul(&tr.v.transpose())?;
    let d_v = tr.weights.transpose().matmul(&d_out)?;
    let mut d_s = Matrix::zeros(k, k);
    for i in 0..k {
        let inner: f64 = (0..k).map(|j| tr.weights.get(i, j) * d_p.get(i, j)).sum();
        for j in 0..k {
            *d_s.at(i, j) = tr.weights.get(i, j) * (d_p.get(i, j) - inner);
        }
    }
    let d_q = d_s.matmul(&tr.k)?.scale(scale);
    let d_k = d_s.transpose().matmul(&tr.q)?.scale(scale);
    let ot = o.transpose();

    let mut grad = AttentionParams::zeros(d, h);
    grad.w_q = ot.matmul(&d_q)?;
    grad.w_k = ot.matmul(&d_k)?;
    grad.w_v = ot.matmul(&d_v)?;
    for i in 0..k {
        for j in 0..k {
            let g = d_s.get(i, j);
            grad.b2 += g;
            let x = problem.features[i][j].to_array();
            for c in 0..h {
                let t = tr.hidden[i][j][c];
                *grad.w2.at(c, 0) += g * t;
                let dz = g * params.w2.get(c, 0) * (1.0 - t * t);
                grad.b1[c] += dz;
                for (a, xa) in x.iter().enumerate() {
                    *grad.w1.at(a, c) += xa * dz;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Central-difference gradient of an arbitrary loss over the parameters.
pub fn finite_difference_gradient(
    loss: impl Fn(&AttentionParams) -> Result<f64, AlignError>,
    params: &AttentionParams,
    epsilon: f64,
) -> Result<Vec<f64>, AlignError> {
    let mut p = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for idx in 0..params.len() {
        p.nudge(idx, epsilon);
        let up = loss(&p)?;
        p.nudge(idx, -2.0 * epsilon);
        let down = loss(&p)?;
        p.nudge(idx, epsilon);
        out.push((up - down) / (2.0 * epsilon));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub max_relative_error: f64,
    /// Parameter block and index where the largest error occurred.
    pub worst: (String, usize),
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
///
/// `floor` is `1e-4 · max(1, |loss|)`: gradients that small relative to the
/// loss are compared absolutely, since finite differences cannot resolve
/// them below float round-off (`≈ 1e-11 · |loss|` at `ε = 1e-5`).
pub fn relative_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = 1e-4 * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic alignment-loss gradients with central differences.
pub fn grad_check(problem: &AlignProblem, params: &AttentionParams, epsilon: f64) -> Result<GradCheckReport, AlignError> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(AlignError::Epsilon(epsilon));
    }
    let (loss, grad) = align_loss_gradient(problem, params)?;
    let analytic = grad.flat();
    let numeric = finite_difference_gradient(|p| problem.loss(p), params, epsilon)?;
    let mut worst = (0usize, 0.0f64);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        if !a.is_finite() || !n.is_finite() {
            let (param, index) = params.flat_name(i);
            return Err(AlignError::NonFiniteGradient { param, index });
        }
        let e = relative_error(*a, *n, loss);
        if e > worst.1 {
            worst = (i, e);
        }
    }
    Ok(GradCheckReport {
        loss,
        max_relative_error: worst.1,
        worst: params.flat_name(worst.0),
        analytic,
        numeric,
    })
}

/// Rescales the distance channel to zero mean and unit variance over all
/// off-diagonal pairs. Angles are already bounded and left untouched.
pub fn standardize_distances(f: &[Vec<SpatialFeature>]) -> Vec<Vec<SpatialFeature>> {
    let k = f.len();
    let ds: Vec<f64> = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| f[i][j].d).collect();
    if ds.is_empty() {
        return f.to_vec();
    }
    let mean = ds.iter().sum::<f64>() / ds.len() as f64;
    let sd = (ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / ds.len() as f64).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    f.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, x)| {
                    let mut y = *x;
                    if i != j {
                        y.d = (x.d - mean) / sd;
                    }
                    y
                })
                .collect()
        })
        .collect()
}

/// K x K x 5 spatial feature tensor with its object ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExport {
    pub object_ids: Vec<String>,
    pub features: Vec<Vec<[f64; 5]>>,
}

/// Pairwise features between all object centers of `scene`, in scene order.
pub fn scene_features(scene: &Scene) -> FeatureExport {
    let centers: Vec<[f64; 3]> = scene.objects.iter().map(|o| o.obb.center).collect();
    FeatureExport {
        object_ids: scene.objects.iter().map(|o| o.id.clone()).collect(),
        features: pairwise_features(&centers)
            .into_iter()
            .map(|row| row.into_iter().map(|f| f.to_array()).collect())
            .collect(),
    }
}
