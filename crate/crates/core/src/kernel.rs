//! Dense row-major matrices with the handful of forward operations the
//! encoders and losses need, each paired with a hand-derived backward pass.
//!
//! Every reduction runs in a fixed sequential order so results are bitwise
//! reproducible across runs and threads.

use crate::error::{Error, Result, Shape};

/// Row norms below this are treated as degenerate embeddings.
pub const NORM_EPS: f64 = 1e-12;

/// Variance floor used by layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// A dense matrix of `f64` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(format!(
                "tensor data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Input(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape(self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-width matrix still has rows.
        let cols = self.cols.max(1);
        let n = if self.cols == 0 { 0 } else { self.rows };
        self.data.chunks_exact(cols).take(n)
    }

    /// Copies rows `start..end` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor2D {
        Tensor2D {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Copies columns `start..end` into a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Tensor2D {
        let mut out = Tensor2D::zeros(self.rows, end - start);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..end]);
        }
        out
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_cols(&mut self, start: usize, block: &Tensor2D) {
        for r in 0..self.rows {
            let w = block.cols;
            self.row_mut(r)[start..start + w].copy_from_slice(block.row(r));
        }
    }

    pub fn transpose(&self) -> Tensor2D {
        let mut out = Tensor2D::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2D {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Tensor2D {
        self.map(|v| v * k)
    }

    fn zip_with(&self, other: &Tensor2D, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor2D> {
        check_same(op, self, other)?;
        Ok(Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor2D) -> Result<Tensor2D> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor2D) -> Result<Tensor2D> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor2D) -> Result<Tensor2D> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor2D) -> Result<()> {
        check_same("add_assign", self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// In-place `self += k * other`.
    pub fn add_scaled(&mut self, other: &Tensor2D, k: f64) -> Result<()> {
        check_same("add_scaled", self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column sums as a 1×cols row vector.
    pub fn col_sums(&self) -> Tensor2D {
        let mut out = Tensor2D::zeros(1, self.cols);
        for row in self.row_iter() {
            for (o, v) in out.data.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Mean over rows as a 1×cols row vector.
    pub fn mean_rows(&self) -> Tensor2D {
        let n = self.rows as f64;
        self.col_sums().map(|v| v / n)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor2D) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_same(op: &'static str, a: &Tensor2D, b: &Tensor2D) -> Result<()> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Dimension {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `a · b`.
pub fn matmul(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.cols != b.rows {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Tensor2D::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Gradients of `a · b` given upstream `g`: `(g·bᵀ, aᵀ·g)`.
pub fn matmul_backward(a: &Tensor2D, b: &Tensor2D, g: &Tensor2D) -> Result<(Tensor2D, Tensor2D)> {
    if g.rows != a.rows || g.cols != b.cols {
        return Err(Error::Dimension {
            op: "matmul_backward",
            left: g.shape(),
            right: Shape(a.rows, b.cols),
        });
    }
    Ok((matmul_nt(g, b)?, matmul_tn(a, g)?))
}

/// `a · bᵀ`; every output entry is a dot product of two rows.
pub fn matmul_nt(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.cols != b.cols {
        return Err(Error::Dimension {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Tensor2D::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    Ok(out)
}

/// Gradients of `a · bᵀ` given upstream `g`: `(g·b, gᵀ·a)`.
pub fn matmul_nt_backward(a: &Tensor2D, b: &Tensor2D, g: &Tensor2D) -> Result<(Tensor2D, Tensor2D)> {
    if g.rows != a.rows || g.cols != b.rows {
        return Err(Error::Dimension {
            op: "matmul_nt_backward",
            left: g.shape(),
            right: Shape(a.rows, b.rows),
        });
    }
    Ok((matmul(g, b)?, matmul_tn(g, a)?))
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.rows != b.rows {
        return Err(Error::Dimension {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Tensor2D::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let ar = a.row(r);
        let br = b.row(r);
        for (i, &ari) in ar.iter().enumerate() {
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &brj) in out_row.iter_mut().zip(br) {
                *o += ari * brj;
            }
        }
    }
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adds a 1×cols bias to every row.
pub fn add_row_bias(x: &Tensor2D, bias: &Tensor2D) -> Result<Tensor2D> {
    if bias.rows != 1 || bias.cols != x.cols {
        return Err(Error::Dimension {
            op: "add_row_bias",
            left: x.shape(),
            right: bias.shape(),
        });
    }
    let mut out = x.clone();
    for r in 0..out.rows {
        for (o, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
            *o += b;
        }
    }
    Ok(out)
}

/// `x · wᵀ + b` for a weight stored as out×in.
pub fn linear(x: &Tensor2D, weight: &Tensor2D, bias: &Tensor2D) -> Result<Tensor2D> {
    add_row_bias(&matmul_nt(x, weight)?, bias)
}

/// Backward of [`linear`]: `(grad_x, grad_weight, grad_bias)`.
pub fn linear_backward(
    x: &Tensor2D,
    weight: &Tensor2D,
    g: &Tensor2D,
) -> Result<(Tensor2D, Tensor2D, Tensor2D)> {
    let (gx, gw) = matmul_nt_backward(x, weight, g)?;
    Ok((gx, gw, g.col_sums()))
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(())
}

/// Row-wise softmax of `x / temperature`, stabilized by subtracting each
/// row's maximum.
pub fn softmax_rows(x: &Tensor2D, temperature: f64) -> Result<Tensor2D> {
    check_temperature(temperature)?;
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - max) / temperature).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Row-wise log-softmax of `x / temperature`.
pub fn log_softmax_rows(x: &Tensor2D, temperature: f64) -> Result<Tensor2D> {
    check_temperature(temperature)?;
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in row.iter_mut() {
            *v = (*v - max) / temperature;
        }
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Ok(out)
}

/// Backward of [`softmax_rows`] given its output `y` and upstream `g`.
pub fn softmax_rows_backward(y: &Tensor2D, g: &Tensor2D, temperature: f64) -> Result<Tensor2D> {
    check_temperature(temperature)?;
    check_same("softmax_rows_backward", y, g)?;
    let mut out = Tensor2D::zeros(y.rows, y.cols);
    for r in 0..y.rows {
        let yr = y.row(r);
        let gr = g.row(r);
        let inner = dot(yr, gr);
        for ((o, &yv), &gv) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - inner) / temperature;
        }
    }
    Ok(out)
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize_rows(x: &Tensor2D) -> Result<Tensor2D> {
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let norm = dot(row, row).sqrt();
        if !(norm >= NORM_EPS) {
            return Err(Error::DegenerateEmbedding { row: r, norm });
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    Ok(out)
}

/// Backward of [`l2_normalize_rows`]: `(g − y (y·g)) / ‖x‖` per row.
pub fn l2_normalize_rows_backward(x: &Tensor2D, y: &Tensor2D, g: &Tensor2D) -> Result<Tensor2D> {
    check_same("l2_normalize_rows_backward", x, g)?;
    check_same("l2_normalize_rows_backward", y, g)?;
    let mut out = Tensor2D::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let xr = x.row(r);
        let norm = dot(xr, xr).sqrt();
        if !(norm >= NORM_EPS) {
            return Err(Error::DegenerateEmbedding { row: r, norm });
        }
        let yr = y.row(r);
        let gr = g.row(r);
        let proj = dot(yr, gr);
        for ((o, &yv), &gv) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = (gv - yv * proj) / norm;
        }
    }
    Ok(out)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Tensor2D) -> Tensor2D {
    x.map(|v| v.max(0.0))
}

/// Backward of [`relu`] given its pre-activation input.
pub fn relu_backward(pre: &Tensor2D, g: &Tensor2D) -> Result<Tensor2D> {
    pre.zip_with(g, "relu_backward", |p, gv| if p > 0.0 { gv } else { 0.0 })
}

/// Intermediate values of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Tensor2D,
    inv_std: Vec<f64>,
}

/// Row-wise layer normalization with a learned 1×cols gain and bias.
pub fn layer_norm_rows(
    x: &Tensor2D,
    gain: &Tensor2D,
    bias: &Tensor2D,
) -> Result<(Tensor2D, LayerNormCache)> {
    if gain.shape() != Shape(1, x.cols) || bias.shape() != Shape(1, x.cols) {
        return Err(Error::Dimension {
            op: "layer_norm_rows",
            left: x.shape(),
            right: gain.shape(),
        });
    }
    let n = x.cols as f64;
    let mut normalized = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = normalized.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv_std.push(is);
    }
    let mut out = normalized.clone();
    for r in 0..out.rows {
        for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(&gain.data).zip(&bias.data) {
            *o = *o * gv + bv;
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Backward of [`layer_norm_rows`]: `(grad_x, grad_gain, grad_bias)`.
pub fn layer_norm_rows_backward(
    cache: &LayerNormCache,
    gain: &Tensor2D,
    g: &Tensor2D,
) -> Result<(Tensor2D, Tensor2D, Tensor2D)> {
    let xhat = &cache.normalized;
    check_same("layer_norm_rows_backward", xhat, g)?;
    let n = xhat.cols as f64;
    let grad_gain = xhat.hadamard(g)?.col_sums();
    let grad_bias = g.col_sums();
    let mut gx = Tensor2D::zeros(xhat.rows, xhat.cols);
    for r in 0..xhat.rows {
        let xr = xhat.row(r);
        let gxhat: Vec<f64> = g.row(r).iter().zip(&gain.data).map(|(a, b)| a * b).collect();
        let mean_g = gxhat.iter().sum::<f64>() / n;
        let mean_gx = dot(&gxhat, xr) / n;
        let is = cache.inv_std[r];
        for ((o, &gh), &xh) in gx.row_mut(r).iter_mut().zip(&gxhat).zip(xr) {
            *o = is * (gh - mean_g - xh * mean_gx);
        }
    }
    Ok((gx, grad_gain, grad_bias))
}

/// Gradient of one named parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradRecord {
    pub name: String,
    pub grad: Tensor2D,
}

/// A collection of named trainable matrices.
///
/// Parameter order is fixed: it defines checkpoint layout and optimizer
/// state alignment.
pub trait ParamSet {
    fn named_params(&self) -> Vec<(String, &Tensor2D)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor2D)>;

    fn is_frozen(&self) -> bool {
        false
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}

/// A plain ordered list of named matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamList(pub Vec<(String, Tensor2D)>);

impl ParamSet for ParamList {
    fn named_params(&self) -> Vec<(String, &Tensor2D)> {
        self.0.iter().map(|(n, t)| (n.clone(), t)).collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor2D)> {
        self.0.iter_mut().map(|(n, t)| (n.clone(), t)).collect()
    }
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: Option<WorstEntry>,
    pub entries_checked: usize,
}

/// The entry with the largest relative error.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstEntry {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `loss_fn` at `params` against
/// central differences `(L(θ+h) − L(θ−h)) / 2h` for every parameter entry.
pub fn grad_check<P, F>(params: &P, loss_fn: F, step: f64) -> Result<GradCheck>
where
    P: ParamSet + Clone,
    F: Fn(&P) -> Result<(f64, Vec<GradRecord>)>,
{
    if !(step > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {step}")));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::Evaluation("loss is not finite at the base point".into()));
    }
    let names: Vec<(String, usize)> = params
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();

    let mut probe = params.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for (pi, (name, len)) in names.iter().enumerate() {
        let grad = analytic
            .iter()
            .find(|g| &g.name == name)
            .ok_or_else(|| Error::Evaluation(format!("no analytic gradient for `{name}`")))?;
        if grad.grad.len() != *len {
            return Err(Error::Evaluation(format!(
                "analytic gradient for `{name}` has {} entries, parameter has {len}",
                grad.grad.len()
            )));
        }
        for idx in 0..*len {
            let original = probe.named_params()[pi].1.data()[idx];
            let mut eval_at = |value: f64| -> Result<f64> {
                probe.named_params_mut()[pi].1.data_mut()[idx] = value;
                let (l, _) = loss_fn(&probe)?;
                if !l.is_finite() {
                    return Err(Error::Evaluation(format!(
                        "loss is not finite when probing `{name}`[{idx}]"
                    )));
                }
                Ok(l)
            };
            let plus = eval_at(original + step)?;
            let minus = eval_at(original - step)?;
            probe.named_params_mut()[pi].1.data_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grad.grad.data()[idx];
            let err = relative_error(analytic, numeric);
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(WorstEntry {
                    parameter: name.clone(),
                    index: idx,
                    analytic,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2D {
        Tensor2D::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let m = t(&[&[1.5, -2.0], &[0.25, 4.0]]);
        assert_eq!(matmul(&Tensor2D::identity(2), &m).unwrap(), m);
        let out = matmul(&t(&[&[1.0, 2.0], &[3.0, 4.0]]), &t(&[&[5.0], &[6.0]])).unwrap();
        assert_eq!(out, t(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Tensor2D::zeros(2, 3), &Tensor2D::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn matmul_grad_of_sum_is_broadcast_col_sums() {
        let a = t(&[&[0.3, -0.2, 0.5], &[1.0, 0.1, -0.7]]);
        let b = t(&[&[0.2, 0.4], &[-0.6, 0.9], &[0.05, -0.3]]);
        let ones = Tensor2D::filled(2, 2, 1.0);
        let (ga, _) = matmul_backward(&a, &b, &ones).unwrap();
        // d/dA_ik sum(AB) = sum_j B_kj
        for i in 0..2 {
            for k in 0..3 {
                let expected: f64 = b.row(k).iter().sum();
                assert!((ga.get(i, k) - expected).abs() < 1e-15);
            }
        }
        // finite differences
        let h = 1e-6;
        for i in 0..2 {
            for k in 0..3 {
                let mut ap = a.clone();
                ap.set(i, k, a.get(i, k) + h);
                let mut am = a.clone();
                am.set(i, k, a.get(i, k) - h);
                let num = (matmul(&ap, &b).unwrap().sum() - matmul(&am, &b).unwrap().sum()) / (2.0 * h);
                assert!((num - ga.get(i, k)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let c = Tensor2D::filled(2, 5, 3.7);
        let s = softmax_rows(&c, 0.3).unwrap();
        for v in s.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
        let s = softmax_rows(&t(&[&[0.0, 3f64.ln()]]), 1.0).unwrap();
        assert!((s.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);
        let s = softmax_rows(&t(&[&[1000.0, 0.0]]), 1.0).unwrap();
        assert!(s.is_finite());
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15 && s.get(0, 1) < 1e-300);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        for tau in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                softmax_rows(&Tensor2D::zeros(1, 2), tau),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn normalize_examples() {
        let u = t(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(l2_normalize_rows(&u).unwrap(), u);
        let n = l2_normalize_rows(&t(&[&[3.0, 4.0]])).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15 && (n.get(0, 1) - 0.8).abs() < 1e-15);
        let err = l2_normalize_rows(&t(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::DegenerateEmbedding { row: 1, .. }));
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let x = t(&[&[1.0, 2.0, 3.0, 6.0], &[-1.0, 0.5, 0.5, 2.0]]);
        let (y, _) = layer_norm_rows(&x, &Tensor2D::filled(1, 4, 1.0), &Tensor2D::zeros(1, 4)).unwrap();
        for row in y.row_iter() {
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn grad_check_quadratic_and_constant() {
        let params = ParamList(vec![
            ("a".into(), t(&[&[0.3, -1.2], &[2.5, 0.0]])),
            ("b".into(), t(&[&[-0.7, 4.0, 1e-3]])),
        ]);
        let quad = |p: &ParamList| -> Result<(f64, Vec<GradRecord>)> {
            let loss = p.0.iter().map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>()).sum();
            let grads = p.0.iter().map(|(n, t)| GradRecord { name: n.clone(), grad: t.scale(2.0) }).collect();
            Ok((loss, grads))
        };
        let report = grad_check(&params, quad, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.entries_checked, 7);

        let constant = |p: &ParamList| -> Result<(f64, Vec<GradRecord>)> {
            let grads = p.0.iter().map(|(n, t)| GradRecord { name: n.clone(), grad: Tensor2D::zeros(t.rows(), t.cols()) }).collect();
            Ok((3.25, grads))
        };
        let report = grad_check(&params, constant, 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn grad_check_reports_non_finite_loss() {
        let params = ParamList(vec![("a".into(), t(&[&[1.0]]))]);
        let f = |p: &ParamList| -> Result<(f64, Vec<GradRecord>)> {
            let v = p.0[0].1.get(0, 0);
            let loss = if v > 1.0 { f64::NAN } else { v };
            Ok((loss, vec![GradRecord { name: "a".into(), grad: t(&[&[1.0]]) }]))
        };
        assert!(matches!(grad_check(&params, f, 1e-5), Err(Error::Evaluation(_))));
    }
}
