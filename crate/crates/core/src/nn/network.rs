use rand::Rng;

use super::linalg::{accumulate_grad, affine, backprop_input};
use super::{Example, NetworkParams, NetworkShape, Task, TaskWeights};
use crate::error::{Error, Result};

/// Inverted-dropout multipliers for one batch: each entry is either 0 or
/// `1 / keep_prob`, so inference needs no rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub n: usize,
    pub input: Vec<f64>,
    pub hidden1: Vec<f64>,
    /// Per task: (second hidden layer, third hidden layer).
    pub branches: [(Vec<f64>, Vec<f64>); 3],
}

impl DropoutMask {
    /// Draws masks for `n` examples. The draw order is fixed (input, shared
    /// hidden layer, then every task branch) regardless of which tasks train.
    pub fn sample<R: Rng + ?Sized>(shape: &NetworkShape, n: usize, keep_prob: f64, rng: &mut R) -> Self {
        let scale = 1.0 / keep_prob;
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| if rng.random::<f64>() < keep_prob { scale } else { 0.0 })
                .collect()
        };
        let [h1, h2, h3] = shape.hidden;
        let input = draw(n * shape.input_dim());
        let hidden1 = draw(n * h1);
        let branches = [(); 3].map(|_| (draw(n * h2), draw(n * h3)));
        DropoutMask {
            n,
            input,
            hidden1,
            branches,
        }
    }

    /// Mask that keeps everything; equivalent to inference.
    pub fn keep_all(shape: &NetworkShape, n: usize) -> Self {
        let [h1, h2, h3] = shape.hidden;
        DropoutMask {
            n,
            input: vec![1.0; n * shape.input_dim()],
            hidden1: vec![1.0; n * h1],
            branches: [(); 3].map(|_| (vec![1.0; n * h2], vec![1.0; n * h3])),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Train(&'a DropoutMask),
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutputs {
    pub vta: [f64; 2],
    pub nyhac: Option<[f64; 4]>,
    pub bmi: Option<f64>,
}

#[derive(Debug, Clone)]
struct BranchCache {
    h2: Vec<f64>,
    h2d: Vec<f64>,
    h3: Vec<f64>,
    h3d: Vec<f64>,
    /// Raw head outputs (logits, or the BMI estimate).
    out: Vec<f64>,
    /// Softmax of `out` for classification heads.
    probs: Vec<f64>,
}

/// Activations cached by a batch forward pass for use in backpropagation.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub n: usize,
    x0: Vec<f64>,
    h1: Vec<f64>,
    h1d: Vec<f64>,
    branches: [Option<BranchCache>; 3],
    mask: Option<DropoutMask>,
}

fn apply_mask(values: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => values.iter().zip(m).map(|(v, m)| v * m).collect(),
        None => values.to_vec(),
    }
}

fn tanh_layer(x: &[f64], layer: &super::Dense, n: usize) -> Vec<f64> {
    let mut z = vec![0.0; n * layer.outputs];
    affine(x, layer, &mut z);
    for v in &mut z {
        *v = v.tanh();
    }
    z
}

fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut probs = logits.to_vec();
    for row in probs.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

fn log_softmax_at(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits[y] - lse
}

fn validate(params: &NetworkParams, examples: &[Example]) -> Result<()> {
    let shape = &params.shape;
    for ex in examples {
        if ex.features.len() != shape.features {
            return Err(Error::Dimension {
                expected: shape.features,
                got: ex.features.len(),
            });
        }
        if let Some(rows) = shape.embedding_rows {
            if ex.decade_index >= rows {
                return Err(Error::Dimension {
                    expected: rows,
                    got: ex.decade_index,
                });
            }
        }
        if ex.y_vta > 1 || ex.y_nyhac.is_some_and(|c| c >= Task::Nyhac.outputs()) {
            return Err(Error::Eval("class label out of range".into()));
        }
    }
    Ok(())
}

/// Forward pass over a batch, computing only the tasks flagged in `tasks`.
pub fn forward_batch(
    params: &NetworkParams,
    examples: &[Example],
    mode: Mode<'_>,
    tasks: [bool; 3],
) -> Result<BatchForward> {
    validate(params, examples)?;
    let n = examples.len();
    let shape = &params.shape;
    let mask = match mode {
        Mode::Train(m) => {
            if m.n != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: m.n,
                });
            }
            Some(m)
        }
        Mode::Infer => None,
    };

    let input_dim = shape.input_dim();
    let mut x0 = Vec::with_capacity(n * input_dim);
    for ex in examples {
        x0.extend_from_slice(&ex.features);
        if let Some(e) = &params.embedding {
            x0.extend_from_slice(e.row(ex.decade_index));
        }
    }
    let x0 = apply_mask(&x0, mask.map(|m| m.input.as_slice()));
    let h1 = tanh_layer(&x0, &params.shared, n);
    let h1d = apply_mask(&h1, mask.map(|m| m.hidden1.as_slice()));

    let mut branches: [Option<BranchCache>; 3] = [None, None, None];
    for (t, task) in Task::ALL.into_iter().enumerate() {
        if !tasks[t] && task != Task::Vta {
            continue;
        }
        let br = &params.branches[t];
        let h2 = tanh_layer(&h1d, &br.hidden2, n);
        let h2d = apply_mask(&h2, mask.map(|m| m.branches[t].0.as_slice()));
        let h3 = tanh_layer(&h2d, &br.hidden3, n);
        let h3d = apply_mask(&h3, mask.map(|m| m.branches[t].1.as_slice()));
        let mut out = vec![0.0; n * br.head.outputs];
        affine(&h3d, &br.head, &mut out);
        let probs = if task == Task::Bmi {
            Vec::new()
        } else {
            softmax_rows(&out, task.outputs())
        };
        branches[t] = Some(BranchCache {
            h2,
            h2d,
            h3,
            h3d,
            out,
            probs,
        });
    }
    Ok(BatchForward {
        n,
        x0,
        h1,
        h1d,
        branches,
        mask: mask.cloned(),
    })
}

impl BatchForward {
    pub fn outputs(&self, i: usize) -> TaskOutputs {
        let probs = |t: Task| {
            self.branches[t as usize]
                .as_ref()
                .map(|b| &b.probs[i * t.outputs()..(i + 1) * t.outputs()])
        };
        let vta = probs(Task::Vta).expect("VTA branch is always computed");
        TaskOutputs {
            vta: [vta[0], vta[1]],
            nyhac: probs(Task::Nyhac).map(|p| [p[0], p[1], p[2], p[3]]),
            bmi: self.branches[Task::Bmi as usize].as_ref().map(|b| b.out[i]),
        }
    }

    /// Positive-class probability for each example.
    pub fn vta_positive(&self) -> Vec<f64> {
        let b = self.branches[0].as_ref().expect("VTA branch is always computed");
        b.probs.chunks_exact(2).map(|p| p[1]).collect()
    }

    /// Mean loss over the batch, computed from logits.
    pub fn loss(&self, examples: &[Example], weights: TaskWeights) -> LossBreakdown {
        let n = self.n as f64;
        let mut acc = LossBreakdown::default();
        for (i, ex) in examples.iter().enumerate() {
            let logits = |t: Task| {
                self.branches[t as usize]
                    .as_ref()
                    .map(|b| &b.out[i * t.outputs()..(i + 1) * t.outputs()])
            };
            acc.vta -= log_softmax_at(logits(Task::Vta).expect("VTA branch"), ex.y_vta);
            if weights.active(Task::Nyhac) {
                if let (Some(y), Some(l)) = (ex.y_nyhac, logits(Task::Nyhac)) {
                    acc.nyhac -= log_softmax_at(l, y);
                }
            }
            if weights.active(Task::Bmi) {
                if let (Some(y), Some(l)) = (ex.y_bmi, logits(Task::Bmi)) {
                    acc.bmi += (l[0] - y).powi(2);
                }
            }
        }
        acc.vta /= n;
        acc.nyhac /= n;
        acc.bmi /= n;
        acc.total = acc.vta + weights.nyhac * acc.nyhac + weights.bmi * acc.bmi;
        acc
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub vta: f64,
    /// Unweighted NYHA-class cross entropy (absent targets contribute 0).
    pub nyhac: f64,
    /// Unweighted BMI squared error (absent targets contribute 0).
    pub bmi: f64,
}

/// Loss of one example's outputs.
///
/// `CE(vta) + λ_nyhac·CE(nyhac) + λ_bmi·(bmi − y)²`, with auxiliary terms
/// dropped when their target is absent.
pub fn loss(outputs: &TaskOutputs, example: &Example, weights: TaskWeights) -> LossBreakdown {
    let vta = -outputs.vta[example.y_vta].ln();
    let nyhac = match (example.y_nyhac, outputs.nyhac) {
        (Some(y), Some(p)) if weights.active(Task::Nyhac) => -p[y].ln(),
        _ => 0.0,
    };
    let bmi = match (example.y_bmi, outputs.bmi) {
        (Some(y), Some(p)) if weights.active(Task::Bmi) => (p - y).powi(2),
        _ => 0.0,
    };
    LossBreakdown {
        total: vta + weights.nyhac * nyhac + weights.bmi * bmi,
        vta,
        nyhac,
        bmi,
    }
}

/// Gradient of the mean batch loss with respect to every tensor.
///
/// Branches whose loss weight is zero, or whose targets are absent for the
/// whole batch, receive exactly zero gradient.
pub fn backward_batch(
    params: &NetworkParams,
    fwd: &BatchForward,
    examples: &[Example],
    weights: TaskWeights,
) -> NetworkParams {
    let n = fwd.n;
    let inv_n = 1.0 / n as f64;
    let shape = params.shape;
    let [h1_width, _, _] = shape.hidden;
    let mut grads = NetworkParams::zeros(shape);
    let mut dh1d = vec![0.0; n * h1_width];
    let mask = fwd.mask.as_ref();

    for (t, task) in Task::ALL.into_iter().enumerate() {
        let lambda = weights.weight(task);
        let Some(cache) = fwd.branches[t].as_ref() else {
            continue;
        };
        if lambda == 0.0 {
            continue;
        }
        let k = task.outputs();
        let mut dout = vec![0.0; n * k];
        let mut any = false;
        for (i, ex) in examples.iter().enumerate() {
            let row = &mut dout[i * k..(i + 1) * k];
            match task {
                Task::Vta | Task::Nyhac => {
                    let y = if task == Task::Vta { Some(ex.y_vta) } else { ex.y_nyhac };
                    if let Some(y) = y {
                        let p = &cache.probs[i * k..(i + 1) * k];
                        for (j, d) in row.iter_mut().enumerate() {
                            let target = if j == y { 1.0 } else { 0.0 };
                            *d = lambda * (p[j] - target) * inv_n;
                        }
                        any = true;
                    }
                }
                Task::Bmi => {
                    if let Some(y) = ex.y_bmi {
                        row[0] = lambda * 2.0 * (cache.out[i] - y) * inv_n;
                        any = true;
                    }
                }
            }
        }
        if !any {
            continue;
        }

        let br = &params.branches[t];
        let gbr = &mut grads.branches[t];
        let [_, h2_width, h3_width] = shape.hidden;

        accumulate_grad(&cache.h3d, &dout, &mut gbr.head);
        let mut dz3 = vec![0.0; n * h3_width];
        backprop_input(&dout, &br.head, 0..h3_width, &mut dz3);
        tanh_backward(&mut dz3, &cache.h3, mask.map(|m| m.branches[t].1.as_slice()));

        accumulate_grad(&cache.h2d, &dz3, &mut gbr.hidden3);
        let mut dz2 = vec![0.0; n * h2_width];
        backprop_input(&dz3, &br.hidden3, 0..h2_width, &mut dz2);
        tanh_backward(&mut dz2, &cache.h2, mask.map(|m| m.branches[t].0.as_slice()));

        accumulate_grad(&fwd.h1d, &dz2, &mut gbr.hidden2);
        let mut contrib = vec![0.0; n * h1_width];
        backprop_input(&dz2, &br.hidden2, 0..h1_width, &mut contrib);
        for (a, c) in dh1d.iter_mut().zip(&contrib) {
            *a += c;
        }
    }

    let mut dz1 = dh1d;
    tanh_backward(&mut dz1, &fwd.h1, mask.map(|m| m.hidden1.as_slice()));
    accumulate_grad(&fwd.x0, &dz1, &mut grads.shared);

    if let Some(gemb) = grads.embedding.as_mut() {
        let f = shape.features;
        let d = gemb.dim;
        let input_dim = shape.input_dim();
        let mut dx = vec![0.0; n * d];
        backprop_input(&dz1, &params.shared, f..f + d, &mut dx);
        for (i, ex) in examples.iter().enumerate() {
            let row = &mut gemb.table[ex.decade_index * d..(ex.decade_index + 1) * d];
            for j in 0..d {
                let m = mask.map_or(1.0, |m| m.input[i * input_dim + f + j]);
                row[j] += dx[i * d + j] * m;
            }
        }
    }
    grads
}

/// Converts `d(loss)/d(masked activation)` into `d(loss)/d(pre-activation)`.
fn tanh_backward(d: &mut [f64], h: &[f64], mask: Option<&[f64]>) {
    match mask {
        Some(m) => {
            for ((d, &h), &m) in d.iter_mut().zip(h).zip(m) {
                *d *= m * (1.0 - h * h);
            }
        }
        None => {
            for (d, &h) in d.iter_mut().zip(h) {
                *d *= 1.0 - h * h;
            }
        }
    }
}

/// Single-example forward pass. In inference mode every task head is evaluated.
pub fn forward(params: &NetworkParams, example: &Example, mode: Mode<'_>) -> Result<(TaskOutputs, BatchForward)> {
    let fwd = forward_batch(params, std::slice::from_ref(example), mode, [true; 3])?;
    Ok((fwd.outputs(0), fwd))
}

/// Single-example gradient of [`loss`].
pub fn backward(params: &NetworkParams, cache: &BatchForward, example: &Example, weights: TaskWeights) -> NetworkParams {
    backward_batch(params, cache, std::slice::from_ref(example), weights)
}
