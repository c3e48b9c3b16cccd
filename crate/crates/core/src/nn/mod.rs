//! Multi-task feedforward network with a birth-decade embedding.
//!
//! The standardized features are concatenated with the embedding row for the
//! patient's birth decade and fed through one shared `tanh` layer. From there
//! each task (VTA, NYHA class, BMI) owns two further `tanh` layers and a head:
//! softmax for the two classification tasks, a linear scalar for BMI.

pub mod checkpoint;
mod linalg;
mod network;

use rand::Rng;

use crate::error::{Error, Result};

pub use network::{
    backward, backward_batch, forward, forward_batch, loss, BatchForward, DropoutMask, LossBreakdown, Mode,
    TaskOutputs,
};

pub const EMBEDDING_DIM: usize = 10;
pub const DEFAULT_HIDDEN: [usize; 3] = [150, 100, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Vta,
    Nyhac,
    Bmi,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Vta, Task::Nyhac, Task::Bmi];

    pub fn outputs(self) -> usize {
        match self {
            Task::Vta => 2,
            Task::Nyhac => 4,
            Task::Bmi => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Vta => "vta",
            Task::Nyhac => "nyhac",
            Task::Bmi => "bmi",
        }
    }
}

/// Birth decades with a dedicated embedding row; anything else, including
/// unknown, shares the final row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecadeVocab {
    pub first: i32,
    pub last: i32,
}

impl Default for DecadeVocab {
    fn default() -> Self {
        DecadeVocab {
            first: 1900,
            last: 2010,
        }
    }
}

impl DecadeVocab {
    pub fn known(&self) -> usize {
        ((self.last - self.first) / 10 + 1) as usize
    }

    /// Table rows including the unknown row.
    pub fn rows(&self) -> usize {
        self.known() + 1
    }

    pub fn unknown_index(&self) -> usize {
        self.known()
    }

    pub fn index(&self, decade: Option<i32>) -> usize {
        match decade {
            Some(d) if d >= self.first && d <= self.last && (d - self.first) % 10 == 0 => {
                ((d - self.first) / 10) as usize
            }
            _ => self.unknown_index(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    pub features: usize,
    /// Embedding table rows; `None` disables the embedding.
    pub embedding_rows: Option<usize>,
    pub embedding_dim: usize,
    pub hidden: [usize; 3],
}

impl NetworkShape {
    pub fn new(features: usize, embedding_rows: Option<usize>) -> Self {
        NetworkShape {
            features,
            embedding_rows,
            embedding_dim: EMBEDDING_DIM,
            hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.features + self.embedding_rows.map_or(0, |_| self.embedding_dim)
    }
}

/// Fully connected layer; `w` is row-major `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let s = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Dense::zeros(inputs, outputs);
        for w in &mut layer.w {
            *w = rng.random_range(-s..=s);
        }
        layer
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub hidden2: Dense,
    pub hidden3: Dense,
    pub head: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub rows: usize,
    pub dim: usize,
    pub table: Vec<f64>,
}

impl Embedding {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.table[i * self.dim..(i + 1) * self.dim]
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub shape: NetworkShape,
    pub embedding: Option<Embedding>,
    pub shared: Dense,
    /// Indexed by task in [`Task::ALL`] order.
    pub branches: [Branch; 3],
}

impl NetworkParams {
    pub fn zeros(shape: NetworkShape) -> Self {
        let [h1, h2, h3] = shape.hidden;
        let branch = |t: Task| Branch {
            hidden2: Dense::zeros(h1, h2),
            hidden3: Dense::zeros(h2, h3),
            head: Dense::zeros(h3, t.outputs()),
        };
        NetworkParams {
            shape,
            embedding: shape.embedding_rows.map(|rows| Embedding {
                rows,
                dim: shape.embedding_dim,
                table: vec![0.0; rows * shape.embedding_dim],
            }),
            shared: Dense::zeros(shape.input_dim(), h1),
            branches: Task::ALL.map(branch),
        }
    }

    /// Random initialization: Glorot-uniform dense weights, zero biases,
    /// embedding entries uniform in [-0.05, 0.05].
    pub fn init<R: Rng + ?Sized>(shape: NetworkShape, rng: &mut R) -> Self {
        let [h1, h2, h3] = shape.hidden;
        let embedding = shape.embedding_rows.map(|rows| Embedding {
            rows,
            dim: shape.embedding_dim,
            table: (0..rows * shape.embedding_dim)
                .map(|_| rng.random_range(-0.05..=0.05))
                .collect(),
        });
        let shared = Dense::glorot(shape.input_dim(), h1, rng);
        let branches = Task::ALL.map(|t| Branch {
            hidden2: Dense::glorot(h1, h2, rng),
            hidden3: Dense::glorot(h2, h3, rng),
            head: Dense::glorot(h3, t.outputs(), rng),
        });
        NetworkParams {
            shape,
            embedding,
            shared,
            branches,
        }
    }

    pub fn branch(&self, task: Task) -> &Branch {
        &self.branches[task as usize]
    }

    /// Tensor names in declared (checkpoint) order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.embedding.is_some() {
            names.push("embedding".to_string());
        }
        names.push("shared.w".into());
        names.push("shared.b".into());
        for t in Task::ALL {
            for layer in ["hidden2", "hidden3", "head"] {
                names.push(format!("{}.{layer}.w", t.name()));
                names.push(format!("{}.{layer}.b", t.name()));
            }
        }
        names
    }

    /// Every tensor as a flat slice, in declared order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(e) = &self.embedding {
            out.push(&e.table);
        }
        out.push(&self.shared.w);
        out.push(&self.shared.b);
        for b in &self.branches {
            for layer in [&b.hidden2, &b.hidden3, &b.head] {
                out.push(&layer.w);
                out.push(&layer.b);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(e) = &mut self.embedding {
            out.push(&mut e.table);
        }
        out.push(&mut self.shared.w);
        out.push(&mut self.shared.b);
        for b in &mut self.branches {
            for layer in [&mut b.hidden2, &mut b.hidden3, &mut b.head] {
                out.push(&mut layer.w);
                out.push(&mut layer.b);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (name, t) in self.tensor_names().iter().zip(self.tensors()) {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{what} tensor `{name}`")));
            }
        }
        Ok(())
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Standardized features.
    pub features: Vec<f64>,
    pub decade_index: usize,
    pub y_vta: usize,
    pub y_nyhac: Option<usize>,
    /// Standardized BMI.
    pub y_bmi: Option<f64>,
}

/// Weights of the auxiliary losses; zero disables a task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskWeights {
    pub nyhac: f64,
    pub bmi: f64,
}

impl TaskWeights {
    pub const SINGLE_TASK: TaskWeights = TaskWeights { nyhac: 0.0, bmi: 0.0 };
    pub const MULTI_TASK: TaskWeights = TaskWeights { nyhac: 1.0, bmi: 1.0 };

    pub fn weight(&self, task: Task) -> f64 {
        match task {
            Task::Vta => 1.0,
            Task::Nyhac => self.nyhac,
            Task::Bmi => self.bmi,
        }
    }

    pub fn active(&self, task: Task) -> bool {
        self.weight(task) != 0.0
    }
}

impl Default for TaskWeights {
    fn default() -> Self {
        TaskWeights::MULTI_TASK
    }
}
