//! Contrastive and distillation objectives for bi-encoder training, with
//! analytic gradients, plus a small linear-encoder trainer that exercises
//! them on synthetic data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("at least one negative is required")]
    NoNegatives,
    #[error("teacher scores required for distillation")]
    MissingTeacherScores,
    #[error("expected {expected} teacher scores, got {got}")]
    TeacherLength { expected: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("loss became non-finite at step {0}")]
    Diverged(usize),
}

/// One query with its positive, hard negatives and optional teacher scores
/// over `[positive, negatives...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBatch {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    pub teacher_scores: Option<Vec<f64>>,
}

impl ObjectiveBatch {
    pub fn new(
        query: Vec<f64>,
        positive: Vec<f64>,
        negatives: Vec<Vec<f64>>,
        teacher_scores: Option<Vec<f64>>,
    ) -> Result<Self, ObjectiveError> {
        let batch = ObjectiveBatch {
            query,
            positive,
            negatives,
            teacher_scores,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let dim = self.query.len();
        if self.negatives.is_empty() {
            return Err(ObjectiveError::NoNegatives);
        }
        for v in std::iter::once(&self.positive).chain(&self.negatives) {
            if v.len() != dim {
                return Err(ObjectiveError::Dimension {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        if let Some(t) = &self.teacher_scores {
            if t.len() != self.candidates() {
                return Err(ObjectiveError::TeacherLength {
                    expected: self.candidates(),
                    got: t.len(),
                });
            }
        }
        Ok(())
    }

    /// Positive plus negatives.
    pub fn candidates(&self) -> usize {
        1 + self.negatives.len()
    }

    fn candidate(&self, j: usize) -> &[f64] {
        if j == 0 {
            &self.positive
        } else {
            &self.negatives[j - 1]
        }
    }

    /// Dot-product similarities `[q·d+, q·d1, ...]`.
    pub fn scores(&self) -> Vec<f64> {
        (0..self.candidates())
            .map(|j| dot(&self.query, self.candidate(j)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillParams {
    pub alpha: f64,
    /// Divides teacher scores before the softmax.
    pub teacher_temperature: f64,
}

impl Default for DistillParams {
    fn default() -> Self {
        DistillParams {
            alpha: 0.2,
            teacher_temperature: 1.0,
        }
    }
}

impl DistillParams {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ObjectiveError::Invalid(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.teacher_temperature > 0.0 && self.teacher_temperature.is_finite()) {
            return Err(ObjectiveError::Invalid(format!(
                "teacher temperature must be > 0, got {}",
                self.teacher_temperature
            )));
        }
        Ok(())
    }
}

/// Gradients with respect to every vector in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillLoss {
    pub loss: f64,
    pub kl: f64,
    pub contrastive: f64,
    pub gradients: Gradients,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-softmax with max subtraction.
pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    log_softmax(scores).into_iter().map(f64::exp).collect()
}

/// Chain rule from dL/dscores back to the vectors.
fn backprop(batch: &ObjectiveBatch, score_grad: &[f64]) -> Gradients {
    let mut query = vec![0.0; batch.query.len()];
    for (j, g) in score_grad.iter().enumerate() {
        for (q, h) in query.iter_mut().zip(batch.candidate(j)) {
            *q += g * h;
        }
    }
    let scaled = |g: f64| batch.query.iter().map(|q| g * q).collect::<Vec<_>>();
    Gradients {
        query,
        positive: scaled(score_grad[0]),
        negatives: score_grad[1..].iter().map(|g| scaled(*g)).collect(),
    }
}

/// `-log softmax(scores)[positive]`, returned with its gradients.
pub fn contrastive_loss(batch: &ObjectiveBatch) -> Result<(f64, Gradients), ObjectiveError> {
    batch.validate()?;
    let logp = log_softmax(&batch.scores());
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[0] -= 1.0;
    Ok((-logp[0], backprop(batch, &grad)))
}

/// Student probabilities over `[positive, negatives...]`.
pub fn student_distribution(batch: &ObjectiveBatch) -> Vec<f64> {
    softmax(&batch.scores())
}

pub fn teacher_distribution(
    batch: &ObjectiveBatch,
    params: &DistillParams,
) -> Result<Vec<f64>, ObjectiveError> {
    let t = batch
        .teacher_scores
        .as_ref()
        .ok_or(ObjectiveError::MissingTeacherScores)?;
    let scaled: Vec<f64> = t.iter().map(|s| s / params.teacher_temperature).collect();
    Ok(softmax(&scaled))
}

/// `KL(p_teacher || p_student) + alpha * contrastive`.
pub fn distill_loss(
    batch: &ObjectiveBatch,
    params: &DistillParams,
) -> Result<DistillLoss, ObjectiveError> {
    batch.validate()?;
    params.validate()?;
    let teacher = batch
        .teacher_scores
        .as_ref()
        .ok_or(ObjectiveError::MissingTeacherScores)?;
    let scaled: Vec<f64> = teacher
        .iter()
        .map(|s| s / params.teacher_temperature)
        .collect();
    let log_ce = log_softmax(&scaled);
    let log_stu = log_softmax(&batch.scores());

    let kl: f64 = log_ce
        .iter()
        .zip(&log_stu)
        .map(|(lc, ls)| {
            let p = lc.exp();
            if p == 0.0 {
                0.0
            } else {
                p * (lc - ls)
            }
        })
        .sum::<f64>()
        .max(0.0);
    let contrastive = -log_stu[0];

    let grad: Vec<f64> = log_stu
        .iter()
        .zip(&log_ce)
        .enumerate()
        .map(|(j, (ls, lc))| {
            let p = ls.exp();
            let y = if j == 0 { 1.0 } else { 0.0 };
            (p - lc.exp()) + params.alpha * (p - y)
        })
        .collect();
    Ok(DistillLoss {
        loss: kl + params.alpha * contrastive,
        kl,
        contrastive,
        gradients: backprop(batch, &grad),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Contrastive,
    Distill,
}

/// Synthetic retrieval task: points drawn around random cluster centers.
/// Each training example is a query with a positive from its own cluster
/// and negatives from other clusters, encoded by a shared linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTask {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub clusters: usize,
    pub examples: usize,
    pub negatives: usize,
    /// Per-coordinate uniform noise half-width around a center.
    pub noise: f64,
    /// Half-width of the uniform initialization of the encoder weights.
    pub init_scale: f64,
    /// Teacher score for same-cluster pairs (other pairs score 0).
    pub teacher_margin: f64,
    pub distill: DistillParams,
}

impl Default for ToyTask {
    fn default() -> Self {
        ToyTask {
            input_dim: 16,
            embed_dim: 8,
            clusters: 2,
            examples: 64,
            negatives: 4,
            noise: 0.3,
            init_scale: 0.1,
            teacher_margin: 8.0,
            distill: DistillParams::default(),
        }
    }
}

impl ToyTask {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.examples == 0 {
            return Err(ObjectiveError::Invalid(
                "dimensions and example count must be >= 1".into(),
            ));
        }
        if self.clusters < 2 {
            return Err(ObjectiveError::Invalid("need at least 2 clusters".into()));
        }
        if self.negatives == 0 {
            return Err(ObjectiveError::NoNegatives);
        }
        self.distill.validate()
    }
}

/// Per-step loss, `losses[0]` before any update and `losses[i]` after step i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub objective: Objective,
    pub learning_rate: f64,
    pub seed: u64,
    pub losses: Vec<f64>,
}

struct Example {
    query: Vec<f64>,
    positive: Vec<f64>,
    negatives: Vec<Vec<f64>>,
}

fn sample_task(task: &ToyTask, rng: &mut ChaCha8Rng) -> Vec<Example> {
    let centers: Vec<Vec<f64>> = (0..task.clusters)
        .map(|_| {
            (0..task.input_dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let point = |c: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        centers[c]
            .iter()
            .map(|x| x + rng.gen_range(-task.noise..=task.noise))
            .collect()
    };
    (0..task.examples)
        .map(|_| {
            let c = rng.gen_range(0..task.clusters);
            let others: Vec<usize> = (0..task.clusters).filter(|&o| o != c).collect();
            let query = point(c, rng);
            let positive = point(c, rng);
            let negatives = (0..task.negatives)
                .map(|_| {
                    let o = *others.choose(rng).expect("at least two clusters");
                    point(o, rng)
                })
                .collect();
            Example {
                query,
                positive,
                negatives,
            }
        })
        .collect()
}

fn encode(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| dot(row, x)).collect()
}

/// Full-batch gradient descent on a linear encoder `h = W x`. Returns the
/// mean loss over the training set before each step and after the last.
pub fn toy_train(
    task: &ToyTask,
    objective: Objective,
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<LossTrace, ObjectiveError> {
    task.validate()?;
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(ObjectiveError::Invalid(format!(
            "learning rate must be >= 0, got {learning_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = sample_task(task, &mut rng);
    let mut w: Vec<Vec<f64>> = (0..task.embed_dim)
        .map(|_| {
            (0..task.input_dim)
                .map(|_| rng.gen_range(-task.init_scale..=task.init_scale))
                .collect()
        })
        .collect();

    let teacher: Vec<f64> = std::iter::once(task.teacher_margin)
        .chain(std::iter::repeat_n(0.0, task.negatives))
        .collect();
    let mut losses = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut total = 0.0;
        let mut grad_w = vec![vec![0.0; task.input_dim]; task.embed_dim];
        for ex in &data {
            let batch = ObjectiveBatch::new(
                encode(&w, &ex.query),
                encode(&w, &ex.positive),
                ex.negatives.iter().map(|n| encode(&w, n)).collect(),
                Some(teacher.clone()),
            )?;
            let (loss, g) = match objective {
                Objective::Contrastive => contrastive_loss(&batch)?,
                Objective::Distill => {
                    let d = distill_loss(&batch, &task.distill)?;
                    (d.loss, d.gradients)
                }
            };
            total += loss;
            let inputs = std::iter::once((&g.query, &ex.query))
                .chain(std::iter::once((&g.positive, &ex.positive)))
                .chain(g.negatives.iter().zip(&ex.negatives));
            for (gh, x) in inputs {
                for (row, gr) in grad_w.iter_mut().zip(gh) {
                    for (cell, xi) in row.iter_mut().zip(x) {
                        *cell += gr * xi;
                    }
                }
            }
        }
        let n = data.len() as f64;
        let mean = total / n;
        if !mean.is_finite() {
            return Err(ObjectiveError::Diverged(step));
        }
        losses.push(mean);
        if step == steps {
            break;
        }
        for (row, grow) in w.iter_mut().zip(&grad_w) {
            for (cell, g) in row.iter_mut().zip(grow) {
                *cell -= learning_rate * g / n;
            }
        }
    }
    Ok(LossTrace {
        objective,
        learning_rate,
        seed,
        losses,
    })
}
