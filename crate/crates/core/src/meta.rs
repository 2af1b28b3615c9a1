//! First-order (Reptile) meta-learning of an evaluator initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::train::{check_labels, uniform_digest};
use crate::evaluator::{init_mlp, loss_and_grad, Evaluator, ForwardMode, MlpParams, Normalizer};
use crate::metaset::MetaInstance;
use crate::seed::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTask {
    pub task_id: String,
    pub instances: Vec<MetaInstance>,
}

impl MetaTask {
    /// Groups instances by `task_id`, in first-appearance order.
    pub fn group(instances: Vec<MetaInstance>) -> Vec<MetaTask> {
        let mut tasks: Vec<MetaTask> = Vec::new();
        for inst in instances {
            match tasks.iter_mut().find(|t| t.task_id == inst.task_id) {
                Some(t) => t.instances.push(inst),
                None => tasks.push(MetaTask {
                    task_id: inst.task_id.clone(),
                    instances: vec![inst],
                }),
            }
        }
        tasks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReptileConfig {
    pub inner_lr: f64,
    pub outer_step: f64,
    pub inner_steps: usize,
    pub meta_rounds: usize,
    pub seed: u64,
}

impl Default for ReptileConfig {
    fn default() -> Self {
        ReptileConfig {
            inner_lr: 1e-3,
            outer_step: 0.1,
            inner_steps: 5,
            meta_rounds: 2000,
            seed: 0,
        }
    }
}

impl ReptileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_lr > 0.0) {
            return Err(Error::InvalidArgument("inner_lr must be positive".into()));
        }
        if !(self.outer_step > 0.0 && self.outer_step <= 1.0) {
            return Err(Error::InvalidArgument("outer_step must lie in (0, 1]".into()));
        }
        if self.inner_steps == 0 || self.meta_rounds == 0 {
            return Err(Error::InvalidArgument("inner_steps and meta_rounds must be positive".into()));
        }
        Ok(())
    }
}

/// `steps` plain gradient-descent updates `θ ← θ − α·∇`.
pub fn gradient_descent<F>(theta: &mut [f64], steps: usize, alpha: f64, mut grad: F) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    for _ in 0..steps {
        let g = grad(theta)?;
        if g.len() != theta.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient has {} entries for {} parameters",
                g.len(),
                theta.len()
            )));
        }
        theta.iter_mut().zip(&g).for_each(|(t, g)| *t -= alpha * g);
    }
    Ok(())
}

/// Normalized features and scaled targets of one task.
struct TaskBatch {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl TaskBatch {
    fn new(instances: &[MetaInstance], norm: &Normalizer) -> Self {
        TaskBatch {
            xs: instances.iter().map(|m| norm.apply(&m.delta.features())).collect(),
            ys: instances.iter().map(|m| norm.scale_target(m.accuracy)).collect(),
        }
    }

    fn adapt(&self, theta: &MlpParams, alpha: f64, steps: usize) -> Result<MlpParams> {
        let batch: Vec<(&[f64], f64)> = self.xs.iter().map(|x| x.as_slice()).zip(self.ys.iter().copied()).collect();
        let mut out = theta.clone();
        let dims = theta.layer_dims().to_vec();
        gradient_descent(out.as_mut_slice(), steps, alpha, |p| {
            let current = MlpParams::from_parts(dims.clone(), p.to_vec())?;
            let (_, g) = loss_and_grad(&current, &batch, ForwardMode::Inference)?;
            Ok(g.as_slice().to_vec())
        })?;
        Ok(out)
    }
}

/// Full-batch gradient descent on the task's MSE with the normalizer held fixed.
pub fn inner_adapt(
    theta: &MlpParams,
    norm: &Normalizer,
    task: &MetaTask,
    alpha: f64,
    steps: usize,
) -> Result<MlpParams> {
    if task.instances.is_empty() {
        return Err(Error::Empty("task instances"));
    }
    TaskBatch::new(&task.instances, norm).adapt(theta, alpha, steps)
}

/// `(1 − ε)θ + εθ_m`.
pub fn reptile_outer(theta: &MlpParams, theta_m: &MlpParams, epsilon: f64) -> Result<MlpParams> {
    theta.check_same_shape(theta_m)?;
    let mut out = theta.clone();
    out.as_mut_slice()
        .iter_mut()
        .zip(theta_m.as_slice())
        .for_each(|(t, m)| *t = (1.0 - epsilon) * *t + epsilon * m);
    Ok(out)
}

/// Reptile over `tasks`; each round adapts on one task drawn uniformly.
pub fn meta_train(tasks: &[MetaTask], cfg: &ReptileConfig) -> Result<Evaluator> {
    cfg.validate()?;
    if tasks.len() < 2 {
        return Err(Error::InsufficientTasks {
            needed: 2,
            found: tasks.len(),
        });
    }
    meta_train_unchecked(tasks, cfg)
}

fn meta_train_unchecked(tasks: &[MetaTask], cfg: &ReptileConfig) -> Result<Evaluator> {
    if let Some(t) = tasks.iter().find(|t| t.instances.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "task {} has {} instances, need at least 2",
            t.task_id,
            t.instances.len()
        )));
    }
    let all: Vec<MetaInstance> = tasks.iter().flat_map(|t| t.instances.iter().cloned()).collect();
    check_labels(&all)?;
    let digest = uniform_digest(&all)?;
    let rows: Vec<[f64; 5]> = all.iter().map(|m| m.delta.features()).collect();
    let ys: Vec<f64> = all.iter().map(|m| m.accuracy).collect();
    let normalizer = Normalizer::fit(&rows)?.with_targets(&ys)?;
    let batches: Vec<TaskBatch> = tasks.iter().map(|t| TaskBatch::new(&t.instances, &normalizer)).collect();

    let mut theta = init_mlp(rows[0].len(), seed::derive(cfg.seed, tag::INIT))?;
    let mut rng = seed::derived_rng(cfg.seed, tag::REPTILE);
    for _ in 0..cfg.meta_rounds {
        let pick = rng.random_range(0..batches.len());
        let adapted = batches[pick].adapt(&theta, cfg.inner_lr, cfg.inner_steps)?;
        theta = reptile_outer(&theta, &adapted, cfg.outer_step)?;
    }
    Ok(Evaluator {
        params: theta,
        normalizer,
        config_digest: digest,
        report: None,
        meta_init: true,
    })
}

/// Adapts a meta-initialization to a new model from labelled probe instances.
pub fn adapt_to_model(init: &Evaluator, probe: &[MetaInstance], cfg: &ReptileConfig) -> Result<Evaluator> {
    if probe.is_empty() {
        return Err(Error::EmptyProbe);
    }
    check_labels(probe)?;
    for p in probe {
        init.check_digest(&p.delta)?;
    }
    let params = TaskBatch::new(probe, &init.normalizer).adapt(&init.params, cfg.inner_lr, cfg.inner_steps)?;
    Ok(Evaluator {
        params,
        normalizer: init.normalizer.clone(),
        config_digest: init.config_digest.clone(),
        report: None,
        meta_init: false,
    })
}
