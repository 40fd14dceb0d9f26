//! Datasets, IID partitioning and a small fully connected classifier
//! trained with Adam.

mod data;
mod eval;
pub mod idx;
mod mlp;
mod train;

pub use data::{partition_iid, split_sizes, synthetic, Dataset, PartitionPlan, Shard};
pub use eval::{evaluate, metrics_from_probs, EvalMetrics};
pub use mlp::{init_model, softmax, MlpModel, ModelPreset};
pub use train::{batch_count, train_local, Adam, TrainConfig, TrainOutcome};

/// Largest relative error between the analytic gradient and central
/// differences over every parameter, on the samples `idx`.
pub fn max_gradient_error(model: &MlpModel, ds: &Dataset, idx: &[usize]) -> f64 {
    const H: f64 = 1e-5;
    let (_, grad) = model.loss_and_grad(ds, idx);
    let mut m = model.clone();
    let mut worst = 0.0f64;
    for k in 0..m.param_count() {
        let x = m.params()[k];
        m.params_mut()[k] = x + H;
        let up = m.loss(ds, idx);
        m.params_mut()[k] = x - H;
        let down = m.loss(ds, idx);
        m.params_mut()[k] = x;
        let numeric = (up - down) / (2.0 * H);
        let scale = grad[k].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((grad[k] - numeric).abs() / scale);
    }
    worst
}
