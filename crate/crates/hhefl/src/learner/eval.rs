use super::data::Dataset;
use super::mlp::MlpModel;
use crate::error::{Error, Result};

/// Test-set metrics; precision, recall and F1 are macro averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub count: usize,
}

/// Metrics from row-major class probabilities. Macro averages run over
/// every class that occurs as a label or a prediction; an undefined ratio
/// counts as zero.
pub fn metrics_from_probs(probs: &[f64], classes: usize, labels: &[usize]) -> Result<EvalMetrics> {
    if labels.is_empty() {
        return Err(Error::Invalid("evaluation needs at least one sample".into()));
    }
    if probs.len() != classes * labels.len() {
        return Err(Error::Invalid("probability matrix has the wrong size".into()));
    }
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    let mut actual = vec![0usize; classes];
    let mut loss = 0.0;
    for (row, &y) in probs.chunks_exact(classes).zip(labels) {
        let guess = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        predicted[guess] += 1;
        actual[y] += 1;
        if guess == y {
            tp[y] += 1;
        }
        loss -= row[y].max(1e-300).ln();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let present: Vec<usize> = (0..classes)
        .filter(|&c| actual[c] + predicted[c] > 0)
        .collect();
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for &c in &present {
        let pc = ratio(tp[c], predicted[c]);
        let rc = ratio(tp[c], actual[c]);
        p += pc;
        r += rc;
        f += if pc + rc > 0.0 { 2.0 * pc * rc / (pc + rc) } else { 0.0 };
    }
    let k = present.len() as f64;
    let n = labels.len();
    Ok(EvalMetrics {
        accuracy: tp.iter().sum::<usize>() as f64 / n as f64,
        loss: loss / n as f64,
        precision: p / k,
        recall: r / k,
        f1: f / k,
        count: n,
    })
}

pub fn evaluate(model: &MlpModel, ds: &Dataset, idx: &[usize]) -> Result<EvalMetrics> {
    let probs: Vec<f64> = idx.iter().flat_map(|&i| model.predict(ds.sample(i))).collect();
    let labels: Vec<usize> = idx.iter().map(|&i| ds.label(i)).collect();
    metrics_from_probs(&probs, ds.classes(), &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hhefl_core::rng::{derive_rng, seed_from_u64};
    use rand::Rng;

    #[test]
    fn perfect_predictor() {
        let labels = [0, 1, 2, 1];
        let probs: Vec<f64> = labels
            .iter()
            .flat_map(|&y| (0..3).map(move |c| if c == y { 1.0 } else { 0.0 }))
            .collect();
        let m = metrics_from_probs(&probs, 3, &labels).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(m.loss, 0.0);
    }

    #[test]
    fn uniform_softmax_loss_is_ln_classes() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let m = metrics_from_probs(&vec![0.1; 1000], 10, &labels).unwrap();
        assert!((m.loss - 10f64.ln()).abs() < 1e-12);
        assert!((m.loss - 2.3026).abs() < 1e-4);
    }

    #[test]
    fn random_predictor_is_near_chance() {
        let mut rng = derive_rng(seed_from_u64(9), 0);
        let n = 2000;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let probs: Vec<f64> = (0..n * 10).map(|_| rng.random::<f64>()).collect();
        let m = metrics_from_probs(&probs, 10, &labels).unwrap();
        assert!((m.accuracy - 0.1).abs() < 0.03, "{}", m.accuracy);
    }

    #[test]
    fn macro_scores_by_hand() {
        // Predictions 0,0,1 for labels 0,1,1.
        let probs = [0.9, 0.1, 0.8, 0.2, 0.3, 0.7];
        let m = metrics_from_probs(&probs, 2, &[0, 1, 1]).unwrap();
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.75).abs() < 1e-12);
        assert!((m.f1 - (2.0 / 3.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(metrics_from_probs(&[], 2, &[]).is_err());
    }
}
