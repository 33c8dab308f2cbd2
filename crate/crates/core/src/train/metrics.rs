use std::thread;

use crate::error::{Error, Result};
use crate::model::{forward_patches, Example, ModelConfig, Parameters, Target, TaskKind};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn top1_accuracy(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!("{} logit rows for {} labels", logits.len(), labels.len())));
    }
    let correct = logits.iter().zip(labels).filter(|(l, &y)| argmax(l) == y).count();
    Ok(correct as f64 / logits.len() as f64)
}

/// Average precision of one ranking: the mean, over positives, of the
/// precision at each positive's rank. Scores are sorted descending with a
/// stable sort, so equal scores keep their input order. `None` when there
/// are no positives.
pub fn average_precision(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if targets[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Mean of the per-class average precision over classes with at least one
/// positive. `targets` holds 0/1 entries.
pub fn mean_average_precision(scores: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    let k = scores[0].len();
    if scores.len() != targets.len() || scores.iter().chain(targets).any(|r| r.len() != k) {
        return Err(Error::Shape("scores and targets must both be N x K".into()));
    }
    if targets.iter().flatten().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidArgument("targets must be 0 or 1".into()));
    }
    let aps: Vec<f64> = (0..k)
        .filter_map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let t: Vec<bool> = targets.iter().map(|r| r[c] == 1.0).collect();
            average_precision(&s, &t)
        })
        .collect();
    if aps.is_empty() {
        return Err(Error::InvalidArgument("no class has a positive target".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Logits for every example, computed on up to `available_parallelism`
/// threads. Results are in input order and independent of the thread count.
pub fn predict(params: &Parameters, cfg: &ModelConfig, examples: &[Example]) -> Result<Vec<Vec<f64>>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(examples.len().max(1));
    let chunk = examples.len().div_ceil(workers).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = examples
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|e| forward_patches(params, cfg, &e.patches))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(examples.len());
        for h in handles {
            out.extend(h.join().expect("evaluation thread panicked")?);
        }
        Ok(out)
    })
}

/// Top-1 accuracy for single-label tasks, mAP over sigmoid scores for
/// multi-label tasks.
pub fn evaluate(params: &Parameters, cfg: &ModelConfig, examples: &[Example]) -> Result<f64> {
    let logits = predict(params, cfg, examples)?;
    match cfg.task {
        TaskKind::SingleLabel => {
            let labels = examples
                .iter()
                .map(|e| match e.target {
                    Target::Class(c) => Ok(c),
                    Target::Labels(_) => Err(Error::InvalidArgument("multi-label target in a single-label task".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            top1_accuracy(&logits, &labels)
        }
        TaskKind::MultiLabel => {
            let targets = examples
                .iter()
                .map(|e| match &e.target {
                    Target::Labels(v) => Ok(v.clone()),
                    Target::Class(_) => Err(Error::InvalidArgument("single-label target in a multi-label task".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            mean_average_precision(&logits, &targets)
        }
    }
}
