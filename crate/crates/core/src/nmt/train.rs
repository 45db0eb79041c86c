use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Hyperparams, Params, Seq2SeqModel};
use super::NmtError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Seq2SeqModel,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains with plain mini-batch SGD and teacher forcing.
///
/// A deterministic `heldout_fraction` of the pairs is set aside; after every
/// epoch its mean loss is measured and the parameters of the best epoch are
/// returned. Vocabularies cover all given lines.
pub fn train<S: AsRef<str>>(src_lines: &[S], tgt_lines: &[S], hp: &Hyperparams) -> Result<TrainOutcome, NmtError> {
    if src_lines.len() != tgt_lines.len() {
        return Err(NmtError::LengthMismatch { src: src_lines.len(), tgt: tgt_lines.len() });
    }
    let mut model = Seq2SeqModel::new(hp.clone(), src_lines, tgt_lines);
    model.hp.validate().map_err(NmtError::BadHyperparams)?;
    let examples: Vec<(Vec<usize>, Vec<usize>)> = src_lines
        .iter()
        .zip(tgt_lines)
        .map(|(s, t)| (model.src_vocab.encode(s.as_ref()), model.tgt_vocab.encode(t.as_ref())))
        .filter(|(s, _)| !s.is_empty())
        .collect();
    if examples.is_empty() {
        return Err(NmtError::EmptyCorpus);
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng_stream(hp.seed, 1));
    let n_held = ((examples.len() as f64) * hp.heldout_fraction).round() as usize;
    let n_held = if n_held >= examples.len() { 0 } else { n_held };
    let (held, mut train_idx) = (order[..n_held].to_vec(), order[n_held..].to_vec());
    train_idx.sort_unstable();

    let mut shuffle_rng = rng_stream(hp.seed, 2);
    let mut grads = Params::zeros(&model.hp);
    let mut best: Option<(f64, usize, Params)> = None;
    let mut history = Vec::with_capacity(hp.epochs);

    for epoch in 1..=hp.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(hp.batch_size) {
            grads.zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (s, t) = &examples[i];
                total += model.loss_and_grad(s, t, scale, &mut grads);
            }
            if let Some(max) = hp.clip_norm {
                let norm = grads.norm_sq().sqrt();
                if norm > max {
                    for g in grads.tensors_mut() {
                        g.data.iter_mut().for_each(|v| *v *= max / norm);
                    }
                }
            }
            model.params.add_scaled(-hp.learning_rate, &grads);
            if !total.is_finite() || !model.params.is_finite() {
                return Err(NmtError::DivergedTraining { epoch, history });
            }
        }
        let train_loss = total / train_idx.len() as f64;
        let eval_set = if held.is_empty() { &train_idx } else { &held };
        let heldout_loss = eval_set.iter().map(|&i| model.loss(&examples[i].0, &examples[i].1)).sum::<f64>() / eval_set.len() as f64;
        log::info!("epoch {epoch}: train loss {train_loss:.4}, held-out loss {heldout_loss:.4}");
        if !heldout_loss.is_finite() {
            return Err(NmtError::DivergedTraining { epoch, history });
        }
        history.push(EpochStats { epoch, train_loss, heldout_loss });
        if best.as_ref().is_none_or(|(l, _, _)| heldout_loss < *l) {
            best = Some((heldout_loss, epoch, model.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(TrainOutcome { model, history, best_epoch })
}

/// Largest relative disagreement between reverse-mode and central-difference
/// gradients, `|g - ĝ| / max(|g|, |ĝ|, 1e-8)`.
///
/// Every parameter is checked, or a seeded 1% sample when the model has more
/// than 10,000 parameters.
pub fn gradient_check(model: &Seq2SeqModel, src: &[usize], tgt: &[usize], epsilon: f64) -> f64 {
    gradient_check_with(model, src, tgt, epsilon, |_| {})
}

/// [`gradient_check`] with a hook that may alter the analytic gradient first.
pub fn gradient_check_with(
    model: &Seq2SeqModel,
    src: &[usize],
    tgt: &[usize],
    epsilon: f64,
    tamper: impl FnOnce(&mut Params),
) -> f64 {
    let mut analytic = Params::zeros(&model.hp);
    model.loss_and_grad(src, tgt, 1.0, &mut analytic);
    tamper(&mut analytic);

    let sizes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut coords: Vec<(usize, usize)> = sizes.iter().enumerate().flat_map(|(t, &n)| (0..n).map(move |i| (t, i))).collect();
    if total > 10_000 {
        let mut rng = rng_stream(model.hp.seed, 3);
        let keep = total.div_ceil(100);
        coords = (0..keep).map(|_| coords[rng.gen_range(0..total)]).collect();
    }

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (t, i) in coords {
        let orig = model.params.tensors()[t].data[i];
        probe.params.tensors_mut()[t].data[i] = orig + epsilon;
        let up = probe.loss(src, tgt);
        probe.params.tensors_mut()[t].data[i] = orig - epsilon;
        let down = probe.loss(src, tgt);
        probe.params.tensors_mut()[t].data[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let g = analytic.tensors()[t].data[i];
        let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
