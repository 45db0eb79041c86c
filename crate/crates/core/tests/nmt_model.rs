use gendertag::nmt::{
    gradient_check, gradient_check_with, read_checkpoint, to_bytes, train, translate_lines, Hyperparams, NmtError, Params,
    Seq2SeqModel, EOS,
};

fn tiny(seed: u64, embed: usize, hidden: usize) -> Seq2SeqModel {
    let hp = Hyperparams { embed_dim: embed, hidden_dim: hidden, seed, ..Default::default() };
    Seq2SeqModel::new(hp, &["a b c", "c d e"], &["x y", "z y w"])
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One GRU step written out from the cell equations.
fn gru_ref(w: &[f64], u: &[f64], b: &[f64], x: &[f64], h: &[f64]) -> Vec<f64> {
    let (hd, ed) = (h.len(), x.len());
    let pre = |row: usize, hin: &[f64]| {
        let mut s = b[row];
        for k in 0..ed {
            s += w[row * ed + k] * x[k];
        }
        for k in 0..hd {
            s += u[row * hd + k] * hin[k];
        }
        s
    };
    let z: Vec<f64> = (0..hd).map(|i| sigmoid(pre(i, h))).collect();
    let r: Vec<f64> = (0..hd).map(|i| sigmoid(pre(hd + i, h))).collect();
    let rh: Vec<f64> = (0..hd).map(|i| r[i] * h[i]).collect();
    let n: Vec<f64> = (0..hd).map(|i| pre(2 * hd + i, &rh).tanh()).collect();
    (0..hd).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect()
}

fn softmax_ref(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x.exp()).sum();
    v.iter().map(|x| x.exp() / total).collect()
}

/// Mean cross-entropy of `tgt` + EOS recomputed without any model code.
fn loss_ref(m: &Seq2SeqModel, src: &[usize], tgt: &[usize]) -> f64 {
    let p = &m.params;
    let (ed, hd) = (m.hp.embed_dim, m.hp.hidden_dim);
    let row = |t: &[f64], i: usize, w: usize| t[i * w..(i + 1) * w].to_vec();
    let mut h = vec![0.0; hd];
    let mut states = Vec::new();
    for &tok in src {
        h = gru_ref(&p.enc_w.data, &p.enc_u.data, &p.enc_b.data, &row(&p.src_emb.data, tok, ed), &h);
        states.push(h.clone());
    }
    let mut s = h;
    let inputs: Vec<usize> = [0].into_iter().chain(tgt.iter().copied()).collect();
    let targets: Vec<usize> = tgt.iter().copied().chain([EOS]).collect();
    let mut loss = 0.0;
    for (&inp, &y) in inputs.iter().zip(&targets) {
        s = gru_ref(&p.dec_w.data, &p.dec_u.data, &p.dec_b.data, &row(&p.tgt_emb.data, inp, ed), &s);
        let scores: Vec<f64> = states
            .iter()
            .map(|hi| {
                let mut acc = 0.0;
                for a in 0..hd {
                    for b in 0..hd {
                        acc += s[a] * p.attn.data[a * hd + b] * hi[b];
                    }
                }
                acc
            })
            .collect();
        let alpha = softmax_ref(&scores);
        let ctx: Vec<f64> = (0..hd).map(|k| states.iter().zip(&alpha).map(|(hi, a)| a * hi[k]).sum()).collect();
        let sc: Vec<f64> = s.iter().chain(&ctx).copied().collect();
        let o: Vec<f64> = (0..hd).map(|i| (p.comb_b.data[i] + (0..2 * hd).map(|k| p.comb_w.data[i * 2 * hd + k] * sc[k]).sum::<f64>()).tanh()).collect();
        let v = m.hp.tgt_vocab;
        let logits: Vec<f64> = (0..v).map(|j| p.out_b.data[j] + (0..hd).map(|k| p.out_w.data[j * hd + k] * o[k]).sum::<f64>()).collect();
        loss -= softmax_ref(&logits)[y].ln();
    }
    loss / targets.len() as f64
}

#[test]
fn forward_matches_straight_line_recomputation() {
    for seed in 0..5 {
        let mut m = tiny(seed, 2, 2);
        m.params = Params::init_scaled(&m.hp, 0.8);
        let src = m.src_vocab.encode("a c b");
        let tgt = m.tgt_vocab.encode("y x");
        let got = m.loss(&src, &tgt);
        let want = loss_ref(&m, &src, &tgt);
        assert!((got - want).abs() < 1e-12, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn zero_output_layer_gives_uniform_loss() {
    let mut m = tiny(3, 4, 5);
    m.params.out_w.fill(0.0);
    m.params.out_b.fill(0.0);
    let loss = m.loss(&m.src_vocab.encode("a b"), &m.tgt_vocab.encode("x y w"));
    assert!((loss - (m.hp.tgt_vocab as f64).ln()).abs() < 1e-12);
}

#[test]
fn attention_and_outputs_are_distributions() {
    let m = tiny(7, 4, 6);
    let trace = m.forward(&m.src_vocab.encode("a b c d e"), &m.tgt_vocab.encode("z y"));
    for row in trace.attention().chain(trace.output_probs()) {
        assert!(row.iter().all(|&p| p >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(trace.attention().count(), 3);
    assert!(trace.attention().all(|a| a.len() == 5));
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut m = tiny(seed, 3, 4);
        m.params = Params::init_scaled(&m.hp, 1.0);
        let (s, t) = (m.src_vocab.encode("a b c d"), m.tgt_vocab.encode("x y w"));
        let err = gradient_check(&m, &s, &t, 1e-5);
        assert!(err < 1e-4, "seed {seed}: {err:e}");
    }
}

#[test]
fn gradients_at_default_init_match_with_coarser_step() {
    // At uniform(-0.1, 0.1) some gradients are ~1e-9 and a 1e-5 step cannot
    // resolve them in f64; the disagreement shrinks in proportion to the step.
    for seed in 0..5 {
        let m = tiny(seed, 3, 4);
        let (s, t) = (m.src_vocab.encode("a b c d"), m.tgt_vocab.encode("x y w"));
        let coarse = gradient_check(&m, &s, &t, 1e-3);
        let fine = gradient_check(&m, &s, &t, 1e-5);
        assert!(coarse < 1e-4, "seed {seed}: {coarse:e}");
        assert!(fine < 1e-2, "seed {seed}: {fine:e}");
    }
}

#[test]
fn tampered_gradients_are_detected() {
    let mut m = tiny(1, 3, 4);
    m.params = Params::init_scaled(&m.hp, 1.0);
    let (s, t) = (m.src_vocab.encode("a b c d"), m.tgt_vocab.encode("x y w"));
    let negated = gradient_check_with(&m, &s, &t, 1e-5, |g| g.dec_u.data.iter_mut().for_each(|v| *v = -*v));
    assert!(negated > 0.5);
    let dropped = gradient_check_with(&m, &s, &t, 1e-5, |g| g.enc_b.fill(0.0));
    assert!(dropped > 0.5);
}

#[test]
fn one_sgd_step_reduces_loss() {
    let m = tiny(2, 4, 6);
    let (s, t) = (m.src_vocab.encode("a b c"), m.tgt_vocab.encode("x y"));
    let mut g = Params::zeros(&m.hp);
    let before = m.loss_and_grad(&s, &t, 1.0, &mut g);
    let mut stepped = m.clone();
    stepped.params.add_scaled(-0.1, &g);
    assert!(stepped.loss(&s, &t) < before);
}

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    let m = tiny(4, 3, 5);
    let bytes = to_bytes(&m);
    let back = read_checkpoint(bytes.as_slice()).unwrap();
    assert_eq!(back, m);
    assert_eq!(to_bytes(&back), bytes);

    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(matches!(read_checkpoint(bad.as_slice()), Err(NmtError::BadCheckpoint(_))));
    let mut long = bytes.clone();
    long.push(0);
    assert!(read_checkpoint(long.as_slice()).is_err());
    assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
}

fn copy_task() -> Vec<String> {
    let words = ["a", "b", "c", "d", "e", "f"];
    (0..50).map(|i| (0..3).map(|k| words[(i * 7 + k * 3 + i / 6) % 6]).collect::<Vec<_>>().join(" ")).collect()
}

#[test]
fn copy_task_training_reduces_loss() {
    let lines = copy_task();
    let hp = Hyperparams { embed_dim: 16, hidden_dim: 24, heldout_fraction: 0.0, ..Default::default() };
    let out = train(&lines, &lines, &hp).unwrap();
    let first = out.history.first().unwrap().train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
    assert!(out.model.params.is_finite());
    assert_eq!(out.history.len(), hp.epochs);
}

#[test]
fn training_and_translation_are_deterministic() {
    let lines = copy_task();
    let hp = Hyperparams { embed_dim: 8, hidden_dim: 8, epochs: 3, ..Default::default() };
    let a = train(&lines, &lines, &hp).unwrap();
    let b = train(&lines, &lines, &hp).unwrap();
    assert_eq!(to_bytes(&a.model), to_bytes(&b.model));
    assert_eq!(a.history, b.history);
    assert_eq!(translate_lines(&a.model, &lines), translate_lines(&b.model, &lines));
    assert!(a.model.translate_ids(&a.model.src_vocab.encode("a b c")).len() <= hp.max_decode_len);
}

#[test]
fn training_errors() {
    let hp = Hyperparams::default();
    assert!(matches!(train(&["a"], &["x", "y"], &hp), Err(NmtError::LengthMismatch { .. })));
    assert!(matches!(train(&[""], &["x"], &hp), Err(NmtError::EmptyCorpus)));
    let bad = Hyperparams { learning_rate: -1.0, ..hp };
    assert!(matches!(train(&["a"], &["x"], &bad), Err(NmtError::BadHyperparams(_))));
}

#[test]
fn huge_learning_rate_diverges() {
    let lines = copy_task();
    let hp = Hyperparams { embed_dim: 8, hidden_dim: 8, learning_rate: 1e300, ..Default::default() };
    match train(&lines, &lines, &hp) {
        Err(NmtError::DivergedTraining { epoch, .. }) => assert_eq!(epoch, 1),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
    }
}
