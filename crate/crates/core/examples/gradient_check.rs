//! Reverse-mode gradients against central finite differences.
//!
//!     cargo run --release --example gradient_check

use gendertag::nmt::{gradient_check, gradient_check_with, Hyperparams, Params, Seq2SeqModel};

fn main() {
    for seed in 0..5 {
        let hp = Hyperparams { embed_dim: 3, hidden_dim: 4, seed, ..Default::default() };
        let mut model = Seq2SeqModel::new(hp, &["a b c", "c d e"], &["x y", "z y w"]);
        let src = model.src_vocab.encode("a b c d");
        let tgt = model.tgt_vocab.encode("x y w");

        let at_init = gradient_check(&model, &src, &tgt, 1e-5);
        model.params = Params::init_scaled(&model.hp, 1.0);
        let wide = gradient_check(&model, &src, &tgt, 1e-5);
        let negated = gradient_check_with(&model, &src, &tgt, 1e-5, |g| g.attn.data.iter_mut().for_each(|v| *v = -*v));
        println!("seed {seed}: init {at_init:.2e}  wide {wide:.2e}  negated attention gradient {negated:.2e}");
    }
}
