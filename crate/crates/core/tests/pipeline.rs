use s2vt::data::{generate_synthetic, load_corpus, write_corpus, SyntheticConfig};
use s2vt::decoding::{greedy_decode, DecodeConfig};
use s2vt::model::{load_checkpoint, save_checkpoint, ModelDims, S2VTModel, T_MAX};
use s2vt::numerics::Rng;
use s2vt::training::{evaluate_loss, train, TrainConfig};

fn small_dims() -> ModelDims {
    ModelDims { frame_dim: 16, embed_dim: 16, hidden_dim: 32 }
}

#[test]
fn trained_encoder_prefers_true_frame_order() {
    let (corpus, _) = generate_synthetic(&SyntheticConfig { n_samples: 200, seed: 9, ..Default::default() }).unwrap();
    let mut model = S2VTModel::new(small_dims(), corpus.vocab.clone(), &mut Rng::new(9)).unwrap();
    let config = TrainConfig { learning_rate: 0.01, epochs: 15, seed: 9, ..Default::default() };
    train(&mut model, &corpus.train, &config).unwrap();

    let mut reversed = corpus.train.clone();
    for s in &mut reversed {
        s.frames.reverse();
    }
    let forward_loss = evaluate_loss(&model, &corpus.train, T_MAX).unwrap();
    let reversed_loss = evaluate_loss(&model, &reversed, T_MAX).unwrap();
    assert!(forward_loss < reversed_loss, "{forward_loss} vs {reversed_loss}");
}

#[test]
fn corpus_and_checkpoint_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = generate_synthetic(&SyntheticConfig { n_samples: 50, seed: 1, ..Default::default() }).unwrap();
    write_corpus(dir.path(), &corpus).unwrap();
    let back = load_corpus(
        &dir.path().join("features.bin"),
        &dir.path().join("captions.tsv"),
        Some(&dir.path().join("split.tsv")),
    )
    .unwrap()
    .into_corpus(1)
    .unwrap();
    assert_eq!(back.vocab, corpus.vocab);
    assert_eq!(back.train, corpus.train);
    assert_eq!(back.test, corpus.test);

    let mut model = S2VTModel::new(small_dims(), corpus.vocab.clone(), &mut Rng::new(1)).unwrap();
    train(&mut model, &corpus.train, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, model);
    let cfg = DecodeConfig::default();
    for s in &corpus.test {
        assert_eq!(greedy_decode(&model, &s.frames, &cfg).unwrap(), greedy_decode(&loaded, &s.frames, &cfg).unwrap());
    }
}
