mod common;

use common::*;
use orchestrator_core::embedding::{Embedder, EmbeddingVector, HashEmbedder};
use orchestrator_core::ranker::{group_grad, group_loss, mean_loss, train_with, RankerModel, RatedCandidate, RatedGroup, TrainConfig};
use orchestrator_core::Exec;
use proptest::prelude::*;
use rand::Rng;

fn one_hot(dim: usize, i: usize) -> EmbeddingVector {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    EmbeddingVector::normalized(v).unwrap()
}

/// Prompts are their top agent's description embedding; one candidate per
/// agent plus a separator rated between the positive and the rest.
fn separable_groups(dim: usize) -> Vec<RatedGroup> {
    let n_agents = 4;
    let sep = one_hot(dim, n_agents);
    (0..n_agents * 5)
        .map(|k| {
            let pos = k % n_agents;
            let mut candidates: Vec<RatedCandidate> = (0..n_agents)
                .map(|a| RatedCandidate { agent_id: format!("a{a}"), embedding: one_hot(dim, a), rating: if a == pos { 1 } else { -1 } })
                .collect();
            candidates.push(RatedCandidate { agent_id: "sep".into(), embedding: sep.clone(), rating: 0 });
            RatedGroup { group_id: format!("g{k}"), prompt_embedding: one_hot(dim, pos), candidates }
        })
        .collect()
}

#[test]
fn separable_toy_set_trains_below_threshold() {
    let groups = separable_groups(8);
    let cfg = TrainConfig { learning_rate: 0.5, epochs: 200, batch_groups: 4, seed: 3, l2: 0.0 };
    let model = train_with(&groups, &cfg, Exec::Parallel).unwrap();
    let loss = mean_loss(&model, &groups, Exec::Sequential).unwrap();
    assert!(loss < 0.1, "final loss {loss}");
    assert_eq!(model.final_loss, Some(loss));
}

#[test]
fn zero_epochs_return_the_initial_model() {
    let groups = separable_groups(8);
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let m = train_with(&groups, &cfg, Exec::Parallel).unwrap();
    let init = RankerModel::identity(8);
    assert_eq!(m.weight, init.weight);
    assert_eq!(m.b, init.b);
}

#[test]
fn sequential_and_parallel_training_agree_bitwise() {
    let mut rng = rng(10);
    let groups: Vec<RatedGroup> = (0..90).map(|_| random_group(&mut rng, 12, 6, 3)).collect();
    let cfg = TrainConfig { learning_rate: 0.3, epochs: 6, batch_groups: 20, seed: 5, l2: 0.01 };
    let a = train_with(&groups, &cfg, Exec::Sequential).unwrap();
    let b = train_with(&groups, &cfg, Exec::Parallel).unwrap();
    let c = train_with(&groups, &cfg, Exec::Parallel).unwrap();
    let bits = |m: &RankerModel| m.weight.iter().chain(&m.b).map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(bits(&b), bits(&c));
}

#[test]
fn training_never_ends_worse_than_initialisation() {
    let mut rng = rng(11);
    let groups: Vec<RatedGroup> = (0..40).map(|_| random_group(&mut rng, 6, 5, 3)).collect();
    let init = mean_loss(&RankerModel::identity(6), &groups, Exec::Sequential).unwrap();
    // A huge step size diverges quickly; the best epoch is still returned.
    let cfg = TrainConfig { learning_rate: 50.0, epochs: 5, batch_groups: 40, seed: 1, l2: 0.0 };
    if let Ok(m) = train_with(&groups, &cfg, Exec::Sequential) {
        assert!(mean_loss(&m, &groups, Exec::Sequential).unwrap() <= init);
    }
}

#[test]
fn scores_match_a_triple_loop_oracle() {
    let mut rng = rng(12);
    for _ in 0..20 {
        let dim = 7;
        let group = random_group(&mut rng, dim, 5, 2);
        let mut m = RankerModel::identity(dim);
        m.weight.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        m.b.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let embs: Vec<&EmbeddingVector> = group.candidates.iter().map(|c| &c.embedding).collect();
        let got = m.score(&group.prompt_embedding, &embs).unwrap();
        let want = direct_scores(&m.weight, &m.b, &group);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_scores_unit_and_orthogonal_vectors() {
    let m = RankerModel::identity(4);
    let q = one_hot(4, 0);
    assert_eq!(m.score(&q, &[&one_hot(4, 0), &one_hot(4, 1)]).unwrap(), vec![1.0, 0.0]);
}

#[test]
fn all_tied_group_has_zero_gradient() {
    let e = HashEmbedder::new(16, (3, 5)).unwrap();
    let group = RatedGroup {
        group_id: "t".into(),
        prompt_embedding: e.embed("prompt").unwrap(),
        candidates: ["a", "b", "c"]
            .iter()
            .map(|t| RatedCandidate { agent_id: t.to_string(), embedding: e.embed(t).unwrap(), rating: 5 })
            .collect(),
    };
    let g = group_grad(&RankerModel::identity(16), &group).unwrap();
    assert_eq!(g.loss, 0.0);
    assert!(g.weight.data.iter().chain(&g.b).all(|v| *v == 0.0));
}

proptest! {
    #[test]
    fn loss_matches_scalar_oracle(scores in prop::collection::vec(-6.0f64..6.0, 1..9), seed in 0u64..1000) {
        let mut r = rng(seed);
        let ratings: Vec<i64> = scores.iter().map(|_| r.random_range(-2..3)).collect();
        let got = group_loss(&scores, &ratings).unwrap();
        let want = scalar_loss(&scores, &ratings);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn scores_are_permutation_equivariant(seed in 0u64..500) {
        let mut r = rng(seed);
        let group = random_group(&mut r, 5, 6, 3);
        let m = RankerModel::identity(5);
        let embs: Vec<&EmbeddingVector> = group.candidates.iter().map(|c| &c.embedding).collect();
        let s = m.score(&group.prompt_embedding, &embs).unwrap();
        let rev: Vec<&EmbeddingVector> = embs.iter().rev().copied().collect();
        let mut s_rev = m.score(&group.prompt_embedding, &rev).unwrap();
        s_rev.reverse();
        prop_assert_eq!(s, s_rev);
    }
}
