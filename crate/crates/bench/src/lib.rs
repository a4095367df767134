//! Fixtures shared by the criterion benches.

use std::path::PathBuf;

use nystrom_hdc::{load_tudataset, split, synth, train, Dataset, GraphCsr, ModelConfig, SplitMix64, TrainedModel};

pub fn mutag_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/MUTAG")
}

/// MUTAG 80/20 split with seed 7.
pub fn mutag_split() -> (Dataset, Dataset) {
    let ds = load_tudataset(mutag_dir(), "MUTAG").expect("MUTAG under data/");
    split(&ds, 0.2, 7).expect("splittable")
}

pub fn model(train_set: &Dataset, cfg: &ModelConfig) -> TrainedModel {
    train(train_set, cfg, &mut SplitMix64::new(7)).expect("trains")
}

/// Hub-heavy graphs with `f` one-hot features, for load-balancing runs.
pub fn skewed_graphs(count: usize, nodes: usize, f: usize) -> Vec<GraphCsr> {
    let mut rng = SplitMix64::new(0x5eed);
    (0..count).map(|_| synth::skewed_graph(&mut rng, nodes, 8, 0.3, f)).collect()
}

/// `n` distinct random keys.
pub fn random_keys(n: usize, seed: u64) -> Vec<i64> {
    let mut rng = SplitMix64::new(seed);
    let mut keys: Vec<i64> = (0..n).map(|_| rng.next_u64() as i64).collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_load() {
        let (tr, te) = mutag_split();
        assert_eq!((tr.len(), te.len()), (150, 38));
        assert_eq!(skewed_graphs(2, 64, 7).len(), 2);
        assert_eq!(random_keys(100, 1).len(), 100);
    }
}
