mod common;

use common::rng;
use neurocae::lfsr::{self, LfsrConfig, DEFAULT_TAPS};
use neurocae::model::{self, all_models};
use neurocae::pruner::{self, PruneMode, WeightTileSet};
use neurocae::Error;
use proptest::prelude::*;
use rand::Rng;

/// Weights with no zeros, so retained counts are visible as non-zeros.
fn dense_weights(seed: u64, n: usize) -> Vec<i8> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let v: i8 = r.random_range(1..=127);
            if r.random_bool(0.5) { -v } else { v }
        })
        .collect()
}

fn tile_nonzeros(set: &WeightTileSet, t: usize) -> usize {
    set.tiles[t].iter().filter(|&&v| v != 0).count()
}

#[test]
fn every_pool_tile_keeps_exactly_theta() {
    let cfg = LfsrConfig::default();
    for spec in all_models() {
        for (k, l) in spec.pruned_layers() {
            let w = dense_weights(k as u64, l.weight_count());
            for theta in [4, 8, 12] {
                let set = WeightTileSet::from_matrix(k, &w, l.in_channels, l.out_channels, theta).unwrap();
                for masked in [pruner::stochastic_mask(&set, &cfg).unwrap(), pruner::magnitude_mask(&set, theta).unwrap()] {
                    for t in 0..masked.tiles.len() {
                        let want = lfsr::tile_theta(theta, masked.valid(t));
                        assert_eq!(tile_nonzeros(&masked, t), want, "{} {} tile {t}", spec.name, l.name);
                    }
                }
            }
        }
    }
}

#[test]
fn stochastic_store_recovers_weights_without_indices() {
    let cfg = LfsrConfig::new(0b1001, [3, 7, 11, 15]).unwrap();
    for (rows, cols) in [(64, 64), (40, 7), (16, 1), (200, 3)] {
        let w = dense_weights(rows as u64, rows * cols);
        for theta in [4, 8, 12] {
            let set = WeightTileSet::from_matrix(0, &w, rows, cols, theta).unwrap();
            let masked = pruner::stochastic_mask(&set, &cfg).unwrap();
            let cw = pruner::compress(&masked, PruneMode::Stochastic, Some(&cfg)).unwrap();
            assert!(cw.indices.is_empty());
            assert_eq!(cw.index_bytes(), 0);
            assert_eq!(cw.decompress().unwrap().tiles, masked.tiles);
            let mw = pruner::magnitude_mask(&set, theta).unwrap();
            let cm = pruner::compress(&mw, PruneMode::Magnitude, None).unwrap();
            assert_eq!(cm.decompress().unwrap().tiles, mw.tiles);
            assert_eq!(cm.indices.len(), cm.values.len());
        }
    }
}

#[test]
fn size_law_holds_for_every_model_and_sparsity() {
    let cfg = LfsrConfig::default();
    for spec in all_models() {
        for sparsity in [25u32, 50, 75] {
            let theta = pruner::theta_for_sparsity(sparsity).unwrap();
            let mut delta = 0usize;
            let mut nonzeros = 0usize;
            for (k, l) in spec.pruned_layers() {
                let w = dense_weights(k as u64 + 100, l.weight_count());
                let set = WeightTileSet::from_matrix(k, &w, l.in_channels, l.out_channels, theta).unwrap();
                let s = pruner::compress(&pruner::stochastic_mask(&set, &cfg).unwrap(), PruneMode::Stochastic, Some(&cfg)).unwrap();
                let m = pruner::compress(&pruner::magnitude_mask(&set, theta).unwrap(), PruneMode::Magnitude, None).unwrap();
                assert_eq!(s.values.len(), m.values.len());
                assert_eq!(m.bytes() - s.bytes(), m.values.len().div_ceil(2));
                delta += m.bytes() - s.bytes();
                nonzeros += s.values.len();
            }
            let rep = pruner::memory_report(&spec, sparsity, PruneMode::Stochastic).unwrap();
            assert_eq!(rep.pool_nonzeros(), nonzeros, "{}", spec.name);
            assert_eq!(rep.magnitude_bytes() - rep.stochastic_bytes(), delta, "{} @{sparsity}", spec.name);
        }
    }
}

#[test]
fn ds_cae1_pruned_sizes() {
    let spec = model::build("DS-CAE1").unwrap();
    let bytes: Vec<usize> = [25, 50, 75]
        .iter()
        .map(|&s| pruner::memory_report(&spec, s, PruneMode::Stochastic).unwrap().stochastic_bytes())
        .collect();
    assert_eq!(bytes, vec![10_288, 7_984, 5_680]);
    let r75 = pruner::memory_report(&spec, 75, PruneMode::Magnitude).unwrap();
    assert_eq!(r75.magnitude_bytes() - r75.stochastic_bytes(), 1_152);
    assert_eq!(r75.pool_weights(), 9_216);
    // dense report still knows the pool
    assert_eq!(pruner::memory_report(&spec, 0, PruneMode::Stochastic).unwrap().pool_weights(), 9_216);
}

#[test]
fn stochastic_mask_ignores_weight_values() {
    let cfg = LfsrConfig::default();
    let a = WeightTileSet::from_matrix(0, &dense_weights(1, 64 * 64), 64, 64, 8).unwrap();
    let b = WeightTileSet::from_matrix(0, &dense_weights(2, 64 * 64), 64, 64, 8).unwrap();
    let ma = pruner::stochastic_mask(&a, &cfg).unwrap();
    let mb = pruner::stochastic_mask(&b, &cfg).unwrap();
    for (ta, tb) in ma.tiles.iter().zip(&mb.tiles) {
        let pa: Vec<bool> = ta.iter().map(|&v| v != 0).collect();
        let pb: Vec<bool> = tb.iter().map(|&v| v != 0).collect();
        assert_eq!(pa, pb);
    }
}

#[test]
fn unbalanced_magnitude_pruning_breaks_tile_balance() {
    // all the large weights sit in the first column
    let (rows, cols) = (16, 4);
    let mut w = vec![1i8; rows * cols];
    for m in 0..rows {
        w[m * cols] = 100;
    }
    let set = WeightTileSet::from_matrix(0, &w, rows, cols, 4).unwrap();
    let un = pruner::magnitude_mask_unbalanced(&set, 4).unwrap();
    let counts: Vec<usize> = (0..cols).map(|t| tile_nonzeros(&un, t)).collect();
    assert_eq!(counts.iter().sum::<usize>(), 16);
    assert_eq!(counts, vec![16, 0, 0, 0]);
    assert!(matches!(pruner::compress(&un, PruneMode::Magnitude, None), Err(Error::Imbalance { .. })));
}

#[test]
fn magnitude_keeps_largest_with_low_index_ties() {
    let mut tile = [3i8; 16];
    tile[9] = -90;
    tile[2] = 40;
    let set = WeightTileSet::from_matrix(0, &tile, 16, 1, 4).unwrap();
    let m = pruner::magnitude_mask(&set, 4).unwrap();
    let kept: Vec<usize> = (0..16).filter(|&j| m.tiles[0][j] != 0).collect();
    assert_eq!(kept, vec![0, 1, 2, 9]);
}

#[test]
fn checksum_is_crc_of_row_major_masks() {
    let spec = model::build("DS-CAE1").unwrap();
    let cfg = LfsrConfig::default();
    let mut bytes = Vec::new();
    for (_, l) in spec.pruned_layers() {
        let (m, n) = (l.in_channels, l.out_channels);
        let nb = m.div_ceil(16);
        let mut mask = vec![0u8; m * n];
        for t in 0..n * nb {
            let valid = (m - (t % nb) * 16).min(16);
            for j in lfsr::partial_tile_indices(&cfg, t, 4, valid).unwrap().indices {
                mask[((t % nb) * 16 + j as usize) * n + t / nb] = 1;
            }
        }
        bytes.extend(mask);
    }
    let want = crc32fast::hash(&bytes);
    assert_eq!(pruner::mask_checksum(&spec, 4, &cfg).unwrap(), want);
    assert_eq!(want, 0x5936_397d);
    let other = LfsrConfig::new(DEFAULT_TAPS, [2, 2, 2, 2]).unwrap();
    assert_ne!(pruner::mask_checksum(&spec, 4, &other).unwrap(), want);
}

proptest! {
    #[test]
    fn tiling_round_trips(rows in 1usize..70, cols in 1usize..6, seed in any::<u64>()) {
        let w = dense_weights(seed, rows * cols);
        let set = WeightTileSet::from_matrix(0, &w, rows, cols, 16).unwrap();
        prop_assert_eq!(set.tiles.len(), cols * rows.div_ceil(16));
        prop_assert_eq!(set.to_matrix(), w);
    }

    #[test]
    fn nibbles_round_trip(idx in prop::collection::vec(0u8..16, 0..100)) {
        let packed = pruner::pack_nibbles(&idx);
        prop_assert_eq!(packed.len(), idx.len().div_ceil(2));
        prop_assert_eq!(pruner::unpack_nibbles(&packed, idx.len()).unwrap(), idx);
    }

    #[test]
    fn magnitude_keeps_the_top_values(seed in any::<u64>(), theta in prop::sample::select(vec![4usize, 8, 12])) {
        let w = dense_weights(seed, 16);
        let set = WeightTileSet::from_matrix(0, &w, 16, 1, theta).unwrap();
        let m = pruner::magnitude_mask(&set, theta).unwrap();
        let kept_min = m.tiles[0].iter().filter(|&&v| v != 0).map(|&v| (v as i32).abs()).min().unwrap();
        let dropped_max = w.iter().zip(&m.tiles[0]).filter(|(_, &k)| k == 0).map(|(&v, _)| (v as i32).abs()).max().unwrap();
        prop_assert!(kept_min >= dropped_max);
    }
}
