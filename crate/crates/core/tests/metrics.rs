use levelblend::corpus::{Corpus, Game, TileGrid, NUM_TILES};
use levelblend::metrics::{self, BlendClass, SegmentMetrics};
use proptest::prelude::*;

const SOLID: [u8; 11] = [0, 1, 3, 4, 6, 7, 8, 9, 11, 12, 14];

fn grid_strategy() -> impl Strategy<Value = TileGrid> {
    // Bias toward background so proportions and heights vary.
    let tile = prop_oneof![3 => Just(2u8), 3 => Just(16u8), 4 => 0u8..NUM_TILES as u8];
    prop::array::uniform16(prop::array::uniform16(tile)).prop_map(|cells| TileGrid::new(cells).unwrap())
}

fn count(g: &TileGrid, ids: &[u8]) -> usize {
    let mut n = 0;
    for r in 0..16 {
        for c in 0..16 {
            if ids.contains(&g.get(r, c)) {
                n += 1;
            }
        }
    }
    n
}

fn oracle_heights(g: &TileGrid) -> Vec<f64> {
    (0..16)
        .map(|c| {
            let mut h = 0.0;
            for r in (0..16).rev() {
                if SOLID.contains(&g.get(r, c)) {
                    h = (16 - r) as f64;
                }
            }
            h
        })
        .collect()
}

fn oracle_mse(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = ys.iter().enumerate().map(|(x, y)| (x as f64 - xbar) * (y - ybar)).sum();
    let sxx: f64 = (0..ys.len()).map(|x| (x as f64 - xbar).powi(2)).sum();
    let slope = sxy / sxx;
    let icept = ybar - slope * xbar;
    ys.iter().enumerate().map(|(x, y)| (y - (icept + slope * x as f64)).powi(2)).sum::<f64>() / n
}

fn with_heights(heights: &[usize]) -> TileGrid {
    let mut g = TileGrid::filled(2);
    for (c, &h) in heights.iter().enumerate() {
        for r in 16 - h..16 {
            g.set(r, c, 0);
        }
    }
    g
}

#[test]
fn alternating_heights_match_the_oracle() {
    let heights: Vec<usize> = (0..16).map(|c| if c % 2 == 0 { 0 } else { 16 }).collect();
    let g = with_heights(&heights);
    let (mse, pct) = metrics::nonlinearity(&g);
    let expected = oracle_mse(&heights.iter().map(|&h| h as f64).collect::<Vec<_>>());
    assert!((mse - expected).abs() < 1e-9, "{mse} vs {expected}");
    assert!(mse < 64.0 && mse > 60.0);
    assert!((pct - 100.0 * mse / 64.0).abs() < 1e-12);
}

#[test]
fn training_segments_are_pure() {
    let corpus = Corpus::bundled();
    for seg in &corpus.segments {
        let m = SegmentMetrics::of(&seg.grid);
        match seg.game {
            Game::Smb => {
                assert_eq!(m.smb_proportion_pct, Some(100.0));
                assert_eq!(m.blend_class, BlendClass::SmbOnly);
            }
            Game::Ki => {
                assert_eq!(m.smb_proportion_pct, Some(0.0));
                assert_eq!(m.blend_class, BlendClass::KiOnly);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_match_brute_force(g in grid_strategy()) {
        let m = SegmentMetrics::of(&g);
        prop_assert_eq!(m.tile_counts.iter().sum::<u32>(), 256);

        let density = 100.0 * count(&g, &SOLID) as f64 / 256.0;
        prop_assert!((m.density_pct - density).abs() < 1e-9);

        let threats = count(&g, &[5, 15]).min(16);
        prop_assert!((m.difficulty_pct - 100.0 * threats as f64 / 16.0).abs() < 1e-9);

        let mse = oracle_mse(&oracle_heights(&g));
        prop_assert!((m.nonlinearity_mse - mse).abs() < 1e-9, "{} vs {}", m.nonlinearity_mse, mse);
        prop_assert!((m.nonlinearity_pct - (100.0 * mse / 64.0).min(100.0)).abs() < 1e-9);

        let smb = count(&g, &[0, 1, 3, 4, 5, 6, 7, 8, 9, 10]);
        let ki = count(&g, &[11, 12, 13, 14, 15]);
        let expected = (smb + ki > 0).then(|| 100.0 * smb as f64 / (smb + ki) as f64);
        match (m.smb_proportion_pct, expected) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
            (a, b) => prop_assert_eq!(a, b),
        }
        let class = match (smb > 0, ki > 0) {
            (true, true) => BlendClass::Blended,
            (true, false) => BlendClass::SmbOnly,
            (false, true) => BlendClass::KiOnly,
            (false, false) => BlendClass::Empty,
        };
        prop_assert_eq!(m.blend_class, class);

        for id in 0..NUM_TILES as u8 {
            let f = metrics::tile_fraction(&g, id as i64).unwrap();
            prop_assert!((f - 100.0 * count(&g, &[id]) as f64 / 256.0).abs() < 1e-9);
        }
    }

    #[test]
    fn percentages_are_bounded(g in grid_strategy()) {
        let m = SegmentMetrics::of(&g);
        for v in [m.density_pct, m.difficulty_pct, m.nonlinearity_pct] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        if let Some(p) = m.smb_proportion_pct {
            prop_assert!((0.0..=100.0).contains(&p));
        }
    }

    #[test]
    fn nonlinearity_is_mirror_invariant(g in grid_strategy()) {
        let a = metrics::nonlinearity(&g).0;
        let b = metrics::nonlinearity(&g.mirrored()).0;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn proportions_are_complementary(g in grid_strategy()) {
        match (metrics::smb_proportion(&g), metrics::ki_proportion(&g)) {
            (Some(s), Some(k)) => prop_assert!((s + k - 100.0).abs() < 1e-9),
            (None, None) => {}
            other => prop_assert!(false, "definedness differs: {:?}", other),
        }
    }
}
