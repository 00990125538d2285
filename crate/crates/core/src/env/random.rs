use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GridWorld, Variant};

/// A random small sokoban map for property tests: between 4 and `max_side`
/// rows and columns including the boundary, scattered inner walls, and a
/// switch or pink cells depending on the variant.
pub fn random_sokoban_text(seed: u64, variant: Variant, max_side: usize) -> String {
    assert!(variant.is_sokoban() && max_side >= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.gen_range(4..=max_side);
    let cols = rng.gen_range(4..=max_side);
    let mut grid = vec![vec!['#'; cols]; rows];
    let mut open = Vec::new();
    for (r, row) in grid.iter_mut().enumerate().take(rows - 1).skip(1) {
        for (c, cell) in row.iter_mut().enumerate().take(cols - 1).skip(1) {
            *cell = '.';
            open.push((r, c));
        }
    }
    open.shuffle(&mut rng);
    // agent, box and target first, then extras, then walls
    let mut it = open.into_iter();
    for glyph in ['@', '$', 'T'] {
        let (r, c) = it.next().expect("at least four inner cells");
        grid[r][c] = glyph;
    }
    let extra = match variant {
        Variant::SokobanCell => rng.gen_range(1..=3),
        _ => usize::from(rng.gen_bool(0.8)),
    };
    let glyph = if variant == Variant::SokobanCell { 'P' } else { 'G' };
    for (r, c) in it.by_ref().take(extra) {
        grid[r][c] = glyph;
    }
    for (r, c) in it {
        if rng.gen_bool(0.15) {
            grid[r][c] = '#';
        }
    }
    let mut out = format!("variant: {variant}\n");
    for row in grid {
        out.extend(row);
        out.push('\n');
    }
    out
}

pub fn random_sokoban(seed: u64, variant: Variant, max_side: usize) -> GridWorld {
    GridWorld::parse(&random_sokoban_text(seed, variant, max_side)).expect("generated maps parse")
}
