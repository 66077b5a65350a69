use posterior_ratio::generators::sample_gaussian_pair;
use posterior_ratio::ratio::{default_lambda_grid, schedule_k, select_lambda};
use posterior_ratio::rng::{stream, Stream};
use posterior_ratio::{Dataset, FeatureMap, FitOptions};

#[test]
fn identical_distributions_favour_heavy_regularization() {
    let grid: Vec<f64> = default_lambda_grid();
    let map = FeatureMap::linear(1);
    let (mut largest, mut smallest) = (0, 0);
    for seed in 0..25u64 {
        let p: Dataset = sample_gaussian_pair(2000, 1.0, &mut stream(seed, Stream::Target));
        let q: Dataset = sample_gaussian_pair(2000, 1.0, &mut stream(seed, Stream::Source));
        let chosen = select_lambda(
            &p,
            &q,
            schedule_k(q.len()),
            &grid,
            &map,
            &FitOptions::with_lambda(grid[0]),
        )
        .unwrap();
        largest += usize::from(chosen == grid[grid.len() - 1]);
        smallest += usize::from(chosen == grid[0]);
    }
    assert!(largest > smallest, "largest {largest}, smallest {smallest}");
}
