use fbspde::levy::stats::{ks_critical_two_sample, ks_two_sample, tail_balance, tail_slope};
use fbspde::levy::{sample_stable, simulate_brownian_path, simulate_levy_path, ChambersMallowsStuck, PathGrid, RngStream};

fn draws(alpha: f64, dt: f64, n: usize, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..n).map(|_| sample_stable(alpha, dt, &mut rng).unwrap()).collect()
}

#[test]
fn heavy_tail_slope() {
    for &alpha in &[1.2, 1.5, 1.8, 1.9] {
        let xs = draws(alpha, 1.0, 1_000_000, RngStream::new(11, (alpha * 10.0) as u64));
        let s = tail_slope(&xs, 10.0, 100.0, 16);
        assert!((s + alpha).abs() < 0.1, "alpha {alpha}: slope {s}");
    }
}

#[test]
fn symmetric_law() {
    let xs = draws(1.5, 1.0, 200_000, RngStream::new(12, 0));
    for &q in &[0.0, 1.0, 5.0] {
        let b = tail_balance(&xs, q);
        assert!(b.within(0.0, 3.0), "q {q}: {b:?}");
    }
}

#[test]
fn alpha_two_is_scaled_brownian() {
    let g = PathGrid::new(0.0, 1.0, 1000).unwrap();
    let l = simulate_levy_path(2.0, &g, &ChambersMallowsStuck, RngStream::new(13, 0)).unwrap();
    let w = simulate_brownian_path(&PathGrid::new(0.0, 1.0, 20_000).unwrap(), RngStream::new(13, 1));
    let scaled: Vec<f64> = w.increments.iter().map(|d| 2f64.sqrt() * d * (20.0f64).sqrt()).collect();
    let d = ks_two_sample(&l.increments, &scaled);
    assert!(d < ks_critical_two_sample(l.increments.len(), scaled.len(), 0.01), "{d}");
}

#[test]
fn independent_streams_are_uncorrelated() {
    let a = draws(2.0, 1.0, 50_000, RngStream::new(14, 0));
    let b = draws(2.0, 1.0, 50_000, RngStream::new(14, 1));
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let (m, se) = fbspde::sum::mean_stderr(&prod);
    assert!(m.abs() < 3.0 * se);
}
