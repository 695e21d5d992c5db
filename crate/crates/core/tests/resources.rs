use std::time::Instant;

use adaptids_core::heads::{Detector, HeadType, OpenSetConfig};
use adaptids_core::ingest::{generate_synthetic, SyntheticProfile};
use adaptids_core::neural::TrainConfig;

fn best_of(reps: usize, mut f: impl FnMut()) -> f64 {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn validation_time_scales_linearly() {
    let pool: Vec<SyntheticProfile> = SyntheticProfile::desk_pool().into_iter().take(4).collect();
    let classes: Vec<String> = pool.iter().map(|p| p.class_name.clone()).collect();
    let train = generate_synthetic(&pool, 50, 0).unwrap();
    let mut d = Detector::untrained(classes, HeadType::Doc, &OpenSetConfig::default(), 0).unwrap();
    d.train(&train, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
    let small = generate_synthetic(&pool, 250, 1).unwrap();
    let large = generate_synthetic(&pool, 500, 1).unwrap();
    let t1 = best_of(5, || {
        d.score_all(small.iter().map(|f| &f.tensor)).unwrap();
    });
    let t2 = best_of(5, || {
        d.score_all(large.iter().map(|f| &f.tensor)).unwrap();
    });
    let ratio = t2 / t1;
    assert!((1.4..=2.6).contains(&ratio), "2000/1000 flow timing ratio {ratio:.2}");
}
