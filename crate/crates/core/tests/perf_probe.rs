use forge_core::shapes;
use forge_core::watertight::{watertight_pipeline, WatertightConfig};

#[test]
#[ignore]
fn torus_n256_single_thread() {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let torus = shapes::torus(0.6, 0.2, 128, 64);
    let config = WatertightConfig {
        resolution: 256,
        ..WatertightConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = pool.install(|| watertight_pipeline(&torus, &config)).unwrap();
    println!(
        "total {:.1}s report={:?}",
        t0.elapsed().as_secs_f64(),
        out.report
    );
}
