use forge_core::bvh::Bvh;
use forge_core::mesh::normalize_unit;
use forge_core::shapes;
use forge_core::watertight::*;
use forge_core::winding::WindingField;
use std::time::Instant;

#[test]
#[ignore]
fn label_stage_breakdown() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let torus = shapes::torus(0.6, 0.2, 128, 64);
        let (mesh, _) = normalize_unit(&torus, 0.02).unwrap();
        let config = WatertightConfig { resolution: 128, ..Default::default() };
        let eps = config.effective_epsilon();
        let bvh = Bvh::build(&mesh);
        let grid = compute_udf(&mesh, &bvh, &UdfConfig { resolution: 128, band_cells: Some(8.0), domain_half_extent: 1.0 }).unwrap();
        let shell = extract_shell(&grid, eps).unwrap();
        let area = forge_core::mesh::surface_area(&shell, None);
        let n = config.effective_shell_samples(area);
        eprintln!("samples {n}");
        let pts = sample_shell(&shell, n, 7, 1.1).unwrap();
        let t = Instant::now();
        let tc = delaunay_tets(&pts).unwrap();
        eprintln!("delaunay {:.1}s tets {}", t.elapsed().as_secs_f64(), tc.tets.len());

        let winding = WindingField::new(&mesh);
        let t = Instant::now();
        let mut near = 0usize;
        let nears: Vec<bool> = (0..tc.tets.len()).map(|i| {
            let b = tc.barycenter(i);
            bvh.distance_capped(&b, eps) <= eps
        }).collect();
        for &b in &nears { if b { near += 1; } }
        eprintln!("near check {:.1}s near {}/{}", t.elapsed().as_secs_f64(), near, tc.tets.len());

        let t = Instant::now();
        let mut acc = 0.0;
        for i in 0..tc.tets.len() {
            if !nears[i] {
                acc += winding.eval(&tc.barycenter(i));
            }
        }
        eprintln!("winding (skip near) {:.1}s acc {acc:.1}", t.elapsed().as_secs_f64());

        let t = Instant::now();
        let mut acc2 = 0.0;
        for i in 0..tc.tets.len() {
            if nears[i] {
                acc2 += winding.eval(&tc.barycenter(i));
            }
        }
        eprintln!("winding (near only) {:.1}s acc {acc2:.1}", t.elapsed().as_secs_f64());

        let t = Instant::now();
        let labeling = label_tets(&tc, &bvh, &winding, 1.0, eps).unwrap();
        eprintln!("full label_tets {:.1}s energy {}", t.elapsed().as_secs_f64(), labeling.cut_energy);
    });
}
