use radiant::config::ProfileOutputConfig;
use radiant::pipeline::{compare_profiles, convergence_order, grey_slab_config, read_profile, run, Profile};
use radiant::stratified::{KappaProfile, SlabProblem};
use std::path::PathBuf;

fn reference() -> Profile {
    let p = SlabProblem::with_uniform_grid(1.0, 1200, KappaProfile::Constant(0.5), 2e-5, 1.02).unwrap();
    let s = p.solve(1e-13, 2000);
    Profile { x: s.x, t: s.temperature }
}

#[test]
fn tmp_series() {
    let rf = reference();
    let mut pts = Vec::new();
    for nx in [5usize, 10, 15] {
        let nt = nx + nx % 2;
        let mut cfg = grey_slab_config(nx, nt, 10.0);
        cfg.grid_resolution = [8, 8, 8];
        cfg.solver.max_iters = 80;
        cfg.output.profile = Some(ProfileOutputConfig { path: PathBuf::from("p.csv"), y: 0.0, z: 0.0 });
        let dir = tempfile::tempdir().unwrap();
        let _ = run(&cfg, dir.path()).unwrap();
        let prof = read_profile(&dir.path().join("p.csv")).unwrap();
        let gap = compare_profiles(&prof, &rf).unwrap();
        println!("nx={nx} nt={nt}: l2 {:.4e} max {:.4e}", gap.l2_rel_gap, gap.max_rel_gap);
        pts.push((nx as f64, gap.l2_rel_gap));
    }
    println!("slope = {:.3}", convergence_order(&pts));
}
