// Scratch harness for tuning acceptance scenario parameters. Not shipped.

use seatrack::runner::{run_scenario_in_memory, RunConfig};
use seatrack::simulator::Category;
use std::time::Instant;

fn base() -> RunConfig {
    RunConfig::default()
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "noiseless".into());
    match which.as_str() {
        "noiseless" => noiseless(),
        "drones" => drones(),
        "motion" => motion(),
        "turbulence" => turbulence(),
        _ => eprintln!("unknown probe"),
    }
}

fn noiseless() {
    let mut cfg = base();
    cfg.scenario.truth_rate_hz = 10.0;
    cfg.scenario.seed = 1;
    let t = Instant::now();
    let report = run_scenario_in_memory(&cfg).unwrap();
    println!(
        "noiseless: mean={:.6} std={:.6} pts={} switches={:.3} in {:.2}s",
        report.mean_error_m,
        report.std_error_m,
        report.num_points,
        report.id_switches.mean_per_500m,
        t.elapsed().as_secs_f64()
    );
}

fn moderate_noise(cfg: &mut RunConfig) {
    cfg.scenario.noise.pixel_sigma_px = 3.0;
    cfg.scenario.noise.gnss_drone_sigma_m = 0.5;
    cfg.scenario.noise.dropout_prob = 0.02;
    cfg.scenario.noise.confidence_range = (0.55, 0.95);
}

fn drones() {
    let t = Instant::now();
    for n in [3u32, 2, 1] {
        let mut means = Vec::new();
        for seed in 0..10u64 {
            let mut cfg = base();
            moderate_noise(&mut cfg);
            cfg.scenario.n_drones = n;
            cfg.scenario.seed = 100 + seed;
            let report = run_scenario_in_memory(&cfg).unwrap();
            means.push(report.mean_error_m);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        println!("n={n}: seed means {:?} -> avg {mean:.4}", means.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
    println!("drones sweep in {:.2}s", t.elapsed().as_secs_f64());
}

fn motion() {
    let t = Instant::now();
    for (label, cat, robots, length) in [
        ("linear", Category::Linear3, 2, 600.0),
        ("nonlinear", Category::NonLinear3, 2, 600.0),
        ("hardturns", Category::HardTurns3, 1, 300.0),
    ] {
        let mut means = Vec::new();
        for seed in 0..10u64 {
            let mut cfg = base();
            moderate_noise(&mut cfg);
            cfg.scenario.category = cat;
            cfg.scenario.n_robots = robots;
            cfg.scenario.course_length_m = length;
            cfg.scenario.seed = 200 + seed;
            let report = run_scenario_in_memory(&cfg).unwrap();
            means.push(report.mean_error_m);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        println!("{label}: avg {mean:.4} ({:?})", means.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
    println!("motion sweep in {:.2}s", t.elapsed().as_secs_f64());
}

fn turbulence() {
    let t = Instant::now();
    for (label, w1, w2) in [("iou", 1.0, 0.0), ("hybrid", 0.7, 0.3)] {
        let mut switch_rates = Vec::new();
        let mut means = Vec::new();
        for seed in 0..10u64 {
            let mut cfg = base();
            cfg.scenario.noise.pixel_sigma_px = 2.0;
            cfg.scenario.noise.shake_sigma_px = 40.0;
            cfg.scenario.noise.gust_prob = 0.1;
            cfg.scenario.noise.dropout_prob = 0.05;
            cfg.scenario.noise.confidence_range = (0.55, 0.95);
            cfg.scenario.robot_spacing_m = 80.0;
            cfg.scenario.drone_altitude_min_m = 65.0;
            cfg.scenario.drone_altitude_max_m = 85.0;
            cfg.pipeline.tracker.geo_gate_m = 250.0;
            cfg.pipeline.tracker.iou_weight = w1;
            cfg.pipeline.tracker.geo_weight = w2;
            cfg.scenario.seed = 123456 + seed;
            let report = run_scenario_in_memory(&cfg).unwrap();
            switch_rates.push(report.id_switches.mean_per_500m);
            means.push(report.mean_error_m);
        }
        let avg = switch_rates.iter().sum::<f64>() / switch_rates.len() as f64;
        let zero_seeds = switch_rates.iter().filter(|&&s| s == 0.0).count();
        println!(
            "{label}: switches/500m per seed {:?} -> avg {avg:.3}, zero on {zero_seeds}/10; mean err avg {:.3}",
            switch_rates.iter().map(|m| (m * 100.0).round() / 100.0).collect::<Vec<_>>(),
            means.iter().sum::<f64>() / means.len() as f64
        );
    }
    println!("turbulence in {:.2}s", t.elapsed().as_secs_f64());
}
