//! Run the default pipeline over a few seeds and print per-method results.
//!
//! cargo run --release -p scenemux --example benchmark -- [seeds]

use scenemux::metrics::{mean, std_dev};
use scenemux::pipeline::{run_pipeline, RunConfig};
use scenemux::profiling::evaluate_f1;
use scenemux::runtime::{summarize, Method};

fn main() -> scenemux::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut per_method: Vec<Vec<f64>> = vec![Vec::new(); Method::ALL.len()];
    for seed in 0..seeds {
        let t0 = std::time::Instant::now();
        let run = run_pipeline(&RunConfig::with_seed(seed))?;
        let repo = &run.profile.repository;
        print!(
            "seed {seed}: repo sources {:?} f1s ",
            repo.models.iter().map(|m| m.source).collect::<Vec<_>>()
        );
        for m in &repo.models {
            print!("{:.2} ", m.validation_f1);
        }
        println!();
        for (i, (method, metrics)) in run.methods.iter().enumerate() {
            let s = summarize(metrics);
            per_method[i].push(s.mean_window_f1);
            println!(
                "  {method:5} f1 {:.3} miss {:.3} switches {:3} top5 {:.2} lowconf {}",
                s.mean_window_f1, s.miss_rate, s.switches, s.top5_coverage, s.low_confidence_frames
            );
        }
        let ranges = run.trace.segment_ranges();
        for (seg, r) in run.trace.segments.iter().zip(ranges) {
            let idx: Vec<usize> = run.trace.samples[r.clone()]
                .iter()
                .map(|s| run.dataset.clip_indices(s.clip_id)[s.frame_index as usize])
                .collect();
            let best = repo
                .models
                .iter()
                .map(|m| evaluate_f1(&m.model, &run.dataset, &idx).unwrap())
                .fold(0.0, f64::max);
            let sdm = evaluate_f1(run.baselines.sdm(), &run.dataset, &idx).unwrap();
            println!(
                "  segment clip {} family {}: best repo {best:.3} sdm {sdm:.3}",
                seg.clip,
                run.trace.samples[r.start].attrs.family()
            );
        }
        let sweep = run.capacity_sweep()?;
        println!(
            "  sweep miss {:?}",
            sweep
                .iter()
                .map(|(c, m)| format!("{c}:{:.3}/{:.3}", m.miss_rate(), m.mean_window_f1()))
                .collect::<Vec<_>>()
        );
        println!(
            "  pools cv {:.3} rows {} ({:?})",
            run.pools.positive_cv(),
            run.pools.rows.len(),
            t0.elapsed()
        );
    }
    for (i, m) in Method::ALL.iter().enumerate() {
        println!("{m:5} {:.3} ± {:.3}", mean(&per_method[i]), std_dev(&per_method[i]));
    }
    Ok(())
}
