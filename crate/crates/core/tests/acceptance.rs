//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p scenemux --test acceptance`.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenemux::dataset::{generate_dataset, Dataset, DatasetSchema, GeneratorConfig, Split};
use scenemux::decision::{train_decision, AllocationRow, AllocationVector, DecisionConfig};
use scenemux::kmeans::kmeans;
use scenemux::learners::{Labels, OutputKind, TrainConfig, VectorClassifier};
use scenemux::metrics::macro_f1;
use scenemux::pipeline::{profile, run_pipeline, PipelineRun, RunConfig};
use scenemux::profiling::{misprediction_witness, segment_semantic_scenes, train_compressed, train_scene_encoder};
use scenemux::runtime::{summarize, Method, ModelCache};
use scenemux::sampling::{adaptive_sampling, random_sampling, well_sampled_threshold};
use scenemux::store::write_run;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// 1. Backprop against central differences.

fn relu_kink_crossed(net: &VectorClassifier, inputs: &[Vec<f64>], h: f64) -> bool {
    // A coordinate step of h moves a pre-activation by at most h * max(|x|, 1).
    let scale = inputs.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    inputs.iter().any(|x| {
        (0..net.hidden_dim).any(|j| {
            let z: f64 = net.w1[j * net.input_dim..(j + 1) * net.input_dim]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + net.b1[j];
            z.abs() <= 2.0 * h * scale
        })
    })
}

fn param_mut(net: &mut VectorClassifier, mut i: usize) -> &mut f64 {
    for block in [&mut net.w1, &mut net.b1, &mut net.w2, &mut net.b2] {
        if i < block.len() {
            return &mut block[i];
        }
        i -= block.len();
    }
    unreachable!("index within parameter count")
}

fn gradient_check() -> Outcome {
    let h = 1e-4;
    let l2 = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for net_id in 0..20u64 {
        let d = rng.random_range(1..=8);
        let hd = rng.random_range(1..=8);
        let o = rng.random_range(1..=4);
        let kind = if net_id % 2 == 0 {
            OutputKind::Softmax
        } else {
            OutputKind::Sigmoid
        };
        let mut net = VectorClassifier::new(d, hd, o, kind, 100 + net_id).unwrap();
        for b in net.b1.iter_mut().chain(net.b2.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
        let batch = rng.random_range(1..=6);
        let inputs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let classes: Vec<usize> = (0..batch).map(|_| rng.random_range(0..o)).collect();
        let members: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..o).map(|_| rng.random_range(0..2) as f64).collect())
            .collect();
        let labels = match kind {
            OutputKind::Softmax => Labels::Classes(&classes),
            OutputKind::Sigmoid => Labels::Memberships(&members),
        };
        let xs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let (_, grads) = net.gradient(&xs, labels, l2).unwrap();
        let analytic: Vec<f64> = grads.flat().collect();
        for (i, &g) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            *param_mut(&mut plus, i) += h;
            let mut minus = net.clone();
            *param_mut(&mut minus, i) -= h;
            if relu_kink_crossed(&plus, &inputs, h) || relu_kink_crossed(&minus, &inputs, h) {
                skipped += 1;
                continue;
            }
            let numeric = (plus.loss(&xs, labels, l2).unwrap() - minus.loss(&xs, labels, l2).unwrap()) / (2.0 * h);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    outcome(
        worst < 1e-4 && checked > 0,
        format!("max relative error {worst:.2e} over {checked} coordinates ({skipped} next to a ReLU kink skipped), limit 1e-4"),
    )
}

// ---------------------------------------------------------------------------
// 2. Well-sampled threshold against a coupon-collector Monte Carlo.

fn coverage_probability(gamma: usize, draws: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = vec![false; gamma];
    let mut covered = 0;
    for _ in 0..trials {
        seen.iter_mut().for_each(|s| *s = false);
        let mut distinct = 0;
        for _ in 0..draws {
            let j = rng.random_range(0..gamma);
            if !seen[j] {
                seen[j] = true;
                distinct += 1;
            }
        }
        covered += (distinct == gamma) as usize;
    }
    covered as f64 / trials as f64
}

fn threshold_monte_carlo() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (gamma, theta) in [(50usize, 0.9), (100, 0.95)] {
        let m = well_sampled_threshold(gamma, theta).unwrap().ceil() as usize;
        let p = coverage_probability(gamma, m, 10_000, gamma as u64);
        pass &= (p - theta).abs() <= 0.03;
        parts.push(format!("|G|={gamma} theta={theta}: m={m} coverage {p:.4}"));
    }
    outcome(pass, format!("{} (tolerance 0.03)", parts.join("; ")))
}

// ---------------------------------------------------------------------------
// 3. k-means monotonicity and the four-point fixture.

fn kmeans_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for inst in 0..100u64 {
        let n = rng.random_range(5..60);
        let dim = rng.random_range(1..5);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let k = rng.random_range(1..=5.min(n));
        let r = kmeans(&points, k, inst, 100, 0.0).unwrap();
        if r.history.windows(2).any(|w| w[1] > w[0]) {
            violations += 1;
        }
    }
    let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
    let r = kmeans(&pts, 2, 42, 100, 0.0).unwrap();
    let a = &r.assignments;
    let bipartition = a[0] == a[1] && a[2] == a[3] && a[0] != a[2];
    outcome(
        violations == 0 && r.inertia == 1.0 && bipartition,
        format!(
            "{violations}/100 instances with an inertia increase; fixture inertia {} bipartition {bipartition}",
            r.inertia
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. LFU cache against a brute-force reference.

#[derive(Clone, Debug, PartialEq)]
struct Step {
    served: usize,
    miss: bool,
    evicted: Option<usize>,
    loaded: Option<usize>,
}

/// Resident entries are (model, uses, loaded_at); decisions scan everything.
fn reference_lfu(capacity: usize, requests: &[Vec<usize>]) -> Vec<Step> {
    let mut resident: Vec<(usize, u64, usize)> = Vec::new();
    let mut out = Vec::new();
    for (t, ranking) in requests.iter().enumerate() {
        let top = ranking[0];
        if let Some(e) = resident.iter_mut().find(|e| e.0 == top) {
            e.1 += 1;
            out.push(Step {
                served: top,
                miss: false,
                evicted: None,
                loaded: None,
            });
            continue;
        }
        if resident.is_empty() {
            resident.push((top, 1, t));
            out.push(Step {
                served: top,
                miss: true,
                evicted: None,
                loaded: Some(top),
            });
            continue;
        }
        let mut served = None;
        for &m in ranking {
            if resident.iter().any(|e| e.0 == m) {
                served = Some(m);
                break;
            }
        }
        let served = served.unwrap_or_else(|| {
            let mut best = resident[0];
            for &e in &resident {
                if e.1 > best.1 || (e.1 == best.1 && e.2 < best.2) {
                    best = e;
                }
            }
            best.0
        });
        let mut evicted = None;
        if resident.len() == capacity {
            let mut victim = 0;
            for (i, e) in resident.iter().enumerate() {
                let v = resident[victim];
                if e.1 < v.1 || (e.1 == v.1 && e.2 < v.2) {
                    victim = i;
                }
            }
            evicted = Some(resident.remove(victim).0);
        }
        if let Some(e) = resident.iter_mut().find(|e| e.0 == served) {
            e.1 += 1;
        }
        resident.push((top, 0, t));
        out.push(Step {
            served,
            miss: true,
            evicted,
            loaded: Some(top),
        });
    }
    out
}

fn lfu_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatched = 0;
    let mut decisions = 0;
    for _ in 0..1000 {
        let models = rng.random_range(1..=10);
        let capacity = rng.random_range(1..=models + 1);
        let len = rng.random_range(1..=120);
        // Skewed popularity so hits, misses and count ties all occur.
        let requests: Vec<Vec<usize>> = (0..len)
            .map(|_| {
                let mut order: Vec<usize> = (0..models).collect();
                for i in (1..models).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                if rng.random_bool(0.6) {
                    let hot = rng.random_range(0..models.min(3));
                    let pos = order.iter().position(|&m| m == hot).unwrap();
                    order.swap(0, pos);
                }
                let keep = rng.random_range(1..=models);
                order.truncate(keep);
                order
            })
            .collect();
        let expected = reference_lfu(capacity, &requests);
        let mut cache = ModelCache::new(capacity).unwrap();
        let got: Vec<Step> = requests
            .iter()
            .map(|r| {
                let o = cache.request(r).unwrap();
                Step {
                    served: o.served,
                    miss: o.miss,
                    evicted: o.evicted,
                    loaded: o.loaded,
                }
            })
            .collect();
        decisions += got.len();
        if got != expected {
            mismatched += 1;
        }
    }
    outcome(
        mismatched == 0,
        format!("{mismatched}/1000 traces diverge ({decisions} decisions compared)"),
    )
}

// ---------------------------------------------------------------------------
// 5. Sampling balance on the skewed benchmark.

fn positive_cv(rows: &[scenemux::sampling::PoolRow], n: usize) -> f64 {
    let mut counts = vec![0.0; n];
    for r in rows {
        for (c, &ok) in counts.iter_mut().zip(&r.allocation) {
            *c += ok as u8 as f64;
        }
    }
    let mean = counts.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n as f64;
    var.sqrt() / mean
}

fn sampling_balance() -> Outcome {
    let results: Vec<(f64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10u64)
            .map(|seed| {
                s.spawn(move || {
                    let mut cfg = RunConfig::with_seed(seed);
                    cfg.generator.skew = 10;
                    let ds = generate_dataset(&cfg.generator).unwrap();
                    let p = profile(&ds, &cfg.profiling).unwrap();
                    let n = p.repository.len();
                    let a = adaptive_sampling(&ds, &p.repository, &cfg.sampling).unwrap();
                    let r = random_sampling(&ds, &p.repository, cfg.sampling.kappa, cfg.sampling.seed).unwrap();
                    (positive_cv(&a.rows, n), positive_cv(&r.rows, n))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let wins = results.iter().filter(|(a, r)| a < r).count();
    let pairs: Vec<String> = results.iter().map(|(a, r)| format!("{a:.2}/{r:.2}")).collect();
    outcome(
        wins >= 9,
        format!(
            "adaptive CV below random in {wins}/10 seeds, need 9 (adaptive/random: {})",
            pairs.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. A repository model mispredicts one of its own training samples.

fn witness(run: &PipelineRun) -> Outcome {
    let found = misprediction_witness(&run.profile.repository, &run.dataset).unwrap();
    let confirmed = found.is_some_and(|(m, i)| {
        let entry = &run.profile.repository.models[m];
        let s = &run.dataset.samples[i];
        entry.training_scene.sample_indices.contains(&i) && entry.model.predict(&s.features).unwrap() != s.label
    });
    outcome(confirmed, format!("witness (model, sample) = {found:?}"))
}

// ---------------------------------------------------------------------------
// 7. Method ordering over ten seeds and per-segment repository coverage.

fn segment_f1(model: &VectorClassifier, samples: &[scenemux::dataset::Sample], nc: usize) -> f64 {
    let preds: Vec<usize> = samples.iter().map(|s| model.predict(&s.features).unwrap()).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    macro_f1(&preds, &labels, nc).unwrap()
}

struct SeedResult {
    anole: f64,
    sdm: f64,
    ssm: f64,
    worst_gap: f64,
}

fn method_ordering() -> Outcome {
    let results: Vec<SeedResult> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10u64)
            .map(|seed| {
                s.spawn(move || {
                    let run = run_pipeline(&RunConfig::with_seed(seed)).unwrap();
                    let f1 = |m| summarize(run.metrics(m)).mean_window_f1;
                    let nc = run.dataset.schema.num_classes;
                    let sdm = run.baselines.sdm();
                    let worst_gap = run
                        .trace
                        .segment_ranges()
                        .into_iter()
                        .map(|r| {
                            let seg = &run.trace.samples[r];
                            let best = run
                                .profile
                                .repository
                                .models
                                .iter()
                                .map(|e| segment_f1(&e.model, seg, nc))
                                .fold(f64::NEG_INFINITY, f64::max);
                            best - segment_f1(sdm, seg, nc)
                        })
                        .fold(f64::INFINITY, f64::min);
                    SeedResult {
                        anole: f1(Method::Anole),
                        sdm: f1(Method::Sdm),
                        ssm: f1(Method::Ssm),
                        worst_gap,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mean = |f: fn(&SeedResult) -> f64| results.iter().map(f).sum::<f64>() / results.len() as f64;
    let (anole, sdm, ssm) = (mean(|r| r.anole), mean(|r| r.sdm), mean(|r| r.ssm));
    let worst_gap = results.iter().map(|r| r.worst_gap).fold(f64::INFINITY, f64::min);
    let pass = anole >= ssm + 0.05 && anole >= sdm - 0.02 && worst_gap >= -0.05;
    outcome(
        pass,
        format!(
            "mean window F1 anole {anole:.3} sdm {sdm:.3} ssm {ssm:.3}; \
             worst segment (best repository model - sdm) {worst_gap:+.3}, limit -0.05"
        ),
    )
}

// ---------------------------------------------------------------------------
// 8, 9. Capacity sweep and top-5 coverage on the seed-42 run.

fn capacity_sweep(run: &PipelineRun) -> Outcome {
    let sweep = run.capacity_sweep().unwrap();
    let n = run.profile.repository.len();
    let miss: Vec<f64> = sweep.iter().map(|(_, m)| m.miss_rate()).collect();
    let monotone = miss.windows(2).all(|w| w[1] <= w[0]);
    let f1_at = |c: usize| sweep.iter().find(|(k, _)| *k == c).map(|(_, m)| m.mean_window_f1());
    let (f5, fn_) = (f1_at(5), f1_at(n));
    let close = matches!((f5, fn_), (Some(a), Some(b)) if (a - b).abs() <= 0.02);
    let rates: Vec<String> = miss.iter().map(|m| format!("{m:.3}")).collect();
    outcome(
        monotone && close && sweep.len() == n,
        format!(
            "miss rate over capacities 1..{n}: [{}]; F1@5 {:.3} F1@{n} {:.3}",
            rates.join(", "),
            f5.unwrap_or(f64::NAN),
            fn_.unwrap_or(f64::NAN)
        ),
    )
}

fn top5_coverage(run: &PipelineRun) -> Outcome {
    let mut counts = vec![0usize; run.profile.repository.len()];
    for f in &run.metrics(Method::Anole).frames {
        counts[f.top1_model] += 1;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = counts.iter().sum();
    let cover = counts.iter().take(5).sum::<usize>() as f64 / total as f64;
    outcome(
        cover >= 0.8,
        format!("top-5 models take {cover:.3} of top-1 selections, need 0.8"),
    )
}

// ---------------------------------------------------------------------------
// 10. Decision head on separable one-hot allocation labels.

fn separable_dataset(noise: f64) -> Dataset {
    generate_dataset(&GeneratorConfig {
        schema: DatasetSchema {
            feature_dim: 8,
            num_classes: 4,
            attr_cardinalities: vec![4],
        },
        num_semantic_cells: 4,
        clips_per_cell: 3,
        frames_per_clip: 200,
        cluster_spread: 0.3,
        label_rule_noise: noise,
        drift_strength: 0.1,
        family_separation: 6.0,
        cell_offset: 0.0,
        rule_jitter: 0.0,
        skew: 1,
        ratios: Default::default(),
        seed: 10,
    })
    .unwrap()
}

fn decision_competence() -> Outcome {
    let ds = separable_dataset(0.02);
    let scenes = segment_semantic_scenes(&ds).unwrap();
    let encoder = train_scene_encoder(
        &ds,
        &scenes,
        16,
        &TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let n = scenes.len();
    let rows: Vec<AllocationRow> = scenes
        .iter()
        .flat_map(|s| {
            s.sample_indices.iter().map(move |&i| {
                let mut v = vec![0.0; n];
                v[s.scene_id] = 1.0;
                AllocationRow {
                    sample_index: i,
                    target: AllocationVector(v),
                }
            })
        })
        .collect();
    let cfg = DecisionConfig::default();
    let model = train_decision(Arc::new(encoder), &ds, &rows, &cfg).unwrap();
    let test = ds.indices_in(Split::Test);
    let correct = test
        .iter()
        .filter(|&&i| {
            let s = &ds.samples[i];
            let truth = scenes.iter().position(|sc| sc.attrs == s.attrs).unwrap();
            model.rank_models(&s.features).unwrap().1[0] == truth
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    outcome(
        acc >= 0.9,
        format!(
            "held-out top-1 selection accuracy {acc:.3} on {} samples, need 0.9",
            test.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 11. Two seed-42 runs give identical files.

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism(first: &PipelineRun) -> Outcome {
    let second = run_pipeline(&RunConfig::with_seed(42)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_run(first, &a).unwrap();
    write_run(&second, &b).unwrap();
    let (fa, fb) = (read_all(&a), read_all(&b));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        fa.len() == fb.len() && differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", fa.len()),
    )
}

// ---------------------------------------------------------------------------
// Supporting checks.

fn generator_separability() -> Outcome {
    let defaults = RunConfig::with_seed(42);
    let ds = generate_dataset(&GeneratorConfig {
        label_rule_noise: 0.0,
        cluster_spread: 0.5,
        frames_per_clip: 3000,
        ..defaults.generator.clone()
    })
    .unwrap();
    let p = &defaults.profiling;
    let f1s: Vec<f64> = segment_semantic_scenes(&ds)
        .unwrap()
        .iter()
        .map(|s| {
            train_compressed(
                &ds,
                &s.sample_indices,
                &s.valid_indices,
                p.compressed_hidden,
                &p.compressed_train,
            )
            .unwrap()
            .1
        })
        .collect();
    let worst = f1s.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        worst >= 0.95,
        format!(
            "worst per-cell validation F1 {worst:.3} over {} cells, need 0.95",
            f1s.len()
        ),
    )
}

fn loss_non_increasing() -> Outcome {
    let ds = separable_dataset(0.0);
    let idx = ds.train_indices();
    let xs: Vec<&[f64]> = idx.iter().map(|&i| ds.samples[i].features.as_slice()).collect();
    let ys: Vec<usize> = idx.iter().map(|&i| ds.samples[i].label).collect();
    let mut net = VectorClassifier::new(8, 8, 4, OutputKind::Softmax, 5).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 60,
        batch_size: xs.len(),
        l2: 1e-4,
        momentum: 0.0,
        standardize: true,
        seed: 5,
    };
    let report = net.train(&xs, Labels::Classes(&ys), &cfg).unwrap();
    let increases = report.losses.windows(2).filter(|w| w[1] > w[0]).count();
    outcome(
        increases == 0,
        format!(
            "full-batch loss {:.4} -> {:.4} over {} epochs, {increases} increases",
            report.losses[0], report.final_loss, report.epochs_run
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {}", o.detail);
        failed += (!o.pass) as usize;
    };

    report("1 gradient check", gradient_check());
    report("2 well-sampled threshold", threshold_monte_carlo());
    report("3 k-means", kmeans_checks());
    report("4 LFU equivalence", lfu_equivalence());
    report("5 sampling balance", sampling_balance());
    let run = run_pipeline(&RunConfig::with_seed(42)).expect("seed-42 pipeline");
    report("6 misprediction witness", witness(&run));
    report("7 method ordering", method_ordering());
    report("8 capacity sweep", capacity_sweep(&run));
    report("9 top-5 coverage", top5_coverage(&run));
    report("10 decision competence", decision_competence());
    report("11 determinism", determinism(&run));
    report("generator separability", generator_separability());
    report("training loss non-increasing", loss_non_increasing());

    println!("{failed} failed, {:.1}s", start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
