//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test --test acceptance`.

#[path = "../../../core/tests/support/reference_loop.rs"]
mod reference_loop;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use reference_loop::{Event, OracleConfig};
use tacl_core::embedding::write_embeddings;
use tacl_core::metrics::{auroc, macro_f1, micro_f1, PredictionSet, TaskKind};
use tacl_core::rng::XorShift64Star;
use tacl_core::scheduler::{average_growth_rate, instantaneous_growth_rate, is_saturated, Action};
use tacl_core::sim::sweep_beta;
use tacl_core::{
    assign_levels, build_manifest, compute_cluster_stats, compute_wcss, fit_kmeans, ClusterModel, CurriculumManifest,
    Direction, EmbeddingFormat, EmbeddingMatrix, KmeansConfig, LevelCounts, Scheduler, SchedulerConfig, StopReason,
    SyntheticLearnerConfig,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    ensure(took < limit, || format!("{detail}; took {took:?}, limit {limit:?}"))?;
    Ok(format!("{detail}; {took:.2?}"))
}

fn matrix(d: usize, data: Vec<f32>) -> EmbeddingMatrix {
    let n = data.len() / d;
    EmbeddingMatrix::new(d, data, (0..n).map(|i| format!("s{i}")).collect()).unwrap()
}

// growth rates

fn growth_identities() -> Outcome {
    timed(Duration::from_secs(1), || {
        let mut rng = XorShift64Star::new(1);
        for case in 0..1000 {
            let n = 2 + rng.next_below(9);
            let w: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let bar = average_growth_rate(&w).map_err(|e| e.to_string())?;
            let delta = instantaneous_growth_rate(&w).map_err(|e| e.to_string())?;
            let telescoped = (w[n - 1] - w[0]) / (n - 1) as f64;
            ensure((bar - telescoped).abs() <= 1e-12, || format!("window {case}: {bar} vs {telescoped}"))?;
            ensure(delta == w[n - 1] - w[n - 2], || format!("window {case}: last difference {delta}"))?;
        }
        Ok("1000 windows".into())
    })
}

fn saturation_arithmetic() -> Outcome {
    let w = [0.10, 0.20, 0.30, 0.35];
    let bar = average_growth_rate(&w).map_err(|e| e.to_string())?;
    let delta = instantaneous_growth_rate(&w).map_err(|e| e.to_string())?;
    let threshold = 0.7 * bar;
    ensure((bar - 0.083333).abs() < 1e-6, || format!("gamma_bar {bar}"))?;
    ensure((delta - 0.05).abs() < 1e-12, || format!("gamma_delta {delta}"))?;
    ensure((threshold - 0.058333).abs() < 1e-6, || format!("threshold {threshold}"))?;
    ensure(is_saturated(delta, bar, 0.7, false), || "worked case not saturated".into())?;

    let mut rng = XorShift64Star::new(2);
    for i in 0..10_000 {
        let delta = rng.next_range(-0.2, 0.2);
        let bar = if i % 50 == 0 { 0.0 } else { rng.next_range(-0.2, 0.2) };
        let beta = rng.next_range(0.01, 1.0);
        for stag in [false, true] {
            let direct = delta < beta * bar || (stag && bar <= 0.0);
            ensure(is_saturated(delta, bar, beta, stag) == direct, || {
                format!("({delta}, {bar}, {beta}, stagnation {stag})")
            })?;
        }
    }
    Ok(format!("gamma_bar {bar:.6}, gamma_delta {delta}, threshold {threshold:.6}; 10000 triples"))
}

// scheduler conformance

fn reason(r: StopReason) -> &'static str {
    match r {
        StopReason::Saturated => "saturated",
        StopReason::PatienceExhausted => "patience_exhausted",
        StopReason::EpochBudget => "epoch_budget",
    }
}

fn drive(config: &SchedulerConfig, counts: LevelCounts, mut f1: impl FnMut(u32, usize, u32) -> f64) -> Vec<Event> {
    let mut s = Scheduler::new(config.clone(), counts).unwrap();
    let mut events = Vec::new();
    let mut in_stage = 0;
    while !s.is_terminated() {
        in_stage += 1;
        let d = s.observe_epoch(f1(s.state().epoch + 1, s.state().stage_index, in_stage)).unwrap();
        match d.action {
            Action::Advance => {
                in_stage = 0;
                events.push(Event::Advance {
                    epoch: d.epoch,
                    levels: d.active_levels.iter().map(|l| l.as_str()).collect(),
                });
            }
            Action::Stop => events.push(Event::Stop { epoch: d.epoch, reason: reason(d.stop_reason.unwrap()) }),
            Action::Continue => {}
        }
    }
    events
}

/// Per-stage curves: a saturating rise toward a stage cap, Gaussian noise and
/// the occasional flat or falling stretch.
fn trajectory(rng: &mut XorShift64Star, epochs: u32) -> Vec<Vec<f64>> {
    let mut start = rng.next_range(0.1, 0.4);
    (0..3)
        .map(|_| {
            let cap = (start + rng.next_range(-0.05, 0.3)).min(0.99);
            let rate = rng.next_range(0.05, 1.5);
            let sigma = [0.0, 0.005, 0.02][rng.next_below(3)];
            let curve: Vec<f64> = (1..=epochs)
                .map(|t| {
                    let f = start + (cap - start) * (1.0 - (-rate * t as f64).exp()) + sigma * rng.next_gaussian();
                    f.clamp(0.0, 1.0)
                })
                .collect();
            start = *curve.last().unwrap();
            curve
        })
        .collect()
}

fn scheduler_conformance() -> Outcome {
    timed(Duration::from_secs(10), || {
        let mut runs = 0;
        let mut advances = 0;
        let mut reasons = std::collections::BTreeMap::new();
        for seed in 0..100u64 {
            let mut rng = XorShift64Star::new(seed);
            let n = 2 + rng.next_below(6);
            let beta = rng.next_range(0.3, 0.95);
            let epochs = 5 + rng.next_below(56) as u32;
            let patience = 1 + rng.next_below(8) as u32;
            let stagnation = rng.next_below(2) == 1;
            // about one run in five leaves a level empty
            let mut counts = [1 + rng.next_below(50), 1 + rng.next_below(50), 1 + rng.next_below(50)];
            if rng.next_below(5) == 0 {
                counts[rng.next_below(3)] = 0;
            }
            let curves = trajectory(&mut rng, epochs);
            for reversed in [false, true] {
                for reset in [false, true] {
                    let config = SchedulerConfig {
                        window_n: n,
                        beta,
                        total_epochs: epochs,
                        patience,
                        direction: if reversed { Direction::Reversed } else { Direction::Forward },
                        reset_window_on_transition: reset,
                        stagnation_as_saturation: stagnation,
                    };
                    let oracle = OracleConfig { n, beta, epochs, patience, reversed, reset, stagnation, counts };
                    let f = |_: u32, stage: usize, t: u32| curves[stage][t as usize - 1];
                    let lc = LevelCounts { easy: counts[0], medium: counts[1], hard: counts[2] };
                    let got = drive(&config, lc, f);
                    let want = reference_loop::run(&oracle, f);
                    ensure(got == want, || {
                        format!("seed {seed} reversed {reversed} reset {reset}: {got:?} vs {want:?}")
                    })?;
                    runs += 1;
                    advances += got.iter().filter(|e| matches!(e, Event::Advance { .. })).count();
                    if let Some(Event::Stop { reason, .. }) = got.last() {
                        *reasons.entry(*reason).or_insert(0) += 1;
                    }
                }
            }
        }
        Ok(format!("{runs} runs, 0 mismatches, {advances} advances, stops {reasons:?}"))
    })
}

// k-means

fn brute_force_two_means(m: &EmbeddingMatrix) -> f64 {
    let rows: Vec<Vec<f64>> = m.rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let n = rows.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let in_b = |i: usize| i > 0 && mask >> (i - 1) & 1 == 1;
        let mut total = 0.0;
        for side in [false, true] {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| in_b(i) == side).map(|i| &rows[i]).collect();
            if members.is_empty() {
                total = f64::INFINITY;
                break;
            }
            let mean: Vec<f64> =
                (0..m.d()).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64).collect();
            total +=
                members.iter().map(|r| r.iter().zip(&mean).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).sum::<f64>();
        }
        best = best.min(total);
    }
    best
}

fn kmeans() -> Outcome {
    let mut rng = XorShift64Star::new(3);
    let mut iterations = 0;
    for case in 0..50 {
        let n = 5 + rng.next_below(200);
        let d = 1 + rng.next_below(8);
        let k = 1 + rng.next_below(n.min(12));
        let m = matrix(d, (0..n * d).map(|_| (rng.next_gaussian() * 5.0) as f32).collect());
        let config = KmeansConfig { k, seed: rng.next_u64(), ..Default::default() };
        let model = fit_kmeans(&m, &config).map_err(|e| e.to_string())?;
        ensure(model.wcss_history.windows(2).all(|w| w[1] <= w[0]), || {
            format!("instance {case}: history {:?}", model.wcss_history)
        })?;
        let recomputed = compute_wcss(&m, &model.centroids, &model.assignments).map_err(|e| e.to_string())?;
        ensure((recomputed - model.wcss).abs() <= 1e-9 * model.wcss.max(1.0), || format!("instance {case}: wcss"))?;
        iterations += model.iterations_run;
    }

    let fixture = fit_kmeans(&matrix(1, vec![0.0, 1.0, 10.0, 11.0]), &KmeansConfig { k: 2, ..Default::default() })
        .map_err(|e| e.to_string())?;
    ensure(fixture.wcss == 1.0, || format!("fixture wcss {}", fixture.wcss))?;

    let mut rng = XorShift64Star::new(2024);
    let mut hits = 0;
    for case in 0..30 {
        let n = 2 + rng.next_below(7);
        let d = 1 + rng.next_below(2);
        let m = matrix(d, (0..n * d).map(|_| rng.next_range(-10.0, 10.0) as f32).collect());
        let model = fit_kmeans(&m, &KmeansConfig { k: 2, seed: rng.next_u64(), ..Default::default() })
            .map_err(|e| e.to_string())?;
        let opt = brute_force_two_means(&m);
        let slack = 1e-9 * opt.max(1.0);
        ensure(model.wcss >= opt - slack, || format!("instance {case}: {} below optimum {opt}", model.wcss))?;
        if model.wcss <= opt + slack {
            hits += 1;
        }
    }
    ensure(hits * 10 >= 30 * 8, || format!("optimum reached in {hits}/30"))?;
    Ok(format!("50 monotone histories ({iterations} iterations), fixture wcss 1, optimum in {hits}/30"))
}

// difficulty

fn manifest_for(m: &EmbeddingMatrix, model: &ClusterModel) -> Result<CurriculumManifest, String> {
    let stats = compute_cluster_stats(m, model).map_err(|e| e.to_string())?;
    build_manifest(m, model, &assign_levels(&stats)).map_err(|e| e.to_string())
}

fn member_means(m: &EmbeddingMatrix, model: &ClusterModel) -> Vec<Vec<f64>> {
    (0..model.k)
        .map(|c| {
            let rows: Vec<&[f32]> = m.rows().zip(&model.assignments).filter(|(_, &a)| a == c).map(|(r, _)| r).collect();
            (0..m.d()).map(|j| rows.iter().map(|r| r[j] as f64).sum::<f64>() / rows.len() as f64).collect()
        })
        .collect()
}

fn difficulty() -> Outcome {
    let mut rng = XorShift64Star::new(4);
    let mut refits = 0;
    for case in 0..200 {
        let n = 3 + rng.next_below(120);
        let d = 1 + rng.next_below(4);
        let k = (1 + rng.next_below(8)).min(n);
        let m = matrix(d, (0..n * d).map(|_| rng.next_range(-20.0, 20.0) as f32).collect());
        let model = fit_kmeans(&m, &KmeansConfig { k, seed: rng.next_u64(), ..Default::default() })
            .map_err(|e| e.to_string())?;
        let manifest = manifest_for(&m, &model)?;
        let at = |what: &str| format!("manifest {case} (n {n}, k {k}): {what}");

        ensure(manifest.level_counts.total() == n, || at("level counts"))?;
        let means: Vec<f64> = manifest.mean_composite_by_level().into_iter().flatten().collect();
        ensure(means.windows(2).all(|w| w[0] <= w[1]), || at(&format!("composite means {means:?}")))?;
        for s in &manifest.clusters {
            // equality holds when every member sits at the same distance;
            // allow rounding there only
            ensure(s.mean_distance * s.mean_distance <= s.density_value * (1.0 + 1e-12), || {
                at(&format!("cluster {}: {}^2 > {}", s.cluster_id, s.mean_distance, s.density_value))
            })?;
        }

        // any c > 0 with the partition held fixed
        let c = rng.next_range(0.05, 20.0) as f32;
        let sm = m.scaled(c).map_err(|e| e.to_string())?;
        let smodel = ClusterModel { centroids: member_means(&sm, &model), ..model.clone() };
        let scaled = manifest_for(&sm, &smodel)?;
        ensure(scaled.level_of_cluster() == manifest.level_of_cluster(), || at(&format!("scale {c}")))?;

        // a power of two is exact in f32, so a full refit sees the same problem
        let p = 2f32.powi(rng.next_below(9) as i32 - 4);
        let pm = m.scaled(p).map_err(|e| e.to_string())?;
        let refit = fit_kmeans(&pm, &model.config).map_err(|e| e.to_string())?;
        ensure(manifest_for(&pm, &refit)?.level_of_cluster() == manifest.level_of_cluster(), || {
            at(&format!("refit at scale {p}"))
        })?;
        refits += 1;
    }
    Ok(format!("200 manifests, {refits} scaled refits"))
}

// metrics

fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut doubled, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1;
                doubled += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    (doubled as f64 / 2.0) / pairs as f64
}

fn metrics() -> Outcome {
    let set =
        PredictionSet::from_labels(TaskKind::Binary, 2, &[1, 0, 1, 0], &[1, 1, 1, 0]).map_err(|e| e.to_string())?;
    let macro_ = macro_f1(&set).map_err(|e| e.to_string())?;
    let micro = micro_f1(&set).map_err(|e| e.to_string())?;
    // the fixture's exact macro-F1 is 11/15; 0.733333 is that value to six places
    ensure((macro_ - 11.0 / 15.0).abs() < 1e-9 && format!("{macro_:.6}") == "0.733333", || {
        format!("macro-F1 {macro_}")
    })?;
    ensure((micro - 0.75).abs() < 1e-9, || format!("micro-F1 {micro}"))?;

    let mut rng = XorShift64Star::new(5);
    for case in 0..100 {
        let n = 2 + rng.next_below(199);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.next_below(2) == 1).collect();
        labels[0] = true;
        labels[1] = false;
        // coarse scores to force ties
        let levels = 1 + rng.next_below(20) as u64;
        let scores: Vec<f64> = (0..n).map(|_| rng.next_below(levels as usize) as f64 / levels as f64).collect();
        let got = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auroc(&scores, &labels);
        ensure(got == want, || format!("auroc instance {case}: {got} vs {want}"))?;
    }

    for case in 0..100 {
        let n = 1 + rng.next_below(200);
        let l = 2 + rng.next_below(6);
        let y_true: Vec<usize> = (0..n).map(|_| rng.next_below(l)).collect();
        let y_pred: Vec<usize> =
            y_true.iter().map(|&t| if rng.next_below(3) == 0 { rng.next_below(l) } else { t }).collect();
        let set = PredictionSet::from_labels(TaskKind::Multiclass, l, &y_true, &y_pred).map_err(|e| e.to_string())?;
        let acc = y_true.iter().zip(&y_pred).filter(|(t, p)| t == p).count() as f64 / n as f64;
        let micro = micro_f1(&set).map_err(|e| e.to_string())?;
        ensure((micro - acc).abs() < 1e-12, || format!("micro instance {case}: {micro} vs accuracy {acc}"))?;
    }
    Ok(format!("macro-F1 {macro_:.9}, micro-F1 {micro}; 100 AUROC and 100 micro-F1 instances"))
}

// beta sweep

fn beta_monotonicity() -> Outcome {
    let betas = [0.5, 0.6, 0.7, 0.8, 0.9];
    let all = LevelCounts { easy: 3, medium: 3, hard: 3 };
    let mut sweeps = 0;
    for direction in [Direction::Forward, Direction::Reversed] {
        for caps in [[0.5, 0.65, 0.8], [0.3, 0.35, 0.9], [0.6, 0.9, 0.95]] {
            let caps = if direction == Direction::Reversed { [caps[1], caps[0], caps[2]] } else { caps };
            for rate in [0.05, 0.1, 0.2, 0.35, 0.7, 1.2, 2.0] {
                for n in 2..=8 {
                    let base = SchedulerConfig { window_n: n, total_epochs: 300, direction, ..Default::default() };
                    let learner = SyntheticLearnerConfig { caps, rate, ..Default::default() };
                    let rows = sweep_beta(all, Some(3), &base, &learner, &betas).map_err(|e| e.to_string())?;
                    let firsts: Vec<u32> = rows.iter().map(|r| r.transition1.unwrap_or(u32::MAX)).collect();
                    ensure(firsts.windows(2).all(|w| w[1] <= w[0]), || {
                        format!("{direction:?} caps {caps:?} rate {rate} N {n}: {firsts:?}")
                    })?;
                    sweeps += 1;
                }
            }
        }
    }
    Ok(format!("{sweeps} sweeps over beta {betas:?}"))
}

// end to end

fn tacl(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out =
        Command::new(env!("CARGO_BIN_EXE_tacl")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("tacl {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn pipeline(dir: &Path, m: &EmbeddingMatrix) -> Result<Vec<Vec<u8>>, String> {
    write_embeddings(m, dir.join("emb.bin"), EmbeddingFormat::Binary).map_err(|e| e.to_string())?;
    tacl(dir, &["cluster", "--input", "emb.bin", "--k", "5", "--seed", "17", "--output", "clusters.json"])?;
    tacl(dir, &["assign", "--clusters", "clusters.json", "--input", "emb.bin", "--output", "manifest.json"])?;
    tacl(dir, &["simulate", "--manifest", "manifest.json", "--noise", "0.01", "--seed", "17", "--output", "run.json"])?;
    tacl(dir, &["simulate", "--manifest", "manifest.json", "--sweep", "beta=0.5:0.9:0.1", "--output", "sweep.csv"])?;
    ["emb.bin", "clusters.json", "manifest.json", "run.json", "sweep.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map_err(|e| e.to_string()))
        .collect()
}

fn determinism() -> Outcome {
    let mut rng = XorShift64Star::new(6);
    let m = EmbeddingMatrix::new(
        8,
        (0..300 * 8).map(|_| rng.next_gaussian() as f32).collect(),
        (0..300).map(|i| format!("doc-{i}")).collect(),
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let first = pipeline(a.path(), &m)?;
    let second = pipeline(b.path(), &m)?;
    ensure(first == second, || "artifacts differ between runs".into())?;
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(format!("5 artifacts, {bytes} bytes, identical"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("growth-rate identities", growth_identities),
        ("saturation arithmetic", saturation_arithmetic),
        ("scheduler conformance", scheduler_conformance),
        ("k-means", kmeans),
        ("difficulty invariants", difficulty),
        ("metrics", metrics),
        ("beta monotonicity", beta_monotonicity),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
