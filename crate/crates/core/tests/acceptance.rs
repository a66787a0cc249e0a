//! Acceptance criteria 1-9. Runs as a plain binary so that every criterion
//! prints one PASS/FAIL line; exits non-zero when any fails. Pass criterion
//! numbers as arguments to run a subset.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use neuroisp::cogloop::{load_scenario, prepare_scenario, run_closed_loop, run_open_loop, LoopOutput};
use neuroisp::events::{voxelize, DvsEvent, EventWindow, Polarity, SensorDims, VoxelGrid};
use neuroisp::imgio::{load_bayer, load_config, load_ycbcr};
use neuroisp::isp::{
    demosaic_pixel, nlm_filter, rgb_to_ycbcr, BayerPattern, CfaColor, CscMatrix, Frame, GammaLut, IspConfig,
    IspPipeline, NlmLut, Schedule, StallConfig, Window,
};
use neuroisp::snn::{
    batch_loss, firing_pattern, loss_and_grad, run_experiment, ExperimentConfig, LayerSpec, NetSpec, SpikeMode,
    SpikingNet, SurrogateParams,
};

type Outcome = Result<String, String>;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

// 1. Handshake fuzz

fn random_bayer(rng: &mut impl Rng, w: usize, h: usize, depth: u8) -> Frame {
    let max = (1u32 << depth) - 1;
    Frame::from_fn(w, h, depth, |_, _| rng.gen_range(0..=max) as u16)
}

fn handshake_fuzz() -> Outcome {
    const RUNS: u64 = 10_000;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frame = random_bayer(&mut rng, 64, 64, 8);
    let mut config = IspConfig::default();
    config.nlm.search_radius = 1;
    let base = IspPipeline::new(config, 64, 64, 8, BayerPattern::RGGB).map_err(|e| e.to_string())?;
    let reference = base.clone().run_frame(&frame, &Schedule::Polled).map_err(|e| e.to_string())?;
    let tokens = 64 * 64;

    let failures: Vec<String> = (0..RUNS)
        .into_par_iter()
        .filter_map(|seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let stall = StallConfig {
                seed,
                source: r.gen_range(0.0..0.5),
                stage: r.gen_range(0.0..0.5),
                sink: r.gen_range(0.0..0.5),
            };
            let mut seen = vec![0u8; tokens];
            let out = base.clone().run_frame_with(&frame, &Schedule::Stalled(stall), |i| seen[i] += 1);
            match out {
                Err(e) => Some(format!("seed {seed}: {e}")),
                Ok(_) if seen.iter().any(|&c| c != 1) => Some(format!("seed {seed}: token lost or duplicated")),
                Ok(o) if o.report.links.iter().any(|l| l.transfers != tokens as u64) => {
                    Some(format!("seed {seed}: link transfer count off"))
                }
                Ok(o) if o.frame.to_bytes() != reference.frame.to_bytes() => Some(format!("seed {seed}: output differs")),
                Ok(_) => None,
            }
        })
        .collect();
    let elapsed = started.elapsed();
    ensure(failures.is_empty(), || format!("{} of {RUNS} schedules failed, first: {}", failures.len(), failures[0]))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {}", secs(elapsed)))?;
    Ok(format!("{RUNS} stall schedules byte-identical, every token delivered once, {}", secs(elapsed)))
}

// 2. Fixed-point conformance

const SAMPLES: usize = 100_000;

/// Published Malvar-He-Cutler kernels at their native scale (divide by 8).
/// `row` interpolates a colour found left and right of a green centre,
/// `col` one found above and below, `diag` the opposite chroma at R or B.
const MHC_GREEN: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [-1.0, 2.0, 4.0, 2.0, -1.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0],
];
const MHC_ROW: [[f64; 5]; 5] = [
    [0.0, 0.0, 0.5, 0.0, 0.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [-1.0, 4.0, 5.0, 4.0, -1.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.5, 0.0, 0.0],
];
const MHC_DIAG: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.5, 0.0, 0.0],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [-1.5, 0.0, 6.0, 0.0, -1.5],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [0.0, 0.0, -1.5, 0.0, 0.0],
];

fn transpose(k: &[[f64; 5]; 5]) -> [[f64; 5]; 5] {
    std::array::from_fn(|r| std::array::from_fn(|c| k[c][r]))
}

fn demosaic_reference(win: &[[f64; 5]; 5], site: CfaColor, max: f64) -> [f64; 3] {
    let apply = |k: &[[f64; 5]; 5]| {
        let dot: f64 = (0..5).flat_map(|r| (0..5).map(move |c| (r, c))).map(|(r, c)| k[r][c] * win[r][c]).sum();
        (dot / 8.0).clamp(0.0, max)
    };
    let center = win[2][2];
    let col = transpose(&MHC_ROW);
    match site {
        CfaColor::R => [center, apply(&MHC_GREEN), apply(&MHC_DIAG)],
        CfaColor::B => [apply(&MHC_DIAG), apply(&MHC_GREEN), center],
        // green on a red row: red left and right, blue above and below
        CfaColor::Gr => [apply(&MHC_ROW), center, apply(&col)],
        CfaColor::Gb => [apply(&col), center, apply(&MHC_ROW)],
    }
}

fn check_demosaic(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let sites = [CfaColor::R, CfaColor::Gr, CfaColor::Gb, CfaColor::B];
    let mut worst = 0.0f64;
    for i in 0..SAMPLES {
        let depth = [8u8, 10, 12][i % 3];
        let max = (1i32 << depth) - 1;
        // alternate between uniform noise and smooth ramps, where rounding matters most
        let smooth = rng.gen_bool(0.5);
        let (a, gx, gy) = (rng.gen_range(0..=max), rng.gen_range(-40..=40), rng.gen_range(-40..=40));
        let rows: Vec<Vec<i32>> = (0..5)
            .map(|r| {
                (0..5)
                    .map(|c| if smooth { (a + gx * c + gy * r).clamp(0, max) } else { rng.gen_range(0..=max) })
                    .collect()
            })
            .collect();
        let refs: Vec<&[i32]> = rows.iter().map(Vec::as_slice).collect();
        let site = sites[rng.gen_range(0..4)];
        let got = demosaic_pixel(&Window::from_rows(&refs), site, max as u16);
        let win: [[f64; 5]; 5] = std::array::from_fn(|r| std::array::from_fn(|c| rows[r][c] as f64));
        let want = demosaic_reference(&win, site, max as f64);
        for ch in 0..3 {
            let err = (got[ch] as f64 - want[ch]).abs();
            worst = worst.max(err);
            if err > 1.0 {
                return Err(format!("demosaic {site:?} ch {ch}: {} vs {:.3} for {rows:?}", got[ch], want[ch]));
            }
        }
    }
    Ok(worst)
}

fn check_csc(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let m = CscMatrix::default();
    let coeffs = [[0.257, 0.504, 0.098], [-0.148, -0.291, 0.439], [0.439, -0.368, -0.071]];
    let offsets = [16.0, 128.0, 128.0];
    let ranges = [(16.0, 235.0), (16.0, 240.0), (16.0, 240.0)];
    let mut worst = 0.0f64;
    for i in 0..SAMPLES {
        let depth = [8u8, 10, 12][i % 3];
        let max = (1u32 << depth) - 1;
        let rgb: [u16; 3] = std::array::from_fn(|_| rng.gen_range(0..=max) as u16);
        let got = rgb_to_ycbcr(rgb, &m, depth);
        // output is 8-bit studio swing whatever the input depth
        let rgb8 = rgb.map(|v| v as f64 * 255.0 / max as f64);
        for row in 0..3 {
            let v: f64 = offsets[row] + (0..3).map(|c| coeffs[row][c] * rgb8[c]).sum::<f64>();
            let want = v.clamp(ranges[row].0, ranges[row].1);
            let err = (got[row] as f64 - want).abs();
            worst = worst.max(err);
            if err > 1.0 {
                return Err(format!("CSC row {row}: {} vs {want:.3} for {rgb:?} at {depth} bits", got[row]));
            }
        }
    }
    Ok(worst)
}

fn check_gamma(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let luts: Vec<(u8, GammaLut)> = (0..60)
        .map(|i| {
            let depth = [8u8, 10, 12][i % 3];
            let g = rng.gen_range(0.3..4.0);
            (depth, GammaLut::new(g, depth).unwrap())
        })
        .collect();
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let (depth, lut) = &luts[rng.gen_range(0..luts.len())];
        let max = ((1u32 << depth) - 1) as f64;
        let v = rng.gen_range(0..=max as u16);
        let want = (v as f64 / max).powf(1.0 / lut.exponent) * max;
        let err = (lut.apply(v) as f64 - want).abs();
        worst = worst.max(err);
        if err > 1.0 {
            return Err(format!("gamma {} at {v}: {} vs {want:.3}", lut.exponent, lut.apply(v)));
        }
    }
    Ok(worst)
}

/// Weighted patch average with weights `255 exp(-x)` on the 1/32-step grid
/// of the normalised distance `x = d2 / (h^2 P)` over `[0, 8)`.
fn nlm_reference(win: &[Vec<f64>], r: i64, s: i64, h: f64) -> f64 {
    let c = r + s;
    let at = |y: i64, x: i64| win[y as usize][x as usize];
    let p = ((2 * r + 1) * (2 * r + 1)) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for dy in -s..=s {
        for dx in -s..=s {
            let mut d2 = 0.0;
            for py in -r..=r {
                for px in -r..=r {
                    d2 += (at(c + py, c + px) - at(c + dy + py, c + dx + px)).powi(2);
                }
            }
            let x = (d2 / (h * h * p) * 32.0).floor().min(255.0) / 32.0;
            let w = (255.0 * (-x).exp()).round();
            num += w * at(c + dy, c + dx);
            den += w;
        }
    }
    num / den
}

fn check_nlm(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut luts = std::collections::HashMap::new();
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let (r, s) = (rng.gen_range(0..3usize), rng.gen_range(1..4usize));
        let h: f64 = [2.0, 5.0, 8.0, 12.5, 20.0][rng.gen_range(0..5)];
        let side = 2 * (r + s) + 1;
        let base = rng.gen_range(0..=255i32);
        let sigma = rng.gen_range(0..40);
        let rows: Vec<Vec<i32>> = (0..side)
            .map(|_| (0..side).map(|_| (base + rng.gen_range(-sigma..=sigma)).clamp(0, 255)).collect())
            .collect();
        let refs: Vec<&[i32]> = rows.iter().map(Vec::as_slice).collect();
        let lut = luts.entry((r, h.to_bits())).or_insert_with(|| NlmLut::new(h, r).unwrap());
        let got = nlm_filter(&Window::from_rows(&refs), 0, r, s, lut).0;
        let win: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect();
        let want = nlm_reference(&win, r as i64, s as i64, h);
        let err = (got as f64 - want).abs();
        worst = worst.max(err);
        if err > 1.0 {
            return Err(format!("NLM r={r} s={s} h={h}: {got} vs {want:.3}"));
        }
    }
    Ok(worst)
}

fn fixed_point_conformance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = check_demosaic(&mut rng)?;
    let c = check_csc(&mut rng)?;
    let g = check_gamma(&mut rng)?;
    let n = check_nlm(&mut rng)?;
    Ok(format!(
        "{SAMPLES} inputs per block, worst |error| LSB: demosaic {d:.3}, CSC {c:.3}, gamma {g:.3}, NLM {n:.3}"
    ))
}

// 3. DC fidelity

fn dc_fidelity() -> Outcome {
    let mut cases = 0;
    for pattern in BayerPattern::ALL {
        for depth in [8u8, 10, 12] {
            let max = (1u16 << depth) - 1;
            for v in [0, 1, max / 3, max / 2 + 7, max - 1, max] {
                let frame = Frame::from_fn(20, 14, depth, |_, _| v);
                let mut c = IspConfig::default();
                c.awb.enabled = false;
                c.gamma.enabled = false;
                c.csc.enabled = false;
                c.sharpen.enabled = false;
                let mut p = IspPipeline::new(c.clone(), 20, 14, depth, pattern).map_err(|e| e.to_string())?;
                let out = p.run_frame(&frame, &Schedule::Polled).map_err(|e| e.to_string())?.frame;
                ensure(out.data.iter().all(|&x| x == v), || format!("{pattern:?} {depth}-bit value {v} changed"))?;

                let mut dpc_only = c;
                dpc_only.demosaic.enabled = false;
                dpc_only.nlm.enabled = false;
                let mut p = IspPipeline::new(dpc_only, 20, 14, depth, pattern).map_err(|e| e.to_string())?;
                let out = p.run_frame(&frame, &Schedule::Polled).map_err(|e| e.to_string())?.frame;
                ensure(out.data == frame.data, || format!("DPC changed {pattern:?} {depth}-bit value {v}"))?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} constant frames unchanged through DPC, demosaic and NLM, all four patterns"))
}

// 4. Gradient check

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let sur = SurrogateParams::default();
    let spec = NetSpec {
        input: [4, 4],
        layers: vec![LayerSpec::Dense { out: 6 }, LayerSpec::Dense { out: 2 }],
        init_gain: 2.5,
        ..Default::default()
    };
    let mut net = SpikingNet::from_spec(&spec, 4).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for l in &mut net.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.gen_range(0.0..1.0));
    }
    let data: Vec<(VoxelGrid, usize)> = (0..3)
        .map(|i| {
            let mut g = VoxelGrid::zeros(4, 4, 4);
            g.data.iter_mut().for_each(|c| *c = rng.gen_bool(0.35) as u8);
            (g, i % 2)
        })
        .collect();
    let batch: Vec<(&VoxelGrid, usize)> = data.iter().map(|(g, y)| (g, *y)).collect();
    let (_, grads) = loss_and_grad(&net, &batch, &sur, SpikeMode::Relaxed).map_err(|e| e.to_string())?;
    let pattern = |n: &SpikingNet| -> Vec<Vec<bool>> {
        batch.iter().map(|(g, _)| firing_pattern(n, g, &sur, SpikeMode::Relaxed).unwrap()).collect()
    };
    let base = pattern(&net);

    let eps = 1e-5;
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < 100 {
        ensure(skipped < 1000, || format!("only {checked} probes away from spike-time discontinuities"))?;
        let l = rng.gen_range(0..net.layers.len());
        let bias = rng.gen_bool(0.3);
        let len = if bias { net.layers[l].bias.len() } else { net.layers[l].weights.len() };
        let i = rng.gen_range(0..len);
        let bump = |delta: f64| {
            let mut n = net.clone();
            *(if bias { &mut n.layers[l].bias[i] } else { &mut n.layers[l].weights[i] }) += delta;
            n
        };
        let (up, down) = (bump(eps), bump(-eps));
        // the reset after a spike is a jump; differences across it say nothing about the gradient
        if pattern(&up) != base || pattern(&down) != base {
            skipped += 1;
            continue;
        }
        let loss = |n: &SpikingNet| batch_loss(n, &batch, &sur, SpikeMode::Relaxed).unwrap();
        let fd = (loss(&up) - loss(&down)) / (2.0 * eps);
        let g = if bias { grads.layers[l].1[i] } else { grads.layers[l].0[i] };
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
        ensure(rel < 1e-4, || format!("layer {l} {} {i}: BPTT {g:e} vs FD {fd:e}", if bias { "bias" } else { "weight" }))?;
        worst = worst.max(rel);
        checked += 1;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {}", secs(elapsed)))?;
    Ok(format!("{checked} probes, worst relative error {worst:.2e} ({skipped} straddled a spike), {}", secs(elapsed)))
}

// 5. Training at desk scale

fn training() -> Outcome {
    let started = Instant::now();
    let cfg = ExperimentConfig::default();
    ensure(cfg.train_samples == 200 && cfg.test_samples == 50 && cfg.train.epochs <= 30, || "config drifted".into())?;
    let seed = 7;
    let report = run_experiment(&cfg, seed, |_| {}).map_err(|e| e.to_string())?;

    // recount silent hidden neurons from the raw spike rasters
    let (_, test) = cfg.datasets(seed).map_err(|e| e.to_string())?;
    let hidden = report.net.layers.len() - 1;
    let (mut silent, mut total) = (0usize, 0usize);
    for (grid, _) in &test {
        let out = report.net.forward(grid).map_err(|e| e.to_string())?;
        for layer in &out.spikes.layers[..hidden] {
            let mut fired = vec![false; layer.neurons];
            for t in 0..layer.steps {
                for (f, &s) in fired.iter_mut().zip(layer.step(t)) {
                    *f |= s != 0;
                }
            }
            silent += fired.iter().filter(|&&f| !f).count();
            total += layer.neurons;
        }
    }
    let recount = silent as f64 / total as f64;
    ensure(report.test_accuracy >= 0.9, || format!("test accuracy {}", report.test_accuracy))?;
    ensure(report.sparsity > 0.0 && report.sparsity < 1.0, || format!("sparsity {}", report.sparsity))?;
    ensure(report.sparsity == recount, || format!("sparsity {} vs recount {recount}", report.sparsity))?;
    Ok(format!(
        "{} epochs, test accuracy {:.3}, sparsity {:.4} matches recount, {}",
        report.epochs.len(),
        report.test_accuracy,
        report.sparsity,
        secs(started.elapsed())
    ))
}

// 6. Voxelizer oracle

fn brute_force_voxels(w: &EventWindow, bins: usize, dims: SensorDims) -> VoxelGrid {
    let (hh, ww) = (dims.height as usize, dims.width as usize);
    let mut g = VoxelGrid::zeros(bins, hh, ww);
    for b in 0..bins {
        for p in 0..2 {
            for y in 0..hh {
                for x in 0..ww {
                    let hit = w.events.iter().any(|e| {
                        // largest k with k * duration <= (t - start) * bins, capped at the last bin
                        let scaled = (e.t - w.start) as u128 * bins as u128;
                        let eb = (0..bins).rev().find(|&k| k as u128 * w.duration as u128 <= scaled).unwrap();
                        eb == b && e.p.index() == p && e.y as usize == y && e.x as usize == x
                    });
                    if hit {
                        let i = (((b * 2) + p) * hh + y) * ww + x;
                        g.data[i] = 1;
                    }
                }
            }
        }
    }
    g
}

fn voxelizer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut saturated = 0;
    for case in 0..1000 {
        let dims = SensorDims::new(rng.gen_range(1..=12), rng.gen_range(1..=12));
        let bins = rng.gen_range(1..=7);
        let start = rng.gen_range(0..1_000_000u64);
        let duration = rng.gen_range(1..=50_000u64);
        let n = rng.gen_range(0..=120);
        let mut events: Vec<DvsEvent> = (0..n)
            .map(|_| {
                let t = start + rng.gen_range(0..duration);
                let p = if rng.gen_bool(0.5) { Polarity::On } else { Polarity::Off };
                DvsEvent::new(t, rng.gen_range(0..dims.width), rng.gen_range(0..dims.height), p)
            })
            .collect();
        events.sort_by_key(|e| e.t);
        let window = EventWindow { start, duration, events };
        let got = voxelize(&window, bins, dims).map_err(|e| format!("case {case}: {e}"))?;
        ensure(got == brute_force_voxels(&window, bins, dims), || format!("case {case}: grid differs"))?;

        let keys: HashSet<_> = window
            .events
            .iter()
            .map(|e| (neuroisp::events::bin_index(e.t, start, duration, bins), e.p, e.x, e.y))
            .collect();
        let set = got.count_set();
        ensure(set <= window.events.len(), || format!("case {case}: {set} cells from {} events", window.events.len()))?;
        ensure((set == window.events.len()) == (keys.len() == window.events.len()), || {
            format!("case {case}: equality case of the bound violated")
        })?;
        saturated += usize::from(set < window.events.len());
    }
    Ok(format!("1000 windows match the brute-force encoder, bound holds ({saturated} with repeated cells)"))
}

// 7 and 8. Closed loop

fn run_bundled(name: &str) -> Result<(LoopOutput, LoopOutput, neuroisp::PolicyConfig), String> {
    let path = assets().join(name).join("scenario.json");
    let scenario = load_scenario(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let prepared = prepare_scenario(&scenario).map_err(|e| e.to_string())?;
    let closed = run_closed_loop(&prepared.input()).map_err(|e| e.to_string())?;
    let open = run_open_loop(&prepared.input()).map_err(|e| e.to_string())?;
    Ok((closed, open, prepared.config.policy.clone()))
}

fn closed_loop_determinism() -> Outcome {
    let (a, _, _) = run_bundled("demo")?;
    let (b, _, _) = run_bundled("demo")?;
    ensure(!a.log.is_empty(), || "demo scenario issued no directives".into())?;
    ensure(a.log_jsonl() == b.log_jsonl(), || "directive logs differ between replays".into())?;
    ensure(a.output_bytes() == b.output_bytes(), || "output bytes differ between replays".into())?;

    let (quiet, open, _) = run_bundled("quiescent")?;
    ensure(quiet.log.is_empty(), || format!("quiescent scenario logged {} directives", quiet.log.len()))?;
    ensure(quiet.output_bytes() == open.output_bytes(), || "quiescent output differs from open loop".into())?;
    Ok(format!(
        "demo replayed twice: {} identical directives, {} identical frames; quiescent log empty and equal to open loop",
        a.log.len(),
        a.frames.len()
    ))
}

fn closed_loop_efficacy() -> Outcome {
    let (out, _, policy) = run_bundled("demo")?;
    let k = policy.hysteresis_frames as usize;
    let luma: Vec<f64> = out.records.iter().map(|r| r.mean_luma).collect();
    let in_band = |v: f64| (policy.l_low..=policy.l_high).contains(&v);
    ensure(in_band(luma[0]), || format!("scene starts outside the band at {:.1}", luma[0]))?;
    let step = luma.iter().position(|&v| !in_band(v)).ok_or("no darkening step in the scenario")?;
    let back = (step + 1..=(step + k).min(luma.len() - 1)).find(|&i| in_band(luma[i]));
    let trace: Vec<String> = luma.iter().map(|v| format!("{v:.1}")).collect();
    match back {
        Some(i) => Ok(format!(
            "luma left [{}, {}] at frame {step} and returned at frame {i} (K = {k}); luma {}",
            policy.l_low,
            policy.l_high,
            trace.join(" ")
        )),
        None => Err(format!("luma did not return within {k} frames of frame {step}: {}", trace.join(" "))),
    }
}

// 9. Golden pipeline

fn golden_pipeline() -> Outcome {
    let dir = assets().join("golden");
    let (input, meta) = load_bayer(&dir.join("input.pgm")).map_err(|e| e.to_string())?;
    let config = load_config(&dir.join("config.json")).map_err(|e| e.to_string())?;
    let expected = load_ycbcr(&dir.join("expected.yuv")).map_err(|e| e.to_string())?;
    let pattern: BayerPattern = meta.bayer_pattern;
    let mut outputs = Vec::new();
    for schedule in [Schedule::Polled, Schedule::Threaded, Schedule::Stalled(StallConfig::uniform(9, 0.3))] {
        let mut p = IspPipeline::new(config.isp(), input.width, input.height, input.bit_depth, pattern)
            .map_err(|e| e.to_string())?;
        outputs.push(p.run_frame(&input, &schedule).map_err(|e| e.to_string())?.frame);
    }
    for (out, name) in outputs.iter().zip(["polled", "threaded", "stalled"]) {
        ensure(out.to_bytes() == expected.to_bytes(), || {
            let diff = out.data.iter().zip(&expected.data).filter(|(a, b)| a != b).count();
            format!("{name} output differs from the golden frame in {diff} samples")
        })?;
    }
    Ok(format!("{}x{} golden output byte-identical under polled, threaded and stalled schedules", input.width, input.height))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "handshake fuzz", handshake_fuzz),
        (2, "fixed-point conformance", fixed_point_conformance),
        (3, "DC fidelity", dc_fidelity),
        (4, "gradient check", gradient_check),
        (5, "desk-scale training", training),
        (6, "voxelizer oracle", voxelizer_oracle),
        (7, "closed-loop determinism and quiescence", closed_loop_determinism),
        (8, "closed-loop efficacy", closed_loop_efficacy),
        (9, "golden pipeline", golden_pipeline),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
