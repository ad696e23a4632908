//! End-to-end acceptance checks. Runs every criterion in order, prints one
//! PASS/FAIL line each and exits nonzero if any failed.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use coil::denoise::{DenoiserKind, DenoiserSpec};
use coil::field::*;
use coil::geometry::Coordinate;
use coil::io::{decode_array, encode_array};
use coil::metrics::snr_db;
use coil::solvers::*;
use coil::*;
use coil_experiments::config::{ExperimentConfig, Settings};
use coil_experiments::pipeline;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig::from_settings(&Settings::default()).expect("defaults are valid")
}

fn adjoint_identity() -> Outcome {
    let g = make_geometry(16, 32, AngleSpan::HalfCircle).unwrap();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = Image::new(32, random_vec(&mut r, 32 * 32, -1.0, 1.0)).unwrap();
        let y = Sinogram::new(g.clone(), random_vec(&mut r, 16 * 32, -1.0, 1.0)).unwrap();
        let lhs = dot(radon_forward(&x, &g).responses(), y.responses());
        let rhs = dot(x.pixels(), radon_adjoint(&y, 32).unwrap().pixels());
        worst = worst.max((lhs - rhs).abs() / lhs.abs());
    }
    ensure(worst < 1e-10, format!("worst relative mismatch {worst:.2e} over 50 pairs"))
}

fn gradients() -> Outcome {
    let ffm = FfmConfig::default();
    let mlp = MlpConfig {
        input_dim: ffm.output_dim(),
        hidden_width: 8,
        num_hidden_layers: 3,
        penultimate_width: 8,
        skip_layers: BTreeSet::new(),
    };
    let mut field = NeuralField::zeros(ffm, mlp).unwrap();
    let mut r = rng(2);
    field.set_params(&random_vec(&mut r, field.num_params(), -0.5, 0.5)).unwrap();
    let batch: Vec<CoordinateSample> = (0..16)
        .map(|_| CoordinateSample {
            coordinate: Coordinate::new(r.random(), r.random()).unwrap(),
            response: r.random_range(-1.0..1.0),
        })
        .collect();
    let (_, grad) = field_loss_and_grad(&field, &batch).unwrap();
    let params = field.params();
    let h = 1e-5;
    let mut worst_field = 0.0f64;
    for i in 0..params.len() {
        let mut probe = field.clone();
        let mut p = params.clone();
        p[i] = params[i] + h;
        probe.set_params(&p).unwrap();
        let up = field_loss_and_grad(&probe, &batch).unwrap().0;
        p[i] = params[i] - h;
        probe.set_params(&p).unwrap();
        let down = field_loss_and_grad(&probe, &batch).unwrap().0;
        let fd = (up - down) / (2.0 * h);
        worst_field = worst_field.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
    }

    let mut r = rng(3);
    let measured = add_noise(
        &radon_forward(&Image::new(16, random_vec(&mut r, 256, 0.0, 1.0)).unwrap(), &make_geometry(7, 16, AngleSpan::HalfCircle).unwrap()),
        NoiseSpec { input_snr_db: 20.0, seed: 4 },
    )
    .unwrap();
    let coil = radon_forward(&Image::new(16, random_vec(&mut r, 256, 0.0, 1.0)).unwrap(), &make_geometry(19, 16, AngleSpan::HalfCircle).unwrap());
    let fid = DataFidelity::blended(measured, coil, 0.5).unwrap();
    let x = Image::new(16, random_vec(&mut r, 256, 0.0, 1.0)).unwrap();
    let g = grad_data(&fid, &x).unwrap();
    let h = 1e-4;
    let mut worst_data = 0.0f64;
    for i in 0..256 {
        let mut up = x.clone();
        up.pixels_mut()[i] += h;
        let mut down = x.clone();
        down.pixels_mut()[i] -= h;
        let fd = (data_value(&fid, &up).unwrap() - data_value(&fid, &down).unwrap()) / (2.0 * h);
        worst_data = worst_data.max((fd - g.pixels()[i]).abs() / g.pixels()[i].abs().max(1e-3));
    }
    ensure(
        worst_field < 1e-4 && worst_data < 1e-6,
        format!("field {} params worst {worst_field:.2e}; data term worst {worst_data:.2e}", params.len()),
    )
}

fn noise_calibration() -> Outcome {
    let phantom = make_shepp_logan(64).unwrap();
    let clean = radon_forward(&phantom, &make_geometry(60, 64, AngleSpan::HalfCircle).unwrap());
    let mut worst = 0.0f64;
    for snr in [0.0, 30.0, 40.0, 50.0] {
        let noisy = add_noise(&clean, NoiseSpec { input_snr_db: snr, seed: 5 }).unwrap();
        let e: Vec<f64> = noisy.responses().iter().zip(clean.responses()).map(|(a, b)| a - b).collect();
        let want = norm(clean.responses()) * 10f64.powf(-snr / 20.0);
        worst = worst.max((norm(&e) - want).abs() / want);
    }
    ensure(worst < 1e-12, format!("worst relative noise-norm error {worst:.2e}"))
}

fn fbp_sanity() -> Outcome {
    let phantom = make_shepp_logan(128).unwrap();
    let snr_at = |views| {
        let g = make_geometry(views, 128, AngleSpan::HalfCircle).unwrap();
        let rec = fbp(&radon_forward(&phantom, &g), 128, FbpWindow::RamLak).unwrap();
        snr_db(rec.pixels(), phantom.pixels()).unwrap()
    };
    let (dense, sparse) = (snr_at(360), snr_at(60));
    ensure(
        dense >= 20.0 && dense - sparse >= 4.0,
        format!("P=360 {dense:.2} dB (need >= 20), P=60 {sparse:.2} dB, gap {:.2} dB (need >= 4)", dense - sparse),
    )
}

fn prox_objective(z: &Image, x: &Image, mu: f64) -> f64 {
    let d: Vec<f64> = z.pixels().iter().zip(x.pixels()).map(|(a, b)| a - b).collect();
    0.5 * dot(&d, &d) + tv_value(z, mu)
}

fn tv_prox_optimality() -> Outcome {
    let mu = 0.1;
    let mut beaten = 0;
    for k in 0..20 {
        let mut r = rng(100 + k);
        let x = Image::new(8, random_vec(&mut r, 64, 0.0, 1.0)).unwrap();
        let z = tv_prox(&x, mu);
        let best = prox_objective(&z, &x, mu);
        for _ in 0..500 {
            let p: Vec<f64> = z.pixels().iter().map(|v| v + 1e-3 * r.random_range(-1.0..1.0)).collect();
            if prox_objective(&Image::new(8, p).unwrap(), &x, mu) < best {
                beaten += 1;
            }
        }
    }
    ensure(beaten == 0, format!("{beaten} of 10000 perturbations improved on the prox point"))
}

fn solver_contracts() -> Outcome {
    let cfg = desk_config();
    let problem = |side, views, snr: f64| {
        let phantom = make_shepp_logan(side).unwrap();
        let clean = radon_forward(&phantom, &make_geometry(views, side, AngleSpan::HalfCircle).unwrap());
        DataFidelity::measured(add_noise(&clean, NoiseSpec { input_snr_db: snr, seed: 6 }).unwrap())
    };
    let step = |fid: &DataFidelity, side, extra: f64| STEP_SAFETY / (power_iteration(fid, side, 50).unwrap() + extra);

    let mut notes = Vec::new();
    let mut ok = true;
    for (side, views, snr, tau) in [(64, 60, 40.0, cfg.solver.tv_weight), (32, 20, 30.0, 0.5), (24, 10, 20.0, 5.0)] {
        let fid = problem(side, views, snr);
        let sc = SolverConfig { step_size: step(&fid, side, 0.0), tv_weight: tau, max_iters: 100, ..Default::default() };
        let (_, hist) = fista_tv(&fid, &sc, &Image::zeros(side)).unwrap();
        ok &= hist.last().unwrap() < &hist[0];
    }
    notes.push(format!("fista_tv descent {}", if ok { "ok" } else { "violated" }));

    let fid = problem(64, 60, 40.0);
    let red = cfg.solver.red_weight;
    let sc = SolverConfig {
        step_size: step(&fid, 64, red),
        red_weight: red,
        denoiser: cfg.solver.red_denoiser,
        max_iters: 1000,
        stop_tol: 0.0,
        ..Default::default()
    };
    let (_, hist) = gm_red(&fid, &sc, &Image::zeros(64)).unwrap();
    let ratio = hist.last().unwrap() / hist[0];
    ok &= ratio < 1e-3;
    notes.push(format!("gm_red residual ratio {ratio:.2e} (tau {red}, {})", format!("{:?}", cfg.solver.red_denoiser.kind)));

    let fid = problem(24, 12, 30.0);
    let s = step(&fid, 24, 0.0);
    let x0 = Image::new(24, random_vec(&mut rng(7), 576, 0.0, 1.0)).unwrap();
    let (mut x, mut z, mut q) = (x0.pixels().to_vec(), x0.pixels().to_vec(), 1.0f64);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let g = grad_data(&fid, &Image::new(24, z.clone()).unwrap()).unwrap();
        let next: Vec<f64> = z.iter().zip(g.pixels()).map(|(v, d)| v - s * d).collect();
        let q_next = 0.5 * (1.0 + (1.0 + 4.0 * q * q).sqrt());
        let beta = (q_next - 1.0) / q_next;
        z = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = next;
        q = q_next;
        let sc = SolverConfig {
            step_size: s,
            denoiser: DenoiserSpec::new(DenoiserKind::Identity, 0.0).unwrap(),
            max_iters: k + 1,
            stop_tol: 0.0,
            ..Default::default()
        };
        let got = pnp_fista(&fid, &sc, &x0).unwrap();
        let d: Vec<f64> = got.pixels().iter().zip(&x).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&d) / norm(&x));
    }
    ok &= worst < 1e-12;
    notes.push(format!("pnp/AGD worst deviation {worst:.2e}"));
    ensure(ok, notes.join("; "))
}

/// Synthesized-sinogram SNR of a field trained on one desk cell.
fn field_snr(cfg: &ExperimentConfig, views: usize, snr: f64, ffm: FfmConfig) -> f64 {
    let scenario = pipeline::simulate(cfg, views, snr).unwrap();
    let truth = radon_forward(&scenario.phantom, &pipeline::field_geometry(cfg).unwrap());
    let trained = pipeline::train(cfg, &scenario.noisy, ffm).unwrap();
    let synth = pipeline::synthesize(cfg, &trained.field, cfg.phantom_side).unwrap();
    snr_db(synth.responses(), truth.responses()).unwrap()
}

fn field_trend() -> Outcome {
    let cfg = desk_config();
    let low = field_snr(&cfg, 60, 30.0, cfg.ffm);
    let high = field_snr(&cfg, 120, 50.0, cfg.ffm);
    ensure(high > low, format!("(P=60, I=30) {low:.2} dB, (P=120, I=50) {high:.2} dB"))
}

fn coil_improvement() -> Outcome {
    let cfg = desk_config();
    let scenario = pipeline::simulate(&cfg, 60, 40.0).unwrap();
    let trained = pipeline::train(&cfg, &scenario.noisy, cfg.ffm).unwrap();
    let synth = pipeline::synthesize(&cfg, &trained.field, cfg.phantom_side).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["fista_tv", "pnp_fista"] {
        let snr_for = |alpha: f64| {
            let spec = format!("{name}:{alpha}").parse().unwrap();
            let x = pipeline::reconstruct(&cfg, &spec, &scenario.noisy, Some(&synth)).unwrap();
            snr_db(x.pixels(), scenario.phantom.pixels()).unwrap()
        };
        let (base, blended) = (snr_for(0.0), snr_for(0.5));
        ok &= blended >= base - 0.1;
        notes.push(format!("{name} a=0 {base:.2} dB, a=0.5 {blended:.2} dB"));
    }
    ensure(ok, notes.join("; "))
}

fn ffm_ablation() -> Outcome {
    let cfg = desk_config();
    let none = field_snr(&cfg, 120, 40.0, FfmConfig::new(FfmMode::None, cfg.ffm.num_frequencies).unwrap());
    let linear = field_snr(&cfg, 120, 40.0, FfmConfig::new(FfmMode::Linear, cfg.ffm.num_frequencies).unwrap());
    ensure(linear >= none, format!("linear {linear:.2} dB, none {none:.2} dB"))
}

/// Every file below `dir`, relative path and contents, sorted.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL: &[&str] = &[
    "--timing", "false", "--phantom_side", "32", "--views_list", "20", "--snr_list_db", "40", "--field_views", "45",
    "--L", "4", "--train.epochs", "10", "--train.batch_size", "64", "--solver.max_iters", "20",
    "--methods", "fbp,fbp_coil,fista_tv:0.5,gm_red:0.5,pnp_fista:0.5",
];

/// Runs every subcommand against a fresh directory; returns the files
/// written and the text printed.
fn run_all(dir: &Path) -> (Vec<(String, Vec<u8>)>, String) {
    let coil = |args: &[&str]| -> String {
        let out = Command::new(env!("CARGO_BIN_EXE_coil"))
            .args(SMALL)
            .args(["--output_dir", dir.to_str().unwrap()])
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success(), "coil {args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let path = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let mut printed = String::new();
    printed += &coil(&["simulate"]);
    let inputs = snapshot(dir);
    printed += &coil(&["train-field", "--input", &path("noisy_P20_I40.coila")]);
    printed += &coil(&["query-field", "--field", &path("field.coilnf"), "--detectors", "32"]);
    for method in ["fbp", "fista_tv"] {
        printed += &coil(&[
            "reconstruct", "--measured", &path("noisy_P20_I40.coila"), "--field", &path("field.coilnf"),
            "--truth", &path("phantom.coila"), "--method", method,
        ]);
    }
    printed += &coil(&["evaluate", "--estimate", &path("recon_fbp.coila"), "--reference", &path("phantom.coila")]);
    printed += &coil(&["grid"]);
    printed += &coil(&["ffm-ablation"]);
    let after = snapshot(dir);
    for (name, bytes) in &inputs {
        let now = after.iter().find(|(n, _)| n == name).map(|(_, b)| b);
        assert_eq!(now, Some(bytes), "{name} was modified by a later command");
    }
    (after, printed.replace(dir.to_str().unwrap(), "<dir>"))
}

fn determinism_and_serialization() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (files_a, text_a) = run_all(a.path());
    let (files_b, text_b) = run_all(b.path());
    let differing: Vec<&str> =
        files_a.iter().zip(&files_b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    let same_files = files_a.len() == files_b.len() && differing.is_empty() && text_a == text_b;

    let mut r = rng(8);
    let mut round_trips = true;
    for _ in 0..50 {
        let rows = r.random_range(1..20);
        let cols = r.random_range(1..20);
        let values: Vec<f64> = (0..rows * cols).map(|_| f64::from_bits(r.random())).collect();
        let (back, dims) = decode_array(&encode_array(&values, &[rows, cols]).unwrap()).unwrap();
        round_trips &= dims == [rows, cols] && back.iter().zip(&values).all(|(x, y)| x.to_bits() == y.to_bits());

        let ffm = FfmConfig::new(FfmMode::Positional, r.random_range(1..6)).unwrap();
        let mut field = NeuralField::zeros(ffm, MlpConfig::desk(ffm.output_dim())).unwrap();
        let params: Vec<f64> = (0..field.num_params()).map(|_| f64::from_bits(r.random())).collect();
        field.set_params(&params).unwrap();
        let bytes = encode_field(&field);
        let back = decode_field(&bytes).unwrap();
        round_trips &= back.params().iter().zip(&params).all(|(x, y)| x.to_bits() == y.to_bits())
            && encode_field(&back) == bytes;
    }
    ensure(
        same_files && round_trips,
        format!(
            "{} output files compared, differing: {differing:?}; codec round trips {}",
            files_a.len(),
            if round_trips { "bit-exact" } else { "NOT exact" }
        ),
    )
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("adjoint identity", 10, adjoint_identity),
        ("gradient correctness", 30, gradients),
        ("noise calibration", 5, noise_calibration),
        ("FBP sanity", 60, fbp_sanity),
        ("TV prox optimality", 30, tv_prox_optimality),
        ("solver contracts", 300, solver_contracts),
        ("field trend over views and noise", 900, field_trend),
        ("CoIL improves iterative methods", 1200, coil_improvement),
        ("Fourier feature ablation", 900, ffm_ablation),
        ("determinism and serialization", 60, determinism_and_serialization),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failures += 1;
        }
        let timing = format!("{:.1}s of {budget}s{}", elapsed.as_secs_f64(), if in_time { "" } else { ", over budget" });
        println!("criterion {:>2} {} {name}: {detail} [{timing}]", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
