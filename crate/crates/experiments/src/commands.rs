//! Subcommand bodies. Each returns `Ok(true)` when every requested unit of
//! work succeeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use coil::field::{read_field, write_field, FfmConfig, FfmMode};
use coil::io::{format_sig6, write_pgm, MetricRecord, METRICS_HEADER};
use coil::metrics::snr_db;
use coil::{radon_forward, Sinogram};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, MethodSpec};
use crate::pipeline::*;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn snr_label(snr: f64) -> String {
    format_sig6(snr)
}

fn cell_id(views: usize, snr: f64) -> String {
    format!("P{views}_I{}", snr_label(snr))
}

struct Stopwatch(Option<Instant>);

impl Stopwatch {
    fn start(cfg: &ExperimentConfig) -> Self {
        Self(cfg.timing.then(Instant::now))
    }

    fn seconds(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64())
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let phantom_path = dir.join("phantom.coila");
    write_image(&coil::make_shepp_logan(cfg.phantom_side)?, &phantom_path)?;
    written.push(phantom_path);
    for &views in &cfg.views_list {
        for (k, &snr) in cfg.snr_list_db.iter().enumerate() {
            let scenario = simulate_cell(cfg, views, snr)?;
            if k == 0 {
                let clean_path = dir.join(format!("clean_P{views}.coila"));
                write_sinogram(&scenario.clean, &clean_path)?;
                written.push(clean_path);
            }
            let stem = format!("noisy_{}", cell_id(views, snr));
            let noisy_path = dir.join(format!("{stem}.coila"));
            write_sinogram(&scenario.noisy, &noisy_path)?;
            let preview = dir.join(format!("{stem}.pgm"));
            let g = scenario.noisy.geometry();
            write_pgm(scenario.noisy.responses(), g.num_detectors(), g.num_views(), &preview, None)?;
            written.push(noisy_path);
            written.push(preview);
        }
    }
    Ok(written)
}

fn simulate_cell(cfg: &ExperimentConfig, views: usize, snr: f64) -> Result<Scenario> {
    crate::pipeline::simulate(cfg, views, snr)
}

pub fn train_field(cfg: &ExperimentConfig, input: &Path) -> Result<(PathBuf, PathBuf, f64)> {
    let measured = read_sinogram(input)?;
    ensure_dir(&cfg.output_dir)?;
    let trained = train(cfg, &measured, cfg.ffm)?;
    let field_path = cfg.output_dir.join("field.coilnf");
    write_field(&trained.field, &field_path).with_context(|| format!("writing {}", field_path.display()))?;
    let loss_path = cfg.output_dir.join("loss.csv");
    let mut text = String::from("epoch,loss\n");
    for (epoch, loss) in trained.loss_history.iter().enumerate() {
        text.push_str(&format!("{epoch},{loss:e}\n"));
    }
    fs::write(&loss_path, text).with_context(|| format!("writing {}", loss_path.display()))?;
    Ok((field_path, loss_path, *trained.loss_history.last().expect("at least one epoch")))
}

pub fn query_field(cfg: &ExperimentConfig, field: &Path, num_detectors: usize) -> Result<PathBuf> {
    let field = read_field(field).with_context(|| format!("reading {}", field.display()))?;
    ensure_dir(&cfg.output_dir)?;
    let synth = synthesize(cfg, &field, num_detectors)?;
    let path = cfg.output_dir.join(format!("field_P{}.coila", cfg.field_views));
    write_sinogram(&synth, &path)?;
    Ok(path)
}

pub struct ReconstructArgs {
    pub measured: PathBuf,
    pub field: Option<PathBuf>,
    pub method: MethodSpec,
    pub truth: Option<PathBuf>,
    pub experiment_id: String,
    pub input_snr_db: f64,
}

pub fn reconstruct(cfg: &ExperimentConfig, args: &ReconstructArgs) -> Result<(PathBuf, MetricRecord)> {
    let measured = read_sinogram(&args.measured)?;
    let synth = match &args.field {
        Some(p) => {
            let field = read_field(p).with_context(|| format!("reading {}", p.display()))?;
            Some(synthesize(cfg, &field, measured.geometry().num_detectors())?)
        }
        None => None,
    };
    let truth = args.truth.as_deref().map(read_image).transpose()?;
    ensure_dir(&cfg.output_dir)?;
    let watch = Stopwatch::start(cfg);
    let image = reconstruct_method(cfg, &args.method, &measured, synth.as_ref())?;
    let wall_time_s = watch.seconds();
    let label = args.method.label();
    let path = cfg.output_dir.join(format!("recon_{label}.coila"));
    write_image(&image, &path)?;
    write_preview(&image, &path.with_extension("pgm"))?;
    let record = MetricRecord {
        experiment_id: args.experiment_id.clone(),
        num_views: measured.geometry().num_views(),
        input_snr_db: args.input_snr_db,
        method: args.method.method.as_str().to_string(),
        alpha: effective_alpha(&args.method, synth.is_some()),
        snr_db: match &truth {
            Some(t) => snr_db(image.pixels(), t.pixels())?,
            None => f64::NAN,
        },
        wall_time_s,
    };
    coil::io::append_metrics_csv(&record, cfg.output_dir.join("metrics.csv"))?;
    Ok((path, record))
}

fn reconstruct_method(
    cfg: &ExperimentConfig,
    spec: &MethodSpec,
    measured: &Sinogram,
    synth: Option<&Sinogram>,
) -> Result<coil::Image> {
    crate::pipeline::reconstruct(cfg, spec, measured, synth)
        .with_context(|| format!("reconstruction with {} failed", spec.label()))
}

pub fn evaluate(estimate: &Path, reference: &Path) -> Result<f64> {
    let (a, da) = coil::io::read_array(estimate).with_context(|| format!("reading {}", estimate.display()))?;
    let (b, db) = coil::io::read_array(reference).with_context(|| format!("reading {}", reference.display()))?;
    if da != db {
        bail!("shape mismatch: {da:?} vs {db:?}");
    }
    Ok(snr_db(&a, &b)?)
}

/// Rows produced by one grid cell.
struct CellOutcome {
    rows: Vec<String>,
    field_rows: Vec<String>,
    ok: bool,
}

const MANIFEST: &str = "manifest.txt";
const ROWS: &str = "rows.csv";
const FIELD_ROWS: &str = "field_rows.csv";

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

/// Identity of a cell's inputs: every result-affecting setting except the
/// lists that enumerate cells, plus the cell itself.
fn cell_fingerprint(cfg: &ExperimentConfig, kind: &str, views: usize, snr: f64) -> String {
    let settings: String = cfg
        .canonical
        .lines()
        .filter(|l| !l.starts_with("views_list ") && !l.starts_with("snr_list_db "))
        .map(|l| format!("{l}\n"))
        .collect();
    hex(fnv1a(format!("{kind}\n{views}\n{}\n{settings}", snr.to_bits()).as_bytes()))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

/// Rows of a finished cell whose files all match its manifest.
fn resume(dir: &Path, fingerprint: &str) -> Option<CellOutcome> {
    let manifest = fs::read_to_string(dir.join(MANIFEST)).ok()?;
    let mut lines = manifest.lines();
    if lines.next()? != format!("config {fingerprint}") {
        return None;
    }
    for line in lines {
        let (name, sum) = line.strip_prefix("file ")?.rsplit_once(' ')?;
        let bytes = fs::read(dir.join(name)).ok()?;
        if hex(fnv1a(&bytes)) != sum {
            return None;
        }
    }
    Some(CellOutcome {
        rows: read_lines(&dir.join(ROWS)).ok()?,
        field_rows: read_lines(&dir.join(FIELD_ROWS)).ok()?,
        ok: true,
    })
}

fn write_manifest(dir: &Path, fingerprint: &str, files: &[String]) -> Result<()> {
    let mut text = format!("config {fingerprint}\n");
    for name in files {
        let bytes = fs::read(dir.join(name))?;
        text.push_str(&format!("file {name} {}\n", hex(fnv1a(&bytes))));
    }
    let tmp = dir.join(format!("{MANIFEST}.tmp"));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, dir.join(MANIFEST))?;
    Ok(())
}

fn joined(rows: &[String]) -> String {
    rows.iter().map(|r| format!("{r}\n")).collect()
}

/// Work done inside one cell directory: returns rows, field rows, the
/// files to checksum and whether everything succeeded.
type CellJob = dyn Fn(&ExperimentConfig, usize, f64, &Path) -> (Vec<String>, Vec<String>, Vec<String>, bool) + Sync;

fn run_cells(cfg: &ExperimentConfig, kind: &str, job: &CellJob) -> Result<Vec<CellOutcome>> {
    let cells: Vec<(usize, f64)> =
        cfg.views_list.iter().flat_map(|&p| cfg.snr_list_db.iter().map(move |&i| (p, i))).collect();
    let root = cfg.output_dir.join(kind);
    ensure_dir(&root)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(views, snr)| -> Result<CellOutcome> {
                let id = cell_id(views, snr);
                let dir = root.join(&id);
                let fingerprint = cell_fingerprint(cfg, kind, views, snr);
                if let Some(done) = resume(&dir, &fingerprint) {
                    eprintln!("{kind} {id}: up to date");
                    return Ok(done);
                }
                ensure_dir(&dir)?;
                let _ = fs::remove_file(dir.join(MANIFEST));
                let (rows, field_rows, mut files, ok) = job(cfg, views, snr, &dir);
                fs::write(dir.join(ROWS), joined(&rows))?;
                fs::write(dir.join(FIELD_ROWS), joined(&field_rows))?;
                if ok {
                    files.extend([ROWS.to_string(), FIELD_ROWS.to_string()]);
                    write_manifest(&dir, &fingerprint, &files)?;
                }
                eprintln!("{kind} {id}: {}", if ok { "done" } else { "FAILED" });
                Ok(CellOutcome { rows, field_rows, ok })
            })
            .collect()
    })
}

fn table(rows: impl Iterator<Item = String>) -> String {
    let mut text = format!("{METRICS_HEADER}\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    text
}

fn row(id: &str, views: usize, snr: f64, method: &str, alpha: f64, value: f64, secs: f64) -> String {
    MetricRecord {
        experiment_id: id.to_string(),
        num_views: views,
        input_snr_db: snr,
        method: method.to_string(),
        alpha,
        snr_db: value,
        wall_time_s: secs,
    }
    .to_csv_row()
    .expect("identifiers contain no separators")
}

fn report(kind: &str, id: &str, what: &str, err: &anyhow::Error) {
    eprintln!("{kind} {id}: {what} failed: {err:#}");
}

fn grid_cell(cfg: &ExperimentConfig, views: usize, snr: f64, dir: &Path) -> (Vec<String>, Vec<String>, Vec<String>, bool) {
    let id = cell_id(views, snr);
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut ok = true;

    let scenario = match simulate_cell(cfg, views, snr) {
        Ok(s) => s,
        Err(e) => {
            report("grid", &id, "simulation", &e);
            let nan_rows = cfg
                .methods
                .iter()
                .map(|m| row(&id, views, snr, m.method.as_str(), m.alpha.unwrap_or(0.0), f64::NAN, 0.0))
                .collect();
            return (nan_rows, vec![row(&id, views, snr, "coil_field", 0.0, f64::NAN, 0.0)], files, false);
        }
    };
    if let Err(e) = write_sinogram(&scenario.noisy, &dir.join("noisy.coila")) {
        report("grid", &id, "writing", &e);
        ok = false;
    }
    files.push("noisy.coila".to_string());

    let watch = Stopwatch::start(cfg);
    let synth = (|| -> Result<(Sinogram, f64)> {
        let trained = train(cfg, &scenario.noisy, cfg.ffm)?;
        write_field(&trained.field, dir.join("field.coilnf"))?;
        let synth = synthesize(cfg, &trained.field, scenario.noisy.geometry().num_detectors())?;
        write_sinogram(&synth, &dir.join("coil.coila"))?;
        let truth = radon_forward(&scenario.phantom, synth.geometry());
        let quality = snr_db(synth.responses(), truth.responses())?;
        Ok((synth, quality))
    })();
    let field_row = match &synth {
        Ok((_, quality)) => {
            files.extend(["field.coilnf".to_string(), "coil.coila".to_string()]);
            row(&id, views, snr, "coil_field", 0.0, *quality, watch.seconds())
        }
        Err(e) => {
            report("grid", &id, "field training", e);
            ok = false;
            row(&id, views, snr, "coil_field", 0.0, f64::NAN, 0.0)
        }
    };
    let synth = synth.ok().map(|s| s.0);

    for spec in &cfg.methods {
        let coil = if spec.needs_field() { synth.as_ref() } else { None };
        let alpha = effective_alpha(spec, coil.is_some() || spec.needs_field());
        let name = spec.method.as_str();
        if spec.needs_field() && coil.is_none() {
            rows.push(row(&id, views, snr, name, alpha, f64::NAN, 0.0));
            continue;
        }
        let watch = Stopwatch::start(cfg);
        let result = (|| -> Result<f64> {
            let image = reconstruct_method(cfg, spec, &scenario.noisy, coil)?;
            let secs = watch.seconds();
            let file = format!("recon_{}.coila", spec.label());
            write_image(&image, &dir.join(&file))?;
            files.push(file);
            let quality = snr_db(image.pixels(), scenario.phantom.pixels())?;
            rows.push(row(&id, views, snr, name, alpha, quality, secs));
            Ok(quality)
        })();
        if let Err(e) = result {
            report("grid", &id, spec.label().as_str(), &e);
            ok = false;
            rows.push(row(&id, views, snr, name, alpha, f64::NAN, 0.0));
        }
    }
    (rows, vec![field_row], files, ok)
}

/// Full pipeline for every `(P, I)` cell. Writes `metrics.csv` and
/// `field_metrics.csv` in cell order.
pub fn grid(cfg: &ExperimentConfig) -> Result<bool> {
    ensure_dir(&cfg.output_dir)?;
    let outcomes = run_cells(cfg, "grid", &grid_cell)?;
    let ok = outcomes.iter().all(|o| o.ok);
    fs::write(cfg.output_dir.join("metrics.csv"), table(outcomes.iter().flat_map(|o| o.rows.clone())))?;
    fs::write(cfg.output_dir.join("field_metrics.csv"), table(outcomes.iter().flat_map(|o| o.field_rows.clone())))?;
    Ok(ok)
}

pub const ABLATION_MODES: [FfmMode; 3] = [FfmMode::None, FfmMode::Positional, FfmMode::Linear];

fn ablation_cell(cfg: &ExperimentConfig, views: usize, snr: f64, dir: &Path) -> (Vec<String>, Vec<String>, Vec<String>, bool) {
    let id = cell_id(views, snr);
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut ok = true;
    let scenario = simulate_cell(cfg, views, snr);
    for mode in ABLATION_MODES {
        let method = format!("field_{}", mode.as_str());
        let watch = Stopwatch::start(cfg);
        let result = (|| -> Result<f64> {
            let scenario = scenario.as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
            let ffm = FfmConfig::new(mode, cfg.ffm.num_frequencies)?;
            let trained = train(cfg, &scenario.noisy, ffm)?;
            let file = format!("{method}.coilnf");
            write_field(&trained.field, dir.join(&file))?;
            files.push(file);
            let synth = synthesize(cfg, &trained.field, scenario.noisy.geometry().num_detectors())?;
            let truth = radon_forward(&scenario.phantom, synth.geometry());
            Ok(snr_db(synth.responses(), truth.responses())?)
        })();
        match result {
            Ok(quality) => rows.push(row(&id, views, snr, &method, 0.0, quality, watch.seconds())),
            Err(e) => {
                report("ffm-ablation", &id, &method, &e);
                ok = false;
                rows.push(row(&id, views, snr, &method, 0.0, f64::NAN, 0.0));
            }
        }
    }
    (rows, Vec::new(), files, ok)
}

/// Three fields per cell differing only in the feature mapping, scored on
/// the dense target geometry. Writes `ffm_ablation.csv`.
pub fn ffm_ablation(cfg: &ExperimentConfig) -> Result<bool> {
    ensure_dir(&cfg.output_dir)?;
    let outcomes = run_cells(cfg, "ffm_ablation", &ablation_cell)?;
    let ok = outcomes.iter().all(|o| o.ok);
    fs::write(cfg.output_dir.join("ffm_ablation.csv"), table(outcomes.iter().flat_map(|o| o.rows.clone())))?;
    Ok(ok)
}
