use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use detgeom::assignment::{assign as run_assign, random_square_gts, AnchorGrid};
use detgeom::evaluation::{evaluate, ApMode, MatchConfig};
use detgeom::fusion::{forward, FusionWeights, Pyramid, PyramidSpec, Tensor};
use detgeom::geometry::{size_record, SizeClass};
use detgeom::io::{
    fmt_sig, fmt_sig_padded, read_detections, read_histogram_csv, read_tensor_file, read_voc_dir, tensor_file_bytes,
    write_size_rows, write_sweep_csv, ClassTable, SizeRow, VocAnnotation,
};
use detgeom::metrics::{grad, CombinedParams, MetricKind, MetricParams, NwdParams};
use detgeom::shift::{js_divergence, smoothness_report, sweep as run_sweep, GrayImage, HistogramCounts, SweepConfig, DEFAULT_BINS};
use detgeom::{BBox, GroundTruth};

use crate::manifest::RunManifest;
use crate::{CmdResult, Failure, InputContext};

/// Value rounded to nine significant digits, for JSON outputs.
fn sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

pub fn parse_box(s: &str) -> Result<BBox, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected cx,cy,w,h but got '{s}'"));
    }
    let mut v = [0.0; 4];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("'{p}' is not a number"))?;
    }
    BBox::from_array(v).map_err(|e| e.to_string())
}

fn params(c: f64, beta: f64) -> Result<MetricParams, Failure> {
    CombinedParams::new(beta, NwdParams::new(c).input()?).input()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .input()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).invariant()?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .input()
}

fn finish(manifest: &RunManifest, out_dir: &Path) -> CmdResult {
    manifest.write(out_dir).input()?;
    Ok(())
}

#[derive(Args, Serialize)]
pub struct MetricArgs {
    /// iou, giou, diou, ciou, eiou, siou, nwd or combined.
    #[arg(long)]
    kind: MetricKind,
    /// Predicted box "cx,cy,w,h".
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    p: BBox,
    /// Ground-truth box "cx,cy,w,h".
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    g: BBox,
    /// NWD normalization constant in pixels.
    #[arg(long, default_value_t = NwdParams::DEFAULT_C)]
    c: f64,
    /// Weight of the NWD term in the combined loss.
    #[arg(long, default_value_t = CombinedParams::DEFAULT_BETA)]
    beta: f64,
    /// Also print the gradient w.r.t. (p.cx, p.cy, p.w, p.h, g.cx, g.cy, g.w, g.h).
    #[arg(long)]
    grad: bool,
    /// Print the shortest representation that round-trips instead of nine significant digits.
    #[arg(long)]
    full_precision: bool,
}

pub fn metric(a: &MetricArgs, out_dir: &Path) -> CmdResult {
    let params = params(a.c, a.beta)?;
    let manifest = RunManifest::new("metric", a).invariant()?;
    let fmt = |x: f64| if a.full_precision { format!("{x:?}") } else { fmt_sig_padded(x) };
    let value = a.kind.evaluate(&a.p, &a.g, &params);
    if !value.is_finite() {
        return Err(Failure::Invariant(anyhow!("{} evaluated to {value}", a.kind.name())));
    }
    let gradient = if a.grad { Some(grad(a.kind, &a.p, &a.g, &params).input()?) } else { None };
    println!("{}", fmt(value));
    if let Some(gr) = gradient {
        println!("{}", gr.0.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(","));
    }
    finish(&manifest, out_dir)
}

#[derive(Args, Serialize)]
pub struct SweepArgs {
    /// Ground-truth side lengths.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    sizes: Vec<f64>,
    #[arg(long, default_value_t = 16.0)]
    max_offset: f64,
    #[arg(long, default_value_t = 0.5)]
    step: f64,
    /// Predicted side as a multiple of the ground-truth side.
    #[arg(long, default_value_t = 1.0)]
    pred_scale: f64,
    #[arg(long, value_delimiter = ',', default_value = "iou,ciou,nwd")]
    metrics: Vec<MetricKind>,
    #[arg(long, default_value_t = NwdParams::DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = CombinedParams::DEFAULT_BETA)]
    beta: f64,
}

pub fn sweep(a: &SweepArgs, out_dir: &Path) -> CmdResult {
    let params = params(a.c, a.beta)?;
    let cfg = SweepConfig {
        box_sizes: a.sizes.clone(),
        max_offset: a.max_offset,
        step: a.step,
        pred_scale: a.pred_scale,
        metrics: a.metrics.clone(),
    };
    cfg.validate().input()?;
    let mut manifest = RunManifest::new("sweep", a).invariant()?;
    let curves = run_sweep(&cfg, &params).input()?;
    let expected_rows = cfg.metrics.len() * cfg.box_sizes.len() * cfg.offsets().len();
    let rows: usize = curves.iter().map(|c| c.samples.len()).sum();
    if rows != expected_rows {
        return Err(Failure::Invariant(anyhow!("{rows} sweep rows, expected {expected_rows}")));
    }
    let csv_path = out_dir.join("sweep.csv");
    write_sweep_csv(create(&csv_path)?, &curves).input()?;
    manifest.add_output(&csv_path);

    let report = smoothness_report(&curves).input()?;
    let rows: Vec<_> = report
        .iter()
        .map(|r| json!({"metric": r.metric, "box_size": r.box_size, "max_abs_slope": sig(r.max_abs_slope)}))
        .collect();
    let json_path = out_dir.join("sweep_smoothness.json");
    write_json(&json_path, &rows)?;
    manifest.add_output(&json_path);
    finish(&manifest, out_dir)
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ApModeArg {
    AllPoints,
    ElevenPoint,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// Directory of Pascal VOC XML files; image ids are the file stems.
    #[arg(long)]
    gt_dir: PathBuf,
    /// JSON-lines detections.
    #[arg(long)]
    dets: PathBuf,
    /// Class names, one per line.
    #[arg(long)]
    classes: PathBuf,
    #[arg(long, default_value_t = MatchConfig::DEFAULT_IOU)]
    iou: f64,
    #[arg(long, default_value_t = 0.0)]
    score_threshold: f64,
    #[arg(long, value_enum, default_value = "all-points")]
    ap_mode: ApModeArg,
}

fn voc_inputs(annotations: &[VocAnnotation], manifest: &mut RunManifest) -> Result<(), Failure> {
    for ann in annotations {
        manifest.add_input(&ann.path).input()?;
    }
    Ok(())
}

fn class_file_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn eval(a: &EvalArgs, out_dir: &Path) -> CmdResult {
    let mode = match a.ap_mode {
        ApModeArg::AllPoints => ApMode::AllPoints,
        ApModeArg::ElevenPoint => ApMode::ElevenPoint,
    };
    let cfg = MatchConfig::new(a.iou, a.score_threshold, mode).input()?;
    let mut manifest = RunManifest::new("eval", a).invariant()?;
    let classes = ClassTable::read(&a.classes).input()?;
    manifest.add_input(&a.classes).input()?;
    let annotations = read_voc_dir(&a.gt_dir).input()?;
    voc_inputs(&annotations, &mut manifest)?;
    let mut gts = Vec::new();
    for ann in &annotations {
        gts.extend(ann.image_ground_truths(&classes).input()?);
    }
    let dets = read_detections(&a.dets, &classes).input()?;
    manifest.add_input(&a.dets).input()?;

    let report = evaluate(&dets, &gts, &classes, &cfg).input()?;
    let s = &report.summary;
    if s.tp + s.fn_ != gts.len() || s.map50 < 0.0 || s.map50 > 1.0 {
        return Err(Failure::Invariant(anyhow!("inconsistent summary: {s:?}")));
    }
    let per_class: BTreeMap<&str, f64> = s
        .per_class_ap
        .iter()
        .map(|(&id, &ap)| (classes.name(id).unwrap_or("?"), sig(ap)))
        .collect();
    let summary = json!({
        "map50": sig(s.map50),
        "precision": sig(s.precision),
        "recall": sig(s.recall),
        "tp": s.tp,
        "fp": s.fp,
        "fn": s.fn_,
        "per_class_ap": per_class,
        "images": annotations.len(),
        "detections": dets.len(),
        "ground_truths": gts.len(),
    });
    let summary_path = out_dir.join("eval_summary.json");
    write_json(&summary_path, &summary)?;
    manifest.add_output(&summary_path);
    for curve in &report.curves {
        let name = classes.name(curve.class_id).unwrap_or("unknown");
        let path = out_dir.join(format!("pr_{}.csv", class_file_name(name)));
        curve.write_csv(create(&path)?).input()?;
        manifest.add_output(&path);
    }
    finish(&manifest, out_dir)
}

/// `"8x8,16x16+24x12,32x32"`: one comma-separated entry per stride, shapes within an entry joined by '+'.
fn parse_anchor_sizes(s: &str) -> anyhow::Result<Vec<Vec<(f64, f64)>>> {
    s.split(',')
        .map(|level| {
            level
                .split('+')
                .map(|shape| {
                    let (w, h) = shape
                        .trim()
                        .split_once('x')
                        .ok_or_else(|| anyhow!("anchor shape '{shape}' is not WxH"))?;
                    let (w, h): (f64, f64) = (w.parse()?, h.parse()?);
                    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                        bail!("anchor shape '{shape}' must be positive");
                    }
                    Ok((w, h))
                })
                .collect()
        })
        .collect()
}

#[derive(Args, Serialize)]
pub struct AssignArgs {
    #[arg(long, default_value_t = 640)]
    image_w: u32,
    #[arg(long, default_value_t = 640)]
    image_h: u32,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    strides: Vec<u32>,
    /// Anchor shapes per stride, e.g. "8x8,16x16,32x32"; default: square, side = stride.
    #[arg(long)]
    anchors: Option<String>,
    #[arg(long, default_value = "ciou")]
    metric: MetricKind,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Seed of the random ground-truth placement.
    #[arg(long, required_unless_present = "gt")]
    seed: Option<u64>,
    /// Explicit ground truth "cx,cy,w,h" (repeatable); replaces the random boxes.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true, conflicts_with = "seed")]
    gt: Vec<BBox>,
    #[arg(long, default_value_t = 1000)]
    num_gts: usize,
    /// Side of the square ground-truth boxes.
    #[arg(long, default_value_t = 6.0)]
    gt_size: f64,
    #[arg(long, default_value_t = NwdParams::DEFAULT_C)]
    c: f64,
}

pub fn assign(a: &AssignArgs, out_dir: &Path) -> CmdResult {
    let params = params(a.c, CombinedParams::DEFAULT_BETA)?;
    let mut grid = AnchorGrid::stride_sized(a.image_w, a.image_h, &a.strides);
    if let Some(s) = &a.anchors {
        grid.anchor_sizes = parse_anchor_sizes(s).input()?;
    }
    grid.validate().input()?;
    let mut manifest = RunManifest::new("assign", a).invariant()?;
    let gts = match a.seed {
        Some(seed) => random_square_gts(a.num_gts, a.gt_size, a.image_w, a.image_h, seed).input()?,
        None => a.gt.iter().map(|&bbox| GroundTruth { bbox, class_id: 0 }).collect(),
    };
    let report = run_assign(&gts, &grid, a.metric, a.threshold, &params).input()?;
    let total: usize = report.per_gt_positive_counts.iter().sum();
    if report.per_gt_positive_counts.len() != gts.len() || (total as f64 / gts.len() as f64 - report.mean_positives).abs() > 1e-12 {
        return Err(Failure::Invariant(anyhow!("report counts disagree with the mean")));
    }
    let out = json!({
        "metric": report.metric,
        "threshold": report.threshold,
        "mean_positives": sig(report.mean_positives),
        "gts_with_no_positive": report.per_gt_positive_counts.iter().filter(|&&n| n == 0).count(),
        "per_gt_positive_counts": report.per_gt_positive_counts,
        "grid": grid,
        "seed": a.seed,
        "gt_size": a.seed.map(|_| a.gt_size),
    });
    let path = out_dir.join("assign_report.json");
    write_json(&path, &out)?;
    manifest.add_output(&path);
    finish(&manifest, out_dir)
}

#[derive(Args, Serialize)]
pub struct ShiftArgs {
    #[arg(long, requires = "dir_b", conflicts_with_all = ["hist_a", "hist_b"])]
    dir_a: Option<PathBuf>,
    #[arg(long, requires = "dir_a")]
    dir_b: Option<PathBuf>,
    /// CSV with header "bin,count".
    #[arg(long, requires = "hist_b")]
    hist_a: Option<PathBuf>,
    #[arg(long, requires = "hist_a")]
    hist_b: Option<PathBuf>,
    /// Histogram bins over the 0..=255 intensity range.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pbm", "pnm"];

fn image_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no images in {}", dir.display());
    }
    Ok(files)
}

fn dir_histogram(dir: &Path, bins: usize, manifest: &mut RunManifest) -> Result<(detgeom::shift::Histogram, usize), Failure> {
    let files = image_files(dir).input()?;
    let mut counts = HistogramCounts::zeros(bins);
    for f in &files {
        counts.add_image(&GrayImage::open(f).input()?);
        manifest.add_input(f).input()?;
    }
    Ok((counts.normalize().input()?, files.len()))
}

pub fn shift(a: &ShiftArgs, out_dir: &Path) -> CmdResult {
    if !(1..=256).contains(&a.bins) {
        return Err(Failure::Input(anyhow!("--bins must be in 1..=256, got {}", a.bins)));
    }
    let mut manifest = RunManifest::new("shift", a).invariant()?;
    let (ha, hb, source, sizes) = match (&a.dir_a, &a.dir_b, &a.hist_a, &a.hist_b) {
        (Some(da), Some(db), None, None) => {
            let (ha, na) = dir_histogram(da, a.bins, &mut manifest)?;
            let (hb, nb) = dir_histogram(db, a.bins, &mut manifest)?;
            (ha, hb, "images", json!({"images_a": na, "images_b": nb}))
        }
        (None, None, Some(pa), Some(pb)) => {
            let read = |p: &PathBuf| -> Result<_, Failure> {
                let f = File::open(p).with_context(|| format!("opening {}", p.display())).input()?;
                read_histogram_csv(f, p, a.bins).input()
            };
            let (ha, hb) = (read(pa)?, read(pb)?);
            manifest.add_input(pa).input()?;
            manifest.add_input(pb).input()?;
            (ha, hb, "histograms", json!({}))
        }
        _ => return Err(Failure::Input(anyhow!("give either --dir-a/--dir-b or --hist-a/--hist-b"))),
    };
    let js = js_divergence(&ha, &hb).input()?;
    if !(0.0..=std::f64::consts::LN_2).contains(&js) {
        return Err(Failure::Invariant(anyhow!("JS divergence {js} outside [0, ln 2]")));
    }
    let out = json!({"js_divergence": sig(js), "bins": a.bins, "source": source, "inputs": sizes});
    let path = out_dir.join("shift.json");
    write_json(&path, &out)?;
    manifest.add_output(&path);
    finish(&manifest, out_dir)
}

#[derive(Args, Serialize)]
pub struct SizesArgs {
    /// Directory of Pascal VOC XML files.
    #[arg(long)]
    gt_dir: PathBuf,
}

pub fn sizes(a: &SizesArgs, out_dir: &Path) -> CmdResult {
    let mut manifest = RunManifest::new("sizes", a).invariant()?;
    let annotations = read_voc_dir(&a.gt_dir).input()?;
    voc_inputs(&annotations, &mut manifest)?;
    let mut rows = Vec::new();
    // class -> [small, medium, large]
    let mut totals: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for ann in &annotations {
        for (i, obj) in ann.objects.iter().enumerate() {
            let bbox = obj
                .bndbox
                .to_box()
                .with_context(|| format!("{}: object {}", ann.path.display(), i + 1))
                .input()?;
            let rec = size_record(&GroundTruth { bbox, class_id: 0 }, ann.width, ann.height)
                .with_context(|| format!("{}: object {}", ann.path.display(), i + 1))
                .input()?;
            if rec.overhangs {
                eprintln!(
                    "warning: {}: object {} ({}) extends past the {}x{} image",
                    ann.path.display(),
                    i + 1,
                    obj.name,
                    ann.width,
                    ann.height
                );
            }
            let slot = match rec.size_class {
                SizeClass::Small => 0,
                SizeClass::Medium => 1,
                SizeClass::Large => 2,
            };
            totals.entry(obj.name.clone()).or_default()[slot] += 1;
            rows.push(SizeRow {
                rel_w: rec.rel_w,
                rel_h: rec.rel_h,
                size_class: rec.size_class,
            });
        }
    }
    let sizes_path = out_dir.join("sizes.csv");
    write_size_rows(create(&sizes_path)?, &rows).input()?;
    manifest.add_output(&sizes_path);

    let totals_path = out_dir.join("class_totals.csv");
    let mut wr = csv::Writer::from_writer(create(&totals_path)?);
    wr.write_record(["class", "small", "medium", "large", "total"]).input()?;
    for (name, t) in &totals {
        let total = t.iter().sum::<usize>();
        wr.write_record([name.clone(), t[0].to_string(), t[1].to_string(), t[2].to_string(), total.to_string()])
            .input()?;
    }
    wr.flush().input()?;
    if totals.values().flatten().sum::<usize>() != rows.len() {
        return Err(Failure::Invariant(anyhow!("class totals do not add up to the box count")));
    }
    manifest.add_output(&totals_path);
    finish(&manifest, out_dir)
}

#[derive(Args, Serialize)]
pub struct FuseArgs {
    /// Pyramid spec JSON; default: five levels p2..p6 on a 64x64 input.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Weight tensor file.
    #[arg(long, conflicts_with = "seed", required_unless_present = "seed")]
    weights: Option<PathBuf>,
    /// Seed for generated weights.
    #[arg(long)]
    seed: Option<u64>,
    /// Input tensor file with one [C, H, W] tensor per level name.
    #[arg(long, conflicts_with = "input_seed", required_unless_present = "input_seed")]
    input: Option<PathBuf>,
    /// Seed for generated inputs.
    #[arg(long)]
    input_seed: Option<u64>,
    /// Also write the weights used to this path.
    #[arg(long)]
    emit_weights: Option<PathBuf>,
}

pub fn fuse(a: &FuseArgs, out_dir: &Path) -> CmdResult {
    let mut manifest = RunManifest::new("fuse", a).invariant()?;
    let spec = match &a.spec {
        Some(p) => {
            manifest.add_input(p).input()?;
            PyramidSpec::read(p).input()?
        }
        None => PyramidSpec::desk(),
    };
    spec.validate().input()?;
    let weights = match (&a.weights, a.seed) {
        (Some(p), _) => {
            manifest.add_input(p).input()?;
            FusionWeights::read(p, &spec).input()?
        }
        (None, Some(seed)) => FusionWeights::seeded(&spec, seed).input()?,
        (None, None) => return Err(Failure::Input(anyhow!("give --weights or --seed"))),
    };
    let inputs = match (&a.input, a.input_seed) {
        (Some(p), _) => {
            manifest.add_input(p).input()?;
            let mut tensors = read_tensor_file(p).input()?;
            let mut levels = Vec::new();
            for l in &spec.levels {
                let t = tensors
                    .remove(&l.name)
                    .ok_or_else(|| anyhow!("{}: no tensor for level {}", p.display(), l.name))
                    .input()?;
                levels.push((l.name.clone(), t.to_map().input()?));
            }
            if let Some(extra) = tensors.keys().next() {
                return Err(Failure::Input(anyhow!("{}: unexpected tensor {extra}", p.display())));
            }
            Pyramid { levels }
        }
        (None, Some(seed)) => Pyramid::seeded(&spec, seed).input()?,
        (None, None) => return Err(Failure::Input(anyhow!("give --input or --input-seed"))),
    };
    inputs.check(&spec).input()?;

    let out = forward(&inputs, &spec, &weights).invariant()?;
    let mut levels = Vec::new();
    for ((name, before), (name_out, after)) in inputs.levels.iter().zip(&out.levels) {
        if name != name_out || before.shape() != after.shape() {
            return Err(Failure::Invariant(anyhow!("level {name} changed shape")));
        }
        levels.push(json!({"name": name, "input_shape": before.shape(), "output_shape": after.shape()}));
    }
    let tensors: BTreeMap<String, Tensor> = out.levels.iter().map(|(n, m)| (n.clone(), Tensor::from_map(m))).collect();
    let bytes = tensor_file_bytes(&tensors).map_err(|m| anyhow!(m)).invariant()?;
    let out_path = out_dir.join("fused.safetensors");
    std::fs::write(&out_path, &bytes)
        .with_context(|| format!("writing {}", out_path.display()))
        .input()?;
    manifest.add_output(&out_path);

    if let Some(p) = &a.emit_weights {
        weights.write(p).input()?;
        manifest.add_output(p);
    }
    let report = json!({
        "levels": levels,
        "output_sha256": hex::encode(Sha256::digest(&bytes)),
    });
    let report_path = out_dir.join("fuse_shapes.json");
    write_json(&report_path, &report)?;
    manifest.add_output(&report_path);
    finish(&manifest, out_dir)
}
