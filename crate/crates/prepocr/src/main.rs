use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use prepocr::dataset::{generate_dataset, DatasetConfig};
use prepocr::io;
use prepocr::ocr::{run_ocr, OcrEngine, OcrEngineSpec, OcrInput};
use prepocr::pipeline::{load_pages, run_pipeline, write_outputs, PipelineConfig, RunManifest};
use prepocr::report::build_report;
use prepocr::restorer::RestorerSpec;
use prepocr_core::amp::{heat_image, AmpRegion, PsnrAccumulator};
use prepocr_core::correct::{BeamConfig, CharLM, Corrector, DEFAULT_K, DEFAULT_ORDER};
use prepocr_core::image::resize_to_width;
use prepocr_core::ocrnoise::{
    calibrate_rate, extract_error_model, inject_errors, make_training_pairs, ErrorModel, PairConfig, RateScale,
};
use prepocr_core::patch::{restore_image_detailed, FusionMethod, RestoreMode, ScanDirection};
use prepocr_core::synth::{degrade, NoiseLevel};
use prepocr_core::text::{align_document, evaluate_page, DocumentAlignConfig, PageEval};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "prepocr", version, about = "Document restoration, OCR evaluation and post-correction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate rendered clean/degraded page pairs from a text corpus.
    Synth(SynthArgs),
    /// Apply one noise level to an image.
    Degrade(DegradeArgs),
    /// Restore an image patch by patch.
    Restore(RestoreArgs),
    /// Masked PSNR (AMP) between ground-truth and predicted patch sets.
    Amp(AmpArgs),
    /// Run an OCR engine over a page list.
    Ocr(OcrArgs),
    /// Align OCR output against ground truth and report CER/WER.
    Align(AlignArgs),
    /// Build an error model from aligned ground truth and OCR output.
    ExtractErrors(ExtractArgs),
    /// Find the rate multiplier that hits a target CER.
    Calibrate(CalibrateArgs),
    /// Inject OCR-like errors into text.
    Inject(InjectArgs),
    /// Write clean/noisy training pairs.
    MakePairs(MakePairsArgs),
    /// Train the character language model.
    LmTrain(LmTrainArgs),
    /// Post-correct OCR text with the noisy-channel corrector.
    Correct(CorrectArgs),
    /// Run raw, pre and prep stages over a page list.
    Pipeline(PipelineArgs),
    /// Rebuild report.json and report.txt from a run manifest.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Font file; repeat for several.
    #[arg(long = "font", required = true)]
    fonts: Vec<PathBuf>,
    /// JSON dataset config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict every pair to one noise level.
    #[arg(long)]
    level: Option<u8>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    level: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Multi,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Median,
    Mean,
}

impl From<FusionArg> for FusionMethod {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Median => FusionMethod::Median,
            FusionArg::Mean => FusionMethod::Mean,
        }
    }
}

#[derive(Args)]
struct RestoreArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "identity")]
    restorer: RestorerSpec,
    #[arg(long, value_enum, default_value = "multi")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "median")]
    fusion: FusionArg,
    /// Scan direction for single mode: tl-br, tr-bl, bl-tr, br-tl.
    #[arg(long, default_value = "tl-br", value_parser = parse_direction)]
    direction: ScanDirection,
    #[arg(long, default_value_t = 64)]
    trim: u32,
    /// Resize to this width before restoring, or `off`.
    #[arg(long, default_value = "off", value_parser = parse_width)]
    resize_width: Width,
    /// Also write per-pass checksums as JSON.
    #[arg(long)]
    passes: Option<PathBuf>,
}

fn parse_direction(s: &str) -> Result<ScanDirection, String> {
    ScanDirection::parse(s).ok_or_else(|| format!("unknown direction `{s}`"))
}

#[derive(Clone, Copy)]
enum Width {
    Off,
    Px(u32),
}

fn parse_width(s: &str) -> Result<Width, String> {
    match s {
        "off" => Ok(Width::Off),
        n => n.parse::<u32>().ok().filter(|&w| w > 0).map(Width::Px).ok_or_else(|| format!("bad width `{s}`")),
    }
}

fn parse_region(s: &str) -> Result<AmpRegion, String> {
    AmpRegion::parse(s).ok_or_else(|| format!("region must be full, 192 or 128, not `{s}`"))
}

#[derive(Args)]
struct AmpArgs {
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    pred_dir: PathBuf,
    /// Region used for the heat image; the report lists all three.
    #[arg(long, default_value = "full", value_parser = parse_region)]
    region: AmpRegion,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct EngineArgs {
    /// JSON engine spec.
    #[arg(long, conflicts_with_all = ["command", "error_model"])]
    engine: Option<PathBuf>,
    /// External command with {image} and {output} placeholders.
    #[arg(long)]
    command: Option<String>,
    /// Mock engine: error model to inject from.
    #[arg(long)]
    error_model: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EngineArgs {
    fn spec(&self) -> Result<OcrEngineSpec> {
        Ok(match (&self.engine, &self.command) {
            (Some(p), _) => io::read_json(p)?,
            (None, Some(c)) => OcrEngineSpec::ExternalCommand { command: c.clone() },
            (None, None) => OcrEngineSpec::Mock {
                error_model: self.error_model.clone(),
                lambda: self.lambda,
                target_cer: None,
                seed: self.seed,
            },
        })
    }
}

#[derive(Args)]
struct OcrArgs {
    /// JSONL page list (`image`, optional `gt` or `text`).
    #[arg(long)]
    pages: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Output directory; one NNNNNN.txt per page plus failures.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    gt: PathBuf,
    /// OCR output; repeat for several pages of the same book.
    #[arg(long = "hyp", required = true)]
    hyps: Vec<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Ground truth; pairs with the matching --hyp.
    #[arg(long = "gt", required = true)]
    gts: Vec<PathBuf>,
    #[arg(long = "hyp", required = true)]
    hyps: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    target: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Rate file from `calibrate`.
    #[arg(long, conflicts_with = "lambda")]
    rate: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MakePairsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated target CERs.
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.1])]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    max_chars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LmTrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    smoothing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    channel: PathBuf,
    /// JSON beam settings.
    #[arg(long)]
    beam: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSONL page list; a `synth` manifest works as is.
    #[arg(long)]
    pages: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for report.json and report.txt; defaults to the manifest's.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Degrade(a) => degrade_cmd(a),
        Command::Restore(a) => restore(a),
        Command::Amp(a) => amp(a),
        Command::Ocr(a) => ocr(a),
        Command::Align(a) => align(a),
        Command::ExtractErrors(a) => extract(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Inject(a) => inject(a),
        Command::MakePairs(a) => make_pairs(a),
        Command::LmTrain(a) => lm_train(a),
        Command::Correct(a) => correct(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Report(a) => report(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut config: DatasetConfig = match &a.config {
        Some(p) => io::read_json(p)?,
        None => DatasetConfig::default(),
    };
    if let Some(n) = a.count {
        config.count = n;
    }
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    if let Some(l) = a.level {
        config.levels = prepocr_core::synth::LevelWeights::only(l);
    }
    let corpus = io::read_text(&a.corpus)?;
    let records = generate_dataset(&corpus, &a.fonts, &config, &a.out)?;
    eprintln!("wrote {} pairs to {}", records.len(), a.out.display());
    Ok(())
}

fn degrade_cmd(a: DegradeArgs) -> Result<()> {
    let level = NoiseLevel::preset(a.level).ok_or_else(|| anyhow!("noise level must be 1 to 4"))?;
    let img = io::read_gray(&a.input)?;
    let out = degrade(&img, &level, a.seed)?;
    io::write_png(&a.out, &out.image)?;
    Ok(())
}

fn restore(a: RestoreArgs) -> Result<()> {
    let mut img = io::read_gray(&a.input)?;
    if let Width::Px(w) = a.resize_width {
        img = resize_to_width(&img, w)?;
    }
    let mode = match a.mode {
        ModeArg::Single => RestoreMode::Single { direction: a.direction },
        ModeArg::Multi => RestoreMode::Multi { fusion: a.fusion.into() },
    };
    let restorer = a.restorer.build();
    let outcome = restore_image_detailed(&img, &restorer, mode, a.trim)?;
    io::write_png(&a.out, &outcome.image)?;
    if let Some(p) = &a.passes {
        io::write_json(p, &outcome.passes)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AmpReport {
    pairs: usize,
    patch_pairs: u32,
    amp: BTreeMap<&'static str, Option<f64>>,
    heat_region: &'static str,
    heat_image: PathBuf,
}

fn image_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| dir.display().to_string())? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

fn amp(a: AmpArgs) -> Result<()> {
    let names = image_names(&a.gt_dir)?;
    let mut acc = PsnrAccumulator::for_patches();
    let mut pairs = 0;
    for name in &names {
        let pred_path = a.pred_dir.join(name);
        if !pred_path.exists() {
            bail!("{} has no counterpart in {}", name, a.pred_dir.display());
        }
        let gt = io::read_gray(&a.gt_dir.join(name))?;
        let pred = io::read_gray(&pred_path)?;
        acc.accumulate_page(&gt, &pred).with_context(|| name.clone())?;
        pairs += 1;
    }
    if pairs == 0 {
        bail!("no images in {}", a.gt_dir.display());
    }
    let mut amp = BTreeMap::new();
    for region in AmpRegion::ALL {
        amp.insert(region.as_str(), acc.finalize(region).ok().map(|r| r.amp));
    }
    let heat = acc.cropped(a.region.inset());
    let (w, h) = heat.dims();
    let heat_path = a.report.with_extension("png");
    io::write_png(&heat_path, &heat_image(w, h, &heat.mean_map())?)?;
    let report = AmpReport {
        pairs,
        patch_pairs: acc.pairs(),
        amp,
        heat_region: a.region.as_str(),
        heat_image: heat_path,
    };
    io::write_json(&a.report, &report)?;
    Ok(())
}

#[derive(Serialize)]
struct FailureRow {
    index: usize,
    image: PathBuf,
    error: String,
}

fn ocr(a: OcrArgs) -> Result<()> {
    let pages = load_pages(&a.pages)?;
    let gts: Vec<Option<String>> = pages
        .iter()
        .map(|p| match (&p.gt, &p.text) {
            (Some(g), _) => io::read_text(g).map(Some),
            (None, t) => Ok(t.clone()),
        })
        .collect::<Result<_, _>>()?;
    let ids: Vec<String> = pages.iter().enumerate().map(|(i, p)| p.id.clone().unwrap_or_else(|| format!("{i:06}"))).collect();
    let inputs: Vec<OcrInput> = pages
        .iter()
        .zip(&gts)
        .zip(&ids)
        .map(|((p, g), id)| OcrInput {
            page_id: id,
            image: &p.image,
            gt: g.as_deref(),
        })
        .collect();
    let engine = OcrEngine::from_spec(&a.engine.spec()?, "")?;
    let mut failures = Vec::new();
    for (i, result) in run_ocr(&inputs, &engine).into_iter().enumerate() {
        match result {
            Ok(text) => io::write_text(&a.out.join(format!("{i:06}.txt")), &text)?,
            Err(e) => failures.push(FailureRow {
                index: i,
                image: pages[i].image.clone(),
                error: e.to_string(),
            }),
        }
    }
    io::write_jsonl(&a.out.join("failures.jsonl"), &failures)?;
    if !failures.is_empty() {
        eprintln!("{} of {} pages failed", failures.len(), pages.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct AlignRow {
    #[serde(flatten)]
    eval: PageEval,
    /// Unmatched OCR character ranges, in normalized coordinates.
    unmatched: Vec<(usize, usize)>,
    unmatched_text: Vec<String>,
}

fn page_id(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn align(a: AlignArgs) -> Result<()> {
    let gt = io::read_text(&a.gt)?;
    let config = DocumentAlignConfig::default();
    let mut rows = Vec::new();
    for h in &a.hyps {
        let hyp = io::read_text(h)?;
        let (eval, al) = evaluate_page(page_id(h), &gt, &hyp, &config);
        rows.push(AlignRow {
            eval,
            unmatched: al.unmatched.iter().map(|r| (r.start, r.end)).collect(),
            unmatched_text: al.unmatched.iter().map(|r| al.hyp[r.clone()].iter().collect()).collect(),
        });
    }
    io::write_jsonl(&a.report, &rows)?;
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    if a.gts.len() != a.hyps.len() {
        bail!("{} --gt files but {} --hyp files", a.gts.len(), a.hyps.len());
    }
    let config = DocumentAlignConfig::default();
    let mut scripts = Vec::new();
    for (g, h) in a.gts.iter().zip(&a.hyps) {
        let al = align_document(&io::read_text(g)?, &io::read_text(h)?, &config);
        scripts.extend(al.segments.into_iter().map(|s| s.script));
    }
    let model = extract_error_model(&scripts)?;
    io::write_json(&a.out, &model)?;
    eprintln!("{} sources, {} entries", model.table().len(), model.entry_count());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let model: ErrorModel = io::read_json(&a.model)?;
    let sample = io::read_text(&a.sample)?;
    let scale = calibrate_rate(&model, a.target, &sample, a.seed)?;
    if scale.saturated {
        eprintln!(
            "target CER {} is out of reach; best is {:.4} at lambda {:.4}",
            a.target, scale.achieved_cer, scale.lambda
        );
    }
    io::write_json(&a.out, &scale)?;
    Ok(())
}

fn inject(a: InjectArgs) -> Result<()> {
    let model: ErrorModel = io::read_json(&a.model)?;
    let scale: RateScale = match (&a.rate, a.lambda) {
        (Some(p), _) => io::read_json(p)?,
        (None, Some(l)) => RateScale::fixed(l),
        (None, None) => bail!("give --rate or --lambda"),
    };
    let text = io::read_text(&a.input)?;
    io::write_text(&a.out, &inject_errors(&text, &model, &scale, a.seed))?;
    Ok(())
}

fn make_pairs(a: MakePairsArgs) -> Result<()> {
    let model: ErrorModel = io::read_json(&a.model)?;
    let corpus = io::read_text(&a.corpus)?;
    let config = PairConfig {
        rate_grid: a.rates,
        max_chars: a.max_chars,
        seed: a.seed,
        ..PairConfig::default()
    };
    let pairs = make_training_pairs(&corpus, &model, &config)?;
    io::write_jsonl(&a.out, &pairs)?;
    Ok(())
}

fn lm_train(a: LmTrainArgs) -> Result<()> {
    let corpus = io::read_text(&a.corpus)?;
    let lm = CharLM::train(&corpus, a.order, a.smoothing)?;
    io::write_bytes(&a.out, &lm.to_bytes())?;
    Ok(())
}

fn correct(a: CorrectArgs) -> Result<()> {
    let lm = CharLM::from_bytes(&io::read_bytes(&a.lm)?)?;
    let channel: ErrorModel = io::read_json(&a.channel)?;
    let beam: BeamConfig = match &a.beam {
        Some(p) => io::read_json(p)?,
        None => BeamConfig::default(),
    };
    let corrector = Corrector::new(&lm, &channel, beam)?;
    let text = io::read_text(&a.input)?;
    io::write_text(&a.out, &corrector.correct_lines(&text))?;
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let config = PipelineConfig::load(&a.config)?;
    let pages = load_pages(&a.pages)?;
    let (_, report) = run_pipeline(&pages, &config, &a.out, a.workers)?;
    print!("{}", report.to_text());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let manifest: RunManifest = io::read_json(&a.manifest)?;
    let out = a.out.unwrap_or_else(|| a.manifest.parent().unwrap_or(Path::new(".")).to_path_buf());
    let report = build_report(&manifest);
    write_outputs(&out, &manifest, &report)?;
    print!("{}", report.to_text());
    Ok(())
}
