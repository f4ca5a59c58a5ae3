//! The `cgc` command line: sampling, calibration, method comparison,
//! guidance-scale curves and the image codec.
//!
//! Every artifact gets a `<name>.manifest.json` next to it recording the
//! command, configuration, seeds and paths.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use crate::calibration::{calibrate, guidance_scale_curve, matched_universal_scale, CalibrationProfile};
use crate::codec::{
    cosine, read_stream, write_metrics_csv, CodecConfig, ConditionalDenoiser, DecodeOptions, Decoder, Encoder,
    MetricRecord, SemanticEmbedder,
};
use crate::colormap::{ColorMap, ColorMapOperator};
use crate::error::Error;
use crate::guidance::{Experiment, GuidanceConfig, GuidanceMode, Sampler};
use crate::io::{read_image, write_image, ModelConfig};
use crate::latentspace::{latent_model, CodecKind, CodecSpec};
use crate::oracle::{ExactDenoiser, MixtureModel};
use crate::schedule::NoiseSchedule;
use crate::tensor::keyed_rng;

/// Default output directory when `--out` is not given.
pub const OUT_ENV: &str = "COLORGUIDE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_CORRUPT: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Stream(_) => EXIT_CORRUPT,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cgc", version, about = "Fine color guidance for diffusion sampling, on an analytic mixture model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate images, optionally under color control.
    Sample(SampleArgs),
    /// Measure lambda_bar and the decoder response; writes a profile CSV.
    Calibrate(CalibrateArgs),
    /// Run several color-control modes on the same seeds and summarize.
    Compare(CompareArgs),
    /// Guidance scale per timestep as CSV.
    SchedulePlot(SchedulePlotArgs),
    /// Compress an image to a stream.
    Encode(EncodeArgs),
    /// Reconstruct an image from a stream.
    Decode(DecodeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Model config (TOML); the built-in demo mixture when absent.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Base seed; drawn from entropy (and recorded) when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(short = 'j', long = "jobs", default_value_t = 0, global = true)]
    pub jobs: usize,
    /// Output directory, or output file for single-artifact commands.
    /// Defaults to $COLORGUIDE_OUT, then `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CodecArgs {
    #[arg(long, default_value = "identity")]
    pub codec: CodecKind,
    /// Saturation gain of the saturating codec.
    #[arg(long, default_value_t = 4.0)]
    pub gain: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    #[arg(long, default_value = "none")]
    pub mode: GuidanceMode,
    /// Image whose color map is the target; a reference drawn from the
    /// model per seed when absent.
    #[arg(long)]
    pub color: Option<PathBuf>,
    /// Multiplier on the fine terms; for `universal` without a profile,
    /// the universal weight `s` itself.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Start timestep of initialized diffusion (default round(0.55 T)).
    #[arg(long)]
    pub tau: Option<usize>,
    /// Calibration profile CSV (required by the fine modes).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Color-map side (default from the model config).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(short = 'n', default_value_t = 1)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// Monte-Carlo samples for lambda_bar.
    #[arg(short = 'n', default_value_t = 2000)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated modes.
    #[arg(long = "mode", value_delimiter = ',', default_value = "initialized,universal,fine_pixel,enforced")]
    pub modes: Vec<String>,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(short = 'n', default_value_t = 200)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SchedulePlotArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Image to compress; a draw from the model when absent.
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long = "bc")]
    pub b_c: Option<u8>,
    #[arg(long = "bs")]
    pub b_s: Option<u8>,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    pub stream: PathBuf,
    /// `fine_pixel` (identity codec) or `fine_latent`; `universal` and
    /// `none` for comparison.
    #[arg(long)]
    pub mode: Option<GuidanceMode>,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub scale: Option<f64>,
}

/// Per-artifact provenance record.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

struct Ctx {
    command: &'static str,
    started: Instant,
    seed: u64,
    config: ModelConfig,
    model_path: Option<PathBuf>,
    out: PathBuf,
}

impl Ctx {
    fn new(command: &'static str, common: &CommonArgs) -> CliResult<Self> {
        let config = match &common.model {
            Some(p) => ModelConfig::load(p)?,
            None => ModelConfig::default(),
        };
        let out = common
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            command,
            started: Instant::now(),
            seed: common.seed.unwrap_or_else(|| rand::rng().random()),
            config,
            model_path: common.model.clone(),
            out,
        })
    }

    fn model(&self) -> CliResult<MixtureModel> {
        Ok(self.config.mixture.build()?)
    }

    fn schedule(&self) -> CliResult<NoiseSchedule> {
        Ok(self.config.schedule.build()?)
    }

    fn out_dir(&self) -> CliResult<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        Ok(&self.out)
    }

    /// `--out` as a file path, or `default_name` inside the output directory
    /// when `--out` names a directory (or is absent).
    fn out_file(&self, default_name: &str, extensions: &[&str]) -> CliResult<PathBuf> {
        let is_file = self
            .out
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase().as_str()));
        let path = if is_file { self.out.clone() } else { self.out.join(default_name) };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        Ok(path)
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(path, bytes).map_err(|e| io_err(path, e))
    }

    fn manifest(
        &self,
        artifact: &Path,
        settings: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<PathBuf>,
    ) -> CliResult<()> {
        let mut inputs = inputs;
        inputs.extend(self.model_path.clone());
        let m = RunManifest {
            command: self.command.into(),
            version: concat!("colorguide v", env!("CARGO_PKG_VERSION")).into(),
            config: serde_json::json!({ "model": self.config, "settings": settings }),
            seeds,
            inputs,
            outputs: vec![artifact.to_path_buf()],
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let mut name = artifact.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        self.write(&path, serde_json::to_string_pretty(&m).expect("manifest serializes").as_bytes())
    }
}

fn load_profile(path: Option<&PathBuf>, flag_needed_by: Option<GuidanceMode>) -> CliResult<Option<CalibrationProfile>> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            Ok(Some(CalibrationProfile::from_csv(&text)?))
        }
        None => match flag_needed_by {
            Some(mode) => Err(CliError::config(format!(
                "mode '{mode}' needs a calibration profile: pass --profile <file> (see `cgc calibrate`)"
            ))),
            None => Ok(None),
        },
    }
}

fn parse_modes(raw: &[String]) -> CliResult<Vec<GuidanceMode>> {
    raw.iter()
        .map(|s| s.parse::<GuidanceMode>().map_err(|e| CliError::config(e.to_string())))
        .collect()
}

fn with_threads<T: Send>(jobs: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(e.to_string()))?;
    pool.install(f)
}

fn codec_spec(args: &CodecArgs, seed: u64) -> CodecSpec {
    CodecSpec {
        kind: args.codec,
        gain: args.gain,
        seed,
    }
}

fn check_tau(tau: Option<usize>, schedule: &NoiseSchedule) -> CliResult<Option<f64>> {
    match tau {
        None => Ok(None),
        Some(t) if (1..=schedule.num_steps()).contains(&t) => Ok(Some(t as f64 / schedule.num_steps() as f64)),
        Some(t) => Err(CliError::config(format!("--tau {t} must lie in [1, {}]", schedule.num_steps()))),
    }
}

#[derive(Debug, Serialize)]
struct SampleRow {
    id: String,
    mode: GuidanceMode,
    seed: u64,
    color_mse: f64,
    loglik: f64,
}

fn cmd_sample(a: &SampleArgs) -> CliResult<()> {
    let ctx = Ctx::new("sample", &a.common)?;
    let schedule = ctx.schedule()?;
    let model = ctx.model()?;
    let dims = ctx.config.mixture.dims();
    let m = a.m.unwrap_or(ctx.config.color_m);
    let op = ColorMapOperator::new(dims, m)?;
    // The latent basis is tied to the model seed so profiles stay valid.
    let spec = codec_spec(&a.codec, ctx.config.mixture.seed);
    let codec = spec.build(dims)?;
    let needs_profile = a.mode.is_fine().then_some(a.mode);
    let profile = load_profile(a.profile.as_ref(), needs_profile)?;
    let mut config = GuidanceConfig::new(a.mode);
    if let Some(p) = profile {
        config = config.with_profile(p);
    }
    if let Some(f) = check_tau(a.tau, &schedule)? {
        config = config.with_init_fraction(f);
    }
    match (a.mode, a.scale) {
        (GuidanceMode::Universal, Some(s)) if config.profile.is_none() => config = config.with_universal_scale(s),
        (GuidanceMode::Universal, None) if config.profile.is_none() => {
            return Err(CliError::config(
                "mode 'universal' needs --profile (to match the fine scale) or --scale <s>",
            ))
        }
        (_, Some(s)) => config = config.with_scale(s),
        _ => {}
    }
    let fixed_target = match &a.color {
        Some(p) => {
            let (d, img) = read_image(p)?;
            if d != dims {
                return Err(CliError::config(format!("--color image is {d:?}, the model generates {dims:?}")));
            }
            Some(op.apply(&img)?)
        }
        None => None,
    };
    let lat = latent_model(codec.as_ref(), &spec, &model)?;
    let den = ExactDenoiser::new(lat, schedule.clone());
    let sampler = Sampler::new(&den, &schedule, &op, codec.as_ref())?.with_realism(&model);
    let dir = ctx.out_dir()?.to_path_buf();
    let seeds: Vec<u64> = (0..a.n as u64).map(|i| ctx.seed.wrapping_add(i)).collect();
    let target_for = |seed: u64| -> CliResult<ColorMap> {
        match &fixed_target {
            Some(c) => Ok(c.clone()),
            None => Ok(op.apply(&model.sample(&mut keyed_rng(seed, 2, 0)))?),
        }
    };
    use rayon::prelude::*;
    let results = with_threads(a.common.jobs, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let cfg = config.clone().with_target(target_for(seed)?);
                Ok((seed, sampler.sample(&cfg, seed)?))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let settings = serde_json::json!({
        "mode": a.mode, "m": m, "codec": spec, "scale": a.scale, "tau": a.tau,
        "profile": a.profile, "color": a.color, "n": a.n,
    });
    let inputs: Vec<PathBuf> = a.color.iter().chain(&a.profile).cloned().collect();
    let mut rows = Vec::new();
    for (seed, r) in &results {
        let id = format!("sample_{}_{seed}", a.mode);
        let path = dir.join(format!("{id}.png"));
        write_image(&path, dims, &r.image)?;
        ctx.manifest(&path, settings.clone(), vec![*seed], inputs.clone())?;
        rows.push(SampleRow {
            id,
            mode: a.mode,
            seed: *seed,
            color_mse: r.color_mse.unwrap_or(f64::NAN),
            loglik: r.realism_loglik.unwrap_or(f64::NAN),
        });
    }
    let csv_path = dir.join(format!("sample_{}_{}.csv", a.mode, ctx.seed));
    write_csv(&csv_path, &rows)?;
    ctx.manifest(&csv_path, settings, seeds, inputs)?;
    println!("wrote {} samples and {}", results.len(), csv_path.display());
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn cmd_calibrate(a: &CalibrateArgs) -> CliResult<()> {
    let ctx = Ctx::new("calibrate", &a.common)?;
    let schedule = ctx.schedule()?;
    let model = ctx.model()?;
    let dims = ctx.config.mixture.dims();
    let spec = codec_spec(&a.codec, ctx.config.mixture.seed);
    let codec = spec.build(dims)?;
    let lat = latent_model(codec.as_ref(), &spec, &model)?;
    let den = ExactDenoiser::new(lat.clone(), schedule.clone());
    let profile = with_threads(a.common.jobs, || Ok(calibrate(&den, &lat, &schedule, codec.as_ref(), a.n, ctx.seed)?))?;
    let path = ctx.out_file(&format!("profile_{}.csv", a.codec.codec), &["csv"])?;
    ctx.write(&path, profile.to_csv().as_bytes())?;
    ctx.manifest(&path, serde_json::json!({ "codec": spec, "n": a.n }), vec![ctx.seed], vec![])?;
    println!(
        "wrote {} (a_bar = {:.4}, b_bar = {:.4}, lambda_bar in [{:.4}, {:.4}])",
        path.display(),
        profile.a_bar,
        profile.b_bar,
        profile.lambda_bar.iter().cloned().fold(f64::INFINITY, f64::min),
        profile.lambda_bar.iter().cloned().fold(0.0, f64::max),
    );
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> CliResult<()> {
    let ctx = Ctx::new("compare", &a.common)?;
    let modes = parse_modes(&a.modes)?;
    if a.n == 0 {
        return Err(CliError::config("-n must be at least 1"));
    }
    let schedule = ctx.schedule()?;
    let model = Arc::new(ctx.model()?);
    let m = a.m.unwrap_or(ctx.config.color_m);
    let op = ColorMapOperator::new(ctx.config.mixture.dims(), m)?;
    let needs = modes.iter().copied().find(|m| m.is_gradient());
    let profile = load_profile(a.profile.as_ref(), needs)?
        .map(Ok)
        .unwrap_or_else(|| CalibrationProfile::new(vec![1.0; schedule.num_steps()], 0.0, 1.0))?;
    let mut exp = Experiment::new(Arc::clone(&model), schedule.clone(), op, profile)?;
    if let Some(f) = check_tau(a.tau, &schedule)? {
        exp.init_fraction = f;
    }
    if let Some(s) = a.scale {
        exp.scale = s;
    }
    let seeds: Vec<u64> = (0..a.n as u64).map(|i| ctx.seed.wrapping_add(i)).collect();
    let (summary, records) = with_threads(a.common.jobs, || Ok(exp.compare(&modes, &seeds)?))?;
    let dir = ctx.out_dir()?.to_path_buf();
    let settings = serde_json::json!({
        "modes": modes, "m": m, "n": a.n, "scale": exp.scale, "init_fraction": exp.init_fraction,
        "universal_scale": exp.universal_scale, "profile": a.profile,
    });
    let inputs: Vec<PathBuf> = a.profile.iter().cloned().collect();
    let summary_path = dir.join(format!("compare_summary_{}.csv", ctx.seed));
    write_csv(&summary_path, &summary.modes)?;
    ctx.manifest(&summary_path, settings.clone(), seeds.clone(), inputs.clone())?;
    for recs in &records {
        let mode = recs[0].mode;
        let path = dir.join(format!("compare_{mode}_{}.csv", ctx.seed));
        write_csv(&path, recs)?;
        ctx.manifest(&path, settings.clone(), seeds.clone(), inputs.clone())?;
    }
    println!("{:<12} {:>5} {:>22} {:>22}", "mode", "n", "color_mse", "loglik");
    for s in &summary.modes {
        println!(
            "{:<12} {:>5} {:>11.5} ± {:<8.5} {:>11.2} ± {:<8.2}",
            s.mode.as_str(),
            s.n,
            s.color_mse_mean,
            s.color_mse_std,
            s.loglik_mean,
            s.loglik_std
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CurveRow {
    t: usize,
    alpha: f64,
    lambda_bar: f64,
    fine_pixel: f64,
    fine_latent: f64,
    universal: f64,
    universal_matched: f64,
}

fn cmd_schedule_plot(a: &SchedulePlotArgs) -> CliResult<()> {
    let ctx = Ctx::new("schedule-plot", &a.common)?;
    let schedule = ctx.schedule()?;
    let profile = load_profile(a.profile.as_ref(), Some(GuidanceMode::FinePixel))?.expect("required");
    profile.check_schedule(&schedule)?;
    let fine = guidance_scale_curve(Some(&profile), &schedule, GuidanceMode::FinePixel)?;
    let latent = guidance_scale_curve(Some(&profile), &schedule, GuidanceMode::FineLatent)?;
    let uni = guidance_scale_curve(None, &schedule, GuidanceMode::Universal)?;
    let s_u = matched_universal_scale(&profile, &schedule)?;
    let rows: Vec<CurveRow> = (1..=schedule.num_steps())
        .map(|t| CurveRow {
            t,
            alpha: schedule.alpha(t),
            lambda_bar: profile.lambda_bar[t - 1],
            fine_pixel: fine[t - 1],
            fine_latent: latent[t - 1],
            universal: uni[t - 1],
            universal_matched: s_u * uni[t - 1],
        })
        .collect();
    let path = ctx.out_file("schedule.csv", &["csv"])?;
    write_csv(&path, &rows)?;
    ctx.manifest(&path, serde_json::json!({ "profile": a.profile }), vec![], a.profile.iter().cloned().collect())?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn codec_config(ctx: &Ctx, m: Option<usize>, b_c: Option<u8>, b_s: Option<u8>) -> CodecConfig {
    let mut c = ctx.config.codec;
    if let Some(m) = m {
        c.m = m;
    }
    if let Some(b) = b_c {
        c.b_c = b;
    }
    if let Some(b) = b_s {
        c.b_s = b;
    }
    c
}

fn cmd_encode(a: &EncodeArgs) -> CliResult<()> {
    let ctx = Ctx::new("encode", &a.common)?;
    let (dims, image) = match &a.input {
        Some(p) => read_image(p)?,
        None => {
            let model = ctx.model()?;
            (ctx.config.mixture.dims(), model.sample(&mut keyed_rng(ctx.seed, 2, 0)))
        }
    };
    let cfg = codec_config(&ctx, a.m, a.b_c, a.b_s);
    let enc = Encoder::new(dims, cfg)?;
    let e = enc.encode(&image)?;
    let bytes = e.to_bytes();
    let stem = a
        .input
        .as_ref()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("reference_{}", ctx.seed));
    let path = ctx.out_file(&format!("{stem}.cgc"), &["cgc", "bin"])?;
    ctx.write(&path, &bytes)?;
    let header = crate::codec::HEADER_BITS;
    ctx.manifest(
        &path,
        serde_json::json!({ "codec": cfg, "payload_bits": bytes.len() * 8 - header }),
        vec![ctx.seed],
        a.input.iter().cloned().collect(),
    )?;
    if a.input.is_none() {
        let ref_path = path.with_extension("png");
        write_image(&ref_path, dims, &image)?;
        ctx.manifest(&ref_path, serde_json::json!({ "reference_for": path }), vec![ctx.seed], vec![])?;
    }
    // Measured on the written stream: everything but the fixed header.
    println!("rate_bits={} total_bytes={} path={}", bytes.len() * 8 - header, bytes.len(), path.display());
    Ok(())
}

fn cmd_decode(a: &DecodeArgs) -> CliResult<()> {
    let ctx = Ctx::new("decode", &a.common)?;
    let bytes = std::fs::read(&a.stream).map_err(|e| io_err(&a.stream, e))?;
    let e = read_stream(&bytes).map_err(Error::from)?;
    let mode = a.mode.unwrap_or(if a.codec.codec == CodecKind::Identity {
        GuidanceMode::FinePixel
    } else {
        GuidanceMode::FineLatent
    });
    let profile = load_profile(a.profile.as_ref(), mode.is_gradient().then_some(mode))?
        .map(Ok)
        .unwrap_or_else(|| CalibrationProfile::new(vec![1.0; ctx.config.schedule.steps], 0.0, 1.0))?;
    let schedule = ctx.schedule()?;
    let model = ctx.model()?;
    let dims = ctx.config.mixture.dims();
    let spec = codec_spec(&a.codec, ctx.config.mixture.seed);
    let codec = spec.build(dims)?;
    let embedder = SemanticEmbedder::new(dims, e.d_s(), ctx.config.codec.embed_seed)?;
    let lat = latent_model(codec.as_ref(), &spec, &model)?;
    let cond = ConditionalDenoiser::new(model, schedule, &embedder, ctx.config.temperature)?.in_latent_space(lat)?;
    let dec = Decoder::new(&cond, codec.as_ref(), &profile)?;
    let opts = DecodeOptions {
        mode,
        universal_scale: (mode == GuidanceMode::Universal && a.profile.is_none()).then_some(a.scale.unwrap_or(1.0)),
        scale: if mode == GuidanceMode::Universal && a.profile.is_none() { 1.0 } else { a.scale.unwrap_or(1.0) },
        ..DecodeOptions::default()
    };
    let out = dec.decode(&e, &opts, ctx.seed)?;
    let stem = a.stream.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "decoded".into());
    let path = ctx.out_file(&format!("{stem}_decoded.png"), &["png", "ppm"])?;
    write_image(&path, dims, &out.image)?;
    let op = ColorMapOperator::new(dims, e.m())?;
    let record = MetricRecord {
        id: stem.clone(),
        mode: mode.to_string(),
        m: e.m(),
        b_c: e.b_c(),
        b_s: e.b_s,
        rate_bits: bytes.len() * 8 - crate::codec::HEADER_BITS,
        color_mse: op.apply(&out.image)?.mse(&out.target)?,
        semantic_dist: 1.0 - cosine(&out.semantic, &embedder.embed(&out.image)?),
        loglik: out.sample.realism_loglik.unwrap_or(f64::NAN),
        seed: ctx.seed,
    };
    let csv_path = path.with_file_name(format!("{stem}_metrics.csv"));
    let file = std::fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    write_metrics_csv(std::slice::from_ref(&record), file)?;
    let settings = serde_json::json!({ "mode": mode, "codec": spec, "scale": a.scale, "profile": a.profile });
    let inputs: Vec<PathBuf> = std::iter::once(a.stream.clone()).chain(a.profile.clone()).collect();
    ctx.manifest(&path, settings.clone(), vec![ctx.seed], inputs.clone())?;
    ctx.manifest(&csv_path, settings, vec![ctx.seed], inputs)?;
    println!(
        "wrote {} (color_mse={:.5}, rate_bits={})",
        path.display(),
        record.color_mse,
        record.rate_bits
    );
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::SchedulePlot(a) => cmd_schedule_plot(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::StreamError;

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Io("x".into())).code, EXIT_IO);
        assert_eq!(CliError::from(Error::Stream(StreamError::TrailingData(1))).code, EXIT_CORRUPT);
        assert_eq!(CliError::from(Error::InvalidArgument("x".into())).code, EXIT_CONFIG);
    }

    #[test]
    fn parses_every_flag() {
        let cli = Cli::try_parse_from([
            "cgc", "sample", "--mode", "fine_pixel", "--color", "c.png", "--scale", "2", "--tau", "20", "--codec",
            "saturating", "--gain", "3", "--profile", "p.csv", "--m", "4", "--seed", "7", "-n", "3", "-j", "2", "--out",
            "o",
        ])
        .unwrap();
        let Command::Sample(a) = cli.command else { panic!() };
        assert_eq!(a.mode, GuidanceMode::FinePixel);
        assert_eq!(a.codec.codec, CodecKind::Saturating);
        assert_eq!((a.n, a.common.jobs, a.common.seed), (3, 2, Some(7)));
        let cli = Cli::try_parse_from(["cgc", "encode", "--m", "16", "--bc", "5", "--bs", "1"]).unwrap();
        let Command::Encode(e) = cli.command else { panic!() };
        assert_eq!((e.m, e.b_c, e.b_s), (Some(16), Some(5), Some(1)));
        assert!(Cli::try_parse_from(["cgc", "sample", "--mode", "bogus"]).is_err());
    }
}
