//! Command-line front end: WAV and latent-file I/O, token containers,
//! bitrate and entropy statistics, receptive-field and FFT-plan
//! reports, filterbank round trips and the forward-only codec graph.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod config;
mod latent;
mod listing;
mod report;
mod wav;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fsqkit::analysis::{self, LayerKind, LayerSpec, StreamingMode};
use fsqkit::bitstream::{self, PackMode, TokenStream};
use fsqkit::filterbank::{FilterbankSpec, PqmfSpec, StftSpec, WindowKind};
use fsqkit::metrics;
use fsqkit::quantizer::{self, QuantizerSpec};
use fsqkit::residual::{self, ResidualSpec};
use fsqkit::toymodel;
use fsqkit::Rate;

use report::Report;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => write!(f, "{m}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

#[derive(Parser)]
#[command(name = "fsqkit", version, about = "FSQ codec tokenization and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a latent file into a token container
    Quantize(QuantizeArgs),
    /// Decode a token container back into lattice-valued latents
    Dequantize(DequantizeArgs),
    /// Residual decomposition of latents into stage tokens
    Residual(ResidualArgs),
    /// Pack a text token listing into an FSQB container
    Pack(PackArgs),
    /// Unpack an FSQB container into a text token listing
    Unpack(UnpackArgs),
    /// Codebook utilization and entropy-coding statistics of a container
    Stats(StatsArgs),
    /// Bits-per-second calculator
    Bps(BpsArgs),
    /// Receptive field and latency from a layer-spec file
    Rf(RfArgs),
    /// Inharmonic FFT-plan design and scoring
    Fftplan(FftplanArgs),
    /// Filterbank round-trip report
    Fbank(FbankArgs),
    /// Forward-only codec graph probes
    Toymodel(ToymodelArgs),
    /// Objective metrics between two WAV files
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated per-dimension level counts, or one value for all
    #[arg(long)]
    levels: String,
    #[arg(long, default_value = "raw")]
    mode: String,
}

#[derive(Args)]
struct DequantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ResidualArgs {
    #[command(subcommand)]
    op: ResidualOp,
}

#[derive(Subcommand)]
enum ResidualOp {
    /// Split latents into a hierarchy of residual stage tokens
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Level count, must be 2^n + 1
        #[arg(long)]
        levels: u32,
        /// Total stage count
        #[arg(long)]
        stages: usize,
        #[arg(long, default_value = "raw")]
        mode: String,
    },
    /// Sum stage tokens back into clipped latents
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Exhaustively verify the fine-lattice closure of clipped stage sums
    Check {
        #[arg(long)]
        levels: u32,
        #[arg(long)]
        stages: usize,
    },
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "raw")]
    mode: String,
}

#[derive(Args)]
struct UnpackArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output listing path; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct BpsArgs {
    /// Frame rate, e.g. `25`, `12.5` or `25/2`
    #[arg(long)]
    rate: String,
    /// Comma-separated codebook sizes; items may be `N`, `L^D` or `KxN`
    #[arg(long)]
    codebooks: String,
}

#[derive(Args)]
struct RfArgs {
    /// Layer-spec file, one layer per line
    #[arg(long)]
    layers: PathBuf,
    /// Latent rate in Hz for the causal-latency line
    #[arg(long)]
    latent_rate: Option<f64>,
    /// Chunk length in seconds for the chunked-latency line
    #[arg(long)]
    chunk: Option<f64>,
}

#[derive(Args)]
struct FftplanArgs {
    #[arg(long, default_value_t = 39)]
    base_hop: usize,
    /// Hop progression ratio; defaults to the golden ratio
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Use the shipped default size list instead of generating one
    #[arg(long)]
    preset: bool,
    /// Run the loss-sensitivity probe on a seeded noise signal
    #[arg(long)]
    sensitivity_seed: Option<u64>,
    #[arg(long, default_value_t = 2048)]
    sensitivity_len: usize,
}

#[derive(Args)]
struct FbankArgs {
    /// patch | stft | mdct | pqmf
    #[arg(long)]
    family: String,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    /// hann | rect
    #[arg(long, default_value = "hann")]
    window: String,
    #[arg(long)]
    channels: Option<usize>,
    /// Input WAV; a seeded noise signal is used when omitted
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long, default_value_t = 16384)]
    noise_len: usize,
}

#[derive(Args)]
struct ToymodelArgs {
    #[command(subcommand)]
    op: ToymodelOp,
}

#[derive(Subcommand)]
enum ToymodelOp {
    /// Print a starter configuration file
    Defaults {
        /// Use the full-depth block layout (8 + 20 layers, window 128)
        #[arg(long)]
        full_depth: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Build the model and report its shape facts
    Info {
        #[arg(long)]
        config: PathBuf,
    },
    /// Encode a WAV into tokens (and optionally latents)
    Encode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        latents: Option<PathBuf>,
        #[arg(long, default_value = "raw")]
        mode: String,
    },
    /// Decode tokens back into a WAV
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// pcm16 | f32
        #[arg(long, default_value = "pcm16")]
        format: String,
    },
    /// Perturbation probe for backward leakage
    Causality {
        #[arg(long)]
        config: PathBuf,
    },
    /// Empirical vs analytic receptive field
    Rf {
        #[arg(long)]
        config: PathBuf,
        /// Probe signal length in seconds
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
    },
}

#[derive(Args)]
struct MetricsArgs {
    reference: PathBuf,
    estimate: PathBuf,
    /// Report path; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind::*;
            let _ = e.print();
            let code = match e.kind() {
                DisplayHelp | DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Quantize(a) => cmd_quantize(a),
        Command::Dequantize(a) => cmd_dequantize(a),
        Command::Residual(a) => match a.op {
            ResidualOp::Decompose { input, output, levels, stages, mode } => {
                cmd_residual_decompose(input, output, levels, stages, &mode)
            }
            ResidualOp::Reconstruct { input, output } => cmd_residual_reconstruct(input, output),
            ResidualOp::Check { levels, stages } => cmd_residual_check(levels, stages),
        },
        Command::Pack(a) => cmd_pack(a),
        Command::Unpack(a) => cmd_unpack(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Bps(a) => cmd_bps(a),
        Command::Rf(a) => cmd_rf(a),
        Command::Fftplan(a) => cmd_fftplan(a),
        Command::Fbank(a) => cmd_fbank(a),
        Command::Toymodel(a) => match a.op {
            ToymodelOp::Defaults { full_depth, seed } => {
                let spec = if full_depth {
                    toymodel::ModelSpec::full_depth(seed)
                } else {
                    toymodel::ModelSpec::toy(seed)
                };
                print!("{}", config::format_model_spec(&spec));
                Ok(())
            }
            ToymodelOp::Info { config } => cmd_toymodel_info(config),
            ToymodelOp::Encode { config, input, tokens, latents, mode } => {
                cmd_toymodel_encode(config, input, tokens, latents, &mode)
            }
            ToymodelOp::Decode { config, tokens, output, format } => {
                cmd_toymodel_decode(config, tokens, output, &format)
            }
            ToymodelOp::Causality { config } => cmd_toymodel_causality(config),
            ToymodelOp::Rf { config, seconds } => cmd_toymodel_rf(config, seconds),
        },
        Command::Metrics(a) => cmd_metrics(a),
    }
}

fn parse_mode(mode: &str) -> Result<PackMode, CliError> {
    match mode {
        "raw" => Ok(PackMode::Raw),
        "huffman" => Ok(PackMode::Huffman),
        other => Err(usage(format!("unknown mode `{other}` (raw|huffman)"))),
    }
}

fn load_model(path: &std::path::Path) -> Result<(toymodel::ModelSpec, toymodel::ToyCodec), CliError> {
    let text = std::fs::read_to_string(path).map_err(data)?;
    let spec = config::parse_model_spec(&text).map_err(data)?;
    let model = toymodel::build(&spec).map_err(data)?;
    Ok((spec, model))
}

// ---------------------------------------------------------------------------
// quantize / dequantize / residual
// ---------------------------------------------------------------------------

fn parse_levels_list(text: &str, dims: usize) -> Result<Vec<u32>, CliError> {
    let parts: Result<Vec<u32>, _> = text.split(',').map(|v| v.trim().parse()).collect();
    let parts = parts.map_err(|e| usage(format!("bad levels `{text}`: {e}")))?;
    if parts.len() == 1 {
        Ok(vec![parts[0]; dims])
    } else if parts.len() == dims {
        Ok(parts)
    } else {
        Err(data(format!(
            "levels list has {} entries but the latent file has {dims} dims",
            parts.len()
        )))
    }
}

fn cmd_quantize(a: QuantizeArgs) -> Result<(), CliError> {
    let mode = parse_mode(&a.mode)?;
    let lat = latent::read(&a.input).map_err(data)?;
    let levels = parse_levels_list(&a.levels, lat.dims)?;
    let qspec = QuantizerSpec::new(levels.clone(), lat.frame_rate).map_err(data)?;
    let mut frames = Vec::with_capacity(lat.num_frames());
    for i in 0..lat.num_frames() {
        let frame = quantizer::quantize_vector(lat.frame(i), &qspec).map_err(data)?;
        frames.push(vec![frame.index]);
    }
    let stream = TokenStream::new(lat.frame_rate, vec![levels], frames).map_err(data)?;
    let bytes = bitstream::pack_stream(&stream, mode).map_err(data)?;
    std::fs::write(&a.output, bytes).map_err(data)?;
    eprintln!("wrote {} frames to {}", lat.num_frames(), a.output.display());
    Ok(())
}

/// Latent values for each frame of a stream: direct lattice lookup for
/// one stage, residual summation for several.
fn stream_to_latents(stream: &TokenStream) -> Result<Vec<f64>, CliError> {
    let dims = stream.dims();
    let mut values = Vec::with_capacity(stream.frames().len() * dims);
    if stream.stages() == 1 {
        let qspec =
            QuantizerSpec::new(stream.stage_levels()[0].clone(), stream.frame_rate())
                .map_err(data)?;
        for frame in stream.frames() {
            values.extend(quantizer::token_to_values(frame[0], &qspec).map_err(data)?);
        }
    } else {
        let levels = &stream.stage_levels()[0];
        let uniform = levels[0];
        for stage_levels in stream.stage_levels() {
            if stage_levels.iter().any(|&l| l != uniform) {
                return Err(data(
                    "residual reconstruction needs one uniform level count across dims and stages",
                ));
            }
        }
        let rspec = ResidualSpec::new(uniform, stream.stages()).map_err(data)?;
        let qspec =
            QuantizerSpec::new(levels.clone(), stream.frame_rate()).map_err(data)?;
        for frame in stream.frames() {
            values.extend(residual::residual_reconstruct(frame, &rspec, &qspec).map_err(data)?);
        }
    }
    Ok(values)
}

fn cmd_dequantize(a: DequantizeArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&a.input).map_err(data)?;
    let stream = bitstream::unpack_stream(&bytes).map_err(data)?;
    let values = stream_to_latents(&stream)?;
    let file = latent::LatentFile {
        dims: stream.dims(),
        frame_rate: stream.frame_rate(),
        values,
    };
    latent::write(&a.output, &file).map_err(data)?;
    Ok(())
}

fn cmd_residual_decompose(
    input: PathBuf,
    output: PathBuf,
    levels: u32,
    stages: usize,
    mode: &str,
) -> Result<(), CliError> {
    let mode = parse_mode(mode)?;
    let lat = latent::read(&input).map_err(data)?;
    let rspec = ResidualSpec::new(levels, stages).map_err(data)?;
    let mut frames = Vec::with_capacity(lat.num_frames());
    for i in 0..lat.num_frames() {
        let frame = residual::residual_decompose(lat.frame(i), &rspec).map_err(data)?;
        frames.push(residual::stage_tokens(&frame, &rspec).map_err(data)?);
    }
    let stage_levels = vec![vec![levels; lat.dims]; stages];
    let stream = TokenStream::new(lat.frame_rate, stage_levels, frames).map_err(data)?;
    let bytes = bitstream::pack_stream(&stream, mode).map_err(data)?;
    std::fs::write(&output, bytes).map_err(data)?;
    Ok(())
}

fn cmd_residual_reconstruct(input: PathBuf, output: PathBuf) -> Result<(), CliError> {
    cmd_dequantize(DequantizeArgs { input, output })
}

fn cmd_residual_check(levels: u32, stages: usize) -> Result<(), CliError> {
    let report = residual::superset_check(levels, stages).map_err(data)?;
    let mut r = Report::new("residual-superset");
    r.push_usize("levels", report.levels as usize);
    r.push_usize("stages", report.stages);
    r.push_usize("fine_levels", report.fine_levels as usize);
    r.push_usize("combinations", report.combinations as usize);
    r.push_usize("violations", report.violations.len());
    r.push("holds", if report.holds() { "true" } else { "false" });
    print!("{}", r.render());
    if report.holds() {
        Ok(())
    } else {
        Err(data("clipped stage sums leave the fine lattice"))
    }
}

// ---------------------------------------------------------------------------
// pack / unpack / stats / bps
// ---------------------------------------------------------------------------

fn cmd_pack(a: PackArgs) -> Result<(), CliError> {
    let mode = parse_mode(&a.mode)?;
    let text = std::fs::read_to_string(&a.input).map_err(data)?;
    let stream = listing::parse(&text).map_err(data)?;
    let bytes = bitstream::pack_stream(&stream, mode).map_err(data)?;
    std::fs::write(&a.output, bytes).map_err(data)?;
    Ok(())
}

fn cmd_unpack(a: UnpackArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&a.input).map_err(data)?;
    let stream = bitstream::unpack_stream(&bytes).map_err(data)?;
    let text = listing::format(&stream);
    match a.output {
        Some(path) => std::fs::write(path, text).map_err(data)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&a.input).map_err(data)?;
    let stream = bitstream::unpack_stream(&bytes).map_err(data)?;
    let mut r = Report::new("stats");
    r.push_usize("frames", stream.frames().len());
    r.push_usize("stages", stream.stages());
    r.push("frame_rate", stream.frame_rate().to_string());
    let sizes = stream.stage_codebook_sizes().map_err(data)?;
    let raw = bitstream::bps(stream.frame_rate(), &sizes).map_err(data)?;
    r.push("raw_bps", raw.to_string());
    if stream.frames().is_empty() {
        r.push("note", "empty stream; no histograms");
        print!("{}", r.render());
        return Ok(());
    }

    let mut total_num = 0u128;
    let mut total_den = 1u128;
    let mut combined: Option<bitstream::CodebookHistogram> = None;
    let mut combinable = true;
    for stage in 0..stream.stages() {
        let hist = stream.stage_histogram(stage).map_err(data)?;
        let table = bitstream::HuffmanTable::build(&hist).map_err(data)?;
        let entropy = bitstream::normalized_entropy(&hist).map_err(data)?;
        let avg = table.average_length(&hist).map_err(data)?;
        let rate = bitstream::huffman_bitrate(&hist, &table, stream.frame_rate()).map_err(data)?;
        r.push_usize(&format!("stage_{stage}_codebook"), sizes[stage] as usize);
        r.push_f64(&format!("stage_{stage}_normalized_entropy"), entropy);
        r.push_f64(&format!("stage_{stage}_huffman_bits_per_token"), avg);
        r.push(&format!("stage_{stage}_huffman_bps"), rate.to_string());
        // exact sum across stages
        total_num = total_num * rate.den + rate.num * total_den;
        total_den *= rate.den;
        match &mut combined {
            None => combined = Some(hist),
            Some(c) => {
                if c.merge(&hist).is_err() {
                    combinable = false;
                }
            }
        }
    }
    let total = fsqkit::rate::Ratio128 {
        num: total_num,
        den: total_den,
    };
    r.push("huffman_bps_total", total.to_string());
    // stages pooled into one histogram, when codebooks agree
    if combinable && stream.stages() > 1 {
        if let Some(c) = &combined {
            let table = bitstream::HuffmanTable::build(c).map_err(data)?;
            let entropy = bitstream::normalized_entropy(c).map_err(data)?;
            let avg = table.average_length(c).map_err(data)?;
            r.push_f64("pooled_normalized_entropy", entropy);
            r.push_f64("pooled_huffman_bits_per_token", avg);
        }
    }
    print!("{}", r.render());
    Ok(())
}

fn parse_codebooks(text: &str) -> Result<Vec<u64>, CliError> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if let Some((l, d)) = item.split_once('^') {
            let l: u64 = l.trim().parse().map_err(|e| usage(format!("bad codebook `{item}`: {e}")))?;
            let d: u32 = d.trim().parse().map_err(|e| usage(format!("bad codebook `{item}`: {e}")))?;
            let k = l
                .checked_pow(d)
                .ok_or_else(|| usage(format!("codebook `{item}` overflows")))?;
            out.push(k);
        } else if let Some((n, k)) = item.split_once('x') {
            let n: usize = n.trim().parse().map_err(|e| usage(format!("bad codebook `{item}`: {e}")))?;
            let k: u64 = k.trim().parse().map_err(|e| usage(format!("bad codebook `{item}`: {e}")))?;
            out.extend(std::iter::repeat_n(k, n));
        } else {
            let k: u64 = item.parse().map_err(|e| usage(format!("bad codebook `{item}`: {e}")))?;
            out.push(k);
        }
    }
    Ok(out)
}

fn cmd_bps(a: BpsArgs) -> Result<(), CliError> {
    let rate = Rate::parse(&a.rate).map_err(|e| usage(e.to_string()))?;
    let codebooks = parse_codebooks(&a.codebooks)?;
    let result = bitstream::bps(rate, &codebooks).map_err(data)?;
    println!("{result}");
    Ok(())
}

// ---------------------------------------------------------------------------
// rf / fftplan / fbank
// ---------------------------------------------------------------------------

fn parse_layer_file(text: &str) -> Result<Vec<LayerSpec>, CliError> {
    let mut layers = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| data(format!("layer file line {}: {reason}", i + 1));
        let mut parts = line.split_whitespace();
        let kind = parts.next().unwrap();
        let mut kv = std::collections::HashMap::new();
        let mut causal = false;
        for p in parts {
            if p == "causal" {
                causal = true;
            } else if let Some((k, v)) = p.split_once('=') {
                kv.insert(k.to_string(), v.to_string());
            } else {
                return Err(err(format!("cannot parse `{p}`")));
            }
        }
        let get_usize = |kv: &std::collections::HashMap<String, String>, key: &str, default: Option<usize>| -> Result<usize, CliError> {
            match kv.get(key) {
                Some(v) => v.parse().map_err(|e| err(format!("{key}: {e}"))),
                None => default.ok_or_else(|| err(format!("missing {key}="))),
            }
        };
        let rate: f64 = kv
            .get("rate")
            .ok_or_else(|| err("missing rate=".into()))?
            .parse()
            .map_err(|e| err(format!("rate: {e}")))?;
        let kind = match kind {
            "attention" => LayerKind::Attention {
                window: get_usize(&kv, "window", None)?,
            },
            "conv" => LayerKind::Conv {
                kernel: get_usize(&kv, "kernel", None)?,
                stride: get_usize(&kv, "stride", Some(1))?,
                dilation: get_usize(&kv, "dilation", Some(1))?,
            },
            "tconv" => LayerKind::TransposedConv {
                kernel: get_usize(&kv, "kernel", None)?,
                stride: get_usize(&kv, "stride", Some(1))?,
            },
            "pointwise" => LayerKind::Pointwise,
            other => return Err(err(format!("unknown layer kind `{other}`"))),
        };
        layers.push(LayerSpec {
            kind,
            causal,
            rate_hz: rate,
        });
    }
    Ok(layers)
}

fn cmd_rf(a: RfArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.layers).map_err(data)?;
    let layers = parse_layer_file(&text)?;
    let rf = analysis::receptive_field(&layers).map_err(data)?;
    let mut r = Report::new("receptive-field");
    r.push_usize("layers", layers.len());
    for (i, s) in rf.per_layer_seconds.iter().enumerate() {
        r.push_f64(&format!("layer_{i}_seconds"), *s);
    }
    r.push_f64("max_per_layer_seconds", rf.max_per_layer);
    r.push_f64("total_seconds", rf.total);
    if let Some(rate) = a.latent_rate {
        let l = analysis::latency(rate, StreamingMode::Causal).map_err(data)?;
        r.push_f64("causal_latency_seconds", l);
    }
    if let Some(chunk) = a.chunk {
        let l = analysis::latency(
            a.latent_rate.unwrap_or(25.0),
            StreamingMode::Chunked {
                chunk_seconds: chunk,
                overlap_seconds: 0.0,
            },
        )
        .map_err(data)?;
        r.push_f64("chunked_latency_seconds", l);
    }
    print!("{}", r.render());
    Ok(())
}

fn cmd_fftplan(a: FftplanArgs) -> Result<(), CliError> {
    let plan = if a.preset {
        analysis::FftPlan::from_sizes(analysis::DEFAULT_FFT_SIZES.to_vec()).map_err(data)?
    } else {
        let ratio = a.ratio.unwrap_or(analysis::GOLDEN_RATIO);
        analysis::fft_plan(a.base_hop, ratio, a.count).map_err(data)?
    };
    let mut r = Report::new("fft-plan");
    let sizes: Vec<String> = plan.sizes().iter().map(|s| s.to_string()).collect();
    let hops: Vec<String> = plan.hops().iter().map(|h| h.to_string()).collect();
    r.push("sizes", sizes.join(","));
    r.push("hops", hops.join(","));
    if plan.sizes().len() >= 2 {
        r.push_f64(
            "inharmonicity_score",
            analysis::inharmonicity_score(&plan).map_err(data)?,
        );
    }
    if let Some(seed) = a.sensitivity_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal: Vec<f64> = (0..a.sensitivity_len)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let probe = StftSpec::new(128, 32, WindowKind::Hann).map_err(data)?;
        let loss = analysis::MultiResL1 {
            resolutions: plan.stft_specs().map_err(data)?,
            reference: vec![0.0; signal.len()],
        };
        let map = analysis::sensitivity_map(&signal, &probe, &loss, 1e-3).map_err(data)?;
        r.push_f64("sensitivity_time_peak_to_mean", map.time_peak_to_mean(6));
    }
    print!("{}", r.render());
    Ok(())
}

fn fbank_spec(a: &FbankArgs) -> Result<FilterbankSpec, CliError> {
    match a.family.as_str() {
        "patch" => Ok(FilterbankSpec::Patch {
            size: a.size.ok_or_else(|| usage("patch needs --size"))?,
        }),
        "stft" => {
            let size = a.size.ok_or_else(|| usage("stft needs --size"))?;
            let hop = a.hop.ok_or_else(|| usage("stft needs --hop"))?;
            let window = match a.window.as_str() {
                "hann" => WindowKind::Hann,
                "rect" => WindowKind::Rectangular,
                other => return Err(usage(format!("unknown window `{other}`"))),
            };
            Ok(FilterbankSpec::Stft(
                StftSpec::new(size, hop, window).map_err(data)?,
            ))
        }
        "mdct" => Ok(FilterbankSpec::Mdct {
            size: a.size.ok_or_else(|| usage("mdct needs --size"))?,
        }),
        "pqmf" => Ok(FilterbankSpec::Pqmf(
            PqmfSpec::new(a.channels.ok_or_else(|| usage("pqmf needs --channels"))?)
                .map_err(data)?,
        )),
        other => Err(usage(format!("unknown family `{other}`"))),
    }
}

fn cmd_fbank(a: FbankArgs) -> Result<(), CliError> {
    let spec = fbank_spec(&a)?;
    let signal = match &a.input {
        Some(path) => wav::read(path).map_err(data)?.samples,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.noise_seed);
            (0..a.noise_len).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    };
    let rt = fsqkit::filterbank::roundtrip_report(&signal, &spec).map_err(data)?;
    let mut r = Report::new("filterbank-roundtrip");
    r.push("family", a.family);
    r.push_usize("samples", signal.len());
    r.push_f64("relative_l2", rt.relative_l2);
    r.push_f64("error_db", rt.error_db);
    r.push_f64("max_abs_error", rt.max_abs_error);
    r.push_f64("critical_sampling_ratio", rt.critical_sampling_ratio);
    r.push_usize("interior_start", rt.interior.0);
    r.push_usize("interior_end", rt.interior.1);
    print!("{}", r.render());
    Ok(())
}

// ---------------------------------------------------------------------------
// toymodel / metrics
// ---------------------------------------------------------------------------

fn cmd_toymodel_info(config: PathBuf) -> Result<(), CliError> {
    let (spec, model) = load_model(&config)?;
    let mut r = Report::new("toymodel-info");
    r.push_usize("parameter_count", model.report().parameter_count);
    r.push_f64("linear_gain_db", model.report().linear_gain_db);
    r.push("latent_rate", spec.latent_rate().map_err(data)?.to_string());
    r.push_usize("chunk_samples", spec.chunk_samples());
    r.push_usize("latent_dim", spec.latent_dim());
    r.push_usize("layers", model.layer_specs().len());
    r.push_f64("analytic_rf_seconds", model.analytic_receptive_field());
    r.push_f64(
        "layernorm_gain_cap_db",
        analysis::layernorm_gain_cap(spec.layer_norm_eps),
    );
    print!("{}", r.render());
    Ok(())
}

fn cmd_toymodel_encode(
    config: PathBuf,
    input: PathBuf,
    tokens_path: PathBuf,
    latents_path: Option<PathBuf>,
    mode: &str,
) -> Result<(), CliError> {
    let mode = parse_mode(mode)?;
    let (spec, model) = load_model(&config)?;
    let audio = wav::read(&input).map_err(data)?;
    if audio.sample_rate != spec.sample_rate {
        return Err(data(format!(
            "input is {} Hz but the model expects {} Hz; resample explicitly first",
            audio.sample_rate, spec.sample_rate
        )));
    }
    let (latents, tokens) = model.encode(&audio.samples).map_err(data)?;
    let bytes = bitstream::pack_stream(&tokens, mode).map_err(data)?;
    std::fs::write(&tokens_path, bytes).map_err(data)?;
    if let Some(path) = latents_path {
        let (frames, dims) = latents.values.dim();
        let file = latent::LatentFile {
            dims,
            frame_rate: latents.frame_rate,
            values: latents.values.iter().cloned().collect(),
        };
        latent::write(&path, &file).map_err(data)?;
        eprintln!("wrote {frames} latent frames");
    }
    Ok(())
}

fn cmd_toymodel_decode(
    config: PathBuf,
    tokens: PathBuf,
    output: PathBuf,
    format: &str,
) -> Result<(), CliError> {
    let format = match format {
        "pcm16" => wav::SampleFormat::PcmI16,
        "f32" => wav::SampleFormat::Float32,
        other => return Err(usage(format!("unknown format `{other}` (pcm16|f32)"))),
    };
    let (spec, model) = load_model(&config)?;
    let bytes = std::fs::read(&tokens).map_err(data)?;
    let stream = bitstream::unpack_stream(&bytes).map_err(data)?;
    let samples = model.decode(&stream).map_err(data)?;
    let clipped = wav::write(&output, &samples, spec.sample_rate, format).map_err(data)?;
    if clipped > 0 {
        eprintln!("warning: {clipped} samples clipped on write");
    }
    Ok(())
}

fn cmd_toymodel_causality(config: PathBuf) -> Result<(), CliError> {
    let (spec, model) = load_model(&config)?;
    let report = toymodel::check_causality(&model).map_err(data)?;
    let mut r = Report::new("toymodel-causality");
    r.push("causal_build", if spec.causal { "true" } else { "false" });
    r.push_usize("perturbation_sample", report.perturbation_sample);
    r.push_f64("max_leak_before", report.max_leak_before);
    match report.first_affected {
        Some(i) => r.push_usize("first_affected_sample", i),
        None => r.push("first_affected_sample", "none"),
    }
    r.push_f64("causal_latency_seconds", report.causal_latency_seconds);
    print!("{}", r.render());
    Ok(())
}

fn cmd_toymodel_rf(config: PathBuf, seconds: f64) -> Result<(), CliError> {
    let (spec, model) = load_model(&config)?;
    let samples = (seconds * spec.sample_rate as f64) as usize;
    let m = toymodel::measure_receptive_field(&model, samples).map_err(data)?;
    let mut r = Report::new("toymodel-rf");
    r.push_f64("empirical_rf_seconds", m.seconds);
    r.push_f64("analytic_rf_seconds", model.analytic_receptive_field());
    r.push_usize("support_start", m.support.0);
    r.push_usize("support_end", m.support.1);
    r.push_usize("perturbation_sample", m.perturbation_sample);
    print!("{}", r.render());
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<(), CliError> {
    let reference = wav::read(&a.reference).map_err(data)?;
    let estimate = wav::read(&a.estimate).map_err(data)?;
    if reference.sample_rate != estimate.sample_rate {
        return Err(data(format!(
            "sample rates differ ({} vs {}); resample explicitly first",
            reference.sample_rate, estimate.sample_rate
        )));
    }
    if reference.sample_rate as f64 != metrics::SAMPLE_RATE {
        return Err(data(format!(
            "metrics assume {} Hz input, got {} Hz; resample explicitly first",
            metrics::SAMPLE_RATE, reference.sample_rate
        )));
    }
    let rep = metrics::metric_report(&reference.samples, &estimate.samples).map_err(data)?;
    let mut r = Report::new("metrics");
    r.push_usize("samples", reference.samples.len());
    r.push_usize("reference_channels", reference.source_channels as usize);
    r.push_usize("estimate_channels", estimate.source_channels as usize);
    r.push_f64("si_sdr_db", rep.si_sdr_db);
    r.push_f64("mel_distance", rep.mel_distance);
    r.push_f64("stft_distance", rep.stft_distance);
    match a.output {
        Some(path) => std::fs::write(path, r.render()).map_err(data)?,
        None => print!("{}", r.render()),
    }
    Ok(())
}
