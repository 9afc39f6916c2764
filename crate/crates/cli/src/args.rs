use bbfp_core::cost::FormatSpec;
use bbfp_core::io::{Distribution, Dtype};
use bbfp_core::nonlinear::Op;
use bbfp_core::tuner::OverheadMetric;
use bbfp_core::{BlockFormat, ExponentStrategy, Rounding};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Bidirectional block floating point: quantization, datapath emulation and reports.
#[derive(Debug, Parser)]
#[command(name = "bbfp", version, about)]
pub struct Cli {
    /// Seed for every synthesized input.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output path. For `synth` and `quantize` this receives the tensor or the
    /// packed blocks; for every other subcommand it receives the report.
    /// Reports go to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantize a tensor into packed BBFP blocks and report the error.
    Quantize(QuantizeArgs),
    /// Measure quantization error across formats and shared-exponent offsets.
    Sweep(SweepArgs),
    /// Multiply two matrices on the emulated datapath.
    Gemm(GemmArgs),
    /// Run softmax, sigmoid, SiLU or GELU through the LUT-based unit.
    Nonlinear(NonlinearArgs),
    /// Storage width, memory efficiency and relative arithmetic cost.
    Cost(CostArgs),
    /// Pick an overlap width by trading quality against overhead.
    Tune(TuneArgs),
    /// Write a synthetic tensor file.
    Synth(SynthArgs),
}

/// Where the values come from: a tensor file or a synthetic distribution.
#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Tensor file to read.
    #[arg(long, conflicts_with_all = ["dist", "len"])]
    pub input: Option<PathBuf>,

    /// Distribution to synthesize when no input is given: gaussian, laplacian
    /// or outliers.
    #[arg(long, value_parser = parse_distribution)]
    pub dist: Option<Distribution>,

    /// Number of synthesized values.
    #[arg(long)]
    pub len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// Target format, e.g. `BBFP(4,2)`.
    #[arg(long, value_parser = parse_block_format, default_value = "BBFP(4,2)")]
    pub block_format: BlockFormat,

    /// Shared exponent choice: `bidirectional`, `max` or `max-k`.
    #[arg(long, value_parser = parse_strategy, default_value = "bidirectional")]
    pub strategy: StrategyArg,

    #[arg(long, value_enum, default_value_t = RoundingArg::Truncate)]
    pub rounding: RoundingArg,

    #[arg(long, default_value_t = 32)]
    pub block_size: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// Comma-separated formats, e.g. `BFP4,BBFP(4,2)`.
    #[arg(long, value_parser = parse_format_list, default_value = "BFP4,BBFP(4,2)")]
    pub formats: FormatList,

    /// Comma-separated shared exponent choices (`max`, `max-k`, `bidirectional`).
    /// Defaults to `max` through `max-(m-o+1)` for each BBFP format.
    #[arg(long, value_parser = parse_strategy_list)]
    pub strategies: Option<StrategyList>,

    #[arg(long, value_enum, default_value_t = RoundingArg::Rne)]
    pub rounding: RoundingArg,

    #[arg(long, default_value_t = 32)]
    pub block_size: usize,

    /// Fail unless every BBFP(m,o) sweep has mse(max-(m-o+1)) > mse(max-(m-o-1)) > mse(max-(m-o)).
    #[arg(long)]
    pub assert_order: bool,

    /// Fail unless every bidirectional BBFP row beats each BFP format of equal mantissa width.
    #[arg(long)]
    pub assert_bbfp_beats_bfp: bool,
}

#[derive(Debug, Args)]
pub struct GemmArgs {
    /// Left operand tensor (2-D).
    #[arg(long, requires = "b")]
    pub a: Option<PathBuf>,

    /// Right operand tensor (2-D).
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,

    /// Synthesize operands of shape `M,K,N`.
    #[arg(long, value_parser = parse_dims, default_value = "64,256,64")]
    pub shape: Dims,

    /// Distribution of synthesized operands.
    #[arg(long, value_parser = parse_distribution, default_value = "gaussian")]
    pub dist: Distribution,

    #[arg(long, value_parser = parse_block_format, default_value = "BBFP(4,2)")]
    pub block_format: BlockFormat,

    /// Cross-block accumulator.
    #[arg(long, value_enum, default_value_t = AccumulateArg::F64)]
    pub accumulate: AccumulateArg,

    /// Use 16-element blocks along the reduction dimension.
    #[arg(long)]
    pub pe_tile: bool,

    /// Write the product as an f32 tensor file.
    #[arg(long)]
    pub result: Option<PathBuf>,

    /// Fail unless the product equals the dequantize-then-multiply reference exactly.
    #[arg(long)]
    pub check_exact: bool,
}

#[derive(Debug, Args)]
pub struct NonlinearArgs {
    /// Function to evaluate.
    #[arg(long = "fn", value_parser = parse_op)]
    pub function: Op,

    /// Tensor file; its last dimension is the vector length.
    #[arg(long, conflicts_with_all = ["vectors", "len", "scale"])]
    pub input: Option<PathBuf>,

    /// Number of synthesized Gaussian vectors.
    #[arg(long, default_value_t = 1000)]
    pub vectors: usize,

    /// Length of each synthesized vector.
    #[arg(long, default_value_t = 128)]
    pub len: usize,

    /// Standard deviation of synthesized inputs.
    #[arg(long, default_value_t = 4.0)]
    pub scale: f64,

    /// Check to run; failure exits with status 1.
    #[arg(long, value_enum)]
    pub check: Option<NonlinearCheck>,

    /// Tolerance of the check. Defaults to 2^-6 for `sums-to-one` and 0.07
    /// for `reference`.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NonlinearCheck {
    /// Every softmax output vector sums to one.
    SumsToOne,
    /// Max relative error against the 64-bit reference, with |reference| floored at 1/16.
    Reference,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("which").args(["all", "formats"]).required(true)))]
pub struct CostArgs {
    /// The six reference formats: FP16, INT8, BFP8, BFP6, BBFP(8,4), BBFP(6,3).
    #[arg(long)]
    pub all: bool,

    /// Comma-separated formats, e.g. `INT8,BFP6,BBFP(6,3)`.
    #[arg(long, value_parser = parse_spec_list)]
    pub formats: Option<SpecList>,

    /// Block size of block formats.
    #[arg(long, default_value_t = 32)]
    pub block_size: usize,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// JSON quality table: `{"m": 4, "entries": [{"o": 0, "quality": 10.0}, ...]}`.
    #[arg(long, conflicts_with = "dist")]
    pub table: Option<PathBuf>,

    /// Tune on a synthetic corpus with relative L1 error as the quality score.
    #[arg(long, value_parser = parse_distribution)]
    pub dist: Option<Distribution>,

    /// Mantissa width for corpus tuning.
    #[arg(long, default_value_t = 4)]
    pub m: u8,

    /// Corpus length for corpus tuning.
    #[arg(long, default_value_t = 32 * 4096)]
    pub len: usize,

    /// Weight of overhead against quality, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub w: f64,

    /// Overhead measure: `bits` or `gates`.
    #[arg(long, value_parser = parse_metric, default_value = "bits")]
    pub metric: OverheadMetric,

    /// Fail unless this overlap is selected.
    #[arg(long)]
    pub expect_o: Option<u8>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_distribution, default_value = "gaussian")]
    pub dist: Distribution,

    /// Comma-separated dimensions.
    #[arg(long, value_parser = parse_dims, default_value = "1024,32")]
    pub shape: Dims,

    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    pub dtype: DtypeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoundingArg {
    /// Drop bits below the mantissa window.
    Truncate,
    /// Round to nearest, ties to even.
    Rne,
}

impl From<RoundingArg> for Rounding {
    fn from(r: RoundingArg) -> Self {
        match r {
            RoundingArg::Truncate => Rounding::Truncate,
            RoundingArg::Rne => Rounding::RoundNearestEven,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccumulateArg {
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F16,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F16 => Dtype::F16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyArg {
    Bidirectional,
    Offset(u32),
}

impl StrategyArg {
    pub fn resolve(self) -> ExponentStrategy {
        match self {
            StrategyArg::Bidirectional => ExponentStrategy::Bidirectional,
            StrategyArg::Offset(k) => ExponentStrategy::Offset(k),
        }
    }
}

// clap stores `Vec<T>` values as repeated occurrences, so lists that are
// parsed as one value are wrapped.
#[derive(Debug, Clone)]
pub struct FormatList(pub Vec<BlockFormat>);

#[derive(Debug, Clone)]
pub struct StrategyList(pub Vec<StrategyArg>);

#[derive(Debug, Clone)]
pub struct SpecList(pub Vec<FormatSpec>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

/// Splits on commas outside parentheses, so `BFP4,BBFP(4,2)` has two items.
pub fn split_top_level(s: &str) -> Vec<&str> {
    let mut items = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                items.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    items.push(s[start..].trim());
    items.retain(|item| !item.is_empty());
    items
}

fn parse_distribution(s: &str) -> Result<Distribution, String> {
    s.parse()
}

fn parse_op(s: &str) -> Result<Op, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<OverheadMetric, String> {
    s.parse()
}

fn parse_block_format(s: &str) -> Result<BlockFormat, String> {
    s.parse::<BlockFormat>().map_err(|e| e.to_string())
}

fn parse_format_list(s: &str) -> Result<FormatList, String> {
    let formats = split_top_level(s)
        .into_iter()
        .map(parse_block_format)
        .collect::<Result<Vec<_>, _>>()?;
    if formats.is_empty() {
        return Err("no formats given".into());
    }
    Ok(FormatList(formats))
}

fn parse_strategy(s: &str) -> Result<StrategyArg, String> {
    let t = s.trim().to_ascii_lowercase();
    if t == "bidirectional" || t == "bidir" {
        return Ok(StrategyArg::Bidirectional);
    }
    if t == "max" {
        return Ok(StrategyArg::Offset(0));
    }
    let k = t.strip_prefix("max-").unwrap_or(&t);
    k.parse()
        .map(StrategyArg::Offset)
        .map_err(|_| format!("unknown strategy {s:?} (bidirectional, max, max-k)"))
}

fn parse_strategy_list(s: &str) -> Result<StrategyList, String> {
    let list = split_top_level(s)
        .into_iter()
        .map(parse_strategy)
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err("strategy list is empty".into());
    }
    Ok(StrategyList(list))
}

/// `FP16`, `INTk`, `BFPm` or `BBFP(m,o)`.
fn parse_spec(s: &str) -> Result<FormatSpec, String> {
    let t = s.trim().to_ascii_uppercase();
    if t == "FP16" {
        return Ok(FormatSpec::fp16());
    }
    if let Some(bits) = t.strip_prefix("INT") {
        let bits: u8 = bits.parse().map_err(|_| format!("cannot parse format {s:?}"))?;
        if bits == 0 || bits > 32 {
            return Err(format!("integer width {bits} outside 1..=32"));
        }
        return Ok(FormatSpec::int(bits));
    }
    match parse_block_format(s)? {
        BlockFormat::Bfp(c) => Ok(FormatSpec::bfp(c.mantissa_bits)),
        BlockFormat::Bbfp(c) => Ok(FormatSpec::from_config(&c)),
    }
}

fn parse_spec_list(s: &str) -> Result<SpecList, String> {
    let specs = split_top_level(s)
        .into_iter()
        .map(parse_spec)
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        return Err("no formats given".into());
    }
    Ok(SpecList(specs))
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let dims = s
        .split([',', 'x'])
        .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad dimension {d:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(format!("shape {s:?} must list positive dimensions"));
    }
    Ok(Dims(dims))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_level_split_keeps_parentheses() {
        assert_eq!(split_top_level("BFP4, BBFP(4,2),BBFP(6,3)"), ["BFP4", "BBFP(4,2)", "BBFP(6,3)"]);
        assert!(split_top_level(" , ").is_empty());
    }

    #[test]
    fn strategies() {
        assert_eq!(parse_strategy("max").unwrap(), StrategyArg::Offset(0));
        assert_eq!(parse_strategy("max-2").unwrap(), StrategyArg::Offset(2));
        assert_eq!(parse_strategy("3").unwrap(), StrategyArg::Offset(3));
        assert_eq!(parse_strategy("bidirectional").unwrap(), StrategyArg::Bidirectional);
        assert!(parse_strategy("min").is_err());
        assert!(parse_strategy_list("").is_err());
    }

    #[test]
    fn specs() {
        assert_eq!(parse_spec("int8").unwrap(), FormatSpec::int(8));
        assert_eq!(parse_spec("BBFP(8,4)").unwrap(), FormatSpec::bbfp(8, 4));
        assert_eq!(parse_spec("bfp6").unwrap(), FormatSpec::bfp(6));
        assert!(parse_spec("FP8").is_err());
    }

    #[test]
    fn dims() {
        assert_eq!(parse_dims("4,8").unwrap().0, [4, 8]);
        assert_eq!(parse_dims("2x3x5").unwrap().0, [2, 3, 5]);
        assert!(parse_dims("4,0").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
