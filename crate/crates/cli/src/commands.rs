use crate::args::*;
use crate::error::{CmdResult, Failure};
use crate::report::write_rows;
use bbfp_core::analysis::{default_offsets, empirical_error, sweep, SweepRow};
use bbfp_core::arith::{Accumulation, GemmOptions};
use bbfp_core::cost::{cost_row, reference_specs, FormatSpec, GateWeights};
use bbfp_core::io::{read_tensor, synth_tensor, synth_values, write_tensor, Distribution, Dtype, QuantizedTensor};
use bbfp_core::nonlinear::{max_relative_error, NonlinearConfig, NonlinearUnit, Op};
use bbfp_core::tuner::{select_overlap, ProxyEvaluator, QualityTable, Selection};
use bbfp_core::format::encode_block_with;
use bbfp_core::{decode_block, encode_block, gemm, BbfpConfig, BlockFormat, Matrix, Tensor};
use clap::ValueEnum;
use serde::Serialize;
use std::path::Path;

/// Relative error floor of the nonlinear reference check.
const REL_FLOOR: f64 = 1.0 / 16.0;
const DEFAULT_SWEEP_LEN: usize = 32 * 10_000;

pub fn run(cli: Cli) -> CmdResult {
    let ctx = Context {
        seed: cli.seed,
        out: cli.out.as_deref(),
        format: cli.format,
    };
    match cli.command {
        Command::Quantize(a) => quantize(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Gemm(a) => cmd_gemm(&ctx, a),
        Command::Nonlinear(a) => nonlinear(&ctx, a),
        Command::Cost(a) => cost(&ctx, a),
        Command::Tune(a) => tune(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
    }
}

struct Context<'a> {
    seed: u64,
    out: Option<&'a Path>,
    format: ReportFormat,
}

impl Context<'_> {
    fn report<T: Serialize>(&self, rows: &[T]) -> CmdResult {
        write_rows(rows, self.format, self.out)
    }
}

struct Loaded {
    label: String,
    dims: Vec<usize>,
    values: Vec<f64>,
    flushed_subnormals: usize,
}

fn load(path: &Path) -> CmdResult<(Tensor, usize)> {
    let (t, report) = read_tensor(path).map_err(|e| Failure::from(e).context(path.display()))?;
    if report.flushed_subnormals > 0 {
        eprintln!(
            "warning: {}: {} f16 subnormals flushed to zero",
            path.display(),
            report.flushed_subnormals
        );
    }
    Ok((t, report.flushed_subnormals))
}

fn source_values(src: &SourceArgs, seed: u64, default_len: usize) -> CmdResult<Loaded> {
    if let Some(path) = &src.input {
        let (t, flushed) = load(path)?;
        return Ok(Loaded {
            label: path.display().to_string(),
            values: t.to_f64(),
            dims: t.dims,
            flushed_subnormals: flushed,
        });
    }
    let dist = src.dist.unwrap_or(Distribution::Gaussian);
    let len = src.len.unwrap_or(default_len);
    if len == 0 {
        return Err(Failure::Usage("--len must be positive".into()));
    }
    Ok(Loaded {
        label: format!("{}:{len}", dist.name()),
        dims: vec![len],
        values: synth_values(dist, len, seed),
        flushed_subnormals: 0,
    })
}

fn with_rounding(format: BlockFormat, rounding: RoundingArg, block_size: usize) -> CmdResult<BlockFormat> {
    let f = format.with_rounding(rounding.into()).with_block_size(block_size);
    match &f {
        BlockFormat::Bfp(c) => c.validate()?,
        BlockFormat::Bbfp(c) => c.validate()?,
    }
    Ok(f)
}

#[derive(Serialize)]
struct QuantizeRow {
    source: String,
    format: String,
    strategy: String,
    rounding: String,
    samples: usize,
    blocks: usize,
    mse: f64,
    variance: f64,
    mean: f64,
    flushed_subnormals: usize,
    bytes_written: Option<usize>,
}

fn quantize(ctx: &Context, a: QuantizeArgs) -> CmdResult {
    let format = with_rounding(a.block_format, a.rounding, a.block_size)?;
    let BlockFormat::Bbfp(cfg) = format else {
        return Err(Failure::Usage(format!(
            "quantize writes BBFP blocks; {format} can be measured with `sweep`"
        )));
    };
    let data = source_values(&a.source, ctx.seed, DEFAULT_SWEEP_LEN)?;
    let strategy = a.strategy.resolve();
    let report = empirical_error(&data.values, &format, strategy)?;

    let bytes_written = match ctx.out {
        Some(path) => {
            let blocks = data
                .values
                .chunks(cfg.block_size)
                .map(|c| encode_block_with(c, &cfg, strategy))
                .collect::<Result<Vec<_>, _>>()?;
            let q = QuantizedTensor {
                dims: data.dims.clone(),
                config: cfg,
                blocks,
            };
            let bytes = q.encode()?;
            std::fs::write(path, &bytes).map_err(|e| Failure::from(e).context(path.display()))?;
            Some(bytes.len())
        }
        None => None,
    };
    let row = QuantizeRow {
        source: data.label,
        format: format.to_string(),
        strategy: report.strategy,
        rounding: a.rounding.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        samples: report.samples,
        blocks: report.blocks,
        mse: report.mse,
        variance: report.variance,
        mean: report.mean,
        flushed_subnormals: data.flushed_subnormals,
        bytes_written,
    };
    write_rows(&[row], ctx.format, None)
}

fn offsets_for(cfg: &BbfpConfig, strategies: Option<&StrategyList>) -> Vec<u32> {
    let Some(list) = strategies else {
        return default_offsets(cfg);
    };
    let mut offsets = Vec::new();
    for s in &list.0 {
        let k = match s {
            StrategyArg::Bidirectional => cfg.shift_span(),
            StrategyArg::Offset(k) => *k,
        };
        if !offsets.contains(&k) {
            offsets.push(k);
        }
    }
    offsets
}

fn cmd_sweep(ctx: &Context, a: SweepArgs) -> CmdResult {
    let data = source_values(&a.source, ctx.seed, DEFAULT_SWEEP_LEN)?;
    let mut rows = Vec::new();
    for &format in &a.formats.0 {
        let format = with_rounding(format, a.rounding, a.block_size)?;
        let offsets = match &format {
            BlockFormat::Bfp(_) => vec![0],
            BlockFormat::Bbfp(c) => offsets_for(c, a.strategies.as_ref()),
        };
        rows.extend(sweep(&data.values, &[format], &offsets, ctx.seed)?);
    }
    ctx.report(&rows)?;

    if a.assert_order {
        check_order(&rows)?;
    }
    if a.assert_bbfp_beats_bfp {
        check_bbfp_beats_bfp(&rows)?;
    }
    Ok(())
}

fn find<'a>(rows: &'a [SweepRow], format: &str, offset: u32) -> Option<&'a SweepRow> {
    let label = if offset == 0 { "max".to_string() } else { format!("max-{offset}") };
    rows.iter().find(|r| r.format == format && r.strategy == label)
}

fn check_order(rows: &[SweepRow]) -> CmdResult {
    let mut checked = 0;
    for r in rows.iter().filter(|r| r.o.is_some()) {
        let span = u32::from(r.m - r.o.unwrap_or(0));
        if find(rows, &r.format, span).map(|x| x.strategy.as_str()) != Some(r.strategy.as_str()) {
            continue;
        }
        let (Some(low), Some(high)) = (find(rows, &r.format, span - 1), find(rows, &r.format, span + 1)) else {
            return Err(Failure::Usage(format!(
                "--assert-order needs offsets {}, {span} and {} for {}",
                span - 1,
                span + 1,
                r.format
            )));
        };
        if !(high.mse > low.mse && low.mse > r.mse) {
            return Err(Failure::Assertion(format!(
                "{}: expected mse {} ({:.4e}) > {} ({:.4e}) > {} ({:.4e})",
                r.format, high.strategy, high.mse, low.strategy, low.mse, r.strategy, r.mse
            )));
        }
        checked += 1;
    }
    if checked == 0 {
        return Err(Failure::Usage("--assert-order needs a BBFP format in the sweep".into()));
    }
    Ok(())
}

fn check_bbfp_beats_bfp(rows: &[SweepRow]) -> CmdResult {
    let mut checked = 0;
    for bfp in rows.iter().filter(|r| r.o.is_none()) {
        for r in rows.iter().filter(|r| r.o.is_some() && r.m == bfp.m) {
            let span = u32::from(r.m - r.o.unwrap_or(0));
            let Some(bidir) = find(rows, &r.format, span) else {
                return Err(Failure::Usage(format!(
                    "--assert-bbfp-beats-bfp needs offset {span} for {}",
                    r.format
                )));
            };
            if !std::ptr::eq(bidir, r) {
                continue;
            }
            if bidir.mse >= bfp.mse {
                return Err(Failure::Assertion(format!(
                    "{} mse {:.4e} is not below {} mse {:.4e}",
                    bidir.format, bidir.mse, bfp.format, bfp.mse
                )));
            }
            checked += 1;
        }
    }
    if checked == 0 {
        return Err(Failure::Usage(
            "--assert-bbfp-beats-bfp needs a BFP and a BBFP format with equal mantissa width".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct GemmRow {
    rows: usize,
    inner: usize,
    cols: usize,
    format: String,
    block_size: usize,
    accumulation: String,
    mse_vs_float: f64,
    max_abs_vs_float: f64,
    rel_frobenius_vs_float: f64,
    exact: Option<bool>,
}

fn to_matrix(t: &Tensor, path: &Path) -> CmdResult<Matrix> {
    match t.dims[..] {
        [r, c] => Ok(Matrix::new(r, c, t.to_f64())?),
        _ => Err(Failure::Usage(format!("{}: expected a 2-D tensor, got {:?}", path.display(), t.dims))),
    }
}

fn float_product(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            out.data[i * b.cols + j] = (0..a.cols).map(|k| a.get(i, k) * b.get(k, j)).sum();
        }
    }
    out
}

/// Dequantizes every block pair, dots it in f64 and accumulates block results
/// in order, which the datapath must match bit for bit.
fn dequantized_product(a: &Matrix, b: &Matrix, cfg: &BbfpConfig, acc: Accumulation) -> CmdResult<Matrix> {
    let n = cfg.block_size;
    let mut out = Matrix::zeros(a.rows, b.cols);
    for j in 0..b.cols {
        let col = b.column(j);
        for i in 0..a.rows {
            let mut sum64 = 0.0f64;
            let mut sum32 = 0.0f32;
            for (x, y) in a.row(i).chunks(n).zip(col.chunks(n)) {
                let dx = decode_block(&encode_block(x, cfg)?, cfg);
                let dy = decode_block(&encode_block(y, cfg)?, cfg);
                let dot: f64 = dx.iter().zip(&dy).map(|(p, q)| p * q).sum();
                sum64 += dot;
                sum32 += dot as f32;
            }
            out.data[i * b.cols + j] = match acc {
                Accumulation::F64 => sum64,
                Accumulation::F32 => f64::from(sum32),
            };
        }
    }
    Ok(out)
}

fn cmd_gemm(ctx: &Context, a: GemmArgs) -> CmdResult {
    let BlockFormat::Bbfp(cfg) = a.block_format else {
        return Err(Failure::Usage("gemm runs on BBFP formats".into()));
    };
    let (lhs, rhs) = match (&a.a, &a.b) {
        (Some(pa), Some(pb)) => (to_matrix(&load(pa)?.0, pa)?, to_matrix(&load(pb)?.0, pb)?),
        _ => {
            let [m, k, n] = a.shape.0[..] else {
                return Err(Failure::Usage("--shape takes M,K,N".into()));
            };
            let ta = synth_tensor(a.dist, &[m, k], ctx.seed);
            let tb = synth_tensor(a.dist, &[k, n], ctx.seed.wrapping_add(1));
            (Matrix::new(m, k, ta.to_f64())?, Matrix::new(k, n, tb.to_f64())?)
        }
    };
    let accumulation = match a.accumulate {
        AccumulateArg::F64 => Accumulation::F64,
        AccumulateArg::F32 => Accumulation::F32,
    };
    let mut opts = if a.pe_tile { GemmOptions::pe_tile() } else { GemmOptions::default() };
    opts.accumulation = accumulation;
    let product = gemm(&lhs, &rhs, &cfg, opts)?;

    let reference = float_product(&lhs, &rhs);
    let (mut sq, mut max_abs, mut ref_sq) = (0.0f64, 0.0f64, 0.0f64);
    for (p, r) in product.data.iter().zip(&reference.data) {
        sq += (p - r) * (p - r);
        max_abs = max_abs.max((p - r).abs());
        ref_sq += r * r;
    }
    let block_size = opts.block_size.unwrap_or(cfg.block_size);
    let exact = if a.check_exact {
        let oracle = dequantized_product(&lhs, &rhs, &cfg.with_block_size(block_size), accumulation)?;
        Some(oracle.data == product.data)
    } else {
        None
    };
    if let Some(path) = &a.result {
        let t = Tensor::new(
            vec![product.rows, product.cols],
            product.data.iter().map(|&v| v as f32).collect(),
        )?;
        write_tensor(path, &t, Dtype::F32).map_err(|e| Failure::from(e).context(path.display()))?;
    }
    let row = GemmRow {
        rows: lhs.rows,
        inner: lhs.cols,
        cols: rhs.cols,
        format: cfg.to_string(),
        block_size,
        accumulation: format!("{accumulation:?}").to_lowercase(),
        mse_vs_float: sq / product.data.len() as f64,
        max_abs_vs_float: max_abs,
        rel_frobenius_vs_float: if ref_sq > 0.0 { (sq / ref_sq).sqrt() } else { 0.0 },
        exact,
    };
    ctx.report(&[row])?;
    if exact == Some(false) {
        return Err(Failure::Assertion(
            "datapath product differs from the dequantized reference".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct NonlinearRow {
    function: Op,
    vectors: usize,
    len: usize,
    max_rel_err: f64,
    worst_sum_err: Option<f64>,
    check: Option<String>,
    tolerance: Option<f64>,
    passed: Option<bool>,
}

fn nonlinear(ctx: &Context, a: NonlinearArgs) -> CmdResult {
    if a.check == Some(NonlinearCheck::SumsToOne) && a.function != Op::Softmax {
        return Err(Failure::Usage("sums-to-one applies to softmax only".into()));
    }
    let (values, len) = match &a.input {
        Some(path) => {
            let (t, _) = load(path)?;
            let len = *t.dims.last().unwrap_or(&0);
            (t.to_f64(), len)
        }
        None => {
            if !(a.scale.is_finite() && a.scale > 0.0) {
                return Err(Failure::Usage("--scale must be positive".into()));
            }
            let v = synth_values(Distribution::Gaussian, a.vectors * a.len, ctx.seed);
            (v.into_iter().map(|x| x * a.scale).collect(), a.len)
        }
    };
    if len == 0 || values.is_empty() {
        return Err(Failure::Usage("no input vectors".into()));
    }
    let unit = NonlinearUnit::new(NonlinearConfig::default())?;
    let (mut worst_rel, mut worst_sum) = (0.0f64, 0.0f64);
    for x in values.chunks(len) {
        let y = unit.apply(a.function, x)?;
        worst_rel = worst_rel.max(max_relative_error(&y, &a.function.reference(x), REL_FLOOR));
        if a.function == Op::Softmax {
            worst_sum = worst_sum.max((y.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let (measured, default_tol) = match a.check {
        Some(NonlinearCheck::SumsToOne) => (Some(worst_sum), 2f64.powi(-6)),
        Some(NonlinearCheck::Reference) => (Some(worst_rel), 0.07),
        None => (None, 0.0),
    };
    let tolerance = a.check.map(|_| a.tolerance.unwrap_or(default_tol));
    let passed = measured.zip(tolerance).map(|(m, t)| m <= t);
    let row = NonlinearRow {
        function: a.function,
        vectors: values.len().div_ceil(len),
        len,
        max_rel_err: worst_rel,
        worst_sum_err: (a.function == Op::Softmax).then_some(worst_sum),
        check: a.check.map(|c| match c {
            NonlinearCheck::SumsToOne => "sums-to-one".to_string(),
            NonlinearCheck::Reference => "reference".to_string(),
        }),
        tolerance,
        passed,
    };
    ctx.report(&[row])?;
    if passed == Some(false) {
        return Err(Failure::Assertion(format!(
            "{:?} check exceeded tolerance {}",
            a.function,
            tolerance.unwrap_or_default()
        )));
    }
    Ok(())
}

fn cost(ctx: &Context, a: CostArgs) -> CmdResult {
    if a.block_size == 0 {
        return Err(Failure::Usage("--block-size must be positive".into()));
    }
    let specs: Vec<FormatSpec> = match &a.formats {
        Some(list) => list.0.clone(),
        None => reference_specs(),
    };
    let reference = FormatSpec::bfp(8).with_block_size(a.block_size);
    let weights = GateWeights::default();
    let rows: Vec<_> = specs
        .iter()
        .map(|s| cost_row(&s.with_block_size(a.block_size), &reference, &weights))
        .collect();
    ctx.report(&rows)
}

#[derive(Serialize)]
struct TuneRow {
    o: u8,
    quality: f64,
    overhead: f64,
    score: f64,
    selected: bool,
}

fn tune_rows(s: &Selection) -> Vec<TuneRow> {
    (0..s.scores.len())
        .map(|i| TuneRow {
            o: i as u8,
            quality: s.quality[i],
            overhead: s.overhead[i],
            score: s.scores[i],
            selected: usize::from(s.overlap) == i,
        })
        .collect()
}

fn tune(ctx: &Context, a: TuneArgs) -> CmdResult {
    let selection = match (&a.table, a.dist) {
        (Some(path), _) => {
            let table = QualityTable::load(path).map_err(|e| Failure::from(e).context(path.display()))?;
            let base = BbfpConfig::without_overlap(table.m)?;
            table.select(a.metric, a.w, &base)?
        }
        (None, Some(dist)) => {
            if a.len == 0 {
                return Err(Failure::Usage("--len must be positive".into()));
            }
            let corpus = synth_values(dist, a.len, ctx.seed);
            let base = BbfpConfig::without_overlap(a.m)?;
            select_overlap(&ProxyEvaluator { corpus: &corpus }, a.metric, a.w, a.m, &base)?
        }
        (None, None) => return Err(Failure::Usage("tune needs --table or --dist".into())),
    };
    ctx.report(&tune_rows(&selection))?;
    match a.expect_o {
        Some(o) if o != selection.overlap => Err(Failure::Assertion(format!(
            "selected o = {}, expected {o}",
            selection.overlap
        ))),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct SynthRow {
    dist: String,
    shape: String,
    dtype: String,
    seed: u64,
    elements: usize,
    mean: f64,
    std: f64,
    path: String,
}

fn synth(ctx: &Context, a: SynthArgs) -> CmdResult {
    let Some(path) = ctx.out else {
        return Err(Failure::Usage("synth needs --out".into()));
    };
    let t = synth_tensor(a.dist, &a.shape.0, ctx.seed);
    write_tensor(path, &t, a.dtype.into()).map_err(|e| Failure::from(e).context(path.display()))?;
    let n = t.len() as f64;
    let mean = t.data.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = t.data.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let row = SynthRow {
        dist: a.dist.name().to_string(),
        shape: a.shape.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x"),
        dtype: format!("{:?}", a.dtype).to_lowercase(),
        seed: ctx.seed,
        elements: t.len(),
        mean,
        std: var.sqrt(),
        path: path.display().to_string(),
    };
    write_rows(&[row], ctx.format, None)
}
