//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//! Oracles here are written against the bit layout directly (decode from
//! element fields, wide integer addition, plain float dots) and do not call
//! the library's decoders.

use bbfp_core::analysis::{
    element_exponent_histogram, empirical_error, exponent_histogram, predicted_variance,
};
use bbfp_core::arith::SparseAdder;
use bbfp_core::arith::{dot_product_bfp, GemmOptions};
use bbfp_core::cost::{equivalent_bit_width, memory_efficiency, round2, FormatSpec, GateWeights};
use bbfp_core::format::{encode_block_bfp, BfpBlock};
use bbfp_core::io::{synth_values, Distribution};
use bbfp_core::nonlinear::{max_relative_error, NonlinearConfig, NonlinearUnit, Op};
use bbfp_core::tuner::select_from_tables;
use bbfp_core::{
    dot_product, encode_block, gemm, BbfpBlock, BbfpConfig, BfpConfig, BlockFormat, ExponentStrategy, Matrix,
    Rounding,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- independent decoders ----

fn oracle_bbfp(block: &BbfpBlock, m: u8, o: u8, e: u8) -> Vec<f64> {
    let bias = (1i32 << (e - 1)) - 1;
    block
        .elements
        .iter()
        .map(|el| {
            let f = if el.flag { 2f64.powi(i32::from(m - o)) } else { 1.0 };
            let v = f64::from(el.mantissa)
                * 2f64.powi(1 - i32::from(m))
                * f
                * 2f64.powi(i32::from(block.shared_exponent) - bias);
            if el.sign {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn oracle_bfp(block: &BfpBlock, m: u8, e: u8) -> Vec<f64> {
    let bias = (1i32 << (e - 1)) - 1;
    block
        .elements
        .iter()
        .map(|el| {
            let v = f64::from(el.mantissa) * 2f64.powi(1 - i32::from(m)) * 2f64.powi(i32::from(block.shared_exponent) - bias);
            if el.sign {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn plain_dot(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        s += a * b;
    }
    s
}

/// Values spanning several binades, with exact zeros sprinkled in.
fn random_block(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let spread: i32 = rng.random_range(0..8);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.05) {
                0.0
            } else {
                let mag: f64 = rng.random_range(1.0..2.0) * 2f64.powi(rng.random_range(-spread..=spread));
                if rng.random_bool(0.5) {
                    -mag
                } else {
                    mag
                }
            }
        })
        .collect()
}

// ---- criteria ----

fn c1_table() -> Outcome {
    let rows = [
        (FormatSpec::fp16(), 16.0, 1.0),
        (FormatSpec::int(8), 8.0, 2.0),
        (FormatSpec::bfp(8), 9.16, 1.75),
        (FormatSpec::bfp(6), 7.16, 2.24),
        (FormatSpec::bbfp(8, 4), 10.16, 1.58),
        (FormatSpec::bbfp(6, 3), 8.16, 1.96),
    ];
    for (spec, bits, eff) in rows {
        let got = (round2(equivalent_bit_width(&spec)), round2(memory_efficiency(&spec)));
        ensure(got == (bits, eff), || format!("{}: got {got:?}, want ({bits}, {eff})", spec.label()))?;
    }
    Ok("6/6 rows match at 2 decimals".into())
}

fn c2_dot() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bbfp = [(3, 1), (4, 2), (4, 3), (6, 3), (6, 4)];
    let per_format = 15_000;
    let mut pairs = 0;
    for (m, o) in bbfp {
        for rounding in [Rounding::Truncate, Rounding::RoundNearestEven] {
            let cfg = BbfpConfig::new(m, o).unwrap().with_rounding(rounding);
            for _ in 0..per_format / 2 {
                let x = encode_block(&random_block(&mut rng, 32), &cfg).unwrap();
                let y = encode_block(&random_block(&mut rng, 32), &cfg).unwrap();
                let want = plain_dot(&oracle_bbfp(&x, m, o, 5), &oracle_bbfp(&y, m, o, 5));
                let got = dot_product(&x, &y, &cfg).map_err(|e| e.to_string())?;
                ensure(got == want, || format!("BBFP({m},{o}): {got} != {want}"))?;
                pairs += 1;
            }
        }
    }
    for m in [4, 6] {
        let cfg = BfpConfig::new(m).unwrap();
        for _ in 0..per_format {
            let x = encode_block_bfp(&random_block(&mut rng, 32), &cfg).unwrap();
            let y = encode_block_bfp(&random_block(&mut rng, 32), &cfg).unwrap();
            let want = plain_dot(&oracle_bfp(&x, m, 5), &oracle_bfp(&y, m, 5));
            let got = dot_product_bfp(&x, &y, &cfg).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("BFP{m}: {got} != {want}"))?;
            pairs += 1;
        }
    }
    ensure(pairs >= 100_000, || format!("only {pairs} pairs"))?;
    Ok(format!("{pairs} block pairs, 0 mismatches"))
}

fn c3_adder() -> Outcome {
    // 12-bit accumulator slice: 8 full-adder cells plus a 4-bit carry chain;
    // the payload sits at shift 0, m-o or 2(m-o) for BBFP(4,2)
    let width = 12;
    let mut cases = 0u64;
    for lo in [0u32, 2, 4] {
        let adder = SparseAdder::new(width, lo, 8);
        let chain_above = width - lo - 8;
        for a in 0..1u64 << width {
            for payload in 0..1u64 << 8 {
                for fill in [false, true] {
                    let high = if fill { ((1u64 << chain_above) - 1) << (lo + 8) } else { 0 };
                    let b = payload << lo | high;
                    for cin in [false, true] {
                        let out = adder.add(a, b, fill, cin);
                        let wide = a + b + u64::from(cin);
                        ensure(out.sum == wide & 0xFFF && out.carry_out == (wide >> width == 1), || {
                            format!("a={a:#x} b={b:#x} cin={cin}")
                        })?;
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{cases} cases, 100% equal to wide addition"))
}

fn corpora() -> Vec<(&'static str, Vec<f64>)> {
    let n = 32 * 10_000;
    vec![
        ("gaussian", synth_values(Distribution::Gaussian, n, 101)),
        ("laplacian", synth_values(Distribution::Laplacian, n, 102)),
        ("outliers", synth_values(Distribution::OUTLIERS, n, 103)),
    ]
}

fn rne_bbfp(m: u8, o: u8) -> BlockFormat {
    BlockFormat::Bbfp(BbfpConfig::new(m, o).unwrap().with_rounding(Rounding::RoundNearestEven))
}

fn rne_bfp(m: u8) -> BlockFormat {
    BlockFormat::Bfp(BfpConfig::new(m).unwrap().with_rounding(Rounding::RoundNearestEven))
}

fn c4_ordering(corpora: &[(&str, Vec<f64>)]) -> Outcome {
    let f = rne_bbfp(4, 2);
    let mut detail = Vec::new();
    for (name, values) in corpora {
        let mse = |k| empirical_error(values, &f, ExponentStrategy::Offset(k)).map(|r| r.mse).map_err(|e| e.to_string());
        let m: Vec<f64> = (0..4).map(mse).collect::<Result<_, _>>()?;
        let bfp = empirical_error(values, &rne_bfp(4), ExponentStrategy::Bidirectional).map_err(|e| e.to_string())?.mse;
        ensure(m[2] < m[0] && m[2] < m[1] && m[2] < m[3] && m[2] < bfp, || {
            format!("{name}: max {:.3e}, max-1 {:.3e}, max-2 {:.3e}, max-3 {:.3e}, BFP4 {bfp:.3e}", m[0], m[1], m[2], m[3])
        })?;
        detail.push(format!("{name} max-2/BFP4 = {:.2}", m[2] / bfp));
    }
    Ok(detail.join(", "))
}

fn c5_variance(corpora: &[(&str, Vec<f64>)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, values) in corpora {
        for f in [rne_bbfp(4, 2), rne_bbfp(6, 3)] {
            let s = ExponentStrategy::Bidirectional;
            let r = empirical_error(values, &f, s).map_err(|e| e.to_string())?;
            let h = element_exponent_histogram(values, &f, s).map_err(|e| e.to_string())?;
            let dev = (predicted_variance(&f, &h) / r.variance - 1.0).abs();
            worst = worst.max(dev);
            if dev > 0.10 {
                failures.push(format!("{name} {f}: {:.1}%", 100.0 * dev));
            }
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("BBFP(4,2), BBFP(6,3) on 3 corpora, worst deviation {:.1}%", 100.0 * worst))
}

/// Same comparison for max-aligned BFP, which the criterion does not cover.
fn bfp_variance_note(corpora: &[(&str, Vec<f64>)]) -> String {
    let mut parts = Vec::new();
    for (name, values) in corpora {
        for m in [4, 6] {
            let f = rne_bfp(m);
            let s = ExponentStrategy::Bidirectional;
            let r = empirical_error(values, &f, s).unwrap();
            let h = exponent_histogram(values, &f, s).unwrap();
            parts.push(format!("{name} BFP{m} {:+.1}%", 100.0 * (predicted_variance(&f, &h) / r.variance - 1.0)));
        }
    }
    parts.join(", ")
}

fn c6_tuner() -> Outcome {
    let q = [10.0, 8.0, 9.0];
    let h = [5.0, 6.0, 7.0];
    let pick = |w| select_from_tables(&q, &h, w).map(|s| s.overlap).map_err(|e| e.to_string());
    ensure(pick(0.5)? == 1, || "worked example".into())?;
    ensure(pick(0.0)? == 1, || "w = 0".into())?;
    ensure(pick(1.0)? == 0, || "w = 1".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut flips = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=11);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..100.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..100.0)).collect();
        let w = rng.random_range(0.0..=1.0);
        let cq = rng.random_range(1e-3..1e3);
        let ch = rng.random_range(1e-3..1e3);
        let base = select_from_tables(&q, &h, w).unwrap();
        let qs: Vec<f64> = q.iter().map(|v| v * cq).collect();
        let hs: Vec<f64> = h.iter().map(|v| v * ch).collect();
        let scaled = select_from_tables(&qs, &hs, w).unwrap();
        if scaled.overlap != base.overlap {
            flips += 1;
        }
    }
    ensure(flips == 0, || format!("{flips}/1000 scaled instances changed selection"))?;
    Ok("worked example, w=0, w=1 and 1000 scaled instances".into())
}

/// Max relative errors measured on the first run of the protocol in
/// `c7_nonlinear`; later runs may not exceed them.
const LOCKED_SIGMOID: f64 = 3.329988e-2;
const LOCKED_SILU: f64 = 3.424833e-2;
const LOCKED_GELU: f64 = 6.234485e-2;
/// Denominator floor for relative error.
const REL_FLOOR: f64 = 1.0 / 16.0;

fn c7_nonlinear() -> Outcome {
    let unit = NonlinearUnit::new(NonlinearConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..128).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = unit.softmax(&x).map_err(|e| e.to_string())?;
        ensure(p.iter().all(|&v| v >= 0.0), || "negative probability".into())?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst_sum <= 2f64.powi(-6), || format!("softmax sum off by {worst_sum:.3e}"))?;

    // LUT step at the origin: one address cell of the smallest sub-table
    let step = 2f64.powi(-7 + 1 - 7);
    let s0 = unit.sigmoid(&[0.0]).map_err(|e| e.to_string())?[0];
    let z0 = unit.silu(&[0.0]).map_err(|e| e.to_string())?[0];
    ensure((s0 - 0.5).abs() <= step && z0.abs() <= step, || format!("sigmoid(0) = {s0}, silu(0) = {z0}"))?;

    let mut measured = Vec::new();
    for (op, locked) in [(Op::Sigmoid, LOCKED_SIGMOID), (Op::Silu, LOCKED_SILU), (Op::Gelu, LOCKED_GELU)] {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let mut worst: f64 = 0.0;
        for i in 0..2000 {
            // alternate narrow and full-coverage vectors
            let scale = if i % 2 == 0 { 4.0 } else { 31.9 };
            let x: Vec<f64> = (0..128).map(|_| rng.random_range(-scale..scale)).collect();
            let y = unit.apply(op, &x).map_err(|e| e.to_string())?;
            worst = worst.max(max_relative_error(&y, &op.reference(&x), REL_FLOOR));
        }
        measured.push(format!("{op:?} {worst:.6e}"));
        ensure(worst <= locked * (1.0 + 1e-6), || format!("{op:?} error {worst:.6e} exceeds locked {locked:.6e}"))?;
    }
    Ok(format!("softmax worst |sum-1| {worst_sum:.2e}; max rel err {}", measured.join(", ")))
}

fn c8_adder_cost() -> Outcome {
    let w = GateWeights::default();
    let plain = w.adder(12, 0);
    let split = w.adder(8, 4);
    let saving = 1.0 - split / plain;
    ensure(saving >= 0.15, || format!("saving {:.1}%", 100.0 * saving))?;
    Ok(format!("{plain} -> {split} units, {:.1}% reduction", 100.0 * saving))
}

fn oracle_gemm(a: &Matrix, b: &Matrix, cfg: &BbfpConfig) -> Matrix {
    let n = cfg.block_size;
    let (m, o, e) = (cfg.mantissa_bits, cfg.overlap_bits, cfg.exponent_bits);
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let col = b.column(j);
            let mut acc = 0.0;
            for (ra, cb) in a.row(i).chunks(n).zip(col.chunks(n)) {
                let x = oracle_bbfp(&encode_block(ra, cfg).unwrap(), m, o, e);
                let y = oracle_bbfp(&encode_block(cb, cfg).unwrap(), m, o, e);
                acc += plain_dot(&x, &y);
            }
            out.data[i * b.cols + j] = acc;
        }
    }
    out
}

fn c9_gemm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut runs = 0;
    for (m, o) in [(4, 2), (6, 3), (8, 4)] {
        let cfg = BbfpConfig::new(m, o).unwrap();
        for &(r, k, c) in &[(64, 96, 64), (17, 45, 9), (1, 1, 1), (5, 33, 3)] {
            let a = Matrix::new(r, k, (0..r * k).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
            let b = Matrix::new(k, c, (0..k * c).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
            let got = gemm(&a, &b, &cfg, GemmOptions::default()).map_err(|e| e.to_string())?;
            ensure(got == oracle_gemm(&a, &b, &cfg), || format!("BBFP({m},{o}) {r}x{k}x{c} differs from oracle"))?;
            // pad the reduction dimension with zeros up to a different length
            let extra = 7;
            let mut ap = Matrix::zeros(r, k + extra);
            for i in 0..r {
                ap.data[i * (k + extra)..i * (k + extra) + k].copy_from_slice(a.row(i));
            }
            let mut bp = Matrix::zeros(k + extra, c);
            bp.data[..k * c].copy_from_slice(&b.data);
            let padded = gemm(&ap, &bp, &cfg, GemmOptions::default()).map_err(|e| e.to_string())?;
            ensure(padded == got, || format!("zero padding changed BBFP({m},{o}) {r}x{k}x{c}"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} GEMMs exact vs blockwise oracle, padding invariant"))
}

type Criterion<'a> = (u32, &'static str, Option<Duration>, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let corpora = corpora();
    let criteria: Vec<Criterion> = vec![
        (1, "equivalent bit-width and memory efficiency table", Some(Duration::from_secs(1)), Box::new(c1_table)),
        (2, "dot product equals dequantized dot", Some(Duration::from_secs(60)), Box::new(c2_dot)),
        (3, "sparse adder equals wide addition", Some(Duration::from_secs(60)), Box::new(c3_adder)),
        (4, "shared-exponent offset ordering", None, Box::new(|| c4_ordering(&corpora))),
        (5, "variance model vs empirical variance", None, Box::new(|| c5_variance(&corpora))),
        (6, "overlap selection", None, Box::new(c6_tuner)),
        (7, "nonlinear unit quality", None, Box::new(c7_nonlinear)),
        (8, "carry-chain adder saving", None, Box::new(c8_adder_cost)),
        (9, "GEMM against blockwise oracle", None, Box::new(c9_gemm)),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(limit)) if elapsed > *limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    println!("note: BFP variance model (not part of criterion 5): {}", bfp_variance_note(&corpora));
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
