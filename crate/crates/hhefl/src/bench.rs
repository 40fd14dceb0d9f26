//! HESD scaling micro-benchmark and per-chunk timing.

use std::fmt;
use std::fs;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hhefl_core::bfv::{self, keygen, BfvParams, Ciphertext};
use hhefl_core::codec::{encode_unsigned, quantize, QuantSpec};
use hhefl_core::hesd::{check_consecutive, rotation_steps, HesdContext, TranscipheredChunk};
use hhefl_core::pasta::{sym_encrypt, BlockNonce, PastaKey, PastaVariant, SymCiphertextChunk};
use hhefl_core::rng::{derive_rng, Seed};
use rand::Rng;

use crate::error::{Error, Result};
use crate::protocol::domain;

/// Transciphers `chunks` and records the time of each block.
pub fn timed_hesd_chunks(
    ctx: &mut HesdContext,
    nonce: [u8; 16],
    chunks: &[SymCiphertextChunk],
    sk_he: &Ciphertext,
) -> Result<(Vec<TranscipheredChunk>, Vec<Duration>)> {
    check_consecutive(chunks)?;
    ctx.set_encrypted_key(sk_he.clone())?;
    let mut out = Vec::with_capacity(chunks.len());
    let mut times = Vec::with_capacity(chunks.len());
    for c in chunks {
        let start = Instant::now();
        out.push(ctx.hesd_block(nonce, c)?);
        times.push(start.elapsed());
    }
    Ok((out, times))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub param_count: usize,
    pub chunks: usize,
    pub total: Duration,
    pub per_chunk_mean: Duration,
    /// Coefficient of variation of the per-chunk times.
    pub per_chunk_cov: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    /// Seconds per parameter.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Mean and coefficient of variation.
pub fn mean_cov(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 || mean == 0.0 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / mean)
}

#[derive(Clone, Debug)]
pub struct ScalingTable {
    pub variant: PastaVariant,
    pub degree: usize,
    pub keygen: Duration,
    pub rows: Vec<ScalingRow>,
    pub fit: Option<LinearFit>,
    /// `total(P_{i+1}) / total(P_i)`.
    pub ratios: Vec<f64>,
    /// Peak resident set size in bytes, where the platform reports it.
    pub peak_rss: Option<u64>,
}

impl ScalingTable {
    pub fn max_cov(&self) -> f64 {
        self.rows.iter().map(|r| r.per_chunk_cov).fold(0.0, f64::max)
    }
}

impl fmt::Display for ScalingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "HESD scaling, {} at N={} (keygen {:.1} s)",
            self.variant.name(),
            self.degree,
            self.keygen.as_secs_f64()
        )?;
        writeln!(f, "{:>8} {:>7} {:>10} {:>12} {:>8}", "params", "chunks", "total_s", "per_chunk_s", "cov")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8} {:>7} {:>10.2} {:>12.4} {:>8.4}",
                r.param_count,
                r.chunks,
                r.total.as_secs_f64(),
                r.per_chunk_mean.as_secs_f64(),
                r.per_chunk_cov
            )?;
        }
        if let Some(fit) = self.fit {
            writeln!(
                f,
                "fit: total_s = {:.6} * P + {:.4}, R^2 = {:.5}",
                fit.slope, fit.intercept, fit.r_squared
            )?;
        }
        let ratios: Vec<String> = self.ratios.iter().map(|r| format!("{r:.3}")).collect();
        writeln!(f, "ratios: [{}]", ratios.join(", "))?;
        if let Some(b) = self.peak_rss {
            writeln!(f, "peak rss: {} MiB", b >> 20)?;
        }
        Ok(())
    }
}

/// Peak resident set size from `/proc/self/status`.
pub fn peak_rss() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Times transciphering of random quantized weight vectors of each size.
/// Keys are generated once; the first chunk of every size is decrypted and
/// checked.
pub fn bench_hesd(
    variant: PastaVariant,
    param_counts: &[usize],
    params: &BfvParams,
    seed: Seed,
) -> Result<ScalingTable> {
    if param_counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid("parameter counts must be ascending".into()));
    }
    let t = variant.block_size();
    let start = Instant::now();
    let keys = keygen(params, &rotation_steps(variant, params.slot_count()), seed)?;
    let keygen_time = start.elapsed();
    let mut rng = derive_rng(seed, domain::PASTA);
    let key = PastaKey::random(variant, &mut rng);
    let sk_he = bfv::encrypt(&keys.public, key.elements(), &mut rng)?;
    let mut ctx = HesdContext::new(params, Arc::new(keys.eval), variant)?;
    let spec = QuantSpec::default();
    let mut rows = Vec::with_capacity(param_counts.len());
    for (i, &p) in param_counts.iter().enumerate() {
        let weights: Vec<f32> = (0..p).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let m = encode_unsigned(&quantize(&weights, &spec).padded(t));
        let chunks = m
            .chunks(t)
            .enumerate()
            .map(|(c, block)| sym_encrypt(block, &key, &BlockNonce::for_round(0, i as u64, c as u64), variant))
            .collect::<hhefl_core::Result<Vec<_>>>()?;
        let nonce = BlockNonce::for_round(0, i as u64, 0).nonce;
        let begin = Instant::now();
        let (out, times) = timed_hesd_chunks(&mut ctx, nonce, &chunks, &sk_he)?;
        let total = begin.elapsed();
        if let Some(first) = out.first() {
            let got = bfv::decrypt(&first.ct, &keys.secret)?;
            if got[..t] != m[..t] {
                return Err(Error::Protocol("transciphered chunk does not decrypt to the plaintext".into()));
            }
        }
        let secs: Vec<f64> = times.iter().map(Duration::as_secs_f64).collect();
        let (mean, cov) = mean_cov(&secs);
        rows.push(ScalingRow {
            param_count: p,
            chunks: chunks.len(),
            total,
            per_chunk_mean: Duration::from_secs_f64(mean),
            per_chunk_cov: cov,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.param_count as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.total.as_secs_f64()).collect();
    let ratios = y.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(ScalingTable {
        variant,
        degree: params.degree(),
        keygen: keygen_time,
        fit: linear_fit(&x, &y),
        rows,
        ratios,
        peak_rss: peak_rss(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_fits_perfectly() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + 3.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_squared_by_hand() {
        // y = 1, 3, 2 at x = 0, 1, 2: slope 0.5, intercept 1.5, SS_res 1.5, SS_tot 2.
        let fit = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 0.25).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn cov_of_constant_is_zero() {
        assert_eq!(mean_cov(&[2.0; 5]), (2.0, 0.0));
        let (m, c) = mean_cov(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((c - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_bench_runs() {
        let params = BfvParams::custom(256, &[55; 6]).unwrap();
        let t = bench_hesd(PastaVariant::new(4, 3).unwrap(), &[8, 16], &params, [5; 32]).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.chunks).collect::<Vec<_>>(), vec![2, 4]);
        assert_eq!(t.ratios.len(), 1);
        assert!(t.to_string().contains("R^2"));
    }

    #[test]
    fn descending_counts_rejected() {
        let params = BfvParams::custom(2048, &[55, 55]).unwrap();
        assert!(bench_hesd(PastaVariant::PASTA_4, &[2000, 1000], &params, [0; 32]).is_err());
    }
}
