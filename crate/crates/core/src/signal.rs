//! Multichannel acceleration records and their reduction to output
//! correlations.
//!
//! This module owns the front half of the identification pipeline: loading
//! and saving records, linear detrending, zero-phase decimation, the lagged
//! output-correlation matrices R_j, and their arrangement into the
//! block-Toeplitz matrix that the subspace step factorizes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// A multichannel time series: `N` samples × `l` channels plus sampling
/// metadata. Units are whatever the sensor produced (m/s² for the synthetic
/// systems in this crate); the pipeline only relies on linearity.
#[derive(Debug, Clone)]
pub struct TimeSeriesRecord {
    /// N×l, row h = the l channel values at sample h.
    pub samples: Array2<f64>,
    /// Sampling frequency in Hz.
    pub fs: f64,
    pub channel_labels: Vec<String>,
    /// Optional acquisition start, ISO-8601 or campaign-defined label.
    pub origin_timestamp: Option<String>,
}

impl TimeSeriesRecord {
    pub fn new(
        samples: Array2<f64>,
        fs: f64,
        channel_labels: Vec<String>,
        origin_timestamp: Option<String>,
    ) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InvalidArg("record needs at least 2 samples".into()));
        }
        if samples.ncols() < 1 {
            return Err(Error::InvalidArg("record needs at least 1 channel".into()));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidArg("sampling frequency must be positive".into()));
        }
        if channel_labels.len() != samples.ncols() {
            return Err(Error::InvalidArg(format!(
                "{} labels for {} channels",
                channel_labels.len(),
                samples.ncols()
            )));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("record contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            fs,
            channel_labels,
            origin_timestamp,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }
}

/// On-disk encodings understood by [`load_record`] / [`save_record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Binary,
}

const BINARY_MAGIC: &[u8; 5] = b"OMAR1";

pub fn load_record(path: &Path, format: RecordFormat) -> Result<TimeSeriesRecord> {
    match format {
        RecordFormat::Csv => load_csv(path),
        RecordFormat::Binary => load_binary(path),
    }
}

pub fn save_record(rec: &TimeSeriesRecord, path: &Path, format: RecordFormat) -> Result<()> {
    match format {
        RecordFormat::Csv => save_csv(rec, path),
        RecordFormat::Binary => save_binary(rec, path),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn load_csv(path: &Path) -> Result<TimeSeriesRecord> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fs_value = header
        .trim()
        .strip_prefix("fs=")
        .ok_or_else(|| parse_err(path, 1, "expected `fs=<float>` header"))?
        .trim()
        .parse::<f64>()
        .map_err(|e| parse_err(path, 1, format!("bad sampling frequency: {e}")))?;

    let (_, label_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing channel-label line"))?;
    let labels: Vec<String> = label_line.split(',').map(|s| s.trim().to_string()).collect();
    let l = labels.len();

    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for field in line.split(',') {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(path, line_no, format!("non-numeric sample: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, "non-finite sample"));
            }
            data.push(v);
            count += 1;
        }
        if count != l {
            return Err(parse_err(
                path,
                line_no,
                format!("row has {count} values, header declares {l} channels"),
            ));
        }
        rows += 1;
    }

    let samples = Array2::from_shape_vec((rows, l), data)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    TimeSeriesRecord::new(samples, fs_value, labels, None)
}

fn save_csv(rec: &TimeSeriesRecord, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("fs={}\n", rec.fs));
    out.push_str(&rec.channel_labels.join(","));
    out.push('\n');
    for row in rec.samples.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn load_binary(path: &Path) -> Result<TimeSeriesRecord> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let mut off = 0usize;

    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(parse_err(path, *off, "truncated file"));
        }
        let out = &bytes[*off..*off + n];
        *off += n;
        Ok(out)
    };

    if take(&mut off, 5)? != BINARY_MAGIC {
        return Err(parse_err(path, 0, "bad magic bytes"));
    }
    let l = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
    let fs_value = f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());

    let mut labels = Vec::with_capacity(l);
    for _ in 0..l {
        let len = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
        let start = off;
        let raw = take(&mut off, len)?;
        let label = std::str::from_utf8(raw)
            .map_err(|_| parse_err(path, start, "label is not valid UTF-8"))?;
        labels.push(label.to_string());
    }

    let want = n
        .checked_mul(l)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| parse_err(path, off, "sample count overflows"))?;
    let raw = take(&mut off, want)?;
    let mut data = Vec::with_capacity(n * l);
    for chunk in raw.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(parse_err(path, 0, "non-finite sample"));
    }

    let samples = Array2::from_shape_vec((n, l), data)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    TimeSeriesRecord::new(samples, fs_value, labels, None)
}

fn save_binary(rec: &TimeSeriesRecord, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(rec.channels() as u32).to_le_bytes())?;
    out.write_all(&(rec.len() as u64).to_le_bytes())?;
    out.write_all(&rec.fs.to_le_bytes())?;
    for label in &rec.channel_labels {
        out.write_all(&(label.len() as u32).to_le_bytes())?;
        out.write_all(label.as_bytes())?;
    }
    // Row-major (time-major) sample dump.
    let mut buf = Vec::with_capacity(rec.len() * rec.channels() * 8);
    for v in rec.samples.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Remove the per-channel least-squares linear trend (slope and intercept).
pub fn detrend(rec: &TimeSeriesRecord) -> TimeSeriesRecord {
    let n = rec.len();
    let mut samples = rec.samples.clone();
    let h_mean = (n as f64 - 1.0) / 2.0;
    // Σ (h − h̄)² has the closed form n(n²−1)/12.
    let denom = (n as f64) * ((n as f64).powi(2) - 1.0) / 12.0;
    for mut col in samples.columns_mut() {
        let y_mean = col.sum() / n as f64;
        let mut cov = 0.0;
        for (h, y) in col.iter().enumerate() {
            cov += (h as f64 - h_mean) * (y - y_mean);
        }
        let slope = if denom > 0.0 { cov / denom } else { 0.0 };
        let intercept = y_mean - slope * h_mean;
        for (h, y) in col.iter_mut().enumerate() {
            *y -= intercept + slope * h as f64;
        }
    }
    TimeSeriesRecord {
        samples,
        fs: rec.fs,
        channel_labels: rec.channel_labels.clone(),
        origin_timestamp: rec.origin_timestamp.clone(),
    }
}

/// One second-order IIR section in direct form II transposed.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn filter_in_place(&self, x: &mut [f64]) {
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b0 * xin + z1;
            z1 = self.b1 * xin - self.a1 * y + z2;
            z2 = self.b2 * xin - self.a2 * y;
            *v = y;
        }
    }
}

/// Chebyshev Type I low-pass prototype mapped to the z-domain by the
/// bilinear transform with frequency prewarping, returned as a cascade of
/// biquads. `ripple_db` is the passband ripple, `cutoff_hz` the passband
/// edge.
fn cheby1_lowpass_sos(order: usize, ripple_db: f64, cutoff_hz: f64, fs: f64) -> Vec<Biquad> {
    assert!(order >= 2 && order % 2 == 0, "even filter order expected");
    let eps = (10f64.powf(ripple_db / 10.0) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / order as f64;
    let warp = 2.0 * fs * (std::f64::consts::PI * cutoff_hz / fs).tan();

    let mut sections = Vec::with_capacity(order / 2);
    for k in 1..=order / 2 {
        let theta = std::f64::consts::PI * (2.0 * k as f64 - 1.0) / (2.0 * order as f64);
        // Analog pole of the unit-cutoff prototype, scaled by the prewarped
        // edge, then mapped with z = (1 + s/2fs)/(1 − s/2fs).
        let p = Complex::new(-mu.sinh() * theta.sin(), mu.cosh() * theta.cos()) * warp;
        let z = (Complex::new(1.0, 0.0) + p / (2.0 * fs)) / (Complex::new(1.0, 0.0) - p / (2.0 * fs));
        sections.push(Biquad {
            b0: 1.0,
            b1: 2.0,
            b2: 1.0,
            a1: -2.0 * z.re,
            a2: z.norm_sqr(),
        });
    }

    // Even-order Chebyshev I passes DC at the ripple floor, not at unity.
    let target_dc = 10f64.powf(-ripple_db / 20.0);
    let raw_dc: f64 = sections
        .iter()
        .map(|s| (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2))
        .product();
    let per_section = (target_dc / raw_dc).powf(1.0 / sections.len() as f64);
    for s in &mut sections {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    sections
}

/// Forward-backward (zero-phase) application of a biquad cascade with
/// odd-reflection edge padding.
fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let pad = (n - 1).min(150);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    for s in sections {
        s.filter_in_place(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.filter_in_place(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Low-pass filter and downsample to `target_fs`. The anti-alias filter is
/// an order-8 Chebyshev Type I (0.05 dB ripple) with cutoff at 0.8× the new
/// Nyquist frequency, applied forward-backward so phase is untouched.
/// Only integer decimation ratios are supported.
pub fn decimate(rec: &TimeSeriesRecord, target_fs: f64) -> Result<TimeSeriesRecord> {
    if !(target_fs > 0.0) {
        return Err(Error::InvalidArg("target_fs must be positive".into()));
    }
    let ratio = rec.fs / target_fs;
    let q = ratio.round();
    if (ratio - q).abs() > 1e-9 || q < 1.0 {
        return Err(Error::InvalidArg(format!(
            "decimation ratio {ratio} is not a positive integer"
        )));
    }
    let q = q as usize;
    if q == 1 {
        return Ok(rec.clone());
    }

    let cutoff = 0.8 * (target_fs / 2.0);
    let sections = cheby1_lowpass_sos(8, 0.05, cutoff, rec.fs);

    let n_out = rec.len() / q;
    let mut samples = Array2::zeros((n_out, rec.channels()));
    for (c, col) in rec.samples.columns().into_iter().enumerate() {
        let filtered = filtfilt(&sections, col.as_standard_layout().as_slice().unwrap());
        for i in 0..n_out {
            samples[[i, c]] = filtered[i * q];
        }
    }
    TimeSeriesRecord::new(
        samples,
        target_fs,
        rec.channel_labels.clone(),
        rec.origin_timestamp.clone(),
    )
}

/// The lagged output-correlation matrices R_1 … R_{2j_b−1}, each l×l, with
/// the unbiased 1/(N−j) normalization.
#[derive(Debug, Clone)]
pub struct CorrelationSequence {
    /// matrices[j−1] = R_j.
    pub matrices: Vec<Array2<f64>>,
    pub j_b: usize,
    pub fs: f64,
}

impl CorrelationSequence {
    pub fn channels(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// The leading sub-sequence for a smaller lag step: same record, same
    /// estimates, just fewer lags. Lets one correlation pass serve a whole
    /// grid of Toeplitz sizes.
    pub fn truncated(&self, j_b: usize) -> Result<CorrelationSequence> {
        if j_b < 1 || j_b > self.j_b {
            return Err(Error::InvalidArg(format!(
                "truncated lag step {j_b} outside 1..={}",
                self.j_b
            )));
        }
        Ok(CorrelationSequence {
            matrices: self.matrices[..2 * j_b - 1].to_vec(),
            j_b,
            fs: self.fs,
        })
    }
}

/// Estimate R_j = (1/(N−j)) Σ_{h=0}^{N−j−1} y_{h+j} · y_hᵀ for j = 1..2j_b−1.
pub fn correlations(rec: &TimeSeriesRecord, j_b: usize) -> Result<CorrelationSequence> {
    if j_b < 1 {
        return Err(Error::InvalidArg("lag step must be at least 1".into()));
    }
    let n = rec.len();
    if n <= 2 * j_b {
        return Err(Error::InvalidArg(format!(
            "record of {n} samples is too short for lag step {j_b} (needs > {})",
            2 * j_b
        )));
    }
    let y = &rec.samples;
    let mut matrices = Vec::with_capacity(2 * j_b - 1);
    for j in 1..=(2 * j_b - 1) {
        let lead = y.slice(s![j.., ..]);
        let base = y.slice(s![..n - j, ..]);
        let r = lead.t().dot(&base) / (n - j) as f64;
        matrices.push(r);
    }
    Ok(CorrelationSequence {
        matrices,
        j_b,
        fs: rec.fs,
    })
}

/// The block-Toeplitz matrix of lagged correlations: block row i, block
/// column p holds R_{j_b + i − p}; side T = j_b·l.
#[derive(Debug, Clone)]
pub struct BlockToeplitz {
    pub data: Array2<f64>,
    pub j_b: usize,
    pub l: usize,
    pub fs: f64,
}

impl BlockToeplitz {
    pub fn side(&self) -> usize {
        self.j_b * self.l
    }
}

pub fn assemble_toeplitz(corrs: &CorrelationSequence) -> BlockToeplitz {
    let j_b = corrs.j_b;
    let l = corrs.channels();
    let side = j_b * l;
    let mut data = Array2::zeros((side, side));
    for i in 0..j_b {
        for p in 0..j_b {
            let idx = j_b + i - p; // in 1..=2j_b−1
            data.slice_mut(s![i * l..(i + 1) * l, p * l..(p + 1) * l])
                .assign(&corrs.matrices[idx - 1]);
        }
    }
    BlockToeplitz {
        data,
        j_b,
        l,
        fs: corrs.fs,
    }
}

/// Channel-averaged Welch power spectral density with a Hann window and 50%
/// overlap. Returns (frequencies, mean PSD), one-sided.
pub fn welch_psd(rec: &TimeSeriesRecord, segment_len: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rec.len();
    let seg = segment_len.min(n).next_power_of_two().min(1 << 16);
    let seg = if seg > n { seg / 2 } else { seg };
    if seg < 16 {
        return Err(Error::InvalidArg("record too short for a periodogram".into()));
    }
    let hop = seg / 2;
    let window: Vec<f64> = (0..seg)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / seg as f64;
            x.sin().powi(2)
        })
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(seg);
    let half = seg / 2 + 1;
    let mut psd = vec![0.0; half];
    let mut segments = 0usize;

    for col in rec.samples.columns() {
        let col = col.to_vec();
        let mut start = 0;
        while start + seg <= col.len() {
            let mut buf: Vec<Complex<f64>> = (0..seg)
                .map(|i| Complex::new(col[start + i] * window[i], 0.0))
                .collect();
            fft.process(&mut buf);
            for (k, p) in psd.iter_mut().enumerate().take(half) {
                let scale = if k == 0 || (seg % 2 == 0 && k == half - 1) {
                    1.0
                } else {
                    2.0
                };
                *p += scale * buf[k].norm_sqr() / (win_power * rec.fs);
            }
            segments += 1;
            start += hop;
        }
    }
    if segments == 0 {
        return Err(Error::InvalidArg("record too short for a periodogram".into()));
    }
    for p in &mut psd {
        *p /= segments as f64;
    }
    let freqs: Vec<f64> = (0..half).map(|k| k as f64 * rec.fs / seg as f64).collect();
    Ok((freqs, psd))
}

/// Estimate the fundamental frequency as the lowest local PSD peak below a
/// quarter of the Nyquist frequency whose height is at least 5% of the
/// global maximum (guards against picking the noise floor).
pub fn estimate_f0(rec: &TimeSeriesRecord) -> Result<f64> {
    let (freqs, psd) = welch_psd(rec, 4096)?;
    let limit = rec.fs / 8.0; // Nyquist / 4
    let global_max = psd.iter().cloned().fold(0.0, f64::max);
    for k in 1..psd.len() - 1 {
        if freqs[k] >= limit {
            break;
        }
        if psd[k] > psd[k - 1] && psd[k] >= psd[k + 1] && psd[k] >= 0.05 * global_max {
            return Ok(freqs[k]);
        }
    }
    Err(Error::Numeric(
        "no spectral peak found below a quarter of the Nyquist frequency".into(),
    ))
}

/// Convenience accessor used by tests: one channel as an owned vector.
pub fn channel(rec: &TimeSeriesRecord, c: usize) -> Array1<f64> {
    rec.samples.column(c).to_owned()
}
