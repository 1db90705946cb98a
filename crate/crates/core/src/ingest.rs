//! Preprocessing: amplitude extraction, causal low-pass filtering, nearest
//! timestamp alignment, image resizing, and slicing into time slots.

use crate::error::{Error, Result};
use crate::image::ImageFrame;
use crate::scalar::Real;
use crate::sim::{CaptureDataset, CsiRecord};

pub const DEFAULT_WINDOW_LEN: usize = 50;
pub const DEFAULT_LOWPASS_W: usize = 5;
pub const DEFAULT_IMAGE_SIZE: (usize, usize) = (32, 32);

/// Amplitude tensor laid out `[channel][subcarrier][time]`, time ending at the
/// anchor sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeWindow<T> {
    pub n_channels: usize,
    pub n_subcarriers: usize,
    pub window_len: usize,
    pub anchor_timestamp_ns: u64,
    data: Vec<T>,
}

impl<T: Real> AmplitudeWindow<T> {
    pub fn from_vec(n_channels: usize, n_subcarriers: usize, window_len: usize, data: Vec<T>, anchor_timestamp_ns: u64) -> Self {
        assert_eq!(data.len(), n_channels * n_subcarriers * window_len, "window buffer length");
        Self {
            n_channels,
            n_subcarriers,
            window_len,
            anchor_timestamp_ns,
            data,
        }
    }

    pub fn zeros(n_channels: usize, n_subcarriers: usize, window_len: usize) -> Self {
        Self::from_vec(
            n_channels,
            n_subcarriers,
            window_len,
            vec![T::zero(); n_channels * n_subcarriers * window_len],
            0,
        )
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_channels, self.n_subcarriers, self.window_len)
    }

    #[inline]
    pub fn get(&self, channel: usize, subcarrier: usize, t: usize) -> T {
        self.data[(channel * self.n_subcarriers + subcarrier) * self.window_len + t]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Series over time for one (channel, subcarrier).
    pub fn series(&self, channel: usize, subcarrier: usize) -> &[T] {
        let start = (channel * self.n_subcarriers + subcarrier) * self.window_len;
        &self.data[start..start + self.window_len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair<T> {
    pub window: AmplitudeWindow<T>,
    pub frame: ImageFrame<T>,
    pub time_gap_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotBatch<T> {
    pub slot_index: usize,
    pub pairs: Vec<AlignedPair<T>>,
}

impl<T> SlotBatch<T> {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

/// Per-subcarrier magnitude; phase is discarded.
pub fn amplitude<T: Real, U: Real>(record: &CsiRecord<U>) -> Vec<T> {
    record
        .values
        .iter()
        .map(|z| {
            let (re, im) = (z.re.cast::<T>(), z.im.cast::<T>());
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Causal moving average: `out[n] = mean(in[max(0, n−W+1) ..= n])`.
pub fn lowpass<T: Real>(series: &[T], window: usize) -> Result<Vec<T>> {
    if window == 0 {
        return Err(Error::Config("low-pass window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    for n in 0..series.len() {
        let span = &series[(n + 1).saturating_sub(window)..=n];
        let mut sum = T::zero();
        let mut lo = span[0];
        let mut hi = span[0];
        for &v in span {
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        // The exact mean lies in [lo, hi]; clamping removes rounding excursions.
        out.push((sum / T::from_usize_lossy(span.len())).max(lo).min(hi));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(frame_index, csi_index)` for every retained frame, in frame order.
    pub pairs: Vec<(usize, usize)>,
    /// Frames rejected because their nearest CSI sample was too far away.
    pub dropped: usize,
}

fn strictly_increasing(ts: &[u64]) -> bool {
    ts.windows(2).all(|w| w[0] < w[1])
}

/// Nearest CSI sample for one timestamp via binary search. Ties go to the
/// earlier sample. `csi` must be non-empty.
pub fn nearest_index(csi: &[u64], t: u64) -> usize {
    let after = csi.partition_point(|&c| c < t);
    if after == 0 {
        return 0;
    }
    if after == csi.len() {
        return csi.len() - 1;
    }
    let before = after - 1;
    if t - csi[before] <= csi[after] - t {
        before
    } else {
        after
    }
}

/// Pairs every frame with its nearest CSI timestamp. Frames whose best gap
/// exceeds `max_gap_ns` are dropped and counted.
pub fn align(frame_timestamps: &[u64], csi_timestamps: &[u64], max_gap_ns: Option<u64>) -> Result<Alignment> {
    if csi_timestamps.is_empty() {
        return Err(Error::Alignment("no CSI timestamps to align against".into()));
    }
    if !strictly_increasing(frame_timestamps) || !strictly_increasing(csi_timestamps) {
        return Err(Error::Alignment("timestamps must be strictly increasing".into()));
    }
    let mut pairs = Vec::with_capacity(frame_timestamps.len());
    let mut dropped = 0;
    for (fi, &t) in frame_timestamps.iter().enumerate() {
        let ci = nearest_index(csi_timestamps, t);
        let gap = t.abs_diff(csi_timestamps[ci]);
        if max_gap_ns.is_some_and(|m| gap > m) {
            dropped += 1;
        } else {
            pairs.push((fi, ci));
        }
    }
    Ok(Alignment { pairs, dropped })
}

/// Nearest-neighbor resize with source index `floor((i + 0.5)·src/dst)`.
pub fn resize_image<T: Real>(frame: &ImageFrame<T>, out: (usize, usize)) -> ImageFrame<T> {
    let (src_h, src_w) = frame.dims();
    let (dst_h, dst_w) = out;
    assert!(src_h > 0 && src_w > 0 && dst_h > 0 && dst_w > 0, "image dimensions must be positive");
    if (src_h, src_w) == out {
        return frame.clone();
    }
    let map = |i: usize, src: usize, dst: usize| ((2 * i + 1) * src) / (2 * dst);
    let mut data = Vec::with_capacity(dst_h * dst_w * 3);
    for y in 0..dst_h {
        let sy = map(y, src_h, dst_h);
        for x in 0..dst_w {
            data.extend_from_slice(&frame.pixel(sy, map(x, src_w, dst_w)));
        }
    }
    ImageFrame::from_vec(dst_h, dst_w, data, frame.timestamp_ns)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowParams {
    pub window_len: usize,
    pub lowpass_w: usize,
    pub image_size: (usize, usize),
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window_len: DEFAULT_WINDOW_LEN,
            lowpass_w: DEFAULT_LOWPASS_W,
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Windows<T> {
    pub pairs: Vec<AlignedPair<T>>,
    /// Frames with no CSI sample within half a frame interval.
    pub dropped_gap: usize,
    /// Frames whose aligned sample has fewer than `window_len` predecessors.
    pub dropped_history: usize,
}

struct SensorStream<T> {
    timestamps: Vec<u64>,
    amplitudes: Vec<Vec<T>>,
}

/// Builds one aligned (amplitude window, resized frame) pair per usable frame.
pub fn build_windows<T: Real, U: Real>(dataset: &CaptureDataset<U>, params: &WindowParams) -> Result<Windows<T>> {
    if params.window_len == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    if params.image_size.0 == 0 || params.image_size.1 == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let meta = &dataset.meta;
    let n_ch = meta.n_sensors;
    let n_sub = meta.n_subcarriers;
    if n_ch == 0 || dataset.frames.is_empty() || dataset.csi_records.is_empty() {
        return Err(Error::Ingest("dataset has no frames or no CSI records".into()));
    }

    let mut streams: Vec<SensorStream<T>> = (0..n_ch)
        .map(|_| SensorStream {
            timestamps: Vec::new(),
            amplitudes: Vec::new(),
        })
        .collect();
    for rec in &dataset.csi_records {
        let s = rec.sensor_id as usize;
        if s >= n_ch || rec.values.len() != n_sub {
            return Err(Error::Ingest(format!("record from sensor {s} does not match meta")));
        }
        streams[s].timestamps.push(rec.timestamp_ns);
        streams[s].amplitudes.push(amplitude(rec));
    }

    let frame_ts: Vec<u64> = dataset.frames.iter().map(|f| f.timestamp_ns).collect();
    let max_gap = Some(meta.frame_interval_ns() / 2);
    let mut per_sensor = Vec::with_capacity(n_ch);
    for stream in &streams {
        if stream.timestamps.is_empty() {
            return Err(Error::Ingest("a sensor has no CSI records".into()));
        }
        let a = align(&frame_ts, &stream.timestamps, max_gap)?;
        let mut lookup = vec![None; frame_ts.len()];
        for (fi, ci) in a.pairs {
            lookup[fi] = Some(ci);
        }
        per_sensor.push(lookup);
    }

    let len = params.window_len;
    let mut pairs = Vec::new();
    let mut dropped_gap = 0;
    let mut dropped_history = 0;
    'frames: for (fi, frame) in dataset.frames.iter().enumerate() {
        let mut anchors = Vec::with_capacity(n_ch);
        for lookup in &per_sensor {
            match lookup[fi] {
                Some(ci) => anchors.push(ci),
                None => {
                    dropped_gap += 1;
                    continue 'frames;
                }
            }
        }
        if anchors.iter().any(|&ci| ci + 1 < len) {
            dropped_history += 1;
            continue;
        }

        let mut data = Vec::with_capacity(n_ch * n_sub * len);
        let mut series = Vec::with_capacity(len);
        for (stream, &ci) in streams.iter().zip(&anchors) {
            let recent = &stream.amplitudes[ci + 1 - len..=ci];
            for k in 0..n_sub {
                series.clear();
                series.extend(recent.iter().map(|a| a[k]));
                data.extend(lowpass(&series, params.lowpass_w)?);
            }
        }
        let anchor_ts = streams[0].timestamps[anchors[0]];
        let window = AmplitudeWindow::from_vec(n_ch, n_sub, len, data, anchor_ts);
        let resized = resize_image(&frame.cast::<T>(), params.image_size);
        pairs.push(AlignedPair {
            window,
            frame: resized,
            time_gap_ns: frame.timestamp_ns.abs_diff(anchor_ts),
        });
    }

    if pairs.is_empty() {
        return Err(Error::Ingest("no usable frames after alignment".into()));
    }
    Ok(Windows {
        pairs,
        dropped_gap,
        dropped_history,
    })
}

fn slot_len_ns(slot_len_s: f64) -> Result<u64> {
    let ns = (slot_len_s * 1e9).round();
    if !(slot_len_s > 0.0) || ns < 1.0 {
        return Err(Error::Config("slot length must be positive".into()));
    }
    Ok(ns as u64)
}

/// Half-open slots `[t·L, (t+1)·L)` keyed by frame timestamp, covering slot 0
/// through the last occupied slot. Empty slots are kept.
pub fn make_slots<T: Clone>(pairs: &[AlignedPair<T>], slot_len_s: f64) -> Result<Vec<SlotBatch<T>>> {
    make_slots_spanning(pairs, slot_len_s, 0)
}

/// Like [`make_slots`] but always emits at least `min_slots` slots.
pub fn make_slots_spanning<T: Clone>(pairs: &[AlignedPair<T>], slot_len_s: f64, min_slots: usize) -> Result<Vec<SlotBatch<T>>> {
    let l = slot_len_ns(slot_len_s)?;
    let slot_of = |p: &AlignedPair<T>| (p.frame.timestamp_ns / l) as usize;
    let n = pairs.iter().map(|p| slot_of(p) + 1).max().unwrap_or(0).max(min_slots);
    let mut slots: Vec<SlotBatch<T>> = (0..n)
        .map(|slot_index| SlotBatch {
            slot_index,
            pairs: Vec::new(),
        })
        .collect();
    for p in pairs {
        slots[slot_of(p)].pairs.push(p.clone());
    }
    Ok(slots)
}

/// Number of slots needed to cover `duration_s`.
pub fn slot_count(duration_s: f64, slot_len_s: f64) -> Result<usize> {
    let l = slot_len_ns(slot_len_s)?;
    let d = (duration_s * 1e9).round().max(0.0) as u64;
    Ok(d.div_ceil(l) as usize)
}
