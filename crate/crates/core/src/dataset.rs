//! On-disk capture layout.
//!
//! ```text
//! <dir>/meta.json      scenario, seed, rates, sensor/subcarrier counts
//! <dir>/csi.bin        "CSIB", u32 version = 1, u64 n_records, then per record:
//!                      u64 timestamp_ns, u16 sensor_id, u16 n_subcarriers,
//!                      n_subcarriers × (f32 re, f32 im); all little-endian
//! <dir>/frames.csv     header `timestamp_ns,path`, paths relative to <dir>
//! <dir>/frames/        binary PPM (P6, maxval 255) named %08d.ppm
//! ```
//!
//! Any directory following this layout can be ingested, so real captures can be
//! converted in.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::image::ImageFrame;
use crate::scalar::Real;
use crate::sim::{
    capture_meta, render_frame, synthesize_csi, CaptureConfig, CaptureDataset, CaptureMeta, CaptureSchedule,
    CsiRecord, ScenarioSpec,
};

pub const CSI_MAGIC: &[u8; 4] = b"CSIB";
pub const CSI_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const CSI_FILE: &str = "csi.bin";
pub const FRAMES_CSV: &str = "frames.csv";
pub const FRAMES_DIR: &str = "frames";

pub fn frame_file_name(index: usize) -> String {
    format!("{index:08}.ppm")
}

fn to_u8<T: Real>(v: T) -> u8 {
    (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm<T: Real>(frame: &ImageFrame<T>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.data().iter().map(|&v| to_u8(v)));
    out
}

/// Decodes a binary P6 image with maxval 255. Values are scaled to [0, 1].
pub fn decode_ppm<T: Real>(bytes: &[u8], timestamp_ns: u64) -> Result<ImageFrame<T>> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "truncated PPM header"));
        }
        tokens.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
    }
    // Single whitespace byte separates the header from the raster.
    pos += 1;
    if tokens[0].1 != "P6" {
        return Err(Error::format(0, "not a binary PPM (P6)"));
    }
    let parse = |(off, s): (usize, &str)| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::format(off as u64, format!("bad PPM header field {s:?}")))
    };
    let width = parse(tokens[1])?;
    let height = parse(tokens[2])?;
    if parse(tokens[3])? != 255 {
        return Err(Error::format(tokens[3].0 as u64, "PPM maxval must be 255"));
    }
    let n = width * height * 3;
    if bytes.len() < pos + n {
        return Err(Error::format(bytes.len() as u64, "truncated PPM raster"));
    }
    let data = bytes[pos..pos + n].iter().map(|&b| T::lit(b as f64 / 255.0)).collect();
    Ok(ImageFrame::from_vec(height, width, data, timestamp_ns))
}

/// Incremental writer: records and frames can be streamed without holding the
/// whole capture in memory.
pub struct DatasetWriter {
    dir: PathBuf,
    csi: BufWriter<File>,
    frames_csv: BufWriter<File>,
    expected_records: u64,
    written_records: u64,
    written_frames: usize,
}

impl DatasetWriter {
    pub fn create(dir: &Path, meta: &CaptureMeta, n_records: u64) -> Result<Self> {
        fs::create_dir_all(dir.join(FRAMES_DIR))?;
        let meta_json = serde_json::to_string_pretty(meta).expect("meta serializes");
        fs::write(dir.join(META_FILE), meta_json + "\n")?;

        let mut csi = BufWriter::new(File::create(dir.join(CSI_FILE))?);
        csi.write_all(CSI_MAGIC)?;
        csi.write_all(&CSI_VERSION.to_le_bytes())?;
        csi.write_all(&n_records.to_le_bytes())?;

        let mut frames_csv = BufWriter::new(File::create(dir.join(FRAMES_CSV))?);
        writeln!(frames_csv, "timestamp_ns,path")?;

        Ok(Self {
            dir: dir.to_path_buf(),
            csi,
            frames_csv,
            expected_records: n_records,
            written_records: 0,
            written_frames: 0,
        })
    }

    pub fn push_record<T: Real>(&mut self, rec: &CsiRecord<T>) -> Result<()> {
        self.csi.write_all(&rec.timestamp_ns.to_le_bytes())?;
        self.csi.write_all(&rec.sensor_id.to_le_bytes())?;
        self.csi.write_all(&(rec.values.len() as u16).to_le_bytes())?;
        for z in &rec.values {
            self.csi.write_all(&(z.re.to_f64_lossy() as f32).to_le_bytes())?;
            self.csi.write_all(&(z.im.to_f64_lossy() as f32).to_le_bytes())?;
        }
        self.written_records += 1;
        Ok(())
    }

    pub fn push_frame<T: Real>(&mut self, frame: &ImageFrame<T>) -> Result<()> {
        let name = frame_file_name(self.written_frames);
        fs::write(self.dir.join(FRAMES_DIR).join(&name), encode_ppm(frame))?;
        writeln!(self.frames_csv, "{},{}/{}", frame.timestamp_ns, FRAMES_DIR, name)?;
        self.written_frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(u64, usize)> {
        if self.written_records != self.expected_records {
            return Err(Error::Config(format!(
                "declared {} CSI records but wrote {}",
                self.expected_records, self.written_records
            )));
        }
        self.csi.flush()?;
        self.frames_csv.flush()?;
        Ok((self.written_records, self.written_frames))
    }
}

pub fn write_dataset<T: Real>(ds: &CaptureDataset<T>, dir: &Path) -> Result<()> {
    let mut w = DatasetWriter::create(dir, &ds.meta, ds.csi_records.len() as u64)?;
    for r in &ds.csi_records {
        w.push_record(r)?;
    }
    for f in &ds.frames {
        w.push_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

/// Simulates a scenario straight to disk. Produces the same bytes as
/// `write_dataset(&generate_dataset_with(spec, cfg)?, dir)` in bounded memory.
pub fn simulate_to_dir(spec: &ScenarioSpec, cfg: &CaptureConfig, dir: &Path) -> Result<(CaptureMeta, u64, usize)> {
    spec.validate()?;
    cfg.validate()?;
    let schedule = CaptureSchedule::new(spec, cfg);
    let meta = capture_meta(spec, cfg);
    let n_records = (schedule.csi_timestamps_ns.len() * spec.n_sensors()) as u64;
    let mut w = DatasetWriter::create(dir, &meta, n_records)?;
    for &ts in &schedule.csi_timestamps_ns {
        for s in 0..spec.n_sensors() {
            w.push_record(&synthesize_csi::<f32>(spec, ts, s))?;
        }
    }
    for &ts in &schedule.frame_timestamps_ns {
        let mut f = render_frame::<f32>(spec, ts as f64 * 1e-9, cfg.resolution);
        f.timestamp_ns = ts;
        w.push_frame(&f)?;
    }
    let (records, frames) = w.finish()?;
    Ok((meta, records, frames))
}

pub fn read_meta(dir: &Path) -> Result<CaptureMeta> {
    let text = fs::read_to_string(dir.join(META_FILE))?;
    serde_json::from_str(&text).map_err(|e| Error::format(0, format!("{META_FILE}: {e}")))
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.offset, format!("truncated {CSI_FILE} while reading {what}"))
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_bits(self.u32(what)?))
    }
}

pub fn read_csi(path: &Path) -> Result<Vec<CsiRecord<f32>>> {
    let mut r = CountingReader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.exact(&mut magic, "magic")?;
    if &magic != CSI_MAGIC {
        return Err(Error::format(0, "bad magic, expected CSIB"));
    }
    let version = r.u32("version")?;
    if version != CSI_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let n = r.u64("record count")?;
    let mut records = Vec::with_capacity(n.min(1 << 24) as usize);
    for _ in 0..n {
        let timestamp_ns = r.u64("timestamp")?;
        let sensor_id = r.u16("sensor id")?;
        let n_sub = r.u16("subcarrier count")? as usize;
        let mut values = Vec::with_capacity(n_sub);
        for _ in 0..n_sub {
            let re = r.f32("csi value")?;
            let im = r.f32("csi value")?;
            values.push(Complex::new(re, im));
        }
        records.push(CsiRecord {
            timestamp_ns,
            sensor_id,
            values,
        });
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::format(r.offset, "trailing bytes after last record"));
    }
    Ok(records)
}

pub fn read_frames_csv(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let file = BufReader::new(File::open(dir.join(FRAMES_CSV))?);
    let mut out = Vec::new();
    let mut offset = 0u64;
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let this = offset;
        offset += line.len() as u64 + 1;
        if i == 0 {
            if line.trim() != "timestamp_ns,path" {
                return Err(Error::format(0, "frames.csv header must be `timestamp_ns,path`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (ts, path) = line
            .split_once(',')
            .ok_or_else(|| Error::format(this, format!("frames.csv line {}: expected two fields", i + 1)))?;
        let ts = ts
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::format(this, format!("frames.csv line {}: bad timestamp", i + 1)))?;
        out.push((ts, dir.join(path.trim())));
    }
    Ok(out)
}

/// Reads a dataset directory and checks stream ordering.
pub fn read_dataset(dir: &Path) -> Result<CaptureDataset<f32>> {
    let meta = read_meta(dir)?;
    let csi_records = read_csi(&dir.join(CSI_FILE))?;
    let mut frames = Vec::new();
    for (ts, path) in read_frames_csv(dir)? {
        let bytes = fs::read(&path)?;
        frames.push(decode_ppm(&bytes, ts)?);
    }
    for w in frames.windows(2) {
        if w[0].timestamp_ns >= w[1].timestamp_ns {
            return Err(Error::Ingest("frame timestamps are not strictly increasing".into()));
        }
    }
    let mut last = vec![None::<u64>; meta.n_sensors];
    for r in &csi_records {
        let s = r.sensor_id as usize;
        if s >= meta.n_sensors {
            return Err(Error::Ingest(format!("sensor id {s} exceeds n_sensors {}", meta.n_sensors)));
        }
        if r.values.len() != meta.n_subcarriers {
            return Err(Error::Ingest("subcarrier count differs from meta.json".into()));
        }
        if last[s].is_some_and(|p| p >= r.timestamp_ns) {
            return Err(Error::Ingest(format!("sensor {s} timestamps are not strictly increasing")));
        }
        last[s] = Some(r.timestamp_ns);
    }
    Ok(CaptureDataset {
        csi_records,
        frames,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_scenario, generate_dataset_with};

    fn small_spec() -> ScenarioSpec {
        let mut spec = build_scenario("s4", 5).unwrap();
        spec.duration_s = 0.3;
        spec
    }

    #[test]
    fn streaming_and_in_memory_writers_agree() {
        let spec = small_spec();
        let cfg = CaptureConfig::default();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ds = generate_dataset_with::<f32>(&spec, &cfg).unwrap();
        write_dataset(&ds, a.path()).unwrap();
        simulate_to_dir(&spec, &cfg, b.path()).unwrap();
        for f in [META_FILE, CSI_FILE, FRAMES_CSV, "frames/00000002.ppm"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let back = read_dataset(a.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_csi_reports_offset() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        simulate_to_dir(&spec, &CaptureConfig::default(), dir.path()).unwrap();
        let path = dir.path().join(CSI_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        match read_csi(&path) {
            Err(Error::Format { offset, .. }) => assert!(offset > 16),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(read_csi(&path), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn ppm_round_trip() {
        let data: Vec<f64> = (0..4 * 5 * 3).map(|i| (i * 7 % 256) as f64 / 255.0).collect();
        let img = ImageFrame::from_vec(4, 5, data, 9);
        let back: ImageFrame<f64> = decode_ppm(&encode_ppm(&img), 9).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
