//! Synthetic capture rig: scripted pedestrians walking elliptical paths, a
//! top-down orthographic camera, and a toy multipath channel observed by a
//! handful of CSI sensors.
//!
//! World coordinates are meters with the origin at the room's top-left corner,
//! `x` growing to the right and `y` growing downward (image row order). A
//! clockwise walker is therefore clockwise as seen in the rendered frames.

use std::f64::consts::PI;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageFrame;
use crate::rng;
use crate::scalar::Real;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const N_SUBCARRIERS: usize = 64;
pub const CARRIER_HZ: f64 = 5.18e9;
pub const SUBCARRIER_SPACING_HZ: f64 = 1.25e6;
pub const PEDESTRIAN_REFLECTION: f64 = 0.5;
pub const PEDESTRIAN_RADIUS_M: f64 = 0.3;
pub const DEFAULT_CSI_RATE_HZ: f64 = 500.0;
pub const DEFAULT_FRAME_RATE_FPS: f64 = 10.0;
pub const DEFAULT_RENDER_RES: (usize, usize) = (64, 64);
/// Half-width of the uniform clock jitter applied to frame timestamps.
pub const FRAME_JITTER_NS: i64 = 2_000_000;

pub const PRESETS: [&str; 7] = ["office", "s1", "s2", "s3", "s4", "s5", "s6"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomGeometry {
    pub width_m: f64,
    pub depth_m: f64,
    pub sensor_positions: Vec<Point2>,
    pub tx_position: Point2,
    pub rx_position: Point2,
}

impl RoomGeometry {
    pub fn contains(&self, p: Point2) -> bool {
        (0.0..=self.width_m).contains(&p.x) && (0.0..=self.depth_m).contains(&p.y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_m > 0.0 && self.depth_m > 0.0) {
            return Err(Error::Config("room dimensions must be positive".into()));
        }
        if self.sensor_positions.is_empty() {
            return Err(Error::Config("room needs at least one sensor".into()));
        }
        let all = self
            .sensor_positions
            .iter()
            .chain([&self.tx_position, &self.rx_position]);
        for p in all {
            if !self.contains(*p) {
                return Err(Error::Config(format!("position {p:?} outside room")));
            }
        }
        Ok(())
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Clockwise,
    Counterclockwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub center: Point2,
    pub semi_axes: (f64, f64),
    pub period_s: f64,
    pub direction: Direction,
    pub phase_offset: f64,
}

impl Trajectory {
    /// Angle along the ellipse at time `t_s`.
    pub fn angle(&self, t_s: f64) -> f64 {
        let sweep = 2.0 * PI * t_s / self.period_s;
        match self.direction {
            Direction::Clockwise => self.phase_offset + sweep,
            Direction::Counterclockwise => self.phase_offset - sweep,
        }
    }

    /// True if the path, widened by `margin`, stays inside the room.
    pub fn fits(&self, room: &RoomGeometry, margin: f64) -> bool {
        let (a, b) = self.semi_axes;
        self.center.x - a - margin >= 0.0
            && self.center.x + a + margin <= room.width_m
            && self.center.y - b - margin >= 0.0
            && self.center.y + b + margin <= room.depth_m
    }
}

/// Position on a parametric ellipse: `center + (a cos θ, b sin θ)`.
pub fn pedestrian_position(traj: &Trajectory, t_s: f64) -> Point2 {
    // Reduce time modulo the period first so t and t + period land on the
    // same floating-point angle.
    let t = t_s.rem_euclid(traj.period_s);
    let theta = traj.angle(t);
    Point2::new(
        traj.center.x + traj.semi_axes.0 * theta.cos(),
        traj.center.y + traj.semi_axes.1 * theta.sin(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub id: u32,
    pub color: [f64; 3],
    pub radius_m: f64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub position: Point2,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFingerprint {
    /// Static channel term, row-major `[n_sensors × n_subcarriers]`.
    pub static_response: Vec<Complex<f64>>,
    pub n_subcarriers: usize,
    pub reflectors: Vec<Reflector>,
    pub noise_sigma: f64,
    pub background_color: [f64; 3],
    pub rng_seed: u64,
}

impl EnvironmentFingerprint {
    pub fn static_term(&self, sensor: usize, k: usize) -> Complex<f64> {
        self.static_response[sensor * self.n_subcarriers + k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub pedestrians: Vec<Pedestrian>,
    pub environment: EnvironmentFingerprint,
    pub room: RoomGeometry,
}

impl ScenarioSpec {
    pub fn n_sensors(&self) -> usize {
        self.room.n_sensors()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.environment.n_subcarriers
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        let env = &self.environment;
        if env.static_response.len() != self.n_sensors() * env.n_subcarriers {
            return Err(Error::Config("static response shape mismatch".into()));
        }
        if !(env.noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        if env.static_response.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Config("static response must be finite".into()));
        }
        for p in &self.pedestrians {
            if !(p.radius_m > 0.0 && p.trajectory.period_s > 0.0) {
                return Err(Error::Config(format!("pedestrian {} has invalid radius or period", p.id)));
            }
            if !p.trajectory.fits(&self.room, 0.0) {
                return Err(Error::Config(format!("pedestrian {} path leaves the room", p.id)));
            }
        }
        Ok(())
    }
}

/// One timestamped complex CSI vector from one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiRecord<T> {
    pub timestamp_ns: u64,
    pub sensor_id: u16,
    pub values: Vec<Complex<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub scenario: String,
    pub seed: u64,
    pub csi_rate_hz: f64,
    pub frame_rate_fps: f64,
    pub n_sensors: usize,
    pub n_subcarriers: usize,
    pub duration_s: f64,
    pub frame_height: usize,
    pub frame_width: usize,
}

impl CaptureMeta {
    pub fn frame_interval_ns(&self) -> u64 {
        (1e9 / self.frame_rate_fps).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureDataset<T> {
    pub csi_records: Vec<CsiRecord<T>>,
    pub frames: Vec<ImageFrame<T>>,
    pub meta: CaptureMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureConfig {
    pub csi_rate_hz: f64,
    pub frame_rate_fps: f64,
    pub resolution: (usize, usize),
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            csi_rate_hz: DEFAULT_CSI_RATE_HZ,
            frame_rate_fps: DEFAULT_FRAME_RATE_FPS,
            resolution: DEFAULT_RENDER_RES,
        }
    }
}

impl CaptureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.csi_rate_hz > 0.0 && self.frame_rate_fps > 0.0) {
            return Err(Error::Config("capture rates must be positive".into()));
        }
        if self.resolution.0 < 8 || self.resolution.1 < 8 {
            return Err(Error::Config("render resolution must be at least 8x8".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Presets

fn rgb8(r: u8, g: u8, b: u8) -> [f64; 3] {
    [r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0]
}

/// Participant colors P1..P5; distinct by at least 0.2 in some channel.
fn participant_color(id: u32) -> [f64; 3] {
    match id {
        1 => rgb8(220, 40, 40),
        2 => rgb8(40, 180, 60),
        3 => rgb8(40, 80, 220),
        4 => rgb8(235, 205, 30),
        _ => rgb8(200, 60, 200),
    }
}

#[derive(Clone, Copy)]
enum Site {
    Office,
    Industrial,
}

fn room_for(site: Site) -> RoomGeometry {
    match site {
        Site::Office => RoomGeometry {
            width_m: 6.0,
            depth_m: 4.0,
            sensor_positions: vec![
                Point2::new(1.0, 0.2),
                Point2::new(5.0, 0.2),
                Point2::new(1.0, 3.8),
                Point2::new(5.0, 3.8),
            ],
            tx_position: Point2::new(0.2, 2.0),
            rx_position: Point2::new(5.8, 2.0),
        },
        Site::Industrial => RoomGeometry {
            width_m: 5.8,
            depth_m: 3.5,
            sensor_positions: vec![
                Point2::new(1.0, 0.2),
                Point2::new(4.8, 0.2),
                Point2::new(1.0, 3.3),
                Point2::new(4.8, 3.3),
            ],
            tx_position: Point2::new(0.2, 1.75),
            rx_position: Point2::new(5.6, 1.75),
        },
    }
}

fn fingerprint_for(site: Site, room: &RoomGeometry, seed: u64) -> EnvironmentFingerprint {
    let (tag, n_reflectors, rho_range, ripple, noise_sigma, background) = match site {
        Site::Office => (0x0FF1_CE00u64, 3, (0.2, 0.6), 0.1, 0.01, rgb8(220, 214, 200)),
        Site::Industrial => (0x1ADD_5700u64, 6, (0.3, 0.9), 0.25, 0.03, rgb8(96, 102, 116)),
    };
    let rng_seed = rng::key(&[seed, tag]);
    let mut r = rng::keyed_rng(&[rng_seed, 0xF1]);

    let n_sub = N_SUBCARRIERS;
    let mut static_response = Vec::with_capacity(room.n_sensors() * n_sub);
    for sensor in &room.sensor_positions {
        let los = room.tx_position.distance(*sensor);
        let gain: f64 = r.gen_range(0.8..1.2);
        for k in 0..n_sub {
            let f = subcarrier_hz(k);
            let path = Complex::from_polar(gain, -2.0 * PI * f * los / SPEED_OF_LIGHT);
            let re: f64 = r.sample(StandardNormal);
            let im: f64 = r.sample(StandardNormal);
            static_response.push(path + Complex::new(re, im) * ripple);
        }
    }

    let reflectors = (0..n_reflectors)
        .map(|_| Reflector {
            position: Point2::new(
                r.gen_range(0.1..room.width_m - 0.1),
                r.gen_range(0.1..room.depth_m - 0.1),
            ),
            coefficient: r.gen_range(rho_range.0..rho_range.1),
        })
        .collect();

    EnvironmentFingerprint {
        static_response,
        n_subcarriers: n_sub,
        reflectors,
        noise_sigma,
        background_color: background,
        rng_seed,
    }
}

fn walker(
    id: u32,
    room: &RoomGeometry,
    offset: (f64, f64),
    semi_axes: (f64, f64),
    period_s: f64,
    direction: Direction,
    phase_offset: f64,
) -> Pedestrian {
    Pedestrian {
        id,
        color: participant_color(id),
        radius_m: PEDESTRIAN_RADIUS_M,
        trajectory: Trajectory {
            center: Point2::new(room.width_m / 2.0 + offset.0, room.depth_m / 2.0 + offset.1),
            semi_axes,
            period_s,
            direction,
            phase_offset,
        },
    }
}

/// Builds one of the named scenario presets. Industrial presets (`s1`..`s6`)
/// built with the same seed share one environment fingerprint.
pub fn build_scenario(preset_name: &str, seed: u64) -> Result<ScenarioSpec> {
    use Direction::{Clockwise as Cw, Counterclockwise as Ccw};

    let site = match preset_name {
        "office" => Site::Office,
        "s1" | "s2" | "s3" | "s4" | "s5" | "s6" => Site::Industrial,
        other => {
            return Err(Error::Config(format!(
                "unknown scenario preset {other:?}; expected one of {PRESETS:?}"
            )))
        }
    };
    let room = room_for(site);
    let environment = fingerprint_for(site, &room, seed);
    let phase = |i: u64| 2.0 * PI * rng::unit_from_key(&[seed, 0xFA5E, i]);

    let (duration_s, pedestrians) = match preset_name {
        "office" => (1800.0, vec![walker(1, &room, (0.0, 0.0), (2.0, 1.1), 20.0, Cw, phase(1))]),
        "s1" => (600.0, vec![walker(1, &room, (0.0, 0.0), (2.0, 1.0), 20.0, Cw, phase(1))]),
        "s2" => (600.0, vec![walker(2, &room, (0.0, 0.0), (1.9, 0.9), 18.0, Ccw, phase(2))]),
        "s3" => (600.0, vec![walker(3, &room, (0.0, 0.0), (1.7, 0.9), 22.0, Cw, phase(3))]),
        "s4" => (
            600.0,
            vec![
                walker(1, &room, (0.0, 0.0), (2.0, 1.0), 20.0, Cw, phase(1)),
                walker(2, &room, (0.0, 0.0), (2.0, 1.0), 20.0, Cw, phase(1) + 2.0 * PI / 3.0),
                walker(3, &room, (0.0, 0.0), (2.0, 1.0), 20.0, Cw, phase(1) + 4.0 * PI / 3.0),
            ],
        ),
        "s5" => (
            600.0,
            vec![
                walker(1, &room, (0.0, 0.0), (2.0, 1.0), 24.0, Ccw, phase(1)),
                walker(4, &room, (0.0, 0.0), (2.0, 1.0), 24.0, Ccw, phase(1) + 2.0 * PI / 3.0),
                walker(5, &room, (0.0, 0.0), (2.0, 1.0), 24.0, Ccw, phase(1) + 4.0 * PI / 3.0),
            ],
        ),
        _ => (
            1200.0,
            vec![
                walker(1, &room, (0.0, 0.0), (2.1, 1.1), 20.0, Cw, phase(1)),
                walker(2, &room, (-0.8, 0.0), (1.0, 0.7), 15.0, Ccw, phase(2)),
                walker(3, &room, (0.8, 0.0), (1.0, 0.7), 17.0, Cw, phase(3)),
                walker(4, &room, (0.0, 0.0), (1.4, 0.4), 11.0, Ccw, phase(4)),
                walker(5, &room, (0.0, 0.0), (0.5, 0.5), 9.0, Cw, phase(5)),
            ],
        ),
    };

    let spec = ScenarioSpec {
        name: preset_name.to_string(),
        seed,
        duration_s,
        pedestrians,
        environment,
        room,
    };
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Camera

/// World-coordinate center of pixel `(row, col)`.
pub fn pixel_center(room: &RoomGeometry, resolution: (usize, usize), row: usize, col: usize) -> Point2 {
    let (h, w) = resolution;
    Point2::new(
        (col as f64 + 0.5) * room.width_m / w as f64,
        (row as f64 + 0.5) * room.depth_m / h as f64,
    )
}

/// Top-down orthographic raster: background everywhere except pedestrian
/// disks, painted in ascending id order so the highest id ends on top.
pub fn render_frame<T: Real>(spec: &ScenarioSpec, t_s: f64, resolution: (usize, usize)) -> ImageFrame<T> {
    let (h, w) = resolution;
    let to_t = |c: [f64; 3]| [T::lit(c[0]), T::lit(c[1]), T::lit(c[2])];
    let mut frame = ImageFrame::filled(h, w, to_t(spec.environment.background_color), seconds_to_ns(t_s));

    let mut order: Vec<&Pedestrian> = spec.pedestrians.iter().collect();
    order.sort_by_key(|p| p.id);

    let px_w = spec.room.width_m / w as f64;
    let px_h = spec.room.depth_m / h as f64;
    for ped in order {
        let pos = pedestrian_position(&ped.trajectory, t_s);
        let color = to_t(ped.color);
        // Only scan the disk's bounding box.
        let col_lo = (((pos.x - ped.radius_m) / px_w).floor().max(0.0)) as usize;
        let col_hi = (((pos.x + ped.radius_m) / px_w).ceil().max(0.0) as usize).min(w);
        let row_lo = (((pos.y - ped.radius_m) / px_h).floor().max(0.0)) as usize;
        let row_hi = (((pos.y + ped.radius_m) / px_h).ceil().max(0.0) as usize).min(h);
        for row in row_lo..row_hi {
            for col in col_lo..col_hi {
                if pixel_center(&spec.room, resolution, row, col).distance(pos) <= ped.radius_m {
                    frame.set_pixel(row, col, color);
                }
            }
        }
    }
    frame
}

// ---------------------------------------------------------------------------
// Channel

#[inline]
pub fn subcarrier_hz(k: usize) -> f64 {
    CARRIER_HZ + k as f64 * SUBCARRIER_SPACING_HZ
}

pub fn seconds_to_ns(t_s: f64) -> u64 {
    (t_s * 1e9).round().max(0.0) as u64
}

/// Multipath CSI seen by one sensor at `timestamp_ns`:
/// `h_k = H0[s,k] + Σ_j ρ_j exp(−i 2π f_k (|tx − p_j| + |p_j − sensor|) / c) + n_k`.
///
/// Scatterers are the static reflectors plus every pedestrian (ρ = 0.5). The
/// noise `n_k` is complex Gaussian with total standard deviation `noise_sigma`
/// drawn from a stream keyed by `(rng_seed, timestamp_ns, sensor_index)`.
pub fn synthesize_csi<T: Real>(spec: &ScenarioSpec, timestamp_ns: u64, sensor_index: usize) -> CsiRecord<T> {
    assert!(sensor_index < spec.n_sensors(), "sensor index out of range");
    let env = &spec.environment;
    let t_s = timestamp_ns as f64 * 1e-9;
    let tx = spec.room.tx_position;
    let sensor = spec.room.sensor_positions[sensor_index];

    let mut scatterers: Vec<(f64, f64)> = env
        .reflectors
        .iter()
        .map(|r| (r.coefficient, tx.distance(r.position) + r.position.distance(sensor)))
        .collect();
    for ped in &spec.pedestrians {
        let p = pedestrian_position(&ped.trajectory, t_s);
        scatterers.push((PEDESTRIAN_REFLECTION, tx.distance(p) + p.distance(sensor)));
    }

    let noise_std = env.noise_sigma / std::f64::consts::SQRT_2;
    let mut noise = rng::keyed_rng(&[env.rng_seed, timestamp_ns, sensor_index as u64]);

    let values = (0..env.n_subcarriers)
        .map(|k| {
            let f = subcarrier_hz(k);
            let mut h = env.static_term(sensor_index, k);
            for &(rho, path_len) in &scatterers {
                h += Complex::from_polar(rho, -2.0 * PI * f * path_len / SPEED_OF_LIGHT);
            }
            if env.noise_sigma > 0.0 {
                let re: f64 = noise.sample(StandardNormal);
                let im: f64 = noise.sample(StandardNormal);
                h += Complex::new(re, im) * noise_std;
            }
            Complex::new(T::lit(h.re), T::lit(h.im))
        })
        .collect();

    CsiRecord {
        timestamp_ns,
        sensor_id: sensor_index as u16,
        values,
    }
}

// ---------------------------------------------------------------------------
// Capture schedule

fn count_for(duration_s: f64, rate: f64) -> usize {
    // Small epsilon so 1800 s × 10 fps is 18000, not 17999.
    (duration_s * rate + 1e-9).floor() as usize
}

/// Timestamps of every capture event for a scenario, without payloads.
#[derive(Debug, Clone)]
pub struct CaptureSchedule {
    pub csi_timestamps_ns: Vec<u64>,
    pub frame_timestamps_ns: Vec<u64>,
}

impl CaptureSchedule {
    pub fn new(spec: &ScenarioSpec, cfg: &CaptureConfig) -> Self {
        let n_csi = count_for(spec.duration_s, cfg.csi_rate_hz);
        let n_frames = count_for(spec.duration_s, cfg.frame_rate_fps);
        let csi_timestamps_ns = (0..n_csi)
            .map(|i| (i as f64 * 1e9 / cfg.csi_rate_hz).round() as u64)
            .collect();
        let frame_timestamps_ns = (0..n_frames)
            .map(|i| {
                let nominal = (i as f64 * 1e9 / cfg.frame_rate_fps).round() as i64;
                let u = rng::unit_from_key(&[spec.seed, 0xC10C, i as u64]);
                let jitter = ((2.0 * u - 1.0) * FRAME_JITTER_NS as f64).round() as i64;
                (nominal + jitter).max(0) as u64
            })
            .collect();
        Self {
            csi_timestamps_ns,
            frame_timestamps_ns,
        }
    }
}

pub fn capture_meta(spec: &ScenarioSpec, cfg: &CaptureConfig) -> CaptureMeta {
    CaptureMeta {
        scenario: spec.name.clone(),
        seed: spec.seed,
        csi_rate_hz: cfg.csi_rate_hz,
        frame_rate_fps: cfg.frame_rate_fps,
        n_sensors: spec.n_sensors(),
        n_subcarriers: spec.n_subcarriers(),
        duration_s: spec.duration_s,
        frame_height: cfg.resolution.0,
        frame_width: cfg.resolution.1,
    }
}

/// Generates a dataset at the given rates and the default render resolution.
pub fn generate_dataset<T: Real>(spec: &ScenarioSpec, csi_rate_hz: f64, frame_rate_fps: f64) -> Result<CaptureDataset<T>> {
    generate_dataset_with(
        spec,
        &CaptureConfig {
            csi_rate_hz,
            frame_rate_fps,
            ..CaptureConfig::default()
        },
    )
}

pub fn generate_dataset_with<T: Real>(spec: &ScenarioSpec, cfg: &CaptureConfig) -> Result<CaptureDataset<T>> {
    spec.validate()?;
    cfg.validate()?;
    let schedule = CaptureSchedule::new(spec, cfg);
    let n_sensors = spec.n_sensors();
    let mut csi_records = Vec::with_capacity(schedule.csi_timestamps_ns.len() * n_sensors);
    for &ts in &schedule.csi_timestamps_ns {
        for s in 0..n_sensors {
            csi_records.push(synthesize_csi(spec, ts, s));
        }
    }
    let frames = schedule
        .frame_timestamps_ns
        .iter()
        .map(|&ts| {
            let mut f = render_frame(spec, ts as f64 * 1e-9, cfg.resolution);
            f.timestamp_ns = ts;
            f
        })
        .collect();
    Ok(CaptureDataset {
        csi_records,
        frames,
        meta: capture_meta(spec, cfg),
    })
}
