//! Synthetic subjects, motions and EMG from a known forward model.
//!
//! Joint trajectories are minimum-jerk paths through per-motion key poses.
//! EMG envelopes come from a fixed synergy matrix over angle, velocity and
//! acceleration drives, low-pass filtered, then bent by a per-subject
//! transform (power law, gain, channel mixing, offset, noise).

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{EmgKind, SampledSignal, TrialRecording, EEF_CHANNELS, EMG_CHANNELS, JOINT_CHANNELS};

pub const N_JOINTS: usize = 6;
pub const N_MUSCLES: usize = 8;
/// Four drives per joint: |velocity|, |acceleration|, positive and negative
/// angle excursion.
pub const N_DRIVES: usize = 4 * N_JOINTS;
pub const NEW_MOTION_ID: &str = "M20";
pub const RAW_EMG_RATE_HZ: f64 = 2222.0;

const VEL_SCALE: f64 = 180.0;
const ACC_SCALE: f64 = 600.0;
const ANGLE_SCALE: f64 = 90.0;
const UPPER_ARM_M: f64 = 0.30;
const FOREARM_M: f64 = 0.25;
const HAND_M: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionCategory {
    Simple,
    Combined,
    Complex,
}

/// Move to `pose` (degrees, joint order of `JOINT_CHANNELS`) over
/// `duration_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: f64,
    pub pose: [f64; N_JOINTS],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionTemplate {
    pub motion_id: String,
    pub name: String,
    pub category: MotionCategory,
    pub segments: Vec<Segment>,
}

impl MotionTemplate {
    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .segments
            .last()
            .ok_or_else(|| Error::Config(format!("motion {} has no segments", self.motion_id)))?;
        if last.pose.iter().any(|v| *v != 0.0) {
            return Err(Error::Config(format!("motion {} does not return to rest", self.motion_id)));
        }
        if self.segments.iter().any(|s| !(s.duration_s > 0.0)) {
            return Err(Error::Config(format!("motion {} has a non-positive segment", self.motion_id)));
        }
        Ok(())
    }

    /// Same path, every segment `factor` times faster.
    pub fn sped_up(&self, factor: f64) -> Self {
        let mut t = self.clone();
        for s in &mut t.segments {
            s.duration_s /= factor;
        }
        t
    }
}

fn seg(duration_s: f64, pose: [f64; N_JOINTS]) -> Segment {
    Segment { duration_s, pose }
}

const REST: [f64; N_JOINTS] = [0.0; N_JOINTS];

/// Twenty tasks: eight simple, three combined, six everyday-like complex
/// motions and three extra simple ones. `M20` (pointing at three points) is
/// the designated new motion.
pub fn motion_catalogue() -> Vec<MotionTemplate> {
    use MotionCategory::*;
    // abd, flex, elbow, rot, wrist_abd, wrist_flex
    let out_back = |pose: [f64; N_JOINTS]| vec![seg(0.9, pose), seg(0.4, pose), seg(0.9, REST)];
    let defs: Vec<(&str, MotionCategory, Vec<Segment>)> = vec![
        ("shoulder_flexion", Simple, out_back([0.0, 90.0, 0.0, 0.0, 0.0, 0.0])),
        ("shoulder_extension", Simple, out_back([0.0, -40.0, 0.0, 0.0, 0.0, 0.0])),
        ("shoulder_abduction", Simple, out_back([90.0, 0.0, 0.0, 0.0, 0.0, 0.0])),
        ("elbow_flexion", Simple, out_back([0.0, 0.0, 110.0, 0.0, 0.0, 0.0])),
        ("elbow_flexion_supinated", Simple, out_back([0.0, 0.0, 110.0, -60.0, 0.0, 0.0])),
        ("wrist_flexion", Simple, out_back([0.0, 0.0, 0.0, 0.0, 0.0, 60.0])),
        ("wrist_extension", Simple, out_back([0.0, 0.0, 0.0, 0.0, 0.0, -50.0])),
        ("wrist_pronation", Simple, out_back([0.0, 0.0, 0.0, 70.0, 0.0, 0.0])),
        ("shoulder_abduction_elbow_flexion", Combined, out_back([80.0, 0.0, 90.0, 0.0, 0.0, 0.0])),
        ("shoulder_flexion_elbow_flexion", Combined, out_back([0.0, 80.0, 90.0, 0.0, 0.0, 0.0])),
        ("shoulder_abduction_wrist_extension", Combined, out_back([80.0, 0.0, 0.0, 0.0, 0.0, -40.0])),
        (
            "breaststroke",
            Complex,
            vec![
                seg(0.7, [0.0, 90.0, 100.0, 0.0, 0.0, 0.0]),
                seg(0.6, [60.0, 90.0, 10.0, 0.0, 0.0, 0.0]),
                seg(0.7, [30.0, 30.0, 90.0, 0.0, 0.0, 0.0]),
                seg(0.7, REST),
            ],
        ),
        (
            "relay_handover",
            Complex,
            vec![
                seg(0.7, [0.0, -30.0, 60.0, 0.0, 0.0, 0.0]),
                seg(0.9, [0.0, 40.0, 20.0, 40.0, 0.0, 0.0]),
                seg(0.3, [0.0, 40.0, 20.0, 40.0, 0.0, 0.0]),
                seg(0.8, REST),
            ],
        ),
        (
            "reading_clock",
            Complex,
            vec![
                seg(0.9, [0.0, 60.0, 110.0, -70.0, 0.0, -20.0]),
                seg(0.6, [0.0, 60.0, 110.0, -70.0, 0.0, -20.0]),
                seg(0.9, REST),
            ],
        ),
        (
            "diagonal_reach",
            Complex,
            vec![
                seg(1.0, [50.0, 100.0, 20.0, 0.0, 15.0, 0.0]),
                seg(0.3, [50.0, 100.0, 20.0, 0.0, 15.0, 0.0]),
                seg(1.0, REST),
            ],
        ),
        (
            "waving",
            Complex,
            vec![
                seg(0.7, [70.0, 0.0, 100.0, 0.0, 0.0, 0.0]),
                seg(0.35, [70.0, 0.0, 100.0, 20.0, 20.0, 0.0]),
                seg(0.35, [70.0, 0.0, 100.0, -20.0, -20.0, 0.0]),
                seg(0.35, [70.0, 0.0, 100.0, 20.0, 20.0, 0.0]),
                seg(0.35, [70.0, 0.0, 100.0, -20.0, -20.0, 0.0]),
                seg(0.7, REST),
            ],
        ),
        ("shoulder_adduction_cross_body", Simple, out_back([-30.0, 40.0, 60.0, 0.0, 0.0, 0.0])),
        (
            "wrist_deviation",
            Simple,
            vec![seg(0.6, [0.0, 0.0, 0.0, 0.0, 25.0, 0.0]), seg(0.9, [0.0, 0.0, 0.0, 0.0, -25.0, 0.0]), seg(0.7, REST)],
        ),
        (
            "overhead_elbow_extension",
            Simple,
            vec![
                seg(1.0, [0.0, 150.0, 120.0, 0.0, 0.0, 0.0]),
                seg(0.6, [0.0, 150.0, 20.0, 0.0, 0.0, 0.0]),
                seg(1.0, REST),
            ],
        ),
        (
            "pointing_three_points",
            Complex,
            vec![
                seg(0.7, [10.0, 70.0, 10.0, 0.0, 0.0, 0.0]),
                seg(0.6, [50.0, 80.0, 20.0, 0.0, 0.0, 0.0]),
                seg(0.6, [-10.0, 50.0, 30.0, 20.0, 0.0, 0.0]),
                seg(0.8, REST),
            ],
        ),
    ];
    defs.into_iter()
        .enumerate()
        .map(|(i, (name, category, segments))| MotionTemplate {
            motion_id: format!("M{:02}", i + 1),
            name: name.to_string(),
            category,
            segments,
        })
        .collect()
}

pub fn motion_template(motion_id: &str) -> Result<MotionTemplate> {
    motion_catalogue()
        .into_iter()
        .find(|m| m.motion_id == motion_id)
        .ok_or_else(|| Error::Config(format!("unknown motion {motion_id}")))
}

/// Minimum-jerk blend from `from` to `to` at normalised time `tau`.
pub fn min_jerk(from: f64, to: f64, tau: f64) -> f64 {
    let s = tau.clamp(0.0, 1.0);
    from + (to - from) * s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub lead_in_s: f64,
    /// Relative amplitude jitter per repetition (uniform ±).
    pub amplitude_jitter: f64,
    /// Relative timing jitter per repetition (uniform ±).
    pub timing_jitter: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            rate_hz: 60.0,
            duration_s: 5.0,
            lead_in_s: 1.0,
            amplitude_jitter: 0.05,
            timing_jitter: 0.05,
        }
    }
}

impl TrajectoryConfig {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }
}

/// Joint angles (degrees) at `cfg.rate_hz`, starting and ending at rest.
pub fn gen_trajectory(template: &MotionTemplate, cfg: &TrajectoryConfig, seed: u64) -> Result<SampledSignal> {
    template.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 1.0 + cfg.amplitude_jitter * rng.random_range(-1.0..=1.0);
    let time = 1.0 + cfg.timing_jitter * rng.random_range(-1.0..=1.0);
    if cfg.lead_in_s + template.duration_s() * time > cfg.duration_s {
        return Err(Error::Config(format!(
            "motion {} does not fit into {} s",
            template.motion_id, cfg.duration_s
        )));
    }
    let mut knots = vec![(cfg.lead_in_s, REST)];
    for s in &template.segments {
        let t0 = knots.last().expect("non-empty").0;
        knots.push((t0 + s.duration_s * time, s.pose.map(|v| v * amp)));
    }
    let n = cfg.samples();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / cfg.rate_hz;
        let k = knots.partition_point(|(tk, _)| *tk <= t);
        let row: Vec<f64> = if k == 0 {
            REST.to_vec()
        } else if k == knots.len() {
            knots[k - 1].1.to_vec()
        } else {
            let (t0, p0) = knots[k - 1];
            let (t1, p1) = knots[k];
            let tau = (t - t0) / (t1 - t0);
            (0..N_JOINTS).map(|j| min_jerk(p0[j], p1[j], tau)).collect()
        };
        rows.push(row);
    }
    SampledSignal::from_rows(&rows, cfg.rate_hz, names(&JOINT_CHANNELS))
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Hand position (m) and orientation of a three-link arm hanging along −z.
pub fn end_effector(joints: &SampledSignal) -> Result<SampledSignal> {
    if joints.channels() != N_JOINTS {
        return Err(Error::Data("end-effector kinematics needs 6 joint angles".into()));
    }
    let mut rows = Vec::with_capacity(joints.len());
    let mut prev: Option<UnitQuaternion<f64>> = None;
    let down = Vector3::new(0.0, 0.0, -1.0);
    for t in 0..joints.len() {
        let a: Vec<f64> = joints.row(t).iter().map(|d| d.to_radians()).collect();
        let shoulder = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -a[0])
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -a[1]);
        let elbow = shoulder
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -a[2])
            * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a[3]);
        let mut hand = elbow
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -a[4])
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -a[5]);
        let pos = shoulder * (down * UPPER_ARM_M) + elbow * (down * FOREARM_M) + hand * (down * HAND_M);
        if let Some(p) = prev {
            if p.coords.dot(&hand.coords) < 0.0 {
                hand = UnitQuaternion::new_unchecked(-hand.into_inner());
            }
        }
        prev = Some(hand);
        let q = hand.quaternion();
        rows.push(vec![pos.x, pos.y, pos.z, q.w, q.i, q.j, q.k]);
    }
    SampledSignal::from_rows(&rows, joints.rate_hz(), names(&EEF_CHANNELS))
}

/// Synergy matrix `[muscle][drive]` and activation time constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardEmgModel {
    pub synergy: Vec<[f64; N_DRIVES]>,
    pub tau_ms: f64,
}

const VEL: usize = 0;
const ACC: usize = 1;
const POS: usize = 2;
const NEG: usize = 3;

impl Default for ForwardEmgModel {
    fn default() -> Self {
        // muscles: 0 delt post, 1 delt lat, 2 delt ant, 3 biceps, 4 triceps,
        // 5 wrist extensor, 6 pronator, 7 wrist flexor
        let mut w = vec![[0.0; N_DRIVES]; N_MUSCLES];
        let mut set = |m: usize, joint: usize, kind: usize, v: f64| w[m][4 * joint + kind] = v;
        // shoulder abduction
        set(1, 0, POS, 1.0);
        set(0, 0, POS, 0.3);
        set(2, 0, POS, 0.3);
        set(1, 0, VEL, 0.5);
        set(1, 0, ACC, 0.3);
        set(0, 0, NEG, 0.4);
        set(2, 0, NEG, 0.2);
        // shoulder flexion / extension
        set(2, 1, POS, 1.0);
        set(3, 1, POS, 0.2);
        set(0, 1, NEG, 1.0);
        set(4, 1, NEG, 0.3);
        set(2, 1, VEL, 0.3);
        set(0, 1, VEL, 0.2);
        set(2, 1, ACC, 0.2);
        set(0, 1, ACC, 0.2);
        // elbow flexion
        set(3, 2, POS, 1.0);
        set(3, 2, VEL, 0.4);
        set(4, 2, VEL, 0.4);
        set(4, 2, ACC, 0.3);
        set(3, 2, ACC, 0.2);
        // elbow rotation: pronation drives the pronator only
        set(6, 3, POS, 1.0);
        set(6, 3, VEL, 0.4);
        set(6, 3, ACC, 0.2);
        set(3, 3, NEG, 0.5);
        // wrist deviation
        set(5, 4, POS, 0.6);
        set(7, 4, NEG, 0.6);
        set(5, 4, VEL, 0.2);
        set(7, 4, VEL, 0.2);
        // wrist flexion / extension
        set(7, 5, POS, 1.0);
        set(5, 5, NEG, 1.0);
        set(7, 5, VEL, 0.3);
        set(5, 5, VEL, 0.3);
        set(7, 5, ACC, 0.2);
        set(5, 5, ACC, 0.2);
        Self { synergy: w, tau_ms: 40.0 }
    }
}

fn central_difference(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                0.0
            } else if i == 0 {
                (x[1] - x[0]) / dt
            } else if i == n - 1 {
                (x[n - 1] - x[n - 2]) / dt
            } else {
                (x[i + 1] - x[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// The 24 non-negative drives per sample, `[time][drive]`.
pub fn drives(trajectory: &SampledSignal) -> Vec<[f64; N_DRIVES]> {
    let dt = 1.0 / trajectory.rate_hz();
    let mut out = vec![[0.0; N_DRIVES]; trajectory.len()];
    for j in 0..N_JOINTS {
        let ang = trajectory.column(j);
        let vel = central_difference(&ang, dt);
        let acc = central_difference(&vel, dt);
        for (t, d) in out.iter_mut().enumerate() {
            d[4 * j + VEL] = vel[t].abs() / VEL_SCALE;
            d[4 * j + ACC] = acc[t].abs() / ACC_SCALE;
            d[4 * j + POS] = ang[t].max(0.0) / ANGLE_SCALE;
            d[4 * j + NEG] = (-ang[t]).max(0.0) / ANGLE_SCALE;
        }
    }
    out
}

/// Low-passed muscle activation before any subject transform,
/// `[time][muscle]`, non-negative.
pub fn activation(trajectory: &SampledSignal, model: &ForwardEmgModel) -> Vec<[f64; N_MUSCLES]> {
    let alpha = 1.0 - (-1000.0 / (model.tau_ms * trajectory.rate_hz())).exp();
    let mut state = [0.0; N_MUSCLES];
    drives(trajectory)
        .iter()
        .map(|d| {
            for (m, s) in state.iter_mut().enumerate() {
                let u: f64 = model.synergy[m].iter().zip(d).map(|(w, x)| w * x).sum();
                *s += alpha * (u - *s);
            }
            state
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRanges {
    pub gain: (f64, f64),
    pub offset: (f64, f64),
    pub gamma: (f64, f64),
    pub mixing: (f64, f64),
    /// Off-diagonal mixing mass of the held-out subject.
    pub held_out_mixing: f64,
    pub noise_sd: f64,
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            gain: (0.6, 1.6),
            offset: (0.01, 0.05),
            gamma: (0.85, 1.2),
            mixing: (0.05, 0.15),
            held_out_mixing: 0.45,
            noise_sd: 0.01,
        }
    }
}

/// Per-subject distortion of the activation:
/// `mix(gain · a^γ) + offset + noise`, clipped at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTransform {
    pub gain: [f64; N_MUSCLES],
    pub offset: [f64; N_MUSCLES],
    /// Row-stochastic, `[output][input]`.
    pub mixing: [[f64; N_MUSCLES]; N_MUSCLES],
    pub gamma: [f64; N_MUSCLES],
    pub noise_sd: f64,
}

impl SubjectTransform {
    pub fn identity() -> Self {
        let mut mixing = [[0.0; N_MUSCLES]; N_MUSCLES];
        for (i, row) in mixing.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            gain: [1.0; N_MUSCLES],
            offset: [0.0; N_MUSCLES],
            mixing,
            gamma: [1.0; N_MUSCLES],
            noise_sd: 0.0,
        }
    }

    /// Random transform; each muscle leaks `eps` of its row into two other
    /// muscles.
    pub fn sample(rng: &mut impl Rng, ranges: &TransformRanges, eps: f64) -> Self {
        let mut u = |r: (f64, f64)| if r.1 > r.0 { rng.random_range(r.0..r.1) } else { r.0 };
        let gain = std::array::from_fn(|_| u(ranges.gain));
        let offset = std::array::from_fn(|_| u(ranges.offset));
        let gamma = std::array::from_fn(|_| u(ranges.gamma));
        let mut mixing = [[0.0; N_MUSCLES]; N_MUSCLES];
        for (i, row) in mixing.iter_mut().enumerate() {
            row[i] = 1.0 - eps;
            let a = (i + rng.random_range(1..N_MUSCLES)) % N_MUSCLES;
            let mut b = (i + rng.random_range(1..N_MUSCLES)) % N_MUSCLES;
            if b == a {
                b = (a + 1) % N_MUSCLES;
                if b == i {
                    b = (b + 1) % N_MUSCLES;
                }
            }
            let share: f64 = rng.random_range(0.3..0.7);
            row[a] += eps * share;
            row[b] += eps * (1.0 - share);
        }
        Self {
            gain,
            offset,
            mixing,
            gamma,
            noise_sd: ranges.noise_sd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.mixing.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|v| *v < 0.0) {
                return Err(Error::Config(format!("mixing row {i} is not stochastic")));
            }
        }
        if self.gain.iter().any(|g| !(*g > 1e-3)) || self.offset.iter().any(|o| *o < 0.0) {
            return Err(Error::Config("gains must be positive and offsets non-negative".into()));
        }
        Ok(())
    }

    pub fn apply(&self, act: &[[f64; N_MUSCLES]], rng: &mut impl Rng) -> Vec<[f64; N_MUSCLES]> {
        let noise = Normal::new(0.0, self.noise_sd.max(0.0)).expect("finite sd");
        act.iter()
            .map(|a| {
                let shaped: [f64; N_MUSCLES] = std::array::from_fn(|m| self.gain[m] * a[m].max(0.0).powf(self.gamma[m]));
                std::array::from_fn(|o| {
                    let mixed: f64 = self.mixing[o].iter().zip(&shaped).map(|(w, v)| w * v).sum();
                    let n = if self.noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
                    (mixed + self.offset[o] + n).max(0.0)
                })
            })
            .collect()
    }
}

/// Eight-channel EMG envelope at the trajectory rate.
pub fn forward_emg(
    trajectory: &SampledSignal,
    model: &ForwardEmgModel,
    transform: &SubjectTransform,
    noise_seed: u64,
) -> Result<SampledSignal> {
    transform.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let rows: Vec<Vec<f64>> = transform
        .apply(&activation(trajectory, model), &mut rng)
        .iter()
        .map(|r| r.to_vec())
        .collect();
    SampledSignal::from_rows(&rows, trajectory.rate_hz(), names(&EMG_CHANNELS))
}

/// Zero-mean raw EMG whose RMS follows `envelope`: Gaussian carrier times
/// the linearly interpolated envelope.
pub fn raw_emg(envelope: &SampledSignal, rate_hz: f64, seed: u64) -> Result<SampledSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = envelope.len() as f64 / envelope.rate_hz();
    let n = (duration * rate_hz).round() as usize;
    let carrier = Normal::new(0.0, 1.0).expect("unit normal");
    let last = envelope.len() - 1;
    let mut samples = Vec::with_capacity(n * envelope.channels());
    for i in 0..n {
        let pos = (i as f64 / rate_hz * envelope.rate_hz()).min(last as f64);
        let k = (pos.floor() as usize).min(last);
        let frac = pos - k as f64;
        for c in 0..envelope.channels() {
            let e = if k < last {
                envelope.get(k, c) * (1.0 - frac) + envelope.get(k + 1, c) * frac
            } else {
                envelope.get(k, c)
            };
            samples.push(e * carrier.sample(&mut rng));
        }
    }
    SampledSignal::new(samples, envelope.channels(), rate_hz, envelope.channel_names().to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    /// Explicit motion ids; when empty the first `n_motions − 1` catalogue
    /// motions plus the new motion are used.
    pub motions: Vec<String>,
    pub n_motions: usize,
    pub n_reps: u32,
    pub seed: u64,
    pub trajectory: TrajectoryConfig,
    pub model: ForwardEmgModel,
    pub ranges: TransformRanges,
    /// Emit raw EMG at 2222 Hz instead of envelopes.
    pub raw_emg: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_subjects: 5,
            motions: Vec::new(),
            n_motions: 20,
            n_reps: 18,
            seed: 42,
            trajectory: TrajectoryConfig::default(),
            model: ForwardEmgModel::default(),
            ranges: TransformRanges::default(),
            raw_emg: false,
        }
    }
}

impl GeneratorConfig {
    pub fn motion_ids(&self) -> Result<Vec<String>> {
        if !self.motions.is_empty() {
            for m in &self.motions {
                motion_template(m)?;
            }
            return Ok(self.motions.clone());
        }
        let all = motion_catalogue();
        if self.n_motions == 0 || self.n_motions > all.len() {
            return Err(Error::Config(format!("n_motions must be in 1..={}", all.len())));
        }
        let mut ids: Vec<String> = all[..self.n_motions - 1].iter().map(|m| m.motion_id.clone()).collect();
        ids.push(NEW_MOTION_ID.to_string());
        Ok(ids)
    }

    pub fn subject_ids(&self) -> Vec<String> {
        (1..=self.n_subjects).map(|i| format!("S{i}")).collect()
    }
}

/// Description of a generated or loaded dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub subjects: Vec<String>,
    pub motions: Vec<String>,
    pub n_reps: u32,
    pub held_out_subject: Option<String>,
    pub new_motion: Option<String>,
    pub trials: Vec<String>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub transforms: Vec<SubjectTransform>,
    pub trials: Vec<TrialRecording>,
}

/// Stable 64-bit mix of a seed tuple (splitmix64 finaliser per element).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// The last subject is the designated held-out subject.
pub fn subject_transforms(cfg: &GeneratorConfig) -> Vec<SubjectTransform> {
    (0..cfg.n_subjects)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 1, s as u64]));
            let held_out = cfg.n_subjects > 1 && s + 1 == cfg.n_subjects;
            let eps = if held_out {
                cfg.ranges.held_out_mixing
            } else {
                let (lo, hi) = cfg.ranges.mixing;
                if hi > lo { rng.random_range(lo..hi) } else { lo }
            };
            SubjectTransform::sample(&mut rng, &cfg.ranges, eps)
        })
        .collect()
}

pub fn gen_trial(
    cfg: &GeneratorConfig,
    subject: usize,
    transform: &SubjectTransform,
    template: &MotionTemplate,
    motion_index: usize,
    repetition: u32,
) -> Result<TrialRecording> {
    let base = [cfg.seed, subject as u64, motion_index as u64, repetition as u64];
    let joints = gen_trajectory(template, &cfg.trajectory, derive_seed(&[base[0], 2, base[2], base[3], base[1]]))?;
    let eef = end_effector(&joints)?;
    let envelope = forward_emg(&joints, &cfg.model, transform, derive_seed(&[base[0], 3, base[1], base[2], base[3]]))?;
    let (emg, emg_kind) = if cfg.raw_emg {
        (
            raw_emg(&envelope, RAW_EMG_RATE_HZ, derive_seed(&[base[0], 4, base[1], base[2], base[3]]))?,
            EmgKind::Raw,
        )
    } else {
        (envelope, EmgKind::Envelope)
    };
    Ok(TrialRecording {
        subject_id: format!("S{}", subject + 1),
        motion_id: template.motion_id.clone(),
        repetition,
        emg,
        emg_kind,
        joints,
        eef,
        rest_window: Some((0.0, cfg.trajectory.lead_in_s)),
    })
}

pub fn gen_dataset(cfg: &GeneratorConfig) -> Result<SyntheticDataset> {
    if cfg.n_subjects == 0 || cfg.n_reps == 0 {
        return Err(Error::Config("need at least one subject and one repetition".into()));
    }
    let motion_ids = cfg.motion_ids()?;
    let templates: Vec<MotionTemplate> = motion_ids.iter().map(|m| motion_template(m)).collect::<Result<_>>()?;
    let transforms = subject_transforms(cfg);
    let jobs: Vec<(usize, usize, u32)> = (0..cfg.n_subjects)
        .flat_map(|s| (0..templates.len()).flat_map(move |m| (1..=cfg.n_reps).map(move |r| (s, m, r))))
        .collect();
    let trials: Vec<TrialRecording> = jobs
        .par_iter()
        .map(|&(s, m, r)| {
            let motion_index = motion_catalogue_index(&templates[m].motion_id);
            gen_trial(cfg, s, &transforms[s], &templates[m], motion_index, r)
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        subjects: cfg.subject_ids(),
        motions: motion_ids.clone(),
        n_reps: cfg.n_reps,
        held_out_subject: (cfg.n_subjects > 1).then(|| format!("S{}", cfg.n_subjects)),
        new_motion: motion_ids.iter().find(|m| *m == NEW_MOTION_ID).cloned(),
        trials: trials.iter().map(TrialRecording::trial_id).collect(),
        generator: Some(cfg.clone()),
    };
    Ok(SyntheticDataset {
        manifest,
        transforms,
        trials,
    })
}

fn motion_catalogue_index(motion_id: &str) -> usize {
    motion_id.trim_start_matches('M').parse().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(id: &str) -> MotionTemplate {
        motion_template(id).unwrap()
    }

    #[test]
    fn catalogue_shape() {
        let all = motion_catalogue();
        assert_eq!(all.len(), 20);
        let cfg = TrajectoryConfig::default();
        for m in &all {
            m.validate().unwrap();
            assert!(cfg.lead_in_s + m.duration_s() * (1.0 + cfg.timing_jitter) <= cfg.duration_s, "{}", m.name);
        }
        assert_eq!(all[19].name, "pointing_three_points");
    }

    #[test]
    fn trajectory_starts_and_ends_at_rest() {
        let cfg = TrajectoryConfig::default();
        for m in motion_catalogue() {
            let tr = gen_trajectory(&m, &cfg, 7).unwrap();
            assert_eq!(tr.len(), 300);
            assert!(tr.row(0).iter().all(|v| *v == 0.0));
            assert!(tr.row(299).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn zero_amplitude_template_is_rest() {
        let mut m = template("M01");
        for s in &mut m.segments {
            s.pose = REST;
        }
        let tr = gen_trajectory(&m, &TrajectoryConfig::default(), 3).unwrap();
        assert!(tr.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trajectory_is_seeded() {
        let m = template("M12");
        let cfg = TrajectoryConfig::default();
        assert_eq!(gen_trajectory(&m, &cfg, 5).unwrap(), gen_trajectory(&m, &cfg, 5).unwrap());
        assert_ne!(gen_trajectory(&m, &cfg, 5).unwrap(), gen_trajectory(&m, &cfg, 6).unwrap());
    }

    #[test]
    fn min_jerk_peak_velocity() {
        // Single 90° segment over 1.2 s, sampled finely so the numeric
        // derivative at the midpoint is close to the analytic one.
        let m = MotionTemplate {
            motion_id: "X".into(),
            name: "x".into(),
            category: MotionCategory::Simple,
            segments: vec![seg(1.2, [0.0, 90.0, 0.0, 0.0, 0.0, 0.0]), seg(1.2, REST)],
        };
        let cfg = TrajectoryConfig {
            rate_hz: 1000.0,
            amplitude_jitter: 0.0,
            timing_jitter: 0.0,
            ..TrajectoryConfig::default()
        };
        let tr = gen_trajectory(&m, &cfg, 0).unwrap();
        let vel = central_difference(&tr.column(1), 1.0 / cfg.rate_hz);
        let mid = ((cfg.lead_in_s + 0.6) * cfg.rate_hz) as usize;
        let expected = 15.0 / 8.0 * 90.0 / 1.2;
        assert!((vel[mid] - expected).abs() / expected < 0.01);
        let peak = vel.iter().cloned().fold(0.0, f64::max);
        assert!((peak - expected).abs() / expected < 0.01);
    }

    #[test]
    fn rest_without_noise_gives_offsets() {
        let mut m = template("M01");
        for s in &mut m.segments {
            s.pose = REST;
        }
        let tr = gen_trajectory(&m, &TrajectoryConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = SubjectTransform::sample(&mut rng, &TransformRanges::default(), 0.1);
        t.noise_sd = 0.0;
        let emg = forward_emg(&tr, &ForwardEmgModel::default(), &t, 0).unwrap();
        for row in 0..emg.len() {
            for c in 0..8 {
                assert_eq!(emg.get(row, c), t.offset[c]);
            }
        }
    }

    #[test]
    fn pronation_drives_a_single_channel() {
        let tr = gen_trajectory(&template("M08"), &TrajectoryConfig::default(), 0).unwrap();
        let emg = forward_emg(&tr, &ForwardEmgModel::default(), &SubjectTransform::identity(), 0).unwrap();
        for c in 0..8 {
            let peak = emg.column(c).iter().cloned().fold(0.0, f64::max);
            if c == 6 {
                assert!(peak > 0.5);
            } else {
                assert_eq!(peak, 0.0, "channel {c}");
            }
        }
    }

    #[test]
    fn faster_motion_raises_peak_activity() {
        let m = template("M04");
        let cfg = TrajectoryConfig {
            amplitude_jitter: 0.0,
            timing_jitter: 0.0,
            ..TrajectoryConfig::default()
        };
        let model = ForwardEmgModel::default();
        let peak = |t: &MotionTemplate| {
            let a = activation(&gen_trajectory(t, &cfg, 0).unwrap(), &model);
            a.iter().map(|r| r[4]).fold(0.0, f64::max)
        };
        assert!(peak(&m.sped_up(2.0)) > peak(&m));
    }

    #[test]
    fn end_effector_hangs_down_at_rest() {
        let tr = gen_trajectory(&template("M01"), &TrajectoryConfig::default(), 0).unwrap();
        let eef = end_effector(&tr).unwrap();
        let r = eef.row(0);
        assert!((r[2] + UPPER_ARM_M + FOREARM_M + HAND_M).abs() < 1e-12);
        assert!((r[3] - 1.0).abs() < 1e-12);
        for t in 1..eef.len() {
            let dot: f64 = (3..7).map(|c| eef.get(t, c) * eef.get(t - 1, c)).sum();
            assert!(dot > 0.0);
        }
        // Flexion lifts the hand forward.
        let top = (0..eef.len()).map(|t| eef.get(t, 2)).fold(f64::MIN, f64::max);
        assert!(top > -0.1);
    }

    #[test]
    fn dataset_counts_and_subject_differences() {
        let cfg = GeneratorConfig {
            n_motions: 3,
            n_reps: 2,
            ..GeneratorConfig::default()
        };
        let ds = gen_dataset(&cfg).unwrap();
        assert_eq!(ds.trials.len(), 5 * 3 * 2);
        assert_eq!(ds.manifest.motions, vec!["M01", "M02", "M20"]);
        assert_eq!(ds.manifest.held_out_subject.as_deref(), Some("S5"));
        let s1 = &ds.trials[0];
        let s5 = ds.trials.iter().find(|t| t.subject_id == "S5" && t.motion_id == "M01" && t.repetition == 1).unwrap();
        assert_ne!(s1.emg, s5.emg);
        let again = gen_dataset(&cfg).unwrap();
        assert_eq!(again.trials, ds.trials);
        for t in &ds.transforms {
            t.validate().unwrap();
        }
    }

    #[test]
    fn default_dataset_has_1800_trials() {
        let cfg = GeneratorConfig::default();
        assert_eq!(cfg.subject_ids().len() * cfg.motion_ids().unwrap().len() * cfg.n_reps as usize, 1800);
    }

    #[test]
    fn raw_mode_envelope_round_trip() {
        let cfg = GeneratorConfig {
            n_subjects: 1,
            n_motions: 1,
            n_reps: 1,
            raw_emg: true,
            ..GeneratorConfig::default()
        };
        let ds = gen_dataset(&cfg).unwrap();
        let t = &ds.trials[0];
        assert_eq!(t.emg.rate_hz(), RAW_EMG_RATE_HZ);
        assert_eq!(t.emg.len(), 11110);
        let mean: f64 = t.emg.column(0).iter().sum::<f64>() / t.emg.len() as f64;
        assert!(mean.abs() < 0.01);
    }
}
