//! Point-dipole magnetostatics and the per-face Hall readout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ObjectConfig, Vec3};

/// `mu0 / 4pi` in T m / A.
pub const MU0_OVER_4PI: f64 = 1e-7;

/// Field evaluations closer than this to a dipole centre are rejected.
pub const EXCLUSION_RADIUS_MM: f64 = 0.1;

/// Channels in one Hall frame: three sensors times three axes.
pub const FRAME_LEN: usize = 9;

const TESLA_TO_MICROTESLA: f64 = 1e6;

/// A magnet's instantaneous state in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleState {
    /// Centre position (mm).
    pub position: Vec3,
    /// Dipole moment (A m^2).
    pub moment: Vec3,
}

/// Flux density of a point dipole at `point` (mm), in tesla.
pub fn dipole_field(dipole: &DipoleState, point: &Vec3) -> Result<Vec3> {
    let r_mm = point - dipole.position;
    let dist_mm = r_mm.norm();
    if !(dist_mm > EXCLUSION_RADIUS_MM) {
        return Err(Error::Singularity {
            distance_mm: dist_mm,
            radius_mm: EXCLUSION_RADIUS_MM,
        });
    }
    let r = r_mm * 1e-3;
    let dist = dist_mm * 1e-3;
    let r_hat = r / dist;
    let m = &dipole.moment;
    Ok((r_hat * (3.0 * m.dot(&r_hat)) - m) * (MU0_OVER_4PI / (dist * dist * dist)))
}

/// Summed field of many dipoles at one point, in tesla.
pub fn total_field<'a>(dipoles: impl IntoIterator<Item = &'a DipoleState>, point: &Vec3) -> Result<Vec3> {
    dipoles
        .into_iter()
        .try_fold(Vec3::zeros(), |acc, d| Ok(acc + dipole_field(d, point)?))
}

/// The magnets of one face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceDipoles {
    pub face: u8,
    pub dipoles: Vec<DipoleState>,
}

/// All magnets of the object, grouped by face in configuration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSet {
    pub faces: Vec<FaceDipoles>,
}

impl DipoleSet {
    /// Every magnet at its rest position.
    pub fn rest(config: &ObjectConfig) -> Self {
        let faces = config
            .faces
            .iter()
            .map(|f| FaceDipoles {
                face: f.face_index,
                dipoles: f
                    .magnets
                    .iter()
                    .map(|m| DipoleState {
                        position: f.frame.to_world(&m.rest_position),
                        moment: f
                            .frame
                            .vector_to_world(&(m.moment_direction * m.moment_magnitude)),
                    })
                    .collect(),
            })
            .collect();
        DipoleSet { faces }
    }

    pub fn face(&self, face: u8) -> Option<&FaceDipoles> {
        self.faces.iter().find(|f| f.face == face)
    }

    pub fn face_mut(&mut self, face: u8) -> Option<&mut FaceDipoles> {
        self.faces.iter_mut().find(|f| f.face == face)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DipoleState> {
        self.faces.iter().flat_map(|f| f.dipoles.iter())
    }
}

/// One face's nine Hall channels in microtesla, ordered
/// `(s1.x, s1.y, s1.z, s2.x, ..., s3.z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HallFrame {
    pub face: u8,
    pub values: [f64; FRAME_LEN],
}

impl HallFrame {
    pub fn zeros(face: u8) -> Self {
        HallFrame {
            face,
            values: [0.0; FRAME_LEN],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &[f64; FRAME_LEN]) -> HallFrame {
        let mut out = *self;
        for (o, v) in out.values.iter_mut().zip(other) {
            *o += v;
        }
        out
    }

    pub fn sub(&self, other: &[f64; FRAME_LEN]) -> HallFrame {
        let mut out = *self;
        for (o, v) in out.values.iter_mut().zip(other) {
            *o -= v;
        }
        out
    }
}

/// Which magnets contribute to a face's readout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldScope {
    /// Every magnet on every face.
    AllFaces,
    /// Only the face's own five magnets.
    OwnFace,
}

/// Optional signed quantiser emulating a sensor ADC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcQuantizer {
    pub bits: u32,
    /// Symmetric full-scale range (uT); readings saturate at +-full_scale.
    pub full_scale: f64,
}

impl AdcQuantizer {
    pub fn twelve_bit(full_scale: f64) -> Self {
        AdcQuantizer { bits: 12, full_scale }
    }

    pub fn quantize(&self, value: f64) -> f64 {
        let step = 2.0 * self.full_scale / (1u64 << self.bits) as f64;
        (value.clamp(-self.full_scale, self.full_scale) / step).round() * step
    }
}

/// Readout non-idealities layered on the ideal field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Standard deviation of i.i.d. Gaussian channel noise (uT).
    pub noise_sd: f64,
    /// Uniform ambient field in world coordinates (uT), e.g. Earth's field.
    pub ambient_field: Option<Vec3>,
    pub adc: Option<AdcQuantizer>,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            noise_sd: 2.0,
            ambient_field: None,
            adc: None,
        }
    }
}

impl SensorModel {
    pub fn noiseless() -> Self {
        SensorModel {
            noise_sd: 0.0,
            ..Default::default()
        }
    }
}

/// Ideal (noise-free) readout of one face.
pub fn ideal_frame(
    config: &ObjectConfig,
    dipoles: &DipoleSet,
    face: u8,
    scope: FieldScope,
) -> Result<HallFrame> {
    let face_cfg = config.face(face)?;
    let own: &[DipoleState] = match scope {
        FieldScope::OwnFace => &dipoles
            .face(face)
            .ok_or_else(|| Error::Config(format!("no dipoles for face {face}")))?
            .dipoles,
        FieldScope::AllFaces => &[],
    };
    let mut frame = HallFrame::zeros(face);
    for (k, sensor) in face_cfg.sensors.iter().enumerate() {
        let p = face_cfg.frame.to_world(&sensor.position);
        let b = match scope {
            FieldScope::AllFaces => total_field(dipoles.iter(), &p)?,
            FieldScope::OwnFace => total_field(own, &p)?,
        };
        let local = sensor.orientation * b * TESLA_TO_MICROTESLA;
        frame.values[3 * k..3 * k + 3].copy_from_slice(local.as_slice());
    }
    Ok(frame)
}

/// Full readout with ambient field, noise and optional quantisation.
pub fn read_frame<R: Rng + ?Sized>(
    config: &ObjectConfig,
    dipoles: &DipoleSet,
    face: u8,
    scope: FieldScope,
    model: &SensorModel,
    rng: &mut R,
) -> Result<HallFrame> {
    let mut frame = ideal_frame(config, dipoles, face, scope)?;
    if let Some(ambient) = model.ambient_field {
        let face_cfg = config.face(face)?;
        for (k, sensor) in face_cfg.sensors.iter().enumerate() {
            let local = sensor.orientation * ambient;
            for axis in 0..3 {
                frame.values[3 * k + axis] += local[axis];
            }
        }
    }
    if model.noise_sd > 0.0 {
        let normal = Normal::new(0.0, model.noise_sd)
            .map_err(|e| Error::Config(format!("noise sd {}: {e}", model.noise_sd)))?;
        for v in frame.values.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    if let Some(adc) = model.adc {
        for v in frame.values.iter_mut() {
            *v = adc.quantize(*v);
        }
    }
    Ok(frame)
}

/// Sums the fields of all magnets on all faces at `face`'s sensors.
pub fn read_sensors(
    config: &ObjectConfig,
    dipoles: &DipoleSet,
    face: u8,
    noise_sd: f64,
    seed: u64,
) -> Result<HallFrame> {
    let model = SensorModel {
        noise_sd,
        ..SensorModel::noiseless()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    read_frame(config, dipoles, face, FieldScope::AllFaces, &model, &mut rng)
}

/// Like [`read_sensors`] but only `face`'s own magnets contribute.
pub fn read_sensors_isolated(
    config: &ObjectConfig,
    dipoles: &DipoleSet,
    face: u8,
    noise_sd: f64,
    seed: u64,
) -> Result<HallFrame> {
    let model = SensorModel {
        noise_sd,
        ..SensorModel::noiseless()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    read_frame(config, dipoles, face, FieldScope::OwnFace, &model, &mut rng)
}
