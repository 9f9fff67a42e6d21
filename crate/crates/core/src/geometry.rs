//! Cuboid geometry: face frames, magnet and sensor placement, and the
//! per-face pixel grid.
//!
//! World coordinates are millimetres with the origin at the cube centre.
//! Each face frame has its origin at the centre of the corresponding core
//! face, +Z along the outward normal, and +X/+Y along the pixel axes. In a
//! face frame the core surface is the plane `z = 0` and the outer shell
//! surface is `z = wall_thickness`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Depth of the magnet pockets measured from the core surface.
pub const HOLE_DEPTH_MM: f64 = 3.0;

/// Remanence-derived moment of an N50 6x1 mm disk, `Br * V / mu0`.
pub const N50_DISK_MOMENT: f64 = 0.032;

/// Number of active faces; face 6 carries the wiring and is not sensorised.
pub const ACTIVE_FACES: usize = 5;
pub const MAGNETS_PER_FACE: usize = 5;
pub const SENSORS_PER_FACE: usize = 3;

/// A 1-based pixel coordinate on a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCoord {
    pub x: u8,
    pub y: u8,
}

impl GridCoord {
    pub const fn new(x: u8, y: u8) -> Self {
        GridCoord { x, y }
    }

    pub fn is_valid(&self, grid: usize) -> bool {
        self.x >= 1 && self.y >= 1 && (self.x as usize) <= grid && (self.y as usize) <= grid
    }

    /// Row-major index into an `M x M` heatmap (rows are `y`).
    pub fn index(&self, grid: usize) -> usize {
        (self.y as usize - 1) * grid + (self.x as usize - 1)
    }

    pub fn from_index(index: usize, grid: usize) -> Self {
        GridCoord::new((index % grid + 1) as u8, (index / grid + 1) as u8)
    }

    /// Offset by a signed pixel step, or `None` when the result leaves the grid.
    pub fn offset(&self, dx: i32, dy: i32, grid: usize) -> Option<GridCoord> {
        let x = self.x as i32 + dx;
        let y = self.y as i32 + dy;
        let c = GridCoord::new(x.clamp(0, 255) as u8, y.clamp(0, 255) as u8);
        (x >= 1 && y >= 1 && x as usize <= grid && y as usize <= grid).then_some(c)
    }

    /// Iterate every coordinate of an `M x M` grid in row-major order.
    pub fn all(grid: usize) -> impl Iterator<Item = GridCoord> {
        (0..grid * grid).map(move |i| GridCoord::from_index(i, grid))
    }
}

impl std::fmt::Display for GridCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Rigid transform from a face frame into the world frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceFrame {
    /// Face-frame origin in world coordinates (mm).
    pub origin: Vec3,
    /// Columns are the face +X, +Y, +Z axes expressed in world coordinates.
    pub rotation: Mat3,
}

impl FaceFrame {
    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.origin + self.rotation * p
    }

    pub fn vector_to_world(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn to_face(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.origin)
    }

    pub fn normal(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetSpec {
    /// Rest position in the face frame (mm).
    pub rest_position: Vec3,
    /// Dipole moment magnitude (A m^2).
    pub moment_magnitude: f64,
    /// Unit moment direction in the face frame.
    pub moment_direction: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    /// Sensing-element position in the face frame (mm).
    pub position: Vec3,
    /// Orthonormal map from world-frame field vectors to sensor axes.
    pub orientation: Mat3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceConfig {
    pub face_index: u8,
    pub frame: FaceFrame,
    pub magnets: Vec<MagnetSpec>,
    pub sensors: Vec<SensorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    /// Edge length of the rigid sensor core (mm).
    pub core_edge: f64,
    /// Outer edge length of the silicone shell (mm).
    pub shell_outer_edge: f64,
    /// Pixels per face axis (`M`).
    pub pixel_grid: usize,
    pub faces: Vec<FaceConfig>,
}

/// One broken invariant found by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub face: Option<u8>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.face {
            Some(face) => write!(f, "face {face}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl ObjectConfig {
    pub fn wall_thickness(&self) -> f64 {
        (self.shell_outer_edge - self.core_edge) / 2.0
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.core_edge / self.pixel_grid as f64
    }

    pub fn face(&self, face: u8) -> Result<&FaceConfig> {
        self.faces
            .iter()
            .find(|f| f.face_index == face)
            .ok_or_else(|| Error::Config(format!("face {face} is not an active face")))
    }

    pub fn face_indices(&self) -> Vec<u8> {
        self.faces.iter().map(|f| f.face_index).collect()
    }

    /// Position of a face's slot in `faces`.
    pub fn face_slot(&self, face: u8) -> Result<usize> {
        self.faces
            .iter()
            .position(|f| f.face_index == face)
            .ok_or_else(|| Error::Config(format!("face {face} is not an active face")))
    }
}

/// Outward normal and pixel axes of the five sensorised faces, in world
/// coordinates. Faces 3 and 5 are opposite each other; the bottom face is
/// the wiring face and is absent.
fn face_axes(face: u8) -> (Vec3, Vec3, Vec3) {
    let x = Vec3::x();
    let y = Vec3::y();
    let z = Vec3::z();
    match face {
        1 => (x, y, z),
        2 => (y, z, x),
        3 => (-x, z, y),
        4 => (-y, z, -x),
        5 => (x, z, -y),
        _ => unreachable!("only faces 1..=5 are sensorised"),
    }
}

/// Default geometry.
///
/// 26 mm core inside a 42 mm shell, five magnets per face in a quincunx
/// (centre plus `(+-7.5, +-7.5)` mm), three sensors per face on a triangle
/// at `(-6.5,-4)`, `(6.5,-4)`, `(0,7)` mm. Magnet centres sit
/// 5 mm below the outer surface, i.e. 3 mm above the core. Sensing
/// elements sit 2 mm below the core surface.
pub fn default_config() -> ObjectConfig {
    let core_edge = 26.0;
    let shell_outer_edge = 42.0;
    let magnet_z = HOLE_DEPTH_MM;
    let sensor_z = -2.0;
    let magnet_xy = [(0.0, 0.0), (-7.5, -7.5), (7.5, -7.5), (-7.5, 7.5), (7.5, 7.5)];
    // Sensors on the diagonal would share the quincunx's mirror axis, making
    // contacts mirrored across it indistinguishable.
    let sensor_xy = [(-6.5, -4.0), (6.5, -4.0), (0.0, 7.0)];

    let faces = (1..=ACTIVE_FACES as u8)
        .map(|face_index| {
            let (u, v, n) = face_axes(face_index);
            let rotation = Mat3::from_columns(&[u, v, n]);
            let frame = FaceFrame {
                origin: n * (core_edge / 2.0),
                rotation,
            };
            let magnets = magnet_xy
                .iter()
                .map(|&(x, y)| MagnetSpec {
                    rest_position: Vec3::new(x, y, magnet_z),
                    moment_magnitude: N50_DISK_MOMENT,
                    moment_direction: Vec3::z(),
                })
                .collect();
            let sensors = sensor_xy
                .iter()
                .map(|&(x, y)| SensorSpec {
                    position: Vec3::new(x, y, sensor_z),
                    orientation: rotation.transpose(),
                })
                .collect();
            FaceConfig {
                face_index,
                frame,
                magnets,
                sensors,
            }
        })
        .collect();

    ObjectConfig {
        core_edge,
        shell_outer_edge,
        pixel_grid: 10,
        faces,
    }
}

/// Continuous version of [`pixel_to_point`]; `(5.5, 5.5)` is the face centre
/// of a 10x10 grid.
pub fn grid_to_point(config: &ObjectConfig, face: u8, x: f64, y: f64) -> Result<Vec3> {
    config.face(face)?;
    let centre = (config.pixel_grid as f64 + 1.0) / 2.0;
    let pitch = config.pixel_pitch();
    Ok(Vec3::new(
        (x - centre) * pitch,
        (y - centre) * pitch,
        config.wall_thickness(),
    ))
}

/// Pixel-centre point on the outer surface, in the face frame (mm).
pub fn pixel_to_point(config: &ObjectConfig, face: u8, coord: GridCoord) -> Result<Vec3> {
    if !coord.is_valid(config.pixel_grid) {
        return Err(Error::Config(format!(
            "pixel {coord} is outside the {0}x{0} grid",
            config.pixel_grid
        )));
    }
    grid_to_point(config, face, coord.x as f64, coord.y as f64)
}

fn is_orthonormal(m: &Mat3, tol: f64) -> bool {
    (m.transpose() * m - Mat3::identity()).abs().max() <= tol
}

/// Every broken invariant of `config`; empty when the configuration is sound.
pub fn validate(config: &ObjectConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut global = |message: String| out.push(Violation { face: None, message });

    if !(config.shell_outer_edge > config.core_edge) {
        global(format!(
            "shell outer edge {} mm must exceed core edge {} mm",
            config.shell_outer_edge, config.core_edge
        ));
    }
    if config.pixel_grid < 2 {
        global(format!("pixel grid {} must be at least 2", config.pixel_grid));
    }
    if config.faces.len() != ACTIVE_FACES {
        global(format!(
            "expected {ACTIVE_FACES} active faces, found {}",
            config.faces.len()
        ));
    }
    let mut seen = [false; ACTIVE_FACES + 1];
    for face in &config.faces {
        let i = face.face_index as usize;
        if !(1..=ACTIVE_FACES).contains(&i) {
            global(format!("face index {i} outside [1, {ACTIVE_FACES}]"));
        } else if std::mem::replace(&mut seen[i], true) {
            global(format!("face index {i} appears more than once"));
        }
    }

    let wall = config.wall_thickness();
    let half = config.core_edge / 2.0;
    for face in &config.faces {
        let mut flag = |message: String| {
            out.push(Violation {
                face: Some(face.face_index),
                message,
            })
        };
        if !is_orthonormal(&face.frame.rotation, 1e-10) || face.frame.rotation.determinant() < 0.0 {
            flag("face frame rotation is not a proper rotation".into());
        }
        if face.magnets.len() != MAGNETS_PER_FACE {
            flag(format!(
                "expected {MAGNETS_PER_FACE} magnets, found {}",
                face.magnets.len()
            ));
        }
        if face.sensors.len() != SENSORS_PER_FACE {
            flag(format!(
                "expected {SENSORS_PER_FACE} sensors, found {}",
                face.sensors.len()
            ));
        }
        for (k, m) in face.magnets.iter().enumerate() {
            let p = &m.rest_position;
            if p.x.abs() > half || p.y.abs() > half {
                flag(format!("magnet {k} lies outside the face footprint"));
            }
            let depth_below_surface = wall - p.z;
            if (depth_below_surface - (wall - HOLE_DEPTH_MM)).abs() > 1e-9 {
                flag(format!(
                    "magnet {k} sits {depth_below_surface} mm below the surface, expected {}",
                    wall - HOLE_DEPTH_MM
                ));
            }
            if !(m.moment_magnitude > 0.0) {
                flag(format!("magnet {k} has non-positive moment"));
            }
            if (m.moment_direction.norm() - 1.0).abs() > 1e-12 {
                flag(format!("magnet {k} moment direction is not a unit vector"));
            } else if (m.moment_direction - Vec3::z()).norm() > 1e-9 {
                flag(format!("magnet {k} does not point outward"));
            }
        }
        for (k, s) in face.sensors.iter().enumerate() {
            if !is_orthonormal(&s.orientation, 1e-10) {
                flag(format!("sensor {k} orientation is not orthonormal"));
            }
            if s.position.z > 1e-9 || s.position.x.abs() > half || s.position.y.abs() > half {
                flag(format!("sensor {k} lies outside the core"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimensions() {
        let c = default_config();
        assert_eq!(c.core_edge, 26.0);
        assert_eq!(c.shell_outer_edge, 42.0);
        assert_eq!(c.wall_thickness(), 8.0);
        assert!((c.pixel_pitch() - 2.6).abs() < 1e-15);
        for f in &c.faces {
            assert_eq!(f.magnets.len(), 5);
            assert_eq!(f.sensors.len(), 3);
        }
    }

    #[test]
    fn magnet_depth_keeps_disk_inside_wall() {
        let c = default_config();
        let wall = c.wall_thickness();
        for m in &c.face(1).unwrap().magnets {
            let depth = wall - m.rest_position.z;
            assert_eq!(depth, 5.0);
            // 1 mm thick disk centred at that depth
            assert!(depth - 0.5 > 0.0 && depth + 0.5 < wall);
        }
    }

    #[test]
    fn default_is_deterministic_and_valid() {
        assert_eq!(default_config(), default_config());
        assert!(validate(&default_config()).is_empty());
    }

    #[test]
    fn faces_three_and_five_are_opposite() {
        let c = default_config();
        let n3 = c.face(3).unwrap().frame.normal();
        let n5 = c.face(5).unwrap().frame.normal();
        assert!((n3 + n5).norm() < 1e-15);
    }

    #[test]
    fn pixel_centre_and_corner() {
        let c = default_config();
        let p = grid_to_point(&c, 1, 5.5, 5.5).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 8.0));
        let p = pixel_to_point(&c, 1, GridCoord::new(1, 1)).unwrap();
        // (1 - 5.5) * 2.6
        let expect = -4.5 * 2.6;
        assert!((p.x - expect).abs() < 1e-12 && (p.y - expect).abs() < 1e-12);
        assert!((expect + 11.7).abs() < 1e-12);
        let q = pixel_to_point(&c, 1, GridCoord::new(10, 10)).unwrap();
        assert!((p.x + q.x).abs() < 1e-12 && (p.y + q.y).abs() < 1e-12);
    }

    #[test]
    fn pixel_to_point_rejects_bad_face_and_coord() {
        let c = default_config();
        assert!(matches!(
            pixel_to_point(&c, 6, GridCoord::new(1, 1)),
            Err(Error::Config(_))
        ));
        assert!(pixel_to_point(&c, 1, GridCoord::new(0, 3)).is_err());
        assert!(pixel_to_point(&c, 1, GridCoord::new(3, 11)).is_err());
    }

    #[test]
    fn pixel_points_are_distinct_and_mirror() {
        let c = default_config();
        let pts: Vec<Vec3> = GridCoord::all(10)
            .map(|g| pixel_to_point(&c, 2, g).unwrap())
            .collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                assert!((pts[i] - pts[j]).norm() > 1.0);
            }
        }
        for g in GridCoord::all(10) {
            let p = pixel_to_point(&c, 2, g).unwrap();
            let m = pixel_to_point(&c, 2, GridCoord::new(11 - g.x, g.y)).unwrap();
            assert_eq!(m.x, -p.x);
            assert_eq!(m.y, p.y);
        }
    }

    #[test]
    fn validate_flags_missing_magnet() {
        let mut c = default_config();
        c.faces[2].magnets.pop();
        let v = validate(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].face, Some(3));
    }

    #[test]
    fn validate_flags_non_unit_direction() {
        let mut c = default_config();
        c.faces[0].magnets[1].moment_direction = Vec3::new(0.0, 0.0, 1.1);
        assert_eq!(validate(&c).len(), 1);
    }

    #[test]
    fn validate_flags_duplicate_faces_and_grid() {
        let mut c = default_config();
        c.faces[1].face_index = 1;
        c.pixel_grid = 1;
        let v = validate(&c);
        assert!(v.iter().any(|v| v.message.contains("more than once")));
        assert!(v.iter().any(|v| v.message.contains("pixel grid")));
    }

    #[test]
    fn frames_round_trip() {
        let c = default_config();
        for f in &c.faces {
            let p = Vec3::new(1.0, -2.0, 3.0);
            let back = f.frame.to_face(&f.frame.to_world(&p));
            assert!((back - p).norm() < 1e-12);
            assert!((f.frame.rotation.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_index_round_trip() {
        for i in 0..100 {
            assert_eq!(GridCoord::from_index(i, 10).index(10), i);
        }
        assert_eq!(GridCoord::new(10, 10).offset(0, 2, 10), None);
        assert_eq!(
            GridCoord::new(3, 4).offset(2, 0, 10),
            Some(GridCoord::new(5, 4))
        );
    }
}
