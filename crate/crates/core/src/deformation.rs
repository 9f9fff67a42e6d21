//! Shell mechanics stand-in: indentation depth to normal force, and contact
//! indentations to magnet displacements.
//!
//! Force follows `F = s(face, pixel) * (k1 * d + k3 * d^3)` for indentation
//! depth `d`, where `s` is a per-pixel stiffness multiplier. A contact of
//! depth `d` pushes every magnet of its face inward by
//! `d * exp(-r^2 / (2 sigma^2))`, with `r` the in-plane distance between the
//! magnet and the contact pixel centre. Contributions from several contacts
//! on one face add up and the total is clamped to `max_depth`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_to_point, GridCoord, ObjectConfig};
use crate::magnetics::DipoleSet;

pub const MAX_CONTACTS_PER_FACE: usize = 3;

/// One normal contact on a face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub face: u8,
    pub coord: GridCoord,
    /// Normal force (N).
    pub force: f64,
}

/// Contacts applied simultaneously, possibly on several faces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactSpec {
    pub contacts: Vec<Contact>,
}

impl ContactSpec {
    pub fn new(contacts: Vec<Contact>) -> Self {
        ContactSpec { contacts }
    }

    pub fn on_face(&self, face: u8) -> impl Iterator<Item = &Contact> {
        self.contacts.iter().filter(move |c| c.face == face)
    }

    pub fn validate(&self, config: &ObjectConfig) -> Result<()> {
        for c in &self.contacts {
            config.face(c.face)?;
            if !c.coord.is_valid(config.pixel_grid) {
                return Err(Error::Config(format!("contact pixel {} off the grid", c.coord)));
            }
            if !(c.force >= 0.0) || !c.force.is_finite() {
                return Err(Error::Usage(format!("contact force {} must be >= 0", c.force)));
            }
        }
        for face in config.face_indices() {
            let n = self.on_face(face).count();
            if n > MAX_CONTACTS_PER_FACE {
                return Err(Error::Usage(format!(
                    "{n} contacts on face {face}, at most {MAX_CONTACTS_PER_FACE} supported"
                )));
            }
        }
        Ok(())
    }
}

/// An indentation specified by depth rather than force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Indentation {
    pub face: u8,
    pub coord: GridCoord,
    /// Indentation depth (mm).
    pub depth: f64,
}

/// Per-pixel stiffness multipliers of one face, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceStiffness {
    pub face: u8,
    pub multipliers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    /// Width of the Gaussian displacement kernel (mm).
    pub kernel_sigma: f64,
    /// Linear stiffness (N/mm).
    pub k1: f64,
    /// Cubic stiffening (N/mm^3).
    pub k3: f64,
    pub stiffness_map: Vec<FaceStiffness>,
    /// Largest admissible indentation (mm); magnet travel is clamped here.
    pub max_depth: f64,
}

/// Closed indentation interval swept by the data-collection probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        DepthRange { min: 0.25, max: 2.0 }
    }
}

/// Radial stiffness pattern: 1.0 at the face centre rising linearly to
/// `corner` at the grid corners.
pub fn radial_stiffness(grid: usize, corner: f64) -> Vec<f64> {
    let c = (grid as f64 + 1.0) / 2.0;
    let r_max = ((1.0 - c).powi(2) * 2.0).sqrt();
    GridCoord::all(grid)
        .map(|g| {
            let r = ((g.x as f64 - c).powi(2) + (g.y as f64 - c).powi(2)).sqrt();
            1.0 + (corner - 1.0) * r / r_max
        })
        .collect()
}

impl DeformationParams {
    pub fn default_for(config: &ObjectConfig) -> Self {
        let multipliers = radial_stiffness(config.pixel_grid, 1.5);
        DeformationParams {
            kernel_sigma: 6.0,
            k1: 4.0,
            k3: 0.5,
            stiffness_map: config
                .face_indices()
                .into_iter()
                .map(|face| FaceStiffness {
                    face,
                    multipliers: multipliers.clone(),
                })
                .collect(),
            max_depth: 3.0,
        }
    }

    /// Same constants with a constant multiplier of 1 everywhere.
    pub fn uniform(config: &ObjectConfig) -> Self {
        let mut p = Self::default_for(config);
        for f in &mut p.stiffness_map {
            f.multipliers.iter_mut().for_each(|m| *m = 1.0);
        }
        p
    }

    pub fn multiplier(&self, face: u8, coord: GridCoord) -> Result<f64> {
        let f = self
            .stiffness_map
            .iter()
            .find(|f| f.face == face)
            .ok_or_else(|| Error::Config(format!("no stiffness map for face {face}")))?;
        let grid = (f.multipliers.len() as f64).sqrt() as usize;
        if !coord.is_valid(grid) {
            return Err(Error::Config(format!("pixel {coord} off the stiffness map")));
        }
        Ok(f.multipliers[coord.index(grid)])
    }

    pub fn validate(&self, config: &ObjectConfig) -> Result<()> {
        if !(self.kernel_sigma > 0.0) || !(self.k1 > 0.0) || !(self.k3 >= 0.0) {
            return Err(Error::Config(
                "kernel_sigma and k1 must be positive, k3 non-negative".into(),
            ));
        }
        if !(self.max_depth > 0.0 && self.max_depth < config.wall_thickness()) {
            return Err(Error::Config(format!(
                "max_depth {} must lie in (0, {})",
                self.max_depth,
                config.wall_thickness()
            )));
        }
        for face in config.face_indices() {
            let f = self
                .stiffness_map
                .iter()
                .find(|f| f.face == face)
                .ok_or_else(|| Error::Config(format!("no stiffness map for face {face}")))?;
            if f.multipliers.len() != config.pixel_grid * config.pixel_grid {
                return Err(Error::Config(format!("stiffness map of face {face} has wrong size")));
            }
            if f.multipliers.iter().any(|&m| !(m >= 0.5)) {
                return Err(Error::Config(format!(
                    "stiffness multipliers of face {face} must be >= 0.5"
                )));
            }
        }
        Ok(())
    }

    fn polynomial(&self, depth: f64) -> f64 {
        self.k1 * depth + self.k3 * depth * depth * depth
    }
}

/// Normal force (N) needed to indent `coord` by `depth` (mm).
pub fn force_from_depth(depth: f64, face: u8, coord: GridCoord, params: &DeformationParams) -> Result<f64> {
    if !(0.0..=params.max_depth).contains(&depth) {
        return Err(Error::Domain {
            what: "indentation depth (mm)",
            value: depth,
            min: 0.0,
            max: params.max_depth,
        });
    }
    Ok(params.multiplier(face, coord)? * params.polynomial(depth))
}

/// Inverse of [`force_from_depth`] by bisection.
pub fn depth_for_force(force: f64, face: u8, coord: GridCoord, params: &DeformationParams) -> Result<f64> {
    let f_max = force_from_depth(params.max_depth, face, coord, params)?;
    if !(force >= 0.0) {
        return Err(Error::Domain {
            what: "contact force (N)",
            value: force,
            min: 0.0,
            max: f_max,
        });
    }
    if force > f_max {
        return Err(Error::Range { force, max: f_max });
    }
    let s = params.multiplier(face, coord)?;
    let (mut lo, mut hi) = (0.0f64, params.max_depth);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if s * params.polynomial(mid) < force {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the closer bracket end
    let f_lo = (s * params.polynomial(lo) - force).abs();
    let f_hi = (s * params.polynomial(hi) - force).abs();
    Ok(if f_lo <= f_hi { lo } else { hi })
}

/// Force range `(F(min depth), F(max depth))` of the sweep at one pixel.
pub fn location_force_range(
    face: u8,
    coord: GridCoord,
    params: &DeformationParams,
    sweep: DepthRange,
) -> Result<(f64, f64)> {
    Ok((
        force_from_depth(sweep.min, face, coord, params)?,
        force_from_depth(sweep.max, face, coord, params)?,
    ))
}

/// Sweep force ranges for every pixel of every face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceRangeMap {
    pub grid: usize,
    /// `(face, row-major (min, max) per pixel)`.
    pub faces: Vec<(u8, Vec<(f64, f64)>)>,
}

impl ForceRangeMap {
    pub fn compute(config: &ObjectConfig, params: &DeformationParams, sweep: DepthRange) -> Result<Self> {
        let faces = config
            .face_indices()
            .into_iter()
            .map(|face| {
                let ranges = GridCoord::all(config.pixel_grid)
                    .map(|g| location_force_range(face, g, params, sweep))
                    .collect::<Result<Vec<_>>>()?;
                Ok((face, ranges))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ForceRangeMap {
            grid: config.pixel_grid,
            faces,
        })
    }

    pub fn range(&self, face: u8, coord: GridCoord) -> Result<(f64, f64)> {
        self.faces
            .iter()
            .find(|(f, _)| *f == face)
            .and_then(|(_, r)| r.get(coord.index(self.grid)).copied())
            .ok_or_else(|| Error::Config(format!("no force range for face {face} pixel {coord}")))
    }

    /// Largest sweep force anywhere on `face`.
    pub fn face_max(&self, face: u8) -> Result<f64> {
        self.faces
            .iter()
            .find(|(f, _)| *f == face)
            .map(|(_, r)| r.iter().map(|p| p.1).fold(0.0, f64::max))
            .ok_or_else(|| Error::Config(format!("no force ranges for face {face}")))
    }
}

/// Inward travel (mm) of each magnet of `face` under the given indentations,
/// before clamping.
pub fn raw_face_displacements(
    config: &ObjectConfig,
    params: &DeformationParams,
    face: u8,
    indentations: &[Indentation],
) -> Result<Vec<f64>> {
    let face_cfg = config.face(face)?;
    let two_sigma_sq = 2.0 * params.kernel_sigma * params.kernel_sigma;
    let mut out = vec![0.0; face_cfg.magnets.len()];
    for ind in indentations.iter().filter(|i| i.face == face) {
        let p = pixel_to_point(config, face, ind.coord)?;
        for (slot, m) in out.iter_mut().zip(&face_cfg.magnets) {
            let dx = m.rest_position.x - p.x;
            let dy = m.rest_position.y - p.y;
            *slot += ind.depth * (-(dx * dx + dy * dy) / two_sigma_sq).exp();
        }
    }
    Ok(out)
}

/// Magnet states under a set of depth-specified indentations.
pub fn displace_by_depth(
    config: &ObjectConfig,
    params: &DeformationParams,
    indentations: &[Indentation],
) -> Result<DipoleSet> {
    let mut set = DipoleSet::rest(config);
    for face_cfg in &config.faces {
        let face = face_cfg.face_index;
        if !indentations.iter().any(|i| i.face == face) {
            continue;
        }
        let travel = raw_face_displacements(config, params, face, indentations)?;
        let normal = face_cfg.frame.normal();
        let dipoles = &mut set
            .face_mut(face)
            .expect("rest set covers every configured face")
            .dipoles;
        for (d, t) in dipoles.iter_mut().zip(travel) {
            d.position -= normal * t.min(params.max_depth);
        }
    }
    Ok(set)
}

/// Magnet states under force-specified contacts.
pub fn magnet_displacements(
    contacts: &ContactSpec,
    config: &ObjectConfig,
    params: &DeformationParams,
) -> Result<DipoleSet> {
    contacts.validate(config)?;
    let indentations = contacts
        .contacts
        .iter()
        .map(|c| {
            Ok(Indentation {
                face: c.face,
                coord: c.coord,
                depth: depth_for_force(c.force, c.face, c.coord, params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    displace_by_depth(config, params, &indentations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_config;
    use crate::magnetics::{ideal_frame, FieldScope};
    use proptest::prelude::*;

    fn plain(k1: f64, k3: f64) -> (ObjectConfig, DeformationParams) {
        let c = default_config();
        let mut p = DeformationParams::uniform(&c);
        p.k1 = k1;
        p.k3 = k3;
        (c, p)
    }

    const G: GridCoord = GridCoord::new(4, 6);

    #[test]
    fn force_polynomial() {
        let (_, p) = plain(4.0, 0.5);
        assert_eq!(force_from_depth(0.0, 1, G, &p).unwrap(), 0.0);
        // 4 * 2 + 0.5 * 8
        assert!((force_from_depth(2.0, 1, G, &p).unwrap() - 12.0).abs() < 1e-12);
        assert!(force_from_depth(3.5, 1, G, &p).is_err());
        assert!(force_from_depth(-0.1, 1, G, &p).is_err());
    }

    #[test]
    fn doubling_multiplier_doubles_force() {
        let (_, mut p) = plain(4.0, 0.5);
        let f1 = force_from_depth(1.3, 2, G, &p).unwrap();
        p.stiffness_map[1].multipliers[G.index(10)] = 2.0;
        let f2 = force_from_depth(1.3, 2, G, &p).unwrap();
        assert!((f2 - 2.0 * f1).abs() < 1e-12);
    }

    #[test]
    fn inverse_by_bisection() {
        let (_, p) = plain(4.0, 0.5);
        assert_eq!(depth_for_force(0.0, 1, G, &p).unwrap(), 0.0);
        assert!((depth_for_force(12.0, 1, G, &p).unwrap() - 2.0).abs() < 1e-9);
        for d in [0.1, 1.0, p.max_depth] {
            let f = force_from_depth(d, 1, G, &p).unwrap();
            let back = depth_for_force(f, 1, G, &p).unwrap();
            assert!((back - d).abs() < 1e-8, "{d} -> {back}");
            assert!((force_from_depth(back, 1, G, &p).unwrap() - f).abs() <= 1e-9);
        }
        let top = force_from_depth(p.max_depth, 1, G, &p).unwrap();
        assert!(matches!(depth_for_force(top + 0.1, 1, G, &p), Err(Error::Range { .. })));
    }

    #[test]
    fn force_ranges_follow_stiffness() {
        let c = default_config();
        let sweep = DepthRange::default();
        let u = DeformationParams::uniform(&c);
        let a = location_force_range(1, GridCoord::new(1, 1), &u, sweep).unwrap();
        let b = location_force_range(1, GridCoord::new(5, 7), &u, sweep).unwrap();
        assert_eq!(a, b);

        let mut p = DeformationParams::uniform(&c);
        let corner = GridCoord::new(1, 1);
        let edge = GridCoord::new(1, 5);
        p.stiffness_map[0].multipliers[corner.index(10)] = 1.5;
        let rc = location_force_range(1, corner, &p, sweep).unwrap();
        let re = location_force_range(1, edge, &p, sweep).unwrap();
        assert!((rc.1 - 1.5 * re.1).abs() < 1e-12);

        let d = DeformationParams::default_for(&c);
        let map = ForceRangeMap::compute(&c, &d, sweep).unwrap();
        let maxes: Vec<f64> = map.faces[0].1.iter().map(|r| r.1).collect();
        let lo = maxes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = maxes.iter().cloned().fold(0.0, f64::max);
        assert!(hi > lo * 1.3);
        assert!(hi < 20.0 && lo > 10.0);
    }

    #[test]
    fn empty_contacts_leave_magnets_at_rest() {
        let c = default_config();
        let p = DeformationParams::default_for(&c);
        let set = magnet_displacements(&ContactSpec::default(), &c, &p).unwrap();
        assert_eq!(set, DipoleSet::rest(&c));
    }

    #[test]
    fn kernel_peak_and_tail() {
        let c = default_config();
        let p = DeformationParams::default_for(&c);
        // centre magnet sits under the continuous grid centre; use a custom
        // geometry with the centre magnet under pixel (5,5).
        let mut c2 = c.clone();
        let centre = pixel_to_point(&c2, 1, GridCoord::new(5, 5)).unwrap();
        c2.faces[0].magnets[0].rest_position.x = centre.x;
        c2.faces[0].magnets[0].rest_position.y = centre.y;
        let t = raw_face_displacements(
            &c2,
            &p,
            1,
            &[Indentation { face: 1, coord: GridCoord::new(5, 5), depth: 1.7 }],
        )
        .unwrap();
        assert_eq!(t[0], 1.7);

        let t = raw_face_displacements(
            &c,
            &p,
            1,
            &[Indentation { face: 1, coord: GridCoord::new(1, 1), depth: 1.0 }],
        )
        .unwrap();
        let r = (2.0f64 * 11.7 * 11.7).sqrt();
        assert!((r - 16.546).abs() < 1e-3);
        let expect = (-r * r / 72.0).exp();
        assert!((t[0] - expect).abs() < 1e-15);
        assert!((t[0] - 0.0223).abs() < 5e-5);
    }

    #[test]
    fn other_faces_untouched_and_clamped() {
        let c = default_config();
        let p = DeformationParams::default_for(&c);
        let ind: Vec<Indentation> = [(5, 5), (6, 5), (5, 6)]
            .iter()
            .map(|&(x, y)| Indentation { face: 2, coord: GridCoord::new(x, y), depth: 2.9 })
            .collect();
        let set = displace_by_depth(&c, &p, &ind).unwrap();
        let rest = DipoleSet::rest(&c);
        for face in [1, 3, 4, 5] {
            assert_eq!(set.face(face), rest.face(face));
        }
        let f2 = c.face(2).unwrap();
        for (d, r) in set.face(2).unwrap().dipoles.iter().zip(&rest.face(2).unwrap().dipoles) {
            let travel = f2.frame.normal().dot(&(r.position - d.position));
            assert!(travel <= p.max_depth + 1e-12 && travel >= 0.0);
            assert_eq!(d.moment, r.moment);
        }
    }

    #[test]
    fn zero_force_contact_reads_like_rest() {
        let c = default_config();
        let p = DeformationParams::default_for(&c);
        let spec = ContactSpec::new(vec![Contact { face: 1, coord: GridCoord::new(3, 3), force: 0.0 }]);
        let set = magnet_displacements(&spec, &c, &p).unwrap();
        let rest = DipoleSet::rest(&c);
        for face in 1..=5 {
            assert_eq!(
                ideal_frame(&c, &set, face, FieldScope::AllFaces).unwrap(),
                ideal_frame(&c, &rest, face, FieldScope::AllFaces).unwrap()
            );
        }
    }

    #[test]
    fn too_many_contacts_rejected() {
        let c = default_config();
        let p = DeformationParams::default_for(&c);
        let spec = ContactSpec::new(
            (1..=4)
                .map(|x| Contact { face: 1, coord: GridCoord::new(x, 1), force: 1.0 })
                .collect(),
        );
        assert!(matches!(magnet_displacements(&spec, &c, &p), Err(Error::Usage(_))));
    }

    #[test]
    fn default_params_validate() {
        let c = default_config();
        DeformationParams::default_for(&c).validate(&c).unwrap();
        let mut bad = DeformationParams::default_for(&c);
        bad.max_depth = 9.0;
        assert!(bad.validate(&c).is_err());
    }

    fn coord() -> impl Strategy<Value = GridCoord> {
        (1u8..=10, 1u8..=10).prop_map(|(x, y)| GridCoord::new(x, y))
    }

    proptest! {
        #[test]
        fn force_is_strictly_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0, g in coord(), face in 1u8..=5) {
            prop_assume!(a < b);
            let c = default_config();
            let p = DeformationParams::default_for(&c);
            prop_assert!(force_from_depth(a, face, g, &p).unwrap() < force_from_depth(b, face, g, &p).unwrap());
        }

        #[test]
        fn displacements_superpose(g1 in coord(), g2 in coord(), d1 in 0.0f64..0.3, d2 in 0.0f64..0.3) {
            let c = default_config();
            let p = DeformationParams::default_for(&c);
            let i1 = Indentation { face: 3, coord: g1, depth: d1 };
            let i2 = Indentation { face: 3, coord: g2, depth: d2 };
            let a = raw_face_displacements(&c, &p, 3, &[i1]).unwrap();
            let b = raw_face_displacements(&c, &p, 3, &[i2]).unwrap();
            let ab = raw_face_displacements(&c, &p, 3, &[i1, i2]).unwrap();
            for k in 0..5 {
                prop_assert_eq!(ab[k], a[k] + b[k]);
            }
        }

        #[test]
        fn clamp_holds_for_adversarial_stacks(gs in proptest::collection::vec(coord(), 3), d in 2.0f64..3.0) {
            let c = default_config();
            let p = DeformationParams::default_for(&c);
            let ind: Vec<_> = gs.iter().map(|&g| Indentation { face: 1, coord: g, depth: d }).collect();
            let set = displace_by_depth(&c, &p, &ind).unwrap();
            let rest = DipoleSet::rest(&c);
            let n = c.face(1).unwrap().frame.normal();
            for (a, r) in set.face(1).unwrap().dipoles.iter().zip(&rest.face(1).unwrap().dipoles) {
                prop_assert!(n.dot(&(r.position - a.position)) <= p.max_depth + 1e-12);
            }
        }
    }
}
