//! Procedural jaw phantoms with exact instance ground truth.
//!
//! Teeth are superellipse prisms along a parabolic dental arch: a domed
//! crown of constant cross-section followed by a tapering root (two lobes
//! for premolars and molars). Crown tips of each jaw lie on a common
//! occlusal line, which is what the ground-truth poses mark. The scene is
//! rasterized after an optional tilt about the x axis through the volume
//! centre.
//!
//! World axes: `x` runs left-right, `y` anterior-posterior (front is `+y`)
//! and `z` is vertical with the upper jaw at `+z`.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::standardize_crop_nearest;
use crate::detector::{assign_group, dilate, Box3, ToothGroup};
use crate::distance::{regression_target, DistanceMap, DEFAULT_D_MAX_VOX};
use crate::error::bail;
use crate::geometry::{mat_vec, rot_x, sub, Vec3};
use crate::pose::{label_boxes, Jaw, PoseEstimate};
use crate::rng;
use crate::volume::{GridGeometry, LabelMap, Volume};
use crate::Result;

pub const AIR: f32 = 0.0;
pub const BONE: f32 = 0.4;
pub const TOOTH: f32 = 0.7;

/// Cross-section exponent of the superellipse.
pub const SUPERELLIPSE_P: f64 = 2.5;
/// Dome height as a fraction of the crown height.
pub const DOME_FRAC: f64 = 0.35;
/// Root cross-section scale at the neck and at the apex.
pub const ROOT_NECK: f64 = 0.75;
pub const ROOT_APEX: f64 = 0.35;

/// Nominal dimensions (mm) by FDI position 1..=8.
#[derive(Debug, Clone, PartialEq)]
pub struct ToothSizes {
    pub mesiodistal: [f64; 8],
    pub buccolingual: [f64; 8],
    pub crown_height: [f64; 8],
    pub root_length: [f64; 8],
}

impl Default for ToothSizes {
    fn default() -> Self {
        Self {
            mesiodistal: [4.2, 3.6, 4.0, 3.6, 3.6, 5.0, 4.6, 4.4],
            buccolingual: [3.4, 3.2, 4.0, 4.2, 4.4, 5.2, 5.0, 4.8],
            crown_height: [4.5, 4.2, 4.8, 4.0, 3.8, 3.6, 3.4, 3.2],
            root_length: [6.0, 5.8, 6.6, 6.2, 6.0, 6.0, 5.8, 5.4],
        }
    }
}

/// Arch centreline `y = front_y - curvature (x - center_x)^2` in the
/// occlusal plane `z = occlusal_z`; the jaws sit `gap` apart around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchSpec {
    pub center_x_mm: f64,
    pub front_y_mm: f64,
    pub curvature: f64,
    pub occlusal_z_mm: f64,
    pub jaw_gap_mm: f64,
    pub tooth_gap_mm: f64,
    pub bone_radius_mm: f64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            center_x_mm: 32.0,
            front_y_mm: 46.0,
            curvature: 0.065,
            occlusal_z_mm: 24.0,
            jaw_gap_mm: 1.0,
            tooth_gap_mm: 0.3,
            bone_radius_mm: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: Vec3,
    pub teeth_per_jaw: usize,
    pub arch: ArchSpec,
    pub sizes: ToothSizes,
    /// Uniform relative jitter applied per tooth to every dimension.
    pub size_jitter: f64,
    pub tilt_deg: f64,
    pub missing: BTreeSet<u8>,
    pub metal: BTreeSet<u8>,
    pub noise_sigma: f64,
    /// Streak amplitude in units of `noise_sigma`.
    pub streak_gain: f64,
    pub streak_decay_mm: f64,
    pub streak_rays: u32,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [256, 256, 192],
            spacing_mm: [0.25; 3],
            teeth_per_jaw: 14,
            arch: ArchSpec::default(),
            sizes: ToothSizes::default(),
            size_jitter: 0.03,
            tilt_deg: 0.0,
            missing: BTreeSet::new(),
            metal: BTreeSet::new(),
            noise_sigma: 0.02,
            streak_gain: 10.0,
            streak_decay_mm: 6.0,
            streak_rays: 8,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 64) {
            bail!(InvalidArgument, "phantom dims must be >= 64 per axis, got {:?}", self.dims);
        }
        if self.teeth_per_jaw < 2 || self.teeth_per_jaw > 16 || self.teeth_per_jaw % 2 != 0 {
            bail!(InvalidArgument, "teeth_per_jaw must be even and in 2..=16, got {}", self.teeth_per_jaw);
        }
        if !(0.0..0.5).contains(&self.size_jitter) || !(self.noise_sigma >= 0.0) {
            bail!(InvalidArgument, "size_jitter must be in [0, 0.5) and noise_sigma >= 0");
        }
        if !(self.tilt_deg.abs() < 90.0) {
            bail!(InvalidArgument, "tilt must lie in (-90, 90) degrees, got {}", self.tilt_deg);
        }
        for &id in self.missing.iter().chain(&self.metal) {
            if !fdi_valid(id, self.teeth_per_jaw) {
                bail!(InvalidArgument, "tooth {id} is not placed with {} teeth per jaw", self.teeth_per_jaw);
            }
        }
        if let Some(id) = self.metal.intersection(&self.missing).next() {
            bail!(InvalidArgument, "tooth {id} is both missing and metal");
        }
        Ok(())
    }
}

fn fdi_valid(id: u8, teeth_per_jaw: usize) -> bool {
    let (q, p) = (id / 10, id % 10);
    (1..=4).contains(&q) && p >= 1 && (p as usize) <= teeth_per_jaw / 2
}

pub fn jaw_of(fdi: u8) -> Jaw {
    if fdi / 10 <= 2 {
        Jaw::Upper
    } else {
        Jaw::Lower
    }
}

/// One placed tooth in the untilted scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToothShape {
    pub fdi: u8,
    pub group: ToothGroup,
    pub jaw: Jaw,
    /// Centre of the crown tip in the occlusal plane, untilted (x, y).
    pub center_xy: [f64; 2],
    /// Unit mesiodistal direction in the x-y plane.
    pub tangent: [f64; 2],
    pub mesiodistal: f64,
    pub buccolingual: f64,
    pub crown_height: f64,
    pub root_length: f64,
    pub two_roots: bool,
    pub metal: bool,
    /// z of the crown tip; the tooth grows away from it.
    pub tip_z: f64,
}

impl ToothShape {
    pub fn total_height(&self) -> f64 {
        self.crown_height + self.root_length
    }

    /// Cross-section scale at height `h` above the crown tip.
    pub fn profile(&self, h: f64) -> f64 {
        let dome = DOME_FRAC * self.crown_height;
        if h < 0.0 || h > self.total_height() {
            0.0
        } else if h < dome {
            let t = (dome - h) / dome;
            Float::sqrt(1.0 - t * t)
        } else if h <= self.crown_height {
            1.0
        } else {
            let tau = (h - self.crown_height) / self.root_length;
            ROOT_NECK + (ROOT_APEX - ROOT_NECK) * tau
        }
    }

    fn height_of(&self, z: f64) -> f64 {
        match self.jaw {
            Jaw::Upper => z - self.tip_z,
            Jaw::Lower => self.tip_z - z,
        }
    }

    /// Signed insideness at an untilted point: positive inside, zero on
    /// the surface. Compared across teeth to resolve ownership.
    pub fn insideness(&self, p: Vec3) -> f64 {
        let h = self.height_of(p[2]);
        let s = self.profile(h);
        if s <= 0.0 {
            return -1.0;
        }
        let d = [p[0] - self.center_xy[0], p[1] - self.center_xy[1]];
        let u = d[0] * self.tangent[0] + d[1] * self.tangent[1];
        let v = -d[0] * self.tangent[1] + d[1] * self.tangent[0];
        let a = 0.5 * self.mesiodistal * s;
        let b = 0.5 * self.buccolingual * s;
        if !self.two_roots || h <= self.crown_height {
            return 1.0 - superellipse_radius(u / a, v / b);
        }
        let tau = (h - self.crown_height) / self.root_length;
        let offset = a * (0.15 + 0.5 * tau);
        let al = 0.6 * a;
        let r1 = superellipse_radius((u - offset) / al, v / b);
        let r2 = superellipse_radius((u + offset) / al, v / b);
        1.0 - r1.min(r2)
    }

    pub fn in_crown(&self, p: Vec3) -> bool {
        let h = self.height_of(p[2]);
        (0.0..=self.crown_height).contains(&h) && self.insideness(p) >= 0.0
    }

    /// Untilted axis-aligned bounds, slightly padded.
    fn bounds(&self) -> (Vec3, Vec3) {
        let r = 0.5 * self.mesiodistal.max(self.buccolingual) * core::f64::consts::SQRT_2 + 0.5;
        let (z0, z1) = match self.jaw {
            Jaw::Upper => (self.tip_z, self.tip_z + self.total_height()),
            Jaw::Lower => (self.tip_z - self.total_height(), self.tip_z),
        };
        (
            [self.center_xy[0] - r, self.center_xy[1] - r, z0 - 0.5],
            [self.center_xy[0] + r, self.center_xy[1] + r, z1 + 0.5],
        )
    }
}

fn superellipse_radius(x: f64, y: f64) -> f64 {
    let p = SUPERELLIPSE_P;
    Float::powf(Float::powf(x.abs(), p) + Float::powf(y.abs(), p), 1.0 / p)
}

/// Area of the unit superellipse `|x|^p + |y|^p <= 1`, by quadrature.
pub fn unit_superellipse_area() -> f64 {
    let n = 200_000;
    let p = SUPERELLIPSE_P;
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        acc += Float::powf((1.0 - Float::powf(x, p)).max(0.0), 1.0 / p);
    }
    4.0 * acc * h
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub volume: Volume,
    pub labels: LabelMap,
    /// Tight boxes sorted by FDI id.
    pub boxes: Vec<Box3>,
    /// One pose per jaw, upper first.
    pub poses: Vec<PoseEstimate>,
    pub teeth: Vec<ToothShape>,
}

impl PhantomTruth {
    pub fn boxes_of(&self, jaw: Jaw) -> Vec<Box3> {
        self.boxes.iter().filter(|b| b.tooth_id.map(jaw_of) == Some(jaw)).copied().collect()
    }

    pub fn pose_of(&self, jaw: Jaw) -> Option<PoseEstimate> {
        self.poses.iter().find(|p| p.jaw == jaw).copied()
    }
}

/// Arc-length table of the arch parabola for offsets `0..=max_dx`.
struct Arch {
    spec: ArchSpec,
    dx: f64,
    s: Vec<f64>,
}

impl Arch {
    fn new(spec: ArchSpec, max_dx: f64) -> Self {
        let dx = 1e-3;
        let n = Float::ceil(max_dx / dx) as usize + 1;
        let mut s = Vec::with_capacity(n);
        s.push(0.0);
        for i in 1..n {
            let xm = (i as f64 - 0.5) * dx;
            let slope = 2.0 * spec.curvature * xm;
            s.push(s[i - 1] + dx * Float::sqrt(1.0 + slope * slope));
        }
        Self { spec, dx, s }
    }

    /// Offset from the midline at which the arc length reaches `len`.
    fn offset_at(&self, len: f64) -> Result<f64> {
        let i = self.s.partition_point(|&v| v < len);
        if i >= self.s.len() {
            bail!(InvalidArgument, "dental arch too long for the volume");
        }
        if i == 0 {
            return Ok(0.0);
        }
        let f = (len - self.s[i - 1]) / (self.s[i] - self.s[i - 1]);
        Ok((i as f64 - 1.0 + f) * self.dx)
    }

    fn y(&self, dx: f64) -> f64 {
        self.spec.front_y_mm - self.spec.curvature * dx * dx
    }

    /// Distance from `(x, y)` to the arch, to first order.
    fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.spec.center_x_mm;
        let slope = -2.0 * self.spec.curvature * dx;
        (y - self.y(dx)).abs() / Float::sqrt(1.0 + slope * slope)
    }
}

fn place_teeth(spec: &PhantomSpec, r: &mut rng::StreamRng) -> Result<Vec<ToothShape>> {
    let arch = Arch::new(spec.arch, 64.0);
    let half_gap = 0.5 * spec.arch.jaw_gap_mm;
    let mut out = Vec::new();
    for quadrant in 1..=4u8 {
        let side = if quadrant == 1 || quadrant == 4 { -1.0 } else { 1.0 };
        let jaw = if quadrant <= 2 { Jaw::Upper } else { Jaw::Lower };
        let mut along = 0.5 * spec.arch.tooth_gap_mm;
        for pos in 1..=(spec.teeth_per_jaw / 2) as u8 {
            let i = (pos - 1) as usize;
            let mut jit = || {
                1.0 + if spec.size_jitter > 0.0 { r.random_range(-spec.size_jitter..=spec.size_jitter) } else { 0.0 }
            };
            let md = spec.sizes.mesiodistal[i] * jit();
            let bl = spec.sizes.buccolingual[i] * jit();
            let crown = spec.sizes.crown_height[i] * jit();
            let root = spec.sizes.root_length[i] * jit();
            let centre = along + 0.5 * md;
            along += md + spec.arch.tooth_gap_mm;
            let fdi = quadrant * 10 + pos;
            if spec.missing.contains(&fdi) {
                continue;
            }
            let off = arch.offset_at(centre)?;
            let x = spec.arch.center_x_mm + side * off;
            let slope = -2.0 * spec.arch.curvature * side * off;
            let norm = Float::sqrt(1.0 + slope * slope);
            let metal = spec.metal.contains(&fdi);
            out.push(ToothShape {
                fdi,
                group: assign_group(fdi, metal)?,
                jaw,
                center_xy: [x, arch.y(off)],
                tangent: [1.0 / norm, slope / norm],
                mesiodistal: md,
                buccolingual: bl,
                crown_height: crown,
                root_length: root,
                two_roots: pos >= 4,
                metal,
                tip_z: match jaw {
                    Jaw::Upper => spec.arch.occlusal_z_mm + half_gap,
                    Jaw::Lower => spec.arch.occlusal_z_mm - half_gap,
                },
            });
        }
    }
    out.sort_by_key(|t| t.fdi);
    Ok(out)
}

/// Scene placement: `untilted = centre + R^T (p - centre)`.
struct Tilt {
    centre: Vec3,
    fwd: [[f64; 3]; 3],
    inv: [[f64; 3]; 3],
}

impl Tilt {
    fn new(g: &GridGeometry, deg: f64) -> Self {
        let lo = g.extent_min();
        let hi = g.extent_max();
        let centre = [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]));
        Self { centre, fwd: rot_x(deg), inv: rot_x(-deg) }
    }

    fn untilt(&self, p: Vec3) -> Vec3 {
        let q = mat_vec(&self.inv, sub(p, self.centre));
        [q[0] + self.centre[0], q[1] + self.centre[1], q[2] + self.centre[2]]
    }

    fn tilt(&self, p: Vec3) -> Vec3 {
        let q = mat_vec(&self.fwd, sub(p, self.centre));
        [q[0] + self.centre[0], q[1] + self.centre[1], q[2] + self.centre[2]]
    }
}

fn voxel_range(g: &GridGeometry, lo: Vec3, hi: Vec3) -> Result<([usize; 3], [usize; 3])> {
    let mut a = [0; 3];
    let mut b = [0; 3];
    for ax in 0..3 {
        let first = Float::floor((lo[ax] - g.origin[ax]) / g.spacing[ax]);
        let last = Float::ceil((hi[ax] - g.origin[ax]) / g.spacing[ax]);
        if first < 0.0 || last > (g.dims[ax] - 1) as f64 {
            bail!(InvalidArgument, "phantom tooth does not fit inside the volume");
        }
        a[ax] = first as usize;
        b[ax] = last as usize + 1;
    }
    Ok((a, b))
}

/// Maximum number of voxels inside two teeth at once, relative to the
/// smaller tooth, before generation fails.
pub const OVERLAP_TOLERANCE: f64 = 0.01;

/// Builds a phantom scene. Deterministic in `spec`.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomTruth> {
    spec.validate()?;
    let g = GridGeometry::new(spec.dims, spec.spacing_mm, [0.0; 3])?;
    let mut r = rng::seeded(spec.seed);
    let teeth = place_teeth(spec, &mut r)?;
    let tilt = Tilt::new(&g, spec.tilt_deg);

    let mut labels = LabelMap::filled(g, 0);
    let mut best = vec![f64::NEG_INFINITY; g.len()];
    let mut hits = vec![0u8; g.len()];
    let mut sizes = vec![0usize; teeth.len()];
    let mut ranges = Vec::with_capacity(teeth.len());
    for (n, t) in teeth.iter().enumerate() {
        let (lo, hi) = t.bounds();
        let mut tlo = [f64::INFINITY; 3];
        let mut thi = [f64::NEG_INFINITY; 3];
        for c in 0..8 {
            let p = [
                if c & 1 == 0 { lo[0] } else { hi[0] },
                if c & 2 == 0 { lo[1] } else { hi[1] },
                if c & 4 == 0 { lo[2] } else { hi[2] },
            ];
            let q = tilt.tilt(p);
            for a in 0..3 {
                tlo[a] = tlo[a].min(q[a]);
                thi[a] = thi[a].max(q[a]);
            }
        }
        let (a, b) = voxel_range(&g, tlo, thi)?;
        ranges.push((a, b));
        for k in a[2]..b[2] {
            for j in a[1]..b[1] {
                for i in a[0]..b[0] {
                    let ins = t.insideness(tilt.untilt(g.world(i, j, k)));
                    if ins < 0.0 {
                        continue;
                    }
                    let idx = g.index(i, j, k);
                    sizes[n] += 1;
                    hits[idx] = hits[idx].saturating_add(1);
                    if ins > best[idx] {
                        best[idx] = ins;
                        labels.data_mut()[idx] = t.fdi as u16;
                    }
                }
            }
        }
    }
    for (n, t) in teeth.iter().enumerate() {
        let (a, b) = ranges[n];
        let mut shared = 0usize;
        let mut other_min = usize::MAX;
        for k in a[2]..b[2] {
            for j in a[1]..b[1] {
                for i in a[0]..b[0] {
                    let idx = g.index(i, j, k);
                    if hits[idx] > 1 && labels.data()[idx] == t.fdi as u16 {
                        shared += 1;
                    }
                }
            }
        }
        for (m, _) in teeth.iter().enumerate().filter(|&(m, _)| m != n) {
            other_min = other_min.min(sizes[m]);
        }
        let smaller = sizes[n].min(other_min).max(1);
        if shared as f64 > OVERLAP_TOLERANCE * smaller as f64 {
            bail!(InvalidArgument, "tooth {} overlaps its neighbours in {shared} voxels; arch too tight", t.fdi);
        }
        if sizes[n] == 0 {
            bail!(InvalidArgument, "tooth {} rasterizes to no voxels at this spacing", t.fdi);
        }
    }

    let volume = render(spec, &g, &tilt, &teeth, &labels, &mut r)?;
    let boxes = label_boxes(&labels)
        .into_iter()
        .map(|(id, b)| {
            let t = teeth.iter().find(|t| t.fdi as u16 == id).expect("label of a placed tooth");
            b.with_tooth(t.fdi, t.group)
        })
        .collect();

    let mut poses = Vec::with_capacity(2);
    let ys: Vec<f64> = teeth.iter().map(|t| t.center_xy[1]).collect();
    let ymid =
        0.5 * (ys.iter().cloned().fold(f64::INFINITY, f64::min) + ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    for jaw in [Jaw::Upper, Jaw::Lower] {
        let z = match jaw {
            Jaw::Upper => spec.arch.occlusal_z_mm + 0.5 * spec.arch.jaw_gap_mm,
            Jaw::Lower => spec.arch.occlusal_z_mm - 0.5 * spec.arch.jaw_gap_mm,
        };
        let p = tilt.tilt([spec.arch.center_x_mm, ymid, z]);
        poses.push(PoseEstimate::from_world([p[1], p[2]], spec.tilt_deg, jaw, &g)?);
    }

    Ok(PhantomTruth { volume, labels, boxes, poses, teeth })
}

fn render(
    spec: &PhantomSpec,
    g: &GridGeometry,
    tilt: &Tilt,
    teeth: &[ToothShape],
    labels: &LabelMap,
    r: &mut rng::StreamRng,
) -> Result<Volume> {
    let arch = Arch::new(spec.arch, 64.0);
    let span = teeth.iter().map(|t| (t.center_xy[0] - spec.arch.center_x_mm).abs()).fold(0.0, f64::max) + 2.0;
    let z0 = spec.arch.occlusal_z_mm;
    let half_gap = 0.5 * spec.arch.jaw_gap_mm;
    let min_crown = teeth.iter().map(|t| t.crown_height).fold(f64::INFINITY, f64::min);
    let max_total = teeth.iter().map(|t| t.total_height()).fold(0.0, f64::max);

    let mut v = Volume::filled(*g, AIR);
    let [nx, ny, nz] = g.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = g.index(i, j, k);
                if labels.data()[idx] != 0 {
                    v.data_mut()[idx] = TOOTH;
                    continue;
                }
                let p = tilt.untilt(g.world(i, j, k));
                let h = (p[2] - z0).abs() - half_gap;
                if (p[0] - spec.arch.center_x_mm).abs() <= span
                    && h >= 0.8 * min_crown
                    && h <= max_total + 1.0
                    && arch.distance(p[0], p[1]) <= spec.arch.bone_radius_mm
                {
                    v.data_mut()[idx] = BONE;
                }
            }
        }
    }

    let metal: Vec<&ToothShape> = teeth.iter().filter(|t| t.metal).collect();
    let amp = spec.streak_gain * spec.noise_sigma;
    if amp > 0.0 {
        for t in &metal {
            let centre = tilt.tilt([t.center_xy[0], t.center_xy[1], t.tip_z]);
            let reach = 4.0 * spec.streak_decay_mm;
            let (klo, khi) = crown_slices(g, tilt, t);
            for k in klo..khi {
                for j in 0..ny {
                    for i in 0..nx {
                        let idx = g.index(i, j, k);
                        if labels.data()[idx] == t.fdi as u16 {
                            continue;
                        }
                        let p = g.world(i, j, k);
                        let (dx, dy) = (p[0] - centre[0], p[1] - centre[1]);
                        let rr = Float::sqrt(dx * dx + dy * dy);
                        if rr > reach {
                            continue;
                        }
                        let theta = Float::atan2(dy, dx);
                        let s =
                            amp * Float::cos(spec.streak_rays as f64 * theta) * Float::exp(-rr / spec.streak_decay_mm);
                        v.data_mut()[idx] += s as f32;
                    }
                }
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise_sigma).map_err(|_| crate::Error::InvalidArgument("noise sigma".into()))?;
        for x in v.data_mut() {
            *x += normal.sample(r) as f32;
        }
    }

    if !metal.is_empty() {
        let top = v.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max).max(1.0);
        for t in &metal {
            let (klo, khi) = crown_slices(g, tilt, t);
            for k in klo..khi {
                for j in 0..ny {
                    for i in 0..nx {
                        let idx = g.index(i, j, k);
                        if labels.data()[idx] == t.fdi as u16 && t.in_crown(tilt.untilt(g.world(i, j, k))) {
                            v.data_mut()[idx] = top;
                        }
                    }
                }
            }
        }
    }
    Ok(v)
}

/// Axial slice range covering a tooth's crown after tilting.
fn crown_slices(g: &GridGeometry, tilt: &Tilt, t: &ToothShape) -> (usize, usize) {
    let r = 0.5 * t.mesiodistal.max(t.buccolingual) * core::f64::consts::SQRT_2;
    let z_end = match t.jaw {
        Jaw::Upper => t.tip_z + t.crown_height,
        Jaw::Lower => t.tip_z - t.crown_height,
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &z in &[t.tip_z, z_end] {
        for &dy in &[-r, r] {
            let q = tilt.tilt([t.center_xy[0], t.center_xy[1] + dy, z]);
            lo = lo.min(q[2]);
            hi = hi.max(q[2]);
        }
    }
    let first = Float::floor((lo - g.origin[2]) / g.spacing[2]).max(0.0) as usize;
    let last = (Float::ceil((hi - g.origin[2]) / g.spacing[2]).max(0.0) as usize + 1).min(g.dims[2]);
    (first.min(last), last)
}

/// Distance-regression targets computed straight from labels: each box is
/// dilated by `margin_mm` (clipped to the grid), its label crop resampled
/// to `dims` by nearest neighbour, and the tooth mask turned into a
/// clamped, normalized distance map. Returns the dilated boxes with maps.
pub fn distance_targets_from_labels(
    labels: &LabelMap,
    boxes: &[Box3],
    margin_mm: f64,
    dims: [usize; 3],
    d_max_vox: f64,
) -> Result<Vec<(Box3, DistanceMap)>> {
    let g = labels.geometry();
    let bounds = Box3::new(g.extent_min(), g.extent_max())?;
    let mut out = Vec::with_capacity(boxes.len());
    for b in boxes {
        let Some(id) = b.tooth_id else {
            bail!(InvalidArgument, "target boxes need tooth ids");
        };
        let grown = dilate(b, margin_mm, &bounds)?;
        let crop = standardize_crop_nearest(labels, &grown, dims)?;
        let mask = crop.map(|l| l == id as u16);
        out.push((grown, regression_target(&mask, d_max_vox)?));
    }
    Ok(out)
}

/// Oracle targets for every phantom tooth at the standard crop size with
/// a 2 mm margin.
pub fn oracle_distance_targets(truth: &PhantomTruth) -> Result<Vec<(Box3, DistanceMap)>> {
    distance_targets_from_labels(&truth.labels, &truth.boxes, 2.0, crate::augment::CROP_DIMS, DEFAULT_D_MAX_VOX)
}
