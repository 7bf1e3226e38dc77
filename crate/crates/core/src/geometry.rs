//! Pinhole projection, depth buffers, and ground-truth box derivation.
//!
//! The camera sits `camera_height` meters above the ego's ground point and
//! looks along the ego heading with zero pitch and roll. Camera axes: `Z`
//! forward, `X` right, `Y` down, so a point projects to
//! `(cx + f·X/Z, cy + f·Y/Z)`.
//!
//! Agents are rasterized as the axis-aligned hull of their projected cuboid at
//! a constant depth, the forward distance of the cuboid's nearest point. A
//! buffer pixel is covered by a box when the pixel center lies inside it.

use crate::error::{Error, Result};
use crate::scene::{AgentKind, AgentNode, CameraModel, Pose, SceneGraph};
use serde::{Deserialize, Serialize};

/// Points closer than this to the image plane are clipped away (meters).
pub const NEAR_PLANE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Box2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Box2D {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::Invalid(format!("degenerate box {b:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max].iter().all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &Box2D) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &Box2D) -> f64 {
        let inter = self.intersection(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Clip to `[0, width] × [0, height]`; `None` if nothing remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<Box2D> {
        let b = Box2D {
            x_min: self.x_min.max(0.0),
            y_min: self.y_min.max(0.0),
            x_max: self.x_max.min(width),
            y_max: self.y_max.min(height),
        };
        b.is_valid().then_some(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub bbox: Box2D,
    /// Forward distance from the camera to the nearest visible point (meters).
    pub closest_depth: f64,
}

/// World-to-camera transform for a leveled camera mounted on the ego.
#[derive(Debug, Clone, Copy)]
struct CameraFrame {
    origin: [f64; 3],
    forward: [f64; 3],
    right: [f64; 3],
}

impl CameraFrame {
    fn new(ego: &Pose, camera_height: f64) -> Self {
        let (s, c) = ego.yaw.to_radians().sin_cos();
        CameraFrame {
            origin: [ego.x, ego.y, ego.z + camera_height],
            forward: [c, s, 0.0],
            right: [s, -c, 0.0],
        }
    }

    /// Camera coordinates `[X, Y, Z]`.
    fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]];
        let dot = |a: [f64; 3]| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
        [dot(self.right), -d[2], dot(self.forward)]
    }
}

fn cuboid_corners(agent: &AgentNode) -> [[f64; 3]; 8] {
    let p = &agent.pose;
    let [ex, ey, ez] = agent.extent;
    let (sy, cy) = p.yaw.to_radians().sin_cos();
    let (sr, cr) = p.roll.to_radians().sin_cos();
    let heading = [cy, sy, 0.0];
    let lateral = [-sy * cr, cy * cr, sr];
    let up = [sy * sr, -cy * sr, cr];
    let center = [p.x, p.y, p.z + ez];
    let mut out = [[0.0; 3]; 8];
    for (i, corner) in out.iter_mut().enumerate() {
        let a = if i & 1 == 0 { -ex } else { ex };
        let b = if i & 2 == 0 { -ey } else { ey };
        let c = if i & 4 == 0 { -ez } else { ez };
        for k in 0..3 {
            corner[k] = center[k] + a * heading[k] + b * lateral[k] + c * up[k];
        }
    }
    out
}

/// Cuboid edges as corner index pairs (corners differ in exactly one bit).
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn project_with_height(
    camera: &CameraModel,
    ego_pose: &Pose,
    agent: &AgentNode,
    camera_height: f64,
) -> Result<Option<Projection>> {
    if !(camera.focal > 0.0) || !(camera.image_width > 0.0) || !(camera.image_height > 0.0) {
        return Err(Error::Config(format!("degenerate camera {camera:?}")));
    }
    if agent.extent.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Invalid(format!("agent {} has a non-positive extent", agent.id)));
    }
    let frame = CameraFrame::new(ego_pose, camera_height);
    let corners = cuboid_corners(agent).map(|c| frame.to_camera(c));

    // Visible geometry: corners in front of the near plane plus the points
    // where edges cross it.
    let mut pts: Vec<[f64; 3]> = corners.iter().copied().filter(|c| c[2] >= NEAR_PLANE).collect();
    for &(i, j) in &EDGES {
        let (a, b) = (corners[i], corners[j]);
        if (a[2] < NEAR_PLANE) != (b[2] < NEAR_PLANE) {
            let t = (NEAR_PLANE - a[2]) / (b[2] - a[2]);
            pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), NEAR_PLANE]);
        }
    }
    if pts.is_empty() {
        return Ok(None);
    }
    let mut hull = Box2D {
        x_min: f64::INFINITY,
        y_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    let mut closest = f64::INFINITY;
    for [x, y, z] in pts {
        let u = camera.principal_x + camera.focal * x / z;
        let v = camera.principal_y + camera.focal * y / z;
        hull.x_min = hull.x_min.min(u);
        hull.x_max = hull.x_max.max(u);
        hull.y_min = hull.y_min.min(v);
        hull.y_max = hull.y_max.max(v);
        closest = closest.min(z);
    }
    Ok(hull
        .clip(camera.image_width, camera.image_height)
        .map(|bbox| Projection {
            bbox,
            closest_depth: closest,
        }))
}

/// Project `agent` through the default sensor rig mounted on `ego_pose`.
pub fn project_agent(camera: &CameraModel, ego_pose: &Pose, agent: &AgentNode) -> Result<Option<Projection>> {
    project_with_height(camera, ego_pose, agent, SensorConfig::default().camera_height)
}

/// Thresholds for keeping a projected vehicle as a ground-truth label, stated
/// at full virtual resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    /// Minimum box height in pixels (inclusive).
    pub min_height: f64,
    /// Maximum closest-point depth in meters (inclusive).
    pub max_depth: f64,
    /// Boxes with an occluded fraction at or above this are dropped.
    pub max_occluded: f64,
    /// Minimum number of unoccluded pixels (inclusive).
    pub min_visible: u32,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_height: 30.0,
            max_depth: 250.0,
            max_occluded: 0.8,
            min_visible: 1300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVerdict {
    Keep,
    TooShort,
    TooFar,
    Occluded,
    TooFewVisible,
}

impl FilterThresholds {
    /// Visible-pixel threshold for a buffer downscaled by `scale`.
    pub fn min_visible_at(&self, scale: u32) -> u32 {
        let s2 = f64::from(scale * scale);
        (f64::from(self.min_visible) / s2).ceil() as u32
    }

    /// Apply the four rules in order. `visible` is counted in buffer pixels
    /// at `scale`; `height` is in full-resolution pixels.
    pub fn judge(&self, height: f64, depth: f64, occluded_fraction: f64, visible: u32, scale: u32) -> FilterVerdict {
        if height < self.min_height {
            FilterVerdict::TooShort
        } else if depth > self.max_depth {
            FilterVerdict::TooFar
        } else if occluded_fraction >= self.max_occluded {
            FilterVerdict::Occluded
        } else if visible < self.min_visible_at(scale) {
            FilterVerdict::TooFewVisible
        } else {
            FilterVerdict::Keep
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub camera_height: f64,
    /// Downscale factor of the depth buffer; 1 is full resolution.
    pub scale: u32,
    pub filters: FilterThresholds,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            camera_height: 1.6,
            scale: 1,
            filters: FilterThresholds::default(),
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 || !(self.camera_height.is_finite()) {
            return Err(Error::Config("sensor scale must be ≥ 1 and camera height finite".into()));
        }
        Ok(())
    }

    pub fn project(&self, camera: &CameraModel, ego_pose: &Pose, agent: &AgentNode) -> Result<Option<Projection>> {
        project_with_height(camera, ego_pose, agent, self.camera_height)
    }
}

/// Per-pixel nearest depth; `+inf` where nothing is drawn.
///
/// A buffer may cover only a window of the full image: `origin` is the
/// buffer-pixel position of its top-left cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    width: usize,
    height: usize,
    scale: u32,
    origin: (usize, usize),
    depth: Vec<f64>,
}

/// Buffer-pixel index range `[lo, hi)` whose centers fall in `[a, b)`.
fn covered_range(a: f64, b: f64, scale: f64) -> (i64, i64) {
    let lo = (a / scale - 0.5).ceil() as i64;
    let hi = (b / scale - 0.5).ceil() as i64;
    (lo, hi)
}

impl DepthBuffer {
    /// Empty buffer for a `image_width × image_height` image at `scale`.
    pub fn new(image_width: f64, image_height: f64, scale: u32) -> Self {
        let width = (image_width / f64::from(scale)).ceil() as usize;
        let height = (image_height / f64::from(scale)).ceil() as usize;
        DepthBuffer {
            width,
            height,
            scale,
            origin: (0, 0),
            depth: vec![f64::INFINITY; width * height],
        }
    }

    /// Buffer restricted to the pixels a box covers.
    fn window(bbox: &Box2D, scale: u32) -> Self {
        let s = f64::from(scale);
        let (x0, x1) = covered_range(bbox.x_min, bbox.x_max, s);
        let (y0, y1) = covered_range(bbox.y_min, bbox.y_max, s);
        let (x0, y0) = (x0.max(0) as usize, y0.max(0) as usize);
        let width = (x1.max(0) as usize).saturating_sub(x0);
        let height = (y1.max(0) as usize).saturating_sub(y0);
        DepthBuffer {
            width,
            height,
            scale,
            origin: (x0, y0),
            depth: vec![f64::INFINITY; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Depth at buffer pixel `(x, y)` in full-buffer coordinates.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let (lx, ly) = (x.checked_sub(self.origin.0)?, y.checked_sub(self.origin.1)?);
        (lx < self.width && ly < self.height).then(|| self.depth[ly * self.width + lx])
    }

    pub fn pixels(&self) -> &[f64] {
        &self.depth
    }

    /// Local index ranges of the cells whose centers lie inside `bbox`.
    fn cells(&self, bbox: &Box2D) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let s = f64::from(self.scale);
        let clamp = |(lo, hi): (i64, i64), origin: usize, len: usize| {
            let lo = (lo - origin as i64).clamp(0, len as i64) as usize;
            let hi = (hi - origin as i64).clamp(0, len as i64) as usize;
            lo..hi.max(lo)
        };
        (
            clamp(covered_range(bbox.x_min, bbox.x_max, s), self.origin.0, self.width),
            clamp(covered_range(bbox.y_min, bbox.y_max, s), self.origin.1, self.height),
        )
    }

    /// Draw `bbox` at constant `depth`, keeping the per-pixel minimum.
    pub fn fill_box(&mut self, bbox: &Box2D, depth: f64) {
        let (xs, ys) = self.cells(bbox);
        for y in ys {
            let row = &mut self.depth[y * self.width..(y + 1) * self.width];
            for cell in &mut row[xs.clone()] {
                if depth < *cell {
                    *cell = depth;
                }
            }
        }
    }

    /// Occlusion statistics of a box whose nearest point is at `depth`:
    /// `(occluded_fraction, visible_count, box_pixel_count)`. A pixel is
    /// occluded when the buffer holds something strictly closer than `depth`.
    pub fn occlusion(&self, bbox: &Box2D, depth: f64) -> (f64, u32, u32) {
        let (xs, ys) = self.cells(bbox);
        let total = (xs.len() * ys.len()) as u32;
        let mut occluded = 0u32;
        for y in ys {
            let row = &self.depth[y * self.width..(y + 1) * self.width];
            occluded += row[xs.clone()].iter().filter(|&&d| d < depth).count() as u32;
        }
        let fraction = if total == 0 { 1.0 } else { f64::from(occluded) / f64::from(total) };
        (fraction, total - occluded, total)
    }
}

/// A projected non-ego agent.
#[derive(Debug, Clone, Copy)]
struct Drawn {
    id: u32,
    kind: AgentKind,
    proj: Projection,
}

fn project_all(scene: &SceneGraph, sensor: &SensorConfig) -> Result<Vec<Drawn>> {
    let mut out = Vec::new();
    for a in &scene.agents {
        if let Some(proj) = sensor.project(&scene.camera, &scene.ego.pose, a)? {
            out.push(Drawn {
                id: a.id,
                kind: a.kind,
                proj,
            });
        }
    }
    Ok(out)
}

/// Full-image depth buffer of `scene` at the sensor's scale.
pub fn build_depth_buffer_with(scene: &SceneGraph, sensor: &SensorConfig) -> Result<DepthBuffer> {
    sensor.validate()?;
    let mut buf = DepthBuffer::new(scene.camera.image_width, scene.camera.image_height, sensor.scale);
    for d in project_all(scene, sensor)? {
        buf.fill_box(&d.proj.bbox, d.proj.closest_depth);
    }
    Ok(buf)
}

pub fn build_depth_buffer(scene: &SceneGraph) -> Result<DepthBuffer> {
    build_depth_buffer_with(scene, &SensorConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub agent_id: u32,
    pub bbox: Box2D,
    pub closest_depth: f64,
    /// Unoccluded pixels, counted at the buffer scale.
    pub visible_pixels: u32,
    pub occluded_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub scene_id: u64,
    /// Sorted by agent id.
    pub labels: Vec<Label>,
}

impl LabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, agent_id: u32) -> Option<&Label> {
        self.labels.iter().find(|l| l.agent_id == agent_id)
    }
}

/// Ground-truth vehicle boxes that survive the four filters.
pub fn derive_labels_with(scene: &SceneGraph, sensor: &SensorConfig) -> Result<LabelSet> {
    sensor.validate()?;
    let drawn = project_all(scene, sensor)?;
    let mut labels = Vec::new();
    for d in drawn.iter().filter(|d| d.kind == AgentKind::Vehicle) {
        let Projection { bbox, closest_depth } = d.proj;
        let f = &sensor.filters;
        // cheap rules first; occlusion needs rasterization
        if bbox.height() < f.min_height || closest_depth > f.max_depth {
            continue;
        }
        let mut window = DepthBuffer::window(&bbox, sensor.scale);
        for other in &drawn {
            if other.proj.bbox.intersection(&bbox) > 0.0 {
                window.fill_box(&other.proj.bbox, other.proj.closest_depth);
            }
        }
        let (occluded_fraction, visible, _) = window.occlusion(&bbox, closest_depth);
        if f.judge(bbox.height(), closest_depth, occluded_fraction, visible, sensor.scale) == FilterVerdict::Keep {
            labels.push(Label {
                agent_id: d.id,
                bbox,
                closest_depth,
                visible_pixels: visible,
                occluded_fraction,
            });
        }
    }
    labels.sort_by_key(|l| l.agent_id);
    Ok(LabelSet {
        scene_id: scene.id,
        labels,
    })
}

pub fn derive_labels(scene: &SceneGraph) -> Result<LabelSet> {
    derive_labels_with(scene, &SensorConfig::default())
}
