//! Readers and writers for KITTI odometry and SemanticKITTI files.
//!
//! - velodyne `.bin`: little-endian `f32` quadruples `(x, y, z, reflectance)`
//! - `.label`: little-endian `u32` per point, lower 16 bits semantic id
//! - `poses.txt`: 12 floats per line, row-major 3×4 camera-frame pose
//! - `calib.txt`: a `Tr:` line with the 3×4 LiDAR→camera transform

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::point::{remap_label, LabeledCloud, SemanticClass, SemanticPoint};

const POINT_BYTES: usize = 16;
const LABEL_BYTES: usize = 4;

/// Rigid transform with orthonormal rotation, expressed in the LiDAR frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// From 12 row-major values of a 3×4 matrix, without orthonormalizing.
    pub fn from_row_major(v: &[f64; 12]) -> Self {
        Self {
            rotation: Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            translation: Vector3::new(v[3], v[7], v[11]),
        }
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    /// Planar pose: rotation `yaw_deg` about z, translation `(x, y, z)`.
    pub fn from_planar(x: f64, y: f64, z: f64, yaw_deg: f64) -> Self {
        let (s, c) = yaw_deg.to_radians().sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        Self {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn compose(&self, other: &PoseSE3) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Projects the rotation block onto the nearest rotation matrix.
    pub fn orthonormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut rotation = u * v_t;
        if rotation.determinant() < 0.0 {
            let mut fix = Matrix3::identity();
            fix[(2, 2)] = -1.0;
            rotation = u * fix * v_t;
        }
        Self {
            rotation,
            translation: self.translation,
        }
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        (gram - Matrix3::identity()).amax() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    pub fn planar_distance(&self, other: &PoseSE3) -> f64 {
        let d = self.translation - other.translation;
        d[0].hypot(d[1])
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn frame_id_from_path(path: &Path) -> u32 {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// Decodes a velodyne scan buffer. Reflectance is discarded.
pub fn decode_scan(bytes: &[u8], path: &Path) -> Result<Vec<SemanticPoint>> {
    if !bytes.len().is_multiple_of(POINT_BYTES) {
        return Err(Error::MalformedFile {
            path: path.to_path_buf(),
            offset: (bytes.len() - bytes.len() % POINT_BYTES) as u64,
            reason: format!("size {} is not a multiple of {POINT_BYTES}", bytes.len()),
        });
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    Ok(bytes
        .chunks_exact(POINT_BYTES)
        .map(|c| SemanticPoint::new(f(&c[0..4]), f(&c[4..8]), f(&c[8..12]), SemanticClass::Unlabeled))
        .collect())
}

pub fn load_scan(path: impl AsRef<Path>) -> Result<LabeledCloud> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let points = decode_scan(&bytes, path)?;
    Ok(LabeledCloud::new(points, frame_id_from_path(path)))
}

/// Attaches remapped labels positionally to `cloud`.
pub fn load_labels(path: impl AsRef<Path>, cloud: LabeledCloud) -> Result<LabeledCloud> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if !bytes.len().is_multiple_of(LABEL_BYTES) {
        return Err(Error::MalformedFile {
            path: path.to_path_buf(),
            offset: (bytes.len() - bytes.len() % LABEL_BYTES) as u64,
            reason: format!("size {} is not a multiple of {LABEL_BYTES}", bytes.len()),
        });
    }
    let count = bytes.len() / LABEL_BYTES;
    if count != cloud.len() {
        return Err(Error::LabelMismatch {
            labels: count,
            points: cloud.len(),
        });
    }
    let mut cloud = cloud;
    for (p, b) in cloud.points.iter_mut().zip(bytes.chunks_exact(LABEL_BYTES)) {
        p.label = remap_label(u32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    }
    Ok(cloud)
}

/// Writes `cloud` as a velodyne scan with zero reflectance. Coordinates are
/// stored as `f32`.
pub fn write_scan(path: impl AsRef<Path>, cloud: &LabeledCloud) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in cloud.iter() {
        for v in [p.x as f32, p.y as f32, p.z as f32, 0.0f32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes each point's canonical raw SemanticKITTI id.
pub fn write_labels(path: impl AsRef<Path>, cloud: &LabeledCloud) -> Result<()> {
    let path = path.as_ref();
    let buf: Vec<u8> = cloud.iter().flat_map(|p| p.label.raw_id().to_le_bytes()).collect();
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn parse_floats(tokens: &[&str], path: &Path, line: usize) -> Result<[f64; 12]> {
    if tokens.len() != 12 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("expected 12 values, found {}", tokens.len()),
        });
    }
    let mut out = [0.0; 12];
    for (o, t) in out.iter_mut().zip(tokens) {
        *o = t.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("non-numeric token `{t}`"),
        })?;
    }
    Ok(out)
}

/// Parses camera-frame poses, one 3×4 row-major matrix per non-empty line.
pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<PoseSE3>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let tokens: Vec<&str> = l.split_whitespace().collect();
            parse_floats(&tokens, path, i + 1).map(|v| PoseSE3::from_row_major(&v))
        })
        .collect()
}

/// Extracts the `Tr:` LiDAR→camera transform from calibration text.
pub fn parse_calib(text: &str, path: &Path) -> Result<PoseSE3> {
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim_start().strip_prefix("Tr:") {
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            return parse_floats(&tokens, path, i + 1).map(|v| PoseSE3::from_row_major(&v));
        }
    }
    Err(Error::Calib(format!("{}: missing `Tr:` line", path.display())))
}

/// Converts camera-frame poses to the LiDAR frame: `Tr⁻¹ · T_cam · Tr`.
pub fn to_lidar_frame(cam_poses: &[PoseSE3], tr: &PoseSE3) -> Vec<PoseSE3> {
    let tr_inv = tr.inverse();
    cam_poses
        .iter()
        .map(|t| tr_inv.compose(t).compose(tr).orthonormalized())
        .collect()
}

pub fn load_poses(poses_path: impl AsRef<Path>, calib_path: impl AsRef<Path>) -> Result<Vec<PoseSE3>> {
    let (poses_path, calib_path) = (poses_path.as_ref(), calib_path.as_ref());
    let calib_text = fs::read_to_string(calib_path).map_err(|e| Error::io(calib_path, e))?;
    let tr = parse_calib(&calib_text, calib_path)?;
    let text = fs::read_to_string(poses_path).map_err(|e| Error::io(poses_path, e))?;
    let cam = parse_poses(&text, poses_path)?;
    Ok(to_lidar_frame(&cam, &tr))
}

/// Writes camera-frame poses in the `poses.txt` format.
pub fn write_poses(path: impl AsRef<Path>, poses: &[PoseSE3]) -> Result<()> {
    let path = path.as_ref();
    let text: String = poses
        .iter()
        .map(|p| {
            let v = p.to_row_major();
            let fields: Vec<String> = v.iter().map(|x| format!("{x:.9e}")).collect();
            fields.join(" ") + "\n"
        })
        .collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a `calib.txt` containing only the `Tr:` line.
pub fn write_calib(path: impl AsRef<Path>, tr: &PoseSE3) -> Result<()> {
    let path = path.as_ref();
    let fields: Vec<String> = tr.to_row_major().iter().map(|x| format!("{x:.9e}")).collect();
    fs::write(path, format!("Tr: {}\n", fields.join(" "))).map_err(|e| Error::io(path, e))
}

/// File listing of one sequence in the SemanticKITTI layout
/// (`sequences/NN/{velodyne,labels}/NNNNNN.*`, `poses.txt`, `calib.txt`).
#[derive(Debug, Clone)]
pub struct SequenceIndex {
    pub scans: Vec<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub poses: Vec<PoseSE3>,
}

impl SequenceIndex {
    /// Indexes `root/sequences/<sequence>`. Poses are read from the sequence's
    /// `poses.txt`, falling back to `root/poses/<sequence>.txt`.
    pub fn open(root: impl AsRef<Path>, sequence: &str) -> Result<Self> {
        let root = root.as_ref();
        let seq_dir = root.join("sequences").join(sequence);
        let scans = list_sorted(&seq_dir.join("velodyne"), "bin")?;
        let labels = list_sorted(&seq_dir.join("labels"), "label")?;
        let mut poses_path = seq_dir.join("poses.txt");
        if !poses_path.exists() {
            poses_path = root.join("poses").join(format!("{sequence}.txt"));
        }
        let poses = load_poses(&poses_path, seq_dir.join("calib.txt"))?;
        if scans.len() != labels.len() || scans.len() != poses.len() {
            return Err(Error::Shape(format!(
                "sequence {sequence}: {} scans, {} label files, {} poses",
                scans.len(),
                labels.len(),
                poses.len()
            )));
        }
        for (i, p) in scans.iter().enumerate() {
            if frame_id_from_path(p) as usize != i {
                return Err(Error::Shape(format!(
                    "sequence {sequence}: frame ids are not consecutive at {}",
                    p.display()
                )));
            }
        }
        Ok(Self { scans, labels, poses })
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    pub fn load_frame(&self, index: usize) -> Result<LabeledCloud> {
        let cloud = load_scan(&self.scans[index])?;
        load_labels(&self.labels[index], cloud)
    }
}

fn list_sorted(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    out.sort();
    Ok(out)
}
