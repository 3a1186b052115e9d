//! Frame-major motion matrices and their conversion to per-frame parameters.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{matrix_to_rot6d, rot6d_to_matrix, BodyError, BodyParams, BodyTemplate, MOTION_DIM, NUM_ARTICULATED, NUM_JOINTS, NUM_SHAPE};
use crate::geometry::so3;

/// `T × 138` motion: row `t` holds the 6D rotations of joints 1..=23.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    data: Vec<f64>,
    frames: usize,
}

impl MotionSequence {
    /// All joints at identity rotation.
    pub fn identity(frames: usize) -> Self {
        let mut row = [0.0; MOTION_DIM];
        for j in 0..NUM_ARTICULATED {
            row[6 * j] = 1.0;
            row[6 * j + 4] = 1.0;
        }
        Self { data: row.repeat(frames), frames }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, BodyError> {
        let mut data = Vec::with_capacity(rows.len() * MOTION_DIM);
        for r in rows {
            if r.len() != MOTION_DIM {
                return Err(BodyError::ShapeMismatch { what: "motion row", expected: MOTION_DIM, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, frames: rows.len() })
    }

    pub fn from_flat(frames: usize, data: Vec<f64>) -> Result<Self, BodyError> {
        if data.len() != frames * MOTION_DIM {
            return Err(BodyError::ShapeMismatch { what: "motion data", expected: frames * MOTION_DIM, got: data.len() });
        }
        Ok(Self { data, frames })
    }

    pub fn from_blocks(blocks: &[[[f64; 6]; NUM_ARTICULATED]]) -> Self {
        let data = blocks.iter().flat_map(|row| row.iter().flatten().copied()).collect();
        Self { data, frames: blocks.len() }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, BodyError> {
        if m.ncols() != MOTION_DIM {
            return Err(BodyError::ShapeMismatch { what: "motion columns", expected: MOTION_DIM, got: m.ncols() });
        }
        let data = (0..m.nrows()).flat_map(|t| (0..MOTION_DIM).map(move |c| m[(t, c)])).collect();
        Ok(Self { data, frames: m.nrows() })
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.frames, MOTION_DIM, &self.data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * MOTION_DIM..(t + 1) * MOTION_DIM]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(MOTION_DIM)
    }

    /// 6D block of articulated joint `j` (skeleton joint `j + 1`) at frame `t`.
    pub fn block(&self, t: usize, j: usize) -> [f64; 6] {
        let o = t * MOTION_DIM + 6 * j;
        std::array::from_fn(|k| self.data[o + k])
    }

    pub fn blocks(&self) -> Vec<[[f64; 6]; NUM_ARTICULATED]> {
        (0..self.frames).map(|t| std::array::from_fn(|j| self.block(t, j))).collect()
    }

    /// Decoded local rotations of all 24 joints at frame `t` (pelvis = identity).
    pub fn local_matrices(&self, t: usize) -> Result<[nalgebra::Matrix3<f64>; NUM_JOINTS], BodyError> {
        let mut out = [nalgebra::Matrix3::identity(); NUM_JOINTS];
        for j in 0..NUM_ARTICULATED {
            out[j + 1] = rot6d_to_matrix(&self.block(t, j))?;
        }
        Ok(out)
    }

    /// Frames `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self { data: self.data[start * MOTION_DIM..(start + len) * MOTION_DIM].to_vec(), frames: len }
    }
}

impl Serialize for MotionSequence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.rows())
    }
}

impl<'de> Deserialize<'de> for MotionSequence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A motion with its shape and global trajectory; the on-disk clip format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClip {
    pub fps: f64,
    pub beta: [f64; NUM_SHAPE],
    #[serde(with = "vec3_rows")]
    pub rotation: Vec<Vector3<f64>>,
    #[serde(with = "vec3_rows")]
    pub translation: Vec<Vector3<f64>>,
    pub motion: MotionSequence,
}

impl MotionClip {
    pub fn validate(&self) -> Result<(), BodyError> {
        let t = self.motion.frames();
        for (what, n) in [("clip rotations", self.rotation.len()), ("clip translations", self.translation.len())] {
            if n != t {
                return Err(BodyError::ShapeMismatch { what, expected: t, got: n });
            }
        }
        Ok(())
    }

    pub fn to_params(&self) -> Result<Vec<BodyParams>, BodyError> {
        sequence_to_params(&self.motion, &self.beta, &self.rotation, &self.translation)
    }
}

pub(crate) mod vec3_rows {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vector3<f64>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| [p.x, p.y, p.z]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector3<f64>>, D::Error> {
        Ok(Vec::<[f64; 3]>::deserialize(d)?.into_iter().map(Vector3::from).collect())
    }
}

/// Unpacks a motion into per-frame parameters with identity pelvis local rotation.
pub fn sequence_to_params(
    x: &MotionSequence,
    beta: &[f64; NUM_SHAPE],
    rotation: &[Vector3<f64>],
    translation: &[Vector3<f64>],
) -> Result<Vec<BodyParams>, BodyError> {
    let t = x.frames();
    for (what, n) in [("global rotations", rotation.len()), ("translations", translation.len())] {
        if n != t {
            return Err(BodyError::ShapeMismatch { what, expected: t, got: n });
        }
    }
    (0..t)
        .map(|f| {
            let locals = x.local_matrices(f)?;
            Ok(BodyParams {
                beta: *beta,
                pose: std::array::from_fn(|j| if j == 0 { Vector3::zeros() } else { so3::log(&locals[j]) }),
                rotation: rotation[f],
                translation: translation[f],
            })
        })
        .collect()
}

/// Packs per-frame parameters into a motion plus global trajectory, folding
/// each pelvis local rotation into the global rotation while keeping every
/// joint position unchanged.
pub fn params_to_sequence(template: &BodyTemplate, params: &[BodyParams]) -> Result<MotionClip, BodyError> {
    let Some(first) = params.first() else {
        return Err(BodyError::ShapeMismatch { what: "parameter frames", expected: 1, got: 0 });
    };
    if params.iter().any(|p| p.beta != first.beta) {
        return Err(BodyError::InvalidParams("shape coefficients differ between frames".into()));
    }
    let o0 = template.shaped_offsets(&first.beta)[0];
    let mut blocks = Vec::with_capacity(params.len());
    let mut rotation = Vec::with_capacity(params.len());
    let mut translation = Vec::with_capacity(params.len());
    for p in params {
        let r = so3::exp(&p.rotation);
        let r_new = r * so3::exp(&p.pose[0]);
        rotation.push(so3::log(&r_new));
        translation.push(p.translation + r * o0 - r_new * o0);
        blocks.push(std::array::from_fn(|j| matrix_to_rot6d(&so3::exp(&p.pose[j + 1]))));
    }
    Ok(MotionClip { fps: 30.0, beta: first.beta, rotation, translation, motion: MotionSequence::from_blocks(&blocks) })
}
