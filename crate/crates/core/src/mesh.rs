use crate::error::{Error, Result};
use crate::se3::Vec3;

/// A triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Mesh { vertices, faces };
        mesh.check()?;
        Ok(mesh)
    }

    /// A mesh without faces, e.g. an observed point cloud.
    pub fn from_points(vertices: Vec<Vec3>) -> Self {
        Mesh {
            vertices,
            faces: Vec::new(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some((i, f)) = self
            .faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&v| v >= n))
        {
            return Err(Error::invalid(format!(
                "face {i} {f:?} references a vertex outside 0..{n}"
            )));
        }
        Ok(())
    }
}
