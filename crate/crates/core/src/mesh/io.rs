use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MeshError, PeriodicSurfaceMesh, Shift, Vec3};
use crate::PERIOD;

#[derive(Serialize, Deserialize)]
struct MeshFile {
    period: f64,
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    shifts: Vec<[Shift; 3]>,
}

impl PeriodicSurfaceMesh {
    pub fn from_json_str(s: &str) -> Result<Self, MeshError> {
        let file: MeshFile = serde_json::from_str(s).map_err(|e| MeshError::Parse(e.to_string()))?;
        if file.period != PERIOD {
            return Err(MeshError::Period { expected: PERIOD, found: file.period });
        }
        let vertices = file.vertices.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect();
        Self::new(vertices, file.faces, file.shifts)
    }

    pub fn to_json_string(&self) -> String {
        let file = MeshFile {
            period: PERIOD,
            vertices: self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            faces: self.faces.clone(),
            shifts: self.shifts.clone(),
        };
        serde_json::to_string(&file).expect("mesh serialization")
    }

    /// Reads and validates a JSON mesh file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), crate::Error> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // One vertex, two triangles: the minimal flat torus z = 0.
    const TWO_TRIANGLES: &str = r#"{"period": 2.0,
        "vertices": [[-1.0, -1.0, 0.0]],
        "faces": [[0, 0, 0], [0, 0, 0]],
        "shifts": [[[0,0,0],[1,0,0],[1,1,0]], [[0,0,0],[1,1,0],[0,1,0]]]}"#;

    const ISOLATED: &str = r#"{"period": 2.0,
        "vertices": [[-1.0, -1.0, 0.0], [0.5, 0.5, 0.5]],
        "faces": [[0, 0, 0], [0, 0, 0]],
        "shifts": [[[0,0,0],[1,0,0],[1,1,0]], [[0,0,0],[1,1,0],[0,1,0]]]}"#;

    #[test]
    fn minimal_torus_file() {
        let m = PeriodicSurfaceMesh::from_json_str(TWO_TRIANGLES).unwrap();
        assert_eq!(m.num_vertices(), 1);
        assert_eq!(m.num_faces(), 2);
        assert_eq!(m.euler_characteristic().unwrap(), 0);
        assert!((m.total_area() - 4.0).abs() < 1e-15);
        let back = PeriodicSurfaceMesh::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn grid_round_trips() {
        let m = crate::surfgen::plane(3);
        let text = m.to_json_string();
        let back = PeriodicSurfaceMesh::from_json_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.num_vertices(), 9);
        assert_eq!(back.num_faces(), 18);
    }

    #[test]
    fn isolated_vertex_file_is_rejected() {
        let err = PeriodicSurfaceMesh::from_json_str(ISOLATED).unwrap_err();
        assert_eq!(err, MeshError::IsolatedVertex { vertex: 1 });
    }

    #[test]
    fn wrong_period_is_rejected() {
        let text = crate::surfgen::plane(3).to_json_string().replacen("\"period\":2.0", "\"period\":1.0", 1);
        assert!(matches!(PeriodicSurfaceMesh::from_json_str(&text), Err(MeshError::Period { .. })));
    }

    #[test]
    fn garbage_is_a_parse_error() {
        assert!(matches!(PeriodicSurfaceMesh::from_json_str("{"), Err(MeshError::Parse(_))));
    }
}
