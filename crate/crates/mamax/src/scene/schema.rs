//! JSON file formats for scenes and polyhedron specs.
//!
//! Polynomial coefficients are stored as `[multi_index, re, im]` triples;
//! floats round-trip exactly through serde_json's shortest-representation
//! output, which exceeds the 17-significant-digit requirement.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DomainBox, HoloPoly, PolyFamily, PolyhedronSpec, Scene, SceneError, SmoothPiece};

/// `[multi_index, re, im]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyTermFile(pub Vec<u32>, pub f64, pub f64);

pub type PolyFile = Vec<PolyTermFile>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexFile(pub f64, pub f64);

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PieceFile {
    Constant {
        value: f64,
    },
    Affine {
        constant: f64,
        coef_x: Vec<f64>,
        coef_y: Vec<f64>,
    },
    RePoly {
        poly: PolyFile,
    },
    LogSumSquares {
        /// Defaults to 1/(2·max degree) when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        polys: Vec<PolyFile>,
    },
    HermitianQuadratic {
        constant: f64,
        linear: Vec<ComplexFile>,
        /// Row-major dim×dim Hermitian matrix.
        hermitian: Vec<Vec<ComplexFile>>,
        /// Optional symmetric matrix for the pluriharmonic quadratic part.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pluriharmonic: Option<Vec<Vec<ComplexFile>>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub dim: usize,
    pub pieces: Vec<PieceFile>,
    pub domain: DomainBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub polys: Vec<PolyFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyhedronFile {
    pub dim: usize,
    pub families: Vec<FamilyFile>,
    pub domain: DomainBox,
}

fn poly_from_file(dim: usize, f: &PolyFile) -> Result<HoloPoly, SceneError> {
    HoloPoly::new(
        dim,
        f.iter()
            .map(|t| (t.0.clone(), Complex64::new(t.1, t.2)))
            .collect(),
    )
}

fn poly_to_file(p: &HoloPoly) -> PolyFile {
    p.terms()
        .iter()
        .map(|(a, c)| PolyTermFile(a.clone(), c.re, c.im))
        .collect()
}

fn matrix_from_file(
    dim: usize,
    rows: &[Vec<ComplexFile>],
    what: &str,
) -> Result<Vec<Complex64>, SceneError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(SceneError::Invalid(format!(
            "{what} must be a {dim}x{dim} matrix"
        )));
    }
    Ok(rows
        .iter()
        .flat_map(|r| r.iter().map(|c| Complex64::new(c.0, c.1)))
        .collect())
}

impl SceneFile {
    pub fn into_scene(&self) -> Result<Scene, SceneError> {
        let dim = self.dim;
        if dim == 0 {
            return Err(SceneError::Invalid("dim must be at least 1".into()));
        }
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, pf) in self.pieces.iter().enumerate() {
            let piece = match pf {
                PieceFile::Constant { value } => SmoothPiece::Constant { dim, value: *value },
                PieceFile::Affine {
                    constant,
                    coef_x,
                    coef_y,
                } => {
                    if coef_x.len() != dim || coef_y.len() != dim {
                        return Err(SceneError::Invalid(format!(
                            "pieces[{i}].coef_x/coef_y must have length {dim}"
                        )));
                    }
                    SmoothPiece::Affine {
                        constant: *constant,
                        coef_x: coef_x.clone(),
                        coef_y: coef_y.clone(),
                    }
                }
                PieceFile::RePoly { poly } => SmoothPiece::RePoly {
                    poly: poly_from_file(dim, poly)?,
                },
                PieceFile::LogSumSquares { scale, polys } => {
                    if polys.is_empty() {
                        return Err(SceneError::Invalid(format!(
                            "pieces[{i}].polys must be nonempty"
                        )));
                    }
                    let ps: Result<Vec<_>, _> =
                        polys.iter().map(|p| poly_from_file(dim, p)).collect();
                    let ps = ps?;
                    let scale = match scale {
                        Some(s) => {
                            if *s <= 0.0 {
                                return Err(SceneError::Invalid(format!(
                                    "pieces[{i}].scale must be positive"
                                )));
                            }
                            *s
                        }
                        None => {
                            let deg = ps.iter().map(|p| p.degree()).max().unwrap_or(0);
                            if deg == 0 {
                                return Err(SceneError::Invalid(format!(
                                    "pieces[{i}]: degree-0 polynomials need an explicit scale"
                                )));
                            }
                            1.0 / (2.0 * deg as f64)
                        }
                    };
                    SmoothPiece::LogSumSquares { scale, polys: ps }
                }
                PieceFile::HermitianQuadratic {
                    constant,
                    linear,
                    hermitian,
                    pluriharmonic,
                } => {
                    if linear.len() != dim {
                        return Err(SceneError::Invalid(format!(
                            "pieces[{i}].linear must have length {dim}"
                        )));
                    }
                    let h = matrix_from_file(dim, hermitian, &format!("pieces[{i}].hermitian"))?;
                    for j in 0..dim {
                        for k in 0..dim {
                            if (h[j * dim + k] - h[k * dim + j].conj()).norm() > 1e-12 {
                                return Err(SceneError::Invalid(format!(
                                    "pieces[{i}].hermitian is not Hermitian at ({j},{k})"
                                )));
                            }
                        }
                    }
                    let s = match pluriharmonic {
                        Some(rows) => {
                            matrix_from_file(dim, rows, &format!("pieces[{i}].pluriharmonic"))?
                        }
                        None => vec![Complex64::default(); dim * dim],
                    };
                    SmoothPiece::HermitianQuadratic {
                        dim,
                        constant: *constant,
                        linear: linear.iter().map(|c| Complex64::new(c.0, c.1)).collect(),
                        hermitian: h,
                        pluriharmonic: s,
                    }
                }
            };
            pieces.push(piece);
        }
        let mut scene = Scene::new(dim, pieces, self.domain.clone())?;
        if let Some(off) = &self.offsets {
            scene = scene.with_offsets(off.clone())?;
        }
        Ok(scene)
    }

    pub fn from_scene(scene: &Scene) -> Result<Self, SceneError> {
        let pieces: Result<Vec<_>, _> = scene
            .pieces
            .iter()
            .map(|p| match p {
                SmoothPiece::Constant { value, .. } => Ok(PieceFile::Constant { value: *value }),
                SmoothPiece::Affine {
                    constant,
                    coef_x,
                    coef_y,
                } => Ok(PieceFile::Affine {
                    constant: *constant,
                    coef_x: coef_x.clone(),
                    coef_y: coef_y.clone(),
                }),
                SmoothPiece::RePoly { poly } => Ok(PieceFile::RePoly {
                    poly: poly_to_file(poly),
                }),
                SmoothPiece::LogSumSquares { scale, polys } => Ok(PieceFile::LogSumSquares {
                    scale: Some(*scale),
                    polys: polys.iter().map(poly_to_file).collect(),
                }),
                SmoothPiece::HermitianQuadratic {
                    dim,
                    constant,
                    linear,
                    hermitian,
                    pluriharmonic,
                } => {
                    let to_rows = |m: &[Complex64]| {
                        (0..*dim)
                            .map(|j| {
                                (0..*dim)
                                    .map(|k| {
                                        let c = m[j * dim + k];
                                        ComplexFile(c.re, c.im)
                                    })
                                    .collect()
                            })
                            .collect::<Vec<Vec<ComplexFile>>>()
                    };
                    Ok(PieceFile::HermitianQuadratic {
                        constant: *constant,
                        linear: linear.iter().map(|c| ComplexFile(c.re, c.im)).collect(),
                        hermitian: to_rows(hermitian),
                        pluriharmonic: if pluriharmonic.iter().all(|c| c.norm() == 0.0) {
                            None
                        } else {
                            Some(to_rows(pluriharmonic))
                        },
                    })
                }
                SmoothPiece::SmoothMax { .. } => Err(SceneError::Invalid(
                    "smooth-max pieces are synthetic and cannot be serialized".into(),
                )),
            })
            .collect();
        Ok(SceneFile {
            dim: scene.dim,
            pieces: pieces?,
            domain: scene.domain.clone(),
            offsets: if scene.offsets.iter().all(|&o| o == 0.0) {
                None
            } else {
                Some(scene.offsets.clone())
            },
        })
    }
}

impl PolyhedronFile {
    pub fn into_spec(&self) -> Result<PolyhedronSpec, SceneError> {
        let families: Result<Vec<_>, SceneError> = self
            .families
            .iter()
            .map(|f| {
                let polys: Result<Vec<_>, SceneError> =
                    f.polys.iter().map(|p| poly_from_file(self.dim, p)).collect();
                Ok(PolyFamily { polys: polys? })
            })
            .collect();
        PolyhedronSpec::new(self.dim, families?, self.domain.clone())
    }

    pub fn from_spec(spec: &PolyhedronSpec) -> Self {
        PolyhedronFile {
            dim: spec.dim,
            families: spec
                .families
                .iter()
                .map(|f| FamilyFile {
                    polys: f.polys.iter().map(poly_to_file).collect(),
                })
                .collect(),
            domain: spec.domain.clone(),
        }
    }
}

pub fn load_scene(json: &str) -> Result<Scene, SceneError> {
    let file: SceneFile =
        serde_json::from_str(json).map_err(|e| SceneError::Invalid(format!("scene file: {e}")))?;
    file.into_scene()
}

pub fn load_polyhedron(json: &str) -> Result<PolyhedronSpec, SceneError> {
    let file: PolyhedronFile = serde_json::from_str(json)
        .map_err(|e| SceneError::Invalid(format!("polyhedron file: {e}")))?;
    file.into_spec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_roundtrip() {
        let json = r#"{
            "dim": 1,
            "pieces": [
                {"kind": "constant", "value": 0.0},
                {"kind": "affine", "constant": 0.0, "coef_x": [1.0], "coef_y": [0.0]},
                {"kind": "log_sum_squares", "polys": [[[[1], 1.0, 0.0]]], "scale": 1.0}
            ],
            "domain": {"min": [-1.0, -1.0], "max": [1.0, 1.0]}
        }"#;
        let scene = load_scene(json).unwrap();
        assert_eq!(scene.num_pieces(), 3);
        let back = SceneFile::from_scene(&scene).unwrap();
        let json2 = serde_json::to_string(&back).unwrap();
        let scene2 = load_scene(&json2).unwrap();
        let pt = [0.37, -0.12];
        for j in 0..3 {
            assert_eq!(scene.piece_value(j, &pt), scene2.piece_value(j, &pt));
        }
    }

    #[test]
    fn malformed_scene_names_field() {
        let json = r#"{"dim": 1, "pieces": [{"kind": "affine", "constant": 0.0,
            "coef_x": [1.0, 2.0], "coef_y": [0.0]}],
            "domain": {"min": [-1.0, -1.0], "max": [1.0, 1.0]}}"#;
        let err = load_scene(json).unwrap_err();
        assert!(err.to_string().contains("coef_x"), "{err}");
    }

    #[test]
    fn lss_scale_defaults_to_half_inverse_degree() {
        let json = r#"{
            "dim": 2,
            "pieces": [{"kind": "log_sum_squares",
                        "polys": [[[[2, 0], 1.0, 0.0]], [[[0, 1], 1.0, 0.0]]]}],
            "domain": {"min": [-1, -1, -1, -1], "max": [1, 1, 1, 1]}
        }"#;
        let scene = load_scene(json).unwrap();
        match &scene.pieces[0] {
            SmoothPiece::LogSumSquares { scale, .. } => assert_eq!(*scale, 0.25),
            other => panic!("wrong kind {other:?}"),
        }
    }
}
