//! TSPLIB reader for `EUC_2D` and `EXPLICIT` symmetric instances.

use std::collections::BTreeMap;
use std::path::Path;

use super::instances::TspInstance;
use crate::error::{Error, Result};
use crate::worker::Matrix;

/// TSPLIB nearest-integer rounding.
fn nint(x: f64) -> f64 {
    (x + 0.5).floor()
}

pub fn load_tsplib(path: &Path) -> Result<TspInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsplib(path, &text)
}

pub fn parse_tsplib(path: &Path, text: &str) -> Result<TspInstance> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut header = BTreeMap::new();
    let mut pos = 0;
    let mut section: Option<(usize, String)> = None;
    while pos < lines.len() {
        let (no, line) = lines[pos];
        pos += 1;
        if line == "EOF" {
            break;
        }
        if line.ends_with("_SECTION") {
            section = Some((no, line.to_string()));
            break;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(err(no, format!("malformed header line `{line}`")));
        };
        header.insert(key.trim().to_uppercase(), value.trim().to_string());
    }
    let section_line = section.as_ref().map_or(lines.last().map_or(1, |l| l.0), |s| s.0);

    let n: usize = header
        .get("DIMENSION")
        .ok_or_else(|| err(section_line, "missing DIMENSION".into()))?
        .parse()
        .map_err(|_| err(section_line, "DIMENSION is not an integer".into()))?;
    let weight_type = header
        .get("EDGE_WEIGHT_TYPE")
        .map(String::as_str)
        .unwrap_or("EUC_2D")
        .to_string();

    let numbers_after = |start: usize, count: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        for &(no, line) in &lines[start..] {
            if out.len() >= count || line == "EOF" || line.ends_with("_SECTION") {
                break;
            }
            for tok in line.split_whitespace() {
                out.push(
                    tok.parse()
                        .map_err(|_| err(no, format!("bad number `{tok}`")))?,
                );
            }
        }
        if out.len() < count {
            return Err(err(section_line, format!("expected {count} numbers, found {}", out.len())));
        }
        Ok(out)
    };

    let Some((_, name)) = section else {
        return Err(err(section_line, "missing data section".into()));
    };
    match weight_type.as_str() {
        "EUC_2D" => {
            if name != "NODE_COORD_SECTION" {
                return Err(err(section_line, format!("EUC_2D requires NODE_COORD_SECTION, found {name}")));
            }
            let raw = numbers_after(pos, 3 * n)?;
            let coords: Vec<[f64; 2]> = raw.chunks(3).map(|c| [c[1], c[2]]).collect();
            let d = Matrix::from_fn(n, n, |i, j| {
                let dx = coords[i][0] - coords[j][0];
                let dy = coords[i][1] - coords[j][1];
                nint((dx * dx + dy * dy).sqrt())
            });
            Ok(TspInstance {
                coords: Some(coords),
                distance: std::sync::Arc::new(d),
            })
        }
        "EXPLICIT" => {
            if name != "EDGE_WEIGHT_SECTION" {
                return Err(err(section_line, format!("EXPLICIT requires EDGE_WEIGHT_SECTION, found {name}")));
            }
            let format = header
                .get("EDGE_WEIGHT_FORMAT")
                .map(String::as_str)
                .unwrap_or("FULL_MATRIX");
            let count = match format {
                "FULL_MATRIX" => n * n,
                "UPPER_ROW" | "LOWER_ROW" => n * (n - 1) / 2,
                "UPPER_DIAG_ROW" | "LOWER_DIAG_ROW" => n * (n + 1) / 2,
                other => {
                    return Err(err(section_line, format!("unsupported EDGE_WEIGHT_FORMAT {other}")))
                }
            };
            let w = numbers_after(pos, count)?;
            let mut d = Matrix::zeros(n, n);
            let mut it = w.into_iter();
            let mut put = |i: usize, j: usize, v: f64| {
                d.set(i, j, v);
                d.set(j, i, v);
            };
            match format {
                "FULL_MATRIX" => {
                    for i in 0..n {
                        for j in 0..n {
                            let v = it.next().unwrap();
                            if j >= i {
                                put(i, j, v);
                            }
                        }
                    }
                }
                "UPPER_ROW" => (0..n).for_each(|i| (i + 1..n).for_each(|j| put(i, j, it.next().unwrap()))),
                "LOWER_ROW" => (0..n).for_each(|i| (0..i).for_each(|j| put(i, j, it.next().unwrap()))),
                "UPPER_DIAG_ROW" => (0..n).for_each(|i| (i..n).for_each(|j| put(i, j, it.next().unwrap()))),
                _ => (0..n).for_each(|i| (0..=i).for_each(|j| put(i, j, it.next().unwrap()))),
            }
            for i in 0..n {
                d.set(i, i, 0.0);
            }
            Ok(TspInstance::from_matrix(d))
        }
        other => Err(Error::UnsupportedEdgeWeight(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_rounds_diagonal() {
        let text = "NAME : sq\nTYPE : TSP\nDIMENSION : 4\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 1 0\n3 1 1\n4 0 1\nEOF\n";
        let t = parse_tsplib(Path::new("sq.tsp"), text).unwrap();
        assert_eq!(t.distance.get(0, 2), 1.0);
        assert_eq!(t.distance.get(0, 1), 1.0);
    }

    #[test]
    fn missing_dimension_is_parse_error() {
        let text = "NAME : x\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n";
        let e = parse_tsplib(Path::new("x.tsp"), text).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn unsupported_weight_type_named() {
        let text = "DIMENSION : 2\nEDGE_WEIGHT_TYPE : GEO\nNODE_COORD_SECTION\n1 0 0\n2 1 1\n";
        let e = parse_tsplib(Path::new("x.tsp"), text).unwrap_err();
        assert!(matches!(e, Error::UnsupportedEdgeWeight(ref t) if t == "GEO"));
    }

    #[test]
    fn explicit_formats_agree() {
        let full = "DIMENSION: 3\nEDGE_WEIGHT_TYPE: EXPLICIT\nEDGE_WEIGHT_FORMAT: FULL_MATRIX\nEDGE_WEIGHT_SECTION\n0 1 2\n1 0 3\n2 3 0\nEOF";
        let upper = "DIMENSION: 3\nEDGE_WEIGHT_TYPE: EXPLICIT\nEDGE_WEIGHT_FORMAT: UPPER_ROW\nEDGE_WEIGHT_SECTION\n1 2\n3\nEOF";
        let lower = "DIMENSION: 3\nEDGE_WEIGHT_TYPE: EXPLICIT\nEDGE_WEIGHT_FORMAT: LOWER_DIAG_ROW\nEDGE_WEIGHT_SECTION\n0\n1 0\n2 3 0\nEOF";
        let a = parse_tsplib(Path::new("a"), full).unwrap();
        let b = parse_tsplib(Path::new("b"), upper).unwrap();
        let c = parse_tsplib(Path::new("c"), lower).unwrap();
        assert_eq!(a.distance, b.distance);
        assert_eq!(a.distance, c.distance);
        assert_eq!(a.distance.get(2, 1), 3.0);
    }

    #[test]
    fn truncated_coordinates_rejected() {
        let text = "DIMENSION : 3\nNODE_COORD_SECTION\n1 0 0\n2 1 1\nEOF\n";
        assert!(parse_tsplib(Path::new("x.tsp"), text).is_err());
    }
}
