//! Problem instances, their on-disk format and seeded generators.
//!
//! Instance files are plain text, one header line then whitespace-separated
//! numbers:
//!
//! ```text
//! TSP <n>                      then n lines "x y"
//! BPP <n> <capacity>           then n lines, one integer demand each
//! MKP <n> <m>                  then 1 line of n values,
//!                              m lines of n weights,
//!                              1 line of m capacities
//! ```
//!
//! Files ending in `.tsp` are read as TSPLIB.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tsplib::load_tsplib;
use crate::error::{Error, Result};
use crate::task::TaskId;
use crate::worker::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    pub coords: Option<Vec<[f64; 2]>>,
    pub distance: Arc<Matrix>,
}

impl TspInstance {
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Self {
        let n = coords.len();
        let distance = Matrix::from_fn(n, n, |i, j| {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            (dx * dx + dy * dy).sqrt()
        });
        TspInstance {
            coords: Some(coords),
            distance: Arc::new(distance),
        }
    }

    pub fn from_matrix(distance: Matrix) -> Self {
        TspInstance {
            coords: None,
            distance: Arc::new(distance),
        }
    }

    pub fn n(&self) -> usize {
        self.distance.rows
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = &self.distance;
        (0..d.rows).all(|i| (0..i).all(|j| (d.get(i, j) - d.get(j, i)).abs() <= tol))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BppInstance {
    pub demands: Vec<u32>,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MkpInstance {
    pub values: Vec<f64>,
    /// `m x n`
    pub weights: Matrix,
    pub capacities: Vec<f64>,
}

impl MkpInstance {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn m(&self) -> usize {
        self.capacities.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Tsp(TspInstance),
    Bpp(BppInstance),
    Mkp(MkpInstance),
}

/// Instances of one directory, ordered by file name.
#[derive(Debug, Clone, Default)]
pub struct InstanceSet {
    pub entries: Vec<(String, Instance)>,
}

impl InstanceSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(task: TaskId, dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let mut entries = Vec::with_capacity(paths.len());
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            entries.push((id, load_instance(task, &path)?));
        }
        if entries.is_empty() {
            return Err(Error::Config(format!("no instances in {}", dir.display())));
        }
        Ok(InstanceSet { entries })
    }
}

struct Tokens<'a> {
    path: &'a Path,
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
            .filter(|(_, t)| !t.is_empty())
            .collect();
        Tokens { path, lines, pos: 0 }
    }

    fn err(&self, line: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, Vec<&'a str>)> {
        let last = self.lines.last().map_or(0, |l| l.0);
        let line = self
            .lines
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err(last + 1, "unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn numbers<T: std::str::FromStr>(&mut self, count: usize) -> Result<Vec<T>> {
        let (no, toks) = self.next_line()?;
        if toks.len() != count {
            return Err(self.err(no, format!("expected {count} numbers, got {}", toks.len())));
        }
        toks.iter()
            .map(|t| t.parse().map_err(|_| self.err(no, format!("bad number `{t}`"))))
            .collect()
    }
}

fn load_instance(task: TaskId, path: &Path) -> Result<Instance> {
    if path.extension().and_then(|e| e.to_str()) == Some("tsp") {
        return match task {
            TaskId::GlsTsp | TaskId::ConstructiveTsp => Ok(Instance::Tsp(load_tsplib(path)?)),
            _ => Err(Error::Config(format!(
                "{}: TSPLIB file given for {task}",
                path.display()
            ))),
        };
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(task, path, &text)
}

pub fn parse_instance(task: TaskId, path: &Path, text: &str) -> Result<Instance> {
    let mut t = Tokens::new(path, text);
    let (no, header) = t.next_line()?;
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| t.err(no, format!("bad header number `{s}`")))
    };
    match (task, header.as_slice()) {
        (TaskId::GlsTsp | TaskId::ConstructiveTsp, ["TSP", n]) => {
            let n = num(n)?;
            let coords = (0..n)
                .map(|_| t.numbers::<f64>(2).map(|v| [v[0], v[1]]))
                .collect::<Result<Vec<_>>>()?;
            Ok(Instance::Tsp(TspInstance::from_coords(coords)))
        }
        (TaskId::AcoBpp, ["BPP", n, cap]) => {
            let n = num(n)?;
            let capacity = num(cap)? as u32;
            let demands = (0..n)
                .map(|_| t.numbers::<u32>(1).map(|v| v[0]))
                .collect::<Result<Vec<_>>>()?;
            if let Some(d) = demands.iter().find(|&&d| d > capacity || d == 0) {
                return Err(t.err(no, format!("demand {d} outside (0, {capacity}]")));
            }
            Ok(Instance::Bpp(BppInstance { demands, capacity }))
        }
        (TaskId::AcoMkp, ["MKP", n, m]) => {
            let (n, m) = (num(n)?, num(m)?);
            let values = t.numbers::<f64>(n)?;
            let mut data = Vec::with_capacity(n * m);
            for _ in 0..m {
                data.extend(t.numbers::<f64>(n)?);
            }
            let capacities = t.numbers::<f64>(m)?;
            Ok(Instance::Mkp(MkpInstance {
                values,
                weights: Matrix {
                    rows: m,
                    cols: n,
                    data,
                },
                capacities,
            }))
        }
        _ => Err(t.err(no, format!("header `{}` does not match task {task}", header.join(" ")))),
    }
}

pub fn format_instance(instance: &Instance) -> String {
    let mut s = String::new();
    match instance {
        Instance::Tsp(tsp) => {
            let coords = tsp.coords.as_ref().expect("generated TSP instances carry coordinates");
            writeln!(s, "TSP {}", coords.len()).unwrap();
            for [x, y] in coords {
                writeln!(s, "{x} {y}").unwrap();
            }
        }
        Instance::Bpp(b) => {
            writeln!(s, "BPP {} {}", b.demands.len(), b.capacity).unwrap();
            for d in &b.demands {
                writeln!(s, "{d}").unwrap();
            }
        }
        Instance::Mkp(k) => {
            writeln!(s, "MKP {} {}", k.n(), k.m()).unwrap();
            let row = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
            writeln!(s, "{}", row(&k.values)).unwrap();
            for i in 0..k.m() {
                writeln!(s, "{}", row(k.weights.row(i))).unwrap();
            }
            writeln!(s, "{}", row(&k.capacities)).unwrap();
        }
    }
    s
}

pub const BPP_CAPACITY: u32 = 150;
pub const MKP_CONSTRAINTS: usize = 5;

pub fn random_instance(task: TaskId, size: usize, rng: &mut impl Rng) -> Instance {
    match task {
        TaskId::GlsTsp | TaskId::ConstructiveTsp => Instance::Tsp(TspInstance::from_coords(
            (0..size).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect(),
        )),
        TaskId::AcoBpp => Instance::Bpp(BppInstance {
            demands: (0..size).map(|_| rng.gen_range(20..=100)).collect(),
            capacity: BPP_CAPACITY,
        }),
        TaskId::AcoMkp => {
            let values = (0..size).map(|_| rng.gen::<f64>()).collect();
            let weights = Matrix::from_fn(MKP_CONSTRAINTS, size, |_, _| rng.gen::<f64>());
            let capacities = (0..MKP_CONSTRAINTS)
                .map(|i| {
                    let row = weights.row(i);
                    // Half the total weight, never below the heaviest single item.
                    let max = row.iter().copied().fold(0.0, f64::max);
                    (row.iter().sum::<f64>() / 2.0).max(max)
                })
                .collect();
            Instance::Mkp(MkpInstance {
                values,
                weights,
                capacities,
            })
        }
    }
}

fn file_prefix(task: TaskId) -> &'static str {
    match task {
        TaskId::GlsTsp | TaskId::ConstructiveTsp => "tsp",
        TaskId::AcoBpp => "bpp",
        TaskId::AcoMkp => "mkp",
    }
}

/// Writes `count` seeded instances into `out_dir`; returns the written paths.
pub fn generate_instances(
    task: TaskId,
    count: usize,
    size: usize,
    rng_seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if size < 4 {
        return Err(Error::Precondition(format!("instance size must be >= 4, got {size}")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut paths = Vec::with_capacity(count);
    for idx in 0..count {
        let instance = random_instance(task, size, &mut rng);
        let path = out_dir.join(format!(
            "{}_n{size}_s{rng_seed}_{idx:03}.txt",
            file_prefix(task)
        ));
        std::fs::write(&path, format_instance(&instance)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
