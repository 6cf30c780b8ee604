//! Dataset generation, image rendering and flat key=value run configs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{Dim, Expr};
use crate::grid::{GridError, OccupancyGrid, Shape};
use crate::parse::{parse, print, ParseError};
use crate::sampler::{sample_nondegenerate, SamplerConfig};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("program: {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Format(String),
}

fn bad(m: impl Into<String>) -> IoError {
    IoError::Format(m.into())
}

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestItem {
    pub id: usize,
    pub grid: PathBuf,
    pub program: Option<PathBuf>,
}

/// A dataset directory: one grid file per shape and optional programs.
/// Paths are stored relative to `root`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub shape: Shape,
    pub items: Vec<ManifestItem>,
}

impl DatasetManifest {
    pub fn write(&self) -> Result<(), IoError> {
        let mut f = io::BufWriter::new(fs::File::create(self.root.join(MANIFEST_FILE))?);
        let axes = self.shape.dim.axes();
        let res: Vec<String> = self.shape.res[..axes].iter().map(|r| r.to_string()).collect();
        writeln!(f, "MANIFEST {} {} {}", axes, res.join(" "), self.items.len())?;
        for it in &self.items {
            let prog = it.program.as_ref().map_or("-".to_string(), |p| p.display().to_string());
            writeln!(f, "{}\t{}\t{}", it.id, it.grid.display(), prog)?;
        }
        f.flush()?;
        Ok(())
    }

    /// Reads `root/manifest.txt` and checks that every file exists.
    pub fn load(root: &Path) -> Result<DatasetManifest, IoError> {
        let text = fs::read_to_string(root.join(MANIFEST_FILE))?;
        let mut lines = text.lines();
        let head: Vec<&str> = lines.next().ok_or_else(|| bad("empty manifest"))?.split_whitespace().collect();
        if head.first() != Some(&"MANIFEST") || head.len() < 3 {
            return Err(bad("manifest header must be `MANIFEST <dim> <res...> <count>`"));
        }
        let axes: usize = head[1].parse().map_err(|_| bad("bad dimension"))?;
        let dim = Dim::from_axes(axes).ok_or_else(|| bad("dimension must be 2 or 3"))?;
        if head.len() != 3 + axes {
            return Err(bad("wrong number of manifest header fields"));
        }
        let mut res = [1usize; 3];
        for a in 0..axes {
            res[a] = head[2 + a].parse().map_err(|_| bad("bad resolution"))?;
        }
        let count: usize = head[2 + axes].parse().map_err(|_| bad("bad count"))?;
        let mut items = Vec::with_capacity(count);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("bad manifest line `{line}`")));
            }
            let item = ManifestItem {
                id: f[0].parse().map_err(|_| bad("bad shape id"))?,
                grid: PathBuf::from(f[1]),
                program: (f[2] != "-").then(|| PathBuf::from(f[2])),
            };
            for p in std::iter::once(&item.grid).chain(item.program.as_ref()) {
                if !root.join(p).is_file() {
                    return Err(bad(format!("missing file {}", p.display())));
                }
            }
            items.push(item);
        }
        if items.len() != count {
            return Err(bad(format!("manifest lists {} items, header says {count}", items.len())));
        }
        Ok(DatasetManifest {
            root: root.to_path_buf(),
            shape: Shape { dim, res },
            items,
        })
    }

    pub fn load_grids(&self) -> Result<Vec<OccupancyGrid>, IoError> {
        self.items
            .iter()
            .map(|it| {
                let g = read_grid(&self.root.join(&it.grid))?;
                if g.shape() != &self.shape {
                    return Err(bad(format!("{} does not match the manifest shape", it.grid.display())));
                }
                Ok(g)
            })
            .collect()
    }

    pub fn load_programs(&self) -> Result<Vec<Option<Expr>>, IoError> {
        self.items
            .iter()
            .map(|it| it.program.as_ref().map(|p| read_program(&self.root.join(p), self.shape.dim)).transpose())
            .collect()
    }
}

/// Samples `count` non-degenerate programs and writes them with their
/// executions under `out`.
pub fn gen_data(dim: Dim, count: usize, depth_max: usize, seed: u64, out: &Path) -> Result<DatasetManifest, IoError> {
    gen_data_at(Shape::default_for(dim), count, depth_max, seed, out)
}

pub fn gen_data_at(shape: Shape, count: usize, depth_max: usize, seed: u64, out: &Path) -> Result<DatasetManifest, IoError> {
    if count == 0 {
        return Err(bad("count must be at least 1"));
    }
    fs::create_dir_all(out)?;
    let cfg = SamplerConfig::new(shape.dim, depth_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(count);
    for id in 0..count {
        let (z, g) = sample_nondegenerate(&cfg, &shape, &mut rng);
        let grid = PathBuf::from(format!("shape_{id:04}.occ"));
        let program = PathBuf::from(format!("shape_{id:04}.csg"));
        write_grid(&out.join(&grid), &g)?;
        write_program(&out.join(&program), &z)?;
        items.push(ManifestItem {
            id,
            grid,
            program: Some(program),
        });
    }
    let m = DatasetManifest {
        root: out.to_path_buf(),
        shape,
        items,
    };
    m.write()?;
    Ok(m)
}

pub fn read_grid(path: &Path) -> Result<OccupancyGrid, IoError> {
    Ok(OccupancyGrid::read_from(BufReader::new(fs::File::open(path)?))?)
}

pub fn write_grid(path: &Path, g: &OccupancyGrid) -> Result<(), IoError> {
    fs::write(path, g.to_text())?;
    Ok(())
}

pub fn read_program(path: &Path, dim: Dim) -> Result<Expr, IoError> {
    Ok(parse(fs::read_to_string(path)?.trim(), dim)?)
}

pub fn write_program(path: &Path, z: &Expr) -> Result<(), IoError> {
    fs::write(path, print(z) + "\n")?;
    Ok(())
}

// Images put +y at the top; the grid's first axis runs left to right.

/// Plain (P2) PGM. 2D grids render directly; 3D grids render as a strip of
/// z-slices laid out left to right.
pub fn to_pgm(g: &OccupancyGrid) -> String {
    let s = g.shape();
    let (rx, ry) = (s.res[0], s.res[1]);
    let slices = if s.dim == Dim::Three { s.res[2] } else { 1 };
    let mut out = format!("P2\n{} {}\n255\n", rx * slices, ry);
    for row in 0..ry {
        let j = ry - 1 - row;
        let vals: Vec<&str> = (0..slices)
            .flat_map(|k| (0..rx).map(move |i| [i, j, k]))
            .map(|ijk| if g.at(ijk) { "255" } else { "0" })
            .collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

/// Inverse of [`to_pgm`]. `slices` is `None` for 2D and the depth for a 3D
/// strip; any nonzero pixel is occupied.
pub fn from_pgm(text: &str, slices: Option<usize>) -> Result<OccupancyGrid, IoError> {
    let mut tok = text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace);
    if tok.next() != Some("P2") {
        return Err(bad("expected a plain P2 PGM"));
    }
    let mut num = || -> Result<usize, IoError> { tok.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("truncated PGM")) };
    let (w, h, _max) = (num()?, num()?, num()?);
    let three = slices.is_some();
    let slices = slices.unwrap_or(1);
    if slices == 0 || w % slices != 0 {
        return Err(bad("image width is not a multiple of the slice count"));
    }
    let rx = w / slices;
    let shape = if !three {
        Shape { dim: Dim::Two, res: [rx, h, 1] }
    } else {
        Shape { dim: Dim::Three, res: [rx, h, slices] }
    };
    let mut g = OccupancyGrid::empty(shape);
    for row in 0..h {
        for col in 0..w {
            if num()? != 0 {
                g.set(shape.index([col % rx, h - 1 - row, col / rx]), true);
            }
        }
    }
    Ok(g)
}

/// `VOX <rx> <ry> <rz>` then one `i j k` line per occupied voxel.
pub fn to_voxel_text(g: &OccupancyGrid) -> String {
    let s = g.shape();
    let mut out = format!("VOX {} {} {}\n", s.res[0], s.res[1], s.res[2]);
    for idx in g.bits().iter_ones() {
        let [i, j, k] = s.coords(idx);
        out.push_str(&format!("{i} {j} {k}\n"));
    }
    out
}

pub fn from_voxel_text(text: &str) -> Result<OccupancyGrid, IoError> {
    let mut lines = text.lines();
    let head: Vec<usize> = lines
        .next()
        .and_then(|l| l.strip_prefix("VOX "))
        .ok_or_else(|| bad("missing VOX header"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad resolution")))
        .collect::<Result<_, _>>()?;
    if head.len() != 3 || head.contains(&0) {
        return Err(bad("VOX header needs three nonzero resolutions"));
    }
    let shape = Shape {
        dim: Dim::Three,
        res: [head[0], head[1], head[2]],
    };
    let mut g = OccupancyGrid::empty(shape);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let c: Vec<usize> = line.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        if c.len() != 3 || (0..3).any(|a| c[a] >= shape.res[a]) {
            return Err(bad(format!("bad voxel `{line}`")));
        }
        g.set(shape.index([c[0], c[1], c[2]]), true);
    }
    Ok(g)
}

/// Writes the PGM at `out`; 3D grids also get `<out>.vox` with the voxel list.
pub fn render(g: &OccupancyGrid, out: &Path) -> Result<Vec<PathBuf>, IoError> {
    fs::write(out, to_pgm(g))?;
    let mut written = vec![out.to_path_buf()];
    if g.dim() == Dim::Three {
        let vox = out.with_extension("vox");
        fs::write(&vox, to_voxel_text(g))?;
        written.push(vox);
    }
    Ok(written)
}

/// Flat `key = value` lines; `#` starts a comment. Later keys win.
pub fn read_key_values(r: impl BufRead) -> Result<BTreeMap<String, String>, IoError> {
    let mut out = BTreeMap::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key=value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(bad(format!("line {}: empty key", n + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}
