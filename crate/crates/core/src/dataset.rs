//! On-disk scene collections.
//!
//! A dataset root holds `scene_NNNN` directories, each with the four angle
//! planes `I000`, `I045`, `I090`, `I135` (`.png` or `.pgm`) and optionally the
//! display products `S0`, `DOLP`, `AOP`. [`split_mosaics`] writes such a tree
//! together with a `manifest.tsv` of extents and SHA-256 checksums.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imageio::{read_plane, read_stack, write_plane16, write_products, ANGLE_FILES};
use crate::stokes::{demosaic_dofp, stokes_from_angles, DofpMosaic, MosaicPattern, PolarizationStack};
use crate::Plane;

pub const SCENE_PREFIX: &str = "scene_";
pub const MANIFEST: &str = "manifest.tsv";
const PRODUCT_FILES: [&str; 3] = ["S0", "DOLP", "AOP"];

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub dir: PathBuf,
    pub angles: [PathBuf; 4],
    /// Precomputed `S0`, `DOLP`, `AOP` display images, when present.
    pub products: [Option<PathBuf>; 3],
}

impl Scene {
    pub fn load_stack(&self) -> Result<PolarizationStack> {
        read_stack([0, 1, 2, 3].map(|i| self.angles[i].as_path()))
    }

    /// Fusion sources; see [`load_sources`].
    pub fn load_pair(&self) -> Result<(Plane, Plane)> {
        load_sources(&self.dir)
    }
}

/// The two fusion sources of a scene directory, both in `[0,1]`: the
/// `S0` and `DOLP` display images when both exist, otherwise `S0 / 2` and
/// DOLP computed from the four angle planes.
pub fn load_sources(dir: &Path) -> Result<(Plane, Plane)> {
    if let (Some(s0), Some(dolp)) = (find_image(dir, "S0"), find_image(dir, "DOLP")) {
        let (s0, dolp) = (read_plane(&s0)?, read_plane(&dolp)?);
        if s0.dims() != dolp.dims() {
            return Err(Error::invalid(format!("{}: S0 and DOLP extents differ", dir.display())));
        }
        return Ok((s0, dolp));
    }
    let mut angles = Vec::with_capacity(4);
    for stem in ANGLE_FILES {
        let path = find_image(dir, stem).ok_or_else(|| {
            Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("no S0/DOLP images and no {stem} plane")),
            )
        })?;
        angles.push(read_plane(&path)?);
    }
    let [a, b, c, d] = <[Plane; 4]>::try_from(angles).expect("four angles");
    let st = stokes_from_angles(&PolarizationStack::new(a, b, c, d)?);
    Ok((st.s0.map(|v| v / 2.0), st.dolp))
}

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "pgm"].iter().map(|ext| dir.join(format!("{stem}.{ext}"))).find(|p| p.is_file())
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub scenes: Vec<Scene>,
}

impl DatasetIndex {
    /// Lists every `scene_*` directory under `root` in name order.
    pub fn scan(root: &Path) -> Result<Self> {
        let mut scenes = Vec::new();
        for dir in read_dir_sorted(root)? {
            let name = match dir.file_name().and_then(|n| n.to_str()) {
                Some(n) if n.starts_with(SCENE_PREFIX) && dir.is_dir() => n.to_string(),
                _ => continue,
            };
            let mut angles = Vec::with_capacity(4);
            for stem in ANGLE_FILES {
                let path = find_image(&dir, stem)
                    .ok_or_else(|| Error::invalid(format!("{name}: missing {stem}.png or {stem}.pgm")))?;
                angles.push(path);
            }
            scenes.push(Scene {
                name,
                dir: dir.clone(),
                angles: angles.try_into().expect("four angles"),
                products: PRODUCT_FILES.map(|stem| find_image(&dir, stem)),
            });
        }
        Ok(DatasetIndex {
            root: root.to_path_buf(),
            scenes,
        })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Decodes every referenced file and checks that each scene's planes
    /// share extents. Returns one message per problem.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for s in &self.scenes {
            let mut dims = None;
            let files = s.angles.iter().chain(s.products.iter().flatten());
            for path in files {
                match read_plane(path) {
                    Ok(p) => match dims {
                        None => dims = Some(p.dims()),
                        Some(d) if d != p.dims() => {
                            problems.push(format!("{}: extents {:?} differ from {:?}", path.display(), p.dims(), d))
                        }
                        _ => {}
                    },
                    Err(e) => problems.push(e.to_string()),
                }
            }
        }
        problems
    }

    /// Seeded assignment of scenes to train/val/test. At least one scene
    /// always stays in the training set.
    pub fn split(&self, seed: u64, val_fraction: f64, test_fraction: f64) -> Split {
        let n = self.scenes.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(seed));
        let room = n.saturating_sub(1);
        let n_val = ((n as f64 * val_fraction).round() as usize).min(room);
        let n_test = ((n as f64 * test_fraction).round() as usize).min(room - n_val);
        let mut part = |k: usize| {
            let mut v: Vec<usize> = order.drain(..k).collect();
            v.sort_unstable();
            v
        };
        let val = part(n_val);
        let test = part(n_test);
        let train = part(n - n_val - n_test);
        Split { train, val, test }
    }
}

/// Scene indices per role, each in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Splits every mosaic in `mosaic_dir` (sorted by name) into a scene
/// directory under `out_root` and writes the manifest. Returns the scene count.
pub fn split_mosaics(mosaic_dir: &Path, out_root: &Path, pattern: MosaicPattern) -> Result<usize> {
    let inputs: Vec<PathBuf> = read_dir_sorted(mosaic_dir)?
        .into_iter()
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("png" | "pgm")
                )
        })
        .collect();
    let mut mosaics = Vec::with_capacity(inputs.len());
    for path in &inputs {
        let plane = read_plane(path)?;
        let mosaic = DofpMosaic::new(plane, pattern).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        mosaics.push(mosaic);
    }
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let mut manifest = String::from("# file\theight\twidth\tsha256\tsource\n");
    for (i, (path, mosaic)) in inputs.iter().zip(&mosaics).enumerate() {
        let name = format!("{SCENE_PREFIX}{i:04}");
        let dir = out_root.join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stack = demosaic_dofp(mosaic)?;
        for (stem, angle) in ANGLE_FILES.iter().zip([0u16, 45, 90, 135]) {
            write_plane16(&dir.join(format!("{stem}.png")), stack.plane(angle).expect("valid angle"))?;
        }
        write_products(&dir, &stokes_from_angles(&stack))?;
        let (h, w) = stack.dims();
        let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for stem in ANGLE_FILES.iter().chain(&PRODUCT_FILES) {
            let rel = format!("{name}/{stem}.png");
            let sum = sha256_file(&out_root.join(&rel))?;
            manifest.push_str(&format!("{rel}\t{h}\t{w}\t{sum}\t{source}\n"));
        }
    }
    let mpath = out_root.join(MANIFEST);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    Ok(inputs.len())
}

/// Re-reads every manifest entry and reports files whose checksum or
/// extents no longer match.
pub fn verify_manifest(root: &Path) -> Result<Vec<String>> {
    let mpath = root.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut problems = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let [rel, h, w, sum, ..] = cols[..] else {
            problems.push(format!("{MANIFEST} line {}: malformed", i + 1));
            continue;
        };
        let path = root.join(rel);
        if sha256_file(&path)? != sum {
            problems.push(format!("{rel}: checksum mismatch"));
        }
        let p = read_plane(&path)?;
        if (p.height().to_string(), p.width().to_string()) != (h.to_string(), w.to_string()) {
            problems.push(format!("{rel}: extents {:?}, manifest says {h}×{w}", p.dims()));
        }
    }
    Ok(problems)
}
