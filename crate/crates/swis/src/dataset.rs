//! Corpus discovery, manifests and reference/query assignment.
//!
//! Supported on-disk layouts (paths relative to the dataset root):
//!
//! | dataset | layout |
//! |---|---|
//! | `bhsig260_bengali`, `bhsig260_hindi` | `<writer>/<B\|H>-S-<writer>-<G\|F>-<nn>.<ext>` |
//! | `icdar2011_dutch`, `icdar2011_chinese` | `{train,test}/<writer>/<www>_<nn>.<ext>` for genuine, `<ffff><www>_<nn>.<ext>` for forgeries; files under `test/<writer>/reference/` are the shipped references |
//! | `custom` | a manifest CSV (the root itself, or `<root>/manifest.csv`) |
//!
//! BHSig260 writers are split into pretraining and test sets by a seeded
//! shuffle; ICDAR ships its own division.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use swis_core::encoder::fnv1a;
use swis_core::rng::derive_seed;
use swis_core::verify::Label;
use swis_core::{GrayImage, Lcg64};

use crate::error::{Error, IoContext, Result};

const SPLIT_STREAM: u64 = 0x5350_4c49;
const REFERENCE_STREAM: u64 = 0x5245_4653;
pub const IMAGE_EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "tif", "tiff", "bmp", "pgm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetId {
    Icdar2011Dutch,
    Icdar2011Chinese,
    Bhsig260Bengali,
    Bhsig260Hindi,
    Custom,
}

impl DatasetId {
    pub const ALL: [DatasetId; 5] = [
        DatasetId::Icdar2011Dutch,
        DatasetId::Icdar2011Chinese,
        DatasetId::Bhsig260Bengali,
        DatasetId::Bhsig260Hindi,
        DatasetId::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Icdar2011Dutch => "icdar2011_dutch",
            DatasetId::Icdar2011Chinese => "icdar2011_chinese",
            DatasetId::Bhsig260Bengali => "bhsig260_bengali",
            DatasetId::Bhsig260Hindi => "bhsig260_hindi",
            DatasetId::Custom => "custom",
        }
    }

    /// `(pretrain writers, test writers)` for the built-in corpora.
    pub fn writer_counts(self) -> Option<(usize, usize)> {
        match self {
            DatasetId::Icdar2011Dutch => Some((10, 54)),
            DatasetId::Icdar2011Chinese => Some((10, 10)),
            DatasetId::Bhsig260Bengali => Some((50, 50)),
            DatasetId::Bhsig260Hindi => Some((50, 110)),
            DatasetId::Custom => None,
        }
    }

    /// Pretraining epochs used for this corpus.
    pub fn default_epochs(self) -> usize {
        match self {
            DatasetId::Bhsig260Bengali | DatasetId::Bhsig260Hindi => 200,
            _ => 500,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        DatasetId::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = DatasetId::ALL.iter().map(|d| d.name()).collect();
                format!("unknown dataset id {s:?} (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Pretrain,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Reference,
    Query,
    Unassigned,
}

macro_rules! text_enum {
    ($t:ty { $($v:ident => $s:literal),* }) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$v => $s),* }
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($s => Ok(Self::$v),)*
                    _ => Err(format!("unexpected value {s:?}")),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

text_enum!(Split { Pretrain => "pretrain", Test => "test" });
text_enum!(Role { Reference => "reference", Query => "query", Unassigned => "unassigned" });

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureSample {
    /// Relative to [`Manifest::root`] (or absolute).
    pub image_path: PathBuf,
    pub writer_id: String,
    pub label: Label,
    pub split: Split,
    pub role: Role,
}

impl SignatureSample {
    /// Stable identifier used in records and feature files.
    pub fn id(&self) -> String {
        path_string(&self.image_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub dataset_id: DatasetId,
    /// Directory that relative image paths are resolved against.
    pub root: PathBuf,
    pub samples: Vec<SignatureSample>,
    pub seed: u64,
}

fn path_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn hidden(p: &Path) -> bool {
    p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).context(|| format!("reading {}", dir.display()))? {
        let p = e.context(|| format!("reading {}", dir.display()))?.path();
        if !hidden(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn violation(path: &Path, reason: impl Into<String>) -> Error {
    Error::LayoutViolation {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn rel(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root).unwrap_or(p).to_path_buf()
}

impl Manifest {
    pub fn resolve(&self, sample: &SignatureSample) -> PathBuf {
        self.root.join(&sample.image_path)
    }

    pub fn writers(&self, split: Split) -> BTreeSet<&str> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.writer_id.as_str())
            .collect()
    }

    pub fn with_split(&self, split: Split) -> impl Iterator<Item = &SignatureSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &SignatureSample> {
        self.samples.iter().filter(move |s| s.role == role)
    }

    fn sort(&mut self) {
        self.samples.sort_by(|a, b| {
            (a.writer_id.as_str(), path_string(&a.image_path)).cmp(&(b.writer_id.as_str(), path_string(&b.image_path)))
        });
    }

    /// Check the manifest invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.samples {
            if s.role == Role::Reference && (s.label != Label::Genuine || s.split != Split::Test) {
                return Err(Error::Manifest(format!(
                    "{}: references must be genuine test samples",
                    s.image_path.display()
                )));
            }
            if !seen.insert((s.writer_id.as_str(), path_string(&s.image_path))) {
                return Err(Error::Manifest(format!(
                    "duplicate entry ({}, {})",
                    s.writer_id,
                    s.image_path.display()
                )));
            }
        }
        let pre = self.writers(Split::Pretrain);
        if let Some(w) = self.writers(Split::Test).intersection(&pre).next() {
            return Err(Error::Manifest(format!("writer {w:?} is in both the pretrain and test splits")));
        }
        Ok(())
    }

    fn check_counts(&self) -> Result<()> {
        let Some((n_pre, n_test)) = self.dataset_id.writer_counts() else {
            return Ok(());
        };
        let (pre, test) = (self.writers(Split::Pretrain).len(), self.writers(Split::Test).len());
        if (pre, test) != (n_pre, n_test) {
            return Err(Error::DatasetIncomplete(format!(
                "{}: found {pre} pretrain / {test} test writers, expected {n_pre} / {n_test}",
                self.dataset_id
            )));
        }
        Ok(())
    }

    /// Write the manifest as CSV with paths relative to the file's directory.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(base).context(|| format!("resolving {}", base.display()))?;
        let root = std::path::absolute(&self.root).context(|| format!("resolving {}", self.root.display()))?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["image_path", "writer_id", "label", "split", "role"])?;
        for s in &self.samples {
            let abs = normalize(&root.join(&s.image_path));
            let shown = relative_to(&abs, &base);
            w.write_record([
                path_string(&shown).as_str(),
                &s.writer_id,
                s.label.as_str(),
                s.split.as_str(),
                s.role.as_str(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
        crate::write_atomic(path, &bytes)
    }

    pub fn read_csv(path: &Path) -> Result<Manifest> {
        let text = fs::read(path).context(|| format!("reading manifest {}", path.display()))?;
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_slice());
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != ["image_path", "writer_id", "label", "split", "role"] {
            return Err(Error::Manifest(format!(
                "{}: expected header image_path,writer_id,label,split,role, got {}",
                path.display(),
                header.join(",")
            )));
        }
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str, e: String| Error::Manifest(format!("{} row {}: {what}: {e}", path.display(), line + 2));
            samples.push(SignatureSample {
                image_path: PathBuf::from(&rec[0]),
                writer_id: rec[1].to_owned(),
                label: rec[2].parse().map_err(|e: swis_core::Error| bad("label", e.to_string()))?,
                split: rec[3].parse().map_err(|e| bad("split", e))?,
                role: rec[4].parse().map_err(|e| bad("role", e))?,
            });
        }
        let root = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
        let mut m = Manifest {
            dataset_id: DatasetId::Custom,
            root,
            samples,
            seed: 0,
        };
        m.sort();
        m.validate()?;
        Ok(m)
    }
}

/// Lexically resolve `.` and `..`.
fn normalize(p: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let base = normalize(base);
    let (pc, bc): (Vec<_>, Vec<_>) = (path.components().collect(), base.components().collect());
    let common = pc.iter().zip(&bc).take_while(|(a, b)| a == b).count();
    if common == 0 {
        return path.to_path_buf();
    }
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &pc[common..] {
        out.push(c);
    }
    out
}

/// Discover a corpus and build its manifest.
pub fn build_manifest(root: &Path, dataset_id: DatasetId, seed: u64) -> Result<Manifest> {
    if !root.exists() {
        return Err(Error::DatasetNotFound(root.to_path_buf()));
    }
    if root.is_dir() && sorted_entries(root)?.is_empty() {
        return Err(Error::DatasetNotFound(root.to_path_buf()));
    }
    let mut m = match dataset_id {
        DatasetId::Bhsig260Bengali | DatasetId::Bhsig260Hindi => scan_bhsig(root, dataset_id, seed)?,
        DatasetId::Icdar2011Dutch | DatasetId::Icdar2011Chinese => scan_icdar(root, dataset_id, seed)?,
        DatasetId::Custom => {
            let csv = if root.is_dir() { root.join("manifest.csv") } else { root.to_path_buf() };
            if !csv.is_file() {
                return Err(Error::DatasetNotFound(csv));
            }
            let mut m = Manifest::read_csv(&csv)?;
            m.seed = seed;
            m
        }
    };
    if m.samples.is_empty() {
        return Err(Error::DatasetNotFound(root.to_path_buf()));
    }
    m.sort();
    m.validate()?;
    m.check_counts()?;
    Ok(m)
}

fn scan_bhsig(root: &Path, dataset_id: DatasetId, seed: u64) -> Result<Manifest> {
    let lang = if dataset_id == DatasetId::Bhsig260Bengali { "B" } else { "H" };
    let mut samples = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let writer = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let writer_num: u32 = writer
            .parse()
            .map_err(|_| violation(&dir, "writer directory names must be numeric"))?;
        for file in sorted_entries(&dir)?.into_iter().filter(|p| p.is_file() && is_image(p)) {
            let stem = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let parts: Vec<&str> = stem.split('-').collect();
            let expected = format!("expected {lang}-S-<writer>-<G|F>-<nn>");
            let [l, "S", w, gf, nn] = parts[..] else {
                return Err(violation(&file, expected));
            };
            if l != lang || nn.parse::<u32>().is_err() {
                return Err(violation(&file, expected));
            }
            if w.parse::<u32>().ok() != Some(writer_num) {
                return Err(violation(&file, format!("writer {w} does not match directory {writer}")));
            }
            let label = match gf {
                "G" => Label::Genuine,
                "F" => Label::Forged,
                _ => return Err(violation(&file, expected)),
            };
            samples.push(SignatureSample {
                image_path: rel(root, &file),
                writer_id: writer.clone(),
                label,
                split: Split::Test,
                role: Role::Unassigned,
            });
        }
    }
    let (n_pre, n_test) = dataset_id.writer_counts().unwrap_or((0, 0));
    let writers: Vec<String> = samples.iter().map(|s| s.writer_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if writers.len() != n_pre + n_test {
        return Err(Error::DatasetIncomplete(format!(
            "{dataset_id}: found {} writers, expected {}",
            writers.len(),
            n_pre + n_test
        )));
    }
    let pretrain = split_writers(&writers, n_pre, seed);
    for s in &mut samples {
        if pretrain.contains(&s.writer_id) {
            s.split = Split::Pretrain;
        }
    }
    Ok(Manifest {
        dataset_id,
        root: root.to_path_buf(),
        samples,
        seed,
    })
}

/// The `n_pretrain` writers chosen for pretraining: a pure function of the
/// sorted writer list and the seed.
pub fn split_writers(sorted_writers: &[String], n_pretrain: usize, seed: u64) -> BTreeSet<String> {
    let mut order: Vec<String> = sorted_writers.to_vec();
    Lcg64::new(derive_seed(seed, SPLIT_STREAM)).shuffle(&mut order);
    order.into_iter().take(n_pretrain).collect()
}

fn parse_icdar_name(file: &Path, writer: &str) -> Result<Label> {
    let stem = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let expected = "expected <www>_<nn> (genuine) or <ffff><www>_<nn> (forged)";
    let Some((id, nn)) = stem.split_once('_') else {
        return Err(violation(file, expected));
    };
    if nn.is_empty() || !nn.bytes().all(|b| b.is_ascii_digit()) || !id.bytes().all(|b| b.is_ascii_digit()) {
        return Err(violation(file, expected));
    }
    let (label, w) = match id.len() {
        3 => (Label::Genuine, id),
        7 => (Label::Forged, &id[4..]),
        _ => return Err(violation(file, expected)),
    };
    if w.parse::<u32>().ok() != writer.parse::<u32>().ok() {
        return Err(violation(file, format!("writer {w} does not match directory {writer}")));
    }
    Ok(label)
}

fn scan_icdar(root: &Path, dataset_id: DatasetId, seed: u64) -> Result<Manifest> {
    let mut samples = Vec::new();
    for (sub, split) in [("train", Split::Pretrain), ("test", Split::Test)] {
        let dir = root.join(sub);
        if !dir.is_dir() {
            if root.read_dir().map(|mut d| d.next().is_none()).unwrap_or(true) {
                return Err(Error::DatasetNotFound(root.to_path_buf()));
            }
            return Err(violation(&dir, "missing split directory"));
        }
        for wdir in sorted_entries(&dir)?.into_iter().filter(|p| p.is_dir()) {
            let writer = wdir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            if writer.parse::<u32>().is_err() {
                return Err(violation(&wdir, "writer directory names must be numeric"));
            }
            let mut files: Vec<(PathBuf, Role)> = sorted_entries(&wdir)?
                .into_iter()
                .filter(|p| p.is_file() && is_image(p))
                .map(|p| (p, Role::Unassigned))
                .collect();
            let refdir = wdir.join("reference");
            if split == Split::Test && refdir.is_dir() {
                files.extend(
                    sorted_entries(&refdir)?
                        .into_iter()
                        .filter(|p| p.is_file() && is_image(p))
                        .map(|p| (p, Role::Reference)),
                );
            }
            for (file, role) in files {
                let label = parse_icdar_name(&file, &writer)?;
                if role == Role::Reference && label != Label::Genuine {
                    return Err(violation(&file, "reference signatures must be genuine"));
                }
                samples.push(SignatureSample {
                    image_path: rel(root, &file),
                    writer_id: writer.clone(),
                    label,
                    split,
                    role,
                });
            }
        }
    }
    let m = Manifest {
        dataset_id,
        root: root.to_path_buf(),
        samples,
        seed,
    };
    if let Some(w) = m.writers(Split::Test).intersection(&m.writers(Split::Pretrain)).next() {
        return Err(violation(&root.join("test").join(w), "writer also appears under train/"));
    }
    Ok(m)
}

/// Mark `n_ref` genuine references per test writer and every other test
/// sample as a query. Shipped reference lists take precedence when `n_ref`
/// is nonzero.
pub fn assign_references(mut manifest: Manifest, n_ref: usize, seed: u64) -> Result<Manifest> {
    let provided = n_ref > 0 && manifest.samples.iter().any(|s| s.role == Role::Reference);
    let mut by_writer: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in manifest.samples.iter_mut().enumerate() {
        if s.split != Split::Test {
            s.role = Role::Unassigned;
            continue;
        }
        if provided && s.role == Role::Reference {
            continue;
        }
        s.role = Role::Query;
        if s.label == Label::Genuine {
            by_writer.entry(s.writer_id.clone()).or_default().push(i);
        }
    }
    if !provided {
        for writer in manifest.writers(Split::Test).into_iter().map(str::to_owned).collect::<Vec<_>>() {
            let mut genuine = by_writer.remove(&writer).unwrap_or_default();
            if genuine.len() < n_ref {
                return Err(Error::InsufficientReferences {
                    writer,
                    have: genuine.len(),
                    need: n_ref,
                });
            }
            let stream = derive_seed(derive_seed(seed, REFERENCE_STREAM), fnv1a(writer.as_bytes()));
            Lcg64::new(stream).shuffle(&mut genuine);
            for &i in &genuine[..n_ref] {
                manifest.samples[i].role = Role::Reference;
            }
        }
    }
    manifest.seed = seed;
    manifest.validate()?;
    Ok(manifest)
}

/// Decode an image file as 8-bit intensity. Colour is converted with BT.601
/// luma; transparency is composited over white.
pub fn load_grayscale(path: &Path) -> Result<GrayImage> {
    let corrupt = |reason: String| Error::CorruptImage {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = fs::read(path).context(|| format!("reading image {}", path.display()))?;
    let img = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| corrupt(e.to_string()))?
        .decode()
        .map_err(|e| corrupt(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let over_white = |v: u8, a: u8| ((v as u32 * a as u32 + 255 * (255 - a as u32) + 127) / 255) as u8;
    let gray = match img {
        image::DynamicImage::ImageLuma8(buf) => GrayImage::new(w, h, buf.into_raw())?,
        image::DynamicImage::ImageLuma16(_) | image::DynamicImage::ImageLumaA8(_) | image::DynamicImage::ImageLumaA16(_) => {
            let la = img.to_luma_alpha8();
            GrayImage::new(w, h, la.pixels().map(|p| over_white(p[0], p[1])).collect())?
        }
        other => {
            let rgba = other.to_rgba8();
            let px = rgba
                .pixels()
                .map(|p| swis_core::image::luma(over_white(p[0], p[3]), over_white(p[1], p[3]), over_white(p[2], p[3])))
                .collect();
            GrayImage::new(w, h, px)?
        }
    };
    Ok(gray)
}

pub fn save_grayscale(path: &Path, img: &GrayImage) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .ok_or_else(|| Error::Manifest("image buffer size mismatch".into()))?;
    let mut bytes = Vec::new();
    buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| corrupt_write(path, e))?;
    crate::write_atomic(path, &bytes)
}

fn corrupt_write(path: &Path, e: image::ImageError) -> Error {
    Error::CorruptImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(p: &Path) {
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, b"").unwrap();
    }

    fn bhsig_tree(root: &Path, lang: &str, writers: usize, genuine: usize, forged: usize) {
        for w in 1..=writers {
            for i in 1..=genuine {
                touch(&root.join(format!("{w}/{lang}-S-{w}-G-{i:02}.tif")));
            }
            for i in 1..=forged {
                touch(&root.join(format!("{w}/{lang}-S-{w}-F-{i:02}.tif")));
            }
        }
    }

    #[test]
    fn bhsig_hindi_split_counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        bhsig_tree(dir.path(), "H", 160, 2, 1);
        let m = build_manifest(dir.path(), DatasetId::Bhsig260Hindi, 7).unwrap();
        assert_eq!(m.writers(Split::Pretrain).len(), 50);
        assert_eq!(m.writers(Split::Test).len(), 110);
        assert_eq!(m.samples.len(), 160 * 3);
        assert_eq!(m, build_manifest(dir.path(), DatasetId::Bhsig260Hindi, 7).unwrap());
        let other = build_manifest(dir.path(), DatasetId::Bhsig260Hindi, 8).unwrap();
        assert_ne!(m.writers(Split::Pretrain), other.writers(Split::Pretrain));
        let keys: Vec<_> = m.samples.iter().map(|s| (s.writer_id.clone(), s.id())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn missing_and_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            build_manifest(&dir.path().join("nope"), DatasetId::Bhsig260Bengali, 0),
            Err(Error::DatasetNotFound(_))
        ));
        assert!(matches!(
            build_manifest(dir.path(), DatasetId::Bhsig260Bengali, 0),
            Err(Error::DatasetNotFound(_))
        ));
        bhsig_tree(dir.path(), "B", 12, 1, 0);
        assert!(matches!(
            build_manifest(dir.path(), DatasetId::Bhsig260Bengali, 0),
            Err(Error::DatasetIncomplete(_))
        ));
    }

    #[test]
    fn bad_filename_is_named() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("3/B-S-3-X-01.png"));
        match build_manifest(dir.path(), DatasetId::Bhsig260Bengali, 0) {
            Err(Error::LayoutViolation { path, .. }) => assert!(path.ends_with("B-S-3-X-01.png")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn icdar_shipped_division_and_references() {
        let dir = tempfile::tempdir().unwrap();
        for w in 1..=10 {
            touch(&dir.path().join(format!("train/{w:03}/{w:03}_01.png")));
            touch(&dir.path().join(format!("train/{w:03}/0042{w:03}_01.png")));
        }
        for w in 11..=20 {
            for i in 1..=3 {
                touch(&dir.path().join(format!("test/{w:03}/reference/{w:03}_{i:02}.png")));
            }
            touch(&dir.path().join(format!("test/{w:03}/{w:03}_09.png")));
            touch(&dir.path().join(format!("test/{w:03}/0007{w:03}_01.png")));
        }
        let m = build_manifest(dir.path(), DatasetId::Icdar2011Chinese, 1).unwrap();
        assert!(m.writers(Split::Pretrain).contains("001"));
        let m = assign_references(m, 8, 3).unwrap();
        assert_eq!(m.with_role(Role::Reference).count(), 30);
        assert_eq!(m.with_role(Role::Query).count(), 20);
        assert!(m
            .with_role(Role::Query)
            .any(|s| s.label == Label::Forged && s.image_path.ends_with("0007011_01.png")));
    }

    #[test]
    fn references_per_writer() {
        let dir = tempfile::tempdir().unwrap();
        bhsig_tree(dir.path(), "B", 100, 24, 30);
        let m = build_manifest(dir.path(), DatasetId::Bhsig260Bengali, 7).unwrap();
        let test_n = m.with_split(Split::Test).count();
        let a = assign_references(m.clone(), 8, 1).unwrap();
        let w = a.writers(Split::Test).into_iter().next().unwrap().to_owned();
        let mine: Vec<_> = a.samples.iter().filter(|s| s.writer_id == w).collect();
        assert_eq!(mine.iter().filter(|s| s.role == Role::Reference).count(), 8);
        assert_eq!(mine.iter().filter(|s| s.role == Role::Query && s.label == Label::Genuine).count(), 16);
        assert_eq!(mine.iter().filter(|s| s.role == Role::Query && s.label == Label::Forged).count(), 30);
        assert_eq!(a.with_role(Role::Reference).count() + a.with_role(Role::Query).count(), test_n);
        assert_eq!(a, assign_references(m.clone(), 8, 1).unwrap());
        let none = assign_references(m.clone(), 0, 1).unwrap();
        assert_eq!(none.with_role(Role::Query).count(), test_n);
        assert!(matches!(
            assign_references(m, 25, 1),
            Err(Error::InsufficientReferences { need: 25, have: 24, .. })
        ));
    }

    #[test]
    fn csv_round_trip_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        bhsig_tree(&data, "B", 100, 1, 1);
        let m = assign_references(build_manifest(&data, DatasetId::Bhsig260Bengali, 2).unwrap(), 1, 2).unwrap();
        let out = dir.path().join("meta/manifest.csv");
        fs::create_dir_all(out.parent().unwrap()).unwrap();
        m.write_csv(&out).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("image_path,writer_id,label,split,role\n"));
        assert!(text.lines().nth(1).unwrap().starts_with("../data/"));
        assert!(!text.contains('\r'));
        let back = Manifest::read_csv(&out).unwrap();
        assert_eq!(back.samples.len(), m.samples.len());
        for (a, b) in m.samples.iter().zip(&back.samples) {
            assert_eq!(normalize(&std::path::absolute(m.resolve(a)).unwrap()), normalize(&std::path::absolute(back.resolve(b)).unwrap()));
            assert_eq!((a.role, a.split, a.label), (b.role, b.split, b.label));
        }
        let again = dir.path().join("meta/again.csv");
        back.write_csv(&again).unwrap();
        assert_eq!(text, fs::read_to_string(&again).unwrap());
    }

    #[test]
    fn grayscale_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let img = image::RgbImage::from_fn(3, 1, |x, _| match x {
            0 => image::Rgb([255, 255, 255]),
            1 => image::Rgb([0, 0, 0]),
            _ => image::Rgb([255, 0, 0]),
        });
        img.save(&p).unwrap();
        assert_eq!(load_grayscale(&p).unwrap().pixels(), &[255, 0, 76]);
        let bad = dir.path().join("bad.png");
        fs::write(&bad, b"not an image").unwrap();
        assert!(matches!(load_grayscale(&bad), Err(Error::CorruptImage { .. })));
    }
}
