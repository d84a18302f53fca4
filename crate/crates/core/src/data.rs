//! Zero-shot datasets: validation, the four-file directory format, feature
//! export, and a synthetic benchmark with semantically clustered classes.
//!
//! Directory format (UTF-8, comma separated, LF endings, no header rows):
//!
//! * `features.csv` N rows of d reals
//! * `labels.csv` N rows of `class_id,split` with split ∈ {train, test_seen, test_unseen}
//! * `prototypes.csv` C rows of d_z reals; row index is the class id
//! * `classes.csv` C rows of `class_id,role` with role ∈ {seen, unseen}
//!
//! Reals are written in shortest round-trip form, so a load/save cycle is
//! bitwise lossless.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{normal_vec, standard_normal, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassRole {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleSplit {
    Train,
    TestSeen,
    TestUnseen,
}

impl fmt::Display for ClassRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassRole::Seen => "seen",
            ClassRole::Unseen => "unseen",
        })
    }
}

impl FromStr for ClassRole {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "seen" => Ok(ClassRole::Seen),
            "unseen" => Ok(ClassRole::Unseen),
            _ => Err(format!("unknown class role '{s}'")),
        }
    }
}

impl fmt::Display for SampleSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleSplit::Train => "train",
            SampleSplit::TestSeen => "test_seen",
            SampleSplit::TestUnseen => "test_unseen",
        })
    }
}

impl FromStr for SampleSplit {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SampleSplit::Train),
            "test_seen" => Ok(SampleSplit::TestSeen),
            "test_unseen" => Ok(SampleSplit::TestUnseen),
            _ => Err(format!("unknown split '{s}'")),
        }
    }
}

const FEATURES: &str = "features.csv";
const LABELS: &str = "labels.csv";
const PROTOTYPES: &str = "prototypes.csv";
const CLASSES: &str = "classes.csv";

/// Which file a validation failure points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Features,
    Labels,
    Prototypes,
}

impl Part {
    fn file(self) -> &'static str {
        match self {
            Part::Features => FEATURES,
            Part::Labels => LABELS,
            Part::Prototypes => PROTOTYPES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZslDataset {
    features: Tensor,
    labels: Vec<usize>,
    splits: Vec<SampleSplit>,
    roles: Vec<ClassRole>,
    semantic: Tensor,
}

impl ZslDataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        splits: Vec<SampleSplit>,
        roles: Vec<ClassRole>,
        semantic: Tensor,
    ) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            splits,
            roles,
            semantic,
        };
        ds.check().map_err(|(_, msg)| Error::Config(msg))?;
        Ok(ds)
    }

    fn check(&self) -> std::result::Result<(), (Part, String)> {
        let n = self.features.nrows();
        if self.labels.len() != n || self.splits.len() != n {
            return Err((
                Part::Labels,
                format!(
                    "{} label rows for {n} feature rows",
                    self.labels.len().min(self.splits.len())
                ),
            ));
        }
        let c = self.roles.len();
        if self.semantic.nrows() != c {
            return Err((
                Part::Prototypes,
                format!("{} prototype rows for {c} classes", self.semantic.nrows()),
            ));
        }
        if self.semantic.ncols() == 0 && c > 0 {
            return Err((Part::Prototypes, "prototypes have zero width".into()));
        }
        if let Some((i, _)) = self
            .features
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|x| !x.is_finite()))
        {
            return Err((Part::Features, format!("row {i}: non-finite feature")));
        }
        if let Some((i, _)) = self
            .semantic
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|x| !x.is_finite()))
        {
            return Err((Part::Prototypes, format!("row {i}: non-finite prototype")));
        }
        for (i, (&y, &split)) in self.labels.iter().zip(&self.splits).enumerate() {
            let Some(&role) = self.roles.get(y) else {
                return Err((
                    Part::Labels,
                    format!("row {i}: label {y} has no prototype row ({c} classes)"),
                ));
            };
            let ok = match split {
                SampleSplit::Train | SampleSplit::TestSeen => role == ClassRole::Seen,
                SampleSplit::TestUnseen => role == ClassRole::Unseen,
            };
            if !ok {
                return Err((
                    Part::Labels,
                    format!("row {i}: {split} sample labelled with {role} class {y}"),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn proto_dim(&self) -> usize {
        self.semantic.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.roles.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[SampleSplit] {
        &self.splits
    }

    pub fn roles(&self) -> &[ClassRole] {
        &self.roles
    }

    pub fn semantic_prototypes(&self) -> &Tensor {
        &self.semantic
    }

    pub fn classes_with_role(&self, role: ClassRole) -> Vec<usize> {
        (0..self.roles.len()).filter(|&c| self.roles[c] == role).collect()
    }

    pub fn seen_classes(&self) -> Vec<usize> {
        self.classes_with_role(ClassRole::Seen)
    }

    pub fn unseen_classes(&self) -> Vec<usize> {
        self.classes_with_role(ClassRole::Unseen)
    }

    /// Map seen-class ids to their position among the seen classes (the
    /// row order of the reward model).
    pub fn seen_local_labels(&self, labels: &[usize]) -> Result<Vec<usize>> {
        let seen = self.seen_classes();
        labels
            .iter()
            .map(|y| {
                seen.binary_search(y)
                    .map_err(|_| Error::Config(format!("class {y} is not a seen class")))
            })
            .collect()
    }

    pub fn rows_in(&self, split: SampleSplit) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Features and labels of one split.
    pub fn split(&self, split: SampleSplit) -> (Tensor, Vec<usize>) {
        let rows = self.rows_in(split);
        (
            self.features.select(Axis(0), &rows),
            rows.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// z^c rows for a batch of labels.
    pub fn semantic_rows(&self, labels: &[usize]) -> Tensor {
        self.semantic.select(Axis(0), labels)
    }

    /// Copy with every feature column standardized by train-row statistics.
    pub fn standardized(&self) -> Result<Self> {
        let train = self.rows_in(SampleSplit::Train);
        if train.is_empty() {
            return Err(Error::Config("standardization needs train rows".into()));
        }
        let x = self.features.select(Axis(0), &train);
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        let mut out = self.clone();
        out.features = (&self.features - &mean.insert_axis(Axis(0))) / &std.insert_axis(Axis(0));
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&dir.join(FEATURES), &self.features)?;
        write_matrix(&dir.join(PROTOTYPES), &self.semantic)?;
        let mut labels = String::new();
        for (y, s) in self.labels.iter().zip(&self.splits) {
            labels.push_str(&format!("{y},{s}\n"));
        }
        write_text(&dir.join(LABELS), &labels)?;
        let mut classes = String::new();
        for (c, r) in self.roles.iter().enumerate() {
            classes.push_str(&format!("{c},{r}\n"));
        }
        write_text(&dir.join(CLASSES), &classes)
    }

    /// Load and validate the four-file directory format.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        let features_path = dir.join(FEATURES);
        let features = read_matrix(&features_path)?;

        let labels_path = dir.join(LABELS);
        let mut labels = vec![];
        let mut splits = vec![];
        for (line, rec) in read_records(&labels_path)?.into_iter().enumerate() {
            if rec.len() != 2 {
                return Err(Error::invalid(&labels_path, format!("line {}: expected `class,split`", line + 1)));
            }
            labels.push(parse_field::<usize>(&rec[0], &labels_path, line)?);
            splits.push(
                rec[1]
                    .parse::<SampleSplit>()
                    .map_err(|m| Error::invalid(&labels_path, format!("line {}: {m}", line + 1)))?,
            );
        }

        let proto_path = dir.join(PROTOTYPES);
        let semantic = read_matrix(&proto_path)?;

        let classes_path = dir.join(CLASSES);
        let mut roles = vec![];
        for (line, rec) in read_records(&classes_path)?.into_iter().enumerate() {
            if rec.len() != 2 {
                return Err(Error::invalid(&classes_path, format!("line {}: expected `class,role`", line + 1)));
            }
            let id = parse_field::<usize>(&rec[0], &classes_path, line)?;
            if id != line {
                return Err(Error::invalid(
                    &classes_path,
                    format!("line {}: class ids must be 0..C in order, found {id}", line + 1),
                ));
            }
            roles.push(
                rec[1]
                    .parse::<ClassRole>()
                    .map_err(|m| Error::invalid(&classes_path, format!("line {}: {m}", line + 1)))?,
            );
        }

        if features.nrows() > 0 && semantic.nrows() > 0 && features.ncols() == 0 {
            return Err(Error::invalid(&features_path, "features have zero width"));
        }
        let ds = Self {
            features,
            labels,
            splits,
            roles,
            semantic,
        };
        ds.check()
            .map_err(|(part, msg)| Error::invalid(dir.join(part.file()), msg))?;
        Ok(ds)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:?}")
}

fn matrix_text(m: &Tensor) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|x| format_real(*x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn write_matrix(path: &Path, m: &Tensor) -> Result<()> {
    write_text(path, &matrix_text(m))
}

fn csv_reader(path: &Path, headers: bool) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(headers)
        .flexible(true)
        .from_reader(file))
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    csv_reader(path, false)?
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::invalid(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn parse_field<T: FromStr>(s: &str, path: &Path, line: usize) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::invalid(path, format!("line {}: cannot parse '{s}'", line + 1)))
}

fn records_to_matrix(records: &[csv::StringRecord], path: &Path, skip: usize) -> Result<Tensor> {
    let width = records.first().map(|r| r.len().saturating_sub(skip)).unwrap_or(0);
    let mut data = Vec::with_capacity(records.len() * width);
    for (line, rec) in records.iter().enumerate() {
        if rec.len() - skip.min(rec.len()) != width {
            return Err(Error::invalid(
                path,
                format!("line {}: expected {width} values, found {}", line + 1, rec.len().saturating_sub(skip)),
            ));
        }
        for cell in rec.iter().skip(skip) {
            data.push(parse_field::<f64>(cell, path, line)?);
        }
    }
    Ok(Array2::from_shape_vec((records.len(), width), data).expect("sized"))
}

fn read_matrix(path: &Path) -> Result<Tensor> {
    let records = read_records(path)?;
    records_to_matrix(&records, path, 0)
}

/// Write `label,x_1..x_d` rows under a `label,f0,...` header, for external
/// plotting or projection tools.
pub fn export_features(features: &Tensor, labels: &[usize], path: &Path) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::Usage(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let mut s = String::from("label");
    for j in 0..features.ncols() {
        s.push_str(&format!(",f{j}"));
    }
    s.push('\n');
    for (row, y) in features.rows().into_iter().zip(labels) {
        s.push_str(&y.to_string());
        for x in row {
            s.push(',');
            s.push_str(&format_real(*x));
        }
        s.push('\n');
    }
    write_text(path, &s)
}

/// Read a file written by [`export_features`].
pub fn load_exported_features(path: &Path) -> Result<(Tensor, Vec<usize>)> {
    let mut rdr = csv_reader(path, true)?;
    let header_width = rdr
        .headers()
        .map_err(|e| Error::invalid(path, format!("header: {e}")))?
        .len();
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::invalid(path, format!("line {}: {e}", i + 2))))
        .collect::<Result<_>>()?;
    let mut labels = Vec::with_capacity(records.len());
    for (line, rec) in records.iter().enumerate() {
        labels.push(parse_field::<usize>(&rec[0], path, line + 1)?);
    }
    let m = records_to_matrix(&records, path, 1)?;
    if records.is_empty() {
        return Ok((Array2::zeros((0, header_width.saturating_sub(1))), labels));
    }
    Ok((m, labels))
}

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_seen: usize,
    pub n_unseen: usize,
    pub d: usize,
    pub d_z: usize,
    pub samples_per_class: usize,
    /// Consecutive classes sharing one semantic cluster centre.
    pub semantic_cluster_size: usize,
    pub semantic_jitter: f64,
    pub visual_separation: f64,
    pub visual_sigma: f64,
    /// Share of each seen class's samples held out as `test_seen`.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_seen: 20,
            n_unseen: 5,
            d: 32,
            d_z: 16,
            samples_per_class: 60,
            semantic_cluster_size: 5,
            semantic_jitter: 0.05,
            visual_separation: 6.0,
            visual_sigma: 1.0,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Rejection rounds before synthetic mean placement gives up.
pub const PLACEMENT_ROUNDS: usize = 200;
const PLACEMENT_TRIES_PER_CLASS: usize = 200;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let problems = [
            (self.n_seen == 0, "n_seen must be positive"),
            (self.n_unseen == 0, "n_unseen must be positive"),
            (self.d == 0, "d must be positive"),
            (self.d_z < 2, "d_z must be at least 2"),
            (self.samples_per_class == 0, "samples_per_class must be positive"),
            (self.semantic_cluster_size == 0, "semantic_cluster_size must be at least 1"),
            (self.semantic_jitter.is_nan() || self.semantic_jitter < 0.0, "semantic_jitter must be >= 0"),
            (self.visual_separation.is_nan() || self.visual_separation <= 0.0, "visual_separation must be positive"),
            (self.visual_sigma.is_nan() || self.visual_sigma <= 0.0, "visual_sigma must be positive"),
            (!(0.0..1.0).contains(&self.test_fraction), "test_fraction must be in [0, 1)"),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.n_seen + self.n_unseen
    }

    /// Cluster index of each class (consecutive blocks; last may be short).
    pub fn cluster_of(&self, class: usize) -> usize {
        class / self.semantic_cluster_size
    }

    /// Unseen classes are taken from the tail of each cluster, a few per
    /// cluster, so unseen classes compete with semantically close
    /// neighbours, including other unseen ones.
    pub fn unseen_classes(&self) -> Vec<usize> {
        let c = self.num_classes();
        let k = c.div_ceil(self.semantic_cluster_size);
        let per = self.n_unseen.div_ceil(k).max(2).min(self.semantic_cluster_size);
        let mut out = vec![];
        let mut take = per;
        while out.len() < self.n_unseen {
            for cluster in 0..k {
                let start = cluster * self.semantic_cluster_size;
                let end = (start + self.semantic_cluster_size).min(c);
                for cls in (start..end).rev().take(take) {
                    if out.len() < self.n_unseen && !out.contains(&cls) {
                        out.push(cls);
                    }
                }
            }
            take += 1;
        }
        out.sort_unstable();
        out
    }
}

fn random_unit(rng: &mut Rng, n: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    Array2::from_shape_fn((rows, cols), |_| std * standard_normal(rng))
}

fn dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Class means placed by the synthetic generator, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLayout {
    pub visual_means: Tensor,
    pub unseen: Vec<usize>,
}

/// Build the synthetic benchmark.
///
/// Semantic prototypes split into a coarse block (the cluster centre, unit
/// norm, shared by the whole cluster) and a fine block (a per-class unit
/// direction scaled by `semantic_jitter`). Visual means are a fixed linear
/// map of both blocks, with the fine block amplified so that classes whose
/// prototypes differ only by jitter still sit at least `visual_separation`
/// apart. Class means are therefore a learnable function of the prototype,
/// but resolving classes inside a cluster requires a high-gain response to
/// small semantic differences.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<ZslDataset> {
    make_synthetic_with_layout(spec).map(|(ds, _)| ds)
}

pub fn make_synthetic_with_layout(spec: &SyntheticSpec) -> Result<(ZslDataset, SyntheticLayout)> {
    spec.validate()?;
    let mut rng = crate::rng::stream(spec.seed, crate::rng::Stream::Data);
    let c = spec.num_classes();
    let k = c.div_ceil(spec.semantic_cluster_size);
    let coarse = spec.d_z / 2;
    let fine = spec.d_z - coarse;
    let sep = spec.visual_separation;
    let root_d = (spec.d as f64).sqrt();
    // Expected distance between two cluster centres ≈ 2·sep, between two
    // classes of one cluster ≈ 1.5·sep (both unit vectors differ by ≈ √2).
    let coarse_std = 2.0 * sep / (root_d * std::f64::consts::SQRT_2);
    let fine_std = 1.5 * sep / (root_d * std::f64::consts::SQRT_2);

    for _round in 0..PLACEMENT_ROUNDS {
        let a = gaussian_matrix(&mut rng, spec.d, coarse, coarse_std);
        let b = gaussian_matrix(&mut rng, spec.d, fine, fine_std);
        let centres: Vec<Vec<f64>> = (0..k).map(|_| random_unit(&mut rng, coarse)).collect();
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(c);
        let mut means: Vec<Array1<f64>> = Vec::with_capacity(c);
        let mut failed = false;
        'classes: for cls in 0..c {
            let centre = Array1::from(centres[spec.cluster_of(cls)].clone());
            let base = a.dot(&centre);
            for _ in 0..PLACEMENT_TRIES_PER_CLASS {
                let u = random_unit(&mut rng, fine);
                let mu = &base + &b.dot(&Array1::from(u.clone()));
                if means.iter().all(|m| dist(m, &mu) >= sep) {
                    dirs.push(u);
                    means.push(mu);
                    continue 'classes;
                }
            }
            failed = true;
            break;
        }
        if failed {
            continue;
        }

        let mut semantic = Array2::zeros((c, spec.d_z));
        for cls in 0..c {
            let centre = &centres[spec.cluster_of(cls)];
            for j in 0..coarse {
                semantic[[cls, j]] = centre[j];
            }
            for j in 0..fine {
                semantic[[cls, coarse + j]] = spec.semantic_jitter * dirs[cls][j];
            }
        }

        let unseen = spec.unseen_classes();
        let roles: Vec<ClassRole> = (0..c)
            .map(|cls| if unseen.contains(&cls) { ClassRole::Unseen } else { ClassRole::Seen })
            .collect();
        let n_test = (spec.samples_per_class as f64 * spec.test_fraction).round() as usize;
        let mut rows = vec![];
        let mut labels = vec![];
        let mut splits = vec![];
        for cls in 0..c {
            let mut tags: Vec<SampleSplit> = match roles[cls] {
                ClassRole::Unseen => vec![SampleSplit::TestUnseen; spec.samples_per_class],
                ClassRole::Seen => (0..spec.samples_per_class)
                    .map(|i| if i < n_test { SampleSplit::TestSeen } else { SampleSplit::Train })
                    .collect(),
            };
            tags.shuffle(&mut rng);
            for tag in tags {
                let noise = normal_vec(&mut rng, spec.d);
                rows.extend(means[cls].iter().zip(&noise).map(|(m, e)| m + spec.visual_sigma * e));
                labels.push(cls);
                splits.push(tag);
            }
        }
        let features = Array2::from_shape_vec((labels.len(), spec.d), rows).expect("sized");
        let mut visual_means = Array2::zeros((c, spec.d));
        for (cls, m) in means.iter().enumerate() {
            visual_means.row_mut(cls).assign(m);
        }
        let ds = ZslDataset::new(features, labels, splits, roles, semantic)?;
        return Ok((ds, SyntheticLayout { visual_means, unseen }));
    }
    Err(Error::Config(format!(
        "could not place {c} class means {sep} apart in d = {} after {PLACEMENT_ROUNDS} rounds; \
         increase d or reduce visual_separation",
        spec.d
    )))
}

/// Path helpers for the directory format.
pub fn dataset_files(dir: &Path) -> [PathBuf; 4] {
    [FEATURES, LABELS, PROTOTYPES, CLASSES].map(|f| dir.join(f))
}
