//! Dataset abstraction for irregular, heterogeneous multivariate time series:
//! per-patient F×T grids with missing cells, masking/reshaping views consumed
//! by the graph estimators, and the train/test/fold splitting protocol.
//!
//! Everything here is immutable after construction; all operations are pure
//! functions of (input, seed) and safe to call concurrently.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Whether a feature carries binary {0,1} values or arbitrary reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Continuous,
}

impl FeatureKind {
    pub fn is_binary(self) -> bool {
        matches!(self, FeatureKind::Binary)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureDecl {
    name: String,
    kind: FeatureKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaWire {
    #[serde(rename = "F")]
    f: usize,
    #[serde(rename = "T")]
    t: usize,
    features: Vec<FeatureDecl>,
}

/// Declares F, T and the name/kind of every feature.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SchemaWire", into = "SchemaWire")]
pub struct DatasetSchema {
    pub num_features: usize,
    pub num_steps: usize,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
}

impl DatasetSchema {
    pub fn new(
        num_steps: usize,
        features: Vec<(String, FeatureKind)>,
    ) -> Result<Self> {
        let (feature_names, feature_kinds): (Vec<_>, Vec<_>) = features.into_iter().unzip();
        let schema = DatasetSchema {
            num_features: feature_names.len(),
            num_steps,
            feature_names,
            feature_kinds,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 {
            return Err(Error::Schema("schema declares zero features".into()));
        }
        if self.num_steps == 0 {
            return Err(Error::Schema("schema declares zero time steps".into()));
        }
        if self.feature_names.len() != self.num_features
            || self.feature_kinds.len() != self.num_features
        {
            return Err(Error::Schema(format!(
                "feature name/kind lists must both have length F={}",
                self.num_features
            )));
        }
        let mut seen = HashSet::new();
        for name in &self.feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name '{name}'")));
            }
        }
        Ok(())
    }
}

impl TryFrom<SchemaWire> for DatasetSchema {
    type Error = Error;

    fn try_from(w: SchemaWire) -> Result<Self> {
        if w.features.len() != w.f {
            return Err(Error::Schema(format!(
                "schema declares F={} but lists {} features",
                w.f,
                w.features.len()
            )));
        }
        let schema = DatasetSchema {
            num_features: w.f,
            num_steps: w.t,
            feature_names: w.features.iter().map(|d| d.name.clone()).collect(),
            feature_kinds: w.features.iter().map(|d| d.kind).collect(),
        };
        schema.validate()?;
        Ok(schema)
    }
}

impl From<DatasetSchema> for SchemaWire {
    fn from(s: DatasetSchema) -> SchemaWire {
        SchemaWire {
            f: s.num_features,
            t: s.num_steps,
            features: s
                .feature_names
                .into_iter()
                .zip(s.feature_kinds)
                .map(|(name, kind)| FeatureDecl { name, kind })
                .collect(),
        }
    }
}

/// One patient: an F×T grid of optional values plus a binary label.
///
/// `grid[f][t]` is the value of feature `f` at step `t`, `None` when missing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub label: u8,
    #[serde(rename = "X")]
    pub grid: Vec<Vec<Option<f64>>>,
}

impl PatientRecord {
    pub fn value(&self, f: usize, t: usize) -> Option<f64> {
        self.grid[f][t]
    }

    pub fn num_features(&self) -> usize {
        self.grid.len()
    }

    pub fn num_steps(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    /// True if the patient has at least one observed cell at step `t`.
    pub fn observed_at(&self, t: usize) -> bool {
        self.grid.iter().any(|row| row[t].is_some())
    }

    fn validate(&self, schema: &DatasetSchema) -> Result<()> {
        if self.grid.len() != schema.num_features {
            return Err(Error::Dimension(format!(
                "patient '{}': grid has {} rows, schema declares F={}",
                self.id,
                self.grid.len(),
                schema.num_features
            )));
        }
        for (f, row) in self.grid.iter().enumerate() {
            if row.len() != schema.num_steps {
                return Err(Error::Dimension(format!(
                    "patient '{}': feature {} has {} steps, schema declares T={}",
                    self.id,
                    f,
                    row.len(),
                    schema.num_steps
                )));
            }
            for (t, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    if !v.is_finite() {
                        return Err(Error::Schema(format!(
                            "patient '{}': non-finite value at (f={f}, t={t})",
                            self.id
                        )));
                    }
                    if schema.feature_kinds[f].is_binary() && *v != 0.0 && *v != 1.0 {
                        return Err(Error::Schema(format!(
                            "patient '{}': binary feature '{}' holds {v} at t={t}",
                            self.id, schema.feature_names[f]
                        )));
                    }
                }
            }
        }
        if self.label > 1 {
            return Err(Error::Schema(format!(
                "patient '{}': label must be 0 or 1, got {}",
                self.id, self.label
            )));
        }
        Ok(())
    }
}

/// A validated cohort: schema plus P patient records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub patients: Vec<PatientRecord>,
}

impl Dataset {
    pub fn new(schema: DatasetSchema, patients: Vec<PatientRecord>) -> Result<Self> {
        let dataset = Dataset { schema, patients };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.patients.is_empty() {
            return Err(Error::Schema("dataset holds no patients".into()));
        }
        let mut ids = HashSet::new();
        for patient in &self.patients {
            patient.validate(&self.schema)?;
            if !ids.insert(patient.id.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate patient id '{}'",
                    patient.id
                )));
            }
        }
        Ok(())
    }

    pub fn num_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn patient(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.iter().find(|p| p.id == id)
    }

    /// Restriction to the given ids, preserving dataset order. Ids not present
    /// are an error; the pipeline uses this to carve out the training subset.
    pub fn subset(&self, ids: &[String]) -> Result<Dataset> {
        let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
        for id in ids {
            if self.patient(id).is_none() {
                return Err(Error::Split(format!("unknown patient id '{id}'")));
            }
        }
        let patients = self
            .patients
            .iter()
            .filter(|p| wanted.contains(p.id.as_str()))
            .cloned()
            .collect();
        Dataset::new(self.schema.clone(), patients)
    }
}

/// Load and validate a dataset from its JSON file format.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let dataset: Dataset = io::read_json(path)?;
    dataset.validate()?;
    Ok(dataset)
}

/// Write a dataset in the JSON file format (atomic).
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    io::write_json(path, dataset)
}

/// Time-major vectorization with zero padding of missing cells.
///
/// Entry `t*F + f` holds feature `f` at step `t`, matching the node ordering
/// of the FT×FT spatio-temporal adjacency; missing cells become 0.
pub fn vectorize_zeropad(record: &PatientRecord) -> Array1<f64> {
    let f_count = record.num_features();
    let t_count = record.num_steps();
    let mut v = Array1::zeros(f_count * t_count);
    for (f, row) in record.grid.iter().enumerate() {
        // rows beyond the first row's length would be a schema violation;
        // clip rather than index out of bounds
        for (t, cell) in row.iter().take(t_count).enumerate() {
            if let Some(x) = cell {
                v[t * f_count + f] = *x;
            }
        }
    }
    v
}

/// Per-feature imputation values: mean (continuous) or majority (binary),
/// computed per time step with a global per-feature fallback.
///
/// Compute these from the training subset only when leakage matters; the
/// estimators accept whatever population they are given.
#[derive(Debug, Clone)]
pub struct ImputeStats {
    /// `per_step[(f, t)]`; NaN when feature f was never observed at step t.
    per_step: Array2<f64>,
    /// Per-feature fallback over all steps; NaN when never observed at all.
    global: Vec<f64>,
}

impl ImputeStats {
    pub fn from_dataset(dataset: &Dataset) -> ImputeStats {
        let f_count = dataset.schema.num_features;
        let t_count = dataset.schema.num_steps;
        let mut per_step = Array2::from_elem((f_count, t_count), f64::NAN);
        let mut global = vec![f64::NAN; f_count];
        for f in 0..f_count {
            let binary = dataset.schema.feature_kinds[f].is_binary();
            let mut all = Vec::new();
            for t in 0..t_count {
                let observed: Vec<f64> = dataset
                    .patients
                    .iter()
                    .filter_map(|p| p.value(f, t))
                    .collect();
                if !observed.is_empty() {
                    per_step[(f, t)] = summarize(&observed, binary);
                }
                all.extend(observed);
            }
            if !all.is_empty() {
                global[f] = summarize(&all, binary);
            }
        }
        ImputeStats { per_step, global }
    }

    /// Imputation value for feature `f` at step `t`: per-step statistic,
    /// falling back to the per-feature global one, then to 0.
    pub fn value(&self, f: usize, t: usize) -> f64 {
        let v = self.per_step[(f, t)];
        if v.is_finite() {
            return v;
        }
        let g = self.global[f];
        if g.is_finite() {
            g
        } else {
            0.0
        }
    }
}

/// Mean for continuous features, majority value for binary (ties go to 0).
fn summarize(values: &[f64], binary: bool) -> f64 {
    if binary {
        let ones = values.iter().filter(|v| **v == 1.0).count();
        if 2 * ones > values.len() {
            1.0
        } else {
            0.0
        }
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// One time step of the cohort, masked to patients with data and densified.
#[derive(Debug, Clone)]
pub struct MaskedSlice {
    /// F×P_t dense matrix; residual missing cells are imputed.
    pub values: Array2<f64>,
    pub patient_ids: Vec<String>,
    pub time_index: usize,
}

impl MaskedSlice {
    pub fn num_kept(&self) -> usize {
        self.patient_ids.len()
    }
}

/// Drop the patients with no observation at step `t`, impute the residual
/// missing cells inside kept columns, and return the dense F×P_t slice.
pub fn mask_time_slice(dataset: &Dataset, t: usize) -> Result<MaskedSlice> {
    mask_time_slice_with(dataset, t, &ImputeStats::from_dataset(dataset))
}

/// As [`mask_time_slice`], with caller-supplied imputation statistics
/// (typically computed on the training subset).
pub fn mask_time_slice_with(
    dataset: &Dataset,
    t: usize,
    stats: &ImputeStats,
) -> Result<MaskedSlice> {
    if t >= dataset.schema.num_steps {
        return Err(Error::Dimension(format!(
            "time step {t} out of range (T={})",
            dataset.schema.num_steps
        )));
    }
    let kept: Vec<&PatientRecord> = dataset
        .patients
        .iter()
        .filter(|p| p.observed_at(t))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySlice { t });
    }
    let f_count = dataset.schema.num_features;
    let mut values = Array2::zeros((f_count, kept.len()));
    for (col, patient) in kept.iter().enumerate() {
        for f in 0..f_count {
            values[(f, col)] = patient.value(f, t).unwrap_or_else(|| stats.value(f, t));
        }
    }
    Ok(MaskedSlice {
        values,
        patient_ids: kept.iter().map(|p| p.id.clone()).collect(),
        time_index: t,
    })
}

/// The whole cohort rearranged into one F×K matrix.
#[derive(Debug, Clone)]
pub struct FlattenedAll {
    /// F×K matrix over all (t, p) columns that carry at least one observation.
    pub values: Array2<f64>,
    /// `(t, patient_index)` provenance of each column, t-major then patient.
    pub columns: Vec<(usize, usize)>,
}

/// Rearrange every observed (t, p) column into a single dense F×K matrix,
/// skipping fully missing columns and imputing residual missing cells.
pub fn flatten_all(dataset: &Dataset) -> Result<FlattenedAll> {
    let stats = ImputeStats::from_dataset(dataset);
    let f_count = dataset.schema.num_features;
    let mut columns = Vec::new();
    for t in 0..dataset.schema.num_steps {
        for (p, patient) in dataset.patients.iter().enumerate() {
            if patient.observed_at(t) {
                columns.push((t, p));
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::Schema(
            "dataset has no observed (t, patient) columns".into(),
        ));
    }
    let mut values = Array2::zeros((f_count, columns.len()));
    for (col, &(t, p)) in columns.iter().enumerate() {
        let patient = &dataset.patients[p];
        for f in 0..f_count {
            values[(f, col)] = patient.value(f, t).unwrap_or_else(|| stats.value(f, t));
        }
    }
    Ok(FlattenedAll { values, columns })
}

/// The P×T time series of one feature across all patients, missing cells kept.
pub fn feature_slice(dataset: &Dataset, f: usize) -> Result<Array2<Option<f64>>> {
    if f >= dataset.schema.num_features {
        return Err(Error::Dimension(format!(
            "feature index {f} out of range (F={})",
            dataset.schema.num_features
        )));
    }
    let p_count = dataset.num_patients();
    let t_count = dataset.schema.num_steps;
    let mut slice = Array2::from_elem((p_count, t_count), None);
    for (p, patient) in dataset.patients.iter().enumerate() {
        for t in 0..t_count {
            slice[(p, t)] = patient.value(f, t);
        }
    }
    Ok(slice)
}

/// Dense variant of [`feature_slice`] with missing cells imputed from `stats`.
pub fn feature_slice_imputed(
    dataset: &Dataset,
    f: usize,
    stats: &ImputeStats,
) -> Result<Array2<f64>> {
    let slice = feature_slice(dataset, f)?;
    Ok(Array2::from_shape_fn(slice.dim(), |(p, t)| {
        slice[(p, t)].unwrap_or_else(|| stats.value(f, t))
    }))
}

/// One cross-validation fold over the balanced training ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<String>,
    pub validate: Vec<String>,
}

/// Train/test partition plus balanced-training folds, reproducible from seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Training ids after majority-class undersampling; equal class counts.
    pub balanced_train_ids: Vec<String>,
    pub folds: Vec<FoldSplit>,
}

impl SplitPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<SplitPlan> {
        io::read_json(path)
    }
}

/// Stratified test split, seeded majority-class undersampling of the training
/// set, and a stratified k-fold partition of the balanced ids.
pub fn make_split(
    dataset: &Dataset,
    test_fraction: f64,
    k_folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::Split(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if k_folds < 2 {
        return Err(Error::Split(format!("k_folds must be >= 2, got {k_folds}")));
    }
    let mut pos: Vec<String> = Vec::new();
    let mut neg: Vec<String> = Vec::new();
    for p in &dataset.patients {
        if p.label == 1 {
            pos.push(p.id.clone());
        } else {
            neg.push(p.id.clone());
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass(
            "both classes must be present to split".into(),
        ));
    }
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::Split(
            "each class needs at least 2 patients to appear in train and test".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    // Rounding ties favor the positive (minority) class staying in training.
    let n_test_pos = stratified_test_count(test_fraction, pos.len(), true);
    let n_test_neg = stratified_test_count(test_fraction, neg.len(), false);

    let test_set: HashSet<&str> = pos[..n_test_pos]
        .iter()
        .chain(neg[..n_test_neg].iter())
        .map(String::as_str)
        .collect();
    let test_ids: Vec<String> = dataset
        .patients
        .iter()
        .filter(|p| test_set.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    let train_ids: Vec<String> = dataset
        .patients
        .iter()
        .filter(|p| !test_set.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();

    // Undersample the majority class within the training ids.
    let mut train_pos: Vec<String> = pos[n_test_pos..].to_vec();
    let mut train_neg: Vec<String> = neg[n_test_neg..].to_vec();
    let keep = train_pos.len().min(train_neg.len());
    train_pos.shuffle(&mut rng);
    train_neg.shuffle(&mut rng);
    train_pos.truncate(keep);
    train_neg.truncate(keep);

    let balanced = 2 * keep;
    if balanced < k_folds {
        return Err(Error::Split(format!(
            "balanced training set has {balanced} patients, fewer than k_folds={k_folds}"
        )));
    }

    // Stratified round-robin fold assignment keeps classes spread evenly.
    let mut fold_members: Vec<Vec<String>> = vec![Vec::new(); k_folds];
    for (i, id) in train_pos.iter().enumerate() {
        fold_members[i % k_folds].push(id.clone());
    }
    for (i, id) in train_neg.iter().enumerate() {
        fold_members[i % k_folds].push(id.clone());
    }

    let balanced_train_ids: Vec<String> = fold_members.iter().flatten().cloned().collect();
    let folds = (0..k_folds)
        .map(|k| FoldSplit {
            validate: fold_members[k].clone(),
            train: fold_members
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, m)| m.iter().cloned())
                .collect(),
        })
        .collect();

    Ok(SplitPlan {
        seed,
        train_ids,
        test_ids,
        balanced_train_ids,
        folds,
    })
}

fn stratified_test_count(test_fraction: f64, n: usize, positive: bool) -> usize {
    let target = test_fraction * n as f64;
    let floor = target.floor();
    let count = if (target - floor - 0.5).abs() < 1e-12 {
        // Exact .5: positives round down (stay in training), negatives up.
        if positive {
            floor as usize
        } else {
            floor as usize + 1
        }
    } else {
        target.round() as usize
    };
    count.clamp(1, n - 1)
}
