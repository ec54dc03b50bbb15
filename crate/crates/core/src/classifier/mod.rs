//! Profile classification: feature extraction, min-max scaling, seeded
//! 80/20 splits, linear SVM / CART / random forest trained from scratch,
//! evaluation, feature-group ablation and in-the-wild flagging.

mod eval;
mod features;
mod forest;
mod scale;
mod split;
mod svm;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diversity::Group;
use crate::error::{Error, Result};
use crate::seed;

pub use eval::{Confusion, EvalReport};
pub use features::{extract_features, FeatureCatalog, FeatureGroup, FeatureInputs, FeatureVector};
pub use forest::{ForestConfig, RandomForest};
pub use scale::MinMaxScaler;
pub use split::{split_80_20, Split, MIN_EXAMPLES, TEST_FRACTION};
pub use svm::{LinearSvm, SvmConfig, SvmTrace};
pub use tree::{DecisionTree, Node, TreeConfig};

pub const MODEL_FORMAT: &str = "mission-profiler/model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearSvm,
    DecisionTree,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::LinearSvm, ModelKind::DecisionTree, ModelKind::RandomForest];

    pub fn short(self) -> &'static str {
        match self {
            ModelKind::LinearSvm => "svm",
            ModelKind::DecisionTree => "tree",
            ModelKind::RandomForest => "forest",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svm" | "linear_svm" => Ok(ModelKind::LinearSvm),
            "tree" | "decision_tree" | "cart" => Ok(ModelKind::DecisionTree),
            "forest" | "random_forest" | "rf" => Ok(ModelKind::RandomForest),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub svm: SvmConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    LinearSvm(LinearSvm),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
}

/// A fitted classifier together with the scaler and feature subset it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    pub catalog_hash: String,
    pub feature_names: Vec<String>,
    /// Columns of the full catalog vector, in order.
    pub feature_indices: Vec<usize>,
    pub config: TrainConfig,
    pub scaler: MinMaxScaler,
    pub params: ModelParams,
    /// Hash of the run configuration that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn select(row: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| row[i]).collect()
}

/// Fits scaler and model on raw (unscaled) catalog vectors.
pub fn train(
    kind: ModelKind,
    rows: &[Vec<f64>],
    labels: &[bool],
    feature_indices: &[usize],
    catalog: &FeatureCatalog,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidArgument("feature rows and labels differ in length".into()));
    }
    if feature_indices.is_empty() {
        return Err(Error::InvalidArgument("empty feature subset".into()));
    }
    let sub: Vec<Vec<f64>> = rows.iter().map(|r| select(r, feature_indices)).collect();
    let scaler = MinMaxScaler::fit(&sub)?;
    let xs = scaler.transform(&sub);
    let params = match kind {
        ModelKind::LinearSvm => ModelParams::LinearSvm(LinearSvm::train(&xs, labels, &config.svm)?.0),
        ModelKind::DecisionTree => ModelParams::DecisionTree(DecisionTree::train(&xs, labels, &config.tree)?),
        ModelKind::RandomForest => ModelParams::RandomForest(RandomForest::train(&xs, labels, &config.forest, seed)?),
    };
    let names = catalog.names();
    Ok(TrainedModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        kind,
        seed,
        catalog_hash: catalog.hash(),
        feature_names: feature_indices.iter().map(|&i| names[i].to_owned()).collect(),
        feature_indices: feature_indices.to_vec(),
        config: config.clone(),
        scaler,
        params,
        config_hash: None,
    })
}

impl TrainedModel {
    /// Signed score from a raw catalog vector; positive means on-mission.
    pub fn decision(&self, raw: &[f64]) -> f64 {
        let x = self.scaler.transform_row(&select(raw, &self.feature_indices));
        match &self.params {
            ModelParams::LinearSvm(m) => m.decision(&x),
            ModelParams::DecisionTree(m) => m.decision(&x),
            ModelParams::RandomForest(m) => m.decision(&x),
        }
    }

    pub fn predict(&self, raw: &[f64]) -> bool {
        self.decision(raw) > 0.0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: TrainedModel = serde_json::from_str(&text)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Encoding(format!("unsupported model file {} v{}", m.format, m.version)));
        }
        Ok(m)
    }
}

pub fn evaluate(model: &TrainedModel, rows: &[Vec<f64>], labels: &[bool]) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let predicted: Vec<bool> = rows.iter().map(|r| model.predict(r)).collect();
    Ok(Confusion::from_predictions(&predicted, labels).into())
}

/// Feature vectors with ground-truth labels (`true` = on-mission).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<bool>,
}

impl LabeledSet {
    pub fn rows(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            idx.iter().map(|&i| self.vectors[i].values.clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    Content,
    Auxiliary,
    ActivityProfile,
    All,
}

impl FeatureSubset {
    pub const ALL: [FeatureSubset; 4] = [
        FeatureSubset::Content,
        FeatureSubset::Auxiliary,
        FeatureSubset::ActivityProfile,
        FeatureSubset::All,
    ];

    pub fn indices(self, catalog: &FeatureCatalog) -> Vec<usize> {
        match self {
            FeatureSubset::Content => catalog.indices(FeatureGroup::Content),
            FeatureSubset::Auxiliary => catalog.indices(FeatureGroup::Auxiliary),
            FeatureSubset::ActivityProfile => catalog.indices(FeatureGroup::ActivityProfile),
            FeatureSubset::All => (0..catalog.len()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub subset: FeatureSubset,
    pub model: ModelKind,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub n_train: usize,
    pub n_test: usize,
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn cell(&self, subset: FeatureSubset, model: ModelKind) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.subset == subset && c.model == model)
    }
}

/// Every feature subset × model kind on one shared stratified split.
pub fn ablation(
    set: &LabeledSet,
    catalog: &FeatureCatalog,
    config: &TrainConfig,
    seed: u64,
    stratified: bool,
) -> Result<AblationTable> {
    let split = split_80_20(&set.labels, seed, stratified)?;
    let (train_x, train_y) = set.rows(&split.train);
    let (test_x, test_y) = set.rows(&split.test);
    let mut cells = Vec::with_capacity(12);
    for subset in FeatureSubset::ALL {
        let idx = subset.indices(catalog);
        for kind in ModelKind::ALL {
            let model = train(kind, &train_x, &train_y, &idx, catalog, config, seed)?;
            cells.push(AblationCell {
                subset,
                model: kind,
                report: evaluate(&model, &test_x, &test_y)?,
            });
        }
    }
    Ok(AblationTable {
        n_train: split.train.len(),
        n_test: split.test.len(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildRow {
    pub group: Group,
    pub total: usize,
    pub flagged: usize,
    pub percentage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildPrediction {
    pub profile_id: String,
    pub group: Group,
    pub prediction: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildReport {
    pub rows: Vec<WildRow>,
    pub predictions: Vec<WildPrediction>,
    /// Random per-group sample of profile ids for manual annotation.
    pub samples: BTreeMap<Group, Vec<String>>,
}

impl WildReport {
    pub fn predictions_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.predictions {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn flag_in_wild(
    model: &TrainedModel,
    groups: &BTreeMap<Group, Vec<FeatureVector>>,
    sample_per_group: usize,
    seed: u64,
) -> WildReport {
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    let mut samples = BTreeMap::new();
    for (&group, vectors) in groups {
        let mut flagged = 0;
        for v in vectors {
            let score = model.decision(&v.values);
            let prediction = score > 0.0;
            flagged += usize::from(prediction);
            predictions.push(WildPrediction {
                profile_id: v.profile_id.clone(),
                group,
                prediction,
                score,
            });
        }
        let total = vectors.len();
        rows.push(WildRow {
            group,
            total,
            flagged,
            percentage: (total > 0).then(|| 100.0 * flagged as f64 / total as f64),
        });
        let mut ids: Vec<String> = vectors.iter().map(|v| v.profile_id.clone()).collect();
        ids.shuffle(&mut seed::rng(seed, "annotation_sample", group as u64));
        ids.truncate(sample_per_group);
        ids.sort();
        samples.insert(group, ids);
    }
    WildReport {
        rows,
        predictions,
        samples,
    }
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "on_mission" | "on-mission" | "1" | "true" | "yes" => Some(true),
        "not_on_mission" | "not-on-mission" | "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Reads `profile_id,label` rows; a header row is optional.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, bool>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = i + 1;
        let (id, label) = line.split_once(',').ok_or_else(|| Error::InvalidRow {
            row,
            message: "expected `profile_id,label`".into(),
        })?;
        match parse_label(label) {
            Some(l) => {
                if out.insert(id.trim().to_owned(), l).is_some() {
                    return Err(Error::InvalidRow {
                        row,
                        message: format!("duplicate profile `{}`", id.trim()),
                    });
                }
            }
            None if row == 1 => {}
            None => {
                return Err(Error::InvalidRow {
                    row,
                    message: format!("unknown label `{}`", label.trim()),
                })
            }
        }
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<String, bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn features_jsonl(vectors: &[FeatureVector]) -> Result<String> {
    let mut out = String::new();
    for v in vectors {
        out.push_str(&serde_json::to_string(v)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: FeatureVector = serde_json::from_str(line).map_err(|e| Error::InvalidRow {
            row: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Joins feature vectors with labels; unlabeled vectors are dropped.
pub fn labeled_set(vectors: &[FeatureVector], labels: &BTreeMap<String, bool>) -> LabeledSet {
    let mut set = LabeledSet::default();
    for v in vectors {
        if let Some(&l) = labels.get(&v.profile_id) {
            set.vectors.push(v.clone());
            set.labels.push(l);
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        // two Gaussian blobs in 2D; centers 4 apart, std 0.5, clipped so the
        // gap between the classes is at least 1
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c: f64 = if pos { 2.0 } else { -2.0 };
            let x = (c + noise.sample(&mut rng)).clamp(c - 1.5, c + 1.5);
            let y = rng.random_range(-3.0..3.0);
            xs.push(vec![x, y]);
            ys.push(pos);
        }
        (xs, ys)
    }

    fn set_from(xs: &[Vec<f64>], ys: &[bool]) -> LabeledSet {
        LabeledSet {
            vectors: xs
                .iter()
                .enumerate()
                .map(|(i, x)| FeatureVector {
                    profile_id: format!("p{i:04}"),
                    values: x.clone(),
                    imputed: vec![false; x.len()],
                })
                .collect(),
            labels: ys.to_vec(),
        }
    }

    fn two_feature_catalog() -> FeatureCatalog {
        FeatureCatalog {
            features: vec![
                ("x".into(), FeatureGroup::Content),
                ("y".into(), FeatureGroup::ActivityProfile),
            ],
        }
    }

    fn fit_eval(kind: ModelKind, xs: &[Vec<f64>], ys: &[bool]) -> EvalReport {
        let split = split_80_20(ys, 7, true).unwrap();
        let set = set_from(xs, ys);
        let (tx, ty) = set.rows(&split.train);
        let (vx, vy) = set.rows(&split.test);
        let m = train(kind, &tx, &ty, &[0, 1], &two_feature_catalog(), &TrainConfig::default(), 7).unwrap();
        evaluate(&m, &vx, &vy).unwrap()
    }

    #[test]
    fn separable_blobs() {
        let (xs, ys) = blobs(200, 7);
        let svm = fit_eval(ModelKind::LinearSvm, &xs, &ys);
        assert_eq!(svm.accuracy, 1.0);
        let tree = fit_eval(ModelKind::DecisionTree, &xs, &ys);
        let forest = fit_eval(ModelKind::RandomForest, &xs, &ys);
        assert!(forest.accuracy >= tree.accuracy - 0.02);
    }

    #[test]
    fn affine_rescaling_is_absorbed() {
        let (xs, ys) = blobs(120, 3);
        let scaled: Vec<Vec<f64>> = xs.iter().map(|r| vec![r[0] * 10.0, r[1]]).collect();
        let cat = two_feature_catalog();
        for kind in ModelKind::ALL {
            let a = train(kind, &xs, &ys, &[0, 1], &cat, &TrainConfig::default(), 1).unwrap();
            let b = train(kind, &scaled, &ys, &[0, 1], &cat, &TrainConfig::default(), 1).unwrap();
            let pa: Vec<bool> = xs.iter().map(|r| a.predict(r)).collect();
            let pb: Vec<bool> = scaled.iter().map(|r| b.predict(r)).collect();
            assert_eq!(pa, pb, "{kind}");
        }
    }

    #[test]
    fn metrics_match_confusion_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let n = rng.random_range(1..60);
            let p: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let a: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
            for i in 0..n {
                if p[i] && a[i] { tp += 1 } else if !p[i] && !a[i] { tn += 1 } else if p[i] { fp += 1 } else { fn_ += 1 }
            }
            let r: EvalReport = Confusion::from_predictions(&p, &a).into();
            assert_eq!((r.tp, r.tn, r.fp, r.fn_), (tp, tn, fp, fn_));
            let f1 = if 2 * tp + fp + fn_ == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            assert_eq!(r.f1, f1);
            assert_eq!(r.accuracy, (tp + tn) as f64 / n as f64);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let (xs, ys) = blobs(60, 2);
        let cat = two_feature_catalog();
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            let m = train(kind, &xs, &ys, &[0, 1], &cat, &TrainConfig::default(), 5).unwrap();
            let p = dir.path().join(format!("{kind}.json"));
            m.save(&p).unwrap();
            let back = TrainedModel::load(&p).unwrap();
            assert_eq!(back.to_json().unwrap(), m.to_json().unwrap());
            assert_eq!(back.predict(&xs[0]), m.predict(&xs[0]));
        }
    }

    #[test]
    fn wild_counts() {
        let model = TrainedModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: ModelKind::LinearSvm,
            seed: 0,
            catalog_hash: String::new(),
            feature_names: vec!["x".into()],
            feature_indices: vec![0],
            config: TrainConfig::default(),
            scaler: MinMaxScaler { min: vec![0.0], max: vec![1.0] },
            params: ModelParams::LinearSvm(LinearSvm { weights: vec![1.0], bias: -0.5 }),
            config_hash: None,
        };
        let vectors: Vec<FeatureVector> = (0..20)
            .map(|i| FeatureVector {
                profile_id: format!("p{i}"),
                values: vec![if i < 13 { 0.9 } else { 0.1 }],
                imputed: vec![false],
            })
            .collect();
        let groups = BTreeMap::from([(Group::III, vectors), (Group::IV, vec![])]);
        let r = flag_in_wild(&model, &groups, 5, 1);
        assert_eq!(r.rows[0].flagged, 13);
        assert_eq!(r.rows[0].percentage, Some(65.0));
        assert_eq!(r.rows[1].total, 0);
        assert_eq!(r.rows[1].percentage, None);
        assert_eq!(r.samples[&Group::III].len(), 5);
    }

    #[test]
    fn ablation_shape_and_determinism() {
        let (xs, ys) = blobs(60, 11);
        let set = set_from(&xs, &ys);
        let cat = two_feature_catalog();
        let cfg = TrainConfig {
            forest: ForestConfig { n_trees: 10, ..ForestConfig::default() },
            ..TrainConfig::default()
        };
        // the auxiliary group is empty in this catalog
        assert!(ablation(&set, &cat, &cfg, 3, true).is_err());
        let cat = FeatureCatalog {
            features: vec![
                ("x".into(), FeatureGroup::Content),
                ("y".into(), FeatureGroup::Auxiliary),
                ("z".into(), FeatureGroup::ActivityProfile),
            ],
        };
        let set = LabeledSet {
            vectors: set.vectors.into_iter().map(|mut v| { v.values.push(v.values[0] * 0.5); v }).collect(),
            labels: set.labels,
        };
        let t = ablation(&set, &cat, &cfg, 3, true).unwrap();
        assert_eq!(t.cells.len(), 12);
        assert!(t.cells.iter().all(|c| (0.0..=1.0).contains(&c.report.f1) && (0.0..=1.0).contains(&c.report.accuracy)));
        assert_eq!(t, ablation(&set, &cat, &cfg, 3, true).unwrap());
    }

    #[test]
    fn labels_csv() {
        let l = parse_labels("profile_id,label\na,on_mission\nb,not_on_mission\nc,1\n").unwrap();
        assert_eq!(l.len(), 3);
        assert!(l["a"] && !l["b"] && l["c"]);
        assert!(matches!(parse_labels("a,1\nb,maybe\n"), Err(Error::InvalidRow { row: 2, .. })));
        assert!(parse_labels("a,1\na,0\n").is_err());
    }
}
