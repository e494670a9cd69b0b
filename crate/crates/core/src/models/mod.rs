//! Binary probabilistic classifiers producing p(hateful | x).
//!
//! Every classifier family implements [`ClassifierFamily`] and is registered
//! by name in a [`ClassifierRegistry`]; trained models are
//! `Box<dyn BinaryClassifier>` and persist as a tagged JSON document that the
//! registry can restore.

mod external;
mod logistic;
mod naive_bayes;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::{Error, Result};

pub use external::{load_external_scores, ExternalScores, ExternalScoresFamily};
pub use logistic::{sigmoid, LogisticRegression, LogisticRegressionFamily};
pub use naive_bayes::{NaiveBayes, NaiveBayesFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    /// Naive Bayes only.
    pub laplace_alpha: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 100,
            l2_lambda: 1e-4,
            laplace_alpha: 1.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be non-negative");
        }
        if !(self.laplace_alpha.is_finite() && self.laplace_alpha > 0.0) {
            return bad("laplace_alpha must be positive");
        }
        Ok(())
    }
}

/// One labeled training example; `true` is the hateful class.
pub type Example<'a> = (&'a FeatureVector, bool);

/// How documents must be featurized for a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    Tfidf,
    Counts,
    /// Scores are looked up by document id.
    DocId,
}

pub trait BinaryClassifier: Send + Sync + fmt::Debug {
    /// Registry name of the family that produced this model.
    fn kind(&self) -> &'static str;

    /// Dimension of the feature space, or `None` for id-keyed models.
    fn dimension(&self) -> Option<usize>;

    /// p(hateful | document), always within [0, 1].
    fn predict(&self, doc_id: &str, features: &FeatureVector) -> Result<f64>;

    fn parameters(&self) -> serde_json::Value;
}

pub(crate) fn check_dimension(expected: usize, features: &FeatureVector) -> Result<()> {
    if features.dimension() != expected {
        return Err(Error::FeatureMismatch(format!(
            "model expects dimension {expected}, got {}",
            features.dimension()
        )));
    }
    Ok(())
}

pub trait ClassifierFamily: Send + Sync {
    fn name(&self) -> &'static str;

    fn encoding(&self) -> FeatureEncoding;

    fn train(&self, examples: &[Example<'_>], config: &TrainingConfig) -> Result<Box<dyn BinaryClassifier>>;

    fn restore(&self, parameters: serde_json::Value) -> Result<Box<dyn BinaryClassifier>>;
}

/// Persisted form of any classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: String,
    pub parameters: serde_json::Value,
}

impl ModelFile {
    pub fn of(model: &dyn BinaryClassifier) -> Self {
        Self {
            kind: model.kind().to_string(),
            parameters: model.parameters(),
        }
    }
}

/// Classifier families by name.
pub struct ClassifierRegistry {
    families: BTreeMap<&'static str, Box<dyn ClassifierFamily>>,
}

impl Default for ClassifierRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(LogisticRegressionFamily));
        registry.register(Box::new(NaiveBayesFamily));
        registry.register(Box::new(ExternalScoresFamily));
        registry
    }
}

impl ClassifierRegistry {
    pub fn empty() -> Self {
        Self {
            families: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, family: Box<dyn ClassifierFamily>) {
        self.families.insert(family.name(), family);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.families.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn ClassifierFamily> {
        self.families
            .get(name)
            .map(|f| f.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: "classifier",
                name: name.to_string(),
            })
    }

    pub fn train(
        &self,
        name: &str,
        examples: &[Example<'_>],
        config: &TrainingConfig,
    ) -> Result<Box<dyn BinaryClassifier>> {
        config.validate()?;
        self.get(name)?.train(examples, config)
    }

    pub fn restore(&self, file: ModelFile) -> Result<Box<dyn BinaryClassifier>> {
        self.get(&file.kind)?.restore(file.parameters)
    }

    pub fn load(&self, path: &Path) -> Result<Box<dyn BinaryClassifier>> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        self.restore(file)
    }
}

pub fn save_model(model: &dyn BinaryClassifier, path: &Path) -> Result<()> {
    crate::io::write_json_atomically(path, &ModelFile::of(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;

    #[test]
    fn registry_lists_builtin_families() {
        let r = ClassifierRegistry::default();
        assert_eq!(
            r.names().collect::<Vec<_>>(),
            ["external_scores", "logistic_regression", "naive_bayes"]
        );
        assert!(matches!(r.get("svm"), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn persisted_models_restore_identically() {
        let r = ClassifierRegistry::default();
        let x0 = FeatureVector::Sparse(SparseVector::from_pairs(2, [(0, 1.0)]));
        let x1 = FeatureVector::Sparse(SparseVector::from_pairs(2, [(1, 1.0)]));
        let examples = [(&x0, true), (&x1, false)];
        for name in ["logistic_regression", "naive_bayes"] {
            let m = r.train(name, &examples, &TrainingConfig::default()).unwrap();
            let json = serde_json::to_string(&ModelFile::of(m.as_ref())).unwrap();
            let back = r.restore(serde_json::from_str(&json).unwrap()).unwrap();
            assert_eq!(m.predict("a", &x0).unwrap(), back.predict("a", &x0).unwrap());
            assert_eq!(back.kind(), name);
        }
    }

    #[test]
    fn invalid_training_config_rejected() {
        let r = ClassifierRegistry::default();
        let cfg = TrainingConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            r.train("logistic_regression", &[], &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
