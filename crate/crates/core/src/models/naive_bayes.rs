use serde::{Deserialize, Serialize};

use super::{check_dimension, BinaryClassifier, ClassifierFamily, Example, FeatureEncoding, TrainingConfig};
use crate::features::FeatureVector;
use crate::{Error, Result};

/// Multinomial naive Bayes over raw n-gram counts with Laplace smoothing.
/// Index 0 of each pair is the non-hateful class, index 1 the hateful one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub dimension: usize,
    pub log_prior: [f64; 2],
    /// `log_term_probability[c][i]` = log p(term i | class c).
    pub log_term_probability: [Vec<f64>; 2],
}

impl NaiveBayes {
    fn log_joint(&self, x: &FeatureVector) -> [f64; 2] {
        let mut out = self.log_prior;
        for (i, count) in x.entries() {
            out[0] += count * self.log_term_probability[0][i];
            out[1] += count * self.log_term_probability[1][i];
        }
        out
    }

    /// (p(hateful | x), p(non-hateful | x)).
    pub fn posterior(&self, x: &FeatureVector) -> (f64, f64) {
        let [neg, pos] = self.log_joint(x);
        let d = neg - pos;
        (super::sigmoid(-d), super::sigmoid(d))
    }
}

impl BinaryClassifier for NaiveBayes {
    fn kind(&self) -> &'static str {
        "naive_bayes"
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn predict(&self, _doc_id: &str, features: &FeatureVector) -> Result<f64> {
        check_dimension(self.dimension, features)?;
        Ok(self.posterior(features).0)
    }

    fn parameters(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data serializes")
    }
}

pub struct NaiveBayesFamily;

impl ClassifierFamily for NaiveBayesFamily {
    fn name(&self) -> &'static str {
        "naive_bayes"
    }

    fn encoding(&self) -> FeatureEncoding {
        FeatureEncoding::Counts
    }

    /// Class priors are smoothed with the same alpha as the term
    /// probabilities, so a single-class training set still yields finite
    /// parameters.
    fn train(&self, examples: &[Example<'_>], config: &TrainingConfig) -> Result<Box<dyn BinaryClassifier>> {
        let Some((first, _)) = examples.first() else {
            return Err(Error::DegenerateTrainingSet("naive bayes needs at least one example".into()));
        };
        let dimension = first.dimension();
        let alpha = config.laplace_alpha;
        let mut counts = [vec![0.0; dimension], vec![0.0; dimension]];
        let mut docs = [0.0f64; 2];
        for (x, y) in examples {
            if x.dimension() != dimension {
                return Err(Error::FeatureMismatch("training examples mix dimensions".into()));
            }
            let c = usize::from(*y);
            docs[c] += 1.0;
            for (i, v) in x.entries() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidInput(
                        "naive bayes needs non-negative finite term counts".into(),
                    ));
                }
                counts[c][i] += v;
            }
        }
        let n = docs[0] + docs[1];
        let log_prior = [0, 1].map(|c| ((docs[c] + alpha) / (n + 2.0 * alpha)).ln());
        let v = dimension as f64;
        let log_term_probability = counts.map(|row| {
            let total: f64 = row.iter().sum();
            row.iter().map(|c| ((c + alpha) / (total + alpha * v)).ln()).collect()
        });
        Ok(Box::new(NaiveBayes {
            dimension,
            log_prior,
            log_term_probability,
        }))
    }

    fn restore(&self, parameters: serde_json::Value) -> Result<Box<dyn BinaryClassifier>> {
        let m: NaiveBayes = serde_json::from_value(parameters)?;
        if m.log_term_probability.iter().any(|r| r.len() != m.dimension) {
            return Err(Error::InvalidInput("naive bayes parameter length mismatch".into()));
        }
        Ok(Box::new(m))
    }
}
