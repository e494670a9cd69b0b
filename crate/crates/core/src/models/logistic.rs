use serde::{Deserialize, Serialize};

use super::{check_dimension, BinaryClassifier, ClassifierFamily, Example, FeatureEncoding, TrainingConfig};
use crate::features::FeatureVector;
use crate::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// L2-regularized logistic regression trained by full-batch gradient descent
/// from zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub dimension: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Serialize, Deserialize)]
struct Persisted {
    dimension: usize,
    bias: f64,
    /// Non-zero weights as (index, value).
    weights: Vec<(usize, f64)>,
}

impl LogisticRegression {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            dimension,
            weights: vec![0.0; dimension],
            bias: 0.0,
        }
    }

    pub fn probability(&self, x: &FeatureVector) -> f64 {
        sigmoid(x.dot(&self.weights) + self.bias)
    }

    /// Mean negative log-likelihood plus `l2 / 2 * |w|^2`, with its gradient
    /// with respect to the weights and the bias.
    pub fn loss_and_gradient(&self, examples: &[Example<'_>], l2: f64) -> (f64, Vec<f64>, f64) {
        let n = examples.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dimension];
        let mut grad_bias = 0.0;
        for (x, y) in examples {
            let z = x.dot(&self.weights) + self.bias;
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            loss += softplus - if *y { z } else { 0.0 };
            let r = sigmoid(z) - f64::from(u8::from(*y));
            grad_bias += r;
            for (i, v) in x.entries() {
                grad[i] += r * v;
            }
        }
        let sq: f64 = self.weights.iter().map(|w| w * w).sum();
        for (g, w) in grad.iter_mut().zip(&self.weights) {
            *g = *g / n + l2 * w;
        }
        (loss / n + 0.5 * l2 * sq, grad, grad_bias / n)
    }
}

impl BinaryClassifier for LogisticRegression {
    fn kind(&self) -> &'static str {
        "logistic_regression"
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn predict(&self, _doc_id: &str, features: &FeatureVector) -> Result<f64> {
        check_dimension(self.dimension, features)?;
        Ok(self.probability(features))
    }

    fn parameters(&self) -> serde_json::Value {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i, *w))
            .collect();
        serde_json::to_value(Persisted {
            dimension: self.dimension,
            bias: self.bias,
            weights,
        })
        .expect("plain data serializes")
    }
}

pub struct LogisticRegressionFamily;

impl LogisticRegressionFamily {
    /// Trains and returns the training objective after every epoch.
    pub fn fit_with_trace(
        &self,
        examples: &[Example<'_>],
        config: &TrainingConfig,
    ) -> Result<(LogisticRegression, Vec<f64>)> {
        fit(examples, config, true)
    }
}

fn fit(examples: &[Example<'_>], config: &TrainingConfig, trace: bool) -> Result<(LogisticRegression, Vec<f64>)> {
    let positives = examples.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::DegenerateTrainingSet(
            "logistic regression needs at least one example of each class".into(),
        ));
    }
    let dimension = examples[0].0.dimension();
    if let Some((x, _)) = examples.iter().find(|(x, _)| x.dimension() != dimension) {
        return Err(Error::FeatureMismatch(format!(
            "training examples mix dimensions {dimension} and {}",
            x.dimension()
        )));
    }
    if examples.iter().any(|(x, _)| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }

    // Weights of features absent from every example stay exactly zero, so
    // optimize over the active coordinates only.
    let mut compact = vec![u32::MAX; dimension];
    let mut active = Vec::new();
    let mut offsets = Vec::with_capacity(examples.len() + 1);
    let mut columns: Vec<u32> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    offsets.push(0);
    for (x, _) in examples {
        for (i, v) in x.entries().filter(|(_, v)| *v != 0.0) {
            if compact[i] == u32::MAX {
                compact[i] = active.len() as u32;
                active.push(i);
            }
            columns.push(compact[i]);
            values.push(v);
        }
        offsets.push(columns.len());
    }
    let labels: Vec<f64> = examples.iter().map(|(_, y)| f64::from(u8::from(*y))).collect();

    let n = examples.len() as f64;
    let lr = config.learning_rate;
    let l2 = config.l2_lambda;
    let mut w = vec![0.0; active.len()];
    let mut bias = 0.0;
    let mut grad = vec![0.0; active.len()];
    let mut losses = Vec::new();
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        for (k, y) in labels.iter().enumerate() {
            let (cols, vals) = (&columns[offsets[k]..offsets[k + 1]], &values[offsets[k]..offsets[k + 1]]);
            let z = bias + cols.iter().zip(vals).map(|(&j, &v)| w[j as usize] * v).sum::<f64>();
            let r = sigmoid(z) - y;
            grad_bias += r;
            for (&j, &v) in cols.iter().zip(vals) {
                grad[j as usize] += r * v;
            }
        }
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= lr * (gj / n + l2 * *wj);
        }
        bias -= lr * grad_bias / n;
        if trace {
            let mut full = LogisticRegression::zeros(dimension);
            for (&i, &v) in active.iter().zip(&w) {
                full.weights[i] = v;
            }
            full.bias = bias;
            losses.push(full.loss_and_gradient(examples, l2).0);
        }
    }

    let mut model = LogisticRegression::zeros(dimension);
    for (&i, &v) in active.iter().zip(&w) {
        model.weights[i] = v;
    }
    model.bias = bias;
    Ok((model, losses))
}

impl ClassifierFamily for LogisticRegressionFamily {
    fn name(&self) -> &'static str {
        "logistic_regression"
    }

    fn encoding(&self) -> FeatureEncoding {
        FeatureEncoding::Tfidf
    }

    fn train(&self, examples: &[Example<'_>], config: &TrainingConfig) -> Result<Box<dyn BinaryClassifier>> {
        Ok(Box::new(fit(examples, config, false)?.0))
    }

    fn restore(&self, parameters: serde_json::Value) -> Result<Box<dyn BinaryClassifier>> {
        let p: Persisted = serde_json::from_value(parameters)?;
        let mut model = LogisticRegression::zeros(p.dimension);
        model.bias = p.bias;
        for (i, w) in p.weights {
            if i >= p.dimension || !w.is_finite() {
                return Err(Error::InvalidInput(format!("bad weight entry ({i}, {w})")));
            }
            model.weights[i] = w;
        }
        if !model.bias.is_finite() {
            return Err(Error::InvalidInput("non-finite bias".into()));
        }
        Ok(Box::new(model))
    }
}
