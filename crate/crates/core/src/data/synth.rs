//! Teacher-labelled synthetic datasets.
//!
//! Inputs are drawn uniformly from `[0, 1]^d`. Labels are the argmax of a fixed
//! random teacher network evaluated on the centred input `2x - 1`. Points whose
//! top-two teacher logits differ by less than `margin` are rejected, which keeps
//! the classes separable by the teacher's own function class.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Splits};
use crate::activations::ActivationKind;
use crate::nn::Shape;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSpec {
    pub input_dim: usize,
    pub classes: usize,
    pub train_count: usize,
    pub eval_count: usize,
    /// Hidden widths; empty gives a linear teacher.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: ActivationKind,
    #[serde(default)]
    pub margin: f64,
}

fn default_activation() -> ActivationKind {
    ActivationKind::ELU
}

struct Teacher {
    layers: Vec<(Vec<f64>, Vec<f64>, usize, usize)>,
    activation: ActivationKind,
}

impl Teacher {
    fn new<R: Rng>(spec: &TeacherSpec, rng: &mut R) -> Self {
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden);
        dims.push(spec.classes);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                let weights = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
                let bias = (0..fan_out).map(|_| 0.5 * normal.sample(rng)).collect();
                (weights, bias, fan_in, fan_out)
            })
            .collect();
        Teacher {
            layers,
            activation: spec.activation,
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let last = self.layers.len() - 1;
        for (li, (w, b, fan_in, fan_out)) in self.layers.iter().enumerate() {
            let mut out = b.clone();
            for (o, out_o) in out.iter_mut().enumerate().take(*fan_out) {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *out_o += row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
            if li != last {
                for v in &mut out {
                    *v = self.activation.apply(*v);
                }
            }
            h = out;
        }
        h
    }
}

/// Generates a teacher-labelled dataset; fully determined by `spec` and `seed`.
pub fn synth_teacher_dataset(spec: &TeacherSpec, seed: u64) -> Result<Dataset, DataError> {
    if spec.classes < 2 {
        return Err(DataError::Config(format!("need at least 2 classes, got {}", spec.classes)));
    }
    if spec.input_dim == 0 || spec.train_count == 0 || spec.eval_count == 0 {
        return Err(DataError::Config("input_dim, train_count and eval_count must be >= 1".into()));
    }
    if spec.hidden.contains(&0) {
        return Err(DataError::Config("hidden widths must be >= 1".into()));
    }
    let mut teacher_rng = rng::stream(seed, &[rng::tag::DATA, 0]);
    let teacher = Teacher::new(spec, &mut teacher_rng);
    let mut sample_rng = rng::stream(seed, &[rng::tag::DATA, 1]);

    let total = spec.train_count + spec.eval_count;
    let max_attempts = total.saturating_mul(1000);
    let mut images = Vec::with_capacity(total * spec.input_dim);
    let mut labels = Vec::with_capacity(total);
    let mut attempts = 0usize;
    while labels.len() < total {
        attempts += 1;
        if attempts > max_attempts {
            return Err(DataError::Config(format!(
                "margin {} rejects too many samples ({} accepted of {attempts})",
                spec.margin,
                labels.len()
            )));
        }
        let x: Vec<f64> = (0..spec.input_dim).map(|_| sample_rng.gen::<f64>()).collect();
        let logits = teacher.logits(&x);
        let (best, second) = top_two(&logits);
        if logits[best] - logits[second] < spec.margin {
            continue;
        }
        images.extend(x);
        labels.push(best);
    }
    let splits = Splits {
        train: (0..spec.train_count).collect(),
        eval: (spec.train_count..total).collect(),
        validation: None,
    };
    Dataset::new(Shape::flat(spec.input_dim), images, labels, spec.classes, splits)
}

fn top_two(v: &[f64]) -> (usize, usize) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    let mut second = if best == 0 { 1 } else { 0 };
    for i in 0..v.len() {
        if i != best && v[i] > v[second] {
            second = i;
        }
    }
    (best, second)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TeacherSpec {
        TeacherSpec {
            input_dim: 4,
            classes: 3,
            train_count: 50,
            eval_count: 20,
            hidden: vec![6],
            activation: ActivationKind::ELU,
            margin: 0.1,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_teacher_dataset(&spec(), 5).unwrap();
        assert_eq!(a, synth_teacher_dataset(&spec(), 5).unwrap());
        assert_ne!(a, synth_teacher_dataset(&spec(), 6).unwrap());
        assert_eq!(a.len(), 70);
        assert_eq!(a.splits().eval.len(), 20);
        assert!((0..a.len()).all(|i| a.image(i).iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn rejects_degenerate_specs() {
        let mut s = spec();
        s.classes = 1;
        assert!(matches!(synth_teacher_dataset(&s, 0), Err(DataError::Config(_))));
        let mut s = spec();
        s.margin = 1e9;
        assert!(synth_teacher_dataset(&s, 0).is_err());
    }

    #[test]
    fn top_two_picks_distinct_indices() {
        assert_eq!(top_two(&[0.0, 3.0, 2.0]), (1, 2));
        assert_eq!(top_two(&[5.0, 1.0]), (0, 1));
    }
}
