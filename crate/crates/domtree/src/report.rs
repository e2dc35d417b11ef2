//! Human-readable tables and JSON documents for command output.

use std::fmt::Write as _;

use domtree_core::metrics::ClassMetrics;
use domtree_core::{ClassLabel, MetricsReport, Prediction};
use serde::{Deserialize, Serialize};

use crate::pipeline::TrainSummary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetricsJson {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub absent: bool,
}

/// Field-for-field image of [`MetricsReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub per_class: Vec<ClassMetricsJson>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub loss: Option<f64>,
    pub examples: usize,
}

impl From<&ClassMetrics> for ClassMetricsJson {
    fn from(c: &ClassMetrics) -> Self {
        Self {
            label: c.label.name().to_owned(),
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            support: c.support,
            absent: c.absent,
        }
    }
}

impl From<&MetricsReport> for MetricsJson {
    fn from(m: &MetricsReport) -> Self {
        Self {
            per_class: m.per_class.iter().map(ClassMetricsJson::from).collect(),
            micro_f1: m.micro_f1,
            macro_f1: m.macro_f1,
            weighted_f1: m.weighted_f1,
            accuracy: m.accuracy,
            loss: m.loss,
            examples: m.examples,
        }
    }
}

pub fn metrics_table(m: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1", "support");
    for c in &m.per_class {
        let _ = write!(
            s,
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>9}",
            c.label.name(),
            c.precision,
            c.recall,
            c.f1,
            c.support
        );
        if c.absent {
            s.push_str("  (absent)");
        }
        s.push('\n');
    }
    s.push('\n');
    let mut row = |name: &str, value: String| {
        let _ = writeln!(s, "{name:<12} {value:>9}");
    };
    row("micro F1", format!("{:.4}", m.micro_f1));
    row("macro F1", format!("{:.4}", m.macro_f1));
    row("weighted F1", format!("{:.4}", m.weighted_f1));
    row("accuracy", format!("{:.4}", m.accuracy));
    row("loss", m.loss.map_or("n/a".to_owned(), |l| format!("{l:.4}")));
    row("examples", m.examples.to_string());
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainJson {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub validation: MetricsJson,
}

impl From<&TrainSummary> for TrainJson {
    fn from(t: &TrainSummary) -> Self {
        Self {
            best_epoch: t.best_epoch,
            best_val_loss: t.best_val_loss,
            epochs: t.epochs,
            train_examples: t.train_examples,
            validation_examples: t.validation_examples,
            validation: MetricsJson::from(&t.validation),
        }
    }
}

pub fn train_text(t: &TrainSummary) -> String {
    format!(
        "trained {} epochs on {} examples; best epoch {} with validation loss {:.6}\n\nvalidation metrics at the best epoch:\n{}",
        t.epochs,
        t.train_examples,
        t.best_epoch,
        t.best_val_loss,
        metrics_table(&t.validation)
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionJson {
    pub node: usize,
    pub predicted: String,
    /// Class name to probability, in output-unit order.
    pub probabilities: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl PredictionJson {
    pub fn new(node: usize, p: &Prediction, label: Option<ClassLabel>) -> Self {
        Self {
            node,
            predicted: p.predicted.name().to_owned(),
            probabilities: ClassLabel::ALL
                .iter()
                .map(|c| (c.name().to_owned(), p.probs[c.index()]))
                .collect(),
            label: label.map(|l| l.name().to_owned()),
            loss: p.loss,
        }
    }
}

pub fn prediction_text(node: usize, p: &Prediction) -> String {
    let mut s = format!("node {node}: {}\n", p.predicted);
    for c in ClassLabel::ALL {
        let _ = writeln!(s, "  {:<12} {:.6}", c.name(), p.probs[c.index()]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use domtree_core::metrics::evaluate_predictions;

    #[test]
    fn table_lists_every_class_and_aggregate() {
        let m = evaluate_predictions(&[(ClassLabel::Name, ClassLabel::Name), (ClassLabel::Price, ClassLabel::Price)], None);
        let t = metrics_table(&m);
        for c in ClassLabel::ALL {
            assert!(t.contains(c.name()), "{t}");
        }
        let line = |name: &str| t.lines().find(|l| l.starts_with(name)).unwrap().split_whitespace().last().unwrap().to_owned();
        assert_eq!(line("macro F1"), "1.0000");
        assert_eq!(line("loss"), "n/a");
    }

    #[test]
    fn json_mirrors_report() {
        let m = evaluate_predictions(&[(ClassLabel::Name, ClassLabel::Cart)], Some(1.5));
        let j = MetricsJson::from(&m);
        assert_eq!(j.per_class.len(), 7);
        assert_eq!(j.loss, Some(1.5));
        let back: MetricsJson = serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap();
        assert_eq!(back, j);
    }
}
