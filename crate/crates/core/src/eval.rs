//! Accuracy, confusion matrices and report rendering.
//!
//! Unparseable predictions count as wrong: they sit in the accuracy
//! denominator, never on the diagonal, and are tallied beside the matrix
//! rather than inside it so the grid stays square over the label space.

use std::collections::HashMap;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategy::StrategyKind;
use crate::types::{LabelSpace, Outcome, Polarity, Prediction};

pub type Golds = HashMap<String, Polarity>;

fn gold_of(golds: &Golds, p: &Prediction) -> Result<Polarity> {
    golds
        .get(&p.sample_id)
        .copied()
        .ok_or_else(|| Error::MissingGold(p.sample_id.clone()))
}

/// Fraction of predictions equal to gold. An empty list scores 0.
pub fn accuracy(preds: &[Prediction], golds: &Golds) -> Result<f64> {
    let mut correct = 0usize;
    for p in preds {
        if p.outcome == Outcome::Label(gold_of(golds, p)?) {
            correct += 1;
        }
    }
    Ok(if preds.is_empty() {
        0.0
    } else {
        correct as f64 / preds.len() as f64
    })
}

/// Square count grid indexed `[gold][predicted]` in label-space order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct ConfusionMatrix {
    space: LabelSpace,
    counts: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    labels: Vec<Polarity>,
    counts: Vec<Vec<u64>>,
}

impl From<ConfusionMatrix> for RawMatrix {
    fn from(m: ConfusionMatrix) -> Self {
        RawMatrix {
            labels: m.space.members().to_vec(),
            counts: m.counts,
        }
    }
}

impl TryFrom<RawMatrix> for ConfusionMatrix {
    type Error = String;

    fn try_from(raw: RawMatrix) -> std::result::Result<Self, String> {
        let space = [LabelSpace::Binary, LabelSpace::Ternary]
            .into_iter()
            .find(|s| s.members() == raw.labels.as_slice())
            .ok_or_else(|| format!("labels {:?} are not a known label space", raw.labels))?;
        let n = space.len();
        if raw.counts.len() != n || raw.counts.iter().any(|r| r.len() != n) {
            return Err(format!("confusion counts must be {n}x{n}"));
        }
        Ok(ConfusionMatrix {
            space,
            counts: raw.counts,
        })
    }
}

impl ConfusionMatrix {
    pub fn zeros(space: LabelSpace) -> Self {
        ConfusionMatrix {
            space,
            counts: vec![vec![0; space.len()]; space.len()],
        }
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn get(&self, gold: Polarity, predicted: Polarity) -> u64 {
        match (self.space.index_of(gold), self.space.index_of(predicted)) {
            (Some(g), Some(p)) => self.counts[g][p],
            _ => 0,
        }
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Aligned integer grid, gold labels down the side.
    pub fn to_grid(&self) -> String {
        let labels: Vec<&str> = self.space.members().iter().map(|p| p.as_str()).collect();
        let corner = "gold \\ pred";
        let first = labels
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(0)
            .max(corner.len());
        let width = labels
            .iter()
            .map(|l| l.len())
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1);
        let mut out = format!("{corner:<first$}");
        for l in &labels {
            let _ = write!(out, "  {l:>width$}");
        }
        out.push('\n');
        for (l, row) in labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l:<first$}");
            for c in row {
                let _ = write!(out, "  {c:>width$}");
            }
            out.push('\n');
        }
        out
    }

    /// CSV with a header row and first column of label words.
    pub fn to_csv(&self) -> String {
        let labels: Vec<&str> = self.space.members().iter().map(|p| p.as_str()).collect();
        let mut out = format!("gold\\predicted,{}\n", labels.join(","));
        for (l, row) in labels.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{l},{}", cells.join(","));
        }
        out
    }
}

/// Returns the grid over parseable predictions and the unparseable count.
pub fn confusion(
    preds: &[Prediction],
    golds: &Golds,
    space: LabelSpace,
) -> Result<(ConfusionMatrix, usize)> {
    let mut m = ConfusionMatrix::zeros(space);
    let mut unparseable = 0;
    for p in preds {
        let gold = gold_of(golds, p)?;
        let g = space
            .index_of(gold)
            .ok_or(Error::LabelOutsideSpace { label: gold, space })?;
        match p.outcome {
            Outcome::Unparseable => unparseable += 1,
            Outcome::Label(label) => {
                let c = space
                    .index_of(label)
                    .ok_or(Error::LabelOutsideSpace { label, space })?;
                m.counts[g][c] += 1;
            }
        }
    }
    Ok((m, unparseable))
}

/// Provenance for a report. Everything run-specific lives here so that
/// reports can be compared with this object masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model: String,
    pub temperature: f64,
    pub timestamp: DateTime<Utc>,
    pub seed: u64,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub strategy: StrategyKind,
    pub n_total: usize,
    pub n_unparseable: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub run_metadata: RunMetadata,
}

impl EvalReport {
    pub fn build(
        dataset: &str,
        strategy: StrategyKind,
        preds: &[Prediction],
        golds: &Golds,
        space: LabelSpace,
        run_metadata: RunMetadata,
    ) -> Result<Self> {
        let (confusion, n_unparseable) = confusion(preds, golds, space)?;
        let n_total = preds.len();
        let accuracy = if n_total == 0 {
            0.0
        } else {
            confusion.trace() as f64 / n_total as f64
        };
        Ok(EvalReport {
            dataset: dataset.to_string(),
            strategy,
            n_total,
            n_unparseable,
            accuracy,
            confusion,
            run_metadata,
        })
    }

    /// Human-readable single-report summary: table cell, counts and grid.
    pub fn to_text(&self) -> String {
        let mut out =
            render_table(std::slice::from_ref(self)).expect("single report has no duplicates");
        let _ = writeln!(
            out,
            "\nevaluated: {}  unparseable: {}  model: {}  temperature: {}\n",
            self.n_total,
            self.n_unparseable,
            self.run_metadata.model,
            self.run_metadata.temperature
        );
        out.push_str(&self.confusion.to_grid());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(reports)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::json("report", e)),
        ReportFormat::Table => render_table(reports),
    }
}

/// Strategies as rows (fixed order), datasets as columns (first-seen
/// order), accuracy to three decimals. Missing cells print `-`.
pub fn render_table(reports: &[EvalReport]) -> Result<String> {
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut cells: HashMap<(StrategyKind, &str), f64> = HashMap::new();
    let mut dups = Vec::new();
    for r in reports {
        if cells.insert((r.strategy, &r.dataset), r.accuracy).is_some() {
            dups.push(format!("{}/{}", r.dataset, r.strategy));
        }
    }
    if !dups.is_empty() {
        dups.sort();
        dups.dedup();
        return Err(Error::DuplicateReports(dups.join(", ")));
    }
    let strategies: Vec<StrategyKind> = StrategyKind::ALL
        .into_iter()
        .filter(|k| reports.iter().any(|r| r.strategy == *k))
        .collect();

    let corner = "Accuracy";
    let first = strategies
        .iter()
        .map(|k| k.display_name().len())
        .max()
        .unwrap_or(0)
        .max(corner.len());
    let widths: Vec<usize> = datasets.iter().map(|d| d.len().max(5)).collect();

    let mut out = String::new();
    let mut header = format!("{corner:<first$}");
    for (d, w) in datasets.iter().zip(&widths) {
        let _ = write!(header, "  {d:>w$}");
    }
    out.push_str(header.trim_end());
    out.push('\n');
    for k in strategies {
        let mut line = format!("{:<first$}", k.display_name());
        for (d, w) in datasets.iter().zip(&widths) {
            let cell = cells
                .get(&(k, *d))
                .map_or_else(|| "-".to_string(), |a| format!("{a:.3}"));
            let _ = write!(line, "  {cell:>w$}");
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(id: &str, outcome: Outcome) -> Prediction {
        Prediction {
            sample_id: id.into(),
            outcome,
            raw_final_text: outcome.to_string(),
            transcript_id: format!("{id}/vanilla"),
        }
    }

    fn meta() -> RunMetadata {
        RunMetadata {
            model: "m".into(),
            temperature: 0.0,
            timestamp: DateTime::<Utc>::from_timestamp(0, 0).unwrap(),
            seed: 1,
            limit: None,
        }
    }

    use Polarity::*;

    #[test]
    fn three_of_four() {
        let golds: Golds = [
            ("a", Positive),
            ("b", Negative),
            ("c", Positive),
            ("d", Negative),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let preds = vec![
            pred("a", Outcome::Label(Positive)),
            pred("b", Outcome::Label(Negative)),
            pred("c", Outcome::Label(Positive)),
            pred("d", Outcome::Label(Positive)),
        ];
        assert_eq!(accuracy(&preds, &golds).unwrap(), 0.75);
        let (m, u) = confusion(&preds, &golds, LabelSpace::Binary).unwrap();
        assert_eq!(u, 0);
        assert_eq!(m.rows(), &[vec![2, 0], vec![1, 1]]);
    }

    #[test]
    fn all_unparseable_scores_zero() {
        let golds: Golds = [("a".to_string(), Positive)].into();
        let preds = vec![pred("a", Outcome::Unparseable)];
        assert_eq!(accuracy(&preds, &golds).unwrap(), 0.0);
        let (m, u) = confusion(&preds, &golds, LabelSpace::Binary).unwrap();
        assert_eq!((m.total(), u), (0, 1));
    }

    #[test]
    fn missing_gold() {
        let preds = vec![pred("x", Outcome::Label(Positive))];
        assert!(matches!(
            accuracy(&preds, &Golds::new()),
            Err(Error::MissingGold(_))
        ));
        assert!(confusion(&preds, &Golds::new(), LabelSpace::Binary).is_err());
    }

    #[test]
    fn gold_outside_space() {
        let golds: Golds = [("a".to_string(), Neutral)].into();
        let preds = vec![pred("a", Outcome::Label(Positive))];
        assert!(confusion(&preds, &golds, LabelSpace::Binary).is_err());
    }

    #[test]
    fn empty_and_single() {
        let (m, u) = confusion(&[], &Golds::new(), LabelSpace::Ternary).unwrap();
        assert_eq!((m.total(), u), (0, 0));
        assert_eq!(m, ConfusionMatrix::zeros(LabelSpace::Ternary));

        let golds: Golds = [("a".to_string(), Positive)].into();
        let (m, _) = confusion(
            &[pred("a", Outcome::Label(Positive))],
            &golds,
            LabelSpace::Binary,
        )
        .unwrap();
        assert_eq!(m.get(Positive, Positive), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn grid_and_csv() {
        let m = ConfusionMatrix {
            space: LabelSpace::Binary,
            counts: vec![vec![12, 3], vec![0, 140]],
        };
        assert_eq!(
            m.to_csv(),
            "gold\\predicted,positive,negative\npositive,12,3\nnegative,0,140\n"
        );
        assert_eq!(
            m.to_grid(),
            "gold \\ pred  positive  negative\n\
             positive           12         3\n\
             negative            0       140\n"
        );
    }

    #[test]
    fn table_layout() {
        assert_eq!(render_table(&[]).unwrap(), "Accuracy\n");
        let golds: Golds = [("a".to_string(), Positive)].into();
        let one = EvalReport::build(
            "movie",
            StrategyKind::Cot,
            &[pred("a", Outcome::Label(Positive))],
            &golds,
            LabelSpace::Binary,
            meta(),
        )
        .unwrap();
        assert_eq!(
            render_table(std::slice::from_ref(&one)).unwrap(),
            "Accuracy       movie\nCoT prompting  1.000\n"
        );
        let err = render_table(&[one.clone(), one]).unwrap_err();
        assert!(err.to_string().contains("movie/cot"));
    }

    #[test]
    fn matrix_json_validates_shape() {
        let bad = r#"{"labels":["positive","negative"],"counts":[[1,2]]}"#;
        assert!(serde_json::from_str::<ConfusionMatrix>(bad).is_err());
        let bad = r#"{"labels":["negative","positive"],"counts":[[1,2],[3,4]]}"#;
        assert!(serde_json::from_str::<ConfusionMatrix>(bad).is_err());
    }

    fn arb_fixture() -> impl Strategy<Value = (LabelSpace, Vec<(Polarity, Outcome)>)> {
        prop_oneof![Just(LabelSpace::Binary), Just(LabelSpace::Ternary)].prop_flat_map(|space| {
            let n = space.len();
            let pair = (0..n, 0..=n).prop_map(move |(g, p)| {
                let m = space.members();
                (
                    m[g],
                    if p == n {
                        Outcome::Unparseable
                    } else {
                        Outcome::Label(m[p])
                    },
                )
            });
            (Just(space), prop::collection::vec(pair, 1..60))
        })
    }

    fn materialize(rows: &[(Polarity, Outcome)]) -> (Vec<Prediction>, Golds) {
        let preds = rows
            .iter()
            .enumerate()
            .map(|(i, (_, o))| pred(&format!("s{i}"), *o))
            .collect();
        let golds = rows
            .iter()
            .enumerate()
            .map(|(i, (g, _))| (format!("s{i}"), *g))
            .collect();
        (preds, golds)
    }

    proptest! {
        #[test]
        fn accuracy_is_trace_over_total((space, rows) in arb_fixture()) {
            let (preds, golds) = materialize(&rows);
            let acc = accuracy(&preds, &golds).unwrap();
            let (m, u) = confusion(&preds, &golds, space).unwrap();
            prop_assert_eq!(acc, m.trace() as f64 / preds.len() as f64);
            prop_assert_eq!(m.total() as usize + u, preds.len());
        }

        #[test]
        fn permutation_invariant((space, rows) in arb_fixture(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (preds, golds) = materialize(&rows);
            let mut shuffled = preds.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(accuracy(&preds, &golds).unwrap(), accuracy(&shuffled, &golds).unwrap());
            prop_assert_eq!(confusion(&preds, &golds, space).unwrap(), confusion(&shuffled, &golds, space).unwrap());
        }

        #[test]
        fn fixing_one_prediction_adds_one_over_n((_space, rows) in arb_fixture(), pick in any::<prop::sample::Index>()) {
            let (mut preds, golds) = materialize(&rows);
            let wrong: Vec<usize> = (0..preds.len())
                .filter(|&i| preds[i].outcome != Outcome::Label(golds[&preds[i].sample_id]))
                .collect();
            prop_assume!(!wrong.is_empty());
            let i = wrong[pick.index(wrong.len())];
            let before = accuracy(&preds, &golds).unwrap();
            preds[i].outcome = Outcome::Label(golds[&preds[i].sample_id]);
            let after = accuracy(&preds, &golds).unwrap();
            let n = preds.len() as f64;
            prop_assert!(after > before);
            prop_assert!((after - before - 1.0 / n).abs() < 1e-12);
        }

        #[test]
        fn json_round_trip((space, rows) in arb_fixture()) {
            let (preds, golds) = materialize(&rows);
            let r = EvalReport::build("fin", StrategyKind::RpCot, &preds, &golds, space, meta()).unwrap();
            let text = serde_json::to_string(&r).unwrap();
            let back: EvalReport = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
