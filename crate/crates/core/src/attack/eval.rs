use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::model::Classifier;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub fidelity: f64,
}

/// Accuracy against `labels` and agreement with `reference`.
pub fn evaluate_predictions(
    predicted: &[usize],
    reference: &[usize],
    labels: &[usize],
) -> Result<Evaluation> {
    if predicted.is_empty() {
        return Err(invalid("empty test set"));
    }
    if predicted.len() != reference.len() || predicted.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions, {} reference, {} labels",
            predicted.len(),
            reference.len(),
            labels.len()
        )));
    }
    let n = predicted.len() as f64;
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    let agree = predicted
        .iter()
        .zip(reference)
        .filter(|(a, b)| a == b)
        .count();
    Ok(Evaluation {
        accuracy: hits as f64 / n,
        fidelity: agree as f64 / n,
    })
}

/// Surrogate accuracy and fidelity to the target on the test graph.
pub fn evaluate(
    surrogate: &Classifier,
    target: &Classifier,
    test: &Graph,
    exec: Exec,
) -> Result<Evaluation> {
    let labels = test.require_labels("evaluation")?;
    evaluate_predictions(
        &surrogate.predict(test, exec)?,
        &target.predict(test, exec)?,
        labels,
    )
}

/// Accuracy restricted to the members of each listed community.
pub fn community_accuracy(
    predicted: &[usize],
    labels: &[usize],
    membership: &[usize],
    communities: &[usize],
) -> Result<Vec<f64>> {
    if predicted.len() != labels.len() || labels.len() != membership.len() {
        return Err(Error::Dimension(
            "predictions, labels and membership differ in length".into(),
        ));
    }
    communities
        .iter()
        .map(|&c| {
            let (mut total, mut hits) = (0usize, 0usize);
            for i in 0..labels.len() {
                if membership[i] == c {
                    total += 1;
                    hits += usize::from(predicted[i] == labels[i]);
                }
            }
            if total == 0 {
                return Err(invalid(format!("community {c} has no test members")));
            }
            Ok(hits as f64 / total as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_predictor_scores_class_frequency() {
        let labels = [0, 1, 1, 2, 1];
        let e = evaluate_predictions(&[1; 5], &labels, &labels).unwrap();
        assert_eq!(e.accuracy, 0.6);
        assert_eq!(
            evaluate_predictions(&labels, &labels, &[0, 0, 0, 0, 0])
                .unwrap()
                .fidelity,
            1.0
        );
        assert!(evaluate_predictions(&[], &[], &[]).is_err());
    }

    #[test]
    fn community_examples() {
        let labels = [0, 1, 1, 0];
        let membership = [5, 5, 2, 2];
        assert_eq!(
            community_accuracy(&labels, &labels, &membership, &[2, 5]).unwrap(),
            [1.0, 1.0]
        );
        assert_eq!(
            community_accuracy(&[0, 0, 0, 0], &labels, &membership, &[5]).unwrap(),
            [0.5]
        );
        assert!(community_accuracy(&labels, &labels, &membership, &[3]).is_err());
    }

    proptest! {
        #[test]
        fn counting_oracle(rows in proptest::collection::vec((0usize..4, 0usize..4, 0usize..4, 0usize..3), 1..100)) {
            let pred: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let reference: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.2).collect();
            let member: Vec<usize> = rows.iter().map(|r| r.3).collect();
            let e = evaluate_predictions(&pred, &reference, &labels).unwrap();
            let mut hits = 0.0;
            let mut agree = 0.0;
            for r in &rows {
                if r.0 == r.2 { hits += 1.0; }
                if r.0 == r.1 { agree += 1.0; }
            }
            prop_assert_eq!(e.accuracy, hits / rows.len() as f64);
            prop_assert_eq!(e.fidelity, agree / rows.len() as f64);
            prop_assert!((0.0..=1.0).contains(&e.accuracy));
            let present: Vec<usize> = (0..3).filter(|c| member.contains(c)).collect();
            let per = community_accuracy(&pred, &labels, &member, &present).unwrap();
            let weighted: f64 = present.iter().zip(&per)
                .map(|(c, a)| a * member.iter().filter(|&&m| m == *c).count() as f64)
                .sum::<f64>() / rows.len() as f64;
            prop_assert!((weighted - e.accuracy).abs() < 1e-12);
        }
    }
}
