//! Image-source versus ray-traced training data, per output formulation.

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, EvalReport, Summary};
use super::render::{Manifest, Method};
use crate::error::{Error, Result};
use crate::nn::{split_indices, train, Formulation, History, NetworkConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub formulation: String,
    pub summary: Summary,
    /// reduction of mean error relative to the image-trained model of the same formulation
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,formulation,count,mean_deg,median_deg,acc_lt5,acc_lt10,acc_lt15,improvement_pct\n");
        for r in &self.rows {
            let m = &r.summary;
            s.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.2},{:.2},{:.2},{:.2}\n",
                r.method.name(),
                r.formulation,
                m.count,
                m.mean_deg,
                m.median_deg,
                m.accuracy[0],
                m.accuracy[1],
                m.accuracy[2],
                r.improvement_pct
            ));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<7} {:<12} {:>6} {:>9} {:>9} {:>7} {:>7} {:>7} {:>9}\n",
            "method", "formulation", "n", "mean°", "median°", "<5°", "<10°", "<15°", "improv.%"
        );
        for r in &self.rows {
            let m = &r.summary;
            s.push_str(&format!(
                "{:<7} {:<12} {:>6} {:>9.2} {:>9.2} {:>7.1} {:>7.1} {:>7.1} {:>9.1}\n",
                r.method.name(),
                r.formulation,
                m.count,
                m.mean_deg,
                m.median_deg,
                m.accuracy[0],
                m.accuracy[1],
                m.accuracy[2],
                r.improvement_pct
            ));
        }
        s
    }
}

fn same_test_set(a: &EvalReport, b: &EvalReport) -> bool {
    a.results.len() == b.results.len()
        && a.results
            .iter()
            .zip(&b.results)
            .all(|(x, y)| x.scene_id == y.scene_id && x.truth == y.truth)
}

/// One row per (method, formulation); `image[i]` and `trace[i]` must be the
/// same formulation evaluated on the same records.
pub fn compare_reports(image: &[EvalReport], trace: &[EvalReport]) -> Result<Comparison> {
    if image.len() != trace.len() || image.is_empty() {
        return Err(Error::MismatchedTestSets(format!(
            "{} image reports against {} trace reports",
            image.len(),
            trace.len()
        )));
    }
    let mut rows = Vec::new();
    for (a, b) in image.iter().zip(trace) {
        if a.formulation != b.formulation || !same_test_set(a, b) {
            return Err(Error::MismatchedTestSets(format!(
                "{} and {} reports cover different records",
                a.formulation, b.formulation
            )));
        }
        let base = a.summary.mean_deg;
        let improvement = if base > 0.0 {
            100.0 * (base - b.summary.mean_deg) / base
        } else {
            0.0
        };
        rows.push(ComparisonRow {
            method: Method::Image,
            formulation: a.formulation.clone(),
            summary: a.summary.clone(),
            improvement_pct: 0.0,
        });
        rows.push(ComparisonRow {
            method: Method::Trace,
            formulation: b.formulation.clone(),
            summary: b.summary.clone(),
            improvement_pct: improvement,
        });
    }
    Ok(Comparison { rows })
}

/// Result of [`run_comparison`].
#[derive(Debug, Clone)]
pub struct ComparisonRun {
    pub comparison: Comparison,
    pub histories: Vec<(Method, String, History)>,
}

/// Trains every formulation on the image and on the trace manifest and
/// evaluates all models on one test set. Without `test`, a share of scenes
/// (the validation fraction, at least one) common to both manifests is held
/// out from training and used for testing.
pub fn run_comparison(
    image: &Manifest,
    trace: &Manifest,
    test: Option<&Manifest>,
    formulations: &[Formulation],
    net_config: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<ComparisonRun> {
    let (image_train, trace_train, test_set) = match test {
        Some(t) => (image.clone(), trace.clone(), t.clone()),
        None => {
            let matched = image.records.len() == trace.records.len()
                && image.records.iter().zip(&trace.records).all(|(a, b)| {
                    a.scene_id == b.scene_id && a.azimuth_deg == b.azimuth_deg && a.elevation_deg == b.elevation_deg
                });
            if !matched {
                return Err(Error::MismatchedTestSets(
                    "image and trace manifests were not rendered from the same scenes".into(),
                ));
            }
            let fraction = train_cfg.validation_fraction.max(0.1);
            let (train_idx, test_idx) = split_indices(image.records.len(), fraction, train_cfg.seed ^ 0x7e57);
            (image.subset(&train_idx), trace.subset(&train_idx), trace.subset(&test_idx))
        }
    };
    let image_samples = image_train.load_samples()?;
    let trace_samples = trace_train.load_samples()?;
    let mut image_reports = Vec::new();
    let mut trace_reports = Vec::new();
    let mut histories = Vec::new();
    for f in formulations {
        for (method, samples, reports) in [
            (Method::Image, &image_samples, &mut image_reports),
            (Method::Trace, &trace_samples, &mut trace_reports),
        ] {
            let (net, history) = train(samples, net_config.clone(), f.clone(), train_cfg)?;
            reports.push(evaluate(&net, &test_set)?);
            histories.push((method, f.name().to_string(), history));
        }
    }
    Ok(ComparisonRun {
        comparison: compare_reports(&image_reports, &trace_reports)?,
        histories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::RecordResult;
    use crate::sphere::Direction;

    fn report(name: &str, errors: &[f64]) -> EvalReport {
        let results: Vec<RecordResult> = errors
            .iter()
            .enumerate()
            .map(|(i, e)| RecordResult {
                scene_id: i,
                truth: Direction::from_degrees(i as f64, 0.0),
                prediction: None,
                error_deg: *e,
            })
            .collect();
        EvalReport {
            formulation: name.into(),
            summary: Summary::of(errors).unwrap(),
            results,
        }
    }

    #[test]
    fn identical_reports_show_no_improvement() {
        let a = vec![report("cartesian", &[10.0, 20.0]), report("spherical", &[5.0, 7.0])];
        let c = compare_reports(&a, &a).unwrap();
        assert_eq!(c.rows.len(), 4);
        assert!(c.rows.iter().all(|r| r.improvement_pct == 0.0));
        assert_eq!(c.to_csv().lines().count(), 5);
    }

    #[test]
    fn improvement_is_relative_mean_reduction() {
        let c = compare_reports(&[report("cartesian", &[10.0, 30.0])], &[report("cartesian", &[10.0, 10.0])]).unwrap();
        assert!((c.rows[1].improvement_pct - 50.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_sets_are_rejected() {
        let r = compare_reports(&[report("cartesian", &[1.0, 2.0])], &[report("cartesian", &[1.0])]);
        assert!(matches!(r, Err(Error::MismatchedTestSets(_))));
    }
}
