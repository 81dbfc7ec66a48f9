use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::Manifest;
use crate::error::{Error, Result};
use crate::nn::{decode, Network};
use crate::sphere::{great_circle, Direction};

pub const THRESHOLDS_DEG: [f64; 3] = [5.0, 10.0, 15.0];

/// Great-circle distance in degrees.
pub fn angular_error(pred: &Direction, truth: &Direction) -> f64 {
    great_circle(pred, truth).to_degrees().clamp(0.0, 180.0)
}

/// Percentage of errors strictly below each threshold.
pub fn tolerance_accuracy(errors: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("no errors to summarize".into()));
    }
    Ok(thresholds
        .iter()
        .map(|t| 100.0 * errors.iter().filter(|e| *e < t).count() as f64 / errors.len() as f64)
        .collect())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean_deg: f64,
    pub median_deg: f64,
    /// percentages below 5°, 10° and 15°
    pub accuracy: [f64; 3],
}

impl Summary {
    pub fn of(errors: &[f64]) -> Result<Summary> {
        let acc = tolerance_accuracy(errors, &THRESHOLDS_DEG)?;
        Ok(Summary {
            count: errors.len(),
            mean_deg: mean(errors),
            median_deg: median(errors),
            accuracy: [acc[0], acc[1], acc[2]],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub scene_id: usize,
    pub truth: Direction,
    pub prediction: Option<Direction>,
    pub error_deg: f64,
}

/// Per-record predictions of one model on one manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub formulation: String,
    pub results: Vec<RecordResult>,
    pub summary: Summary,
}

impl EvalReport {
    pub fn errors(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.error_deg).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scene_id,true_azimuth_deg,true_elevation_deg,pred_azimuth_deg,pred_elevation_deg,error_deg\n");
        for r in &self.results {
            let (ta, te) = r.truth.degrees();
            let (pa, pe) = r.prediction.map(|d| d.degrees()).unwrap_or((f64::NAN, f64::NAN));
            s.push_str(&format!("{},{ta:.4},{te:.4},{pa:.4},{pe:.4},{:.4}\n", r.scene_id, r.error_deg));
        }
        s
    }
}

/// Evaluates `net` on every record. A prediction the decoder calls
/// ambiguous scores 90°, the expected error of a random guess.
pub fn evaluate(net: &Network, manifest: &Manifest) -> Result<EvalReport> {
    let results: Vec<RecordResult> = manifest
        .records
        .par_iter()
        .map(|r| {
            let x = crate::dsp::read_features(&manifest.resolve(r))?;
            let out = net.forward(&x)?;
            let truth = r.label();
            let prediction = match decode(net.formulation(), &out) {
                Ok(d) => Some(d),
                Err(Error::Ambiguous(_)) => None,
                Err(e) => return Err(e),
            };
            let error_deg = prediction.map_or(90.0, |p| angular_error(&p, &truth));
            Ok(RecordResult {
                scene_id: r.scene_id,
                truth,
                prediction,
                error_deg,
            })
        })
        .collect::<Result<_>>()?;
    let summary = Summary::of(&results.iter().map(|r| r.error_deg).collect::<Vec<_>>())?;
    Ok(EvalReport {
        formulation: net.formulation().name().to_string(),
        results,
        summary,
    })
}
