//! Scores every model listed in a manifest and ranks the hub.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{read_feature_file, HubManifest};
use crate::logme::{compute_logme, LogMeOptions};
use crate::ranking::{rank_hub, RankReport};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HubRanking {
    pub dataset: String,
    pub report: RankReport,
    pub top_k: Vec<String>,
}

/// Feature-backed entries are scored in parallel with LogME; entries with a
/// precomputed score are taken as is. The result does not depend on scheduling.
pub fn rank_manifest(
    manifest: &HubManifest,
    options: &LogMeOptions,
    k: usize,
) -> Result<HubRanking> {
    let labels = if manifest.needs_labels() {
        Some(manifest.load_labels()?)
    } else {
        None
    };
    let scores: Vec<(String, f64)> = manifest
        .models
        .par_iter()
        .map(|m| -> Result<(String, f64)> {
            let score = match (&m.features, m.score) {
                (Some(path), _) => {
                    let features = read_feature_file(manifest.resolve(path))?;
                    let labels = labels
                        .as_ref()
                        .expect("labels loaded when features are present");
                    let report = compute_logme(&features, labels, options)?;
                    log::info!("{}: LogME {}", m.id, report.logme);
                    report.logme
                }
                (None, Some(s)) => s,
                (None, None) => unreachable!("validated manifest"),
            };
            Ok((m.id.clone(), score))
        })
        .collect::<Result<_>>()?;
    let truths = manifest.truths();
    let report = rank_hub(&scores, truths.as_deref(), manifest.truth_direction)?;
    let top_k = report
        .top_k_ids(k)?
        .into_iter()
        .map(str::to_owned)
        .collect();
    Ok(HubRanking {
        dataset: manifest.dataset.clone(),
        report,
        top_k,
    })
}
