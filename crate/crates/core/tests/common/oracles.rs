//! Brute-force reference implementations used by the property tests and
//! the acceptance suite.

use std::collections::BTreeMap;

use octo_core::index::{IndexEntry, RetrievalResult, RetrievedObject, RetrievedSample};
use octo_core::{Embedding, TactileFrame};

/// Every difference score, then a full sort by `(score desc, index asc)`.
pub fn salient_oracle(frames: &[TactileFrame], k: usize) -> Vec<usize> {
    if frames.len() == 1 {
        return vec![0];
    }
    let mut scored: Vec<(f64, usize)> = Vec::new();
    for i in 1..frames.len() {
        let (a, b) = (frames[i].values(), frames[i - 1].values());
        let mut total = 0.0;
        for p in 0..a.len() {
            total += (a[p] as f64 - b[p] as f64).abs();
        }
        scored.push((total / a.len() as f64, i));
    }
    scored.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
    let mut picked: Vec<usize> = scored.iter().take(k).map(|s| s.1).collect();
    picked.sort();
    picked
}

fn dot(a: &Embedding, b: &Embedding) -> f64 {
    let mut total = 0.0;
    for i in 0..a.0.len() {
        total += a.0[i] as f64 * b.0[i] as f64;
    }
    total.clamp(-1.0, 1.0)
}

/// Scores every entry, sorts the whole list, then groups by object.
pub fn retrieval_oracle(entries: &[IndexEntry], query: &Embedding, top_k: usize) -> RetrievalResult {
    let mut all: Vec<(f64, &IndexEntry)> = entries.iter().map(|e| (dot(query, &e.embedding), e)).collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.sample_id.cmp(&b.1.sample_id)));
    let top: Vec<(f64, &IndexEntry)> = all.into_iter().take(top_k).collect();

    let mut by_object: BTreeMap<String, Vec<(f64, &IndexEntry)>> = BTreeMap::new();
    for &(s, e) in &top {
        by_object.entry(e.object_id.clone()).or_default().push((s, e));
    }
    let mut objects: Vec<RetrievedObject> = by_object
        .into_iter()
        .map(|(object_id, hits)| {
            let best = hits
                .iter()
                .min_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.sample_id.cmp(&b.1.sample_id)))
                .unwrap();
            RetrievedObject {
                object_id,
                label: best.1.label.clone(),
                adjectives: best.1.adjectives.clone(),
                retrieved_sample_count: hits.len(),
                max_similarity: best.0,
            }
        })
        .collect();
    objects.sort_by(|a, b| {
        b.retrieved_sample_count
            .cmp(&a.retrieved_sample_count)
            .then(b.max_similarity.partial_cmp(&a.max_similarity).unwrap())
            .then(a.object_id.cmp(&b.object_id))
    });
    let samples = top
        .iter()
        .map(|(s, e)| RetrievedSample {
            sample_id: e.sample_id.clone(),
            object_id: e.object_id.clone(),
            similarity: *s,
        })
        .collect();
    RetrievalResult { objects, samples }
}

/// Counts, over every ordered position pair of the predicted ranking,
/// whether the earlier object is truly at least as high (within `tolerance`).
pub fn pairwise_oracle(truth: &[f64], predicted: &[usize], tolerance: f64) -> (usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    for a in 0..predicted.len() {
        for b in a + 1..predicted.len() {
            let (x, y) = (truth[predicted[a] - 1], truth[predicted[b] - 1]);
            total += 1;
            if x > y || (x - y).abs() <= tolerance {
                correct += 1;
            }
        }
    }
    (correct, total)
}
