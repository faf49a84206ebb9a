use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{seen_objects, unseen_objects, EvalConfig, EvalError, EvalReport, Fingerprint, SortTrial, Variant};
use crate::adjectives::Property;
use crate::encoder::EncoderModel;
use crate::index::TactileIndex;
use crate::llm::{build_sort_prompt, converse, parse_ranking, LanguageModel, Transcript, SYSTEM_PROMPT};
use crate::pipeline::{describe, description_text, read_video, PipelineError};
use crate::tactile::{Dataset, Split};

const MAX_DRAWS: usize = 20_000;

/// `(correct pairs, total pairs)` for `predicted` (1-based object numbers in
/// decreasing order) against true scores; pairs within `tolerance` count as
/// correct either way.
pub fn pairwise_score(truth: &[f64], predicted: &[usize], tolerance: f64) -> (usize, usize) {
    let n = truth.len();
    let mut pos = vec![usize::MAX; n];
    for (rank, &obj) in predicted.iter().enumerate() {
        if (1..=n).contains(&obj) {
            pos[obj - 1] = rank;
        }
    }
    let mut correct = 0;
    for i in 0..n {
        for j in i + 1..n {
            if (truth[i] - truth[j]).abs() <= tolerance || (truth[i] > truth[j]) == (pos[i] < pos[j]) {
                correct += 1;
            }
        }
    }
    (correct, n * (n - 1) / 2)
}

struct PartPool {
    object_id: String,
    score: f64,
    samples: Vec<String>,
}

fn part_pools(dataset: &Dataset, objects: &[String], property: Property, held_out_only: bool) -> Vec<PartPool> {
    let mut out = Vec::new();
    for oid in objects {
        let object = dataset.object(oid).expect("pooled object exists");
        for part in &object.parts {
            let samples: Vec<String> = dataset
                .videos
                .iter()
                .filter(|v| v.object_id == *oid && v.part_id == part.part_id)
                .filter(|v| !held_out_only || dataset.split_of(&v.sample_id) == Some(Split::Test))
                .map(|v| v.sample_id.clone())
                .collect();
            if !samples.is_empty() {
                out.push(PartPool {
                    object_id: oid.clone(),
                    score: match property {
                        Property::Hardness => part.hardness,
                        Property::Roughness => part.roughness,
                    },
                    samples,
                });
            }
        }
    }
    out
}

/// Seeded sets of parts from distinct objects whose scores differ pairwise
/// by at least `gap`, each with one chosen sample.
fn draw_sets(pools: &[PartPool], cfg: &EvalConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let k = cfg.sort_objects;
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut sets = Vec::new();
    if pools.len() < k {
        return sets;
    }
    for _ in 0..MAX_DRAWS {
        if sets.len() == cfg.sort_trials {
            break;
        }
        let pick: Vec<usize> = rand::seq::index::sample(rng, pools.len(), k).into_vec();
        let objects: BTreeSet<&str> = pick.iter().map(|&i| pools[i].object_id.as_str()).collect();
        let separated = pick.iter().enumerate().all(|(a, &i)| {
            pick[a + 1..]
                .iter()
                .all(|&j| (pools[i].score - pools[j].score).abs() >= cfg.sort_gap)
        });
        let mut key = pick.clone();
        key.sort();
        if objects.len() == k && separated && seen.insert(key) {
            sets.push(pick);
        }
    }
    sets
}

/// Sorting trials on seen (held-out samples of train objects) and unseen
/// objects. `variants` may contain [`Variant::LlmNoRag`] and
/// [`Variant::LlmRag`]; others are ignored.
pub fn run_sorting(
    dataset: &Dataset,
    model: &EncoderModel,
    index: &TactileIndex,
    llm: &dyn LanguageModel,
    backend_name: &str,
    variants: &[Variant],
    property: Property,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let groups = [
        ("seen", part_pools(dataset, &seen_objects(dataset), property, true)),
        ("unseen", part_pools(dataset, &unseen_objects(dataset), property, false)),
    ];
    let mut trials = Vec::new();
    for (gi, (category, pools)) in groups.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(100 + gi as u64);
        let sets = draw_sets(pools, cfg, &mut rng);
        let chosen: Vec<Vec<(String, f64)>> = sets
            .iter()
            .map(|set| {
                set.iter()
                    .map(|&i| {
                        let p = &pools[i];
                        let s = p.samples.choose(&mut rng).expect("non-empty pool").clone();
                        (s, p.score)
                    })
                    .collect()
            })
            .collect();
        // keep the rng stream independent of how many variants run
        let _ = rng.random::<u32>();
        for &variant in variants {
            let rag = match variant {
                Variant::LlmNoRag => None,
                Variant::LlmRag => Some((index, &cfg.retrieval)),
                _ => continue,
            };
            for (ti, set) in chosen.iter().enumerate() {
                trials.push(sort_trial(
                    dataset, model, llm, rag, variant, category, ti, set, property, cfg,
                )?);
            }
        }
    }
    let fingerprint = Fingerprint::new(dataset.seed, cfg.seed, model, index, backend_name);
    Ok(EvalReport::assemble("sorting", fingerprint, Vec::new(), trials))
}

#[allow(clippy::too_many_arguments)]
fn sort_trial(
    dataset: &Dataset,
    model: &EncoderModel,
    llm: &dyn LanguageModel,
    rag: Option<(&TactileIndex, &crate::index::RetrievalConfig)>,
    variant: Variant,
    category: &str,
    trial: usize,
    set: &[(String, f64)],
    property: Property,
    cfg: &EvalConfig,
) -> Result<SortTrial, EvalError> {
    let truth: Vec<f64> = set.iter().map(|(_, s)| *s).collect();
    let mut truth_ranking: Vec<usize> = (1..=set.len()).collect();
    truth_ranking.sort_by(|&a, &b| truth[b - 1].total_cmp(&truth[a - 1]));

    let mut t = Transcript::with_system(SYSTEM_PROMPT).expect("system prompt is valid");
    let mut descriptions = Vec::new();
    let mut parse_error = None;
    for (k, (sample, _)) in set.iter().enumerate() {
        let video = dataset
            .video(sample)
            .ok_or_else(|| EvalError::UnknownSample(sample.clone()))?;
        let reading = read_video(model, video, &cfg.saliency)?;
        match describe(llm, &mut t, k + 1, &reading) {
            Ok(adjectives) => descriptions.push(description_text(&adjectives, rag, &reading.embedding)?.0),
            Err(PipelineError::Prompt(e)) => {
                parse_error = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let predicted = match parse_error {
        Some(e) => Err(e),
        None => {
            build_sort_prompt(&descriptions, property)
                .map_err(PipelineError::from)?
                .push_into(&mut t)
                .map_err(|e| EvalError::Llm(e.into()))?;
            let reply = converse(llm, &mut t)?;
            parse_ranking(&reply.content, property, set.len()).map_err(|e| e.to_string())
        }
    };
    let n = set.len();
    let (predicted_ranking, error, (correct_pairs, total_pairs)) = match predicted {
        Ok(order) => {
            let score = pairwise_score(&truth, &order, cfg.tie_tolerance);
            (Some(order), None, score)
        }
        Err(e) => (None, Some(e), (0, n * (n - 1) / 2)),
    };
    Ok(SortTrial {
        trial_id: format!("{variant}/{category}/{property}/{trial:03}"),
        variant: variant.name().to_owned(),
        category: category.to_owned(),
        property,
        sample_ids: set.iter().map(|(s, _)| s.clone()).collect(),
        truth_scores: truth,
        truth_ranking,
        exact: predicted_ranking.is_some() && correct_pairs == total_pairs,
        predicted_ranking,
        correct_pairs,
        total_pairs,
        error,
    })
}
