//! State-information augmentation.
//!
//! Injects a controlled volume of goal-irrelevant text into the observation an
//! agent sees. Transitions and rewards never see the injected text: every
//! augmenter takes an already-rendered [`Observation`] and returns a new one
//! whose `injected_spans` record exactly which bytes were added, so deleting
//! them recovers the original rendering.
//!
//! Volumes are expressed as `epsilon` (estimated tokens) and converted to
//! sentence, entry, or line counts per domain by the `*_count` functions.

pub mod vocab;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Observation, Span};
use crate::rng::StreamRng;
use crate::shop::PageKind;
use crate::sokoban::{Pos, SokobanState};
use vocab::*;

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Information volume in estimated tokens.
    pub epsilon: f64,
    /// Per-trajectory application probability.
    pub prob: f64,
    /// Fill factor for extra result-page slots.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("epsilon must be a finite value >= 0, got {0}")]
    Epsilon(f64),
    #[error("prob must lie in [0, 1], got {0}")]
    Prob(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
}

impl AugmentSpec {
    pub fn new(epsilon: f64, prob: f64, seed: u64) -> Self {
        Self { epsilon, prob, alpha: default_alpha(), seed }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(AugmentError::Epsilon(self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.prob) {
            return Err(AugmentError::Prob(self.prob));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(AugmentError::Alpha(self.alpha));
        }
        Ok(())
    }
}

fn floor_count(x: f64) -> usize {
    // absorbs representation error such as 6.999999999 for an exact 7
    (x + 1e-9).floor().max(0.0) as usize
}

/// Household distractor sentences: one per 12 estimated tokens.
pub fn alf_sentence_count(epsilon: f64) -> usize {
    floor_count(epsilon / 12.0)
}

/// Extra result-page entries, capped at 10.
pub fn web_result_count(epsilon: f64, alpha: f64) -> usize {
    floor_count(epsilon / 100.0 * alpha * 10.0).min(10)
}

/// Trivial-feature sentences appended to a detail page.
pub fn web_feature_count(epsilon: f64) -> usize {
    floor_count(epsilon / 25.0).max(1)
}

/// Ad sentences appended to a detail page.
pub fn web_ad_count(epsilon: f64) -> usize {
    floor_count(epsilon / 30.0).max(1)
}

/// Out-of-grid lines appended to a Sokoban observation.
pub fn sokoban_line_count(epsilon: f64) -> usize {
    floor_count(epsilon / 10.0).max(1)
}

/// Per-trajectory application coin. Draw once at reset.
pub fn maybe_augment(spec: &AugmentSpec, rng: &mut StreamRng) -> bool {
    rng.gen_bool(spec.prob.clamp(0.0, 1.0))
}

/// Splices `insertions` (byte offset, text) into `text`. Insertions at the
/// same offset keep their given order.
fn splice(text: &str, mut insertions: Vec<(usize, String)>) -> (String, Vec<Span>) {
    insertions.sort_by_key(|(at, _)| *at);
    let extra: usize = insertions.iter().map(|(_, s)| s.len()).sum();
    let mut out = String::with_capacity(text.len() + extra);
    let mut spans = Vec::with_capacity(insertions.len());
    let mut cursor = 0;
    for (at, piece) in insertions {
        out.push_str(&text[cursor..at]);
        cursor = at;
        let start = out.len();
        out.push_str(&piece);
        spans.push(Span::new(start, out.len()));
    }
    out.push_str(&text[cursor..]);
    (out, spans)
}

fn with_insertions(obs: Observation, insertions: Vec<(usize, String)>) -> Observation {
    debug_assert!(obs.injected_spans.is_empty(), "augmenting an already augmented observation");
    let (text, injected_spans) = splice(&obs.text, insertions);
    Observation { text, injected_spans, ..obs }
}

/// Marker that ends the scene-description body of a household observation.
pub const ALF_BODY_END: &str = "\n\nYour task is to:";

/// Byte offsets right after each sentence-final period of the scene body.
fn sentence_boundaries(text: &str) -> Vec<usize> {
    let body_end = text.find(ALF_BODY_END).unwrap_or(text.len());
    let body = &text[..body_end];
    let bytes = body.as_bytes();
    let mut cuts: Vec<usize> = (1..=bytes.len())
        .filter(|&i| bytes[i - 1] == b'.' && (i == bytes.len() || bytes[i] == b' ' || bytes[i] == b'\n'))
        .collect();
    if cuts.is_empty() {
        cuts.push(body_end);
    }
    cuts
}

/// Inserts `alf_sentence_count(epsilon)` distractor sentences at random
/// sentence boundaries of the scene body. Sampled types that already exist in
/// the scene get an ID distinct from every scene and distractor ID of that type.
pub fn augment_alfworld(
    obs: Observation,
    scene_objects: &[(String, u32)],
    spec: &AugmentSpec,
    rng: &mut StreamRng,
) -> Observation {
    let n = alf_sentence_count(spec.epsilon);
    if n == 0 {
        return obs;
    }
    let mut taken: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for (kind, id) in scene_objects {
        taken.entry(kind.as_str()).or_default().insert(*id);
    }
    let cuts = sentence_boundaries(&obs.text);
    let mut insertions = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = *ALF_OBJECT_TYPES.choose(rng).expect("non-empty vocabulary");
        let desc = *ALF_DESCRIPTORS.choose(rng).expect("non-empty vocabulary");
        let template = *ALF_TEMPLATES.choose(rng).expect("non-empty vocabulary");
        let ids = taken.entry(kind).or_default();
        let mut id = rng.gen_range(1..=9);
        while ids.contains(&id) {
            id += 1;
        }
        ids.insert(id);
        let name = format!("{kind} {id}");
        let sentence = fill(template, &[("obj", &name), ("desc", desc)]);
        let at = *cuts.choose(rng).expect("at least one boundary");
        insertions.push((at, format!(" {sentence}")));
    }
    with_insertions(obs, insertions)
}

fn ad_line(rng: &mut StreamRng) -> String {
    let promo = *WEB_PROMOS.choose(rng).expect("non-empty vocabulary");
    let category = *WEB_CATEGORIES.choose(rng).expect("non-empty vocabulary");
    fill(WEB_AD_TEMPLATE, &[("promo", promo), ("category", category)])
}

const ASIN_ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

fn fake_asin(rng: &mut StreamRng, is_real: &dyn Fn(&str) -> bool, used: &mut BTreeSet<String>) -> String {
    loop {
        let tail: String = (0..8).map(|_| *ASIN_ALPHABET.choose(rng).expect("alphabet") as char).collect();
        let asin = format!("B0{tail}");
        if !is_real(&asin) && used.insert(asin.clone()) {
            return asin;
        }
    }
}

/// Shop augmentation. Result pages get `web_result_count` entries (a fair
/// coin per entry picks an ad or a never-clickable trivial product) placed at
/// random `slots`; detail pages get trivial features then ads at `slots[0]`.
/// Offsets in `slots` must sit right after a quoted item.
pub fn augment_webshop(
    kind: PageKind,
    slots: &[usize],
    is_catalog_asin: &dyn Fn(&str) -> bool,
    obs: Observation,
    spec: &AugmentSpec,
    rng: &mut StreamRng,
) -> Observation {
    if slots.is_empty() {
        return obs;
    }
    let item = |s: &str| format!(" [SEP] '{s}'");
    let mut insertions = Vec::new();
    match kind {
        PageKind::Search => return obs,
        PageKind::Results => {
            let mut used = BTreeSet::new();
            for _ in 0..web_result_count(spec.epsilon, spec.alpha) {
                let at = *slots.choose(rng).expect("non-empty slots");
                let entry = if rng.gen_bool(0.5) {
                    item(&ad_line(rng))
                } else {
                    let asin = fake_asin(rng, is_catalog_asin, &mut used);
                    let desc = *WEB_NONTARGET_FEATURES.choose(rng).expect("non-empty vocabulary");
                    let obj = *WEB_TRIVIAL_PRODUCT_TYPES.choose(rng).expect("non-empty vocabulary");
                    let template = *WEB_TRIVIAL_TEMPLATES.choose(rng).expect("non-empty vocabulary");
                    format!("{}{}", item(&asin), item(&fill(template, &[("desc", desc), ("obj", obj)])))
                };
                insertions.push((at, entry));
            }
        }
        PageKind::Detail => {
            let at = slots[0];
            for _ in 0..web_feature_count(spec.epsilon) {
                let feature = *WEB_TRIVIAL_FEATURES.choose(rng).expect("non-empty vocabulary");
                insertions.push((at, item(feature)));
            }
            for _ in 0..web_ad_count(spec.epsilon) {
                insertions.push((at, item(&ad_line(rng))));
            }
        }
    }
    with_insertions(obs, insertions)
}

/// Appends `sokoban_line_count(epsilon)` lines naming distinct coordinates
/// outside the grid.
pub fn augment_sokoban(state: &SokobanState, obs: Observation, spec: &AugmentSpec, rng: &mut StreamRng) -> Observation {
    let n = sokoban_line_count(spec.epsilon);
    let (h, w) = (state.height, state.width);
    let mut band = 2;
    while ((h + 2 * band) * (w + 2 * band) - h * w) < n as i32 {
        band += 1;
    }
    let end = obs.text.len();
    let mut used = BTreeSet::new();
    let mut lines = Vec::with_capacity(n);
    while used.len() < n {
        let p = Pos::new(rng.gen_range(-band..h + band), rng.gen_range(-band..w + band));
        if state.in_bounds(p) || !used.insert(p) {
            continue;
        }
        let obj = *SOKOBAN_OBJECTS.choose(rng).expect("non-empty vocabulary");
        let desc = *SOKOBAN_LOCATIONS.choose(rng).expect("non-empty vocabulary");
        let (r, c) = (p.row.to_string(), p.col.to_string());
        let line = fill(SOKOBAN_TEMPLATE, &[("r", &r), ("c", &c), ("obj", obj), ("desc", desc)]);
        lines.push((end, format!("\n{line}")));
    }
    with_insertions(obs, lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn worked_volume_values() {
        assert_eq!(alf_sentence_count(120.0), 10);
        assert_eq!(alf_sentence_count(360.0), 30);
        assert_eq!(alf_sentence_count(11.0), 0);
        assert_eq!(alf_sentence_count(300.0), 25);
        assert_eq!(web_result_count(100.0, 0.5), 5);
        assert_eq!(web_result_count(1e6, 1.0), 10);
        assert_eq!(web_feature_count(100.0), 4);
        assert_eq!(web_ad_count(100.0), 3);
        assert_eq!(web_feature_count(40.0), 1);
        assert_eq!(web_ad_count(40.0), 1);
        assert_eq!(sokoban_line_count(50.0), 5);
        assert_eq!(sokoban_line_count(150.0), 15);
        assert_eq!(sokoban_line_count(0.0), 1);
        assert_eq!(sokoban_line_count(80.0), 8);
    }

    #[test]
    fn coin_extremes() {
        let mut r = rng::seeded(3);
        assert!((0..100).all(|_| maybe_augment(&AugmentSpec::new(10.0, 1.0, 0), &mut r)));
        assert!((0..100).all(|_| !maybe_augment(&AugmentSpec::new(10.0, 0.0, 0), &mut r)));
    }

    #[test]
    fn coin_frequency_near_half() {
        // one coin per episode substream, as the episode runner draws it
        let spec = AugmentSpec::new(10.0, 0.5, 42);
        let hits = (0..10_000u64)
            .filter(|&ep| {
                maybe_augment(&spec, &mut rng::seeded(rng::derive_seed(spec.seed, rng::tags::AUGMENT_COIN, ep)))
            })
            .count();
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn spec_validation() {
        assert!(AugmentSpec::new(10.0, 0.5, 0).validate().is_ok());
        assert!(AugmentSpec::new(-1.0, 0.5, 0).validate().is_err());
        assert!(AugmentSpec::new(1.0, 1.5, 0).validate().is_err());
        let spec: AugmentSpec = serde_json::from_str(r#"{"epsilon":80,"prob":1,"seed":3}"#).unwrap();
        assert_eq!(spec.alpha, 0.5);
    }

    #[test]
    fn splice_tracks_spans() {
        let (text, spans) = splice("abc", vec![(3, "Z".into()), (1, "X".into()), (1, "Y".into())]);
        assert_eq!(text, "aXYbcZ");
        assert_eq!(spans, vec![Span::new(1, 2), Span::new(2, 3), Span::new(5, 6)]);
    }

    #[test]
    fn alf_ids_avoid_scene_ids() {
        let scene = vec![("cup".to_string(), 1), ("cup".to_string(), 2), ("knife".to_string(), 1)];
        let obs = Observation::new("You arrive at drawer 1. The drawer 1 is open.".into(), vec![], "t".into());
        for seed in 0..50 {
            let out =
                augment_alfworld(obs.clone(), &scene, &AugmentSpec::new(360.0, 1.0, seed), &mut rng::seeded(seed));
            for bad in ["cup 1 ", "cup 2 ", "knife 1 "] {
                assert!(!out.text.contains(&format!("a {bad}")), "{}", out.text);
            }
            assert_eq!(out.stripped_text(), obs.text);
        }
    }
}
