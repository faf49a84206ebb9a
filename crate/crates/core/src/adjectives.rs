//! Fixed tactile adjective vocabulary and its mapping from 0-10 scores.
//!
//! Hardness and roughness are each cut into five bands of width 2. Every band
//! owns two words; four extra words fire on combinations of bands. A word
//! therefore always implies a band, which lets text-only consumers recover a
//! coarse score from a description.

/// Words per hardness band, softest first.
const HARDNESS_BANDS: [[&str; 2]; 5] = [
    ["squishy", "spongy"],
    ["soft", "yielding"],
    ["firm", "springy"],
    ["hard", "solid"],
    ["rigid", "unyielding"],
];

/// Words per roughness band, smoothest first.
const ROUGHNESS_BANDS: [[&str; 2]; 5] = [
    ["slippery", "glossy"],
    ["smooth", "silky"],
    ["textured", "grainy"],
    ["rough", "grippy"],
    ["coarse", "bristly"],
];

/// All 24 words, in a fixed order.
pub const VOCABULARY: [&str; 24] = [
    "squishy",
    "spongy",
    "soft",
    "yielding",
    "firm",
    "springy",
    "hard",
    "solid",
    "rigid",
    "unyielding",
    "slippery",
    "glossy",
    "smooth",
    "silky",
    "textured",
    "grainy",
    "rough",
    "grippy",
    "coarse",
    "bristly",
    "fuzzy",
    "plush",
    "waxy",
    "bumpy",
];

/// A rankable tactile property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Hardness,
    Roughness,
}

impl Property {
    pub const ALL: [Property; 2] = [Property::Hardness, Property::Roughness];

    pub fn name(self) -> &'static str {
        match self {
            Property::Hardness => "hardness",
            Property::Roughness => "roughness",
        }
    }

    pub fn level_of(self) -> fn(&str) -> Option<f64> {
        match self {
            Property::Hardness => hardness_level,
            Property::Roughness => roughness_level,
        }
    }
}

impl std::fmt::Display for Property {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hardness" => Ok(Property::Hardness),
            "roughness" => Ok(Property::Roughness),
            other => Err(format!("unknown property `{other}` (expected hardness or roughness)")),
        }
    }
}

/// Band index in `0..5` for a score on the 0-10 scale.
pub fn band(score: f64) -> usize {
    ((score / 2.0).floor().max(0.0) as usize).min(4)
}

/// Deterministic adjectives for a (hardness, roughness) pair.
pub fn adjectives_for(hardness: f64, roughness: f64) -> Vec<String> {
    let hb = band(hardness);
    let rb = band(roughness);
    let mut out: Vec<&str> = Vec::with_capacity(5);
    out.extend(HARDNESS_BANDS[hb]);
    out.extend(ROUGHNESS_BANDS[rb]);
    if hb <= 1 && rb >= 3 {
        out.push("fuzzy");
    }
    if hb == 0 && (1..=2).contains(&rb) {
        out.push("plush");
    }
    if hb >= 2 && rb == 0 {
        out.push("waxy");
    }
    if (2..=3).contains(&hb) && rb == 2 {
        out.push("bumpy");
    }
    out.into_iter().map(str::to_owned).collect()
}

/// Centre of the hardness band a word belongs to, if it is a hardness word.
pub fn hardness_level(word: &str) -> Option<f64> {
    level(&HARDNESS_BANDS, word)
}

/// Centre of the roughness band a word belongs to, if it is a roughness word.
pub fn roughness_level(word: &str) -> Option<f64> {
    level(&ROUGHNESS_BANDS, word)
}

fn level(bands: &[[&str; 2]; 5], word: &str) -> Option<f64> {
    bands
        .iter()
        .position(|b| b.contains(&word))
        .map(|i| 2.0 * i as f64 + 1.0)
}

/// Mean band centre over the words that carry a level; `None` if none do.
pub fn implied_score<'a>(words: impl IntoIterator<Item = &'a str>, level_of: fn(&str) -> Option<f64>) -> Option<f64> {
    let levels: Vec<f64> = words.into_iter().filter_map(level_of).collect();
    if levels.is_empty() {
        None
    } else {
        Some(levels.iter().sum::<f64>() / levels.len() as f64)
    }
}
