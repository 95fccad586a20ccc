//! Shared helpers for integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentiment_core::corpus::{RawReview, Sentiment};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const POSITIVE: &[&str] = &[
    "great", "excellent", "wonderful", "brilliant", "superb", "amazing", "loved", "beautiful",
    "touching", "masterpiece", "fantastic", "delightful", "charming", "gripping", "perfect",
    "hilarious", "moving", "stunning", "enjoyable", "memorable", "clever", "powerful", "fun",
    "terrific", "outstanding", "heartfelt", "engaging", "favorite", "recommend", "best",
];

const NEGATIVE: &[&str] = &[
    "awful", "terrible", "boring", "waste", "worst", "bad", "dull", "stupid", "horrible",
    "poorly", "mess", "annoying", "pointless", "tedious", "lame", "disappointing", "weak",
    "predictable", "ridiculous", "cheap", "unfunny", "bland", "forgettable", "laughable",
    "painful", "clumsy", "wooden", "incoherent", "avoid", "garbage",
];

const FILLER: &[&str] = &[
    "the", "a", "and", "is", "it", "this", "was", "of", "to", "in", "that", "with", "for", "as",
    "on", "but", "i", "his", "her", "they", "be", "at", "by", "an", "so",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "po", "da", "fi", "gu", "he", "jo",
    "ba", "ce", "wu", "xi", "yo",
];

fn neutral_word(i: usize) -> String {
    let n = SYLLABLES.len();
    format!("{}{}{}", SYLLABLES[i % n], SYLLABLES[(i / n) % n], SYLLABLES[(i / (n * n)) % n])
}

/// Balanced, label-noisy movie-review lookalikes.
///
/// Each review mixes stopword filler, a skewed pool of 600 neutral
/// pseudo-words and sentiment cue words. A cue agrees with the label 75% of
/// the time and 8% of cues are negated (`not` plus the opposite word), which
/// cleaning turns into a misleading cue. 3% of reviews are written for the
/// opposite label. Text carries HTML breaks, digits and punctuation for the
/// cleaner to chew on.
pub fn synthetic_reviews(n: usize, seed: u64) -> Vec<RawReview> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Sentiment> = (0..n)
        .map(|i| if i < n / 2 { Sentiment::Positive } else { Sentiment::Negative })
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .map(|label| {
            let written = if rng.random::<f64>() < 0.03 {
                Sentiment::from_label(1 - label.as_label())
            } else {
                label
            };
            RawReview {
                text: review_text(written, &mut rng),
                label,
            }
        })
        .collect()
}

fn review_text(polarity: Sentiment, rng: &mut ChaCha8Rng) -> String {
    let (own, other) = match polarity {
        Sentiment::Positive => (POSITIVE, NEGATIVE),
        Sentiment::Negative => (NEGATIVE, POSITIVE),
    };
    let len = rng.random_range(25..=140);
    let mut words: Vec<String> = Vec::with_capacity(len + 8);
    for i in 0..len {
        if i > 0 && rng.random::<f64>() < 0.06 {
            words.push(if rng.random::<bool>() { "<br /><br />".into() } else { ".".into() });
        }
        let r: f64 = rng.random();
        if r < 0.35 {
            words.push(FILLER[rng.random_range(0..FILLER.len())].into());
        } else if r < 0.43 {
            let agrees = rng.random::<f64>() < 0.75;
            let pool = if agrees { own } else { other };
            let negated_pool = if agrees { other } else { own };
            if rng.random::<f64>() < 0.08 {
                words.push("not".into());
                words.push(negated_pool[rng.random_range(0..negated_pool.len())].into());
            } else {
                words.push(pool[rng.random_range(0..pool.len())].into());
            }
        } else if r < 0.45 {
            words.push(format!("{}/10", rng.random_range(1..=10)));
        } else {
            let u: f64 = rng.random();
            words.push(neutral_word((u * u * 600.0) as usize));
        }
    }
    let mut text = words.join(" ");
    if let Some(first) = text.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    text.push('!');
    text
}

pub fn write_reviews_csv(path: &Path, reviews: &[RawReview]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["review", "sentiment"]).unwrap();
    for r in reviews {
        w.write_record([r.text.as_str(), r.label.as_str()]).unwrap();
    }
    w.flush().unwrap();
}
