//! Deterministic synthetic corpora used as fixtures.
//!
//! The captioning world has a handful of people, cities, weekdays and
//! events. As in news, the article is the source of the named content: it
//! reports some subset of who, where, when and which event, and the caption
//! uses exactly those. The image only shows the scene, which fixes the scene
//! phrase and its verb.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{write_dataset, DatasetRecord, Split};
use super::features::FeatureStore;
use crate::annotate::split_words;
use crate::error::Result;
use crate::math::Tensor;
use crate::model::pseudo_image_feature;
use crate::nee::{Anchor, Document, KnowledgeBase};

pub const PEOPLE: [&str; 12] = [
    "Barack Obama",
    "Angela Merkel",
    "Emmanuel Macron",
    "Serena Williams",
    "Roger Federer",
    "Taylor Swift",
    "Meryl Streep",
    "George Clooney",
    "Elon Musk",
    "Bernie Sanders",
    "Nancy Pelosi",
    "Tom Brady",
];

pub const CITIES: [&str; 10] = [
    "Boston",
    "Chicago",
    "Seattle",
    "Miami",
    "Houston",
    "Atlanta",
    "Detroit",
    "Brooklyn",
    "Philadelphia",
    "San Francisco",
];

pub const ORGS: [&str; 8] = ["NASA", "Google", "Microsoft", "Amazon", "Apple", "Yankees", "Mets", "Knicks"];

const DAYS: [&str; 7] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];
const EVENTS: [&str; 4] = ["Olympics", "Super Bowl", "World Cup", "Thanksgiving"];

struct Scene {
    phrase: &'static str,
    /// Verb phrase used when the caption names a person.
    verb: &'static str,
    /// Subject used when it does not.
    crowd: &'static str,
}

const SCENES: [Scene; 8] = [
    Scene { phrase: "a rally", verb: "speaks at", crowd: "Supporters" },
    Scene { phrase: "a concert", verb: "performs at", crowd: "Fans" },
    Scene { phrase: "the museum", verb: "visits", crowd: "Visitors" },
    Scene { phrase: "a game", verb: "watches", crowd: "Fans" },
    Scene { phrase: "a press conference", verb: "arrives at", crowd: "Reporters" },
    Scene { phrase: "a parade", verb: "marches in", crowd: "Crowds" },
    Scene { phrase: "the market", verb: "walks through", crowd: "Shoppers" },
    Scene { phrase: "a festival", verb: "attends", crowd: "Guests" },
];

const FILLER: [&str; 8] = [
    "Officials said the crowd was larger than expected .",
    "Tickets sold out within hours .",
    "The weather stayed mild throughout the afternoon .",
    "Local businesses reported a busy weekend .",
    "Police closed several streets nearby .",
    "Organizers plan to return next year .",
    "Many people waited in line for hours .",
    "The schedule was announced last month .",
];

pub const NUM_SCENES: usize = SCENES.len();

/// Scene prototype plus per-image noise.
pub fn scene_feature(scene: usize, key: &str, regions: usize, dim: usize) -> Tensor<f32> {
    let proto = pseudo_image_feature(&format!("scene:{scene}"), 1, dim);
    let noise = pseudo_image_feature(key, regions, dim);
    let data = noise
        .data()
        .iter()
        .enumerate()
        .map(|(i, n)| proto.data()[i % dim] + 0.3 * n)
        .collect();
    Tensor::new(vec![regions, dim], data).expect("shape matches")
}

/// Named facts an article reports; `None` when it leaves one out.
struct Facts<'a> {
    person: Option<&'a str>,
    city: Option<&'a str>,
    day: Option<&'a str>,
    event: Option<&'a str>,
}

impl Facts<'_> {
    fn caption(&self, scene: &Scene) -> String {
        let mut parts = match self.person {
            Some(p) => vec![p.to_string(), scene.verb.to_string()],
            None => vec![scene.crowd.to_string(), "at".to_string()],
        };
        parts.push(scene.phrase.into());
        if let Some(c) = self.city {
            parts.push(format!("in {c}"));
        }
        if let Some(d) = self.day {
            parts.push(format!("on {d}"));
        }
        if let Some(e) = self.event {
            parts.push(format!("during the {e}"));
        }
        format!("{} .", parts.join(" "))
    }

    fn lead(&self) -> String {
        let mut s = match self.person {
            Some(p) => format!("{p} appeared"),
            None => "A large crowd gathered".to_string(),
        };
        if let Some(c) = self.city {
            s.push_str(&format!(" in {c}"));
        }
        if let Some(d) = self.day {
            s.push_str(&format!(" on {d}"));
        }
        if let Some(e) = self.event {
            s.push_str(&format!(" for the {e}"));
        }
        s + " ."
    }
}

/// `n` records with ids `{prefix}{i:04}` and one feature matrix per record.
pub fn captioning_dataset(
    n: usize,
    seed: u64,
    prefix: &str,
    regions: usize,
    d_image: usize,
) -> (Vec<DatasetRecord>, Vec<(String, Tensor<f32>)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("{prefix}{i:04}");
        let s = rng.gen_range(0..NUM_SCENES);
        let person = *PEOPLE.choose(&mut rng).expect("non-empty");
        let facts = Facts {
            person: rng.gen_bool(0.85).then_some(person),
            city: rng.gen_bool(0.7).then(|| *CITIES.choose(&mut rng).expect("non-empty")),
            day: rng.gen_bool(0.5).then(|| *DAYS.choose(&mut rng).expect("non-empty")),
            event: rng.gen_bool(0.3).then(|| *EVENTS.choose(&mut rng).expect("non-empty")),
        };
        let other = *PEOPLE.iter().filter(|&&p| p != person).collect::<Vec<_>>().choose(&mut rng).expect("non-empty");
        let org = *ORGS.choose(&mut rng).expect("non-empty");
        let mut sentences = vec![
            facts.lead(),
            format!("The visit was arranged with help from {org} ."),
            format!("{other} did not attend ."),
        ];
        sentences.extend(FILLER.choose_multiple(&mut rng, 2).map(|f| f.to_string()));
        sentences[1..].shuffle(&mut rng);
        records.push(DatasetRecord {
            id: id.clone(),
            split: Split::Train,
            article: Some(sentences.join(" ")),
            article_words: None,
            caption: facts.caption(&SCENES[s]),
            image_feature: id.clone(),
            caption_annotation: None,
            article_annotation: None,
        });
        features.push((id.clone(), scene_feature(s, &id, regions, d_image)));
    }
    (records, features)
}

/// Writes `dataset.jsonl` and `features/` under `dir` with `n` training
/// records and `test` held-out ones drawn with the next seed; returns the
/// dataset path.
pub fn write_captioning_fixture(
    dir: &Path,
    n: usize,
    test: usize,
    seed: u64,
    regions: usize,
    d_image: usize,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let (mut records, mut features) = captioning_dataset(n, seed, "rec", regions, d_image);
    let (mut held, held_features) = captioning_dataset(test, seed.wrapping_add(1), "tst", regions, d_image);
    held.iter_mut().for_each(|r| r.split = Split::Test);
    records.extend(held);
    features.extend(held_features);
    let store = FeatureStore::new(dir.join("features"));
    for (key, t) in &features {
        store.save(key, t)?;
    }
    let path = dir.join("dataset.jsonl");
    write_dataset(&path, &records)?;
    Ok(path)
}

fn kb_id(name: &str) -> String {
    name.replace(' ', "_")
}

/// 30 entities (people, cities, organizations) and 200 anchored documents.
///
/// Person `i` is linked to city `i % 10` and organization `i % 8`; each
/// document is about one person and mentions that person's city or
/// organization.
pub fn mini_kb(seed: u64) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::default();
    for name in PEOPLE.iter().chain(&CITIES).chain(&ORGS) {
        kb.add_entity(&kb_id(name));
    }
    let idx = |kb: &KnowledgeBase, name: &str| kb.index[&kb_id(name)];
    for (i, p) in PEOPLE.iter().enumerate() {
        let (a, c, o) = (idx(&kb, p), idx(&kb, CITIES[i % CITIES.len()]), idx(&kb, ORGS[i % ORGS.len()]));
        kb.edges.push((a, c));
        kb.edges.push((a, o));
    }
    for (i, c) in CITIES.iter().enumerate() {
        let (a, b) = (idx(&kb, c), idx(&kb, ORGS[i % ORGS.len()]));
        kb.edges.push((a, b));
    }
    let templates: [&str; 6] = [
        "{P} spoke to reporters in {C} on Monday .",
        "{P} met with leaders of {O} .",
        "In {C} , {P} greeted supporters .",
        "{O} announced a partnership with {P} .",
        "{P} returned to {C} after a long trip .",
        "Executives at {O} praised {P} .",
    ];
    for d in 0..200 {
        let p = d % PEOPLE.len();
        let person = PEOPLE[p];
        let city = CITIES[p % CITIES.len()];
        let org = ORGS[p % ORGS.len()];
        let mut words = Vec::new();
        let mut anchors = Vec::new();
        let count = rng.gen_range(1..=2);
        for t in templates.choose_multiple(&mut rng, count) {
            for piece in t.split_whitespace() {
                let (name, entity) = match piece {
                    "{P}" => (person, Some(person)),
                    "{C}" => (city, Some(city)),
                    "{O}" => (org, Some(org)),
                    w => (w, None),
                };
                let start = words.len();
                words.extend(split_words(name));
                if let Some(e) = entity {
                    anchors.push(Anchor { start, end: words.len(), entity: idx(&kb, e) });
                }
            }
        }
        kb.docs.push(Document { words, anchors });
    }
    kb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::Annotator;
    use crate::template::extract_components;

    #[test]
    fn captions_use_the_reported_facts() {
        let ann = Annotator::default();
        let (recs, feats) = captioning_dataset(60, 1, "t", 2, 8);
        assert_eq!(feats.len(), 60);
        for r in &recs {
            let a = ann.annotate(&r.caption);
            let v = extract_components(&a.entities, &a.pos);
            let article = r.article.as_deref().unwrap();
            let lead = &article[..article.find(" .").unwrap()];
            let has_person = PEOPLE.iter().any(|p| lead.starts_with(p));
            assert_eq!(v.alpha[0] == 1.0, has_person, "{}", r.caption);
            assert_eq!(v.alpha[4] == 1.0, has_person, "{}", r.caption);
            assert_eq!(v.alpha[1] == 1.0, lead.contains(" on "), "{}", r.caption);
            assert_eq!(v.alpha[2] == 1.0, lead.contains(" in "), "{}", r.caption);
            assert_eq!(v.alpha[3] == 1.0, lead.contains(" for the "), "{}", r.caption);
        }
        assert_eq!(captioning_dataset(60, 1, "t", 2, 8).0, recs);
    }

    #[test]
    fn mini_kb_shape() {
        let kb = mini_kb(0);
        assert_eq!(kb.entities.len(), 30);
        assert_eq!(kb.docs.len(), 200);
        assert!(kb.docs.iter().all(|d| !d.anchors.is_empty()));
        let back = KnowledgeBase::parse(&kb.to_jsonl()).unwrap();
        assert_eq!(back.to_jsonl(), kb.to_jsonl());
    }
}
