//! Template components, component vectors and template classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::{EntitySpan, EntityType, PosTag};
use crate::error::{invalid, Error, Result};

pub const NUM_COMPONENTS: usize = 5;
pub const NUM_CLASSES: usize = 1 << NUM_COMPONENTS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Who,
    When,
    Where,
    Misc,
    Context,
}

impl Component {
    /// Fixed order; position is the vector index and the class bit.
    pub const ALL: [Component; NUM_COMPONENTS] = [
        Component::Who,
        Component::When,
        Component::Where,
        Component::Misc,
        Component::Context,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Who => "who",
            Component::When => "when",
            Component::Where => "where",
            Component::Misc => "misc",
            Component::Context => "context",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown template component `{s}`; valid components are who, when, where, misc, context"
                ))
            })
    }
}

pub fn component_of_entity_type(t: EntityType) -> Component {
    use EntityType::*;
    match t {
        Person | Norp | Org => Component::Who,
        Date | Time => Component::When,
        Fac | Gpe | Loc => Component::Where,
        Product | Event | Art | Law | Lan | Percent | Money | Quantity | Ordinal | Cardinal => {
            Component::Misc
        }
    }
}

/// Like [`component_of_entity_type`] for a type name such as `"GPE"`.
pub fn component_of_type_name(name: &str) -> Result<Component> {
    Ok(component_of_entity_type(name.parse()?))
}

/// Per-component presence probabilities, in [`Component::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentVector {
    pub alpha: [f64; NUM_COMPONENTS],
    /// True when the values are ground-truth 0/1 flags.
    pub oracle: bool,
}

impl ComponentVector {
    pub fn oracle(bits: [bool; NUM_COMPONENTS]) -> Self {
        Self {
            alpha: bits.map(|b| if b { 1.0 } else { 0.0 }),
            oracle: true,
        }
    }

    pub fn auto(alpha: [f64; NUM_COMPONENTS]) -> Result<Self> {
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return invalid(format!("component probability {a} outside [0, 1]"));
        }
        Ok(Self {
            alpha,
            oracle: false,
        })
    }

    pub fn from_components(components: &[Component]) -> Self {
        let mut bits = [false; NUM_COMPONENTS];
        for c in components {
            bits[c.index()] = true;
        }
        Self::oracle(bits)
    }

    /// Parses a comma-separated component list such as `who,context`.
    pub fn parse_template(list: &str) -> Result<Self> {
        let components = list
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Component>>>()?;
        Ok(Self::from_components(&components))
    }

    pub fn get(&self, c: Component) -> f64 {
        self.alpha[c.index()]
    }

    pub fn is_binary(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0 || a == 1.0)
    }
}

/// Caption components: one per entity type group present, plus context when
/// any word is tagged as a verb. Counts of spans do not matter.
pub fn extract_components(spans: &[EntitySpan], tags: &[PosTag]) -> ComponentVector {
    let mut bits = [false; NUM_COMPONENTS];
    for s in spans {
        bits[component_of_entity_type(s.entity_type).index()] = true;
    }
    bits[Component::Context.index()] = tags.contains(&PosTag::Verb);
    ComponentVector::oracle(bits)
}

/// One of the 32 component subsets; bit `i` is set when `Component::ALL[i]`
/// is a member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateClass(u8);

impl TemplateClass {
    pub fn new(id: usize) -> Result<Self> {
        if id >= NUM_CLASSES {
            return invalid(format!("template class id {id} outside [0, {NUM_CLASSES})"));
        }
        Ok(Self(id as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn members(self) -> Vec<Component> {
        Component::ALL
            .into_iter()
            .filter(|c| self.0 & (1 << c.index()) != 0)
            .collect()
    }

    pub fn contains(self, c: Component) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn to_vector(self) -> ComponentVector {
        ComponentVector::from_components(&self.members())
    }

    /// `{who,context}` style label; `{}` for the empty class.
    pub fn label(self) -> String {
        let names: Vec<&str> = self.members().iter().map(|c| c.as_str()).collect();
        format!("{{{}}}", names.join(","))
    }
}

pub fn template_class_id(v: &ComponentVector) -> Result<TemplateClass> {
    if !v.is_binary() {
        return invalid(format!(
            "template class needs a 0/1 component vector, got {:?}",
            v.alpha
        ));
    }
    let id = v
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a == 1.0)
        .fold(0usize, |acc, (i, _)| acc | (1 << i));
    TemplateClass::new(id)
}

/// Component and class frequencies over a set of captions, in percent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemplateStats {
    pub captions: usize,
    pub component_pct: [f64; NUM_COMPONENTS],
    /// Every observed class, most frequent first (ties by id).
    pub classes: Vec<(TemplateClass, f64)>,
}

pub fn corpus_component_stats(vectors: &[ComponentVector]) -> Result<TemplateStats> {
    if vectors.is_empty() {
        return invalid("template statistics need at least one caption");
    }
    let mut counts = [0usize; NUM_CLASSES];
    for v in vectors {
        counts[template_class_id(v)?.id()] += 1;
    }
    let n = vectors.len() as f64;
    let mut component_pct = [0.0; NUM_COMPONENTS];
    for (id, &c) in counts.iter().enumerate() {
        for comp in TemplateClass(id as u8).members() {
            component_pct[comp.index()] += c as f64;
        }
    }
    component_pct.iter_mut().for_each(|p| *p = 100.0 * *p / n);
    let mut classes: Vec<(TemplateClass, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(id, &c)| (TemplateClass(id as u8), 100.0 * c as f64 / n))
        .collect();
    classes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(TemplateStats {
        captions: vectors.len(),
        component_pct,
        classes,
    })
}

impl TemplateStats {
    /// Two tab-separated tables separated by a blank line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("component\tpercentage\n");
        for c in Component::ALL {
            out.push_str(&format!("{c}\t{:.2}\n", self.component_pct[c.index()]));
        }
        out.push_str("\nclass_id\tmembers\tpercentage\n");
        for (class, pct) in &self.classes {
            out.push_str(&format!("{}\t{}\t{pct:.2}\n", class.id(), class.label()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn span(t: EntityType) -> EntitySpan {
        EntitySpan {
            start: 0,
            end: 1,
            entity_type: t,
            surface: String::new(),
        }
    }

    #[test]
    fn entity_type_mapping() {
        use EntityType::*;
        let expected = [
            (Person, Component::Who),
            (Norp, Component::Who),
            (Org, Component::Who),
            (Date, Component::When),
            (Time, Component::When),
            (Fac, Component::Where),
            (Gpe, Component::Where),
            (Loc, Component::Where),
            (Product, Component::Misc),
            (Event, Component::Misc),
            (Art, Component::Misc),
            (Law, Component::Misc),
            (Lan, Component::Misc),
            (Percent, Component::Misc),
            (Money, Component::Misc),
            (Quantity, Component::Misc),
            (Ordinal, Component::Misc),
            (Cardinal, Component::Misc),
        ];
        for (t, c) in expected {
            assert_eq!(component_of_entity_type(t), c, "{t}");
        }
        assert!(component_of_type_name("ANIMAL").is_err());
        assert_eq!(component_of_type_name("GPE").unwrap(), Component::Where);
    }

    #[test]
    fn extraction_examples() {
        let v = extract_components(
            &[span(EntityType::Person), span(EntityType::Date)],
            &[PosTag::Other, PosTag::Verb],
        );
        assert_eq!(v.alpha, [1.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(v.oracle);
        assert_eq!(extract_components(&[], &[]).alpha, [0.0; 5]);
        let no_verb = extract_components(&[span(EntityType::Gpe)], &[PosTag::Noun, PosTag::Other]);
        assert_eq!(no_verb.get(Component::Context), 0.0);
    }

    #[test]
    fn class_ids() {
        let id = |bits| template_class_id(&ComponentVector::oracle(bits)).unwrap().id();
        assert_eq!(id([false; 5]), 0);
        assert_eq!(id([true, false, false, false, false]), 1);
        assert_eq!(id([true; 5]), 31);
        let soft = ComponentVector::auto([0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(template_class_id(&soft).is_err());
        assert!(ComponentVector::auto([1.5, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn manual_template_parsing() {
        let v = ComponentVector::parse_template("who,context").unwrap();
        assert_eq!(v.alpha, [1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(ComponentVector::parse_template("who,why").is_err());
    }

    #[test]
    fn stats_small_corpus() {
        let who = ComponentVector::from_components(&[Component::Who]);
        let none = ComponentVector::from_components(&[]);
        let s = corpus_component_stats(&[who, who, none]).unwrap();
        assert!((s.component_pct[0] - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(s.classes[0].0.id(), 1);
        assert!(corpus_component_stats(&[]).is_err());
        let tsv = s.to_tsv();
        assert!(tsv.contains("who\t66.67\n") && tsv.contains("1\t{who}\t66.67\n"), "{tsv}");
    }

    proptest! {
        #[test]
        fn class_round_trip(id in 0usize..32) {
            let class = TemplateClass::new(id).unwrap();
            prop_assert_eq!(template_class_id(&class.to_vector()).unwrap(), class);
        }

        #[test]
        fn extraction_is_monotone(
            types in prop::collection::vec(0usize..18, 0..6),
            extra in 0usize..18,
            verb in any::<bool>(),
        ) {
            let tags = if verb { vec![PosTag::Verb] } else { vec![PosTag::Noun] };
            let mut spans: Vec<EntitySpan> = types.iter().map(|&t| span(EntityType::ALL[t])).collect();
            let before = extract_components(&spans, &tags);
            spans.push(span(EntityType::ALL[extra]));
            let after = extract_components(&spans, &tags);
            for i in 0..NUM_COMPONENTS {
                prop_assert!(after.alpha[i] >= before.alpha[i]);
            }
        }

        #[test]
        fn stats_are_consistent(ids in prop::collection::vec(0usize..32, 1..60)) {
            let vs: Vec<ComponentVector> =
                ids.iter().map(|&i| TemplateClass::new(i).unwrap().to_vector()).collect();
            let s = corpus_component_stats(&vs).unwrap();
            let total: f64 = s.classes.iter().map(|c| c.1).sum();
            prop_assert!((total - 100.0).abs() < 1e-6);
            for c in Component::ALL {
                let from_classes: f64 =
                    s.classes.iter().filter(|(k, _)| k.contains(c)).map(|k| k.1).sum();
                prop_assert!((from_classes - s.component_pct[c.index()]).abs() < 1e-6);
            }
            for w in s.classes.windows(2) {
                prop_assert!(w[0].1 >= w[1].1);
            }
        }
    }
}
