use joganic::annotate::Annotator;
use joganic::template::{extract_components, ComponentVector};

pub fn labeled_captions() -> Vec<(String, ComponentVector)> {
    include_str!("fixtures/template_captions.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (caption, label) = l.split_once('\t').expect("caption<TAB>label");
            let v = if label == "-" {
                ComponentVector::oracle([false; 5])
            } else {
                ComponentVector::parse_template(label).expect("valid label")
            };
            (caption.to_string(), v)
        })
        .collect()
}

#[test]
fn hand_labels_match_extraction() {
    let ann = Annotator::default();
    let data = labeled_captions();
    assert_eq!(data.len(), 50);
    let mut wrong = Vec::new();
    for (caption, gold) in &data {
        let a = ann.annotate(caption);
        let got = extract_components(&a.entities, &a.pos);
        if &got != gold {
            wrong.push(format!("{caption}: got {:?} want {:?} ents {:?} pos {:?}", got.alpha, gold.alpha, a.entities, a.pos));
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}
