//! Fixed word lists for the caption templates.

use serde::{Deserialize, Serialize};

/// Entity types; the first `ANIMATE.len()` type ids are animate.
pub const ANIMATE: [&str; 8] = ["boy", "girl", "dog", "cat", "bear", "owl", "mike", "jenny"];
pub const INANIMATE: [&str; 8] = ["ball", "kite", "tree", "hat", "pizza", "bike", "frisbee", "table"];
pub const PROPER: [&str; 2] = ["mike", "jenny"];

/// `(stem, third person singular)`; held-out stems are taken from the end.
pub const TRANSITIVE_ANIMATE: [(&str, &str); 12] = [
    ("chase", "chases"),
    ("watch", "watches"),
    ("scare", "scares"),
    ("help", "helps"),
    ("call", "calls"),
    ("follow", "follows"),
    ("tickle", "tickles"),
    ("greet", "greets"),
    ("feed", "feeds"),
    ("hug", "hugs"),
    ("push", "pushes"),
    ("tease", "teases"),
];
pub const TRANSITIVE_INANIMATE: [(&str, &str); 12] = [
    ("kick", "kicks"),
    ("throw", "throws"),
    ("hold", "holds"),
    ("eat", "eats"),
    ("carry", "carries"),
    ("catch", "catches"),
    ("grab", "grabs"),
    ("lift", "lifts"),
    ("pull", "pulls"),
    ("drop", "drops"),
    ("toss", "tosses"),
    ("ride", "rides"),
];
pub const INTRANSITIVE: [(&str, &str); 12] = [
    ("run", "runs"),
    ("sit", "sits"),
    ("sleep", "sleeps"),
    ("jump", "jumps"),
    ("wave", "waves"),
    ("fall", "falls"),
    ("sing", "sings"),
    ("stand", "stands"),
    ("walk", "walks"),
    ("smile", "smiles"),
    ("cry", "cries"),
    ("dance", "dances"),
];

/// Expression ids index this list for animate entities.
pub const EXPRESSION_ADJ: [&str; 3] = ["happy", "sad", "angry"];
/// Pose ids index this list for inanimate entities.
pub const POSE_ADJ: [&str; 4] = ["big", "small", "red", "blue"];
pub const ADVERBS: [&str; 4] = ["quickly", "slowly", "loudly", "quietly"];
pub const DETERMINERS: [&str; 2] = ["the", "a"];
pub const MODALS: [&str; 2] = ["will", "can"];
pub const CONJUNCTION: &str = "and";
pub const PREPOSITIONS: [&str; 2] = ["near", "behind"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerbClass {
    TransitiveAnimate,
    TransitiveInanimate,
    Intransitive,
}

impl VerbClass {
    pub const ALL: [VerbClass; 3] = [
        VerbClass::TransitiveAnimate,
        VerbClass::TransitiveInanimate,
        VerbClass::Intransitive,
    ];

    pub fn verbs(self) -> &'static [(&'static str, &'static str)] {
        match self {
            VerbClass::TransitiveAnimate => &TRANSITIVE_ANIMATE,
            VerbClass::TransitiveInanimate => &TRANSITIVE_INANIMATE,
            VerbClass::Intransitive => &INTRANSITIVE,
        }
    }

    pub fn is_transitive(self) -> bool {
        self != VerbClass::Intransitive
    }

    /// Offset of this class in the global verb index.
    pub fn offset(self) -> usize {
        match self {
            VerbClass::TransitiveAnimate => 0,
            VerbClass::TransitiveInanimate => TRANSITIVE_ANIMATE.len(),
            VerbClass::Intransitive => TRANSITIVE_ANIMATE.len() + TRANSITIVE_INANIMATE.len(),
        }
    }

    pub fn of_verb(verb: usize) -> VerbClass {
        VerbClass::ALL
            .into_iter()
            .rev()
            .find(|c| verb >= c.offset())
            .expect("offset 0 matches every id")
    }
}

pub fn n_types() -> usize {
    ANIMATE.len() + INANIMATE.len()
}

pub fn n_verbs() -> usize {
    TRANSITIVE_ANIMATE.len() + TRANSITIVE_INANIMATE.len() + INTRANSITIVE.len()
}

pub fn type_word(ty: usize) -> &'static str {
    if ty < ANIMATE.len() {
        ANIMATE[ty]
    } else {
        INANIMATE[ty - ANIMATE.len()]
    }
}

pub fn is_animate(ty: usize) -> bool {
    ty < ANIMATE.len()
}

pub fn is_proper(ty: usize) -> bool {
    PROPER.contains(&type_word(ty))
}

pub fn pronoun(ty: usize) -> &'static str {
    match type_word(ty) {
        "boy" | "mike" => "he",
        "girl" | "jenny" => "she",
        _ => "it",
    }
}

/// `(stem, third person singular)` for a global verb id.
pub fn verb_forms(verb: usize) -> (&'static str, &'static str) {
    let class = VerbClass::of_verb(verb);
    class.verbs()[verb - class.offset()]
}

/// Gold lexical categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Noun,
    ProperNoun,
    Pronoun,
    Verb,
    Adjective,
    Adverb,
    Determiner,
    Conjunction,
    Modal,
    Other,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Noun,
        Category::ProperNoun,
        Category::Pronoun,
        Category::Verb,
        Category::Adjective,
        Category::Adverb,
        Category::Determiner,
        Category::Conjunction,
        Category::Modal,
        Category::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Noun => "noun",
            Category::ProperNoun => "proper-noun",
            Category::Pronoun => "pronoun",
            Category::Verb => "verb",
            Category::Adjective => "adjective",
            Category::Adverb => "adverb",
            Category::Determiner => "determiner",
            Category::Conjunction => "conjunction",
            Category::Modal => "modal",
            Category::Other => "other",
        }
    }

    /// Part-of-speech tag used in gold trees.
    pub fn from_tag(tag: &str) -> Category {
        match tag {
            "NN" | "NNS" => Category::Noun,
            "NNP" | "NNPS" => Category::ProperNoun,
            "PRP" | "PRP$" => Category::Pronoun,
            "VB" | "VBZ" | "VBD" | "VBG" | "VBN" | "VBP" => Category::Verb,
            "JJ" | "JJR" | "JJS" => Category::Adjective,
            "RB" | "RBR" | "RBS" => Category::Adverb,
            "DT" => Category::Determiner,
            "CC" => Category::Conjunction,
            "MD" => Category::Modal,
            _ => Category::Other,
        }
    }
}
