//! Deterministic toy English–Spanish parallel corpus.
//!
//! Sentences come from a small phrase grammar with subject–verb agreement,
//! gendered articles and adjectives, and Spanish noun–adjective order. They
//! carry capitalisation and punctuation (including `¿`), so they exercise the
//! same cleaning path as the real tab-separated corpora.

use crate::rng::RngStream;
use crate::text::corpus::ParallelCorpus;

#[derive(Clone, Copy)]
enum Person {
    I,
    You,
    He,
    She,
    We,
    They,
}

impl Person {
    const ALL: [Person; 6] = [
        Person::I,
        Person::You,
        Person::He,
        Person::She,
        Person::We,
        Person::They,
    ];

    fn en(self) -> &'static str {
        match self {
            Person::I => "I",
            Person::You => "you",
            Person::He => "he",
            Person::She => "she",
            Person::We => "we",
            Person::They => "they",
        }
    }

    fn es(self) -> &'static str {
        match self {
            Person::I => "yo",
            Person::You => "tú",
            Person::He => "él",
            Person::She => "ella",
            Person::We => "nosotros",
            Person::They => "ellos",
        }
    }

    fn third_singular(self) -> bool {
        matches!(self, Person::He | Person::She)
    }

    /// Index into the Spanish ending tables.
    fn slot(self) -> usize {
        match self {
            Person::I => 0,
            Person::You => 1,
            Person::He | Person::She => 2,
            Person::We => 3,
            Person::They => 4,
        }
    }
}

const AR: [&str; 5] = ["o", "as", "a", "amos", "an"];
const ER: [&str; 5] = ["o", "es", "e", "emos", "en"];
const IR: [&str; 5] = ["o", "es", "e", "imos", "en"];

struct Verb {
    en: &'static str,
    stem: &'static str,
    endings: &'static [&'static str; 5],
}

const TRANSITIVE: &[Verb] = &[
    Verb {
        en: "buy",
        stem: "compr",
        endings: &AR,
    },
    Verb {
        en: "need",
        stem: "necesit",
        endings: &AR,
    },
    Verb {
        en: "wash",
        stem: "lav",
        endings: &AR,
    },
    Verb {
        en: "clean",
        stem: "limpi",
        endings: &AR,
    },
    Verb {
        en: "carry",
        stem: "llev",
        endings: &AR,
    },
    Verb {
        en: "watch",
        stem: "mir",
        endings: &AR,
    },
    Verb {
        en: "paint",
        stem: "pint",
        endings: &AR,
    },
    Verb {
        en: "use",
        stem: "us",
        endings: &AR,
    },
    Verb {
        en: "sell",
        stem: "vend",
        endings: &ER,
    },
    Verb {
        en: "open",
        stem: "abr",
        endings: &IR,
    },
];

const INTRANSITIVE: &[Verb] = &[
    Verb {
        en: "work",
        stem: "trabaj",
        endings: &AR,
    },
    Verb {
        en: "dance",
        stem: "bail",
        endings: &AR,
    },
    Verb {
        en: "sing",
        stem: "cant",
        endings: &AR,
    },
    Verb {
        en: "swim",
        stem: "nad",
        endings: &AR,
    },
    Verb {
        en: "walk",
        stem: "camin",
        endings: &AR,
    },
    Verb {
        en: "run",
        stem: "corr",
        endings: &ER,
    },
    Verb {
        en: "live",
        stem: "viv",
        endings: &IR,
    },
];

struct Noun {
    en: &'static str,
    es: &'static str,
    feminine: bool,
}

const NOUNS: &[Noun] = &[
    Noun {
        en: "dog",
        es: "perro",
        feminine: false,
    },
    Noun {
        en: "cat",
        es: "gato",
        feminine: false,
    },
    Noun {
        en: "book",
        es: "libro",
        feminine: false,
    },
    Noun {
        en: "car",
        es: "coche",
        feminine: false,
    },
    Noun {
        en: "glass",
        es: "vaso",
        feminine: false,
    },
    Noun {
        en: "picture",
        es: "cuadro",
        feminine: false,
    },
    Noun {
        en: "newspaper",
        es: "periódico",
        feminine: false,
    },
    Noun {
        en: "house",
        es: "casa",
        feminine: true,
    },
    Noun {
        en: "apple",
        es: "manzana",
        feminine: true,
    },
    Noun {
        en: "table",
        es: "mesa",
        feminine: true,
    },
    Noun {
        en: "letter",
        es: "carta",
        feminine: true,
    },
    Noun {
        en: "window",
        es: "ventana",
        feminine: true,
    },
    Noun {
        en: "shirt",
        es: "camisa",
        feminine: true,
    },
    Noun {
        en: "door",
        es: "puerta",
        feminine: true,
    },
    Noun {
        en: "box",
        es: "caja",
        feminine: true,
    },
    Noun {
        en: "chair",
        es: "silla",
        feminine: true,
    },
];

/// English, Spanish masculine, Spanish feminine.
const ADJECTIVES: &[(&str, &str, &str)] = &[
    ("red", "rojo", "roja"),
    ("new", "nuevo", "nueva"),
    ("old", "viejo", "vieja"),
    ("small", "pequeño", "pequeña"),
    ("white", "blanco", "blanca"),
    ("black", "negro", "negra"),
    ("cheap", "barato", "barata"),
    ("big", "grande", "grande"),
    ("green", "verde", "verde"),
];

/// English, Spanish masculine, Spanish feminine.
const DETERMINERS: &[(&str, &str, &str)] = &[
    ("the", "el", "la"),
    ("a", "un", "una"),
    ("my", "mi", "mi"),
    ("your", "tu", "tu"),
    ("this", "este", "esta"),
];

const MODIFIERS: &[(&str, &str)] = &[
    ("today", "hoy"),
    ("now", "ahora"),
    ("every day", "todos los días"),
    ("here", "aquí"),
    ("in the park", "en el parque"),
    ("at home", "en casa"),
];

fn pick<'a, T>(rng: &mut RngStream, items: &'a [T]) -> &'a T {
    &items[rng.below(items.len())]
}

fn english_verb(v: &Verb, p: Person) -> String {
    if !p.third_singular() {
        return v.en.to_string();
    }
    let base = v.en;
    if base.ends_with("sh") || base.ends_with("ch") || base.ends_with("ss") {
        format!("{base}es")
    } else if let Some(stem) = base.strip_suffix('y') {
        format!("{stem}ies")
    } else {
        format!("{base}s")
    }
}

fn spanish_verb(v: &Verb, p: Person) -> String {
    format!("{}{}", v.stem, v.endings[p.slot()])
}

fn noun_phrase(rng: &mut RngStream) -> (String, String) {
    let n = pick(rng, NOUNS);
    let d = pick(rng, DETERMINERS);
    let det_es = if n.feminine { d.2 } else { d.1 };
    if rng.unit() < 0.5 {
        let a = pick(rng, ADJECTIVES);
        let adj_es = if n.feminine { a.2 } else { a.1 };
        (
            format!("{} {} {}", d.0, a.0, n.en),
            format!("{det_es} {} {adj_es}", n.es),
        )
    } else {
        (format!("{} {}", d.0, n.en), format!("{det_es} {}", n.es))
    }
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(rng: &mut RngStream) -> (String, String) {
    let p = *pick(rng, &Person::ALL);
    let roll = rng.unit();
    let (en, es, question) = if roll < 0.45 {
        let v = pick(rng, TRANSITIVE);
        let (np_en, np_es) = noun_phrase(rng);
        let mut en = format!("{} {} {np_en}", p.en(), english_verb(v, p));
        let mut es = format!("{} {} {np_es}", p.es(), spanish_verb(v, p));
        if rng.unit() < 0.4 {
            let m = pick(rng, MODIFIERS);
            en = format!("{en} {}", m.0);
            es = format!("{es} {}", m.1);
        }
        (en, es, false)
    } else if roll < 0.7 {
        let v = pick(rng, INTRANSITIVE);
        let m = pick(rng, MODIFIERS);
        (
            format!("{} {} {}", p.en(), english_verb(v, p), m.0),
            format!("{} {} {}", p.es(), spanish_verb(v, p), m.1),
            false,
        )
    } else if roll < 0.85 {
        let v = pick(rng, TRANSITIVE);
        let (np_en, np_es) = noun_phrase(rng);
        let aux = if p.third_singular() { "does" } else { "do" };
        (
            format!("{aux} {} {} {np_en}", p.en(), v.en),
            format!("{} {} {np_es}", p.es(), spanish_verb(v, p)),
            true,
        )
    } else {
        let v = pick(rng, TRANSITIVE);
        let (np_en, np_es) = noun_phrase(rng);
        let aux = if p.third_singular() {
            "doesn't"
        } else {
            "don't"
        };
        (
            format!("{} {aux} {} {np_en}", p.en(), v.en),
            format!("{} no {} {np_es}", p.es(), spanish_verb(v, p)),
            false,
        )
    };
    if question {
        (
            format!("{}?", capitalise(&en)),
            format!("¿{}?", capitalise(&es)),
        )
    } else {
        (
            format!("{}.", capitalise(&en)),
            format!("{}.", capitalise(&es)),
        )
    }
}

/// `n` sentence pairs drawn from the toy grammar.
pub fn synthetic_corpus(n: usize, seed: u64) -> ParallelCorpus {
    let mut rng = RngStream::new(seed).substream("synthetic-corpus");
    ParallelCorpus::new((0..n).map(|_| sentence(&mut rng)).collect())
}

/// The corpus in the three-column tab-separated layout of the public
/// sentence-pair downloads.
pub fn to_tsv(corpus: &ParallelCorpus) -> String {
    let mut out = String::new();
    for (i, (s, t)) in corpus.pairs.iter().enumerate() {
        out.push_str(&format!("{s}\t{t}\tsynthetic #{i}\n"));
    }
    out
}
