//! Regenerates the files under `fixtures/` from a small synthetic world.
//!
//! Every service answer comes from the tables below, is recorded through the
//! response cache, and the recorded files are then replayed to check that
//! the offline run reproduces the recorded one.
//!
//!     cargo run -p hintgen-cli --example build_fixtures

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hintgen_core::analytics::{best_n, hicos_sweep, CandidateMode, HumanScores};
use hintgen_core::annotation::{Attribute, RatingRow};
use hintgen_core::convergence::ConvergenceConfig;
use hintgen_core::hints::leakage::leaks_answer;
use hintgen_core::hints::parse_source_markers;
use hintgen_core::pipeline::{run_pipeline, PipelineConfig, RunOptions};
use hintgen_core::record::{write_dataset, Hint, MajorType, QuestionRecord, RawQuestion};
use hintgen_core::services::{
    canonical_title, Backend, ClientOptions, MonthCount, ServiceClient, ServiceError,
    ServiceRequest, ServiceResponse, YearMonth,
};
use hintgen_core::text::normalized_key;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const DIM: usize = 32;

fn seed_of(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn hash_vector(text: &str) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(text));
    (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

enum Reply {
    Answer,
    Decline,
    Wrong(&'static str),
}

struct Q {
    id: &'static str,
    text: &'static str,
    answer: &'static str,
    /// Article for the answer; `None` when it has none.
    title: Option<&'static str>,
    views: u64,
    provided: Option<(MajorType, &'static str)>,
    reply: Reply,
    /// `~` marks a rephrase of the question, `!` a hint the judge does not
    /// link to the answer. An empty list means a reply without a hint list.
    hints: &'static [&'static str],
    distractors: &'static [&'static str],
    /// Candidate list leaves out the answer.
    omit_answer: bool,
}

const QUESTIONS: &[Q] = &[
    Q {
        id: "q01",
        text: "Which city hosts the headquarters of the International Monetary Fund?",
        answer: "Washington, D.C.",
        title: Some("Washington, D.C."),
        views: 820_000,
        provided: Some((MajorType::Location, "LOC:city")),
        reply: Reply::Answer,
        hints: &[
            "This city was founded on land ceded by Maryland and Virginia [1].",
            "It sits on the banks of the Potomac River [1].",
            "The World Bank is headquartered in the same city [2].",
            "It became the seat of the federal government in 1800 [1].",
            "The institution moved here after the Bretton Woods conference in 1944 [2].",
            "~The headquarters of the International Monetary Fund is in this city.",
            "It is not part of any of the fifty states [1].",
            "Its name honours a general and an explorer [1].",
            "Residents of Washington often call it simply the District [1].",
        ],
        distractors: &[
            "New York City",
            "Geneva",
            "Paris",
            "London",
            "Brussels",
            "Ottawa",
            "Tokyo",
            "Basel",
            "Vienna",
            "Boston",
        ],
        omit_answer: false,
    },
    Q {
        id: "q02",
        text: "Who painted the ceiling of the Sistine Chapel in Rome?",
        answer: "Michelangelo",
        title: Some("Michelangelo"),
        views: 610_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "He was born in Caprese in the Republic of Florence in 1475 [1].",
            "He also sculpted the statue of David [1].",
            "Pope Julius II commissioned this work from him [2].",
            "He designed the dome of St. Peter's Basilica in Vatican City [2].",
            "!He considered himself a sculptor rather than a painter [1].",
            "The work took him about four years to complete [1].",
            "He died in Rome in 1564 at the age of 88 [1].",
            "He was a rival of Leonardo da Vinci and Raphael [1].",
        ],
        distractors: &[
            "Raphael",
            "Leonardo da Vinci",
            "Botticelli",
            "Titian",
            "Caravaggio",
            "Donatello",
            "Giotto",
            "Bernini",
            "Perugino",
            "Tintoretto",
        ],
        omit_answer: false,
    },
    Q {
        id: "q03",
        text: "Which country has the largest population in South Asia?",
        answer: "India",
        title: Some("India"),
        views: 2_685_795,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "Its capital is New Delhi [1].",
            "It shares a long border with Pakistan and Bangladesh [1].",
            "Mumbai is its largest city by population [2].",
            "It gained independence from British rule in 1947 [1].",
            "The Himalayas run along its northern border [2].",
            "Hindi and English are its official languages at the national level [1].",
            "Its national team won the World Cup in 1983 and 2011 [2].",
            "Its official name in Hindi is Bharat [1].",
            "The India Gate war memorial stands in its capital [1].",
        ],
        distractors: &[
            "Pakistan",
            "Bangladesh",
            "Nepal",
            "Sri Lanka",
            "Afghanistan",
            "Bhutan",
            "Maldives",
            "Myanmar",
            "Iran",
            "China",
        ],
        omit_answer: false,
    },
    Q {
        id: "q04",
        text: "Which band recorded the album Abbey Road in 1969?",
        answer: "The Beatles",
        title: Some("The Beatles"),
        views: 1_150_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "The group was formed in Liverpool in 1960 [1].",
            "Paul McCartney was one of its members [1].",
            "Their records were released by EMI [2].",
            "~The album Abbey Road was recorded by this band in 1969.",
            "Their arrival in New York in 1964 started a wave of fan hysteria [1].",
            "They are the best-selling music act of all time [1].",
            "Their manager was Brian Epstein [1].",
            "Members of the Beatles later pursued solo careers [2].",
            "Their last public performance was on a London rooftop [1].",
        ],
        distractors: &[
            "The Rolling Stones",
            "The Who",
            "The Kinks",
            "Pink Floyd",
            "Led Zeppelin",
            "The Beach Boys",
            "Queen",
            "The Byrds",
            "Cream",
            "The Hollies",
        ],
        omit_answer: false,
    },
    Q {
        id: "q05",
        text: "What is the chemical element with the symbol Fe?",
        answer: "Iron",
        title: Some("Iron"),
        views: 140_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It is the most common element on Earth by mass [1].",
            "Its atomic number is 26 [1].",
            "It is the main component of steel [2].",
            "Haemoglobin uses it to carry oxygen in the blood [2].",
            "Its oxide is commonly known as rust [1].",
            "The red colour of Mars comes from its oxides [1].",
            "Its symbol comes from the Latin word ferrum [1].",
            "An iron age followed the bronze age in many cultures [1].",
        ],
        distractors: &[
            "Copper", "Fluorine", "Francium", "Lead", "Tin", "Nickel", "Cobalt", "Zinc", "Silver",
            "Gold",
        ],
        omit_answer: false,
    },
    Q {
        id: "q06",
        text: "Who wrote Hamlet?",
        answer: "William Shakespeare",
        title: Some("William Shakespeare"),
        views: 900_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[],
        distractors: &[],
        omit_answer: false,
    },
    Q {
        id: "q07",
        text: "Name the largest planet in the Solar System.",
        answer: "Jupiter",
        title: Some("Jupiter"),
        views: 500_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[],
        distractors: &[],
        omit_answer: false,
    },
    Q {
        id: "q08",
        text: "Which hidden village is home to the little blue gnomes in the cartoon?",
        answer: "Zxyville Hollow",
        title: None,
        views: 0,
        provided: None,
        reply: Reply::Answer,
        hints: &[],
        distractors: &[],
        omit_answer: false,
    },
    Q {
        id: "q09",
        text: "Why do leaves change colour in the autumn season?",
        answer: "Chlorophyll",
        title: Some("Chlorophyll"),
        views: 95_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[],
        distractors: &[],
        omit_answer: false,
    },
    Q {
        id: "q10",
        text: "Which engineer designed the first lighthouse on the Bell Rock?",
        answer: "Robert Stevenson",
        title: Some("Robert Stevenson (civil engineer)"),
        views: 12_000,
        provided: None,
        reply: Reply::Decline,
        hints: &[],
        distractors: &[],
        omit_answer: false,
    },
    Q {
        id: "q11",
        text: "Which planet in the Solar System has the most moons?",
        answer: "Saturn",
        title: Some("Saturn"),
        views: 450_000,
        provided: None,
        reply: Reply::Wrong("Jupiter has the most confirmed moons of any planet [1]."),
        hints: &[],
        distractors: &[],
        omit_answer: false,
    },
    Q {
        id: "q12",
        text: "Which composer wrote the opera The Magic Flute in 1791?",
        answer: "Wolfgang Amadeus Mozart",
        title: Some("Wolfgang Amadeus Mozart"),
        views: 700_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[],
        distractors: &[],
        omit_answer: false,
    },
    Q {
        id: "q13",
        text: "Which river flows through the city of Varanasi in India?",
        answer: "Ganges",
        title: Some("Ganges"),
        views: 260_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It rises in the western Himalayas [1].",
            "It flows into the Bay of Bengal [1].",
            "It is considered sacred in Hinduism [2].",
            "It has one of the most populous river basins in India [2].",
            "The Ganges delta is the largest river delta in the world [1].",
            "Pilgrims bathe in the Ganges at Haridwar [2].",
        ],
        distractors: &[
            "Yamuna",
            "Indus",
            "Brahmaputra",
            "Godavari",
            "Narmada",
            "Krishna",
            "Kaveri",
            "Sutlej",
            "Mahanadi",
            "Gomti",
        ],
        omit_answer: false,
    },
    Q {
        id: "q14",
        text: "Which sport is played in the Indian Premier League tournament?",
        answer: "Cricket",
        title: Some("Cricket"),
        views: 380_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It is the most popular sport in India [1].",
            "Sachin Tendulkar is one of its most famous players [1].",
            "Matches are played between two teams of eleven players [2].",
            "The Ashes is a famous series in this sport [2].",
            "Its Test format can last five days [1].",
            "It is played with a bat and a hard leather ball [1].",
            "The sport originated in England [2].",
            "~The Indian Premier League tournament plays this sport.",
            "Cricket bats are traditionally made from willow [1].",
        ],
        distractors: &[
            "Football",
            "Hockey",
            "Kabaddi",
            "Badminton",
            "Tennis",
            "Baseball",
            "Rugby",
            "Polo",
            "Golf",
            "Basketball",
        ],
        omit_answer: false,
    },
    Q {
        id: "q15",
        text: "Who was the first person to walk on the Moon in 1969?",
        answer: "Neil Armstrong",
        title: Some("Neil Armstrong"),
        views: 540_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "He commanded the Apollo 11 mission [1].",
            "He was born in Ohio in 1930 [1].",
            "He worked as a test pilot before joining NASA [2].",
            "He called his step one small step for a man [1].",
            "His crewmate Buzz Aldrin followed him onto the surface [2].",
            "He served as a naval aviator during the Korean War [1].",
            "!He later taught aerospace engineering at a university [1].",
        ],
        distractors: &[
            "Buzz Aldrin",
            "Yuri Gagarin",
            "John Glenn",
            "Michael Collins",
            "Alan Shepard",
            "Pete Conrad",
            "Gene Cernan",
            "Jim Lovell",
            "Alan Bean",
            "John Young",
        ],
        omit_answer: false,
    },
    Q {
        id: "q16",
        text: "Which mountain is the highest peak in the continent of Africa?",
        answer: "Mount Kilimanjaro",
        title: Some("Mount Kilimanjaro"),
        views: 210_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It is located in Tanzania near the border with Kenya [1].",
            "It is a dormant volcano with three cones [1].",
            "Its summit is called Uhuru Peak [2].",
            "Ernest Hemingway wrote a short story about its snows [2].",
            "It is the highest free-standing mountain in the world [1].",
            "Its glaciers have been shrinking for a century [1].",
            "Climbers on Mount Kilimanjaro pass through five climate zones [1].",
        ],
        distractors: &[
            "Mount Kenya",
            "Mount Stanley",
            "Mount Elgon",
            "Ras Dashen",
            "Mount Meru",
            "Mount Cameroon",
            "Toubkal",
            "Mount Karisimbi",
            "Mount Everest",
            "Mont Blanc",
        ],
        omit_answer: false,
    },
    Q {
        id: "q17",
        text: "Which language has the most native speakers in the world today?",
        answer: "Mandarin Chinese",
        title: Some("Mandarin Chinese"),
        views: 150_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It is the official language of China and Taiwan [1].",
            "It is a tonal language with four main tones [1].",
            "Its standard form is based on the Beijing dialect [2].",
            "It is written with Chinese characters [1].",
            "It is one of the six official languages of the United Nations [2].",
            "Pinyin is used to romanize it [1].",
            "~This language has the most native speakers in the world.",
        ],
        distractors: &[
            "English",
            "Spanish",
            "Hindi",
            "Arabic",
            "Bengali",
            "Portuguese",
            "Russian",
            "Japanese",
            "Cantonese",
            "French",
            "German",
        ],
        omit_answer: true,
    },
    Q {
        id: "q18",
        text: "Which instrument did the jazz musician Louis Armstrong famously play?",
        answer: "Trumpet",
        title: Some("Trumpet"),
        views: 90_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It is a brass instrument [1].",
            "It has three valves [1].",
            "Players change pitch by buzzing their lips into a cup-shaped mouthpiece [2].",
            "Miles Davis was another famous player of it [2].",
            "It was central to early jazz in New Orleans [1].",
            "The bugle is a simpler relative of it [1].",
            "It is the highest-pitched member of its family [1].",
        ],
        distractors: &[
            "Saxophone",
            "Clarinet",
            "Trombone",
            "Piano",
            "Cornet",
            "Double bass",
            "Drums",
            "Guitar",
            "Banjo",
            "Tuba",
        ],
        omit_answer: false,
    },
    Q {
        id: "q19",
        text: "What currency is used in Japan for everyday purchases and savings?",
        answer: "Japanese yen",
        title: Some("Japanese yen"),
        views: 170_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It is issued by the Bank of Japan [1].",
            "Its symbol is a Y with two horizontal bars [1].",
            "It is the third most traded currency on foreign exchange markets [2].",
            "Its largest coin has a face value of 500 [1].",
            "It was introduced in 1871 during the Meiji era [2].",
            "Banknotes in Tokyo carry portraits of cultural figures [1].",
            "It is often called a safe haven currency [2].",
            "A single yen coin is made of aluminium [1].",
        ],
        distractors: &[
            "Chinese yuan",
            "Korean won",
            "US dollar",
            "Euro",
            "Pound sterling",
            "Swiss franc",
            "Indian rupee",
            "Thai baht",
            "Hong Kong dollar",
            "Taiwan dollar",
        ],
        omit_answer: false,
    },
    Q {
        id: "q20",
        text: "Which novel by Mary Shelley features a scientist creating a creature?",
        answer: "Frankenstein",
        title: Some("Frankenstein"),
        views: 230_000,
        provided: None,
        reply: Reply::Answer,
        hints: &[
            "It was first published in London in 1818 [1].",
            "The story was conceived during a stay near Geneva [1].",
            "Lord Byron proposed the ghost story contest that inspired it [2].",
            "Its subtitle is The Modern Prometheus [1].",
            "The creature in it is never given a name [2].",
            "It is often called the first science fiction novel [1].",
            "~A novel by Mary Shelley in which a scientist creates a creature.",
            "Victor Frankenstein studies at the University of Ingolstadt [1].",
        ],
        distractors: &[
            "Dracula",
            "The Last Man",
            "Valperga",
            "Mathilda",
            "Lodore",
            "Falkner",
            "Ivanhoe",
            "Emma",
            "Jane Eyre",
            "Wuthering Heights",
        ],
        omit_answer: false,
    },
];

/// Surface form, article title, mean monthly views.
const ENTITIES: &[(&str, &str, u64)] = &[
    ("India", "India", 2_685_795),
    ("Pakistan", "Pakistan", 1_210_000),
    ("Bangladesh", "Bangladesh", 610_000),
    ("New Delhi", "New Delhi", 480_000),
    ("Mumbai", "Mumbai", 705_000),
    ("Himalayas", "Himalayas", 395_000),
    ("Florence", "Florence", 252_000),
    ("Vatican City", "Vatican City", 401_000),
    ("Pope Julius II", "Pope Julius II", 61_000),
    ("Rome", "Rome", 1_020_000),
    ("Leonardo da Vinci", "Leonardo da Vinci", 880_000),
    ("Raphael", "Raphael", 230_000),
    ("Liverpool", "Liverpool", 498_000),
    ("London", "London", 1_530_000),
    ("Paul McCartney", "Paul McCartney", 612_000),
    ("EMI", "EMI", 82_000),
    ("New York", "New York City", 1_400_000),
    ("Brian Epstein", "Brian Epstein", 73_000),
    ("Potomac River", "Potomac River", 91_000),
    ("World Bank", "World Bank", 183_000),
    ("Bretton Woods", "Bretton Woods Conference", 41_000),
    ("Maryland", "Maryland", 352_000),
    ("Virginia", "Virginia", 418_000),
    ("Earth", "Earth", 1_110_000),
    ("Mars", "Mars", 652_000),
    ("Haemoglobin", "Hemoglobin", 151_000),
    ("Bay of Bengal", "Bay of Bengal", 122_000),
    ("Hinduism", "Hinduism", 390_000),
    ("Haridwar", "Haridwar", 58_000),
    ("Varanasi", "Varanasi", 149_000),
    ("Sachin Tendulkar", "Sachin Tendulkar", 905_000),
    ("England", "England", 1_310_000),
    ("Indian Premier League", "Indian Premier League", 1_505_000),
    ("Apollo 11", "Apollo 11", 702_000),
    ("Ohio", "Ohio", 447_000),
    ("NASA", "NASA", 803_000),
    ("Buzz Aldrin", "Buzz Aldrin", 312_000),
    ("Korean War", "Korean War", 520_000),
    ("Moon", "Moon", 798_000),
    ("Tanzania", "Tanzania", 351_000),
    ("Kenya", "Kenya", 502_000),
    ("Ernest Hemingway", "Ernest Hemingway", 298_000),
    ("Africa", "Africa", 1_004_000),
    ("China", "China", 1_720_000),
    ("Taiwan", "Taiwan", 860_000),
    ("Beijing", "Beijing", 421_000),
    ("United Nations", "United Nations", 640_000),
    ("Pinyin", "Pinyin", 77_000),
    ("Miles Davis", "Miles Davis", 256_000),
    ("New Orleans", "New Orleans", 382_000),
    ("Louis Armstrong", "Louis Armstrong", 402_000),
    ("Bank of Japan", "Bank of Japan", 44_000),
    ("Tokyo", "Tokyo", 905_000),
    ("Japan", "Japan", 1_802_000),
    ("Meiji", "Meiji era", 96_000),
    ("Geneva", "Geneva", 301_000),
    ("Lord Byron", "Lord Byron", 199_000),
    ("Mary Shelley", "Mary Shelley", 452_000),
    ("Ingolstadt", "Ingolstadt", 35_000),
    (
        "International Monetary Fund",
        "International Monetary Fund",
        302_000,
    ),
    ("South Asia", "South Asia", 201_000),
    ("Abbey Road", "Abbey Road", 352_000),
    ("Sistine Chapel", "Sistine Chapel", 276_000),
    ("Solar System", "Solar System", 705_000),
];

fn months(views: u64) -> Vec<MonthCount> {
    (2015..=2023)
        .flat_map(|y| {
            (1..=12).map(move |m| MonthCount {
                month: YearMonth::new(y, m),
                views,
            })
        })
        .collect()
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let i = s.find(start)? + start.len();
    let j = s[i..].find(end)? + i;
    Some(&s[i..j])
}

fn wiki_url(title: &str) -> String {
    format!("https://en.wikipedia.org/wiki/{}", canonical_title(title))
}

/// Deterministic stand-in for the chat model, embedder and Wikipedia.
struct World {
    by_question: HashMap<&'static str, &'static Q>,
    /// Cleaned hint text to (question, flag).
    hints: HashMap<String, (&'static Q, char)>,
    titles: HashMap<String, String>,
    views: HashMap<String, u64>,
}

impl World {
    fn new() -> Self {
        let mut w = World {
            by_question: HashMap::new(),
            hints: HashMap::new(),
            titles: HashMap::new(),
            views: HashMap::new(),
        };
        for q in QUESTIONS {
            w.by_question.insert(q.text, q);
            for h in q.hints {
                let (flag, raw) = split_flag(h);
                w.hints.insert(parse_source_markers(raw).0, (q, flag));
            }
            if let Some(t) = q.title {
                w.titles.insert(canonical_title(q.answer), t.to_owned());
                w.views.insert(canonical_title(t), q.views);
            }
        }
        for (surface, title, views) in ENTITIES {
            w.titles.insert(canonical_title(surface), title.to_string());
            w.views.insert(canonical_title(title), *views);
        }
        w
    }

    fn answer_reply(q: &Q) -> String {
        match &q.reply {
            Reply::Decline => {
                "I'm not sure; I could not find reliable information about that.".into()
            }
            Reply::Wrong(text) => {
                format!("{text}\n\n[1]: https://en.wikipedia.org/wiki/Moons_of_Jupiter\n")
            }
            Reply::Answer => format!(
                "The answer is {} [1].\n\n[1]: {}\n",
                q.answer,
                wiki_url(q.title.unwrap_or(q.answer))
            ),
        }
    }

    fn hint_reply(q: &Q) -> String {
        if q.hints.is_empty() {
            return "I would rather not write hints for this question.".into();
        }
        let mut s = String::new();
        for (i, h) in q.hints.iter().enumerate() {
            s.push_str(&format!("{}. {}\n", i + 1, split_flag(h).1));
        }
        s.push_str(&format!(
            "\n[1]: {}\n[2]: https://www.britannica.com/search?query={}\n",
            wiki_url(q.title.unwrap_or(q.answer)),
            canonical_title(q.answer)
        ));
        s
    }

    fn candidates_reply(q: &Q) -> String {
        let mut list: Vec<&str> = q.distractors.to_vec();
        if !q.omit_answer {
            let at = (seed_of(q.id) % (list.len() as u64 + 1)) as usize;
            list.insert(at, q.answer);
        }
        list.iter().map(|c| format!("- {c}\n")).collect()
    }

    fn judge_reply(&self, hint: &str, candidate: &str) -> String {
        let Some((q, flag)) = self.hints.get(hint) else {
            return "No.".into();
        };
        let yes = if normalized_key(candidate) == normalized_key(q.answer) {
            *flag != '!'
        } else {
            seed_of(&format!("{hint}|{candidate}")).is_multiple_of(5)
        };
        if yes { "Yes." } else { "No." }.into()
    }

    fn chat(&self, prompt: &str) -> String {
        if prompt.starts_with("Give me ") {
            let q = between(prompt, "for the question \"", "\" without").expect("hint prompt");
            return Self::hint_reply(self.by_question[q]);
        }
        if prompt.starts_with("Generate up to ") {
            let q =
                between(prompt, "for the question \"", "\" in bullet").expect("candidate prompt");
            return Self::candidates_reply(self.by_question[q]);
        }
        if prompt.starts_with("Does the hint ") {
            let hint = between(prompt, "Does the hint \"", "\" refer to").expect("judge prompt");
            let cand = between(prompt, "refer to \"", "\"? Choose").expect("judge prompt");
            return self.judge_reply(hint, cand);
        }
        match self.by_question.get(prompt) {
            Some(q) => Self::answer_reply(q),
            None => panic!("unexpected prompt {prompt:?}"),
        }
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        if let Some((q, '~')) = self.hints.get(text) {
            let base = hash_vector(q.text);
            let noise = hash_vector(text);
            return base.iter().zip(noise).map(|(b, n)| b + 0.25 * n).collect();
        }
        hash_vector(text)
    }
}

fn split_flag(h: &str) -> (char, &str) {
    match h.chars().next() {
        Some(c @ ('~' | '!')) => (c, &h[1..]),
        _ => (' ', h),
    }
}

impl Backend for World {
    fn fetch(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        Ok(match request {
            ServiceRequest::Chat { prompt, .. } => ServiceResponse::Text(self.chat(prompt)),
            ServiceRequest::Embed { text, .. } => ServiceResponse::Vector(self.embed(text)),
            ServiceRequest::Resolve { title } => {
                ServiceResponse::Title(self.titles.get(title).cloned())
            }
            ServiceRequest::Pageviews { title, .. } => match self.views.get(title) {
                Some(v) => ServiceResponse::Months(months(*v)),
                None => ServiceResponse::NoArticle,
            },
        })
    }
}

fn write_lines<T: serde::Serialize>(path: &Path, rows: &[T]) {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).unwrap());
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

/// Rewrites a recorded cache sorted by digest so regenerated files diff
/// cleanly.
fn sort_cache(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.sort();
    lines.dedup();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn calibration_corpus() -> Vec<serde_json::Value> {
    // Log-spaced views between 1e3 and 3e6 over 80 synthetic articles.
    (0..80)
        .map(|i| {
            let v = (1e3f64.ln() + (3e6f64.ln() - 1e3f64.ln()) * i as f64 / 79.0).exp().round();
            serde_json::json!({"title": format!("Calibration article {i:02}"), "mean_monthly_views": v})
        })
        .collect()
}

fn build_pipeline(root: &Path) {
    let dir = root.join("pipeline");
    std::fs::create_dir_all(&dir).unwrap();
    let raw: Vec<RawQuestion> = QUESTIONS
        .iter()
        .map(|q| RawQuestion {
            q_id: q.id.into(),
            question: q.text.into(),
            exact_answer: q.answer.into(),
            major_type: q.provided.map(|p| p.0),
            minor_type: q.provided.map(|p| p.1.to_owned()),
        })
        .collect();
    write_lines(&dir.join("questions.jsonl"), &raw);
    let gaz: Vec<serde_json::Value> = ENTITIES
        .iter()
        .map(|(s, t, _)| serde_json::json!({"surface": s, "title": t}))
        .collect();
    write_lines(&dir.join("gazetteer.jsonl"), &gaz);
    write_lines(&dir.join("calibration.jsonl"), &calibration_corpus());
    std::fs::write(
        dir.join("run.toml"),
        "# Offline replay of a 20-question run.\n\
         input = \"questions.jsonl\"\n\
         output_dir = \"out\"\n\
         seed = 7\n\
         offline = true\n\
         fixture = \"services.jsonl\"\n\
         calibration_corpus = \"calibration.jsonl\"\n\
         gazetteer = \"gazetteer.jsonl\"\n",
    )
    .unwrap();

    // Clean hints must stay below the threshold by construction.
    let world = World::new();
    for (text, (q, flag)) in &world.hints {
        let s = cos(&world.embed(text), &world.embed(q.text));
        if *flag == '~' {
            assert!(s >= 0.72, "rephrase {text:?} only reaches {s}");
        } else {
            assert!(s < 0.72, "{text:?} accidentally similar ({s})");
        }
    }

    let fixture = dir.join("services.jsonl");
    let _ = std::fs::remove_file(&fixture);
    let mut config = PipelineConfig::load(&dir.join("run.toml")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    config.output_dir = tmp.path().join("recorded");
    config.offline = false;
    config.cache = Some(fixture.clone());
    let client = ServiceClient::new(Arc::new(World::new()), config.client_options()).unwrap();
    let recorded = run_pipeline(&config, &client, RunOptions::default()).unwrap();
    drop(client);
    sort_cache(&fixture);

    let mut offline = PipelineConfig::load(&dir.join("run.toml")).unwrap();
    offline.output_dir = tmp.path().join("replayed");
    let replay = ServiceClient::replay(&fixture, offline.client_options()).unwrap();
    run_pipeline(&offline, &replay, RunOptions::default()).unwrap();
    let a = std::fs::read(tmp.path().join("recorded/final.jsonl")).unwrap();
    let b = std::fs::read(tmp.path().join("replayed/final.jsonl")).unwrap();
    assert_eq!(a, b, "replay differs from recording");

    let m = recorded.manifest.unwrap();
    println!(
        "pipeline: {} final records, hint filter {:?}",
        m.final_count, m.hint_filter
    );
    for s in &m.stages {
        for r in &s.rejections {
            println!("  {:<12} {} {}", s.stage.as_str(), r.q_id, r.reason);
        }
    }
    let data = root.join("dataset");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(data.join("sample.jsonl"), a).unwrap();
}

/// Fixed candidates per sweep question; the answer is always first.
fn sweep_candidates(q: &Q, other: &Q) -> Vec<String> {
    std::iter::once(q.answer)
        .chain(q.distractors.iter().take(10).copied())
        .chain(other.distractors.iter().take(9).copied())
        .map(str::to_owned)
        .collect()
}

struct SweepWorld {
    candidates: HashMap<String, Vec<String>>,
    /// Hint text to per-candidate verdicts.
    verdicts: HashMap<String, HashMap<String, bool>>,
}

impl Backend for SweepWorld {
    fn fetch(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        let ServiceRequest::Chat { prompt, .. } = request else {
            return Err(ServiceError::BadResponse("sweep world only chats".into()));
        };
        let text = if prompt.starts_with("Generate up to ") {
            let q = between(prompt, "for the question \"", "\" in bullet").unwrap();
            self.candidates[q]
                .iter()
                .map(|c| format!("- {c}\n"))
                .collect()
        } else {
            let hint = between(prompt, "Does the hint \"", "\" refer to").unwrap();
            let cand = between(prompt, "refer to \"", "\"? Choose").unwrap();
            if self.verdicts[hint][cand] {
                "Yes"
            } else {
                "No"
            }
            .to_owned()
        };
        Ok(ServiceResponse::Text(text))
    }
}

/// Hint records whose human convergence ratings equal HICOS at eleven
/// candidates exactly, while other candidate counts drift away from it.
fn build_sweep(root: &Path) {
    let dir = root.join("sweep");
    std::fs::create_dir_all(&dir).unwrap();
    let pool: Vec<&Q> = QUESTIONS
        .iter()
        .filter(|q| q.hints.len() >= 7 && q.distractors.len() >= 10)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut records = Vec::new();
    let mut ratings = Vec::new();
    let mut candidates = HashMap::new();
    let mut verdicts: HashMap<String, HashMap<String, bool>> = HashMap::new();
    for (qi, q) in pool.iter().enumerate() {
        let cands = sweep_candidates(q, pool[(qi + 1) % pool.len()]);
        candidates.insert(q.text.to_owned(), cands.clone());
        let mut hints = Vec::new();
        for (hi, h) in q.hints.iter().take(6).enumerate() {
            let text = parse_source_markers(split_flag(h).1).0;
            let density = rng.random_range(0.05..0.6);
            let mut v: Vec<bool> = (0..cands.len()).map(|_| rng.random_bool(density)).collect();
            v[0] = !rng.random_bool(0.12);
            let s = v[..11].iter().filter(|b| **b).count();
            // Sum of (rating - 1) over eleven annotators equals 44 * HICOS_11.
            let total = if v[0] { 4 * (12 - s) } else { 0 };
            for a in 0..11 {
                let r = 1 + total / 11 + usize::from(a < total % 11);
                ratings.push(RatingRow {
                    annotator_id: format!("a{:02}", a + 1),
                    q_id: q.id.to_owned(),
                    hint_idx: hi,
                    attribute: Attribute::Convergence,
                    rating: r as u8,
                });
            }
            verdicts.insert(text.clone(), cands.iter().cloned().zip(v).collect());
            hints.push(Hint::new(text));
        }
        records.push(QuestionRecord {
            q_id: q.id.into(),
            question: q.text.into(),
            hints,
            hints_sources: vec![],
            snippet: String::new(),
            snippet_sources: vec![],
            exact_answer: q.answer.into(),
            major_type: MajorType::Entity,
            minor_type: String::new(),
            candidate_answers: vec![],
            q_popularity: vec![],
            exact_answer_popularity: None,
            convergence: None,
            familiarity: None,
        });
    }
    write_dataset(&dir.join("records.jsonl"), &records).unwrap();
    write_lines(&dir.join("ratings.jsonl"), &ratings);

    let fixture = dir.join("services.jsonl");
    let _ = std::fs::remove_file(&fixture);
    let opts = ClientOptions {
        cache_file: Some(fixture.clone()),
        ..ClientOptions::default()
    };
    let client = ServiceClient::new(
        Arc::new(SweepWorld {
            candidates,
            verdicts,
        }),
        opts,
    )
    .unwrap();
    let human = HumanScores::from_rows(&ratings, Attribute::Convergence).unwrap();
    let points = hicos_sweep(
        &records,
        &human,
        1..=20,
        &client,
        &ConvergenceConfig::default(),
        CandidateMode::Truncate,
    )
    .unwrap();
    drop(client);
    sort_cache(&fixture);
    for p in &points {
        println!("sweep n={:>2} r={:?}", p.n, p.pearson_r);
    }
    assert_eq!(best_n(&points), Some(11));
}

const CLEAN_BANK: &[&str] = &[
    "It is frequently mentioned in school textbooks.",
    "Many travellers have written about it.",
    "It appears in several famous paintings.",
    "Its history goes back several centuries.",
    "It has been the subject of many documentaries.",
    "Scholars still debate parts of its story.",
    "It is well known far beyond its place of origin.",
    "Newspapers covered it widely at the time.",
    "It is often used as an example in quizzes.",
    "It has inspired songs and poems.",
    "Its influence can still be felt today.",
    "Tourists regularly ask guides about it.",
    "It is associated with a famous anniversary.",
    "It was once featured on a postage stamp.",
];

/// 20 questions with ten hints each: two lexical leaks, one rephrase and
/// seven clean hints. Embeddings are stored inline.
fn build_filter(root: &Path) {
    let dir = root.join("filter");
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pool: Vec<&Q> = QUESTIONS
        .iter()
        .filter(|q| !q.distractors.is_empty())
        .collect();
    let leaks: &[(&str, &str)] = &[
        ("Washington, D.C.", "George Washington gave his name to it."),
        (
            "Washington, D.C.",
            "Its abbreviation D.C. stands for District of Columbia.",
        ),
        (
            "Michelangelo",
            "Michelangelo spent years lying on scaffolding.",
        ),
        (
            "Michelangelo",
            "The artist signed only one work as Michelangelo.",
        ),
        ("India", "The India Gate memorial stands in its capital."),
        ("India", "It is the seventh largest country, India by name."),
        (
            "The Beatles",
            "A Beatle once said they were more popular than Jesus.",
        ),
        (
            "The Beatles",
            "Beatlemania followed the Beatles everywhere.",
        ),
        ("Iron", "Iron ore is mined in Australia."),
        ("Iron", "Cast iron contains a lot of carbon."),
        ("Ganges", "The Ganges is worshipped as a goddess."),
        ("Ganges", "Dolphins live in the Ganges basin."),
        ("Cricket", "Cricket whites are worn in Test matches."),
        ("Cricket", "A cricket match can end in a draw."),
        (
            "Neil Armstrong",
            "Armstrong was a quiet man from the Midwest.",
        ),
        (
            "Neil Armstrong",
            "His first name, Neil, is of Irish origin.",
        ),
        (
            "Mount Kilimanjaro",
            "Kilimanjaro is visible from Kenya on clear days.",
        ),
        (
            "Mount Kilimanjaro",
            "Mounts like this attract thousands of climbers.",
        ),
        (
            "Mandarin Chinese",
            "Mandarin is taught in schools across Asia.",
        ),
        (
            "Mandarin Chinese",
            "It is the most widely spoken Chinese language.",
        ),
        (
            "Trumpet",
            "Trumpets announced royal arrivals in the Middle Ages.",
        ),
        ("Trumpet", "Playing the trumpet needs strong lips."),
        (
            "Japanese yen",
            "The yen replaced a complex system of coins.",
        ),
        ("Japanese yen", "Japanese shops display prices in it."),
        (
            "Frankenstein",
            "Frankenstein is also the name of a castle in Germany.",
        ),
        (
            "Frankenstein",
            "Film versions of Frankenstein often show bolts in the neck.",
        ),
        ("Mozart", "Mozart was a child prodigy."),
        ("Mozart", "Salzburg celebrates Mozart every year."),
        ("Saturn", "Saturn has spectacular rings."),
        ("Saturn", "A Saturn rocket launched astronauts."),
        ("Chlorophyll", "Chlorophyll makes plants green."),
        ("Chlorophyll", "Loss of chlorophyll reveals other pigments."),
        ("Jupiter", "Jupiter is named after a Roman god."),
        ("Jupiter", "Jupiter's great red spot is a storm."),
        ("William Shakespeare", "Shakespeare was born in Stratford."),
        ("William Shakespeare", "William was his first name."),
        ("Robert Stevenson", "Robert was a common name then."),
        ("Robert Stevenson", "Stevenson built many lighthouses."),
        ("Ganges", "The Ganges basin feeds millions."),
        ("Ganges", "Boats crowd the Ganges at dawn."),
    ];
    let mut groups = Vec::new();
    let mut leak_iter = leaks.iter();
    for gi in 0..20 {
        let (answer, leak_a) = leak_iter.next().unwrap();
        let (answer_b, leak_b) = leak_iter.next().unwrap();
        assert_eq!(answer, answer_b);
        let q = pool.iter().find(|q| q.answer == *answer).copied();
        let question = q.map(|q| q.text.to_owned()).unwrap_or_else(|| {
            format!(
                "Which famous name is the answer to trivia question number {}?",
                gi + 1
            )
        });
        let qv = hash_vector(&question);
        let mut hints = Vec::new();
        for (k, text) in CLEAN_BANK.iter().enumerate().skip(gi % 7).take(7) {
            assert!(
                !leaks_answer(text, answer).leaked,
                "clean hint {text:?} leaks {answer:?}"
            );
            let mut v = hash_vector(&format!("{gi}:{k}:{text}"));
            // Push one clean hint per group just under the threshold.
            if k == gi % 7 {
                v = near(&qv, 0.70 + 0.019 * rng.random::<f64>(), &mut rng);
            }
            assert!(cos(&v, &qv) < 0.72);
            hints.push(serde_json::json!({"text": text, "planted": "clean", "embedding": v}));
        }
        for text in [leak_a, leak_b] {
            assert!(
                leaks_answer(text, answer).leaked,
                "{text:?} does not leak {answer:?}"
            );
            hints.push(serde_json::json!({"text": text, "planted": "leak", "embedding": hash_vector(text)}));
        }
        let reph = format!(
            "Asked another way: {}",
            question.trim_end_matches('?').to_lowercase()
        );
        let reph = reph.replace(&answer.to_lowercase(), "this");
        assert!(
            !leaks_answer(&reph, answer).leaked,
            "rephrase {reph:?} leaks"
        );
        let v = near(&qv, 0.75 + 0.2 * rng.random::<f64>(), &mut rng);
        hints.push(serde_json::json!({"text": reph, "planted": "rephrase", "embedding": v}));
        // Interleave deterministically.
        let order = [0, 7, 1, 2, 9, 3, 8, 4, 5, 6];
        let hints: Vec<_> = order.iter().map(|&i| hints[i].clone()).collect();
        groups.push(serde_json::json!({
            "question": question,
            "answer": answer,
            "question_embedding": qv,
            "hints": hints,
        }));
    }
    write_lines(&dir.join("hints.jsonl"), &groups);
}

/// A vector with cosine `target` to `base`.
fn near(base: &[f64], target: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: Vec<f64> = base.iter().map(|x| x / n(base)).collect();
    let r: Vec<f64> = (0..base.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let dot: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
    let perp: Vec<f64> = r.iter().zip(&u).map(|(a, b)| a - dot * b).collect();
    let pn = n(&perp);
    let s = (1.0 - target * target).sqrt();
    u.iter()
        .zip(&perp)
        .map(|(a, p)| target * a + s * p / pn)
        .collect()
}

fn main() {
    let root: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    build_pipeline(&root);
    build_sweep(&root);
    build_filter(&root);
}
