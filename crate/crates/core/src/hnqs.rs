//! Hard negative query synthesis: the generation prompt, response parsing,
//! and a template-based offline generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::controller::ChatBackend;
use crate::error::{Error, Result};
use crate::jsonl;

pub const VARIANT_COUNT: usize = 20;

const PROMPT_TEMPLATE: &str = "You are given the following question:
{question}

The image can answer this question.

Now, write 20 new questions that are:
- Related to the topic,
- Seem reasonable,
- But cannot be answered using the image.

These questions should require knowledge that is not in the image.

Do not rephrase the original.

Give exactly 20 new questions. Just list them:
Variant 1: ...
Variant 2: ...
Variant 3: ...
Variant 4: ...
Variant 5: ...
Variant 6: ...
...
";

pub fn render_hnqs_prompt(question: &str) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::Usage("question must be non-empty".into()));
    }
    Ok(PROMPT_TEMPLATE.replace("{question}", question))
}

/// Extracts `Variant <n>: <text>` lines for n = 1..=20; other lines are ignored.
pub fn parse_variants(response: &str) -> Result<Vec<String>> {
    let re = Regex::new(r"^\s*Variant\s+(\d+)\s*:\s*(.*?)\s*$").expect("static regex");
    let mut found: BTreeMap<usize, String> = BTreeMap::new();
    for line in response.lines() {
        let Some(c) = re.captures(line) else { continue };
        let n: usize = c[1]
            .parse()
            .map_err(|_| Error::Format(format!("bad variant index {:?}", &c[1])))?;
        if !(1..=VARIANT_COUNT).contains(&n) {
            return Err(Error::Format(format!("variant index {n} outside 1..={VARIANT_COUNT}")));
        }
        let text = c[2].to_string();
        if text.is_empty() {
            return Err(Error::Format(format!("variant {n} is empty")));
        }
        if found.insert(n, text).is_some() {
            return Err(Error::Format(format!("duplicate variant index {n}")));
        }
    }
    if found.len() != VARIANT_COUNT {
        return Err(Error::Format(format!(
            "expected {VARIANT_COUNT} variants, found {}",
            found.len()
        )));
    }
    Ok(found.into_values().collect())
}

/// Renders variants in the numbered block format the prompt asks for.
pub fn render_variants(variants: &[String]) -> String {
    variants
        .iter()
        .enumerate()
        .map(|(i, v)| format!("Variant {}: {v}\n", i + 1))
        .collect()
}

const TWISTS: [&str; 20] = [
    "What was the budget behind {t}?",
    "Who first proposed {t}?",
    "How did {t} change over the following decade?",
    "Which competing approach replaced {t}?",
    "What regulatory review applied to {t}?",
    "How many people worked on {t}?",
    "What criticism did {t} receive in the press?",
    "Where else has {t} been adopted?",
    "What did {t} cost per unit in 2010?",
    "Which university studied {t} first?",
    "What are the long-term health effects related to {t}?",
    "How is {t} taught in secondary schools?",
    "What patents cover {t}?",
    "Who funded the original research on {t}?",
    "What happened to {t} after the merger?",
    "How does {t} compare with practice in Japan?",
    "What software tools are used to analyze {t}?",
    "Which awards recognized work on {t}?",
    "What were the survey results about {t}?",
    "How is {t} expected to evolve by 2040?",
];

const ASPECTS: [&str; 6] = [
    "the topic of",
    "the subject behind",
    "the theme of",
    "the matter raised in",
    "the issue behind",
    "the context of",
];

/// Offline stand-in for a vision-language generator: 20 seeded templates that
/// stay on topic but ask for information outside the page.
pub fn mock_generate(question: &str, seed: u64) -> Result<Vec<String>> {
    if question.trim().is_empty() {
        return Err(Error::Usage("question must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic = question.trim().trim_end_matches('?').trim();
    let mut order: Vec<usize> = (0..TWISTS.len()).collect();
    order.shuffle(&mut rng);
    Ok(order
        .into_iter()
        .map(|i| {
            let aspect = ASPECTS[rng.gen_range(0..ASPECTS.len())];
            TWISTS[i].replace("{t}", &format!("{aspect} \"{topic}\""))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Endpoint,
    Mock,
}

/// One positive question and its 20 synthesized negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHnqsRecord")]
pub struct HnqsRecord {
    pub query_id: String,
    pub positive_question: String,
    pub variants: Vec<String>,
    pub generator: Generator,
}

#[derive(Deserialize)]
struct RawHnqsRecord {
    query_id: String,
    positive_question: String,
    variants: Vec<String>,
    generator: Generator,
}

impl TryFrom<RawHnqsRecord> for HnqsRecord {
    type Error = Error;
    fn try_from(r: RawHnqsRecord) -> Result<Self> {
        HnqsRecord::new(r.query_id, r.positive_question, r.variants, r.generator)
    }
}

impl HnqsRecord {
    pub fn new(
        query_id: impl Into<String>,
        positive_question: impl Into<String>,
        variants: Vec<String>,
        generator: Generator,
    ) -> Result<Self> {
        let positive_question = positive_question.into();
        if variants.len() != VARIANT_COUNT {
            return Err(Error::Format(format!(
                "HNQS record needs exactly {VARIANT_COUNT} variants, got {}",
                variants.len()
            )));
        }
        if let Some(v) = variants
            .iter()
            .find(|v| v.trim().is_empty() || v.trim() == positive_question.trim())
        {
            return Err(Error::Format(format!(
                "variant {v:?} is empty or repeats the positive question"
            )));
        }
        Ok(Self {
            query_id: query_id.into(),
            positive_question,
            variants,
            generator,
        })
    }
}

/// Asks a chat backend for variants of `question` and parses the reply.
pub fn generate_with_backend(backend: &mut dyn ChatBackend, question: &str) -> Result<Vec<String>> {
    let prompt = render_hnqs_prompt(question)?;
    let reply = backend.complete("You are a helpful assistant.", &prompt)?;
    parse_variants(&reply.text)
}

pub fn write_records(path: &Path, records: &[HnqsRecord]) -> Result<()> {
    jsonl::write(path, records)
}

pub fn read_records(path: &Path) -> Result<Vec<HnqsRecord>> {
    jsonl::read(path)
}
