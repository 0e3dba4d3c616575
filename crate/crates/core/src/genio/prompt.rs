use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::parse::serialize_tuples;
use super::GenError;
use crate::dataio::DatasetSplit;
use crate::model::{Category, Domain, Language, SentimentTuple, Subtask};

/// Few-shot demonstrations per prompt unless configured otherwise.
pub const DEFAULT_DEMOS: usize = 3;

const BUILTIN_TEMPLATES: &str = include_str!("../../templates/prompts.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Llama,
    Qwen,
}

impl FromStr for ModelFamily {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "llama" | "llama-style" => Ok(ModelFamily::Llama),
            "qwen" | "qwen-style" => Ok(ModelFamily::Qwen),
            other => Err(GenError::InvalidSpec(format!(
                "unknown model family {other:?}"
            ))),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Llama => "llama",
            ModelFamily::Qwen => "qwen",
        })
    }
}

/// Generation settings the prompts are meant to be decoded with. The toolkit
/// records them; it does not run generation itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub greedy: bool,
    pub do_sample: bool,
    pub temperature: f64,
}

/// Chat-template delimiters of a model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PromptProfile {
    pub family: ModelFamily,
    /// Emitted once at the very start.
    pub begin_text: &'static str,
    pub turn_open: &'static str,
    /// Closes the role name.
    pub header_close: &'static str,
    pub turn_end: &'static str,
    /// Written after `turn_end`.
    pub turn_sep: &'static str,
    pub decoding: Decoding,
}

const GREEDY: Decoding = Decoding {
    greedy: true,
    do_sample: false,
    temperature: 0.0,
};

impl PromptProfile {
    pub fn llama() -> Self {
        PromptProfile {
            family: ModelFamily::Llama,
            begin_text: "<|begin_of_text|>",
            turn_open: "<|start_header_id|>",
            header_close: "<|end_header_id|>\n\n",
            turn_end: "<|eot_id|>",
            turn_sep: "",
            decoding: GREEDY,
        }
    }

    pub fn qwen() -> Self {
        PromptProfile {
            family: ModelFamily::Qwen,
            begin_text: "",
            turn_open: "<|im_start|>",
            header_close: "\n",
            turn_end: "<|im_end|>",
            turn_sep: "\n",
            decoding: GREEDY,
        }
    }

    pub fn for_family(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Llama => Self::llama(),
            ModelFamily::Qwen => Self::qwen(),
        }
    }

    fn push_header(&self, out: &mut String, role: &str) {
        out.push_str(self.turn_open);
        out.push_str(role);
        out.push_str(self.header_close);
    }

    fn push_turn(&self, out: &mut String, role: &str, content: &str) {
        self.push_header(out, role);
        out.push_str(content);
        out.push_str(self.turn_end);
        out.push_str(self.turn_sep);
    }
}

/// A review with its gold tuples, shown as an input-output example.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub review: String,
    pub tuples: Vec<SentimentTuple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub language: Language,
    pub domain: Domain,
    pub subtask: Subtask,
    pub instruction: String,
    pub null_policy: Option<String>,
    /// Present exactly for quadruplet prompts.
    pub categories: Option<Vec<Category>>,
    pub review_label: String,
    pub categories_label: String,
    pub demonstrations: Vec<Demonstration>,
}

impl PromptSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidSpec(m));
        if self.subtask == Subtask::Asr {
            return bad("prompts are built for ASTE or ASQP only".into());
        }
        if self.instruction.trim().is_empty() {
            return bad("instruction text is empty".into());
        }
        let want_categories = self.subtask == Subtask::Asqp;
        match &self.categories {
            Some(c) if !want_categories => {
                return bad(format!(
                    "ASTE prompt carries a category list ({} entries)",
                    c.len()
                ))
            }
            Some(c) if c.is_empty() => return bad("category list is empty".into()),
            None if want_categories => return bad("ASQP prompt needs a category list".into()),
            _ => {}
        }
        for (i, demo) in self.demonstrations.iter().enumerate() {
            if demo
                .tuples
                .iter()
                .any(|t| t.category.is_some() != want_categories)
            {
                return bad(format!(
                    "demonstration {i} does not match the subtask shape"
                ));
            }
        }
        Ok(())
    }

    fn system_text(&self) -> String {
        let mut sections = vec![self.instruction.clone()];
        if let Some(cats) = &self.categories {
            let list: Vec<&str> = cats.iter().map(Category::as_str).collect();
            sections.push(format!("{}: {}", self.categories_label, list.join(", ")));
        }
        if let Some(policy) = &self.null_policy {
            sections.push(policy.clone());
        }
        sections.join("\n\n")
    }

    fn user_text(&self, review: &str) -> String {
        format!("{}: {}", self.review_label, review)
    }
}

/// Inference prompt: instruction turn, demonstration pairs in order, the
/// review turn and an open assistant header.
pub fn build_prompt(
    spec: &PromptSpec,
    profile: &PromptProfile,
    review: &str,
) -> Result<String, GenError> {
    spec.validate()?;
    if review.trim().is_empty() {
        return Err(GenError::InvalidSpec("review text is empty".into()));
    }
    let mut out = String::from(profile.begin_text);
    profile.push_turn(&mut out, "system", &spec.system_text());
    for demo in &spec.demonstrations {
        profile.push_turn(&mut out, "user", &spec.user_text(&demo.review));
        profile.push_turn(
            &mut out,
            "assistant",
            &serialize_tuples(&demo.tuples, spec.subtask),
        );
    }
    profile.push_turn(&mut out, "user", &spec.user_text(review));
    profile.push_header(&mut out, "assistant");
    Ok(out)
}

/// The inference prompt followed by the gold answer and a closing delimiter.
pub fn build_training_prompt(
    spec: &PromptSpec,
    profile: &PromptProfile,
    review: &str,
    gold: &[SentimentTuple],
) -> Result<String, GenError> {
    let mut out = build_prompt(spec, profile, review)?;
    out.push_str(&serialize_tuples(gold, spec.subtask));
    out.push_str(profile.turn_end);
    out.push_str(profile.turn_sep);
    Ok(out)
}

/// `k` distinct indices out of `n`, uniformly without replacement, in draw
/// order.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, GenError> {
    if k > n {
        return Err(GenError::InsufficientRecords {
            needed: k,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, n, k).into_vec())
}

pub fn sample_demos(
    train: &DatasetSplit,
    k: usize,
    seed: u64,
) -> Result<Vec<Demonstration>, GenError> {
    if train.subtask == Subtask::Asr {
        return Err(GenError::InvalidSpec(
            "demonstrations need an ASTE or ASQP split".into(),
        ));
    }
    Ok(sample_indices(train.records.len(), k, seed)?
        .into_iter()
        .map(|i| {
            let rec = &train.records[i];
            Demonstration {
                review: rec.review.text.clone(),
                tuples: rec.tuples().to_vec(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LanguageTemplates {
    #[serde(default)]
    draft: bool,
    review_label: String,
    categories_label: String,
    task_aste: String,
    task_asqp: String,
    null_policy: String,
    #[serde(default)]
    domain_names: BTreeMap<String, String>,
}

/// Instruction texts per language plus category inventories per domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRegistry {
    languages: BTreeMap<String, LanguageTemplates>,
    #[serde(default)]
    categories: BTreeMap<String, Vec<String>>,
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_TEMPLATES).expect("bundled templates parse")
    }

    pub fn from_toml(text: &str) -> Result<Self, GenError> {
        let reg: TemplateRegistry =
            toml::from_str(text).map_err(|e| GenError::Registry(e.to_string()))?;
        for (lang, t) in &reg.languages {
            lang.parse::<Language>()
                .map_err(|e| GenError::Registry(e.to_string()))?;
            for name in t.domain_names.keys() {
                name.parse::<Domain>()
                    .map_err(|e| GenError::Registry(e.to_string()))?;
            }
        }
        for (domain, cats) in &reg.categories {
            domain
                .parse::<Domain>()
                .map_err(|e| GenError::Registry(e.to_string()))?;
            for c in cats {
                Category::new(c).map_err(|e| GenError::Registry(format!("{domain}: {e}")))?;
            }
        }
        Ok(reg)
    }

    pub fn is_draft(&self, language: Language) -> bool {
        self.languages
            .get(language.as_str())
            .is_some_and(|t| t.draft)
    }

    pub fn categories(&self, domain: Domain) -> Option<Vec<Category>> {
        self.categories.get(domain.as_str()).map(|c| {
            c.iter()
                .map(|s| Category::new(s).expect("checked on load"))
                .collect()
        })
    }

    /// Assembles a validated spec. The NULL policy is included when the
    /// partition carries NULL labels.
    pub fn spec(
        &self,
        language: Language,
        domain: Domain,
        subtask: Subtask,
        has_null_labels: bool,
        demonstrations: Vec<Demonstration>,
    ) -> Result<PromptSpec, GenError> {
        let missing = |detail: &str| GenError::MissingTemplate {
            language: language.to_string(),
            domain: domain.to_string(),
            detail: detail.to_string(),
        };
        let t = self
            .languages
            .get(language.as_str())
            .ok_or_else(|| missing("language not in registry"))?;
        let domain_name = t
            .domain_names
            .get(domain.as_str())
            .ok_or_else(|| missing("no domain name"))?;
        let task = match subtask {
            Subtask::Aste => &t.task_aste,
            Subtask::Asqp => &t.task_asqp,
            Subtask::Asr => {
                return Err(GenError::InvalidSpec(
                    "prompts are built for ASTE or ASQP only".into(),
                ))
            }
        };
        let categories = match subtask {
            Subtask::Asqp => Some(
                self.categories(domain)
                    .ok_or_else(|| missing("no category list"))?,
            ),
            _ => None,
        };
        if t.draft {
            log::warn!("instruction template for {language} is a draft translation");
        }
        let spec = PromptSpec {
            language,
            domain,
            subtask,
            instruction: task.replace("{domain}", domain_name),
            null_policy: has_null_labels.then(|| t.null_policy.clone()),
            categories,
            review_label: t.review_label.clone(),
            categories_label: t.categories_label.clone(),
            demonstrations,
        };
        spec.validate()?;
        Ok(spec)
    }
}
