//! CodeBLEU: n-gram BLEU, keyword-weighted n-gram match, syntax-subtree
//! match and def-use dataflow match, combined with fixed weights.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::pylang::{code_tokens, dataflow_edges, is_keyword, parse_module, subtree_sexps};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuParams {
    /// (ngram, weighted_ngram, syntax_match, dataflow_match)
    pub weights: [f64; 4],
    pub max_ngram: usize,
    pub keyword_weight: f64,
}

impl Default for CodeBleuParams {
    fn default() -> Self {
        Self {
            weights: [0.25; 4],
            max_ngram: 4,
            keyword_weight: 5.0,
        }
    }
}

impl CodeBleuParams {
    pub fn new(weights: [f64; 4], max_ngram: usize, keyword_weight: f64) -> Result<Self, MetricError> {
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(MetricError::InvalidParams(format!("negative weight in {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricError::InvalidParams(format!("weights sum to {sum}, not 1")));
        }
        if max_ngram == 0 {
            return Err(MetricError::InvalidParams("max_ngram must be at least 1".into()));
        }
        if !(keyword_weight > 0.0) {
            return Err(MetricError::InvalidParams("keyword_weight must be positive".into()));
        }
        Ok(Self {
            weights,
            max_ngram,
            keyword_weight,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuScore {
    pub score: f64,
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub syntax_match: f64,
    pub dataflow_match: f64,
    /// False when either side failed to parse and the structural
    /// components fell back to the n-gram value.
    pub parsed: bool,
}

fn counts<T: Eq + Hash + Clone>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut map = HashMap::new();
    for item in items {
        *map.entry(item).or_insert(0) += 1;
    }
    map
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    if tokens.len() < n {
        return HashMap::new();
    }
    counts(tokens.windows(n))
}

/// Clipped matches of `cand` against `reference`, and the candidate total.
fn clipped<T: Eq + Hash>(cand: &HashMap<T, usize>, reference: &HashMap<T, usize>) -> (usize, usize) {
    let total = cand.values().sum();
    let matched = cand
        .iter()
        .map(|(k, c)| (*c).min(reference.get(k).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

/// Add-one smoothed precision for n >= 2.
fn smoothed_precision(cand: &[String], reference: &[String], n: usize) -> f64 {
    let (m, t) = clipped(&ngrams(cand, n), &ngrams(reference, n));
    (m as f64 + 1.0) / (t as f64 + 1.0)
}

fn geometric(first: f64, cand: &[String], reference: &[String], max_n: usize) -> f64 {
    if first <= 0.0 {
        return 0.0;
    }
    let w = 1.0 / max_n as f64;
    let log_sum: f64 = w * first.ln()
        + (2..=max_n)
            .map(|n| w * smoothed_precision(cand, reference, n).ln())
            .sum::<f64>();
    brevity_penalty(cand.len(), reference.len()) * log_sum.exp()
}

/// Sentence BLEU with unsmoothed unigrams and add-one smoothing above.
pub fn bleu(cand: &[String], reference: &[String], max_n: usize) -> f64 {
    let (m, t) = clipped(&ngrams(cand, 1), &ngrams(reference, 1));
    let p1 = if t == 0 { 0.0 } else { m as f64 / t as f64 };
    geometric(p1, cand, reference, max_n)
}

/// BLEU whose unigram term is a keyword-weighted recall over reference
/// tokens.
pub fn weighted_bleu(cand: &[String], reference: &[String], max_n: usize, keyword_weight: f64) -> f64 {
    let weight = |t: &String| if is_keyword(t) { keyword_weight } else { 1.0 };
    let cand_counts = counts(cand.iter());
    let ref_counts = counts(reference.iter());
    let mut num = 0.0;
    let mut den = 0.0;
    let mut keys: Vec<&&String> = ref_counts.keys().collect();
    keys.sort();
    for tok in keys {
        let r = ref_counts[tok];
        let c = cand_counts.get(tok).copied().unwrap_or(0);
        num += weight(tok) * c.min(r) as f64;
        den += weight(tok) * r as f64;
    }
    let p1 = if den == 0.0 { 0.0 } else { num / den };
    geometric(p1, cand, reference, max_n)
}

/// Matched reference subtrees over all reference subtrees (multiset, clipped).
pub fn syntax_match(cand_subtrees: &[String], ref_subtrees: &[String]) -> f64 {
    if ref_subtrees.is_empty() {
        return 1.0;
    }
    let c = counts(cand_subtrees.iter());
    let r = counts(ref_subtrees.iter());
    let (matched, total) = clipped(&r, &c);
    matched as f64 / total as f64
}

/// Matched reference def-use edges over all reference edges; 1 when the
/// reference has none.
pub fn dataflow_match<T: Eq + Hash>(cand: &[T], reference: &[T]) -> f64 {
    if reference.is_empty() {
        return 1.0;
    }
    let (matched, total) = clipped(&counts(reference.iter()), &counts(cand.iter()));
    matched as f64 / total as f64
}

pub fn codebleu(candidate: &str, reference: &str, p: &CodeBleuParams) -> Result<CodeBleuScore, MetricError> {
    let cand_toks = code_tokens(candidate);
    let ref_toks = code_tokens(reference);
    if cand_toks.is_empty() || ref_toks.is_empty() {
        return Err(MetricError::EmptySource);
    }
    let ngram = bleu(&cand_toks, &ref_toks, p.max_ngram);
    let weighted_ngram = weighted_bleu(&cand_toks, &ref_toks, p.max_ngram, p.keyword_weight);
    let (syntax, dataflow, parsed) = match (parse_module(candidate), parse_module(reference)) {
        (Ok(c), Ok(r)) => (
            syntax_match(&subtree_sexps(&c), &subtree_sexps(&r)),
            dataflow_match(&dataflow_edges(&c), &dataflow_edges(&r)),
            true,
        ),
        _ => (ngram, ngram, false),
    };
    let [w0, w1, w2, w3] = p.weights;
    Ok(CodeBleuScore {
        score: w0 * ngram + w1 * weighted_ngram + w2 * syntax + w3 * dataflow,
        ngram,
        weighted_ngram,
        syntax_match: syntax,
        dataflow_match: dataflow,
        parsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SCRIPT: &str = "import matplotlib.pyplot as plt\nimport pandas as pd\ndf = pd.read_csv('a.csv')\nfig, ax = plt.subplots()\nax.bar(df['x'], df['y'])\nplt.savefig('out.png')\n";

    #[test]
    fn identity_is_one_everywhere() {
        let s = codebleu(SCRIPT, SCRIPT, &CodeBleuParams::default()).unwrap();
        assert!(s.parsed);
        for v in [s.score, s.ngram, s.weighted_ngram, s.syntax_match, s.dataflow_match] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn def_use_example_is_half() {
        let s = codebleu("x = 1\ny = x", "x = 1\nz = x", &CodeBleuParams::default()).unwrap();
        assert_eq!(s.dataflow_match, 0.5);
    }

    #[test]
    fn simplex_enforced() {
        assert!(CodeBleuParams::new([0.3, 0.3, 0.3, 0.3], 4, 5.0).is_err());
        assert!(CodeBleuParams::new([1.2, -0.2, 0.0, 0.0], 4, 5.0).is_err());
        assert!(CodeBleuParams::new([0.1, 0.2, 0.3, 0.4], 4, 5.0).is_ok());
        assert!(CodeBleuParams::new([0.25; 4], 0, 5.0).is_err());
    }

    #[test]
    fn unparseable_falls_back_to_ngram() {
        let s = codebleu("x = (1", "x = (1", &CodeBleuParams::default()).unwrap();
        assert!(!s.parsed);
        assert_eq!(s.syntax_match, s.ngram);
        assert_eq!(s.dataflow_match, s.ngram);
        let disjoint = codebleu("$ $ $", "? ? ?", &CodeBleuParams::default()).unwrap();
        assert_eq!(disjoint.score, 0.0);
    }

    #[test]
    fn disjoint_tokens_zero_ngram_components() {
        let s = codebleu("alpha(beta)", "gamma = delta + 1", &CodeBleuParams::default()).unwrap();
        assert_eq!(s.ngram, 0.0);
        assert_eq!(s.weighted_ngram, 0.0);
    }

    #[test]
    fn empty_source_rejected() {
        assert_eq!(
            codebleu("# nothing", "x = 1", &CodeBleuParams::default()),
            Err(MetricError::EmptySource)
        );
    }

    #[test]
    fn keywords_weigh_more() {
        let reference: Vec<String> = ["for", "x", "in", "y"].iter().map(|s| s.to_string()).collect();
        let kw: Vec<String> = ["for", "in"].iter().map(|s| s.to_string()).collect();
        let plain: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        assert!(weighted_bleu(&kw, &reference, 1, 5.0) > weighted_bleu(&plain, &reference, 1, 5.0));
    }

    /// Hand oracle for BLEU on tiny inputs.
    #[test]
    fn bleu_hand_computed() {
        let c: Vec<String> = "a b c".split(' ').map(String::from).collect();
        let r: Vec<String> = "a b d e".split(' ').map(String::from).collect();
        // p1 = 2/3; p2 = (1+1)/(2+1); p3 = (0+1)/(1+1); p4 = (0+1)/(0+1); bp = exp(1 - 4/3)
        let expected = (1.0f64 - 4.0 / 3.0).exp()
            * ((2.0f64 / 3.0).ln() / 4.0 + (2.0f64 / 3.0).ln() / 4.0 + 0.5f64.ln() / 4.0).exp();
        assert!((bleu(&c, &r, 4) - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn components_in_unit_interval(
            a in proptest::collection::vec("[a-c]", 1..6),
            b in proptest::collection::vec("[a-c]", 1..6),
        ) {
            let cand = a.iter().map(|v| format!("{v} = {v}")).collect::<Vec<_>>().join("\n");
            let reference = b.iter().map(|v| format!("{v} = 1")).collect::<Vec<_>>().join("\n");
            let s = codebleu(&cand, &reference, &CodeBleuParams::default()).unwrap();
            for v in [s.score, s.ngram, s.weighted_ngram, s.syntax_match, s.dataflow_match] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}
