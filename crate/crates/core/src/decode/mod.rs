//! Grammar-constrained autoregressive decoding.
//!
//! A [`Policy`] scores every vocabulary token given a conditioning handle and
//! the prefix so far. The harness masks the scores with the codec automaton
//! and picks the next token, so any policy, including an out-of-process one
//! behind the [`bridge`], only ever produces decodable sequences.

pub mod bridge;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Codec, CodecError, TokenMask, TokenSequence, MAX_SEQUENCE_LENGTH};
use crate::schema::BuildingAbstraction;
use crate::seed;

pub use bridge::{BridgePolicy, BridgeRequest, BridgeResponse};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy protocol: {0}")]
    Protocol(String),
    #[error("policy process closed its output")]
    Closed,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("policy returned {got} scores for a vocabulary of {expected}")]
    ScoreLength { expected: usize, got: usize },
    #[error("policy score for valid token {token} at position {position} is not a number")]
    NotANumber { position: usize, token: u32 },
    #[error("every valid token at position {position} scored -inf")]
    NoSupport { position: usize },
    #[error("no token is valid at position {position} ({field})")]
    DeadEnd { position: usize, field: String },
    #[error("rollout reached {max_length} tokens without completing a building")]
    Incomplete { partial: TokenSequence, max_length: usize },
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error("target sequence does not parse: {0}")]
    Target(CodecError),
    #[error("completed rollout failed to decode: {0}")]
    Codec(CodecError),
}

/// Source of next-token scores. Scores are unnormalized log-probabilities;
/// `-inf` excludes a token and `+inf` forces it (ties share the mass).
pub trait Policy: Send + Sync {
    fn scores(&self, conditioning: &str, prefix: &[u32]) -> Result<Vec<f64>, PolicyError>;
}

/// Equal scores everywhere: after masking, uniform over the valid set.
#[derive(Debug, Clone)]
pub struct UniformPolicy {
    pub vocab_size: usize,
}

impl Policy for UniformPolicy {
    fn scores(&self, _: &str, _: &[u32]) -> Result<Vec<f64>, PolicyError> {
        Ok(vec![0.0; self.vocab_size])
    }
}

/// Scores the next token of a fixed target `+inf`, everything else 0.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    pub vocab_size: usize,
    pub target: Vec<u32>,
}

impl Policy for OraclePolicy {
    fn scores(&self, _: &str, prefix: &[u32]) -> Result<Vec<f64>, PolicyError> {
        let mut s = vec![0.0; self.vocab_size];
        if let Some(&t) = self.target.get(prefix.len()) {
            if let Some(slot) = s.get_mut(t as usize) {
                *slot = f64::INFINITY;
            }
        }
        Ok(s)
    }
}

/// Deterministic pseudo-random preferences: at every prefix the vocabulary
/// is ranked by a hash of (salt, conditioning, prefix, token) and scored
/// `-spacing × rank`, so the top two tokens always differ by `spacing`.
#[derive(Debug, Clone)]
pub struct RankPolicy {
    pub vocab_size: usize,
    pub salt: u64,
    pub spacing: f64,
}

impl Policy for RankPolicy {
    fn scores(&self, conditioning: &str, prefix: &[u32]) -> Result<Vec<f64>, PolicyError> {
        let mut h = seed::mix(self.salt, conditioning.len() as u64);
        for b in conditioning.bytes() {
            h = seed::mix(h, b as u64);
        }
        for &t in prefix {
            h = seed::mix(h, t as u64);
        }
        let mut order: Vec<(u64, usize)> = (0..self.vocab_size).map(|i| (seed::mix(h, i as u64), i)).collect();
        order.sort_unstable();
        let mut s = vec![0.0; self.vocab_size];
        for (rank, (_, i)) in order.into_iter().enumerate() {
            s[i] = -self.spacing * rank as f64;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub mode: Mode,
    pub temperature: f64,
    pub max_length: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { mode: Mode::Sample, temperature: 1.0, max_length: MAX_SEQUENCE_LENGTH, seed: 0 }
    }
}

impl DecodeConfig {
    pub fn check(&self) -> Result<(), DecodeError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(DecodeError::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if self.max_length == 0 || self.max_length > MAX_SEQUENCE_LENGTH {
            return Err(DecodeError::Config(format!("max_length {} must lie in 1..={MAX_SEQUENCE_LENGTH}", self.max_length)));
        }
        Ok(())
    }
}

/// The masked, tempered distribution over the valid tokens as
/// `(token, probability)` pairs in ascending token order.
pub fn masked_distribution(
    scores: &[f64],
    mask: &TokenMask,
    temperature: f64,
    position: usize,
) -> Result<Vec<(u32, f64)>, DecodeError> {
    let mut valid: Vec<(u32, f64)> = Vec::with_capacity(mask.count());
    for t in mask.iter() {
        let s = scores[t as usize];
        if s.is_nan() {
            return Err(DecodeError::NotANumber { position, token: t });
        }
        valid.push((t, s));
    }
    let forced = valid.iter().filter(|v| v.1 == f64::INFINITY).count();
    if forced > 0 {
        let p = 1.0 / forced as f64;
        return Ok(valid.into_iter().map(|(t, s)| (t, if s == f64::INFINITY { p } else { 0.0 })).collect());
    }
    let max = valid.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DecodeError::NoSupport { position });
    }
    let mut z = 0.0;
    for v in &mut valid {
        v.1 = ((v.1 - max) / temperature).exp();
        z += v.1;
    }
    for v in &mut valid {
        v.1 /= z;
    }
    Ok(valid)
}

fn checked_scores(policy: &dyn Policy, conditioning: &str, prefix: &[u32], vocab_size: usize) -> Result<Vec<f64>, DecodeError> {
    let scores = policy.scores(conditioning, prefix)?;
    if scores.len() != vocab_size {
        return Err(DecodeError::ScoreLength { expected: vocab_size, got: scores.len() });
    }
    Ok(scores)
}

/// Highest masked score; ties go to the lowest token id.
fn argmax(scores: &[f64], mask: &TokenMask, position: usize) -> Result<u32, DecodeError> {
    let mut best: Option<(u32, f64)> = None;
    for t in mask.iter() {
        let s = scores[t as usize];
        if s.is_nan() {
            return Err(DecodeError::NotANumber { position, token: t });
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((t, s));
        }
    }
    match best {
        Some((_, s)) if s == f64::NEG_INFINITY => Err(DecodeError::NoSupport { position }),
        Some((t, _)) => Ok(t),
        None => Err(DecodeError::DeadEnd { position, field: String::new() }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub tokens: TokenSequence,
    pub building: BuildingAbstraction,
}

/// Autoregressive decoding under the grammar mask until the automaton
/// accepts. Reaching `max_length` first is an error carrying the prefix.
pub fn rollout(policy: &dyn Policy, conditioning: &str, cfg: &DecodeConfig, codec: &Codec) -> Result<Rollout, DecodeError> {
    cfg.check()?;
    let grammar = codec.grammar();
    let vocab_size = codec.vocab().size();
    let mut rng = seed::rng(cfg.seed, seed::stream::DECODE);
    let mut state = grammar.start();
    let mut tokens = Vec::new();
    while !state.is_accept() {
        let position = tokens.len();
        if position == cfg.max_length {
            return Err(DecodeError::Incomplete { partial: TokenSequence(tokens), max_length: cfg.max_length });
        }
        let mask = grammar.valid_next(&state);
        if mask.is_empty() {
            return Err(DecodeError::DeadEnd { position, field: grammar.describe(&state) });
        }
        let scores = checked_scores(policy, conditioning, &tokens, vocab_size)?;
        let token = match cfg.mode {
            Mode::Greedy => argmax(&scores, &mask, position)?,
            Mode::Sample => {
                let dist = masked_distribution(&scores, &mask, cfg.temperature, position)?;
                if dist.len() == 1 {
                    dist[0].0
                } else {
                    match WeightedIndex::new(dist.iter().map(|d| d.1)) {
                        Ok(w) => dist[w.sample(&mut rng)].0,
                        // All mass underflowed onto one token after tempering.
                        Err(_) => argmax(&scores, &mask, position)?,
                    }
                }
            }
        };
        grammar.advance(&mut state, token).expect("chosen token is in the valid set");
        tokens.push(token);
    }
    let tokens = TokenSequence(tokens);
    let building = codec.decode(&tokens).map_err(DecodeError::Codec)?;
    Ok(Rollout { tokens, building })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionScore {
    pub token: u32,
    /// Raw policy score of the target token.
    pub score: f64,
    /// `log Σ exp(score)` over the valid set.
    pub log_normalizer: f64,
    pub log_prob: f64,
    pub valid_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherForced {
    pub positions: Vec<PositionScore>,
}

impl TeacherForced {
    /// Summed negative log-probability of the target.
    pub fn loss(&self) -> f64 {
        -self.positions.iter().map(|p| p.log_prob).sum::<f64>()
    }
}

/// Per-position masked log-probabilities of `target` under `policy`.
pub fn teacher_forced_scores(
    policy: &dyn Policy,
    conditioning: &str,
    target: &TokenSequence,
    codec: &Codec,
) -> Result<TeacherForced, DecodeError> {
    codec.decode(target).map_err(DecodeError::Target)?;
    let grammar = codec.grammar();
    let vocab_size = codec.vocab().size();
    let mut state = grammar.start();
    let mut positions = Vec::with_capacity(target.len());
    for (position, &token) in target.0.iter().enumerate() {
        let mask = grammar.valid_next(&state);
        let scores = checked_scores(policy, conditioning, &target.0[..position], vocab_size)?;
        let valid: Vec<f64> = mask.iter().map(|t| scores[t as usize]).collect();
        if let Some(i) = valid.iter().position(|s| s.is_nan()) {
            return Err(DecodeError::NotANumber { position, token: mask.iter().nth(i).unwrap() });
        }
        let score = scores[token as usize];
        let forced = valid.iter().filter(|&&s| s == f64::INFINITY).count();
        let (log_normalizer, log_prob) = if forced > 0 {
            (f64::INFINITY, if score == f64::INFINITY { -(forced as f64).ln() } else { f64::NEG_INFINITY })
        } else {
            let max = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = if max == f64::NEG_INFINITY { max } else { max + valid.iter().map(|s| (s - max).exp()).sum::<f64>().ln() };
            (lse, score - lse)
        };
        positions.push(PositionScore { token, score, log_normalizer, log_prob, valid_count: mask.count() });
        grammar.advance(&mut state, token).expect("target parses");
    }
    Ok(TeacherForced { positions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_catalog, sample, PriorConfig};

    fn codec() -> Codec {
        Codec::for_catalog(64)
    }

    fn uniform(c: &Codec) -> UniformPolicy {
        UniformPolicy { vocab_size: c.vocab().size() }
    }

    #[test]
    fn uniform_rollouts_decode() {
        let c = codec();
        let p = uniform(&c);
        let mut complete = 0;
        for seed in 0..200 {
            let cfg = DecodeConfig { seed, ..DecodeConfig::default() };
            match rollout(&p, "", &cfg, &c) {
                Ok(r) => {
                    complete += 1;
                    assert_eq!(c.encode(&r.building).unwrap(), r.tokens);
                }
                Err(DecodeError::Incomplete { partial, .. }) => assert_eq!(partial.len(), MAX_SEQUENCE_LENGTH),
                Err(e) => panic!("seed {seed}: {e}"),
            }
        }
        assert!(complete >= 195, "{complete}");
    }

    #[test]
    fn oracle_reproduces_target() {
        let c = codec();
        let cat = build_catalog(0, 64).unwrap();
        for seed in 0..20 {
            let b = sample(seed, &PriorConfig::default(), &cat);
            let target = c.encode(&b).unwrap();
            let p = OraclePolicy { vocab_size: c.vocab().size(), target: target.0.clone() };
            for mode in [Mode::Greedy, Mode::Sample] {
                let r = rollout(&p, "", &DecodeConfig { mode, seed, ..DecodeConfig::default() }, &c).unwrap();
                assert_eq!(r.tokens, target);
                assert_eq!(r.building, b);
            }
            let tf = teacher_forced_scores(&p, "", &target, &c).unwrap();
            assert_eq!(tf.positions.len(), target.len());
            assert!(tf.positions.iter().all(|s| s.log_prob == 0.0));
            assert_eq!(tf.loss(), 0.0);
        }
    }

    #[test]
    fn uniform_teacher_forcing_matches_mask_cardinality() {
        let c = codec();
        let cat = build_catalog(0, 64).unwrap();
        let target = c.encode(&sample(5, &PriorConfig::default(), &cat)).unwrap();
        let tf = teacher_forced_scores(&uniform(&c), "", &target, &c).unwrap();
        let mut s = c.grammar().start();
        for (p, &t) in tf.positions.iter().zip(&target.0) {
            let k = c.valid_next(&s).count();
            assert_eq!(p.valid_count, k);
            assert!((p.log_prob + (k as f64).ln()).abs() < 1e-12);
            s = c.step(&s, t).unwrap();
        }
    }

    #[test]
    fn masked_probabilities_normalize() {
        let c = codec();
        let p = RankPolicy { vocab_size: c.vocab().size(), salt: 3, spacing: 0.01 };
        let mut s = c.grammar().start();
        let mut prefix = Vec::new();
        for _ in 0..50 {
            let mask = c.valid_next(&s);
            if mask.is_empty() {
                break;
            }
            let scores = p.scores("x", &prefix).unwrap();
            for temperature in [0.1, 1.0, 3.0] {
                let d = masked_distribution(&scores, &mask, temperature, 0).unwrap();
                assert!((d.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(d.iter().all(|x| mask.contains(x.0)));
            }
            let t = mask.iter().next().unwrap();
            s = c.step(&s, t).unwrap();
            prefix.push(t);
        }
    }

    #[test]
    fn greedy_is_deterministic_and_cold_sampling_agrees() {
        let c = codec();
        let p = RankPolicy { vocab_size: c.vocab().size(), salt: 1, spacing: 1.0 };
        let greedy = |cond: &str| rollout(&p, cond, &DecodeConfig { mode: Mode::Greedy, ..DecodeConfig::default() }, &c);
        let a = greedy("a").map(|r| r.tokens);
        let b = greedy("a").map(|r| r.tokens);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let cold = DecodeConfig { mode: Mode::Sample, temperature: 0.01, seed: 9, ..DecodeConfig::default() };
        let s = rollout(&p, "a", &cold, &c).map(|r| r.tokens);
        assert_eq!(format!("{a:?}"), format!("{s:?}"));
    }

    #[test]
    fn rejects_bad_policies_and_configs() {
        struct Short;
        impl Policy for Short {
            fn scores(&self, _: &str, _: &[u32]) -> Result<Vec<f64>, PolicyError> {
                Ok(vec![0.0; 3])
            }
        }
        struct Nan(usize);
        impl Policy for Nan {
            fn scores(&self, _: &str, _: &[u32]) -> Result<Vec<f64>, PolicyError> {
                Ok(vec![f64::NAN; self.0])
            }
        }
        struct Never(usize);
        impl Policy for Never {
            fn scores(&self, _: &str, _: &[u32]) -> Result<Vec<f64>, PolicyError> {
                Ok(vec![f64::NEG_INFINITY; self.0])
            }
        }
        let c = codec();
        let n = c.vocab().size();
        let cfg = DecodeConfig::default();
        assert!(matches!(rollout(&Short, "", &cfg, &c), Err(DecodeError::ScoreLength { got: 3, .. })));
        assert!(matches!(rollout(&Nan(n), "", &cfg, &c), Err(DecodeError::NotANumber { position: 0, .. })));
        assert!(matches!(rollout(&Never(n), "", &cfg, &c), Err(DecodeError::NoSupport { position: 0 })));
        let greedy = DecodeConfig { mode: Mode::Greedy, ..cfg.clone() };
        assert!(matches!(rollout(&Never(n), "", &greedy, &c), Err(DecodeError::NoSupport { position: 0 })));
        for bad in [DecodeConfig { temperature: 0.0, ..cfg.clone() }, DecodeConfig { max_length: 4096, ..cfg.clone() }] {
            assert!(matches!(rollout(&uniform(&c), "", &bad, &c), Err(DecodeError::Config(_))));
        }
        let short = DecodeConfig { max_length: 5, ..cfg };
        match rollout(&uniform(&c), "", &short, &c) {
            Err(DecodeError::Incomplete { partial, max_length: 5 }) => assert_eq!(partial.len(), 5),
            other => panic!("{other:?}"),
        }
        let bad_target = TokenSequence(vec![0, 0, 0]);
        assert!(matches!(teacher_forced_scores(&uniform(&c), "", &bad_target, &c), Err(DecodeError::Target(_))));
    }
}
