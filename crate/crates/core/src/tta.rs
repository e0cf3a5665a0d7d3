//! Test-time augmentation over option order.
//!
//! A [`Permutation`] is one of the six bijections on the three option slots.
//! Presenting a question under a permutation shuffles which option text sits
//! behind each of the labels A/B/C; inverting a model's answer maps the chosen
//! presented position back to the option's canonical index so that
//! predictions from differently-shuffled runs are comparable before voting.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A bijection on `{0,1,2}`: `map[presented_position] = canonical_index`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Permutation {
    map: [u8; 3],
}

/// The six elements of the permutation group on three slots, in lexicographic
/// order of their maps. Identity is first.
pub const GROUP_SIZE: usize = 6;

impl Permutation {
    /// The identity permutation `[0,1,2]`.
    pub fn identity() -> Self {
        Permutation { map: [0, 1, 2] }
    }

    /// Build from an explicit map, rejecting anything that is not a bijection
    /// on `{0,1,2}`.
    pub fn new(map: [u8; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &c in &map {
            if c > 2 || seen[c as usize] {
                return Err(Error::Validation(format!(
                    "permutation map {map:?} is not a bijection on {{0,1,2}}"
                )));
            }
            seen[c as usize] = true;
        }
        Ok(Permutation { map })
    }

    /// All six permutations, identity first, in lexicographic map order.
    pub fn all() -> [Permutation; GROUP_SIZE] {
        [
            Permutation { map: [0, 1, 2] },
            Permutation { map: [0, 2, 1] },
            Permutation { map: [1, 0, 2] },
            Permutation { map: [1, 2, 0] },
            Permutation { map: [2, 0, 1] },
            Permutation { map: [2, 1, 0] },
        ]
    }

    pub fn is_identity(&self) -> bool {
        self.map == [0, 1, 2]
    }

    /// The raw map, `map[presented] = canonical`.
    pub fn map(&self) -> [u8; 3] {
        self.map
    }

    /// Reorder canonical options into presented order:
    /// `result[p] = canonical_options[map[p]]`.
    pub fn apply<T: Clone>(&self, canonical_options: &[T; 3]) -> [T; 3] {
        [
            canonical_options[self.map[0] as usize].clone(),
            canonical_options[self.map[1] as usize].clone(),
            canonical_options[self.map[2] as usize].clone(),
        ]
    }

    /// Map a presented position (what the model answered) back to the
    /// canonical option index.
    pub fn invert(&self, presented_index: u8) -> u8 {
        assert!(presented_index < 3, "presented index out of range");
        self.map[presented_index as usize]
    }

    /// The presented position a canonical option ends up at.
    pub fn position_of(&self, canonical_index: u8) -> u8 {
        assert!(canonical_index < 3, "canonical index out of range");
        self.map
            .iter()
            .position(|&c| c == canonical_index)
            .expect("bijection covers every canonical index") as u8
    }

    /// Compact digest for ids and file names, e.g. `[2,0,1]` -> `"201"`.
    pub fn digest(&self) -> String {
        self.map.iter().map(|c| char::from(b'0' + c)).collect()
    }
}

impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = <[u8; 3]>::deserialize(deserializer)?;
        Permutation::new(map).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Whether one augmentation plan is shared by the whole run or re-drawn per
/// question.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtaScope {
    PerRun,
    PerQuestion,
}

impl Default for TtaScope {
    fn default() -> Self {
        TtaScope::PerRun
    }
}

/// An ordered set of distinct permutations to infer under, identity first.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TtaPlan {
    pub permutations: Vec<Permutation>,
    pub seed: u64,
    #[serde(default)]
    pub scope: TtaScope,
}

/// Draw `k` distinct non-identity permutations and prepend identity,
/// deterministically for a fixed seed.
pub fn sample_permutations(k: usize, seed: u64) -> Result<TtaPlan> {
    sample_with_scope(k, seed, TtaScope::PerRun)
}

fn sample_with_scope(k: usize, seed: u64, scope: TtaScope) -> Result<TtaPlan> {
    if k > GROUP_SIZE - 1 {
        return Err(Error::Config(format!(
            "cannot draw {k} distinct non-identity permutations; only {} exist",
            GROUP_SIZE - 1
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let non_identity: Vec<Permutation> = Permutation::all()[1..].to_vec();
    let picks = rand::seq::index::sample(&mut rng, non_identity.len(), k);
    let mut permutations = Vec::with_capacity(k + 1);
    permutations.push(Permutation::identity());
    permutations.extend(picks.iter().map(|i| non_identity[i]));
    Ok(TtaPlan {
        permutations,
        seed,
        scope,
    })
}

impl TtaPlan {
    pub fn with_scope(mut self, scope: TtaScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn len(&self) -> usize {
        self.permutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutations.is_empty()
    }

    /// The permutations to use for one question. Under `PerRun` this is the
    /// shared list; under `PerQuestion` a fresh draw of the same size, seeded
    /// from the plan seed and the question uid.
    pub fn permutations_for(&self, question_uid: &str) -> Vec<Permutation> {
        match self.scope {
            TtaScope::PerRun => self.permutations.clone(),
            TtaScope::PerQuestion => {
                let derived = self.seed ^ fnv1a_64(question_uid.as_bytes());
                sample_with_scope(self.permutations.len() - 1, derived, TtaScope::PerQuestion)
                    .expect("size already validated")
                    .permutations
            }
        }
    }
}

/// FNV-1a 64-bit hash. Used wherever a stable, platform-independent mixing of
/// a string into a seed is needed (std's hasher is not stable across
/// releases).
pub(crate) fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
