//! Shared vocabulary types and the canonical byte encoding used for hashing.
//!
//! The canonical encoding is a bit-exact contract: an 8-byte little-endian
//! count prefix followed by each value as 8 little-endian IEEE-754 bytes.
//! Ledger verification and golden files depend on this exact layout.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest as _, Sha256};

use crate::error::Error;

/// Identifier of a training client, unique within one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClientId(pub u32);

impl ClientId {
    /// The client's position in per-client vectors.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Zero-based round counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoundIndex(pub u32);

impl RoundIndex {
    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for RoundIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 32-byte SHA-256 digest. Displays as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest32([u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0; 32]);

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Digest32(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for byte in self.0 {
            write!(f, "{byte:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({self})")
    }
}

/// Whether a span of parameters belongs to the embedding stack or the
/// final classification layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRole {
    Representation,
    DecisionHead,
}

/// One named span of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpan {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub role: LayerRole,
}

/// Maps the flat parameter vector onto model layers. Spans are contiguous
/// and cover the vector exactly; the layout is shared by every client in a
/// simulation (same architecture).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLayout {
    spans: Vec<LayerSpan>,
}

impl LayerLayout {
    pub fn new(spans: Vec<LayerSpan>) -> Result<Self, Error> {
        let mut expected_offset = 0;
        for span in &spans {
            if span.offset != expected_offset {
                return Err(Error::ShapeMismatch {
                    context: "layer layout offsets",
                    expected: expected_offset,
                    actual: span.offset,
                });
            }
            expected_offset += span.len;
        }
        Ok(LayerLayout { spans })
    }

    pub fn spans(&self) -> &[LayerSpan] {
        &self.spans
    }

    pub fn total_len(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }
}

/// Flat vector of all model weights — the unit of aggregation and hashing.
/// Immutable after construction; every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Arc<LayerLayout>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, layout: Arc<LayerLayout>) -> Result<Self, Error> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter vector",
            });
        }
        if layout.total_len() != values.len() {
            return Err(Error::ShapeMismatch {
                context: "parameter vector vs layout",
                expected: layout.total_len(),
                actual: values.len(),
            });
        }
        Ok(ParameterVector { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn layout_arc(&self) -> Arc<LayerLayout> {
        Arc::clone(&self.layout)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Canonical byte encoding of this vector's values.
    pub fn canonical_encode(&self) -> Vec<u8> {
        // Finiteness already holds by construction.
        encode_unchecked(&self.values)
    }
}

fn encode_unchecked(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * values.len());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Encodes a value slice in the canonical layout: 8-byte little-endian count
/// prefix, then each value as 8 little-endian IEEE-754 bytes. Bit-identical
/// inputs yield bit-identical outputs.
pub fn canonical_encode(values: &[f64]) -> Result<Vec<u8>, Error> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "canonical encoding",
        });
    }
    Ok(encode_unchecked(values))
}

/// Inverse of [`canonical_encode`]; rejects truncated or non-finite input.
pub fn canonical_decode(bytes: &[u8]) -> Result<Vec<f64>, Error> {
    if bytes.len() < 8 {
        return Err(Error::ShapeMismatch {
            context: "canonical decoding prefix",
            expected: 8,
            actual: bytes.len(),
        });
    }
    let mut prefix = [0u8; 8];
    prefix.copy_from_slice(&bytes[..8]);
    let count = u64::from_le_bytes(prefix) as usize;
    if bytes.len() != 8 + 8 * count {
        return Err(Error::ShapeMismatch {
            context: "canonical decoding body",
            expected: 8 + 8 * count,
            actual: bytes.len(),
        });
    }
    let mut values = Vec::with_capacity(count);
    for chunk in bytes[8..].chunks_exact(8) {
        let mut raw = [0u8; 8];
        raw.copy_from_slice(chunk);
        let v = f64::from_le_bytes(raw);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "canonical decoding",
            });
        }
        values.push(v);
    }
    Ok(values)
}

/// SHA-256 of the canonical encoding of the model's parameters.
pub fn model_hash(params: &ParameterVector) -> Digest32 {
    let mut hasher = Sha256::new();
    hasher.update(params.canonical_encode());
    Digest32(hasher.finalize().into())
}

/// D-dimensional averaged representation vector of one local model under
/// the shared probe batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    values: Vec<f64>,
    pub source_client: ClientId,
    pub round: RoundIndex,
    pub probe_label: usize,
}

impl Prototype {
    pub fn new(
        values: Vec<f64>,
        source_client: ClientId,
        round: RoundIndex,
        probe_label: usize,
    ) -> Result<Self, Error> {
        if values.is_empty() {
            return Err(Error::EmptyInput {
                context: "prototype",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "prototype",
            });
        }
        Ok(Prototype {
            values,
            source_client,
            round,
            probe_label,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Symmetric M×M Pearson matrix over this round's local models.
/// Unit diagonal; every entry in [-1, 1]; `entries[i][j]` mirrors
/// `entries[j][i]` bit-exactly because each pair is computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self, Error> {
        if entries.len() != m * m {
            return Err(Error::ShapeMismatch {
                context: "similarity matrix",
                expected: m * m,
                actual: entries.len(),
            });
        }
        for i in 0..m {
            if entries[i * m + i] != 1.0 {
                return Err(Error::Config(String::from(
                    "similarity matrix diagonal must be exactly 1.0",
                )));
            }
            for j in 0..m {
                let v = entries[i * m + j];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::Config(String::from(
                        "similarity matrix entries must lie in [-1, 1]",
                    )));
                }
                if v.to_bits() != entries[j * m + i].to_bits() {
                    return Err(Error::Config(String::from(
                        "similarity matrix must be symmetric",
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { m, entries })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    /// Row `i` as a slice of length M — a model's similarity profile.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }
}

/// Partition of the round's participants into K clusters, plus the
/// representative selected for each cluster once consensus has run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
    members: Vec<Vec<ClientId>>,
    representatives: Option<Vec<ClientId>>,
}

impl ClusterAssignment {
    /// `labels[i]` is the cluster of the i-th participant (participants are
    /// indexed in ascending `ClientId` order by the caller).
    pub fn new(labels: Vec<usize>, k: usize, participants: &[ClientId]) -> Result<Self, Error> {
        if labels.len() != participants.len() {
            return Err(Error::ShapeMismatch {
                context: "cluster labels",
                expected: participants.len(),
                actual: labels.len(),
            });
        }
        let mut members = alloc::vec![Vec::new(); k];
        for (ix, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::Config(String::from("cluster label out of range")));
            }
            members[label].push(participants[ix]);
        }
        Ok(ClusterAssignment {
            labels,
            k,
            members,
            representatives: None,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Member lists are disjoint and cover all participants.
    pub fn members(&self, cluster: usize) -> &[ClientId] {
        &self.members[cluster]
    }

    /// True when some cluster index in [0, K) has no members.
    pub fn is_degenerate(&self) -> bool {
        self.members.iter().any(|m| m.is_empty())
    }

    /// Records the representative chosen for each non-empty cluster.
    pub fn set_representatives(&mut self, reps: Vec<ClientId>) -> Result<(), Error> {
        let non_empty = self.members.iter().filter(|m| !m.is_empty()).count();
        if reps.len() != non_empty {
            return Err(Error::ShapeMismatch {
                context: "cluster representatives",
                expected: non_empty,
                actual: reps.len(),
            });
        }
        let mut it = reps.iter();
        for members in self.members.iter().filter(|m| !m.is_empty()) {
            let rep = it.next().expect("length checked");
            if !members.contains(rep) {
                return Err(Error::Config(String::from(
                    "representative must be a member of its cluster",
                )));
            }
        }
        self.representatives = Some(reps);
        Ok(())
    }

    pub fn representatives(&self) -> Option<&[ClientId]> {
        self.representatives.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn flat_layout(len: usize) -> Arc<LayerLayout> {
        Arc::new(
            LayerLayout::new(vec![LayerSpan {
                name: String::from("w0"),
                offset: 0,
                len,
                role: LayerRole::Representation,
            }])
            .unwrap(),
        )
    }

    #[test]
    fn encode_empty_vector_is_zero_prefix() {
        assert_eq!(canonical_encode(&[]).unwrap(), vec![0u8; 8]);
    }

    #[test]
    fn encode_single_one() {
        let bytes = canonical_encode(&[1.0]).unwrap();
        let mut expected = vec![1, 0, 0, 0, 0, 0, 0, 0];
        expected.extend_from_slice(&[0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn encode_is_deterministic() {
        let v = [0.25, -3.5, 1e-300, 42.0];
        assert_eq!(canonical_encode(&v).unwrap(), canonical_encode(&v).unwrap());
    }

    #[test]
    fn encode_rejects_non_finite() {
        assert!(matches!(
            canonical_encode(&[f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            canonical_encode(&[f64::INFINITY]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn decode_round_trips_bit_exactly() {
        let values = vec![0.1, -0.0, 2.5e17, f64::MIN_POSITIVE];
        let decoded = canonical_decode(&canonical_encode(&values).unwrap()).unwrap();
        assert_eq!(decoded.len(), values.len());
        for (a, b) in values.iter().zip(&decoded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn decode_rejects_truncation() {
        let mut bytes = canonical_encode(&[1.0, 2.0]).unwrap();
        bytes.pop();
        assert!(canonical_decode(&bytes).is_err());
    }

    #[test]
    fn hash_of_empty_vector_matches_independent_sha256() {
        // SHA-256 of the 8-byte zero count prefix, computed with an
        // independent implementation (Python hashlib).
        let p = ParameterVector::new(vec![], flat_layout(0)).unwrap();
        assert_eq!(
            alloc::format!("{}", model_hash(&p)),
            "af5570f5a1810b7af78caf4bc70a660f0df51e42baf91d4de5b2328de0e83dfc"
        );
    }

    #[test]
    fn hash_is_deterministic_and_bit_sensitive() {
        let values = vec![1.0, 2.0, 3.0];
        let p = ParameterVector::new(values.clone(), flat_layout(3)).unwrap();
        assert_eq!(model_hash(&p), model_hash(&p));

        let mut flipped = values;
        flipped[1] = f64::from_bits(flipped[1].to_bits() ^ 1);
        let q = ParameterVector::new(flipped, flat_layout(3)).unwrap();
        assert_ne!(model_hash(&p), model_hash(&q));
    }

    #[test]
    fn parameter_vector_rejects_layout_mismatch() {
        assert!(matches!(
            ParameterVector::new(vec![1.0, 2.0], flat_layout(3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn similarity_matrix_validates_invariants() {
        let ok = SimilarityMatrix::new(2, vec![1.0, 0.5, 0.5, 1.0]);
        assert!(ok.is_ok());
        assert!(SimilarityMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(SimilarityMatrix::new(2, vec![0.9, 0.5, 0.5, 1.0]).is_err());
        assert!(SimilarityMatrix::new(2, vec![1.0, 1.5, 1.5, 1.0]).is_err());
    }

    #[test]
    fn cluster_assignment_members_partition_clients() {
        let clients: Vec<ClientId> = (0..5).map(ClientId).collect();
        let a = ClusterAssignment::new(vec![0, 1, 0, 1, 0], 2, &clients).unwrap();
        assert_eq!(a.members(0), &[ClientId(0), ClientId(2), ClientId(4)]);
        assert_eq!(a.members(1), &[ClientId(1), ClientId(3)]);
        assert!(!a.is_degenerate());

        let d = ClusterAssignment::new(vec![0, 0, 0, 0, 0], 2, &clients).unwrap();
        assert!(d.is_degenerate());
    }

    #[test]
    fn representatives_must_belong_to_their_cluster() {
        let clients: Vec<ClientId> = (0..4).map(ClientId).collect();
        let mut a = ClusterAssignment::new(vec![0, 0, 1, 1], 2, &clients).unwrap();
        assert!(a
            .set_representatives(vec![ClientId(2), ClientId(3)])
            .is_err());
        assert!(a
            .set_representatives(vec![ClientId(1), ClientId(2)])
            .is_ok());
    }
}
