//! Multimodal knowledge archive.
//!
//! Images and de-duplicated instructions are embedded into two column
//! matrices. A query is scored against both, each image keeps its best
//! matching instruction, and the top-K images by summed similarity are
//! returned. The satellite instance additionally carries an LRU queue and a
//! capacity.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::embedding::{dot, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::types::{AnswerText, ArchiveRecord, ImageId, ImagePayload, InstructionText, Query, RecordError};

#[derive(Debug, Error, PartialEq)]
pub enum ArchiveError {
    #[error("archive is empty")]
    EmptyArchive,
    #[error("image {0} is not in the archive")]
    UnknownImage(ImageId),
    #[error("archive is full ({0} images)")]
    CapacityExceeded(usize),
    #[error("this archive has no replace module")]
    NoReplacePolicy,
    #[error("score vector has {actual} entries, index has {expected}")]
    ScoreLength { expected: usize, actual: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// Unit vectors stored as contiguous columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    fn push(&mut self, v: &EmbeddingVector) -> Result<(), ArchiveError> {
        if v.dim() != self.dim {
            return Err(EmbeddingError::Dimension {
                expected: self.dim,
                actual: v.dim(),
            }
            .into());
        }
        self.data.extend_from_slice(v.as_slice());
        Ok(())
    }

    fn remove(&mut self, j: usize) {
        self.data.drain(j * self.dim..(j + 1) * self.dim);
    }

    /// `Aᵀ · q`.
    pub fn transpose_mul(&self, q: &EmbeddingVector) -> Vec<f64> {
        self.data
            .chunks_exact(self.dim.max(1))
            .map(|col| dot(col, q.as_slice()))
            .collect()
    }
}

/// The two embedding matrices and their column-to-id maps.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingIndex {
    pub images: EmbeddingMatrix,
    pub instructions: EmbeddingMatrix,
    pub image_ids: Vec<ImageId>,
    pub instruction_texts: Vec<InstructionText>,
}

/// Mapping from image column to the instruction columns attached to it,
/// each with its ground-truth answer, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstructionMap {
    per_image: Vec<Vec<(usize, AnswerText)>>,
}

impl InstructionMap {
    pub fn from_lists(per_image: Vec<Vec<(usize, AnswerText)>>) -> Self {
        Self { per_image }
    }

    pub fn images(&self) -> usize {
        self.per_image.len()
    }

    pub fn instructions_of(&self, image: usize) -> impl Iterator<Item = usize> + '_ {
        self.per_image[image].iter().map(|(j, _)| *j)
    }

    pub fn ground_truth(&self, image: usize, instruction: usize) -> Option<&str> {
        self.per_image[image]
            .iter()
            .find(|(j, _)| *j == instruction)
            .map(|(_, a)| a.as_str())
    }
}

/// One fused search hit.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievedRecord {
    pub image: ImagePayload,
    pub instruction: InstructionText,
    pub ground_truth: AnswerText,
    pub image_similarity: f64,
    pub instruction_similarity: f64,
    pub fused_score: f64,
}

/// Index-level result of [`rank_fused`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusedHit {
    pub image: usize,
    pub instruction: usize,
    pub image_similarity: f64,
    pub instruction_similarity: f64,
    pub fused_score: f64,
}

/// Picks each image's best instruction (lowest index on ties), scores the
/// image as image similarity plus that instruction's similarity, and returns
/// the best `k` by score, lowest image index first on ties.
pub fn rank_fused(
    sim_m: &[f64],
    sim_i: &[f64],
    map: &InstructionMap,
    k: usize,
) -> Result<Vec<FusedHit>, ArchiveError> {
    if sim_m.is_empty() {
        return Err(ArchiveError::EmptyArchive);
    }
    if sim_m.len() != map.images() {
        return Err(ArchiveError::ScoreLength {
            expected: map.images(),
            actual: sim_m.len(),
        });
    }
    let mut hits = Vec::with_capacity(sim_m.len());
    for (i, &s_m) in sim_m.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for j in map.instructions_of(i) {
            let s = *sim_i.get(j).ok_or(ArchiveError::ScoreLength {
                expected: j + 1,
                actual: sim_i.len(),
            })?;
            best = match best {
                Some((bj, bs)) if bs > s || (bs == s && bj < j) => Some((bj, bs)),
                _ => Some((j, s)),
            };
        }
        let (j, s_i) = best.ok_or(ArchiveError::EmptyArchive)?;
        hits.push(FusedHit {
            image: i,
            instruction: j,
            image_similarity: s_m,
            instruction_similarity: s_i,
            fused_score: s_m + s_i,
        });
    }
    hits.sort_by(|a, b| {
        b.fused_score
            .total_cmp(&a.fused_score)
            .then(a.image.cmp(&b.image))
    });
    hits.truncate(k);
    Ok(hits)
}

/// Recency order of resident images, most recently used first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LruQueue {
    order: VecDeque<ImageId>,
}

impl LruQueue {
    pub fn iter(&self) -> impl Iterator<Item = &ImageId> {
        self.order.iter()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn to_vec(&self) -> Vec<ImageId> {
        self.order.iter().copied().collect()
    }

    /// Moves `ids` to the front, keeping their given order.
    fn move_to_front(&mut self, ids: &[ImageId]) {
        let mut unique: Vec<ImageId> = Vec::with_capacity(ids.len());
        for id in ids {
            if !unique.contains(id) {
                unique.push(*id);
            }
        }
        self.order.retain(|id| !unique.contains(id));
        for id in unique.iter().rev() {
            self.order.push_front(*id);
        }
    }

    fn remove(&mut self, id: ImageId) {
        self.order.retain(|x| *x != id);
    }

    fn back(&self) -> Option<ImageId> {
        self.order.back().copied()
    }
}

/// Knowledge archive shared by the ground station and the satellite.
#[derive(Clone)]
pub struct Archive {
    provider: Arc<dyn EmbeddingProvider>,
    index: EmbeddingIndex,
    map: InstructionMap,
    payloads: Vec<ImagePayload>,
    record_bytes: Vec<u64>,
    image_pos: BTreeMap<ImageId, usize>,
    instruction_pos: BTreeMap<InstructionText, usize>,
    lru: Option<LruQueue>,
    cap: Option<usize>,
}

impl std::fmt::Debug for Archive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Archive")
            .field("images", &self.payloads.len())
            .field("instructions", &self.index.instruction_texts.len())
            .field("cap", &self.cap)
            .finish()
    }
}

impl Archive {
    /// An uncapped archive without a replace module (ground station).
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        let dim = provider.dim();
        Self {
            provider,
            index: EmbeddingIndex {
                images: EmbeddingMatrix::new(dim),
                instructions: EmbeddingMatrix::new(dim),
                image_ids: Vec::new(),
                instruction_texts: Vec::new(),
            },
            map: InstructionMap::default(),
            payloads: Vec::new(),
            record_bytes: Vec::new(),
            image_pos: BTreeMap::new(),
            instruction_pos: BTreeMap::new(),
            lru: None,
            cap: None,
        }
    }

    /// A capped archive with an LRU replace module (satellite).
    pub fn with_lru(provider: Arc<dyn EmbeddingProvider>, cap: usize) -> Self {
        let mut archive = Self::new(provider);
        archive.lru = Some(LruQueue::default());
        archive.cap = Some(cap);
        archive
    }

    pub fn provider(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.provider
    }

    pub fn len(&self) -> usize {
        self.payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payloads.is_empty()
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn index(&self) -> &EmbeddingIndex {
        &self.index
    }

    pub fn instruction_map(&self) -> &InstructionMap {
        &self.map
    }

    pub fn lru(&self) -> Option<&LruQueue> {
        self.lru.as_ref()
    }

    pub fn contains(&self, id: ImageId) -> bool {
        self.image_pos.contains_key(&id)
    }

    /// Resident image ids in column (insertion) order.
    pub fn image_ids(&self) -> &[ImageId] {
        &self.index.image_ids
    }

    pub fn instruction_count(&self) -> usize {
        self.index.instruction_texts.len()
    }

    /// Reassembles the stored record for `id`.
    pub fn record(&self, id: ImageId) -> Option<ArchiveRecord> {
        let i = *self.image_pos.get(&id)?;
        Some(self.record_at(i))
    }

    fn record_at(&self, i: usize) -> ArchiveRecord {
        ArchiveRecord {
            image: self.payloads[i].clone(),
            pairs: self.map.per_image[i]
                .iter()
                .map(|(j, a)| (self.index.instruction_texts[*j].clone(), a.clone()))
                .collect(),
            record_bytes: self.record_bytes[i],
        }
    }

    /// Inserts a record, de-duplicating instructions by exact text. An
    /// already resident image gains any new pairs. In an LRU archive a new
    /// image enters at the queue front; capped archives refuse to grow past
    /// their cap (use [`Archive::evict_and_insert`]).
    pub fn insert(&mut self, record: &ArchiveRecord) -> Result<(), ArchiveError> {
        record.validate()?;
        let i = match self.image_pos.get(&record.id()) {
            Some(&i) => i,
            None => {
                if let Some(cap) = self.cap {
                    if self.payloads.len() >= cap {
                        return Err(ArchiveError::CapacityExceeded(cap));
                    }
                }
                let v = self.provider.embed_image(&record.image)?;
                // Embed new instructions before mutating anything.
                self.prepare_instructions(record)?;
                self.index.images.push(&v)?;
                self.index.image_ids.push(record.id());
                self.payloads.push(record.image.clone());
                self.record_bytes.push(record.record_bytes);
                self.map.per_image.push(Vec::new());
                let i = self.payloads.len() - 1;
                self.image_pos.insert(record.id(), i);
                if let Some(lru) = self.lru.as_mut() {
                    lru.move_to_front(&[record.id()]);
                }
                i
            }
        };
        self.prepare_instructions(record)?;
        let mut grew = false;
        for (instruction, answer) in &record.pairs {
            let j = self.instruction_pos[instruction];
            if !self.map.per_image[i].iter().any(|(x, _)| *x == j) {
                self.map.per_image[i].push((j, answer.clone()));
                grew = true;
            }
        }
        if grew {
            self.record_bytes[i] = self.record_bytes[i].max(record.record_bytes);
        }
        Ok(())
    }

    fn prepare_instructions(&mut self, record: &ArchiveRecord) -> Result<(), ArchiveError> {
        for (instruction, _) in &record.pairs {
            if !self.instruction_pos.contains_key(instruction) {
                let v = self.provider.embed_text(instruction)?;
                self.index.instructions.push(&v)?;
                self.index.instruction_texts.push(instruction.clone());
                self.instruction_pos
                    .insert(instruction.clone(), self.index.instruction_texts.len() - 1);
            }
        }
        Ok(())
    }

    /// Cosine similarity of `q` with every stored image.
    pub fn query_vision(&self, q: &EmbeddingVector) -> Result<Vec<f64>, ArchiveError> {
        if self.payloads.is_empty() {
            return Err(ArchiveError::EmptyArchive);
        }
        Ok(self.index.images.transpose_mul(q))
    }

    /// Cosine similarity of `q` with every unique instruction.
    pub fn query_instruction(&self, q: &EmbeddingVector) -> Result<Vec<f64>, ArchiveError> {
        if self.index.instruction_texts.is_empty() {
            return Err(ArchiveError::EmptyArchive);
        }
        Ok(self.index.instructions.transpose_mul(q))
    }

    pub fn fuse_and_rank(
        &self,
        sim_m: &[f64],
        sim_i: &[f64],
        k: usize,
    ) -> Result<Vec<RetrievedRecord>, ArchiveError> {
        let hits = rank_fused(sim_m, sim_i, &self.map, k)?;
        Ok(hits
            .into_iter()
            .map(|hit| RetrievedRecord {
                image: self.payloads[hit.image].clone(),
                instruction: self.index.instruction_texts[hit.instruction].clone(),
                ground_truth: self
                    .map
                    .ground_truth(hit.image, hit.instruction)
                    .unwrap_or_default()
                    .to_string(),
                image_similarity: hit.image_similarity,
                instruction_similarity: hit.instruction_similarity,
                fused_score: hit.fused_score,
            })
            .collect())
    }

    /// Embeds the query and returns its top-`k` fused records.
    pub fn retrieve(&self, query: &Query, k: usize) -> Result<Vec<RetrievedRecord>, ArchiveError> {
        if self.payloads.is_empty() {
            return Err(ArchiveError::EmptyArchive);
        }
        let q_m = self.provider.embed_image(&query.image)?;
        let q_i = self.provider.embed_text(&query.instruction)?;
        let sim_m = self.query_vision(&q_m)?;
        let sim_i = self.query_instruction(&q_i)?;
        self.fuse_and_rank(&sim_m, &sim_i, k)
    }

    /// Marks `ids` as most recently used, in the given order.
    pub fn touch(&mut self, ids: &[ImageId]) -> Result<(), ArchiveError> {
        if self.lru.is_none() {
            return Err(ArchiveError::NoReplacePolicy);
        }
        if let Some(missing) = ids.iter().find(|id| !self.image_pos.contains_key(id)) {
            return Err(ArchiveError::UnknownImage(*missing));
        }
        self.lru.as_mut().expect("checked above").move_to_front(ids);
        Ok(())
    }

    /// Inserts `records` at the queue front, evicting least recently used
    /// images so the archive stays within `cap`. Records are merged by
    /// image id first. Returns the evicted ids, tail first.
    pub fn evict_and_insert(
        &mut self,
        records: &[ArchiveRecord],
        cap: usize,
    ) -> Result<Vec<ImageId>, ArchiveError> {
        if self.lru.is_none() {
            return Err(ArchiveError::NoReplacePolicy);
        }
        for record in records {
            record.validate()?;
        }
        let merged = merge_by_image(records);
        if merged.len() > cap {
            return Err(ArchiveError::CapacityExceeded(cap));
        }
        let incoming: Vec<ImageId> = merged.iter().map(|r| r.id()).collect();
        let fresh = incoming.iter().filter(|id| !self.contains(**id)).count();
        // Resident incoming images move out of the eviction zone first.
        let resident: Vec<ImageId> = incoming.iter().copied().filter(|id| self.contains(*id)).collect();
        self.lru.as_mut().expect("checked above").move_to_front(&resident);

        let mut evicted = Vec::new();
        while self.payloads.len() + fresh - evicted.len() > cap {
            let lru = self.lru.as_mut().expect("checked above");
            let victim = lru.back().ok_or(ArchiveError::CapacityExceeded(cap))?;
            lru.remove(victim);
            evicted.push(victim);
        }
        self.remove_images(&evicted);

        self.cap = Some(cap);
        for record in &merged {
            self.insert(record)?;
        }
        self.lru.as_mut().expect("checked above").move_to_front(&incoming);
        Ok(evicted)
    }

    /// Drops images and any instruction no longer referenced.
    fn remove_images(&mut self, ids: &[ImageId]) {
        if ids.is_empty() {
            return;
        }
        let mut columns: Vec<usize> = ids.iter().filter_map(|id| self.image_pos.get(id).copied()).collect();
        columns.sort_unstable();
        for &i in columns.iter().rev() {
            self.index.images.remove(i);
            self.index.image_ids.remove(i);
            self.payloads.remove(i);
            self.record_bytes.remove(i);
            self.map.per_image.remove(i);
        }
        self.image_pos = self
            .index
            .image_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i))
            .collect();

        let used: BTreeSet<usize> = self
            .map
            .per_image
            .iter()
            .flat_map(|pairs| pairs.iter().map(|(j, _)| *j))
            .collect();
        let total = self.index.instruction_texts.len();
        if used.len() == total {
            return;
        }
        let mut remap = vec![usize::MAX; total];
        let mut next = 0;
        for (j, slot) in remap.iter_mut().enumerate() {
            if used.contains(&j) {
                *slot = next;
                next += 1;
            }
        }
        for j in (0..total).rev() {
            if remap[j] == usize::MAX {
                self.index.instructions.remove(j);
                let text = self.index.instruction_texts.remove(j);
                self.instruction_pos.remove(&text);
            }
        }
        for pos in self.instruction_pos.values_mut() {
            *pos = remap[*pos];
        }
        for pairs in &mut self.map.per_image {
            for (j, _) in pairs.iter_mut() {
                *j = remap[*j];
            }
        }
    }
}

/// Merges records that share an image id, keeping first-seen order.
pub fn merge_by_image(records: &[ArchiveRecord]) -> Vec<ArchiveRecord> {
    let mut out: Vec<ArchiveRecord> = Vec::with_capacity(records.len());
    let mut pos: BTreeMap<ImageId, usize> = BTreeMap::new();
    for record in records {
        match pos.get(&record.id()) {
            Some(&i) => {
                let target = &mut out[i];
                for (instruction, answer) in &record.pairs {
                    if !target.pairs.iter().any(|(x, _)| x == instruction) {
                        target.pairs.push((instruction.clone(), answer.clone()));
                    }
                }
                target.record_bytes = target.record_bytes.max(record.record_bytes);
            }
            None => {
                pos.insert(record.id(), out.len());
                out.push(record.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{normalize, SyntheticEmbedder};

    fn provider() -> Arc<dyn EmbeddingProvider> {
        Arc::new(SyntheticEmbedder::default())
    }

    fn record(id: u64, label: &str, pairs: &[(&str, &str)]) -> ArchiveRecord {
        ArchiveRecord::new(
            ImagePayload::new(id, id * 31 + 7, label),
            pairs.iter().map(|(i, a)| (i.to_string(), a.to_string())).collect(),
            1000 + id,
        )
        .unwrap()
    }

    fn ids(v: &[u64]) -> Vec<ImageId> {
        v.iter().map(|x| ImageId(*x)).collect()
    }

    #[test]
    fn insert_into_empty_archive() {
        let mut a = Archive::new(provider());
        a.insert(&record(1, "water:river", &[("Is there a [road]?", "no"), ("What is it?", "river")]))
            .unwrap();
        assert_eq!(a.index().images.columns(), 1);
        assert_eq!(a.index().instructions.columns(), 2);
    }

    #[test]
    fn shared_instruction_is_stored_once() {
        let mut a = Archive::new(provider());
        a.insert(&record(1, "urban:dense", &[("Is there a road?", "yes")])).unwrap();
        a.insert(&record(2, "farm:cropland", &[("Is there a road?", "no")])).unwrap();
        assert_eq!(a.instruction_count(), 1);
        let map = a.instruction_map();
        assert_eq!(map.instructions_of(0).collect::<Vec<_>>(), vec![0]);
        assert_eq!(map.instructions_of(1).collect::<Vec<_>>(), vec![0]);
        assert_eq!(map.ground_truth(1, 0), Some("no"));
    }

    #[test]
    fn reinsert_is_idempotent_and_merges_new_pairs() {
        let mut a = Archive::new(provider());
        let r = record(1, "urban:dense", &[("A?", "x")]);
        a.insert(&r).unwrap();
        let before = a.record(ImageId(1)).unwrap();
        a.insert(&r).unwrap();
        assert_eq!(a.record(ImageId(1)).unwrap(), before);
        assert_eq!(a.len(), 1);

        a.insert(&record(1, "urban:dense", &[("A?", "x"), ("B?", "y")])).unwrap();
        assert_eq!(a.record(ImageId(1)).unwrap().pairs.len(), 2);
        assert_eq!(a.instruction_count(), 2);
    }

    #[test]
    fn empty_archive_errors() {
        let a = Archive::new(provider());
        let q = normalize(vec![1.0; 64]).unwrap();
        assert_eq!(a.query_vision(&q), Err(ArchiveError::EmptyArchive));
        assert_eq!(a.query_instruction(&q), Err(ArchiveError::EmptyArchive));
    }

    #[test]
    fn self_similarity_is_one() {
        let mut a = Archive::new(provider());
        for id in 0..5 {
            a.insert(&record(id, "forest:conifer", &[("Q?", "a")])).unwrap();
        }
        let emb = SyntheticEmbedder::default();
        let q = emb.embed_image(&ImagePayload::new(99, 3 * 31 + 7, "forest:conifer")).unwrap();
        let scores = a.query_vision(&q).unwrap();
        assert!((scores[3] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_query_scores_zero() {
        let fx = crate::embedding::FixtureEmbedder::from_texts(
            2,
            "1\t1 0\n2\t1 1\n",
            "Q?\t0 1\n",
        )
        .unwrap();
        let mut a = Archive::new(Arc::new(fx));
        a.insert(&record(1, "x", &[("Q?", "a")])).unwrap();
        let q = normalize(vec![0.0, 1.0]).unwrap();
        assert!(a.query_vision(&q).unwrap()[0].abs() < 1e-9);
    }

    #[test]
    fn fused_ranking_hand_example() {
        let map = InstructionMap::from_lists(vec![
            vec![(0, "a".into()), (1, "b".into())],
            vec![(2, "c".into())],
        ]);
        let hits = rank_fused(&[0.9, 0.5], &[0.8, 0.3, 0.95], &map, 5).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].image, 0);
        assert_eq!(hits[0].instruction, 0);
        assert!((hits[0].fused_score - 1.7).abs() < 1e-12);
        assert_eq!(hits[1].image, 1);
        assert!((hits[1].fused_score - 1.45).abs() < 1e-12);
    }

    #[test]
    fn fused_ranking_ties_prefer_lower_indices() {
        let map = InstructionMap::from_lists(vec![
            vec![(1, "a".into()), (0, "b".into())],
            vec![(0, "c".into())],
            vec![(1, "d".into())],
        ]);
        let hits = rank_fused(&[0.5, 0.5, 0.5], &[0.7, 0.7], &map, 2).unwrap();
        assert_eq!(hits[0].instruction, 0);
        assert_eq!(hits.iter().map(|h| h.image).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn retrieve_finds_exact_match_first() {
        let mut a = Archive::new(provider());
        a.insert(&record(1, "urban:dense", &[("Is there a [road]?", "yes")])).unwrap();
        a.insert(&record(2, "water:lake", &[("Is there a [road]?", "no"), ("How many [ships]?", "2")]))
            .unwrap();
        let q = Query::new(0, 0.0, ImagePayload::new(500, 2 * 31 + 7, "water:lake"), "How many [ships]?", 10);
        let hits = a.retrieve(&q, 5).unwrap();
        assert_eq!(hits[0].image.image_id, ImageId(2));
        assert_eq!(hits[0].instruction, "How many [ships]?");
        assert_eq!(hits[0].ground_truth, "2");
        assert!((hits[0].image_similarity - 1.0).abs() < 1e-9);
        assert!((hits[0].instruction_similarity - 1.0).abs() < 1e-9);
        for h in &hits {
            assert!((h.fused_score - h.image_similarity - h.instruction_similarity).abs() < 1e-9);
        }
    }

    #[test]
    fn touch_reorders_queue() {
        let mut a = Archive::with_lru(provider(), 5);
        for id in [3, 2, 1] {
            a.insert(&record(id, "l", &[("Q?", "a")])).unwrap();
        }
        // a, b, c = 1, 2, 3
        assert_eq!(a.lru().unwrap().to_vec(), ids(&[1, 2, 3]));
        a.touch(&ids(&[3])).unwrap();
        assert_eq!(a.lru().unwrap().to_vec(), ids(&[3, 1, 2]));
        a.touch(&ids(&[3])).unwrap();
        assert_eq!(a.lru().unwrap().to_vec(), ids(&[3, 1, 2]));
        a.touch(&ids(&[2, 3])).unwrap();
        assert_eq!(a.lru().unwrap().to_vec(), ids(&[2, 3, 1]));
        assert_eq!(a.touch(&ids(&[9])), Err(ArchiveError::UnknownImage(ImageId(9))));
    }

    #[test]
    fn touch_two_ids_keeps_their_order() {
        let mut a = Archive::with_lru(provider(), 5);
        for id in [3, 2, 1] {
            a.insert(&record(id, "l", &[("Q?", "a")])).unwrap();
        }
        a.touch(&ids(&[2, 1])).unwrap();
        assert_eq!(a.lru().unwrap().to_vec(), ids(&[2, 1, 3]));
    }

    #[test]
    fn ground_archive_has_no_replace_module() {
        let mut a = Archive::new(provider());
        a.insert(&record(1, "l", &[("Q?", "a")])).unwrap();
        assert_eq!(a.touch(&ids(&[1])), Err(ArchiveError::NoReplacePolicy));
    }

    #[test]
    fn evict_from_full_archive() {
        let mut a = Archive::with_lru(provider(), 20);
        for id in 0..20 {
            a.insert(&record(id, "l", &[(&format!("Q{id}?"), "a")])).unwrap();
        }
        let tail: Vec<ImageId> = a.lru().unwrap().to_vec()[17..].to_vec();
        let new: Vec<ArchiveRecord> = (100..103).map(|id| record(id, "m", &[("N?", "b")])).collect();
        let evicted = a.evict_and_insert(&new, 20).unwrap();
        assert_eq!(evicted.len(), 3);
        let mut tail_rev = tail.clone();
        tail_rev.reverse();
        assert_eq!(evicted, tail_rev);
        assert_eq!(a.len(), 20);
        assert_eq!(a.lru().unwrap().to_vec()[..3], ids(&[100, 101, 102])[..]);
        // Instructions of evicted images are gone from A_I.
        for id in &evicted {
            let text = format!("Q{}?", id.0);
            assert!(!a.index().instruction_texts.contains(&text));
        }
        assert_eq!(a.index().instructions.columns(), a.instruction_count());
    }

    #[test]
    fn resident_update_refreshes_without_eviction() {
        let mut a = Archive::with_lru(provider(), 3);
        for id in [1, 2, 3] {
            a.insert(&record(id, "l", &[("Q?", "a")])).unwrap();
        }
        let evicted = a
            .evict_and_insert(&[record(1, "l", &[("Q?", "a"), ("R?", "b")])], 3)
            .unwrap();
        assert!(evicted.is_empty());
        assert_eq!(a.lru().unwrap().to_vec()[0], ImageId(1));
        assert_eq!(a.record(ImageId(1)).unwrap().pairs.len(), 2);
    }

    #[test]
    fn small_update_needs_no_eviction() {
        let mut a = Archive::with_lru(provider(), 20);
        for id in 0..5 {
            a.insert(&record(id, "l", &[("Q?", "a")])).unwrap();
        }
        let evicted = a
            .evict_and_insert(&[record(50, "l", &[("Q?", "a")]), record(51, "l", &[("Q?", "a")])], 20)
            .unwrap();
        assert!(evicted.is_empty());
        assert_eq!(a.len(), 7);
    }

    #[test]
    fn capped_insert_refuses_to_overflow() {
        let mut a = Archive::with_lru(provider(), 1);
        a.insert(&record(1, "l", &[("Q?", "a")])).unwrap();
        assert_eq!(
            a.insert(&record(2, "l", &[("Q?", "a")])),
            Err(ArchiveError::CapacityExceeded(1))
        );
    }
}
