//! Threshold agglomerative clustering of person reference faces.
//!
//! Average linkage on normalized cosine similarity. The most similar pair of
//! clusters is merged until no pair reaches `tau_p`. Inter-cluster totals are
//! kept as sums of member similarities so a merge is one row addition.

use serde::{Deserialize, Serialize};

use super::similarity::{normalized_cosine, SimError};
use crate::model::EmbeddingVector;

pub const DEFAULT_TAU_P: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ClusteringParams {
    tau_p: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    tau_p: f64,
}

impl TryFrom<RawParams> for ClusteringParams {
    type Error = SimError;
    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        ClusteringParams::new(raw.tau_p)
    }
}

impl From<ClusteringParams> for RawParams {
    fn from(p: ClusteringParams) -> Self {
        RawParams { tau_p: p.tau_p }
    }
}

impl ClusteringParams {
    /// `tau_p` is a threshold on normalized cosine similarity, in [0, 1].
    pub fn new(tau_p: f64) -> Result<Self, SimError> {
        if (0.0..=1.0).contains(&tau_p) {
            Ok(Self { tau_p })
        } else {
            Err(SimError::InvalidThreshold(tau_p))
        }
    }

    pub fn tau_p(&self) -> f64 {
        self.tau_p
    }
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            tau_p: DEFAULT_TAU_P,
        }
    }
}

fn similarity_matrix(faces: &[EmbeddingVector]) -> Result<Vec<Vec<f64>>, SimError> {
    let n = faces.len();
    let mut sim = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = normalized_cosine(&faces[i], &faces[j])?;
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    Ok(sim)
}

/// Partitions `faces` into clusters of indices. Clusters are ordered by their
/// smallest member and members are ascending. Among equally similar cluster
/// pairs, the one with the lexicographically smallest pair of minimum members
/// merges first.
pub fn cluster_references(
    faces: &[EmbeddingVector],
    params: &ClusteringParams,
) -> Result<Vec<Vec<usize>>, SimError> {
    if faces.is_empty() {
        return Err(SimError::EmptyInput);
    }
    let sim = similarity_matrix(faces)?;
    Ok(cluster_matrix(&sim, params.tau_p))
}

fn cluster_matrix(sim: &[Vec<f64>], tau_p: f64) -> Vec<Vec<usize>> {
    let n = sim.len();
    // Slot i holds the cluster whose smallest member is i.
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut sums: Vec<Vec<f64>> = sim.to_vec();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            let Some(ma) = &members[a] else { continue };
            for b in a + 1..n {
                let Some(mb) = &members[b] else { continue };
                let avg = sums[a][b] / (ma.len() * mb.len()) as f64;
                if best.is_none_or(|(_, _, s)| avg > s) {
                    best = Some((a, b, avg));
                }
            }
        }
        let Some((a, b, avg)) = best else { break };
        if avg < tau_p {
            break;
        }
        let moved = members[b].take().expect("active slot");
        for k in 0..n {
            if members[k].is_some() && k != a {
                let merged = sums[a][k] + sums[b][k];
                sums[a][k] = merged;
                sums[k][a] = merged;
            }
        }
        let target = members[a].as_mut().expect("active slot");
        target.extend(moved);
        target.sort_unstable();
    }
    members.into_iter().flatten().collect()
}

/// Majority cluster of a gallery and its mean vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonReference {
    pub vector: EmbeddingVector,
    pub cluster: Vec<usize>,
    pub cluster_count: usize,
}

/// Mean intra-cluster normalized similarity; a singleton counts as 1.
fn cohesion(sim: &[Vec<f64>], cluster: &[usize]) -> f64 {
    if cluster.len() < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in cluster.iter().enumerate() {
        for &b in &cluster[i + 1..] {
            total += sim[a][b];
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Clusters the gallery and averages the largest cluster. Size ties go to the
/// more cohesive cluster, then to the one with the smaller first member.
pub fn person_reference(
    faces: &[EmbeddingVector],
    params: &ClusteringParams,
) -> Result<PersonReference, SimError> {
    if faces.is_empty() {
        return Err(SimError::EmptyInput);
    }
    let sim = similarity_matrix(faces)?;
    let clusters = cluster_matrix(&sim, params.tau_p);
    let cluster_count = clusters.len();
    let mut best = &clusters[0];
    let mut best_cohesion = cohesion(&sim, best);
    for c in &clusters[1..] {
        let coh = cohesion(&sim, c);
        // clusters are ordered by first member, so strict comparisons keep
        // the smaller first member on full ties
        if c.len() > best.len() || (c.len() == best.len() && coh > best_cohesion) {
            best = c;
            best_cohesion = coh;
        }
    }
    let dim = faces[0].dim();
    let mut mean = vec![0.0; dim];
    for &i in best {
        for (m, v) in mean.iter_mut().zip(faces[i].values()) {
            *m += v;
        }
    }
    let k = best.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    let vector = EmbeddingVector::new(mean).map_err(|_| SimError::DegenerateReference)?;
    Ok(PersonReference {
        vector,
        cluster: best.clone(),
        cluster_count,
    })
}

pub fn person_reference_vector(
    faces: &[EmbeddingVector],
    params: &ClusteringParams,
) -> Result<EmbeddingVector, SimError> {
    person_reference(faces, params).map(|r| r.vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    /// Recomputes every average linkage from scratch on each step.
    fn brute_force(faces: &[EmbeddingVector], tau: f64) -> Vec<Vec<usize>> {
        let n = faces.len();
        let s = |i: usize, j: usize| normalized_cosine(&faces[i], &faces[j]).unwrap();
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut total = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            total += s(i, j);
                        }
                    }
                    let avg = total / (clusters[a].len() * clusters[b].len()) as f64;
                    if best.is_none_or(|(_, _, x)| avg > x) {
                        best = Some((a, b, avg));
                    }
                }
            }
            match best {
                Some((a, b, avg)) if avg >= tau => {
                    let moved = clusters.remove(b);
                    clusters[a].extend(moved);
                    clusters[a].sort_unstable();
                }
                _ => break,
            }
        }
        clusters.sort_by_key(|c| c[0]);
        clusters
    }

    fn random_gallery(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<EmbeddingVector> {
        (0..n)
            .map(|_| emb(&(0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn duplicates_merge_and_outlier_stays() {
        let u = emb(&[1.0, 0.0]);
        let w = emb(&[0.0, 1.0]);
        let faces = vec![u.clone(), u.clone(), w];
        let clusters = cluster_references(&faces, &ClusteringParams::default()).unwrap();
        assert_eq!(clusters, vec![vec![0, 1], vec![2]]);
        assert_eq!(
            person_reference_vector(&faces, &ClusteringParams::default()).unwrap(),
            u
        );
    }

    #[test]
    fn zero_threshold_gives_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let faces = random_gallery(&mut rng, 9, 4);
        let clusters = cluster_references(&faces, &ClusteringParams::new(0.0).unwrap()).unwrap();
        assert_eq!(clusters, vec![(0..9).collect::<Vec<_>>()]);
    }

    #[test]
    fn single_face_is_its_own_reference() {
        let f = emb(&[0.2, -0.7, 0.1]);
        let r = person_reference(std::slice::from_ref(&f), &ClusteringParams::default()).unwrap();
        assert_eq!(r.vector, f);
        assert_eq!(r.cluster, vec![0]);
    }

    #[test]
    fn empty_gallery_rejected() {
        assert_eq!(
            cluster_references(&[], &ClusteringParams::default()),
            Err(SimError::EmptyInput)
        );
        assert!(ClusteringParams::new(1.5).is_err());
    }

    #[test]
    fn size_tie_prefers_cohesion() {
        // {0,1} loose pair, {2,3} tight pair; same size
        let faces = vec![
            emb(&[1.0, 0.3, 0.0]),
            emb(&[1.0, -0.3, 0.0]),
            emb(&[-0.05, 0.0, 1.0]),
            emb(&[0.05, 0.0, 1.0]),
        ];
        let params = ClusteringParams::new(0.9).unwrap();
        let r = person_reference(&faces, &params).unwrap();
        assert_eq!(r.cluster_count, 2);
        assert_eq!(r.cluster, vec![2, 3]);
    }

    #[test]
    fn matches_brute_force_on_seeded_galleries() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..40 {
            let faces = random_gallery(&mut rng, 20, 5);
            let params = ClusteringParams::default();
            assert_eq!(
                cluster_references(&faces, &params).unwrap(),
                brute_force(&faces, params.tau_p())
            );
        }
    }

    #[test]
    fn reference_matches_oracle_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let faces = random_gallery(&mut rng, 15, 6);
        let params = ClusteringParams::default();
        let oracle = brute_force(&faces, params.tau_p());
        let largest = oracle.iter().map(Vec::len).max().unwrap();
        let candidates: Vec<_> = oracle.iter().filter(|c| c.len() == largest).collect();
        let r = person_reference(&faces, &params).unwrap();
        assert!(candidates.contains(&&r.cluster));
        for d in 0..6 {
            let mean: f64 = r
                .cluster
                .iter()
                .map(|&i| faces[i].values()[d])
                .sum::<f64>()
                / r.cluster.len() as f64;
            assert!((r.vector.values()[d] - mean).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn high_threshold_gives_singletons(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let faces = random_gallery(&mut rng, n, 4);
            let mut max_sim: f64 = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    max_sim = max_sim.max(normalized_cosine(&faces[i], &faces[j]).unwrap());
                }
            }
            prop_assume!(max_sim < 1.0);
            let tau = (max_sim + 1.0) / 2.0;
            let clusters = cluster_references(&faces, &ClusteringParams::new(tau).unwrap()).unwrap();
            prop_assert_eq!(clusters.len(), n);
        }

        #[test]
        fn partition_is_permutation_invariant(seed in any::<u64>(), n in 2usize..14) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let faces = random_gallery(&mut rng, n, 4);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let permuted: Vec<_> = perm.iter().map(|&i| faces[i].clone()).collect();
            let params = ClusteringParams::default();
            let base = cluster_references(&faces, &params).unwrap();
            let mut mapped: Vec<Vec<usize>> = cluster_references(&permuted, &params)
                .unwrap()
                .into_iter()
                .map(|c| {
                    let mut c: Vec<usize> = c.into_iter().map(|i| perm[i]).collect();
                    c.sort_unstable();
                    c
                })
                .collect();
            mapped.sort_by_key(|c| c[0]);
            prop_assert_eq!(&base, &mapped);

            // index tie-breaking is not permutation invariant by definition
            let largest = base.iter().map(Vec::len).max().unwrap();
            prop_assume!(base.iter().filter(|c| c.len() == largest).count() == 1);
            let a = person_reference_vector(&faces, &params).unwrap();
            let b = person_reference_vector(&permuted, &params).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
