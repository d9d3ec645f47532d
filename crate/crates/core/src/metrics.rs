//! Frame- and video-level AUC and policy summaries.

use std::collections::BTreeMap;
use std::io::Write;

use crate::augment::{AugOp, AugPolicy};
use crate::error::{CdfaError, Result};
use crate::trainer::EpochLog;

/// One scored frame (or video, after aggregation). `label` is `true` for fake.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub score: f64,
    pub label: bool,
    pub video_id: String,
    pub frame_index: usize,
}

impl ScoredItem {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(CdfaError::Domain(format!(
                "score {} of {}#{} outside [0, 1]",
                self.score, self.video_id, self.frame_index
            )));
        }
        Ok(())
    }
}

/// Area under the ROC curve of scored items.
pub fn auc(items: &[ScoredItem]) -> Result<f64> {
    for it in items {
        it.validate()?;
    }
    let scores: Vec<f64> = items.iter().map(|i| i.score).collect();
    let labels: Vec<bool> = items.iter().map(|i| i.label).collect();
    auc_scores(&scores, &labels)
}

/// Mann-Whitney AUC with midranks for ties, `O(n log n)`.
pub fn auc_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(CdfaError::Dimension(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CdfaError::Domain("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CdfaError::UndefinedMetric(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum keeps midranks integral.
    let mut twice_rank_sum_pos: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2.
        let twice_mid = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum_pos += twice_mid * pos_in_group;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    let twice_u = twice_rank_sum_pos - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

/// One item per video with the mean frame score, ordered by video id.
pub fn video_level_scores(items: &[ScoredItem]) -> Result<Vec<ScoredItem>> {
    if items.is_empty() {
        return Err(CdfaError::InsufficientData("no scored frames".into()));
    }
    let mut acc: BTreeMap<&str, (f64, usize, bool)> = BTreeMap::new();
    for it in items {
        let e = acc.entry(&it.video_id).or_insert((0.0, 0, it.label));
        if e.2 != it.label {
            return Err(CdfaError::DataIntegrity(format!(
                "video {} mixes real and fake frames",
                it.video_id
            )));
        }
        e.0 += it.score;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(vid, (sum, n, label))| ScoredItem {
            score: sum / n as f64,
            label,
            video_id: vid.to_string(),
            frame_index: 0,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucReport {
    pub frame_auc: f64,
    pub video_auc: f64,
    pub n_frames: usize,
    pub n_videos: usize,
}

pub fn evaluate(items: &[ScoredItem]) -> Result<AucReport> {
    let videos = video_level_scores(items)?;
    Ok(AucReport {
        frame_auc: auc(items)?,
        video_auc: auc(&videos)?,
        n_frames: items.len(),
        n_videos: videos.len(),
    })
}

/// Epoch × (p_BI, p_SBI, p_SSBI), taken from the logs as recorded.
pub fn policy_evolution(logs: &[EpochLog]) -> Vec<[f64; AugOp::COUNT]> {
    logs.iter().map(|l| l.mean_policy).collect()
}

/// Mean of a list of policies; `None` for an empty list.
pub fn mean_policy(policies: &[AugPolicy]) -> Option<[f64; AugOp::COUNT]> {
    if policies.is_empty() {
        return None;
    }
    let mut m = [0.0; AugOp::COUNT];
    for p in policies {
        m.iter_mut().zip(p.probs()).for_each(|(a, v)| *a += v);
    }
    Some(m.map(|v| v / policies.len() as f64))
}

pub fn write_scores_csv<W: Write>(out: W, items: &[ScoredItem]) -> Result<()> {
    let err = |e: csv::Error| CdfaError::Usage(format!("writing scores: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["video_id", "frame_index", "label", "score"])
        .map_err(err)?;
    for it in items {
        w.write_record([
            it.video_id.clone(),
            it.frame_index.to_string(),
            u8::from(it.label).to_string(),
            format!("{:.17e}", it.score),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| CdfaError::Usage(format!("writing scores: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pairwise definition: (#concordant + ½ #tied) / (#pos · #neg).
    fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    fn item(video: &str, frame: usize, label: bool, score: f64) -> ScoredItem {
        ScoredItem {
            score,
            label,
            video_id: video.into(),
            frame_index: frame,
        }
    }

    #[test]
    fn small_examples() {
        let perfect = [
            item("a", 0, true, 0.9),
            item("b", 0, true, 0.8),
            item("c", 0, false, 0.3),
            item("d", 0, false, 0.1),
        ];
        assert_eq!(auc(&perfect).unwrap(), 1.0);
        let flipped: Vec<ScoredItem> = perfect
            .iter()
            .map(|i| ScoredItem {
                label: !i.label,
                ..i.clone()
            })
            .collect();
        assert_eq!(auc(&flipped).unwrap(), 0.0);
        let mixed = [
            item("a", 0, true, 0.9),
            item("b", 0, true, 0.4),
            item("c", 0, false, 0.2),
            item("d", 0, false, 0.8),
        ];
        assert_eq!(auc(&mixed).unwrap(), 0.75);
        assert_eq!(
            auc_scores(&[0.5; 4], &[false, true, false, true]).unwrap(),
            0.5
        );
        assert!(matches!(
            auc(&perfect[..2]),
            Err(CdfaError::UndefinedMetric(_))
        ));
        assert!(matches!(
            auc(&[item("a", 0, true, 1.5), item("b", 0, false, 0.1)]),
            Err(CdfaError::Domain(_))
        ));
        assert!(auc_scores(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn rank_auc_equals_pairwise_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..200 {
            let n = rng.gen_range(2..=1000);
            let levels = if case % 2 == 0 { 7 } else { 1_000_000 };
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            let scores: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(0..levels) as f64 / levels as f64)
                .collect();
            assert_eq!(
                auc_scores(&scores, &labels).unwrap(),
                auc_pairwise(&scores, &labels)
            );
        }
    }

    #[test]
    fn video_level_means() {
        let v = video_level_scores(&[
            item("a", 0, false, 0.2),
            item("a", 1, false, 0.4),
            item("a", 2, false, 0.6),
            item("b", 0, true, 0.7),
        ])
        .unwrap();
        assert_eq!(v.len(), 2);
        assert!((v[0].score - 0.4).abs() < 1e-15);
        assert_eq!(v[1].score, 0.7);
        assert!(v[1].label);
        assert!(matches!(
            video_level_scores(&[item("a", 0, false, 0.2), item("a", 1, true, 0.4)]),
            Err(CdfaError::DataIntegrity(_))
        ));
        assert!(video_level_scores(&[]).is_err());
    }

    #[test]
    fn constant_videos_give_equal_frame_and_video_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut items = Vec::new();
        for v in 0..20 {
            let s: f64 = rng.gen();
            let label = v % 3 == 0;
            for f in 0..4 {
                items.push(item(&format!("v{v}"), f, label, s));
            }
        }
        let r = evaluate(&items).unwrap();
        assert_eq!(r.frame_auc, r.video_auc);
        assert_eq!(r.n_videos, 20);
        assert_eq!(r.n_frames, 80);
    }

    #[test]
    fn mean_policy_is_on_the_simplex() {
        let m = mean_policy(&[
            AugPolicy::one_hot(AugOp::Bi),
            AugPolicy::one_hot(AugOp::Ssbi),
        ])
        .unwrap();
        assert_eq!(m, [0.5, 0.0, 0.5]);
        assert_eq!(
            mean_policy(&[AugPolicy::uniform()]).unwrap(),
            [1.0 / 3.0; 3]
        );
        assert!(mean_policy(&[]).is_none());
    }

    #[test]
    fn scores_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &[item("v", 3, true, 0.25)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("video_id,frame_index,label,score\n"));
        assert!(text.contains("v,3,1,2.5"));
    }

    proptest! {
        #[test]
        fn auc_is_invariant_to_monotone_transforms(
            raw in prop::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let s: Vec<f64> = raw.iter().map(|r| r.0 as f64).collect();
            let t: Vec<f64> = s.iter().map(|v| (v * 0.3).exp() - 4.0).collect();
            prop_assert_eq!(auc_scores(&s, &labels).unwrap(), auc_scores(&t, &labels).unwrap());
        }

        #[test]
        fn flipping_labels_complements_auc_without_ties(
            raw in prop::collection::hash_set(0u32..100_000, 2..60),
            seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = raw.into_iter().map(f64::from).collect();
            let mut labels: Vec<bool> = s.iter().map(|_| rng.gen()).collect();
            labels[0] = true;
            labels[1] = false;
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let a = auc_scores(&s, &labels).unwrap();
            prop_assert!((a + auc_scores(&s, &flipped).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
