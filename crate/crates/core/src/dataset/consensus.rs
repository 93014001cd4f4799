use std::collections::BTreeMap;

use super::{DatasetError, SentimentLabel};

/// Images retained at a consensus level, with the agreed label.
pub type ConsensusSubset = BTreeMap<String, SentimentLabel>;

const VOTES_PER_IMAGE: usize = 5;

/// Selects the images whose five binary votes contain at least `k` equal
/// labels. Subsets for increasing `k` are nested.
pub fn consensus_subset(
    votes: &BTreeMap<String, Vec<SentimentLabel>>,
    k: usize,
) -> Result<ConsensusSubset, DatasetError> {
    if !(3..=VOTES_PER_IMAGE).contains(&k) {
        return Err(DatasetError::ConsensusLevel(k));
    }
    let mut out = ConsensusSubset::new();
    for (image_id, vs) in votes {
        if vs.len() != VOTES_PER_IMAGE {
            return Err(DatasetError::MalformedVotes {
                image_id: image_id.clone(),
                detail: format!("{} votes (expected {VOTES_PER_IMAGE})", vs.len()),
            });
        }
        let mut positive = 0;
        for v in vs {
            match v {
                SentimentLabel::Positive => positive += 1,
                SentimentLabel::Negative => {}
                SentimentLabel::Neutral => {
                    return Err(DatasetError::MalformedVotes {
                        image_id: image_id.clone(),
                        detail: "neutral vote in binary record".into(),
                    })
                }
            }
        }
        let negative = VOTES_PER_IMAGE - positive;
        if positive >= k {
            out.insert(image_id.clone(), SentimentLabel::Positive);
        } else if negative >= k {
            out.insert(image_id.clone(), SentimentLabel::Negative);
        }
    }
    Ok(out)
}
