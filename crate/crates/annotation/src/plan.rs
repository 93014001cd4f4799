use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CampaignError;

fn default_block_size() -> usize {
    15
}

fn default_min_raters() -> usize {
    5
}

fn default_forms_per_volunteer() -> usize {
    15
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: String,
    pub image_ids: Vec<String>,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_min_raters")]
    pub min_raters: usize,
    /// Upper bound on the forms one volunteer may take.
    #[serde(default = "default_forms_per_volunteer")]
    pub forms_per_volunteer: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Campaign {
    pub fn new(campaign_id: impl Into<String>, image_ids: Vec<String>, seed: u64) -> Self {
        Campaign {
            campaign_id: campaign_id.into(),
            image_ids,
            block_size: default_block_size(),
            min_raters: default_min_raters(),
            forms_per_volunteer: default_forms_per_volunteer(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let invalid = |m: &str| Err(CampaignError::InvalidCampaign(m.to_string()));
        if self.campaign_id.is_empty() {
            return invalid("empty campaign id");
        }
        if self.image_ids.is_empty() {
            return invalid("no images");
        }
        if self.block_size == 0 || self.min_raters == 0 || self.forms_per_volunteer == 0 {
            return invalid("block_size, min_raters and forms_per_volunteer must be at least 1");
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.image_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(CampaignError::InvalidCampaign(format!(
                "image {dup} listed twice"
            )));
        }
        if self.block_size > self.image_ids.len() {
            return Err(CampaignError::BlockLargerThanCampaign {
                block_size: self.block_size,
                images: self.image_ids.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormStatus {
    Open,
    InProgress,
    Submitted,
}

/// One form instance: a block of images to be answered by one volunteer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormPlan {
    pub form_id: String,
    pub block: usize,
    pub replica: usize,
    pub images: Vec<String>,
    pub assigned_volunteer: Option<String>,
    pub status: FormStatus,
    /// Lease start, seconds since the Unix epoch.
    pub leased_at: Option<u64>,
}

/// Shuffles the images with the campaign seed, cuts them into blocks of
/// `block_size` (the last may be shorter) and replicates every block
/// `min_raters` times. Instances are ordered replica by replica so that
/// early volunteers spread over distinct blocks.
pub fn plan_campaign(campaign: &Campaign) -> Result<Vec<FormPlan>, CampaignError> {
    campaign.validate()?;
    let mut images = campaign.image_ids.clone();
    images.shuffle(&mut ChaCha8Rng::seed_from_u64(campaign.seed));
    let blocks: Vec<&[String]> = images.chunks(campaign.block_size).collect();
    let mut forms = Vec::with_capacity(blocks.len() * campaign.min_raters);
    for replica in 0..campaign.min_raters {
        for (b, block) in blocks.iter().enumerate() {
            forms.push(FormPlan {
                form_id: format!("{}-b{b:04}-r{replica:02}", campaign.campaign_id),
                block: b,
                replica,
                images: block.to_vec(),
                assigned_volunteer: None,
                status: FormStatus::Open,
                leased_at: None,
            });
        }
    }
    Ok(forms)
}
