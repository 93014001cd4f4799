//! Crowd labeling campaigns: images are cut into fixed-size blocks, each
//! block is answered by several distinct volunteers, and the collected
//! 1–5 grades are exported for label aggregation.

pub mod http;
mod plan;
mod store;

pub use plan::{plan_campaign, Campaign, FormPlan, FormStatus};
pub use store::{
    CampaignStatus, CampaignStore, Clock, CompletionReason, ExportReport, GradeInput,
    ImageCompleteness, NextBlock, DEFAULT_LEASE_SECS,
};

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("block larger than campaign: block size {block_size}, {images} images")]
    BlockLargerThanCampaign { block_size: usize, images: usize },
    #[error("invalid campaign: {0}")]
    InvalidCampaign(String),
    #[error("campaign {0} already exists")]
    DuplicateCampaign(String),
    #[error("unknown campaign {0}")]
    UnknownCampaign(String),
    #[error("unknown form {0}")]
    UnknownForm(String),
    #[error("grade out of range for image {image_id}: {grade} (expected 1..=5)")]
    GradeOutOfRange { image_id: String, grade: i64 },
    #[error("incomplete block: {got} of {expected} images graded")]
    IncompleteBlock { got: usize, expected: usize },
    #[error("invalid grades: {0}")]
    InvalidGrades(String),
    #[error("form {form_id} is not leased to {volunteer_id}")]
    LeaseMismatch {
        form_id: String,
        volunteer_id: String,
    },
    #[error("form {0} was already submitted")]
    AlreadySubmitted(String),
    #[error("volunteer id must not be empty")]
    EmptyVolunteer,
    #[error("storage: {0}")]
    Storage(String),
}

impl CampaignError {
    /// Stable machine-readable code, used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            CampaignError::BlockLargerThanCampaign { .. } => "block_larger_than_campaign",
            CampaignError::InvalidCampaign(_) => "invalid_campaign",
            CampaignError::DuplicateCampaign(_) => "duplicate_campaign",
            CampaignError::UnknownCampaign(_) => "unknown_campaign",
            CampaignError::UnknownForm(_) => "unknown_form",
            CampaignError::GradeOutOfRange { .. } => "grade_out_of_range",
            CampaignError::IncompleteBlock { .. } => "incomplete_block",
            CampaignError::InvalidGrades(_) => "invalid_grades",
            CampaignError::LeaseMismatch { .. } => "lease_mismatch",
            CampaignError::AlreadySubmitted(_) => "already_submitted",
            CampaignError::EmptyVolunteer => "invalid_volunteer",
            CampaignError::Storage(_) => "storage",
        }
    }
}
