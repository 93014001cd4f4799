use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use sentifuse_core::dataset::GradeRecord;
use serde::{Deserialize, Serialize};

use crate::plan::{plan_campaign, Campaign, FormPlan, FormStatus};
use crate::CampaignError;

pub const DEFAULT_LEASE_SECS: u64 = 24 * 60 * 60;

/// Source of the current time in seconds since the Unix epoch.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeInput {
    pub image_id: String,
    pub grade: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionReason {
    /// Every form instance has been submitted.
    CampaignComplete,
    /// The volunteer reached the per-volunteer form limit.
    VolunteerLimit,
    /// Open forms remain but each contains an image this volunteer graded.
    NoEligibleForm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextBlock {
    Form {
        campaign_id: String,
        form_id: String,
        images: Vec<String>,
        leased_at: u64,
        lease_expires_at: u64,
    },
    Complete {
        reason: CompletionReason,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCompleteness {
    pub image_id: String,
    pub distinct_raters: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportReport {
    pub campaign_id: String,
    pub min_raters: usize,
    pub grades: Vec<GradeRecord>,
    pub images: Vec<ImageCompleteness>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignStatus {
    pub campaign_id: String,
    pub forms_total: usize,
    pub open: usize,
    pub in_progress: usize,
    pub submitted: usize,
    pub images_total: usize,
    pub images_complete: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    CampaignCreated {
        campaign: Campaign,
        at: u64,
    },
    Leased {
        campaign_id: String,
        form_id: String,
        volunteer_id: String,
        at: u64,
    },
    Submitted {
        campaign_id: String,
        form_id: String,
        volunteer_id: String,
        grades: Vec<(String, u8)>,
        at: u64,
    },
}

#[derive(Debug)]
struct CampaignState {
    campaign: Campaign,
    forms: Vec<FormPlan>,
    form_index: HashMap<String, usize>,
    grades: Vec<GradeRecord>,
    /// Images each volunteer has submitted grades for.
    graded: HashMap<String, HashSet<String>>,
}

impl CampaignState {
    fn new(campaign: Campaign) -> Result<Self, CampaignError> {
        let forms = plan_campaign(&campaign)?;
        let form_index = forms
            .iter()
            .enumerate()
            .map(|(i, f)| (f.form_id.clone(), i))
            .collect();
        Ok(CampaignState {
            campaign,
            forms,
            form_index,
            grades: Vec::new(),
            graded: HashMap::new(),
        })
    }

    fn expire_leases(&mut self, now: u64, lease_secs: u64) {
        for f in &mut self.forms {
            if f.status == FormStatus::InProgress
                && f.leased_at
                    .is_some_and(|t| now >= t.saturating_add(lease_secs))
            {
                f.status = FormStatus::Open;
                f.assigned_volunteer = None;
                f.leased_at = None;
            }
        }
    }

    fn held_by(&self, volunteer: &str) -> Option<usize> {
        self.forms.iter().position(|f| {
            f.status == FormStatus::InProgress && f.assigned_volunteer.as_deref() == Some(volunteer)
        })
    }

    fn forms_taken(&self, volunteer: &str) -> usize {
        self.forms
            .iter()
            .filter(|f| {
                f.status != FormStatus::Open && f.assigned_volunteer.as_deref() == Some(volunteer)
            })
            .count()
    }
}

struct Inner {
    campaigns: BTreeMap<String, CampaignState>,
    form_owner: HashMap<String, String>,
    log: Option<File>,
}

impl Inner {
    fn apply(&mut self, event: Event, lease_secs: u64) -> Result<(), CampaignError> {
        match event {
            Event::CampaignCreated { campaign, .. } => {
                let state = CampaignState::new(campaign)?;
                let id = state.campaign.campaign_id.clone();
                for f in &state.forms {
                    self.form_owner.insert(f.form_id.clone(), id.clone());
                }
                self.campaigns.insert(id, state);
            }
            Event::Leased {
                campaign_id,
                form_id,
                volunteer_id,
                at,
            } => {
                let state = self.state_mut(&campaign_id)?;
                state.expire_leases(at, lease_secs);
                let i = state.form_index[&form_id];
                let f = &mut state.forms[i];
                f.status = FormStatus::InProgress;
                f.assigned_volunteer = Some(volunteer_id);
                f.leased_at = Some(at);
            }
            Event::Submitted {
                campaign_id,
                form_id,
                volunteer_id,
                grades,
                at,
            } => {
                let state = self.state_mut(&campaign_id)?;
                state.expire_leases(at, lease_secs);
                let i = state.form_index[&form_id];
                state.forms[i].status = FormStatus::Submitted;
                let seen = state.graded.entry(volunteer_id.clone()).or_default();
                for (image_id, grade) in grades {
                    seen.insert(image_id.clone());
                    state.grades.push(GradeRecord {
                        image_id,
                        volunteer_id: volunteer_id.clone(),
                        grade,
                        form_id: form_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn state_mut(&mut self, campaign_id: &str) -> Result<&mut CampaignState, CampaignError> {
        self.campaigns
            .get_mut(campaign_id)
            .ok_or_else(|| CampaignError::UnknownCampaign(campaign_id.to_string()))
    }

    fn state(&self, campaign_id: &str) -> Result<&CampaignState, CampaignError> {
        self.campaigns
            .get(campaign_id)
            .ok_or_else(|| CampaignError::UnknownCampaign(campaign_id.to_string()))
    }

    /// Appends the event to the log (when persistent), then applies it.
    fn commit(&mut self, event: Event, lease_secs: u64) -> Result<(), CampaignError> {
        if let Some(log) = &mut self.log {
            let mut line =
                serde_json::to_vec(&event).map_err(|e| CampaignError::Storage(e.to_string()))?;
            line.push(b'\n');
            log.write_all(&line)
                .and_then(|_| log.sync_data())
                .map_err(|e| CampaignError::Storage(e.to_string()))?;
        }
        self.apply(event, lease_secs)
    }
}

/// Campaign state shared by all request handlers. Every state transition
/// runs under one lock, so a form instance is never leased twice.
///
/// A persistent store keeps an append-only JSON-lines event log in a
/// single file and rebuilds its state by replaying it on open.
pub struct CampaignStore {
    inner: Mutex<Inner>,
    clock: Clock,
    lease_secs: u64,
}

impl std::fmt::Debug for CampaignStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CampaignStore")
            .field("lease_secs", &self.lease_secs)
            .finish_non_exhaustive()
    }
}

impl Default for CampaignStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl CampaignStore {
    pub fn in_memory() -> Self {
        CampaignStore {
            inner: Mutex::new(Inner {
                campaigns: BTreeMap::new(),
                form_owner: HashMap::new(),
                log: None,
            }),
            clock: system_clock(),
            lease_secs: DEFAULT_LEASE_SECS,
        }
    }

    /// Opens (or creates) the event log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CampaignError> {
        Self::open_with(path, DEFAULT_LEASE_SECS, system_clock())
    }

    pub fn open_with(
        path: impl AsRef<Path>,
        lease_secs: u64,
        clock: Clock,
    ) -> Result<Self, CampaignError> {
        let path = path.as_ref();
        let storage =
            |e: std::io::Error| CampaignError::Storage(format!("{}: {e}", path.display()));
        let mut inner = Inner {
            campaigns: BTreeMap::new(),
            form_owner: HashMap::new(),
            log: None,
        };
        let mut valid_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(storage)?);
            for (n, line) in reader.split(b'\n').enumerate() {
                let line = line.map_err(storage)?;
                match serde_json::from_slice::<Event>(&line) {
                    Ok(event) => {
                        inner.apply(event, lease_secs)?;
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(_) if line.iter().all(u8::is_ascii_whitespace) => {
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(e) => {
                        // A torn final write is dropped; anything else is corruption.
                        let total = std::fs::metadata(path).map_err(storage)?.len();
                        if valid_len + line.len() as u64 >= total {
                            break;
                        }
                        return Err(CampaignError::Storage(format!(
                            "{} line {}: {e}",
                            path.display(),
                            n + 1
                        )));
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(storage)?;
        let len = file.metadata().map_err(storage)?.len();
        if valid_len.min(len) < len {
            file.set_len(valid_len.min(len)).map_err(storage)?;
        }
        let mut file = file;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::End(0)).map_err(storage)?;
        inner.log = Some(file);
        Ok(CampaignStore {
            inner: Mutex::new(inner),
            clock,
            lease_secs,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_lease_secs(mut self, secs: u64) -> Self {
        self.lease_secs = secs;
        self
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn create_campaign(&self, campaign: Campaign) -> Result<CampaignStatus, CampaignError> {
        campaign.validate()?;
        let mut inner = self.lock();
        if inner.campaigns.contains_key(&campaign.campaign_id) {
            return Err(CampaignError::DuplicateCampaign(campaign.campaign_id));
        }
        let id = campaign.campaign_id.clone();
        let at = (self.clock)();
        inner.commit(Event::CampaignCreated { campaign, at }, self.lease_secs)?;
        Ok(status_of(inner.state(&id)?))
    }

    pub fn campaign_ids(&self) -> Vec<String> {
        self.lock().campaigns.keys().cloned().collect()
    }

    pub fn forms(&self, campaign_id: &str) -> Result<Vec<FormPlan>, CampaignError> {
        let mut inner = self.lock();
        let now = (self.clock)();
        let state = inner.state_mut(campaign_id)?;
        state.expire_leases(now, self.lease_secs);
        Ok(state.forms.clone())
    }

    /// Leases the next eligible form to `volunteer_id`. A volunteer who
    /// already holds a live lease gets that same form back.
    pub fn next_block(
        &self,
        campaign_id: &str,
        volunteer_id: &str,
    ) -> Result<NextBlock, CampaignError> {
        if volunteer_id.is_empty() {
            return Err(CampaignError::EmptyVolunteer);
        }
        let mut inner = self.lock();
        let now = (self.clock)();
        let lease_secs = self.lease_secs;
        let state = inner.state_mut(campaign_id)?;
        state.expire_leases(now, lease_secs);
        let form_view = |f: &FormPlan| {
            let at = f.leased_at.unwrap_or(now);
            NextBlock::Form {
                campaign_id: campaign_id.to_string(),
                form_id: f.form_id.clone(),
                images: f.images.clone(),
                leased_at: at,
                lease_expires_at: at.saturating_add(lease_secs),
            }
        };
        if let Some(i) = state.held_by(volunteer_id) {
            return Ok(form_view(&state.forms[i]));
        }
        if state
            .forms
            .iter()
            .all(|f| f.status == FormStatus::Submitted)
        {
            return Ok(NextBlock::Complete {
                reason: CompletionReason::CampaignComplete,
            });
        }
        if state.forms_taken(volunteer_id) >= state.campaign.forms_per_volunteer {
            return Ok(NextBlock::Complete {
                reason: CompletionReason::VolunteerLimit,
            });
        }
        let graded = state.graded.get(volunteer_id);
        let Some(i) = state.forms.iter().position(|f| {
            f.status == FormStatus::Open
                && graded.is_none_or(|g| f.images.iter().all(|img| !g.contains(img)))
        }) else {
            return Ok(NextBlock::Complete {
                reason: CompletionReason::NoEligibleForm,
            });
        };
        let form_id = state.forms[i].form_id.clone();
        inner.commit(
            Event::Leased {
                campaign_id: campaign_id.to_string(),
                form_id,
                volunteer_id: volunteer_id.to_string(),
                at: now,
            },
            lease_secs,
        )?;
        let state = inner.state(campaign_id)?;
        Ok(form_view(&state.forms[i]))
    }

    /// Records a full block of grades. Returns the number of grades stored.
    pub fn submit_grades(
        &self,
        form_id: &str,
        volunteer_id: &str,
        grades: &[GradeInput],
    ) -> Result<usize, CampaignError> {
        let mut inner = self.lock();
        let now = (self.clock)();
        let lease_secs = self.lease_secs;
        let campaign_id = inner
            .form_owner
            .get(form_id)
            .cloned()
            .ok_or_else(|| CampaignError::UnknownForm(form_id.to_string()))?;
        let state = inner.state_mut(&campaign_id)?;
        state.expire_leases(now, lease_secs);
        let form = &state.forms[state.form_index[form_id]];
        match form.status {
            FormStatus::Submitted => {
                return Err(CampaignError::AlreadySubmitted(form_id.to_string()))
            }
            FormStatus::InProgress if form.assigned_volunteer.as_deref() == Some(volunteer_id) => {}
            _ => {
                return Err(CampaignError::LeaseMismatch {
                    form_id: form_id.to_string(),
                    volunteer_id: volunteer_id.to_string(),
                })
            }
        }
        if let Some(bad) = grades.iter().find(|g| !(1..=5).contains(&g.grade)) {
            return Err(CampaignError::GradeOutOfRange {
                image_id: bad.image_id.clone(),
                grade: bad.grade,
            });
        }
        let mut by_image: HashMap<&str, u8> = HashMap::new();
        for g in grades {
            if !form.images.contains(&g.image_id) {
                return Err(CampaignError::InvalidGrades(format!(
                    "image {} is not part of form {form_id}",
                    g.image_id
                )));
            }
            if by_image.insert(&g.image_id, g.grade as u8).is_some() {
                return Err(CampaignError::InvalidGrades(format!(
                    "image {} graded twice",
                    g.image_id
                )));
            }
        }
        if by_image.len() != form.images.len() {
            return Err(CampaignError::IncompleteBlock {
                got: by_image.len(),
                expected: form.images.len(),
            });
        }
        let ordered: Vec<(String, u8)> = form
            .images
            .iter()
            .map(|img| (img.clone(), by_image[img.as_str()]))
            .collect();
        let n = ordered.len();
        inner.commit(
            Event::Submitted {
                campaign_id,
                form_id: form_id.to_string(),
                volunteer_id: volunteer_id.to_string(),
                grades: ordered,
                at: now,
            },
            lease_secs,
        )?;
        Ok(n)
    }

    pub fn status(&self, campaign_id: &str) -> Result<CampaignStatus, CampaignError> {
        let mut inner = self.lock();
        let now = (self.clock)();
        let state = inner.state_mut(campaign_id)?;
        state.expire_leases(now, self.lease_secs);
        Ok(status_of(state))
    }

    /// All grades in submission order plus per-image rater counts.
    pub fn export(&self, campaign_id: &str) -> Result<ExportReport, CampaignError> {
        let inner = self.lock();
        let state = inner.state(campaign_id)?;
        let images = completeness(state);
        Ok(ExportReport {
            campaign_id: campaign_id.to_string(),
            min_raters: state.campaign.min_raters,
            grades: state.grades.clone(),
            complete: images.iter().all(|i| i.complete),
            images,
        })
    }
}

fn completeness(state: &CampaignState) -> Vec<ImageCompleteness> {
    let mut raters: HashMap<&str, HashSet<&str>> = HashMap::new();
    for g in &state.grades {
        raters
            .entry(g.image_id.as_str())
            .or_default()
            .insert(g.volunteer_id.as_str());
    }
    state
        .campaign
        .image_ids
        .iter()
        .map(|id| {
            let n = raters.get(id.as_str()).map_or(0, HashSet::len);
            ImageCompleteness {
                image_id: id.clone(),
                distinct_raters: n,
                complete: n >= state.campaign.min_raters,
            }
        })
        .collect()
}

fn status_of(state: &CampaignState) -> CampaignStatus {
    let count = |s: FormStatus| state.forms.iter().filter(|f| f.status == s).count();
    let images = completeness(state);
    let images_complete = images.iter().filter(|i| i.complete).count();
    CampaignStatus {
        campaign_id: state.campaign.campaign_id.clone(),
        forms_total: state.forms.len(),
        open: count(FormStatus::Open),
        in_progress: count(FormStatus::InProgress),
        submitted: count(FormStatus::Submitted),
        images_total: images.len(),
        images_complete,
        complete: images_complete == images.len(),
    }
}
