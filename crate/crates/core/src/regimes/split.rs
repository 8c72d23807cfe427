use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthetic::{derive_seed, DatasetManifest};

pub const REPS_PER_MOTION: u32 = 18;
pub const TRAIN_REPS: usize = 15;
pub const TEST_REPS: usize = 2;
pub const VAL_REPS: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Role::Train),
            "val" | "validation" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            _ => Err(Error::Config(format!("unknown split role {s:?}"))),
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seeded assignment of repetitions `1..=18` of one subject and motion to
/// 15 train, 2 test and 1 validation repetitions.
pub fn rep_roles(seed: u64, subject: &str, motion: &str) -> BTreeMap<u32, Role> {
    let mut reps: Vec<u32> = (1..=REPS_PER_MOTION).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, fnv1a(subject), fnv1a(motion)]));
    reps.shuffle(&mut rng);
    reps.iter()
        .enumerate()
        .map(|(i, &r)| {
            let role = if i < TRAIN_REPS {
                Role::Train
            } else if i < TRAIN_REPS + TEST_REPS {
                Role::Test
            } else {
                Role::Val
            };
            (r, role)
        })
        .collect()
}

/// Splits `S1_M01_R03` into `("S1", "M01", 3)`.
pub fn parse_trial_id(id: &str) -> Result<(String, String, u32)> {
    let bad = || Error::Data(format!("malformed trial id {id:?}"));
    let mut parts = id.rsplitn(3, '_');
    let rep = parts.next().ok_or_else(bad)?;
    let motion = parts.next().ok_or_else(bad)?;
    let subject = parts.next().ok_or_else(bad)?;
    let rep: u32 = rep.strip_prefix('R').ok_or_else(bad)?.parse().map_err(|_| bad())?;
    Ok((subject.to_string(), motion.to_string(), rep))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub subjects: Vec<String>,
    pub motions: Vec<String>,
    pub held_out_subject: Option<String>,
    pub held_out_motion: Option<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn ids(&self, role: Role) -> &[String] {
        match role {
            Role::Train => &self.train,
            Role::Val => &self.val,
            Role::Test => &self.test,
        }
    }

    pub fn role_of(&self, id: &str) -> Option<Role> {
        [Role::Train, Role::Val, Role::Test]
            .into_iter()
            .find(|r| self.ids(*r).iter().any(|x| x == id))
    }
}

/// Fails with the list of missing `(subject, motion, repetition)` triples.
pub fn check_repetitions(manifest: &DatasetManifest) -> Result<()> {
    let present: BTreeSet<&str> = manifest.trials.iter().map(String::as_str).collect();
    let mut gaps = Vec::new();
    for s in &manifest.subjects {
        for m in &manifest.motions {
            for r in 1..=REPS_PER_MOTION {
                let id = crate::signal::trial_id(s, m, r);
                if !present.contains(id.as_str()) {
                    gaps.push(id);
                }
            }
        }
    }
    if gaps.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingRepetitions(gaps.join(", ")))
    }
}

fn plan_for(
    manifest: &DatasetManifest,
    subjects: Vec<String>,
    held_out_subject: Option<&str>,
    held_out_motion: Option<&str>,
    seed: u64,
) -> Result<SplitPlan> {
    check_repetitions(manifest)?;
    for (what, id, list) in [
        ("subject", held_out_subject, &manifest.subjects),
        ("motion", held_out_motion, &manifest.motions),
    ] {
        if let Some(id) = id {
            if !list.iter().any(|x| x == id) {
                return Err(Error::Config(format!("held-out {what} {id} is not in the dataset")));
            }
        }
    }
    let motions: Vec<String> = manifest
        .motions
        .iter()
        .filter(|m| Some(m.as_str()) != held_out_motion)
        .cloned()
        .collect();
    let mut plan = SplitPlan {
        seed,
        subjects: subjects.clone(),
        motions: motions.clone(),
        held_out_subject: held_out_subject.map(str::to_string),
        held_out_motion: held_out_motion.map(str::to_string),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for s in &subjects {
        for m in &motions {
            for (rep, role) in rep_roles(seed, s, m) {
                let id = crate::signal::trial_id(s, m, rep);
                match role {
                    Role::Train => plan.train.push(id),
                    Role::Val => plan.val.push(id),
                    Role::Test => plan.test.push(id),
                }
            }
        }
    }
    Ok(plan)
}

/// Multi-subject plan without `held_out_subject` and `held_out_motion`.
pub fn make_split(
    manifest: &DatasetManifest,
    held_out_subject: Option<&str>,
    held_out_motion: Option<&str>,
    seed: u64,
) -> Result<SplitPlan> {
    let subjects = manifest
        .subjects
        .iter()
        .filter(|s| Some(s.as_str()) != held_out_subject)
        .cloned()
        .collect();
    plan_for(manifest, subjects, held_out_subject, held_out_motion, seed)
}

/// Plan over one subject's retained motions, with the same repetition
/// assignment as [`make_split`].
pub fn subject_split(manifest: &DatasetManifest, subject: &str, held_out_motion: Option<&str>, seed: u64) -> Result<SplitPlan> {
    if !manifest.subjects.iter().any(|s| s == subject) {
        return Err(Error::Config(format!("subject {subject} is not in the dataset")));
    }
    plan_for(manifest, vec![subject.to_string()], None, held_out_motion, seed)
}

/// Every repetition of `motion` by `subject`.
pub fn motion_trials(manifest: &DatasetManifest, subject: &str, motion: &str) -> Vec<String> {
    (1..=manifest.n_reps)
        .map(|r| crate::signal::trial_id(subject, motion, r))
        .filter(|id| manifest.trials.contains(id))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub groups: usize,
}

/// Checks a plan against its invariants by inspecting every trial id.
pub fn audit_split(plan: &SplitPlan) -> Result<SplitAudit> {
    let fail = |m: String| Err(Error::Invariant(format!("split audit: {m}")));
    let mut seen: BTreeMap<&str, Role> = BTreeMap::new();
    let mut counts: BTreeMap<(String, String), [usize; 3]> = BTreeMap::new();
    for role in [Role::Train, Role::Val, Role::Test] {
        for id in plan.ids(role) {
            if let Some(prev) = seen.insert(id, role) {
                return fail(format!("{id} is in both {prev:?} and {role:?}"));
            }
            let (s, m, _) = parse_trial_id(id)?;
            if plan.held_out_subject.as_deref() == Some(s.as_str()) {
                return fail(format!("{id} belongs to the held-out subject"));
            }
            if plan.held_out_motion.as_deref() == Some(m.as_str()) {
                return fail(format!("{id} belongs to the held-out motion"));
            }
            if !plan.subjects.contains(&s) || !plan.motions.contains(&m) {
                return fail(format!("{id} is outside the plan's subjects or motions"));
            }
            let c = counts.entry((s, m)).or_default();
            c[role as usize] += 1;
        }
    }
    for ((s, m), [train, val, test]) in &counts {
        if (*train, *test, *val) != (TRAIN_REPS, TEST_REPS, VAL_REPS) {
            return fail(format!("{s}/{m} has {train}/{test}/{val} train/test/val repetitions"));
        }
    }
    let groups = plan.subjects.len() * plan.motions.len();
    if counts.len() != groups {
        return fail(format!("{} of {groups} subject/motion groups present", counts.len()));
    }
    Ok(SplitAudit {
        train: plan.train.len(),
        val: plan.val.len(),
        test: plan.test.len(),
        groups,
    })
}
