use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::record::{GestureSample, RecordKey, SessionKey};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    /// Per-subject: two thirds of the target's sessions train, the rest test.
    Ps,
    /// Leave-one-subject-out.
    Loso,
    /// Leave-one-subject-out plus one session of the target in training.
    Aos,
}

impl SplitMethod {
    pub const ALL: [SplitMethod; 3] = [SplitMethod::Ps, SplitMethod::Loso, SplitMethod::Aos];

    pub fn name(self) -> &'static str {
        match self {
            SplitMethod::Ps => "ps",
            SplitMethod::Loso => "loso",
            SplitMethod::Aos => "aos",
        }
    }
}

impl fmt::Display for SplitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ps" => Ok(SplitMethod::Ps),
            "loso" => Ok(SplitMethod::Loso),
            "aos" => Ok(SplitMethod::Aos),
            other => Err(Error::Argument(format!("unknown split method {other:?}"))),
        }
    }
}

/// Which sessions train and test, and which training recordings are held out
/// for validation. Validation is carved at recording level so all
/// augmentation phases of one recording stay on the same side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub method: SplitMethod,
    pub target: String,
    pub train_sessions: BTreeSet<SessionKey>,
    pub test_sessions: BTreeSet<SessionKey>,
    pub val_records: BTreeSet<RecordKey>,
    pub val_fraction: f64,
    pub seed: u64,
}

/// Samples partitioned by a [`SplitPlan`].
#[derive(Debug, Clone, Default)]
pub struct SplitData {
    pub train: Vec<GestureSample>,
    pub val: Vec<GestureSample>,
    pub test: Vec<GestureSample>,
}

pub fn make_split(
    keys: &[RecordKey],
    method: SplitMethod,
    target: &str,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitPlan> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Argument(format!("val_fraction {val_fraction} must lie in (0, 1)")));
    }
    let mut sessions: BTreeMap<&str, BTreeSet<u8>> = BTreeMap::new();
    for k in keys {
        sessions.entry(k.subject.as_str()).or_default().insert(k.session);
    }
    let Some(target_sessions) = sessions.get(target) else {
        return Err(Error::Argument(format!(
            "unknown target {target:?}; subjects present: {:?}",
            sessions.keys().collect::<Vec<_>>()
        )));
    };
    let target_sessions: Vec<u8> = target_sessions.iter().copied().collect();
    let sk = |subject: &str, session: u8| SessionKey { subject: subject.to_string(), session };
    let others: BTreeSet<SessionKey> = sessions
        .iter()
        .filter(|(s, _)| **s != target)
        .flat_map(|(s, set)| set.iter().map(move |&n| sk(s, n)))
        .collect();

    let (train_sessions, test_sessions) = match method {
        SplitMethod::Ps => {
            if target_sessions.len() < 2 {
                return Err(Error::Argument(format!("target {target:?} needs at least 2 sessions for PS")));
            }
            // 6 of 9 sessions for the full dataset
            let n_train = ((target_sessions.len() * 2) as f64 / 3.0).round() as usize;
            let n_train = n_train.clamp(1, target_sessions.len() - 1);
            let train = target_sessions[..n_train].iter().map(|&n| sk(target, n)).collect();
            let test = target_sessions[n_train..].iter().map(|&n| sk(target, n)).collect();
            (train, test)
        }
        SplitMethod::Loso | SplitMethod::Aos => {
            if others.is_empty() {
                return Err(Error::Argument(format!("{method} needs at least two subjects")));
            }
            let mut train = others;
            let mut test: BTreeSet<SessionKey> = target_sessions.iter().map(|&n| sk(target, n)).collect();
            if method == SplitMethod::Aos {
                if target_sessions.len() < 2 {
                    return Err(Error::Argument(format!("target {target:?} needs at least 2 sessions for AOS")));
                }
                let added = sk(target, target_sessions[0]);
                test.remove(&added);
                train.insert(added);
            }
            (train, test)
        }
    };

    // stratified recording-level validation hold-out
    let mut by_class: BTreeMap<_, Vec<&RecordKey>> = BTreeMap::new();
    for k in keys.iter().filter(|k| train_sessions.contains(&k.session_key())) {
        by_class.entry(k.label).or_default().push(k);
    }
    let mut val_records = BTreeSet::new();
    let mut stream = rng::stream(seed, &[rng::hash_str("validation")]);
    for (_, mut recs) in by_class {
        recs.sort();
        recs.dedup();
        recs.shuffle(&mut stream);
        let n = recs.len();
        let mut n_val = (n as f64 * val_fraction).round() as usize;
        if n >= 2 {
            n_val = n_val.clamp(1, n - 1);
        } else {
            n_val = 0;
        }
        val_records.extend(recs[..n_val].iter().map(|k| (*k).clone()));
    }

    Ok(SplitPlan {
        method,
        target: target.to_string(),
        train_sessions,
        test_sessions,
        val_records,
        val_fraction,
        seed,
    })
}

impl SplitPlan {
    pub fn apply(&self, samples: Vec<GestureSample>) -> SplitData {
        let mut data = SplitData::default();
        for s in samples {
            let sess = s.key.session_key();
            if self.test_sessions.contains(&sess) {
                data.test.push(s);
            } else if self.train_sessions.contains(&sess) {
                if self.val_records.contains(&s.key) {
                    data.val.push(s);
                } else {
                    data.train.push(s);
                }
            }
        }
        data
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: SplitPlan = serde_json::from_str(text)?;
        if !plan.train_sessions.is_disjoint(&plan.test_sessions) {
            return Err(Error::Argument("split plan has sessions in both train and test".into()));
        }
        if plan.val_records.iter().any(|k| !plan.train_sessions.contains(&k.session_key())) {
            return Err(Error::Argument("validation recording outside the training sessions".into()));
        }
        Ok(plan)
    }
}
