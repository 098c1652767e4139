//! Train/test plans ordered, interleaved or shuffled by item parameter,
//! always stratified by class.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::InstanceId;
use crate::error::{Error, Result};
use crate::irt::ItemParameters;
use crate::rng::{rng_from_seed, shuffle};

pub const DEFAULT_TRAIN_RATIO: f64 = 0.7;
/// Within every window of this many sorted instances ...
pub const BALANCE_WINDOW: usize = 10;
/// ... these offsets go to the test set.
pub const BALANCE_TEST_OFFSETS: [usize; 3] = [3, 6, 9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    Discrimination,
    Difficulty,
    Guessing,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Discrimination, Param::Difficulty, Param::Guessing];

    pub fn prefix(self) -> &'static str {
        match self {
            Param::Discrimination => "Dis",
            Param::Difficulty => "Dif",
            Param::Guessing => "Gues",
        }
    }

    pub fn of(self, item: &ItemParameters) -> f64 {
        match self {
            Param::Discrimination => item.discrimination,
            Param::Difficulty => item.difficulty,
            Param::Guessing => item.guessing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Train on the lowest values, test on the highest.
    MinMax,
    MaxMin,
    Balanced,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::MinMax, Mode::MaxMin, Mode::Balanced];

    fn suffix(self) -> &'static str {
        match self {
            Mode::MinMax => "min_max",
            Mode::MaxMin => "max_min",
            Mode::Balanced => "balanced",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PartitionStrategy {
    ByParam(Param, Mode),
    Random(u64),
}

impl fmt::Display for PartitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionStrategy::ByParam(p, m) => write!(f, "{}_{}", p.prefix(), m.suffix()),
            PartitionStrategy::Random(seed) => write!(f, "Random_{seed}"),
        }
    }
}

impl FromStr for PartitionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::InvalidData(format!("unknown partition strategy {s:?}"));
        if let Some(seed) = s.strip_prefix("Random_") {
            return seed.parse().map(PartitionStrategy::Random).map_err(|_| unknown());
        }
        let (prefix, suffix) = s.split_once('_').ok_or_else(unknown)?;
        let param = Param::ALL.into_iter().find(|p| p.prefix() == prefix).ok_or_else(unknown)?;
        let mode = Mode::ALL.into_iter().find(|m| m.suffix() == suffix).ok_or_else(unknown)?;
        Ok(PartitionStrategy::ByParam(param, mode))
    }
}

impl TryFrom<String> for PartitionStrategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PartitionStrategy> for String {
    fn from(s: PartitionStrategy) -> String {
        s.to_string()
    }
}

/// The twelve strategies: each parameter in min_max, max_min, balanced
/// order, then three random splits.
pub fn enumerate_strategies() -> Vec<PartitionStrategy> {
    let mut out: Vec<PartitionStrategy> = Param::ALL
        .into_iter()
        .flat_map(|p| Mode::ALL.into_iter().map(move |m| PartitionStrategy::ByParam(p, m)))
        .collect();
    out.extend((0..3).map(PartitionStrategy::Random));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    Train,
    Test,
}

impl Assignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Assignment::Train => "train",
            Assignment::Test => "test",
        }
    }
}

/// Why an instance landed where it did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub instance_id: InstanceId,
    /// Parameter value used for ordering (absent for random splits).
    pub value: Option<f64>,
    pub label: u8,
    /// Position within its class in the order the rule walked.
    pub rank: usize,
    pub assignment: Assignment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub strategy: PartitionStrategy,
    pub ratio: f64,
    pub train_ids: Vec<InstanceId>,
    pub test_ids: Vec<InstanceId>,
    /// One entry per instance, in input order.
    pub provenance: Vec<Provenance>,
}

impl PartitionPlan {
    /// Assignment per instance in input order.
    pub fn assignments(&self) -> Vec<Assignment> {
        self.provenance.iter().map(|p| p.assignment).collect()
    }

    /// Input positions of the training and test instances.
    pub fn indices(&self) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, p) in self.provenance.iter().enumerate() {
            match p.assignment {
                Assignment::Train => train.push(i),
                Assignment::Test => test.push(i),
            }
        }
        (train, test)
    }
}

/// `round(ratio * n)` with halves rounded up.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64 + 0.5 + 1e-9).floor() as usize).min(n)
}

struct Member {
    index: usize,
    id: InstanceId,
    value: f64,
}

fn lookup_values(ids: &[InstanceId], items: &[ItemParameters], param: Param) -> Result<Vec<f64>> {
    let by_id: HashMap<InstanceId, &ItemParameters> = items.iter().map(|p| (p.item_id, p)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .map(|p| param.of(p))
                .ok_or_else(|| Error::InvalidData(format!("no item parameters for instance {id}")))
        })
        .collect()
}

fn check_lengths(ids: &[InstanceId], labels: &[u8]) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            got: labels.len(),
        });
    }
    Ok(())
}

/// Per class (0 then 1), members sorted ascending by `(value, id)`.
fn sorted_classes(ids: &[InstanceId], labels: &[u8], values: &[f64]) -> [Vec<Member>; 2] {
    let mut classes: [Vec<Member>; 2] = [Vec::new(), Vec::new()];
    for (index, (&id, &label)) in ids.iter().zip(labels).enumerate() {
        classes[usize::from(label)].push(Member {
            index,
            id,
            value: values[index],
        });
    }
    for class in &mut classes {
        class.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.id.cmp(&b.id)));
    }
    classes
}

fn assemble(
    strategy: PartitionStrategy,
    ratio: f64,
    ids: &[InstanceId],
    labels: &[u8],
    walked: [Vec<(Member, Assignment)>; 2],
    with_values: bool,
) -> PartitionPlan {
    let mut provenance: Vec<Option<Provenance>> = vec![None; ids.len()];
    for (label, class) in walked.into_iter().enumerate() {
        for (rank, (m, assignment)) in class.into_iter().enumerate() {
            provenance[m.index] = Some(Provenance {
                instance_id: m.id,
                value: with_values.then_some(m.value),
                label: label as u8,
                rank,
                assignment,
            });
        }
    }
    let provenance: Vec<Provenance> = provenance.into_iter().map(|p| p.expect("every instance walked")).collect();
    debug_assert!(provenance.iter().zip(labels).all(|(p, &l)| p.label == l));
    let pick = |a: Assignment| provenance.iter().filter(|p| p.assignment == a).map(|p| p.instance_id).collect();
    PartitionPlan {
        strategy,
        ratio,
        train_ids: pick(Assignment::Train),
        test_ids: pick(Assignment::Test),
        provenance,
    }
}

/// Per class, the first `round(ratio * n_c)` instances in parameter order go
/// to train: ascending for min_max, descending for max_min. Equal values are
/// always taken in ascending instance-id order.
pub fn split_ordered(
    ids: &[InstanceId],
    labels: &[u8],
    items: &[ItemParameters],
    param: Param,
    descending: bool,
    ratio: f64,
) -> Result<PartitionPlan> {
    check_lengths(ids, labels)?;
    let values = lookup_values(ids, items, param)?;
    let walked = sorted_classes(ids, labels, &values).map(|mut class| {
        if descending {
            class.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.id.cmp(&b.id)));
        }
        let t = train_count(class.len(), ratio);
        class
            .into_iter()
            .enumerate()
            .map(|(r, m)| (m, if r < t { Assignment::Train } else { Assignment::Test }))
            .collect()
    });
    let mode = if descending { Mode::MaxMin } else { Mode::MinMax };
    Ok(assemble(PartitionStrategy::ByParam(param, mode), ratio, ids, labels, walked, true))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Per class, walks the ascending order in windows of ten and sends offsets
/// 3, 6 and 9 of each window to test. If that misses `round(ratio * n_c)`,
/// single instances are moved from the larger-than-target side to the other,
/// each time the one whose value is closest to the receiving side's median
/// (lowest instance id on ties).
pub fn split_balanced(
    ids: &[InstanceId],
    labels: &[u8],
    items: &[ItemParameters],
    param: Param,
    ratio: f64,
) -> Result<PartitionPlan> {
    check_lengths(ids, labels)?;
    let values = lookup_values(ids, items, param)?;
    let walked = sorted_classes(ids, labels, &values).map(|class| {
        let target = train_count(class.len(), ratio);
        let mut walked: Vec<(Member, Assignment)> = class
            .into_iter()
            .enumerate()
            .map(|(r, m)| {
                let a = if BALANCE_TEST_OFFSETS.contains(&(r % BALANCE_WINDOW)) {
                    Assignment::Test
                } else {
                    Assignment::Train
                };
                (m, a)
            })
            .collect();
        loop {
            let n_train = walked.iter().filter(|(_, a)| *a == Assignment::Train).count();
            let (from, to) = match n_train.cmp(&target) {
                std::cmp::Ordering::Equal => break,
                std::cmp::Ordering::Greater => (Assignment::Train, Assignment::Test),
                std::cmp::Ordering::Less => (Assignment::Test, Assignment::Train),
            };
            let centre = median(walked.iter().filter(|(_, a)| *a == to).map(|(m, _)| m.value).collect());
            let mover = walked
                .iter()
                .enumerate()
                .filter(|(_, (_, a))| *a == from)
                .min_by(|(_, (x, _)), (_, (y, _))| {
                    (x.value - centre)
                        .abs()
                        .total_cmp(&(y.value - centre).abs())
                        .then(x.id.cmp(&y.id))
                })
                .map(|(k, _)| k)
                .expect("the larger side is non-empty");
            walked[mover].1 = to;
        }
        walked
    });
    Ok(assemble(
        PartitionStrategy::ByParam(param, Mode::Balanced),
        ratio,
        ids,
        labels,
        walked,
        true,
    ))
}

/// Per class (negatives first), a seeded shuffle of the members in input
/// order; the first `round(ratio * n_c)` go to train.
pub fn split_random(ids: &[InstanceId], labels: &[u8], seed: u64, ratio: f64) -> Result<PartitionPlan> {
    check_lengths(ids, labels)?;
    let mut rng = rng_from_seed(seed);
    let mut classes: [Vec<Member>; 2] = [Vec::new(), Vec::new()];
    for (index, (&id, &label)) in ids.iter().zip(labels).enumerate() {
        classes[usize::from(label)].push(Member { index, id, value: 0.0 });
    }
    let walked = classes.map(|mut class| {
        shuffle(&mut rng, &mut class);
        let t = train_count(class.len(), ratio);
        class
            .into_iter()
            .enumerate()
            .map(|(r, m)| (m, if r < t { Assignment::Train } else { Assignment::Test }))
            .collect()
    });
    Ok(assemble(PartitionStrategy::Random(seed), ratio, ids, labels, walked, false))
}

pub fn build_plan(
    strategy: PartitionStrategy,
    ids: &[InstanceId],
    labels: &[u8],
    items: &[ItemParameters],
    ratio: f64,
) -> Result<PartitionPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Precondition(format!("train ratio {ratio} outside (0, 1)")));
    }
    match strategy {
        PartitionStrategy::ByParam(p, Mode::MinMax) => split_ordered(ids, labels, items, p, false, ratio),
        PartitionStrategy::ByParam(p, Mode::MaxMin) => split_ordered(ids, labels, items, p, true, ratio),
        PartitionStrategy::ByParam(p, Mode::Balanced) => split_balanced(ids, labels, items, p, ratio),
        PartitionStrategy::Random(seed) => split_random(ids, labels, seed, ratio),
    }
}

/// CSV `instance_id,assignment`, one row per instance in input order.
pub fn write_plan(plan: &PartitionPlan, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["instance_id", "assignment"])?;
    for p in &plan.provenance {
        w.write_record([p.instance_id.to_string().as_str(), p.assignment.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(instance_id, assignment)` pairs written by [`write_plan`].
pub fn read_plan(source: impl Read) -> Result<Vec<(InstanceId, Assignment)>> {
    let mut r = csv::Reader::from_reader(source);
    if r.headers()?.iter().map(str::trim).ne(["instance_id", "assignment"]) {
        return Err(Error::parse(1, "header must be instance_id,assignment"));
    }
    let mut out = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record?;
        let line = k + 2;
        if record.len() != 2 {
            return Err(Error::parse(line, "expected 2 fields"));
        }
        let id = record[0].trim().parse().map_err(|_| Error::parse(line, "bad instance id"))?;
        let a = match record[1].trim() {
            "train" => Assignment::Train,
            "test" => Assignment::Test,
            other => return Err(Error::parse(line, format!("bad assignment {other:?}"))),
        };
        out.push((id, a));
    }
    Ok(out)
}
