//! Household world with receptacles, portable objects, and put tasks.
//!
//! Observations follow the TextWorld/ALFRED layout: a scene paragraph, the
//! task line, and the admissible-action list. The agent carries at most one
//! object, so two-object tasks need two trips.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentSpec, ALF_BODY_END};
use crate::episode::{EnvId, Observation, Simulator, Transition};
use crate::rng::{self, StreamRng};

/// Receptacle kinds and whether they open.
pub const RECEPTACLE_KINDS: [(&str, bool); 14] = [
    ("cabinet", true),
    ("coffeemachine", false),
    ("countertop", false),
    ("desk", false),
    ("diningtable", false),
    ("drawer", true),
    ("dresser", false),
    ("fridge", true),
    ("garbagecan", false),
    ("microwave", true),
    ("safe", true),
    ("shelf", false),
    ("sidetable", false),
    ("sinkbasin", false),
];

pub const OBJECT_KINDS: [&str; 20] = [
    "apple",
    "book",
    "bread",
    "butterknife",
    "cellphone",
    "cup",
    "dishsponge",
    "egg",
    "fork",
    "kettle",
    "keychain",
    "knife",
    "lettuce",
    "mug",
    "pen",
    "plate",
    "potato",
    "saltshaker",
    "spatula",
    "tomato",
];

pub const START: &str = "start";
const WELCOME: &str = "-= Welcome to TextWorld, ALFRED! =-";
const MAX_GENERATION_ATTEMPTS: u32 = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HouseError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no feasible task after {0} attempts")]
    InfeasibleTask(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Receptacle {
    pub name: String,
    pub kind: String,
    pub openable: bool,
    pub open: bool,
    pub contents: Vec<String>,
}

impl Receptacle {
    /// Contents are visible unless the receptacle is closed.
    pub fn visible(&self) -> bool {
        !self.openable || self.open
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Receptacle(String),
    Inventory,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Object {
    pub kind: String,
    pub num: u32,
    pub location: Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PutOne,
    PutTwo,
}

impl TaskKind {
    pub fn required(self) -> usize {
        match self {
            TaskKind::PutOne => 1,
            TaskKind::PutTwo => 2,
        }
    }
}

/// Put `required()` objects of `object_type` into any receptacle of kind
/// `target_receptacle`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub object_type: String,
    pub target_receptacle: String,
}

impl TaskSpec {
    pub fn describe(&self) -> String {
        match self.kind {
            TaskKind::PutOne => format!("put a {} in {}.", self.object_type, self.target_receptacle),
            TaskKind::PutTwo => {
                format!("find two {} and put them in {}.", self.object_type, self.target_receptacle)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HouseState {
    pub receptacles: Vec<Receptacle>,
    pub objects: BTreeMap<String, Object>,
    pub agent_at: String,
    pub inventory: Vec<String>,
    pub task: TaskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HouseParams {
    pub n_receptacles: usize,
    pub n_objects: usize,
    pub task_kind: Option<TaskKind>,
}

impl Default for HouseParams {
    fn default() -> Self {
        Self { n_receptacles: 10, n_objects: 8, task_kind: None }
    }
}

fn natural_key(name: &str) -> (String, u32) {
    match name.rsplit_once(' ') {
        Some((kind, num)) => (kind.to_string(), num.parse().unwrap_or(0)),
        None => (name.to_string(), 0),
    }
}

/// "a x, a y, and a z" / "a x" / "nothing".
fn listing<'a>(names: impl IntoIterator<Item = &'a String>) -> String {
    let items: Vec<String> = names.into_iter().map(|n| format!("a {n}")).collect();
    match items.len() {
        0 => "nothing".to_string(),
        1 => items[0].clone(),
        n => format!("{}, and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}

impl HouseState {
    pub fn receptacle(&self, name: &str) -> Option<&Receptacle> {
        self.receptacles.iter().find(|r| r.name == name)
    }

    fn receptacle_mut(&mut self, name: &str) -> Option<&mut Receptacle> {
        self.receptacles.iter_mut().find(|r| r.name == name)
    }

    fn current(&self) -> Option<&Receptacle> {
        self.receptacle(&self.agent_at)
    }

    /// Objects currently sitting in receptacles of the task's target kind.
    pub fn placed_count(&self) -> usize {
        self.objects
            .values()
            .filter(|o| o.kind == self.task.object_type)
            .filter(|o| match &o.location {
                Location::Receptacle(r) => self.receptacle(r).is_some_and(|r| r.kind == self.task.target_receptacle),
                Location::Inventory => false,
            })
            .count()
    }

    pub fn task_complete(&self) -> bool {
        self.placed_count() >= self.task.kind.required()
    }

    /// `(kind, number)` for every object in the scene.
    pub fn scene_objects(&self) -> Vec<(String, u32)> {
        self.objects.values().map(|o| (o.kind.clone(), o.num)).collect()
    }

    fn sorted_contents(&self, r: &Receptacle) -> Vec<String> {
        let mut contents = r.contents.clone();
        contents.sort_by_key(|n| natural_key(n));
        contents
    }

    /// Every action accepted in the current state, sorted and duplicate-free.
    pub fn admissible(&self) -> Vec<String> {
        let mut actions: Vec<String> = self.receptacles.iter().map(|r| format!("go to {}", r.name)).collect();
        actions.push("inventory".into());
        actions.push("look".into());
        if let Some(here) = self.current() {
            if here.openable {
                let verb = if here.open { "close" } else { "open" };
                actions.push(format!("{verb} {}", here.name));
            }
            if here.visible() {
                match self.inventory.first() {
                    None => actions.extend(here.contents.iter().map(|o| format!("take {o} from {}", here.name))),
                    Some(held) => actions.push(format!("put {held} in/on {}", here.name)),
                }
            }
        }
        actions.sort();
        actions.dedup();
        actions
    }

    fn room_description(&self) -> String {
        let mut names: Vec<&Receptacle> = self.receptacles.iter().collect();
        // kind ascending, number descending, like the TextWorld scene listing
        names.sort_by(|a, b| {
            let (ka, na) = natural_key(&a.name);
            let (kb, nb) = natural_key(&b.name);
            ka.cmp(&kb).then(nb.cmp(&na))
        });
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            listing(names.iter().map(|r| &r.name))
        )
    }

    fn arrival_description(&self, r: &Receptacle) -> String {
        let contents = self.sorted_contents(r);
        if r.openable {
            if r.open {
                format!("The {} is open. In it, you see {}.", r.name, listing(&contents))
            } else {
                format!("The {} is closed.", r.name)
            }
        } else {
            format!("On the {}, you see {}.", r.name, listing(&contents))
        }
    }

    /// Applies an admissible action, returning the feedback text, or `None`
    /// (state untouched) when the action is not admissible.
    pub fn step(&mut self, action: &str) -> Option<String> {
        let action = action.trim();
        if !self.admissible().iter().any(|a| a == action) {
            return None;
        }
        let feedback = if let Some(target) = action.strip_prefix("go to ") {
            self.agent_at = target.to_string();
            let r = self.receptacle(target).expect("admissible target exists");
            format!("You arrive at {}. {}", r.name, self.arrival_description(r))
        } else if let Some(target) = action.strip_prefix("open ") {
            let r = self.receptacle_mut(target).expect("admissible target exists");
            r.open = true;
            let r = self.receptacle(target).expect("exists");
            format!(
                "You open the {}. The {} is open. In it, you see {}.",
                r.name,
                r.name,
                listing(&self.sorted_contents(r))
            )
        } else if let Some(target) = action.strip_prefix("close ") {
            self.receptacle_mut(target).expect("admissible target exists").open = false;
            format!("You close the {target}.")
        } else if let Some(rest) = action.strip_prefix("take ") {
            let (obj, from) = rest.split_once(" from ").expect("admissible take");
            let r = self.receptacle_mut(from).expect("admissible source exists");
            r.contents.retain(|o| o != obj);
            self.objects.get_mut(obj).expect("object exists").location = Location::Inventory;
            self.inventory.push(obj.to_string());
            format!("You pick up the {obj} from the {from}.")
        } else if let Some(rest) = action.strip_prefix("put ") {
            let (obj, into) = rest.split_once(" in/on ").expect("admissible put");
            self.inventory.retain(|o| o != obj);
            self.receptacle_mut(into).expect("admissible target exists").contents.push(obj.to_string());
            self.objects.get_mut(obj).expect("object exists").location = Location::Receptacle(into.to_string());
            format!("You put the {obj} in/on the {into}.")
        } else if action == "inventory" {
            match self.inventory.first() {
                Some(o) => format!("You are carrying: a {o}."),
                None => "You are not carrying anything.".to_string(),
            }
        } else {
            match self.current() {
                Some(r) => format!("You are facing the {}. Next to it, you see nothing.", r.name),
                None => self.room_description(),
            }
        };
        Some(feedback)
    }

    /// Next action of a greedy ground-truth solver: fetch the first
    /// remaining task object, carry it to the first target receptacle.
    pub fn greedy_action(&self) -> Option<String> {
        if self.task_complete() {
            return None;
        }
        let target_kind = &self.task.target_receptacle;
        let fetch_or_open = |r: &Receptacle, then: String| -> String {
            if self.agent_at != r.name {
                format!("go to {}", r.name)
            } else if !r.visible() {
                format!("open {}", r.name)
            } else {
                then
            }
        };
        if let Some(held) = self.inventory.first() {
            let target =
                self.receptacles.iter().filter(|r| &r.kind == target_kind).min_by_key(|r| natural_key(&r.name))?;
            return Some(fetch_or_open(target, format!("put {held} in/on {}", target.name)));
        }
        let (name, source) = self
            .objects
            .iter()
            .filter(|(_, o)| o.kind == self.task.object_type)
            .filter_map(|(name, o)| match &o.location {
                Location::Receptacle(r) => self.receptacle(r).map(|r| (name, r)),
                Location::Inventory => None,
            })
            .filter(|(_, r)| &r.kind != target_kind)
            .min_by_key(|(name, _)| natural_key(name))?;
        Some(fetch_or_open(source, format!("take {name} from {}", source.name)))
    }
}

/// Deterministic world generation.
pub fn generate(seed: u64, params: HouseParams) -> Result<HouseState, HouseError> {
    let HouseParams { n_receptacles, n_objects, task_kind } = params;
    if n_receptacles < 2 || n_objects < 1 {
        return Err(HouseError::InvalidParams(format!(
            "need at least 2 receptacles and 1 object, got {n_receptacles} and {n_objects}"
        )));
    }
    if task_kind.is_some_and(|k| k.required() > n_objects) {
        return Err(HouseError::InfeasibleTask(0));
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        if let Some(state) = try_generate(&mut rng, n_receptacles, n_objects, task_kind) {
            return Ok(state);
        }
    }
    Err(HouseError::InfeasibleTask(MAX_GENERATION_ATTEMPTS))
}

fn try_generate(
    rng: &mut StreamRng,
    n_receptacles: usize,
    n_objects: usize,
    task_kind: Option<TaskKind>,
) -> Option<HouseState> {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    let mut receptacles = Vec::with_capacity(n_receptacles);
    for _ in 0..n_receptacles {
        let (kind, openable) = *RECEPTACLE_KINDS.choose(rng).expect("non-empty");
        let n = counts.entry(kind).or_default();
        *n += 1;
        receptacles.push(Receptacle {
            name: format!("{kind} {n}"),
            kind: kind.to_string(),
            openable,
            open: false,
            contents: Vec::new(),
        });
    }

    let mut object_counts: BTreeMap<&str, u32> = BTreeMap::new();
    let mut objects = BTreeMap::new();
    for _ in 0..n_objects {
        let kind = *OBJECT_KINDS.choose(rng).expect("non-empty");
        let num = object_counts.entry(kind).or_default();
        *num += 1;
        let name = format!("{kind} {num}");
        let home = rng.gen_range(0..receptacles.len());
        receptacles[home].contents.push(name.clone());
        objects.insert(
            name,
            Object {
                kind: kind.to_string(),
                num: *num,
                location: Location::Receptacle(receptacles[home].name.clone()),
            },
        );
    }

    let kind = task_kind.unwrap_or_else(|| if rng.gen_bool(0.5) { TaskKind::PutOne } else { TaskKind::PutTwo });
    let candidates: Vec<&str> =
        object_counts.iter().filter(|(_, n)| **n as usize >= kind.required()).map(|(k, _)| *k).collect();
    let object_type = *candidates.choose(rng)?;
    let mut target_kinds: Vec<&str> = receptacles
        .iter()
        .filter(|r| !r.contents.iter().any(|o| objects[o].kind == object_type))
        .map(|r| r.kind.as_str())
        .collect();
    target_kinds.sort();
    target_kinds.dedup();
    // a kind qualifies only if none of its instances already hold the object type
    target_kinds.retain(|k| {
        receptacles.iter().filter(|r| r.kind == *k).all(|r| !r.contents.iter().any(|o| objects[o].kind == object_type))
    });
    let target = target_kinds.choose(rng)?.to_string();

    Some(HouseState {
        receptacles,
        objects,
        agent_at: START.to_string(),
        inventory: Vec::new(),
        task: TaskSpec { kind, object_type: object_type.to_string(), target_receptacle: target },
    })
}

/// The household world wired into the episode runner.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HouseEnv {
    pub state: HouseState,
    /// Scene paragraph produced by the last action.
    pub feedback: String,
}

impl HouseEnv {
    pub fn new(state: HouseState) -> Self {
        let feedback = format!("{WELCOME}\n\n{}", state.room_description());
        Self { state, feedback }
    }
}

/// Formats the admissible list as `['a' 'b' ...]`.
pub fn format_admissible(actions: &[String]) -> String {
    let quoted: Vec<String> = actions.iter().map(|a| format!("'{a}'")).collect();
    format!("[{}]", quoted.join(" "))
}

impl Simulator for HouseEnv {
    fn env_id(&self) -> EnvId {
        EnvId::House
    }

    fn observe(&self) -> Observation {
        let task = self.state.task.describe();
        let admissible = self.state.admissible();
        let text = format!(
            "{}{ALF_BODY_END} {task} Your admissible actions of the current situation are: {}.",
            self.feedback,
            format_admissible(&admissible)
        );
        Observation::new(text, admissible, task)
    }

    fn augment(&self, obs: Observation, spec: &AugmentSpec, rng: &mut StreamRng) -> Observation {
        augment::augment_alfworld(obs, &self.state.scene_objects(), spec, rng)
    }

    fn transition(&mut self, action: &str) -> Transition {
        let was_put = action.trim().starts_with("put ");
        match self.state.step(action) {
            None => Transition::Rejected,
            Some(feedback) => {
                self.feedback = feedback;
                if was_put && self.state.task_complete() {
                    Transition::Success
                } else {
                    Transition::Continue
                }
            }
        }
    }
}
