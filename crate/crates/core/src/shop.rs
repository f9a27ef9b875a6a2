//! WebShop-style catalog: search, paginated results, detail pages with
//! option selection, and a binary purchase check.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentSpec};
use crate::episode::{EnvId, Observation, Simulator, Transition};
use crate::rng::{self, StreamRng};

pub const RESULTS_PER_PAGE: usize = 10;
pub const MIN_PRODUCTS: usize = 10;
const MAX_GOAL_ATTEMPTS: u32 = 100;

const BRANDS: [&str; 8] =
    ["Northpeak", "Lumora", "Vestiq", "Brightloom", "Ostra", "Kelvane", "Marrow & Pine", "Tidewell"];
const AUDIENCES: [&str; 4] = ["Men's", "Women's", "Unisex", "Teen Girls"];
const NOUNS: [&str; 12] = [
    "shirt",
    "t-shirt",
    "hoodie",
    "sweater",
    "jacket",
    "dress",
    "blouse",
    "polo shirt",
    "tank top",
    "cardigan",
    "jeans",
    "shorts",
];
const ATTRIBUTES: [&str; 12] = [
    "slim fit",
    "loose fit",
    "long sleeve",
    "short sleeve",
    "contrast color",
    "classic fit",
    "machine wash",
    "cotton",
    "quick dry",
    "button down",
    "crewneck",
    "v-neck",
];
const COLORS: [&str; 8] = ["black", "white", "navy", "gray", "red", "olive", "beige", "blue"];
const SIZES: [&str; 5] = ["small", "medium", "large", "x-large", "xx-large"];
const ASIN_ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShopError {
    #[error("need at least {MIN_PRODUCTS} products, got {0}")]
    TooFewProducts(usize),
    #[error("no satisfiable goal after {0} attempts")]
    InfeasibleGoal(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageKind {
    Search,
    Results,
    Detail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub asin: String,
    pub title: String,
    pub attributes: BTreeSet<String>,
    /// Option name to values, in display order.
    pub options: Vec<(String, Vec<String>)>,
    pub price_range: (f64, f64),
}

impl Product {
    pub fn option_values(&self, name: &str) -> Option<&[String]> {
        self.options.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Price paid on purchase: the low end of the range.
    pub fn paid_price(&self) -> f64 {
        self.price_range.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopGoal {
    pub required_attributes: BTreeSet<String>,
    pub required_options: BTreeMap<String, String>,
    pub price_cap: f64,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub products: Vec<Product>,
    pub goal: ShopGoal,
}

impl Catalog {
    pub fn product(&self, asin: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.asin.eq_ignore_ascii_case(asin))
    }

    pub fn contains_asin(&self, asin: &str) -> bool {
        self.product(asin).is_some()
    }

    pub fn page_count(&self) -> usize {
        self.products.len().div_ceil(RESULTS_PER_PAGE)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Every catalog ASIN ranked by token overlap with `query`, ties by ASIN.
pub fn search(catalog: &Catalog, query: &str) -> Vec<String> {
    let q = tokens(query);
    let mut scored: Vec<(usize, &str)> = catalog
        .products
        .iter()
        .map(|p| {
            let mut words = tokens(&p.title);
            for a in &p.attributes {
                words.extend(tokens(a));
            }
            (q.intersection(&words).count(), p.asin.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().map(|(_, asin)| asin.to_string()).collect()
}

pub fn goal_satisfied(
    product: &Product,
    selected_options: &BTreeMap<String, String>,
    paid_price: f64,
    goal: &ShopGoal,
) -> bool {
    goal.required_attributes.is_subset(&product.attributes)
        && goal.required_options.iter().all(|(k, v)| selected_options.get(k) == Some(v))
        && paid_price <= goal.price_cap
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(c) => c.to_uppercase().chain(cs).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn sample_product(rng: &mut StreamRng, used: &mut BTreeSet<String>) -> Product {
    let asin = loop {
        let tail: String = (0..8).map(|_| *ASIN_ALPHABET.choose(rng).expect("alphabet") as char).collect();
        let asin = format!("B0{tail}");
        if used.insert(asin.clone()) {
            break asin;
        }
    };
    let brand = *BRANDS.choose(rng).expect("non-empty");
    let audience = *AUDIENCES.choose(rng).expect("non-empty");
    let noun = *NOUNS.choose(rng).expect("non-empty");
    let n_attrs = rng.gen_range(2..=4);
    let attrs: Vec<&str> = ATTRIBUTES.choose_multiple(rng, n_attrs).copied().collect();
    let described: Vec<String> = attrs.iter().map(|a| title_case(a)).collect();
    let title = format!("{brand} {audience} {} {}", described.join(" "), title_case(noun));

    let n_sizes = rng.gen_range(2..=SIZES.len());
    let mut sizes: Vec<&str> = SIZES.choose_multiple(rng, n_sizes).copied().collect();
    sizes.sort_by_key(|s| SIZES.iter().position(|x| x == s));
    let n_colors = rng.gen_range(2..=4);
    let mut colors: Vec<&str> = COLORS.choose_multiple(rng, n_colors).copied().collect();
    colors.sort_by_key(|s| COLORS.iter().position(|x| x == s));
    let options = vec![
        ("size".to_string(), sizes.into_iter().map(String::from).collect()),
        ("color".to_string(), colors.into_iter().map(String::from).collect()),
    ];

    let low = rng.gen_range(300..6000) as f64 / 100.0;
    let high = if rng.gen_bool(0.5) { low } else { low + rng.gen_range(100..2000) as f64 / 100.0 };
    Product {
        asin,
        title,
        attributes: attrs.into_iter().map(String::from).collect(),
        options,
        price_range: (low, (high * 100.0).round() / 100.0),
    }
}

fn noun_of(title: &str) -> String {
    let lower = title.to_lowercase();
    NOUNS
        .iter()
        .filter(|n| lower.ends_with(&format!(" {n}")))
        .max_by_key(|n| n.len())
        .map(|n| n.to_string())
        .unwrap_or_default()
}

/// Deterministic catalog with a goal met by at least one product.
pub fn generate_catalog(seed: u64, n_products: usize) -> Result<Catalog, ShopError> {
    if n_products < MIN_PRODUCTS {
        return Err(ShopError::TooFewProducts(n_products));
    }
    let mut rng = rng::seeded(seed);
    let mut used = BTreeSet::new();
    let products: Vec<Product> = (0..n_products).map(|_| sample_product(&mut rng, &mut used)).collect();
    for _ in 0..MAX_GOAL_ATTEMPTS {
        let anchor = products.choose(&mut rng).expect("non-empty catalog");
        let n_req = rng.gen_range(1..=2.min(anchor.attributes.len()));
        let required_attributes: BTreeSet<String> =
            anchor.attributes.iter().cloned().choose_multiple(&mut rng, n_req).into_iter().collect();
        let mut required_options = BTreeMap::new();
        for (name, values) in &anchor.options {
            required_options.insert(name.clone(), values.choose(&mut rng).expect("non-empty option").clone());
        }
        let price_cap = ((anchor.paid_price() / 10.0).floor() + 1.0) * 10.0;
        let noun = noun_of(&anchor.title);
        let attrs: Vec<&str> = required_attributes.iter().map(String::as_str).collect();
        let instruction = format!(
            "Find me {} {noun} with color: {}, and size: {}, and price lower than {price_cap:.2} dollars",
            attrs.join(", "),
            required_options["color"],
            required_options["size"],
        );
        let goal = ShopGoal { required_attributes, required_options, price_cap, instruction };
        let feasible = products.iter().any(|p| {
            goal.required_options.iter().all(|(k, v)| p.option_values(k).is_some_and(|vs| vs.contains(v)))
                && goal_satisfied(p, &goal.required_options, p.paid_price(), &goal)
        });
        if feasible {
            return Ok(Catalog { products, goal });
        }
    }
    Err(ShopError::InfeasibleGoal(MAX_GOAL_ATTEMPTS))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShopPage {
    pub kind: PageKind,
    pub query: Option<String>,
    pub page_index: usize,
    pub visible_asins: Vec<String>,
    pub selected_options: BTreeMap<String, String>,
    pub focused_asin: Option<String>,
}

impl ShopPage {
    pub fn search_page() -> Self {
        Self {
            kind: PageKind::Search,
            query: None,
            page_index: 1,
            visible_asins: Vec::new(),
            selected_options: BTreeMap::new(),
            focused_asin: None,
        }
    }
}

/// Outcome of a shop action.
#[derive(Debug, Clone, PartialEq)]
pub enum ShopStep {
    Rejected,
    Moved,
    Purchased { success: bool },
}

fn format_price(range: (f64, f64)) -> String {
    if range.0 == range.1 {
        format!("${:.2}", range.0)
    } else {
        format!("${:.2} to ${:.2}", range.0, range.1)
    }
}

fn quote(item: &str) -> String {
    format!("'{item}'")
}

const SEP: &str = " [SEP] ";

/// Session state over a shared immutable catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopEnv {
    pub catalog: Arc<Catalog>,
    pub page: ShopPage,
}

impl ShopEnv {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Self { catalog, page: ShopPage::search_page() }
    }

    fn results_page(&self, query: &str, page_index: usize) -> ShopPage {
        let ranked = search(&self.catalog, query);
        let start = (page_index - 1) * RESULTS_PER_PAGE;
        ShopPage {
            kind: PageKind::Results,
            query: Some(query.to_string()),
            page_index,
            visible_asins: ranked.into_iter().skip(start).take(RESULTS_PER_PAGE).collect(),
            selected_options: BTreeMap::new(),
            focused_asin: None,
        }
    }

    fn has_next(&self) -> bool {
        self.page.page_index < self.catalog.page_count()
    }

    /// Rendering plus byte offsets where augmentation may insert entries.
    pub fn render_with_slots(&self) -> (String, Vec<usize>) {
        let mut text = String::new();
        let mut slots = Vec::new();
        let push = |text: &mut String, item: &str| {
            if !text.is_empty() {
                text.push_str(SEP);
            }
            text.push_str(&quote(item));
        };
        match self.page.kind {
            PageKind::Search => push(&mut text, "Search"),
            PageKind::Results => {
                push(&mut text, "Back to Search");
                push(
                    &mut text,
                    &format!("Page {} (Total results: {})", self.page.page_index, self.catalog.products.len()),
                );
                if self.page.page_index > 1 {
                    push(&mut text, "< Prev");
                }
                if self.has_next() {
                    push(&mut text, "Next >");
                }
                for asin in &self.page.visible_asins {
                    let p = self.catalog.product(asin).expect("visible products exist");
                    push(&mut text, &p.asin);
                    push(&mut text, &p.title);
                    push(&mut text, &format_price(p.price_range));
                    slots.push(text.len());
                }
            }
            PageKind::Detail => {
                let p = self.focused().expect("detail page has a product");
                push(&mut text, "Back to Search");
                push(&mut text, "< Prev");
                for (name, values) in &p.options {
                    push(&mut text, name);
                    for v in values {
                        push(&mut text, v);
                    }
                }
                push(&mut text, &p.title);
                push(&mut text, &format!("Price: {}", format_price(p.price_range)));
                push(&mut text, "Rating: N.A.");
                push(&mut text, "Description");
                slots.push(text.len());
                for item in ["Features", "Reviews", "Buy Now"] {
                    push(&mut text, item);
                }
            }
        }
        (text, slots)
    }

    pub fn focused(&self) -> Option<&Product> {
        self.page.focused_asin.as_deref().and_then(|a| self.catalog.product(a))
    }

    pub fn admissible(&self) -> Vec<String> {
        let mut actions = Vec::new();
        match self.page.kind {
            PageKind::Search => actions.push("search[<query>]".to_string()),
            PageKind::Results => {
                actions.push("click[back to search]".into());
                if self.page.page_index > 1 {
                    actions.push("click[< prev]".into());
                }
                if self.has_next() {
                    actions.push("click[next >]".into());
                }
                actions.extend(self.page.visible_asins.iter().map(|a| format!("click[{}]", a.to_lowercase())));
            }
            PageKind::Detail => {
                actions.push("click[back to search]".into());
                actions.push("click[< prev]".into());
                if let Some(p) = self.focused() {
                    for (_, values) in &p.options {
                        actions.extend(values.iter().map(|v| format!("click[{v}]")));
                    }
                }
                actions.push("click[buy now]".into());
            }
        }
        actions
    }

    /// Applies one action; rejected actions leave the page untouched.
    pub fn step(&mut self, action: &str) -> ShopStep {
        let action = action.trim();
        let lower = action.to_lowercase();
        if let Some(query) = lower.strip_prefix("search[").and_then(|r| r.strip_suffix(']')) {
            if self.page.kind != PageKind::Search {
                return ShopStep::Rejected;
            }
            let query = query.trim().trim_start_matches("query:").trim().trim_matches('"').trim();
            if query.is_empty() {
                return ShopStep::Rejected;
            }
            self.page = self.results_page(query, 1);
            return ShopStep::Moved;
        }
        let Some(target) = lower.strip_prefix("click[").and_then(|r| r.strip_suffix(']')) else {
            return ShopStep::Rejected;
        };
        let target = target.trim();
        match (self.page.kind, target) {
            (PageKind::Search, _) => ShopStep::Rejected,
            (_, "back to search") => {
                self.page = ShopPage::search_page();
                ShopStep::Moved
            }
            (PageKind::Results, "next >") if self.has_next() => {
                let query = self.page.query.clone().unwrap_or_default();
                self.page = self.results_page(&query, self.page.page_index + 1);
                ShopStep::Moved
            }
            (PageKind::Results, "< prev") if self.page.page_index > 1 => {
                let query = self.page.query.clone().unwrap_or_default();
                self.page = self.results_page(&query, self.page.page_index - 1);
                ShopStep::Moved
            }
            (PageKind::Results, asin) => {
                let Some(hit) = self.page.visible_asins.iter().find(|a| a.eq_ignore_ascii_case(asin)) else {
                    return ShopStep::Rejected;
                };
                self.page.kind = PageKind::Detail;
                self.page.focused_asin = Some(hit.clone());
                self.page.selected_options.clear();
                ShopStep::Moved
            }
            (PageKind::Detail, "< prev") => {
                self.page.kind = PageKind::Results;
                self.page.focused_asin = None;
                self.page.selected_options.clear();
                ShopStep::Moved
            }
            (PageKind::Detail, "buy now") => {
                let p = self.focused().expect("detail page has a product");
                let success = goal_satisfied(p, &self.page.selected_options, p.paid_price(), &self.catalog.goal);
                ShopStep::Purchased { success }
            }
            (PageKind::Detail, value) => {
                let p = self.focused().expect("detail page has a product");
                let Some((name, v)) = p
                    .options
                    .iter()
                    .find_map(|(name, values)| values.iter().find(|v| v.as_str() == value).map(|v| (name, v)))
                else {
                    return ShopStep::Rejected;
                };
                let (name, v) = (name.clone(), v.clone());
                self.page.selected_options.insert(name, v);
                ShopStep::Moved
            }
        }
    }

    /// Ground-truth scripted shopper: search with the goal wording, page to
    /// the first satisfying product, select the required options, buy.
    pub fn greedy_action(&self) -> String {
        let goal = &self.catalog.goal;
        match self.page.kind {
            PageKind::Search => format!("search[{}]", goal.instruction),
            PageKind::Results => {
                let query = self.page.query.clone().unwrap_or_default();
                let ranked = search(&self.catalog, &query);
                let target = ranked.iter().position(|a| {
                    let p = self.catalog.product(a).expect("ranked products exist");
                    goal.required_options.iter().all(|(k, v)| p.option_values(k).is_some_and(|vs| vs.contains(v)))
                        && goal_satisfied(p, &goal.required_options, p.paid_price(), goal)
                });
                match target {
                    Some(i) if i / RESULTS_PER_PAGE + 1 == self.page.page_index => {
                        format!("click[{}]", ranked[i].to_lowercase())
                    }
                    Some(i) if i / RESULTS_PER_PAGE + 1 < self.page.page_index => "click[< prev]".into(),
                    _ => "click[next >]".into(),
                }
            }
            PageKind::Detail => {
                let missing =
                    goal.required_options.iter().find(|(k, v)| self.page.selected_options.get(*k) != Some(*v));
                match missing {
                    Some((_, v)) => format!("click[{v}]"),
                    None => "click[buy now]".into(),
                }
            }
        }
    }
}

impl Simulator for ShopEnv {
    fn env_id(&self) -> EnvId {
        EnvId::Shop
    }

    fn observe(&self) -> Observation {
        let (text, _) = self.render_with_slots();
        Observation::new(text, self.admissible(), self.catalog.goal.instruction.clone())
    }

    fn augment(&self, obs: Observation, spec: &AugmentSpec, rng: &mut StreamRng) -> Observation {
        let (_, slots) = self.render_with_slots();
        let catalog = &self.catalog;
        augment::augment_webshop(self.page.kind, &slots, &|a| catalog.contains_asin(a), obs, spec, rng)
    }

    fn transition(&mut self, action: &str) -> Transition {
        match self.step(action) {
            ShopStep::Rejected => Transition::Rejected,
            ShopStep::Moved => Transition::Continue,
            ShopStep::Purchased { success: true } => Transition::Success,
            ShopStep::Purchased { success: false } => Transition::Failure,
        }
    }
}
