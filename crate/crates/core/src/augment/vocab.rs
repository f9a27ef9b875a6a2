//! Distractor vocabularies and sentence templates.

/// Household distractor object types.
pub const ALF_OBJECT_TYPES: [&str; 28] = [
    "bowl",
    "cup",
    "pan",
    "spoon",
    "fork",
    "knife",
    "plate",
    "mug",
    "bottle",
    "can",
    "glass",
    "basket",
    "tray",
    "vase",
    "jar",
    "container",
    "jug",
    "thermos",
    "pitcher",
    "dish",
    "tumbler",
    "sponge",
    "towel",
    "napkin",
    "rack",
    "coaster",
    "utensil",
    "lid",
];

/// Trivial descriptors attached to household distractors.
pub const ALF_DESCRIPTORS: [&str; 19] = [
    "cracked",
    "dirty",
    "slightly burnt",
    "covered in dust",
    "wrapped in foil",
    "sticky",
    "still warm",
    "rusty",
    "filled with water",
    "emits a faint smell",
    "has some liquid inside",
    "tipped over",
    "seems unused",
    "greasy",
    "wet on the surface",
    "has a faint label",
    "smudged",
    "with faded color",
    "shows fingerprints",
];

/// Household sentence frames; `{obj}` is the named object, `{desc}` the descriptor.
pub const ALF_TEMPLATES: [&str; 4] = [
    "You notice a {obj} that looks {desc}.",
    "Near the sink, there is a {obj} that is {desc}.",
    "On the floor, you see a {obj} that is {desc}.",
    "Someone left a {obj} here, and it is {desc}.",
];

pub const WEB_CATEGORIES: [&str; 20] = [
    "rompers",
    "jumpsuits",
    "blouses",
    "cozy cardigans",
    "pajamas",
    "loungewear sets",
    "button-down tops",
    "long sleeve tees",
    "casual jackets",
    "knitwear",
    "soft sweaters",
    "thermal layers",
    "fleece pullovers",
    "v-neck tunics",
    "red outfits",
    "plus-size picks",
    "cropped hoodies",
    "layered looks",
    "textured knits",
    "everyday basics",
];

pub const WEB_PROMOS: [&str; 20] = [
    "30% off",
    "new arrivals",
    "trending now",
    "selling fast",
    "limited edition",
    "back in stock",
    "editor's pick",
    "members-only deal",
    "must-have looks",
    "staff favorite",
    "top-rated",
    "recommended for daily wear",
    "cozy & cute",
    "perfect for layering",
    "style spotlight",
    "hand-picked for you",
    "fan favorites",
    "most loved by shoppers",
    "inspired by you",
    "perfect for your capsule wardrobe",
];

/// Labeled trivial features for detail pages.
pub const WEB_TRIVIAL_FEATURES: [&str; 14] = [
    "fabric: machine wash cold",
    "shipping note: ships within 5-7 days",
    "sizing tip: runs half size large",
    "model info: model is 5'8'' wearing size medium",
    "brand description: known for cozy minimalism",
    "care label: made in Indonesia",
    "origin: eco-conscious packaging",
    "batch code: Spring 2024 release",
    "warehouse tag: popular for travel & errands",
    "return policy: soft fleece interior",
    "manufacturing month: delicate stitching on seams",
    "recommendation: designed for colder climates",
    "intended use: do not iron over print",
    "layering advice: packaged folded in bag",
];

pub const WEB_TRIVIAL_PRODUCT_TYPES: [&str; 14] = [
    "romper",
    "jumpsuit",
    "blouse",
    "tunic",
    "pajama top",
    "sweater",
    "tank top",
    "hoodie",
    "cardigan",
    "bodysuit",
    "thermal shirt",
    "dress",
    "coverall",
    "camisole",
];

pub const WEB_NONTARGET_FEATURES: [&str; 15] = [
    "sleeveless",
    "misleadingly tagged",
    "overpriced",
    "heavily discounted",
    "out of stock",
    "not available in large size",
    "no reviews",
    "size runs small",
    "fabric mismatch",
    "zipper broken",
    "category mislabel",
    "style mismatch",
    "faded color",
    "missing product images",
    "customer complaints",
];

/// `{promo}` / `{category}` ad frame.
pub const WEB_AD_TEMPLATE: &str = "[AD] {promo} \u{2014} shop {category} today!";

/// Trivial-product frames; `{desc}` is a non-target feature, `{obj}` a product type.
pub const WEB_TRIVIAL_TEMPLATES: [&str; 2] =
    ["Women {desc} {obj} \u{2014} likely unsuitable", "Warning: {desc} {obj} (cannot be selected)"];

pub const SOKOBAN_OBJECTS: [&str; 7] =
    ["Broken crate", "Sealed door", "Pile of rubble", "Faded sign", "Leaking pipe", "Loose tile", "Stacked boxe"];

pub const SOKOBAN_LOCATIONS: [&str; 5] =
    ["outside the room", "beyond the wall", "inaccessible", "behind a collapsed wall", "on a blocked corridor"];

/// `{r}`, `{c}`, `{obj}`, `{desc}` frame for out-of-grid lines.
pub const SOKOBAN_TEMPLATE: &str = "({r}, {c}) shows a {obj} ({desc}; unreachable).";

pub(crate) fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    pairs.iter().fold(template.to_string(), |acc, (key, value)| acc.replace(&format!("{{{key}}}"), value))
}
