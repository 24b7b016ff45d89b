//! Resolution of `external` CPDs. Each generator id maps to a function of the
//! parent values and the attribute's own random stream. The offline set below
//! is deterministic and needs no network.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::schema::Value;

/// What an external CPD is asked to produce.
#[derive(Clone, Debug)]
pub struct GenRequest<'a> {
    pub template: &'a str,
    pub target: &'a str,
    pub entity_type: &'a str,
    /// Parent values in CPD order, keyed by parent attr_id.
    pub parents: Vec<(&'a str, &'a Value)>,
}

impl GenRequest<'_> {
    /// Parent value by local attribute name (the part after the last dot).
    pub fn parent(&self, name: &str) -> Option<&Value> {
        self.parents
            .iter()
            .find(|(id, _)| id.rsplit('.').next() == Some(name))
            .map(|(_, v)| *v)
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenRequest<'_>, rng: &mut Stream) -> Result<String>;
}

impl<F> Generator for F
where
    F: Fn(&GenRequest<'_>, &mut Stream) -> Result<String> + Send + Sync,
{
    fn generate(&self, req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
        self(req, rng)
    }
}

/// Generator ids to implementations, with an optional catch-all.
#[derive(Clone, Default)]
pub struct Generators {
    by_id: BTreeMap<String, Arc<dyn Generator>>,
    fallback: Option<Arc<dyn Generator>>,
}

impl std::fmt::Debug for Generators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generators")
            .field("ids", &self.by_id.keys().collect::<Vec<_>>())
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

impl Generators {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The deterministic stubs used by the daily-life schema.
    pub fn offline() -> Self {
        let mut g = Self::default();
        g.register("person_name", person_name);
        g.register("birthday", birthday);
        g.register("company", company);
        g.register("passport", passport);
        g.register("event_title", event_title);
        g.register("event_content", event_content);
        g.register("place_name", place_name);
        g.register("place_comment", place_comment);
        g.register("item_name", item_name);
        g.register("item_comment", item_comment);
        g
    }

    pub fn register(&mut self, id: &str, gen: impl Generator + 'static) -> &mut Self {
        self.by_id.insert(id.to_string(), Arc::new(gen));
        self
    }

    /// Used for any id without its own registration.
    pub fn set_fallback(&mut self, gen: Arc<dyn Generator>) -> &mut Self {
        self.fallback = Some(gen);
        self
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id) || self.fallback.is_some()
    }

    pub fn generate(&self, req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
        let gen = self
            .by_id
            .get(req.template)
            .or(self.fallback.as_ref())
            .ok_or_else(|| Error::UnresolvedGenerator(req.template.to_string()))?;
        gen.generate(req, rng)
    }
}

fn pick<'a>(rng: &mut Stream, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("non-empty word list")
}

const SURNAMES: &[&str] = &[
    "Wang", "Li", "Zhang", "Liu", "Chen", "Yang", "Zhao", "Huang", "Zhou", "Wu", "Xu", "Sun", "Hu", "Zhu", "Gao",
    "Lin", "He", "Guo", "Ma", "Luo", "Liang", "Song", "Zheng", "Xie", "Han", "Tang", "Feng", "Yu", "Dong", "Xiao",
];
const MALE_GIVEN: &[&str] = &[
    "Qiang", "Wei", "Zhihong", "Jun", "Lei", "Yong", "Jie", "Tao", "Ming", "Chao", "Hao", "Peng", "Bin", "Gang",
    "Hui", "Feng", "Jian", "Xin", "Bo", "Kai", "Long", "Shuai", "Yu", "Zhen",
];
const FEMALE_GIVEN: &[&str] = &[
    "Yalin", "Tingting", "Fang", "Na", "Min", "Jing", "Li", "Yan", "Juan", "Xia", "Ying", "Hua", "Lan", "Mei",
    "Qian", "Rui", "Shan", "Ting", "Wen", "Xue", "Yue", "Zhen", "Lu", "Dan",
];

fn person_name(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let given = match req.parent("gender").map(|v| v.to_string()).as_deref() {
        Some("female") => FEMALE_GIVEN,
        _ => MALE_GIVEN,
    };
    Ok(format!("{} {}", pick(rng, given), pick(rng, SURNAMES)))
}

pub(crate) const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
    "November", "December",
];
const MONTH_DAYS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

pub(crate) fn ordinal(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, r) if r != 11 => "st",
        (2, r) if r != 12 => "nd",
        (3, r) if r != 13 => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn birthday(_: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let m = rng.gen_range(0..12);
    let d = rng.gen_range(1..=MONTH_DAYS[m]);
    Ok(format!("{} {}", MONTHS[m], ordinal(d)))
}

const COMPANY_PREFIX: &[&str] = &[
    "Huayin", "West Lake", "Pudong", "Golden Bridge", "Riverside", "Evergreen", "Sunrise", "Harmony", "Jade Mountain",
    "Blue Harbor", "Pearl River", "Silver Pine", "Red Maple", "Eastern Star",
];

fn company(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let suffixes: &[&str] = match req.parent("occupation").map(|v| v.to_string()).as_deref() {
        Some("Bank Teller") => &["Bank", "Financial Service Center", "Savings Bank"],
        Some("Teacher") => &["Middle School", "Primary School", "Academy"],
        Some("Doctor" | "Nurse") => &["Hospital", "Medical Center", "Clinic"],
        Some("Software Engineer") => &["Technology", "Software", "Networks"],
        Some("Accountant") => &["Accounting Firm", "Audit Partners", "Finance Group"],
        Some("Lawyer") => &["Law Firm", "Legal Partners", "Law Office"],
        Some("Chef") => &["Restaurant", "Kitchen", "Hotel"],
        Some("Designer") => &["Design Studio", "Creative Agency", "Design Lab"],
        Some("Driver") => &["Logistics", "Express", "Transport Company"],
        Some("Salesperson") => &["Trading Company", "Retail Group", "Commerce"],
        Some("Researcher") => &["Research Institute", "Laboratory", "Science Park"],
        _ => &["Group", "Company", "Holdings"],
    };
    Ok(format!("{} {}", pick(rng, COMPANY_PREFIX), pick(rng, suffixes)))
}

fn passport(_: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let a = (b'A' + rng.gen_range(0..26u8)) as char;
    let b = (b'A' + rng.gen_range(0..26u8)) as char;
    Ok(format!("{a}{b}{:07}", rng.gen_range(0..10_000_000u32)))
}

const TITLE_PREFIX: &[&str] = &["Annual", "Spring", "Autumn", "Regional", "City", "Weekend", "Summer", "Winter"];

fn event_title(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let theme = req
        .parent("occupation")
        .or_else(|| req.parent("hobbies"))
        .map(|v| v.to_string())
        .unwrap_or_default();
    let kind = req.parent("type").map(|v| v.to_string()).unwrap_or_else(|| "Event".into());
    Ok(format!("{} {theme} {kind}", pick(rng, TITLE_PREFIX)).replace("  ", " "))
}

fn event_content(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let kind = req.parent("type").map(|v| v.to_string()).unwrap_or_else(|| "event".into());
    let what = pick(
        rng,
        &[
            "sharing practical experience",
            "meeting people from other teams",
            "short talks followed by open discussion",
            "hands-on sessions in small groups",
            "a guided tour and a question round",
        ],
    );
    let end = pick(
        rng,
        &["with refreshments afterwards", "with a group photo at the end", "open to families", "with free entry"],
    );
    Ok(format!("A {} featuring {what}, {end}", kind.to_lowercase()))
}

fn place_name(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let kind = req.parent("type").map(|v| v.to_string()).unwrap_or_default();
    let first = pick(rng, &["Oasis", "Green Valley", "Maple", "Lakeside", "Sunny", "Cloud", "Harbor", "Bamboo"]);
    Ok(match kind.as_str() {
        "Residential Community" => format!("{first} Home"),
        "Gym" => format!("{first} Fitness"),
        "Park" => format!("{first} Park"),
        "Library" => format!("{first} Library"),
        "Cafe" => format!("{first} Coffee"),
        "Shopping Mall" => format!("{first} Plaza"),
        _ => first.to_string(),
    })
}

fn place_comment(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let name = req.parent("name").map(|v| v.to_string()).unwrap_or_else(|| "This place".into());
    let good = pick(rng, &["quiet and clean", "close to the subway", "full of trees", "friendly and well run"]);
    let bad = pick(rng, &["parking is hard to find", "it gets crowded at weekends", "there are few restaurants nearby"]);
    Ok(format!("{name} is {good}, though {bad}"))
}

fn item_name(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let kind = req.parent("type").map(|v| v.to_string()).unwrap_or_default();
    let (brands, models): (&[&str], &[&str]) = match kind.as_str() {
        "Sports Shoes" => (&["ASICS Gel-Kayano", "Nike Pegasus", "Adidas Ultraboost"], &["26", "38", "22"]),
        "Laptop" => (&["ThinkPad X1", "MacBook Air", "Dell XPS"], &["13", "14", "15"]),
        "Smartphone" => (&["Huawei Mate", "Xiaomi", "iPhone"], &["40", "14", "15"]),
        "Backpack" => (&["Osprey Daylite", "Fjallraven Kanken", "Herschel Classic"], &["20L", "16L", "24L"]),
        "Watch" => (&["Casio G-Shock", "Seiko Presage", "Garmin Forerunner"], &["5600", "265", "7"]),
        _ => (&["Sony WH", "Bose QC", "AirPods Pro"], &["1000XM4", "45", "2"]),
    };
    Ok(format!("{} {}", pick(rng, brands), pick(rng, models)))
}

fn item_comment(req: &GenRequest<'_>, rng: &mut Stream) -> Result<String> {
    let name = req.parent("name").map(|v| v.to_string()).unwrap_or_else(|| "It".into());
    let good = pick(rng, &["comfortable to use all day", "very reliable", "light and well made", "worth the price"]);
    let bad = pick(rng, &["the battery could last longer", "it scratches easily", "the color fades a little"]);
    Ok(format!("{name} is {good}, although {bad}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn ordinals() {
        let got: Vec<String> = [1, 2, 3, 4, 11, 12, 13, 21, 22, 23, 31].iter().map(|&n| ordinal(n)).collect();
        assert_eq!(got, ["1st", "2nd", "3rd", "4th", "11th", "12th", "13th", "21st", "22nd", "23rd", "31st"]);
    }

    #[test]
    fn unknown_generator_is_an_error() {
        let g = Generators::empty();
        let req = GenRequest { template: "nope", target: "x.y", entity_type: "x", parents: vec![] };
        assert!(matches!(g.generate(&req, &mut stream(1, "x")), Err(Error::UnresolvedGenerator(_))));
    }

    #[test]
    fn offline_names_follow_gender() {
        let g = Generators::offline();
        let female = Value::from("female");
        let req = GenRequest { template: "person_name", target: "a.name", entity_type: "a", parents: vec![("a.gender", &female)] };
        for s in 0..50 {
            let name = g.generate(&req, &mut stream(s, "a.name")).unwrap();
            let given = name.split(' ').next().unwrap();
            assert!(FEMALE_GIVEN.contains(&given), "{name}");
        }
    }
}
