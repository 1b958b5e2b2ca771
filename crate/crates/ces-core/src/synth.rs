//! Deterministic synthetic event-stream generation.
//!
//! Daily cell counts are Poisson with a per-cell baseline rate modulated by
//! a shared seasonal cycle and any configured impulses (a multiplicative
//! factor on one grouped cell over a day range). Each event is assigned a
//! user from a growing pool: with the configured newcomer probability a
//! fresh pseudonym joins the pool, otherwise an existing member is drawn
//! uniformly. Identical seeds produce byte-identical streams.

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DayRange, EventRecord, NodeKind, Taxonomy};

#[derive(Error, Debug)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config file: {0}")]
    Parse(String),
}

/// Whether baseline rates are stated per term pair or per class pair
/// (class-level rates are split evenly over the member term pairs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateLevel {
    Term,
    #[default]
    Class,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRate {
    pub feature: String,
    pub activity: String,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSpec {
    #[serde(default)]
    pub level: RateLevel,
    /// Baseline events per day per cell at the configured level.
    pub base: f64,
    /// Per-cell overrides at the same level.
    #[serde(default)]
    pub cells: Vec<CellRate>,
}

impl Default for RateSpec {
    fn default() -> Self {
        Self {
            level: RateLevel::Class,
            base: 4.0,
            cells: Vec::new(),
        }
    }
}

/// Shared sinusoidal modulation `1 + amplitude * sin(2 pi (d + phase) / period)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeasonalSpec {
    pub amplitude: f64,
    pub period_days: f64,
    #[serde(default)]
    pub phase_days: f64,
}

impl Default for SeasonalSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            period_days: 365.25,
            phase_days: 0.0,
        }
    }
}

/// A multiplicative burst on one grouped cell over a day range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpulseSpec {
    pub feature_class: String,
    pub activity_class: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub factor: f64,
}

/// A temporary boost of the newcomer probability.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpikeSpec {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserModel {
    /// Pseudonyms available before the first day.
    pub initial_pool: u64,
    /// Per-event probability that a brand-new user posts it.
    pub new_user_rate: f64,
    #[serde(default)]
    pub spike: Option<SpikeSpec>,
}

impl Default for UserModel {
    fn default() -> Self {
        Self {
            initial_pool: 500,
            new_user_rate: 0.02,
            spike: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub window: DayRange,
    #[serde(default)]
    pub rates: RateSpec,
    #[serde(default)]
    pub seasonal: SeasonalSpec,
    #[serde(default)]
    pub impulses: Vec<ImpulseSpec>,
    #[serde(default)]
    pub users: UserModel,
}

impl SynthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let config: SynthConfig = toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?;
        Ok(config)
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), SynthError> {
        if !self.rates.base.is_finite() || self.rates.base < 0.0 {
            return Err(SynthError::InvalidConfig("rates.base must be finite and >= 0".into()));
        }
        for cell in &self.rates.cells {
            if !cell.rate.is_finite() || cell.rate < 0.0 {
                return Err(SynthError::InvalidConfig(format!(
                    "rate override for ({}, {}) must be finite and >= 0",
                    cell.feature, cell.activity
                )));
            }
        }
        if !self.seasonal.amplitude.is_finite() || !(self.seasonal.period_days > 0.0) {
            return Err(SynthError::InvalidConfig("seasonal spec must be finite with period > 0".into()));
        }
        for impulse in &self.impulses {
            if impulse.start > impulse.end {
                return Err(SynthError::InvalidConfig("impulse range inverted".into()));
            }
            if !self.window.contains(impulse.start) || !self.window.contains(impulse.end) {
                return Err(SynthError::InvalidConfig("impulse range outside window".into()));
            }
            if !impulse.factor.is_finite() || impulse.factor < 0.0 {
                return Err(SynthError::InvalidConfig("impulse factor must be >= 0".into()));
            }
            if !taxonomy
                .classes(NodeKind::Feature)
                .contains(&impulse.feature_class)
            {
                return Err(SynthError::InvalidConfig(format!(
                    "impulse feature class {:?} not in taxonomy",
                    impulse.feature_class
                )));
            }
            if !taxonomy
                .classes(NodeKind::Activity)
                .contains(&impulse.activity_class)
            {
                return Err(SynthError::InvalidConfig(format!(
                    "impulse activity class {:?} not in taxonomy",
                    impulse.activity_class
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.users.new_user_rate) {
            return Err(SynthError::InvalidConfig("users.new_user_rate must be in [0, 1]".into()));
        }
        if self.users.initial_pool == 0 {
            return Err(SynthError::InvalidConfig("users.initial_pool must be >= 1".into()));
        }
        if let Some(spike) = &self.users.spike {
            if spike.start > spike.end || spike.factor < 0.0 {
                return Err(SynthError::InvalidConfig("user spike must have ordered dates and factor >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Generate the event stream described by `config` over the taxonomy's
/// repertoire. Events come out ordered by day, then feature term, then
/// activity term.
pub fn generate(config: &SynthConfig, taxonomy: &Taxonomy) -> Result<Vec<EventRecord>, SynthError> {
    config.validate(taxonomy)?;
    let features = taxonomy.terms(NodeKind::Feature);
    let activities = taxonomy.terms(NodeKind::Activity);

    // Class sizes, for splitting class-level rates across member pairs.
    let class_of_f: Vec<&str> = features
        .iter()
        .map(|f| taxonomy.class_of(NodeKind::Feature, f).expect("term in taxonomy"))
        .collect();
    let class_of_a: Vec<&str> = activities
        .iter()
        .map(|a| taxonomy.class_of(NodeKind::Activity, a).expect("term in taxonomy"))
        .collect();
    let f_class_size = |class: &str| class_of_f.iter().filter(|c| **c == class).count() as f64;
    let a_class_size = |class: &str| class_of_a.iter().filter(|c| **c == class).count() as f64;

    // Resolve per-term-pair baseline rates.
    let mut base = vec![vec![0.0f64; activities.len()]; features.len()];
    for (fi, f) in features.iter().enumerate() {
        for (ai, a) in activities.iter().enumerate() {
            let rate = match config.rates.level {
                RateLevel::Term => {
                    let mut r = config.rates.base;
                    for cell in &config.rates.cells {
                        if cell.feature == *f && cell.activity == *a {
                            r = cell.rate;
                        }
                    }
                    r
                }
                RateLevel::Class => {
                    let fc = class_of_f[fi];
                    let ac = class_of_a[ai];
                    let mut r = config.rates.base;
                    for cell in &config.rates.cells {
                        if cell.feature == fc && cell.activity == ac {
                            r = cell.rate;
                        }
                    }
                    r / (f_class_size(fc) * a_class_size(ac))
                }
            };
            base[fi][ai] = rate;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: u64 = config.users.initial_pool;
    let mut records = Vec::new();

    for (d, date) in config.window.days().enumerate() {
        let seasonal = 1.0
            + config.seasonal.amplitude
                * (2.0 * std::f64::consts::PI * (d as f64 + config.seasonal.phase_days)
                    / config.seasonal.period_days)
                    .sin();
        let seasonal = seasonal.max(0.0);

        let mut p_new = config.users.new_user_rate;
        if let Some(spike) = &config.users.spike {
            if spike.start <= date && date <= spike.end {
                p_new *= spike.factor;
            }
        }
        let p_new = p_new.clamp(0.0, 1.0);

        for (fi, f) in features.iter().enumerate() {
            for (ai, a) in activities.iter().enumerate() {
                let mut rate = base[fi][ai] * seasonal;
                for impulse in &config.impulses {
                    if impulse.feature_class == class_of_f[fi]
                        && impulse.activity_class == class_of_a[ai]
                        && impulse.start <= date
                        && date <= impulse.end
                    {
                        rate *= impulse.factor;
                    }
                }
                if rate <= 0.0 {
                    continue;
                }
                let poisson = Poisson::new(rate)
                    .map_err(|e| SynthError::InvalidConfig(format!("rate {rate}: {e}")))?;
                let n = poisson.sample(&mut rng) as u64;
                for _ in 0..n {
                    let user = if rng.random::<f64>() < p_new {
                        pool += 1;
                        pool - 1
                    } else {
                        rng.random_range(0..pool)
                    };
                    records.push(EventRecord {
                        date,
                        feature: f.clone(),
                        activity: a.clone(),
                        user: format!("u{user}"),
                        count: 1,
                    });
                }
            }
        }
    }
    Ok(records)
}

/// Write records in the ingest CSV format.
pub fn write_events_csv<W: std::io::Write>(
    records: &[EventRecord],
    writer: W,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "date,feature,activity,user,count")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.date, r.feature, r.activity, r.user, r.count)?;
    }
    Ok(())
}

/// Write a taxonomy in the ingest CSV format.
pub fn write_taxonomy_csv<W: std::io::Write>(
    taxonomy: &Taxonomy,
    writer: W,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "kind,term,class")?;
    for kind in [NodeKind::Feature, NodeKind::Activity] {
        for term in taxonomy.terms(kind) {
            let class = taxonomy.class_of(kind, &term).expect("term in taxonomy");
            writeln!(w, "{kind},{term},{class}")?;
        }
    }
    Ok(())
}

/// 39 nature-feature terms in 11 classes.
pub const EXAMPLE_FEATURES: &[(&str, &str)] = &[
    ("desert", "desert"),
    ("dune", "desert"),
    ("canyon", "desert"),
    ("forest", "forest"),
    ("woods", "forest"),
    ("grove", "forest"),
    ("rainforest", "forest"),
    ("meadow", "grasslands"),
    ("prairie", "grasslands"),
    ("savanna", "grasslands"),
    ("marsh", "inland wetlands"),
    ("swamp", "inland wetlands"),
    ("river", "inland wetlands"),
    ("lake", "inland wetlands"),
    ("waterfall", "inland wetlands"),
    ("island", "island"),
    ("atoll", "island"),
    ("archipelago", "island"),
    ("beach", "marine wetlands"),
    ("coast", "marine wetlands"),
    ("reef", "marine wetlands"),
    ("lagoon", "marine wetlands"),
    ("mountain", "mountains"),
    ("peak", "mountains"),
    ("cliff", "mountains"),
    ("valley", "mountains"),
    ("volcano", "mountains"),
    ("glacier", "polar"),
    ("iceberg", "polar"),
    ("tundra", "polar"),
    ("trail", "trail"),
    ("path", "trail"),
    ("ridge", "trail"),
    ("garden", "urban greenspace"),
    ("park", "urban greenspace"),
    ("pool", "urban greenspace"),
    ("wilderness", "wilderness"),
    ("backcountry", "wilderness"),
    ("outback", "wilderness"),
];

/// 186 activity terms in 16 classes.
pub const EXAMPLE_ACTIVITIES: &[(&str, &str)] = &[
    ("climbing", "adventure"),
    ("abseiling", "adventure"),
    ("rappelling", "adventure"),
    ("caving", "adventure"),
    ("spelunking", "adventure"),
    ("ballooning", "adventure"),
    ("skydiving", "adventure"),
    ("paragliding", "adventure"),
    ("ziplining", "adventure"),
    ("zorbing", "adventure"),
    ("geocaching", "adventure"),
    ("orienteering", "adventure"),
    ("painting", "arts"),
    ("sketching", "arts"),
    ("drawing", "arts"),
    ("photographing", "arts"),
    ("filming", "arts"),
    ("sculpting", "arts"),
    ("carving", "arts"),
    ("writing", "arts"),
    ("journaling", "arts"),
    ("singing", "arts"),
    ("drumming", "arts"),
    ("dancing", "arts"),
    ("cooking", "culinary"),
    ("grilling", "culinary"),
    ("barbecuing", "culinary"),
    ("picnicking", "culinary"),
    ("baking", "culinary"),
    ("brewing", "culinary"),
    ("foraging", "culinary"),
    ("tasting", "culinary"),
    ("feasting", "culinary"),
    ("snacking", "culinary"),
    ("roasting", "culinary"),
    ("juicing", "culinary"),
    ("studying", "educational"),
    ("learning", "educational"),
    ("teaching", "educational"),
    ("birdwatching", "educational"),
    ("stargazing", "educational"),
    ("observing", "educational"),
    ("identifying", "educational"),
    ("surveying", "educational"),
    ("mapping", "educational"),
    ("researching", "educational"),
    ("reading", "educational"),
    ("documenting", "educational"),
    ("running", "exercising"),
    ("jogging", "exercising"),
    ("stretching", "exercising"),
    ("sprinting", "exercising"),
    ("exercising", "exercising"),
    ("training", "exercising"),
    ("lifting", "exercising"),
    ("squatting", "exercising"),
    ("lunging", "exercising"),
    ("planking", "exercising"),
    ("spinning", "exercising"),
    ("pacing", "exercising"),
    ("gardening", "gardening"),
    ("planting", "gardening"),
    ("weeding", "gardening"),
    ("pruning", "gardening"),
    ("mowing", "gardening"),
    ("composting", "gardening"),
    ("watering", "gardening"),
    ("harvesting", "gardening"),
    ("mulching", "gardening"),
    ("sowing", "gardening"),
    ("trimming", "gardening"),
    ("fishing", "outdoor recreation"),
    ("hiking", "outdoor recreation"),
    ("camping", "outdoor recreation"),
    ("backpacking", "outdoor recreation"),
    ("trekking", "outdoor recreation"),
    ("rambling", "outdoor recreation"),
    ("bushwalking", "outdoor recreation"),
    ("angling", "outdoor recreation"),
    ("hunting", "outdoor recreation"),
    ("tramping", "outdoor recreation"),
    ("wandering", "outdoor recreation"),
    ("strolling", "outdoor recreation"),
    ("playing", "playing"),
    ("juggling", "playing"),
    ("skipping", "playing"),
    ("swinging", "playing"),
    ("sliding", "playing"),
    ("bouncing", "playing"),
    ("chasing", "playing"),
    ("frolicking", "playing"),
    ("romping", "playing"),
    ("tagging", "playing"),
    ("tumbling", "playing"),
    ("relaxing", "self care"),
    ("meditating", "self care"),
    ("thinking", "self care"),
    ("breathing", "self care"),
    ("resting", "self care"),
    ("napping", "self care"),
    ("unwinding", "self care"),
    ("reflecting", "self care"),
    ("daydreaming", "self care"),
    ("sunbathing", "self care"),
    ("lounging", "self care"),
    ("recharging", "self care"),
    ("chatting", "social"),
    ("gathering", "social"),
    ("celebrating", "social"),
    ("partying", "social"),
    ("socializing", "social"),
    ("meeting", "social"),
    ("bonding", "social"),
    ("mingling", "social"),
    ("reuniting", "social"),
    ("volunteering", "social"),
    ("dating", "social"),
    ("gossiping", "social"),
    ("cycling", "sports"),
    ("biking", "sports"),
    ("golfing", "sports"),
    ("bowling", "sports"),
    ("fencing", "sports"),
    ("boxing", "sports"),
    ("wrestling", "sports"),
    ("racing", "sports"),
    ("skateboarding", "sports"),
    ("batting", "sports"),
    ("pitching", "sports"),
    ("dribbling", "sports"),
    ("sightseeing", "tourism"),
    ("touring", "tourism"),
    ("exploring", "tourism"),
    ("cruising", "tourism"),
    ("vacationing", "tourism"),
    ("holidaying", "tourism"),
    ("glamping", "tourism"),
    ("lodging", "tourism"),
    ("visiting", "tourism"),
    ("staycationing", "tourism"),
    ("wayfaring", "tourism"),
    ("traveling", "travel"),
    ("journeying", "travel"),
    ("commuting", "travel"),
    ("driving", "travel"),
    ("riding", "travel"),
    ("flying", "travel"),
    ("roadtripping", "travel"),
    ("caravanning", "travel"),
    ("motorcycling", "travel"),
    ("ferrying", "travel"),
    ("navigating", "travel"),
    ("swimming", "water sports"),
    ("surfing", "water sports"),
    ("kayaking", "water sports"),
    ("canoeing", "water sports"),
    ("paddling", "water sports"),
    ("rafting", "water sports"),
    ("diving", "water sports"),
    ("snorkeling", "water sports"),
    ("sailing", "water sports"),
    ("rowing", "water sports"),
    ("wakeboarding", "water sports"),
    ("windsurfing", "water sports"),
    ("skiing", "winter sports"),
    ("snowboarding", "winter sports"),
    ("sledding", "winter sports"),
    ("skating", "winter sports"),
    ("curling", "winter sports"),
    ("snowshoeing", "winter sports"),
    ("tobogganing", "winter sports"),
    ("bobsledding", "winter sports"),
    ("luging", "winter sports"),
    ("mushing", "winter sports"),
    ("snowmobiling", "winter sports"),
    ("working", "working"),
    ("farming", "working"),
    ("building", "working"),
    ("logging", "working"),
    ("herding", "working"),
    ("ranching", "working"),
    ("beekeeping", "working"),
    ("milking", "working"),
    ("plowing", "working"),
    ("shepherding", "working"),
    ("welding", "working"),
];

/// Illustrative repertoire: 39 feature terms in 11 classes and 186
/// activity terms in 16 classes, mirroring the cardinalities the analysis
/// chain is sized for. Real deployments supply their own taxonomy file.
pub fn example_taxonomy() -> Taxonomy {
    let mut taxonomy = Taxonomy::new();
    for (term, class) in EXAMPLE_FEATURES {
        taxonomy
            .insert(NodeKind::Feature, term, class)
            .expect("example features are consistent");
    }
    for (term, class) in EXAMPLE_ACTIVITIES {
        taxonomy
            .insert(NodeKind::Activity, term, class)
            .expect("example activities are consistent");
    }
    taxonomy
}

/// A documented starter config for the generator.
pub fn example_config_toml() -> String {
    r#"# Synthetic event-stream config.
#
# Dates are quoted ISO strings. Rates are events per day per cell; with
# level = "class" the base applies to each class pair and is split evenly
# over its member term pairs.

seed = 42
window = { start = "2020-01-01", end = "2020-12-31" }

[rates]
level = "class"
base = 8.0

[seasonal]
amplitude = 0.3
period_days = 365.25
phase_days = 0.0

# A pandemic-style burst on one grouped cell.
[[impulses]]
feature_class = "urban greenspace"
activity_class = "self care"
start = "2020-03-13"
end = "2020-05-31"
factor = 3.0

[users]
initial_pool = 500
new_user_rate = 0.02

# Newcomer spike coincident with the impulse.
[users.spike]
start = "2020-03-13"
end = "2020-05-31"
factor = 8.0
"#
    .to_string()
}
