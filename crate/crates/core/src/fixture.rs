//! Seeded synthetic How-To corpora.
//!
//! Titles follow a skewed (Zipf-like) template distribution, first steps all
//! carry a start marker token and last steps an end marker, the way real
//! recipe corpora open with "Ingredients" and close with "Enjoy". That is
//! enough for the biased cloze generator to leak answers through the choice
//! list alone.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clozegen::{context_of, qid, ClozeQuestion, PLACEHOLDER};
use crate::corpus::{normalize_title, write_corpus, Procedure, Split, Step};
use crate::error::Result;
use crate::rng::{self, Rng};

pub const START_MARKER: &str = "supplies";
pub const END_MARKER: &str = "enjoy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub n_procedures: usize,
    pub min_steps: usize,
    pub max_steps: usize,
    pub val_fraction: f64,
    /// Step counts are drawn with weight `step_decay^(n - min_steps)`.
    pub step_decay: f64,
    /// Distinct titles per middle-step group, in [`GROUPS`] order. Every
    /// group is equally likely to fill a middle step, so small groups hold
    /// few, frequent titles and large groups many rare ones.
    pub group_sizes: Vec<usize>,
    /// Distinct start and end marker titles in use.
    pub marker_variants: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            n_procedures: 600,
            min_steps: 6,
            max_steps: 12,
            val_fraction: 0.2,
            step_decay: 1.0,
            group_sizes: vec![2, 16, 4, 12, 8, 20],
            marker_variants: 1,
            seed: 0,
        }
    }
}

/// One verb and the parts it is applied to.
pub struct Group {
    pub category: &'static str,
    pub verb: &'static str,
    pub parts: &'static [&'static str],
}

pub const GROUPS: &[Group] = &[
    Group {
        category: "woodworking",
        verb: "cut",
        parts: &["legs", "top", "sides", "back panel", "shelves", "dowels", "slats", "rails", "stiles", "cleats", "braces", "spacers", "aprons", "stretchers", "runners", "battens", "risers", "treads", "jambs", "mullions", "panels", "blanks", "offcuts", "tenons"],
    },
    Group {
        category: "woodworking",
        verb: "sand",
        parts: &["edges", "corners", "surface", "grain", "end grain", "bevels", "chamfers", "roundovers", "inside faces", "outside faces", "glue lines", "knots", "seams", "curves", "profile", "lip", "rim", "groove", "rebate", "mortise", "ledge", "tabletop", "armrest", "headboard"],
    },
    Group {
        category: "decoration",
        verb: "paint",
        parts: &["letters", "stencil", "pumpkin", "ornaments", "frame", "jar", "vase", "sign", "pinecones", "canvas", "stones", "tiles", "pots", "bottles", "shells", "gourds", "eggs", "masks", "plates", "mugs", "boxes", "crates", "birdhouse", "lanterns"],
    },
    Group {
        category: "decoration",
        verb: "hang",
        parts: &["garland", "wreath", "lights", "bunting", "streamers", "ribbon", "tassels", "pompoms", "mobile", "curtain", "banner", "stars", "snowflakes", "hearts", "balloons", "feathers", "beads", "chimes", "wreath hook", "photos", "lanterns", "paper chain", "ivy", "mistletoe"],
    },
    Group {
        category: "kitchen",
        verb: "mix",
        parts: &["batter", "dough", "dressing", "marinade", "glaze", "frosting", "filling", "dry ingredients", "wet ingredients", "spices", "herbs", "sauce", "custard", "meringue", "crumble", "streusel", "syrup", "brine", "pesto", "salsa", "dip", "rub", "icing", "puree"],
    },
    Group {
        category: "kitchen",
        verb: "bake",
        parts: &["crust", "loaf", "muffins", "cookies", "biscuits", "scones", "pie", "tart", "cake layers", "brownies", "rolls", "bagels", "pretzels", "crackers", "granola", "cobbler", "quiche", "casserole", "focaccia", "shortbread", "meringues", "galette", "strudel", "flatbread"],
    },
];

/// Start-step titles; every one contains [`START_MARKER`].
const START_TITLES: &[&str] = &["Supplies", "Gather Supplies", "Supplies and Tools", "Supplies Needed"];
/// Last-step titles; every one contains [`END_MARKER`].
const END_TITLES: &[&str] = &["Enjoy!", "Enjoy It", "Finished - Enjoy", "Enjoy the Result"];

const OBJECTS: &[(&str, &[&str])] = &[
    ("woodworking", &["shelf", "bench", "stool", "cutting board", "bookcase", "planter box", "coat rack", "side table"]),
    ("decoration", &["wreath", "centerpiece", "mantel display", "porch sign", "party backdrop", "holiday tree", "door hanger", "window display"]),
    ("kitchen", &["bread", "pie", "cookies", "muffins", "granola", "scones", "brunch spread", "picnic basket"]),
];

const FILLER: &[&str] = &[
    "Take your time with this part.",
    "It helps to work on a flat, clean surface.",
    "Check the result before moving on.",
    "A second pair of hands makes this easier.",
    "Do not rush, patience pays off here.",
    "Wipe away any excess as you go.",
];

/// Draws an index in `0..n` with probability proportional to `decay^i`.
fn geometric(rng: &mut Rng, n: usize, decay: f64) -> usize {
    let weights: Vec<f64> = (0..n).map(|i| decay.powi(i as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    n - 1
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn decorate(rng: &mut Rng, title: String, position: usize) -> String {
    match rng.gen_range(0..10) {
        0 | 1 => format!("Step {}: {title}", position + 1),
        2 => format!("{}. {title}", position + 1),
        _ => title,
    }
}

fn procedure(cfg: &FixtureConfig, index: usize, rng: &mut Rng) -> Procedure {
    let (category, objects) = OBJECTS[rng.gen_range(0..OBJECTS.len())];
    let object = objects[rng.gen_range(0..objects.len())];
    let groups: Vec<(&Group, usize)> = GROUPS
        .iter()
        .zip(&cfg.group_sizes)
        .filter(|(_, &n)| n > 0)
        .map(|(g, &n)| (g, n.min(g.parts.len())))
        .collect();
    let mv = cfg.marker_variants.clamp(1, START_TITLES.len());
    let n = cfg.min_steps + geometric(rng, cfg.max_steps - cfg.min_steps + 1, cfg.step_decay);
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let core = if i == 0 {
            START_TITLES[rng.gen_range(0..mv)].to_string()
        } else if i == n - 1 {
            END_TITLES[rng.gen_range(0..mv)].to_string()
        } else {
            let (g, size) = groups[rng.gen_range(0..groups.len())];
            title_case(&format!("{} the {}", g.verb, g.parts[rng.gen_range(0..size)]))
        };
        let plain = normalize_title(&core);
        let text = format!(
            "{} for the {object}. {}",
            plain.trim_end_matches('!'),
            FILLER[rng.gen_range(0..FILLER.len())]
        );
        let images = (0..rng.gen_range(1..=2))
            .map(|k| format!("images/fx{index:04}/step{:02}_{k}.jpg", i + 1))
            .collect();
        steps.push(Step {
            title: decorate(rng, core, i),
            text,
            images,
        });
    }
    let split = if rng.gen::<f64>() < cfg.val_fraction {
        Split::Val
    } else {
        Split::Train
    };
    Procedure {
        id: format!("fx{index:04}"),
        category: category.to_string(),
        title: format!("How to Make a {}", title_case(object)),
        split,
        steps,
    }
}

pub fn fixture_corpus(cfg: &FixtureConfig) -> Vec<Procedure> {
    let mut rng = rng::stream(cfg.seed, "fixture");
    (0..cfg.n_procedures).map(|i| procedure(cfg, i, &mut rng)).collect()
}

/// The default fixture for a seed: 600 procedures of 6 to 12 steps.
pub fn pipeline_fixture(seed: u64) -> Vec<Procedure> {
    fixture_corpus(&FixtureConfig {
        seed,
        ..FixtureConfig::default()
    })
}

pub fn write_fixture(path: &Path, seed: u64) -> Result<Vec<Procedure>> {
    let procs = pipeline_fixture(seed);
    write_corpus(path, &procs)?;
    Ok(procs)
}

/// A dataset with no choice-only signal: one question per window start of
/// every procedure, whose choices are `nchoices` distinct titles drawn
/// uniformly from the corpus title pool with the answer at a uniform
/// position. Window, context and qid follow the normal layout, but the
/// answer need not match the source step.
pub fn no_signal_dataset(procs: &[Procedure], nchoices: usize, seed: u64) -> Vec<ClozeQuestion> {
    let mut pool: Vec<String> = procs
        .iter()
        .flat_map(|p| p.steps.iter().map(|s| normalize_title(&s.title)))
        .filter(|t| !t.is_empty())
        .collect();
    pool.sort();
    pool.dedup();
    let window = 4;
    let mut out = Vec::new();
    for p in procs.iter().filter(|p| p.steps.len() >= window) {
        for start in 0..=p.steps.len() - window {
            let id = format!("{}:{start}", p.id);
            let mut r = rng::stream(seed, &format!("null:{id}"));
            let offset = r.gen_range(0..window);
            let mut question: Vec<String> = p.steps[start..start + window]
                .iter()
                .map(|s| normalize_title(&s.title))
                .collect();
            question[offset] = PLACEHOLDER.to_string();
            let choices: Vec<String> = pool.choose_multiple(&mut r, nchoices).cloned().collect();
            out.push(ClozeQuestion {
                qid: qid(&p.id, start, offset),
                procedure_id: p.id.clone(),
                split: p.split,
                context: context_of(p),
                question,
                placeholder_index: offset,
                choices,
                answer_index: r.gen_range(0..nchoices),
            });
        }
    }
    out
}
