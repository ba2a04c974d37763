//! Grid worlds with item classes and one-hot landing-state features.
//!
//! Cells are states, indexed `y * width + x`. Actions move up, down, left and
//! right; moving into a wall leaves the agent in place. Landing on a cell
//! holding a class-`i` item emits `e_i`; any other cell emits the last
//! ("no item") feature. Items are never consumed.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{DeterministicPolicy, FeatureMdp};

pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];

const MARKERS: &[u8] = b"8OXYABCDEFGHIJKLMNPQRSTUVWZ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartDist {
    AllCells,
    EmptyCells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub num_item_classes: usize,
    pub items_per_class: usize,
    pub discount: f64,
    pub rng_seed: u64,
    pub start_dist: StartDist,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            width: 10,
            height: 10,
            num_item_classes: 4,
            items_per_class: 3,
            discount: 0.9,
            rng_seed: 0,
            start_dist: StartDist::EmptyCells,
        }
    }
}

impl GridSpec {
    /// Feature dimension: one per item class plus "no item".
    pub fn dim(&self) -> usize {
        self.num_item_classes + 1
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("grid width and height must be positive"));
        }
        let items = self.num_item_classes * self.items_per_class;
        if items > self.num_cells() {
            return Err(Error::invalid(format!(
                "{items} items do not fit in a {}x{} grid",
                self.width, self.height
            )));
        }
        if self.start_dist == StartDist::EmptyCells && items == self.num_cells() {
            return Err(Error::invalid("no empty cell to start from"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid(format!(
                "discount {} not in [0, 1)",
                self.discount
            )));
        }
        Ok(())
    }

    /// Reads a spec from `.json` or `.toml` (by extension; anything else is
    /// tried as TOML).
    pub fn load(path: &Path) -> Result<GridSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: GridSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| Error::parse(path, e))?
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: GridSpec,
    /// Item class per cell.
    items: Vec<Option<usize>>,
    mdp: FeatureMdp,
}

impl GridWorld {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn mdp(&self) -> &FeatureMdp {
        &self.mdp
    }

    pub fn into_mdp(self) -> FeatureMdp {
        self.mdp
    }

    pub fn item_at(&self, x: usize, y: usize) -> Option<usize> {
        self.items[y * self.spec.width + x]
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        (state % self.spec.width, state / self.spec.width)
    }

    /// Markers for item classes followed by `none`; used as feature labels.
    pub fn feature_labels(&self) -> Vec<String> {
        (0..self.spec.num_item_classes)
            .map(|c| marker(c).to_string())
            .chain(std::iter::once("none".to_string()))
            .collect()
    }

    /// One line per row, top row first: item markers, `.` for empty cells.
    pub fn render_ascii(&self) -> String {
        let mut out = String::new();
        for y in 0..self.spec.height {
            for x in 0..self.spec.width {
                out.push(self.item_at(x, y).map(marker).unwrap_or('.'));
            }
            out.push('\n');
        }
        out
    }

    /// Most likely start cell (lowest index on ties).
    pub fn canonical_start(&self) -> usize {
        let dist = self.mdp.initial_dist();
        let mut best = 0;
        for (s, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = s;
            }
        }
        best
    }

    /// Cells visited by `policy` from `start` over `steps` moves, start included.
    pub fn trajectory(
        &self,
        policy: &DeterministicPolicy,
        start: usize,
        steps: usize,
    ) -> Vec<(usize, usize)> {
        let mut state = start;
        let mut path = vec![self.cell(state)];
        for _ in 0..steps {
            state = step(&self.spec, state, policy.action(state));
            path.push(self.cell(state));
        }
        path
    }
}

fn marker(class: usize) -> char {
    MARKERS
        .get(class)
        .map(|&b| b as char)
        .unwrap_or('*')
}

fn step(spec: &GridSpec, state: usize, action: usize) -> usize {
    let (x, y) = (state % spec.width, state / spec.width);
    let (nx, ny) = match action {
        0 => (x, y.saturating_sub(1)),
        1 => (x, (y + 1).min(spec.height - 1)),
        2 => (x.saturating_sub(1), y),
        _ => ((x + 1).min(spec.width - 1), y),
    };
    ny * spec.width + nx
}

pub fn generate(spec: &GridSpec) -> Result<GridWorld> {
    spec.validate()?;
    let cells = spec.num_cells();
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let total_items = spec.num_item_classes * spec.items_per_class;
    let mut items = vec![None; cells];
    for (k, cell) in sample(&mut rng, cells, total_items).into_iter().enumerate() {
        items[cell] = Some(k / spec.items_per_class);
    }

    let a_n = ACTION_NAMES.len();
    let mut transitions = vec![0.0; cells * a_n * cells];
    let mut features = vec![0.0; cells * a_n * cells * d];
    for s in 0..cells {
        for a in 0..a_n {
            transitions[(s * a_n + a) * cells + step(spec, s, a)] = 1.0;
            for (next, item) in items.iter().enumerate() {
                let k = item.unwrap_or(d - 1);
                features[((s * a_n + a) * cells + next) * d + k] = 1.0;
            }
        }
    }

    let allowed: Vec<bool> = match spec.start_dist {
        StartDist::AllCells => vec![true; cells],
        StartDist::EmptyCells => items.iter().map(Option::is_none).collect(),
    };
    let count = allowed.iter().filter(|&&ok| ok).count() as f64;
    let initial = allowed
        .iter()
        .map(|&ok| if ok { 1.0 / count } else { 0.0 })
        .collect();

    let mdp = FeatureMdp::new(cells, a_n, d, spec.discount, transitions, features, initial)?;
    Ok(GridWorld {
        spec: spec.clone(),
        items,
        mdp,
    })
}
