//! Synthetic scenes and attribute-free spatial queries.
//!
//! Axis convention (no camera): `+x` is right, `+y` is front, `+z` is up.
//!
//! Queries never name the target's category, and every category that can be
//! a target appears at least twice in its scene, so a query can only be
//! answered from geometry. Ground truth comes from [`relation_oracle`].

use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::aspect_ratio_delta;
use crate::error::{Error, Result};
use crate::quaternion::{Axis, Position3};
use crate::seeds::rng_for;

pub const FORMAT_VERSION: &str = "asr-synthetic/1";
/// Minimum distance between any two object centers.
pub const MIN_SEPARATION: f64 = 0.05;
pub const DEFAULT_MIN_MARGIN: f64 = 0.3;
/// Aspect-ratio stratum thresholds, most inclusive first.
pub const DELTA_THRESHOLDS: [f64; 6] = [1.0, 0.5, 0.3, 0.2, 0.1, 0.05];

const PLACEMENT_RETRIES: usize = 10_000;
const QUERY_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Position3,
    pub max: Position3,
}

impl Aabb {
    pub fn new(min: Position3, max: Position3) -> Result<Self> {
        let ok = min.is_finite()
            && max.is_finite()
            && Axis::ALL.iter().all(|&a| max.get(a) > min.get(a));
        if !ok {
            return Err(Error::Config(format!("degenerate extent {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    /// Room-like box: `x, y` centered on zero, `z` from the floor up.
    pub fn room(width: f64, depth: f64, height: f64) -> Result<Self> {
        Self::new(
            Position3::new(-width / 2.0, -depth / 2.0, 0.0),
            Position3::new(width / 2.0, depth / 2.0, height),
        )
    }

    pub fn span(&self) -> [f64; 3] {
        (self.max - self.min).to_array()
    }

    pub fn contains(&self, p: Position3) -> bool {
        Axis::ALL
            .iter()
            .all(|&a| p.get(a) >= self.min.get(a) && p.get(a) <= self.max.get(a))
    }

    pub fn translated(&self, by: Position3) -> Self {
        Self {
            min: self.min + by,
            max: self.max + by,
        }
    }
}

impl Default for Aabb {
    fn default() -> Self {
        Self::room(10.0, 10.0, 3.0).expect("static extent is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u32,
    pub category: u32,
    pub center: Position3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: u64,
    pub objects: Vec<SceneObject>,
    pub extent: Aabb,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.get(id as usize).filter(|o| o.object_id == id)
    }

    pub fn center(&self, id: u32) -> Result<Position3> {
        self.object(id)
            .map(|o| o.center)
            .ok_or_else(|| Error::Config(format!("object {id} not in scene {}", self.scene_id)))
    }

    pub fn category_count(&self, category: u32) -> usize {
        self.objects
            .iter()
            .filter(|o| o.category == category)
            .count()
    }

    /// Every object moved by `by`; the extent moves with it.
    pub fn translated(&self, by: Position3) -> Scene {
        Scene {
            scene_id: self.scene_id,
            objects: self
                .objects
                .iter()
                .map(|o| SceneObject {
                    center: o.center + by,
                    ..*o
                })
                .collect(),
            extent: self.extent.translated(by),
        }
    }

    /// Checks structural invariants: dense ids, containment, separation.
    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            if o.object_id as usize != i {
                return Err(Error::Config(format!("object ids not dense at index {i}")));
            }
            if !o.center.is_finite() || !self.extent.contains(o.center) {
                return Err(Error::Config(format!("object {i} outside extent")));
            }
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if a.center.distance(b.center) <= MIN_SEPARATION {
                    return Err(Error::Config(format!(
                        "objects {} and {} closer than {MIN_SEPARATION}",
                        a.object_id, b.object_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rejection-samples `n_objects` centers and assigns categories so that
/// every category used appears at least twice.
pub fn gen_scene(seed: u64, n_objects: usize, extent: Aabb, n_categories: u32) -> Result<Scene> {
    if n_objects < 3 {
        return Err(Error::Config(format!(
            "need at least 3 objects, got {n_objects}"
        )));
    }
    if n_categories < 2 {
        return Err(Error::Config(format!(
            "need at least 2 categories, got {n_categories}"
        )));
    }
    let mut rng = rng_for(seed, "scene");
    let mut centers: Vec<Position3> = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let p = Position3::new(
                rng.gen_range(extent.min.x..=extent.max.x),
                rng.gen_range(extent.min.y..=extent.max.y),
                rng.gen_range(extent.min.z..=extent.max.z),
            );
            if centers.iter().all(|c| c.distance(p) > MIN_SEPARATION) {
                centers.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SceneGen(format!(
                "could not place object {i} of {n_objects} after {PLACEMENT_RETRIES} tries; extent too small"
            )));
        }
    }

    let max_used = (n_categories as usize).min(n_objects / 2);
    let used = rng.gen_range(1..=max_used);
    let mut pool: Vec<u32> = (0..n_categories).collect();
    pool.shuffle(&mut rng);
    pool.truncate(used);
    let mut cats: Vec<u32> = pool.iter().flat_map(|&c| [c, c]).collect();
    while cats.len() < n_objects {
        cats.push(pool[rng.gen_range(0..used)]);
    }
    cats.shuffle(&mut rng);

    let objects = centers
        .into_iter()
        .zip(cats)
        .enumerate()
        .map(|(i, (center, category))| SceneObject {
            object_id: i as u32,
            category,
            center,
        })
        .collect();
    Ok(Scene {
        scene_id: seed,
        objects,
        extent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LeftOf,
    RightOf,
    InFrontOf,
    Behind,
    Above,
    Below,
    NearestTo,
    Between,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::LeftOf,
        Relation::RightOf,
        Relation::InFrontOf,
        Relation::Behind,
        Relation::Above,
        Relation::Below,
        Relation::NearestTo,
        Relation::Between,
    ];

    pub fn index(self) -> usize {
        Relation::ALL
            .iter()
            .position(|&r| r == self)
            .expect("listed")
    }

    pub fn anchor_count(self) -> usize {
        if self == Relation::Between {
            2
        } else {
            1
        }
    }

    /// Axis and sign for directional relations.
    pub fn direction(self) -> Option<(Axis, f64)> {
        match self {
            Relation::LeftOf => Some((Axis::X, -1.0)),
            Relation::RightOf => Some((Axis::X, 1.0)),
            Relation::InFrontOf => Some((Axis::Y, 1.0)),
            Relation::Behind => Some((Axis::Y, -1.0)),
            Relation::Above => Some((Axis::Z, 1.0)),
            Relation::Below => Some((Axis::Z, -1.0)),
            Relation::NearestTo | Relation::Between => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::LeftOf => "left_of",
            Relation::RightOf => "right_of",
            Relation::InFrontOf => "in_front_of",
            Relation::Behind => "behind",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::NearestTo => "nearest_to",
            Relation::Between => "between",
        }
    }
}

impl FromStr for Relation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::UnknownRelation(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialQuery {
    pub relation: Relation,
    pub anchor_ids: Vec<u32>,
    pub target_id: u32,
    /// Oracle key gap between the best and second-best candidates.
    pub margin: f64,
}

/// A candidate with its oracle key; higher keys rank first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub object_id: u32,
    pub key: f64,
}

/// True when `d` points along `axis` in direction `sign` and that component
/// strictly dominates the other two in magnitude.
pub fn dominates(d: Position3, axis: Axis, sign: f64) -> bool {
    let along = d.get(axis) * sign;
    along > 0.0
        && Axis::ALL
            .iter()
            .filter(|&&a| a != axis)
            .all(|&a| d.get(a).abs() < along)
}

/// Ranks every non-anchor object for `relation`.
///
/// Directional relations keep only candidates passing [`dominates`] and
/// rank by signed displacement along the relation axis. `nearest_to` ranks
/// by distance to the anchor, `between` by distance to the anchors'
/// midpoint. Ties go to the lower object id.
pub fn relation_oracle(
    scene: &Scene,
    relation: Relation,
    anchor_ids: &[u32],
) -> Result<Vec<RankedCandidate>> {
    if anchor_ids.len() != relation.anchor_count() {
        return Err(Error::Config(format!(
            "{} needs {} anchor(s), got {}",
            relation.name(),
            relation.anchor_count(),
            anchor_ids.len()
        )));
    }
    let anchors: Vec<Position3> = anchor_ids
        .iter()
        .map(|&id| scene.center(id))
        .collect::<Result<_>>()?;
    let reference = match relation {
        Relation::Between => (anchors[0] + anchors[1]).scale(0.5),
        _ => anchors[0],
    };
    let mut ranked: Vec<RankedCandidate> = scene
        .objects
        .iter()
        .filter(|o| !anchor_ids.contains(&o.object_id))
        .filter_map(|o| {
            let d = o.center - reference;
            let key = match relation.direction() {
                Some((axis, sign)) => {
                    if !dominates(d, axis, sign) {
                        return None;
                    }
                    d.get(axis) * sign
                }
                None => -d.norm(),
            };
            Some(RankedCandidate {
                object_id: o.object_id,
                key,
            })
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.key
            .partial_cmp(&a.key)
            .expect("finite keys")
            .then(a.object_id.cmp(&b.object_id))
    });
    Ok(ranked)
}

/// Samples a uniquely answerable, attribute-free query over all relations.
pub fn gen_query(scene: &Scene, seed: u64, min_margin: f64) -> Option<SpatialQuery> {
    gen_query_with(scene, seed, min_margin, &Relation::ALL)
}

/// As [`gen_query`], drawing relations from `relations`.
///
/// Accepts a draw only if there are at least two ranked candidates, the
/// top-two key gap is at least `min_margin`, and the target's category is
/// shared by another object.
pub fn gen_query_with(
    scene: &Scene,
    seed: u64,
    min_margin: f64,
    relations: &[Relation],
) -> Option<SpatialQuery> {
    if relations.is_empty() || scene.len() < 3 || min_margin.is_nan() {
        return None;
    }
    let mut rng = rng_for(seed, "query");
    let ids: Vec<u32> = scene.objects.iter().map(|o| o.object_id).collect();
    for _ in 0..QUERY_ATTEMPTS {
        let relation = relations[rng.gen_range(0..relations.len())];
        let anchor_ids: Vec<u32> = ids
            .choose_multiple(&mut rng, relation.anchor_count())
            .copied()
            .collect();
        let ranked = relation_oracle(scene, relation, &anchor_ids).ok()?;
        if ranked.len() < 2 {
            continue;
        }
        let margin = ranked[0].key - ranked[1].key;
        if margin < min_margin {
            continue;
        }
        let target = ranked[0].object_id;
        let category = scene.objects[target as usize].category;
        if scene.category_count(category) < 2 {
            continue;
        }
        return Some(SpatialQuery {
            relation,
            anchor_ids,
            target_id: target,
            margin,
        });
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationBudget {
    pub n_objects: u64,
    pub k: u64,
    /// Unordered pairs, `n (n - 1) / 2`.
    pub full_pair_count: u64,
    /// Ordered pairs, `n (n - 1)`.
    pub directed_pair_count: u64,
    /// Directed KNN edges, `n * min(k, n - 1)`.
    pub knn_edge_count: u64,
    /// Filled only when measured against queries.
    pub knn_recall: Option<f64>,
}

pub fn relation_budget(n_objects: u64, k: u64) -> Result<RelationBudget> {
    if n_objects < 2 || k < 1 {
        return Err(Error::Config(format!(
            "relation budget needs n >= 2 and k >= 1, got n={n_objects} k={k}"
        )));
    }
    Ok(RelationBudget {
        n_objects,
        k,
        full_pair_count: n_objects * (n_objects - 1) / 2,
        directed_pair_count: n_objects * (n_objects - 1),
        knn_edge_count: n_objects * k.min(n_objects - 1),
        knn_recall: None,
    })
}

/// The `k` nearest other objects of each object, ties by object id.
pub fn knn_lists(scene: &Scene, k: usize) -> Vec<Vec<u32>> {
    scene
        .objects
        .iter()
        .map(|o| {
            let mut others: Vec<(f64, u32)> = scene
                .objects
                .iter()
                .filter(|p| p.object_id != o.object_id)
                .map(|p| (o.center.distance(p.center), p.object_id))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, id)| id).collect()
        })
        .collect()
}

/// Whether `a` and `b` are joined in the KNN graph (either lists the other).
pub fn knn_connected(lists: &[Vec<u32>], a: u32, b: u32) -> bool {
    lists[a as usize].contains(&b) || lists[b as usize].contains(&a)
}

/// Fraction of queries whose every anchor-target pair survives KNN pruning.
pub fn knn_relation_recall(scene: &Scene, queries: &[SpatialQuery], k: usize) -> f64 {
    if queries.is_empty() {
        return 1.0;
    }
    let lists = knn_lists(scene, k);
    let hits = queries
        .iter()
        .filter(|q| {
            q.anchor_ids
                .iter()
                .all(|&a| knn_connected(&lists, a, q.target_id))
        })
        .count();
    hits as f64 / queries.len() as f64
}

/// A scene where KNN pruning at `k = 2` drops the only relation a query
/// needs.
///
/// The anchor sits next to two distractors, while the target sits in a
/// separate cluster with its own two neighbours, so neither endpoint lists
/// the other.
pub fn pruning_counterexample() -> (Scene, SpatialQuery) {
    let points = [
        (0.0, 0.0, 0.0, 0),
        (0.6, 0.2, 0.0, 0),
        (0.3, -0.5, 0.0, 2),
        (-4.2, 0.0, 0.0, 1),
        (-3.5, 0.3, 0.0, 1),
        (-3.6, -0.4, 0.0, 2),
    ];
    let scene = Scene {
        scene_id: 0,
        objects: points
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z, c))| SceneObject {
                object_id: i as u32,
                category: c,
                center: Position3::new(x, y, z),
            })
            .collect(),
        extent: Aabb::default(),
    };
    let query = SpatialQuery {
        relation: Relation::LeftOf,
        anchor_ids: vec![0],
        target_id: 3,
        margin: 0.6,
    };
    (scene, query)
}

/// Aspect ratio of the first anchor-to-target displacement.
pub fn query_delta(scene: &Scene, query: &SpatialQuery) -> Option<f64> {
    let anchor = scene.center(*query.anchor_ids.first()?).ok()?;
    let target = scene.center(query.target_id).ok()?;
    aspect_ratio_delta(target - anchor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub threshold: f64,
    /// Indices into the query list.
    pub members: Vec<usize>,
}

/// Buckets single-anchor queries by `delta <= threshold`.
///
/// Queries with more than one anchor or an undefined delta are skipped.
pub fn delta_stratify(queries: &[SpatialQuery], scene: &Scene) -> Vec<Stratum> {
    let deltas: Vec<Option<f64>> = queries
        .iter()
        .map(|q| {
            if q.anchor_ids.len() == 1 {
                query_delta(scene, q)
            } else {
                None
            }
        })
        .collect();
    DELTA_THRESHOLDS
        .iter()
        .map(|&threshold| Stratum {
            threshold,
            members: deltas
                .iter()
                .enumerate()
                .filter(|(_, d)| d.is_some_and(|d| d <= threshold))
                .map(|(i, _)| i)
                .collect(),
        })
        .collect()
}

/// Parameters for a batch of scenes with queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n_scenes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub n_categories: u32,
    pub extent: Aabb,
    pub min_margin: f64,
    pub queries_per_scene: usize,
    pub relations: Vec<Relation>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_scenes: 100,
            min_objects: 6,
            max_objects: 12,
            n_categories: 8,
            extent: Aabb::default(),
            min_margin: DEFAULT_MIN_MARGIN,
            queries_per_scene: 4,
            relations: Relation::ALL.to_vec(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_objects < 3 || self.max_objects < self.min_objects {
            return Err(Error::Config(format!(
                "object range {}..={} invalid",
                self.min_objects, self.max_objects
            )));
        }
        if self.relations.is_empty() {
            return Err(Error::Config("relations must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub version: String,
    pub scene: Scene,
    pub queries: Vec<SpatialQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisConvention {
    pub x: String,
    pub y: String,
    pub z: String,
}

impl Default for AxisConvention {
    fn default() -> Self {
        Self {
            x: "right".into(),
            y: "front".into(),
            z: "up".into(),
        }
    }
}

/// First line of a scene JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: String,
    pub kind: String,
    pub axis_convention: AxisConvention,
    pub seed: u64,
    pub config: GenConfig,
}

impl DatasetHeader {
    pub fn new(seed: u64, config: GenConfig) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            kind: "header".into(),
            axis_convention: AxisConvention::default(),
            seed,
            config,
        }
    }
}

/// Scenes and queries for `cfg`, deterministic in `seed`.
///
/// Scene `i` is seeded from `(seed, "scene/i")`, so scenes can be generated
/// independently of each other.
pub fn generate_dataset(seed: u64, cfg: &GenConfig) -> Result<Vec<SceneRecord>> {
    cfg.validate()?;
    (0..cfg.n_scenes)
        .map(|i| generate_record(seed, i, cfg))
        .collect()
}

pub fn generate_record(seed: u64, index: usize, cfg: &GenConfig) -> Result<SceneRecord> {
    let scene_seed = crate::seeds::derive_seed(seed, &format!("scene/{index}"));
    let mut rng = rng_for(scene_seed, "size");
    let n = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let scene = gen_scene(scene_seed, n, cfg.extent, cfg.n_categories)?;
    let mut queries: Vec<SpatialQuery> = Vec::new();
    let mut attempt = 0u64;
    while queries.len() < cfg.queries_per_scene && attempt < 8 * cfg.queries_per_scene as u64 + 8 {
        let qseed = crate::seeds::derive_seed(scene_seed, &format!("query/{attempt}"));
        attempt += 1;
        if let Some(q) = gen_query_with(&scene, qseed, cfg.min_margin, &cfg.relations) {
            if !queries.contains(&q) {
                queries.push(q);
            }
        }
    }
    Ok(SceneRecord {
        version: FORMAT_VERSION.into(),
        scene,
        queries,
    })
}

pub fn write_jsonl<W: Write>(
    mut w: W,
    header: &DatasetHeader,
    records: &[SceneRecord],
) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a scene JSONL stream. The header line is optional; blank lines are
/// skipped. Errors carry the 1-based line number.
pub fn read_jsonl<R: Read>(r: R, path: &str) -> Result<(Option<DatasetHeader>, Vec<SceneRecord>)> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_string(),
            line: line_no,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let version = value.get("version").and_then(|v| v.as_str());
        if version != Some(FORMAT_VERSION) {
            return Err(parse_err(format!(
                "expected version {FORMAT_VERSION:?}, found {version:?}"
            )));
        }
        if value.get("kind").and_then(|k| k.as_str()) == Some("header") {
            if line_no != 1 && header.is_none() && !records.is_empty() {
                return Err(parse_err("header must precede scenes".into()));
            }
            header = Some(serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?);
            continue;
        }
        let record: SceneRecord =
            serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        record
            .scene
            .validate()
            .map_err(|e| parse_err(e.to_string()))?;
        records.push(record);
    }
    Ok((header, records))
}
