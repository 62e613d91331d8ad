//! Scene and episode generation: labeled tokens in continuous 2D space,
//! saccade sequences over them, model input encoding, and the line-oriented
//! dump format.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Number of distinct token labels ('a'..='z').
pub const ALPHABET: usize = 26;
/// Half-width of the square scene bounds.
pub const SCENE_BOUND: f64 = 4.0;
/// Minimum Euclidean distance between any two tokens in a scene.
pub const MIN_TOKEN_DIST: f64 = 0.25;
/// Placement attempts per scene before generation gives up.
pub const PLACEMENT_BUDGET: usize = 10_000;
/// Model input width: one-hot label plus 2D saccade.
pub const INPUT_DIM: usize = ALPHABET + 2;

#[derive(Debug, Error)]
pub enum WorldGenError {
    #[error("placement budget of {budget} attempts exhausted after {placed} tokens; constraint is likely pathological")]
    PlacementBudgetExhausted { budget: usize, placed: usize },
    #[error("no legal successor from token {from}; withheld pairs over-constrain the walk")]
    NoLegalSuccessor { from: usize },
    #[error("scene has no token at the origin")]
    NoOriginToken,
    #[error("episode path must visit at least 2 tokens, got {0}")]
    PathTooShort(usize),
    #[error("episode path repeats token {0} consecutively")]
    SelfSaccade(usize),
    #[error("malformed dump line {line}: {reason}")]
    BadDumpLine { line: usize, reason: String },
}

/// 2D point or displacement in scene units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }
}

/// One labeled token. Labels are integers 0..26, displayed as 'a'..='z'.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Token {
    pub label: u8,
    pub position: Vec2,
}

impl Token {
    pub fn label_char(&self) -> char {
        (b'a' + self.label) as char
    }
}

/// A set of 4-6 labeled tokens, exactly one of them at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tokens: Vec<Token>,
    /// Seed the scene was generated from, for provenance.
    pub seed: u64,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the token sitting exactly at (0, 0).
    pub fn origin_index(&self) -> Result<usize, WorldGenError> {
        self.tokens
            .iter()
            .position(|t| t.position.x == 0.0 && t.position.y == 0.0)
            .ok_or(WorldGenError::NoOriginToken)
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.tokens.len() {
            for j in (i + 1)..self.tokens.len() {
                best = best.min(self.tokens[i].position.dist(self.tokens[j].position));
            }
        }
        best
    }
}

/// One hop of a saccade walk. `saccade_out` is the displacement from this
/// token to the next visited token, whose label is `target_label`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub token_index: usize,
    pub label: u8,
    pub position: Vec2,
    pub saccade_out: Vec2,
    pub target_label: u8,
}

/// A saccade walk over a scene. A walk of `len` steps visits `len + 1`
/// tokens; every recorded step carries its outgoing saccade and the label
/// it lands on, so every step is a supervised prediction problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub scene: Scene,
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Training-time restriction: the restricted label only ever appears at
/// `control_position`, and nothing else may come within `exclusion_radius`
/// of that spot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConstraint {
    pub restricted_label: u8,
    pub control_position: Vec2,
    pub exclusion_radius: f64,
}

impl Default for TrainConstraint {
    fn default() -> Self {
        TrainConstraint {
            restricted_label: b'k' - b'a',
            control_position: Vec2::new(1.0, 1.0),
            exclusion_radius: MIN_TOKEN_DIST,
        }
    }
}

fn seeded(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generates a scene with a uniformly drawn token count in {4, 5, 6}.
pub fn generate_scene(
    rng: &mut impl Rng,
    constraint: Option<&TrainConstraint>,
) -> Result<Scene, WorldGenError> {
    let n = rng.gen_range(4..=6);
    generate_scene_with_count(rng, n, constraint)
}

/// Generates a scene with a fixed token count. Token 0 sits at the origin;
/// all other positions are rejection-sampled inside the scene bounds until
/// the minimum spacing (and the constraint's exclusion zone) holds.
pub fn generate_scene_with_count(
    rng: &mut impl Rng,
    n_tokens: usize,
    constraint: Option<&TrainConstraint>,
) -> Result<Scene, WorldGenError> {
    // Each scene gets its own recorded stream so it can be regenerated
    // from `Scene::seed` alone.
    let seed: u64 = rng.gen();
    let mut srng = seeded(seed);
    let tokens = place_tokens(&mut srng, n_tokens, constraint)?;
    Ok(Scene { tokens, seed })
}

fn place_tokens(
    rng: &mut impl Rng,
    n_tokens: usize,
    constraint: Option<&TrainConstraint>,
) -> Result<Vec<Token>, WorldGenError> {
    assert!((4..=6).contains(&n_tokens), "scenes hold 4-6 tokens");

    // Labels first. Under a constraint the restricted label may appear at
    // most once per scene (it owns the control position) and never on the
    // origin token, which is pinned to (0, 0).
    let mut labels: Vec<u8> = (0..n_tokens)
        .map(|_| rng.gen_range(0..ALPHABET as u8))
        .collect();
    let mut restricted_at: Option<usize> = None;
    if let Some(c) = constraint {
        for i in 0..labels.len() {
            if labels[i] != c.restricted_label {
                continue;
            }
            if i != 0 && restricted_at.is_none() {
                restricted_at = Some(i);
            } else {
                while labels[i] == c.restricted_label {
                    labels[i] = rng.gen_range(0..ALPHABET as u8);
                }
            }
        }
    }

    let mut positions: Vec<Vec2> = Vec::with_capacity(n_tokens);
    let mut attempts = 0usize;
    for i in 0..n_tokens {
        if Some(i) == restricted_at {
            positions.push(constraint.unwrap().control_position);
            continue;
        }
        if i == 0 {
            positions.push(Vec2::ZERO);
            continue;
        }
        loop {
            attempts += 1;
            if attempts > PLACEMENT_BUDGET {
                return Err(WorldGenError::PlacementBudgetExhausted {
                    budget: PLACEMENT_BUDGET,
                    placed: positions.len(),
                });
            }
            let p = Vec2::new(
                rng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
                rng.gen_range(-SCENE_BOUND..=SCENE_BOUND),
            );
            let spaced = positions.iter().all(|q| p.dist(*q) >= MIN_TOKEN_DIST);
            let outside_exclusion = constraint
                .map(|c| p.dist(c.control_position) >= c.exclusion_radius)
                .unwrap_or(true);
            if spaced && outside_exclusion {
                positions.push(p);
                break;
            }
        }
    }

    let tokens: Vec<Token> = labels
        .into_iter()
        .zip(positions)
        .map(|(label, position)| Token { label, position })
        .collect();

    // The control position is placed unconditionally, so re-check spacing
    // against it rather than emit an invalid scene.
    let probe = Scene {
        tokens: tokens.clone(),
        seed: 0,
    };
    if probe.min_pairwise_distance() < MIN_TOKEN_DIST {
        return Err(WorldGenError::PlacementBudgetExhausted {
            budget: PLACEMENT_BUDGET,
            placed: tokens.len(),
        });
    }
    Ok(tokens)
}

/// Radius of the circle circumscribing the pentagon probe scene.
pub const PENTAGON_RADIUS: f64 = 3.0;

/// Fixed probe geometry: one token at the origin and five on a pentagon of
/// circumscribed radius 3, vertex angles 90 + 72i degrees. Labels are drawn
/// uniformly with replacement; positions are identical across seeds.
pub fn generate_pentagon_scene(rng: &mut impl Rng) -> Scene {
    let seed: u64 = rng.gen();
    let mut srng = seeded(seed);
    let mut tokens = vec![Token {
        label: srng.gen_range(0..ALPHABET as u8),
        position: Vec2::ZERO,
    }];
    for i in 0..5 {
        let angle = (90.0 + 72.0 * i as f64).to_radians();
        tokens.push(Token {
            label: srng.gen_range(0..ALPHABET as u8),
            position: Vec2::new(PENTAGON_RADIUS * angle.cos(), PENTAGON_RADIUS * angle.sin()),
        });
    }
    Scene { tokens, seed }
}

/// Samples a saccade walk of `length` steps starting at the origin token.
/// Successors are uniform over the other tokens, excluding any ordered
/// `(current, next)` pair in `withheld_pairs`.
pub fn sample_episode(
    scene: &Scene,
    length: usize,
    rng: &mut impl Rng,
    withheld_pairs: Option<&HashSet<(usize, usize)>>,
) -> Result<Episode, WorldGenError> {
    assert!(length >= 2, "episodes need at least 2 steps");
    let start = scene.origin_index()?;
    let mut path = Vec::with_capacity(length + 1);
    path.push(start);
    let mut current = start;
    for _ in 0..length {
        let next = draw_successor(scene, current, rng, withheld_pairs, None)?;
        path.push(next);
        current = next;
    }
    episode_from_path(scene, &path)
}

/// Uniform draw over legal successors of `from`: never `from` itself, never
/// a withheld pair, optionally never one barred destination.
pub fn draw_successor(
    scene: &Scene,
    from: usize,
    rng: &mut impl Rng,
    withheld_pairs: Option<&HashSet<(usize, usize)>>,
    barred: Option<usize>,
) -> Result<usize, WorldGenError> {
    let legal: Vec<usize> = (0..scene.len())
        .filter(|&j| j != from)
        .filter(|&j| Some(j) != barred)
        .filter(|&j| withheld_pairs.map_or(true, |w| !w.contains(&(from, j))))
        .collect();
    if legal.is_empty() {
        return Err(WorldGenError::NoLegalSuccessor { from });
    }
    Ok(legal[rng.gen_range(0..legal.len())])
}

/// Builds an episode from an explicit token-index path (`path.len() - 1`
/// steps). Saccades are exact position differences.
pub fn episode_from_path(scene: &Scene, path: &[usize]) -> Result<Episode, WorldGenError> {
    if path.len() < 2 {
        return Err(WorldGenError::PathTooShort(path.len()));
    }
    let mut steps = Vec::with_capacity(path.len() - 1);
    for w in path.windows(2) {
        let (i, j) = (w[0], w[1]);
        if i == j {
            return Err(WorldGenError::SelfSaccade(i));
        }
        let here = scene.tokens[i];
        let there = scene.tokens[j];
        steps.push(Step {
            token_index: i,
            label: here.label,
            position: here.position,
            saccade_out: there.position.sub(here.position),
            target_label: there.label,
        });
    }
    Ok(Episode {
        scene: scene.clone(),
        steps,
    })
}

/// Encodes one step as the 28-entry model input: a 26-way one-hot of the
/// current label followed by the outgoing saccade.
pub fn encode_step(step: &Step) -> [f64; INPUT_DIM] {
    let mut v = [0.0; INPUT_DIM];
    v[step.label as usize] = 1.0;
    v[ALPHABET] = step.saccade_out.x;
    v[ALPHABET + 1] = step.saccade_out.y;
    v
}

// ---------------------------------------------------------------------------
// Dump format: line-oriented text, reals with 9 significant digits.

/// Formats a real with 9 significant digits in plain decimal notation.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        return "0.000000000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).clamp(0, 12) as usize;
    format!("{x:.decimals$}")
}

/// Writes `SCENE seed=<u64> n=<k>` followed by one `TOK` line per token.
pub fn scene_to_dump(scene: &Scene) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "SCENE seed={} n={}", scene.seed, scene.len());
    for t in &scene.tokens {
        let _ = writeln!(
            out,
            "TOK {} {} {}",
            t.label_char(),
            fmt_real(t.position.x),
            fmt_real(t.position.y)
        );
    }
    out
}

/// Appends `STEP <t> <token_index> <saccade_dx> <saccade_dy>` lines for an
/// episode over its scene's dump.
pub fn episode_to_dump(episode: &Episode) -> String {
    let mut out = scene_to_dump(&episode.scene);
    for (t, s) in episode.steps.iter().enumerate() {
        let _ = writeln!(
            out,
            "STEP {} {} {} {}",
            t,
            s.token_index,
            fmt_real(s.saccade_out.x),
            fmt_real(s.saccade_out.y)
        );
    }
    out
}

/// Parses [`scene_to_dump`] / [`episode_to_dump`] output. Returns each scene
/// with the token-index sequence of its STEP lines (empty when the dump held
/// no episode).
pub fn scenes_from_dump(text: &str) -> Result<Vec<(Scene, Vec<usize>)>, WorldGenError> {
    let mut out: Vec<(Scene, Vec<usize>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| WorldGenError::BadDumpLine {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("SCENE") => {
                let seed = fields
                    .next()
                    .and_then(|f| f.strip_prefix("seed="))
                    .and_then(|v| v.parse::<u64>().ok())
                    .ok_or_else(|| bad("expected seed=<u64>"))?;
                fields
                    .next()
                    .and_then(|f| f.strip_prefix("n="))
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| bad("expected n=<k>"))?;
                out.push((
                    Scene {
                        tokens: Vec::new(),
                        seed,
                    },
                    Vec::new(),
                ));
            }
            Some("TOK") => {
                let (scene, _) = out.last_mut().ok_or_else(|| bad("TOK before SCENE"))?;
                let label_char = fields
                    .next()
                    .and_then(|f| f.chars().next())
                    .filter(|c| c.is_ascii_lowercase())
                    .ok_or_else(|| bad("expected label a-z"))?;
                let x = fields
                    .next()
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| bad("expected x coordinate"))?;
                let y = fields
                    .next()
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| bad("expected y coordinate"))?;
                scene.tokens.push(Token {
                    label: label_char as u8 - b'a',
                    position: Vec2::new(x, y),
                });
            }
            Some("STEP") => {
                let (scene, path) = out.last_mut().ok_or_else(|| bad("STEP before SCENE"))?;
                let _t: usize = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("expected step index"))?;
                let token_index: usize = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("expected token index"))?;
                if token_index >= scene.tokens.len() {
                    return Err(bad("token index out of range"));
                }
                path.push(token_index);
            }
            _ => return Err(bad("unknown record tag")),
        }
    }
    Ok(out)
}
