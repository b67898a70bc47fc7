//! Observation schemas and feature vectors.
//!
//! A [`FeatureSchema`] fixes the ordered list of feature slots for one run.
//! Numerical slots carry finite reals; categorical slots carry token ids that
//! are interned online, in first-seen order, per slot. A [`FeatureVector`]
//! stores both kinds in one `f64` buffer, with categorical ids held as exact
//! small integers, so trees can route on either kind without branching on
//! storage.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

/// Side length of the egocentric grid view.
pub const GRID_VIEW: usize = 7;

/// Number of features produced by [`encode_grid_observation`]: one per view
/// cell, plus direction and mission.
pub const GRID_FEATURES: usize = GRID_VIEW * GRID_VIEW + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureEntry {
    pub name: String,
    pub kind: FeatureKind,
}

/// Token ↔ id table for one categorical slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.ids.insert(token.to_owned(), id);
        self.tokens.push(token.to_owned());
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Ordered feature slots plus the online vocabularies of categorical slots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureSchema {
    entries: Vec<FeatureEntry>,
    vocabularies: Vec<Option<Vocabulary>>,
}

impl FeatureSchema {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schema of `n` numerical features named `x0..x{n-1}`.
    pub fn numerical(n: usize) -> Self {
        let mut schema = Self::new();
        for i in 0..n {
            schema.push(format!("x{i}"), FeatureKind::Numerical);
        }
        schema
    }

    /// Schema produced by [`encode_grid_observation`].
    pub fn grid() -> Self {
        let mut schema = Self::new();
        for row in 0..GRID_VIEW {
            for col in 0..GRID_VIEW {
                schema.push(format!("cell_{row}_{col}"), FeatureKind::Categorical);
            }
        }
        schema.push("direction", FeatureKind::Categorical);
        schema.push("mission", FeatureKind::Categorical);
        schema
    }

    pub fn push(&mut self, name: impl Into<String>, kind: FeatureKind) -> usize {
        self.entries.push(FeatureEntry {
            name: name.into(),
            kind,
        });
        self.vocabularies.push(match kind {
            FeatureKind::Numerical => None,
            FeatureKind::Categorical => Some(Vocabulary::default()),
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FeatureEntry] {
        &self.entries
    }

    pub fn kind(&self, slot: usize) -> Option<FeatureKind> {
        self.entries.get(slot).map(|e| e.kind)
    }

    pub fn vocabulary(&self, slot: usize) -> Option<&Vocabulary> {
        self.vocabularies.get(slot).and_then(Option::as_ref)
    }

    /// Returns the id of `token` in categorical `slot`, assigning the next id
    /// if the token has not been seen.
    pub fn intern_token(&mut self, slot: usize, token: &str) -> Result<u32> {
        match self.vocabularies.get_mut(slot) {
            Some(Some(vocab)) => Ok(vocab.intern(token)),
            Some(None) => Err(Error::Schema(format!(
                "slot {slot} ({}) is numerical and cannot intern tokens",
                self.entries[slot].name
            ))),
            None => Err(Error::Schema(format!(
                "slot {slot} out of range for schema of length {}",
                self.entries.len()
            ))),
        }
    }

    /// Replaces the vocabulary of a categorical slot. Used when decoding a
    /// stored schema.
    pub(crate) fn set_vocabulary(&mut self, slot: usize, tokens: Vec<String>) -> Result<()> {
        let vocab = match self.vocabularies.get_mut(slot) {
            Some(Some(v)) => v,
            _ => return Err(Error::Schema(format!("slot {slot} is not categorical"))),
        };
        *vocab = Vocabulary::default();
        for token in &tokens {
            vocab.intern(token);
        }
        if vocab.len() != tokens.len() {
            return Err(Error::Schema(format!("duplicate token in slot {slot}")));
        }
        Ok(())
    }

    /// Builds a feature vector from numerical values, rejecting non-finite
    /// entries.
    pub fn numeric_vector(&self, values: &[f64]) -> Result<FeatureVector> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: values.len(),
            });
        }
        for (slot, &value) in values.iter().enumerate() {
            if self.entries[slot].kind != FeatureKind::Numerical {
                return Err(Error::Schema(format!("slot {slot} is categorical")));
            }
            if !value.is_finite() {
                return Err(Error::NonFiniteFeature { slot, value });
            }
        }
        Ok(FeatureVector(values.to_vec()))
    }

    /// Encodes an environment observation against this schema.
    pub fn encode(&mut self, obs: &Observation) -> Result<FeatureVector> {
        match obs {
            Observation::Numeric(values) => self.numeric_vector(values),
            Observation::Grid(view) => encode_grid_observation(self, view),
        }
    }

    /// Checks that `x` has the schema's length and slot kinds.
    pub fn conforms(&self, x: &FeatureVector) -> bool {
        x.len() == self.len()
            && x.0.iter().zip(&self.entries).all(|(&v, e)| match e.kind {
                FeatureKind::Numerical => v.is_finite(),
                FeatureKind::Categorical => v >= 0.0 && v.fract() == 0.0,
            })
    }
}

/// One observation in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps raw slot values without validation. Categorical slots must hold
    /// token ids.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Token id of categorical slot `slot`.
    pub fn token_id(&self, slot: usize) -> u32 {
        self.0[slot] as u32
    }
}

/// Raw observation emitted by an environment before schema encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Numeric(Vec<f64>),
    Grid(GridView),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileType {
    Unseen,
    Empty,
    Wall,
    Goal,
}

impl TileType {
    fn as_str(self) -> &'static str {
        match self {
            TileType::Unseen => "unseen",
            TileType::Empty => "empty",
            TileType::Wall => "wall",
            TileType::Goal => "goal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileColor {
    Black,
    Grey,
    Green,
}

impl TileColor {
    fn as_str(self) -> &'static str {
        match self {
            TileColor::Black => "black",
            TileColor::Grey => "grey",
            TileColor::Green => "green",
        }
    }
}

/// A (type, color, state) tile tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tile {
    pub kind: TileType,
    pub color: TileColor,
    pub state: u8,
}

impl Tile {
    pub const EMPTY: Tile = Tile {
        kind: TileType::Empty,
        color: TileColor::Black,
        state: 0,
    };
    pub const WALL: Tile = Tile {
        kind: TileType::Wall,
        color: TileColor::Grey,
        state: 0,
    };
    pub const GOAL: Tile = Tile {
        kind: TileType::Goal,
        color: TileColor::Green,
        state: 0,
    };
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.kind.as_str(), self.color.as_str(), self.state)
    }
}

/// Agent heading. Discriminants follow clockwise order starting east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Right = 0,
    Down = 1,
    Left = 2,
    Up = 3,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Right => "right",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Up => "up",
        }
    }

    pub fn turn_left(self) -> Self {
        Self::from_index(self as usize + 3)
    }

    pub fn turn_right(self) -> Self {
        Self::from_index(self as usize + 1)
    }

    fn from_index(i: usize) -> Self {
        match i % 4 {
            0 => Direction::Right,
            1 => Direction::Down,
            2 => Direction::Left,
            _ => Direction::Up,
        }
    }

    /// Unit step (dx, dy) with y pointing down.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::Right => (1, 0),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Up => (0, -1),
        }
    }
}

/// Egocentric 7×7 view (row-major, agent at the bottom-center cell facing
/// row 0) plus heading and mission.
#[derive(Debug, Clone, PartialEq)]
pub struct GridView {
    pub cells: [[Tile; GRID_VIEW]; GRID_VIEW],
    pub direction: Direction,
    pub mission: String,
}

/// Encodes a grid view as [`GRID_FEATURES`] categorical features: one
/// `type:color:state` token per cell, then the direction and the mission.
pub fn encode_grid_observation(schema: &mut FeatureSchema, view: &GridView) -> Result<FeatureVector> {
    if schema.len() != GRID_FEATURES {
        return Err(Error::DimensionMismatch {
            expected: GRID_FEATURES,
            actual: schema.len(),
        });
    }
    let mut values = Vec::with_capacity(GRID_FEATURES);
    let mut token = String::with_capacity(24);
    for (slot, tile) in view.cells.iter().flatten().enumerate() {
        token.clear();
        write!(token, "{tile}").expect("writing to a String cannot fail");
        values.push(f64::from(schema.intern_token(slot, &token)?));
    }
    let dir = schema.intern_token(GRID_VIEW * GRID_VIEW, view.direction.as_str())?;
    values.push(f64::from(dir));
    let mission = schema.intern_token(GRID_VIEW * GRID_VIEW + 1, &view.mission)?;
    values.push(f64::from(mission));
    Ok(FeatureVector(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn uniform_view(tile: Tile, direction: Direction) -> GridView {
        GridView {
            cells: [[tile; GRID_VIEW]; GRID_VIEW],
            direction,
            mission: "goal".into(),
        }
    }

    #[test]
    fn uniform_grid_encodes_to_51_features() {
        let mut schema = FeatureSchema::grid();
        let x = encode_grid_observation(&mut schema, &uniform_view(Tile::EMPTY, Direction::Up)).unwrap();
        assert_eq!(x.len(), 51);
        let first = x.token_id(0);
        assert!((0..49).all(|i| x.token_id(i) == first));
        let vocab = schema.vocabulary(0).unwrap();
        assert_eq!(vocab.token(first), Some("empty:black:0"));
        assert_eq!(schema.vocabulary(49).unwrap().token(x.token_id(49)), Some("up"));
        assert_eq!(schema.vocabulary(50).unwrap().token(x.token_id(50)), Some("goal"));
    }

    #[test]
    fn encoding_is_deterministic() {
        let mut schema = FeatureSchema::grid();
        let view = uniform_view(Tile::WALL, Direction::Left);
        let a = encode_grid_observation(&mut schema, &view).unwrap();
        let b = encode_grid_observation(&mut schema, &view).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_wall_gives_two_distinct_cell_tokens() {
        let mut view = uniform_view(Tile::EMPTY, Direction::Right);
        view.cells[2][4] = Tile::WALL;
        // Enumerate the token strings of the constructed grid directly.
        let expected: BTreeSet<String> = view.cells.iter().flatten().map(|t| t.to_string()).collect();
        assert_eq!(expected.len(), 2);

        // Ids are per slot, so map each cell back to its token string.
        let mut schema = FeatureSchema::grid();
        let x = encode_grid_observation(&mut schema, &view).unwrap();
        let seen: BTreeSet<String> = (0..49)
            .map(|slot| schema.vocabulary(slot).unwrap().token(x.token_id(slot)).unwrap().to_owned())
            .collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn interning_follows_first_seen_order() {
        let mut schema = FeatureSchema::new();
        schema.push("c", FeatureKind::Categorical);
        assert_eq!(schema.intern_token(0, "a").unwrap(), 0);
        assert_eq!(schema.intern_token(0, "b").unwrap(), 1);
        assert_eq!(schema.intern_token(0, "a").unwrap(), 0);
    }

    #[test]
    fn thousand_tokens_get_unique_sequential_ids() {
        let mut schema = FeatureSchema::new();
        schema.push("c", FeatureKind::Categorical);
        let ids: Vec<u32> = (0..1000).map(|i| schema.intern_token(0, &format!("t{i}")).unwrap()).collect();
        assert_eq!(ids, (0..1000).collect::<Vec<u32>>());
    }

    #[test]
    fn interning_on_numerical_slot_is_an_error() {
        let mut schema = FeatureSchema::numerical(2);
        assert!(matches!(schema.intern_token(1, "a"), Err(Error::Schema(_))));
        assert!(matches!(schema.intern_token(5, "a"), Err(Error::Schema(_))));
    }

    #[test]
    fn non_finite_numerical_values_are_rejected() {
        let schema = FeatureSchema::numerical(3);
        assert!(schema.numeric_vector(&[0.0, 1.0, 2.0]).is_ok());
        assert!(matches!(
            schema.numeric_vector(&[0.0, f64::NAN, 2.0]),
            Err(Error::NonFiniteFeature { slot: 1, .. })
        ));
        assert!(schema.numeric_vector(&[f64::INFINITY, 0.0, 0.0]).is_err());
        assert!(schema.numeric_vector(&[0.0]).is_err());
    }

    #[test]
    fn turning_is_cyclic() {
        let d = Direction::Up;
        assert_eq!(d.turn_right(), Direction::Right);
        assert_eq!(d.turn_left(), Direction::Left);
        assert_eq!(d.turn_left().turn_left().turn_left().turn_left(), d);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interning_is_a_bijection(tokens in prop::collection::vec("[a-e]{1,2}", 1..60)) {
                let mut schema = FeatureSchema::new();
                schema.push("c", FeatureKind::Categorical);
                let ids: Vec<u32> = tokens.iter().map(|t| schema.intern_token(0, t).unwrap()).collect();
                let vocab = schema.vocabulary(0).unwrap();
                for (t, &id) in tokens.iter().zip(&ids) {
                    prop_assert_eq!(vocab.token(id), Some(t.as_str()));
                    prop_assert_eq!(vocab.id(t), Some(id));
                }
                let distinct: BTreeSet<&String> = tokens.iter().collect();
                prop_assert_eq!(vocab.len(), distinct.len());
            }
        }
    }
}
