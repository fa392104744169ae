//! Frogger map description, the text map format, and the seeded generator.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error("map dimensions {width}x{height} too small (need width >= 3, height >= 4)")]
    Dimensions { width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Goal,
    Grass,
    Road,
    Water,
}

impl RowKind {
    pub fn is_moving(self) -> bool {
        matches!(self, RowKind::Road | RowKind::Water)
    }

    fn to_char(self) -> char {
        match self {
            RowKind::Goal => 't',
            RowKind::Grass => 'g',
            RowKind::Road => 'r',
            RowKind::Water => 'w',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
    None,
}

impl Direction {
    /// Signed column offset applied once per tick.
    pub fn offset(self) -> i64 {
        match self {
            Direction::Left => -1,
            Direction::Right => 1,
            Direction::None => 0,
        }
    }

    fn to_char(self) -> char {
        match self {
            Direction::Left => '<',
            Direction::Right => '>',
            Direction::None => '-',
        }
    }
}

/// One horizontal lane. `occupancy` is the tick-0 obstacle pattern: cars on a
/// road, logs on water.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSpec {
    pub kind: RowKind,
    pub direction: Direction,
    pub occupancy: Vec<bool>,
}

impl RowSpec {
    /// Occupancy of column `col` after `tick` obstacle moves. Obstacles wrap
    /// toroidally, so the pattern at tick t is the tick-0 pattern rotated by t.
    pub fn occupied_at(&self, col: usize, tick: u64) -> bool {
        let width = self.occupancy.len() as i64;
        let shift = (tick % width as u64) as i64 * self.direction.offset();
        let source = (col as i64 - shift).rem_euclid(width);
        self.occupancy[source as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub col: usize,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FroggerMap {
    pub width: usize,
    pub height: usize,
    /// Top row first; row 0 is the goal row.
    pub rows: Vec<RowSpec>,
    pub start: Position,
    /// Obstacle density the map was generated with, if any.
    pub density: Option<f64>,
}

impl FroggerMap {
    pub fn row(&self, row: usize) -> &RowSpec {
        &self.rows[row]
    }

    /// Checks every structural invariant of a map.
    pub fn validate(&self) -> Result<(), MapError> {
        let invalid = |msg: String| Err(MapError::Invalid(msg));
        if self.width < 3 || self.height < 4 {
            return Err(MapError::Dimensions {
                width: self.width,
                height: self.height,
            });
        }
        if self.rows.len() != self.height {
            return invalid(format!(
                "expected {} rows, found {}",
                self.height,
                self.rows.len()
            ));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.occupancy.len() != self.width {
                return invalid(format!("row {i} has {} cells", row.occupancy.len()));
            }
            let moving = row.kind.is_moving();
            if moving == (row.direction == Direction::None) {
                return invalid(format!(
                    "row {i}: direction must be none exactly for grass and goal rows"
                ));
            }
            if !moving && row.occupancy.iter().any(|&o| o) {
                return invalid(format!("row {i}: obstacles on a {:?} row", row.kind));
            }
            if (row.kind == RowKind::Goal) != (i == 0) {
                return invalid("the goal row must be row 0 and only row 0".into());
            }
        }
        if self.rows[self.height - 1].kind != RowKind::Grass {
            return invalid("the bottom (start) row must be grass".into());
        }
        if self.start.row != self.height - 1 || self.start.col >= self.width {
            return invalid("the agent must start on the bottom row".into());
        }
        for (i, pair) in self.rows.windows(2).enumerate() {
            if pair[0].kind.is_moving()
                && pair[1].kind.is_moving()
                && pair[0].direction == pair[1].direction
            {
                return invalid(format!(
                    "rows {i} and {} move in the same direction",
                    i + 1
                ));
            }
        }
        Ok(())
    }

    /// Parses the `frogger v1` text format and validates the result.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with("//"));

        let (header_line, header) = lines.next().ok_or(MapError::Parse {
            line: 1,
            message: "empty map file".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_err = |line: usize, message: String| MapError::Parse { line, message };
        if fields.len() != 4 || fields[0] != "frogger" || fields[1] != "v1" {
            return Err(parse_err(
                header_line,
                "expected header `frogger v1 <width> <height>`".into(),
            ));
        }
        let width: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(header_line, format!("bad width `{}`", fields[2])))?;
        let height: usize = fields[3]
            .parse()
            .map_err(|_| parse_err(header_line, format!("bad height `{}`", fields[3])))?;

        let mut rows = Vec::with_capacity(height);
        let mut start = None;
        for (line_no, line) in lines {
            if rows.len() == height {
                return Err(parse_err(line_no, "more rows than the header declares".into()));
            }
            let mut parts = line.split_whitespace();
            let (Some(tag), Some(cells), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(line_no, "expected `<kind><dir> <cells>`".into()));
            };
            let tag: Vec<char> = tag.chars().collect();
            if tag.len() != 2 {
                return Err(parse_err(line_no, "row tag must be two characters".into()));
            }
            let kind = match tag[0] {
                't' => RowKind::Goal,
                'g' => RowKind::Grass,
                'r' => RowKind::Road,
                'w' => RowKind::Water,
                c => return Err(parse_err(line_no, format!("unknown row kind `{c}`"))),
            };
            let direction = match tag[1] {
                '<' => Direction::Left,
                '>' => Direction::Right,
                '-' => Direction::None,
                c => return Err(parse_err(line_no, format!("unknown direction `{c}`"))),
            };
            let cells: Vec<char> = cells.chars().collect();
            if cells.len() != width {
                return Err(parse_err(
                    line_no,
                    format!("expected {width} cells, found {}", cells.len()),
                ));
            }
            let mut occupancy = Vec::with_capacity(width);
            for (col, c) in cells.into_iter().enumerate() {
                match c {
                    '.' => occupancy.push(false),
                    '#' => occupancy.push(true),
                    'A' => {
                        if start.is_some() {
                            return Err(parse_err(line_no, "more than one agent start".into()));
                        }
                        start = Some(Position {
                            col,
                            row: rows.len(),
                        });
                        occupancy.push(false);
                    }
                    c => return Err(parse_err(line_no, format!("illegal cell character `{c}`"))),
                }
            }
            rows.push(RowSpec {
                kind,
                direction,
                occupancy,
            });
        }
        if rows.len() != height {
            return Err(MapError::Invalid(format!(
                "header declares {height} rows, found {}",
                rows.len()
            )));
        }
        let start = start.ok_or_else(|| MapError::Invalid("no agent start `A`".into()))?;
        let map = FroggerMap {
            width,
            height,
            rows,
            start,
            density: None,
        };
        map.validate()?;
        Ok(map)
    }

    /// Seeded generator following the default row template: goal row on top,
    /// water rows, a grass median, road rows, and the grass start row.
    pub fn generate(width: usize, height: usize, density: f64, seed: u64) -> Result<Self, MapError> {
        if width < 3 || height < 4 {
            return Err(MapError::Dimensions { width, height });
        }
        if !(0.0..=1.0).contains(&density) {
            return Err(MapError::Invalid(format!("density {density} outside [0, 1]")));
        }
        let kinds = template_rows(height);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Directions alternate across moving rows, counted from the bottom.
        let mut next_right = true;
        let mut rows: Vec<RowSpec> = Vec::with_capacity(height);
        for &kind in kinds.iter().rev() {
            let direction = if kind.is_moving() {
                let d = if next_right {
                    Direction::Right
                } else {
                    Direction::Left
                };
                next_right = !next_right;
                d
            } else {
                Direction::None
            };
            let occupancy = (0..width)
                .map(|_| {
                    let draw: f64 = rng.gen();
                    kind.is_moving() && draw < density
                })
                .collect();
            rows.push(RowSpec {
                kind,
                direction,
                occupancy,
            });
        }
        rows.reverse();
        let map = FroggerMap {
            width,
            height,
            rows,
            start: Position {
                col: width / 2,
                row: height - 1,
            },
            density: Some(density),
        };
        map.validate()?;
        Ok(map)
    }

    /// Fraction of occupied cells over all moving rows.
    pub fn moving_occupancy(&self) -> f64 {
        let (occupied, total) = self
            .rows
            .iter()
            .filter(|r| r.kind.is_moving())
            .fold((0usize, 0usize), |(o, t), r| {
                (o + r.occupancy.iter().filter(|&&c| c).count(), t + r.occupancy.len())
            });
        if total == 0 {
            0.0
        } else {
            occupied as f64 / total as f64
        }
    }
}

/// Row kinds for a map of the given height, top row first.
fn template_rows(height: usize) -> Vec<RowKind> {
    let middle = height - 2;
    let water = (middle / 3).max(1);
    let median = usize::from(middle >= 3);
    let road = middle - water - median;
    let mut kinds = vec![RowKind::Goal];
    kinds.extend(std::iter::repeat_n(RowKind::Water, water));
    kinds.extend(std::iter::repeat_n(RowKind::Grass, median));
    kinds.extend(std::iter::repeat_n(RowKind::Road, road));
    kinds.push(RowKind::Grass);
    kinds
}

impl fmt::Display for FroggerMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frogger v1 {} {}", self.width, self.height)?;
        for (r, row) in self.rows.iter().enumerate() {
            let cells: String = row
                .occupancy
                .iter()
                .enumerate()
                .map(|(c, &occ)| {
                    if self.start == (Position { col: c, row: r }) {
                        'A'
                    } else if occ {
                        '#'
                    } else {
                        '.'
                    }
                })
                .collect();
            writeln!(
                f,
                "{}{} {}",
                row.kind.to_char(),
                row.direction.to_char(),
                cells
            )?;
        }
        Ok(())
    }
}
