//! Reading and writing SGF (FF[4]) game records.
//!
//! Only the main line of the first game tree is kept. Handicap stones (`AB`
//! in the root node) are modelled as initial stones rather than moves, so
//! move indices line up with position indices: position `i` is the board
//! after the first `i` moves.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SIZE: u8 = 19;
pub const DEFAULT_KOMI: f64 = 6.5;
pub const DEFAULT_RULES: &str = "japanese";
pub const MIN_SIZE: u8 = 5;
pub const MAX_SIZE: u8 = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opposite(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }

    /// `+1` for black, `-1` for white. Scores are kept from black's side.
    pub fn sign(self) -> f64 {
        match self {
            Color::Black => 1.0,
            Color::White => -1.0,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Color::Black => 'B',
            Color::White => 'W',
        }
    }

    pub fn from_letter(c: &str) -> Option<Color> {
        match c {
            "B" | "b" => Some(Color::Black),
            "W" | "w" => Some(Color::White),
            _ => None,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Black => "black",
            Color::White => "white",
        })
    }
}

/// An intersection. `col` counts from the left, `row` from the top, both
/// starting at 1 (so SGF `pd` is column 16, row 4).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub col: u8,
    pub row: u8,
}

impl Point {
    pub fn new(col: u8, row: u8) -> Self {
        Point { col, row }
    }

    pub fn on_board(self, size: u8) -> bool {
        (1..=size).contains(&self.col) && (1..=size).contains(&self.row)
    }

    /// Two-letter SGF coordinate, e.g. `pd`.
    pub fn to_sgf(self) -> String {
        let mut s = String::with_capacity(2);
        s.push((b'a' + self.col - 1) as char);
        s.push((b'a' + self.row - 1) as char);
        s
    }

    pub fn from_sgf(value: &str) -> Option<Point> {
        let bytes = value.as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(u8::is_ascii_lowercase) {
            return None;
        }
        Some(Point::new(bytes[0] - b'a' + 1, bytes[1] - b'a' + 1))
    }

    /// Engine vertex such as `Q16`: column letter without `I`, row counted
    /// from the bottom.
    pub fn to_vertex(self, size: u8) -> String {
        const LETTERS: &[u8] = b"ABCDEFGHJKLMNOPQRSTUVWXYZ";
        format!(
            "{}{}",
            LETTERS[usize::from(self.col - 1)] as char,
            u16::from(size) + 1 - u16::from(self.row)
        )
    }

    pub fn from_vertex(vertex: &str, size: u8) -> Option<Point> {
        const LETTERS: &str = "ABCDEFGHJKLMNOPQRSTUVWXYZ";
        let mut chars = vertex.chars();
        let letter = chars.next()?.to_ascii_uppercase();
        let col = LETTERS.find(letter)? as u8 + 1;
        let number: u16 = chars.as_str().parse().ok()?;
        if number == 0 || number > u16::from(size) {
            return None;
        }
        let row = (u16::from(size) + 1 - number) as u8;
        Some(Point::new(col, row)).filter(|p| p.on_board(size))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub color: Color,
    /// `None` is a pass.
    pub point: Option<Point>,
}

impl Move {
    pub fn play(color: Color, col: u8, row: u8) -> Self {
        Move { color, point: Some(Point::new(col, row)) }
    }

    pub fn pass(color: Color) -> Self {
        Move { color, point: None }
    }

    pub fn is_pass(&self) -> bool {
        self.point.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameRecord {
    pub board_size: u8,
    pub komi: f64,
    pub rules: String,
    pub handicap_stones: Vec<Point>,
    pub moves: Vec<Move>,
    pub metadata: BTreeMap<String, String>,
}

impl Default for GameRecord {
    fn default() -> Self {
        GameRecord {
            board_size: DEFAULT_SIZE,
            komi: DEFAULT_KOMI,
            rules: DEFAULT_RULES.to_string(),
            handicap_stones: Vec::new(),
            moves: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }
}

impl GameRecord {
    /// Player to move in the empty (or handicap) position.
    pub fn first_player(&self) -> Color {
        match self.moves.first() {
            Some(m) => m.color,
            None if self.handicap_stones.is_empty() => Color::Black,
            None => Color::White,
        }
    }

    /// Player to move after `i` moves.
    pub fn side_to_move(&self, i: usize) -> Color {
        match self.moves.get(i) {
            Some(m) => m.color,
            None => match self.moves.last() {
                Some(m) => m.color.opposite(),
                None => self.first_player(),
            },
        }
    }

    /// The same game with every color swapped (handicap stones are dropped,
    /// since they are black by definition).
    pub fn color_swapped(&self) -> GameRecord {
        let mut swapped = self.clone();
        swapped.handicap_stones.clear();
        for m in &mut swapped.moves {
            m.color = m.color.opposite();
        }
        swapped
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SgfError {
    #[error("malformed SGF at byte {offset}: {reason}")]
    MalformedSgf { offset: usize, reason: String },
    #[error("move {index} at {point} is off the {size}x{size} board")]
    OffBoardMove { index: usize, point: String, size: u8 },
    #[error("move {index} plays on occupied point {point}")]
    OccupiedPoint { index: usize, point: String },
    #[error("unsupported board size {0}")]
    UnsupportedSize(String),
    #[error("move {index} is {color} but {expected} was expected to play")]
    NonAlternatingMove { index: usize, color: Color, expected: Color },
    #[error("position index {index} out of range for a {len}-move game")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Accept consecutive moves by the same color.
    pub lenient_alternation: bool,
}

pub fn parse_sgf(text: &str) -> Result<GameRecord, SgfError> {
    parse_sgf_with(text, ParseOptions::default())
}

pub fn parse_sgf_with(text: &str, options: ParseOptions) -> Result<GameRecord, SgfError> {
    let nodes = Parser::new(text).main_line()?;
    let mut record = GameRecord::default();
    let mut raw_moves: Vec<(Color, String, usize)> = Vec::new();

    for (n, node) in nodes.iter().enumerate() {
        let mut node_move = None;
        for prop in &node.props {
            if n == 0 {
                match prop.ident.as_str() {
                    "GM" | "FF" | "CA" | "HA" => continue,
                    "SZ" => {
                        record.board_size = parse_size(&prop.values[0])?;
                        continue;
                    }
                    "KM" => {
                        record.komi = prop.values[0].trim().parse().map_err(|_| SgfError::MalformedSgf {
                            offset: prop.offset,
                            reason: format!("bad komi value {:?}", prop.values[0]),
                        })?;
                        continue;
                    }
                    "RU" => {
                        record.rules = prop.values[0].clone();
                        continue;
                    }
                    "AB" => {
                        for value in &prop.values {
                            record.handicap_stones.extend(expand_point_list(value, prop.offset)?);
                        }
                        continue;
                    }
                    _ => {}
                }
            }
            match prop.ident.as_str() {
                "B" | "W" => {
                    if node_move.is_some() || prop.values.len() != 1 {
                        return Err(SgfError::MalformedSgf {
                            offset: prop.offset,
                            reason: "node carries more than one move".into(),
                        });
                    }
                    let color = Color::from_letter(&prop.ident).expect("B or W");
                    node_move = Some((color, prop.values[0].clone(), prop.offset));
                }
                ident if n == 0 => {
                    record.metadata.insert(ident.to_string(), prop.values[0].clone());
                }
                _ => {}
            }
        }
        raw_moves.extend(node_move);
    }

    let size = record.board_size;
    let mut board = Board::new(size);
    for stone in &record.handicap_stones {
        if !stone.on_board(size) {
            return Err(SgfError::OffBoardMove { index: 0, point: stone.to_sgf(), size });
        }
        board.place(Color::Black, *stone);
    }

    let mut expected = if record.handicap_stones.is_empty() { Color::Black } else { Color::White };
    for (i, (color, value, offset)) in raw_moves.into_iter().enumerate() {
        let index = i + 1;
        if color != expected && !options.lenient_alternation {
            return Err(SgfError::NonAlternatingMove { index, color, expected });
        }
        expected = color.opposite();
        let point = decode_move(&value, size, offset)?;
        if let Some(p) = point {
            if !p.on_board(size) {
                return Err(SgfError::OffBoardMove { index, point: value, size });
            }
            if board.get(p).is_some() {
                return Err(SgfError::OccupiedPoint { index, point: value });
            }
            board.place(color, p);
        }
        record.moves.push(Move { color, point });
    }
    Ok(record)
}

/// Canonical SGF text for a record. Root properties are written in a fixed
/// order, metadata sorted by key.
pub fn serialize_sgf(record: &GameRecord) -> String {
    let mut out = String::new();
    let _ = write!(out, "(;GM[1]FF[4]SZ[{}]KM[{}]", record.board_size, record.komi);
    if record.rules != DEFAULT_RULES {
        let _ = write!(out, "RU[{}]", escape(&record.rules));
    }
    if !record.handicap_stones.is_empty() {
        let _ = write!(out, "HA[{}]AB", record.handicap_stones.len());
        for stone in &record.handicap_stones {
            let _ = write!(out, "[{}]", stone.to_sgf());
        }
    }
    for (key, value) in &record.metadata {
        let _ = write!(out, "{}[{}]", key, escape(value));
    }
    for m in &record.moves {
        let value = m.point.map(Point::to_sgf).unwrap_or_default();
        let _ = write!(out, ";{}[{}]", m.color.letter(), value);
    }
    out.push(')');
    out
}

/// Moves leading to position `i`.
pub fn position_prefix(record: &GameRecord, i: usize) -> Result<&[Move], SgfError> {
    record
        .moves
        .get(..i)
        .ok_or(SgfError::IndexOutOfRange { index: i, len: record.moves.len() })
}

fn parse_size(value: &str) -> Result<u8, SgfError> {
    let unsupported = || SgfError::UnsupportedSize(value.to_string());
    let (cols, rows) = match value.split_once(':') {
        Some((c, r)) => (c.trim(), r.trim()),
        None => (value.trim(), value.trim()),
    };
    if cols != rows {
        return Err(unsupported());
    }
    let size: u8 = cols.parse().map_err(|_| unsupported())?;
    if (MIN_SIZE..=MAX_SIZE).contains(&size) {
        Ok(size)
    } else {
        Err(unsupported())
    }
}

fn decode_move(value: &str, size: u8, offset: usize) -> Result<Option<Point>, SgfError> {
    let value = value.trim();
    if value.is_empty() || (value == "tt" && size <= 19) {
        return Ok(None);
    }
    Point::from_sgf(value)
        .map(Some)
        .ok_or_else(|| SgfError::MalformedSgf { offset, reason: format!("bad point {value:?}") })
}

fn expand_point_list(value: &str, offset: usize) -> Result<Vec<Point>, SgfError> {
    let bad = || SgfError::MalformedSgf { offset, reason: format!("bad point {value:?}") };
    match value.split_once(':') {
        None => Point::from_sgf(value).map(|p| vec![p]).ok_or_else(bad),
        Some((a, b)) => {
            let (a, b) = (Point::from_sgf(a).ok_or_else(bad)?, Point::from_sgf(b).ok_or_else(bad)?);
            let mut points = Vec::new();
            for col in a.col.min(b.col)..=a.col.max(b.col) {
                for row in a.row.min(b.row)..=a.row.max(b.row) {
                    points.push(Point::new(col, row));
                }
            }
            Ok(points)
        }
    }
}

fn escape(value: &str) -> String {
    value.replace('\\', "\\\\").replace(']', "\\]")
}

struct Property {
    ident: String,
    values: Vec<String>,
    offset: usize,
}

struct Node {
    props: Vec<Property>,
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, pos: 0 }
    }

    fn err(&self, reason: impl Into<String>) -> SgfError {
        SgfError::MalformedSgf { offset: self.pos, reason: reason.into() }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), SgfError> {
        self.skip_ws();
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(self.err(format!("expected {want:?}, found {c:?}"))),
            None => Err(self.err(format!("expected {want:?}, found end of input"))),
        }
    }

    /// Nodes along the first variation of the first game tree.
    fn main_line(mut self) -> Result<Vec<Node>, SgfError> {
        self.skip_ws();
        if self.peek() != Some('(') {
            return Err(self.err("game tree must start with '('"));
        }
        let mut nodes = Vec::new();
        self.game_tree(&mut nodes, true)?;
        if nodes.is_empty() {
            return Err(self.err("empty game tree"));
        }
        Ok(nodes)
    }

    fn game_tree(&mut self, nodes: &mut Vec<Node>, keep: bool) -> Result<(), SgfError> {
        self.expect('(')?;
        let mut saw_node = false;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(';') => {
                    self.bump();
                    let node = self.node()?;
                    saw_node = true;
                    if keep {
                        nodes.push(node);
                    }
                }
                _ => break,
            }
        }
        if !saw_node {
            return Err(self.err("game tree without nodes"));
        }
        let mut first_child = true;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('(') => {
                    self.game_tree(nodes, keep && first_child)?;
                    first_child = false;
                }
                Some(')') => {
                    self.bump();
                    return Ok(());
                }
                Some(c) => return Err(self.err(format!("unexpected {c:?}"))),
                None => return Err(self.err("unbalanced parentheses")),
            }
        }
    }

    fn node(&mut self) -> Result<Node, SgfError> {
        let mut props = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(c) if c.is_ascii_alphabetic() => props.push(self.property()?),
                _ => return Ok(Node { props }),
            }
        }
    }

    fn property(&mut self) -> Result<Property, SgfError> {
        let offset = self.pos;
        let mut ident = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_alphabetic) {
            self.bump();
            // FF[3] style lowercase letters are not part of the identifier
            if c.is_ascii_uppercase() {
                ident.push(c);
            }
        }
        let mut values = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() != Some('[') {
                break;
            }
            self.bump();
            values.push(self.value()?);
        }
        if values.is_empty() {
            return Err(SgfError::MalformedSgf { offset, reason: format!("property {ident} has no value") });
        }
        Ok(Property { ident, values, offset })
    }

    fn value(&mut self) -> Result<String, SgfError> {
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('\\') => match self.bump() {
                    Some('\n') => {}
                    Some(c) => out.push(c),
                    None => return Err(self.err("unterminated property value")),
                },
                Some(']') => return Ok(out),
                Some(c) => out.push(c),
                None => return Err(self.err("unterminated property value")),
            }
        }
    }
}

/// Occupancy tracker with captures, used only to validate that moves land on
/// empty intersections.
#[derive(Clone, Debug)]
pub struct Board {
    size: u8,
    cells: Vec<Option<Color>>,
}

impl Board {
    pub fn new(size: u8) -> Self {
        Board { size, cells: vec![None; usize::from(size) * usize::from(size)] }
    }

    fn idx(&self, p: Point) -> usize {
        usize::from(p.row - 1) * usize::from(self.size) + usize::from(p.col - 1)
    }

    pub fn get(&self, p: Point) -> Option<Color> {
        self.cells[self.idx(p)]
    }

    pub fn is_empty_at(&self, p: Point) -> bool {
        self.get(p).is_none()
    }

    fn neighbours(&self, p: Point) -> impl Iterator<Item = Point> + '_ {
        let size = self.size;
        [(0i16, -1i16), (0, 1), (-1, 0), (1, 0)].into_iter().filter_map(move |(dc, dr)| {
            let col = i16::from(p.col) + dc;
            let row = i16::from(p.row) + dr;
            (col >= 1 && row >= 1 && col <= i16::from(size) && row <= i16::from(size))
                .then(|| Point::new(col as u8, row as u8))
        })
    }

    /// Group containing `p` and whether it has any liberty.
    fn group(&self, p: Point) -> (Vec<Point>, bool) {
        let color = self.get(p);
        let mut stack = vec![p];
        let mut seen = vec![false; self.cells.len()];
        seen[self.idx(p)] = true;
        let mut stones = Vec::new();
        let mut has_liberty = false;
        while let Some(q) = stack.pop() {
            stones.push(q);
            for n in self.neighbours(q) {
                match self.get(n) {
                    None => has_liberty = true,
                    c if c == color && !seen[self.idx(n)] => {
                        seen[self.idx(n)] = true;
                        stack.push(n);
                    }
                    _ => {}
                }
            }
        }
        (stones, has_liberty)
    }

    /// Places a stone, removing captured opponent groups (and the placed group
    /// itself when it has no liberties left).
    pub fn place(&mut self, color: Color, p: Point) {
        let i = self.idx(p);
        self.cells[i] = Some(color);
        let opponents: Vec<Point> =
            self.neighbours(p).filter(|n| self.get(*n) == Some(color.opposite())).collect();
        for n in opponents {
            if self.get(n).is_none() {
                continue;
            }
            let (stones, alive) = self.group(n);
            if !alive {
                for s in stones {
                    let j = self.idx(s);
                    self.cells[j] = None;
                }
            }
        }
        let (stones, alive) = self.group(p);
        if !alive {
            for s in stones {
                let j = self.idx(s);
                self.cells[j] = None;
            }
        }
    }
}
