//! Line-delimited JSON messages of the analysis-engine protocol.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EngineError, Query};
use crate::sgf::{Color, Move, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Request {
    pub id: String,
    pub moves: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_stones: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_player: Option<String>,
    pub rules: String,
    pub komi: f64,
    pub board_x_size: u8,
    pub board_y_size: u8,
    pub max_visits: u32,
}

fn vertex(point: Option<Point>, size: u8) -> String {
    point.map_or_else(|| "pass".to_string(), |p| p.to_vertex(size))
}

impl Request {
    pub fn from_query(id: String, query: &Query) -> Request {
        let size = query.board_size;
        Request {
            id,
            moves: query
                .moves
                .iter()
                .map(|m| (m.color.letter().to_string(), vertex(m.point, size)))
                .collect(),
            initial_stones: query
                .initial_stones
                .iter()
                .map(|p| ("B".to_string(), p.to_vertex(size)))
                .collect(),
            initial_player: Some(query.initial_player.letter().to_string()),
            rules: query.rules.clone(),
            komi: query.komi,
            board_x_size: size,
            board_y_size: size,
            max_visits: query.visits,
        }
    }

    pub fn to_query(&self) -> Result<Query, EngineError> {
        if self.board_x_size != self.board_y_size {
            return Err(EngineError::EngineRejectedQuery("rectangular boards are not supported".into()));
        }
        let size = self.board_x_size;
        let color = |c: &str| {
            Color::from_letter(c).ok_or_else(|| EngineError::EngineRejectedQuery(format!("bad color {c:?}")))
        };
        let point = |v: &str| -> Result<Option<Point>, EngineError> {
            if v.eq_ignore_ascii_case("pass") {
                return Ok(None);
            }
            Point::from_vertex(v, size)
                .map(Some)
                .ok_or_else(|| EngineError::EngineRejectedQuery(format!("bad vertex {v:?}")))
        };
        let moves = self
            .moves
            .iter()
            .map(|(c, v)| Ok(Move { color: color(c)?, point: point(v)? }))
            .collect::<Result<Vec<_>, EngineError>>()?;
        let mut initial_stones = Vec::new();
        for (c, v) in &self.initial_stones {
            if color(c)? != Color::Black {
                return Err(EngineError::EngineRejectedQuery("only black initial stones are supported".into()));
            }
            initial_stones.extend(point(v)?);
        }
        let initial_player = match &self.initial_player {
            Some(c) => color(c)?,
            None if initial_stones.is_empty() => Color::Black,
            None => Color::White,
        };
        Ok(Query {
            board_size: size,
            komi: self.komi,
            rules: self.rules.clone(),
            initial_stones,
            initial_player,
            moves,
            visits: self.max_visits,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RootInfo {
    pub score_lead: f64,
    pub winrate: f64,
    pub visits: u32,
}

/// One line read back from the engine.
#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Result { id: String, root: RootInfo },
    Error { id: Option<String>, message: String },
    /// Warnings and partial search reports; carry no final answer.
    Ignored,
}

impl Response {
    pub fn parse(line: &str) -> Result<Response, EngineError> {
        let value: Value =
            serde_json::from_str(line).map_err(|e| EngineError::malformed(format!("{e}: {line}")))?;
        let id = value.get("id").and_then(Value::as_str).map(str::to_string);
        if let Some(message) = value.get("error") {
            let message = message.as_str().map_or_else(|| message.to_string(), str::to_string);
            return Ok(Response::Error { id, message });
        }
        if value.get("warning").is_some() || value.get("isDuringSearch").and_then(Value::as_bool) == Some(true) {
            return Ok(Response::Ignored);
        }
        let id = id.ok_or_else(|| EngineError::malformed(format!("response without id: {line}")))?;
        let root = value
            .get("rootInfo")
            .ok_or_else(|| EngineError::malformed(format!("response without rootInfo: {line}")))?;
        let root: RootInfo = serde_json::from_value(root.clone())
            .map_err(|e| EngineError::malformed(format!("bad rootInfo ({e}): {line}")))?;
        Ok(Response::Result { id, root })
    }

    pub fn result_line(id: &str, root: &RootInfo) -> String {
        serde_json::json!({
            "id": id,
            "isDuringSearch": false,
            "turnNumber": 0,
            "rootInfo": root,
        })
        .to_string()
    }

    pub fn error_line(id: Option<&str>, message: &str) -> String {
        match id {
            Some(id) => serde_json::json!({ "id": id, "error": message }).to_string(),
            None => serde_json::json!({ "error": message }).to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgf::parse_sgf;

    #[test]
    fn request_encoding_matches_engine_format() {
        let record = parse_sgf("(;SZ[19]KM[6.5];B[pd];W[])").unwrap();
        let q = Query::for_position(&record, 2, 50);
        let req = Request::from_query("7".into(), &q);
        let json: Value = serde_json::to_value(&req).unwrap();
        assert_eq!(json["id"], "7");
        assert_eq!(json["moves"], serde_json::json!([["B", "Q16"], ["W", "pass"]]));
        assert_eq!(json["boardXSize"], 19);
        assert_eq!(json["maxVisits"], 50);
        assert_eq!(json["komi"], 6.5);
        assert!(json.get("initialStones").is_none());
        assert_eq!(req.to_query().unwrap(), q);
    }

    #[test]
    fn parses_responses() {
        let r = Response::parse(r#"{"id":"3","rootInfo":{"scoreLead":1.5,"winrate":0.6,"visits":10},"moveInfos":[]}"#)
            .unwrap();
        assert_eq!(r, Response::Result { id: "3".into(), root: RootInfo { score_lead: 1.5, winrate: 0.6, visits: 10 } });
        let r = Response::parse(r#"{"id":"3","error":"Illegal move","field":"moves"}"#).unwrap();
        assert!(matches!(r, Response::Error { id: Some(_), .. }));
        assert_eq!(Response::parse(r#"{"id":"3","warning":"x"}"#).unwrap(), Response::Ignored);
        assert!(Response::parse("not json").is_err());
        assert!(Response::parse(r#"{"id":"3"}"#).is_err());
    }
}
