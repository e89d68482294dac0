//! Newline-delimited JSON scoring protocol.
//!
//! Request: `{"id": string, "images": [{"w", "h", "c", "dtype": "f32", "data"}]}`
//! where `data` is base64 of the channel-planar, row-major, little-endian
//! `f32` samples. Response: `{"id": string, "scores": [number]}`, or
//! `{"id": string, "error": string}` when the request could not be served.
//! The same messages travel one per line over stdio and one per body over
//! HTTP `POST /score`.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{score_batch, ModelError, ScoreFn};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    pub w: usize,
    pub h: usize,
    pub c: usize,
    pub dtype: String,
    pub data: String,
}

impl WireImage {
    pub fn encode(image: &Image) -> Self {
        let mut bytes = Vec::with_capacity(image.data().len() * 4);
        for v in image.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            w: image.width(),
            h: image.height(),
            c: image.channels(),
            dtype: "f32".into(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Image, ModelError> {
        if self.dtype != "f32" {
            return Err(ModelError::Protocol(format!("unsupported dtype {:?}", self.dtype)));
        }
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| ModelError::Protocol(format!("bad base64: {e}")))?;
        let expected = self.w * self.h * self.c * 4;
        if bytes.len() != expected {
            return Err(ModelError::Protocol(format!(
                "{} data bytes for a {}x{}x{} image",
                bytes.len(),
                self.w,
                self.h,
                self.c
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Image::new(self.w, self.h, self.c, data).map_err(|e| ModelError::Protocol(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub images: Vec<WireImage>,
}

impl ScoreRequest {
    pub fn new(id: impl Into<String>, images: &[Image]) -> Self {
        Self {
            id: id.into(),
            images: images.iter().map(WireImage::encode).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoreResponse {
    pub fn ok(id: String, scores: Vec<f64>) -> Self {
        Self {
            id,
            scores: Some(scores),
            error: None,
        }
    }

    pub fn error(id: String, message: impl Into<String>) -> Self {
        Self {
            id,
            scores: None,
            error: Some(message.into()),
        }
    }

    /// Parses a response body and checks it answers `expected_id`.
    pub fn parse(body: &str, expected_id: &str) -> Result<Vec<f64>, ModelError> {
        let resp = Self::parse_any(body)?;
        if resp.id != expected_id {
            return Err(ModelError::Protocol(format!(
                "response id {:?} does not match request {expected_id:?}",
                resp.id
            )));
        }
        resp.into_scores()
    }

    pub fn parse_any(body: &str) -> Result<Self, ModelError> {
        serde_json::from_str(body.trim()).map_err(|e| ModelError::Protocol(format!("malformed response: {e}")))
    }

    pub fn into_scores(self) -> Result<Vec<f64>, ModelError> {
        match (self.scores, self.error) {
            (_, Some(err)) => Err(ModelError::Remote(err)),
            (Some(scores), None) => Ok(scores),
            (None, None) => Err(ModelError::Protocol("response has neither scores nor error".into())),
        }
    }
}

/// Answers one request message. Malformed requests get an error response that
/// echoes the id when one can be recovered.
pub fn handle_message(message: &str, model: &dyn ScoreFn) -> ScoreResponse {
    let request: ScoreRequest = match serde_json::from_str(message.trim()) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(message.trim())
                .ok()
                .and_then(|v| v.get("id").and_then(|id| id.as_str().map(str::to_owned)))
                .unwrap_or_default();
            return ScoreResponse::error(id, format!("malformed request: {e}"));
        }
    };
    let images: Result<Vec<Image>, ModelError> = request.images.iter().map(WireImage::decode).collect();
    match images.and_then(|imgs| score_batch(model, &imgs)) {
        Ok(scores) => ScoreResponse::ok(request.id, scores),
        Err(e) => ScoreResponse::error(request.id, e.to_string()),
    }
}

/// Serves requests line by line until EOF. Returns the number of requests answered.
pub fn serve_lines(reader: impl BufRead, mut writer: impl Write, model: &dyn ScoreFn) -> std::io::Result<usize> {
    let mut served = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_message(&line, model);
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        served += 1;
    }
    Ok(served)
}
