use super::{Brain, BrainError, BrainQuery, BrainReply, HistoryEntry};
use crate::decision::{Normalizer, PointFormNormalizer};
use crate::sim::{Observation, Scene};
use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use std::io::Cursor;
use std::time::Duration;

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    /// Base64 PNG of the RGB frame.
    image: String,
    history: &'a [HistoryEntry],
}

#[derive(Deserialize)]
struct Response {
    text: String,
}

/// HTTP client for an external model server.
///
/// POSTs `{prompt, image, history}` as JSON and expects `{text}` back.
pub struct RemoteBrain {
    url: String,
    client: reqwest::blocking::Client,
    normalizer: Box<dyn Normalizer>,
}

impl RemoteBrain {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, BrainError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BrainError::Unavailable(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            client,
            normalizer: Box::new(PointFormNormalizer),
        })
    }

    pub fn with_normalizer(mut self, normalizer: Box<dyn Normalizer>) -> Self {
        self.normalizer = normalizer;
        self
    }
}

pub fn encode_png(frame: &Observation) -> Result<Vec<u8>, BrainError> {
    let img = RgbImage::from_raw(frame.width, frame.height, frame.rgb.clone())
        .ok_or_else(|| BrainError::Unavailable("frame buffer has the wrong size".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| BrainError::Unavailable(format!("png encoding: {e}")))?;
    Ok(out.into_inner())
}

impl Brain for RemoteBrain {
    fn decide(&mut self, query: &BrainQuery, _: &Scene) -> Result<BrainReply, BrainError> {
        let png = encode_png(&query.observation)?;
        let body = Request {
            prompt: &query.prompt,
            image: base64::engine::general_purpose::STANDARD.encode(png),
            history: &query.history,
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| BrainError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(BrainError::Unavailable(format!("HTTP {}", resp.status().as_u16())));
        }
        let parsed: Response = resp
            .json()
            .map_err(|e| BrainError::Unavailable(format!("malformed reply: {e}")))?;
        Ok(BrainReply::immediate(self.normalizer.normalize(&parsed.text)))
    }
}
