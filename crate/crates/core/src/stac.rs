//! Scene discovery against a STAC API `/search` endpoint.
//!
//! The HTTP layer is injected through [`Transport`] so searches run offline
//! against canned responses; the CLI supplies a live implementation.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::{DateTime, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geodata::EventWindow;

/// Sentinel-2 L2A spectral bands, in stacking order.
pub const S2_BANDS: [&str; 12] = [
    "B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B11", "B12",
];

pub const DEFAULT_ENDPOINT: &str = "https://planetarycomputer.microsoft.com/api/stac/v1";
pub const DEFAULT_COLLECTION: &str = "sentinel-2-l2a";
pub const DEFAULT_MAX_ITEMS: usize = 500;
const PAGE_LIMIT: usize = 100;
const DAYS_BEFORE_EVENT: u64 = 90;
const DAYS_AFTER_EVENT: u64 = 30;

#[derive(Debug, Error)]
pub enum StacError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("HTTP {status} from {url}: {body}")]
    Status { status: u16, url: String, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unexpected STAC response: {0}")]
    Schema(String),
}

/// Lon/lat bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, StacError> {
        let b = Self {
            min_x,
            min_y,
            max_x,
            max_y,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self, StacError> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.min_x, self.min_y, self.max_x, self.max_y]
    }

    pub fn validate(&self) -> Result<(), StacError> {
        let lon_ok = |v: f64| (-180.0..=180.0).contains(&v);
        let lat_ok = |v: f64| (-90.0..=90.0).contains(&v);
        if !(lon_ok(self.min_x) && lon_ok(self.max_x) && lat_ok(self.min_y) && lat_ok(self.max_y))
        {
            return Err(StacError::InvalidQuery(format!(
                "bbox {:?} outside lon [-180,180] / lat [-90,90]",
                self.as_array()
            )));
        }
        if !(self.min_x < self.max_x && self.min_y < self.max_y) {
            return Err(StacError::InvalidQuery(format!(
                "bbox {:?} is empty or inverted",
                self.as_array()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StacQuery {
    pub endpoint_url: String,
    pub collection: String,
    pub bbox: BBox,
    pub date_range: (NaiveDate, NaiveDate),
    pub max_items: usize,
    /// Used to label returned scenes as pre/post event.
    pub event_window: EventWindow,
}

impl StacQuery {
    pub fn with_endpoint(mut self, url: impl Into<String>) -> Self {
        self.endpoint_url = url.into();
        self
    }

    pub fn with_collection(mut self, collection: impl Into<String>) -> Self {
        self.collection = collection.into();
        self
    }

    pub fn with_max_items(mut self, max_items: usize) -> Self {
        self.max_items = max_items;
        self
    }

    pub fn search_url(&self) -> String {
        format!("{}/search", self.endpoint_url.trim_end_matches('/'))
    }

    /// JSON body of the first `/search` POST.
    pub fn search_body(&self) -> Value {
        let (start, end) = self.date_range;
        json!({
            "collections": [self.collection],
            "bbox": self.bbox.as_array(),
            "datetime": format!("{start}T00:00:00Z/{end}T23:59:59Z"),
            "limit": self.max_items.clamp(1, PAGE_LIMIT),
        })
    }
}

/// Query spanning 90 days before the event start to 30 days after its end.
pub fn build_query(bbox: BBox, event_window: EventWindow) -> Result<StacQuery, StacError> {
    bbox.validate()?;
    if event_window.start > event_window.end {
        return Err(StacError::InvalidQuery("event window start after end".into()));
    }
    let start = event_window
        .start
        .checked_sub_days(Days::new(DAYS_BEFORE_EVENT))
        .ok_or_else(|| StacError::InvalidQuery("date underflow".into()))?;
    let end = event_window
        .end
        .checked_add_days(Days::new(DAYS_AFTER_EVENT))
        .ok_or_else(|| StacError::InvalidQuery("date overflow".into()))?;
    Ok(StacQuery {
        endpoint_url: DEFAULT_ENDPOINT.to_string(),
        collection: DEFAULT_COLLECTION.to_string(),
        bbox,
        date_range: (start, end),
        max_items: DEFAULT_MAX_ITEMS,
        event_window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Epoch {
    Pre,
    Post,
    Ambiguous,
}

/// Pre strictly before the window's first day, Post strictly after its last
/// day, Ambiguous inside it (inclusive).
pub fn classify_epoch(acquired: DateTime<Utc>, window: &EventWindow) -> Epoch {
    let day = acquired.date_naive();
    if day < window.start {
        Epoch::Pre
    } else if day > window.end {
        Epoch::Post
    } else {
        Epoch::Ambiguous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub item_id: String,
    pub acquired: DateTime<Utc>,
    pub cloud_cover_pct: Option<f64>,
    pub asset_urls: BTreeMap<String, String>,
    pub epoch: Epoch,
}

/// Maps an asset key to its canonical band name. Accepts Planetary Computer
/// keys (`B02`, `B8A`, ...), the unpadded `B9` spelling and Earth Search
/// common names.
pub fn canonical_band(key: &str) -> Option<&'static str> {
    let k = key.trim();
    if let Some(b) = S2_BANDS.iter().find(|b| b.eq_ignore_ascii_case(k)) {
        return Some(b);
    }
    let alias = match k.to_ascii_lowercase().as_str() {
        "b1" | "coastal" => "B01",
        "b2" | "blue" => "B02",
        "b3" | "green" => "B03",
        "b4" | "red" => "B04",
        "b5" | "rededge1" => "B05",
        "b6" | "rededge2" => "B06",
        "b7" | "rededge3" => "B07",
        "b8" | "nir" => "B08",
        "nir08" => "B8A",
        "b9" | "nir09" => "B09",
        "swir16" => "B11",
        "swir22" => "B12",
        _ => return None,
    };
    S2_BANDS.iter().copied().find(|b| *b == alias)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub body: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, StacError>;
}

impl<F> Transport for F
where
    F: Fn(&HttpRequest) -> Result<HttpResponse, StacError>,
{
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, StacError> {
        self(request)
    }
}

/// Serves canned response bodies in order; the last one repeats. Every
/// request is recorded.
#[derive(Debug)]
pub struct FixtureTransport {
    pages: Vec<String>,
    cursor: Cell<usize>,
    requests: RefCell<Vec<HttpRequest>>,
}

impl FixtureTransport {
    pub fn new(pages: Vec<String>) -> Self {
        Self {
            pages,
            cursor: Cell::new(0),
            requests: RefCell::new(Vec::new()),
        }
    }

    /// A JSON array is a sequence of pages; anything else (including text
    /// that is not valid JSON) is served verbatim for every request.
    pub fn from_text(text: &str) -> Self {
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Array(pages)) => Self::new(pages.iter().map(Value::to_string).collect()),
            _ => Self::new(vec![text.to_string()]),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.requests.borrow().clone()
    }
}

impl Transport for FixtureTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, StacError> {
        self.requests.borrow_mut().push(request.clone());
        let i = self.cursor.get();
        self.cursor.set(i + 1);
        let body = self
            .pages
            .get(i.min(self.pages.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| StacError::Transport("fixture has no pages".into()))?;
        Ok(HttpResponse { status: 200, body })
    }
}

fn parse_error(text: &str, err: &serde_json::Error) -> StacError {
    // serde_json reports 1-based line/column; convert to a byte offset.
    let line_start: usize = text
        .split_inclusive('\n')
        .take(err.line().saturating_sub(1))
        .map(str::len)
        .sum();
    StacError::Parse {
        offset: line_start + err.column().saturating_sub(1),
        message: err.to_string(),
    }
}

fn parse_feature(f: &Value, window: &EventWindow) -> Result<SceneRecord, StacError> {
    let item_id = f
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| StacError::Schema("feature without id".into()))?
        .to_string();
    let props = f.get("properties").unwrap_or(&Value::Null);
    let stamp = props
        .get("datetime")
        .and_then(Value::as_str)
        .or_else(|| props.get("start_datetime").and_then(Value::as_str))
        .ok_or_else(|| StacError::Schema(format!("{item_id}: no datetime")))?;
    let acquired = DateTime::parse_from_rfc3339(stamp)
        .map_err(|e| StacError::Schema(format!("{item_id}: bad datetime {stamp:?}: {e}")))?
        .with_timezone(&Utc);
    let cloud_cover_pct = props
        .get("eo:cloud_cover")
        .and_then(Value::as_f64)
        .map(|c| c.clamp(0.0, 100.0));
    let mut asset_urls = BTreeMap::new();
    if let Some(assets) = f.get("assets").and_then(Value::as_object) {
        for (key, asset) in assets {
            if let (Some(band), Some(href)) =
                (canonical_band(key), asset.get("href").and_then(Value::as_str))
            {
                asset_urls.insert(band.to_string(), href.to_string());
            }
        }
    }
    Ok(SceneRecord {
        epoch: classify_epoch(acquired, window),
        item_id,
        acquired,
        cloud_cover_pct,
        asset_urls,
    })
}

fn next_request(page: &Value, previous: &HttpRequest) -> Option<HttpRequest> {
    let link = page
        .get("links")?
        .as_array()?
        .iter()
        .find(|l| l.get("rel").and_then(Value::as_str) == Some("next"))?;
    let href = link.get("href")?.as_str()?.to_string();
    let method = match link.get("method").and_then(Value::as_str) {
        Some(m) if m.eq_ignore_ascii_case("GET") => Method::Get,
        Some(_) => Method::Post,
        None => previous.method,
    };
    if method == Method::Get {
        return Some(HttpRequest {
            method,
            url: href,
            body: None,
        });
    }
    let prev_body: Value = previous
        .body
        .as_deref()
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or(Value::Null);
    let body = match (link.get("body"), link.get("merge").and_then(Value::as_bool)) {
        (Some(Value::Object(extra)), Some(true)) => {
            let mut merged = prev_body.as_object().cloned().unwrap_or_default();
            merged.extend(extra.clone());
            Value::Object(merged)
        }
        (Some(b), _) => b.clone(),
        (None, _) => prev_body,
    };
    Some(HttpRequest {
        method,
        url: href,
        body: Some(body.to_string()),
    })
}

/// Runs a paginated `/search`, following `next` links until no link remains,
/// a page adds no new items, or `max_items` records have been collected.
pub fn search_items(q: &StacQuery, transport: &dyn Transport) -> Result<Vec<SceneRecord>, StacError> {
    q.bbox.validate()?;
    let mut request = HttpRequest {
        method: Method::Post,
        url: q.search_url(),
        body: Some(q.search_body().to_string()),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    // Each useful page adds at least one item, so this bounds the walk.
    for _ in 0..=q.max_items {
        let resp = transport.send(&request)?;
        if !(200..300).contains(&resp.status) {
            return Err(StacError::Status {
                status: resp.status,
                url: request.url.clone(),
                body: resp.body.chars().take(200).collect(),
            });
        }
        let page: Value =
            serde_json::from_str(&resp.body).map_err(|e| parse_error(&resp.body, &e))?;
        let features = page
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| StacError::Schema("response has no features array".into()))?;
        let before = out.len();
        for f in features {
            let rec = parse_feature(f, &q.event_window)?;
            if seen.insert(rec.item_id.clone()) {
                out.push(rec);
            }
        }
        if out.len() >= q.max_items {
            out.truncate(q.max_items);
            break;
        }
        if out.len() == before {
            break;
        }
        match next_request(&page, &request) {
            Some(next) => request = next,
            None => break,
        }
    }
    Ok(out)
}
