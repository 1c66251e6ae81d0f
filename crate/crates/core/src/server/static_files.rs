use std::io::Cursor;
use std::path::{Component, Path};

use tiny_http::Response;

use super::{error_response, header};

const INDEX_HTML: &str = include_str!("../../assets/index.html");

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

/// Files under `ui_dir`, or the bundled page when no directory is set.
pub(super) fn serve(ui_dir: Option<&Path>, url_path: &str) -> Response<Cursor<Vec<u8>>> {
    let rel = url_path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(dir) = ui_dir else {
        return if rel == "index.html" {
            Response::from_data(INDEX_HTML.as_bytes().to_vec())
                .with_header(header("Content-Type", "text/html; charset=utf-8"))
        } else {
            error_response(404, "not found")
        };
    };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return error_response(404, "not found");
    }
    let full = dir.join(rel);
    match std::fs::read(&full) {
        Ok(bytes) => Response::from_data(bytes).with_header(header("Content-Type", content_type(&full))),
        Err(_) => error_response(404, "not found"),
    }
}
