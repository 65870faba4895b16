//! A scribble session driven in-process through the HTTP router: create,
//! scribble, correct, fetch and delete.

use axum::body::Body;
use axum::http::Request;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use cdseg::config::PipelineConfig;
use cdseg::io::{decode_mask_png, encode_png_rgb};
use cdseg::serve::{router, SessionStore};
use cdseg::synthetic::three_regions;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> (u16, Vec<u8>) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status().as_u16();
    (status, response.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::main(flavor = "multi_thread")]
async fn main() {
    let fixture = three_regions(42);
    let app = router(SessionStore::new(PipelineConfig::default()));

    let (status, body) = call(&app, "POST", "/sessions", json!({ "image_png": B64.encode(encode_png_rgb(&fixture.image)) })).await;
    let created: Value = serde_json::from_slice(&body).unwrap();
    let id = created["id"].as_str().unwrap();
    println!("POST /sessions -> {status}, {} maps cached", created["superpixel_counts"].as_array().unwrap().len());

    let all = fixture.strokes.strokes.clone();
    let first_two = &all[..2];
    for payload in [json!({ "strokes": first_two }), json!({ "strokes": all })] {
        let (status, body) = call(&app, "POST", &format!("/sessions/{id}/scribbles"), payload).await;
        let reply: Value = serde_json::from_slice(&body).unwrap();
        let mask = decode_mask_png(&B64.decode(reply["mask_png"].as_str().unwrap()).unwrap()).unwrap();
        let counts = mask.histogram();
        println!("scribbles -> {status} in {} ms, class pixels {:?}", reply["ms"], &counts[..3]);
    }

    let (status, png) = call(&app, "GET", &format!("/sessions/{id}/mask"), Value::Null).await;
    println!("GET mask -> {status}, {} bytes", png.len());
    let (status, _) = call(&app, "DELETE", &format!("/sessions/{id}"), Value::Null).await;
    println!("DELETE -> {status}");
}
