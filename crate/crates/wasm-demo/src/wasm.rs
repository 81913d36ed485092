//! Browser bindings. Each export wraps a plain library function and
//! moves data as JSON strings so the page needs no binding glue beyond
//! `JSON.parse`.

use wasm_bindgen::prelude::*;

fn to_js<T: serde::Serialize>(value: &T) -> std::result::Result<String, JsValue> {
    serde_json::to_string(value).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn err_js(e: stackids::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub fn demo_train(
    dataset: &str,
    hidden: u32,
    optimizer: &str,
    learning_rate: f64,
    epochs: u32,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    let demo = crate::train_demo(
        dataset,
        hidden as usize,
        optimizer,
        learning_rate,
        epochs as usize,
        seed as u64,
    )
    .map_err(err_js)?;
    to_js(&demo)
}

#[wasm_bindgen]
pub fn demo_threshold(
    scores_json: &str,
    labels_json: &str,
    threshold: f64,
) -> std::result::Result<String, JsValue> {
    let scores: Vec<f64> =
        serde_json::from_str(scores_json).map_err(|e| JsValue::from_str(&e.to_string()))?;
    let labels: Vec<bool> =
        serde_json::from_str(labels_json).map_err(|e| JsValue::from_str(&e.to_string()))?;
    let counts = crate::threshold_counts(&scores, &labels, threshold).map_err(err_js)?;
    to_js(&counts)
}

#[wasm_bindgen]
pub fn demo_race(
    dataset: &str,
    hidden: u32,
    epochs: u32,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    let lanes = crate::optimizer_race(dataset, hidden as usize, epochs as usize, seed as u64)
        .map_err(err_js)?;
    to_js(&lanes)
}
