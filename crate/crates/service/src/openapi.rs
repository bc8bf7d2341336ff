//! OpenAPI description of the HTTP API. `docs/openapi.json` is generated
//! from this and checked by the test suite.

use serde_json::{json, Value};

fn body(schema: &str) -> Value {
    json!({ "content": { "application/json": { "schema": { "$ref": format!("#/components/schemas/{schema}") } } } })
}

fn response(description: &str, schema: &str) -> Value {
    let mut v = body(schema);
    v["description"] = json!(description);
    v
}

fn errors(codes: &[(&str, &str)]) -> Vec<(String, Value)> {
    codes
        .iter()
        .map(|(code, what)| (code.to_string(), response(what, "Error")))
        .collect()
}

fn responses(ok: &[(&str, &str, &str)], err: &[(&str, &str)]) -> Value {
    let mut map = serde_json::Map::new();
    for (code, what, schema) in ok {
        map.insert(code.to_string(), response(what, schema));
    }
    for (code, v) in errors(err) {
        map.insert(code, v);
    }
    Value::Object(map)
}

fn id_param() -> Value {
    json!([{ "name": "id", "in": "path", "required": true, "schema": { "type": "string" } }])
}

fn object(description: &str) -> Value {
    json!({ "type": "object", "description": description })
}

pub fn openapi() -> Value {
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "sizer",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Memory sizing of serverless functions. Request and response bodies use the same JSON encoding as the command-line artifacts."
        },
        "paths": {
            "/api/sizings": {
                "post": {
                    "summary": "Size a SUC. Requests that reuse stored models answer at once; others start a job.",
                    "requestBody": body("SizingRequest"),
                    "responses": responses(
                        &[("200", "sizing result", "SizingResult"), ("202", "job started", "Accepted")],
                        &[("400", "invalid request"), ("404", "referenced model not found"), ("409", "concurrent model store write"), ("422", "no policy meets the bounds; the body is the nearest miss")]
                    )
                }
            },
            "/api/sizings/{id}": {
                "get": {
                    "summary": "Result of a sizing, or its progress",
                    "parameters": id_param(),
                    "responses": responses(
                        &[("200", "sizing result", "SizingResult"), ("202", "still running", "Accepted")],
                        &[("404", "unknown id"), ("422", "infeasible goal")]
                    )
                }
            },
            "/api/experiments": {
                "post": {
                    "summary": "Start an experiment",
                    "requestBody": body("ExperimentRequest"),
                    "responses": responses(&[("202", "job started", "Accepted")], &[("400", "invalid plan")])
                }
            },
            "/api/experiments/{id}": {
                "get": {
                    "summary": "Report of an experiment, or its progress",
                    "parameters": id_param(),
                    "responses": responses(
                        &[("200", "experiment report", "ExperimentReport"), ("202", "still running", "Accepted")],
                        &[("404", "unknown id"), ("422", "throttled by the platform")]
                    )
                }
            },
            "/api/models": {
                "get": {
                    "summary": "Every stored quality model",
                    "responses": responses(&[("200", "models", "QualityModelList")], &[])
                }
            },
            "/api/pareto": {
                "get": {
                    "summary": "Pareto front of a finished sizing, best ZF first",
                    "parameters": [{ "name": "sizing", "in": "query", "required": true, "schema": { "type": "string" } }],
                    "responses": responses(
                        &[("200", "front", "ParetoFront"), ("202", "still running", "Accepted")],
                        &[("400", "missing sizing id"), ("404", "unknown id")]
                    )
                }
            },
            "/api/suc": {
                "get": {
                    "summary": "The registered system under configuration",
                    "responses": responses(&[("200", "SUC", "SystemUnderConfiguration")], &[])
                }
            }
        },
        "components": {
            "schemas": {
                "SizingRequest": object("suc (optional), models (optional), goal, workload, tactics, apply, options"),
                "SizingResult": object("status, policy, predicted, zf_score, violated_bounds, pareto_front, search_stats, provenance"),
                "ExperimentRequest": object("plan, tactics, workload, options"),
                "ExperimentReport": object("plan, tactics, samples, timings, elapsed, invocations, billed_cost"),
                "QualityModelList": { "type": "array", "items": object("quality model of one function and workload class") },
                "ParetoFront": { "type": "array", "items": object("policy, predicted, zf_score") },
                "SystemUnderConfiguration": object("name, functions, composition"),
                "Accepted": {
                    "type": "object",
                    "required": ["id", "status", "location"],
                    "properties": {
                        "id": { "type": "string" },
                        "status": { "type": "string", "enum": ["running", "done", "failed"] },
                        "location": { "type": "string" }
                    }
                },
                "Error": {
                    "type": "object",
                    "required": ["error", "violations"],
                    "properties": {
                        "error": { "type": "string", "enum": ["validation", "not_found", "conflict", "infeasible", "limit", "platform", "interrupted"] },
                        "violations": { "type": "array", "items": { "type": "string" } }
                    }
                }
            }
        }
    })
}
