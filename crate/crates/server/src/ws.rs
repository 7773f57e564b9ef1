use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::response::Response;
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::mpsc;

use crate::{ApiError, AppState, LiveSession};

/// Client-to-server frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Post { text: String },
}

#[derive(Deserialize)]
pub(crate) struct TokenQuery {
    token: String,
}

pub(crate) async fn upgrade(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TokenQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let live = state.session(&id)?;
    let participant = live.participant_for(&q.token).ok_or(ApiError::Unauthorized)?.to_string();
    Ok(ws.on_upgrade(move |socket| serve_participant(live, participant, socket)))
}

async fn serve_participant(live: Arc<LiveSession>, participant: String, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    live.subscribe(&participant, tx.clone());

    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(WsMessage::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            WsMessage::Text(t) => t.to_string(),
            WsMessage::Close(_) => break,
            _ => continue,
        };
        let result: Result<(), serde_json::Value> = match serde_json::from_str::<ClientFrame>(&text) {
            Ok(ClientFrame::Post { text }) => {
                let (live, participant) = (live.clone(), participant.clone());
                match tokio::task::spawn_blocking(move || live.mutate(|s, now| s.post_message(&participant, &text, now))).await {
                    Ok(Ok(_)) => Ok(()),
                    Ok(Err(e)) => Err(ApiError::from(e).body()),
                    Err(e) => Err(json!({ "error": "internal", "message": e.to_string() })),
                }
            }
            Err(e) => Err(json!({ "error": "bad_frame", "message": e.to_string() })),
        };
        if let Err(mut frame) = result {
            frame["type"] = json!("error");
            let _ = tx.send(frame.to_string());
        }
    }
    live.unsubscribe(&participant);
    writer.abort();
}
