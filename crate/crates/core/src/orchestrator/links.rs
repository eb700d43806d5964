use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::transport::{Connection, MatrixPayload, WireMessage};

use super::world::ClientWorker;

/// The coordinator's handle on one client, in-process or remote.
pub trait ClientLink: Send {
    fn client_id(&self) -> usize;

    /// Step (i): cut-layer activations and labels of the client's next batch.
    fn forward(&mut self, round: u32) -> Result<(Matrix<f32>, Vec<usize>)>;

    /// Step (iii): activation gradients back to the client, which updates its model.
    fn backward(&mut self, round: u32, grads: &Matrix<f32>) -> Result<()>;

    /// Cut-layer activations of the test inputs under the client's current model.
    fn evaluate(&mut self, round: u32, inputs: &Matrix<f32>) -> Result<Matrix<f32>>;

    /// Direct access to the worker; only in-process links have one.
    fn worker_mut(&mut self) -> Option<&mut ClientWorker> {
        None
    }

    /// Ends the run; remote clients get the next configuration or `BYE`.
    fn finish(&mut self, _next_config: Option<&str>) -> Result<()> {
        Ok(())
    }
}

pub struct InProcLink {
    pub worker: ClientWorker,
}

impl InProcLink {
    pub fn new(worker: ClientWorker) -> Self {
        Self { worker }
    }
}

impl ClientLink for InProcLink {
    fn client_id(&self) -> usize {
        self.worker.client_id
    }

    fn forward(&mut self, _round: u32) -> Result<(Matrix<f32>, Vec<usize>)> {
        self.worker.forward()
    }

    fn backward(&mut self, _round: u32, grads: &Matrix<f32>) -> Result<()> {
        self.worker.backward(grads)
    }

    fn evaluate(&mut self, _round: u32, inputs: &Matrix<f32>) -> Result<Matrix<f32>> {
        self.worker.activations(inputs)
    }

    fn worker_mut(&mut self) -> Option<&mut ClientWorker> {
        Some(&mut self.worker)
    }
}

/// Server end of a TCP client after a completed handshake.
pub struct TcpLink {
    client_id: usize,
    conn: Connection,
}

impl TcpLink {
    pub fn new(client_id: usize, conn: Connection) -> Self {
        Self { client_id, conn }
    }

    fn id16(&self) -> u16 {
        self.client_id as u16
    }

    fn check(&self, payload: &MatrixPayload, round: u32, what: &str) -> Result<()> {
        if payload.round != round || payload.client_id as usize != self.client_id {
            return Err(Error::Protocol(format!(
                "{what} for round {} client {}, expected round {round} client {}",
                payload.round, payload.client_id, self.client_id
            )));
        }
        Ok(())
    }
}

impl ClientLink for TcpLink {
    fn client_id(&self) -> usize {
        self.client_id
    }

    fn forward(&mut self, round: u32) -> Result<(Matrix<f32>, Vec<usize>)> {
        match self.conn.recv()? {
            WireMessage::Activations { payload, labels: Some(labels) } => {
                self.check(&payload, round, "ACTIVATIONS")?;
                if labels.len() != payload.rows as usize {
                    return Err(Error::Protocol(format!("{} labels for {} rows", labels.len(), payload.rows)));
                }
                Ok((payload.into_matrix()?, labels.into_iter().map(|y| y as usize).collect()))
            }
            WireMessage::Activations { labels: None, .. } => {
                Err(Error::Protocol("ACTIVATIONS without labels".into()))
            }
            other => Err(Error::Protocol(format!("expected ACTIVATIONS, got {:?}", other.tag()))),
        }
    }

    fn backward(&mut self, round: u32, grads: &Matrix<f32>) -> Result<()> {
        self.conn.send(&WireMessage::ActGrads(MatrixPayload::from_matrix(round, self.id16(), grads)))
    }

    fn evaluate(&mut self, round: u32, inputs: &Matrix<f32>) -> Result<Matrix<f32>> {
        self.conn.send(&WireMessage::EvalRequest { round, client_id: self.id16() })?;
        match self.conn.recv()? {
            WireMessage::EvalResult(payload) => {
                self.check(&payload, round, "EVAL_RESULT")?;
                if payload.rows as usize != inputs.rows() {
                    return Err(Error::Protocol(format!(
                        "EVAL_RESULT has {} rows for {} test inputs",
                        payload.rows,
                        inputs.rows()
                    )));
                }
                payload.into_matrix()
            }
            other => Err(Error::Protocol(format!("expected EVAL_RESULT, got {:?}", other.tag()))),
        }
    }

    fn finish(&mut self, next_config: Option<&str>) -> Result<()> {
        match next_config {
            Some(text) => self.conn.send(&WireMessage::Config { text: text.to_owned() }),
            None => self.conn.send(&WireMessage::Bye),
        }
    }
}

/// Drives one client over an established connection for a whole run.
///
/// Per round the client sends `ACTIVATIONS`, applies the `ACT_GRADS` reply,
/// and on evaluation rounds answers the `EVAL_REQUEST` that follows. Returns
/// the server's closing message: the next configuration, or `None` on `BYE`.
pub fn serve_client(conn: &mut Connection, worker: &mut ClientWorker, rounds: u32, is_eval: impl Fn(u32) -> bool, test_inputs: &Matrix<f32>) -> Result<Option<String>> {
    let id = worker.client_id as u16;
    for t in 1..=rounds {
        let (act, labels) = worker.forward().map_err(|e| e.in_round(t, Some(worker.client_id), "client forward"))?;
        conn.send(&WireMessage::Activations {
            payload: MatrixPayload::from_matrix(t, id, &act),
            labels: Some(labels.iter().map(|&y| y as u32).collect()),
        })?;
        match conn.recv().map_err(|e| e.in_round(t, Some(worker.client_id), "await gradients"))? {
            WireMessage::ActGrads(p) if p.round == t && p.client_id == id => {
                worker.backward(&p.into_matrix()?).map_err(|e| e.in_round(t, Some(worker.client_id), "client backward"))?;
            }
            other => return Err(Error::Protocol(format!("expected ACT_GRADS for round {t}, got {:?}", other.tag())).in_round(t, Some(worker.client_id), "await gradients")),
        }
        if is_eval(t) {
            match conn.recv()? {
                WireMessage::EvalRequest { round, client_id } if round == t && client_id == id => {
                    let act = worker.activations(test_inputs)?;
                    conn.send(&WireMessage::EvalResult(MatrixPayload::from_matrix(t, id, &act)))?;
                }
                other => return Err(Error::Protocol(format!("expected EVAL_REQUEST for round {t}, got {:?}", other.tag()))),
            }
        }
    }
    match conn.recv()? {
        WireMessage::Config { text } => Ok(Some(text)),
        WireMessage::Bye => Ok(None),
        other => Err(Error::Protocol(format!("expected CONFIG or BYE after the last round, got {:?}", other.tag()))),
    }
}
