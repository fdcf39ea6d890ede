//! The two-level Q-network and its running state encoder.
//!
//! A policy holds three recurrent pieces: a frozen state cell that folds
//! the embeddings of past actions into a fixed-width state, and per
//! subaction level an LSTM cell that conditions that state on the current
//! partial action plus two MLP heads whose outputs are dotted to produce
//! the Q value. Online and target copies of the Q networks live side by
//! side; the target copy only changes on an explicit sync.

use std::path::Path;

use rand::Rng;

use crate::nn::{
    dot, dump_rows, parse_rows, LstmCell, LstmSpec, LstmTape, Mlp, MlpSpec, MlpTape, ParamBlock,
};

use super::{RlError, RlVariant};

const CHECKPOINT_MAGIC: &str = "kgperturb-dqn v1";

/// Widths shared by every network in a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDims {
    /// Entity/relation embedding width, taken from the frozen scorer.
    pub emb: usize,
    /// Hidden width of the LSTM cells.
    pub hidden: usize,
    /// Output width of the action and state heads.
    pub head: usize,
}

/// One full copy of the Q networks for both subaction levels.
///
/// Level 1 scores incident edges: its LSTM consumes the start entity's
/// embedding, its action head an edge embedding (relation and tail
/// concatenated). Level 2 scores replacements: its LSTM consumes the
/// chosen edge and start embeddings concatenated, its action head a
/// single replacement embedding.
#[derive(Debug, Clone)]
pub struct QNets {
    pub q1_lstm: LstmCell,
    pub q1_action_head: Mlp,
    pub q1_state_head: Mlp,
    pub q2_lstm: LstmCell,
    pub q2_action_head: Mlp,
    pub q2_state_head: Mlp,
}

impl QNets {
    fn init<R: Rng>(dims: PolicyDims, rng: &mut R) -> Self {
        QNets {
            q1_lstm: LstmCell::init(LstmSpec { input: dims.emb, hidden: dims.hidden }, rng),
            q1_action_head: Mlp::init(MlpSpec::new(vec![2 * dims.emb, dims.head, dims.head]), rng),
            q1_state_head: Mlp::init(MlpSpec::new(vec![dims.hidden, dims.head, dims.head]), rng),
            q2_lstm: LstmCell::init(LstmSpec { input: 3 * dims.emb, hidden: dims.hidden }, rng),
            q2_action_head: Mlp::init(MlpSpec::new(vec![dims.emb, dims.head, dims.head]), rng),
            q2_state_head: Mlp::init(MlpSpec::new(vec![dims.hidden, dims.head, dims.head]), rng),
        }
    }

    fn zeros(dims: PolicyDims) -> Self {
        QNets {
            q1_lstm: LstmCell::zeros(LstmSpec { input: dims.emb, hidden: dims.hidden }),
            q1_action_head: Mlp::zeros(MlpSpec::new(vec![2 * dims.emb, dims.head, dims.head])),
            q1_state_head: Mlp::zeros(MlpSpec::new(vec![dims.hidden, dims.head, dims.head])),
            q2_lstm: LstmCell::zeros(LstmSpec { input: 3 * dims.emb, hidden: dims.hidden }),
            q2_action_head: Mlp::zeros(MlpSpec::new(vec![dims.emb, dims.head, dims.head])),
            q2_state_head: Mlp::zeros(MlpSpec::new(vec![dims.hidden, dims.head, dims.head])),
        }
    }

    fn blocks(&self) -> Vec<&ParamBlock> {
        let mut out: Vec<&ParamBlock> = Vec::new();
        out.extend(&self.q1_lstm.blocks);
        out.extend(&self.q1_action_head.blocks);
        out.extend(&self.q1_state_head.blocks);
        out.extend(&self.q2_lstm.blocks);
        out.extend(&self.q2_action_head.blocks);
        out.extend(&self.q2_state_head.blocks);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut out: Vec<&mut ParamBlock> = Vec::new();
        out.extend(&mut self.q1_lstm.blocks);
        out.extend(&mut self.q1_action_head.blocks);
        out.extend(&mut self.q1_state_head.blocks);
        out.extend(&mut self.q2_lstm.blocks);
        out.extend(&mut self.q2_action_head.blocks);
        out.extend(&mut self.q2_state_head.blocks);
        out
    }

    fn zero_grad(&mut self) {
        for b in self.blocks_mut() {
            b.zero_grad();
        }
    }
}

/// Everything recorded by a single-candidate Q evaluation, enough to push
/// a scalar loss gradient back into the online networks.
pub struct QTape {
    lstm: LstmTape,
    action: MlpTape,
    state: MlpTape,
    action_out: Vec<f64>,
    state_out: Vec<f64>,
}

/// The learned perturbation policy: a frozen history encoder plus online
/// and target Q networks.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub variant: RlVariant,
    pub dims: PolicyDims,
    /// Folds past action embeddings into the state; never trained.
    pub state_cell: LstmCell,
    pub online: QNets,
    pub target: QNets,
}

impl DqnPolicy {
    pub fn init<R: Rng>(variant: RlVariant, dims: PolicyDims, rng: &mut R) -> Self {
        let state_cell = LstmCell::init(LstmSpec { input: 4 * dims.emb, hidden: dims.hidden }, rng);
        let online = QNets::init(dims, rng);
        let target = online.clone();
        DqnPolicy { variant, dims, state_cell, online, target }
    }

    /// All-zero networks, for closed-form tests.
    pub fn zeros(variant: RlVariant, dims: PolicyDims) -> Self {
        let state_cell = LstmCell::zeros(LstmSpec { input: 4 * dims.emb, hidden: dims.hidden });
        let online = QNets::zeros(dims);
        let target = online.clone();
        DqnPolicy { variant, dims, state_cell, online, target }
    }

    /// Runs the frozen state cell over a sequence of action embeddings.
    /// An empty history gives the all-zero state.
    pub fn state_embed(&self, history: &[Vec<f64>]) -> Result<Vec<f64>, RlError> {
        let mut h = vec![0.0; self.dims.hidden];
        let mut c = vec![0.0; self.dims.hidden];
        for x in history {
            let (nh, nc, _) = self.state_cell.forward(x, &h, &c)?;
            h = nh;
            c = nc;
        }
        Ok(h)
    }

    pub fn q1_scores(
        &self,
        state: &[f64],
        a0_emb: &[f64],
        edge_embs: &[Vec<f64>],
    ) -> Result<Vec<f64>, RlError> {
        q_scores(
            &self.online.q1_lstm,
            &self.online.q1_action_head,
            &self.online.q1_state_head,
            state,
            a0_emb,
            edge_embs,
        )
    }

    pub fn q1_scores_target(
        &self,
        state: &[f64],
        a0_emb: &[f64],
        edge_embs: &[Vec<f64>],
    ) -> Result<Vec<f64>, RlError> {
        q_scores(
            &self.target.q1_lstm,
            &self.target.q1_action_head,
            &self.target.q1_state_head,
            state,
            a0_emb,
            edge_embs,
        )
    }

    pub fn q2_scores(
        &self,
        state: &[f64],
        a0_emb: &[f64],
        a1_emb: &[f64],
        cand_embs: &[Vec<f64>],
    ) -> Result<Vec<f64>, RlError> {
        let x = concat(a1_emb, a0_emb);
        q_scores(
            &self.online.q2_lstm,
            &self.online.q2_action_head,
            &self.online.q2_state_head,
            state,
            &x,
            cand_embs,
        )
    }

    pub fn q2_scores_target(
        &self,
        state: &[f64],
        a0_emb: &[f64],
        a1_emb: &[f64],
        cand_embs: &[Vec<f64>],
    ) -> Result<Vec<f64>, RlError> {
        let x = concat(a1_emb, a0_emb);
        q_scores(
            &self.target.q2_lstm,
            &self.target.q2_action_head,
            &self.target.q2_state_head,
            state,
            &x,
            cand_embs,
        )
    }

    /// Online level-1 Q value for one edge, with the tape needed by
    /// [`DqnPolicy::q1_backward`].
    pub fn q1_forward(
        &self,
        state: &[f64],
        a0_emb: &[f64],
        edge_emb: &[f64],
    ) -> Result<(f64, QTape), RlError> {
        q_forward(
            &self.online.q1_lstm,
            &self.online.q1_action_head,
            &self.online.q1_state_head,
            state,
            a0_emb,
            edge_emb,
        )
    }

    /// Accumulates `dq * dQ1/dparams` into the online level-1 networks.
    pub fn q1_backward(&mut self, tape: &QTape, dq: f64) {
        q_backward(
            &mut self.online.q1_lstm,
            &mut self.online.q1_action_head,
            &mut self.online.q1_state_head,
            tape,
            dq,
        );
    }

    pub fn q2_forward(
        &self,
        state: &[f64],
        a0_emb: &[f64],
        a1_emb: &[f64],
        cand_emb: &[f64],
    ) -> Result<(f64, QTape), RlError> {
        let x = concat(a1_emb, a0_emb);
        q_forward(
            &self.online.q2_lstm,
            &self.online.q2_action_head,
            &self.online.q2_state_head,
            state,
            &x,
            cand_emb,
        )
    }

    pub fn q2_backward(&mut self, tape: &QTape, dq: f64) {
        q_backward(
            &mut self.online.q2_lstm,
            &mut self.online.q2_action_head,
            &mut self.online.q2_state_head,
            tape,
            dq,
        );
    }

    /// Copies the online networks over the targets.
    pub fn sync_targets(&mut self) {
        self.target = self.online.clone();
    }

    /// Every trainable block. The state cell stays frozen and is not
    /// included.
    pub fn online_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.online.blocks_mut()
    }

    pub fn zero_online_grads(&mut self) {
        self.online.zero_grad();
    }

    /// Serializes dims plus the state cell and online networks. Targets
    /// are rebuilt as a copy on load.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!(
            "{CHECKPOINT_MAGIC} variant={} emb={} hidden={} head={}\n",
            self.variant, self.dims.emb, self.dims.hidden, self.dims.head
        );
        for block in self.checkpoint_blocks() {
            dump_rows(&mut out, block);
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty checkpoint")?;
        let rest = header.strip_prefix(CHECKPOINT_MAGIC).ok_or_else(|| format!("bad header {header:?}"))?;
        let mut variant = None;
        let mut emb = None;
        let mut hidden = None;
        let mut head = None;
        for token in rest.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| format!("bad header field {token:?}"))?;
            match key {
                "variant" => variant = Some(value.parse::<RlVariant>()?),
                "emb" => emb = Some(parse_dim(key, value)?),
                "hidden" => hidden = Some(parse_dim(key, value)?),
                "head" => head = Some(parse_dim(key, value)?),
                other => return Err(format!("unknown header field {other:?}")),
            }
        }
        let variant = variant.ok_or("header missing variant")?;
        let dims = PolicyDims {
            emb: emb.ok_or("header missing emb")?,
            hidden: hidden.ok_or("header missing hidden")?,
            head: head.ok_or("header missing head")?,
        };
        let mut policy = DqnPolicy::zeros(variant, dims);
        for block in policy.checkpoint_blocks_mut() {
            *block = parse_rows(&mut lines, block.rows, block.cols)?;
        }
        if lines.next().is_some() {
            return Err("trailing rows after parameters".into());
        }
        policy.sync_targets();
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        std::fs::write(path, self.to_checkpoint()).map_err(|source| RlError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let text = std::fs::read_to_string(path).map_err(|source| RlError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_checkpoint(&text)
            .map_err(|msg| RlError::Format { path: path.display().to_string(), msg })
    }

    fn checkpoint_blocks(&self) -> Vec<&ParamBlock> {
        let mut out: Vec<&ParamBlock> = self.state_cell.blocks.iter().collect();
        out.extend(self.online.blocks());
        out
    }

    fn checkpoint_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut out: Vec<&mut ParamBlock> = self.state_cell.blocks.iter_mut().collect();
        out.extend(self.online.blocks_mut());
        out
    }
}

fn parse_dim(key: &str, value: &str) -> Result<usize, String> {
    value.parse().map_err(|_| format!("bad {key} value {value:?}"))
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Q value of one candidate: the action head on the candidate embedding
/// dotted with the state head on the conditioned LSTM output.
#[cfg(test)]
fn head_q(
    action_head: &Mlp,
    state_head: &Mlp,
    action_in: &[f64],
    state_in: &[f64],
) -> Result<f64, RlError> {
    let (action_out, _) = action_head.forward(action_in)?;
    let (state_out, _) = state_head.forward(state_in)?;
    Ok(dot(&action_out, &state_out))
}

fn q_scores(
    lstm: &LstmCell,
    action_head: &Mlp,
    state_head: &Mlp,
    state: &[f64],
    x: &[f64],
    action_embs: &[Vec<f64>],
) -> Result<Vec<f64>, RlError> {
    if action_embs.is_empty() {
        return Err(RlError::NoCandidates);
    }
    let zeros = vec![0.0; lstm.spec.hidden];
    let (h, _, _) = lstm.forward(x, state, &zeros)?;
    let (state_out, _) = state_head.forward(&h)?;
    let mut scores = Vec::with_capacity(action_embs.len());
    for emb in action_embs {
        let (action_out, _) = action_head.forward(emb)?;
        scores.push(dot(&action_out, &state_out));
    }
    Ok(scores)
}

fn q_forward(
    lstm: &LstmCell,
    action_head: &Mlp,
    state_head: &Mlp,
    state: &[f64],
    x: &[f64],
    action_emb: &[f64],
) -> Result<(f64, QTape), RlError> {
    let zeros = vec![0.0; lstm.spec.hidden];
    let (h, _, lstm_tape) = lstm.forward(x, state, &zeros)?;
    let (state_out, state_tape) = state_head.forward(&h)?;
    let (action_out, action_tape) = action_head.forward(action_emb)?;
    let q = dot(&action_out, &state_out);
    Ok((q, QTape { lstm: lstm_tape, action: action_tape, state: state_tape, action_out, state_out }))
}

/// The gradient stops at the conditioning state and the action embedding:
/// only the LSTM and head parameters accumulate.
fn q_backward(lstm: &mut LstmCell, action_head: &mut Mlp, state_head: &mut Mlp, tape: &QTape, dq: f64) {
    let d_action: Vec<f64> = tape.state_out.iter().map(|v| dq * v).collect();
    let d_state: Vec<f64> = tape.action_out.iter().map(|v| dq * v).collect();
    action_head.backward(&tape.action, &d_action);
    let dh = state_head.backward(&tape.state, &d_state);
    let dc = vec![0.0; lstm.spec.hidden];
    lstm.backward(&tape.lstm, &dh, &dc);
}
