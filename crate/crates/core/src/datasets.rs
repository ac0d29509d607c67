//! Replay buffers, mixed-ratio batch sampling, pessimistic relabeling, and
//! buffer persistence (binary `.rbuf` plus a JSON-lines export).

use crate::bytesio::{
    expect_magic, read_f64, read_f64_vec, read_i64, read_u32, read_u64, read_u8, write_f64,
    write_f64_slice, write_i64, write_u32, write_u64, write_u8,
};
use crate::envs::Transition;
use crate::numkit::{Matrix, Rng};
use crate::shaping::RewardShaper;
use crate::{CoreError, Result};
use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const RBUF_MAGIC: &[u8; 4] = b"RBUF";
const RBUF_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferTag {
    Env,
    OptRaw,
    OptRelabel,
    Pess,
}

impl BufferTag {
    fn to_byte(self) -> u8 {
        match self {
            BufferTag::Env => 0,
            BufferTag::OptRaw => 1,
            BufferTag::OptRelabel => 2,
            BufferTag::Pess => 3,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0 => BufferTag::Env,
            1 => BufferTag::OptRaw,
            2 => BufferTag::OptRelabel,
            3 => BufferTag::Pess,
            _ => return Err(CoreError::Schema(format!("unknown buffer tag {b}"))),
        })
    }
}

/// FIFO ring of transitions. `capacity = None` means unbounded (used for the
/// offline dataset); model buffers evict oldest-first once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    tag: BufferTag,
    capacity: Option<usize>,
    data: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(tag: BufferTag, capacity: Option<usize>) -> Self {
        ReplayBuffer { tag, capacity, data: VecDeque::new(), inserted: 0 }
    }

    pub fn from_transitions(tag: BufferTag, transitions: Vec<Transition>) -> Self {
        let mut b = ReplayBuffer::new(tag, None);
        for t in transitions {
            b.push(t);
        }
        b
    }

    pub fn tag(&self) -> BufferTag {
        self.tag
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if let Some(cap) = self.capacity {
            while self.data.len() >= cap {
                self.data.pop_front();
            }
        }
        self.data.push_back(t);
        self.inserted += 1;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, rng: &mut Rng) -> &Transition {
        &self.data[rng.index(self.data.len())]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(RBUF_MAGIC)?;
        write_u32(&mut w, RBUF_VERSION)?;
        write_u8(&mut w, self.tag.to_byte())?;
        write_i64(&mut w, self.capacity.map(|c| c as i64).unwrap_or(-1))?;
        write_u64(&mut w, self.inserted)?;
        write_u64(&mut w, self.data.len() as u64)?;
        for t in &self.data {
            let mut rec = Vec::new();
            write_f64_slice(&mut rec, &t.state)?;
            write_f64_slice(&mut rec, &t.action)?;
            write_f64(&mut rec, t.reward)?;
            write_f64_slice(&mut rec, &t.next_state)?;
            write_u8(&mut rec, t.terminal as u8)?;
            match (t.reward_raw, t.uncertainty) {
                (Some(rr), Some(u)) => {
                    write_u8(&mut rec, 1)?;
                    write_f64(&mut rec, rr)?;
                    write_f64(&mut rec, u)?;
                }
                _ => write_u8(&mut rec, 0)?,
            }
            write_u64(&mut w, rec.len() as u64)?;
            w.write_all(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ReplayBuffer> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, RBUF_MAGIC, "replay buffer")?;
        let version = read_u32(&mut r)?;
        if version != RBUF_VERSION {
            return Err(CoreError::Schema(format!(
                "replay buffer version {version}, expected {RBUF_VERSION}"
            )));
        }
        let tag = BufferTag::from_byte(read_u8(&mut r)?)?;
        let cap = read_i64(&mut r)?;
        let capacity = if cap < 0 { None } else { Some(cap as usize) };
        let inserted = read_u64(&mut r)?;
        let count = read_u64(&mut r)? as usize;
        let mut data = VecDeque::with_capacity(count);
        for _ in 0..count {
            let _len = read_u64(&mut r)?;
            let state = read_f64_vec(&mut r)?;
            let action = read_f64_vec(&mut r)?;
            let reward = read_f64(&mut r)?;
            let next_state = read_f64_vec(&mut r)?;
            let terminal = read_u8(&mut r)? != 0;
            let mut t = Transition::new(state, action, reward, next_state, terminal);
            if read_u8(&mut r)? == 1 {
                t.reward_raw = Some(read_f64(&mut r)?);
                t.uncertainty = Some(read_f64(&mut r)?);
            }
            data.push_back(t);
        }
        Ok(ReplayBuffer { tag, capacity, data, inserted })
    }

    /// Human-inspectable export, one JSON object per line. Floats use the
    /// shortest decimal that round-trips exactly.
    pub fn export_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for t in &self.data {
            let line = serde_json::to_string(t)
                .map_err(|e| CoreError::Schema(format!("jsonl encode: {e}")))?;
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn import_jsonl(path: &Path, tag: BufferTag) -> Result<ReplayBuffer> {
        let r = BufReader::new(File::open(path)?);
        let mut buf = ReplayBuffer::new(tag, None);
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(&line)
                .map_err(|e| CoreError::Schema(format!("jsonl decode: {e}")))?;
            buf.push(t);
        }
        Ok(buf)
    }
}

/// Per-buffer sampling fractions for one mixed batch.
#[derive(Debug, Clone)]
pub struct MixSpec {
    pub fractions: Vec<f64>,
    pub batch_size: usize,
}

impl MixSpec {
    pub fn new(fractions: Vec<f64>, batch_size: usize) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::Validation(format!(
                "mix fractions must be non-negative and sum to 1 (got sum {sum})"
            )));
        }
        if batch_size == 0 {
            return Err(CoreError::Validation("batch size must be positive".into()));
        }
        Ok(MixSpec { fractions, batch_size })
    }

    /// Largest-remainder rounding of fractions into integer counts that sum
    /// exactly to the batch size; ties break toward the lower buffer index.
    pub fn counts(&self) -> Vec<usize> {
        let b = self.batch_size as f64;
        let exact: Vec<f64> = self.fractions.iter().map(|f| f * b).collect();
        let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&i, &j| {
            let ri = exact[i] - exact[i].floor();
            let rj = exact[j] - exact[j].floor();
            rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
        });
        let mut k = 0;
        while assigned < self.batch_size {
            counts[order[k % order.len()]] += 1;
            assigned += 1;
            k += 1;
        }
        counts
    }
}

/// Draw a mixed batch across buffers: exact per-buffer counts from the mix
/// spec, uniform with replacement within each buffer. Returned records keep
/// their source tag for diagnostics.
pub fn sample_mixed_batch<'a>(
    buffers: &[&'a ReplayBuffer],
    mix: &MixSpec,
    rng: &mut Rng,
) -> Result<Vec<(&'a Transition, BufferTag)>> {
    if buffers.len() != mix.fractions.len() {
        return Err(CoreError::Validation(format!(
            "{} buffers but {} mix fractions",
            buffers.len(),
            mix.fractions.len()
        )));
    }
    let counts = mix.counts();
    let mut out = Vec::with_capacity(mix.batch_size);
    for (buf, &count) in buffers.iter().zip(counts.iter()) {
        if count > 0 && buf.is_empty() {
            return Err(CoreError::Validation(format!(
                "buffer {:?} is empty but has positive mix fraction",
                buf.tag()
            )));
        }
        for _ in 0..count {
            out.push((buf.sample(rng), buf.tag()));
        }
    }
    Ok(out)
}

/// Rewrite optimistic rollouts with pessimistic rewards r_raw − λ^p·u.
/// States, actions and uncertainties are untouched; the result is tagged
/// `OptRelabel`.
pub fn relabel(opt_raw: &ReplayBuffer, shaper: &RewardShaper) -> Result<ReplayBuffer> {
    let mut out = ReplayBuffer::new(BufferTag::OptRelabel, opt_raw.capacity());
    for t in opt_raw.iter() {
        let (r_raw, u) = match (t.reward_raw, t.uncertainty) {
            (Some(r), Some(u)) => (r, u),
            _ => {
                return Err(CoreError::Validation(
                    "relabel requires reward_raw and uncertainty on every record".into(),
                ))
            }
        };
        let mut nt = t.clone();
        nt.reward = shaper.pessimistic(r_raw, u);
        out.push(nt);
    }
    Ok(out)
}

/// Column-matrix view of a batch, ready for network consumption.
#[derive(Debug)]
pub struct TransitionBatch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub not_terminal: Vec<f64>,
}

impl TransitionBatch {
    pub fn from_refs(batch: &[(&Transition, BufferTag)]) -> Self {
        let n = batch.len();
        assert!(n > 0, "empty batch");
        let sd = batch[0].0.state.len();
        let ad = batch[0].0.action.len();
        let mut states = Matrix::zeros(n, sd);
        let mut actions = Matrix::zeros(n, ad);
        let mut next_states = Matrix::zeros(n, sd);
        let mut rewards = Vec::with_capacity(n);
        let mut not_terminal = Vec::with_capacity(n);
        for (i, (t, _)) in batch.iter().enumerate() {
            states.row_mut(i).copy_from_slice(&t.state);
            actions.row_mut(i).copy_from_slice(&t.action);
            next_states.row_mut(i).copy_from_slice(&t.next_state);
            rewards.push(t.reward);
            not_terminal.push(if t.terminal { 0.0 } else { 1.0 });
        }
        TransitionBatch { states, actions, rewards, next_states, not_terminal }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}
