//! Offline data generation and access: episodes from pairs of scripted
//! base policies, the JMPD1 on-disk format, snippet sampling for
//! training, and the state-delta normalization statistics used by the
//! jumpy decoder.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::env::{
    BasePolicyId, Env, ACTION_DIM, ALL_BASE_POLICIES, DEFAULT_MOTION_NOISE, STATE_DIM,
};
use crate::error::{JumpyError, Result};
use crate::par::{map_indexed, ExecMode};
use crate::rng::{derive_seed, derived_rng};

pub const EPISODE_STEPS: usize = 400;
pub const POLICY_SWITCH_STEP: usize = 200;
pub const MAGIC: &[u8; 5] = b"JMPD1";
pub const DELTA_SCALE_FLOOR: f64 = 1e-3;
pub const DELTA_PERCENTILE: f64 = 0.995;
pub const DELTA_SAMPLE_COUNT: usize = 100_000;

/// One episode: T+1 states, T actions, the two generating policies and
/// the seed that reproduces all of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub policy_ids: [BasePolicyId; 2],
    pub states: Vec<[f32; STATE_DIM]>,
    pub actions: Vec<[f32; ACTION_DIM]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn state_f64(&self, t: usize) -> [f64; STATE_DIM] {
        let mut out = [0.0; STATE_DIM];
        for (o, v) in out.iter_mut().zip(self.states[t].iter()) {
            *o = *v as f64;
        }
        out
    }

    pub fn action_f64(&self, t: usize) -> [f64; ACTION_DIM] {
        let mut out = [0.0; ACTION_DIM];
        for (o, v) in out.iter_mut().zip(self.actions[t].iter()) {
            *o = *v as f64;
        }
        out
    }
}

/// A contiguous K+1-state, K-action training window.
#[derive(Debug, Clone)]
pub struct Snippet {
    pub states: Vec<[f64; STATE_DIM]>,
    pub actions: Vec<[f64; ACTION_DIM]>,
}

impl Snippet {
    pub fn k(&self) -> usize {
        self.actions.len()
    }
}

/// Per-dimension positive scale for normalizing K-step state deltas.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeltaScale {
    pub scale: Vec<f64>,
}

impl DeltaScale {
    pub fn ones(dim: usize) -> Self {
        DeltaScale { scale: vec![1.0; dim] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(JumpyError::domain("delta scale must be strictly positive"));
        }
        Ok(())
    }
}

/// Training-target path: delta / scale, clamped to [-1, 1].
pub fn normalize_delta(delta: &[f64], scale: &DeltaScale) -> Result<Vec<f64>> {
    scale.validate()?;
    if delta.len() != scale.scale.len() {
        return Err(JumpyError::shape("normalize_delta: length mismatch"));
    }
    Ok(delta
        .iter()
        .zip(scale.scale.iter())
        .map(|(d, s)| (d / s).clamp(-1.0, 1.0))
        .collect())
}

/// Prediction path: norm * scale, no clamp.
pub fn denormalize_delta(norm: &[f64], scale: &DeltaScale) -> Result<Vec<f64>> {
    scale.validate()?;
    if norm.len() != scale.scale.len() {
        return Err(JumpyError::shape("denormalize_delta: length mismatch"));
    }
    Ok(norm
        .iter()
        .zip(scale.scale.iter())
        .map(|(n, s)| n * s)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub master_seed: u64,
    pub noise: bool,
    pub episodes: Vec<Trajectory>,
}

/// Run one 400-step episode: two base policies drawn uniformly with
/// replacement, the first driving steps 0..199, the second 200..399.
pub fn generate_episode(seed: u64, noise: bool) -> Result<Trajectory> {
    let env = if noise {
        Env::with_noise(DEFAULT_MOTION_NOISE)
    } else {
        Env::default()
    };
    let mut policy_rng = derived_rng(seed, "policies", 0);
    let policies = [
        ALL_BASE_POLICIES[policy_rng.gen_range(0..ALL_BASE_POLICIES.len())],
        ALL_BASE_POLICIES[policy_rng.gen_range(0..ALL_BASE_POLICIES.len())],
    ];
    let mut noise_rng = derived_rng(seed, "noise", 0);
    let reset_seed = derive_seed(seed, "reset", 0);

    let mut state = env.reset(reset_seed);
    let mut states = Vec::with_capacity(EPISODE_STEPS + 1);
    let mut actions = Vec::with_capacity(EPISODE_STEPS);
    states.push(to_f32_state(&state.to_vec()));
    for t in 0..EPISODE_STEPS {
        let policy = if t < POLICY_SWITCH_STEP {
            policies[0]
        } else {
            policies[1]
        };
        let a = policy.action(&state);
        state = env.step(&state, &a, &mut noise_rng)?;
        actions.push(to_f32_action(&a.to_vec()));
        states.push(to_f32_state(&state.to_vec()));
    }
    Ok(Trajectory {
        seed,
        policy_ids: policies,
        states,
        actions,
    })
}

fn to_f32_state(v: &[f64; STATE_DIM]) -> [f32; STATE_DIM] {
    let mut out = [0.0f32; STATE_DIM];
    for (o, x) in out.iter_mut().zip(v.iter()) {
        *o = *x as f32;
    }
    out
}

fn to_f32_action(v: &[f64; ACTION_DIM]) -> [f32; ACTION_DIM] {
    let mut out = [0.0f32; ACTION_DIM];
    for (o, x) in out.iter_mut().zip(v.iter()) {
        *o = *x as f32;
    }
    out
}

/// Episode generation fans out over per-episode derived seeds; the
/// assembled dataset is in episode order, independent of scheduling.
pub fn generate_dataset(
    episode_count: usize,
    master_seed: u64,
    noise: bool,
    mode: ExecMode,
) -> Result<Dataset> {
    if episode_count == 0 {
        return Err(JumpyError::domain("episode_count must be >= 1"));
    }
    let results = map_indexed(mode, episode_count, |i| {
        generate_episode(derive_seed(master_seed, "episode", i as u64), noise)
    });
    let mut episodes = Vec::with_capacity(episode_count);
    for r in results {
        episodes.push(r?);
    }
    Ok(Dataset {
        master_seed,
        noise,
        episodes,
    })
}

impl Dataset {
    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Uniform over (episode, start index t in [0, T-K]).
    pub fn sample_snippet<R: Rng>(&self, rng: &mut R, k: usize) -> Result<Snippet> {
        if k < 1 {
            return Err(JumpyError::domain("K must be >= 1"));
        }
        let t_max = self.episodes[0].len();
        if k > t_max {
            return Err(JumpyError::domain(format!(
                "K={k} exceeds episode length {t_max}"
            )));
        }
        let ep = &self.episodes[rng.gen_range(0..self.episodes.len())];
        let start = rng.gen_range(0..=ep.len() - k);
        Ok(self.snippet_at(ep, start, k))
    }

    /// Index of every K-window containing a held-flag transition
    /// (grasp or release), as (episode, start) pairs.
    pub fn grasp_windows(&self, k: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (e, ep) in self.episodes.iter().enumerate() {
            // steps where any held flag changes between t and t+1
            let mut change = Vec::new();
            for t in 0..ep.len() {
                let a = ep.states[t];
                let b = ep.states[t + 1];
                if [3, 6, 9].iter().any(|&d| a[d] != b[d]) {
                    change.push(t);
                }
            }
            let mut ci = 0;
            for start in 0..=ep.len() - k {
                while ci < change.len() && change[ci] < start {
                    ci += 1;
                }
                if ci < change.len() && change[ci] < start + k {
                    out.push((e, start));
                }
            }
        }
        out
    }

    /// Like `sample_snippet`, but with probability `bias` draws a window
    /// containing a held-flag transition. Grasp and release dynamics are
    /// rare under uniform sampling, and the skill latents and jumpy
    /// predictions for them are what the planner leans on hardest.
    pub fn sample_snippet_biased<R: Rng>(
        &self,
        rng: &mut R,
        k: usize,
        bias: f64,
        grasp_index: &[(usize, usize)],
    ) -> Result<Snippet> {
        if !grasp_index.is_empty() && rng.gen_range(0.0..1.0) < bias {
            let (e, start) = grasp_index[rng.gen_range(0..grasp_index.len())];
            return Ok(self.snippet_at(&self.episodes[e], start, k));
        }
        self.sample_snippet(rng, k)
    }

    fn snippet_at(&self, ep: &Trajectory, start: usize, k: usize) -> Snippet {
        Snippet {
            states: (start..=start + k).map(|t| ep.state_f64(t)).collect(),
            actions: (start..start + k).map(|t| ep.action_f64(t)).collect(),
        }
    }

    /// Per-dimension scale: the 99.5th percentile of |s_{t+K} - s_t|
    /// over a large snippet sample, floored at 1e-3.
    pub fn compute_delta_stats<R: Rng>(&self, k: usize, rng: &mut R) -> Result<DeltaScale> {
        if self.episodes.is_empty() {
            return Err(JumpyError::domain("empty dataset"));
        }
        let mut abs_deltas: Vec<Vec<f64>> = vec![Vec::with_capacity(DELTA_SAMPLE_COUNT); STATE_DIM];
        for _ in 0..DELTA_SAMPLE_COUNT {
            let s = self.sample_snippet(rng, k)?;
            let first = &s.states[0];
            let last = &s.states[k];
            for d in 0..STATE_DIM {
                abs_deltas[d].push((last[d] - first[d]).abs());
            }
        }
        let mut scale = Vec::with_capacity(STATE_DIM);
        for col in abs_deltas.iter_mut() {
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let idx = ((col.len() as f64 * DELTA_PERCENTILE) as usize).min(col.len() - 1);
            scale.push(col[idx].max(DELTA_SCALE_FLOOR));
        }
        Ok(DeltaScale { scale })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        atomic_write(path, &bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.episodes.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(EPISODE_STEPS as u32).to_le_bytes());
        buf.extend_from_slice(&(STATE_DIM as u32).to_le_bytes());
        buf.extend_from_slice(&(ACTION_DIM as u32).to_le_bytes());
        buf.extend_from_slice(&self.master_seed.to_le_bytes());
        buf.push(self.noise as u8);
        for ep in &self.episodes {
            buf.extend_from_slice(&ep.seed.to_le_bytes());
            buf.push(ep.policy_ids[0].to_u8());
            buf.push(ep.policy_ids[1].to_u8());
            for s in &ep.states {
                for v in s {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            for a in &ep.actions {
                for v in a {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let hash = Sha256::digest(&buf);
        buf.extend_from_slice(&hash);
        buf
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let bytes = std::fs::read(path).map_err(|e| JumpyError::Storage {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
        let fail = |msg: &str| JumpyError::Storage {
            path: "<bytes>".into(),
            msg: msg.into(),
        };
        if bytes.len() < MAGIC.len() + 21 + 32 {
            return Err(fail("file too short"));
        }
        let (body, hash) = bytes.split_at(bytes.len() - 32);
        let computed = Sha256::digest(body);
        if computed.as_slice() != hash {
            return Err(fail("content hash mismatch"));
        }
        if &body[..5] != MAGIC {
            return Err(fail("bad magic"));
        }
        let mut off = 5;
        let read_u32 = |o: &mut usize| {
            let v = u32::from_le_bytes(body[*o..*o + 4].try_into().unwrap());
            *o += 4;
            v
        };
        let count = read_u32(&mut off) as usize;
        let t = read_u32(&mut off) as usize;
        let sdim = read_u32(&mut off) as usize;
        let adim = read_u32(&mut off) as usize;
        if t != EPISODE_STEPS || sdim != STATE_DIM || adim != ACTION_DIM {
            return Err(fail("header dims do not match this build"));
        }
        let master_seed = u64::from_le_bytes(body[off..off + 8].try_into().unwrap());
        off += 8;
        let noise = body[off] != 0;
        off += 1;
        let mut episodes = Vec::with_capacity(count);
        for _ in 0..count {
            if off + 10 > body.len() {
                return Err(fail("truncated episode header"));
            }
            let seed = u64::from_le_bytes(body[off..off + 8].try_into().unwrap());
            off += 8;
            let p0 = BasePolicyId::from_u8(body[off])?;
            let p1 = BasePolicyId::from_u8(body[off + 1])?;
            off += 2;
            let need = (t + 1) * sdim * 4 + t * adim * 4;
            if off + need > body.len() {
                return Err(fail("truncated episode data"));
            }
            let mut states = Vec::with_capacity(t + 1);
            for _ in 0..=t {
                let mut s = [0.0f32; STATE_DIM];
                for v in s.iter_mut() {
                    *v = f32::from_le_bytes(body[off..off + 4].try_into().unwrap());
                    off += 4;
                }
                states.push(s);
            }
            let mut actions = Vec::with_capacity(t);
            for _ in 0..t {
                let mut a = [0.0f32; ACTION_DIM];
                for v in a.iter_mut() {
                    *v = f32::from_le_bytes(body[off..off + 4].try_into().unwrap());
                    off += 4;
                }
                actions.push(a);
            }
            episodes.push(Trajectory {
                seed,
                policy_ids: [p0, p1],
                states,
                actions,
            });
        }
        if off != body.len() {
            return Err(fail("trailing bytes after last episode"));
        }
        Ok(Dataset {
            master_seed,
            noise,
            episodes,
        })
    }

    pub fn content_hash(&self) -> String {
        let bytes = self.to_bytes();
        hex_digest(&bytes)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write via temp file + rename so partial artifacts never exist.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().ok_or_else(|| JumpyError::Storage {
        path: path.display().to_string(),
        msg: "no parent directory".into(),
    })?;
    if !dir.as_os_str().is_empty() && !dir.exists() {
        return Err(JumpyError::Storage {
            path: path.display().to_string(),
            msg: "output directory does not exist".into(),
        });
    }
    let tmp = path.with_extension("tmp.partial");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| JumpyError::Storage {
            path: tmp.display().to_string(),
            msg: e.to_string(),
        })?;
        f.write_all(bytes).map_err(|e| JumpyError::Storage {
            path: tmp.display().to_string(),
            msg: e.to_string(),
        })?;
    }
    std::fs::rename(&tmp, path).map_err(|e| JumpyError::Storage {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(())
}

/// Re-simulate an episode from its seed and compare stored bytes.
pub fn replay_check(ep: &Trajectory, noise: bool) -> Result<bool> {
    let regen = generate_episode(ep.seed, noise)?;
    Ok(regen == *ep)
}
