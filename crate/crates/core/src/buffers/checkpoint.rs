//! Versioned little-endian binary checkpoints for the three buffers.
//!
//! Layout: 8-byte magic, `u32` version, `u8` kind tag, then the payload.
//! Reals are always stored as `f64`, so `f32` buffers round-trip exactly.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::replay::Span;
use super::{PolicyAlignedBuffer, PreferenceBuffer, PreferenceRecord, ReplayBuffer, Segment, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"PRFLBUF\0";
pub const VERSION: u32 = 1;

const KIND_REPLAY: u8 = 1;
const KIND_POLICY_ALIGNED: u8 = 2;
const KIND_PREFERENCES: u8 = 3;

/// Guards allocation sizes read from untrusted input.
const MAX_LEN: u64 = 1 << 32;

fn header<W: Write>(w: &mut W, kind: u8) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u8(kind)?;
    Ok(())
}

fn check_header<R: Read>(r: &mut R, kind: u8) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a buffer checkpoint".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let found = r.read_u8()?;
    if found != kind {
        return Err(Error::Format(format!("checkpoint kind {found}, expected {kind}")));
    }
    Ok(())
}

fn write_len<W: Write>(w: &mut W, n: usize) -> Result<()> {
    Ok(w.write_u64::<LE>(n as u64)?)
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u64::<LE>()?;
    if n > MAX_LEN {
        return Err(Error::Format(format!("length {n} exceeds checkpoint limit")));
    }
    Ok(n as usize)
}

fn write_bool<W: Write>(w: &mut W, b: bool) -> Result<()> {
    Ok(w.write_u8(u8::from(b))?)
}

fn read_bool<R: Read>(r: &mut R) -> Result<bool> {
    match r.read_u8()? {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(Error::Format(format!("invalid boolean byte {b}"))),
    }
}

fn write_real<T: Scalar, W: Write>(w: &mut W, v: T) -> Result<()> {
    Ok(w.write_f64::<LE>(v.as_f64())?)
}

fn read_real<T: Scalar, R: Read>(r: &mut R) -> Result<T> {
    Ok(T::lit(r.read_f64::<LE>()?))
}

fn write_vec<T: Scalar, W: Write>(w: &mut W, v: &[T]) -> Result<()> {
    write_len(w, v.len())?;
    v.iter().try_for_each(|&x| write_real(w, x))
}

fn read_vec<T: Scalar, R: Read>(r: &mut R) -> Result<Vec<T>> {
    let n = read_len(r)?;
    (0..n).map(|_| read_real(r)).collect()
}

fn write_transition<T: Scalar, W: Write>(w: &mut W, t: &Transition<T>) -> Result<()> {
    write_vec(w, &t.state)?;
    write_vec(w, &t.action)?;
    write_real(w, t.predicted_reward)?;
    write_real(w, t.ground_truth_reward)?;
    write_vec(w, &t.next_state)?;
    write_bool(w, t.done)?;
    write_bool(w, t.terminal)?;
    w.write_u64::<LE>(t.trajectory_id)?;
    write_len(w, t.step_index)
}

fn read_transition<T: Scalar, R: Read>(r: &mut R) -> Result<Transition<T>> {
    Ok(Transition {
        state: read_vec(r)?,
        action: read_vec(r)?,
        predicted_reward: read_real(r)?,
        ground_truth_reward: read_real(r)?,
        next_state: read_vec(r)?,
        done: read_bool(r)?,
        terminal: read_bool(r)?,
        trajectory_id: r.read_u64::<LE>()?,
        step_index: read_len(r)?,
    })
}

fn write_trajectory<T: Scalar, W: Write>(w: &mut W, t: &Trajectory<T>) -> Result<()> {
    w.write_u64::<LE>(t.id)?;
    write_bool(w, t.complete)?;
    write_len(w, t.transitions.len())?;
    t.transitions.iter().try_for_each(|x| write_transition(w, x))
}

fn read_trajectory<T: Scalar, R: Read>(r: &mut R) -> Result<Trajectory<T>> {
    let id = r.read_u64::<LE>()?;
    let complete = read_bool(r)?;
    let n = read_len(r)?;
    let transitions = (0..n).map(|_| read_transition(r)).collect::<Result<_>>()?;
    Ok(Trajectory { id, transitions, complete })
}

fn write_segment<T: Scalar, W: Write>(w: &mut W, s: &Segment<T>) -> Result<()> {
    w.write_u64::<LE>(s.trajectory_id)?;
    write_len(w, s.start)?;
    write_len(w, s.len())?;
    for k in 0..s.len() {
        write_vec(w, &s.states[k])?;
        write_vec(w, &s.actions[k])?;
        write_real(w, s.ground_truth_rewards[k])?;
    }
    Ok(())
}

fn read_segment<T: Scalar, R: Read>(r: &mut R) -> Result<Segment<T>> {
    let trajectory_id = r.read_u64::<LE>()?;
    let start = read_len(r)?;
    let n = read_len(r)?;
    let (mut states, mut actions, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        states.push(read_vec(r)?);
        actions.push(read_vec(r)?);
        rewards.push(read_real(r)?);
    }
    Ok(Segment::new(trajectory_id, start, states, actions, rewards))
}

pub fn write_replay<T: Scalar, W: Write>(w: &mut W, replay: &ReplayBuffer<T>) -> Result<()> {
    header(w, KIND_REPLAY)?;
    write_len(w, replay.capacity)?;
    w.write_u64::<LE>(replay.pushed)?;
    write_len(w, replay.storage.len())?;
    replay.storage.iter().try_for_each(|t| write_transition(w, t))?;
    write_len(w, replay.spans.len())?;
    for s in &replay.spans {
        w.write_u64::<LE>(s.id)?;
        w.write_u64::<LE>(s.first_seq)?;
        write_len(w, s.len)?;
        write_bool(w, s.starts_at_zero)?;
        write_bool(w, s.complete)?;
    }
    Ok(())
}

pub fn read_replay<T: Scalar, R: Read>(r: &mut R) -> Result<ReplayBuffer<T>> {
    check_header(r, KIND_REPLAY)?;
    let capacity = read_len(r)?;
    let pushed = r.read_u64::<LE>()?;
    let n = read_len(r)?;
    if capacity == 0 || n > capacity || (n as u64) > pushed {
        return Err(Error::Format("inconsistent replay sizes".into()));
    }
    let storage = (0..n).map(|_| read_transition(r)).collect::<Result<Vec<_>>>()?;
    let span_count = read_len(r)?;
    let mut spans = VecDeque::with_capacity(span_count);
    for _ in 0..span_count {
        spans.push_back(Span {
            id: r.read_u64::<LE>()?,
            first_seq: r.read_u64::<LE>()?,
            len: read_len(r)?,
            starts_at_zero: read_bool(r)?,
            complete: read_bool(r)?,
        });
    }
    Ok(ReplayBuffer {
        capacity,
        storage,
        pushed,
        spans,
    })
}

pub fn write_policy_aligned<T: Scalar, W: Write>(w: &mut W, pa: &PolicyAlignedBuffer<T>) -> Result<()> {
    header(w, KIND_POLICY_ALIGNED)?;
    write_len(w, pa.capacity)?;
    write_bool(w, pa.include_partial)?;
    write_len(w, pa.partial_min_len)?;
    write_len(w, pa.complete.len())?;
    pa.complete.iter().try_for_each(|t| write_trajectory(w, t))?;
    write_bool(w, pa.current.is_some())?;
    if let Some(c) = &pa.current {
        write_trajectory(w, c)?;
    }
    Ok(())
}

pub fn read_policy_aligned<T: Scalar, R: Read>(r: &mut R) -> Result<PolicyAlignedBuffer<T>> {
    check_header(r, KIND_POLICY_ALIGNED)?;
    let capacity = read_len(r)?;
    let include_partial = read_bool(r)?;
    let partial_min_len = read_len(r)?;
    let n = read_len(r)?;
    if capacity == 0 || n > capacity {
        return Err(Error::Format("inconsistent policy-aligned sizes".into()));
    }
    let complete = (0..n).map(|_| read_trajectory(r)).collect::<Result<VecDeque<_>>>()?;
    let current = if read_bool(r)? { Some(read_trajectory(r)?) } else { None };
    Ok(PolicyAlignedBuffer {
        capacity,
        complete,
        current,
        include_partial,
        partial_min_len,
    })
}

pub fn write_preferences<T: Scalar, W: Write>(w: &mut W, prefs: &PreferenceBuffer<T>) -> Result<()> {
    header(w, KIND_PREFERENCES)?;
    write_len(w, prefs.len())?;
    for rec in prefs.iter() {
        w.write_u8(rec.label())?;
        write_segment(w, &rec.segment_0)?;
        write_segment(w, &rec.segment_1)?;
    }
    Ok(())
}

pub fn read_preferences<T: Scalar, R: Read>(r: &mut R) -> Result<PreferenceBuffer<T>> {
    check_header(r, KIND_PREFERENCES)?;
    let n = read_len(r)?;
    (0..n)
        .map(|_| {
            let label = r.read_u8()?;
            let s0 = read_segment(r)?;
            let s1 = read_segment(r)?;
            PreferenceRecord::new(s0, s1, label).map_err(|e| Error::Format(e.to_string()))
        })
        .collect()
}

/// All three buffers written side by side into `dir`.
pub fn save_all<T: Scalar>(
    dir: &Path,
    replay: &ReplayBuffer<T>,
    pa: &PolicyAlignedBuffer<T>,
    prefs: &PreferenceBuffer<T>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("replay.bin"))?);
    write_replay(&mut w, replay)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("policy_aligned.bin"))?);
    write_policy_aligned(&mut w, pa)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("preferences.bin"))?);
    write_preferences(&mut w, prefs)?;
    w.flush()?;
    Ok(())
}

pub fn load_all<T: Scalar>(dir: &Path) -> Result<(ReplayBuffer<T>, PolicyAlignedBuffer<T>, PreferenceBuffer<T>)> {
    let open = |name: &str| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };
    Ok((
        read_replay(&mut open("replay.bin")?)?,
        read_policy_aligned(&mut open("policy_aligned.bin")?)?,
        read_preferences(&mut open("preferences.bin")?)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::trajectory;
    use super::super::{push_transition, sample_uniform};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn populated() -> (ReplayBuffer<f64>, PolicyAlignedBuffer<f64>, PreferenceBuffer<f64>) {
        let mut replay = ReplayBuffer::new(17).unwrap();
        let mut pa = PolicyAlignedBuffer::new(2, true, 3).unwrap();
        for id in 0..4 {
            for t in trajectory(id, 5, id < 3).transitions {
                push_transition(&mut replay, &mut pa, t);
            }
        }
        replay.relabel(|s, a| 0.3 * s[1] - a[0] / 7.0);
        let t = trajectory(9, 8, true);
        let mut prefs = PreferenceBuffer::new();
        prefs.push(PreferenceRecord::new(t.segment(0, 4).unwrap(), t.segment(3, 4).unwrap(), 1).unwrap());
        prefs.push(PreferenceRecord::new(t.segment(2, 4).unwrap(), t.segment(1, 4).unwrap(), 0).unwrap());
        (replay, pa, prefs)
    }

    #[test]
    fn round_trip_preserves_contents_and_sampling() {
        let (replay, pa, prefs) = populated();
        let dir = tempfile::tempdir().unwrap();
        save_all(dir.path(), &replay, &pa, &prefs).unwrap();
        let (r2, pa2, p2) = load_all::<f64>(dir.path()).unwrap();

        assert_eq!(r2.storage, replay.storage);
        assert_eq!(r2.spans, replay.spans);
        assert_eq!(r2.trajectories(None, 1, true), replay.trajectories(None, 1, true));
        let a: Vec<_> = sample_uniform(&replay, 20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b: Vec<_> = sample_uniform(&r2, 20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);

        assert_eq!(pa2.trajectories().collect::<Vec<_>>(), pa.trajectories().collect::<Vec<_>>());
        assert_eq!(pa2.in_progress(), pa.in_progress());
        assert_eq!(p2.records(), prefs.records());
        assert_eq!(p2.records()[0].segment_1.ground_truth_return(), prefs.records()[0].segment_1.ground_truth_return());
    }

    #[test]
    fn rejects_wrong_kind_and_bad_magic() {
        let (replay, _, _) = populated();
        let mut bytes = Vec::new();
        write_replay(&mut bytes, &replay).unwrap();
        assert!(matches!(read_preferences::<f64, _>(&mut bytes.as_slice()), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(read_replay::<f64, _>(&mut bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_input_is_an_error() {
        let (_, pa, _) = populated();
        let mut bytes = Vec::new();
        write_policy_aligned(&mut bytes, &pa).unwrap();
        bytes.truncate(bytes.len() / 2);
        assert!(read_policy_aligned::<f64, _>(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn f32_values_survive_exactly() {
        let mut replay = ReplayBuffer::<f32>::new(4).unwrap();
        let mut t = super::super::fixtures::transition(0, 0, true);
        t.state = vec![0.1, 1.0 / 3.0];
        replay.push(Transition {
            state: t.state.iter().map(|&v| v as f32).collect(),
            action: vec![0.7, -0.2],
            predicted_reward: 1.0e-7,
            ground_truth_reward: -12.34,
            next_state: vec![0.3, 0.4],
            done: true,
            terminal: false,
            trajectory_id: 0,
            step_index: 0,
        });
        let mut bytes = Vec::new();
        write_replay(&mut bytes, &replay).unwrap();
        let back = read_replay::<f32, _>(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.storage, replay.storage);
    }
}
