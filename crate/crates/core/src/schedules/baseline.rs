//! Exact-attention baselines: streamed online softmax and materialized scores.

use std::ops::Range;

use super::geometry::{FlashPlan, NaivePlan};
use super::Emitter;
use crate::iosim::{SimError, Tag, TraceSink, ValueId};

fn blocks(n: usize, b: usize) -> impl Iterator<Item = Range<usize>> {
    (0..n).step_by(b.max(1)).map(move |s| s..(s + b).min(n))
}

/// K/V blocks in the outer loop, Q blocks in the inner loop. The running
/// output, row sum and row max of each query are stored after every K/V block
/// but the last and reloaded for the next one.
pub(crate) fn emit_flash<S: TraceSink>(plan: &FlashPlan, sink: &mut S) -> Result<(), SimError> {
    let mut e = Emitter::new(sink);
    let d = plan.d;
    let tc = plan.n.div_ceil(plan.bc);
    for (jb, keys) in blocks(plan.n, plan.bc).enumerate() {
        let first = jb == 0;
        let last = jb + 1 == tc;
        let v_now = jb as u32;
        let prev = |tag: Tag, i: usize, c: usize| ValueId::partial(tag, i, c, v_now.wrapping_sub(1));
        for j in keys.clone() {
            for c in 0..d {
                e.load(ValueId::input(Tag::K, j, c))?;
            }
            for c in 0..d {
                e.load(ValueId::input(Tag::V, j, c))?;
            }
        }
        for rows in blocks(plan.n, plan.br) {
            for i in rows.clone() {
                for c in 0..d {
                    e.load(ValueId::input(Tag::Q, i, c))?;
                }
            }
            if !first {
                for i in rows.clone() {
                    for c in 0..d {
                        e.load(prev(Tag::A, i, c))?;
                    }
                    e.load(prev(Tag::SM, i, 0))?;
                    e.load(prev(Tag::MX, i, 0))?;
                }
            }
            for i in rows.clone() {
                let scores: Vec<ValueId> = keys.clone().map(|j| ValueId::generated(Tag::S, i, j)).collect();
                for j in keys.clone() {
                    let ins = (0..d).map(|c| ValueId::input(Tag::Q, i, c)).chain((0..d).map(|c| ValueId::input(Tag::K, j, c)));
                    e.compute(ValueId::generated(Tag::S, i, j), ins.collect())?;
                }
                let stats = |tags: &[Tag]| -> Vec<ValueId> {
                    if first {
                        Vec::new()
                    } else {
                        tags.iter().map(|&t| prev(t, i, 0)).collect()
                    }
                };
                for c in 0..d {
                    let mut ins = Vec::with_capacity(3 + 2 * keys.len());
                    if !first {
                        ins.push(prev(Tag::A, i, c));
                    }
                    ins.extend(stats(&[Tag::MX, Tag::SM]));
                    ins.extend(scores.iter().copied());
                    ins.extend(keys.clone().map(|j| ValueId::input(Tag::V, j, c)));
                    let out = if last { ValueId::output(Tag::A, i, c) } else { ValueId::partial(Tag::A, i, c, v_now) };
                    e.compute(out, ins)?;
                }
                if !last {
                    let mut ins = stats(&[Tag::SM, Tag::MX]);
                    ins.extend(scores.iter().copied());
                    e.compute(ValueId::partial(Tag::SM, i, 0, v_now), ins)?;
                    let mut ins = stats(&[Tag::MX]);
                    ins.extend(scores.iter().copied());
                    e.compute(ValueId::partial(Tag::MX, i, 0, v_now), ins)?;
                }
                for s in scores {
                    e.evict(s)?;
                }
            }
            for i in rows.clone() {
                for c in 0..d {
                    e.evict(ValueId::input(Tag::Q, i, c))?;
                }
                if last {
                    for c in 0..d {
                        e.store(ValueId::output(Tag::A, i, c))?;
                        e.evict(ValueId::output(Tag::A, i, c))?;
                    }
                    if !first {
                        e.evict(prev(Tag::SM, i, 0))?;
                        e.evict(prev(Tag::MX, i, 0))?;
                    }
                } else {
                    let ids = (0..d)
                        .map(|c| ValueId::partial(Tag::A, i, c, v_now))
                        .chain([ValueId::partial(Tag::SM, i, 0, v_now), ValueId::partial(Tag::MX, i, 0, v_now)]);
                    for id in ids {
                        e.store(id)?;
                        e.evict(id)?;
                    }
                }
            }
        }
        for j in keys {
            for c in 0..d {
                e.evict(ValueId::input(Tag::K, j, c))?;
                e.evict(ValueId::input(Tag::V, j, c))?;
            }
        }
    }
    Ok(())
}

/// Three phases over `t x t` tiles: build S, normalize it into P (one pass
/// for the row statistics, one for P), then accumulate `P V`.
pub(crate) fn emit_naive<S: TraceSink>(plan: &NaivePlan, sink: &mut S) -> Result<(), SimError> {
    let mut e = Emitter::new(sink);
    let (n, d, t) = (plan.n, plan.d, plan.t);
    let n_feat = d.div_ceil(t);
    let s_final = |i: usize, j: usize| ValueId::partial(Tag::S, i, j, (n_feat - 1) as u32);

    for rows in blocks(n, t) {
        for keys in blocks(n, t) {
            for (f, feats) in blocks(d, t).enumerate() {
                for i in rows.clone() {
                    for l in feats.clone() {
                        e.load(ValueId::input(Tag::Q, i, l))?;
                    }
                }
                for j in keys.clone() {
                    for l in feats.clone() {
                        e.load(ValueId::input(Tag::K, j, l))?;
                    }
                }
                for i in rows.clone() {
                    for j in keys.clone() {
                        let mut ins = Vec::with_capacity(2 * feats.len() + 1);
                        if f > 0 {
                            ins.push(ValueId::partial(Tag::S, i, j, f as u32 - 1));
                        }
                        ins.extend(feats.clone().map(|l| ValueId::input(Tag::Q, i, l)));
                        ins.extend(feats.clone().map(|l| ValueId::input(Tag::K, j, l)));
                        e.compute(ValueId::partial(Tag::S, i, j, f as u32), ins)?;
                    }
                }
                for i in rows.clone() {
                    for l in feats.clone() {
                        e.evict(ValueId::input(Tag::Q, i, l))?;
                    }
                }
                for j in keys.clone() {
                    for l in feats.clone() {
                        e.evict(ValueId::input(Tag::K, j, l))?;
                    }
                }
            }
            for i in rows.clone() {
                for j in keys.clone() {
                    e.store(s_final(i, j))?;
                    e.evict(s_final(i, j))?;
                }
            }
        }
    }

    let n_key_blocks = n.div_ceil(t);
    for rows in blocks(n, t) {
        for (cb, keys) in blocks(n, t).enumerate() {
            for i in rows.clone() {
                for j in keys.clone() {
                    e.load(s_final(i, j))?;
                }
            }
            for i in rows.clone() {
                let scores = keys.clone().map(|j| s_final(i, j));
                let mut ins = Vec::with_capacity(keys.len() + 2);
                if cb > 0 {
                    ins.push(ValueId::partial(Tag::SM, i, 0, cb as u32 - 1));
                    ins.push(ValueId::partial(Tag::MX, i, 0, cb as u32 - 1));
                }
                ins.extend(scores.clone());
                e.compute(ValueId::partial(Tag::SM, i, 0, cb as u32), ins)?;
                let mut ins = Vec::with_capacity(keys.len() + 1);
                if cb > 0 {
                    ins.push(ValueId::partial(Tag::MX, i, 0, cb as u32 - 1));
                }
                ins.extend(scores);
                e.compute(ValueId::partial(Tag::MX, i, 0, cb as u32), ins)?;
            }
            for i in rows.clone() {
                for j in keys.clone() {
                    e.evict(s_final(i, j))?;
                }
            }
        }
        let stat = |tag: Tag, i: usize| ValueId::partial(tag, i, 0, n_key_blocks as u32 - 1);
        for keys in blocks(n, t) {
            for i in rows.clone() {
                for j in keys.clone() {
                    e.load(s_final(i, j))?;
                }
            }
            for i in rows.clone() {
                for j in keys.clone() {
                    let p = ValueId::output(Tag::P, i, j);
                    e.compute(p, vec![s_final(i, j), stat(Tag::MX, i), stat(Tag::SM, i)])?;
                    e.store(p)?;
                    e.evict(p)?;
                }
            }
            for i in rows.clone() {
                for j in keys.clone() {
                    e.evict(s_final(i, j))?;
                }
            }
        }
        for i in rows.clone() {
            e.evict(stat(Tag::SM, i))?;
            e.evict(stat(Tag::MX, i))?;
        }
    }

    for rows in blocks(n, t) {
        for cols in blocks(d, t) {
            for (cb, keys) in blocks(n, t).enumerate() {
                let last = cb + 1 == n_key_blocks;
                for i in rows.clone() {
                    for j in keys.clone() {
                        e.load(ValueId::output(Tag::P, i, j))?;
                    }
                }
                for j in keys.clone() {
                    for c in cols.clone() {
                        e.load(ValueId::input(Tag::V, j, c))?;
                    }
                }
                for i in rows.clone() {
                    for c in cols.clone() {
                        let mut ins = Vec::with_capacity(2 * keys.len() + 1);
                        if cb > 0 {
                            ins.push(ValueId::partial(Tag::A, i, c, cb as u32 - 1));
                        }
                        ins.extend(keys.clone().map(|j| ValueId::output(Tag::P, i, j)));
                        ins.extend(keys.clone().map(|j| ValueId::input(Tag::V, j, c)));
                        let out = if last { ValueId::output(Tag::A, i, c) } else { ValueId::partial(Tag::A, i, c, cb as u32) };
                        e.compute(out, ins)?;
                    }
                }
                for i in rows.clone() {
                    for j in keys.clone() {
                        e.evict(ValueId::output(Tag::P, i, j))?;
                    }
                }
                for j in keys.clone() {
                    for c in cols.clone() {
                        e.evict(ValueId::input(Tag::V, j, c))?;
                    }
                }
            }
            for i in rows.clone() {
                for c in cols.clone() {
                    e.store(ValueId::output(Tag::A, i, c))?;
                    e.evict(ValueId::output(Tag::A, i, c))?;
                }
            }
        }
    }
    Ok(())
}
