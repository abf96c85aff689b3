//! Trace emitter for the approximate schedules (`H = U2^T V`, then `U1 H`).

use super::geometry::TilePlan;
use super::Emitter;
use crate::iosim::{SimError, Tag, TraceSink, ValueId};

fn strips(n: usize, h: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n).step_by(h.max(1)).map(move |s| s..(s + h).min(n))
}

fn column_tiles(d: usize, cw: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    strips(d, cw)
}

pub(crate) fn emit<S: TraceSink>(plan: &TilePlan, sink: &mut S) -> Result<(), SimError> {
    let mut e = Emitter::new(sink);
    first_multiplication(plan, &mut e)?;
    second_multiplication(plan, &mut e)
}

/// `H = U2^T V`, one aggregation tile and column tile at a time, streaming
/// row strips of K and V.
fn first_multiplication<S: TraceSink>(plan: &TilePlan, e: &mut Emitter<'_, S>) -> Result<(), SimError> {
    let n_strips = plan.n.div_ceil(plan.h.max(1));
    for (k, tile) in plan.tiles.iter().enumerate() {
        let resident = plan.h_resident[k];
        let ch = plan.chunk_len(k);
        for cols in column_tiles(plan.d, plan.cw) {
            for (s, rows) in strips(plan.n, plan.h).enumerate() {
                let last = s + 1 == n_strips;
                let h_id = |c: usize, j: usize, strip: usize| {
                    if strip + 1 == n_strips {
                        ValueId::output(Tag::H, c, j)
                    } else {
                        ValueId::partial(Tag::H, c, j, strip as u32)
                    }
                };
                for i in rows.clone() {
                    for &v in &tile.vars {
                        e.load(ValueId::input(Tag::K, i, v))?;
                    }
                    for j in cols.clone() {
                        e.load(ValueId::input(Tag::V, i, j))?;
                    }
                }
                for chunk in tile.columns.chunks(ch) {
                    if !resident && s > 0 {
                        for &c in chunk {
                            for j in cols.clone() {
                                e.load(h_id(c, j, s - 1))?;
                            }
                        }
                    }
                    for &c in chunk {
                        for i in rows.clone() {
                            let ks = plan.supports[c].iter().map(|&v| ValueId::input(Tag::K, i, v)).collect();
                            e.compute(ValueId::generated(Tag::U2, i, c), ks)?;
                        }
                        for j in cols.clone() {
                            let mut ins = Vec::with_capacity(2 * rows.len() + 1);
                            if s > 0 {
                                ins.push(h_id(c, j, s - 1));
                            }
                            ins.extend(rows.clone().map(|i| ValueId::generated(Tag::U2, i, c)));
                            ins.extend(rows.clone().map(|i| ValueId::input(Tag::V, i, j)));
                            e.compute(h_id(c, j, s), ins)?;
                        }
                        for i in rows.clone() {
                            e.evict(ValueId::generated(Tag::U2, i, c))?;
                        }
                    }
                    if !resident {
                        for &c in chunk {
                            for j in cols.clone() {
                                e.store(h_id(c, j, s))?;
                                e.evict(h_id(c, j, s))?;
                            }
                        }
                    }
                }
                for i in rows.clone() {
                    for &v in &tile.vars {
                        e.evict(ValueId::input(Tag::K, i, v))?;
                    }
                    for j in cols.clone() {
                        e.evict(ValueId::input(Tag::V, i, j))?;
                    }
                }
                if resident && last {
                    for &c in &tile.columns {
                        for j in cols.clone() {
                            e.store(ValueId::output(Tag::H, c, j))?;
                            e.evict(ValueId::output(Tag::H, c, j))?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// `U1 H`: each output tile stays resident while every aggregation tile
/// contributes, regenerating U1 entries from the loaded Q columns.
fn second_multiplication<S: TraceSink>(plan: &TilePlan, e: &mut Emitter<'_, S>) -> Result<(), SimError> {
    let steps: usize = (0..plan.tiles.len()).map(|k| plan.tiles[k].columns.len().div_ceil(plan.chunk_len(k))).sum();
    for rows in strips(plan.n, plan.h) {
        for cols in column_tiles(plan.d, plan.cw) {
            let o_id = |i: usize, j: usize, step: usize| {
                if step + 1 == steps {
                    ValueId::output(Tag::O, i, j)
                } else {
                    ValueId::partial(Tag::O, i, j, step as u32)
                }
            };
            let mut step = 0;
            for (k, tile) in plan.tiles.iter().enumerate() {
                for i in rows.clone() {
                    for &v in &tile.vars {
                        e.load(ValueId::input(Tag::Q, i, v))?;
                    }
                }
                for chunk in tile.columns.chunks(plan.chunk_len(k)) {
                    for &c in chunk {
                        for j in cols.clone() {
                            e.load(ValueId::output(Tag::H, c, j))?;
                        }
                    }
                    for i in rows.clone() {
                        for &c in chunk {
                            let qs = plan.supports[c].iter().map(|&v| ValueId::input(Tag::Q, i, v)).collect();
                            e.compute(ValueId::generated(Tag::U1, i, c), qs)?;
                        }
                        for j in cols.clone() {
                            let mut ins = Vec::with_capacity(2 * chunk.len() + 1);
                            if step > 0 {
                                ins.push(o_id(i, j, step - 1));
                            }
                            ins.extend(chunk.iter().map(|&c| ValueId::generated(Tag::U1, i, c)));
                            ins.extend(chunk.iter().map(|&c| ValueId::output(Tag::H, c, j)));
                            e.compute(o_id(i, j, step), ins)?;
                        }
                        for &c in chunk {
                            e.evict(ValueId::generated(Tag::U1, i, c))?;
                        }
                    }
                    for &c in chunk {
                        for j in cols.clone() {
                            e.evict(ValueId::output(Tag::H, c, j))?;
                        }
                    }
                    step += 1;
                }
                for i in rows.clone() {
                    for &v in &tile.vars {
                        e.evict(ValueId::input(Tag::Q, i, v))?;
                    }
                }
            }
            for i in rows.clone() {
                for j in cols.clone() {
                    e.store(ValueId::output(Tag::O, i, j))?;
                    e.evict(ValueId::output(Tag::O, i, j))?;
                }
            }
        }
    }
    Ok(())
}
