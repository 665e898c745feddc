//! Seeded synthetic conjunction corpora with known dynamics.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{CdmRecord, Dataset, Event, FeatureSchema, KELVINS_DROPPED};
use crate::error::Result;

fn build_event(id: String, rows: Vec<Vec<f64>>, schema: &FeatureSchema) -> Result<Event> {
    let cdms = rows
        .into_iter()
        .map(|r| CdmRecord::new(id.clone(), r, schema))
        .collect::<Result<_>>()?;
    Ok(Event { event_id: id, cdms })
}

/// Schema `time_to_tca, pos_0, vel_0, …, pos_{k-1}, vel_{k-1}`.
pub fn kinematic_schema(pairs: usize) -> FeatureSchema {
    let mut names = vec!["time_to_tca".to_string()];
    for j in 0..pairs {
        names.push(format!("pos_{j}"));
        names.push(format!("vel_{j}"));
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    FeatureSchema::continuous(&refs, "time_to_tca").expect("valid synthetic schema")
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicConfig {
    pub events: usize,
    pub pairs: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Time between consecutive CDMs (days).
    pub dt: f64,
    pub noise: f64,
}

impl Default for KinematicConfig {
    fn default() -> Self {
        Self {
            events: 200,
            pairs: 3,
            min_len: 6,
            max_len: 14,
            dt: 0.5,
            noise: 0.05,
        }
    }
}

/// Phase advance per CDM of oscillator `j`.
pub fn kinematic_angle(j: usize) -> f64 {
    0.6 + 0.25 * j as f64
}

/// Each `(pos_j, vel_j)` pair is a harmonic oscillator sampled once per CDM:
/// it rotates by [`kinematic_angle`]`(j)` and picks up Gaussian noise, while
/// `time_to_tca` falls by `dt`. The next CDM is a linear function of the
/// current one plus noise, which copying the current CDM cannot track.
pub fn kinematic_corpus(cfg: &KinematicConfig, seed: u64) -> Result<Dataset> {
    let schema = kinematic_schema(cfg.pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let rotations: Vec<(f64, f64)> = (0..cfg.pairs)
        .map(|j| (kinematic_angle(j).cos(), kinematic_angle(j).sin()))
        .collect();
    let events = (0..cfg.events)
        .map(|e| {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let mut tca = cfg.dt * len as f64 + rng.gen_range(0.0..cfg.dt);
            let mut state: Vec<(f64, f64)> = (0..cfg.pairs)
                .map(|_| (unit.sample(&mut rng), unit.sample(&mut rng)))
                .collect();
            let mut rows = Vec::with_capacity(len);
            for _ in 0..len {
                let mut row = vec![tca];
                for &(p, v) in &state {
                    row.push(p);
                    row.push(v);
                }
                rows.push(row);
                tca -= cfg.dt;
                for ((p, v), (c, s)) in state.iter_mut().zip(&rotations) {
                    let (p0, v0) = (*p, *v);
                    *p = c * p0 + s * v0 + cfg.noise * unit.sample(&mut rng);
                    *v = -s * p0 + c * v0 + cfg.noise * unit.sample(&mut rng);
                }
            }
            build_event(format!("kin{e}"), rows, &schema)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { schema, events })
}

/// Each feature follows its own straight line per event; `time_to_tca`
/// decreases by 0.5 per CDM.
pub fn linear_trend_corpus(events: usize, width: usize, seed: u64) -> Result<Dataset> {
    let names: Vec<String> = std::iter::once("time_to_tca".to_string())
        .chain((1..width).map(|j| format!("f{j}")))
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = FeatureSchema::continuous(&refs, "time_to_tca")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..events)
        .map(|e| {
            let len = rng.gen_range(5..=8);
            let start = 0.5 * len as f64;
            let lines: Vec<(f64, f64)> = (1..width)
                .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-0.5..0.5)))
                .collect();
            let rows = (0..len)
                .map(|t| {
                    std::iter::once(start - 0.5 * t as f64)
                        .chain(lines.iter().map(|(a, b)| a + b * t as f64))
                        .collect()
                })
                .collect();
            build_event(format!("trend{e}"), rows, &schema)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { schema, events })
}

/// Events whose `time_to_tca` counts down by exactly 1.0 from an integer
/// start in `3..=8`, through TCA at 0, to a last CDM at -1. `miss_distance`
/// and `risk` are also linear in the countdown, up to a small per-event
/// offset, so the clock can still be read when dropout hides a feature.
pub fn countdown_corpus(events: usize, seed: u64) -> Result<Dataset> {
    let schema = FeatureSchema::continuous(&["time_to_tca", "miss_distance", "risk"], "time_to_tca")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..events)
        .map(|e| {
            let start = rng.gen_range(3..=8);
            let offset = rng.gen_range(-0.05..0.05);
            let level = rng.gen_range(-0.05..0.05);
            let rows = (-1..=start)
                .rev()
                .map(|t: i32| {
                    let t = f64::from(t);
                    vec![t, 1.0 + offset + 0.3 * t, level - 0.2 * t]
                })
                .collect();
            build_event(format!("cd{e}"), rows, &schema)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { schema, events })
}

/// A Kelvins-style CSV together with the counts a correct pipeline must
/// produce for it.
#[derive(Debug, Clone)]
pub struct SyntheticCsv {
    pub text: String,
    pub rows: usize,
    pub dropped_missing: usize,
    pub dropped_sigma: usize,
    pub kept_cdms: usize,
    /// Events with at least two surviving CDMs.
    pub kept_events: usize,
}

/// Writes `events` events with every Kelvins schema column, the discarded
/// columns, some rows with a missing feature and some rows breaking a sigma
/// limit.
pub fn kelvins_like_csv(events: usize, seed: u64) -> SyntheticCsv {
    let schema = FeatureSchema::kelvins();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut header: Vec<String> = vec!["event_id".into()];
    header.extend(schema.names().map(str::to_string));
    header.extend(KELVINS_DROPPED.iter().map(|s| s.to_string()));
    let limits: Vec<(usize, f64)> = schema
        .sigma_limits()
        .iter()
        .map(|(n, l)| (header.iter().position(|h| h == n).expect("sigma column"), *l))
        .collect();

    let mut text = header.join(",");
    text.push('\n');
    let (mut rows, mut missing, mut sigma, mut kept, mut kept_events) = (0, 0, 0, 0, 0);
    for e in 0..events {
        let len = rng.gen_range(1..=6);
        let mut survivors = 0;
        for k in 0..len {
            let mut cells: Vec<String> = vec![e.to_string()];
            cells.push(format!("{}", (len - k) as f64 * 0.9 + rng.gen_range(0.0..0.1)));
            for _ in 1..schema.width() {
                cells.push(format!("{:.6}", rng.gen_range(0.0..5.0)));
            }
            // Dropped columns: mostly missing, one categorical token.
            cells.extend(["", "NaN", "120.5", "", "3", "nan", "7", "DEBRIS"].map(String::from));
            let roll: f64 = rng.gen();
            if roll < 0.1 {
                let col = rng.gen_range(1..=schema.width());
                cells[col] = if rng.gen_bool(0.5) { "NaN".into() } else { String::new() };
                missing += 1;
            } else if roll < 0.2 {
                let (col, limit) = limits[rng.gen_range(0..limits.len())];
                cells[col] = format!("{}", limit * 1.5);
                sigma += 1;
            } else {
                if roll < 0.25 {
                    // On the limit is still valid.
                    let (col, limit) = limits[rng.gen_range(0..limits.len())];
                    cells[col] = format!("{limit}");
                }
                survivors += 1;
            }
            let _ = writeln!(text, "{}", cells.join(","));
            rows += 1;
        }
        if survivors >= 2 {
            kept += survivors;
            kept_events += 1;
        }
    }
    SyntheticCsv {
        text,
        rows,
        dropped_missing: missing,
        dropped_sigma: sigma,
        kept_cdms: kept,
        kept_events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn countdown_passes_zero_in_unit_steps() {
        let d = countdown_corpus(5, 1).unwrap();
        for e in &d.events {
            let t: Vec<f64> = e.cdms.iter().map(|c| c.time_to_tca).collect();
            assert!(t.contains(&0.0));
            assert_eq!(*t.last().unwrap(), -1.0);
            assert!(t.windows(2).all(|w| w[0] - w[1] == 1.0));
        }
    }

    #[test]
    fn kinematic_time_decreases() {
        let d = kinematic_corpus(&KinematicConfig { events: 4, ..Default::default() }, 2).unwrap();
        for e in &d.events {
            assert!(e.cdms.windows(2).all(|w| w[0].time_to_tca > w[1].time_to_tca));
        }
    }
}
