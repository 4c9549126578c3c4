//! Per-activity signal templates.
//!
//! Each scripted segment becomes a clean (noise-free) trace: a distance
//! offset curve relative to the participant baseline, a physiological-state
//! level per second, and heart/breathing-rate deltas. At difficulty 0 falls
//! are the only place abrupt distance steps occur; every other posture
//! change is a gentle multi-second ramp, so a fast distance step is the
//! constructed fall signature. The difficulty knob blurs that boundary from
//! both sides: it inflates the "near miss" activities (lying down, transfers,
//! floor work) toward fall amplitudes and hastens them, while dragging the
//! weakest falls down into near-miss range.

use crate::data::ActivityLabel;
use rand::Rng;

/// Distance offsets for scripted postures, in meters relative to the
/// standing baseline.
const SIT_BED: f64 = 0.10;
const SIT_CHAIR: f64 = 0.12;
const LIE_BED: f64 = 0.25;

/// Clean per-second trace for one protocol span.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub d_offset: Vec<f64>,
    pub ps: Vec<u8>,
    pub hr_delta: Vec<f64>,
    pub br_delta: Vec<f64>,
}

impl Trace {
    fn with_len(len: usize) -> Self {
        Self {
            d_offset: vec![0.0; len],
            ps: vec![1; len],
            hr_delta: vec![0.0; len],
            br_delta: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.d_offset.len()
    }

    pub fn start_offset(&self) -> f64 {
        *self.d_offset.first().unwrap_or(&0.0)
    }

    pub fn end_offset(&self) -> f64 {
        *self.d_offset.last().unwrap_or(&0.0)
    }
}

/// What a fall leaves behind for the following buffer to play out.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Aftermath {
    pub floor_offset: f64,
    /// Seconds the subject stays down before getting up.
    pub hold: usize,
    /// Part-caught fall: the vitals barely spike while the subject is down.
    pub soft: bool,
}

pub(crate) fn is_fall(label: ActivityLabel) -> bool {
    label.is_fall()
}

/// Posture offset at which a fall of this type begins.
fn fall_pre_offset(label: ActivityLabel) -> f64 {
    match label {
        ActivityLabel::Fob | ActivityLabel::Fsu => LIE_BED,
        ActivityLabel::Ftr => SIT_CHAIR,
        _ => 0.0,
    }
}

/// Linear ramp helper writing `from..to` across `range` (inclusive ends).
fn ramp(values: &mut [f64], from: f64, to: f64) {
    let n = values.len();
    if n == 0 {
        return;
    }
    if n == 1 {
        values[0] = to;
        return;
    }
    for (i, v) in values.iter_mut().enumerate() {
        *v = from + (to - from) * (i as f64 / (n - 1) as f64);
    }
}

fn near_miss_delta(difficulty: f64, rng: &mut impl Rng) -> f64 {
    rng.gen_range(0.25..0.40) + difficulty * rng.gen_range(0.0..0.35)
}

/// Clean trace for an ADL segment of `len` seconds.
pub(crate) fn adl_trace(
    label: ActivityLabel,
    len: usize,
    difficulty: f64,
    rng: &mut impl Rng,
) -> Trace {
    let mut t = Trace::with_len(len);
    match label {
        ActivityLabel::Sta => {
            calm(&mut t, 0.0, rng);
        }
        ActivityLabel::Sob => calm(&mut t, SIT_BED, rng),
        ActivityLabel::Soc => calm(&mut t, SIT_CHAIR, rng),
        ActivityLabel::Lob => {
            calm(&mut t, LIE_BED, rng);
            for v in t.br_delta.iter_mut() {
                *v = -1.0;
            }
        }
        ActivityLabel::Log => {
            // Lower to the floor over the first few seconds, then lie still.
            let peak = near_miss_delta(difficulty, rng) + 0.2;
            let down = 4.min(len);
            ramp(&mut t.d_offset[..down], 0.0, peak);
            for v in t.d_offset[down..].iter_mut() {
                *v = peak;
            }
            for p in t.ps[..down].iter_mut() {
                *p = 2;
            }
        }
        ActivityLabel::Wlk => {
            let amp = rng.gen_range(0.15..0.30);
            let period = rng.gen_range(5.0..9.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            for (i, v) in t.d_offset.iter_mut().enumerate() {
                *v = amp * (std::f64::consts::TAU * i as f64 / period + phase).sin();
            }
            for (i, p) in t.ps.iter_mut().enumerate() {
                *p = if (i + rng.gen_range(0..2)) % 3 == 0 { 4 } else { 3 };
            }
            for v in t.hr_delta.iter_mut() {
                *v = 8.0;
            }
            for v in t.br_delta.iter_mut() {
                *v = 2.0;
            }
        }
        ActivityLabel::Sdc => transition(&mut t, 0.0, SIT_CHAIR, rng),
        ActivityLabel::Suc => transition(&mut t, SIT_CHAIR, 0.0, rng),
        ActivityLabel::Seb => transition(&mut t, LIE_BED, SIT_BED, rng),
        ActivityLabel::Tob => transition(&mut t, LIE_BED, 0.0, rng),
        ActivityLabel::Ldb => {
            // Near miss: getting into bed quickly, scaled by difficulty.
            // The hastiest versions cover the whole drop in one second,
            // silhouetting a soft fall.
            let mut target = LIE_BED + difficulty * rng.gen_range(0.0..0.30);
            let hasty = difficulty > 0.0 && rng.gen_bool(0.5 * difficulty);
            if hasty {
                target = target.min(0.42);
            }
            let move_len = if hasty { 2.min(len) } else { 3.min(len) };
            ramp(&mut t.d_offset[..move_len], 0.0, target);
            for v in t.d_offset[move_len..].iter_mut() {
                *v = target;
            }
            for p in t.ps[..move_len].iter_mut() {
                *p = 3;
            }
        }
        ActivityLabel::Rib => {
            calm(&mut t, LIE_BED, rng);
            // A roll halfway through: brief wiggle and motion burst.
            if len >= 6 {
                let mid = len / 2;
                let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                t.d_offset[mid] = LIE_BED + dir * 0.08;
                t.d_offset[mid + 1] = LIE_BED + dir * 0.05;
                t.ps[mid] = 3;
                t.ps[mid + 1] = 2;
            }
        }
        ActivityLabel::Tfr => {
            // Bed to chair with a mid-transfer dip, inflated by difficulty.
            let bump = near_miss_delta(difficulty, rng) * 0.6;
            let mid = len / 2;
            ramp(&mut t.d_offset[..mid], LIE_BED, SIT_CHAIR + bump);
            ramp(&mut t.d_offset[mid..], SIT_CHAIR + bump, SIT_CHAIR);
            for p in t.ps[..len.min(mid + 2)].iter_mut() {
                *p = 3;
            }
            for v in t.hr_delta.iter_mut() {
                *v = 3.0;
            }
        }
        ActivityLabel::Sug => {
            // Standing up from the ground: start high, come down gently.
            let from = near_miss_delta(difficulty, rng) + 0.2;
            let up = 5.min(len);
            ramp(&mut t.d_offset[..up], from, 0.0);
            for v in t.d_offset[up..].iter_mut() {
                *v = 0.0;
            }
            for p in t.ps[..up].iter_mut() {
                *p = 3;
            }
            for v in t.hr_delta.iter_mut() {
                *v = 4.0;
            }
        }
        _ => unreachable!("fall labels use fall_trace"),
    }
    t
}

fn calm(t: &mut Trace, offset: f64, rng: &mut impl Rng) {
    for v in t.d_offset.iter_mut() {
        *v = offset;
    }
    for p in t.ps.iter_mut() {
        *p = if rng.gen_bool(0.15) { 2 } else { 1 };
    }
}

/// Gentle posture change over the first ~4 seconds, then hold.
fn transition(t: &mut Trace, from: f64, to: f64, rng: &mut impl Rng) {
    let len = t.len();
    let move_len = 4.min(len);
    ramp(&mut t.d_offset[..move_len], from, to);
    for v in t.d_offset[move_len..].iter_mut() {
        *v = to;
    }
    for p in t.ps[..move_len].iter_mut() {
        *p = 2;
    }
    for p in t.ps[move_len..].iter_mut() {
        *p = if rng.gen_bool(0.15) { 2 } else { 1 };
    }
    for v in t.hr_delta.iter_mut() {
        *v = 3.0;
    }
}

/// Clean trace for a fall segment plus the aftermath contract for the
/// following buffer. At difficulty 0 the distance steps by at least 0.55 m
/// within the first two seconds, the constructed signature downstream
/// windows key on. Difficulty drags the weakest falls down into near-miss
/// amplitudes and sometimes has the sensor misread the impact as minor
/// movement, so the class boundary genuinely blurs instead of staying a
/// clean threshold.
pub(crate) fn fall_trace(
    label: ActivityLabel,
    len: usize,
    difficulty: f64,
    rng: &mut impl Rng,
) -> (Trace, Aftermath) {
    let pre = fall_pre_offset(label);
    let soft = difficulty > 0.0 && rng.gen_bool(0.35 * difficulty);
    // A soft fall is part-caught: the drop is shallow, the radar reads the
    // whole slump as minor movement, and the vitals barely react. It lands
    // in the same band as a hasty lie-down.
    let step = if soft {
        rng.gen_range((0.55 - 0.50 * difficulty).max(0.20)..0.55)
    } else {
        rng.gen_range(0.55 - 0.30 * difficulty..0.85)
    };
    let floor = pre + step;
    let mut t = Trace::with_len(len);
    for (i, v) in t.d_offset.iter_mut().enumerate() {
        *v = if i == 0 { pre + 0.6 * step } else { floor };
    }
    for p in t.ps.iter_mut() {
        *p = if soft { 3 } else { 4 };
    }
    for v in t.hr_delta.iter_mut() {
        *v = if soft { 3.0 } else { 10.0 };
    }
    for v in t.br_delta.iter_mut() {
        *v = if soft { 1.0 } else { 2.0 };
    }
    let aftermath = Aftermath {
        floor_offset: floor,
        hold: 4 + rng.gen_range(0..2),
        soft,
    };
    (t, aftermath)
}

/// Buffer between protocol spans: play out any fall aftermath, return to
/// baseline, idle, then drift gently into the next span's start posture.
pub(crate) fn buffer_trace(
    len: usize,
    from_offset: f64,
    to_offset: f64,
    aftermath: Option<Aftermath>,
    rng: &mut impl Rng,
) -> Trace {
    let mut t = Trace::with_len(len);
    let mut i = 0;

    if let Some(a) = aftermath {
        let hold = a.hold.min(len);
        for k in 0..hold {
            t.d_offset[k] = a.floor_offset;
            t.ps[k] = if rng.gen_bool(0.5) { 0 } else { 1 };
            t.hr_delta[k] = if a.soft {
                3.0 - 0.5 * k as f64
            } else {
                10.0 - k as f64
            };
            t.br_delta[k] = if a.soft { 1.0 } else { 2.0 };
        }
        i = hold;
        // Recovery: get up from the floor over a few seconds.
        let rec = (i + 3).min(len);
        if rec > i {
            ramp(&mut t.d_offset[i..rec], a.floor_offset, 0.0);
            for p in t.ps[i..rec].iter_mut() {
                *p = 3;
            }
            for (k, v) in t.hr_delta[i..rec].iter_mut().enumerate() {
                *v = if a.soft {
                    2.0 - 0.5 * k as f64
                } else {
                    6.0 - 2.0 * k as f64
                };
            }
            i = rec;
        }
    } else if from_offset != 0.0 {
        let rec = (i + 5).min(len);
        ramp(&mut t.d_offset[i..rec], from_offset, 0.0);
        for p in t.ps[i..rec].iter_mut() {
            *p = 2;
        }
        i = rec;
    }

    // Idle stretch.
    let setup_len = if to_offset != 0.0 { 5.min(len) } else { 0 };
    let idle_end = len.saturating_sub(setup_len).max(i);
    for k in i..idle_end {
        t.d_offset[k] = 0.0;
        t.ps[k] = if rng.gen_bool(0.15) { 2 } else { 1 };
    }

    // Get into position for the next span.
    if idle_end < len {
        ramp(&mut t.d_offset[idle_end..], 0.0, to_offset);
        for p in t.ps[idle_end..].iter_mut() {
            *p = 2;
        }
    }
    t
}

/// Start-of-segment distance offset for stitching buffers, clean of noise.
pub(crate) fn segment_start_offset(
    label: ActivityLabel,
    trace: &Trace,
) -> f64 {
    if is_fall(label) {
        fall_pre_offset(label)
    } else {
        trace.start_offset()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fall_steps_fast_and_far() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for label in ActivityLabel::fall_codes() {
            let (t, a) = fall_trace(label, 2, 0.0, &mut rng);
            let pre = fall_pre_offset(label);
            assert!(t.d_offset[1] - pre > 0.55 - 1e-12);
            assert!(t.d_offset[1] - pre < 0.85);
            assert_eq!(t.ps, vec![4, 4]);
            assert!((a.floor_offset - t.d_offset[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn difficulty_softens_falls_into_near_miss_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut soft_steps = 0;
        let mut misread = 0;
        for _ in 0..300 {
            let (t, _) = fall_trace(ActivityLabel::Fst, 2, 0.5, &mut rng);
            let step = t.d_offset[1];
            assert!(step > 0.40 - 1e-12 && step < 0.85);
            assert_eq!(t.ps[0], 4);
            if step < 0.55 {
                soft_steps += 1;
            }
            if t.ps[1] == 3 {
                misread += 1;
                assert_eq!(t.hr_delta[1], 5.0);
            }
        }
        // Both softening mechanisms fire often enough to matter.
        assert!(soft_steps > 30, "soft steps {soft_steps}");
        assert!(misread > 30, "misread impacts {misread}");
    }

    #[test]
    fn adl_ramps_stay_gentle() {
        // No ADL may produce a one-second distance jump in fall range.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for difficulty in [0.0, 0.5, 1.0] {
            for label in ActivityLabel::adl_codes() {
                for _ in 0..20 {
                    let t = adl_trace(label, 20, difficulty, &mut rng);
                    let max_step = t
                        .d_offset
                        .windows(2)
                        .map(|w| (w[1] - w[0]).abs())
                        .fold(0.0, f64::max);
                    assert!(
                        max_step < 0.45,
                        "{label} difficulty {difficulty} step {max_step}"
                    );
                }
            }
        }
    }

    #[test]
    fn buffer_plays_aftermath_then_recovers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = buffer_trace(
            12,
            0.7,
            0.0,
            Some(Aftermath {
                floor_offset: 0.7,
                hold: 4,
            }),
            &mut rng,
        );
        assert_eq!(t.d_offset[0], 0.7);
        assert_eq!(t.d_offset[3], 0.7);
        assert!(t.ps[..4].iter().all(|&p| p <= 1));
        assert_eq!(*t.d_offset.last().unwrap(), 0.0);
    }

    #[test]
    fn buffer_sets_up_next_posture() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = buffer_trace(10, 0.0, 0.25, None, &mut rng);
        assert!((t.end_offset() - 0.25).abs() < 1e-12);
        assert_eq!(t.d_offset[0], 0.0);
    }
}
