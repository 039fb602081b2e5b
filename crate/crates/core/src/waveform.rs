//! Piecewise-linear voltage programs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Ramp { v_from: f64, v_to: f64, duration: f64 },
    Hold { v: f64, duration: f64 },
    /// A hold whose end-of-block current is a conductance measurement.
    Read { v: f64, duration: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Segment::Ramp { duration, .. } | Segment::Hold { duration, .. } | Segment::Read { duration, .. } => {
                duration
            }
        }
    }

    fn endpoints(&self) -> (f64, f64) {
        match *self {
            Segment::Ramp { v_from, v_to, .. } => (v_from, v_to),
            Segment::Hold { v, .. } | Segment::Read { v, .. } => (v, v),
        }
    }

    /// Voltage at local time `tau` in [0, duration].
    pub fn value_at(&self, tau: f64) -> f64 {
        match *self {
            Segment::Ramp { v_from, v_to, duration } => v_from + (v_to - v_from) * (tau / duration),
            Segment::Hold { v, .. } | Segment::Read { v, .. } => v,
        }
    }

    pub fn is_read(&self) -> bool {
        matches!(self, Segment::Read { .. })
    }

    fn validate(&self) -> Result<()> {
        let d = self.duration();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::invalid(format!("segment duration must be > 0, got {d}")));
        }
        let (a, b) = self.endpoints();
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid("segment voltages must be finite"));
        }
        Ok(())
    }
}

/// An ordered list of segments with fixed boundary times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct Waveform {
    segments: Vec<Segment>,
    /// `starts[i]` is the start time of segment i; the last entry is the total duration.
    starts: Vec<f64>,
}

impl TryFrom<Vec<Segment>> for Waveform {
    type Error = Error;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        Waveform::new(segments)
    }
}

impl From<Waveform> for Vec<Segment> {
    fn from(w: Waveform) -> Self {
        w.segments
    }
}

impl Waveform {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("waveform needs at least one segment"));
        }
        for s in &segments {
            s.validate()?;
        }
        let mut starts = Vec::with_capacity(segments.len() + 1);
        let mut acc = 0.0;
        starts.push(acc);
        for s in &segments {
            acc += s.duration();
            starts.push(acc);
        }
        Ok(Waveform { segments, starts })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start_of(&self, index: usize) -> f64 {
        self.starts[index]
    }

    pub fn end_of(&self, index: usize) -> f64 {
        self.starts[index + 1]
    }

    /// Segment boundary times including 0 and the total duration.
    pub fn boundaries(&self) -> &[f64] {
        &self.starts
    }

    pub fn duration(&self) -> f64 {
        *self.starts.last().expect("nonempty")
    }

    /// Index of the segment active at `t`; boundaries belong to the later segment.
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        let duration = self.duration();
        if !(t >= 0.0 && t <= duration) {
            return Err(Error::OutOfRange { t, duration });
        }
        let k = self.starts.partition_point(|&s| s <= t);
        Ok((k - 1).min(self.segments.len() - 1))
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        let i = self.segment_index(t)?;
        Ok(self.segments[i].value_at(t - self.starts[i]))
    }

    pub fn max_voltage(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let (a, b) = s.endpoints();
                a.max(b)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_voltage(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let (a, b) = s.endpoints();
                a.min(b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn read_count(&self) -> usize {
        self.segments.iter().filter(|s| s.is_read()).count()
    }
}

/// Incremental construction of a waveform from blocks.
#[derive(Debug, Default, Clone)]
pub struct WaveformBuilder {
    segments: Vec<Segment>,
}

impl WaveformBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ramp(mut self, v_from: f64, v_to: f64, duration: f64) -> Self {
        self.segments.push(Segment::Ramp { v_from, v_to, duration });
        self
    }

    pub fn hold(mut self, v: f64, duration: f64) -> Self {
        self.segments.push(Segment::Hold { v, duration });
        self
    }

    pub fn read(mut self, read: ReadSpec) -> Self {
        self.segments.push(Segment::Read { v: read.v_read, duration: read.w_read });
        self
    }

    pub fn extend(mut self, segments: impl IntoIterator<Item = Segment>) -> Self {
        self.segments.extend(segments);
        self
    }

    pub fn build(self) -> Result<Waveform> {
        Waveform::new(self.segments)
    }
}

/// Embedded read block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadSpec {
    pub v_read: f64,
    pub w_read: f64,
}

impl Default for ReadSpec {
    fn default() -> Self {
        ReadSpec { v_read: 0.1, w_read: 100e-6 }
    }
}

/// Closed triangular loop 0 → v_pos → 0 → v_neg → 0 at constant |slope|.
pub fn dc_sweep(v_pos: f64, v_neg: f64, rate: f64) -> Result<Waveform> {
    if !(v_pos > 0.0 && v_neg < 0.0 && rate > 0.0 && v_pos.is_finite() && v_neg.is_finite() && rate.is_finite()) {
        return Err(Error::invalid(format!(
            "dc sweep needs v_pos > 0 > v_neg and rate > 0, got ({v_pos}, {v_neg}, {rate})"
        )));
    }
    let tp = v_pos / rate;
    let tn = -v_neg / rate;
    WaveformBuilder::new()
        .ramp(0.0, v_pos, tp)
        .ramp(v_pos, 0.0, tp)
        .ramp(0.0, v_neg, tn)
        .ramp(v_neg, 0.0, tn)
        .build()
}

/// Single-polarity triangle 0 → v_peak → 0.
pub fn half_sweep(v_peak: f64, rate: f64) -> Result<Waveform> {
    if !(v_peak != 0.0 && v_peak.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("half sweep needs v_peak != 0 and rate > 0, got ({v_peak}, {rate})")));
    }
    let t = v_peak.abs() / rate;
    WaveformBuilder::new().ramp(0.0, v_peak, t).ramp(v_peak, 0.0, t).build()
}

/// `n` write pulses interleaved with reads, with a leading read so `n + 1`
/// conductance samples exist.
pub fn pulse_train(amp: f64, width: f64, gap: f64, n: usize, read: ReadSpec) -> Result<Waveform> {
    if n == 0 {
        return Err(Error::invalid("pulse train needs n >= 1"));
    }
    if !(width > 0.0 && gap > 0.0 && read.w_read > 0.0) {
        return Err(Error::invalid("pulse width, gap and read width must be > 0"));
    }
    let mut b = WaveformBuilder::new().read(read).hold(0.0, gap);
    for _ in 0..n {
        b = b.hold(amp, width).hold(0.0, gap).read(read).hold(0.0, gap);
    }
    b.build()
}

/// Engineered neuron spike: a leading phase at `-amplitude` for `width`,
/// followed by a linearly decaying tail that starts at
/// `+tail_ratio * amplitude` and reaches 0 after `tail_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeShape {
    pub amplitude: f64,
    pub width: f64,
    pub tail_ratio: f64,
    pub tail_width: f64,
}

impl Default for SpikeShape {
    fn default() -> Self {
        SpikeShape { amplitude: 1.0, width: 0.5e-6, tail_ratio: 0.22, tail_width: 120e-6 }
    }
}

impl SpikeShape {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.width > 0.0 && self.tail_width > 0.0 && self.tail_ratio >= 0.0) {
            return Err(Error::invalid("spike needs amplitude, width, tail_width > 0 and tail_ratio >= 0"));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.width + self.tail_width
    }

    /// Linear pieces `(t0, t1, v0, v1)` relative to spike onset.
    fn pieces(&self) -> [(f64, f64, f64, f64); 2] {
        let tail = self.tail_ratio * self.amplitude;
        [
            (0.0, self.width, -self.amplitude, -self.amplitude),
            (self.width, self.span(), tail, 0.0),
        ]
    }

    /// Value at `t` relative to onset; right-continuous, zero outside the support.
    pub fn value_at(&self, t: f64) -> f64 {
        for (t0, t1, v0, v1) in self.pieces() {
            if t >= t0 && t < t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        0.0
    }
}

/// Pre/post spike pair with surrounding reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdpPairSpec {
    pub spike: SpikeShape,
    /// Post-minus-pre spike onset offset, s.
    pub delta_t: f64,
    pub v_read: f64,
    pub w_read: f64,
    /// Zero-bias settle time between reads and the pair, s.
    #[serde(default = "default_settle")]
    pub settle: f64,
}

fn default_settle() -> f64 {
    10e-6
}

impl StdpPairSpec {
    pub fn new(spike: SpikeShape, delta_t: f64, read: ReadSpec) -> Self {
        StdpPairSpec { spike, delta_t, v_read: read.v_read, w_read: read.w_read, settle: default_settle() }
    }

    pub fn read(&self) -> ReadSpec {
        ReadSpec { v_read: self.v_read, w_read: self.w_read }
    }

    /// Onset times (pre, post) within the pair window.
    pub fn onsets(&self) -> (f64, f64) {
        if self.delta_t >= 0.0 {
            (0.0, self.delta_t)
        } else {
            (-self.delta_t, 0.0)
        }
    }

    pub fn pair_span(&self) -> f64 {
        self.delta_t.abs() + self.spike.span()
    }

    /// Device voltage of the pair alone: pre(t - t_pre) - post(t - t_post).
    pub fn pair_voltage(&self, t: f64) -> f64 {
        let (t_pre, t_post) = self.onsets();
        self.spike.value_at(t - t_pre) - self.spike.value_at(t - t_post)
    }
}

/// Superpose a pre/post spike pair into one piecewise-linear program on the
/// common breakpoint grid, bracketed by reads.
pub fn superpose_stdp(spec: &StdpPairSpec) -> Result<Waveform> {
    spec.spike.validate()?;
    if !(spec.w_read > 0.0 && spec.settle > 0.0 && spec.delta_t.is_finite()) {
        return Err(Error::invalid("stdp pair needs w_read > 0, settle > 0 and finite delta_t"));
    }
    let read = spec.read();
    let mut b = WaveformBuilder::new().read(read).hold(0.0, spec.settle);
    b = b.extend(pair_segments(spec));
    b.hold(0.0, spec.settle).read(read).build()
}

fn pair_segments(spec: &StdpPairSpec) -> Vec<Segment> {
    let (t_pre, t_post) = spec.onsets();
    let mut grid: Vec<f64> = Vec::with_capacity(8);
    for onset in [t_pre, t_post] {
        for (t0, t1, _, _) in spec.spike.pieces() {
            grid.push(onset + t0);
            grid.push(onset + t1);
        }
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-18);

    // Value of one spike on the open interval (a, b), evaluated at its ends.
    let piece_ends = |onset: f64, a: f64, b: f64| -> (f64, f64) {
        let mid = 0.5 * (a + b) - onset;
        for (t0, t1, v0, v1) in spec.spike.pieces() {
            if mid >= t0 && mid < t1 {
                let f = |t: f64| v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                return (f(a - onset), f(b - onset));
            }
        }
        (0.0, 0.0)
    };

    let mut segs = Vec::with_capacity(grid.len());
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let (pa, pb) = piece_ends(t_pre, a, b);
        let (qa, qb) = piece_ends(t_post, a, b);
        let (va, vb) = (pa - qa, pb - qb);
        if va == vb {
            segs.push(Segment::Hold { v: va, duration: b - a });
        } else {
            segs.push(Segment::Ramp { v_from: va, v_to: vb, duration: b - a });
        }
    }
    segs
}
