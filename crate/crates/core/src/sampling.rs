//! Frame planning: resolve the four video-preprocessing knobs (`fps`,
//! `max_frames`, `nframes`, `max_pixels`) into a concrete per-video plan.
//!
//! `nframes` takes precedence: when it is set, `fps` and `max_frames` are
//! inactive. Timestamps are interval midpoints, so a plan never lands on the
//! exact start or end of a clip. Resizing to a pixel budget uses exact
//! integer arithmetic so the planned dimensions are identical on every
//! platform and never exceed the budget.

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dataset::VideoMeta;
use crate::error::{Error, Result};
use crate::par;

/// Video-preprocessing knobs. All optional fields default to unset; see
/// [`frame_count`] and [`resize_plan`] for how they combine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub fps: Option<f64>,
    pub max_frames: Option<u32>,
    /// Total frame count; when set, `fps` and `max_frames` are inactive.
    pub nframes: Option<u32>,
    /// Per-frame pixel budget (width x height upper bound).
    pub max_pixels: Option<u64>,
    /// Exact output (width, height); mutually exclusive with `max_pixels`.
    pub fixed_resolution: Option<(u32, u32)>,
    pub min_frames: u32,
    /// Scaled dimensions are floored to a multiple of this factor.
    pub dim_factor: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            fps: None,
            max_frames: None,
            nframes: None,
            max_pixels: None,
            fixed_resolution: None,
            min_frames: 1,
            dim_factor: 1,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(fps) = self.fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(Error::Config(format!("fps must be positive, got {fps}")));
            }
        }
        for (name, v) in [
            ("max_frames", self.max_frames),
            ("nframes", self.nframes),
        ] {
            if v == Some(0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_pixels == Some(0) {
            return Err(Error::Config("max_pixels must be positive".into()));
        }
        if let Some((w, h)) = self.fixed_resolution {
            if w == 0 || h == 0 {
                return Err(Error::Config(format!(
                    "fixed_resolution entries must be positive, got {w}x{h}"
                )));
            }
        }
        if self.max_pixels.is_some() && self.fixed_resolution.is_some() {
            return Err(Error::Config(
                "max_pixels and fixed_resolution are mutually exclusive".into(),
            ));
        }
        if self.min_frames == 0 {
            return Err(Error::Config("min_frames must be positive".into()));
        }
        if self.dim_factor == 0 {
            return Err(Error::Config("dim_factor must be positive".into()));
        }
        if let Some(max) = self.max_frames {
            if max < self.min_frames {
                return Err(Error::Config(format!(
                    "max_frames {max} is below min_frames {}",
                    self.min_frames
                )));
            }
        }
        Ok(())
    }
}

/// Resolved plan for one video: where to sample and at what size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub video_id: String,
    pub timestamps_s: Vec<f64>,
    pub target_width: u32,
    pub target_height: u32,
}

impl FramePlan {
    pub fn frame_count(&self) -> usize {
        self.timestamps_s.len()
    }
}

/// How many frames to extract. `nframes` wins outright; otherwise
/// `round(duration x fps)` clamped to `[min_frames, max_frames]`.
pub fn frame_count(meta: &VideoMeta, cfg: &SamplingConfig) -> Result<u32> {
    cfg.validate()?;
    if let Some(n) = cfg.nframes {
        return Ok(n);
    }
    let fps = cfg.fps.ok_or_else(|| {
        Error::Config("frame count needs either nframes or fps".into())
    })?;
    let raw = (meta.duration_s * fps).round();
    let mut count = if raw >= u32::MAX as f64 { u32::MAX } else { raw as u32 };
    count = count.max(cfg.min_frames);
    if let Some(max) = cfg.max_frames {
        count = count.min(max);
    }
    Ok(count)
}

/// Interval-midpoint timestamps: `t_i = (i + 0.5) x duration / count`.
/// Strictly increasing and always inside `[0, duration)`.
pub fn frame_timestamps(duration_s: f64, count: u32) -> Vec<f64> {
    let step = duration_s / count as f64;
    (0..count).map(|i| (i as f64 + 0.5) * step).collect()
}

// Largest q such that (q * factor)^2 * other <= budget * this, i.e. the exact
// floor of this * sqrt(budget / (this * other)) / factor. Pure integers: no
// platform-dependent rounding near exact squares (e.g. the 560 x 315 preset).
fn scaled_dim(this: u32, other: u32, budget: u64, factor: u32) -> u64 {
    let num = budget as u128 * this as u128;
    let den = (factor as u128) * (factor as u128) * (other as u128);
    let mut q = (num / den).isqrt();
    while (q + 1) * (q + 1) * den <= num {
        q += 1;
    }
    while q > 0 && q * q * den > num {
        q -= 1;
    }
    q as u64
}

/// Target dimensions for a source frame. A fixed resolution is returned
/// verbatim; a pixel budget scales both dimensions by `sqrt(budget / (w*h))`
/// and floors each to a multiple of `dim_factor` (never below one factor);
/// with neither set, the source passes through.
pub fn resize_plan(width: u32, height: u32, cfg: &SamplingConfig) -> Result<(u32, u32)> {
    cfg.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::Config("source dimensions must be positive".into()));
    }
    if let Some(fixed) = cfg.fixed_resolution {
        return Ok(fixed);
    }
    let budget = match cfg.max_pixels {
        Some(b) => b,
        None => return Ok((width, height)),
    };
    if width as u64 * height as u64 <= budget {
        return Ok((width, height));
    }
    let f = cfg.dim_factor as u64;
    let tw = scaled_dim(width, height, budget, cfg.dim_factor).max(1) * f;
    let th = scaled_dim(height, width, budget, cfg.dim_factor).max(1) * f;
    if tw * th > budget {
        // Only reachable when the floor hit zero and was clamped up to one
        // factor; the budget cannot hold even a single dim_factor cell at
        // this aspect ratio.
        return Err(Error::Config(format!(
            "pixel budget {budget} unsatisfiable for {width}x{height} at dim_factor {}",
            cfg.dim_factor
        )));
    }
    Ok((tw as u32, th as u32))
}

/// Compose [`frame_count`], [`frame_timestamps`], and [`resize_plan`] into a
/// per-video plan.
pub fn plan(meta: &VideoMeta, cfg: &SamplingConfig) -> Result<FramePlan> {
    let count = frame_count(meta, cfg)?;
    let (target_width, target_height) = resize_plan(meta.width, meta.height, cfg)?;
    Ok(FramePlan {
        video_id: meta.video_id.clone(),
        timestamps_s: frame_timestamps(meta.duration_s, count),
        target_width,
        target_height,
    })
}

/// Plan every video in one pass. Parallel when the `parallel` feature is on;
/// output order always matches input order.
pub fn plan_all(metas: &[VideoMeta], cfg: &SamplingConfig) -> Result<Vec<FramePlan>> {
    cfg.validate()?;
    par::map_auto(metas, |m| plan(m, cfg)).into_iter().collect()
}

/// Single-threaded reference version of [`plan_all`].
pub fn plan_all_seq(metas: &[VideoMeta], cfg: &SamplingConfig) -> Result<Vec<FramePlan>> {
    cfg.validate()?;
    par::map_seq(metas, |m| plan(m, cfg)).into_iter().collect()
}

#[derive(Deserialize)]
struct PresetFile {
    presets: BTreeMap<String, SamplingConfig>,
}

/// Built-in presets: the published parameter rows (`t2_r1`..`t2_r6`), the
/// 30-frame fixed-resolution `baseline`, the budgeted `hr_train`, and the two
/// higher-capacity inference settings (`hr_infer_60f`, `hr_infer_60f_hires`).
pub fn builtin_presets() -> &'static BTreeMap<String, SamplingConfig> {
    static BUILTIN: OnceLock<BTreeMap<String, SamplingConfig>> = OnceLock::new();
    BUILTIN.get_or_init(|| {
        parse_presets(include_str!("presets.json").as_bytes())
            .expect("embedded preset table is valid")
    })
}

/// Parse a `{"presets": {...}}` document, validating every entry.
pub fn parse_presets<R: Read>(mut source: R) -> Result<BTreeMap<String, SamplingConfig>> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let file: PresetFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("bad preset file: {e}")))?;
    for (name, cfg) in &file.presets {
        cfg.validate()
            .map_err(|e| Error::Config(format!("preset {name:?}: {e}")))?;
    }
    Ok(file.presets)
}

/// Look a preset up by name, checking user-supplied presets before the
/// built-ins. Unknown names are usage errors.
pub fn resolve_preset(
    name: &str,
    user: Option<&BTreeMap<String, SamplingConfig>>,
) -> Result<SamplingConfig> {
    if let Some(cfg) = user.and_then(|m| m.get(name)) {
        return Ok(cfg.clone());
    }
    if let Some(cfg) = builtin_presets().get(name) {
        return Ok(cfg.clone());
    }
    let mut known: Vec<&str> = builtin_presets().keys().map(String::as_str).collect();
    if let Some(user) = user {
        known.extend(user.keys().map(String::as_str));
    }
    known.sort_unstable();
    Err(Error::Usage(format!(
        "unknown sampling preset {name:?}; known presets: {}",
        known.join(", ")
    )))
}
