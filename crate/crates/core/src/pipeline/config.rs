//! Editing-run configuration: defaults, validation, and the plain-text
//! `key = value` config format shared by files and command-line overrides.

use std::collections::BTreeMap;

use crate::diffusion::Guidance;
use crate::error::{Error, Result};
use crate::pipeline::editor::{Editor, PixelRect};

pub const DEFAULT_ETA: f64 = 0.15;
pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_UPDATE_ITERS: usize = 750;
pub const DEFAULT_LR: f64 = 6e-3;
pub const DEFAULT_FACTOR: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    pub eta: f64,
    pub tau: f64,
    pub guidance: Guidance,
    pub steps: usize,
    pub factor: usize,
    pub update_iters: usize,
    pub lr: f64,
    pub seed: u64,
    pub condition_index: Option<usize>,
    pub editor: Editor,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            eta: DEFAULT_ETA,
            tau: DEFAULT_TAU,
            guidance: Guidance::default(),
            steps: crate::diffusion::DEFAULT_STEPS,
            factor: DEFAULT_FACTOR,
            update_iters: DEFAULT_UPDATE_ITERS,
            lr: DEFAULT_LR,
            seed: 0,
            condition_index: None,
            editor: Editor::Identity,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta out of range"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid("tau out of range"));
        }
        if self.steps < 1 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.factor < 1 {
            return Err(Error::invalid("factor must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("lr must be positive"));
        }
        let (min, max) = match self.guidance {
            Guidance::Scalar(w) => (w, w),
            Guidance::Ramp { min, max } => (min, max),
        };
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::invalid("guidance weights must be finite"));
        }
        Ok(())
    }
}

/// Raw `key = value` pairs plus the editor assembly rules. Recognized keys:
/// eta, tau, w_min, w_max, steps, factor, update_iters, lr, seed,
/// condition_index, editor, and the editor parameters hue_degrees,
/// gain_r/g/b, bias_r/g/b, region. Lines may be empty or `#` comments.
pub fn parse_config(text: &str) -> Result<EditConfig> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(format!(
                "config line {} is not `key = value`",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if pairs.insert(key.clone(), value).is_some() {
            return Err(Error::parse(format!("duplicate config key `{key}`")));
        }
    }
    config_from_pairs(pairs)
}

/// Applies repeatable `--set key=value` overrides on top of a config.
pub fn apply_overrides(config: EditConfig, overrides: &[(String, String)]) -> Result<EditConfig> {
    let mut pairs = config_to_pairs(&config);
    for (key, value) in overrides {
        pairs.insert(key.clone(), value.clone());
    }
    config_from_pairs(pairs)
}

fn config_to_pairs(config: &EditConfig) -> BTreeMap<String, String> {
    let mut pairs = BTreeMap::new();
    pairs.insert("eta".into(), config.eta.to_string());
    pairs.insert("tau".into(), config.tau.to_string());
    let (min, max) = match config.guidance {
        Guidance::Scalar(w) => (w, w),
        Guidance::Ramp { min, max } => (min, max),
    };
    pairs.insert("w_min".into(), min.to_string());
    pairs.insert("w_max".into(), max.to_string());
    pairs.insert("steps".into(), config.steps.to_string());
    pairs.insert("factor".into(), config.factor.to_string());
    pairs.insert("update_iters".into(), config.update_iters.to_string());
    pairs.insert("lr".into(), config.lr.to_string());
    pairs.insert("seed".into(), config.seed.to_string());
    if let Some(idx) = config.condition_index {
        pairs.insert("condition_index".into(), idx.to_string());
    }
    match &config.editor {
        Editor::Identity => {
            pairs.insert("editor".into(), "identity".into());
        }
        Editor::HueRotate { degrees } => {
            pairs.insert("editor".into(), "hue-rotate".into());
            pairs.insert("hue_degrees".into(), degrees.to_string());
        }
        Editor::Recolor { gains, biases } => {
            pairs.insert("editor".into(), "recolor".into());
            insert_recolor(&mut pairs, gains, biases);
        }
        Editor::MaskRecolor { region, gains, biases } => {
            pairs.insert("editor".into(), "mask-recolor".into());
            insert_recolor(&mut pairs, gains, biases);
            pairs.insert(
                "region".into(),
                format!("{},{},{},{}", region.x0, region.y0, region.x1, region.y1),
            );
        }
    }
    pairs
}

fn insert_recolor(pairs: &mut BTreeMap<String, String>, gains: &[f32; 3], biases: &[f32; 3]) {
    for (i, name) in ["r", "g", "b"].iter().enumerate() {
        pairs.insert(format!("gain_{name}"), gains[i].to_string());
        pairs.insert(format!("bias_{name}"), biases[i].to_string());
    }
}

fn config_from_pairs(mut pairs: BTreeMap<String, String>) -> Result<EditConfig> {
    let mut config = EditConfig::default();
    if let Some(v) = pairs.remove("eta") {
        config.eta = parse_num(&v, "eta")?;
    }
    if let Some(v) = pairs.remove("tau") {
        config.tau = parse_num(&v, "tau")?;
    }
    let mut w_min = match config.guidance {
        Guidance::Ramp { min, .. } => min,
        Guidance::Scalar(w) => w,
    };
    let mut w_max = match config.guidance {
        Guidance::Ramp { max, .. } => max,
        Guidance::Scalar(w) => w,
    };
    if let Some(v) = pairs.remove("w_min") {
        w_min = parse_num(&v, "w_min")?;
    }
    if let Some(v) = pairs.remove("w_max") {
        w_max = parse_num(&v, "w_max")?;
    }
    config.guidance = if w_min == w_max {
        Guidance::Scalar(w_min)
    } else {
        Guidance::Ramp { min: w_min, max: w_max }
    };
    if let Some(v) = pairs.remove("steps") {
        config.steps = parse_num(&v, "steps")?;
    }
    if let Some(v) = pairs.remove("factor") {
        config.factor = parse_num(&v, "factor")?;
    }
    if let Some(v) = pairs.remove("update_iters") {
        config.update_iters = parse_num(&v, "update_iters")?;
    }
    if let Some(v) = pairs.remove("lr") {
        config.lr = parse_num(&v, "lr")?;
    }
    if let Some(v) = pairs.remove("seed") {
        config.seed = parse_num(&v, "seed")?;
    }
    if let Some(v) = pairs.remove("condition_index") {
        config.condition_index = Some(parse_num(&v, "condition_index")?);
    }

    let editor_kind = pairs.remove("editor");
    let hue = pairs.remove("hue_degrees");
    let mut gains = [1.0f32; 3];
    let mut biases = [0.0f32; 3];
    let mut saw_recolor_param = false;
    for (i, name) in ["r", "g", "b"].iter().enumerate() {
        if let Some(v) = pairs.remove(&format!("gain_{name}")) {
            gains[i] = parse_num(&v, "gain")?;
            saw_recolor_param = true;
        }
        if let Some(v) = pairs.remove(&format!("bias_{name}")) {
            biases[i] = parse_num(&v, "bias")?;
            saw_recolor_param = true;
        }
    }
    let region = pairs.remove("region");

    if let Some((key, _)) = pairs.into_iter().next() {
        return Err(Error::parse(format!("unknown config key `{key}`")));
    }

    config.editor = match editor_kind.as_deref() {
        None | Some("identity") => {
            if hue.is_some() || saw_recolor_param || region.is_some() {
                return Err(Error::parse("editor parameters given without a matching editor"));
            }
            Editor::Identity
        }
        Some("hue-rotate") => {
            if saw_recolor_param || region.is_some() {
                return Err(Error::parse("hue-rotate accepts only hue_degrees"));
            }
            let degrees = match hue {
                Some(v) => parse_num(&v, "hue_degrees")?,
                None => 120.0,
            };
            Editor::HueRotate { degrees }
        }
        Some("recolor") => {
            if hue.is_some() || region.is_some() {
                return Err(Error::parse("recolor accepts only gain_*/bias_*"));
            }
            Editor::Recolor { gains, biases }
        }
        Some("mask-recolor") => {
            if hue.is_some() {
                return Err(Error::parse("mask-recolor accepts only gain_*/bias_*/region"));
            }
            let region = region
                .ok_or_else(|| Error::parse("mask-recolor requires region = x0,y0,x1,y1"))?;
            let parts: Vec<&str> = region.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::parse("region must be x0,y0,x1,y1"));
            }
            let mut vals = [0usize; 4];
            for (i, p) in parts.iter().enumerate() {
                vals[i] = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse("region coordinates must be integers"))?;
            }
            Editor::MaskRecolor {
                region: PixelRect { x0: vals[0], y0: vals[1], x1: vals[2], y1: vals[3] },
                gains,
                biases,
            }
        }
        Some(other) => {
            return Err(Error::parse(format!("unknown editor `{other}`")));
        }
    };

    config.validate()?;
    Ok(config)
}

fn parse_num<T: std::str::FromStr>(value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(format!("bad value `{value}` for {what}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(key: &str, value: &str) -> Vec<(String, String)> {
        vec![(key.to_string(), value.to_string())]
    }

    #[test]
    fn empty_text_parses_to_the_defaults() {
        assert_eq!(parse_config("").unwrap(), EditConfig::default());
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), EditConfig::default());
        assert_eq!(
            apply_overrides(EditConfig::default(), &[]).unwrap(),
            EditConfig::default()
        );
    }

    #[test]
    fn parse_reads_keys_comments_and_editor_parameters() {
        let text = "\
# edit run
eta = 0.25
tau = 0.75

w_min = 1.25
w_max = 2.5
steps = 12
factor = 4
update_iters = 100
lr = 0.01
seed = 42
condition_index = 3
editor = recolor
gain_r = 0.5
bias_b = 0.25
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.eta, 0.25);
        assert_eq!(cfg.tau, 0.75);
        assert_eq!(cfg.guidance, Guidance::Ramp { min: 1.25, max: 2.5 });
        assert_eq!(cfg.steps, 12);
        assert_eq!(cfg.factor, 4);
        assert_eq!(cfg.update_iters, 100);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.condition_index, Some(3));
        assert_eq!(
            cfg.editor,
            Editor::Recolor { gains: [0.5, 1.0, 1.0], biases: [0.0, 0.0, 0.25] }
        );
    }

    #[test]
    fn equal_guidance_bounds_collapse_to_a_scalar() {
        let cfg = parse_config("w_min = 2\nw_max = 2\n").unwrap();
        assert_eq!(cfg.guidance, Guidance::Scalar(2.0));
    }

    #[test]
    fn hue_editor_defaults_to_a_third_turn() {
        let cfg = parse_config("editor = hue-rotate\n").unwrap();
        assert_eq!(cfg.editor, Editor::HueRotate { degrees: 120.0 });
        let cfg = parse_config("editor = hue-rotate\nhue_degrees = 45\n").unwrap();
        assert_eq!(cfg.editor, Editor::HueRotate { degrees: 45.0 });
    }

    #[test]
    fn mask_recolor_requires_a_well_formed_region() {
        let cfg =
            parse_config("editor = mask-recolor\nregion = 1, 2, 30, 40\ngain_g = 0.5\n").unwrap();
        assert_eq!(
            cfg.editor,
            Editor::MaskRecolor {
                region: PixelRect { x0: 1, y0: 2, x1: 30, y1: 40 },
                gains: [1.0, 0.5, 1.0],
                biases: [0.0; 3],
            }
        );
        let err = parse_config("editor = mask-recolor\n").unwrap_err();
        assert!(err.to_string().contains("mask-recolor requires region"), "{err}");
        let err = parse_config("editor = mask-recolor\nregion = 1,2,3\n").unwrap_err();
        assert!(err.to_string().contains("region must be x0,y0,x1,y1"), "{err}");
        let err = parse_config("editor = mask-recolor\nregion = a,b,c,d\n").unwrap_err();
        assert!(err.to_string().contains("region coordinates must be integers"), "{err}");
    }

    #[test]
    fn parse_rejects_malformed_lines_and_duplicates() {
        let err = parse_config("frobnicate\n").unwrap_err();
        assert!(err.to_string().contains("config line 1 is not `key = value`"), "{err}");
        let err = parse_config("eta = 0.1\neta = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate config key `eta`"), "{err}");
    }

    #[test]
    fn parse_rejects_unknown_keys_bad_values_and_bad_ranges() {
        let err = parse_config("frobnicate = 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown config key `frobnicate`"), "{err}");
        let err = parse_config("eta = abc\n").unwrap_err();
        assert!(err.to_string().contains("bad value `abc` for eta"), "{err}");
        let err = parse_config("eta = 1.2\n").unwrap_err();
        assert!(err.to_string().contains("eta out of range"), "{err}");
        let err = parse_config("steps = 0\n").unwrap_err();
        assert!(err.to_string().contains("steps must be at least 1"), "{err}");
        let err = parse_config("factor = 0\n").unwrap_err();
        assert!(err.to_string().contains("factor must be at least 1"), "{err}");
        let err = parse_config("lr = 0\n").unwrap_err();
        assert!(err.to_string().contains("lr must be positive"), "{err}");
        let err = parse_config("tau = -1\n").unwrap_err();
        assert!(err.to_string().contains("tau out of range"), "{err}");
        let err = parse_config("w_max = inf\n").unwrap_err();
        assert!(err.to_string().contains("guidance weights must be finite"), "{err}");
    }

    #[test]
    fn editor_parameters_must_match_the_selected_editor() {
        let err = parse_config("hue_degrees = 10\n").unwrap_err();
        assert!(
            err.to_string().contains("editor parameters given without a matching editor"),
            "{err}"
        );
        let err = parse_config("gain_r = 2\n").unwrap_err();
        assert!(
            err.to_string().contains("editor parameters given without a matching editor"),
            "{err}"
        );
        let err = parse_config("editor = recolor\nhue_degrees = 10\n").unwrap_err();
        assert!(err.to_string().contains("recolor accepts only gain_*/bias_*"), "{err}");
        let err = parse_config("editor = hue-rotate\ngain_r = 2\n").unwrap_err();
        assert!(err.to_string().contains("hue-rotate accepts only hue_degrees"), "{err}");
        let err = parse_config("editor = mask-recolor\nregion = 0,0,1,1\nhue_degrees = 3\n")
            .unwrap_err();
        assert!(err.to_string().contains("mask-recolor accepts only"), "{err}");
        let err = parse_config("editor = sparkle\n").unwrap_err();
        assert!(err.to_string().contains("unknown editor `sparkle`"), "{err}");
    }

    #[test]
    fn overrides_rewrite_single_keys_on_top_of_a_config() {
        let cfg = apply_overrides(EditConfig::default(), &set("eta", "0.5")).unwrap();
        assert_eq!(cfg.eta, 0.5);
        assert_eq!(cfg.tau, EditConfig::default().tau);

        // Default guidance is a ramp; forcing the bounds equal collapses it.
        let base = EditConfig::default();
        let (min, _) = match base.guidance {
            Guidance::Ramp { min, max } => (min, max),
            Guidance::Scalar(w) => (w, w),
        };
        let cfg = apply_overrides(base.clone(), &set("w_max", &min.to_string())).unwrap();
        assert_eq!(cfg.guidance, Guidance::Scalar(min));

        // Switching the editor keeps the numeric keys.
        let cfg = apply_overrides(base, &set("editor", "hue-rotate")).unwrap();
        assert_eq!(cfg.editor, Editor::HueRotate { degrees: 120.0 });
        assert_eq!(cfg.eta, EditConfig::default().eta);

        // Later overrides win.
        let cfg = apply_overrides(
            EditConfig::default(),
            &[
                ("eta".to_string(), "0.3".to_string()),
                ("eta".to_string(), "0.7".to_string()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.eta, 0.7);

        // Overrides are validated like any config.
        let err = apply_overrides(EditConfig::default(), &set("eta", "1.2")).unwrap_err();
        assert!(err.to_string().contains("eta out of range"), "{err}");
    }

    #[test]
    fn recolor_editor_round_trips_through_override_pairs() {
        let base = EditConfig {
            editor: Editor::MaskRecolor {
                region: PixelRect { x0: 4, y0: 8, x1: 40, y1: 48 },
                gains: [0.25, 1.0, 2.0],
                biases: [0.0, 0.125, -0.5],
            },
            condition_index: Some(7),
            ..EditConfig::default()
        };
        let same = apply_overrides(base.clone(), &[]).unwrap();
        assert_eq!(same, base);
    }
}
