//! Experiment configuration: parsing, preset expansion and the digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sheetcalc::lattice::Grid;
use sheetcalc::malliavin::{FieldTable, PayoffSpec, PolynomialFields};
use sheetcalc::polynomial::Polynomial;
use sheetcalc::verify::{HolderSource, McConfig, OuSampler};
use sheetcalc::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SimulateSheet,
    SampleOu,
    VerifyRules,
    SolveHyperbolic,
    RunIbp,
    RunBismut,
    RunReversibility,
    HolderScan,
}

/// Built-in coefficient sets for `solve-hyperbolic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemPreset {
    /// `a₁ = I`; reproduces the sheet.
    Sheet,
    /// The OU sheet with its clock component.
    OuClock,
    /// `d_s d_t x = λ d_s x d_t x + noise·d_s d_t w`, `x_{s0} = s`, `x_{0t} = t`.
    Goursat,
    /// The bounded scalar test system with Brownian boundary data.
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_s: usize,
    pub n_t: usize,
    pub ds: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `linear1d`, `ou` or `zero`; replaced by the explicit table on expansion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// `fields[i][r]` is component `r` of `X_i`; `X_0` is the drift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<Vec<Polynomial>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoffs: Option<Vec<PayoffSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lags: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Blow-up threshold; absent means no threshold.
    #[serde(default, rename = "blowup_M", skip_serializing_if = "Option::is_none")]
    pub blowup_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<HolderSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<OuSampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    /// Closed-form value both sides must reach under `--assert`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// Number of standard errors allowed under `--assert`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_se: Option<f64>,
    /// Rerun on the grid of twice the step to budget the discretization bias.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<((f64, f64), (f64, f64))>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_directory() -> String {
    "sheetcalc-out".into()
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    pub mc: McConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses a config, reporting the dotted path of the offending field.
pub fn parse(text: &str) -> std::result::Result<ExperimentConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("invalid configuration at `{path}`: {}", e.inner())
        }
    })
}

fn needs_model(command: Command) -> bool {
    matches!(command, Command::RunIbp | Command::RunBismut | Command::RunReversibility)
}

fn expand_model(model: &ModelConfig) -> Result<ModelConfig> {
    let table = match model.preset.as_deref() {
        Some("linear1d") => PolynomialFields::linear1d().table(),
        Some("ou") => PolynomialFields::ou(model.m.unwrap_or(1))?.table(),
        Some("zero") => PolynomialFields::zero(model.d.unwrap_or(1), model.m.unwrap_or(1))?.table(),
        Some(other) => {
            return Err(Error::config(
                "model.preset",
                format!("unknown preset `{other}`; expected linear1d, ou or zero"),
            ))
        }
        None => {
            let d = model.d.ok_or_else(|| Error::config("model.d", "required without a preset"))?;
            let m = model.m.ok_or_else(|| Error::config("model.m", "required without a preset"))?;
            let fields = model
                .fields
                .clone()
                .ok_or_else(|| Error::config("model.fields", "required without a preset"))?;
            FieldTable {
                d,
                m,
                fields,
                bound: model.bound,
            }
        }
    };
    // validates the table before it is written out
    PolynomialFields::new(table.clone())?;
    let x0 = match (&model.x0, model.preset.as_deref()) {
        (Some(x0), _) => x0.clone(),
        (None, Some("linear1d")) => vec![1.0],
        (None, _) => vec![0.0; table.d],
    };
    if x0.len() != table.d {
        return Err(Error::config(
            "model.x0",
            format!("expected {} entries, got {}", table.d, x0.len()),
        ));
    }
    Ok(ModelConfig {
        preset: None,
        d: Some(table.d),
        m: Some(table.m),
        fields: Some(table.fields),
        x0: Some(x0),
        bound: table.bound,
    })
}

/// Lags `dt, 2dt, 4dt, …` up to the t-extent.
fn dyadic_lags(grid: &GridConfig) -> Vec<f64> {
    let mut lags = Vec::new();
    let mut k = 1;
    while k <= grid.n_t {
        lags.push(k as f64 * grid.dt);
        k *= 2;
    }
    lags
}

fn coordinate(index: usize) -> PayoffSpec {
    PayoffSpec::Coordinate { index }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n_s, self.grid.n_t, self.grid.ds, self.grid.dt)
    }

    /// Replaces presets by explicit tables and fills in every default the
    /// command uses, so the result reruns identically.
    pub fn expand(&self) -> Result<ExperimentConfig> {
        let mut out = self.clone();
        self.grid()?;
        self.mc.validate()?;
        for f in &self.output.formats {
            if f != "json" && f != "csv" {
                return Err(Error::config("output.formats", format!("unknown format `{f}`")));
            }
        }
        out.model = match &self.model {
            Some(m) => Some(expand_model(m)?),
            None if needs_model(self.run.command) => {
                return Err(Error::config("model", "required by this command"))
            }
            None => None,
        };
        let run = &mut out.run;
        let k_se = |run: &mut RunConfig, k: f64| {
            run.k_se.get_or_insert(k);
        };
        match run.command {
            Command::RunIbp => {
                run.payoffs.get_or_insert_with(|| vec![coordinate(0), coordinate(0)]);
                run.bias.get_or_insert(self.grid.n_s.is_multiple_of(2));
                k_se(run, 3.0);
            }
            Command::RunBismut => {
                run.payoffs.get_or_insert_with(|| vec![coordinate(0)]);
                run.component.get_or_insert(0);
                run.bias.get_or_insert(self.grid.n_s.is_multiple_of(2));
                k_se(run, 3.0);
            }
            Command::RunReversibility => {
                run.payoffs.get_or_insert_with(|| vec![coordinate(0), coordinate(0)]);
                run.sampler.get_or_insert(OuSampler::Exact);
                if run.lags.is_none() && run.t_gap.is_none() {
                    return Err(Error::config("run.t_gap", "required unless run.lags is given"));
                }
                k_se(run, 3.0);
            }
            Command::HolderScan => {
                run.source.get_or_insert(HolderSource::Sheet);
                let alpha = *run.alpha.get_or_insert(2.0);
                run.lags.get_or_insert_with(|| dyadic_lags(&self.grid));
                run.slope_range
                    .get_or_insert((alpha / 2.0 - 0.15, alpha / 2.0 + 0.15));
            }
            Command::SolveHyperbolic => {
                let system = *run.system.get_or_insert(SystemPreset::Sheet);
                if system == SystemPreset::Goursat {
                    run.lambda.get_or_insert(1.0);
                    run.noise.get_or_insert(0.0);
                }
            }
            Command::SampleOu => {
                run.sampler.get_or_insert(OuSampler::Exact);
            }
            Command::SimulateSheet => {
                if run.probes.is_none() {
                    let (s, t) = (self.grid.n_s as f64 * self.grid.ds, self.grid.n_t as f64 * self.grid.dt);
                    let (hs, ht) = ((self.grid.n_s / 2) as f64 * self.grid.ds, (self.grid.n_t / 2) as f64 * self.grid.dt);
                    run.probes = Some(vec![((s, t), (s, t)), ((hs, ht), (s, t)), ((hs, t), (s, ht))]);
                }
                k_se(run, 4.0);
            }
            Command::VerifyRules => {}
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON of the config without the output
    /// section and the worker count, neither of which changes results.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output");
            if let Some(mc) = obj.get_mut("mc").and_then(|m| m.as_object_mut()) {
                mc.remove("workers");
            }
        }
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn fields(&self) -> Result<PolynomialFields> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::config("model", "required by this command"))?;
        PolynomialFields::new(FieldTable {
            d: model.d.unwrap_or(0),
            m: model.m.unwrap_or(0),
            fields: model.fields.clone().unwrap_or_default(),
            bound: model.bound,
        })
    }

    pub fn x0(&self) -> Vec<f64> {
        self.model.as_ref().and_then(|m| m.x0.clone()).unwrap_or_default()
    }
}
