//! Experiment configuration: a TOML (or JSON) document, command-line overrides, and
//! validation that reports the offending field path.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lnml_core::data::{LabelColumn, PcaRetain};
use lnml_core::eval::TrainProcedure;
use lnml_core::pipeline::{GridSearch, Method, Pipeline, Preprocessing};
use lnml_core::{LmnnConfig, McmlConfig, NeighborhoodBudget};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, CliResult};

/// Target-neighbor count used when a method does not set one.
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub preprocessing: PreprocessingSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<LabelColumn>,
    #[serde(default = "yes")]
    pub header: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessingSection {
    /// z-score features before metric learning; on unless turned off.
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaSetting>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Folds of the inner cross-validation used to pick grid points.
    #[serde(default = "default_inner_folds")]
    pub inner_folds: usize,
    /// Significance level of the pairwise McNemar tests.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Neighbors consulted by the classifier.
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
}

impl Default for PreprocessingSection {
    fn default() -> Self {
        Self { standardize: true, pca: None }
    }
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            folds: default_folds(),
            seed: 0,
            inner_folds: default_inner_folds(),
            alpha: default_alpha(),
            neighbors: default_neighbors(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

fn yes() -> bool {
    true
}
fn default_folds() -> usize {
    10
}
fn default_inner_folds() -> usize {
    2
}
fn default_alpha() -> f64 {
    0.05
}
fn default_neighbors() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Euclidean,
    Lmnn,
    LnLmnn,
    Mcml,
    LnMcml,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Euclidean => "euclidean",
            Self::Lmnn => "lmnn",
            Self::LnLmnn => "ln-lmnn",
            Self::Mcml => "mcml",
            Self::LnMcml => "ln-mcml",
        }
    }

    fn alternating(self) -> bool {
        matches!(self, Self::LnLmnn | Self::LnMcml)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Self::Euclidean),
            "lmnn" => Ok(Self::Lmnn),
            "ln-lmnn" => Ok(Self::LnLmnn),
            "mcml" => Ok(Self::Mcml),
            "ln-mcml" => Ok(Self::LnMcml),
            other => Err(format!("unknown method `{other}` (expected euclidean, lmnn, ln-lmnn, mcml or ln-mcml)")),
        }
    }
}

/// Candidate values for budget selection by inner cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetGrid {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_min: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_max: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_av: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Overrides `preprocessing.standardize` for this method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
    /// Target neighbors of plain LMNN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<NeighborhoodBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<BudgetGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmnn: Option<LmnnConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcml: Option<McmlConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_tol: Option<f64>,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            name: None,
            standardize: None,
            k: None,
            budget: None,
            grid: None,
            lmnn: None,
            mcml: None,
            max_outer_iters: None,
            outer_tol: None,
        }
    }

    /// Name shown in reports.
    pub fn display_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match (self.kind, &self.grid, &self.budget, self.k) {
            (kind, Some(_), _, _) => format!("{kind}(cv)"),
            (MethodKind::Lmnn, None, _, Some(k)) => format!("lmnn(k={k})"),
            (MethodKind::LnMcml, None, Some(b), _) => format!("ln-mcml(k_av={})", b.k_av),
            (MethodKind::LnLmnn, None, Some(b), _) => format!("ln-lmnn{b}"),
            (kind, ..) => kind.to_string(),
        }
    }
}

/// PCA retention written as a component count or `"var:<fraction>"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaSetting(pub PcaRetain);

impl FromStr for PcaSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(frac) = s.strip_prefix("var:") {
            let v: f64 = frac.parse().map_err(|_| format!("`{s}`: variance fraction is not a number"))?;
            return Ok(Self(PcaRetain::Variance(v)));
        }
        s.parse::<usize>()
            .map(|c| Self(PcaRetain::Components(c)))
            .map_err(|_| format!("`{s}`: expected a component count or var:<fraction>"))
    }
}

impl fmt::Display for PcaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            PcaRetain::Components(c) => write!(f, "{c}"),
            PcaRetain::Variance(v) => write!(f, "var:{v}"),
        }
    }
}

impl Serialize for PcaSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            PcaRetain::Components(c) => s.serialize_u64(c as u64),
            PcaRetain::Variance(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for PcaSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(c) => Ok(Self(PcaRetain::Components(c))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Values given on the command line; each one replaces the corresponding config entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub label_column: Option<LabelColumn>,
    pub methods: Option<Vec<MethodKind>>,
    pub k_min: Option<Vec<usize>>,
    pub k_max: Option<Vec<usize>>,
    pub k_av: Option<Vec<usize>>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub pca: Option<PcaSetting>,
    pub standardize: Option<bool>,
}

impl ExperimentConfig {
    /// Reads a config file; `.json` files are parsed as JSON (for example the resolved
    /// config embedded in a report), everything else as TOML. Relative paths inside the
    /// file are taken relative to the file's directory.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let mut config = Self::parse_file(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.dataset.path);
        for p in [&mut config.output.report, &mut config.output.table, &mut config.output.model].into_iter().flatten() {
            rebase(p);
        }
        Ok(config)
    }

    fn parse_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::validation("<config>", e.to_string()))?;
            // a whole report is accepted too
            let value = match value.get("config") {
                Some(inner) if value.get("report_version").is_some() => inner.clone(),
                _ => value,
            };
            serde_json::from_value(value).map_err(|e| CliError::validation("<config>", e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| {
                let field = e.span().map(|s| locate(&text, s.start)).unwrap_or_else(|| "<config>".into());
                CliError::validation(field, e.message().to_string())
            })
        }
    }

    /// A config built from flags alone.
    pub fn from_dataset(path: PathBuf) -> Self {
        Self {
            dataset: DatasetSection { path, label_column: None, header: true },
            preprocessing: PreprocessingSection::default(),
            protocol: ProtocolSection::default(),
            output: OutputSection::default(),
            methods: Vec::new(),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.dataset {
            self.dataset.path = p.clone();
        }
        if let Some(l) = &o.label_column {
            self.dataset.label_column = Some(l.clone());
        }
        if let Some(kinds) = &o.methods {
            self.methods = kinds.iter().map(|&k| MethodSpec::new(k)).collect();
        }
        if let Some(f) = o.folds {
            self.protocol.folds = f;
        }
        if let Some(s) = o.seed {
            self.protocol.seed = s;
        }
        if let Some(p) = o.pca {
            self.preprocessing.pca = Some(p);
        }
        if let Some(s) = o.standardize {
            self.preprocessing.standardize = s;
        }
        if o.k_min.is_none() && o.k_max.is_none() && o.k_av.is_none() {
            return;
        }
        for spec in &mut self.methods {
            apply_budget_flags(spec, o);
        }
    }

    /// Fills every default explicitly so the result is self-describing.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        for spec in &mut out.methods {
            match spec.kind {
                MethodKind::Euclidean => {}
                MethodKind::Lmnn => {
                    spec.lmnn.get_or_insert_with(LmnnConfig::default);
                    if spec.grid.is_none() {
                        spec.k.get_or_insert(DEFAULT_K);
                    }
                }
                MethodKind::Mcml => {
                    spec.mcml.get_or_insert_with(McmlConfig::default);
                }
                MethodKind::LnLmnn | MethodKind::LnMcml => {
                    if spec.kind == MethodKind::LnLmnn {
                        spec.lmnn.get_or_insert_with(LmnnConfig::default);
                    } else {
                        spec.mcml.get_or_insert_with(McmlConfig::default);
                    }
                    if spec.grid.is_none() {
                        spec.budget.get_or_insert(NeighborhoodBudget { k_min: DEFAULT_K, k_max: DEFAULT_K, k_av: DEFAULT_K });
                    }
                    let defaults = lnml_core::LnmlConfig::new(
                        lnml_core::Learner::Lmnn(LmnnConfig::default()),
                        NeighborhoodBudget { k_min: 1, k_max: 1, k_av: 1 },
                    );
                    spec.max_outer_iters.get_or_insert(defaults.max_outer_iters);
                    spec.outer_tol.get_or_insert(defaults.outer_tol);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.dataset.label_column.is_none() {
            return Err(CliError::validation("dataset.label_column", "required (column name or zero-based index)"));
        }
        if !self.dataset.path.is_file() {
            return Err(CliError::validation(
                "dataset.path",
                format!("{} does not exist or is not a file", self.dataset.path.display()),
            ));
        }
        if let Some(PcaSetting(retain)) = self.preprocessing.pca {
            match retain {
                PcaRetain::Components(0) => return Err(CliError::validation("preprocessing.pca", "component count must be positive")),
                PcaRetain::Variance(v) if !(v > 0.0 && v <= 1.0) => {
                    return Err(CliError::validation("preprocessing.pca", format!("variance fraction {v} is outside (0, 1]")))
                }
                _ => {}
            }
        }
        let p = &self.protocol;
        if p.folds < 2 {
            return Err(CliError::validation("protocol.folds", "need at least 2 folds"));
        }
        if p.inner_folds < 2 {
            return Err(CliError::validation("protocol.inner_folds", "need at least 2 folds"));
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(CliError::validation("protocol.alpha", format!("{} is outside (0, 1)", p.alpha)));
        }
        if p.neighbors == 0 {
            return Err(CliError::validation("protocol.neighbors", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(CliError::validation("methods", "at least one method is required"));
        }
        for (i, spec) in self.methods.iter().enumerate() {
            validate_method(spec, &format!("methods[{i}]"))?;
        }
        Ok(())
    }

    /// The training procedure of method `index`, after defaults are filled in.
    pub fn procedure(&self, index: usize) -> CliResult<Box<dyn TrainProcedure<f64>>> {
        let mut candidates = self.candidates(index)?;
        if candidates.len() == 1 {
            return Ok(Box::new(candidates.pop().unwrap().1));
        }
        Ok(Box::new(GridSearch {
            candidates: candidates.into_iter().map(|(l, p)| (l, Box::new(p) as Box<dyn TrainProcedure<f64>>)).collect(),
            inner_folds: self.protocol.inner_folds,
            seed: self.protocol.seed,
        }))
    }

    /// Labeled pipelines of method `index`: one for a fixed setting, several for a grid.
    pub fn candidates(&self, index: usize) -> CliResult<Vec<(String, Pipeline)>> {
        let field = format!("methods[{index}]");
        let spec = self.resolved().methods.get(index).cloned().ok_or_else(|| CliError::validation(&field, "no such method"))?;
        validate_method(&spec, &field)?;
        let preprocessing = Preprocessing {
            standardize: spec.standardize.unwrap_or(self.preprocessing.standardize),
            pca: self.preprocessing.pca.map(|p| p.0),
        };
        let make = |method: Method| {
            let mut p = Pipeline::new(method, preprocessing);
            p.k = self.protocol.neighbors;
            p
        };
        let lmnn = spec.lmnn.unwrap_or_default();
        let mcml = spec.mcml.unwrap_or_default();
        let lnml = |learner: lnml_core::Learner, budget: NeighborhoodBudget| {
            let mut cfg = lnml_core::LnmlConfig::new(learner, budget);
            if let Some(it) = spec.max_outer_iters {
                cfg.max_outer_iters = it;
            }
            if let Some(tol) = spec.outer_tol {
                cfg.outer_tol = tol;
            }
            cfg
        };
        let out = match spec.kind {
            MethodKind::Euclidean => vec![("euclidean".to_string(), make(Method::Euclidean))],
            MethodKind::Mcml => vec![("mcml".to_string(), make(Method::Mcml { config: mcml }))],
            MethodKind::Lmnn => match &spec.grid {
                Some(g) => g.k_av.iter().map(|&k| (format!("k={k}"), make(Method::Lmnn { config: lmnn, k }))).collect(),
                None => {
                    let k = spec.k.unwrap_or(DEFAULT_K);
                    vec![(format!("k={k}"), make(Method::Lmnn { config: lmnn, k }))]
                }
            },
            MethodKind::LnLmnn => budgets(&spec)
                .into_iter()
                .map(|b| (format!("budget {b}"), make(Method::LnLmnn { config: lnml(lnml_core::Learner::Lmnn(lmnn), b) })))
                .collect(),
            MethodKind::LnMcml => budgets(&spec)
                .into_iter()
                .map(|b| (format!("k_av={}", b.k_av), make(Method::LnMcml { config: lnml(lnml_core::Learner::Mcml(mcml), b) })))
                .collect(),
        };
        Ok(out)
    }
}

/// Budgets of an alternating method: the fixed one, or the grid's cross product filtered
/// to `k_min ≤ k_av ≤ k_max`. A grid without `k_min`/`k_max` means uniform budgets.
fn budgets(spec: &MethodSpec) -> Vec<NeighborhoodBudget> {
    let Some(g) = &spec.grid else {
        return spec.budget.into_iter().collect();
    };
    let fixed = spec.budget;
    let k_avs: Vec<usize> = if g.k_av.is_empty() { fixed.map(|b| vec![b.k_av]).unwrap_or_else(|| vec![DEFAULT_K]) } else { g.k_av.clone() };
    let mut out = Vec::new();
    for &k_av in &k_avs {
        if g.k_min.is_empty() && g.k_max.is_empty() {
            out.push(NeighborhoodBudget { k_min: k_av, k_max: k_av, k_av });
            continue;
        }
        let mins = if g.k_min.is_empty() { vec![k_av] } else { g.k_min.clone() };
        let maxs = if g.k_max.is_empty() { vec![k_av] } else { g.k_max.clone() };
        for &k_min in &mins {
            for &k_max in &maxs {
                let b = NeighborhoodBudget { k_min, k_max, k_av };
                if b.validate().is_ok() && !out.contains(&b) {
                    out.push(b);
                }
            }
        }
    }
    out
}

fn validate_method(spec: &MethodSpec, field: &str) -> CliResult<()> {
    let kind = spec.kind;
    let misplaced = |name: &str| CliError::validation(format!("{field}.{name}"), format!("not used by {kind}"));
    if spec.lmnn.is_some() && !matches!(kind, MethodKind::Lmnn | MethodKind::LnLmnn) {
        return Err(misplaced("lmnn"));
    }
    if spec.mcml.is_some() && !matches!(kind, MethodKind::Mcml | MethodKind::LnMcml) {
        return Err(misplaced("mcml"));
    }
    if spec.k.is_some() && kind != MethodKind::Lmnn {
        return Err(misplaced("k"));
    }
    if spec.budget.is_some() && !kind.alternating() {
        return Err(misplaced("budget"));
    }
    if spec.grid.is_some() && matches!(kind, MethodKind::Euclidean | MethodKind::Mcml) {
        return Err(misplaced("grid"));
    }
    if (spec.max_outer_iters.is_some() || spec.outer_tol.is_some()) && !kind.alternating() {
        return Err(misplaced(if spec.max_outer_iters.is_some() { "max_outer_iters" } else { "outer_tol" }));
    }
    if let Some(cfg) = &spec.lmnn {
        cfg.validate().map_err(|e| CliError::validation(format!("{field}.lmnn"), e.to_string()))?;
    }
    if let Some(cfg) = &spec.mcml {
        cfg.validate().map_err(|e| CliError::validation(format!("{field}.mcml"), e.to_string()))?;
    }
    if spec.k == Some(0) {
        return Err(CliError::validation(format!("{field}.k"), "must be at least 1"));
    }
    if let Some(b) = &spec.budget {
        b.validate().map_err(|e| CliError::validation(format!("{field}.budget"), e.to_string()))?;
        if kind == MethodKind::LnMcml && !b.is_uniform() {
            return Err(CliError::validation(format!("{field}.budget"), format!("ln-mcml needs k_min = k_max = k_av, got {b}")));
        }
    }
    if let Some(tol) = spec.outer_tol {
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(CliError::validation(format!("{field}.outer_tol"), "must be finite and nonnegative"));
        }
    }
    if let Some(g) = &spec.grid {
        let gfield = format!("{field}.grid");
        for (name, values) in [("k_min", &g.k_min), ("k_max", &g.k_max), ("k_av", &g.k_av)] {
            if values.contains(&0) && name != "k_min" {
                return Err(CliError::validation(format!("{gfield}.{name}"), "values must be at least 1"));
            }
        }
        match kind {
            MethodKind::Lmnn => {
                if g.k_av.is_empty() {
                    return Err(CliError::validation(format!("{gfield}.k_av"), "lmnn grids list target counts in k_av"));
                }
                if !g.k_min.is_empty() || !g.k_max.is_empty() {
                    return Err(CliError::validation(gfield, "lmnn grids take only k_av"));
                }
            }
            MethodKind::LnMcml => {
                if g.k_av.is_empty() {
                    return Err(CliError::validation(format!("{gfield}.k_av"), "must be non-empty"));
                }
                if !g.k_min.is_empty() || !g.k_max.is_empty() {
                    return Err(CliError::validation(gfield, "ln-mcml budgets are uniform; give only k_av"));
                }
            }
            MethodKind::LnLmnn => {
                if g.k_min.is_empty() && g.k_max.is_empty() && g.k_av.is_empty() {
                    return Err(CliError::validation(gfield, "grid is empty"));
                }
                if budgets(spec).is_empty() {
                    return Err(CliError::validation(gfield, "no (k_min, k_max, k_av) combination satisfies k_min <= k_av <= k_max"));
                }
            }
            MethodKind::Euclidean | MethodKind::Mcml => unreachable!(),
        }
    }
    Ok(())
}

/// Command-line budget lists: a single value sets the fixed budget, several values make a grid.
fn apply_budget_flags(spec: &mut MethodSpec, o: &Overrides) {
    let many = |v: &Option<Vec<usize>>| v.as_ref().is_some_and(|v| v.len() > 1);
    let one = |v: &Option<Vec<usize>>| v.as_ref().and_then(|v| (v.len() == 1).then(|| v[0]));
    match spec.kind {
        MethodKind::Lmnn => {
            if many(&o.k_av) {
                spec.grid = Some(BudgetGrid { k_av: o.k_av.clone().unwrap(), ..BudgetGrid::default() });
                spec.k = None;
            } else if let Some(k) = one(&o.k_av) {
                spec.k = Some(k);
                spec.grid = None;
            }
        }
        MethodKind::LnMcml => {
            if many(&o.k_av) {
                spec.grid = Some(BudgetGrid { k_av: o.k_av.clone().unwrap(), ..BudgetGrid::default() });
                spec.budget = None;
            } else if let Some(k) = one(&o.k_av) {
                spec.budget = Some(NeighborhoodBudget { k_min: k, k_max: k, k_av: k });
                spec.grid = None;
            }
        }
        MethodKind::LnLmnn => {
            let base = spec.budget.unwrap_or(NeighborhoodBudget { k_min: DEFAULT_K, k_max: DEFAULT_K, k_av: DEFAULT_K });
            if many(&o.k_min) || many(&o.k_max) || many(&o.k_av) {
                let grid = spec.grid.get_or_insert_with(BudgetGrid::default);
                let pick = |flag: &Option<Vec<usize>>, old: &Vec<usize>, fallback: usize| {
                    flag.clone().unwrap_or_else(|| if old.is_empty() { vec![fallback] } else { old.clone() })
                };
                *grid = BudgetGrid {
                    k_min: pick(&o.k_min, &grid.k_min, base.k_min),
                    k_max: pick(&o.k_max, &grid.k_max, base.k_max),
                    k_av: pick(&o.k_av, &grid.k_av, base.k_av),
                };
            } else {
                spec.budget = Some(NeighborhoodBudget {
                    k_min: one(&o.k_min).unwrap_or(base.k_min),
                    k_max: one(&o.k_max).unwrap_or(base.k_max),
                    k_av: one(&o.k_av).unwrap_or(base.k_av),
                });
                spec.grid = None;
            }
        }
        MethodKind::Euclidean | MethodKind::Mcml => {}
    }
}

/// Dotted path of the TOML key enclosing byte offset `pos`, best effort.
fn locate(text: &str, pos: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut method_index: Option<usize> = None;
    let mut offset = 0;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")) {
            method_index = Some(method_index.map_or(0, |i| i + 1));
            table = format!("{}[{}]", name.trim(), method_index.unwrap());
            key.clear();
        } else if let Some(name) = trimmed.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            table = match (name.strip_prefix("methods."), method_index) {
                (Some(sub), Some(i)) => format!("methods[{i}].{sub}"),
                _ => name.to_string(),
            };
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        if offset + line.len() >= pos {
            break;
        }
        offset += line.len() + 1;
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "<config>".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_setting_forms() {
        assert_eq!("var:0.95".parse::<PcaSetting>().unwrap().0, PcaRetain::Variance(0.95));
        assert_eq!("12".parse::<PcaSetting>().unwrap().0, PcaRetain::Components(12));
        assert!("many".parse::<PcaSetting>().is_err());
    }

    #[test]
    fn budget_grid_filtered() {
        let mut spec = MethodSpec::new(MethodKind::LnLmnn);
        spec.grid = Some(BudgetGrid { k_min: vec![1, 4, 3], k_max: vec![2, 5, 3], k_av: vec![3] });
        let got: Vec<(usize, usize)> = budgets(&spec).iter().map(|b| (b.k_min, b.k_max)).collect();
        assert_eq!(got, vec![(1, 5), (1, 3), (3, 5), (3, 3)]);
    }

    #[test]
    fn uniform_grid_for_ln_mcml() {
        let mut spec = MethodSpec::new(MethodKind::LnMcml);
        spec.grid = Some(BudgetGrid { k_av: vec![3, 5], ..BudgetGrid::default() });
        assert!(budgets(&spec).iter().all(NeighborhoodBudget::is_uniform));
        assert_eq!(budgets(&spec).len(), 2);
    }

    #[test]
    fn toml_error_names_the_field() {
        let text = "[dataset]\npath = \"x.csv\"\n\n[protocol]\nfolds = \"ten\"\n";
        let err = toml::from_str::<ExperimentConfig>(text).unwrap_err();
        assert_eq!(locate(text, err.span().unwrap().start), "protocol.folds");
    }

    #[test]
    fn flags_turn_lists_into_grids() {
        let mut cfg = ExperimentConfig::from_dataset("d.csv".into());
        cfg.apply(&Overrides {
            methods: Some(vec![MethodKind::LnLmnn, MethodKind::LnMcml]),
            k_min: Some(vec![1, 3]),
            k_av: Some(vec![3]),
            ..Overrides::default()
        });
        assert_eq!(cfg.methods[0].grid.as_ref().unwrap().k_min, vec![1, 3]);
        assert_eq!(cfg.methods[1].budget, Some(NeighborhoodBudget { k_min: 3, k_max: 3, k_av: 3 }));
    }
}
