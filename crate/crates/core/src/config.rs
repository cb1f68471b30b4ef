//! Experiment configuration and the objects built from it.
//!
//! Configs are TOML; unknown keys are rejected. Powers are given in dBm and
//! converted to watts once, when the experiment is built. Every random draw
//! derives from `seed`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::LearnerState;
use crate::phy::{dbm_to_watts, PhyConfig};
use crate::reactive::Policy;
use crate::rng::{purpose, stream};
use crate::sim::{check_feasibility, ProactiveSettings, SimSetup, SweepParam};
use crate::topology::{
    CacheNode, CellLayout, HotZone, LinkModel, Point, ShadowingModel, UserDistribution,
};
use crate::traffic::{sample_event, truncation_horizon, FileSpec};
use crate::value::{analytic_table, ExactInstance, ScenarioSet, ValueTable};

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhySection {
    pub num_antennas: u32,
    pub stbc_rate: f64,
    /// Receiver noise over the band; -92 dBm is 20 MHz with a 9 dB noise figure.
    pub noise_dbm: f64,
    pub interference_dbm: f64,
    pub peak_power_dbm: f64,
    pub symbol_weight: f64,
    /// Power used when `symbol_weight` is zero; defaults to 1e-6 of peak.
    pub min_power_dbm: Option<f64>,
}

impl Default for PhySection {
    fn default() -> Self {
        Self {
            num_antennas: 8,
            stbc_rate: 0.5,
            noise_dbm: -92.0,
            interference_dbm: -79.0,
            peak_power_dbm: 46.0,
            symbol_weight: 10.0,
            min_power_dbm: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Annulus,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutSection {
    pub cell_radius: f64,
    pub pathloss_exponent: f64,
    pub service_radius: f64,
    pub placement: Placement,
    pub n_caches: usize,
    pub annulus_inner: f64,
    pub annulus_outer: f64,
    /// Cache positions for explicit placement.
    pub positions: Vec<[f64; 2]>,
}

impl Default for LayoutSection {
    fn default() -> Self {
        Self {
            cell_radius: 500.0,
            pathloss_exponent: 3.5,
            service_radius: 90.0,
            placement: Placement::Annulus,
            n_caches: 20,
            annulus_inner: 150.0,
            annulus_outer: 490.0,
            positions: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowingSection {
    pub sigma_db: f64,
    /// Truncation in standard deviations; required for feasibility checks.
    pub clip_sigmas: Option<f64>,
}

impl Default for ShadowingSection {
    fn default() -> Self {
        Self {
            sigma_db: 8.0,
            clip_sigmas: Some(3.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotZoneSpec {
    /// Center the zone on this cache node's position.
    pub at_cache: Option<usize>,
    pub center: Option<[f64; 2]>,
    pub radius: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserKind {
    Uniform,
    Hotzones,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsersSection {
    pub kind: UserKind,
    /// The uniform background takes the mass not assigned to zones.
    pub hotzones: Vec<HotZoneSpec>,
}

impl Default for UsersSection {
    fn default() -> Self {
        Self {
            kind: UserKind::Uniform,
            hotzones: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub arrival_rate: f64,
    pub lifetime: f64,
    #[serde(default)]
    pub start_time: f64,
    pub num_segments: usize,
    pub segment_bits: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableSource {
    Analytic,
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueSection {
    pub scenarios: usize,
    pub truncation_eps: f64,
    pub table: TableSource,
    /// Events replayed by the learner before simulation.
    pub learn_events: usize,
    pub learner_threshold: Option<f64>,
    /// Load the planning table from this file instead of building it.
    pub table_file: Option<String>,
}

impl Default for ValueSection {
    fn default() -> Self {
        Self {
            scenarios: 100_000,
            truncation_eps: 1e-6,
            table: TableSource::Analytic,
            learn_events: 10_000,
            learner_threshold: None,
            table_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProactiveSection {
    pub enabled: bool,
    pub period: f64,
    pub threshold: f64,
}

impl Default for ProactiveSection {
    fn default() -> Self {
        Self {
            enabled: false,
            period: 10.0,
            threshold: crate::proactive::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub policies: Vec<Policy>,
    pub seeds: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            policies: Policy::ALL.to_vec(),
            seeds: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundCheckSection {
    /// The first `n_caches` nodes of the layout form the small instance.
    pub n_caches: usize,
    pub n_segments: usize,
    pub scenarios: usize,
    pub max_stage: usize,
}

impl Default for BoundCheckSection {
    fn default() -> Self {
        Self {
            n_caches: 2,
            n_segments: 2,
            scenarios: 8,
            max_stage: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub event_log: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            event_log: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phy: PhySection,
    #[serde(default)]
    pub layout: LayoutSection,
    #[serde(default)]
    pub shadowing: ShadowingSection,
    #[serde(default)]
    pub users: UsersSection,
    pub files: Vec<FileEntry>,
    #[serde(default)]
    pub value: ValueSection,
    #[serde(default)]
    pub proactive: ProactiveSection,
    #[serde(default)]
    pub sim: SimSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub bound_check: BoundCheckSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks everything that can be checked without building the layout.
    pub fn validate(&self) -> Result<()> {
        if self.files.is_empty() {
            return Err(cfg_err("file catalog is empty"));
        }
        for (i, f) in self.files.iter().enumerate() {
            self.file_spec(i, f).validate()?;
        }
        if self.value.scenarios == 0 {
            return Err(cfg_err("value.scenarios must be positive"));
        }
        if !(self.value.truncation_eps > 0.0 && self.value.truncation_eps < 1.0) {
            return Err(cfg_err("value.truncation_eps must lie in (0, 1)"));
        }
        if self.sim.seeds == 0 {
            return Err(cfg_err("sim.seeds must be positive"));
        }
        if self.sim.policies.is_empty() {
            return Err(cfg_err("sim.policies is empty"));
        }
        if self.proactive.enabled && !(self.proactive.period > 0.0) {
            return Err(cfg_err("proactive.period must be positive"));
        }
        if self.proactive.enabled && !(self.proactive.threshold > 1.0) {
            return Err(cfg_err("proactive.threshold must exceed 1"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(cfg_err("sweep.values is empty"));
            }
            if s.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(cfg_err("sweep values must be finite and nonnegative"));
            }
        }
        if self.shadowing.clip_sigmas.is_none() && self.shadowing.sigma_db > 0.0 {
            return Err(cfg_err(
                "untruncated shadowing cannot guarantee peak-power feasibility; set shadowing.clip_sigmas",
            ));
        }
        if self.users.kind == UserKind::Uniform && !self.users.hotzones.is_empty() {
            return Err(cfg_err("users.hotzones given but users.kind is uniform"));
        }
        if self.layout.placement == Placement::Explicit
            && self.layout.positions.len() != self.layout.n_caches
        {
            return Err(cfg_err("layout.positions must list n_caches positions"));
        }
        self.phy()?;
        Ok(())
    }

    fn file_spec(&self, i: usize, f: &FileEntry) -> FileSpec {
        FileSpec {
            file_id: i,
            arrival_rate: f.arrival_rate,
            lifetime: f.lifetime,
            start_time: f.start_time,
            num_segments: f.num_segments,
            segment_bits: f.segment_bits,
        }
    }

    pub fn file_specs(&self) -> Vec<FileSpec> {
        self.files
            .iter()
            .enumerate()
            .map(|(i, f)| self.file_spec(i, f))
            .collect()
    }

    pub fn phy(&self) -> Result<PhyConfig<f64>> {
        let p = &self.phy;
        let cfg = PhyConfig::new(
            p.num_antennas,
            p.stbc_rate,
            dbm_to_watts(p.noise_dbm),
            dbm_to_watts(p.peak_power_dbm),
            p.symbol_weight,
        )?;
        match p.min_power_dbm {
            Some(m) => cfg.with_min_power(dbm_to_watts(m)),
            None => Ok(cfg),
        }
    }

    pub fn links(&self) -> Result<LinkModel> {
        Ok(LinkModel {
            shadowing: ShadowingModel::new(self.shadowing.sigma_db, self.shadowing.clip_sigmas)?,
            interference: dbm_to_watts(self.phy.interference_dbm),
        })
    }

    pub fn layout(&self) -> Result<CellLayout> {
        let l = &self.layout;
        match l.placement {
            Placement::Annulus => {
                let mut rng = stream(self.seed, 0, purpose::LAYOUT);
                CellLayout::place_on_annulus(
                    l.cell_radius,
                    l.n_caches,
                    l.annulus_inner,
                    l.annulus_outer,
                    l.service_radius,
                    l.pathloss_exponent,
                    &mut rng,
                )
            }
            Placement::Explicit => CellLayout::new(
                l.cell_radius,
                l.positions
                    .iter()
                    .map(|p| CacheNode {
                        position: Point::new(p[0], p[1]),
                        service_radius: l.service_radius,
                    })
                    .collect(),
                l.pathloss_exponent,
            ),
        }
    }

    pub fn users(&self, layout: &CellLayout) -> Result<UserDistribution> {
        match self.users.kind {
            UserKind::Uniform => Ok(UserDistribution::uniform()),
            UserKind::Hotzones => {
                let zones = self
                    .users
                    .hotzones
                    .iter()
                    .map(|z| {
                        let center = match (z.at_cache, z.center) {
                            (Some(c), None) => {
                                layout.cache_nodes().get(c).map(|n| n.position).ok_or_else(
                                    || cfg_err(format!("hot zone refers to missing cache {c}")),
                                )?
                            }
                            (None, Some(p)) => Point::new(p[0], p[1]),
                            _ => {
                                return Err(cfg_err(
                                    "each hot zone needs exactly one of at_cache or center",
                                ))
                            }
                        };
                        Ok(HotZone {
                            center,
                            radius: z.radius,
                            mass: z.mass,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let background = 1.0 - zones.iter().map(|z| z.mass).sum::<f64>();
                UserDistribution::hotzone_mixture(zones, background, layout)
            }
        }
    }

    pub fn proactive_settings(&self) -> Option<ProactiveSettings> {
        self.proactive.enabled.then_some(ProactiveSettings {
            period: self.proactive.period,
            threshold: self.proactive.threshold,
        })
    }

    /// Largest expected request count any file can see, over the sweep too.
    pub fn max_mean_requests(&self) -> f64 {
        let files = self.file_specs();
        let mut m = files
            .iter()
            .map(FileSpec::mean_requests)
            .fold(0.0, f64::max);
        if let Some(s) = &self.sweep {
            if s.param == SweepParam::LambdaT {
                m = s.values.iter().copied().fold(m, f64::max);
            }
        }
        m
    }
}

/// The physical objects of an experiment, built once from a config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub phy: PhyConfig<f64>,
    pub layout: CellLayout,
    pub users: UserDistribution,
    pub links: LinkModel,
    pub files: Vec<FileSpec>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let phy = config.phy()?;
        let layout = config.layout()?;
        let users = config.users(&layout)?;
        let links = config.links()?;
        check_feasibility(&layout, &links, &phy)?;
        Ok(Self {
            config: config.clone(),
            phy,
            layout,
            users,
            links,
            files: config.file_specs(),
        })
    }

    /// Stage horizon covering the largest expected request count.
    pub fn n_max(&self) -> Result<usize> {
        Ok(truncation_horizon(
            self.config.max_mean_requests(),
            self.config.value.truncation_eps,
        )?
        .max(1))
    }

    /// The file every table refers to; others are rescaled.
    pub fn reference_file(&self) -> &FileSpec {
        &self.files[0]
    }

    pub fn scenario_set(
        &self,
        dist: &UserDistribution,
        count: usize,
        stream_id: u64,
    ) -> Result<ScenarioSet> {
        let mut rng = stream(self.config.seed, stream_id, purpose::SCENARIOS);
        ScenarioSet::sample(count, &self.layout, dist, &self.links, &self.phy, &mut rng)
    }

    /// Table for users drawn from `dist`.
    pub fn analytic_table(&self, dist: &UserDistribution) -> Result<ValueTable<f64>> {
        let set = self.scenario_set(dist, self.config.value.scenarios, 0)?;
        let r = self.reference_file();
        let costs = set.costs::<f64>(&self.phy, r.segment_bits)?;
        Ok(analytic_table(&costs, r.num_segments, self.n_max()?))
    }

    /// Table assuming uniformly placed users.
    pub fn uniform_table(&self) -> Result<ValueTable<f64>> {
        self.analytic_table(&UserDistribution::uniform())
    }

    /// Runs the learner from `prior` over `events` synthetic requests of the
    /// reference file with users drawn from the configured distribution.
    pub fn learn(
        &self,
        prior: &ValueTable<f64>,
        events: usize,
        stream_id: u64,
    ) -> Result<LearnerState> {
        let threshold = self
            .config
            .value
            .learner_threshold
            .unwrap_or_else(|| LearnerState::default_threshold(prior));
        let mut learner = LearnerState::init(prior, threshold)?;
        let mut rng = stream(self.config.seed, stream_id, purpose::LEARNER);
        let file = self.reference_file();
        for _ in 0..events {
            let ev = sample_event(file, 0.0, &self.users, &self.layout, &self.links, &mut rng);
            learner.observe(&ev, file, &self.phy)?;
        }
        Ok(learner)
    }

    /// The table policies plan with, per `value.table` / `value.table_file`.
    pub fn planning_table(&self) -> Result<ValueTable<f64>> {
        if let Some(path) = &self.config.value.table_file {
            let t = ValueTable::load(Path::new(path))?;
            if t.n_caches() != self.layout.n_caches() {
                return Err(cfg_err(
                    "table file does not match the layout's cache count",
                ));
            }
            return Ok(t);
        }
        let uniform = self.uniform_table()?;
        match self.config.value.table {
            TableSource::Analytic => Ok(uniform),
            TableSource::Learned => Ok(self
                .learn(&uniform, self.config.value.learn_events, 0)?
                .into_table()),
        }
    }

    pub fn sim_setup(&self, table: ValueTable<f64>) -> Result<SimSetup> {
        let s = SimSetup {
            phy: self.phy,
            layout: self.layout.clone(),
            users: self.users.clone(),
            links: self.links,
            files: self.files.clone(),
            table,
            proactive: self.config.proactive_settings(),
            master_seed: self.config.seed,
        };
        s.validate()?;
        Ok(s)
    }

    /// The small exact instance used by the bound check, in rationals.
    pub fn bound_instance(&self) -> Result<ExactInstance<num_rational::BigRational>> {
        let b = &self.config.bound_check;
        if b.n_caches > self.layout.n_caches() {
            return Err(cfg_err(
                "bound_check.n_caches exceeds the layout's cache count",
            ));
        }
        let nodes = self.layout.cache_nodes()[..b.n_caches].to_vec();
        let small = CellLayout::new(
            self.layout.cell_radius(),
            nodes,
            self.layout.pathloss_exponent(),
        )?;
        let mut rng = stream(self.config.seed, 0, purpose::BOUND_CHECK);
        let set = ScenarioSet::sample(
            b.scenarios,
            &small,
            &self.users,
            &self.links,
            &self.phy,
            &mut rng,
        )?;
        let costs = set.costs(&self.phy, self.reference_file().segment_bits)?;
        ExactInstance::new(costs, b.n_segments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[[files]]
arrival_rate = 0.05
lifetime = 100.0
num_segments = 2
segment_bits = 14e6
"#;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.phy.num_antennas, 8);
        assert_eq!(cfg.layout.cell_radius, 500.0);
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{MINIMAL}\n[phy]\nnum_antenas = 4\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = format!("colour = 1\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn empty_catalog_rejected() {
        assert!(ExperimentConfig::from_toml("files = []").is_err());
    }

    #[test]
    fn dbm_converted_at_load() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let phy = cfg.phy().unwrap();
        assert!((phy.peak_power - 39.810_717_055_349_73).abs() < 1e-9);
    }

    #[test]
    fn hotzones_at_caches() {
        let text = format!(
            "{MINIMAL}\n[users]\nkind = \"hotzones\"\nhotzones = [{{ at_cache = 0, radius = 70.0, mass = 0.125 }}, {{ center = [0.0, 0.0], radius = 50.0, mass = 0.125 }}]\n"
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let exp = Experiment::build(&cfg).unwrap();
        assert_eq!(exp.users.hotzones().len(), 2);
        assert_eq!(
            exp.users.hotzones()[0].center,
            exp.layout.cache_nodes()[0].position
        );
        assert!((exp.users.background_mass() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn infeasible_config_rejected() {
        let text = format!("{MINIMAL}\n[phy]\npeak_power_dbm = -20.0\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(
            Experiment::build(&cfg),
            Err(Error::InfeasibleLink { .. })
        ));
    }
}
