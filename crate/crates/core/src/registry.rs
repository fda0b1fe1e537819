//! Preference registry: global preferences, device description and
//! per-application entries in the key/value format of [`crate::kv`].
//!
//! ```text
//! [global]
//! e_c = 0.6
//! s_m = 600
//! s_c = 2200
//! beta_u = 1000000
//! beta_d = 2000000
//! b_t = 0
//!
//! [app:matmul700]
//! task = matmul n=700 seed=42
//! alpha = 7840000
//! gamma = 3920000
//! ```
//!
//! Defaults for absent keys: `e_i = e_c / 6`, `e_t = 1.0`, `e_r = 0.8`,
//! `b_t = 0`, no cost bound; per app `i` = the catalog estimate for the
//! task, `p_f = normal`, `p_t = aware`, `interval_s = 1.0`. The `[device]`
//! section is optional and carries the client id, architecture tag and the
//! platform tags sent when asking a server for admission.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::decision::{
    AppPreferences, DecisionError, GlobalPreferences, MigrationType, OffloadFlag, ServerCriteria,
};
use crate::kv::{Document, KvError, Section};
use crate::tasks::TaskSpec;

pub const APP_PREFIX: &str = "app:";
pub const DEFAULT_ARCH: &str = "portable";
pub const DEFAULT_PLATFORM: &str = "matmul-catalog";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry not found: {0}")]
    NotFound(PathBuf),
    #[error("registry parse error at {0}")]
    Parse(#[from] KvError),
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: DecisionError,
    },
    #[error("registry i/o: {0}")]
    Io(#[from] io::Error),
}

/// Identity and capabilities a client presents to edge servers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceInfo {
    pub client_id: String,
    pub arch: String,
    pub platforms: Vec<String>,
}

impl Default for DeviceInfo {
    fn default() -> Self {
        Self {
            client_id: "client".into(),
            arch: DEFAULT_ARCH.into(),
            platforms: vec![DEFAULT_PLATFORM.into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRegistry {
    pub global: GlobalPreferences,
    pub device: DeviceInfo,
    apps: Vec<AppPreferences>,
}

/// Which entries [`PreferenceRegistry::next_candidate`] yields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateFilter {
    All,
    /// Skips entries whose offload flag is `disabled`.
    OffloadCandidates,
}

/// Position in the app list. A fresh cursor starts a new epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Cursor(usize);

impl PreferenceRegistry {
    pub fn new(global: GlobalPreferences) -> Self {
        Self {
            global,
            device: DeviceInfo::default(),
            apps: Vec::new(),
        }
    }

    pub fn apps(&self) -> &[AppPreferences] {
        &self.apps
    }

    pub fn app(&self, app_id: &str) -> Option<&AppPreferences> {
        self.apps.iter().find(|a| a.app_id == app_id)
    }

    /// Adds an entry; `false` if the id is already taken.
    pub fn insert(&mut self, app: AppPreferences) -> Result<bool, DecisionError> {
        app.validate()?;
        if self.app(&app.app_id).is_some() {
            return Ok(false);
        }
        self.apps.push(app);
        Ok(true)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => RegistryError::NotFound(path.to_path_buf()),
            _ => RegistryError::Io(e),
        })?;
        Self::parse(&text)
    }

    pub fn store(&self, path: &Path) -> Result<(), RegistryError> {
        fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let doc = Document::parse(text)?;
        let global_section = doc
            .section("global")
            .ok_or_else(|| KvError::new(1, "missing [global] section"))?;
        let global = parse_global(global_section)?;
        let device = match doc.section("device") {
            Some(s) => parse_device(s)?,
            None => DeviceInfo::default(),
        };
        let mut apps: Vec<AppPreferences> = Vec::new();
        for section in &doc.sections {
            match section.name.as_str() {
                "global" | "device" => {}
                name => match name.strip_prefix(APP_PREFIX) {
                    Some(id) if !id.trim().is_empty() => {
                        apps.push(parse_app(id.trim(), section)?);
                    }
                    _ => {
                        return Err(KvError::new(
                            section.line,
                            format!("unknown section [{name}]"),
                        )
                        .into())
                    }
                },
            }
        }
        for (idx, app) in apps.iter().enumerate() {
            if apps[..idx].iter().any(|a| a.app_id == app.app_id) {
                let line = doc
                    .sections
                    .iter()
                    .filter(|s| s.name.strip_prefix(APP_PREFIX).map(str::trim) == Some(&app.app_id))
                    .nth(1)
                    .map(|s| s.line)
                    .unwrap_or(0);
                return Err(KvError::new(line, format!("duplicate app `{}`", app.app_id)).into());
            }
        }
        Ok(Self {
            global,
            device,
            apps,
        })
    }

    pub fn to_document(&self) -> Document {
        let g = &self.global;
        let mut global = Section::new("global");
        global.push("e_c", g.e_c);
        global.push("e_i", g.e_i);
        global.push("e_t", g.e_t);
        global.push("e_r", g.e_r);
        global.push("s_m", g.s_m);
        global.push("s_c", g.s_c);
        global.push("beta_u", g.beta_u);
        global.push("beta_d", g.beta_d);
        global.push("b_t", g.b_t);
        if let Some(cost) = g.server_criteria.max_cost {
            global.push("max_cost", cost);
        }
        let mut device = Section::new("device");
        device.push("client_id", &self.device.client_id);
        device.push("arch", &self.device.arch);
        device.push("platforms", self.device.platforms.join(", "));
        let mut sections = vec![global, device];
        for app in &self.apps {
            let mut s = Section::new(format!("{APP_PREFIX}{}", app.app_id));
            s.push("task", &app.task);
            s.push("i", app.i);
            s.push("alpha", app.alpha);
            s.push("gamma", app.gamma);
            s.push("p_f", app.p_f);
            s.push("p_t", app.p_t);
            s.push("interval_s", app.interval_s);
            sections.push(s);
        }
        Document { sections }
    }

    /// Next entry at or after `cursor` that passes `filter`, in declaration
    /// order. `None` ends the epoch; start again from `Cursor::default()`.
    pub fn next_candidate(
        &self,
        cursor: Cursor,
        filter: CandidateFilter,
    ) -> Option<(&AppPreferences, Cursor)> {
        self.apps
            .iter()
            .enumerate()
            .skip(cursor.0)
            .find(|(_, a)| filter == CandidateFilter::All || a.p_f != OffloadFlag::Disabled)
            .map(|(idx, a)| (a, Cursor(idx + 1)))
    }
}

impl std::fmt::Display for PreferenceRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.to_document().fmt(f)
    }
}

fn invalid(line: usize) -> impl FnOnce(DecisionError) -> RegistryError {
    move |source| RegistryError::Invalid { line, source }
}

fn parse_global(section: &Section) -> Result<GlobalPreferences, RegistryError> {
    let mut r = section.reader();
    let e_c: f64 = r.req("e_c")?;
    let g = GlobalPreferences {
        e_c,
        e_i: r.opt("e_i")?.unwrap_or(e_c / 6.0),
        e_t: r.opt("e_t")?.unwrap_or(1.0),
        e_r: r.opt("e_r")?.unwrap_or(0.8),
        s_m: r.req("s_m")?,
        s_c: r.req("s_c")?,
        beta_u: r.req("beta_u")?,
        beta_d: r.req("beta_d")?,
        b_t: r.opt("b_t")?.unwrap_or(0.0),
        server_criteria: ServerCriteria {
            max_cost: r.opt("max_cost")?,
        },
    };
    if let Err(e) = g.validate() {
        let DecisionError::InvalidParameter { name, .. } = &e;
        return Err(invalid(r.line_of(name))(e));
    }
    r.finish()?;
    Ok(g)
}

fn parse_device(section: &Section) -> Result<DeviceInfo, RegistryError> {
    let mut r = section.reader();
    let defaults = DeviceInfo::default();
    let platforms = if section.get("platforms").is_some() {
        r.list("platforms")
    } else {
        defaults.platforms
    };
    let d = DeviceInfo {
        client_id: r.opt("client_id")?.unwrap_or(defaults.client_id),
        arch: r.opt("arch")?.unwrap_or(defaults.arch),
        platforms,
    };
    r.finish()?;
    Ok(d)
}

fn parse_app(id: &str, section: &Section) -> Result<AppPreferences, RegistryError> {
    let mut r = section.reader();
    let task: TaskSpec = r.req("task")?;
    let app = AppPreferences {
        app_id: id.to_string(),
        i: r.opt("i")?.unwrap_or_else(|| task.approx_mi()),
        task,
        alpha: r.req("alpha")?,
        gamma: r.req("gamma")?,
        p_f: r.opt("p_f")?.unwrap_or_default(),
        p_t: r.opt::<MigrationType>("p_t")?.unwrap_or_default(),
        interval_s: r.opt("interval_s")?.unwrap_or(1.0),
    };
    if let Err(e) = app.validate() {
        let DecisionError::InvalidParameter { name, .. } = &e;
        return Err(invalid(r.line_of(name))(e));
    }
    r.finish()?;
    Ok(app)
}
