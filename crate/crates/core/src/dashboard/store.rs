use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;

use crate::dsl::Model;

use super::{apply_mutation, Dashboard, DashboardError, Mutation, Widget};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DashboardSummary {
    pub id: String,
    pub name: String,
    pub version: u64,
    pub widgets: usize,
}

#[derive(Debug, Clone)]
pub struct MutationOutcome {
    pub dashboard: Arc<Dashboard>,
    /// Id of the widget created by `add_widget`.
    pub widget_id: Option<String>,
}

/// Dashboards keyed by id, persisted as `<dir>/<id>.json` when a directory
/// is configured. Mutations are serialized; readers get `Arc` snapshots.
pub struct DashboardStore {
    dir: Option<PathBuf>,
    dashboards: RwLock<BTreeMap<String, Arc<Dashboard>>>,
    writer: Mutex<()>,
}

fn io(op: &'static str, path: &Path) -> impl FnOnce(std::io::Error) -> DashboardError {
    let path = path.to_path_buf();
    move |source| DashboardError::Io { op, path, source }
}

impl Default for DashboardStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl DashboardStore {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            dashboards: RwLock::new(BTreeMap::new()),
            writer: Mutex::new(()),
        }
    }

    /// Loads every `*.json` dashboard under `dir` (created if absent).
    pub fn open(dir: &Path) -> Result<Self, DashboardError> {
        fs::create_dir_all(dir).map_err(io("create directory", dir))?;
        let mut dashboards = BTreeMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io("read directory", dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(io("read dashboard", &path))?;
            let d: Dashboard = serde_json::from_str(&text).map_err(|e| {
                DashboardError::Invalid(format!("{}: {e}", path.display()))
            })?;
            dashboards.insert(d.id.clone(), Arc::new(d));
        }
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            dashboards: RwLock::new(dashboards),
            writer: Mutex::new(()),
        })
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Arc<Dashboard>>> {
        self.dashboards.read().unwrap_or_else(|e| e.into_inner())
    }

    fn lock_writer(&self) -> std::sync::MutexGuard<'_, ()> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn persist(&self, d: &Dashboard) -> Result<(), DashboardError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(format!("{}.json", d.id));
        let tmp = dir.join(format!(".{}.json.tmp", d.id));
        let mut text = serde_json::to_string_pretty(d).expect("dashboard serializes");
        text.push('\n');
        fs::write(&tmp, text).map_err(io("write dashboard", &tmp))?;
        fs::rename(&tmp, &path).map_err(io("replace dashboard", &path))
    }

    fn publish(&self, d: Dashboard) -> Result<Arc<Dashboard>, DashboardError> {
        self.persist(&d)?;
        let d = Arc::new(d);
        self.dashboards
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(d.id.clone(), d.clone());
        Ok(d)
    }

    pub fn list(&self) -> Vec<DashboardSummary> {
        self.read()
            .values()
            .map(|d| DashboardSummary {
                id: d.id.clone(),
                name: d.name.clone(),
                version: d.version,
                widgets: d.widgets.len(),
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<Arc<Dashboard>> {
        self.read().get(id).cloned()
    }

    /// Creates an empty dashboard with a fresh id (`d1`, `d2`, ...).
    pub fn create(&self, name: &str) -> Result<Arc<Dashboard>, DashboardError> {
        if name.trim().is_empty() {
            return Err(DashboardError::Invalid("dashboard name is empty".into()));
        }
        let _w = self.lock_writer();
        let map = self.read();
        let id = (1u64..)
            .map(|n| format!("d{n}"))
            .find(|id| !map.contains_key(id))
            .expect("unbounded id space");
        drop(map);
        self.publish(Dashboard::new(id, name))
    }

    /// Stores a complete dashboard under its own id, e.g. the generated
    /// default. Fails if the id is taken.
    pub fn insert(&self, dashboard: Dashboard) -> Result<Arc<Dashboard>, DashboardError> {
        let valid_id = !dashboard.id.is_empty()
            && dashboard
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !valid_id {
            return Err(DashboardError::Invalid(format!(
                "invalid dashboard id `{}`",
                dashboard.id
            )));
        }
        let _w = self.lock_writer();
        if self.read().contains_key(&dashboard.id) {
            return Err(DashboardError::AlreadyExists(dashboard.id));
        }
        self.publish(dashboard)
    }

    /// Applies a mutation if `expected_version` matches the stored version.
    pub fn mutate(
        &self,
        id: &str,
        expected_version: u64,
        mutation: &Mutation,
        model: &Model,
    ) -> Result<MutationOutcome, DashboardError> {
        let _w = self.lock_writer();
        let current = self
            .get(id)
            .ok_or_else(|| DashboardError::NotFound(id.to_string()))?;
        if current.version != expected_version {
            return Err(DashboardError::Conflict {
                expected: expected_version,
                current: Box::new((*current).clone()),
            });
        }
        let (next, widget_id) = apply_mutation(&current, mutation, model)?;
        Ok(MutationOutcome {
            dashboard: self.publish(next)?,
            widget_id,
        })
    }

    pub fn delete(&self, id: &str, expected_version: Option<u64>) -> Result<(), DashboardError> {
        let _w = self.lock_writer();
        let current = self
            .get(id)
            .ok_or_else(|| DashboardError::NotFound(id.to_string()))?;
        if let Some(expected) = expected_version {
            if expected != current.version {
                return Err(DashboardError::Conflict {
                    expected,
                    current: Box::new((*current).clone()),
                });
            }
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{id}.json"));
            fs::remove_file(&path).map_err(io("remove dashboard", &path))?;
        }
        self.dashboards
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(id);
        Ok(())
    }

    /// Finds a widget by its globally unique id.
    pub fn find_widget(&self, widget_id: &str) -> Option<(Arc<Dashboard>, Widget)> {
        self.read().values().find_map(|d| {
            d.widget(widget_id)
                .map(|w| (d.clone(), w.clone()))
        })
    }
}
