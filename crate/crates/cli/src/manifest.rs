use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Plain `key=value` run record. Written with `status=running` before any
/// work starts and rewritten with the final status at the end, so a crashed
/// run leaves `running` behind.
pub struct Manifest {
    path: PathBuf,
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(out_dir: &Path, verb: &str) -> Self {
        Self {
            path: out_dir.join("manifest.txt"),
            entries: vec![("verb".into(), verb.into())],
        }
    }

    pub fn put(&mut self, key: &str, value: impl ManifestValue) -> &mut Self {
        self.entries.push((key.replace('_', "-"), value.render()));
        self
    }

    pub fn start(&self) -> Result<()> {
        self.write("running")
    }

    pub fn finish(&self, status: &str) -> Result<()> {
        self.write(status)
    }

    fn write(&self, status: &str) -> Result<()> {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "status={status}");
        fs::write(&self.path, s).with_context(|| format!("writing {}", self.path.display()))
    }
}

pub trait ManifestValue {
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl ManifestValue for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_value!(
    f64,
    usize,
    u64,
    bool,
    String,
    str,
    avis_core::RunMode,
    avis_core::TaskKind
);

impl ManifestValue for PathBuf {
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl<V: ManifestValue> ManifestValue for Option<V> {
    fn render(&self) -> String {
        self.as_ref().map(ManifestValue::render).unwrap_or_default()
    }
}

impl<V: ManifestValue> ManifestValue for Vec<V> {
    fn render(&self) -> String {
        self.iter()
            .map(ManifestValue::render)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl<V: ManifestValue + ?Sized> ManifestValue for &V {
    fn render(&self) -> String {
        (**self).render()
    }
}

/// Records every field listed, keyed by its name.
#[macro_export]
macro_rules! record {
    ($m:expr, $src:expr, $($field:ident),+ $(,)?) => {
        $( $m.put(stringify!($field), &$src.$field); )+
    };
}
