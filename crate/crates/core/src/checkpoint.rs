//! Plain-text snapshots of torus maps, sphere profiles and point clouds.
//!
//! Layout: optional `#` comment lines, `key = value` header lines, a line
//! `values`, then one whitespace-separated record per grid point (or cloud
//! point) in row-major order. Floats use the shortest decimal form that
//! reads back to the same bits.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{ChartKind, ManifoldSpec};
use crate::monitor::PointCloud;
use crate::sphere::{BoundaryKind, ProfileState};
use crate::torus::GridMap;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Torus { map: GridMap, t: f64 },
    Profile(ProfileState),
    PointCloud(PointCloud),
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Torus { .. } => "torus",
            Checkpoint::Profile(_) => "sphere_equivariant",
            Checkpoint::PointCloud(_) => "point_cloud",
        }
    }

    pub fn t(&self) -> f64 {
        match self {
            Checkpoint::Torus { t, .. } => *t,
            Checkpoint::Profile(s) => s.t,
            Checkpoint::PointCloud(c) => c.t,
        }
    }

    /// Serializes with `comment` (any number of lines) prefixed by `# `.
    pub fn to_text(&self, comment: &str) -> String {
        let mut out = String::new();
        for line in comment.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        let mut header = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        header("kind", self.kind().to_string());
        header("t", self.t().to_string());
        let rows: Vec<&[f64]> = match self {
            Checkpoint::Torus { map, .. } => {
                push_spec(&mut header, map.spec());
                header("shape", join(map.shape()));
                header("winding", join(map.winding()));
                let m = map.spec().m;
                map.values().chunks(m).collect()
            }
            Checkpoint::Profile(s) => {
                push_spec(&mut header, &s.spec());
                header("shape", s.len().to_string());
                header("boundary_kind", s.boundary().as_str().to_string());
                s.psi().chunks(1).collect()
            }
            Checkpoint::PointCloud(c) => {
                header("n", c.n().to_string());
                header("ambient_dim", c.ambient_dim().to_string());
                header("points", c.len().to_string());
                let d = c.ambient_dim();
                c.points().chunks(d).collect()
            }
        };
        out.push_str("values\n");
        let areas = match self {
            Checkpoint::PointCloud(c) => Some(c.areas()),
            _ => None,
        };
        for (k, row) in rows.iter().enumerate() {
            let mut line = join(row);
            if let Some(a) = areas {
                line.push(' ');
                line.push_str(&a[k].to_string());
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Writes through a temporary file in the same directory and renames it
    /// into place.
    pub fn write(&self, path: &Path, comment: &str) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_text(comment).as_bytes())?;
        tmp.flush()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let mut header = Vec::new();
        loop {
            let line = lines.next().ok_or_else(|| Error::Format("missing `values` line".into()))?;
            if line.trim() == "values" {
                break;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Format(format!("malformed header line `{line}`")))?;
            header.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| -> Result<&str> {
            header
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("missing header key `{key}`")))
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            rows.push(line.split_whitespace().map(parse_num).collect::<Result<_>>()?);
        }
        let t: f64 = parse_num(get("t")?)?;
        match get("kind")? {
            "torus" => {
                let spec = read_spec(&get)?;
                let shape: Vec<usize> = parse_list(get("shape")?)?;
                let winding: Vec<i64> = parse_list(get("winding")?)?;
                let values = flatten(rows, spec.m)?;
                let map = GridMap::from_parts(spec, &shape, &winding, values)?;
                Ok(Checkpoint::Torus { map, t })
            }
            "sphere_equivariant" => {
                let spec = read_spec(&get)?;
                let boundary = BoundaryKind::parse(get("boundary_kind")?)
                    .ok_or_else(|| Error::Format("unknown boundary_kind".into()))?;
                let len: usize = parse_num(get("shape")?)?;
                let psi = flatten(rows, 1)?;
                if psi.len() != len {
                    return Err(Error::Format(format!("shape says {len} points, found {}", psi.len())));
                }
                Ok(Checkpoint::Profile(ProfileState::new(spec.n, psi, boundary, t)?))
            }
            "point_cloud" => {
                let n: usize = parse_num(get("n")?)?;
                let dim: usize = parse_num(get("ambient_dim")?)?;
                let count: usize = parse_num(get("points")?)?;
                if rows.len() != count {
                    return Err(Error::Format(format!("header says {count} points, found {}", rows.len())));
                }
                let mut points = Vec::with_capacity(count * dim);
                let mut areas = Vec::with_capacity(count);
                for (k, r) in rows.into_iter().enumerate() {
                    if r.len() != dim + 1 {
                        return Err(Error::Format(format!("record {k} has {} fields, expected {}", r.len(), dim + 1)));
                    }
                    points.extend_from_slice(&r[..dim]);
                    areas.push(r[dim]);
                }
                Ok(Checkpoint::PointCloud(PointCloud::new(n, dim, t, points, areas)?))
            }
            other => Err(Error::Format(format!("unknown checkpoint kind `{other}`"))),
        }
    }
}

fn push_spec(header: &mut impl FnMut(&str, String), spec: &ManifoldSpec) {
    header("chart", spec.chart.as_str().to_string());
    header("n", spec.n.to_string());
    header("m", spec.m.to_string());
    header("k1", spec.k1.to_string());
    header("k2", spec.k2.to_string());
}

fn read_spec<'a>(get: &impl Fn(&str) -> Result<&'a str>) -> Result<ManifoldSpec> {
    let chart = ChartKind::parse(get("chart")?).ok_or_else(|| Error::Format("unknown chart".into()))?;
    ManifoldSpec::new(parse_num(get("n")?)?, parse_num(get("m")?)?, parse_num(get("k1")?)?, parse_num(get("k2")?)?, chart)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse `{s}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace().map(parse_num).collect()
}

fn flatten(rows: Vec<Vec<f64>>, width: usize) -> Result<Vec<f64>> {
    if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Format(format!("record {k} has {} fields, expected {width}", r.len())));
    }
    Ok(rows.into_iter().flatten().collect())
}
