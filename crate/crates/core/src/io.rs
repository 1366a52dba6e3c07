//! Long-format votes CSV, run configuration, and atomic file output.
//!
//! Votes files have the header `persona_id,cluster_id,round,petal_id,value`.
//! An empty (or NaN) value marks a missing cell. Persona, cluster and petal
//! indices follow first appearance in the file. A persona's round count is
//! its largest round index plus one; cells without a record are missing.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapConfig;
use crate::error::{Error, Result};
use crate::model::{ClusterMap, VoteTensor};
use crate::variance::PoolingConfig;

pub const HEADER: [&str; 5] = ["persona_id", "cluster_id", "round", "petal_id", "value"];

/// String identifiers for the dense indices of a tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdTables {
    pub personas: Vec<String>,
    pub clusters: Vec<String>,
    pub petals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub tensor: VoteTensor,
    pub clusters: ClusterMap,
    pub ids: IdTables,
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Panel> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_reader(file)
}

pub fn ingest_reader<R: std::io::Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, found {:?}", HEADER.join(","), headers.iter().collect::<Vec<_>>()),
        });
    }

    let mut persona_idx: HashMap<String, usize> = HashMap::new();
    let mut cluster_idx: HashMap<String, usize> = HashMap::new();
    let mut petal_idx: HashMap<String, usize> = HashMap::new();
    let mut ids = IdTables {
        personas: Vec::new(),
        clusters: Vec::new(),
        petals: Vec::new(),
    };
    let mut persona_cluster: Vec<usize> = Vec::new();
    let mut records: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut seen: HashMap<(usize, usize, usize), ()> = HashMap::new();

    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, e))?;
        if rec.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", rec.len()),
            });
        }
        let (persona, cluster, round, petal, value) = (&rec[0], &rec[1], &rec[2], &rec[3], &rec[4]);
        if persona.is_empty() || cluster.is_empty() || petal.is_empty() {
            return Err(Error::Parse {
                line,
                message: "persona_id, cluster_id and petal_id must be nonempty".into(),
            });
        }
        let round: usize = round.parse().map_err(|_| Error::Parse {
            line,
            message: format!("round {round:?} is not a nonnegative integer"),
        })?;
        let value = if value.is_empty() {
            f64::NAN
        } else {
            value.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("value {value:?} is not a number"),
            })?
        };

        let c = intern(&mut cluster_idx, &mut ids.clusters, cluster);
        let p = match persona_idx.get(persona) {
            Some(&p) => {
                if persona_cluster[p] != c {
                    return Err(Error::InconsistentCluster {
                        line,
                        persona: persona.to_string(),
                        first: ids.clusters[persona_cluster[p]].clone(),
                        second: cluster.to_string(),
                    });
                }
                p
            }
            None => {
                let p = intern(&mut persona_idx, &mut ids.personas, persona);
                persona_cluster.push(c);
                p
            }
        };
        let j = intern(&mut petal_idx, &mut ids.petals, petal);
        if seen.insert((p, round, j), ()).is_some() {
            return Err(Error::DuplicateKey {
                line,
                persona: persona.to_string(),
                round,
                petal: petal.to_string(),
            });
        }
        records.push((p, round, j, value));
    }

    if records.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no records".into(),
        });
    }
    let n = ids.personas.len();
    let n_petals = ids.petals.len();
    let mut rounds = vec![0usize; n];
    for &(p, r, _, _) in &records {
        rounds[p] = rounds[p].max(r + 1);
    }
    let mut flat: Vec<Vec<f64>> = rounds.iter().map(|&k| vec![f64::NAN; k * n_petals]).collect();
    for (p, r, j, v) in records {
        flat[p][r * n_petals + j] = v;
    }
    Ok(Panel {
        tensor: VoteTensor::from_flat(flat, n_petals)?,
        clusters: ClusterMap::new(persona_cluster)?,
        ids,
    })
}

fn intern(index: &mut HashMap<String, usize>, names: &mut Vec<String>, key: &str) -> usize {
    *index.entry(key.to_string()).or_insert_with(|| {
        names.push(key.to_string());
        names.len() - 1
    })
}

fn parse_err(line: u64, e: csv::Error) -> Error {
    let line = e.position().map_or(line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes every cell (missing ones with an empty value) in persona, round,
/// petal order. Floats use the shortest representation that round-trips.
pub fn write_votes<W: Write>(out: W, tensor: &VoteTensor, clusters: &ClusterMap, ids: &IdTables) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(csv_io)?;
    for p in 0..tensor.n_personas() {
        let cluster = &ids.clusters[clusters.cluster_of(p)];
        for r in 0..tensor.n_rounds(p) {
            let round = r.to_string();
            for j in 0..tensor.n_petals() {
                let value = tensor.get(p, r, j).map(|v| v.to_string()).unwrap_or_default();
                w.write_record([ids.personas[p].as_str(), cluster, &round, &ids.petals[j], &value])
                    .map_err(csv_io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Invariant(format!("csv writer: {other:?}")),
    }
}

/// Default id tables (`p0.., c0.., j0..`) for tensors without names.
pub fn default_ids(tensor: &VoteTensor, clusters: &ClusterMap) -> IdTables {
    IdTables {
        personas: (0..tensor.n_personas()).map(|p| format!("p{p}")).collect(),
        clusters: (0..clusters.n_clusters()).map(|c| format!("c{c}")).collect(),
        petals: (0..tensor.n_petals()).map(|j| format!("j{j}")).collect(),
    }
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        f(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Invariant(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Flat key-value run configuration (TOML syntax, no tables).
///
/// Keys: `prior_strength_persona`, `prior_strength_cluster`,
/// `variance_floor`, `replicates`, `ci_level`, `seed`, `validate_min_data`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub pooling: PoolingConfig,
    pub bootstrap: BootstrapConfig,
    pub validate_min_data: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pooling: PoolingConfig::default(),
            bootstrap: BootstrapConfig::default(),
            validate_min_data: true,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatConfig {
    prior_strength_persona: Option<f64>,
    prior_strength_cluster: Option<f64>,
    variance_floor: Option<f64>,
    replicates: Option<usize>,
    ci_level: Option<f64>,
    seed: Option<u64>,
    validate_min_data: Option<bool>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let flat: FlatConfig = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut cfg = Self::default();
        if let Some(v) = flat.prior_strength_persona {
            cfg.pooling.prior_strength_persona = v;
        }
        if let Some(v) = flat.prior_strength_cluster {
            cfg.pooling.prior_strength_cluster = v;
        }
        if let Some(v) = flat.variance_floor {
            cfg.pooling.variance_floor = v;
        }
        if let Some(v) = flat.replicates {
            cfg.bootstrap.replicates = v;
        }
        if let Some(v) = flat.ci_level {
            cfg.bootstrap.ci_level = v;
        }
        if let Some(v) = flat.seed {
            cfg.bootstrap.seed = v;
        }
        if let Some(v) = flat.validate_min_data {
            cfg.validate_min_data = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.pooling.validate()?;
        self.bootstrap.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ingest_str(s: &str) -> Result<Panel> {
        ingest_reader(s.as_bytes())
    }

    #[test]
    fn small_full_panel() {
        let panel = ingest_str(
            "persona_id,cluster_id,round,petal_id,value\n\
             a,x,0,q1,1.5\na,x,0,q2,2\nb,y,0,q1,3\nb,y,0,q2,-4e-1\n",
        )
        .unwrap();
        assert_eq!(panel.tensor.n_personas(), 2);
        assert_eq!(panel.tensor.n_petals(), 2);
        assert!(panel.tensor.is_complete());
        assert_eq!(panel.tensor.get(1, 0, 1), Some(-0.4));
        assert_eq!(panel.ids.petals, vec!["q1", "q2"]);
        assert_eq!(panel.clusters.assignment(), &[0, 1]);
    }

    #[test]
    fn empty_value_and_absent_records_are_missing() {
        let panel = ingest_str(
            "persona_id,cluster_id,round,petal_id,value\n\
             a,x,0,q1,\na,x,2,q1,1\nb,x,0,q2,NaN\nb,x,0,q1,5\n",
        )
        .unwrap();
        let t = &panel.tensor;
        assert_eq!(t.rounds_per_persona(), vec![3, 1]);
        assert!(!t.is_observed(0, 0, 0));
        assert!(!t.is_observed(0, 1, 0));
        assert_eq!(t.get(0, 2, 0), Some(1.0));
        assert!(!t.is_observed(1, 0, 1));
    }

    #[test]
    fn inconsistent_cluster() {
        let err = ingest_str(
            "persona_id,cluster_id,round,petal_id,value\na,x,0,q1,1\na,y,1,q1,1\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::InconsistentCluster { line: 3, .. }));
    }

    #[test]
    fn duplicate_key() {
        let err = ingest_str(
            "persona_id,cluster_id,round,petal_id,value\na,x,0,q1,1\na,x,0,q1,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { line: 3, .. }));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ingest_str("persona_id,cluster_id,round,petal_id,value\na,x,0,q1,1\na,x,-1,q1,2\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = ingest_str("persona_id,cluster_id,round,petal_id,value\na,x,0,q1,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = ingest_str("persona,cluster,round,petal,value\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn run_config_overrides() {
        let cfg = RunConfig::from_toml_str("prior_strength_persona = 2.0\nreplicates = 10\nseed = 3\n").unwrap();
        assert_eq!(cfg.pooling.prior_strength_persona, 2.0);
        assert_eq!(cfg.pooling.prior_strength_cluster, 5.0);
        assert_eq!(cfg.bootstrap.replicates, 10);
        assert!(cfg.validate_min_data);
        assert!(RunConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml_str("ci_level = 1.5\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_json_atomic(&path, &vec![1.0, 2.5]).unwrap();
        write_json_atomic(&path, &vec![3.0]).unwrap();
        let back: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, vec![3.0]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    fn tensor_strategy() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
        (1usize..4).prop_flat_map(|n_petals| {
            prop::collection::vec(
                prop::collection::vec(
                    prop::collection::vec(
                        prop_oneof![3 => any::<f64>().prop_filter("finite", |v| v.is_finite()), 1 => Just(f64::NAN)],
                        n_petals,
                    ),
                    1..4,
                ),
                1..5,
            )
        })
    }

    proptest! {
        #[test]
        fn write_then_ingest_round_trips(rows in tensor_strategy(), n_clusters in 1usize..3) {
            let tensor = VoteTensor::from_rows(rows).unwrap();
            let n = tensor.n_personas();
            let clusters = ClusterMap::round_robin(n, n_clusters.min(n)).unwrap();
            let ids = default_ids(&tensor, &clusters);
            let mut buf = Vec::new();
            write_votes(&mut buf, &tensor, &clusters, &ids).unwrap();
            let back = ingest_reader(buf.as_slice()).unwrap();
            prop_assert_eq!(back.tensor.rounds_per_persona(), tensor.rounds_per_persona());
            for p in 0..n {
                prop_assert_eq!(back.tensor.persona_mask(p), tensor.persona_mask(p));
                for (a, b) in back.tensor.persona_values(p).iter().zip(tensor.persona_values(p)) {
                    prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
                }
            }
            prop_assert_eq!(back.clusters, clusters);
            prop_assert_eq!(back.ids, ids);
        }
    }
}
